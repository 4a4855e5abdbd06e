"""Finite-difference two-group diffusion reference solver.

Vertex-centred box integration on a uniform lattice: second-order central
differences, harmonic-mean face diffusion coefficients between nodes of
different materials, Robin/Neumann faces handled through the flux balance
of each node's control volume, Dirichlet rows pinned to zero.  The outer
eigenvalue loop is plain source (power) iteration with an optional shift.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Domain, GeometryError

_DIRECT_LIMIT = 60_000


class SolverError(RuntimeError):
    pass


class Grid:
    """Lattice bookkeeping for one discretized domain."""

    def __init__(self, domain: Domain, spacing):
        self.domain = domain
        self.axes = domain.axis_nodes(spacing)
        self.spacing = np.array([ax[1] - ax[0] for ax in self.axes])
        self.node_shape = tuple(len(ax) for ax in self.axes)
        d = domain.dimension

        self.cell_region = domain.cell_region_grid(spacing)
        inside_cells = self.cell_region >= 0

        # node is part of the mesh iff some incident cell is inside
        pad = np.zeros([s + 2 for s in inside_cells.shape], dtype=bool)
        pad[tuple(slice(1, 1 + s) for s in inside_cells.shape)] = inside_cells
        mask = np.zeros(self.node_shape, dtype=bool)
        for off in np.ndindex(*(2,) * d):
            sl = tuple(slice(off[a], off[a] + self.node_shape[a])
                       for a in range(d))
            mask |= pad[sl]
        self.node_mask = mask
        self.n_nodes = int(mask.sum())
        self.node_id = np.full(self.node_shape, -1, dtype=np.int64)
        self.node_id[mask] = np.arange(self.n_nodes)

        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.stack([m[mask] for m in mesh], axis=1)
        self.node_region = domain.region_id_at(self.points)

        # control volume: sum of incident inside-cell quadrants
        cellvol = float(np.prod(self.spacing))
        quad = np.zeros(self.node_shape)
        padv = np.zeros([s + 2 for s in inside_cells.shape])
        padv[tuple(slice(1, 1 + s) for s in inside_cells.shape)] = \
            inside_cells * cellvol
        for off in np.ndindex(*(2,) * d):
            sl = tuple(slice(off[a], off[a] + self.node_shape[a])
                       for a in range(d))
            quad += padv[sl]
        self.node_volume = quad[mask] / (2 ** d)

    def node_coeffs(self) -> dict:
        return self.domain.coeff_arrays(self.node_region)


class BlockOperator:
    """Per-group sparse blocks of the discretized system.

    m1/m2 hold streaming + removal (volume integrated, symmetric);
    f1/f2/s12 are diagonal fission and downscatter weights; chi1/chi2 are
    nodal spectrum fractions; dirichlet flags pinned nodes.
    """

    def __init__(self, grid, m1, m2, f1, f2, s12, chi1, chi2, dirichlet):
        self.grid = grid
        self.m1, self.m2 = m1, m2
        self.f1, self.f2, self.s12 = f1, f2, s12
        self.chi1, self.chi2 = chi1, chi2
        self.dirichlet = dirichlet


def _cell_coeff_grids(domain: Domain, grid: Grid) -> dict:
    """Coefficient value per lattice cell (0 outside the domain)."""
    mats = [domain.material_of_region(r) for r in range(domain.n_regions)]
    fields = ("sigma_a1", "sigma_a2", "sigma_12", "nu_sigma_f1",
              "nu_sigma_f2")
    out = {}
    rid = grid.cell_region
    for f in fields:
        table = np.array([0.0] + [getattr(m, f) for m in mats])
        out[f] = table[rid + 1]
    return out


def _segment_for_faces(domain, centers, axis, sign):
    """Boundary segment index for each face centre; -1 when uncovered."""
    out = np.full(centers.shape[0], -1, dtype=np.int64)
    for si, seg in enumerate(domain.boundaries):
        n_axis = int(np.nonzero(seg.normal)[0][0])
        n_sign = float(np.sign(seg.normal[n_axis]))
        if n_axis != axis or n_sign != sign:
            continue
        hit = seg.box.contains(centers)
        fresh = hit & (out < 0)
        out[fresh] = si
    return out


def discretize(domain: Domain, spacing) -> tuple:
    """Assemble (Grid, BlockOperator) for a uniform lattice."""
    grid = Grid(domain, spacing)
    d = domain.dimension
    h = grid.spacing
    cellvol = float(np.prod(h))
    inside_cells = grid.cell_region >= 0
    cshape = inside_cells.shape
    nshape = grid.node_shape
    coeffs = grid.node_coeffs()

    rows, cols, vals1, vals2 = [], [], [], []

    def add(i, j, a1, a2):
        rows.append(i)
        cols.append(j)
        vals1.append(a1)
        vals2.append(a2)

    # diffusion couplings, axis by axis
    padc = np.zeros([s + 2 for s in cshape])
    padc[tuple(slice(1, 1 + s) for s in cshape)] = inside_cells * cellvol
    d1_n = np.zeros(nshape)
    d2_n = np.zeros(nshape)
    d1_n[grid.node_mask] = coeffs["d1"]
    d2_n[grid.node_mask] = coeffs["d2"]
    for axis in range(d):
        lo_sl = [slice(0, nshape[a] - (1 if a == axis else 0))
                 for a in range(d)]
        hi_sl = list(lo_sl)
        hi_sl[axis] = slice(1, nshape[axis])
        lo_sl, hi_sl = tuple(lo_sl), tuple(hi_sl)

        # transverse sum of flanking inside-cell volumes for each edge
        geom = np.zeros([nshape[a] - (1 if a == axis else 0)
                         for a in range(d)])
        for off in np.ndindex(*(2,) * (d - 1)):
            sl = []
            ti = 0
            for a in range(d):
                if a == axis:
                    sl.append(slice(1, 1 + cshape[a]))
                else:
                    sl.append(slice(off[ti], off[ti] + nshape[a]))
                    ti += 1
            geom += padc[tuple(sl)]
        geom /= (2 ** (d - 1)) * h[axis] ** 2

        ia = grid.node_id[lo_sl]
        ib = grid.node_id[hi_sl]
        active = (ia >= 0) & (ib >= 0) & (geom > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            da, db = d1_n[lo_sl], d1_n[hi_sl]
            face1 = 2.0 * da * db / (da + db)
            da, db = d2_n[lo_sl], d2_n[hi_sl]
            face2 = 2.0 * da * db / (da + db)
        c1 = (face1 * geom)[active]
        c2 = (face2 * geom)[active]
        i, j = ia[active], ib[active]
        add(i, j, -c1, -c2)
        add(j, i, -c1, -c2)
        add(i, i, c1, c2)
        add(j, j, c1, c2)

    # reaction terms integrate cell materials over each node's control
    # volume (quadrant weighting): exact for cells aligned with region faces
    cell_mats = _cell_coeff_grids(domain, grid)

    def node_integral(cgrid):
        padq = np.zeros([s + 2 for s in cshape])
        padq[tuple(slice(1, 1 + s) for s in cshape)] = \
            np.where(inside_cells, cgrid, 0.0) * cellvol
        acc = np.zeros(nshape)
        for off in np.ndindex(*(2,) * d):
            sl = tuple(slice(off[a], off[a] + nshape[a]) for a in range(d))
            acc += padq[sl]
        return acc[grid.node_mask] / (2 ** d)

    idx = np.arange(grid.n_nodes)
    rem1 = node_integral(cell_mats["sigma_a1"] + cell_mats["sigma_12"])
    rem2 = node_integral(cell_mats["sigma_a2"])
    add(idx, idx, rem1, rem2)

    # boundary faces: Robin adds leakage, Dirichlet pins nodes, Neumann is
    # natural; every external face must be covered by exactly one segment
    dirichlet = np.zeros(grid.n_nodes, dtype=bool)
    robin1 = np.zeros(grid.n_nodes)
    face_area = {a: cellvol / h[a] for a in range(d)}
    centers_1d = [0.5 * (ax[1:] + ax[:-1]) for ax in grid.axes]
    for axis in range(d):
        for sign in (-1.0, 1.0):
            shift = 1 if sign > 0 else 0
            pad_sl = []
            for a in range(d):
                if a == axis:
                    pad_sl.append(slice(2, 2 + cshape[a]) if sign > 0
                                  else slice(0, cshape[a]))
                else:
                    pad_sl.append(slice(1, 1 + cshape[a]))
            nbr_inside = padc[tuple(pad_sl)] > 0
            bface = inside_cells & ~nbr_inside
            if not bface.any():
                continue
            cidx = np.nonzero(bface)
            centers = np.zeros((cidx[0].size, d))
            for a in range(d):
                if a == axis:
                    centers[:, a] = grid.axes[a][cidx[a] + shift]
                else:
                    centers[:, a] = centers_1d[a][cidx[a]]
            seg_idx = _segment_for_faces(domain, centers, axis, sign)
            if np.any(seg_idx < 0):
                bad = centers[seg_idx < 0][0]
                raise GeometryError(f"external facet at {bad} is not covered "
                                    "by any boundary segment")
            # corner nodes of each boundary face
            corner_share = face_area[axis] / (2 ** (d - 1))
            for off in np.ndindex(*(2,) * (d - 1)):
                nindex = []
                ti = 0
                for a in range(d):
                    if a == axis:
                        nindex.append(cidx[a] + shift)
                    else:
                        nindex.append(cidx[a] + off[ti])
                        ti += 1
                nids = grid.node_id[tuple(nindex)]
                for si, seg in enumerate(domain.boundaries):
                    rowsel = seg_idx == si
                    if not rowsel.any():
                        continue
                    sel = nids[rowsel]
                    if seg.kind == "dirichlet":
                        dirichlet[sel] = True
                    elif seg.kind == "robin":
                        np.add.at(robin1, sel, seg.c_bou * corner_share)
    if robin1.any():
        add(idx, idx, robin1, robin1.copy())

    n = grid.n_nodes
    rows = np.concatenate([np.atleast_1d(r) for r in rows])
    cols = np.concatenate([np.atleast_1d(c) for c in cols])
    vals1 = np.concatenate([np.atleast_1d(v) for v in vals1])
    vals2 = np.concatenate([np.atleast_1d(v) for v in vals2])
    m1 = sp.coo_matrix((vals1, (rows, cols)), shape=(n, n)).tocsr()
    m2 = sp.coo_matrix((vals2, (rows, cols)), shape=(n, n)).tocsr()

    f1 = node_integral(cell_mats["nu_sigma_f1"])
    f2 = node_integral(cell_mats["nu_sigma_f2"])
    s12 = node_integral(cell_mats["sigma_12"])
    chi1 = coeffs["chi1"].copy()
    chi2 = coeffs["chi2"].copy()

    if dirichlet.any():
        keep_d = sp.diags((~dirichlet).astype(float))
        pin_d = sp.diags(dirichlet.astype(float))
        m1 = (keep_d @ m1 @ keep_d + pin_d).tocsr()
        m2 = (keep_d @ m2 @ keep_d + pin_d).tocsr()
        f1[dirichlet] = 0.0
        f2[dirichlet] = 0.0
        s12[dirichlet] = 0.0

    op = BlockOperator(grid, m1, m2, f1, f2, s12, chi1, chi2, dirichlet)
    return grid, op


def inner_solve(matrix, rhs, tol: float = 1e-10) -> np.ndarray:
    """Solve one group block to a relative residual <= tol."""
    return _InnerSolver(matrix, tol=tol).solve(rhs)


class _InnerSolver:
    """Direct factorization for small systems, AMG-preconditioned CG above."""

    def __init__(self, matrix, tol=1e-10):
        self.a = matrix.tocsr()
        self.tol = tol
        self.n = self.a.shape[0]
        if self.n <= _DIRECT_LIMIT:
            self._lu = spla.splu(self.a.tocsc())
            self._ml = None
        else:
            import pyamg
            self._lu = None
            self._ml = pyamg.smoothed_aggregation_solver(self.a)

    def solve(self, rhs):
        if self._lu is not None:
            x = self._lu.solve(rhs)
        else:
            x = self._ml.solve(rhs, tol=self.tol * 1e-2, accel="cg",
                               maxiter=400)
        rnorm = np.linalg.norm(self.a @ x - rhs)
        bnorm = np.linalg.norm(rhs)
        if bnorm > 0 and rnorm > self.tol * bnorm:
            if self._ml is not None:
                x = self._ml.solve(rhs, x0=x, tol=self.tol * 1e-4,
                                   accel="cg", maxiter=2000)
                rnorm = np.linalg.norm(self.a @ x - rhs)
            if bnorm > 0 and rnorm > self.tol * bnorm:
                raise SolverError(f"inner solve stalled: relative residual "
                                  f"{rnorm / bnorm:.2e}")
        return x


class EigenSolution:
    """Converged two-group eigenpair on its grid."""

    def __init__(self, grid: Grid, k_eff: float, phi1, phi2, meta=None):
        self.grid = grid
        self.k_eff = float(k_eff)
        self.phi1 = np.asarray(phi1)
        self.phi2 = np.asarray(phi2)
        self.meta = dict(meta or {})

    @property
    def points(self):
        return self.grid.points

    def fields_on_grid(self):
        """phi arrays shaped like the node lattice, NaN outside the domain."""
        full1 = np.full(self.grid.node_shape, np.nan)
        full2 = np.full(self.grid.node_shape, np.nan)
        full1[self.grid.node_mask] = self.phi1
        full2[self.grid.node_mask] = self.phi2
        return full1, full2

    def evaluate_at(self, x):
        return evaluate_at(self, x)


def source_iteration(op: BlockOperator, sigma: float = 0.0,
                     tol_k: float = 1e-8, tol_flux: float = 1e-6,
                     max_iter: int = 10_000, k0: float = 1.0):
    """Shifted two-group source iteration; returns an EigenSolution."""
    grid = op.grid
    if op.f1.max() == 0.0 and op.f2.max() == 0.0:
        raise SolverError("no fissile material in the domain")
    n = grid.n_nodes
    free = ~op.dirichlet

    a1 = (op.m1 + sp.diags(sigma * op.chi1 * op.f1)).tocsr()
    a2 = (op.m2 + sp.diags(sigma * op.chi2 * op.f2)).tocsr()
    solver1 = _InnerSolver(a1)
    solver2 = _InnerSolver(a2)

    phi1 = np.where(free, 1.0, 0.0)
    phi2 = np.where(free, 1.0, 0.0)
    k = float(k0)
    fiss = op.f1 * phi1 + op.f2 * phi2
    its = 0
    for its in range(1, max_iter + 1):
        src = fiss.sum()
        rhs1 = op.chi1 * (fiss / k + sigma * op.f1 * phi1)
        new1 = solver1.solve(rhs1)
        rhs2 = op.chi2 * (fiss / k + sigma * op.f2 * phi2) + op.s12 * new1
        new2 = solver2.solve(rhs2)
        new_fiss = op.f1 * new1 + op.f2 * new2
        k_new = k * new_fiss.sum() / src
        dk = abs(k_new - k) / abs(k_new)
        ref = np.max(np.abs(new1)) + np.max(np.abs(new2))
        dflux = max(np.max(np.abs(new1 - phi1)), np.max(np.abs(new2 - phi2)))
        phi1, phi2, k, fiss = new1, new2, k_new, new_fiss
        if dk < tol_k and dflux < tol_flux * ref:
            break
    else:
        raise SolverError(f"source iteration did not converge in "
                          f"{max_iter} iterations")

    power = fiss.sum()
    phi1 = phi1 / power
    phi2 = phi2 / power
    phi1[np.abs(phi1) < 1e-300] = 0.0
    phi2[np.abs(phi2) < 1e-300] = 0.0
    if phi1.min() < -1e-10 or phi2.min() < -1e-10:
        raise SolverError("converged flux has negative entries")
    meta = {"iterations": its, "sigma": sigma, "tol_k": tol_k,
            "tol_flux": tol_flux,
            "spacing": grid.spacing.tolist()}
    return EigenSolution(grid, k, np.maximum(phi1, 0.0),
                         np.maximum(phi2, 0.0), meta)


def solve_benchmark(domain: Domain, spacing, sigma: float = 0.0,
                    **kw) -> EigenSolution:
    _, op = discretize(domain, spacing)
    return source_iteration(op, sigma=sigma, **kw)


def evaluate_at(solution: EigenSolution, x) -> tuple:
    """Multilinear interpolation of both groups at one or more points."""
    grid = solution.grid
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    d = grid.domain.dimension
    if pts.shape[1] != d:
        raise ValueError("query dimension mismatch")
    if not np.all(grid.domain.contains(pts)):
        raise ValueError("query point outside the domain")
    full1, full2 = solution.fields_on_grid()
    idx = []
    frac = []
    for a in range(d):
        ax = grid.axes[a]
        i = np.clip(np.searchsorted(ax, pts[:, a], side="right") - 1,
                    0, len(ax) - 2)
        idx.append(i)
        frac.append((pts[:, a] - ax[i]) / (ax[i + 1] - ax[i]))
    out1 = np.zeros(pts.shape[0])
    out2 = np.zeros(pts.shape[0])
    for off in np.ndindex(*(2,) * d):
        w = np.ones(pts.shape[0])
        corner = []
        for a in range(d):
            w = w * (frac[a] if off[a] else (1.0 - frac[a]))
            corner.append(idx[a] + off[a])
        v1 = full1[tuple(corner)]
        v2 = full2[tuple(corner)]
        # corners with zero weight may fall outside the staircase
        v1 = np.where(w > 0, v1, 0.0)
        v2 = np.where(w > 0, v2, 0.0)
        out1 += w * v1
        out2 += w * v2
    if np.any(np.isnan(out1)) or np.any(np.isnan(out2)):
        raise ValueError("interpolation touched nodes outside the domain")
    return (out1[0], out2[0]) if np.asarray(x).ndim == 1 else (out1, out2)
