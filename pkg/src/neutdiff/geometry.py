"""Domains, materials, boundary/interface topology and training point sets.

A domain is a union of axis-aligned boxes grouped into regions (one region
per material zone; a region may be disconnected).  All shipped benchmark
layouts have their region faces on integer-centimetre planes, so a lattice
whose spacing divides every box edge classifies each node exactly.

Classification rule for a lattice node (deterministic):
  * interface  -- the node lies on a facet shared by two cells that belong
                  to different regions.  Interface wins over everything,
                  including nodes that also sit on the outer boundary.
  * residual   -- every other node of the lattice, outer-boundary nodes
                  included.  Boundary point sets are built separately, one
                  per boundary segment, and may therefore repeat residual
                  coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SCHEMA = "neutdiff-domain/1"

_GEOM_ATOL = 1e-9


class GeometryError(ValueError):
    """Raised for malformed domain descriptions."""


@dataclass(frozen=True)
class MaterialCoefficients:
    """Two-group constants of one material (cm / cm^-1 units)."""

    d1: float
    d2: float
    sigma_a1: float
    sigma_a2: float
    sigma_12: float
    nu_sigma_f1: float
    nu_sigma_f2: float
    chi1: float = 1.0
    chi2: float = 0.0

    def __post_init__(self):
        if self.d1 <= 0 or self.d2 <= 0:
            raise GeometryError("diffusion coefficients must be positive")
        if self.sigma_12 < 0 or self.nu_sigma_f1 < 0 or self.nu_sigma_f2 < 0:
            raise GeometryError("scattering/fission cross sections must be >= 0")
        # sigma_a1 may legitimately be negative (net upscatter-corrected data).
        if abs(self.chi1 + self.chi2 - 1.0) > 1e-12:
            raise GeometryError("chi1 + chi2 must equal 1")

    @property
    def removal1(self) -> float:
        return self.sigma_a1 + self.sigma_12

    @property
    def fissile(self) -> bool:
        return self.nu_sigma_f1 > 0.0 or self.nu_sigma_f2 > 0.0

    def as_dict(self) -> dict:
        return {
            "d1": self.d1, "d2": self.d2,
            "sigma_a1": self.sigma_a1, "sigma_a2": self.sigma_a2,
            "sigma_12": self.sigma_12,
            "nu_sigma_f1": self.nu_sigma_f1, "nu_sigma_f2": self.nu_sigma_f2,
            "chi1": self.chi1, "chi2": self.chi2,
        }


class Box:
    """Closed axis-aligned box; degenerate axes are allowed for facets."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise GeometryError("box corners must be equal-length vectors")
        if np.any(self.hi < self.lo - _GEOM_ATOL):
            raise GeometryError(f"box has hi < lo: {self.lo} .. {self.hi}")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, pts: np.ndarray, atol: float = _GEOM_ATOL) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo - atol) & (pts <= self.hi + atol), axis=1)

    def overlaps_open(self, other: "Box") -> bool:
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        return bool(np.all(hi - lo > _GEOM_ATOL))

    def as_list(self):
        return [self.lo.tolist(), self.hi.tolist()]


@dataclass(frozen=True)
class Region:
    name: str
    material: str
    boxes: tuple

    @property
    def volume(self) -> float:
        return sum(b.volume for b in self.boxes)


KINDS = ("dirichlet", "neumann", "robin")


@dataclass(frozen=True)
class BoundarySegment:
    kind: str
    box: Box                      # degenerate along exactly one axis
    normal: np.ndarray            # outward unit normal
    value: float = 0.0            # Dirichlet value f
    c_bou: float | None = None    # Robin constant

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GeometryError(f"unknown boundary kind {self.kind!r}")
        flat = np.isclose(self.box.hi - self.box.lo, 0.0, atol=_GEOM_ATOL)
        if flat.sum() != 1:
            raise GeometryError("boundary segment must be flat along one axis")
        n = np.asarray(self.normal, dtype=float)
        if not np.isclose(np.abs(n).sum(), 1.0) or np.count_nonzero(n) != 1:
            raise GeometryError("normal must be a signed unit axis vector")
        if int(np.nonzero(n)[0][0]) != int(np.nonzero(flat)[0][0]):
            raise GeometryError("normal must be perpendicular to the segment")
        if self.kind == "robin" and (self.c_bou is None or self.c_bou <= 0):
            raise GeometryError("robin segment needs c_bou > 0")


class Domain:
    """Validated multi-region computational domain."""

    def __init__(self, dimension, bbox_lo, bbox_hi, materials, regions,
                 boundaries, name="domain", strict_partition=True,
                 default_resolution=1.0):
        self.dimension = int(dimension)
        self.bbox_lo = np.asarray(bbox_lo, dtype=float)
        self.bbox_hi = np.asarray(bbox_hi, dtype=float)
        self.materials = dict(materials)
        self.regions = list(regions)
        self.boundaries = list(boundaries)
        self.name = name
        self.strict_partition = bool(strict_partition)
        self.default_resolution = float(default_resolution)
        self._validate()

    # -- construction checks -------------------------------------------------

    def _validate(self):
        d = self.dimension
        if d not in (1, 2, 3):
            raise GeometryError("dimension must be 1, 2 or 3")
        if self.bbox_lo.size != d or np.any(self.bbox_hi <= self.bbox_lo):
            raise GeometryError("bad bounding box")
        if not self.regions:
            raise GeometryError("need at least one region")
        for r in self.regions:
            if r.material not in self.materials:
                raise GeometryError(f"region {r.name!r} uses unknown material "
                                    f"{r.material!r}")
            for b in r.boxes:
                if b.dim != d:
                    raise GeometryError("region box dimension mismatch")
                if np.any(b.lo < self.bbox_lo - _GEOM_ATOL) or \
                        np.any(b.hi > self.bbox_hi + _GEOM_ATOL):
                    raise GeometryError(f"region {r.name!r} leaves the "
                                        "bounding box")
        boxes = [(i, b) for i, r in enumerate(self.regions) for b in r.boxes]
        for a in range(len(boxes)):
            for b in range(a + 1, len(boxes)):
                if boxes[a][1].overlaps_open(boxes[b][1]):
                    raise GeometryError(
                        f"regions {self.regions[boxes[a][0]].name!r} and "
                        f"{self.regions[boxes[b][0]].name!r} overlap")
        if self.strict_partition:
            bbox_vol = float(np.prod(self.bbox_hi - self.bbox_lo))
            if abs(self.volume - bbox_vol) > 1e-6 * bbox_vol:
                raise GeometryError("gap detected: regions do not fill the "
                                    "bounding box")
        for seg in self.boundaries:
            if seg.box.dim != d:
                raise GeometryError("boundary segment dimension mismatch")

    # -- basic queries --------------------------------------------------------

    @property
    def volume(self) -> float:
        return sum(r.volume for r in self.regions)

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    def material_of_region(self, rid: int) -> MaterialCoefficients:
        return self.materials[self.regions[rid].material]

    def region_id_at(self, pts: np.ndarray) -> np.ndarray:
        """Lowest region id whose closure contains each point, -1 outside."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.full(pts.shape[0], -1, dtype=np.int32)
        for rid, reg in enumerate(self.regions):
            todo = out < 0
            if not todo.any():
                break
            hit = np.zeros(pts.shape[0], dtype=bool)
            for b in reg.boxes:
                hit[todo] |= b.contains(pts[todo])
            out[todo & hit] = rid
        return out

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return self.region_id_at(pts) >= 0

    def coeff_arrays(self, region_ids: np.ndarray) -> dict:
        """Per-point coefficient arrays for a vector of region ids."""
        mats = [self.material_of_region(r) for r in range(self.n_regions)]
        fields = ("d1", "d2", "sigma_a1", "sigma_a2", "sigma_12",
                  "nu_sigma_f1", "nu_sigma_f2", "chi1", "chi2")
        table = {f: np.array([getattr(m, f) for m in mats]) for f in fields}
        return {f: table[f][region_ids] for f in fields}

    # -- lattice machinery ----------------------------------------------------

    def axis_nodes(self, resolution) -> list:
        res = np.broadcast_to(np.asarray(resolution, dtype=float),
                              (self.dimension,))
        if np.any(res <= 0):
            raise GeometryError("resolution must be positive")
        ext = self.bbox_hi - self.bbox_lo
        if np.any(res > ext + _GEOM_ATOL):
            raise GeometryError("resolution larger than domain extent")
        axes = []
        for a in range(self.dimension):
            n = ext[a] / res[a]
            if abs(n - round(n)) > 1e-6:
                raise GeometryError(f"spacing {res[a]} does not divide extent "
                                    f"{ext[a]} on axis {a}")
            axes.append(self.bbox_lo[a] + res[a] * np.arange(round(n) + 1))
        return axes

    def cell_region_grid(self, resolution) -> np.ndarray:
        """Region id of every lattice cell (cell centre lookup; -1 outside)."""
        axes = self.axis_nodes(resolution)
        centers_1d = [0.5 * (ax[1:] + ax[:-1]) for ax in axes]
        grid = np.full([c.size for c in centers_1d], -1, dtype=np.int32)
        # boxes are axis-aligned, so each is an index-range slice; regions are
        # walked in reverse so the lowest id wins at (measure-zero) ties
        for rid in range(len(self.regions) - 1, -1, -1):
            for b in self.regions[rid].boxes:
                sl = []
                for a, c in enumerate(centers_1d):
                    i0 = int(np.searchsorted(c, b.lo[a] - _GEOM_ATOL))
                    i1 = int(np.searchsorted(c, b.hi[a] + _GEOM_ATOL))
                    sl.append(slice(i0, i1))
                grid[tuple(sl)] = rid
        return grid

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "name": self.name,
            "dimension": self.dimension,
            "bbox": [self.bbox_lo.tolist(), self.bbox_hi.tolist()],
            "strict_partition": self.strict_partition,
            "default_resolution": self.default_resolution,
            "materials": {k: m.as_dict() for k, m in self.materials.items()},
            "regions": [
                {"name": r.name, "material": r.material,
                 "boxes": [b.as_list() for b in r.boxes]}
                for r in self.regions
            ],
            "boundaries": [
                {"kind": s.kind, "box": s.box.as_list(),
                 "normal": s.normal.tolist(), "value": s.value,
                 "c_bou": s.c_bou}
                for s in self.boundaries
            ],
        }


def load_domain(source) -> Domain:
    """Parse a domain description (path, JSON text, or dict)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = source
        if hasattr(source, "read"):
            text = source.read()
        elif isinstance(source, str) and not source.lstrip().startswith("{"):
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise GeometryError(f"domain document does not parse: {e}") from e
    if doc.get("schema") != SCHEMA:
        raise GeometryError(f"unsupported schema {doc.get('schema')!r}")
    try:
        materials = {k: MaterialCoefficients(**v)
                     for k, v in doc["materials"].items()}
        regions = [
            Region(r["name"], r["material"],
                   tuple(Box(lo, hi) for lo, hi in r["boxes"]))
            for r in doc["regions"]
        ]
        boundaries = [
            BoundarySegment(kind=s["kind"], box=Box(*s["box"]),
                            normal=np.asarray(s["normal"], dtype=float),
                            value=s.get("value", 0.0),
                            c_bou=s.get("c_bou"))
            for s in doc["boundaries"]
        ]
        return Domain(dimension=doc["dimension"], bbox_lo=doc["bbox"][0],
                      bbox_hi=doc["bbox"][1], materials=materials,
                      regions=regions, boundaries=boundaries,
                      name=doc.get("name", "domain"),
                      strict_partition=doc.get("strict_partition", True),
                      default_resolution=doc.get("default_resolution", 1.0))
    except KeyError as e:
        raise GeometryError(f"domain document missing field {e}") from e


# ---------------------------------------------------------------------------
# Lattice classification
# ---------------------------------------------------------------------------

def _interface_masks(domain: Domain, resolution):
    """Facet detections on the node lattice.

    Returns (axes, detections) where detections is a list of tuples
    (axis, node_mask, rid_neg, rid_pos): node_mask flags lattice nodes lying
    on a facet perpendicular to `axis` whose negative/positive side regions
    are rid_neg/rid_pos (arrays aligned with node_mask's True entries).
    """
    axes = domain.axis_nodes(resolution)
    cells = domain.cell_region_grid(resolution)
    d = domain.dimension
    cshape = cells.shape
    padded = np.full([s + 2 for s in cshape], -1, dtype=np.int32)
    padded[tuple(slice(1, 1 + s) for s in cshape)] = cells

    node_shape = tuple(len(ax) for ax in axes)
    detections = []
    for axis in range(d):
        # cells on either side of the facet plane through each node
        for t_off in np.ndindex(*(2,) * (d - 1)):
            idx_neg, idx_pos = [], []
            ti = 0
            for a in range(d):
                if a == axis:
                    idx_neg.append(slice(0, node_shape[a]))
                    idx_pos.append(slice(1, node_shape[a] + 1))
                else:
                    off = t_off[ti]
                    ti += 1
                    idx_neg.append(slice(off, off + node_shape[a]))
                    idx_pos.append(idx_neg[-1])
            a_side = padded[tuple(idx_neg)]
            b_side = padded[tuple(idx_pos)]
            mask = (a_side >= 0) & (b_side >= 0) & (a_side != b_side)
            if mask.any():
                detections.append((axis, mask, a_side, b_side))
    return axes, node_shape, detections


def count_lattice_points(domain: Domain, resolution) -> tuple:
    """(n_residual, n_interface) without materializing coordinates."""
    axes, node_shape, detections = _interface_masks(domain, resolution)
    interface = np.zeros(node_shape, dtype=bool)
    for _, mask, _, _ in detections:
        interface |= mask
    inside = _nodes_inside(domain, resolution)
    n_interface = int(np.count_nonzero(interface & inside))
    n_residual = int(np.count_nonzero(inside)) - n_interface
    return n_residual, n_interface


def _nodes_inside(domain: Domain, resolution) -> np.ndarray:
    """Mask of lattice nodes belonging to the closed domain."""
    axes = domain.axis_nodes(resolution)
    cells = domain.cell_region_grid(resolution)
    cshape = cells.shape
    padded = np.zeros([s + 2 for s in cshape], dtype=bool)
    padded[tuple(slice(1, 1 + s) for s in cshape)] = cells >= 0
    node_shape = tuple(len(ax) for ax in axes)
    inside = np.zeros(node_shape, dtype=bool)
    # a node is inside iff one of its up-to-2^d incident cells is inside
    for off in np.ndindex(*(2,) * domain.dimension):
        sl = tuple(slice(off[a], off[a] + node_shape[a])
                   for a in range(domain.dimension))
        inside |= padded[sl]
    return inside


@dataclass
class PointSets:
    """Training point sets sampled from one domain."""

    domain: Domain
    resolution: np.ndarray
    rng_seed: int
    residual: np.ndarray          # (N, d)
    residual_region: np.ndarray   # (N,)
    boundary: dict                # kind -> dict(points, normals, regions, c_bou, value)
    interface: np.ndarray         # (M, d)
    interface_normal: np.ndarray  # (M, d)
    interface_pair: np.ndarray    # (M, 2) region ids, low first
    sample_rate: float = 1.0

    @property
    def quadrature_weight(self) -> float:
        return self.domain.volume / self.residual.shape[0]

    @property
    def n_boundary(self) -> int:
        return sum(v["points"].shape[0] for v in self.boundary.values())


def _boundary_lattice(seg: BoundarySegment, axes) -> np.ndarray:
    """Lattice nodes on one boundary facet."""
    coords = []
    for a, ax in enumerate(axes):
        lo, hi = seg.box.lo[a], seg.box.hi[a]
        sel = ax[(ax >= lo - _GEOM_ATOL) & (ax <= hi + _GEOM_ATOL)]
        coords.append(sel)
    mesh = np.meshgrid(*coords, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sample_points(domain: Domain, resolution, sample_rate: float = 1.0,
                  rng_seed: int = 0) -> PointSets:
    """Uniform lattice points classified into residual/boundary/interface.

    sample_rate < 1 keeps a seeded random fraction of the residual points;
    boundary and interface sets are never subsampled here.
    """
    if not 0.0 < sample_rate <= 1.0:
        raise GeometryError("sample_rate must be in (0, 1]")
    axes, node_shape, detections = _interface_masks(domain, resolution)
    inside = _nodes_inside(domain, resolution)

    interface_mask = np.zeros(node_shape, dtype=bool)
    for _, mask, _, _ in detections:
        interface_mask |= mask
    interface_mask &= inside

    # interface entries: one per (point, region pair); the facet normal runs
    # from the lower region id toward the higher one; first detection wins
    # when the same pair meets a point through several facets
    entry_key = {}
    ent_pts, ent_nrm, ent_pair = [], [], []
    flat_index = np.arange(int(np.prod(node_shape))).reshape(node_shape)
    for axis, mask, a_side, b_side in detections:
        mask = mask & inside
        if not mask.any():
            continue
        ids = flat_index[mask]
        ra = a_side[mask]
        rb = b_side[mask]
        lo_r = np.minimum(ra, rb)
        hi_r = np.maximum(ra, rb)
        # normal points from the lower region id toward the higher
        sign = np.where(lo_r == ra, 1.0, -1.0)
        multi = np.unravel_index(ids, node_shape)
        for n in range(ids.size):
            key = (int(ids[n]), int(lo_r[n]), int(hi_r[n]))
            if key in entry_key:
                continue
            entry_key[key] = True
            pt = [axes[a][multi[a][n]] for a in range(domain.dimension)]
            nrm = np.zeros(domain.dimension)
            nrm[axis] = sign[n]
            ent_pts.append(pt)
            ent_nrm.append(nrm)
            ent_pair.append((lo_r[n], hi_r[n]))

    d = domain.dimension
    interface = (np.asarray(ent_pts, dtype=float).reshape(-1, d)
                 if ent_pts else np.zeros((0, d)))
    interface_normal = (np.asarray(ent_nrm, dtype=float).reshape(-1, d)
                        if ent_nrm else np.zeros((0, d)))
    interface_pair = (np.asarray(ent_pair, dtype=np.int32).reshape(-1, 2)
                      if ent_pair else np.zeros((0, 2), dtype=np.int32))

    residual_mask = inside & ~interface_mask
    multi = np.nonzero(residual_mask)
    residual = np.stack([axes[a][multi[a]] for a in range(d)], axis=1)

    rng = np.random.default_rng(rng_seed)
    if sample_rate < 1.0:
        keep = int(np.floor(sample_rate * residual.shape[0]))
        idx = np.sort(rng.choice(residual.shape[0], size=keep, replace=False))
        residual = residual[idx]

    residual_region = domain.region_id_at(residual)

    # boundary sets: per segment in declaration order; a node claimed by an
    # earlier segment of a different kind is skipped
    claimed = {}
    per_kind = {}
    for seg in domain.boundaries:
        pts = _boundary_lattice(seg, axes)
        keep_rows = []
        for i in range(pts.shape[0]):
            key = tuple(np.round(pts[i] / _GEOM_ATOL).astype(np.int64) // 1000)
            prev = claimed.get(key)
            if prev is not None and prev != seg.kind:
                continue
            claimed[key] = seg.kind
            keep_rows.append(i)
        pts = pts[keep_rows]
        if pts.size == 0:
            continue
        entry = per_kind.setdefault(seg.kind, {"points": [], "normals": [],
                                               "c_bou": [], "value": []})
        entry["points"].append(pts)
        entry["normals"].append(np.tile(seg.normal, (pts.shape[0], 1)))
        entry["c_bou"].append(np.full(pts.shape[0],
                                      seg.c_bou if seg.c_bou else np.nan))
        entry["value"].append(np.full(pts.shape[0], seg.value))

    boundary = {}
    for kind, entry in per_kind.items():
        pts = np.concatenate(entry["points"], axis=0)
        boundary[kind] = {
            "points": pts,
            "normals": np.concatenate(entry["normals"], axis=0),
            "regions": domain.region_id_at(pts),
            "c_bou": np.concatenate(entry["c_bou"], axis=0),
            "value": np.concatenate(entry["value"], axis=0),
        }

    return PointSets(domain=domain,
                     resolution=np.broadcast_to(
                         np.asarray(resolution, dtype=float), (d,)).copy(),
                     rng_seed=int(rng_seed), residual=residual,
                     residual_region=residual_region, boundary=boundary,
                     interface=interface, interface_normal=interface_normal,
                     interface_pair=interface_pair, sample_rate=sample_rate)


def interface_budget(points: PointSets, proportion: float,
                     rng_seed: int | None = None) -> PointSets:
    """Keep a seeded fraction of interface entries, re-tagging the dropped
    points as residual so the total training point count stays constant."""
    if not 0.0 <= proportion <= 1.0:
        raise GeometryError("proportion must be in [0, 1]")
    m = points.interface.shape[0]
    keep_n = int(np.floor(proportion * m))
    seed = points.rng_seed + 1 if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(m, size=keep_n, replace=False))
    keep_mask = np.zeros(m, dtype=bool)
    keep_mask[keep] = True

    # a dropped point becomes residual only when no surviving entry uses it
    kept_pts = points.interface[keep_mask]
    dropped = points.interface[~keep_mask]
    if kept_pts.size and dropped.size:
        kept_keys = {tuple(np.round(p, 9)) for p in kept_pts}
        rows = [i for i in range(dropped.shape[0])
                if tuple(np.round(dropped[i], 9)) not in kept_keys]
        dropped = dropped[rows]
    if dropped.size:
        dropped = np.unique(np.round(dropped, 9), axis=0)
        residual = np.concatenate([points.residual, dropped], axis=0)
        residual_region = points.domain.region_id_at(residual)
    else:
        residual = points.residual
        residual_region = points.residual_region

    return PointSets(domain=points.domain, resolution=points.resolution,
                     rng_seed=points.rng_seed, residual=residual,
                     residual_region=residual_region, boundary=points.boundary,
                     interface=points.interface[keep_mask],
                     interface_normal=points.interface_normal[keep_mask],
                     interface_pair=points.interface_pair[keep_mask],
                     sample_rate=points.sample_rate)
