import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from conftest import kinf
from neutdiff import benchmarks, fd, geometry, losses
from neutdiff.autodiff import Var
from neutdiff.losses import (IterationState, LossWeights, boundary_loss,
                             interface_loss, rayleigh_quotient,
                             residual_loss_de, residual_loss_di,
                             residual_loss_ipm, total_loss)

TWIGL_SEED = benchmarks._TWIGL_MATS["seed"]


def const_coeffs(mat, n):
    fields = ("d1", "d2", "sigma_a1", "sigma_a2", "sigma_12",
              "nu_sigma_f1", "nu_sigma_f2", "chi1", "chi2")
    return {f: np.full(n, getattr(mat, f)) for f in fields}


def record(phi1, phi2, lap1=None, lap2=None):
    n = np.asarray(phi1).size
    z = np.zeros(n)
    return {"phi1": Var(phi1), "phi2": Var(phi2),
            "lap1": Var(z if lap1 is None else lap1),
            "lap2": Var(z if lap2 is None else lap2)}


class TestResidualLosses:
    def test_zero_fluxes_zero_loss(self):
        c = const_coeffs(TWIGL_SEED, 4)
        state = IterationState(np.zeros(4), np.zeros(4), 1.0, 0.0)
        rec = record(np.zeros(4), np.zeros(4))
        assert residual_loss_de(rec, c, state).value == 0.0
        assert residual_loss_di(rec, c, state).value == 0.0
        assert residual_loss_ipm(rec, c, state).value == 0.0

    def test_decoupling_single_point_hand_value(self):
        # fast-group residual with a flat flux: lhs = removal * phi1,
        # rhs = fission source from the previous iterate over k_prev
        k_prev = kinf(TWIGL_SEED)       # 1.016667
        c = const_coeffs(TWIGL_SEED, 1)
        state = IterationState(np.array([1.0]), np.array([1.0]),
                               1.0 / k_prev, 0.0)
        phi2_balance = TWIGL_SEED.sigma_12 / TWIGL_SEED.sigma_a2
        rec = record(np.array([1.0]), np.array([phi2_balance]))
        expected_term1 = (0.02 - 0.207 / k_prev) ** 2
        # thermal equation balanced exactly by construction, so the loss is
        # the fast-group mismatch alone
        got = residual_loss_de(rec, c,
                               IterationState(np.array([1.0]),
                                              np.array([phi2_balance]),
                                              1.0 / k_prev, 0.0)).value
        assert got == pytest.approx(expected_term1, rel=1e-12)

    def test_three_losses_agree_when_stationary_unshifted(self):
        rng = np.random.default_rng(0)
        n = 32
        c = const_coeffs(TWIGL_SEED, n)
        phi1 = rng.uniform(0.5, 1.5, n)
        phi2 = rng.uniform(0.5, 1.5, n)
        lap1 = rng.normal(0, 0.1, n)
        lap2 = rng.normal(0, 0.1, n)
        state = IterationState(phi1, phi2, 1.0 / 1.01, 0.0)
        rec = record(phi1, phi2, lap1, lap2)
        lde = residual_loss_de(rec, c, state).value
        ldi = residual_loss_di(rec, c, state).value
        lipm = residual_loss_ipm(rec, c, state).value
        assert lde == pytest.approx(lipm, rel=1e-12)
        assert ldi == pytest.approx(lipm, rel=1e-12)

    def test_ipm_ignores_shift(self):
        rng = np.random.default_rng(1)
        n = 8
        c = const_coeffs(TWIGL_SEED, n)
        phi1, phi2 = rng.uniform(0.5, 1.5, (2, n))
        rec = record(phi1, phi2)
        a = residual_loss_ipm(rec, c, IterationState(phi1, phi2, 1.0, 0.0))
        b = residual_loss_ipm(rec, c,
                              IterationState(phi1, phi2, 3.0, 2.0))
        assert a.value == pytest.approx(b.value)

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        n = 16
        c = const_coeffs(TWIGL_SEED, n)
        for _ in range(10):
            rec = record(rng.uniform(0, 2, n), rng.uniform(0, 2, n),
                         rng.normal(0, 1, n), rng.normal(0, 1, n))
            state = IterationState(rng.uniform(0.1, 2, n),
                                   rng.uniform(0.1, 2, n),
                                   rng.uniform(0.8, 2.5), 0.5)
            for fn in (residual_loss_de, residual_loss_di,
                       residual_loss_ipm):
                assert fn(rec, c, state).value >= 0.0


class TestBoundaryLoss:
    def test_zero_field_dirichlet(self):
        b = {"dirichlet": {"phi1": Var(np.zeros(5)), "phi2": Var(np.zeros(5)),
                           "value": np.zeros(5)}}
        assert boundary_loss(b).value == 0.0

    def test_symmetric_field_neumann(self):
        # an even field has zero normal derivative on the symmetry plane
        b = {"neumann": {"dphi1_dn": Var(np.zeros(4)),
                         "dphi2_dn": Var(np.zeros(4))}}
        assert boundary_loss(b).value == 0.0

    def test_robin_exponential_profile(self):
        # phi = exp(-c x / D) at a facet with outward normal +x satisfies
        # dphi/dn + (c/D) phi = 0 exactly
        c_bou, d_e, x0 = 0.5, 1.3116, 559.0
        phi = np.exp(-c_bou * x0 / d_e)
        dphi_dn = -(c_bou / d_e) * phi
        b = {"robin": {"phi1": Var(np.array([phi])),
                       "phi2": Var(np.array([phi])),
                       "dphi1_dn": Var(np.array([dphi_dn])),
                       "dphi2_dn": Var(np.array([dphi_dn])),
                       "c_bou": np.array([c_bou]),
                       "d1": np.array([d_e]), "d2": np.array([d_e])}}
        assert boundary_loss(b).value == pytest.approx(0.0, abs=1e-28)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            boundary_loss({"cauchy": {}})


class TestInterfaceLoss:
    def test_identical_sides_zero(self):
        rng = np.random.default_rng(3)
        phi = rng.uniform(0, 1, 6)
        dn = rng.normal(0, 1, 6)
        rec = {"phi1_a": Var(phi), "phi1_b": Var(phi.copy()),
               "phi2_a": Var(phi), "phi2_b": Var(phi.copy()),
               "dphi1_dn_a": Var(dn), "dphi1_dn_b": Var(dn.copy()),
               "dphi2_dn_a": Var(dn), "dphi2_dn_b": Var(dn.copy()),
               "d1_a": np.ones(6), "d1_b": np.ones(6),
               "d2_a": np.ones(6), "d2_b": np.ones(6)}
        l0, l1 = interface_loss(rec)
        assert l0.value == 0.0 and l1.value == 0.0

    def test_constant_offset_group1(self):
        n = 5
        offset = 0.37
        phi = np.linspace(0.2, 1.0, n)
        zeros = np.zeros(n)
        rec = {"phi1_a": Var(phi + offset), "phi1_b": Var(phi),
               "phi2_a": Var(phi), "phi2_b": Var(phi.copy()),
               "dphi1_dn_a": Var(zeros), "dphi1_dn_b": Var(zeros),
               "dphi2_dn_a": Var(zeros), "dphi2_dn_b": Var(zeros),
               "d1_a": np.ones(n), "d1_b": np.ones(n),
               "d2_a": np.ones(n), "d2_b": np.ones(n)}
        l0, l1 = interface_loss(rec)
        assert l0.value == pytest.approx(n * offset ** 2)
        assert l1.value == 0.0

    def test_fd_eigenpair_jump_floor(self, ringhals):
        # one-sided per-region splines of the converged reference satisfy
        # both jump conditions up to the interpolation floor
        sol = fd.solve_benchmark(ringhals, 0.0625)
        ax = sol.grid.axes[0]
        f1, f2 = sol.fields_on_grid()
        cuts = [0.0, 118.25, 440.75, 559.0]
        splines = []
        for r in range(3):
            m = (ax >= cuts[r] - 1e-9) & (ax <= cuts[r + 1] + 1e-9)
            splines.append((CubicSpline(ax[m], f1[m]),
                            CubicSpline(ax[m], f2[m])))
        mats = [ringhals.material_of_region(r) for r in (0, 1, 2)]
        x = np.array([118.25, 440.75])
        val = {}
        for g in (1, 2):
            for side, reg in (("a", [0, 1]), ("b", [1, 2])):
                s = [splines[reg[i]][g - 1] for i in range(2)]
                val[f"phi{g}_{side}"] = Var(
                    np.array([s[i](x[i]) for i in range(2)]))
                val[f"dphi{g}_dn_{side}"] = Var(
                    np.array([s[i](x[i], 1) for i in range(2)]))
        rec = dict(val)
        rec.update({
            "d1_a": np.array([mats[0].d1, mats[1].d1]),
            "d1_b": np.array([mats[1].d1, mats[2].d1]),
            "d2_a": np.array([mats[0].d2, mats[1].d2]),
            "d2_b": np.array([mats[1].d2, mats[2].d2]),
        })
        l0, l1 = interface_loss(rec)
        current_scale = float(np.max(np.abs(val["dphi1_dn_a"].value)))
        assert l0.value == pytest.approx(0.0, abs=1e-20)
        assert l1.value < (1e-3 * current_scale) ** 2 * 4


class TestTotalLoss:
    def test_all_zero(self):
        z = Var(0.0)
        assert total_loss(z, z, z, z, LossWeights()).value == 0.0

    def test_res_only_weights(self):
        parts = [Var(v) for v in (0.7, 0.3, 0.5, 0.9)]
        w = LossWeights(1.0, 0.0, 0.0, 0.0)
        assert total_loss(*parts, w).value == pytest.approx(0.7)

    def test_arithmetic(self):
        parts = [Var(v) for v in (0.1, 0.2, 0.3, 0.4)]
        assert total_loss(*parts, LossWeights()).value == pytest.approx(1.0)

    def test_nonfinite_part_rejected(self):
        with pytest.raises(FloatingPointError):
            total_loss(Var(np.nan), Var(0.0), Var(0.0), Var(0.0),
                       LossWeights())

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            LossWeights(-1.0, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            LossWeights(0.0, 0.0, 0.0, 0.0)


class TestRayleighQuotient:
    def test_infinite_medium_closed_form(self):
        n = 50
        c = const_coeffs(TWIGL_SEED, n)
        phi1 = np.ones(n)
        phi2 = np.full(n, TWIGL_SEED.sigma_12 / TWIGL_SEED.sigma_a2)
        lam = rayleigh_quotient(phi1, phi2, np.zeros(n), np.zeros(n), c, 0.0)
        assert lam == pytest.approx(1.0 / kinf(TWIGL_SEED), rel=1e-12)
        assert 1.0 / lam == pytest.approx(1.016667, rel=1e-5)

    def test_shift_linearity(self):
        rng = np.random.default_rng(4)
        n = 40
        c = const_coeffs(TWIGL_SEED, n)
        phi1 = rng.uniform(0.5, 1.5, n)
        phi2 = rng.uniform(0.5, 1.5, n)
        lap1 = rng.normal(0, 0.1, n)
        lap2 = rng.normal(0, 0.1, n)
        base = rayleigh_quotient(phi1, phi2, lap1, lap2, c, 0.0)
        for sigma in (0.25, 1.0, 3.0):
            shifted = rayleigh_quotient(phi1, phi2, lap1, lap2, c, sigma)
            assert shifted - base == pytest.approx(sigma, rel=1e-10)

    def test_twigl_fd_eigenpair(self, twigl):
        sol = fd.solve_benchmark(twigl, 0.5)
        f1, f2 = sol.fields_on_grid()
        h = 0.5
        lap = {}
        for name, f in (("1", f1), ("2", f2)):
            l = np.full_like(f, np.nan)
            l[1:-1, 1:-1] = ((f[2:, 1:-1] - 2 * f[1:-1, 1:-1] + f[:-2, 1:-1])
                             + (f[1:-1, 2:] - 2 * f[1:-1, 1:-1]
                                + f[1:-1, :-2])) / h ** 2
            lap[name] = l
        xs, ys = np.meshgrid(sol.grid.axes[0], sol.grid.axes[1],
                             indexing="ij")
        # residual points away from material interfaces and edges
        cheb = np.maximum(xs, ys)
        guard = ((np.abs(cheb - 24) > 2) & (np.abs(cheb - 56) > 2)
                 & (xs > 1) & (ys > 1) & (xs < 79) & (ys < 79))
        sel = guard & ~np.isnan(lap["1"])
        pts = np.stack([xs[sel], ys[sel]], axis=1)
        rid = twigl.region_id_at(pts)
        c = twigl.coeff_arrays(rid)
        lam = rayleigh_quotient(f1[sel], f2[sel], lap["1"][sel],
                                lap["2"][sel], c, 0.0)
        assert 1.0 / lam == pytest.approx(0.9133, rel=5e-3)

    def test_degenerate_denominator(self):
        c = const_coeffs(TWIGL_SEED, 3)
        with pytest.raises(ValueError):
            rayleigh_quotient(np.zeros(3), np.zeros(3), np.zeros(3),
                              np.zeros(3), c, 0.0)


class TestIterationState:
    def test_k_prev_round_trip(self):
        st = IterationState(np.ones(2), np.ones(2), 1.0 / 1.0037 + 1.0, 1.0)
        assert st.k_prev == pytest.approx(1.0037)

    def test_nonfinite_lambda_rejected(self):
        with pytest.raises(ValueError):
            IterationState(np.ones(1), np.ones(1), np.inf, 0.0)
