import numpy as np
import pytest

from conftest import make_slab
from neutdiff import benchmarks, geometry, kernels, network
from neutdiff.network import (Architecture, DegenerateStateError, flux_at,
                              forward, init, load_checkpoint,
                              power_normalize, save_checkpoint)


class TestInit:
    def test_same_seed_identical(self):
        arch = Architecture(2, 3, 16, 2)
        assert np.array_equal(init(arch, 42), init(arch, 42))

    def test_different_seeds_differ(self):
        arch = Architecture(2, 3, 16, 2)
        assert not np.array_equal(init(arch, 1), init(arch, 2))

    def test_parameter_count(self):
        arch = Architecture(2, 4, 32, 2)
        assert arch.n_params == 8676

    def test_biases_zero(self):
        arch = Architecture(1, 1, 4, 1)
        theta = init(arch, 0)
        w0, b0, blocks, wm, bm = kernels.reference.unpack(arch.key, theta)
        assert np.all(b0 == 0) and np.all(bm == 0)
        assert all(np.all(b == 0) and np.all(bt == 0)
                   for _, b, _, bt in blocks)


class TestForward:
    def test_zero_weight_network_outputs_bias(self):
        arch = Architecture(2, 2, 8, 2)
        theta = np.zeros(arch.n_params)
        theta[-arch.n_out:] = [1.0, -2.0, 3.0, 0.5]
        out = forward(arch, theta, np.zeros((3, 2)))
        assert np.allclose(out, [1.0, -2.0, 3.0, 0.5])

    def test_no_blocks_is_affine_composition(self):
        arch = Architecture(2, 0, 5, 1)
        rng = np.random.default_rng(0)
        theta = rng.normal(size=arch.n_params)
        w0, b0, _, wm, bm = kernels.reference.unpack(arch.key, theta)
        x = rng.normal(size=(4, 2))
        expect = (x @ w0.T + b0) @ wm.T + bm
        assert np.allclose(forward(arch, theta, x), expect, rtol=1e-13)

    def test_forward_matches_eval_record_values(self):
        arch = Architecture(2, 2, 12, 3)
        theta = init(arch, 3)
        x = np.random.default_rng(4).normal(size=(17, 2))
        backend = kernels.get_backend("reference")
        v, _, _, _ = backend.forward(arch.key, theta, x)
        assert np.array_equal(forward(arch, theta, x, backend=backend), v)


class TestFluxAt:
    def test_squares_selected_head(self):
        arch = Architecture(1, 0, 2, 2)
        theta = np.zeros(arch.n_params)
        theta[-4:] = [-3.0, 2.0, 5.0, -1.0]
        f1, f2 = flux_at(arch, theta, np.zeros((1, 1)), 0)
        assert (f1[0], f2[0]) == (9.0, 4.0)
        f1, f2 = flux_at(arch, theta, np.zeros((1, 1)), 1)
        assert (f1[0], f2[0]) == (25.0, 1.0)

    def test_nonnegative_everywhere(self):
        arch = Architecture(2, 2, 10, 2)
        theta = init(arch, 9)
        rng = np.random.default_rng(0)
        x = rng.uniform(-5, 5, (200, 2))
        region = rng.integers(0, 2, 200)
        f1, f2 = flux_at(arch, theta, x, region)
        assert np.all(f1 >= 0) and np.all(f2 >= 0)

    def test_region_out_of_range(self):
        arch = Architecture(1, 0, 2, 1)
        with pytest.raises(ValueError):
            flux_at(arch, init(arch, 0), np.zeros((1, 1)), 1)

    def test_indicator_assembly_matches_per_region(self, twigl):
        arch = Architecture(2, 1, 8, twigl.n_regions)
        theta = init(arch, 2)
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 80, (100, 2))
        rid = twigl.region_id_at(x)
        f1, f2 = flux_at(arch, theta, x, rid)
        for r in range(twigl.n_regions):
            sel = rid == r
            g1, g2 = flux_at(arch, theta, x[sel], r)
            assert np.array_equal(f1[sel], g1)
            assert np.array_equal(f2[sel], g2)

    def test_heads_independent(self):
        arch = Architecture(2, 1, 8, 2)
        theta = init(arch, 5)
        x = np.random.default_rng(2).uniform(0, 1, (20, 2))
        base0 = flux_at(arch, theta, x, 0)
        base1 = flux_at(arch, theta, x, 1)
        bumped = theta.copy()
        bumped[-1] += 0.7          # head-1 thermal output bias
        new0 = flux_at(arch, bumped, x, 0)
        new1 = flux_at(arch, bumped, x, 1)
        assert np.array_equal(base0[0], new0[0])
        assert np.array_equal(base0[1], new0[1])
        assert not np.allclose(base1[1], new1[1])


class TestPowerNormalize:
    def unit_domain(self):
        mat = geometry.MaterialCoefficients(1.4, 0.4, 0.01, 0.15, 0.01,
                                            0.007, 0.2)
        return make_slab(mat, length=1.0, kind="dirichlet")

    def constant_net(self, value=1.0):
        arch = Architecture(1, 0, 2, 1)
        theta = np.zeros(arch.n_params)
        theta[-2:] = value
        return arch, theta

    def test_constant_flux_closed_form(self):
        dom = self.unit_domain()
        pts = geometry.sample_points(dom, 0.125)
        arch, theta = self.constant_net(1.0)
        power, acc = power_normalize(arch, theta, pts, dom)
        assert power == pytest.approx(0.207, rel=1e-12)
        f1, f2 = acc(np.array([[0.5]]), 0)
        assert f1[0] == pytest.approx(1.0 / 0.207)

    def test_all_reflector_degenerate(self):
        refl = benchmarks._RINGHALS_MATS["reflector"]
        dom = make_slab(refl, length=1.0, kind="dirichlet")
        pts = geometry.sample_points(dom, 0.25)
        arch, theta = self.constant_net(1.0)
        with pytest.raises(DegenerateStateError):
            power_normalize(arch, theta, pts, dom)

    def test_renormalized_power_is_one(self, ringhals):
        pts = geometry.sample_points(ringhals, 0.25)
        arch = Architecture(1, 1, 6, 3)
        theta = init(arch, 0)
        power, acc = power_normalize(arch, theta, pts, ringhals)
        f1, f2 = acc(pts.residual, pts.residual_region)
        c = ringhals.coeff_arrays(pts.residual_region)
        again = pts.quadrature_weight * float(
            np.sum(c["nu_sigma_f1"] * f1 + c["nu_sigma_f2"] * f2))
        assert again == pytest.approx(1.0, abs=1e-12)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        arch = Architecture(2, 2, 8, 2)
        theta = init(arch, 7)
        path = tmp_path / "ck.json"
        save_checkpoint(path, arch, theta, rng_seed=7, epoch=13,
                        lambda_tilde=1.25, extra={"note": "x"})
        arch2, theta2, doc = load_checkpoint(path)
        assert arch2 == arch
        assert np.array_equal(theta, theta2)
        assert doc["epoch"] == 13
        assert doc["lambda_tilde"] == 1.25
