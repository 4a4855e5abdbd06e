import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neutdiff import benchmarks, geometry
from neutdiff.geometry import (Box, GeometryError, MaterialCoefficients,
                               count_lattice_points, interface_budget,
                               load_domain, sample_points)


class TestMaterials:
    def test_negative_fast_absorption_allowed(self):
        m = MaterialCoefficients(1.3116, 0.2624, -0.0098, 0.0284, 0.0238,
                                 0.0, 0.0)
        assert m.sigma_a1 < 0

    def test_bad_diffusion_rejected(self):
        with pytest.raises(GeometryError):
            MaterialCoefficients(0.0, 0.4, 0.01, 0.15, 0.01, 0.007, 0.2)

    def test_chi_must_sum_to_one(self):
        with pytest.raises(GeometryError):
            MaterialCoefficients(1.4, 0.4, 0.01, 0.15, 0.01, 0.007, 0.2,
                                 chi1=0.9, chi2=0.2)


class TestLoadDomain:
    def test_round_trip(self, twigl):
        doc = twigl.to_dict()
        dom = load_domain(json.dumps(doc))
        assert dom.n_regions == 2
        assert dom.volume == pytest.approx(6400.0)

    def test_parse_error(self):
        with pytest.raises(GeometryError):
            load_domain("{not json")

    def test_unknown_material(self, twigl):
        doc = twigl.to_dict()
        doc["regions"][0]["material"] = "mystery"
        with pytest.raises(GeometryError):
            load_domain(doc)

    def test_overlapping_regions_rejected(self, twigl):
        doc = twigl.to_dict()
        doc["regions"][0]["boxes"].append([[0.0, 0.0], [30.0, 30.0]])
        with pytest.raises(GeometryError, match="overlap"):
            load_domain(doc)

    def test_gap_rejected_for_strict_domains(self, twigl):
        doc = twigl.to_dict()
        doc["regions"][1]["boxes"] = doc["regions"][1]["boxes"][:-1]
        with pytest.raises(GeometryError, match="gap"):
            load_domain(doc)


class TestBenchmarkAssets:
    def test_assets_match_builders(self):
        for name in benchmarks.BENCHMARKS:
            built = benchmarks.build_benchmark_dict(name)
            shipped = benchmarks.builtin_benchmark(name).to_dict()
            shipped["default_resolution"] = built["default_resolution"]
            assert built == shipped, name

    def test_unknown_benchmark(self):
        with pytest.raises(GeometryError):
            benchmarks.builtin_benchmark("phenix")

    def test_ringhals_layout(self, ringhals):
        assert ringhals.dimension == 1
        assert ringhals.n_regions == 3
        assert len(ringhals.materials) == 2
        assert ringhals.bbox_hi[0] == pytest.approx(559.0)
        core = ringhals.materials["core"]
        assert core.d1 == pytest.approx(1.4376)
        assert core.nu_sigma_f1 == pytest.approx(0.0057)
        assert core.nu_sigma_f2 == pytest.approx(0.1425)

    def test_twigl_coefficients(self, twigl):
        seed = twigl.materials["seed"]
        assert seed.sigma_a2 == pytest.approx(0.15)
        assert seed.nu_sigma_f2 == pytest.approx(0.2)

    def test_twigl_boundary_kinds(self, twigl):
        kinds = {}
        for seg in twigl.boundaries:
            axis = int(np.nonzero(seg.normal)[0][0])
            side = float(seg.box.lo[axis])
            kinds[(axis, side)] = seg.kind
        assert kinds[(0, 80.0)] == "dirichlet"
        assert kinds[(1, 80.0)] == "dirichlet"
        assert kinds[(0, 0.0)] == "neumann"
        assert kinds[(1, 0.0)] == "neumann"

    def test_iaea_reflector_not_fissile(self, iaea2d):
        refl = iaea2d.materials["reflector"]
        assert refl.nu_sigma_f1 == 0.0 and refl.nu_sigma_f2 == 0.0
        assert iaea2d.materials["rodded_fuel"].sigma_a2 == pytest.approx(0.13)

    def test_ringhals_robin_constant(self, ringhals):
        assert all(s.kind == "robin" and s.c_bou == pytest.approx(0.5)
                   for s in ringhals.boundaries)

    def test_iaea_robin_constant(self, iaea2d):
        robins = [s for s in iaea2d.boundaries if s.kind == "robin"]
        assert robins and all(s.c_bou == pytest.approx(0.4692)
                              for s in robins)

    def test_twigl3r_has_three_regions(self):
        dom = benchmarks.builtin_benchmark("twigl3r2d")
        assert dom.n_regions == 3
        assert dom.materials["seed_star"].d1 == pytest.approx(1.35)
        rid = dom.region_id_at(np.array([[10.0, 10.0]]))[0]
        assert dom.regions[rid].material == "seed_star"


class TestPointCounts:
    def test_ringhals_counts(self, ringhals):
        assert count_lattice_points(ringhals, 0.05) == (11_179, 2)

    def test_twigl_counts(self, twigl):
        assert count_lattice_points(twigl, 1.0) == (6_399, 162)

    def test_twigl3r_counts_match_twigl(self):
        dom = benchmarks.builtin_benchmark("twigl3r2d")
        assert count_lattice_points(dom, 1.0) == (6_399, 162)

    def test_ringhals_interface_on_region_boundaries(self, ringhals):
        pts = sample_points(ringhals, 0.05, rng_seed=0)
        assert sorted(pts.interface[:, 0]) == [118.25, 440.75]
        assert pts.residual.shape[0] == 11_179

    def test_twigl_sample_rate(self, twigl):
        pts = sample_points(twigl, 1.0, sample_rate=0.5, rng_seed=3)
        assert pts.residual.shape[0] == int(np.floor(0.5 * 6399))
        assert pts.interface.shape[0] == 162
        full = sample_points(twigl, 1.0, rng_seed=3)
        assert pts.n_boundary == full.n_boundary

    def test_classification_deterministic(self, twigl):
        a = sample_points(twigl, 1.0, sample_rate=0.7, rng_seed=11)
        b = sample_points(twigl, 1.0, sample_rate=0.7, rng_seed=11)
        assert np.array_equal(a.residual, b.residual)
        assert np.array_equal(a.interface, b.interface)

    def test_resolution_larger_than_extent(self, twigl):
        with pytest.raises(GeometryError):
            sample_points(twigl, 100.0)

    def test_quadrature_weight(self, twigl):
        pts = sample_points(twigl, 1.0)
        assert pts.quadrature_weight == pytest.approx(6400.0 / 6399)


class TestInterfaceBudget:
    def test_identity(self, twigl):
        pts = sample_points(twigl, 1.0, rng_seed=0)
        out = interface_budget(pts, 1.0)
        assert out.interface.shape[0] == 162
        assert out.residual.shape[0] == pts.residual.shape[0]

    def test_zero_proportion(self, twigl):
        pts = sample_points(twigl, 1.0, rng_seed=0)
        out = interface_budget(pts, 0.0)
        assert out.interface.shape[0] == 0
        assert out.residual.shape[0] == 6399 + 162

    def test_half_proportion(self, twigl):
        pts = sample_points(twigl, 1.0, rng_seed=0)
        out = interface_budget(pts, 0.5)
        assert out.interface.shape[0] == 81
        assert out.residual.shape[0] == 6399 + 81

    def test_total_constant(self, twigl):
        pts = sample_points(twigl, 1.0, rng_seed=0)
        for prop in (0.0, 0.25, 0.5, 0.75, 1.0):
            out = interface_budget(pts, prop)
            assert (out.residual.shape[0] + out.interface.shape[0]
                    == 6399 + 162)


class TestPartition:
    @pytest.mark.parametrize("name", ["ringhals1d", "twigl2d", "twigl3r2d"])
    def test_every_point_claimed_once(self, name):
        dom = benchmarks.builtin_benchmark(name)
        rng = np.random.default_rng(5)
        pts = rng.uniform(dom.bbox_lo, dom.bbox_hi, (10_000, dom.dimension))
        rid = dom.region_id_at(pts)
        assert np.all(rid >= 0)
        # interior points are claimed by exactly one region
        owners = np.zeros(pts.shape[0], dtype=int)
        for r in range(dom.n_regions):
            hit = np.zeros(pts.shape[0], dtype=bool)
            for b in dom.regions[r].boxes:
                hit |= b.contains(pts, atol=0.0)
            owners += hit
        on_facet = owners > 1
        assert np.all(owners >= 1)
        # ties are broken by the lowest region id
        for i in np.nonzero(on_facet)[0][:50]:
            claims = [r for r in range(dom.n_regions)
                      if any(b.contains(pts[i:i + 1], atol=0.0)[0]
                             for b in dom.regions[r].boxes)]
            assert rid[i] == min(claims)

    def test_iaea_staircase_points_inside_claimed(self, iaea2d):
        rng = np.random.default_rng(6)
        pts = rng.uniform(0, 170, (10_000, 2))
        rid = iaea2d.region_id_at(pts)
        # the staircase leaves the far corner uncovered
        outside = (pts[:, 0] > 150) & (pts[:, 1] > 110)
        assert np.all(rid[outside] == -1)
        inside = (pts[:, 0] < 70) & (pts[:, 1] < 70)
        assert np.all(rid[inside] >= 0)

    @given(x=st.floats(0.0, 80.0), y=st.floats(0.0, 80.0))
    @settings(max_examples=200, deadline=None)
    def test_twigl_region_lookup_total(self, x, y):
        dom = benchmarks.builtin_benchmark("twigl2d")
        rid = dom.region_id_at(np.array([[x, y]]))[0]
        assert rid in (0, 1)
        in_band = (max(abs(x), abs(y)) <= 56 + 1e-9
                   and max(abs(x), abs(y)) >= 24 - 1e-9)
        if 24 + 1e-6 < max(x, y) < 56 - 1e-6:
            assert rid == 0
        elif not in_band:
            assert rid == 1
