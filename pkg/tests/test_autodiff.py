import numpy as np
import pytest

from neutdiff import autodiff as ad
from neutdiff import kernels, network


class TestVarAlgebra:
    def test_arithmetic_matches_numpy(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(4, 3))
        va, vb = ad.Var(a), ad.Var(b)
        out = (va * vb - va / 2.0 + 3.0 * vb).square().sum()
        expect = ((a * b - a / 2.0 + 3.0 * b) ** 2).sum()
        assert out.value == pytest.approx(expect)

    def test_ndarray_left_operand_dispatches(self):
        a = np.array([1.0, 2.0])
        v = ad.Var(np.array([3.0, 4.0]))
        out = a * v + a
        assert isinstance(out, ad.Var)
        assert np.allclose(out.value, [4.0, 10.0])

    def test_gather_and_grad(self):
        v = ad.Var(np.arange(12.0).reshape(4, 3))
        idx = np.array([0, 2, 1, 0])
        picked = v.gather(idx)
        assert np.allclose(picked.value, [0.0, 5.0, 7.0, 9.0])
        g = ad.backward(picked.sum())[id(v)]
        expect = np.zeros((4, 3))
        expect[np.arange(4), idx] = 1.0
        assert np.allclose(g, expect)

    def test_quadratic_gradient(self):
        theta = ad.Var(np.array([1.0, -2.0, 3.0]))
        loss = theta.square().sum()
        assert np.allclose(ad.param_gradient(loss, theta), 2 * theta.value)

    def test_unused_parameter_block_zero(self):
        theta = ad.Var(np.array([[1.0, 2.0, 3.0, 4.0]]))
        loss = theta.gather(np.array([0])).square().sum()
        g = ad.param_gradient(loss, theta)
        assert np.allclose(g[0, 1:], 0.0)
        assert g[0, 0] == pytest.approx(2.0)

    def test_nonfinite_loss_rejected(self):
        with pytest.raises(FloatingPointError):
            ad.backward(ad.Var(np.inf))


class TestDetach:
    def test_idempotent(self):
        v = ad.Var(np.array([1.0, 2.0]))
        assert np.array_equal(ad.detach(ad.detach(v)).value,
                              ad.detach(v).value)

    def test_detached_only_loss_has_zero_gradient(self):
        theta = ad.Var(np.array([2.0, 3.0]))
        loss = (ad.detach(theta) * ad.detach(theta)).sum()
        assert np.allclose(ad.param_gradient(loss, theta), 0.0)

    def test_product_rule_with_detach(self):
        # d/dt [detach(u) * u] = detach(u) at the current point
        theta = ad.Var(np.array([1.5, -0.5]))
        u = theta * 3.0
        loss = (ad.detach(u) * u).sum()
        g = ad.param_gradient(loss, theta)
        assert np.allclose(g, 3.0 * u.value)


class TestNetworkEval:
    def test_partial_output_use(self):
        arch = network.Architecture(2, 1, 6, 1)
        theta = ad.Var(network.init(arch, 0))
        backend = kernels.get_backend("reference")
        x = np.random.default_rng(0).normal(size=(7, 2))
        v, g, lap = ad.network_eval(theta, x, arch.key, backend)
        loss = v.square().sum()          # gradient/laplacian outputs unused
        grad = ad.param_gradient(loss, theta)
        assert grad.shape == theta.value.shape
        assert np.any(grad != 0)

    def test_param_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        arch = network.Architecture(1, 2, 8, 2)
        theta0 = network.init(arch, 1) + rng.normal(0, 0.2,
                                                    network.init(arch, 1).size)
        backend = kernels.get_backend("reference")
        x = rng.normal(size=(16, 1))

        def loss_np(th):
            v, g, lap, _ = backend.forward(arch.key, th, x)
            return float((lap ** 2).mean())

        theta = ad.Var(theta0)
        v, g, lap = ad.network_eval(theta, x, arch.key, backend)
        loss = lap.square().sum() / (lap.value.size)
        grad = ad.param_gradient(loss, theta)
        h = 1e-5
        idx = rng.choice(theta0.size, 10, replace=False)
        for i in idx:
            tp, tm = theta0.copy(), theta0.copy()
            tp[i] += h
            tm[i] -= h
            fd = (loss_np(tp) - loss_np(tm)) / (2 * h)
            assert fd == pytest.approx(grad[i], rel=1e-5, abs=1e-10)

    def test_determinism(self):
        arch = network.Architecture(2, 2, 10, 2)
        theta0 = network.init(arch, 5)
        backend = kernels.get_backend("reference")
        x = np.random.default_rng(1).normal(size=(64, 2))

        def run():
            theta = ad.Var(theta0.copy())
            v, g, lap = ad.network_eval(theta, x, arch.key, backend)
            loss = (v.square() + lap.square()).sum()
            return ad.param_gradient(loss, theta)

        g1, g2 = run(), run()
        assert np.array_equal(g1, g2)

    def test_derivative_linearity_exact(self):
        # doubling the output layer doubles value/gradient/laplacian exactly
        # (scaling by a power of two is lossless in floating point)
        backend = kernels.get_backend("reference")
        arch = network.Architecture(2, 1, 8, 3)
        theta = network.init(arch, 1)
        x = np.random.default_rng(0).normal(size=(9, 2))
        v1, g1, l1, _ = backend.forward(arch.key, theta, x)
        scaled = theta.copy()
        n_tail = arch.n_out * arch.width + arch.n_out
        scaled[-n_tail:] *= 2.0
        v2, g2, l2, _ = backend.forward(arch.key, scaled, x)
        assert np.array_equal(v2, 2.0 * v1)
        assert np.array_equal(g2, 2.0 * g1)
        assert np.array_equal(l2, 2.0 * l1)
