"""Reverse-mode differentiation over batched numpy arrays.

The network evaluation enters the graph as one composite primitive whose
vector-Jacobian product is supplied by the evaluation kernel; everything
downstream of it (squaring, power normalization, loss algebra) is plain
array arithmetic recorded on this tape.  Gradients are exact, and the
reduction order is fixed, so runs are reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and
                 grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Var:
    """One node of the computation graph."""

    __slots__ = ("value", "parents", "vjp")
    # keep numpy from absorbing Var into object arrays; binary ops with
    # ndarrays then dispatch to the reflected Var operators
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        o = _as_var(other)
        return Var(self.value + o.value, (self, o),
                   lambda g: (_unbroadcast(g, self.shape),
                              _unbroadcast(g, o.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        o = _as_var(other)
        return Var(self.value - o.value, (self, o),
                   lambda g: (_unbroadcast(g, self.shape),
                              _unbroadcast(-g, o.shape)))

    def __rsub__(self, other):
        return _as_var(other) - self

    def __mul__(self, other):
        o = _as_var(other)
        return Var(self.value * o.value, (self, o),
                   lambda g: (_unbroadcast(g * o.value, self.shape),
                              _unbroadcast(g * self.value, o.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _as_var(other)
        return Var(self.value / o.value, (self, o),
                   lambda g: (_unbroadcast(g / o.value, self.shape),
                              _unbroadcast(-g * self.value / o.value ** 2,
                                           o.shape)))

    def __rtruediv__(self, other):
        return _as_var(other) / self

    def __neg__(self):
        return Var(-self.value, (self,), lambda g: (-g,))

    def square(self):
        return Var(self.value * self.value, (self,),
                   lambda g: (2.0 * g * self.value,))

    def sum(self):
        return Var(self.value.sum(), (self,),
                   lambda g: (np.broadcast_to(g, self.shape).copy(),))

    def sum_last(self):
        return Var(self.value.sum(axis=-1), (self,),
                   lambda g: (np.repeat(g[..., None], self.shape[-1],
                                        axis=-1),))

    def dot_last(self, const):
        const = np.asarray(const, dtype=np.float64)
        return Var((self.value * const).sum(axis=-1), (self,),
                   lambda g: (g[..., None] * const,))

    def gather(self, idx):
        """Select one column per row: out[i] = self[i, idx[i]]."""
        idx = np.asarray(idx)
        val = np.take_along_axis(self.value, idx[:, None], axis=1)[:, 0]

        def vjp(g):
            out = np.zeros_like(self.value)
            np.put_along_axis(out, idx[:, None], g[:, None], axis=1)
            return (out,)

        return Var(val, (self,), vjp)

    def gather_g(self, idx):
        """Per-row column selection on (N, d, cols) arrays."""
        idx = np.asarray(idx)
        val = np.take_along_axis(self.value, idx[:, None, None],
                                 axis=2)[:, :, 0]

        def vjp(g):
            out = np.zeros_like(self.value)
            np.put_along_axis(out, idx[:, None, None], g[:, :, None], axis=2)
            return (out,)

        return Var(val, (self,), vjp)


def _as_var(x):
    return x if isinstance(x, Var) else Var(x)


def detach(x) -> Var:
    """Value copy that contributes nothing to any parameter gradient."""
    v = x.value if isinstance(x, Var) else x
    return Var(np.array(v, dtype=np.float64, copy=True))


def backward(loss: Var) -> dict:
    """Adjoints of every reachable node, keyed by id(node)."""
    if loss.value.ndim != 0:
        raise ValueError("loss must be scalar")
    if not np.isfinite(loss.value):
        raise FloatingPointError("non-finite loss")
    topo, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    grads = {id(loss): np.asarray(1.0)}
    for node in reversed(topo):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg
    return grads


def param_gradient(loss: Var, theta: Var) -> np.ndarray:
    """Flat gradient of a scalar loss with respect to the parameter vector."""
    grads = backward(loss)
    g = grads.get(id(theta))
    if g is None:
        return np.zeros_like(theta.value)
    return np.asarray(g, dtype=np.float64)


def network_eval(theta: Var, x: np.ndarray, arch, backend,
                 precomputed=None) -> tuple:
    """Composite graph node evaluating the network and its input derivatives.

    Returns Vars (values, gradients, laplacians) with shapes
    (N, n_out), (N, d, n_out), (N, n_out).  `precomputed` may carry a
    matching (v, g, lap, cache) forward pass for the same theta and x.
    """
    if precomputed is not None:
        v, g, lap, cache = precomputed
    else:
        v, g, lap, cache = backend.forward(arch, theta.value, x,
                                           need_cache=True)
    adj = {"dv": None, "dg": None, "dl": None}

    def join_vjp(_):
        dv = adj["dv"] if adj["dv"] is not None else np.zeros_like(v)
        dg = adj["dg"] if adj["dg"] is not None else np.zeros_like(g)
        dl = adj["dl"] if adj["dl"] is not None else np.zeros_like(lap)
        return (backend.backward(arch, theta.value, x, cache, dv, dg, dl),)

    join = Var(0.0, (theta,), join_vjp)

    def stash(key, template):
        def vjp(gr):
            cur = adj[key]
            adj[key] = gr if cur is None else cur + gr
            return (np.asarray(0.0),)
        return vjp

    vv = Var(v, (join,), stash("dv", v))
    gv = Var(g, (join,), stash("dg", g))
    lv = Var(lap, (join,), stash("dl", lap))
    return vv, gv, lv
