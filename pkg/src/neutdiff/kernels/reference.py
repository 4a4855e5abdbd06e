"""NumPy implementation of the fused network-evaluation kernel.

State is propagated as one stacked matrix S of shape ((2+d)*N, t):
rows [0:N) carry values, rows [N:(1+d)N) the d directional derivatives and
rows [(1+d)N:) the Laplacian.  Affine layers act on the whole stack with a
single matmul; the tanh stage mixes the parts according to the chain rule
for first and summed second derivatives.
"""

from __future__ import annotations

import numpy as np

NAME = "reference"


def param_count(arch) -> int:
    d, m1, t, n_out = arch
    return t * d + t + m1 * (2 * t * t + 2 * t) + n_out * t + n_out


def unpack(arch, theta):
    d, m1, t, n_out = arch
    if theta.size != param_count(arch):
        raise ValueError("parameter vector does not match architecture")
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = theta[pos:pos + n].reshape(shape)
        pos += n
        return out

    w0 = take((t, d))
    b0 = take((t,))
    blocks = []
    for _ in range(m1):
        wk = take((t, t))
        bk = take((t,))
        wtk = take((t, t))
        btk = take((t,))
        blocks.append((wk, bk, wtk, btk))
    wm = take((n_out, t))
    bm = take((n_out,))
    return w0, b0, blocks, wm, bm


def forward(arch, theta, x, need_cache=False):
    d, m1, t, n_out = arch
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    w0, b0, blocks, wm, bm = unpack(arch, theta)

    s = np.empty(((2 + d) * n, t))
    s[:n] = x @ w0.T + b0
    for j in range(d):
        s[n * (1 + j): n * (2 + j)] = w0[:, j]
    s[(1 + d) * n:] = 0.0

    caches = []
    for (wk, bk, wtk, btk) in blocks:
        h = s @ wk.T
        h[:n] += bk
        z = h @ wtk.T
        z[:n] += btk
        z += s
        tv = np.tanh(z[:n])
        sv = 1.0 - tv * tv
        zg = z[n:(1 + d) * n].reshape(d, n, t)
        zl = z[(1 + d) * n:]
        q = np.einsum("jnt,jnt->nt", zg, zg)
        s_new = np.empty_like(s)
        s_new[:n] = tv
        s_new[n:(1 + d) * n] = (sv[None, :, :] * zg).reshape(d * n, t)
        s_new[(1 + d) * n:] = sv * zl - 2.0 * tv * sv * q
        if need_cache:
            caches.append((s, h, tv, sv, q, zg.copy(), zl.copy()))
        s = s_new

    v = s[:n] @ wm.T + bm
    g = (s[n:(1 + d) * n] @ wm.T).reshape(d, n, n_out).transpose(1, 0, 2)
    lap = s[(1 + d) * n:] @ wm.T
    cache = (caches, s) if need_cache else None
    return v, np.ascontiguousarray(g), lap, cache


def backward(arch, theta, x, cache, dv, dg, dl):
    d, m1, t, n_out = arch
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    w0, b0, blocks, wm, bm = unpack(arch, theta)
    caches, s_last = cache

    grad = np.zeros_like(theta)
    gw0, gb0, gblocks, gwm, gbm = unpack(arch, grad)

    # output layer
    ds = np.empty(((2 + d) * n, t))
    d_out = np.empty(((2 + d) * n, n_out))
    d_out[:n] = dv
    d_out[n:(1 + d) * n] = dg.transpose(1, 0, 2).reshape(d * n, n_out)
    d_out[(1 + d) * n:] = dl
    gwm += d_out.T @ s_last
    gbm += dv.sum(axis=0)
    ds[:] = d_out @ wm

    for k in range(m1 - 1, -1, -1):
        wk, bk, wtk, btk = blocks[k]
        gwk, gbk, gwtk, gbtk = gblocks[k]
        s_in, h, tv, sv, q, zg, zl = caches[k]

        dval = ds[:n]
        dgrad = ds[n:(1 + d) * n].reshape(d, n, t)
        dlap = ds[(1 + d) * n:]

        dz = np.empty_like(ds)
        # value part of z
        term = dval * sv
        term -= 2.0 * tv * sv * np.einsum("jnt,jnt->nt", dgrad, zg)
        term += dlap * (-2.0 * tv * sv * zl
                        - 2.0 * sv * (sv - 2.0 * tv * tv) * q)
        dz[:n] = term
        # gradient parts
        dz[n:(1 + d) * n] = (dgrad * sv[None] -
                             4.0 * (dlap * tv * sv)[None] * zg
                             ).reshape(d * n, t)
        # laplacian part
        dz[(1 + d) * n:] = dlap * sv

        # z = h @ wtk.T + btk (value rows) + s_in
        gwtk += dz.T @ h
        gbtk += dz[:n].sum(axis=0)
        dh = dz @ wtk
        ds_next = dz.copy()            # identity path
        # h = s_in @ wk.T + bk (value rows)
        gwk += dh.T @ s_in
        gbk += dh[:n].sum(axis=0)
        ds_next += dh @ wk
        ds = ds_next

    # input layer
    gw0 += ds[:n].T @ x
    gw0 += ds[n:(1 + d) * n].reshape(d, n, t).sum(axis=1).T
    gb0 += ds[:n].sum(axis=0)
    return grad
