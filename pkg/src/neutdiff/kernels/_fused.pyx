# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled fused evaluation kernel.

Same contract and state layout as kernels.reference: the stacked matrix
carries [values; d gradient parts; laplacian] through every affine map in
one BLAS call, and the tanh stage runs as a single fused pass.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "fused"


def param_count(arch):
    d, m1, t, n_out = arch
    return t * d + t + m1 * (2 * t * t + 2 * t) + n_out * t + n_out


cdef void _gemm_abt(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                    double alpha, double beta) noexcept nogil:
    """c[m,n] = alpha * a[m,k] @ b[n,k]^T + beta * c."""
    cdef int m = a.shape[0], k = a.shape[1], n = b.shape[0]
    if m == 0 or n == 0 or k == 0:
        return
    dgemm("T", "N", &n, &m, &k, &alpha, &b[0, 0], &k, &a[0, 0], &k,
          &beta, &c[0, 0], &n)


cdef void _gemm_ab(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                   double alpha, double beta) noexcept nogil:
    """c[m,n] = alpha * a[m,k] @ b[k,n] + beta * c."""
    cdef int m = a.shape[0], k = a.shape[1], n = b.shape[1]
    if m == 0 or n == 0 or k == 0:
        return
    dgemm("N", "N", &n, &m, &k, &alpha, &b[0, 0], &n, &a[0, 0], &k,
          &beta, &c[0, 0], &n)


cdef void _gemm_atb(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                    double alpha, double beta) noexcept nogil:
    """c[k1,k2] = alpha * a[m,k1]^T @ b[m,k2] + beta * c."""
    cdef int m = a.shape[0], k1 = a.shape[1], k2 = b.shape[1]
    if m == 0 or k1 == 0 or k2 == 0:
        return
    dgemm("N", "T", &k2, &k1, &m, &alpha, &b[0, 0], &k2, &a[0, 0], &k1,
          &beta, &c[0, 0], &k2)


def _unpack(arch, cnp.ndarray theta):
    d, m1, t, n_out = arch
    if theta.size != param_count(arch):
        raise ValueError("parameter vector does not match architecture")
    pos = 0
    out = []

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        arr = theta[pos:pos + n].reshape(shape)
        pos += n
        return np.ascontiguousarray(arr)

    w0 = take((t, d))
    b0 = take((t,))
    blocks = []
    for _ in range(m1):
        blocks.append((take((t, t)), take((t,)), take((t, t)), take((t,))))
    wm = take((n_out, t))
    bm = take((n_out,))
    return w0, b0, blocks, wm, bm


def forward(arch, theta, x, need_cache=False):
    cdef int d = arch[0], m1 = arch[1], t = arch[2], n_out = arch[3]
    x = np.ascontiguousarray(x, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    cdef int n = x.shape[0]
    cdef int rows = (2 + d) * n
    w0, b0, blocks, wm, bm = _unpack(arch, theta)

    s = np.empty((rows, t))
    cdef double[:, ::1] s_v = s
    cdef double[:, ::1] x_v = x
    cdef double[:, ::1] w0_v = w0
    cdef double[::1] b0_v = b0
    cdef int i, j, c
    _gemm_abt(x_v, w0_v, s_v[:n], 1.0, 0.0)
    with nogil:
        for i in range(n):
            for c in range(t):
                s_v[i, c] += b0_v[c]
        for j in range(d):
            for i in range(n):
                for c in range(t):
                    s_v[(1 + j) * n + i, c] = w0_v[c, j]
        for i in range((1 + d) * n, rows):
            for c in range(t):
                s_v[i, c] = 0.0

    caches = []
    cdef double[:, ::1] h_v, z_v, snew_v, tv_v, sv_v, q_v
    cdef double[::1] bk_v, btk_v
    cdef double tvi, svi, qv, acc
    for (wk, bk, wtk, btk) in blocks:
        h = np.empty((rows, t))
        z = np.empty((rows, t))
        h_v = h
        z_v = z
        bk_v = bk
        btk_v = btk
        _gemm_abt(s_v, wk, h_v, 1.0, 0.0)
        with nogil:
            for i in range(n):
                for c in range(t):
                    h_v[i, c] += bk_v[c]
        _gemm_abt(h_v, wtk, z_v, 1.0, 0.0)
        s_new = np.empty((rows, t))
        snew_v = s_new
        tvq = np.empty((3, n, t))
        tv_v = tvq[0]
        sv_v = tvq[1]
        q_v = tvq[2]
        with nogil:
            for i in range(n):
                for c in range(t):
                    z_v[i, c] += btk_v[c] + s_v[i, c]
            for i in range(n, rows):
                for c in range(t):
                    z_v[i, c] += s_v[i, c]
            for i in range(n):
                for c in range(t):
                    tvi = tanh(z_v[i, c])
                    svi = 1.0 - tvi * tvi
                    acc = 0.0
                    for j in range(d):
                        qv = z_v[(1 + j) * n + i, c]
                        acc += qv * qv
                        snew_v[(1 + j) * n + i, c] = svi * qv
                    tv_v[i, c] = tvi
                    sv_v[i, c] = svi
                    q_v[i, c] = acc
                    snew_v[i, c] = tvi
                    snew_v[(1 + d) * n + i, c] = (
                        svi * z_v[(1 + d) * n + i, c]
                        - 2.0 * tvi * svi * acc)
        if need_cache:
            caches.append((s, h, z, tvq))
        s = s_new
        s_v = s

    v = np.empty((n, n_out))
    g = np.empty((n * d, n_out))
    lap = np.empty((n, n_out))
    cdef double[:, ::1] v_v = v, g_v = g, l_v = lap, wm_v = wm
    cdef double[::1] bm_v = bm
    _gemm_abt(s_v[:n], wm_v, v_v, 1.0, 0.0)
    if d > 0:
        _gemm_abt(s_v[n:(1 + d) * n], wm_v, g_v, 1.0, 0.0)
    _gemm_abt(s_v[(1 + d) * n:], wm_v, l_v, 1.0, 0.0)
    with nogil:
        for i in range(n):
            for c in range(n_out):
                v_v[i, c] += bm_v[c]
    g_out = np.ascontiguousarray(
        g.reshape(d, n, n_out).transpose(1, 0, 2))
    cache = (caches, s) if need_cache else None
    return v, g_out, lap, cache


def backward(arch, theta, x, cache, dv, dg, dl):
    cdef int d = arch[0], m1 = arch[1], t = arch[2], n_out = arch[3]
    x = np.ascontiguousarray(x, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    cdef int n = x.shape[0]
    cdef int rows = (2 + d) * n
    w0, b0, blocks, wm, bm = _unpack(arch, theta)
    caches, s_last = cache

    grad = np.zeros(theta.size)
    gw0, gb0, gblocks, gwm, gbm = _unpack(arch, grad)

    dv = np.ascontiguousarray(dv, dtype=np.float64)
    dl = np.ascontiguousarray(dl, dtype=np.float64)
    d_out = np.empty((rows, n_out))
    d_out[:n] = dv
    d_out[n:(1 + d) * n] = np.ascontiguousarray(
        np.asarray(dg, dtype=np.float64).transpose(1, 0, 2)
    ).reshape(d * n, n_out)
    d_out[(1 + d) * n:] = dl

    cdef double[:, ::1] dout_v = d_out
    cdef double[:, ::1] slast_v = s_last
    cdef double[:, ::1] gwm_v = gwm
    cdef double[::1] gbm_v = gbm
    cdef int i, j, c
    _gemm_atb(dout_v, slast_v, gwm_v, 1.0, 0.0)
    with nogil:
        for i in range(n):
            for c in range(n_out):
                gbm_v[c] += dout_v[i, c]

    ds = np.empty((rows, t))
    cdef double[:, ::1] ds_v = ds
    _gemm_ab(dout_v, wm, ds_v, 1.0, 0.0)

    dz = np.empty((rows, t))
    dh = np.empty((rows, t))
    cdef double[:, ::1] dz_v = dz, dh_v = dh
    cdef double[:, ::1] sin_v, h_v, z_v, tv_v, sv_v, q_v
    cdef double[:, ::1] gwk_v, gwtk_v
    cdef double[::1] gbk_v, gbtk_v
    cdef double tvi, svi, qv, zl, term, wsum
    cdef int k
    for k in range(m1 - 1, -1, -1):
        wk, bk, wtk, btk = blocks[k]
        gwk, gbk, gwtk, gbtk = gblocks[k]
        s_in, h, z, tvq = caches[k]
        sin_v = s_in
        h_v = h
        z_v = z
        tv_v = tvq[0]
        sv_v = tvq[1]
        q_v = tvq[2]
        gwk_v = gwk
        gbk_v = gbk
        gwtk_v = gwtk
        gbtk_v = gbtk
        with nogil:
            for i in range(n):
                for c in range(t):
                    tvi = tv_v[i, c]
                    svi = sv_v[i, c]
                    qv = q_v[i, c]
                    zl = z_v[(1 + d) * n + i, c]
                    # value part
                    wsum = 0.0
                    for j in range(d):
                        wsum += (ds_v[(1 + j) * n + i, c]
                                 * z_v[(1 + j) * n + i, c])
                    term = ds_v[i, c] * svi
                    term -= 2.0 * tvi * svi * wsum
                    term += ds_v[(1 + d) * n + i, c] * (
                        -2.0 * tvi * svi * zl
                        - 2.0 * svi * (svi - 2.0 * tvi * tvi) * qv)
                    dz_v[i, c] = term
                    # gradient parts
                    for j in range(d):
                        dz_v[(1 + j) * n + i, c] = (
                            ds_v[(1 + j) * n + i, c] * svi
                            - 4.0 * ds_v[(1 + d) * n + i, c] * tvi * svi
                            * z_v[(1 + j) * n + i, c])
                    # laplacian part
                    dz_v[(1 + d) * n + i, c] = \
                        ds_v[(1 + d) * n + i, c] * svi
            pass
        _gemm_atb(dz_v, h_v, gwtk_v, 1.0, 0.0)
        with nogil:
            for i in range(n):
                for c in range(t):
                    gbtk_v[c] += dz_v[i, c]
        _gemm_ab(dz_v, wtk, dh_v, 1.0, 0.0)
        _gemm_atb(dh_v, sin_v, gwk_v, 1.0, 0.0)
        with nogil:
            for i in range(n):
                for c in range(t):
                    gbk_v[c] += dh_v[i, c]
        # ds = dz (identity path) + dh @ wk
        ds, dz = dz, ds
        ds_v = ds
        dz_v = dz
        _gemm_ab(dh_v, wk, ds_v, 1.0, 1.0)

    cdef double[:, ::1] gw0_v = gw0
    cdef double[::1] gb0_v = gb0
    cdef double[:, ::1] x_v = x
    _gemm_atb(ds_v[:n], x_v, gw0_v, 1.0, 0.0)
    with nogil:
        for j in range(d):
            for i in range(n):
                for c in range(t):
                    gw0_v[c, j] += ds_v[(1 + j) * n + i, c]
        for i in range(n):
            for c in range(t):
                gb0_v[c] += ds_v[i, c]
    return grad
