# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Fused C implementation of the message-passing layer primitives.

Same contract as numpy_core: feature-major 2-D arrays, float32 or float64.
Matrix products call BLAS directly; the broadcast-add, leaky-relu,
neighborhood means and their adjoints run as single fused passes instead of
numpy's one-pass-per-op, which is where the pure-python backend spends a
third of its time.
"""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm, sgemm

cnp.import_array()

ctypedef fused real:
    float
    double


# --- row-major BLAS wrappers --------------------------------------------
# A row-major (p, q) buffer read column-major with leading dimension q is
# the (q, p) matrix A^T; the wrappers exploit that to stay row-major.


cdef void _gemm_nn(real[:, ::1] c, real[:, ::1] a, real[:, ::1] b, real alpha, real beta) noexcept nogil:
    # c (p, n) = alpha * a (p, q) @ b (q, n) + beta * c
    cdef int p = <int> a.shape[0], q = <int> a.shape[1], n = <int> b.shape[1]
    cdef char t = b'N'
    if real is float:
        sgemm(&t, &t, &n, &p, &q, &alpha, &b[0, 0], &n, &a[0, 0], &q, &beta, &c[0, 0], &n)
    else:
        dgemm(&t, &t, &n, &p, &q, &alpha, &b[0, 0], &n, &a[0, 0], &q, &beta, &c[0, 0], &n)


cdef void _gemm_tn(real[:, ::1] c, real[:, ::1] a, real[:, ::1] b, real alpha, real beta) noexcept nogil:
    # c (q, n) = alpha * a(p, q)^T @ b (p, n) + beta * c
    cdef int p = <int> a.shape[0], q = <int> a.shape[1], n = <int> b.shape[1]
    cdef char tn = b'N', tt = b'T'
    if real is float:
        sgemm(&tn, &tt, &n, &q, &p, &alpha, &b[0, 0], &n, &a[0, 0], &q, &beta, &c[0, 0], &n)
    else:
        dgemm(&tn, &tt, &n, &q, &p, &alpha, &b[0, 0], &n, &a[0, 0], &q, &beta, &c[0, 0], &n)


cdef void _gemm_nt(real[:, ::1] c, real[:, ::1] a, real[:, ::1] b, real alpha, real beta) noexcept nogil:
    # c (p, r) = alpha * a (p, n) @ b (r, n)^T + beta * c
    cdef int p = <int> a.shape[0], n = <int> a.shape[1], r = <int> b.shape[0]
    cdef char tn = b'N', tt = b'T'
    if real is float:
        sgemm(&tt, &tn, &r, &p, &n, &alpha, &b[0, 0], &n, &a[0, 0], &n, &beta, &c[0, 0], &r)
    else:
        dgemm(&tt, &tn, &r, &p, &n, &alpha, &b[0, 0], &n, &a[0, 0], &n, &beta, &c[0, 0], &r)


cdef void _gemm_fixed(real[:, ::1] c, real[:, ::1] a, real[:, ::1] b) noexcept nogil:
    # c (p, n) = a (p, q) @ b (q, n) with a fixed linear accumulation order
    # per output element, so each column's bits do not depend on its
    # position (BLAS panel tails are position-sensitive).  Tiled over
    # columns to keep the streamed b tile in cache.
    cdef Py_ssize_t p = a.shape[0], q = a.shape[1], n = b.shape[1]
    cdef Py_ssize_t tile = 256
    cdef Py_ssize_t t0, t1, i, j, t
    cdef real aij
    t0 = 0
    while t0 < n:
        t1 = t0 + tile
        if t1 > n:
            t1 = n
        for i in range(p):
            for t in range(t0, t1):
                c[i, t] = 0.0
            for j in range(q):
                aij = a[i, j]
                for t in range(t0, t1):
                    c[i, t] += aij * b[j, t]
        t0 = t1


cdef void _edge_bias_lrelu(
    real[:, ::1] pre_e, real[:, ::1] wb_zb, real[:, ::1] wu_zu,
    cnp.uint8_t[:, ::1] mask_e, int ni, int m, int k, real slope,
) noexcept nogil:
    # exact-mode edge pass: broadcast-add plus activation, no aggregation
    cdef Py_ssize_t d = pre_e.shape[0]
    cdef Py_ssize_t r, i, mm, kk, col
    cdef real v
    for r in range(d):
        col = 0
        for i in range(ni):
            for mm in range(m):
                for kk in range(k):
                    v = pre_e[r, col] + wb_zb[r, i * m + mm] + wu_zu[r, i * k + kk]
                    if v > 0.0:
                        mask_e[r, col] = 1
                    else:
                        mask_e[r, col] = 0
                        v = -v * slope
                    pre_e[r, col] = v
                    col += 1


cdef void _sorted_group_mean(
    real[:, ::1] src, real[:, ::1] dst, real[:] scratch,
    Py_ssize_t n_groups, Py_ssize_t size, Py_ssize_t outer_stride, Py_ssize_t inner_stride,
    Py_ssize_t per_block, Py_ssize_t block_stride,
) noexcept nogil:
    # dst[r, g] = mean of src[r, base(g) + inner_stride * 0..size-1], summed
    # in ascending value order so the result only depends on the multiset.
    # Group g sits at block (g // per_block) with offset (g % per_block):
    # base(g) = block * block_stride + offset * outer_stride.
    cdef Py_ssize_t d = src.shape[0]
    cdef Py_ssize_t r, g, e, base, pos
    cdef real v, acc
    cdef real inv = <real> (1.0 / size)
    for r in range(d):
        for g in range(n_groups):
            base = (g // per_block) * block_stride + (g % per_block) * outer_stride
            for e in range(size):
                v = src[r, base + e * inner_stride]
                pos = e
                while pos > 0 and scratch[pos - 1] > v:
                    scratch[pos] = scratch[pos - 1]
                    pos -= 1
                scratch[pos] = v
            acc = 0.0
            for e in range(size):
                acc += scratch[e]
            dst[r, g] = acc * inv


# --- fused elementwise passes ---------------------------------------------


cdef void _edge_fuse_fwd(
    real[:, ::1] pre_e,          # in: w_edge @ e_in; out: lrelu(edge pre-activation)
    real[:, ::1] wb_zb,          # (d, ni*m)
    real[:, ::1] wu_zu,          # (d, ni*k)
    cnp.uint8_t[:, ::1] mask_e,
    real[:, ::1] m_bs,           # out (d, ni*m)
    real[:, ::1] m_ue,           # out (d, ni*k); untouched when skip_ue
    int ni, int m, int k, real slope, bint skip_ue,
) noexcept nogil:
    cdef Py_ssize_t d = pre_e.shape[0]
    cdef Py_ssize_t r, i, mm, kk, col, bcol, ucol
    cdef real v, acc
    cdef real inv_k = <real> (1.0 / k), inv_m = <real> (1.0 / m)
    for r in range(d):
        if not skip_ue:
            for ucol in range(ni * k):
                m_ue[r, ucol] = 0.0
        col = 0
        for i in range(ni):
            for mm in range(m):
                bcol = i * m + mm
                acc = 0.0
                for kk in range(k):
                    v = pre_e[r, col] + wb_zb[r, bcol] + wu_zu[r, i * k + kk]
                    if v > 0.0:
                        mask_e[r, col] = 1
                    else:
                        mask_e[r, col] = 0
                        v = -v * slope
                    pre_e[r, col] = v
                    acc += v
                    if not skip_ue:
                        m_ue[r, i * k + kk] += v
                    col += 1
                m_bs[r, bcol] = acc * inv_k
        if not skip_ue:
            for ucol in range(ni * k):
                m_ue[r, ucol] *= inv_m


cdef void _add_into(real[:, ::1] dst, real[:, ::1] src) noexcept nogil:
    cdef Py_ssize_t r, c
    for r in range(dst.shape[0]):
        for c in range(dst.shape[1]):
            dst[r, c] += src[r, c]


cdef void _lrelu_mask(real[:, ::1] pre, cnp.uint8_t[:, ::1] mask, real slope) noexcept nogil:
    cdef Py_ssize_t r, c
    cdef real v
    for r in range(pre.shape[0]):
        for c in range(pre.shape[1]):
            v = pre[r, c]
            if v > 0.0:
                mask[r, c] = 1
            else:
                mask[r, c] = 0
                pre[r, c] = -v * slope


cdef void _lrelu_grad(cnp.uint8_t[:, ::1] mask, real[:, ::1] g, real[:, ::1] out, real slope) noexcept nogil:
    cdef Py_ssize_t r, c
    for r in range(g.shape[0]):
        for c in range(g.shape[1]):
            out[r, c] = g[r, c] if mask[r, c] else -g[r, c] * slope


cdef void _edge_fuse_bwd(
    real[:, ::1] g_e,            # in: incoming edge grad; out: grad at edge pre-activation
    real[:, ::1] g_m_bs,         # (d, ni*m)
    real[:, ::1] g_m_ue,         # (d, ni*k); untouched when skip_ue
    cnp.uint8_t[:, ::1] mask_e,
    real[:, ::1] sum_k,          # out (d, ni*m)
    real[:, ::1] sum_m,          # out (d, ni*k)
    int ni, int m, int k, real slope, bint skip_ue,
) noexcept nogil:
    cdef Py_ssize_t d = g_e.shape[0]
    cdef Py_ssize_t r, i, mm, kk, col, bcol, ucol
    cdef real v, acc
    cdef real inv_k = <real> (1.0 / k), inv_m = <real> (1.0 / m)
    for r in range(d):
        for ucol in range(ni * k):
            sum_m[r, ucol] = 0.0
        col = 0
        for i in range(ni):
            for mm in range(m):
                bcol = i * m + mm
                acc = 0.0
                for kk in range(k):
                    ucol = i * k + kk
                    v = g_e[r, col] + g_m_bs[r, bcol] * inv_k
                    if not skip_ue:
                        v += g_m_ue[r, ucol] * inv_m
                    if not mask_e[r, col]:
                        v = -v * slope
                    g_e[r, col] = v
                    acc += v
                    sum_m[r, ucol] += v
                    col += 1
                sum_k[r, bcol] = acc


# --- forward ----------------------------------------------------------------


def _forward_compute(
    real[:, ::1] w_edge, real[:, ::1] w_bs, real[:, ::1] w_ue,
    real[:, ::1] w_sb, real[:, ::1] w_nb, real[:, ::1] w_su, real[:, ::1] w_nu,
    real[:, ::1] e_in, real[:, ::1] zb_in, real[:, ::1] zu_in,
    real[:, ::1] pre_e, real[:, ::1] wb_zb, real[:, ::1] wu_zu,
    cnp.uint8_t[:, ::1] mask_e, real[:, ::1] m_bs, real[:, ::1] m_ue,
    real[:, ::1] pre_b, cnp.uint8_t[:, ::1] mask_b,
    real[:, ::1] pre_u, cnp.uint8_t[:, ::1] mask_u,
    real[:] scratch, real[:, ::1] tmp_b, real[:, ::1] tmp_u,
    int ni, int m, int k, real slope, bint is_output, bint exact,
):
    with nogil:
        if exact:
            _gemm_fixed(pre_e, w_edge, e_in)
            _gemm_fixed(wb_zb, w_bs, zb_in)
            _gemm_fixed(wu_zu, w_ue, zu_in)
            _edge_bias_lrelu(pre_e, wb_zb, wu_zu, mask_e, ni, m, k, slope)
            _sorted_group_mean(pre_e, m_bs, scratch, ni * m, k, k, 1, ni * m, 0)
            if not is_output:
                _sorted_group_mean(pre_e, m_ue, scratch, ni * k, m, 1, k, k, m * k)
            _gemm_fixed(pre_b, w_sb, zb_in)
            _gemm_fixed(tmp_b, w_nb, m_bs)
            _add_into(pre_b, tmp_b)
            if not is_output:
                _lrelu_mask(pre_b, mask_b, slope)
                _gemm_fixed(pre_u, w_su, zu_in)
                _gemm_fixed(tmp_u, w_nu, m_ue)
                _add_into(pre_u, tmp_u)
                _lrelu_mask(pre_u, mask_u, slope)
        else:
            _gemm_nn(pre_e, w_edge, e_in, <real> 1.0, <real> 0.0)
            _gemm_nn(wb_zb, w_bs, zb_in, <real> 1.0, <real> 0.0)
            _gemm_nn(wu_zu, w_ue, zu_in, <real> 1.0, <real> 0.0)
            _edge_fuse_fwd(pre_e, wb_zb, wu_zu, mask_e, m_bs, m_ue, ni, m, k, slope, is_output)
            _gemm_nn(pre_b, w_sb, zb_in, <real> 1.0, <real> 0.0)
            _gemm_nn(pre_b, w_nb, m_bs, <real> 1.0, <real> 1.0)
            if not is_output:
                _lrelu_mask(pre_b, mask_b, slope)
                _gemm_nn(pre_u, w_su, zu_in, <real> 1.0, <real> 0.0)
                _gemm_nn(pre_u, w_nu, m_ue, <real> 1.0, <real> 1.0)
                _lrelu_mask(pre_u, mask_u, slope)


def layer_forward(mats, e_in, zb_in, zu_in, ni, m, k, slope, is_output, exact=False):
    """Drop-in replacement for numpy_core.layer_forward."""
    w_edge, w_bs, w_ue, w_sb, w_nb, w_su, w_nu = mats
    dtype = e_in.dtype
    d = w_edge.shape[0]
    is_output = bool(is_output)
    exact = bool(exact)

    e_out = np.empty((d, ni * m * k), dtype=dtype)
    wb_zb = np.empty((d, ni * m), dtype=dtype)
    wu_zu = np.empty((d, ni * k), dtype=dtype)
    mask_e = np.empty((d, ni * m * k), dtype=np.uint8)
    m_bs = np.empty((d, ni * m), dtype=dtype)
    zb_out = np.empty((d, ni * m), dtype=dtype)
    if is_output:
        m_ue = None
        zu_out = None
        mask_b = None
        mask_u = None
        m_ue_buf = wb_zb      # never read or written
        zu_buf = wb_zb
        mask_b_buf = mask_e   # never written
        mask_u_buf = mask_e
    else:
        m_ue = np.empty((d, ni * k), dtype=dtype)
        zu_out = np.empty((d, ni * k), dtype=dtype)
        mask_b = np.empty((d, ni * m), dtype=np.uint8)
        mask_u = np.empty((d, ni * k), dtype=np.uint8)
        m_ue_buf = m_ue
        zu_buf = zu_out
        mask_b_buf = mask_b
        mask_u_buf = mask_u
    if exact:
        scratch = np.empty(max(m, k), dtype=dtype)
        tmp_b = np.empty((d, ni * m), dtype=dtype)
        tmp_u = wb_zb if is_output else np.empty((d, ni * k), dtype=dtype)
    else:
        scratch = np.empty(1, dtype=dtype)
        tmp_b = wb_zb
        tmp_u = wb_zb

    _forward_compute(
        w_edge, w_bs, w_ue, w_sb, w_nb,
        w_edge if w_su is None else w_su, w_edge if w_nu is None else w_nu,
        e_in, zb_in, zu_in,
        e_out, wb_zb, wu_zu, mask_e, m_bs, m_ue_buf,
        zb_out, mask_b_buf, zu_buf, mask_u_buf,
        scratch, tmp_b, tmp_u,
        int(ni), int(m), int(k), dtype.type(slope), is_output, exact,
    )
    cache = (e_in, zb_in, zu_in, mask_e, mask_b, mask_u, m_bs, m_ue)
    return e_out, zb_out, zu_out, cache


# --- backward ---------------------------------------------------------------


def _backward_compute(
    real[:, ::1] w_edge, real[:, ::1] w_bs, real[:, ::1] w_ue,
    real[:, ::1] w_sb, real[:, ::1] w_nb, real[:, ::1] w_su, real[:, ::1] w_nu,
    real[:, ::1] e_in, real[:, ::1] zb_in, real[:, ::1] zu_in,
    cnp.uint8_t[:, ::1] mask_e, cnp.uint8_t[:, ::1] mask_b, cnp.uint8_t[:, ::1] mask_u,
    real[:, ::1] m_bs, real[:, ::1] m_ue,
    real[:, ::1] g_e, real[:, ::1] g_zb_out, real[:, ::1] g_zu_out,
    real[:, ::1] g_pre_b, real[:, ::1] g_pre_u, real[:, ::1] g_m_bs, real[:, ::1] g_m_ue,
    real[:, ::1] sum_k, real[:, ::1] sum_m,
    real[:, ::1] g_w_e, real[:, ::1] g_w_bs, real[:, ::1] g_w_ue,
    real[:, ::1] g_w_sb, real[:, ::1] g_w_nb, real[:, ::1] g_w_su, real[:, ::1] g_w_nu,
    real[:, ::1] g_e_in, real[:, ::1] g_zb_in, real[:, ::1] g_zu_in,
    int ni, int m, int k, real slope, bint is_output, bint has_gzu,
):
    with nogil:
        if not is_output and has_gzu:
            _lrelu_grad(mask_u, g_zu_out, g_pre_u, slope)
            _gemm_nt(g_w_su, g_pre_u, zu_in, <real> 1.0, <real> 0.0)
            _gemm_nt(g_w_nu, g_pre_u, m_ue, <real> 1.0, <real> 0.0)
            _gemm_tn(g_zu_in, w_su, g_pre_u, <real> 1.0, <real> 0.0)
            _gemm_tn(g_m_ue, w_nu, g_pre_u, <real> 1.0, <real> 0.0)

        if not is_output:
            # at the output the pre-activations are raw, g_pre_b aliases g_zb_out
            _lrelu_grad(mask_b, g_zb_out, g_pre_b, slope)
        _gemm_nt(g_w_sb, g_pre_b, zb_in, <real> 1.0, <real> 0.0)
        _gemm_nt(g_w_nb, g_pre_b, m_bs, <real> 1.0, <real> 0.0)
        _gemm_tn(g_zb_in, w_sb, g_pre_b, <real> 1.0, <real> 0.0)
        _gemm_tn(g_m_bs, w_nb, g_pre_b, <real> 1.0, <real> 0.0)

        _edge_fuse_bwd(
            g_e, g_m_bs, g_m_ue, mask_e, sum_k, sum_m,
            ni, m, k, slope, is_output or not has_gzu,
        )
        _gemm_nt(g_w_e, g_e, e_in, <real> 1.0, <real> 0.0)
        _gemm_tn(g_e_in, w_edge, g_e, <real> 1.0, <real> 0.0)
        _gemm_nt(g_w_bs, sum_k, zb_in, <real> 1.0, <real> 0.0)
        _gemm_tn(g_zb_in, w_bs, sum_k, <real> 1.0, <real> 1.0)
        _gemm_nt(g_w_ue, sum_m, zu_in, <real> 1.0, <real> 0.0)
        if is_output or not has_gzu:
            _gemm_tn(g_zu_in, w_ue, sum_m, <real> 1.0, <real> 0.0)
        else:
            _gemm_tn(g_zu_in, w_ue, sum_m, <real> 1.0, <real> 1.0)


def layer_backward(mats, cache, g_e_out, g_zb_out, g_zu_out, ni, m, k, slope, is_output):
    """Drop-in replacement for numpy_core.layer_backward."""
    w_edge, w_bs, w_ue, w_sb, w_nb, w_su, w_nu = mats
    e_in, zb_in, zu_in, mask_e, mask_b, mask_u, m_bs, m_ue = cache
    dtype = e_in.dtype
    d = w_edge.shape[0]
    d_prev = e_in.shape[0]
    is_output = bool(is_output)
    has_gzu = (not is_output) and (g_zu_out is not None)

    g_e = g_e_out.copy() if g_e_out is not None else np.zeros((d, ni * m * k), dtype=dtype)
    g_m_bs = np.empty((d, ni * m), dtype=dtype)
    sum_k = np.empty((d, ni * m), dtype=dtype)
    sum_m = np.empty((d, ni * k), dtype=dtype)
    g_w_e = np.empty_like(w_edge)
    g_w_bs = np.empty_like(w_bs)
    g_w_ue = np.empty_like(w_ue)
    g_w_sb = np.empty_like(w_sb)
    g_w_nb = np.empty_like(w_nb)
    g_e_in = np.empty((d_prev, ni * m * k), dtype=dtype)
    g_zb_in = np.empty((d_prev, ni * m), dtype=dtype)
    g_zu_in = np.empty((d_prev, ni * k), dtype=dtype)

    if has_gzu:
        g_pre_u = np.empty((d, ni * k), dtype=dtype)
        g_m_ue = np.empty((d, ni * k), dtype=dtype)
        g_w_su = np.empty_like(w_su)
        g_w_nu = np.empty_like(w_nu)
        mask_u_buf = mask_u
        m_ue_buf = m_ue
        gzu_buf = g_zu_out
    else:
        g_pre_u = None
        g_m_ue = None
        g_w_su = None
        g_w_nu = None
        mask_u_buf = mask_e     # dummies, never touched
        m_ue_buf = g_m_bs
        gzu_buf = g_m_bs

    if is_output:
        g_pre_b = g_zb_out
        mask_b_buf = mask_e
    else:
        g_pre_b = np.empty((d, ni * m), dtype=dtype)
        mask_b_buf = mask_b

    _backward_compute(
        w_edge, w_bs, w_ue, w_sb, w_nb,
        w_edge if w_su is None else w_su, w_edge if w_nu is None else w_nu,
        e_in, zb_in, zu_in,
        mask_e, mask_b_buf, mask_u_buf, m_bs, m_ue_buf,
        g_e, g_zb_out, gzu_buf,
        g_pre_b, g_m_bs if g_pre_u is None else g_pre_u, g_m_bs,
        g_m_bs if g_m_ue is None else g_m_ue,
        sum_k, sum_m,
        g_w_e, g_w_bs, g_w_ue, g_w_sb, g_w_nb,
        g_w_e if g_w_su is None else g_w_su, g_w_e if g_w_nu is None else g_w_nu,
        g_e_in, g_zb_in, g_zu_in,
        int(ni), int(m), int(k), dtype.type(slope), is_output, has_gzu,
    )

    grads = (g_w_e, g_w_bs, g_w_ue, g_w_sb, g_w_nb, g_w_su, g_w_nu)
    return grads, g_e_in, g_zb_in, g_zu_in
