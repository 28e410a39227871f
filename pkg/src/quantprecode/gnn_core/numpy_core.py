"""Reference numpy implementation of one message-passing layer.

Data layout: feature-major 2-D arrays.  Edge features are (d, NI*M*K) with
the column index running over instances, then antennas, then users
(C order); antenna features are (d, NI*M) and user features (d, NI*K).
NI counts independent graph instances (channel/symbol pairs), which lets
one gemm serve a whole batch.

One layer computes, in order: the edge update from the previous edge,
antenna and user features; mean messages over each node's neighborhood
(the graph is complete bipartite, so the neighborhood sizes are exactly K
and M); then the antenna and user node updates.  The output layer only
produces antenna features - the user update and its messages are skipped -
and emits raw pre-activations, which the caller softmaxes.

Two numerical modes share the semantics.  The fast mode (training) uses
BLAS products and plain index-order means.  The exact mode (inference)
makes the layer bit-exactly equivariant under antenna/user reordering:
BLAS gemm results depend on a column's position inside the panel tiling,
and float addition is not associative, so exact mode computes the products
with a fixed per-element accumulation order (einsum) and the neighborhood
means in value-sorted order, making every output a function of the summand
multisets alone.
"""

from __future__ import annotations

import numpy as np


def lrelu(pre: np.ndarray, slope: float) -> np.ndarray:
    # sigma(a) = max(0, a) - slope * min(0, a): negative inputs fold up with
    # gain slope (the sign is part of the activation's definition here)
    return np.where(pre > 0, pre, -slope * pre)


def lrelu_grad(mask: np.ndarray, g: np.ndarray, slope: float) -> np.ndarray:
    return np.where(mask, g, -slope * g)


def _mean(x: np.ndarray, axis: int, exact: bool) -> np.ndarray:
    """Neighborhood mean; value-sorted in exact mode so that any permutation
    of the summands gives identical bits."""
    if exact and x.shape[axis] > 2:
        return np.sort(x, axis=axis).mean(axis=axis)
    return x.mean(axis=axis)


def _matmul(a: np.ndarray, b: np.ndarray, exact: bool) -> np.ndarray:
    """Product with a column-position-independent accumulation order in
    exact mode (BLAS panel tails make a @ b position-sensitive)."""
    if exact:
        return np.einsum("ij,jn->in", a, b)
    return a @ b


def layer_forward(mats, e_in, zb_in, zu_in, ni, m, k, slope, is_output, exact=False):
    """Returns (e_out, zb_out, zu_out, cache); zu_out is None for the output layer."""
    w_edge, w_bs, w_ue, w_sb, w_nb, w_su, w_nu = mats
    d = w_edge.shape[0]

    pre_e = _matmul(w_edge, e_in, exact)
    pre_e.reshape(d, ni * m, k)[...] += _matmul(w_bs, zb_in, exact)[:, :, None]
    pre_e.reshape(d, ni, m, k)[...] += _matmul(w_ue, zu_in, exact).reshape(d, ni, 1, k)
    mask_e = pre_e > 0
    e_out = lrelu(pre_e, slope)

    m_bs = _mean(e_out.reshape(d, ni * m, k), 2, exact)
    pre_b = _matmul(w_sb, zb_in, exact)
    pre_b += _matmul(w_nb, m_bs, exact)
    if is_output:
        zb_out = pre_b
        mask_b = None
        m_ue = None
        zu_out = None
        mask_u = None
    else:
        mask_b = pre_b > 0
        zb_out = lrelu(pre_b, slope)
        m_ue = np.ascontiguousarray(_mean(e_out.reshape(d, ni, m, k), 2, exact)).reshape(d, ni * k)
        pre_u = _matmul(w_su, zu_in, exact)
        pre_u += _matmul(w_nu, m_ue, exact)
        mask_u = pre_u > 0
        zu_out = lrelu(pre_u, slope)

    cache = (e_in, zb_in, zu_in, mask_e, mask_b, mask_u, m_bs, m_ue)
    return e_out, zb_out, zu_out, cache


def layer_backward(mats, cache, g_e_out, g_zb_out, g_zu_out, ni, m, k, slope, is_output):
    """Adjoint of layer_forward.

    g_e_out / g_zu_out may be None (no gradient flows in from above, e.g. at
    the output layer).  Returns (weight grads tuple, g_e_in, g_zb_in, g_zu_in).
    """
    w_edge, w_bs, w_ue, w_sb, w_nb, w_su, w_nu = mats
    e_in, zb_in, zu_in, mask_e, mask_b, mask_u, m_bs, m_ue = cache
    d = w_edge.shape[0]
    dtype = e_in.dtype

    g_e = np.zeros((d, ni * m * k), dtype=dtype) if g_e_out is None else g_e_out.copy()

    if is_output or g_zu_out is None:
        g_w_su = None if is_output else np.zeros_like(w_su)
        g_w_nu = None if is_output else np.zeros_like(w_nu)
        g_zu_in = np.zeros_like(zu_in)
    else:
        g_pre_u = lrelu_grad(mask_u, g_zu_out, slope)
        g_w_su = g_pre_u @ zu_in.T
        g_w_nu = g_pre_u @ m_ue.T
        g_zu_in = w_su.T @ g_pre_u
        g_m_ue = w_nu.T @ g_pre_u
        g_e.reshape(d, ni, m, k)[...] += (g_m_ue / m).reshape(d, ni, 1, k)

    g_pre_b = g_zb_out if is_output else lrelu_grad(mask_b, g_zb_out, slope)
    g_w_sb = g_pre_b @ zb_in.T
    g_w_nb = g_pre_b @ m_bs.T
    g_zb_in = w_sb.T @ g_pre_b
    g_m_bs = w_nb.T @ g_pre_b
    g_e.reshape(d, ni * m, k)[...] += (g_m_bs / k)[:, :, None]

    g_pre_e = lrelu_grad(mask_e, g_e, slope)
    g_w_e = g_pre_e @ e_in.T
    g_e_in = w_edge.T @ g_pre_e
    sum_k = g_pre_e.reshape(d, ni * m, k).sum(axis=2)
    g_w_bs = sum_k @ zb_in.T
    g_zb_in += w_bs.T @ sum_k
    sum_m = np.ascontiguousarray(g_pre_e.reshape(d, ni, m, k).sum(axis=2)).reshape(d, ni * k)
    g_w_ue = sum_m @ zu_in.T
    g_zu_in += w_ue.T @ sum_m

    grads = (g_w_e, g_w_bs, g_w_ue, g_w_sb, g_w_nb, g_w_su, g_w_nu)
    return grads, g_e_in, g_zb_in, g_zu_in
