"""Structured tensor primitives: convolutions, normalization, resampling, and
the selective state-space scan. All operate on (B, C, H, W) feature maps
except the scan, which runs on channel-last sequences.
"""

import numpy as np

from ..errors import ShapeError
from . import kernels
from .tensor import Tensor, _accum, _ensure, _result


def _conv_out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def conv2d(x, w, b=None, stride=1, padding=0):
    """2-D convolution (cross-correlation). x (B,Cin,H,W), w (Cout,Cin,k,k)."""
    x, w = _ensure(x), _ensure(w)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.data.shape[1] != w.data.shape[1]:
        raise ShapeError("conv2d", x.data.shape, w.data.shape)
    B, Cin, H, W = x.data.shape
    Cout, _, k, k2 = w.data.shape
    if k != k2:
        raise ShapeError("conv2d", w.data.shape, (Cout, Cin, k, k), detail="square kernels only")
    Ho = _conv_out_size(H, k, stride, padding)
    Wo = _conv_out_size(W, k, stride, padding)
    if Ho < 1 or Wo < 1:
        raise ShapeError("conv2d", x.data.shape, w.data.shape, detail="output would be empty")

    col = np.empty((B, Cin * k * k, Ho * Wo), dtype=x.data.dtype)
    kernels.im2col(x.data, k, stride, padding, col)
    w2 = w.data.reshape(Cout, -1)
    # fold batch into columns so a single BLAS call does all images
    col2 = np.ascontiguousarray(col.transpose(1, 0, 2)).reshape(Cin * k * k, B * Ho * Wo)
    out_data = (w2 @ col2).reshape(Cout, B, Ho, Wo).transpose(1, 0, 2, 3)
    out_data = np.ascontiguousarray(out_data)
    if b is not None:
        b = _ensure(b)
        if b.data.shape != (Cout,):
            raise ShapeError("conv2d", b.data.shape, (Cout,), detail="bias")
        out_data += b.data.reshape(1, Cout, 1, 1)

    prevs = (x, w) if b is None else (x, w, b)

    def _bwd():
        g = out.grad  # (B,Cout,Ho,Wo)
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(Cout, B * Ho * Wo)
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            _accum(w, (g2 @ col2.T).reshape(w.data.shape))
        if x.requires_grad:
            gcol2 = w2.T @ g2  # (Cin*k*k, B*Ho*Wo)
            gcol = np.ascontiguousarray(
                gcol2.reshape(Cin * k * k, B, Ho * Wo).transpose(1, 0, 2)
            )
            gx = np.zeros_like(x.data)
            kernels.col2im(gcol, H, W, k, stride, padding, gx)
            _accum(x, gx)

    out = _result(out_data, "conv2d", prevs, _bwd)
    return out


def depthwise_conv2d(x, w, b=None, padding=None):
    """Per-channel conv, stride 1. x (B,C,H,W), w (C,k,k)."""
    x, w = _ensure(x), _ensure(w)
    if x.data.ndim != 4 or w.data.ndim != 3 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError("depthwise_conv2d", x.data.shape, w.data.shape)
    C, k = w.data.shape[0], w.data.shape[1]
    pad = k // 2 if padding is None else padding
    out_data = np.empty_like(x.data)
    kernels.dwconv2d_fwd(x.data, w.data, pad, out_data)
    if b is not None:
        b = _ensure(b)
        out_data += b.data.reshape(1, C, 1, 1)
    prevs = (x, w) if b is None else (x, w, b)

    def _bwd():
        g = out.grad
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=(0, 2, 3)))
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(w.data)
        kernels.dwconv2d_bwd(x.data, w.data, g, pad, gx, gw)
        if x.requires_grad:
            _accum(x, gx)
        if w.requires_grad:
            _accum(w, gw)

    out = _result(out_data, "depthwise_conv2d", prevs, _bwd)
    return out


def group_norm(x, gamma, beta, groups=1, eps=1e-5):
    """Normalize (B,C,H,W) over each group of channels, then scale/shift."""
    x, gamma, beta = _ensure(x), _ensure(gamma), _ensure(beta)
    B, C, H, W = x.data.shape
    if C % groups:
        raise ShapeError("group_norm", x.data.shape, (groups,), detail="C must divide by groups")
    if gamma.data.shape != (C,) or beta.data.shape != (C,):
        raise ShapeError("group_norm", gamma.data.shape, (C,))
    xg = x.data.reshape(B, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = (xg - mu) * inv
    out_data = xhat.reshape(B, C, H, W) * gamma.data.reshape(1, C, 1, 1) + beta.data.reshape(
        1, C, 1, 1
    )

    def _bwd():
        g = out.grad
        if beta.requires_grad:
            _accum(beta, g.sum(axis=(0, 2, 3)))
        if gamma.requires_grad:
            _accum(gamma, (g * xhat.reshape(B, C, H, W)).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gh = (g * gamma.data.reshape(1, C, 1, 1)).reshape(B, groups, -1)
            m = gh.shape[2]
            dot = (gh * xhat).sum(axis=2, keepdims=True)
            s = gh.sum(axis=2, keepdims=True)
            gx = inv * (gh - s / m - xhat * dot / m)
            _accum(x, gx.reshape(B, C, H, W))

    out = _result(out_data, "group_norm", (x, gamma, beta), _bwd)
    return out


def _bilinear_index(n_in, n_out):
    """Source taps and fractional weights, align_corners=False convention."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    i0 = np.floor(src).astype(np.int64)
    frac = src - i0
    frac[i0 < 0] = 0.0
    i0 = np.clip(i0, 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, frac


def bilinear_upsample(x, factor):
    """Bilinear upsampling of (B,C,H,W) by an integer factor."""
    x = _ensure(x)
    if x.data.ndim != 4:
        raise ShapeError("bilinear_upsample", x.data.shape, ("B", "C", "H", "W"))
    B, C, H, W = x.data.shape
    i0r, i1r, fr = _bilinear_index(H, H * factor)
    i0c, i1c, fc = _bilinear_index(W, W * factor)
    frv = fr.reshape(1, 1, -1, 1).astype(x.data.dtype)
    fcv = fc.reshape(1, 1, 1, -1).astype(x.data.dtype)
    rows = x.data[:, :, i0r, :] * (1 - frv) + x.data[:, :, i1r, :] * frv
    out_data = rows[:, :, :, i0c] * (1 - fcv) + rows[:, :, :, i1c] * fcv
    out_data = np.ascontiguousarray(out_data)

    def _bwd():
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            kernels.bilinear_bwd(
                np.ascontiguousarray(out.grad),
                i0r, i1r, fr.astype(x.data.dtype),
                i0c, i1c, fc.astype(x.data.dtype),
                gx,
            )
            _accum(x, gx)

    out = _result(out_data, "bilinear_upsample", (x,), _bwd)
    return out


def avg_pool(x, stride):
    """Non-overlapping average pooling; H and W must divide by stride."""
    x = _ensure(x)
    B, C, H, W = x.data.shape
    s = stride
    if H % s or W % s:
        raise ShapeError("avg_pool", x.data.shape, (s,), detail="H,W must divide by stride")
    out_data = x.data.reshape(B, C, H // s, s, W // s, s).mean(axis=(3, 5))

    def _bwd():
        if x.requires_grad:
            g = out.grad[:, :, :, None, :, None] / x.data.dtype.type(s * s)
            _accum(x, np.broadcast_to(g, (B, C, H // s, s, W // s, s)).reshape(B, C, H, W).copy())

    out = _result(np.ascontiguousarray(out_data), "avg_pool", (x,), _bwd)
    return out


def selective_scan(u, dt, A, Bm, Cm, Dv):
    """Input-dependent linear state-space recurrence over sequences.

    Zero-order-hold discretization: the state transition is exp(dt*A) and the
    input injection dt*B, giving per step t (channel d, state size N)

        h_t = exp(dt_t A_d) h_{t-1} + dt_t B_t u_t,   y_t = C_t . h_t + D_d u_t.

    Shapes: u, dt (B,L,D); A (D,N); Bm, Cm (B,L,N); Dv (D,). Returns (B,L,D).
    The backward pass recomputes the state trajectory instead of keeping it.
    """
    u, dt, A, Bm, Cm, Dv = (_ensure(t) for t in (u, dt, A, Bm, Cm, Dv))
    if u.data.ndim != 3 or dt.data.shape != u.data.shape:
        raise ShapeError("selective_scan", u.data.shape, dt.data.shape)
    B, L, D = u.data.shape
    N = A.data.shape[1]
    if A.data.shape != (D, N) or Bm.data.shape != (B, L, N) or Cm.data.shape != (B, L, N):
        raise ShapeError("selective_scan", A.data.shape, Bm.data.shape, detail="A (D,N), B/C (B,L,N)")
    if Dv.data.shape != (D,):
        raise ShapeError("selective_scan", Dv.data.shape, (D,))

    def _decay():
        z = np.einsum("bld,dn->bldn", dt.data, A.data)
        np.exp(z, out=z)
        return z

    dA = _decay()
    out_data = np.empty_like(u.data)
    kernels.scan_fwd(u.data, dt.data, dA, Bm.data, Cm.data, Dv.data, out_data)

    def _bwd():
        dA_b = _decay()
        h = np.empty((B, L, D, N), dtype=u.data.dtype)
        kernels.scan_fill_h(u.data, dt.data, dA_b, Bm.data, h)
        gu = np.empty_like(u.data)
        gdt = np.empty_like(dt.data)
        gA = np.zeros_like(A.data)
        gB = np.zeros_like(Bm.data)
        gC = np.zeros_like(Cm.data)
        gD = np.zeros_like(Dv.data)
        kernels.scan_bwd(
            u.data, dt.data, dA_b, A.data, Bm.data, Cm.data, Dv.data, h,
            np.ascontiguousarray(out.grad), gu, gdt, gA, gB, gC, gD,
        )
        if u.requires_grad:
            _accum(u, gu)
        if dt.requires_grad:
            _accum(dt, gdt)
        if A.requires_grad:
            _accum(A, gA)
        if Bm.requires_grad:
            _accum(Bm, gB)
        if Cm.requires_grad:
            _accum(Cm, gC)
        if Dv.requires_grad:
            _accum(Dv, gD)

    out = _result(out_data, "selective_scan", (u, dt, A, Bm, Cm, Dv), _bwd)
    return out
