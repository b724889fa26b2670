"""Numba kernels backing the hot tensor primitives.

Everything here is deliberately single-threaded: results must be
bit-reproducible run to run, and the accumulation order inside each kernel is
fixed. Layouts are chosen so the innermost loops stream contiguously.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def im2col(x, k, stride, pad, col):
    """Unfold (B,C,H,W) into col (B, C*k*k, Ho*Wo) with zero padding."""
    B, C, H, W = x.shape
    Ho = (H + 2 * pad - k) // stride + 1
    Wo = (W + 2 * pad - k) // stride + 1
    for b in range(B):
        for c in range(C):
            for ki in range(k):
                for kj in range(k):
                    row = (c * k + ki) * k + kj
                    for i in range(Ho):
                        ii = i * stride + ki - pad
                        base = i * Wo
                        if ii < 0 or ii >= H:
                            for j in range(Wo):
                                col[b, row, base + j] = 0.0
                        else:
                            for j in range(Wo):
                                jj = j * stride + kj - pad
                                if 0 <= jj < W:
                                    col[b, row, base + j] = x[b, c, ii, jj]
                                else:
                                    col[b, row, base + j] = 0.0


@njit(cache=True)
def col2im(gcol, H, W, k, stride, pad, gx):
    """Scatter-add transpose of im2col; gx must be zero-initialized."""
    B = gcol.shape[0]
    C = gx.shape[1]
    Ho = (H + 2 * pad - k) // stride + 1
    Wo = (W + 2 * pad - k) // stride + 1
    for b in range(B):
        for c in range(C):
            for ki in range(k):
                for kj in range(k):
                    row = (c * k + ki) * k + kj
                    for i in range(Ho):
                        ii = i * stride + ki - pad
                        if ii < 0 or ii >= H:
                            continue
                        base = i * Wo
                        for j in range(Wo):
                            jj = j * stride + kj - pad
                            if 0 <= jj < W:
                                gx[b, c, ii, jj] += gcol[b, row, base + j]


@njit(cache=True, fastmath=True)
def dwconv2d_fwd(x, w, pad, out):
    """Depthwise conv, stride 1. x (B,C,H,W), w (C,k,k), out (B,C,H,W)."""
    B, C, H, W = x.shape
    k = w.shape[1]
    for b in range(B):
        for c in range(C):
            for i in range(H):
                for j in range(W):
                    acc = x.dtype.type(0.0)
                    for ki in range(k):
                        ii = i + ki - pad
                        if ii < 0 or ii >= H:
                            continue
                        for kj in range(k):
                            jj = j + kj - pad
                            if 0 <= jj < W:
                                acc += w[c, ki, kj] * x[b, c, ii, jj]
                    out[b, c, i, j] = acc


@njit(cache=True, fastmath=True)
def dwconv2d_bwd(x, w, g, pad, gx, gw):
    """Backward of dwconv2d_fwd; gx and gw must be zero-initialized."""
    B, C, H, W = x.shape
    k = w.shape[1]
    for b in range(B):
        for c in range(C):
            for i in range(H):
                for j in range(W):
                    go = g[b, c, i, j]
                    for ki in range(k):
                        ii = i + ki - pad
                        if ii < 0 or ii >= H:
                            continue
                        for kj in range(k):
                            jj = j + kj - pad
                            if 0 <= jj < W:
                                gx[b, c, ii, jj] += w[c, ki, kj] * go
                                gw[c, ki, kj] += x[b, c, ii, jj] * go


@njit(cache=True, fastmath=True)
def scan_fwd(u, dt, dA, Bm, Cm, Dv, y):
    """Selective-scan forward over a batch of sequences.

    Recurrence per batch b, channel d (state size N):
        h_t = dA_t * h_{t-1} + (dt_t * u_t) * B_t
        y_t = sum_n C_{t,n} h_{t,n} + D_d u_t

    Layouts: u, dt, y (B,L,D); dA (B,L,D,N); Bm, Cm (B,L,N); Dv (D,).
    The running state for all channels stays cache-resident.
    """
    B, L, D = u.shape
    N = dA.shape[3]
    for b in range(B):
        h = np.zeros((D, N), dtype=u.dtype)
        for t in range(L):
            for d in range(D):
                x = u[b, t, d]
                dbx = dt[b, t, d] * x
                acc = u.dtype.type(0.0)
                for n in range(N):
                    hv = dA[b, t, d, n] * h[d, n] + dbx * Bm[b, t, n]
                    h[d, n] = hv
                    acc += Cm[b, t, n] * hv
                y[b, t, d] = acc + Dv[d] * x


@njit(cache=True, fastmath=True)
def scan_fill_h(u, dt, dA, Bm, h):
    """Recompute the full state trajectory h (B,L,D,N) for the backward pass."""
    B, L, D = u.shape
    N = dA.shape[3]
    for b in range(B):
        hs = np.zeros((D, N), dtype=u.dtype)
        for t in range(L):
            for d in range(D):
                dbx = dt[b, t, d] * u[b, t, d]
                for n in range(N):
                    hv = dA[b, t, d, n] * hs[d, n] + dbx * Bm[b, t, n]
                    hs[d, n] = hv
                    h[b, t, d, n] = hv


@njit(cache=True, fastmath=True)
def scan_bwd(u, dt, dA, A, Bm, Cm, Dv, h, gy, gu, gdt, gA, gB, gC, gD):
    """Reverse sweep of scan_fwd.

    lam_t = C_t * gy_t + dA_{t+1} * lam_{t+1} is carried backward; gB/gC/gA/gD
    accumulate in a fixed order (b asc, t desc, d asc, n asc). Output arrays
    except gu/gdt must be zero-initialized.
    """
    B, L, D = u.shape
    N = dA.shape[3]
    for b in range(B):
        carry = np.zeros((D, N), dtype=u.dtype)
        for t in range(L - 1, -1, -1):
            for d in range(D):
                g = gy[b, t, d]
                x = u[b, t, d]
                delta = dt[b, t, d]
                gD[d] += g * x
                gux = Dv[d] * g
                gdel = u.dtype.type(0.0)
                for n in range(N):
                    lv = carry[d, n] + Cm[b, t, n] * g
                    hprev = h[b, t - 1, d, n] if t > 0 else u.dtype.type(0.0)
                    da = dA[b, t, d, n]
                    gda = lv * hprev
                    gA[d, n] += gda * da * delta
                    gdel += gda * da * A[d, n]
                    bn = Bm[b, t, n]
                    gB[b, t, n] += lv * delta * x
                    gC[b, t, n] += g * h[b, t, d, n]
                    gdel += lv * bn * x
                    gux += lv * delta * bn
                    carry[d, n] = lv * da
                gu[b, t, d] = gux
                gdt[b, t, d] = gdel


@njit(cache=True, fastmath=True)
def bilinear_bwd(g, i0r, i1r, fr, i0c, i1c, fc, gx):
    """Scatter-add backward of separable bilinear upsampling.

    g (B,C,Ho,Wo) flows to gx (B,C,H,W) through the four corner taps.
    gx must be zero-initialized.
    """
    B, C, Ho, Wo = g.shape
    for b in range(B):
        for c in range(C):
            for i in range(Ho):
                r0 = i0r[i]
                r1 = i1r[i]
                wr1 = fr[i]
                wr0 = 1.0 - wr1
                for j in range(Wo):
                    go = g[b, c, i, j]
                    wc1 = fc[j]
                    wc0 = 1.0 - wc1
                    gx[b, c, r0, i0c[j]] += wr0 * wc0 * go
                    gx[b, c, r0, i1c[j]] += wr0 * wc1 * go
                    gx[b, c, r1, i0c[j]] += wr1 * wc0 * go
                    gx[b, c, r1, i1c[j]] += wr1 * wc1 * go
