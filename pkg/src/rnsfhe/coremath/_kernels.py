"""Optional numba-compiled butterfly kernels.

The numpy stage-at-a-time transforms in ``ntt`` are exact but allocate many
temporaries; these row-at-a-time loops compute the same bits with no
intermediate arrays.  Import of this module fails cleanly when numba is
unavailable and callers fall back to the numpy path.
"""

import numpy as np
from numba import config, njit, prange

# portable threading layer; avoids hard TBB/OpenMP requirements
config.THREADING_LAYER = "workqueue"

_U32M = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


@njit(cache=True, nogil=True)
def _shoup_mul(x, w, w_shoup, q):
    x1 = x >> _S32
    x0 = x & _U32M
    y1 = w_shoup >> _S32
    y0 = w_shoup & _U32M
    mid1 = x1 * y0
    mid2 = x0 * y1
    carry = (((x0 * y0) >> _S32) + (mid1 & _U32M) + (mid2 & _U32M)) >> _S32
    hi = x1 * y1 + (mid1 >> _S32) + (mid2 >> _S32) + carry
    v = x * w - hi * q
    if v >= q:
        v -= q
    return v


@njit(cache=True, nogil=True)
def _ntt_row(a, psi, psi_sh, q):
    n = a.shape[0]
    t = n
    m = 1
    while m < n:
        t >>= 1
        for i in range(m):
            s = psi[m + i]
            ssh = psi_sh[m + i]
            j1 = 2 * i * t
            for j in range(j1, j1 + t):
                v = _shoup_mul(a[j + t], s, ssh, q)
                u = a[j]
                hi = u + v
                if hi >= q:
                    hi -= q
                lo = u + q - v
                if lo >= q:
                    lo -= q
                a[j] = hi
                a[j + t] = lo
        m <<= 1


@njit(cache=True, nogil=True)
def _intt_row(a, ipsi, ipsi_sh, n_inv, n_inv_sh, q):
    n = a.shape[0]
    t = 1
    m = n
    while m > 1:
        h = m >> 1
        for i in range(h):
            s = ipsi[h + i]
            ssh = ipsi_sh[h + i]
            j1 = 2 * i * t
            for j in range(j1, j1 + t):
                u = a[j]
                v = a[j + t]
                hi = u + v
                if hi >= q:
                    hi -= q
                d = u + q - v
                if d >= q:
                    d -= q
                a[j] = hi
                a[j + t] = _shoup_mul(d, s, ssh, q)
        t <<= 1
        m = h
    for j in range(n):
        a[j] = _shoup_mul(a[j], n_inv, n_inv_sh, q)


@njit(cache=True, parallel=True, nogil=True)
def ntt_batch(a, psi, psi_sh, q, mod_idx):
    for r in prange(a.shape[0]):
        mi = mod_idx[r]
        _ntt_row(a[r], psi[mi], psi_sh[mi], q[mi])


@njit(cache=True, parallel=True, nogil=True)
def intt_batch(a, ipsi, ipsi_sh, n_inv, n_inv_sh, q, mod_idx):
    for r in prange(a.shape[0]):
        mi = mod_idx[r]
        _intt_row(a[r], ipsi[mi], ipsi_sh[mi], n_inv[mi], n_inv_sh[mi], q[mi])


@njit(cache=True, nogil=True)
def _mont_mul(x, y, q, qinv):
    x1 = x >> _S32
    x0 = x & _U32M
    y1 = y >> _S32
    y0 = y & _U32M
    lolo = x0 * y0
    m1 = x1 * y0
    m2 = x0 * y1
    lo = lolo + ((m1 & _U32M) << _S32)
    c1 = np.uint64(1) if lo < lolo else np.uint64(0)
    lo2 = lo + ((m2 & _U32M) << _S32)
    c2 = np.uint64(1) if lo2 < lo else np.uint64(0)
    hi = x1 * y1 + (m1 >> _S32) + (m2 >> _S32) + c1 + c2
    m = lo2 * qinv
    m1_ = m >> _S32
    m0 = m & _U32M
    q1 = q >> _S32
    q0 = q & _U32M
    mlolo = m0 * q0
    mm1 = m1_ * q0
    mm2 = m0 * q1
    mlo = mlolo + ((mm1 & _U32M) << _S32)
    mc1 = np.uint64(1) if mlo < mlolo else np.uint64(0)
    mlo2 = mlo + ((mm2 & _U32M) << _S32)
    mc2 = np.uint64(1) if mlo2 < mlo else np.uint64(0)
    mh = m1_ * q1 + (mm1 >> _S32) + (mm2 >> _S32) + mc1 + mc2
    carry = np.uint64(1) if (lo2 | mlo2) != 0 else np.uint64(0)
    t = hi + mh + carry
    if t >= q:
        t -= q
    return t


@njit(cache=True, nogil=True)
def _plain_mul(x, y, q, qinv, r2):
    return _mont_mul(_mont_mul(x, y, q, qinv), r2, q, qinv)


@njit(cache=True, parallel=True, nogil=True)
def mul_batch(a, b, out, q, qinv, r2, mod_idx):
    for r in prange(a.shape[0]):
        mi = mod_idx[r]
        qq = q[mi]
        qi = qinv[mi]
        rr = r2[mi]
        for j in range(a.shape[1]):
            out[r, j] = _plain_mul(a[r, j], b[r, j], qq, qi, rr)


@njit(cache=True, parallel=True, nogil=True)
def neg_mul_batch(a, b, out, q, qinv, r2, mod_idx):
    for r in prange(a.shape[0]):
        mi = mod_idx[r]
        qq = q[mi]
        qi = qinv[mi]
        rr = r2[mi]
        for j in range(a.shape[1]):
            v = _plain_mul(a[r, j], b[r, j], qq, qi, rr)
            out[r, j] = qq - v if v != 0 else v


@njit(cache=True, parallel=True, nogil=True)
def mul_add_batch(a, b, c, out, q, qinv, r2, mod_idx):
    for r in prange(a.shape[0]):
        mi = mod_idx[r]
        qq = q[mi]
        qi = qinv[mi]
        rr = r2[mi]
        for j in range(a.shape[1]):
            s = _plain_mul(a[r, j], b[r, j], qq, qi, rr) + c[r, j]
            out[r, j] = s - qq if s >= qq else s
