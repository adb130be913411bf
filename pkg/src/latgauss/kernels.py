"""Enumeration and 1-D sampling kernels.

Every kernel exists twice: a numba-compiled loop and a pure-numpy version
with the same signature.  ``LATGAUSS_DISABLE_NUMBA=1`` selects numpy; the
module-level names (``enum_points``, ``enum_closest``, ``inverse_cdf_1d``)
point at whichever backend is active.

All enumeration works in Gram-Schmidt coordinates.  For a lattice with
coefficients ``mu`` (unit diagonal, ``mu[i, j]`` for ``i > j``), squared GS
norms ``bnorm2`` and a target with GS coordinates ``tau``, the point with
integer coefficients ``z`` has squared distance

    sum_j bnorm2[j] * (sum_i z[i] * mu[i, j] - tau[j]) ** 2

to the target (ignoring the component orthogonal to the span).
"""

from __future__ import annotations

import math
import os

import numpy as np

_flag = os.environ.get("LATGAUSS_DISABLE_NUMBA", "").strip().lower()
DISABLE_NUMBA = _flag not in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLE_NUMBA

# ties in closest/shortest search are decided lexicographically when the
# squared distances agree to this relative tolerance
TIE_RTOL = 1e-9
TIE_ATOL = 1e-12


# ---------------------------------------------------------------------------
# plain python/numba source (compiled below when numba is available)


def _lex_less(a, b):
    for i in range(a.shape[0]):
        if a[i] < b[i]:
            return True
        if a[i] > b[i]:
            return False
    return False


def _enum_points_loop(mu, bnorm2, tau, radius2, cap, out_z, out_n):
    """Depth-first listing of every point within ``radius2``.

    Fills at most ``cap`` rows of ``out_z``/``out_n`` and returns the total
    number of points found (which may exceed ``cap``).
    """
    d = bnorm2.shape[0]
    if d == 0:
        if radius2 >= 0.0 and cap > 0:
            out_n[0] = 0.0
        return 1 if radius2 >= 0.0 else 0
    z = np.zeros(d, np.int64)
    hi = np.zeros(d, np.int64)
    center = np.zeros(d)
    partial = np.zeros(d + 1)
    count = 0
    k = d - 1
    center[k] = tau[k]
    if radius2 < 0.0:
        return 0
    w = math.sqrt(radius2 / bnorm2[k])
    z[k] = math.ceil(center[k] - w)
    hi[k] = math.floor(center[k] + w)
    while True:
        if z[k] > hi[k]:
            k += 1
            if k == d:
                break
            z[k] += 1
            continue
        y = z[k] - center[k]
        p = partial[k + 1] + bnorm2[k] * y * y
        if p > radius2:
            z[k] += 1
            continue
        if k == 0:
            if count < cap:
                for i in range(d):
                    out_z[count, i] = z[i]
                out_n[count] = p
            count += 1
            z[0] += 1
            continue
        partial[k] = p
        k -= 1
        c = tau[k]
        for i in range(k + 1, d):
            c -= z[i] * mu[i, k]
        center[k] = c
        rem = radius2 - partial[k + 1]
        if rem < 0.0:
            rem = 0.0
        w = math.sqrt(rem / bnorm2[k])
        z[k] = math.ceil(c - w)
        hi[k] = math.floor(c + w)
    return count


def _theta_total(c, s, halfwidth):
    """``Σ_k exp(-π (k - c)² / s²)`` over the integers."""
    if s >= 1.0:
        frac = c - math.floor(c)
        total = 1.0
        m = 1
        while True:
            w = math.exp(-math.pi * s * s * m * m)
            if w < 1e-300:
                break
            total += 2.0 * w * math.cos(2.0 * math.pi * m * frac)
            m += 1
        return s * total
    inv = math.pi / (s * s)
    total = 0.0
    for k in range(math.floor(c - halfwidth), math.ceil(c + halfwidth) + 1):
        y = k - c
        total += math.exp(-inv * y * y)
    return total


if HAVE_NUMBA:
    _lex_less_nb = numba.njit(cache=True)(_lex_less)
    _enum_points_nb = numba.njit(cache=True)(_enum_points_loop)

    @numba.njit(cache=True)
    def _enum_closest_nb(mu, bnorm2, tau, radius2, exclude_zero, best_z):
        """Schnorr-Euchner search for the closest point within ``radius2``.

        Children are visited in zig-zag order around the projected center and
        the radius shrinks whenever a better point turns up.  Near-ties go to
        the lexicographically smaller coefficient vector.  Returns the squared
        distance of the winner (written to ``best_z``) or -1.0.
        """
        d = bnorm2.shape[0]
        best = -1.0
        bound = radius2
        if d == 0:
            if exclude_zero:
                return -1.0
            return 0.0
        z = np.zeros(d, np.int64)
        step = np.zeros(d, np.int64)
        side = np.zeros(d, np.int64)
        base = np.zeros(d, np.int64)
        center = np.zeros(d)
        partial = np.zeros(d + 1)
        k = d - 1
        center[k] = tau[k]
        base[k] = round(center[k])
        side[k] = 1 if center[k] >= base[k] else -1
        step[k] = 0
        z[k] = base[k]
        while True:
            y = z[k] - center[k]
            p = partial[k + 1] + bnorm2[k] * y * y
            if p > bound:
                k += 1
                if k == d:
                    break
            elif k == 0:
                skip = False
                if exclude_zero:
                    skip = True
                    for i in range(d):
                        if z[i] != 0:
                            skip = False
                            break
                if not skip:
                    tol = TIE_RTOL * (best if best > 0.0 else p) + TIE_ATOL
                    if best < 0.0 or p < best - tol:
                        best = p
                        for i in range(d):
                            best_z[i] = z[i]
                        bound = best + TIE_RTOL * best + TIE_ATOL
                    elif p <= best + tol and _lex_less_nb(z, best_z):
                        for i in range(d):
                            best_z[i] = z[i]
            else:
                partial[k] = p
                k -= 1
                c = tau[k]
                for i in range(k + 1, d):
                    c -= z[i] * mu[i, k]
                center[k] = c
                base[k] = round(c)
                side[k] = 1 if c >= base[k] else -1
                step[k] = 0
                z[k] = base[k]
                continue
            step[k] += 1
            j = step[k]
            off = (j + 1) // 2
            if j % 2 == 1:
                z[k] = base[k] + side[k] * off
            else:
                z[k] = base[k] - side[k] * off
        return best

    _theta_total_nb = numba.njit(cache=True)(_theta_total)

    @numba.njit(cache=True)
    def _inverse_cdf_nb(centers, s, uniforms, halfwidth, out):
        """Inverse-CDF draws visiting integers outward from the nearest one.

        The visiting order is ``k0, k0 + σ, k0 - σ, k0 + 2σ, ...`` with ``k0``
        the integer nearest the center and ``σ`` pointing towards the center,
        so the expected number of steps is ``O(s)``.
        """
        inv = math.pi / (s * s)
        steps = 2 * int(math.ceil(halfwidth)) + 2
        for m in range(centers.shape[0]):
            c = centers[m]
            k0 = math.floor(c + 0.5)
            sg = 1 if c >= k0 else -1
            target = uniforms[m] * _theta_total_nb(c, s, halfwidth)
            acc = 0.0
            res = k0
            for j in range(steps):
                off = (j + 1) // 2
                k = k0 + sg * off if j % 2 == 1 else k0 - sg * off
                y = k - c
                acc += math.exp(-inv * y * y)
                res = k
                if acc >= target:
                    break
            out[m] = res


# ---------------------------------------------------------------------------
# public wrappers, numba flavour


def enum_points_numba(mu, bnorm2, tau, radius2, cap=512):
    """All points within ``radius2``; returns ``(Z, norms2)``."""
    mu, bnorm2, tau = _prep(mu, bnorm2, tau)
    d = bnorm2.shape[0]
    while True:
        out_z = np.zeros((cap, d), np.int64)
        out_n = np.zeros(cap)
        n = _enum_points_nb(mu, bnorm2, tau, float(radius2), cap, out_z, out_n)
        if n <= cap:
            return out_z[:n], out_n[:n]
        cap = n


def enum_closest_numba(mu, bnorm2, tau, radius2, exclude_zero=False):
    """Closest point (lexicographic ties) within ``radius2`` or ``None``."""
    mu, bnorm2, tau = _prep(mu, bnorm2, tau)
    best_z = np.zeros(bnorm2.shape[0], np.int64)
    best = _enum_closest_nb(mu, bnorm2, tau, float(radius2), bool(exclude_zero), best_z)
    if best < 0.0:
        return None
    return best_z, best


def inverse_cdf_1d_numba(centers, s, uniforms, halfwidth):
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    out = np.empty(centers.shape[0], np.int64)
    _inverse_cdf_nb(centers, float(s), uniforms, float(halfwidth), out)
    return out


# ---------------------------------------------------------------------------
# numpy flavour


def enum_points_numpy(mu, bnorm2, tau, radius2, cap=None):
    """Breadth-first version of :func:`enum_points_numba`.

    The frontier of partial coefficient vectors is expanded one level at a
    time with ``np.repeat``; order of the output differs from the depth-first
    kernel, callers sort when they need a canonical order.
    """
    mu, bnorm2, tau = _prep(mu, bnorm2, tau)
    d = bnorm2.shape[0]
    radius2 = float(radius2)
    if radius2 < 0.0:
        return np.zeros((0, d), np.int64), np.zeros(0)
    Z = np.zeros((1, 0), np.int64)
    P = np.zeros(1)
    for k in range(d - 1, -1, -1):
        centers = tau[k] - Z @ mu[k + 1 :, k] if Z.shape[1] else np.full(len(P), tau[k])
        w = np.sqrt(np.maximum(radius2 - P, 0.0) / bnorm2[k])
        lo = np.ceil(centers - w).astype(np.int64)
        hi = np.floor(centers + w).astype(np.int64)
        cnt = np.maximum(hi - lo + 1, 0)
        total = int(cnt.sum())
        idx = np.repeat(np.arange(len(P)), cnt)
        offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        zk = lo[idx] + offs
        newP = P[idx] + bnorm2[k] * (zk - centers[idx]) ** 2
        keep = newP <= radius2
        Z = np.column_stack([zk[keep], Z[idx][keep]])
        P = newP[keep]
    return Z.astype(np.int64), P


def enum_closest_numpy(mu, bnorm2, tau, radius2, exclude_zero=False):
    Z, P = enum_points_numpy(mu, bnorm2, tau, radius2)
    if exclude_zero and len(P):
        nz = np.any(Z != 0, axis=1)
        Z, P = Z[nz], P[nz]
    if len(P) == 0:
        return None
    best = P.min()
    tol = TIE_RTOL * best + TIE_ATOL
    near = np.flatnonzero(P <= best + tol)
    cand = Z[near]
    order = np.lexsort(cand.T[::-1])
    i = near[order[0]]
    return Z[i].copy(), float(P[i])


def _theta_total_numpy(c, s, halfwidth):
    if s >= 1.0:
        frac = c - np.floor(c)
        total = np.ones_like(c)
        m = 1
        while True:
            w = math.exp(-math.pi * s * s * m * m)
            if w < 1e-300:
                break
            total += 2.0 * w * np.cos(2.0 * math.pi * m * frac)
            m += 1
        return s * total
    inv = math.pi / (s * s)
    lo = np.floor(c - halfwidth).astype(np.int64)
    width = int((np.ceil(c + halfwidth).astype(np.int64) - lo).max()) + 1
    ks = lo[:, None] + np.arange(width)[None, :]
    valid = ks <= np.ceil(c + halfwidth)[:, None]
    y = ks - c[:, None]
    return np.where(valid, np.exp(-inv * y * y), 0.0).sum(axis=1)


def inverse_cdf_1d_numpy(centers, s, uniforms, halfwidth, chunk=4096):
    """Same visiting order as the compiled loop, one chunk at a time."""
    centers = np.asarray(centers, dtype=np.float64)
    uniforms = np.asarray(uniforms, dtype=np.float64)
    out = np.empty(centers.shape[0], np.int64)
    inv = math.pi / (s * s)
    steps = 2 * int(math.ceil(halfwidth)) + 2
    j = np.arange(steps)
    signed = np.where(j % 2 == 1, (j + 1) // 2, -((j + 1) // 2))
    for a in range(0, centers.shape[0], chunk):
        c = centers[a : a + chunk]
        k0 = np.floor(c + 0.5)
        sg = np.where(c >= k0, 1.0, -1.0)
        target = uniforms[a : a + chunk] * _theta_total_numpy(c, s, halfwidth)
        ks = k0[:, None] + sg[:, None] * signed[None, :]
        y = ks - c[:, None]
        cdf = np.cumsum(np.exp(-inv * y * y), axis=1)
        hit = cdf >= target[:, None]
        pos = np.where(hit.any(axis=1), np.argmax(hit, axis=1), steps - 1)
        out[a : a + chunk] = ks[np.arange(len(c)), pos].astype(np.int64)
    return out


def _prep(mu, bnorm2, tau):
    return (
        np.ascontiguousarray(mu, dtype=np.float64),
        np.ascontiguousarray(bnorm2, dtype=np.float64),
        np.ascontiguousarray(tau, dtype=np.float64),
    )


if USE_NUMBA:
    enum_points = enum_points_numba
    enum_closest = enum_closest_numba
    inverse_cdf_1d = inverse_cdf_1d_numba
else:
    enum_points = enum_points_numpy
    enum_closest = enum_closest_numpy
    inverse_cdf_1d = inverse_cdf_1d_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
