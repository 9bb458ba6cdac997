"""Hot loops: Metropolis chains over RBM amplitudes and exhaustive cut search.

Each public entry point dispatches to a numba kernel, or to a numpy version
vectorised across chains when ``QAOARBM_DISABLE_NUMBA`` is set. Both paths
consume the same pre-drawn random numbers, so for a fixed seed they return
the same samples.

Chain state per hidden unit ``k`` is the activation ``theta_k`` plus a cached
exponential ``G_k``: ``exp(theta_k)`` when ``Re theta_k <= 0`` (``sgn_k = 0``)
and ``exp(-theta_k)`` otherwise. With ``G`` cached, the single-flip amplitude
ratio needs only complex multiplies:

    (1 + e^{theta + w}) / (1 + e^theta) = (1 + G e^{w}) / (1 + G)           sgn = 0
                                        = e^{w} (1 + G e^{-w}) / (1 + G)    sgn = 1

``G`` is rebuilt from ``theta`` every ``anchor_every`` steps (a multiple of the
record stride), which bounds drift from the running products.
"""

from __future__ import annotations

import math

import numpy as np

from ._jit import USE_NUMBA, njit, prange

# |G| beyond this triggers an immediate re-anchor of that unit.
_G_MAX2 = 1e60
# approximate number of steps between full re-anchors (rounded up to the stride)
ANCHOR_STEPS = 256


@njit(cache=True)
def _softplus(z):
    if z.real > 0:
        return z + np.log(1.0 + np.exp(-z))
    return np.log(1.0 + np.exp(z))


@njit(cache=True)
def _softplus_rows_numba(theta):
    n, m = theta.shape
    out = np.empty(n, dtype=np.complex128)
    for i in range(n):
        acc = 0j
        for k in range(m):
            acc += _softplus(theta[i, k])
        out[i] = acc
    return out


def _softplus_rows_numpy(theta):
    pos = theta.real > 0
    return (np.log1p(np.exp(np.where(pos, -theta, theta))) + np.where(pos, theta, 0)).sum(axis=1)


def softplus_row_sums(theta):
    """``sum_k log(1 + exp(theta_ik))`` for each row of a complex (n, M) array."""
    theta = np.ascontiguousarray(theta, dtype=np.complex128)
    if USE_NUMBA:
        return _softplus_rows_numba(theta)
    return _softplus_rows_numpy(theta)


@njit(cache=True)
def _exact_flip_ratio(a, W, theta, B, j):
    """psi(B with bit j flipped) / psi(B) straight from softplus, no cache."""
    d = 1.0 - 2.0 * B[j]
    acc = d * a[j]
    for k in range(theta.shape[0]):
        acc += _softplus(theta[k] + d * W[j, k]) - _softplus(theta[k])
    return np.exp(acc)


@njit(cache=True)
def _anchor(theta, W, eW, emW, G, sgn, Eup, Edown, Lsum, first):
    """Re-anchor every unit on the stable side; returns prod_k (1 + G_k).

    ``Eup[m, k] = exp(+W_mk)`` for units anchored at ``exp(theta)`` and
    ``exp(-W_mk)`` for units anchored at ``exp(-theta)``; ``Edown`` is its
    reciprocal. ``Lsum[m]`` sums ``W_mk`` over the ``exp(-theta)`` units.
    """
    N = W.shape[0]
    den = 1.0 + 0j
    for k in range(theta.shape[0]):
        want = 1 if theta[k].real > 0 else 0
        if first or want != sgn[k]:
            sgn[k] = want
            for m in range(N):
                if want:
                    Eup[m, k] = emW[m, k]
                    Edown[m, k] = eW[m, k]
                else:
                    Eup[m, k] = eW[m, k]
                    Edown[m, k] = emW[m, k]
        G[k] = np.exp(-theta[k]) if want else np.exp(theta[k])
        den *= 1.0 + G[k]
    for m in range(N):
        acc = 0j
        for k in range(theta.shape[0]):
            if sgn[k]:
                acc += W[m, k]
        Lsum[m] = acc
    return den


@njit(cache=True)
def _chain(a, b, W, eW, emW, bits0, flips, logu, burn_in, stride, anchor_every, n_samples, rx_j, c, s, out):
    N = a.shape[0]
    M = b.shape[0]
    B = bits0.copy()
    theta = b.copy()
    for j in range(N):
        if B[j]:
            for k in range(M):
                theta[k] += W[j, k]
    G = np.empty(M, dtype=np.complex128)
    sgn = np.zeros(M, dtype=np.uint8)
    Eup = np.empty((N, M), dtype=np.complex128)
    Edown = np.empty((N, M), dtype=np.complex128)
    Lsum = np.empty(N, dtype=np.complex128)
    den = _anchor(theta, W, eW, emW, G, sgn, Eup, Edown, Lsum, True)
    rx = rx_j >= 0
    phi_den = 1.0 + 0j
    if rx:
        phi_den = c + s * _exact_flip_ratio(a, W, theta, B, rx_j)
    accepted = 0
    n_steps = flips.shape[0]
    for t in range(n_steps):
        m = flips[t]
        up = B[m] == 0
        d = 1.0 if up else -1.0
        L = d * (a[m] + Lsum[m])
        num = 1.0 + 0j
        Lj = 0j
        numj = 1.0 + 0j
        if rx and m != rx_j:
            upj = B[rx_j] == 0
            dj = 1.0 if upj else -1.0
            Lj = dj * (a[rx_j] + Lsum[rx_j])
            for k in range(M):
                g = G[k] * (Eup[m, k] if up else Edown[m, k])
                num *= 1.0 + g
                numj *= 1.0 + g * (Eup[rx_j, k] if upj else Edown[rx_j, k])
        else:
            for k in range(M):
                num *= 1.0 + G[k] * (Eup[m, k] if up else Edown[m, k])
        P = num / den
        q = P.real * P.real + P.imag * P.imag
        phi_num = 0j
        if rx:
            if m == rx_j:
                rho_new = 1.0 / (np.exp(L) * P)
            else:
                rho_new = np.exp(Lj) * (numj / num)
            phi_num = c + s * rho_new
            q *= (phi_num.real * phi_num.real + phi_num.imag * phi_num.imag) / (
                phi_den.real * phi_den.real + phi_den.imag * phi_den.imag
            )
        logq = 2.0 * L.real + math.log(q)
        if logu[t] < logq:
            accepted += 1
            B[m] = 1 - B[m]
            big = 0.0
            for k in range(M):
                theta[k] += d * W[m, k]
                G[k] *= Eup[m, k] if up else Edown[m, k]
                big = max(big, G[k].real * G[k].real + G[k].imag * G[k].imag)
            if big > _G_MAX2:
                den = _anchor(theta, W, eW, emW, G, sgn, Eup, Edown, Lsum, False)
            else:
                den = num
            if rx:
                phi_den = phi_num
        done = t + 1
        if done % anchor_every == 0:
            den = _anchor(theta, W, eW, emW, G, sgn, Eup, Edown, Lsum, False)
            if rx:
                phi_den = c + s * _exact_flip_ratio(a, W, theta, B, rx_j)
        if done > burn_in and (done - burn_in) % stride == 0:
            idx = (done - burn_in) // stride - 1
            if idx < n_samples:
                out[idx, :] = B
    return accepted


@njit(cache=True, parallel=True)
def _run_chains_numba(a, b, W, bits0, flips, logu, burn_in, stride, anchor_every, n_samples, rx_j, c, s):
    n_chains, N = bits0.shape
    eW = np.exp(W)
    emW = np.exp(-W)
    out = np.zeros((n_chains, n_samples, N), dtype=np.uint8)
    acc = np.zeros(n_chains, dtype=np.int64)
    for ch in prange(n_chains):
        acc[ch] = _chain(
            a, b, W, eW, emW, bits0[ch], flips[ch], logu[ch], burn_in, stride, anchor_every, n_samples, rx_j, c,
            s, out[ch],
        )
    return out, acc


def _np_refresh(theta):
    sgn = theta.real > 0
    G = np.exp(np.where(sgn, -theta, theta))
    return G, sgn


def _np_flip_ratio(a, W, theta, B, j):
    rows = np.arange(B.shape[0])
    d = 1.0 - 2.0 * B[rows, j]
    from .rbm import softplus

    acc = d * a[j] + (softplus(theta + d[:, None] * W[j]) - softplus(theta)).sum(axis=1)
    return np.exp(acc)


def _run_chains_numpy(a, b, W, bits0, flips, logu, burn_in, stride, anchor_every, n_samples, rx_j, c, s):
    n_chains, N = bits0.shape
    rows = np.arange(n_chains)
    eW = np.exp(W)
    emW = np.exp(-W)
    B = bits0.copy()
    theta = b[None, :] + B.astype(np.float64) @ W
    G, sgn = _np_refresh(theta)
    den = np.prod(1.0 + G, axis=1)
    rx = rx_j >= 0
    phi_den = c + s * _np_flip_ratio(a, W, theta, B, rx_j) if rx else None
    out = np.zeros((n_chains, n_samples, N), dtype=np.uint8)
    acc = np.zeros(n_chains, dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for t in range(flips.shape[1]):
            m = flips[:, t]
            d = 1 - 2 * B[rows, m].astype(np.int64)
            pos = (d > 0)[:, None]
            up = np.where(pos, eW[m], emW[m])
            down = np.where(pos, emW[m], eW[m])
            g_new = G * np.where(sgn, down, up)
            L = d * a[m] + np.where(sgn, d[:, None] * W[m], 0).sum(axis=1)
            num = np.prod(1.0 + g_new, axis=1)
            P = num / den
            q = P.real * P.real + P.imag * P.imag
            if rx:
                dj = 1 - 2 * B[:, rx_j].astype(np.int64)
                posj = (dj > 0)[:, None]
                upj = np.where(posj, eW[rx_j], emW[rx_j])
                downj = np.where(posj, emW[rx_j], eW[rx_j])
                Lj = dj * a[rx_j] + np.where(sgn, dj[:, None] * W[rx_j], 0).sum(axis=1)
                numj = np.prod(1.0 + g_new * np.where(sgn, downj, upj), axis=1)
                rho_new = np.where(m == rx_j, 1.0 / (np.exp(L) * P), np.exp(Lj) * (numj / num))
                phi_num = c + s * rho_new
                q = q * ((phi_num.real * phi_num.real + phi_num.imag * phi_num.imag)
                         / (phi_den.real * phi_den.real + phi_den.imag * phi_den.imag))
            logq = 2.0 * L.real + np.log(q)
            ok = logu[:, t] < logq
            if ok.any():
                acc += ok
                B[ok, m[ok]] ^= 1
                theta[ok] += d[ok, None] * W[m[ok]]
                G[ok] = g_new[ok]
                den[ok] = num[ok]
                big = ok & (G.real * G.real + G.imag * G.imag > _G_MAX2).any(axis=1)
                if big.any():
                    G2, sgn2 = _np_refresh(theta)
                    G[big], sgn[big] = G2[big], sgn2[big]
                    den[big] = np.prod(1.0 + G[big], axis=1)
                if rx:
                    phi_den[ok] = phi_num[ok]
            done = t + 1
            if done % anchor_every == 0:
                G, sgn = _np_refresh(theta)
                den = np.prod(1.0 + G, axis=1)
                if rx:
                    phi_den = c + s * _np_flip_ratio(a, W, theta, B, rx_j)
            if done > burn_in and (done - burn_in) % stride == 0:
                idx = (done - burn_in) // stride - 1
                if idx < n_samples:
                    out[:, idx, :] = B
    return out, acc


def run_chains(a, b, W, bits0, flips, logu, burn_in, stride, n_samples, rx_j=-1, rx_beta=0.0):
    """Run independent Metropolis chains on |psi|^2 or on an RX-rotated target.

    With ``rx_j >= 0`` the sampled distribution is
    ``|cos(beta) psi(B) - i sin(beta) psi(B xor e_j)|^2``.

    Returns ``(samples, accepted)`` with samples shaped (chains, n_samples, N).
    """
    a = np.ascontiguousarray(a, dtype=np.complex128)
    b = np.ascontiguousarray(b, dtype=np.complex128)
    W = np.ascontiguousarray(W, dtype=np.complex128)
    bits0 = np.ascontiguousarray(bits0, dtype=np.uint8)
    flips = np.ascontiguousarray(flips, dtype=np.int64)
    logu = np.ascontiguousarray(logu, dtype=np.float64)
    c = complex(math.cos(rx_beta))
    s = complex(-1j * math.sin(rx_beta))
    stride = int(stride)
    anchor_every = stride * -(-ANCHOR_STEPS // stride)
    impl = _run_chains_numba if USE_NUMBA else _run_chains_numpy
    return impl(a, b, W, bits0, flips, logu, int(burn_in), stride, anchor_every, int(n_samples), int(rx_j), c, s)


@njit(cache=True)
def _gray_min_numba(n, us, vs, ws):
    """Exhaustive min of the cut cost over all 2^n bitstrings via Gray-code walk.

    Bitstring integer convention: bit j of the string is bit (n-1-j) of the int.
    Ties go to the smaller integer.
    """
    deg_start = np.zeros(n + 1, dtype=np.int64)
    for e in range(us.shape[0]):
        deg_start[us[e] + 1] += 1
        deg_start[vs[e] + 1] += 1
    for v in range(n):
        deg_start[v + 1] += deg_start[v]
    nbr = np.empty(deg_start[n], dtype=np.int64)
    nw = np.empty(deg_start[n], dtype=np.float64)
    fill = deg_start[:n].copy()
    for e in range(us.shape[0]):
        u, v = us[e], vs[e]
        nbr[fill[u]] = v
        nw[fill[u]] = ws[e]
        fill[u] += 1
        nbr[fill[v]] = u
        nw[fill[v]] = ws[e]
        fill[v] += 1
    spin = np.ones(n, dtype=np.int64)
    cost = 0.0
    for e in range(us.shape[0]):
        cost += ws[e]
    # incremental sums drift, so ties are judged within a small tolerance
    tol = 0.0
    for e in range(us.shape[0]):
        tol += abs(ws[e])
    tol *= 1e-9
    best = cost
    best_int = 0
    code = 0
    for i in range(1, 1 << n):
        # bit that changes between gray(i-1) and gray(i)
        low = i & -i
        pos = 0
        while low > 1:
            low >>= 1
            pos += 1
        j = n - 1 - pos
        delta = 0.0
        for p in range(deg_start[j], deg_start[j + 1]):
            delta += nw[p] * spin[j] * spin[nbr[p]]
        cost -= 2.0 * delta
        spin[j] = -spin[j]
        code ^= 1 << pos
        if cost < best - tol or (cost <= best + tol and code < best_int):
            best = cost
            best_int = code
    return best, best_int


def _gray_min_numpy(n, us, vs, ws, chunk_bits=20):
    best, best_int = np.inf, 0
    tol = 1e-9 * np.abs(ws).sum()
    chunk = 1 << min(n, chunk_bits)
    shifts = np.int64(n - 1) - np.arange(n, dtype=np.int64)
    for start in range(0, 1 << n, chunk):
        idx = np.arange(start, start + chunk, dtype=np.int64)
        bits = (idx[:, None] >> shifts[None, :]) & 1
        spins = 1 - 2 * (bits[:, us] ^ bits[:, vs])
        cost = spins @ ws
        k = int(np.argmax(cost <= cost.min() + tol))
        if cost[k] < best - tol:
            best, best_int = float(cost[k]), int(idx[k])
    return best, best_int


def min_cut_cost(n, us, vs, ws):
    us = np.ascontiguousarray(us, dtype=np.int64)
    vs = np.ascontiguousarray(vs, dtype=np.int64)
    ws = np.ascontiguousarray(ws, dtype=np.float64)
    if USE_NUMBA:
        best, best_int = _gray_min_numba(n, us, vs, ws)
        return float(best), int(best_int)
    return _gray_min_numpy(n, us, vs, ws)
