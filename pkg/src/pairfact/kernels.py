"""Enumeration kernels for exact randomization moments.

Each kernel walks a contiguous range of the lexicographic assignment order,
starting from an explicit state, and returns compensated (Neumaier) sums.
There are two implementations with the same signatures:

* ``_nb_*``: scalar loops compiled with numba;
* ``_np_*``: chunked, vectorized numpy.

:func:`default_backend` picks numba unless ``PAIRFACT_DISABLE_NUMBA`` is set.
``Hs`` is always the scaled model matrix 2^-(K-1) H as float64.
"""

from __future__ import annotations

import numpy as np

from ._jit import NUMBA_ENABLED, njit

BACKENDS = ("numba", "numpy")
CHUNK = 4096


def default_backend() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def _resolve(backend: str | None) -> str:
    backend = backend or default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not NUMBA_ENABLED:
        raise ValueError("numba backend requested but numba is disabled")
    return backend


@njit
def next_permutation(a):
    """Advance ``a`` in place to its lexicographic successor.

    Handles repeated values (multiset permutations).  On the last permutation
    the array is reset to ascending order and False is returned.
    """
    n = a.shape[0]
    i = n - 2
    while i >= 0 and a[i] >= a[i + 1]:
        i -= 1
    if i < 0:
        lo, hi = 0, n - 1
        while lo < hi:
            a[lo], a[hi] = a[hi], a[lo]
            lo += 1
            hi -= 1
        return False
    j = n - 1
    while a[j] <= a[i]:
        j -= 1
    a[i], a[j] = a[j], a[i]
    lo, hi = i + 1, n - 1
    while lo < hi:
        a[lo], a[hi] = a[hi], a[lo]
        lo += 1
        hi -= 1
    return True


@njit
def _next_blocks(perms):
    j = perms.shape[0] - 1
    while j >= 0:
        if next_permutation(perms[j]):
            return True
        j -= 1
    return False


@njit
def _kahan_add(s, c, idx, x):
    t = s[idx] + x
    if abs(s[idx]) >= abs(x):
        c[idx] += (s[idx] - t) + x
    else:
        c[idx] += (x - t) + s[idx]
    s[idx] = t


# -- numba kernels --------------------------------------------------------------


@njit
def _nb_cr_estimates(Y, Hs, r, labels, means, s2, tau, cov):
    n = Y.shape[0]
    L = Hs.shape[0]
    for l in range(L):
        means[l] = 0.0
    for i in range(n):
        means[labels[i]] += Y[i, labels[i]]
    for l in range(L):
        means[l] /= r
    for c in range(L):
        acc = 0.0
        for l in range(L):
            acc += means[l] * Hs[l, c]
        tau[c] = acc
    for a in range(L):
        for b in range(L):
            cov[a, b] = 0.0
    if r < 2:
        return
    for l in range(L):
        s2[l] = 0.0
    for i in range(n):
        d = Y[i, labels[i]] - means[labels[i]]
        s2[labels[i]] += d * d
    for l in range(L):
        w = s2[l] / ((r - 1) * r)
        for a in range(L):
            for b in range(L):
                cov[a, b] += w * Hs[l, a] * Hs[l, b]


@njit
def _nb_cr_first(Y, Hs, r, state, count):
    L = Hs.shape[0]
    labels = state.copy()
    means = np.empty(L)
    s2 = np.empty(L)
    tau = np.empty(L)
    cov = np.empty((L, L))
    s_tau = np.zeros(L)
    c_tau = np.zeros(L)
    s_cov = np.zeros(L * L)
    c_cov = np.zeros(L * L)
    for _ in range(count):
        _nb_cr_estimates(Y, Hs, r, labels, means, s2, tau, cov)
        for a in range(L):
            _kahan_add(s_tau, c_tau, a, tau[a])
            for b in range(L):
                _kahan_add(s_cov, c_cov, a * L + b, cov[a, b])
        next_permutation(labels)
    return s_tau + c_tau, (s_cov + c_cov).reshape((L, L))


@njit
def _nb_cr_second(Y, Hs, r, state, count, center):
    L = Hs.shape[0]
    labels = state.copy()
    means = np.empty(L)
    s2 = np.empty(L)
    tau = np.empty(L)
    cov = np.empty((L, L))
    s = np.zeros(L * L)
    c = np.zeros(L * L)
    for _ in range(count):
        _nb_cr_estimates(Y, Hs, r, labels, means, s2, tau, cov)
        for a in range(L):
            da = tau[a] - center[a]
            for b in range(L):
                _kahan_add(s, c, a * L + b, da * (tau[b] - center[b]))
        next_permutation(labels)
    return (s + c).reshape((L, L))


@njit
def _nb_mp_estimates(Y, Hs, blocks, perms, obs, tau_j, tau, cov):
    r = blocks.shape[0]
    L = Hs.shape[0]
    for j in range(r):
        for u in range(L):
            l = perms[j, u]
            obs[l] = Y[blocks[j, u], l]
        for c in range(L):
            acc = 0.0
            for l in range(L):
                acc += obs[l] * Hs[l, c]
            tau_j[j, c] = acc
    for c in range(L):
        acc = 0.0
        for j in range(r):
            acc += tau_j[j, c]
        tau[c] = acc / r
    for a in range(L):
        for b in range(L):
            cov[a, b] = 0.0
    if r < 2:
        return
    w = 1.0 / (r * (r - 1))
    for j in range(r):
        for a in range(L):
            da = tau_j[j, a] - tau[a]
            for b in range(L):
                cov[a, b] += w * da * (tau_j[j, b] - tau[b])


@njit
def _nb_mp_first(Y, Hs, blocks, state, count):
    r = blocks.shape[0]
    L = Hs.shape[0]
    perms = state.copy()
    obs = np.empty(L)
    tau_j = np.empty((r, L))
    tau = np.empty(L)
    cov = np.empty((L, L))
    s_tau = np.zeros(L)
    c_tau = np.zeros(L)
    s_cov = np.zeros(L * L)
    c_cov = np.zeros(L * L)
    for _ in range(count):
        _nb_mp_estimates(Y, Hs, blocks, perms, obs, tau_j, tau, cov)
        for a in range(L):
            _kahan_add(s_tau, c_tau, a, tau[a])
            for b in range(L):
                _kahan_add(s_cov, c_cov, a * L + b, cov[a, b])
        _next_blocks(perms)
    return s_tau + c_tau, (s_cov + c_cov).reshape((L, L))


@njit
def _nb_mp_second(Y, Hs, blocks, state, count, center):
    r = blocks.shape[0]
    L = Hs.shape[0]
    perms = state.copy()
    obs = np.empty(L)
    tau_j = np.empty((r, L))
    tau = np.empty(L)
    cov = np.empty((L, L))
    s = np.zeros(L * L)
    c = np.zeros(L * L)
    for _ in range(count):
        _nb_mp_estimates(Y, Hs, blocks, perms, obs, tau_j, tau, cov)
        for a in range(L):
            da = tau[a] - center[a]
            for b in range(L):
                _kahan_add(s, c, a * L + b, da * (tau[b] - center[b]))
        _next_blocks(perms)
    return (s + c).reshape((L, L))


# -- numpy kernels ------------------------------------------------------------------


def cr_batch(Y, Hs, r, A):
    """CR estimates for a batch of label rows ``A`` (c, N).

    Returns the effect estimates (c, L) and Neymanian covariance estimates
    (c, L, L); the latter are zero when r < 2.
    """
    n, L = Y.shape
    obs = Y[np.arange(n), A]
    onehot = A[..., None] == np.arange(L)
    means = np.einsum("cn,cnl->cl", obs, onehot) / r
    tau = means @ Hs
    if r < 2:
        return tau, np.zeros((A.shape[0], L, L))
    dev = obs - np.take_along_axis(means, A, axis=1)
    s2 = np.einsum("cn,cnl->cl", dev * dev, onehot) / (r - 1)
    cov = np.einsum("cl,la,lb->cab", s2 / r, Hs, Hs)
    return tau, cov


def mp_batch(Y, Hs, blocks, P):
    """MP estimates for a batch of per-block label matrices ``P`` (c, r, L)."""
    c, r, L = P.shape
    obs = np.empty((c, r, L))
    np.put_along_axis(obs, P, Y[blocks[None, :, :], P], axis=2)
    tau_j = obs @ Hs
    tau = tau_j.mean(axis=1)
    if r < 2:
        return tau, np.zeros((c, L, L))
    d = tau_j - tau[:, None, :]
    cov = np.einsum("cja,cjb->cab", d, d) / (r * (r - 1))
    return tau, cov


def _chunks(state, count, step, chunk=CHUNK):
    cur = np.array(state, dtype=np.int64, copy=True)
    left = count
    while left > 0:
        size = min(chunk, left)
        out = np.empty((size,) + cur.shape, dtype=np.int64)
        for t in range(size):
            out[t] = cur
            step(cur)
        left -= size
        yield out


class _Kahan:
    def __init__(self, shape):
        self.s = np.zeros(shape)
        self.c = np.zeros(shape)

    def add(self, x):
        t = self.s + x
        big = np.abs(self.s) >= np.abs(x)
        self.c += np.where(big, (self.s - t) + x, (x - t) + self.s)
        self.s = t

    def total(self):
        return self.s + self.c


def _np_first(batch, step, state, count, L):
    s_tau, s_cov = _Kahan(L), _Kahan((L, L))
    for states in _chunks(state, count, step):
        tau, cov = batch(states)
        s_tau.add(tau.sum(axis=0))
        s_cov.add(cov.sum(axis=0))
    return s_tau.total(), s_cov.total()


def _np_second(batch, step, state, count, L, center):
    acc = _Kahan((L, L))
    for states in _chunks(state, count, step):
        d = batch(states)[0] - center
        acc.add(d.T @ d)
    return acc.total()


# -- dispatch ---------------------------------------------------------------------


def cr_first_moments(Y, Hs, r, state, count, backend=None):
    """Sums over ``count`` CR assignments of (effect estimate, covariance estimate)."""
    if _resolve(backend) == "numba":
        return _nb_cr_first(Y, Hs, r, state, count)
    return _np_first(lambda A: cr_batch(Y, Hs, r, A), next_permutation, state, count, Hs.shape[0])


def cr_second_moments(Y, Hs, r, state, count, center, backend=None):
    """Sum over ``count`` CR assignments of centered effect outer products."""
    if _resolve(backend) == "numba":
        return _nb_cr_second(Y, Hs, r, state, count, center)
    return _np_second(lambda A: cr_batch(Y, Hs, r, A), next_permutation, state, count, Hs.shape[0], center)


def mp_first_moments(Y, Hs, blocks, state, count, backend=None):
    if _resolve(backend) == "numba":
        return _nb_mp_first(Y, Hs, blocks, state, count)
    return _np_first(lambda P: mp_batch(Y, Hs, blocks, P), _next_blocks, state, count, Hs.shape[0])


def mp_second_moments(Y, Hs, blocks, state, count, center, backend=None):
    if _resolve(backend) == "numba":
        return _nb_mp_second(Y, Hs, blocks, state, count, center)
    return _np_second(lambda P: mp_batch(Y, Hs, blocks, P), _next_blocks, state, count, Hs.shape[0], center)
