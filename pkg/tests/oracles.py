"""Slow, literal reference implementations used as test oracles.

Each one transcribes a defining sum directly, with no folding, FFT tricks
or shared factorizations, so agreement with the fast code is evidence
rather than tautology.
"""
from __future__ import annotations

import numpy as np


def dft_direct(x):
    x = np.asarray(x, dtype=complex)
    L = x.size
    t = np.arange(L)
    return np.array([np.sum(x * np.exp(-2j * np.pi * k * t / L)) for k in range(L)])


def stft_direct(x, g, m, n):
    """``sum_t x[t] conj(g[t - n]) exp(-2i pi m (t - n) / L)``."""
    x = np.asarray(x, dtype=complex)
    L = x.size
    t = np.arange(L)
    return np.sum(x * np.conj(g[(t - n) % L]) * np.exp(-2j * np.pi * m * (t - n) / L))


def gabor_direct(x, g, a, b, c):
    L = len(x)
    M, N = L // b, L // a
    return np.array([[stft_direct(x, g, m * b + c, n * a) for n in range(N)] for m in range(M)])


def slice_cov_from_time(g, a_cov_fn, b, c):
    """Slice covariance from the time-domain covariance ``K[t, s] = a_cov_fn(t, s)``.

    ``C[m, m'] = sum_{t,s} conj(phi_m[t]) K[t, s] phi_m'[s]`` with the frame-0
    atoms ``phi_m[t] = g[t] exp(2i pi (m b + c) t / L)``.
    """
    L = g.size
    M = L // b
    t = np.arange(L)
    K = a_cov_fn(t[:, None], t[None, :])
    atoms = np.array([g * np.exp(2j * np.pi * (m * b + c) * t / L) for m in range(M)])
    # coefficient v_m = <x, phi_m>, so E[v v^*] = conj(atoms) K atoms^T
    return atoms.conj() @ K @ atoms.T


def quad_forms_brute(C, v):
    """``q[d] = v^* C_d^{-1} v`` with ``C_d[m, m'] = C[m - d, m' - d]`` built and inverted per shift."""
    M = C.shape[0]
    out = np.empty(M)
    idx = np.arange(M)
    for d in range(M):
        Cd = C[np.ix_((idx - d) % M, (idx - d) % M)]
        out[d] = np.real(np.vdot(v, np.linalg.inv(Cd) @ v))
    return out


def mc_slice_cov(draw, sys, c, n_draws, rng):
    """Monte-Carlo covariance of frame-0 Gabor slices of ``draw(rng)`` on offset ``c``."""
    from wbfm.tfcore import gabor

    acc = np.zeros((sys.M, sys.M), dtype=complex)
    for _ in range(n_draws):
        v = gabor(draw(rng), sys, c).coefficients
        # every frame has the same law; pool them all
        acc += v @ v.conj().T
    return acc / (n_draws * sys.N)
