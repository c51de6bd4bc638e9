"""Covariances of fixed-time Gabor slices and their factorizations.

Model covariances follow from the window DFT and the power spectrum; the
empirical one averages outer products of observed slices.  Every covariance
carries a Cholesky factor (when positive definite) so that quadratic forms
``v^* C^{-1} v`` cost two triangular solves.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .model import PowerSpectrum
from .tfcore import GaborSystem, TFMatrix

log = logging.getLogger(__name__)

__all__ = [
    "NumericalError",
    "SliceCovariance",
    "noise_cov",
    "signal_cov",
    "spectral_cov",
    "shifted_total_cov",
    "empirical_slice_cov",
    "quad_form",
    "quad_form_all_shifts",
    "min_eig_floor",
    "to_csv",
]

KINDS = ("model_noise", "model_signal", "model_total", "empirical")


class NumericalError(ArithmeticError):
    """A covariance that has to be positive definite is not."""


@dataclass(frozen=True, eq=False)
class SliceCovariance:
    """Hermitian ``M x M`` covariance of one Gabor time slice.

    ``factor`` is the lower Cholesky factor, or ``None`` when ``matrix`` is
    only semi-definite (e.g. a noiseless signal covariance).
    """

    matrix: np.ndarray
    kind: str
    offset: int = 0
    ridge: float = 0.0
    factor: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        C = np.array(self.matrix, dtype=complex)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError("covariance must be square")
        # symmetrize away rounding so downstream Hermitian solvers see exact symmetry
        C = 0.5 * (C + C.conj().T)
        C.setflags(write=False)
        object.__setattr__(self, "matrix", C)
        if self.factor is None:
            try:
                fac = np.linalg.cholesky(C)
            except np.linalg.LinAlgError:
                fac = None
            if fac is not None:
                fac.setflags(write=False)
            object.__setattr__(self, "factor", fac)

    @property
    def M(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_factorized(self) -> bool:
        return self.factor is not None

    def precision(self) -> np.ndarray:
        """``C^{-1}`` from the cached factor."""
        if self.factor is None:
            raise NumericalError("covariance is not positive definite")
        return sla.cho_solve((self.factor, True), np.eye(self.M, dtype=complex))


def _lag_matrix(r: np.ndarray) -> np.ndarray:
    """Hermitian circulant ``C[m, m'] = r[(m' - m) mod M]``."""
    M = r.size
    idx = (np.arange(M)[None, :] - np.arange(M)[:, None]) % M
    return r[idx]


def noise_cov(sys: GaborSystem, sigma0: float) -> SliceCovariance:
    """Slice covariance of real white noise with variance ``sigma0**2``.

    ``C[m, m'] = (sigma0^2 / L) sum_k conj(g_hat[k]) g_hat[k - (m'-m) b]``.
    The ``1/L`` comes from the unnormalized DFT; the diagonal is
    ``sigma0^2 ||g||^2``.
    """
    if sigma0 < 0:
        raise ValueError("sigma0 must be nonnegative")
    L, M, b = sys.L, sys.M, sys.b
    gh = sys.window.dft
    k = np.arange(L)
    lags = np.array([np.vdot(gh, gh[(k - d * b) % L]) for d in range(M)])
    C = _lag_matrix(sigma0 ** 2 / L * lags)
    return SliceCovariance(C, "model_noise")


def spectral_cov(sys: GaborSystem, full_spectrum: np.ndarray, c: int = 0,
                 kind: str = "model_signal") -> SliceCovariance:
    """``C[m, m'] = sum_k S[k] conj(g_hat[k - m b - c]) g_hat[k - m' b - c]`` over all ``L`` bins."""
    c = sys.check_offset(c)
    S = np.asarray(full_spectrum, dtype=float)
    if S.size != sys.L:
        raise ValueError(f"spectrum length {S.size} != L={sys.L}")
    L, M, b = sys.L, sys.M, sys.b
    support = np.flatnonzero(S)
    if support.size == 0:
        return SliceCovariance(np.zeros((M, M), dtype=complex), kind, c)
    A = sys.window.dft[(support[:, None] - np.arange(M)[None, :] * b - c) % L]
    C = (A.conj().T * S[support]) @ A
    return SliceCovariance(C, kind, c)


def signal_cov(sys: GaborSystem, spec: PowerSpectrum, c: int = 0) -> SliceCovariance:
    """Slice covariance of the analytic stationary process on the lattice offset ``c``."""
    if spec.length != sys.L:
        raise ValueError(f"spectrum length {spec.length} != L={sys.L}")
    return spectral_cov(sys, spec.full(), c, "model_signal")


def shifted_total_cov(signal: SliceCovariance, noise: SliceCovariance, delta: int) -> SliceCovariance:
    """``signal[m - delta, m' - delta] + noise[m, m']`` with circular indices."""
    if signal.M != noise.M:
        raise ValueError(f"dimension mismatch: {signal.M} vs {noise.M}")
    d = int(delta) % signal.M
    S = np.roll(signal.matrix, (d, d), axis=(0, 1))
    return SliceCovariance(S + noise.matrix, "model_total", signal.offset)


def empirical_slice_cov(tf: TFMatrix | np.ndarray, lambda_rel: float = 1e-6,
                        offset: int | None = None) -> SliceCovariance:
    """Average of slice outer products, ridge-regularized.

    ``C = (1/N) sum_n tf[:, n] tf[:, n]^*`` with no mean subtraction, then
    ``C += lambda I`` where ``lambda = lambda_rel * trace(C) / M``.

    Raises
    ------
    NumericalError
        If the regularized matrix is not numerically positive definite.
    """
    if isinstance(tf, TFMatrix):
        X, c = tf.coefficients, tf.offset
    else:
        X, c = np.asarray(tf), (offset or 0)
    M, N = X.shape
    if N < 2:
        raise ValueError("need at least two frames")
    if lambda_rel < 0:
        raise ValueError("lambda_rel must be nonnegative")
    C = (X @ X.conj().T) / N
    lam = lambda_rel * float(np.trace(C).real) / M
    C = C + lam * np.eye(M)
    C = 0.5 * (C + C.conj().T)
    ev = np.linalg.eigvalsh(C)
    scale = max(float(np.trace(C).real) / M, np.finfo(float).tiny)
    if ev[0] <= 1e-12 * scale:
        raise NumericalError(
            f"empirical slice covariance is singular (min eigenvalue {ev[0]:.3g}, "
            f"lambda_rel={lambda_rel:g}); increase lambda_rel")
    try:
        fac = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky failed: {exc}") from exc
    log.debug("empirical covariance M=%d N=%d ridge=%.3g", M, N, lam)
    return SliceCovariance(C, "empirical", c, lam, fac)


def quad_form(cov: SliceCovariance, v: np.ndarray) -> float:
    """``v^* C^{-1} v`` through the cached Cholesky factor."""
    if cov.factor is None:
        raise NumericalError("covariance is not positive definite; cannot evaluate quadratic form")
    v = np.asarray(v, dtype=complex)
    x = sla.cho_solve((cov.factor, True), v)
    q = np.vdot(v, x)
    if abs(q.imag) > 1e-9 * max(abs(q.real), 1.0):
        raise NumericalError(f"quadratic form has imaginary part {q.imag:.3g}")
    return float(q.real)


def quad_form_all_shifts(cov: SliceCovariance, slices: np.ndarray) -> np.ndarray:
    """Quadratic forms of every circular rotation of every slice.

    Returns ``q[j, d] = quad_form(cov, np.roll(slices[j], -d))`` for all
    ``d`` in ``0..M-1``.  A rotation in frequency is a modulation of the
    folded segment ``y = ifft(v)``, so with ``Q = F^* C^{-1} F``

        q[d] = sum_D exp(-2i pi d D / M) h[D],
        h[D] = sum_r conj(y[r]) Q[r, r+D] y[r+D],

    i.e. one ``M``-point FFT per slice after an ``O(M^2)`` diagonal sum.
    ``Q`` is Hermitian, so ``h[-D] = conj(h[D])`` and only half the lags
    are summed.
    """
    slices = np.atleast_2d(np.asarray(slices, dtype=complex))
    M = cov.M
    if slices.shape[1] != M:
        raise ValueError(f"slice length {slices.shape[1]} != M={M}")
    F = np.fft.fft(np.eye(M), axis=0)
    Q = F.conj().T @ cov.precision() @ F
    r = np.arange(M)
    y = np.fft.ifft(slices, axis=1)
    yc = y.conj()
    h = np.empty(slices.shape, dtype=complex)
    for D in range(M // 2 + 1):
        h[:, D] = (yc * np.roll(y, -D, axis=1)) @ Q[r, (r + D) % M]
    for D in range(M // 2 + 1, M):
        h[:, D] = h[:, M - D].conj()
    return np.fft.fft(h, axis=1).real


def min_eig_floor(cov: SliceCovariance, sys: GaborSystem, sigma0: float) -> bool:
    """Check ``lambda_min(C) >= sigma0^2 K_g - 1e-8``."""
    ev = np.linalg.eigvalsh(cov.matrix)
    return bool(ev[0] >= sigma0 ** 2 * sys.kg - 1e-8)


def to_csv(cov: SliceCovariance, path) -> None:
    """Debug export, one matrix row per line, entries written as ``re+imi``."""
    with open(path, "w", newline="\n") as fh:
        for row in cov.matrix:
            fh.write(",".join(f"{z.real:.9g}{z.imag:+.9g}i" for z in row) + "\n")
