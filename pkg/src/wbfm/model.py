"""Frequency-modulated stationary Gaussian signals.

The observation model is ``Y = Z * exp(2i pi gamma / L) + N``: a circular
analytic Gaussian process ``Z`` with power spectrum ``S`` on the positive
bins, a smooth modulation ``gamma`` and real white noise ``N``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .tfcore import FrequencyIndexing, GaborSystem, dft, idft

log = logging.getLogger(__name__)

__all__ = [
    "PowerSpectrum",
    "ModulationLaw",
    "ModelSignal",
    "RemainderBound",
    "make_spectrum",
    "make_modulation",
    "synthesize_stationary",
    "analytic_signal",
    "synthesize_observation",
    "remainder_bound",
    "snr_to_sigma",
]


@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    """Per-bin variances on ``0..floor(L/2)``.

    The process variance is ``values.sum()``.  DC and (for even ``L``) the
    Nyquist bin must be zero.
    """

    values: np.ndarray
    length: int

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        L = int(self.length)
        if v.shape != (L // 2 + 1,):
            raise ValueError(f"spectrum must have {L // 2 + 1} entries for L={L}, got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("spectrum values must be finite and nonnegative")
        if v[0] != 0:
            raise ValueError("spectrum must vanish at DC")
        if L % 2 == 0 and v[-1] != 0:
            raise ValueError("spectrum must vanish at the Nyquist bin for even L")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "length", L)

    @property
    def variance(self) -> float:
        return float(self.values.sum())

    def full(self) -> np.ndarray:
        """Length-``L`` array over DFT bins, zero on negative frequencies."""
        out = np.zeros(self.length)
        out[: self.values.size] = self.values
        return out

    @classmethod
    def from_full(cls, full: np.ndarray) -> "PowerSpectrum":
        """Restrict a length-``L`` per-bin array to the positive bins, zeroing the endpoints."""
        full = np.asarray(full, dtype=float)
        L = full.size
        v = np.clip(full[: L // 2 + 1], 0.0, None).copy()
        v[0] = 0.0
        if L % 2 == 0:
            v[-1] = 0.0
        return cls(v, L)


@dataclass(frozen=True, eq=False)
class ModulationLaw:
    """Per-sample modulation: phase ``2 pi gamma / L`` and frequency ``gamma_prime`` in bins."""

    gamma: np.ndarray
    gamma_prime: np.ndarray
    gamma_second_sup: float

    @property
    def length(self) -> int:
        return self.gamma.size

    @classmethod
    def from_gamma_prime(cls, gamma_prime: np.ndarray, gamma_second_sup: float | None = None):
        gp = np.asarray(gamma_prime, dtype=float)
        gamma = np.concatenate(([0.0], np.cumsum(gp[:-1])))
        if gamma_second_sup is None:
            gamma_second_sup = float(np.max(np.abs(np.diff(gp)))) if gp.size > 1 else 0.0
        return cls(gamma, gp, float(gamma_second_sup))


@dataclass(frozen=True, eq=False)
class ModelSignal:
    Z: np.ndarray
    Y: np.ndarray
    noise_sigma: float
    sigma_z2: float

    @property
    def Y_real(self) -> np.ndarray:
        return self.Y.real

    @property
    def length(self) -> int:
        return self.Y.size


@dataclass(frozen=True)
class RemainderBound:
    T: float
    mu1: float
    mu2: float
    bound: float


def snr_to_sigma(sigma_z2: float, snr_db: float) -> float:
    """Noise standard deviation giving ``10 log10(sigma_Z^2 / sigma_0^2) = snr_db``."""
    return math.sqrt(sigma_z2 / 10.0 ** (snr_db / 10.0))


def make_spectrum(kind: str, L: int, *, lo: float, hi: float, variance: float = 1.0,
                  taper: float = 0.25, smooth: float = 8.0, seed: int = 0,
                  n_partials: int = 16, peak_width: float = 2.0,
                  floor: float = 0.0) -> PowerSpectrum:
    """Band spectrum generators used by the experiments.

    ``raised_cosine`` is flat on ``[lo, hi]`` with cosine tapers occupying the
    fraction ``taper`` of the band on each side.  ``smooth_random`` multiplies
    that envelope by a log-normal random profile smoothed over ``smooth``
    bins.  ``partials`` multiplies it by ``n_partials`` Gaussian peaks of
    standard deviation ``peak_width`` bins at positions drawn uniformly in
    the band (irregular placement avoids the shift ambiguity of a regular
    comb); a fraction ``floor`` of its variance is instead spread over the
    plain envelope.
    ``line`` puts all the variance on bin ``round(lo)``.  Every kind is
    scaled to total ``variance``.
    """
    k = np.arange(L // 2 + 1, dtype=float)
    if kind == "line":
        v = np.zeros_like(k)
        v[int(round(lo))] = 1.0
    elif kind in ("raised_cosine", "smooth_random", "partials"):
        if not 0 < lo < hi < L / 2:
            raise ValueError(f"band [{lo}, {hi}] must lie strictly inside (0, L/2)")
        width = hi - lo
        edge = max(taper * width, 1e-9)
        v = np.zeros_like(k)
        inside = (k >= lo) & (k <= hi)
        d = np.minimum(k - lo, hi - k)
        v[inside] = np.where(d[inside] >= edge, 1.0,
                             0.5 - 0.5 * np.cos(np.pi * d[inside] / edge))
        if kind == "smooth_random":
            rng = np.random.default_rng(seed)
            noise = rng.standard_normal(k.size)
            ker = np.exp(-0.5 * (np.arange(-4 * smooth, 4 * smooth + 1) / smooth) ** 2)
            prof = np.convolve(noise, ker / np.linalg.norm(ker), mode="same")
            v = v * np.exp(0.5 * prof)
        elif kind == "partials":
            if not (n_partials >= 1 and peak_width > 0):
                raise ValueError("partials spectrum needs n_partials >= 1 and positive peak_width")
            centres = np.random.default_rng(seed).uniform(lo, hi, int(n_partials))
            if not 0 <= floor < 1:
                raise ValueError(f"floor must lie in [0, 1), got {floor}")
            comb = np.exp(-0.5 * ((k[:, None] - centres[None, :]) / peak_width) ** 2).sum(axis=1)
            lines = v * comb
            v = (1 - floor) * lines / lines.sum() + floor * v / v.sum()
    else:
        raise ValueError(f"unknown spectrum kind {kind!r}")
    v[0] = 0.0
    if L % 2 == 0:
        v[-1] = 0.0
    if v.sum() <= 0:
        raise ValueError("spectrum has no energy on admissible bins")
    return PowerSpectrum(v * (variance / v.sum()), L)


def make_modulation(kind: str, L: int, *, k0: float = 0.0, rate: float = 0.0,
                    amplitude: float = 0.0, freq: float = 1.0, phase: float = 0.0) -> ModulationLaw:
    """Modulation laws for experiments.

    ``constant``: ``gamma'(t) = k0``.  ``linear_chirp``: ``k0 + rate t``.
    ``sine_fm``: ``k0 + amplitude sin(2 pi freq t / L + phase)``.  ``gamma``
    is the exclusive cumulative sum of ``gamma'`` so ``gamma(0) = 0``.

    For ``sine_fm`` the sup of the second difference is taken from the
    closed form ``2 A sin(pi f / L)``, the exact sup of ``|Δ sin|`` over
    real ``t``.
    """
    t = np.arange(L, dtype=float)
    if kind == "constant":
        gp = np.full(L, float(k0))
        g2 = 0.0
    elif kind == "linear_chirp":
        gp = k0 + rate * t
        g2 = abs(rate)
    elif kind == "sine_fm":
        gp = k0 + amplitude * np.sin(2 * np.pi * freq * t / L + phase)
        g2 = 2 * abs(amplitude) * abs(math.sin(math.pi * freq / L))
    else:
        raise ValueError(f"unknown modulation kind {kind!r}")
    tol = 1e-9
    if gp.min() < -tol or gp.max() > L - 1 + tol:
        raise ValueError(
            f"{kind} modulation leaves [0, L-1]: gamma' spans [{gp.min():.3f}, {gp.max():.3f}]")
    return ModulationLaw.from_gamma_prime(gp, g2)


def synthesize_stationary(spec: PowerSpectrum, seed) -> np.ndarray:
    """Draw the analytic stationary process with per-bin variances ``spec``.

    Bin ``nu`` of the DFT is ``L sqrt(S[nu]) xi_nu`` with ``xi`` standard
    circular complex Gaussian, so ``E[Z_t conj(Z_s)] = sum S[nu] e^{2i pi nu (t-s)/L}``.
    """
    rng = np.random.default_rng(seed)
    L = spec.length
    K = spec.values.size
    xi = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) / math.sqrt(2.0)
    spectrum = np.zeros(L, dtype=complex)
    spectrum[:K] = L * np.sqrt(spec.values) * xi
    return idft(spectrum)


def analytic_signal(x_r: np.ndarray) -> np.ndarray:
    """One-sided-spectrum analytic signal of a real, length-``L`` array.

    Positive bins are doubled, DC and Nyquist kept, negative bins zeroed.
    Nonzero DC or Nyquist content is allowed but triggers a warning because
    the modulation model assumes both vanish.
    """
    x_r = np.asarray(x_r, dtype=float)
    L = x_r.size
    xh = dft(x_r)
    scale = max(np.abs(xh).max(), 1e-300)
    edges = [0] + ([L // 2] if L % 2 == 0 else [])
    if np.any(np.abs(xh[edges]) > 1e-9 * scale):
        warnings.warn("analytic_signal: input has DC or Nyquist content", RuntimeWarning,
                      stacklevel=2)
    h = np.zeros(L)
    h[0] = 1.0
    if L % 2 == 0:
        h[L // 2] = 1.0
        h[1:L // 2] = 2.0
    else:
        h[1:(L + 1) // 2] = 2.0
    return idft(xh * h)


def synthesize_observation(Z: np.ndarray, law: ModulationLaw, sigma0: float, seed) -> ModelSignal:
    """``Y_t = Z_t exp(2i pi gamma(t)/L) + N_t`` with real white noise of std ``sigma0``."""
    Z = np.asarray(Z, dtype=complex)
    L = Z.size
    if law.length != L:
        raise ValueError(f"modulation length {law.length} != signal length {L}")
    if sigma0 < 0:
        raise ValueError("sigma0 must be nonnegative")
    rng = np.random.default_rng(seed)
    noise = sigma0 * rng.standard_normal(L)
    Y = Z * np.exp(2j * np.pi * law.gamma / L) + noise
    return ModelSignal(Z, Y, float(sigma0), float(np.mean(np.abs(Z) ** 2)))


def remainder_bound(sys: GaborSystem, sigma_z2: float, gamma_second_sup: float) -> RemainderBound:
    """Bound on ``|E[R[m] conj R[m']]|`` for the local frequency-shift approximation.

    The window is read on the centred index set; ``T = sqrt(L / (pi sup|gamma''|))``
    splits it into a near part (weighted by ``t^2``) and a tail.
    """
    if gamma_second_sup < 0:
        raise ValueError("gamma_second_sup must be nonnegative")
    L = sys.L
    t = sys.indexing.centered(np.arange(L)).astype(float)
    absg = np.abs(sys.window.samples)
    if gamma_second_sup == 0:
        T = math.inf
        near = np.ones(L, dtype=bool)
    else:
        T = math.sqrt(L / (math.pi * gamma_second_sup))
        near = np.abs(t) <= T
    mu1 = float(absg[~near].sum())
    mu2 = float((t[near] ** 2 * absg[near]).sum())
    bound = sigma_z2 * (math.pi * math.e / L * gamma_second_sup * mu2 + 2 * mu1) ** 2
    return RemainderBound(T, mu1, mu2, float(bound))
