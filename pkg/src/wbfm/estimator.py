"""Joint estimation of the modulation law and the power spectrum.

The loop alternates two steps.  Given a modulation estimate, demodulate the
observation and estimate the covariance of its Gabor slices; given that
covariance, find for every frame the circular frequency shift (coarse bin
``delta`` on lattice offset ``c``) that minimizes ``v^* C_delta^{-1} v``.
The fine-grid frequency estimate is ``gamma' = b * delta + c``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.interpolate
import scipy.signal

from .covariance import (
    NumericalError,
    SliceCovariance,
    empirical_slice_cov,
    quad_form_all_shifts,
    spectral_cov,
)
from .model import ModulationLaw, PowerSpectrum
from .tfcore import GaborSystem, TFMatrix, _folded_segments, gabor

log = logging.getLogger(__name__)

__all__ = [
    "EstimatorConfig",
    "ModulationTrack",
    "IterationLog",
    "init_center_of_mass",
    "ml_shift_slice",
    "ml_shift_refined",
    "demodulate",
    "track_from_frames",
    "estimate_spectrum",
    "estimate_spectrum_full",
    "stopping_criterion",
    "run_algorithm1",
    "evaluate_track",
    "spectral_window",
    "spectrum_error",
]


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings of the alternating estimation loop.

    ``covariance`` selects how the demodulated slice covariance is formed:
    ``"empirical"`` averages slice outer products, ``"spectral"`` builds it
    from the demodulated signal's periodogram smoothed over ``spectral_smooth``
    bins (the slice covariance of a stationary signal is a function of its
    spectrum).  ``search_range`` limits admissible fine-grid frequencies
    ``gamma'`` (inclusive bounds).  ``anchor_mean`` resolves the additive
    indeterminacy of ``gamma'`` by keeping its frame average at the
    centre-of-mass initialization, to the nearest bin.
    """

    eps: float = 1e-3
    max_iter: int = 50
    lambda_rel: float = 1e-6
    interpolation: str = "cubic"
    search_range: tuple[int, int] | None = None
    covariance: str = "empirical"
    spectrum_method: str = "welch"
    welch_nperseg: int = 256
    spectral_smooth: int = 5
    anchor_mean: bool = True
    sigma0: float | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if self.lambda_rel < 0:
            raise ValueError("lambda_rel must be nonnegative")
        if self.interpolation not in ("linear", "cubic"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if self.covariance not in ("empirical", "spectral"):
            raise ValueError(f"unknown covariance method {self.covariance!r}")
        if int(self.spectral_smooth) != self.spectral_smooth or self.spectral_smooth < 1:
            raise ValueError("spectral_smooth must be a positive integer")
        if self.spectrum_method not in ("welch", "marginal"):
            raise ValueError(f"unknown spectrum method {self.spectrum_method!r}")


@dataclass(frozen=True, eq=False)
class ModulationTrack:
    """Frame-rate and sample-rate modulation estimates.

    ``delta`` is in coarse-grid units (``gamma'(an) / b``); ``gamma_prime_frames``
    and ``gamma_prime`` in DFT bins; ``gamma`` in the phase units of the
    model (phase ``2 pi gamma / L``).
    """

    delta: np.ndarray
    gamma_prime_frames: np.ndarray
    gamma_prime: np.ndarray
    gamma: np.ndarray
    offsets: np.ndarray
    delta_coarse: np.ndarray


@dataclass
class IterationLog:
    criterion: list[float] = field(default_factory=list)
    tracks: list[ModulationTrack] = field(default_factory=list)
    spectrum: PowerSpectrum | None = None
    spectrum_full: np.ndarray | None = None
    spectrum_anchor: int = 0
    converged: bool = False
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    @property
    def track(self) -> ModulationTrack:
        return self.tracks[-1]

    @property
    def iterations(self) -> int:
        return len(self.criterion)


def init_center_of_mass(tf: TFMatrix | np.ndarray) -> np.ndarray:
    """Per-frame centroid ``sum_m m |G[m,n]|^2 / sum_m |G[m,n]|^2`` in coarse bins."""
    X = tf.coefficients if isinstance(tf, TFMatrix) else np.asarray(tf)
    M = X.shape[0]
    P = np.abs(X) ** 2
    tot = P.sum(axis=0)
    m = np.arange(M)
    out = np.full(X.shape[1], M / 2.0)
    ok = tot > 0
    if not ok.all():
        warnings.warn(f"{np.count_nonzero(~ok)} all-zero frame(s); centroid set to M/2",
                      RuntimeWarning, stacklevel=2)
    out[ok] = (m @ P[:, ok]) / tot[ok]
    return out


def _argmin_candidates(scores: np.ndarray, candidates: np.ndarray):
    # candidates sorted ascending, so argmin's first-hit rule breaks ties toward smaller delta
    sub = scores[..., candidates]
    j = np.argmin(sub, axis=-1)
    return candidates[j], np.take_along_axis(sub, j[..., None], axis=-1)[..., 0]


def _candidates(cands, M: int) -> np.ndarray:
    if cands is None:
        return np.arange(M)
    c = np.unique(np.asarray(list(cands), dtype=int))
    if c.size == 0:
        raise ValueError("empty candidate set")
    if c[0] < 0 or c[-1] >= M:
        raise ValueError(f"candidates must lie in [0, {M - 1}]")
    return c


def ml_shift_slice(slice_: np.ndarray, cov0: SliceCovariance, candidates=None) -> tuple[int, float]:
    """Maximum-likelihood circular shift of one slice.

    Minimizes ``v^* C_delta^{-1} v`` over ``delta``; the log-determinant is
    shift-invariant and dropped.  Ties go to the smaller ``delta``.
    """
    cands = _candidates(candidates, cov0.M)
    scores = quad_form_all_shifts(cov0, np.asarray(slice_)[None, :])[0]
    d, s = _argmin_candidates(scores, cands)
    return int(d), float(s)


def ml_shift_refined(slices, covs, candidates=None) -> tuple[float, int]:
    """Two-stage search over coarse shifts and lattice offsets for one frame.

    Parameters
    ----------
    slices : sequence of b arrays of length M
        The frame's slice on each lattice offset ``c = 0..b-1``.
    covs : SliceCovariance or sequence of b of them
        Reference (zero-shift) covariance for each offset.  A single
        covariance is used for every offset.
    candidates : None, iterable of int, or sequence of b iterables
        Admissible coarse shifts, shared or per offset.

    Returns
    -------
    gamma_prime : float
        ``b * delta_c* + c*``.
    c_star : int
        Winning offset; ties go to the smaller ``c``.
    """
    slices = [np.asarray(s) for s in slices]
    b = len(slices)
    if isinstance(covs, SliceCovariance):
        covs = [covs] * b
    if len(covs) != b:
        raise ValueError("need one covariance per offset")
    per_c = (candidates is not None and len(candidates) == b
             and all(np.ndim(c) == 1 for c in candidates)
             and not all(np.ndim(c) == 0 for c in candidates))
    best = (math.inf, 0, 0)
    for c in range(b):
        cands = candidates[c] if per_c else candidates
        d, s = ml_shift_slice(slices[c], covs[c], cands)
        if s < best[0]:
            best = (s, d, c)
    _, d, c = best
    return float(b * d + c), int(c)


def demodulate(Y: np.ndarray, gamma_hat: np.ndarray) -> np.ndarray:
    """``U = Y exp(-2i pi gamma_hat / L)``."""
    Y = np.asarray(Y, dtype=complex)
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    if Y.shape != gamma_hat.shape:
        raise ValueError(f"length mismatch {Y.shape} vs {gamma_hat.shape}")
    return Y * np.exp(-2j * np.pi * gamma_hat / Y.size)


def track_from_frames(gamma_prime_frames: np.ndarray, sys: GaborSystem, interp: str = "cubic",
                      offsets=None, delta_coarse=None) -> ModulationTrack:
    """Interpolate frame-rate ``gamma'`` to every sample (circularly) and integrate."""
    gf = np.asarray(gamma_prime_frames, dtype=float)
    N, L, a = sys.N, sys.L, sys.a
    if gf.size != N:
        raise ValueError(f"expected {N} frame values, got {gf.size}")
    if N < 2:
        raise ValueError("need at least two frames")
    t = np.arange(L, dtype=float)
    tf = np.arange(N + 1, dtype=float) * a
    yf = np.append(gf, gf[0])
    if interp == "linear":
        gp = np.interp(t, tf, yf)
    elif interp == "cubic":
        gp = scipy.interpolate.CubicSpline(tf, yf, bc_type="periodic")(t)
    else:
        raise ValueError(f"unknown interpolation {interp!r}")
    gamma = np.concatenate(([0.0], np.cumsum(gp[:-1])))
    if offsets is None:
        offsets = np.zeros(N, dtype=int)
    if delta_coarse is None:
        delta_coarse = gf / sys.b
    return ModulationTrack(gf / sys.b, gf, gp, gamma, np.asarray(offsets, dtype=int),
                           np.asarray(delta_coarse, dtype=float))


def estimate_spectrum_full(U: np.ndarray, method: str = "welch", *, nperseg: int = 256,
                           sys: GaborSystem | None = None, smooth: int = 5) -> np.ndarray:
    """Per-bin variance estimate over all ``L`` DFT bins.

    ``welch`` averages Hann-windowed periodograms (50% overlap, FFT length
    ``L``) and is scaled so the bins sum to the signal variance.  ``marginal``
    averages ``|STFT(k, na)|^2`` over frames and divides by ``L ||g||^2``.
    ``periodogram`` is ``|U_hat|^2 / L^2`` averaged circularly over ``smooth``
    neighbouring bins; it keeps one-bin resolution, which the others lose.
    """
    U = np.asarray(U, dtype=complex)
    L = U.size
    if method == "periodogram":
        P = np.abs(np.fft.fft(U)) ** 2 / L ** 2
        if smooth > 1:
            ker = np.zeros(L)
            half = smooth // 2
            ker[np.arange(-half, smooth - half) % L] = 1.0 / smooth
            P = np.fft.ifft(np.fft.fft(P) * np.fft.fft(ker)).real
        return np.clip(P, 0.0, None)
    if method == "welch":
        if nperseg > L or nperseg < 2:
            raise ValueError(f"nperseg={nperseg} incompatible with L={L}")
        _, P = scipy.signal.welch(U, fs=1.0, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
                                  nfft=L, detrend=False, return_onesided=False, scaling="density")
        return P / L
    if method == "marginal":
        if sys is None:
            raise ValueError("marginal spectrum needs a GaborSystem")
        if sys.L != L:
            raise ValueError(f"signal length {L} != L={sys.L}")
        out = np.empty(L)
        for c in range(sys.b):
            coeffs = np.fft.fft(_folded_segments(U, sys, c), axis=1)
            out[c::sys.b] = np.mean(np.abs(coeffs) ** 2, axis=0)
        return out / (L * sys.window.energy)
    raise ValueError(f"unknown spectrum method {method!r}")


def estimate_spectrum(U: np.ndarray, method: str = "welch", *, nperseg: int = 256,
                      sys: GaborSystem | None = None, anchor: int = 0) -> PowerSpectrum:
    """Spectrum estimate restricted to the positive bins.

    ``anchor`` rotates the full estimate up by that many bins first, which is
    how a demodulated signal centred near 0 is moved back into the band.
    """
    full = estimate_spectrum_full(U, method, nperseg=nperseg, sys=sys)
    return PowerSpectrum.from_full(np.roll(full, int(anchor)))


def spectral_window(method: str, L: int, *, nperseg: int = 256,
                    sys: GaborSystem | None = None) -> np.ndarray:
    """Frequency kernel ``K`` (sums to 1) with ``E[S_hat] = S (*) K`` for a stationary input.

    Welch smooths by the squared DFT of its Hann segment window, the
    marginal estimator by ``|g_hat|^2``.  ``periodogram`` has the identity kernel.
    """
    if method == "welch":
        h = np.zeros(L)
        h[:nperseg] = scipy.signal.get_window("hann", nperseg)
        K = np.abs(np.fft.fft(h)) ** 2
    elif method == "marginal":
        if sys is None:
            raise ValueError("marginal spectrum needs a GaborSystem")
        K = np.abs(sys.window.dft) ** 2
    elif method == "periodogram":
        K = np.zeros(L)
        K[0] = 1.0
    else:
        raise ValueError(f"unknown spectrum method {method!r}")
    return K / K.sum()


def spectrum_error(estimate_full: np.ndarray, truth: PowerSpectrum, method: str, *,
                   band: tuple[int, int], nperseg: int = 256,
                   sys: GaborSystem | None = None) -> float:
    """Relative L1 error of a spectrum estimate over ``band`` at the estimator's resolution.

    The reference is the generator spectrum seen through the estimator's own
    spectral window (:func:`spectral_window`), so the error measures what the
    estimator can resolve: ``sum |S_hat - S*K| / sum S*K`` over the band.
    ``estimate_full`` must already be aligned with ``truth`` (the additive
    indeterminacy of ``gamma'`` shifts the demodulated spectrum).
    """
    est = np.asarray(estimate_full, dtype=float)
    L = truth.length
    if est.size != L:
        raise ValueError(f"estimate length {est.size} != L={L}")
    K = spectral_window(method, L, nperseg=nperseg, sys=sys)
    ref = np.fft.ifft(np.fft.fft(truth.full()) * np.fft.fft(K)).real
    lo, hi = int(band[0]), int(band[1])
    sl = slice(lo, hi + 1)
    den = ref[sl].sum()
    if den <= 0:
        raise ValueError("reference spectrum has no energy in band")
    return float(np.abs(est[sl] - ref[sl]).sum() / den)


def stopping_criterion(prev: np.ndarray, nxt: np.ndarray) -> float:
    """``||prev - next||_2 / ||next||_2``; ``inf`` (with a warning) when ``next`` is zero."""
    prev = np.asarray(prev, dtype=float)
    nxt = np.asarray(nxt, dtype=float)
    den = np.linalg.norm(nxt)
    if den == 0:
        warnings.warn("stopping criterion: all-zero track", RuntimeWarning, stacklevel=2)
        return math.inf
    return float(np.linalg.norm(prev - nxt) / den)


def _candidate_mask(sys: GaborSystem, search_range) -> np.ndarray | None:
    if search_range is None:
        return None
    lo, hi = search_range
    fine = np.arange(sys.M)[None, :] * sys.b + np.arange(sys.b)[:, None]
    mask = (fine >= lo) & (fine <= hi)
    if not mask.any():
        raise ValueError(f"search_range {search_range} admits no candidate")
    return mask


def _reference_cov(U: np.ndarray, sys: GaborSystem, cfg: EstimatorConfig) -> SliceCovariance:
    if cfg.covariance == "empirical":
        return empirical_slice_cov(gabor(U, sys, 0), cfg.lambda_rel)
    full = estimate_spectrum_full(U, "periodogram", smooth=cfg.spectral_smooth)
    C = spectral_cov(sys, full, 0, "empirical").matrix
    lam = cfg.lambda_rel * float(np.trace(C).real) / sys.M
    cov = SliceCovariance(C + lam * np.eye(sys.M), "empirical", 0, lam)
    if not cov.is_factorized:
        raise NumericalError("spectral slice covariance is not positive definite; "
                             "increase lambda_rel")
    return cov


def _reanchor(gp: np.ndarray, target_mean: float, sys: GaborSystem):
    # Adding a constant to gamma' only shifts the spectrum; pin the frame mean
    # to the initial one (whole bins, so estimates stay on the fine grid).
    shift = int(round(float(np.mean(gp)) - target_mean))
    gp = (gp - shift) % sys.L
    return gp, gp % sys.b, gp // sys.b


def frame_search(Yseg: list[np.ndarray], cov: SliceCovariance, sys: GaborSystem,
                 mask: np.ndarray | None = None):
    """Vectorized two-stage search for every frame.

    ``Yseg[c]`` holds the folded segments (shape ``(N, M)``) of the observation on
    offset ``c``; their FFTs are the slices.  Returns ``(gamma_prime, c_star,
    delta_coarse, score)`` arrays of length ``N``.
    """
    b, N = sys.b, sys.N
    best_score = np.full(N, np.inf)
    best_d = np.zeros(N, dtype=int)
    best_c = np.zeros(N, dtype=int)
    for c in range(b):
        scores = quad_form_all_shifts(cov, np.fft.fft(Yseg[c], axis=1))
        if mask is not None:
            scores = np.where(mask[c][None, :], scores, np.inf)
        d = np.argmin(scores, axis=1)
        s = scores[np.arange(N), d]
        better = s < best_score
        best_score[better] = s[better]
        best_d[better] = d[better]
        best_c[better] = c
    return b * best_d + best_c, best_c, best_d, best_score


def run_algorithm1(Y: np.ndarray, sys: GaborSystem, sigma0: float | None = None,
                   cfg: EstimatorConfig | None = None) -> IterationLog:
    """Alternate covariance re-estimation and ML shift search until the track settles.

    The loop stops when the relative change of the per-frame track drops
    below ``cfg.eps`` or after ``cfg.max_iter`` refinements.  Non-convergence
    is reported through ``IterationLog.converged``.  ``sigma0`` is only
    recorded: the re-estimated covariance already contains the noise.
    """
    cfg = cfg or EstimatorConfig()
    if sigma0 is not None and cfg.sigma0 is None:
        cfg = EstimatorConfig(**{**asdict(cfg), "sigma0": sigma0})
    Y = np.asarray(Y, dtype=complex)
    if Y.size != sys.L:
        raise ValueError(f"signal length {Y.size} != L={sys.L}")
    log_ = IterationLog(config=asdict(cfg))
    mask = _candidate_mask(sys, cfg.search_range)
    Yseg = [_folded_segments(Y, sys, c) for c in range(sys.b)]

    delta0 = init_center_of_mass(np.fft.fft(Yseg[0], axis=1).T)
    track = track_from_frames(sys.b * delta0, sys, cfg.interpolation)
    anchor_mean = float(round(np.mean(track.gamma_prime_frames)))
    log_.tracks.append(track)
    for k in range(cfg.max_iter):
        U = demodulate(Y, track.gamma)
        cov = _reference_cov(U, sys, cfg)
        gp, cstar, dcoarse, _ = frame_search(Yseg, cov, sys, mask)
        if cfg.anchor_mean:
            gp, cstar, dcoarse = _reanchor(gp, anchor_mean, sys)
        new = track_from_frames(gp.astype(float), sys, cfg.interpolation, cstar, dcoarse)
        crit = stopping_criterion(track.delta, new.delta)
        log_.criterion.append(crit)
        log_.tracks.append(new)
        track = new
        log.info("iteration %d: criterion %.4g", k + 1, crit)
        if crit < cfg.eps:
            log_.converged = True
            break
    U = demodulate(Y, track.gamma)
    anchor = int(round(float(np.mean(track.gamma_prime_frames))))
    log_.spectrum_anchor = anchor
    full = estimate_spectrum_full(U, cfg.spectrum_method, nperseg=cfg.welch_nperseg, sys=sys)
    log_.spectrum_full = full
    log_.spectrum = PowerSpectrum.from_full(np.roll(full, anchor))
    return log_


def evaluate_track(estimated: ModulationTrack | np.ndarray, truth: ModulationLaw) -> dict:
    """Per-sample ``gamma'`` errors, raw and after removing the best constant.

    Adding an affine function to ``gamma`` only shifts the spectrum, so
    ``gamma'`` is identifiable up to an additive constant; the corrected
    errors subtract the mean difference (the RMSE-optimal constant).
    """
    est = estimated.gamma_prime if isinstance(estimated, ModulationTrack) else np.asarray(estimated)
    if est.size != truth.length:
        raise ValueError(f"length mismatch {est.size} vs {truth.length}")
    diff = est - truth.gamma_prime
    offset = float(np.mean(diff))
    corr = diff - offset
    return {
        "rmse_corrected": float(np.sqrt(np.mean(corr ** 2))),
        "max_error_corrected": float(np.max(np.abs(corr))),
        "rmse_raw": float(np.sqrt(np.mean(diff ** 2))),
        "max_error_raw": float(np.max(np.abs(diff))),
        "offset": offset,
    }
