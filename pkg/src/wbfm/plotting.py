"""Report figures: spectrogram with the modulation overlay, and the convergence curve."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .tfcore import GaborSystem, gabor_all_offsets  # noqa: E402

__all__ = ["plot_overlay", "plot_convergence"]

# keep PNGs free of version strings so reruns produce identical files
_META = {"Software": None}


def plot_overlay(path, Y: np.ndarray, sys: GaborSystem, gamma_prime_hat: np.ndarray,
                 gamma_prime_true: np.ndarray | None = None) -> None:
    """Spectrogram of ``Y`` (all lattice offsets interleaved) with per-sample ``gamma'`` curves.

    The true curve, when given, is drawn shifted by the constant that best
    matches the estimate, since only that class of curves is identifiable.
    """
    L, N, a = sys.L, sys.N, sys.a
    spec = np.empty((L, N))
    for tf in gabor_all_offsets(Y, sys):
        spec[tf.offset::sys.b] = np.abs(tf.coefficients)
    half = L // 2 + 1
    db = 20 * np.log10(spec[:half] + 1e-12 * spec.max())
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.imshow(db, origin="lower", aspect="auto", cmap="magma",
              extent=(0, N * a, 0, half), vmin=db.max() - 60, vmax=db.max())
    t = np.arange(L)
    ax.plot(t, gamma_prime_hat, color="cyan", lw=1.2, label="estimate")
    if gamma_prime_true is not None:
        shift = float(np.mean(gamma_prime_hat - gamma_prime_true))
        ax.plot(t, gamma_prime_true + shift, color="white", lw=1.0, ls="--",
                label="ground truth (best constant added)")
    ax.set_xlabel("time (samples)")
    ax.set_ylabel("frequency (bins)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def plot_convergence(path, mean: np.ndarray, std: np.ndarray) -> None:
    """Log-log mean stopping criterion per iteration with a one-std band."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    it = np.arange(1, mean.size + 1)
    ok = mean > 0
    fig, ax = plt.subplots(figsize=(5, 4))
    lo = np.clip(mean - std, mean * 1e-3, None)
    ax.fill_between(it[ok], lo[ok], (mean + std)[ok], color="C0", alpha=0.25, lw=0)
    ax.loglog(it[ok], mean[ok], "o-", color="C0", ms=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("stopping criterion")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
