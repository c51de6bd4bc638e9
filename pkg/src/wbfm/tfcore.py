"""Periodic discrete Fourier and Gabor analysis on frequency-shifted lattices.

Everything here is circular: signals and windows have length ``L`` and are
indexed modulo ``L``.  The DFT uses the negative exponent on analysis and a
``1/L`` factor on the inverse, which is what :func:`numpy.fft.fft` does.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "FrequencyIndexing",
    "Window",
    "GaborSystem",
    "TFMatrix",
    "dft",
    "idft",
    "stft",
    "stft_dense",
    "gabor",
    "gabor_all_offsets",
    "window_kg",
    "make_window",
]


def dft(x: np.ndarray) -> np.ndarray:
    """``x_hat[k] = sum_t x[t] exp(-2i pi k t / L)``."""
    return np.fft.fft(np.asarray(x, dtype=complex))


def idft(x_hat: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dft` (carries the ``1/L`` factor)."""
    return np.fft.ifft(np.asarray(x_hat, dtype=complex))


@dataclass(frozen=True)
class FrequencyIndexing:
    """Integer frequency intervals for a signal of length ``L``.

    ``full_range`` is the centred interval of ``L`` integers and
    ``positive_range`` its nonnegative part (Nyquist included when ``L`` is
    even).
    """

    length: int

    @property
    def full_range(self) -> np.ndarray:
        L = self.length
        if L % 2 == 0:
            return np.arange(1 - L // 2, L // 2 + 1)
        return np.arange(-(L - 1) // 2, (L - 1) // 2 + 1)

    @property
    def positive_range(self) -> np.ndarray:
        return np.arange(0, self.length // 2 + 1)

    def centered(self, t: np.ndarray) -> np.ndarray:
        """Fold indices modulo ``L`` into ``full_range``."""
        L = self.length
        lo = self.full_range[0]
        return (np.asarray(t) - lo) % L + lo


@dataclass(frozen=True, eq=False)
class Window:
    """Dense, length-``L`` analysis window with its DFT."""

    samples: np.ndarray

    def __post_init__(self):
        g = np.array(self.samples, dtype=complex)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("window samples must be a non-empty 1-D array")
        g.setflags(write=False)
        object.__setattr__(self, "samples", g)
        if self.energy <= 0:
            raise ValueError("window has zero energy")

    @property
    def length(self) -> int:
        return self.samples.size

    @cached_property
    def dft(self) -> np.ndarray:
        out = dft(self.samples)
        out.setflags(write=False)
        return out

    @cached_property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))


@dataclass(frozen=True, eq=False)
class GaborSystem:
    """Window plus separable lattice: hop ``a`` in time, stride ``b`` in frequency."""

    window: Window
    a: int
    b: int

    def __post_init__(self):
        L = self.window.length
        for name, val in (("a", self.a), ("b", self.b)):
            if int(val) != val or val <= 0:
                raise ValueError(f"{name} must be a positive integer, got {val!r}")
            if L % val:
                raise ValueError(f"{name}={val} does not divide L={L}")

    @property
    def L(self) -> int:
        return self.window.length

    @property
    def M(self) -> int:
        return self.L // self.b

    @property
    def N(self) -> int:
        return self.L // self.a

    @property
    def indexing(self) -> FrequencyIndexing:
        return FrequencyIndexing(self.L)

    @cached_property
    def kg(self) -> float:
        return window_kg(self)

    @cached_property
    def _folded_window(self) -> np.ndarray:
        # conj(g[r + kM]) arranged as (b, M)
        return np.conj(self.window.samples).reshape(self.b, self.M)

    def check_offset(self, c: int) -> int:
        if int(c) != c or not 0 <= c < self.b:
            raise ValueError(f"lattice offset c={c!r} outside [0, {self.b - 1}]")
        return int(c)


@dataclass(frozen=True, eq=False)
class TFMatrix:
    """Gabor coefficients ``coefficients[m, n] = V_g x(m b + c, n a)``."""

    coefficients: np.ndarray
    system: GaborSystem
    offset: int = 0

    @property
    def M(self) -> int:
        return self.coefficients.shape[0]

    @property
    def N(self) -> int:
        return self.coefficients.shape[1]

    def slice(self, n: int) -> np.ndarray:
        return self.coefficients[:, n]


def stft(x: np.ndarray, g: Window, m: int, n: int) -> complex:
    """Single STFT coefficient by direct summation.

    ``sum_t x[t] conj(g[t-n]) exp(-2i pi m (t-n) / L)``, indices modulo ``L``.
    The phase is referenced to the window position ``n``.
    """
    x = np.asarray(x, dtype=complex)
    L = x.size
    s = np.arange(L)
    # substitute t = n + s
    seg = x[(n + s) % L] * np.conj(g.samples[s])
    return complex(np.sum(seg * np.exp(-2j * np.pi * ((m * s) % L) / L)))


def stft_dense(x: np.ndarray, g: Window, hop: int = 1) -> np.ndarray:
    """Full-frequency STFT on time positions ``0, hop, 2 hop, ...``; shape ``(L, L/hop)``."""
    x = np.asarray(x, dtype=complex)
    L = x.size
    s = np.arange(L)
    times = np.arange(0, L, hop)
    segs = x[(times[:, None] + s[None, :]) % L] * np.conj(g.samples)[None, :]
    return np.fft.fft(segs, axis=1).T


def _folded_segments(x: np.ndarray, sys: GaborSystem, c: int) -> np.ndarray:
    """Windowed segments folded modulo ``M`` and pre-modulated by offset ``c``.

    Returns shape ``(N, M)``; the ``M``-point FFT along the last axis gives the
    Gabor slices.
    """
    L, M, N, a, b = sys.L, sys.M, sys.N, sys.a, sys.b
    s = np.arange(L)
    segs = x[(np.arange(N)[:, None] * a + s[None, :]) % L]
    segs = segs * np.conj(sys.window.samples)[None, :]
    if c:
        segs = segs * np.exp(-2j * np.pi * c * s / L)[None, :]
    return segs.reshape(N, b, M).sum(axis=1)


def gabor(x: np.ndarray, sys: GaborSystem, c: int = 0) -> TFMatrix:
    """Gabor transform on the lattice shifted by ``c`` frequency bins.

    Entry ``[m, n]`` equals ``stft(x, g, m*b + c, n*a)``.  Computed by folding
    each windowed segment modulo ``M`` and taking an ``M``-point FFT.
    """
    c = sys.check_offset(c)
    x = np.asarray(x, dtype=complex)
    if x.size != sys.L:
        raise ValueError(f"signal length {x.size} != L={sys.L}")
    coeffs = np.fft.fft(_folded_segments(x, sys, c), axis=1).T
    return TFMatrix(np.ascontiguousarray(coeffs), sys, c)


def gabor_all_offsets(x: np.ndarray, sys: GaborSystem) -> list[TFMatrix]:
    """The ``b`` interleaved transforms, one per offset ``c = 0..b-1``."""
    return [gabor(x, sys, c) for c in range(sys.b)]


def window_kg(sys: GaborSystem) -> float:
    """``min_t sum_{k<b} |g[t + k M]|^2``: the invertibility constant of the window."""
    g2 = np.abs(sys.window.samples) ** 2
    return float(g2.reshape(sys.b, sys.M).sum(axis=0).min())


def make_window(kind: str, L: int, width: float) -> Window:
    """Unit-norm, ``L``-periodic window centred at sample 0.

    Parameters
    ----------
    kind : {"gauss", "hann", "rect"}
        ``gauss`` is ``exp(-pi t^2 / width^2)`` periodized over all copies;
        its equivalent width ``sum g / g(0)`` is ``width``.  ``hann`` and
        ``rect`` are supported on ``width`` samples around 0.
    L : int
        Signal length.
    width : float
        Width in samples.
    """
    if L < 4:
        raise ValueError("window length L must be at least 4")
    if not width > 0:
        raise ValueError(f"window width must be positive, got {width!r}")
    t = FrequencyIndexing(L).centered(np.arange(L)).astype(float)
    if kind == "gauss":
        # periodize: sum over enough copies that the tails are below eps
        reps = int(np.ceil(6 * width / L)) + 1
        g = np.zeros(L)
        for k in range(-reps, reps + 1):
            g += np.exp(-np.pi * ((t + k * L) / width) ** 2)
    elif kind == "hann":
        half = width / 2.0
        g = np.where(np.abs(t) < half, 0.5 + 0.5 * np.cos(np.pi * t / half), 0.0)
    elif kind == "rect":
        n = int(round(min(width, L)))
        if n < 1:
            raise ValueError(f"rect width {width!r} rounds to zero samples")
        lo = -(n // 2)
        g = ((t >= lo) & (t < lo + n)).astype(float)
    else:
        raise ValueError(f"unknown window kind {kind!r}")
    g = g / np.linalg.norm(g)
    return Window(g)
