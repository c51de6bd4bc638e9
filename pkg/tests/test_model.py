import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wbfm.model import (
    ModulationLaw,
    PowerSpectrum,
    analytic_signal,
    make_modulation,
    make_spectrum,
    remainder_bound,
    snr_to_sigma,
    synthesize_observation,
    synthesize_stationary,
)
from wbfm.tfcore import GaborSystem, dft, make_window


def test_power_spectrum_invariants():
    with pytest.raises(ValueError, match="DC"):
        PowerSpectrum(np.array([1.0, 1, 1, 1, 0]), 8)
    with pytest.raises(ValueError, match="Nyquist"):
        PowerSpectrum(np.array([0.0, 1, 1, 1, 1]), 8)
    with pytest.raises(ValueError):
        PowerSpectrum(np.array([0.0, -1, 1, 1, 0]), 8)
    with pytest.raises(ValueError, match="entries"):
        PowerSpectrum(np.zeros(3), 8)
    s = PowerSpectrum(np.array([0.0, 1, 2, 3]), 7)  # odd L has no Nyquist bin
    assert s.variance == 6
    assert list(s.full()) == [0, 1, 2, 3, 0, 0, 0]


def test_from_full_zeroes_endpoints_and_clips():
    full = np.array([5.0, 1, -2, 3, 4, 9, 9, 9])
    s = PowerSpectrum.from_full(full)
    assert list(s.values) == [0, 1, 0, 3, 0]


@pytest.mark.parametrize("kind", ["raised_cosine", "smooth_random", "partials", "line"])
def test_make_spectrum_kinds(kind):
    s = make_spectrum(kind, 256, lo=20, hi=80, variance=2.0, n_partials=5, peak_width=1.0)
    assert abs(s.variance - 2.0) < 1e-12
    nz = np.flatnonzero(s.values > 1e-12 * s.values.max())
    assert nz.min() >= 20 and nz.max() <= 80


def test_partials_floor():
    s = make_spectrum("partials", 512, lo=50, hi=150, n_partials=3, peak_width=0.5, floor=0.4)
    assert abs(s.variance - 1) < 1e-12
    with pytest.raises(ValueError):
        make_spectrum("partials", 512, lo=50, hi=150, floor=1.0)
    with pytest.raises(ValueError):
        make_spectrum("raised_cosine", 512, lo=50, hi=300)
    with pytest.raises(ValueError):
        make_spectrum("pink", 512, lo=50, hi=150)


def test_modulation_kinds():
    L = 1024
    c = make_modulation("constant", L, k0=7)
    np.testing.assert_allclose(c.gamma, 7 * np.arange(L))
    assert c.gamma_second_sup == 0
    ch = make_modulation("linear_chirp", L, k0=10, rate=0.05)
    assert ch.gamma[0] == 0
    np.testing.assert_allclose(np.diff(ch.gamma), ch.gamma_prime[:-1])
    assert ch.gamma_second_sup == 0.05
    s = make_modulation("sine_fm", L, k0=100, amplitude=20, freq=3)
    assert s.gamma_second_sup >= np.abs(np.diff(s.gamma_prime)).max() - 1e-12
    with pytest.raises(ValueError, match="leaves"):
        make_modulation("sine_fm", L, k0=10, amplitude=20)
    with pytest.raises(ValueError):
        make_modulation("warp", L)


def test_modulation_law_from_gamma_prime():
    law = ModulationLaw.from_gamma_prime(np.array([1.0, 2.0, 4.0]))
    assert list(law.gamma) == [0, 1, 3]
    assert law.gamma_second_sup == 2


def test_synthesis_is_deterministic_and_analytic():
    spec = make_spectrum("raised_cosine", 128, lo=10, hi=40)
    z1 = synthesize_stationary(spec, 5)
    z2 = synthesize_stationary(spec, 5)
    assert np.array_equal(z1, z2)
    zh = dft(z1)
    assert np.all(np.abs(zh[65:]) < 1e-9)
    assert np.all(np.abs(zh[:10]) < 1e-9)


def test_synthesis_covariance_and_circularity():
    # E[Z_t conj Z_s] = sum_nu S e^{2i pi nu (t - s)/L} and E[Z_t Z_s] = 0
    L, n = 16, 10000
    spec = make_spectrum("raised_cosine", L, lo=2, hi=6, taper=0.3)
    rng = np.random.default_rng(0)
    Z = np.array([synthesize_stationary(spec, rng.integers(2 ** 63)) for _ in range(n)])
    emp = Z.T @ Z.conj() / n
    rel = Z.T @ Z / n
    t = np.arange(L)
    nu = np.arange(spec.values.size)
    model = np.einsum("k,tsk->ts", spec.values,
                      np.exp(2j * np.pi * nu[None, None, :] * (t[:, None, None] - t[None, :, None]) / L))
    se = spec.variance / math.sqrt(n)
    assert np.max(np.abs(emp - model)) < 5 * se
    # standard error of a relation entry is about sigma^2 / sqrt(n)
    assert np.max(np.abs(rel)) < 5 * se


def test_observation_preserves_power():
    spec = make_spectrum("raised_cosine", 256, lo=20, hi=80)
    law = make_modulation("sine_fm", 256, k0=50, amplitude=10)
    Z = synthesize_stationary(spec, 1)
    obs = synthesize_observation(Z, law, 0.3, 2)
    N = obs.Y - Z * np.exp(2j * np.pi * law.gamma / 256)
    np.testing.assert_allclose(np.abs(obs.Y - N), np.abs(Z), atol=1e-14)
    assert np.all(N.imag == 0)
    assert obs.Y_real.shape == (256,)
    with pytest.raises(ValueError):
        synthesize_observation(Z, law, -1, 0)
    with pytest.raises(ValueError):
        synthesize_observation(Z[:100], law, 0.1, 0)


def test_snr_to_sigma():
    assert abs(snr_to_sigma(4.0, 20) - 0.2) < 1e-15
    assert abs(snr_to_sigma(1.0, 0) - 1.0) < 1e-15


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), L=st.sampled_from([16, 17, 64]))
def test_analytic_signal_idempotent(seed, L):
    rng = np.random.default_rng(seed)
    xh = np.zeros(L, dtype=complex)
    # real signal without DC or Nyquist content
    half = (L - 1) // 2
    xh[1:half + 1] = rng.standard_normal(half) + 1j * rng.standard_normal(half)
    xh[L - half:] = np.conj(xh[1:half + 1][::-1])
    x_r = np.fft.ifft(xh).real
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        z = analytic_signal(x_r)
        z2 = analytic_signal(z.real)
    np.testing.assert_allclose(z2, z, atol=1e-10)
    np.testing.assert_allclose(z.real, x_r, atol=1e-12)


def test_analytic_signal_warns_on_dc():
    with pytest.warns(RuntimeWarning, match="DC"):
        analytic_signal(np.ones(8))


def test_remainder_bound_cases():
    sys = GaborSystem(make_window("gauss", 256, 16), 8, 4)
    rb0 = remainder_bound(sys, 1.0, 0.0)
    assert rb0.T == math.inf and rb0.mu1 == 0 and rb0.bound == 0
    rb = remainder_bound(sys, 1.0, 0.5)
    assert rb.T == pytest.approx(math.sqrt(256 / (math.pi * 0.5)))
    assert rb.bound > 0 and rb.mu1 >= 0
    assert remainder_bound(sys, 2.0, 0.5).bound == pytest.approx(2 * rb.bound)
    with pytest.raises(ValueError):
        remainder_bound(sys, 1.0, -1)
