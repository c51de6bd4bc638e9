"""Synthesis, estimation and Monte-Carlo pipelines behind the command line.

Every function here is deterministic in ``(config, seed)``; output writers
stage files in a scratch directory and move them into place only once all
of them exist, so a failed command leaves no partial outputs.
"""
from __future__ import annotations

import contextlib
import logging
import math
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, canonical
from .covariance import NumericalError
from .estimator import (
    IterationLog,
    demodulate,
    estimate_spectrum_full,
    evaluate_track,
    run_algorithm1,
    spectrum_error,
)
from .io import read_csv, read_signal, read_signal_csv, write_csv, write_signal, write_signal_csv
from .model import ModelSignal, ModulationLaw, PowerSpectrum, synthesize_observation, \
    synthesize_stationary
from .tfcore import GaborSystem, gabor

log = logging.getLogger(__name__)

__all__ = [
    "Synthesis",
    "EstimateResult",
    "MonteCarloResult",
    "synthesize",
    "write_synthesis",
    "load_signal",
    "load_truth",
    "estimate",
    "write_estimate",
    "frame_hit_rate",
    "run_montecarlo",
    "write_montecarlo",
    "staged_output",
]

SPECTRUM_METHODS = ("welch", "marginal")
METRIC_FIELDS = ["rmse_corrected", "max_error_corrected", "rmse_raw", "max_error_raw", "offset",
                 "frame_hit_rate", "iterations", "converged"]


@dataclass(frozen=True, eq=False)
class Synthesis:
    config: ExperimentConfig
    seed: int
    spectrum: PowerSpectrum
    law: ModulationLaw
    signal: ModelSignal


@dataclass(eq=False)
class EstimateResult:
    config: ExperimentConfig
    system: GaborSystem
    Y: np.ndarray
    log: IterationLog
    law: ModulationLaw | None = None
    metrics: dict | None = None
    aligned_spectra: dict | None = None
    spectrum_errors: dict | None = None


@dataclass(eq=False)
class MonteCarloResult:
    config: ExperimentConfig
    runs: list
    mean_criterion: np.ndarray
    std_criterion: np.ndarray
    loglog_slope: float
    mean_spectra: dict
    spectrum_errors: dict

    @property
    def completed(self) -> int:
        return sum(r["status"] == "ok" for r in self.runs)


def _seed_sequences(seed: int):
    # independent streams for the stationary process and the additive noise
    return np.random.SeedSequence(int(seed)).spawn(2)


def synthesize(cfg: ExperimentConfig, seed: int | None = None) -> Synthesis:
    """Draw ``Z`` and ``Y`` for one realization of the configured experiment."""
    seed = cfg.seed if seed is None else int(seed)
    spec = cfg.power_spectrum()
    law = cfg.modulation_law()
    sz, sn = _seed_sequences(seed)
    Z = synthesize_stationary(spec, sz)
    sig = synthesize_observation(Z, law, cfg.noise_sigma(), sn)
    return Synthesis(cfg, seed, spec, law, sig)


def _signal_name(cfg: ExperimentConfig, stem: str) -> str:
    return f"{stem}.{'wbfm' if cfg.signal_format == 'binary' else 'csv'}"


def _write_any_signal(path: Path, x: np.ndarray, fmt: str) -> None:
    (write_signal if fmt == "binary" else write_signal_csv)(path, x)


def write_synthesis(out: Path, syn: Synthesis) -> None:
    cfg = syn.config
    _write_any_signal(out / _signal_name(cfg, "signal"), syn.signal.Y, cfg.signal_format)
    _write_any_signal(out / _signal_name(cfg, "stationary"), syn.signal.Z, cfg.signal_format)
    L = cfg.L
    write_csv(out / "gamma_true.csv", ["t", "gamma", "gamma_prime"],
              zip(range(L), syn.law.gamma, syn.law.gamma_prime))
    write_csv(out / "spectrum_true.csv", ["bin", "S"],
              zip(range(syn.spectrum.values.size), syn.spectrum.values))


def load_signal(path) -> np.ndarray:
    """Read a signal file; ``.csv`` selects the text format, anything else the binary one."""
    path = Path(path)
    return read_signal_csv(path) if path.suffix.lower() == ".csv" else read_signal(path)


def load_truth(path) -> ModulationLaw:
    cols = read_csv(path, ["t", "gamma", "gamma_prime"])
    gp = cols["gamma_prime"]
    g2 = float(np.max(np.abs(np.diff(gp)))) if gp.size > 1 else 0.0
    return ModulationLaw(cols["gamma"], gp, g2)


def load_spectrum(path, L: int) -> PowerSpectrum:
    cols = read_csv(path, ["bin", "S"])
    return PowerSpectrum(cols["S"], L)


def frame_hit_rate(gamma_prime_frames: np.ndarray, truth_frames: np.ndarray,
                   tol: float = 1.0) -> float:
    """Largest fraction of frames within ``tol`` bins of the truth over all additive constants.

    The best constant lies within ``tol`` of some frame error, so the
    candidates ``e_n - tol`` (left edges of the feasible windows) suffice.
    """
    e = np.sort(np.asarray(gamma_prime_frames, dtype=float) - np.asarray(truth_frames, dtype=float))
    # frames inside the window [e_i, e_i + 2 tol], i.e. within tol of the constant e_i + tol
    counts = np.searchsorted(e, e + 2 * tol + 1e-9, side="right") - np.arange(e.size)
    return float(counts.max() / e.size)


def estimate(cfg: ExperimentConfig, Y: np.ndarray, law: ModulationLaw | None = None,
             spec: PowerSpectrum | None = None) -> EstimateResult:
    """Run the estimator and, when ground truth is given, score it."""
    Y = np.asarray(Y, dtype=complex)
    if Y.size != cfg.L:
        raise ValueError(f"L: signal has {Y.size} samples but config says L={cfg.L}")
    sys = cfg.gabor_system()
    lg = run_algorithm1(Y, sys, cfg.sigma0, cfg.estimator())
    res = EstimateResult(cfg, sys, Y, lg, law)
    if law is not None:
        if law.length != cfg.L:
            raise ValueError(f"ground truth has {law.length} samples, expected {cfg.L}")
        m = evaluate_track(lg.track, law)
        m["frame_hit_rate"] = frame_hit_rate(lg.track.gamma_prime_frames,
                                             law.gamma_prime[:: sys.a])
        m["iterations"] = lg.iterations
        m["converged"] = int(lg.converged)
        res.metrics = m
        if spec is not None:
            U = demodulate(Y, lg.track.gamma)
            # the demodulated spectrum is the generator's moved down by the track offset
            shift = int(round(m["offset"]))
            band = _band(cfg)
            res.aligned_spectra, res.spectrum_errors = {}, {}
            for method in SPECTRUM_METHODS:
                full = np.roll(estimate_spectrum_full(U, method, nperseg=cfg.welch_nperseg,
                                                      sys=sys), shift)
                res.aligned_spectra[method] = full
                res.spectrum_errors[method] = spectrum_error(
                    full, spec, method, band=band, nperseg=cfg.welch_nperseg, sys=sys)
    return res


def _band(cfg: ExperimentConfig) -> tuple[int, int]:
    return int(math.ceil(cfg.spectrum_lo)), int(math.floor(cfg.spectrum_hi))


def _write_track_files(out: Path, res: EstimateResult) -> None:
    lg, sys = res.log, res.system
    write_csv(out / "iterations.csv", ["iter", "criterion"],
              zip(range(1, lg.iterations + 1), lg.criterion))
    tr = lg.track
    write_csv(out / "track.csv",
              ["frame", "time_sample", "delta_coarse", "offset_c", "gamma_prime_hat"],
              zip(range(sys.N), range(0, sys.L, sys.a), tr.delta_coarse.astype(int),
                  tr.offsets, tr.gamma_prime_frames))
    write_csv(out / "spectrum.csv", ["bin", "S_hat"],
              zip(range(lg.spectrum.values.size), lg.spectrum.values))
    if res.metrics is not None:
        row = [res.metrics[k] for k in METRIC_FIELDS]
        header = list(METRIC_FIELDS)
        if res.spectrum_errors:
            header += [f"spectrum_error_{m}" for m in SPECTRUM_METHODS]
            row += [res.spectrum_errors[m] for m in SPECTRUM_METHODS]
        write_csv(out / "metrics.csv", header, [row])


def write_estimate(out: Path, res: EstimateResult, plots: bool = True) -> None:
    _write_track_files(out, res)
    sys = res.system
    G = np.abs(gabor(res.Y, sys, 0).coefficients)
    write_csv(out / "spectrogram.csv", ["bin"] + [f"frame_{n}" for n in range(sys.N)],
              ([m, *G[m]] for m in range(sys.M)))
    if plots:
        from .plotting import plot_overlay
        truth = None if res.law is None else res.law.gamma_prime
        plot_overlay(out / "overlay.png", res.Y, sys, res.log.track.gamma_prime, truth)


def _mc_task(args):
    cfg, run, seed = args
    try:
        syn = synthesize(cfg, seed)
        res = estimate(cfg, syn.signal.Y, syn.law, syn.spectrum)
    except (NumericalError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return {"run": run, "seed": seed, "status": "failed", "message": f"{type(exc).__name__}: {exc}"}
    # drop the heavy per-iteration snapshots before shipping back to the parent
    res.log.tracks = res.log.tracks[-1:]
    res.Y = None
    return {"run": run, "seed": seed, "status": "ok", "message": "", "result": res}


def run_montecarlo(cfg: ExperimentConfig, workers: int = 1) -> MonteCarloResult:
    """Independent realizations sharing the spectrum and modulation law.

    Run ``i`` uses seed ``cfg.seed + i``.  Runs that stop early count as
    zero criterion afterwards (the track stopped changing), which is exact
    when the stop was at a fixed point.  The spectra of completed runs are
    aligned with the generator and averaged before scoring.
    """
    if cfg.num_realizations < 2:
        raise ValueError("num_realizations: montecarlo needs at least 2 realizations")
    tasks = [(cfg, i, (cfg.seed + i) % 2 ** 64) for i in range(cfg.num_realizations)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_mc_task, tasks))
    else:
        runs = [_mc_task(t) for t in tasks]
    ok = [r for r in runs if r["status"] == "ok"]
    for r in runs:
        if r["status"] != "ok":
            log.warning("run %d (seed %d) failed: %s", r["run"], r["seed"], r["message"])
    if len(ok) < math.ceil(0.8 * len(runs)):
        raise NumericalError(f"only {len(ok)} of {len(runs)} realizations completed (80% required)")
    n_it = max(r["result"].log.iterations for r in ok)
    crit = np.zeros((len(ok), n_it))
    for j, r in enumerate(ok):
        c = r["result"].log.criterion
        crit[j, : len(c)] = c
    mean, std = crit.mean(axis=0), crit.std(axis=0)
    pos = mean > 0
    it = np.arange(1, n_it + 1)
    slope = float(np.polyfit(np.log(it[pos]), np.log(mean[pos]), 1)[0]) if pos.sum() >= 2 else math.nan
    spec = cfg.power_spectrum()
    sys = cfg.gabor_system()
    mean_spectra, errors = {}, {}
    for method in SPECTRUM_METHODS:
        avg = np.mean([r["result"].aligned_spectra[method] for r in ok], axis=0)
        mean_spectra[method] = avg
        errors[method] = spectrum_error(avg, spec, method, band=_band(cfg),
                                        nperseg=cfg.welch_nperseg, sys=sys)
    return MonteCarloResult(cfg, runs, mean, std, slope, mean_spectra, errors)


def write_montecarlo(out: Path, mc: MonteCarloResult, plots: bool = True) -> None:
    write_csv(out / "convergence.csv", ["iter", "mean_criterion", "std_criterion"],
              zip(range(1, mc.mean_criterion.size + 1), mc.mean_criterion, mc.std_criterion))
    header = ["run", "seed", "status"] + METRIC_FIELDS + \
        [f"spectrum_error_{m}" for m in SPECTRUM_METHODS] + ["message"]
    rows = []
    for r in mc.runs:
        if r["status"] == "ok":
            res = r["result"]
            vals = [res.metrics[k] for k in METRIC_FIELDS] + \
                [res.spectrum_errors[m] for m in SPECTRUM_METHODS]
            sub = out / f"run_{r['run']:03d}"
            sub.mkdir()
            _write_track_files(sub, res)
        else:
            vals = [""] * (len(METRIC_FIELDS) + len(SPECTRUM_METHODS))
        rows.append([r["run"], r["seed"], r["status"], *vals, r["message"]])
    write_csv(out / "runs.csv", header, rows)
    summary = [["completed", mc.completed], ["failed", len(mc.runs) - mc.completed],
               ["loglog_slope", mc.loglog_slope]]
    summary += [[f"spectrum_error_{m}", mc.spectrum_errors[m]] for m in SPECTRUM_METHODS]
    write_csv(out / "summary.csv", ["quantity", "value"], summary)
    spec = mc.config.power_spectrum()
    K = spec.values.size
    write_csv(out / "spectrum_mean.csv", ["bin", "S_true", "S_hat_welch", "S_hat_marginal"],
              zip(range(K), spec.values, mc.mean_spectra["welch"][:K],
                  mc.mean_spectra["marginal"][:K]))
    if plots:
        from .plotting import plot_convergence
        plot_convergence(out / "convergence.png", mc.mean_criterion, mc.std_criterion)


@contextlib.contextmanager
def staged_output(out):
    """Yield a scratch directory whose contents replace those in ``out`` on success."""
    out = Path(out)
    parent = out.parent if str(out.parent) else Path(".")
    parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".wbfm-", dir=parent))
    try:
        yield tmp
        out.mkdir(exist_ok=True)
        for entry in sorted(tmp.iterdir()):
            dest = out / entry.name
            if dest.is_dir() and not dest.is_symlink():
                shutil.rmtree(dest)
            os.replace(entry, dest)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def write_config_echo(out: Path, cfg: ExperimentConfig) -> None:
    with open(out / "config.txt", "w", newline="\n") as fh:
        fh.write(canonical(cfg))
