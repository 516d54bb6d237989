"""Benchmark scenarios comparing the agent against fixed-exponent baselines.

Scenario 1 redraws the ground-truth system mid-run under a fixed noise model;
scenario 2 keeps the system and switches the noise model mid-run.  Every
method consumes the identical per-trial data stream (regressors and
observations), generated deterministically from the run seed, so curves are
paired across methods.  Aggregated curves are written as CSV together with a
manifest capturing the full configuration.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .agent import PolicyIterationLmp
from .environment import alpha_stable, sparse_outlier_noise
from .exceptions import FilterDivergenceError
from .filters import LmpFilter, MixedNormLmp, RandomExponentLmp
from .validation import check_action_grid

NMSD_FLOOR_DB = -300.0

DEFAULT_METHODS = ("agent", "fixed-1", "fixed-1.25", "fixed-1.5",
                   "fixed-1.75", "fixed-2", "random-p", "mixed-norm")


@dataclass
class RunConfig:
    """Full description of one benchmark run."""

    scenario: int = 1
    dim: int = 20
    n_iters: int = 10000
    n_trials: int = 20
    change_iter: int = 4000
    rho: float = 1e-3
    m_av: int = 300
    varpi: float = 0.3
    action_grid: tuple = (1.0, 1.25, 1.5, 1.75, 2.0)
    alpha: float = 0.9
    eta: float = 0.1
    sigma: float = 0.1
    delta_s: float = 0.01
    delta_z: float = 0.02
    improvement_period: int = 500
    buffer_cap: int = 5000
    replay: bool = True
    feature_dim: int = 200
    bandwidth: float = 1.0
    noise_kind: str = "alpha_stable"
    noise2_kind: str = "sparse"
    stable_alpha: float = 1.0
    stable_skew: float = 0.5
    stable_scale: float = 1.0
    outlier_prob: float = 0.1
    outlier_lo: float = -100.0
    outlier_hi: float = 100.0
    snr_db: float = 30.0
    seed: int = 0
    methods: tuple = DEFAULT_METHODS
    jobs: int = 1
    downsample: int = 10

    def __post_init__(self):
        if self.scenario not in (1, 2):
            raise ValueError("scenario must be 1 or 2")
        self.action_grid = tuple(float(a) for a in
                                 check_action_grid(self.action_grid))
        self.methods = tuple(self.methods)
        for m in self.methods:
            _check_method(m)


PRESETS = {
    "desk": {},
    "paper": {"dim": 100, "n_iters": 50000, "n_trials": 100,
              "change_iter": 20000, "feature_dim": 500},
}


def make_config(preset: str = "desk", **overrides) -> RunConfig:
    """Build a RunConfig from a named preset plus overrides."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    kwargs = dict(PRESETS[preset])
    kwargs.update(overrides)
    return RunConfig(**kwargs)


def _convert_field(field: dataclasses.Field, raw: str):
    if field.type in ("int",):
        return int(raw)
    if field.type in ("float",):
        return float(raw)
    if field.type in ("bool",):
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"cannot parse boolean from {raw!r}")
    if field.type in ("tuple",):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if field.name == "methods":
            return tuple(items)
        return tuple(float(s) for s in items)
    return raw.strip()


def parse_config_file(path) -> dict:
    """Parse a flat key = value config file into RunConfig keyword arguments."""
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    out = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in fields:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _convert_field(fields[key], raw.strip())
    return out


def _check_method(method: str):
    if method in ("agent", "random-p", "mixed-norm"):
        return
    if method.startswith("fixed-"):
        p = float(method.split("-", 1)[1])
        if not 1.0 <= p <= 2.0:
            raise ValueError(f"fixed exponent must lie in [1, 2], got {p}")
        return
    raise ValueError(f"unknown method {method!r}")


def nmsd(theta: np.ndarray, theta_star: np.ndarray) -> float:
    """Normalized mean-square deviation in dB, floored at -300."""
    theta_star = np.asarray(theta_star, dtype=np.float64)
    ref = float(theta_star @ theta_star)
    if ref <= 0.0:
        raise ValueError("theta_star must be nonzero")
    diff = np.asarray(theta, dtype=np.float64) - theta_star
    ratio = float(diff @ diff) / ref
    if ratio <= 1.0e-30:
        return NMSD_FLOOR_DB
    return max(10.0 * np.log10(ratio), NMSD_FLOOR_DB)


@dataclass
class Stream:
    """One trial's paired data stream."""

    X: np.ndarray
    Y: np.ndarray
    segments: list
    checksum: str


def _segment_bounds(cfg: RunConfig):
    if 0 < cfg.change_iter < cfg.n_iters:
        return [(0, cfg.change_iter), (cfg.change_iter, cfg.n_iters)]
    return [(0, cfg.n_iters)]


def _draw_noise(rng, cfg: RunConfig, kind: str, size: int, signal_power: float):
    if kind == "alpha_stable":
        return alpha_stable(rng, cfg.stable_alpha, cfg.stable_skew,
                            cfg.stable_scale, size=size)
    if kind == "sparse":
        return sparse_outlier_noise(rng, cfg.outlier_prob,
                                    (cfg.outlier_lo, cfg.outlier_hi),
                                    cfg.snr_db, signal_power, size=size)
    if kind == "none":
        return np.zeros(size)
    raise ValueError(f"unknown noise kind {kind!r}")


def make_stream(cfg: RunConfig, trial: int) -> Stream:
    """Deterministic per-trial data stream shared by every method."""
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, 11, cfg.scenario, trial]))
    theta_first = rng.standard_normal(cfg.dim)
    bounds = _segment_bounds(cfg)
    if cfg.scenario == 1:
        theta_second = rng.standard_normal(cfg.dim)
        thetas = [theta_first, theta_second][:len(bounds)]
        kinds = [cfg.noise_kind] * len(bounds)
    else:
        thetas = [theta_first] * len(bounds)
        kinds = ([cfg.noise_kind, cfg.noise2_kind][:len(bounds)])
    X = rng.standard_normal((cfg.n_iters, cfg.dim))
    Y = np.empty(cfg.n_iters)
    segments = []
    for (start, end), theta, kind in zip(bounds, thetas, kinds):
        power = float(theta @ theta)
        noise = _draw_noise(rng, cfg, kind, end - start, power)
        Y[start:end] = X[start:end] @ theta + noise
        segments.append((start, theta))
    digest = hashlib.sha256()
    digest.update(X.tobytes())
    digest.update(Y.tobytes())
    return Stream(X=X, Y=Y, segments=segments, checksum=digest.hexdigest())


def _derived_seed(cfg: RunConfig, tag: int, trial: int) -> int:
    return int(np.random.SeedSequence(
        [cfg.seed, tag, cfg.scenario, trial]).generate_state(1)[0])


def _build_method(cfg: RunConfig, method: str, trial: int):
    if method == "agent":
        return PolicyIterationLmp(
            action_grid=cfg.action_grid, rho=cfg.rho, m_av=cfg.m_av,
            varpi=cfg.varpi, alpha=cfg.alpha, eta=cfg.eta, sigma=cfg.sigma,
            delta_s=cfg.delta_s, delta_z=cfg.delta_z,
            improvement_period=cfg.improvement_period,
            buffer_cap=cfg.buffer_cap, replay=cfg.replay,
            feature_dim=cfg.feature_dim, bandwidth=cfg.bandwidth,
            seed=_derived_seed(cfg, 13, trial))
    if method == "random-p":
        return RandomExponentLmp(action_grid=cfg.action_grid, rho=cfg.rho,
                                 seed=_derived_seed(cfg, 17, trial))
    if method == "mixed-norm":
        return MixedNormLmp(rho=cfg.rho)
    if method.startswith("fixed-"):
        return LmpFilter(p=float(method.split("-", 1)[1]), rho=cfg.rho)
    raise ValueError(f"unknown method {method!r}")


def _nmsd_curve(deviation: np.ndarray, segments, n_iters: int) -> np.ndarray:
    """Per-iteration NMSD of a deviation trace against the active system."""
    curve = np.empty(n_iters)
    for i, (start, theta) in enumerate(segments):
        end = segments[i + 1][0] if i + 1 < len(segments) else n_iters
        ref = float(theta @ theta)
        ratio = deviation[start:end] ** 2 / ref
        seg = np.full(end - start, NMSD_FLOOR_DB)
        ok = ratio > 1.0e-30
        seg[ok] = np.maximum(10.0 * np.log10(ratio[ok]), NMSD_FLOOR_DB)
        curve[start:end] = seg
    return curve


def run_trial(cfg: RunConfig, method: str, trial: int):
    """Run one method on one trial stream.

    Returns (nmsd_curve, exponents, checksum); the first two are None when
    the run aborted on divergence.
    """
    stream = make_stream(cfg, trial)
    est = _build_method(cfg, method, trial)
    try:
        record = est.run(stream.X, stream.Y, theta_star_segments=stream.segments)
    except FilterDivergenceError:
        return None, None, stream.checksum
    curve = _nmsd_curve(record.deviation, stream.segments, cfg.n_iters)
    return curve, record.exponents, stream.checksum


def _run_task(args):
    cfg_kwargs, method, trial = args
    cfg = RunConfig(**cfg_kwargs)
    return method, trial, run_trial(cfg, method, trial)


@dataclass
class BenchResult:
    """Aggregated benchmark curves, one row per method."""

    config: RunConfig
    methods: tuple
    nmsd_db: np.ndarray
    mean_exponent: np.ndarray
    aborted: dict
    checksums: dict

    def method_curve(self, method: str) -> np.ndarray:
        return self.nmsd_db[self.methods.index(method)]


def run_scenario(cfg: RunConfig) -> BenchResult:
    """Run every configured method over every trial and aggregate.

    Trials that abort on divergence are excluded from the averages; the run
    fails outright when they reach 5% of a method's trials.
    """
    tasks = [(dataclasses.asdict(cfg), method, trial)
             for method in cfg.methods for trial in range(cfg.n_trials)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            raw = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        raw = [_run_task(t) for t in tasks]
    by_method = {m: {} for m in cfg.methods}
    checksums = {}
    for method, trial, (curve, exponents, checksum) in raw:
        by_method[method][trial] = (curve, exponents)
        checksums[trial] = checksum

    nmsd_rows = np.empty((len(cfg.methods), cfg.n_iters))
    p_rows = np.empty((len(cfg.methods), cfg.n_iters))
    aborted = {}
    for i, method in enumerate(cfg.methods):
        curves = []
        exps = []
        n_aborted = 0
        for trial in range(cfg.n_trials):
            curve, exponents = by_method[method][trial]
            if curve is None:
                n_aborted += 1
            else:
                curves.append(curve)
                exps.append(exponents)
        if n_aborted / cfg.n_trials >= 0.05:
            raise RuntimeError(
                f"method {method!r} aborted on {n_aborted} of "
                f"{cfg.n_trials} trials (limit is 5%)")
        aborted[method] = n_aborted
        nmsd_rows[i] = np.mean(curves, axis=0)
        p_rows[i] = np.mean(exps, axis=0)
    return BenchResult(config=cfg, methods=cfg.methods, nmsd_db=nmsd_rows,
                       mean_exponent=p_rows, aborted=aborted,
                       checksums=checksums)


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"
    if out.returncode != 0:
        return "unknown"
    return out.stdout.strip()


def _write_curve_csv(path: Path, result: BenchResult, stride: int = 1):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "method", "nmsd_db", "mean_p"])
        # repr round-trips float64 exactly, keeping parsed tables identical
        for n in range(0, result.config.n_iters, stride):
            for i, method in enumerate(result.methods):
                writer.writerow([n, method,
                                 repr(float(result.nmsd_db[i, n])),
                                 repr(float(result.mean_exponent[i, n]))])


def emit_outputs(result: BenchResult, out_dir) -> dict:
    """Write the results CSV, a downsampled plot CSV, and the run manifest.

    Outputs are a deterministic function of the aggregated result, so two
    runs with the same configuration and seed produce identical bytes.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    results_path = out_dir / f"results_scenario{cfg.scenario}.csv"
    _write_curve_csv(results_path, result, stride=1)
    plot_path = out_dir / f"plot_scenario{cfg.scenario}.csv"
    _write_curve_csv(plot_path, result, stride=max(1, cfg.downsample))
    manifest = {
        "package_version": __version__,
        "git_describe": _git_describe(),
        "config": dataclasses.asdict(cfg),
        "stream_checksums": {str(t): c for t, c in sorted(result.checksums.items())},
        "aborted_trials": result.aborted,
        "outputs": [results_path.name, plot_path.name],
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return {"results": results_path, "plot": plot_path,
            "manifest": manifest_path}
