"""Benchmark pipelines: training data, identification, validation and closed-loop runs.

Every realization is seeded from ``SeedSequence([seed, sweep_index, realization])`` so that
results do not depend on worker count or scheduling, and all methods at a given sweep point
see the same noise.
"""
from __future__ import annotations

import csv
import json
import os
import subprocess
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, _core
from .baselines import LinearModel, dmdc_fit
from .config import ExperimentConfig
from .data import (NoiseSpec, NormalizationScales, TimeSeries, add_noise, denormalize,
                   load_csv, noise_sigma, normalize, save_csv)
from .dynamics import ForwardOperator, IdentifiedModel, QuadrotorModel, simulate
from .errors import ConfigError, WsmpcError
from .funclib import (FunctionLibrary, build_drone_rotational_library,
                      build_drone_translational_library, build_poly_library, format_model)
from .metrics import (avg_rel_error, clearance_in_window, min_clearance, mse_outside_obstacle,
                      prediction_horizon, summarize, tracking_success, write_summary_csv)
from .mpc import ControlLog, Obstacle, receding_horizon_run
from .plants import (LORENZ_TARGET, QUAD, PDGains, CircleReference, f8_model, f8_reference,
                     generate_drone_training, lorenz_model,
                     lorenz_validation_input, plasma_model, quadrotor_model, schroeder_sweep)
from .sysid import fit_sparse

ORACLE = "oracle"


# --- training data -------------------------------------------------------------------------

def true_model(benchmark: str):
    """Ground-truth model of a benchmark (the plant used for data and closed-loop runs)."""
    return {"lorenz": lorenz_model, "f8": f8_model, "drone": quadrotor_model,
            "external": plasma_model}[benchmark]()


def _schroeder_input(train: dict, offset: float = 0.0):
    A, K, P = float(train["amplitude"]), int(train["harmonics"]), float(train["period"])
    return lambda t: offset + schroeder_sweep(t, A, K, P)


_TRAIN_CACHE: dict = {}


def training_series(cfg: ExperimentConfig) -> TimeSeries:
    """Noise-free training series in model units (normalized for the external benchmark)."""
    key = json.dumps([cfg.benchmark, cfg.train], sort_keys=True)
    if key not in _TRAIN_CACHE:
        _TRAIN_CACHE[key] = _make_training(cfg)
    return _TRAIN_CACHE[key]


def _make_training(cfg: ExperimentConfig) -> TimeSeries:
    tr = cfg.train
    if cfg.benchmark in ("lorenz", "f8"):
        return simulate(true_model(cfg.benchmark), tr["x0"], _schroeder_input(tr),
                        float(tr["T"]), float(tr["dt"]), int(tr["truth_substeps"]))
    if cfg.benchmark == "drone":
        gains = PDGains(*(tuple(tr[k]) for k in ("kp", "kd", "kp_att", "kd_att")))
        return generate_drone_training(float(tr["T"]), float(tr["dt"]),
                                       int(tr["truth_substeps"]), gains)
    scales = plasma_scales(cfg)
    path = tr.get("csv") or ""
    if not path:
        raise ConfigError("external benchmark needs train.csv; call write_plasma_csv first")
    return normalize(load_csv(path), scales)


def plasma_scales(cfg: ExperimentConfig) -> NormalizationScales:
    return NormalizationScales(cfg.train["state_scales"], cfg.train["input_scales"])


def write_plasma_csv(cfg: ExperimentConfig, path) -> Path:
    """Synthesize surrogate boundary data in physical units and write it as CSV.

    The series carries fixed per-channel Gaussian noise (``train.source_noise``, relative
    to each channel's std) standing in for Monte Carlo noise of the upstream simulator.
    """
    tr = cfg.train
    ts = simulate(plasma_model(), tr["x0"],
                  _schroeder_input(tr, float(tr["input_offset"])), float(tr["T"]),
                  float(tr["dt"]))
    ts = add_noise(ts, NoiseSpec(tuple(tr["source_noise"]), seed=cfg.seed))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_csv(denormalize(ts, plasma_scales(cfg)), path)
    return path


# --- seeding -------------------------------------------------------------------------------

@dataclass(frozen=True)
class Seeds:
    train_noise: int
    ensemble: int
    feedback_noise: int


def realization_seeds(seed: int, sweep_index: int, realization: int) -> Seeds:
    ss = np.random.SeedSequence([int(seed), int(sweep_index), int(realization)])
    a, b, c = (int(s.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
               for s in ss.spawn(3))
    return Seeds(a, b, c)


# --- identification ------------------------------------------------------------------------

@dataclass
class Identified:
    model: object
    text: str
    report: dict = field(default_factory=dict)


def _support(cfg):
    s = int(cfg.identify.get("support", 0))
    return s if s > 0 else None


def _fit_block(cfg, method, lib: FunctionLibrary, X, U, dt, seed):
    ident = cfg.identify
    fit = fit_sparse(method, lib, X, U, dt, support=_support(cfg),
                     degree=int(ident.get("test_degree", 16)),
                     ensemble=cfg.ensemble_config(), rng=np.random.default_rng(seed),
                     strong_threshold=float(ident.get("strong_threshold", 0.1)))
    return fit


def identify(cfg: ExperimentConfig, method: str, ts: TimeSeries, seed: int = 0) -> Identified:
    """Fit ``method`` on (possibly noisy) training data ``ts``."""
    if method == "dmdc":
        shift = LORENZ_TARGET if cfg.benchmark == "lorenz" else None
        m = dmdc_fit(ts, shift=shift)
        return Identified(m, f"A = {m.A.tolist()}\nB = {m.Bm.tolist()}\n", {"method": method})
    if cfg.benchmark == "drone":
        X, U = ts.states, ts.inputs
        lib_tr = build_drone_translational_library()
        lib_ro = build_drone_rotational_library()
        fit_tr = _fit_block(cfg, method, lib_tr, X[:, 3:6],
                            np.column_stack([X[:, 6:10], U[:, :1]]), ts.dt, seed)
        fit_ro = _fit_block(cfg, method, lib_ro, X[:, 10:13], U[:, 1:4], ts.dt, seed + 1)
        m = QuadrotorModel(fit_tr.W, fit_ro.W)
        text = "\n".join([format_model(lib_tr, fit_tr.W, ["vx", "vy", "vz"]),
                          format_model(lib_ro, fit_ro.W, ["p", "q", "r"])])
        return Identified(m, text, {"method": method, "translational": fit_tr.report(lib_tr.names),
                                    "rotational": fit_ro.report(lib_ro.names)})
    lib = build_poly_library(ts.state_dim, ts.input_dim, int(cfg.identify["library_degree"]))
    fit = _fit_block(cfg, method, lib, ts.states, ts.inputs, ts.dt, seed)
    return Identified(IdentifiedModel(lib, fit.W), format_model(lib, fit.W),
                      {"method": method, **fit.report(lib.names)})


def noisy_training(cfg: ExperimentConfig, level: float, seed: int,
                   n_samples: Optional[int] = None) -> TimeSeries:
    ts = training_series(cfg)
    if n_samples is not None:
        ts = ts.head(int(n_samples))
    eta = cfg.eta(level)
    if np.all(np.asarray(eta) == 0):
        return ts
    return add_noise(ts, NoiseSpec(eta, seed=seed))


# --- validation ----------------------------------------------------------------------------

def validation_pair(cfg: ExperimentConfig, model) -> tuple:
    """Truth and model trajectories over the validation window (Lorenz).

    Both start from the noise-free state at the end of the training window. The forcing
    clock continues from the training window unless ``validate.clock_start`` is set.
    """
    va = cfg.validate
    x0 = training_series(cfg).states[-1]
    T, dt = float(va["T"]), float(va["dt"])
    truth = _validation_truth(cfg, x0, T, dt)
    u = _validation_input(cfg)
    n_sub = (max(1, int(round(dt / model.dt))) if isinstance(model, LinearModel)
             else int(va.get("model_substeps", 1)))
    pred = simulate(model, x0, u, T, dt, n_sub, on_diverge="truncate")
    return truth, pred


_VALID_CACHE: dict = {}


def _validation_input(cfg):
    t0 = float(cfg.validate.get("clock_start", cfg.train["T"]))
    return lambda t: lorenz_validation_input(np.asarray(t) + t0)


def _validation_truth(cfg, x0, T, dt):
    key = json.dumps([cfg.benchmark, cfg.train, cfg.validate], sort_keys=True)
    if key not in _VALID_CACHE:
        _VALID_CACHE[key] = simulate(true_model(cfg.benchmark), x0, _validation_input(cfg), T,
                                     dt, int(cfg.train["truth_substeps"]))
    return _VALID_CACHE[key]


def predict_metrics(cfg: ExperimentConfig, model) -> dict:
    truth, pred = validation_pair(cfg, model)
    eps = float(cfg.validate.get("eps", 3.0))
    finite = bool(np.all(np.isfinite(pred.states)))
    return {"prediction_horizon": prediction_horizon(truth, pred, eps), "model_finite": finite}


# --- closed loop ---------------------------------------------------------------------------

def _plant(cfg: ExperimentConfig) -> ForwardOperator:
    c = cfg.control
    return ForwardOperator(true_model(cfg.benchmark), float(c["dt_plant"]), int(c["ns_plant"]))


def _model_operator(cfg: ExperimentConfig, model) -> ForwardOperator:
    c = cfg.control
    if isinstance(model, LinearModel):
        return ForwardOperator.from_interval(model, float(c["Ts"]), model.dt)
    return ForwardOperator.from_interval(model, float(c["Ts"]), float(c["dt_model"]))


def drone_scene(cfg: ExperimentConfig):
    """Circle reference and obstacle centre for the drone benchmark."""
    c = cfg.control
    ref = CircleReference(float(c["radius"]), float(c["height"]), float(c["period"]))
    return ref, ref.obstacle_near(float(c["obstacle_time"]), float(c["obstacle_offset"]))


@dataclass
class ClosedLoop:
    log: ControlLog
    metrics: dict
    reference: np.ndarray  # reference at the log times


def run_closed_loop(cfg: ExperimentConfig, model, level: float = 0.0,
                    seed: int = 0) -> ClosedLoop:
    """Receding-horizon run of ``model`` against the true plant with noisy feedback."""
    c = cfg.control
    eta = cfg.eta(level)
    sigma = noise_sigma(training_series(cfg), NoiseSpec(eta))
    noise = NoiseSpec(eta, seed=seed)
    plant = _plant(cfg)
    F = _model_operator(cfg, model)
    T = float(c["T"])
    b = cfg.benchmark
    if b == "lorenz":
        mcfg = cfg.mpc_config()
        target = np.asarray(c["target"], dtype=float)
        x0 = (_validation_truth(cfg, training_series(cfg).states[-1], float(cfg.validate["T"]),
                                float(cfg.validate["dt"])).states[-1]
              if c.get("start", "validation_end") == "validation_end"
              else np.asarray(c["start"], dtype=float))
        log = receding_horizon_run(plant, F, x0, mcfg, target, T, noise, sigma, np.zeros(1))
        R = np.tile(target, (len(log), 1))
        dist = float(np.linalg.norm(log.x[-1] - target)) if len(log) else np.inf
        hit = np.flatnonzero(np.linalg.norm(log.x - target, axis=1) < 1.0)
        metrics = {"terminal_cost": log.terminal_cost if not log.failed else np.inf,
                   "final_distance": dist,
                   "time_to_target": float(log.t[hit[0]]) if hit.size else np.inf}
    elif b == "f8":
        mcfg = cfg.mpc_config()
        ref = lambda t: np.array([f8_reference(t), 0.0, 0.0])  # noqa: E731
        log = receding_horizon_run(plant, F, c["x0"], mcfg, ref, T, noise, sigma, np.zeros(1))
        R = np.array([ref(t) for t in log.t]).reshape(len(log), 3)
        U = np.vstack([np.zeros((1, 1)), log.u])
        du = np.diff(U, axis=0)
        err = np.abs(log.x[:, 0] - R[:, 0]) if len(log) else np.array([np.inf])
        metrics = {"mean_abs_error": float(np.mean(err)) if not log.failed else np.inf,
                   "u_in_bounds": bool(np.all(log.u >= mcfg.u_min) and np.all(log.u <= mcfg.u_max)),
                   "du_in_bounds": bool(np.all(du >= mcfg.du_min) and np.all(du <= mcfg.du_max)),
                   "max_abs_du": float(np.max(np.abs(du))) if du.size else 0.0}
    elif b == "drone":
        ref, center = drone_scene(cfg)
        obstacle = Obstacle(center, float(c["d_min"]), float(c["q_obs"]))
        mcfg = cfg.mpc_config(obstacle, quaternion_block=slice(6, 10))
        x0 = ref(0.0)
        u0 = np.array([QUAD.mass * QUAD.g, 0.0, 0.0, 0.0])
        log = receding_horizon_run(plant, F, x0, mcfg, ref, T, noise, sigma, u0)
        R = np.array([ref(t) for t in log.t]).reshape(len(log), 13)
        if log.failed or len(log) == 0:
            mse, clr = np.inf, -np.inf
        else:
            mse = mse_outside_obstacle(log.x[:, :3], R[:, :3], center, float(c["d_min"]))
            clr = min_clearance(log.x[:, :3], center, float(c["obstacle_radius"]),
                                float(c["arm"]))
        lo, hi = c.get("clearance_window", (0.10, 0.20))
        metrics = {"mse": mse, "min_clearance": clr,
                   "avoided": clearance_in_window(clr, float(lo), float(hi))}
    else:
        mcfg = cfg.mpc_config()
        ts = training_series(cfg)
        x0 = ts.states[0]
        u0 = ts.inputs[0]
        amp, freq = float(c["reference_amplitude"]), float(c["reference_frequency"])
        ref = lambda t: np.array([x0[0] * (1.0 + amp * np.sin(2 * np.pi * freq * t)),  # noqa: E731
                                  x0[1]])
        log = receding_horizon_run(plant, F, x0, mcfg, ref, T, noise, sigma, u0)
        R = np.array([ref(t) for t in log.t]).reshape(len(log), 2)
        rel = avg_rel_error(log.x[:, 0], R[:, 0]) if len(log) and not log.failed else np.inf
        metrics = {"avg_rel_error": rel,
                   "tracked": tracking_success(rel, float(c.get("success_threshold", 0.03)))}
    metrics["failed"] = bool(log.failed)
    metrics["model_diverged_steps"] = int(np.sum(log.model_diverged))
    return ClosedLoop(log, metrics, R)


# --- realization tasks ---------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    kind: str  # identify | predict | control
    method: str
    sweep_index: int
    sweep_value: float
    realization: int


def sweep_axis(cfg: ExperimentConfig) -> tuple:
    """(name, values): data lengths when configured, otherwise noise levels."""
    if cfg.data_lengths:
        return "data_length", tuple(float(n) for n in cfg.data_lengths)
    return "noise", tuple(cfg.noise_levels)


def make_tasks(cfg: ExperimentConfig, kind: str, oracle: bool = False) -> list:
    _, values = sweep_axis(cfg)
    methods = (ORACLE,) if oracle else cfg.methods
    return [Task(kind, m, i, v, r) for i, v in enumerate(values) for m in methods
            for r in range(cfg.realizations)]


def _task_noise(cfg, task: Task):
    if cfg.data_lengths:
        return float(cfg.noise_levels[0]), int(task.sweep_value)
    return float(task.sweep_value), None


def run_task(cfg: ExperimentConfig, task: Task) -> dict:
    """One realization end to end; module errors are recorded, not raised."""
    level, n = _task_noise(cfg, task)
    seeds = realization_seeds(cfg.seed, task.sweep_index, task.realization)
    rec = {"method": task.method, "sweep_value": task.sweep_value,
           "realization": task.realization, "status": "ok"}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if task.method == ORACLE:
                ident = Identified(true_model(cfg.benchmark), "", {"method": ORACLE})
            else:
                ts = noisy_training(cfg, level, seeds.train_noise, n)
                ident = identify(cfg, task.method, ts, seeds.ensemble)
            rec["model"] = ident.model.to_dict()
            rec["text"] = ident.text
            rec["report"] = ident.report
            if task.kind == "predict":
                rec.update(predict_metrics(cfg, ident.model))
            elif task.kind == "control":
                cl = run_closed_loop(cfg, ident.model, level, seeds.feedback_noise)
                rec.update(cl.metrics)
                rec["log"] = cl.log
    except (WsmpcError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        rec["status"] = f"{type(exc).__name__}: {exc}"
    return rec


def _run_one(args):
    cfg_dict, task = args
    return run_task(ExperimentConfig.from_dict(cfg_dict), task)


def run_tasks(cfg: ExperimentConfig, tasks: list, workers: int = 1) -> list:
    """Run tasks serially or on a process pool; output order matches ``tasks``."""
    if workers <= 1 or len(tasks) <= 1:
        return [run_task(cfg, t) for t in tasks]
    payload = [(cfg.to_dict(), t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, payload, chunksize=max(1, len(tasks) // (4 * workers))))


# --- outputs -------------------------------------------------------------------------------

METRICS = {
    "lorenz": {"predict": ("prediction_horizon",),
               "control": ("terminal_cost", "final_distance", "time_to_target")},
    "f8": {"control": ("mean_abs_error", "max_abs_du")},
    "drone": {"control": ("mse", "min_clearance")},
    "external": {"control": ("avg_rel_error",)},
}
_FLAGS = ("model_finite", "u_in_bounds", "du_in_bounds", "avoided", "tracked", "failed")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_raw_csv(records: list, path, metric_names) -> None:
    flags = [f for f in _FLAGS if any(f in r for r in records)]
    cols = ["method", "sweep_value", "realization", "status", *metric_names, *flags]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            w.writerow([_fmt(r.get(c, "")) for c in cols])


def _success(benchmark: str, metric: str, rec: dict, baseline: Optional[float]):
    if rec["status"] != "ok":
        return False
    if metric == "prediction_horizon":
        return bool(rec.get("model_finite", False))
    if metric == "terminal_cost":
        return rec.get("final_distance", np.inf) < 1.0
    if metric in ("final_distance", "time_to_target"):
        return rec.get("final_distance", np.inf) < 1.0
    if metric == "mean_abs_error":
        return rec.get("mean_abs_error", np.inf) < 0.02
    if metric == "max_abs_du":
        return bool(rec.get("du_in_bounds", False))
    if metric == "min_clearance":
        return bool(rec.get("avoided", False))
    if metric == "mse":
        return baseline is not None and rec.get("mse", np.inf) < 2.0 * baseline
    if metric == "avg_rel_error":
        return bool(rec.get("tracked", False))
    return False


def summarize_records(cfg: ExperimentConfig, records: list, kind: str) -> list:
    """One summary row per (method, sweep value, metric); failures count as worst cases."""
    rows = []
    names = METRICS[cfg.benchmark].get(kind, ())
    methods = list(dict.fromkeys(r["method"] for r in records))
    values = list(dict.fromkeys(r["sweep_value"] for r in records))
    for m in methods:
        baseline = None
        if cfg.benchmark == "drone" and 0.0 in values and not cfg.data_lengths:
            base = [r.get("mse", np.inf) for r in records
                    if r["method"] == m and r["sweep_value"] == 0.0]
            baseline = float(np.median(np.where(np.isnan(base), np.inf, base)))
        for v in values:
            group = [r for r in records if r["method"] == m and r["sweep_value"] == v]
            if not cfg.include_failed:
                group = [r for r in group if r["status"] == "ok" and not r.get("failed")]
            if not group:
                continue
            for name in names:
                vals = [float(r.get(name, np.inf)) if r["status"] == "ok" else np.inf
                        for r in group]
                succ = [_success(cfg.benchmark, name, r, baseline) for r in group]
                rows.append(summarize(vals, m, v, name, succ))
    return rows


def _slug(rec: dict, axis: str) -> str:
    v = rec["sweep_value"]
    tag = f"n{int(v)}" if axis == "data_length" else f"eta{v:g}"
    return f"{rec['method']}_{tag}_r{rec['realization']}"


def write_outputs(cfg: ExperimentConfig, records: list, kind: str, out: Path,
                  timing: bool = False) -> dict:
    """Raw and summary CSVs plus per-realization model / log files; returns file list."""
    out.mkdir(parents=True, exist_ok=True)
    axis, _ = sweep_axis(cfg)
    files = []
    mdir = out / "models"
    mdir.mkdir(exist_ok=True)
    for r in records:
        if "model" not in r or r["method"] == ORACLE:
            continue
        stem = mdir / _slug(r, axis)
        stem.with_suffix(".json").write_text(json.dumps(r["model"], sort_keys=True) + "\n")
        stem.with_suffix(".txt").write_text(r["text"].rstrip("\n") + "\n")
        stem.with_name(stem.name + "_report.json").write_text(
            json.dumps(r["report"], sort_keys=True, indent=1) + "\n")
        files.append(str(stem.with_suffix(".json").relative_to(out)))
    if kind == "control":
        ldir = out / "logs"
        ldir.mkdir(exist_ok=True)
        for r in records:
            if "log" in r:
                p = ldir / (_slug(r, axis) + ".csv")
                r["log"].to_csv(p, timing=timing)
                files.append(str(p.relative_to(out)))
    names = METRICS[cfg.benchmark].get(kind, ())
    raw = out / f"{kind}_raw.csv"
    write_raw_csv(records, raw, names)
    files.append(raw.name)
    if names:
        summ = out / f"{kind}_summary.csv"
        write_summary_csv(summarize_records(cfg, records, kind), summ)
        files.append(summ.name)
    return {"files": files}


def git_revision() -> str:
    try:
        res = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             timeout=5, cwd=os.path.dirname(__file__))
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(cfg: ExperimentConfig, out: Path, command: str, phases: dict,
                   files: list) -> Path:
    """Run metadata; wall times make this the one file that is not byte-reproducible."""
    manifest = {"command": command, "config_sha256": cfg.digest(), "config": cfg.to_dict(),
                "git_revision": git_revision(), "version": __version__,
                "kernel_backend": _core.BACKEND, "wall_seconds": phases, "files": sorted(files)}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def prepare(cfg: ExperimentConfig, out: Path) -> ExperimentConfig:
    """Materialize inputs that live on disk (the external benchmark's CSV)."""
    if cfg.benchmark == "external" and not cfg.train.get("csv"):
        path = write_plasma_csv(cfg, out / "data" / "plasma_physical.csv")
        cfg = cfg.replace(train={"csv": str(path)})
    return cfg


def run_command(cfg: ExperimentConfig, command: str, out, workers: int = 1,
                oracle: bool = False, timing: bool = False) -> dict:
    """Entry point shared by the CLI subcommands."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    cfg = prepare(cfg, out)
    phases, files = {}, []
    if cfg.benchmark == "external":
        files.append(str(Path(cfg.train["csv"]).resolve().relative_to(out.resolve()))
                     if Path(cfg.train["csv"]).resolve().is_relative_to(out.resolve())
                     else cfg.train["csv"])
    if command == "sweep":
        kinds = ["predict", "control"] if cfg.benchmark == "lorenz" else ["control"]
    else:
        kinds = [command]
    results = {}
    for kind in kinds:
        if kind == "predict" and cfg.benchmark != "lorenz":
            raise WsmpcError("prediction horizons are defined for the lorenz benchmark")
        tk = time.perf_counter()
        tasks = make_tasks(cfg, kind, oracle and kind != "identify")
        records = run_tasks(cfg, tasks, workers)
        files += write_outputs(cfg, records, kind, out, timing)["files"]
        phases[kind] = time.perf_counter() - tk
        results[kind] = records
    phases["total"] = time.perf_counter() - t0
    write_manifest(cfg, out, command, phases, files)
    return results
