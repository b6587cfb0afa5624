"""Run an experiment end to end and persist trace, posterior and report."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .baseline import RejectionConfig, rejection_abc
from .config import config_to_dict
from .experiments import BASELINE_STREAM, EXPERIMENTS, ExperimentConfig, build
from .model import TraceRecord, posterior_from_trace, train
from .simulators import derive_seed, mixture_pdf

LOW_PROB_BAND = (0.2, 1.0)


class RunError(RuntimeError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


class TraceWriter:
    """Streams trace rows so a crash still leaves every finished iteration on disk.

    trace.csv: iteration, the batch mean of each theta dimension, L_A, L_G,
    L_theta.  Wall-clock goes to timing.csv so that trace.csv is a pure
    function of config and seed.  samples.csv holds every generated theta.
    """

    def __init__(self, directory: Path, names):
        self.names = list(names)
        self._files = [(directory / f).open("w", newline="")
                       for f in ("trace.csv", "samples.csv", "timing.csv")]
        self.trace, self.samples, self.timing = (csv.writer(f) for f in self._files)
        self.trace.writerow(["iteration", *self.names, "L_A", "L_G", "L_theta"])
        self.samples.writerow(["iteration", "row", *self.names])
        self.timing.writerow(["iteration", "elapsed_s"])

    def __call__(self, rec: TraceRecord):
        self.trace.writerow([rec.iteration, *map(_fmt, rec.theta.mean(axis=0)),
                             _fmt(rec.loss_approx), _fmt(rec.loss_accept), _fmt(rec.loss_decoder)])
        for k, row in enumerate(rec.theta):
            self.samples.writerow([rec.iteration, k, *map(_fmt, row)])
        self.timing.writerow([rec.iteration, f"{rec.elapsed:.6f}"])

    def close(self):
        for f in self._files:
            f.close()


def write_posterior(samples: np.ndarray, names, path: Path) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(names))
        w.writerows([[_fmt(v) for v in row] for row in np.atleast_2d(samples)])
    return path


def read_posterior(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))


def mixture_posterior_pdf(cfg: ExperimentConfig):
    """Posterior of theta given a single datum y = true_theta under the flat prior.

    The likelihood is a symmetric location family, so this is the mixture
    density centred at y.
    """
    y = float(cfg.data.true_theta[0])
    return lambda t: mixture_pdf(np.asarray(t), loc=y)


def compute_metrics(cfg: ExperimentConfig, samples: np.ndarray, batch_thetas=None) -> dict:
    prior = cfg.prior
    truth = np.asarray(cfg.data.true_theta, float)
    out: dict = {}
    for name in cfg.metrics:
        if name == "posterior":
            rep = metrics.posterior_report(samples, prior.lo_array, prior.hi_array)
            out["posterior"] = rep.as_dict(list(prior.names))
        elif name == "kl_mixture":
            res = metrics.kl_histogram(mixture_posterior_pdf(cfg), samples[:, 0])
            out["kl_mixture"] = {"kl": res.kl, "in_range": res.n_in_range, "dropped": res.n_dropped}
        elif name == "low_prob_fraction":
            a = np.abs(samples[:, 0])
            out["low_prob_fraction"] = float(np.mean((a > LOW_PROB_BAND[0]) & (a < LOW_PROB_BAND[1])))
        elif name == "l1_mean_error":
            out["l1_mean_error"] = metrics.l1_mean_error(samples.mean(axis=0), truth)
            if batch_thetas is not None:
                out["l1_trajectory"] = metrics.l1_trajectory(batch_thetas, truth).tolist()
        elif name == "true_box_mass":
            mass = metrics.box_mass(samples, prior.lo_array, prior.hi_array, truth)
            out["true_box_mass"] = dict(zip(prior.names, map(float, mass)))
    return out


@dataclass
class RunResult:
    directory: Path
    report: dict
    samples: np.ndarray
    trace: list


def _run_abcgan(cfg, seed, out: Path, log_every: int = 0):
    model, sim, observed, train_cfg = build(cfg, seed)
    writer = TraceWriter(out, cfg.prior.names)
    try:
        trace, _ = train(model, sim, observed, train_cfg, callback=writer, log_every=log_every)
    finally:
        writer.close()
    post = posterior_from_trace(trace, cfg.posterior_window)
    thetas = np.stack([r.theta for r in trace]) if trace else None
    return trace, post.samples, thetas, {"observed_units": len(observed)}


def _sub_seed(seed: int, stream: int) -> int:
    return int(derive_seed(seed, stream).generate_state(1)[0])


def _run_rejection(cfg, seed, out: Path, log_every: int = 0):
    exp = EXPERIMENTS[cfg.name]
    if exp.baseline_summary is None:
        raise RunError(f"no rejection baseline summary for {cfg.name}")
    sim = exp.simulator(cfg)
    observed = exp.observed(cfg, sim, seed)
    data = np.concatenate([np.atleast_1d(np.asarray(u, float)) for u in observed])
    b = cfg.baseline
    rc = RejectionConfig(b.proposals, b.quantile, b.epsilon)
    res = rejection_abc(cfg.prior, sim, exp.baseline_summary, data, rc, seed=_sub_seed(seed, BASELINE_STREAM))
    write_posterior(res.proposals, cfg.prior.names, out / "proposals.csv")
    return [], res.samples, None, {"acceptance_rate": res.acceptance_rate,
                                   "accepted": int(len(res.accepted))}


def run(cfg: ExperimentConfig, seed: int, out, log_every: int = 0) -> RunResult:
    """Train (or run the rejection baseline) and write the run directory."""
    cfg.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    runner = _run_abcgan if cfg.method == "abcgan" else _run_rejection
    trace, samples, thetas, extra = runner(cfg, seed, out, log_every)
    write_posterior(samples, cfg.prior.names, out / "posterior.csv")
    report = {
        "experiment": cfg.name,
        "method": cfg.method,
        "seed": int(seed),
        "config": config_to_dict(cfg),
        "iterations": len(trace),
        "n_samples": int(len(samples)),
        "mean": dict(zip(cfg.prior.names, map(float, samples.mean(axis=0)))) if len(samples) else {},
        "std": dict(zip(cfg.prior.names, map(float, samples.std(axis=0)))) if len(samples) else {},
        "metrics": compute_metrics(cfg, samples, thetas) if len(samples) >= 2 else {},
        "wall_clock_s": time.perf_counter() - start,
        **extra,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, default=_jsonable))
    return RunResult(out, report, samples, trace)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def load_report(run_dir) -> dict:
    path = Path(run_dir) / "report.json"
    if not path.exists():
        raise RunError(f"{run_dir} has no report.json")
    return json.loads(path.read_text())


def emit_plotdata(run_dir, bins: int = 50) -> list[Path]:
    """Per-figure CSVs: parameter trace curves and one posterior histogram per dim."""
    run_dir = Path(run_dir)
    report = load_report(run_dir)
    post = run_dir / "posterior.csv"
    if not post.exists():
        raise RunError(f"{run_dir} has no posterior.csv")
    names, samples = read_posterior(post)
    lo = report["config"]["data"]["prior_lo"]
    hi = report["config"]["data"]["prior_hi"]
    plot = run_dir / "plotdata"
    plot.mkdir(exist_ok=True)
    written = []
    trace = run_dir / "trace.csv"
    if trace.exists():
        target = plot / "trace_curves.csv"
        target.write_text(trace.read_text())
        written.append(target)
    rep = metrics.posterior_report(samples, lo, hi, bins)
    for j, name in enumerate(names):
        target = plot / f"hist_{name}.csv"
        with target.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            for a, b, c in zip(rep.edges[j][:-1], rep.edges[j][1:], rep.counts[j]):
                w.writerow([_fmt(a), _fmt(b), int(c)])
        written.append(target)
    traj = report.get("metrics", {}).get("l1_trajectory")
    if traj:
        target = plot / "l1_trajectory.csv"
        with target.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "l1_mean_error"])
            w.writerows([[i, _fmt(v)] for i, v in enumerate(traj)])
        written.append(target)
    return written


def _metric_cells(m: dict) -> dict:
    cells = {}
    if "kl_mixture" in m:
        cells["KL"] = m["kl_mixture"]["kl"]
    for key in ("l1_mean_error", "low_prob_fraction"):
        if key in m:
            cells[key] = m[key]
    return cells


def compare(run_dirs) -> str:
    """Tabulate method × parameter mean ± std (and scalar metrics) across runs.

    Runs sharing (experiment, method) are pooled into mean ± std over seeds.
    """
    groups: dict = {}
    for d in run_dirs:
        rep = load_report(d)
        groups.setdefault((rep["experiment"], rep["method"]), []).append(rep)
    lines = []
    for (exp, method), reps in groups.items():
        names = list(reps[0]["mean"])
        cols = {n: [r["mean"][n] for r in reps] for n in names}
        for r in reps:
            for k, v in _metric_cells(r["metrics"]).items():
                cols.setdefault(k, []).append(v)
        cols["time_s"] = [r["wall_clock_s"] for r in reps]
        header = ["experiment", "method", "runs", *cols]
        row = [exp, method, str(len(reps))]
        for vals in cols.values():
            v = np.asarray(vals, float)
            row.append(f"{v.mean():.3f} ± {v.std():.3f}" if len(v) > 1 else f"{v[0]:.3f}")
        lines.append(" & ".join(header))
        lines.append(" & ".join(row))
    return "\n".join(lines)


def is_finite_report(report: dict) -> bool:
    vals = list(report.get("mean", {}).values()) + list(report.get("std", {}).values())
    return all(math.isfinite(v) for v in vals)
