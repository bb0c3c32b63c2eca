"""Config-driven experiment runner: instances, algorithms, metrics and manifests.

Configs are JSON objects (see :class:`ExperimentConfig`); unknown keys are
rejected and ``config_version`` must match :data:`CONFIG_VERSION`. A run
directory holds::

    manifest.json            seeds, config hash, tuned steps, failures, file hashes
    graph.txt                edge list of the trial-0 graph
    metrics/<series>.csv     one metrics stream per algorithm / eps schedule
    residuals/<series>.csv   per-agent solution residuals
    communication.csv        rounds and messages to the histogram tolerance, per trial
    histogram.csv            binned communication rounds per series
    timing.csv               mean CPU seconds per series

Everything except ``timing.csv`` (and the manifest entry hashing it) is
byte-identical across reruns of the same config.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .admm import EpsSchedule, StoppingRule, run, write_metrics_csv
from .baselines import ALGORITHMS as BASELINES
from .baselines import make_config, run_baseline, tune_step_size
from .graphs import erdos_renyi_digraph, ring_digraph, write_edge_list
from .problems import (
    LeastSquaresSpec,
    LogisticSpec,
    generate_consensus_instance,
    generate_least_squares_instance,
    generate_logistic_instance,
)

__all__ = [
    "CONFIG_VERSION",
    "ConfigError",
    "ExperimentConfig",
    "preset",
    "load_config",
    "save_config",
    "build_instance",
    "build_graph",
    "communication_trials",
    "run_experiment",
    "plot_data_export",
    "read_long_csv",
    "report",
]

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
DC = "DC-DistADMM"
SCENARIOS = ("least_squares", "logistic_l1", "consensus_only")
GRAPH_MODELS = ("erdos_renyi", "ring")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Declarative experiment description.

    ``samples`` is the per-agent row count (least squares) or sample count
    (logistic). ``gamma = None`` picks the scenario default: ``samples``
    for least squares, 1 otherwise. ``graph_seed = None`` reuses ``seed``;
    trial ``t`` uses graph seed ``graph_seed + t``. ``baseline_steps``
    fixes step sizes; missing entries are tuned on trial 0.
    """

    scenario: str = "least_squares"
    n: int = 10
    p: int = 15
    samples: int = 20
    graph_model: str = "erdos_renyi"
    graph_p: float = 0.2
    graph_seed: int | None = None
    seed: int = 0
    eps_schedules: list[str] = field(default_factory=lambda: ["0.01", "0.01/k", "0.01/k^2"])
    gamma: float | None = None
    algorithms: list[str] = field(default_factory=lambda: [DC, *BASELINES])
    baseline_steps: dict[str, float] = field(default_factory=dict)
    max_iterations: int = 200
    solution_tol: float | None = 1e-10
    consensus_tol: float | None = None
    step_tol: float | None = None
    trials: int = 1
    histogram_tol: float = 1e-6
    histogram_bins: int = 20
    tuning_iterations: int = 1000
    output_dir: str = "results"
    config_version: int = CONFIG_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.config_version != CONFIG_VERSION:
            raise ConfigError(f"config_version {self.config_version} is not supported (expected {CONFIG_VERSION})")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.graph_model not in GRAPH_MODELS:
            raise ConfigError(f"graph_model must be one of {GRAPH_MODELS}, got {self.graph_model!r}")
        for name in ("n", "p", "samples", "max_iterations", "trials", "histogram_bins", "tuning_iterations"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if not 0 < self.graph_p <= 1:
            raise ConfigError("graph_p must lie in (0, 1]")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        for text in self.eps_schedules:
            try:
                EpsSchedule.parse(text)
            except ValueError as exc:
                raise ConfigError(f"bad eps schedule {text!r}: {exc}") from exc
        unknown = [a for a in self.algorithms if a != DC and a not in BASELINES]
        if unknown:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {[DC, *BASELINES]}")
        for key, val in self.baseline_steps.items():
            if key not in BASELINES or not val > 0:
                raise ConfigError(f"bad baseline step entry {key!r}: {val!r}")

    @property
    def instance_gamma(self) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        return float(self.samples) if self.scenario == "least_squares" else 1.0

    @property
    def base_graph_seed(self) -> int:
        return self.seed if self.graph_seed is None else self.graph_seed

    def stopping(self) -> StoppingRule:
        return StoppingRule(self.max_iterations, self.consensus_tol, self.step_tol, self.solution_tol)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        extra = sorted(set(data) - names)
        if extra:
            raise ConfigError(f"unknown config keys: {extra}")
        if "config_version" not in data:
            raise ConfigError("config is missing config_version")
        return cls(**data)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


PRESETS = {
    "desk": {"least_squares": 20, "logistic_l1": 100, "consensus_only": 1, "n": 10},
    "paper": {"least_squares": 100, "logistic_l1": 10_000, "consensus_only": 1, "n": 100},
}


def preset(scale: str, scenario: str = "least_squares", **overrides) -> ExperimentConfig:
    """``desk`` (n=10) or ``paper`` (n=100) defaults for a scenario."""
    if scale not in PRESETS:
        raise ConfigError(f"scale preset must be one of {sorted(PRESETS)}, got {scale!r}")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    values = {"scenario": scenario, "n": PRESETS[scale]["n"], "samples": PRESETS[scale][scenario]}
    if scenario != "least_squares":
        values["algorithms"] = [DC]
    values.update(overrides)
    return ExperimentConfig(**values)


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


# Building blocks -------------------------------------------------------------------


def build_graph(cfg: ExperimentConfig, trial: int = 0):
    if cfg.graph_model == "ring":
        return ring_digraph(cfg.n)
    return erdos_renyi_digraph(cfg.n, cfg.graph_p, seed=cfg.base_graph_seed + trial)


def build_instance(cfg: ExperimentConfig, schedule: str | None = None):
    """``(problem, oracle)`` for the configured scenario and one eps schedule."""
    eps = EpsSchedule.parse(schedule or cfg.eps_schedules[0])
    if cfg.scenario == "least_squares":
        spec = LeastSquaresSpec(n=cfg.n, rows=cfg.samples, p=cfg.p, gamma=cfg.instance_gamma, eps_schedule=eps)
        problem, oracle, _ = generate_least_squares_instance(spec, cfg.seed)
    elif cfg.scenario == "logistic_l1":
        spec = LogisticSpec(n=cfg.n, samples=cfg.samples, p=cfg.p, gamma=cfg.instance_gamma, eps_schedule=eps)
        problem, oracle, _ = generate_logistic_instance(spec, cfg.seed)
    else:
        problem, oracle, _ = generate_consensus_instance(cfg.n, cfg.p, cfg.seed, cfg.instance_gamma, eps)
    return problem, oracle


def _series_name(algorithm: str, schedule: str | None = None) -> str:
    if schedule is None:
        return algorithm
    return f"{algorithm}_eps-{schedule.replace('/', 'over').replace('^', 'pow')}"


def _with_schedule(problem, schedule: str):
    return dataclasses.replace(problem, eps_schedule=EpsSchedule.parse(schedule))


def communication_trials(cfg: ExperimentConfig, steps: dict[str, float] | None = None) -> list[dict]:
    """Rounds and messages each series needs to reach ``histogram_tol``, per trial graph.

    Returns records sorted by ``(trial, series)``; a series that never
    reaches the tolerance within ``max_iterations`` reports ``rounds = None``.
    """
    steps = steps or {}
    problem, oracle = build_instance(cfg)
    stop = StoppingRule(cfg.max_iterations, solution_tol=cfg.histogram_tol)
    records = []
    for t in range(cfg.trials):
        graph = build_graph(cfg, t)
        for alg in cfg.algorithms:
            if alg == DC:
                for sched in cfg.eps_schedules:
                    res = run(_with_schedule(problem, sched), graph, stop=stop, oracle=oracle)
                    records.append(_comm_record(t, _series_name(DC, sched), res, cfg.histogram_tol))
            elif alg in steps:
                res = run_baseline(problem, make_config(alg, graph, steps[alg]), stop, oracle)
                records.append(_comm_record(t, alg, res, cfg.histogram_tol))
    records.sort(key=lambda r: (r["trial"], r["series"]))
    return records


def _comm_record(trial: int, series: str, res, tol: float) -> dict:
    k = res.first_iteration_below(tol)
    messages = None
    if k is not None:
        messages = res.history[k - 1].cum_messages
    return {"trial": trial, "series": series, "iterations": k, "rounds": res.rounds_to(tol), "messages": messages}


def _histogram(records: list[dict], bins: int) -> list[tuple]:
    rows = []
    for series in sorted({r["series"] for r in records}):
        vals = np.array([r["rounds"] for r in records if r["series"] == series and r["rounds"] is not None], float)
        if vals.size == 0:
            continue
        counts, edges = np.histogram(vals, bins=bins)
        rows += [(series, f"{edges[b]:.6g}", f"{edges[b + 1]:.6g}", int(counts[b])) for b in range(bins)]
    return rows


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_residuals(path: Path, res) -> None:
    if res.residuals is None:
        return
    n = res.residuals.shape[1]
    rows = [[m.k] + [repr(float(v)) for v in row] for m, row in zip(res.history, res.residuals)]
    _write_csv(path, ["k"] + [f"agent_{i}" for i in range(n)], rows)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, output_dir: str | Path | None = None) -> Path:
    """Run every configured series on trial 0, then the communication trials.

    Algorithm failures are logged in the manifest and the remaining series
    still run. Returns the output directory.
    """
    out = Path(output_dir or cfg.output_dir)
    (out / "metrics").mkdir(parents=True, exist_ok=True)
    (out / "residuals").mkdir(exist_ok=True)
    problem, oracle = build_instance(cfg)
    graph = build_graph(cfg, 0)
    write_edge_list(graph, out / "graph.txt")
    stop = cfg.stopping()

    failures: dict[str, str] = {}
    timing: dict[str, float] = {}
    steps: dict[str, float] = {}
    for alg in cfg.algorithms:
        runs = []
        if alg == DC:
            runs = [(_series_name(DC, s), s) for s in cfg.eps_schedules]
        elif cfg.scenario != "least_squares":
            failures[alg] = f"{alg} needs smooth objectives; scenario {cfg.scenario} is not supported"
            continue
        else:
            runs = [(alg, None)]
        for series, sched in runs:
            try:
                if alg == DC:
                    t0 = time.process_time()
                    res = run(_with_schedule(problem, sched), graph, stop=stop, oracle=oracle)
                else:
                    if alg not in cfg.baseline_steps:
                        tuned = tune_step_size(alg, problem, graph, oracle, cfg.histogram_tol, cfg.tuning_iterations)
                        steps[alg] = tuned.step_size
                    else:
                        steps[alg] = float(cfg.baseline_steps[alg])
                    t0 = time.process_time()
                    res = run_baseline(problem, make_config(alg, graph, steps[alg]), stop, oracle)
            except Exception as exc:  # recorded, other series continue
                log.exception("series %s failed", series)
                failures[series] = f"{type(exc).__name__}: {exc}"
                continue
            timing[series] = time.process_time() - t0
            write_metrics_csv(res.history, out / "metrics" / f"{series}.csv", wall_time=False)
            _write_residuals(out / "residuals" / f"{series}.csv", res)

    records = communication_trials(cfg, steps)
    _write_csv(
        out / "communication.csv",
        ["trial", "graph_seed", "series", "iterations", "rounds", "messages"],
        [
            [r["trial"], cfg.base_graph_seed + r["trial"], r["series"], _blank(r["iterations"]), _blank(r["rounds"]),
             _blank(r["messages"])]
            for r in records
        ],
    )
    _write_csv(out / "histogram.csv", ["series", "bin_lo", "bin_hi", "count"], _histogram(records, cfg.histogram_bins))
    _write_csv(out / "timing.csv", ["series", "mean_cpu_s"], [[s, f"{v:.6f}"] for s, v in sorted(timing.items())])

    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "package_version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash,
        "seeds": {"instance": cfg.seed, "graphs": [cfg.base_graph_seed + t for t in range(cfg.trials)]},
        "oracle": {"method": oracle.method, "f_star": oracle.f_star},
        "gamma": problem.gamma,
        "baseline_steps": steps,
        "failures": failures,
        "files": {str(p.relative_to(out)): _sha256(p) for p in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def _blank(value):
    return "" if value is None else value


# Export and report -------------------------------------------------------------------

LONG_HEADER = ("algorithm", "k", "metric", "value")


def plot_data_export(metrics_dir: str | Path, out_path: str | Path | None = None) -> Path:
    """Flatten every ``metrics/*.csv`` into tidy ``(algorithm, k, metric, value)`` rows."""
    metrics_dir = Path(metrics_dir)
    sources = sorted(metrics_dir.glob("*.csv"))
    if not sources:
        raise FileNotFoundError(f"no metrics CSVs in {metrics_dir}")
    out_path = Path(out_path) if out_path is not None else metrics_dir.parent / "plot_data.csv"
    rows = []
    for src in sources:
        with open(src, newline="") as fh:
            for rec in csv.DictReader(fh):
                for metric, value in rec.items():
                    if metric != "k" and value != "":
                        rows.append((src.stem, int(rec["k"]), metric, value))
    _write_csv(out_path, LONG_HEADER, rows)
    return out_path


def read_long_csv(path: str | Path) -> list[tuple[str, int, str, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != LONG_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [(a, int(k), m, float(v)) for a, k, m, v in reader]


def _read_metrics(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report(run_dir: str | Path, tol: float = 1e-6) -> str:
    """Plain-text summary of a run directory: per-series convergence, rounds and CPU time."""
    run_dir = Path(run_dir)
    metric_files = sorted((run_dir / "metrics").glob("*.csv"))
    if not metric_files:
        raise FileNotFoundError(f"no metrics in {run_dir}")
    timing = {}
    if (run_dir / "timing.csv").exists():
        timing = {r["series"]: float(r["mean_cpu_s"]) for r in _read_metrics(run_dir / "timing.csv")}
    mean_rounds: dict[str, float] = {}
    if (run_dir / "communication.csv").exists():
        comm = _read_metrics(run_dir / "communication.csv")
        for series in sorted({r["series"] for r in comm}):
            vals = [float(r["rounds"]) for r in comm if r["series"] == series and r["rounds"]]
            if vals:
                mean_rounds[series] = float(np.mean(vals))

    lines = [f"{'series':<32} {'iters':>6} {'k@' + format(tol, 'g'):>8} {'final residual':>15} "
             f"{'mean rounds':>12} {'cpu s':>9}"]
    for path in metric_files:
        rows = _read_metrics(path)
        res = [(int(r["k"]), float(r["max_solution_residual"])) for r in rows if r["max_solution_residual"]]
        hit = next((k for k, v in res if v <= tol), None)
        final = res[-1][1] if res else float("nan")
        name = path.stem
        lines.append(
            f"{name:<32} {len(rows):>6} {str(hit) if hit else '-':>8} {final:>15.3e} "
            f"{mean_rounds.get(name, float('nan')):>12.1f} {timing.get(name, float('nan')):>9.3f}"
        )
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        for series, msg in sorted(manifest.get("failures", {}).items()):
            lines.append(f"FAILED {series}: {msg}")
    return "\n".join(lines)
