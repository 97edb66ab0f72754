"""Experiment orchestration: config files, CSV logs, goal snapshots, aggregation."""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .envs import default_polyline
from .matching import normalize_lipschitz
from .training import IterationReport, RunConfig, TrainingState, run_iteration

CURVE_COLUMNS = ("iteration", "episodes", "success_rate", "matching_cost", "goal_target_wasserstein", "critic_loss")
TIMING_COLUMNS = ("iteration", "seconds")


class ConfigError(ValueError):
    pass


def _field_types():
    return {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    known = set(RunConfig.field_names())
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown setting {key!r}")
        out[key] = value
    return out


def coerce_settings(raw: Dict[str, object]) -> Dict[str, object]:
    """Convert string values to the types of the matching RunConfig fields."""
    defaults = RunConfig()
    out = {}
    for key, value in raw.items():
        if not isinstance(value, str):
            out[key] = value
            continue
        default = getattr(defaults, key)
        try:
            if isinstance(default, bool):
                out[key] = value.lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                out[key] = int(value)
            elif isinstance(default, float):
                out[key] = float(value)
            elif isinstance(default, tuple):
                out[key] = tuple(int(v) for v in value.replace("x", ",").split(",") if v.strip())
            else:
                out[key] = value
        except ValueError:
            raise ConfigError(f"invalid value for {key}: {value!r}") from None
    return out


def resolve_config(config_file: Optional[str] = None, overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    """Defaults, then the config file, then explicit overrides."""
    settings: Dict[str, object] = {}
    if config_file is not None:
        settings.update(parse_config_text(Path(config_file).read_text()))
    settings.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**coerce_settings(settings))


def format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_resolved_config(path, config: RunConfig, env=None):
    lines = [f"{k} = {format_value(v)}" for k, v in config.as_dict().items()]
    if env is not None:
        d_max = env.goal_space_diameter
        lines.append(f"# derived: goal_space_diameter = {d_max!r}")
        lines.append(f"# derived: l_star = {normalize_lipschitz(config.L, config.gamma, d_max)!r}")
        lines.append(f"# derived: contact_radius = {env.contact_radius!r}")
        poly = default_polyline(env)
        if poly is not None:
            lines.append("# derived: polyline = " + ",".join(repr(float(x)) for x in np.ravel(poly)))
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


class RunLogger:
    """Writes curve.csv, timing.csv and goal snapshots into ``outdir``."""

    def __init__(self, outdir, snapshot_every: int = 10, total_iterations: Optional[int] = None):
        self.outdir = Path(outdir)
        self.snapshot_every = snapshot_every
        self.total_iterations = total_iterations
        self.outdir.mkdir(parents=True, exist_ok=True)
        self._curve = open(self.outdir / "curve.csv", "w", newline="")
        self._timing = open(self.outdir / "timing.csv", "w", newline="")
        self.curve = csv.writer(self._curve, lineterminator="\n")
        self.timing = csv.writer(self._timing, lineterminator="\n")
        self.curve.writerow(CURVE_COLUMNS)
        self.timing.writerow(TIMING_COLUMNS)

    def wants_snapshot(self, k: int) -> bool:
        if self.snapshot_every <= 0:
            return False
        return k == 1 or k % self.snapshot_every == 0 or k == self.total_iterations

    def log(self, report: IterationReport):
        self.curve.writerow([_fmt(getattr(report, c)) for c in CURVE_COLUMNS])
        self.timing.writerow([report.iteration, f"{report.seconds:.4f}"])
        self._curve.flush()
        self._timing.flush()
        if self.wants_snapshot(report.iteration):
            write_goal_snapshot(self.outdir / f"goals_iter{report.iteration}.csv", report)

    def close(self):
        self._curve.close()
        self._timing.close()


def write_goal_snapshot(path, report: IterationReport):
    """Exploration goals (with source trajectory when matched) and the targets."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("role", "index", "x", "y", "source_trajectory"))
        src = report.source_trajectories
        for i, g in enumerate(report.exploration_goals):
            w.writerow(("exploration", i, _fmt(g[0]), _fmt(g[1]), "" if src is None else int(src[i])))
        for i, g in enumerate(report.target_goals):
            w.writerow(("target", i, _fmt(g[0]), _fmt(g[1]), ""))


def check_outdir(outdir):
    path = Path(outdir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {outdir}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {outdir} is not writable")
    return path


def run_experiment(config: RunConfig, outdir, snapshot_every: int = 10, save_agent: bool = True, progress=None):
    """Train one run, logging every iteration; returns ``(state, reports)``."""
    out = check_outdir(outdir)
    state = TrainingState(config)
    write_resolved_config(out / "config_resolved.txt", config, state.env)
    logger = RunLogger(out, snapshot_every, config.iterations)
    reports = []
    try:
        for _ in range(config.iterations):
            report = run_iteration(state)
            reports.append(report)
            logger.log(report)
            if progress is not None:
                progress(config, report)
    finally:
        logger.close()
    if save_agent:
        state.agent.save(out / "agent.ckpt")
    return state, reports


# -- aggregation ---------------------------------------------------------------


def nearest_rank(values, p: float) -> float:
    """Nearest-rank percentile: the ``ceil(p/100 * n)``-th smallest value (rank >= 1)."""
    v = np.sort(np.asarray(values, float))
    if v.size == 0:
        raise ValueError("no values")
    if not 0 <= p <= 100:
        raise ValueError("percentile must lie in [0, 100]")
    rank = max(1, math.ceil(p / 100.0 * v.size))
    return float(v[rank - 1])


def read_curve(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no data rows")
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def aggregate_runs(paths: Sequence, column: str = "success_rate"):
    """Per-iteration median and 20th/80th nearest-rank percentiles over runs."""
    curves = [read_curve(p) for p in paths]
    if not curves:
        raise ValueError("need at least one curve")
    grid = curves[0]["iteration"]
    for p, c in zip(paths, curves):
        if not np.array_equal(c["iteration"], grid):
            raise ValueError(f"iteration grid of {p} does not match {paths[0]}")
    data = np.stack([c[column] for c in curves])  # (runs, iterations)
    episodes = curves[0].get("episodes", grid)
    return {
        "iteration": grid.astype(int),
        "episodes": episodes.astype(int),
        "median": np.array([nearest_rank(col, 50) for col in data.T]),
        "p20": np.array([nearest_rank(col, 20) for col in data.T]),
        "p80": np.array([nearest_rank(col, 80) for col in data.T]),
        "runs": data,
    }


def write_summary(path, summaries: Dict[str, dict]):
    """One row per iteration with ``<label>_median/_p20/_p80`` columns."""
    labels = list(summaries)
    first = summaries[labels[0]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["iteration", "episodes"]
        for lab in labels:
            header += [f"{lab}_median", f"{lab}_p20", f"{lab}_p80"]
        w.writerow(header)
        for i, it in enumerate(first["iteration"]):
            row = [int(it), int(first["episodes"][i])]
            for lab in labels:
                s = summaries[lab]
                row += [_fmt(s["median"][i]), _fmt(s["p20"][i]), _fmt(s["p80"][i])]
            w.writerow(row)


def parse_seeds(text: str) -> List[int]:
    """``"1..10"``, ``"1,2,5"`` or a mix such as ``"1..3,7"``."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = (int(x) for x in part.split(".."))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def run_many(configs: Iterable[RunConfig], outdirs: Iterable, **kw):
    results = []
    for cfg, out in zip(configs, outdirs):
        start = time.perf_counter()
        _, reports = run_experiment(cfg, out, **kw)
        results.append((cfg, reports, time.perf_counter() - start))
    return results
