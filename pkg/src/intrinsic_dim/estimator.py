"""Sweeping d, locating the 90% crossing, and bootstrapping its spread.

A sweep trains ``runs_per_d`` independent subspace models per tested ``d``.
The crossing ``d_int90`` is the first tested ``d`` whose *median* performance
reaches ``threshold_ratio * baseline``; later dips below the threshold are
ignored.  Each (d, run) cell draws its seeds from ``(seed, d, run)`` alone, so
evaluation order and worker count never change a report.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .optimize import OptimizerConfig, train
from .rng import Stream, derive_seed
from .subspace import init_subspace_model

SCHEMA = "intrinsic-dim/sweep-report"
SCHEMA_VERSION = 1


@dataclass
class SweepPoint:
    d: int
    performances: list

    def __post_init__(self):
        if len(self.performances) < 1:
            raise ValueError("a sweep point needs at least one run")
        self.performances = [float(p) for p in self.performances]

    @property
    def runs(self) -> int:
        return len(self.performances)

    @property
    def median(self) -> float:
        return float(np.median(self.performances))

    @property
    def mean(self) -> float:
        return float(np.mean(self.performances))


def find_crossing(points, threshold: float):
    """Smallest tested d whose median reaches ``threshold``, else None."""
    for p in points:
        if p.median >= threshold:
            return p.d
    return None


def bootstrap_crossings(points, threshold: float, B: int = 50, seed: int = 0) -> np.ndarray:
    """Crossing of each of ``B`` resampled sweeps (NaN where none crosses).

    Every point's run list is resampled with replacement independently.
    """
    if B < 1:
        raise ValueError("need at least one bootstrap sample")
    points = list(points)
    if not points:
        return np.full(B, np.nan)
    crossed = np.empty((B, len(points)), dtype=bool)
    for i, p in enumerate(points):
        perf = np.asarray(p.performances)
        idx = Stream(seed, "bootstrap", i).integers(B * p.runs, p.runs).reshape(B, p.runs)
        crossed[:, i] = np.median(perf[idx], axis=1) >= threshold
    ds = np.array([p.d for p in points], dtype=np.float64)
    first = crossed.argmax(axis=1)
    return np.where(crossed.any(axis=1), ds[first], np.nan)


def bootstrap_std(points, threshold: float, B: int = 50, seed: int = 0) -> float:
    """Standard deviation of the bootstrap crossings; resamples that never
    cross are left out (NaN if none cross)."""
    values = bootstrap_crossings(points, threshold, B, seed)
    values = values[~np.isnan(values)]
    return float(np.std(values)) if values.size else math.nan


def find_d_int100(points, baseline: float, alpha: float = 0.05, rtol: float = 1e-3,
                  margin: float = 0.01):
    """First d whose runs are statistically indistinguishable from ``baseline``.

    Indistinguishable means the median is within ``rtol`` of the baseline, or a
    two-sided one-sample t-test fails to reject equality at level ``alpha``
    while the median is within ``margin`` of the baseline.  The margin guards
    against a handful of wildly spread runs passing the test by sheer noise.
    The number is unstable by nature and is reported with that flag.
    """
    scale = abs(baseline)
    for p in points:
        gap = abs(p.median - baseline)
        if gap <= rtol * scale:
            return p.d
        perf = np.asarray(p.performances)
        if p.runs >= 2 and np.std(perf) > 0 and gap <= margin * scale:
            if stats.ttest_1samp(perf, baseline).pvalue > alpha:
                return p.d
    return None


def refine_near_threshold(points, threshold: float, budget=None, D: int | None = None,
                          max_ratio: float = 1.5) -> list:
    """Next d value(s) to test near the crossing.

    * bracketed (lo, hi) with hi / lo > ``max_ratio``: the geometric midpoint;
    * crossing at the smallest tested d: half of it (toward 1);
    * no crossing: double the largest tested d (capped at ``D``).
    """
    if budget is not None and budget <= 0:
        return []
    points = sorted(points, key=lambda p: p.d)
    tested = {p.d for p in points}
    hit = find_crossing(points, threshold)
    if hit is None:
        top = points[-1].d
        nxt = 2 * top if D is None else min(2 * top, D)
        return [nxt] if nxt not in tested else []
    below = [p.d for p in points if p.d < hit]
    if not below:
        nxt = hit // 2
        return [nxt] if nxt >= 1 and nxt not in tested else []
    lo = below[-1]
    if hit / lo <= max_ratio:
        return []
    mid = int(round(math.sqrt(lo * hit)))
    if lo < mid < hit and mid not in tested:
        return [mid]
    return []


def geometric_grid(start: int, stop: int, factor: float = 1.6) -> list:
    """Integers from ``start`` to ``stop`` spaced by roughly ``factor``."""
    out, x = [], float(start)
    while x < stop:
        v = int(round(x))
        if not out or v > out[-1]:
            out.append(v)
        x *= factor
    if not out or out[-1] != stop:
        out.append(stop)
    return out


@dataclass
class SweepReport:
    task: str
    arch: str
    projection: str
    baseline: float
    baseline_mode: str
    threshold_ratio: float
    threshold: float
    points: list
    d_int90: int | None
    d_int90_std: float
    bootstrap_samples: int
    bootstrap_missing: int
    d_int100: int | None = None
    seeds: dict = field(default_factory=dict)
    config_digest: str = ""
    meta: dict = field(default_factory=dict)
    manifest_digest: str = ""

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else x
        return {
            "schema": SCHEMA, "version": SCHEMA_VERSION,
            "task": self.task, "arch": self.arch, "projection": self.projection,
            "baseline": self.baseline, "baseline_mode": self.baseline_mode,
            "threshold_ratio": self.threshold_ratio, "threshold": self.threshold,
            "points": [{"d": p.d, "performances": p.performances, "runs": p.runs,
                        "median": p.median, "mean": p.mean} for p in self.points],
            "d_int90": self.d_int90 if self.d_int90 is not None else "not reached",
            "d_int90_std": num(self.d_int90_std),
            "bootstrap": {"samples": self.bootstrap_samples, "missing": self.bootstrap_missing},
            "d_int100": self.d_int100, "d_int100_unstable": True,
            "seeds": self.seeds, "config_digest": self.config_digest, "meta": self.meta,
            "manifest_digest": self.manifest_digest,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepReport":
        if data.get("schema") != SCHEMA:
            raise ValueError("not a sweep report")
        d90 = data["d_int90"]
        std = data["d_int90_std"]
        return cls(data["task"], data["arch"], data["projection"], data["baseline"],
                   data["baseline_mode"], data["threshold_ratio"], data["threshold"],
                   [SweepPoint(p["d"], p["performances"]) for p in data["points"]],
                   None if d90 == "not reached" else d90, math.nan if std is None else std,
                   data["bootstrap"]["samples"], data["bootstrap"]["missing"],
                   data.get("d_int100"), data.get("seeds", {}), data.get("config_digest", ""),
                   data.get("meta", {}), data.get("manifest_digest", ""))

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_runs_csv(self, path):
        """Flat ``d, run, performance`` rows."""
        with open(path, "w", newline="") as fh:
            if self.manifest_digest:
                fh.write(f"# manifest={self.manifest_digest}\n")
            w = csv.writer(fh)
            w.writerow(["d", "run", "performance"])
            for p in self.points:
                for i, v in enumerate(p.performances):
                    w.writerow([p.d, i, v])

    def write_plot_csv(self, path):
        """Per-d median, mean, min and max, ready for an error-bar plot."""
        with open(path, "w", newline="") as fh:
            if self.manifest_digest:
                fh.write(f"# manifest={self.manifest_digest}\n")
            w = csv.writer(fh)
            w.writerow(["d", "median", "mean", "min", "max", "threshold", "baseline"])
            for p in self.points:
                w.writerow([p.d, p.median, p.mean, min(p.performances), max(p.performances),
                            self.threshold, self.baseline])


class TrainingSweepTask:
    """Adapter giving a gradient-trained task the interface ``run_sweep`` uses."""

    def __init__(self, task, config: OptimizerConfig, direct_config: OptimizerConfig | None = None):
        self.task, self.config = task, config
        self.direct_config = direct_config or config
        self.descriptor = task.descriptor
        self.name = getattr(task, "name", task.descriptor)
        self.meta = dict(getattr(getattr(task, "dataset", None), "meta", {}) or {})

    def param_count(self) -> int:
        return self.task.param_count()

    def config_dict(self) -> dict:
        return {"subspace": self.config.to_dict(), "direct": self.direct_config.to_dict()}

    def fit_direct(self, seed: int) -> float:
        cfg = _with_seed(self.direct_config, derive_seed(seed, "train"))
        theta0 = self.task.init_params(derive_seed(seed, "theta0"))
        return train(theta0, self.task, cfg, run_id=f"direct-{seed}").performance

    def fit_subspace(self, kind, d: int, seed: int) -> float:
        sm = init_subspace_model(self.task, kind, d, derive_seed(seed, "theta0"),
                                 derive_seed(seed, "P"))
        cfg = _with_seed(self.config, derive_seed(seed, "train"))
        return train(sm, self.task, cfg, run_id=f"d{d}-{seed}").performance


def _with_seed(cfg: OptimizerConfig, seed: int) -> OptimizerConfig:
    from dataclasses import replace
    return replace(cfg, seed=seed)


_WORKER_TASK = None


def _init_worker(task):
    global _WORKER_TASK
    _WORKER_TASK = task


def _run_cell(args):
    kind, d, cell_seed = args
    return _WORKER_TASK.fit_subspace(kind, d, cell_seed)


def parse_baseline(spec) -> tuple[str, float | None]:
    """``"direct"``, ``"global:<value>"`` or a bare number."""
    if isinstance(spec, (int, float)):
        return "global", float(spec)
    if spec == "direct":
        return "direct", None
    if isinstance(spec, str) and spec.startswith("global:"):
        return "global", float(spec.split(":", 1)[1])
    raise ValueError(f"bad baseline spec {spec!r}")


def run_sweep(task, kind, d_values, runs_per_d: int = 3, baseline="direct", budget=None, *,
              threshold_ratio: float = 0.9, bootstrap: int = 50, seed: int = 0, jobs: int = 1,
              baseline_runs: int = 1, refine: bool = True, max_ratio: float = 1.5,
              progress=None) -> SweepReport:
    """Measure d_int90 of ``task`` with projections of ``kind``.

    ``task`` must provide ``descriptor``, ``param_count()``,
    ``fit_direct(seed)`` and ``fit_subspace(kind, d, seed)`` returning a
    performance (higher is better); see :class:`TrainingSweepTask`.
    ``budget`` caps the number of subspace training cells.
    """
    from .projection import ProjectionKind
    kind = ProjectionKind.parse(kind)
    d_values = sorted({int(d) for d in d_values})
    if not d_values:
        raise ValueError("d_values must not be empty")
    if runs_per_d < 1:
        raise ValueError("runs_per_d must be at least 1")
    D = task.param_count()
    if d_values[-1] > D:
        raise ValueError(f"d={d_values[-1]} exceeds D={D} for {task.descriptor}")
    if not 0 < threshold_ratio <= 1:
        raise ValueError("threshold_ratio must be in (0, 1]")
    if budget is not None:
        affordable = budget // runs_per_d
        if affordable < 1:
            raise ValueError("budget exhausted before any d could be tested")
        d_values = d_values[:affordable]
        remaining = budget - len(d_values) * runs_per_d
    else:
        remaining = None

    mode, base_value = parse_baseline(baseline)
    shift = getattr(task, "min_performance", 0.0)
    if mode == "direct":
        vals = [task.fit_direct(derive_seed(seed, "baseline", i)) for i in range(baseline_runs)]
        base_value = max(vals)
    base_value -= shift
    threshold = threshold_ratio * base_value

    results: dict[int, list] = {}
    pool = None
    if jobs > 1:
        pool = ProcessPoolExecutor(jobs, mp_context=multiprocessing.get_context("fork"),
                                   initializer=_init_worker, initargs=(task,))

    def evaluate(ds):
        cells = [(kind, d, derive_seed(seed, "cell", d, r)) for d in ds for r in range(runs_per_d)]
        if pool is not None:
            perfs = list(pool.map(_run_cell, cells))
        else:
            perfs = [task.fit_subspace(*c) for c in cells]
        for (_, d, _), perf in zip(cells, perfs):
            results.setdefault(d, []).append(perf - shift)
        if progress:
            for d in ds:
                progress(d, results[d])

    try:
        evaluate(d_values)
        while refine:
            pts = [SweepPoint(d, results[d]) for d in sorted(results)]
            proposals = refine_near_threshold(pts, threshold, remaining, D, max_ratio)
            if not proposals:
                break
            if remaining is not None:
                if remaining < runs_per_d * len(proposals):
                    break
                remaining -= runs_per_d * len(proposals)
            evaluate(proposals)
    finally:
        if pool is not None:
            pool.shutdown()

    points = [SweepPoint(d, results[d]) for d in sorted(results)]
    d90 = find_crossing(points, threshold)
    boots = bootstrap_crossings(points, threshold, bootstrap, derive_seed(seed, "bootstrap"))
    missing = int(np.isnan(boots).sum())
    std = float(np.std(boots[~np.isnan(boots)])) if missing < bootstrap else math.nan
    d100 = find_d_int100(points, base_value)

    config = {"task": task.descriptor, "kind": kind.name, "d_values": d_values,
              "runs_per_d": runs_per_d, "baseline": str(baseline), "seed": seed,
              "threshold_ratio": threshold_ratio, "bootstrap": bootstrap}
    if hasattr(task, "config_dict"):
        config["training"] = task.config_dict()
    digest = hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()
    return SweepReport(getattr(task, "name", task.descriptor), task.descriptor, kind.name.lower(),
                       base_value, mode, threshold_ratio, threshold, points, d90, std, bootstrap,
                       missing, d100, {"global_seed": seed}, digest,
                       dict(getattr(task, "meta", {}) or {}))
