"""Timing of project + adjoint for each projection kind."""
from __future__ import annotations

import statistics
import time

import numpy as np

from .projection import ProjectionKind, dense_bytes, make_projection


def estimated_bytes(kind: ProjectionKind, D: int, d: int) -> int:
    """Rough storage of a realization before building it."""
    if kind == ProjectionKind.DENSE:
        return dense_bytes(D, d)
    if kind == ProjectionKind.SPARSE:
        return int(12 * np.sqrt(D) * d) + 8 * d
    return 21 * D + 2 * 8 * d


def time_project_adjoint(P, reps: int = 5, seed: int = 0) -> float:
    """Median seconds of one project + adjoint pair after one warm-up."""
    rng = np.random.default_rng(seed)
    v, g = rng.standard_normal(P.d), rng.standard_normal(P.D)
    P.project(v), P.project_adjoint(g)
    times = []
    for _ in range(reps):
        t = time.perf_counter()
        P.project(v)
        P.project_adjoint(g)
        times.append(time.perf_counter() - t)
    return statistics.median(times)


def bench_projections(D_values, kinds=("dense", "sparse", "fastfood"), ratio: float = 0.01,
                      reps: int = 5, mem_budget: float = 4e9, seed: int = 0):
    rows = []
    for D in D_values:
        d = max(1, int(round(ratio * D)))
        for kind in kinds:
            kind = ProjectionKind.parse(kind)
            row = {"kind": kind.name.lower(), "D": D, "d": d}
            need = estimated_bytes(kind, D, d)
            if need > mem_budget:
                row.update(status="over-budget", est_bytes=need, build_s=None, seconds=None)
                rows.append(row)
                continue
            t = time.perf_counter()
            P = make_projection(kind, D, d, seed)
            row["build_s"] = time.perf_counter() - t
            row.update(status="ok", est_bytes=P.nbytes, seconds=time_project_adjoint(P, reps))
            rows.append(row)
            del P
    return rows


def format_table(rows) -> str:
    D_values = sorted({r["D"] for r in rows})
    kinds = list(dict.fromkeys(r["kind"] for r in rows))
    head = "kind      | " + " | ".join(f"D={D:,}".ljust(14) for D in D_values)
    lines = [head, "-" * len(head)]
    for k in kinds:
        cells = []
        for D in D_values:
            r = next(r for r in rows if r["kind"] == k and r["D"] == D)
            cells.append((f"{r['seconds']:.5f} s" if r["status"] == "ok" else "over budget").ljust(14))
        lines.append(f"{k:<9} | " + " | ".join(cells))
    return "\n".join(lines)
