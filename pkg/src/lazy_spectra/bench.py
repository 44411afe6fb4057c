"""Gap-scaling benchmark: inner matvec counts of 1-GenEV on planted-gap pencils."""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import LazySpectraError
from .lazyev import genev_gap_dependent, round_seed
from .synthetic import gap_spectrum, planted_genev

CSV_COLUMNS = ("gap", "trial", "seed", "inner_matvecs", "rounds", "status")
DEFAULT_GAPS = (0.4, 0.1, 0.025)


def _one(gap, trial, seed, dim, eps, timing):
    lam = gap_spectrum(dim, 1, gap, seed, top=(0.9, 0.9))
    a, b = planted_genev(lam, seed)
    t0 = time.perf_counter()
    try:
        res = genev_gap_dependent(a, b, k=1, gap=gap, eps=eps, seed=seed)
        row = {"gap": gap, "trial": trial, "seed": seed, "inner_matvecs": res.stats.inner_matvecs,
               "rounds": sum(len(t) for t in res.traces),
               "status": "exhausted" if res.residual_exhausted else "ok"}
    except LazySpectraError as exc:
        row = {"gap": gap, "trial": trial, "seed": seed, "inner_matvecs": 0, "rounds": 0,
               "status": exc.reason}
    if timing:
        row["wall_ms"] = round(1000.0 * (time.perf_counter() - t0), 3)
    return row


def bench_gap_scaling(gaps=DEFAULT_GAPS, trials=10, seed=0, dim=100, eps=0.1, deterministic=True,
                      timing=False):
    """One row per (gap, trial); solver failures are recorded in ``status``."""
    jobs = []
    for gi, gap in enumerate(gaps):
        for t in range(trials):
            jobs.append((float(gap), t, round_seed(seed, 1000 * gi + t) % (2**31), dim, eps, timing))
    workers = max_workers()
    if deterministic or workers == 1:
        return [_one(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: _one(*j), jobs))


def max_workers() -> int:
    env = os.environ.get("LAZY_SPECTRA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def rows_to_csv(rows) -> str:
    cols = list(CSV_COLUMNS) + (["wall_ms"] if rows and "wall_ms" in rows[0] else [])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: r[c] for c in cols})
    return buf.getvalue()


def read_csv(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    for r in rows:
        r["gap"] = float(r["gap"])
        r["inner_matvecs"] = int(r["inner_matvecs"])
    return rows


def fit_slope(rows):
    """Least-squares slope of log(median inner matvecs) against log(1/gap), ok rows only."""
    by_gap = {}
    for r in rows:
        if r["status"] == "ok":
            by_gap.setdefault(r["gap"], []).append(r["inner_matvecs"])
    gaps = sorted(by_gap)
    if len(gaps) < 2:
        raise ValueError("need at least two gaps with successful runs")
    xs = np.array([math.log(1.0 / g) for g in gaps])
    ys = np.array([math.log(float(np.median(by_gap[g]))) for g in gaps])
    slope = float(np.polyfit(xs, ys, 1)[0])
    medians = {g: float(np.median(by_gap[g])) for g in gaps}
    return slope, medians
