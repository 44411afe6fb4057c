import math

import pytest

from lazy_spectra.bench import bench_gap_scaling, fit_slope, max_workers, read_csv, rows_to_csv


def test_smoke_single_row():
    rows = bench_gap_scaling([0.4], trials=1, seed=0, dim=40)
    assert len(rows) == 1
    assert rows[0]["status"] == "ok" and rows[0]["inner_matvecs"] > 0 and rows[0]["rounds"] > 0


def test_deterministic_csv():
    a = rows_to_csv(bench_gap_scaling([0.4, 0.1], trials=2, seed=5, dim=30))
    b = rows_to_csv(bench_gap_scaling([0.4, 0.1], trials=2, seed=5, dim=30))
    assert a == b
    back = read_csv(a)
    assert [r["gap"] for r in back] == [0.4, 0.4, 0.1, 0.1]


def test_parallel_matches_sequential(monkeypatch):
    monkeypatch.setenv("LAZY_SPECTRA_THREADS", "3")
    assert max_workers() == 3
    seq = bench_gap_scaling([0.4, 0.2], trials=2, seed=1, dim=30)
    par = bench_gap_scaling([0.4, 0.2], trials=2, seed=1, dim=30, deterministic=False)
    assert [r["inner_matvecs"] for r in seq] == [r["inner_matvecs"] for r in par]


def test_timing_column():
    rows = bench_gap_scaling([0.4], trials=1, dim=30, timing=True)
    assert rows[0]["wall_ms"] > 0
    assert rows_to_csv(rows).splitlines()[0].endswith(",wall_ms")


def test_fit_slope_exact_power_law():
    rows = [{"gap": g, "inner_matvecs": int(1000 / math.sqrt(g)), "status": "ok"} for g in (0.4, 0.1, 0.025)]
    slope, med = fit_slope(rows)
    assert slope == pytest.approx(0.5, abs=1e-3)
    assert med[0.025] > med[0.1] > med[0.4]
    with pytest.raises(ValueError):
        fit_slope(rows[:1])
