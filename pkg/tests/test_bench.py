import math

import numpy as np
import pytest

from lfhnav import io
from lfhnav.bench import (
    Infeasible,
    SuiteReport,
    WorldGenParams,
    aggregate,
    aggregate_report,
    format_time,
    generate_world,
    read_csv,
    run_suite,
)
from lfhnav.geometry import Configuration, Region
from lfhnav.nav import EpisodeResult, NavConfig, plan_global
from lfhnav.sim import World


def result(t):
    return EpisodeResult(math.isfinite(t), t, 0, 0, 1.0)


def test_empty_density():
    w = generate_world(WorldGenParams(seed=1, density=0.0))
    assert w.obstacles.is_empty
    assert w.bounds == (0.0, 0.0, 8.0, 3.0)


def test_same_seed_same_bytes(tmp_path):
    io.save_world(generate_world(WorldGenParams(seed=7)), tmp_path / "a.json")
    io.save_world(generate_world(WorldGenParams(seed=7)), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_default_world_feasible():
    w = generate_world(WorldGenParams(seed=3, density=0.4))
    assert len(w.obstacles) == round(0.4 * 24)
    assert plan_global(w).length >= 7.0 - 1e-9
    for d in w.obstacles.primitives:
        assert 0.1 <= d.radius <= 0.2
        for e in (w.start, w.goal):
            assert math.hypot(d.center[0] - e.x, d.center[1] - e.y) >= 0.5 + d.radius


def test_infeasible():
    with pytest.raises(Infeasible):
        generate_world(WorldGenParams(seed=0, density=6.0, radius_range=(0.3, 0.4)))


def test_invalid_params():
    with pytest.raises(ValueError):
        WorldGenParams(density=-1)
    with pytest.raises(ValueError):
        WorldGenParams(radius_range=(0.0, 0.1))


def test_mean_two_times():
    a = aggregate("x", [result(78.0), result(79.6)])
    assert a.mean_time == pytest.approx(78.8)
    assert 78.0 < a.mean_time < 79.6
    assert a.std_time == pytest.approx(0.8)


def test_all_failed():
    a = aggregate("x", [result(math.inf)] * 3)
    assert a.mean_time == math.inf and a.success_rate == 0.0
    assert format_time(a.mean_time, a.std_time) == "inf"


def test_zero_variance_format():
    report = SuiteReport(["p"], {"p": [result(45.4)]})
    table, rows = aggregate_report(report)
    assert "45.4±0.0" in table
    assert len(rows.strip().splitlines()) == 2


def test_mixed_results_and_csv_consistency():
    report = SuiteReport(["a", "b"], {"a": [result(10.0), result(math.inf), result(12.5)],
                                      "b": [result(math.inf)]})
    table, rows = aggregate_report(report)
    assert len(rows.strip().splitlines()) - 1 == 4
    back = read_csv(rows)
    for name in report.planners:
        assert aggregate(name, back[name]) == aggregate(name, report.results[name])
    line_a = next(l for l in table.splitlines() if l.startswith("a "))
    assert "11.2±1.2" in line_a and " 1 " in line_a


def test_suite_one_episode_and_determinism():
    w = World((-0.5, -1.5, 4.5, 1.5), Region(), Configuration(0, 0, 0), Configuration(4, 0))
    a = run_suite([w], [NavConfig("dwa")], timeout=20)
    b = run_suite([w], [NavConfig("dwa")], timeout=20)
    assert len(a.rows()) == 1
    assert aggregate_report(a) == aggregate_report(b)
