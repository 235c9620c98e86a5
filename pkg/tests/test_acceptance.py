"""The eight acceptance criteria, each at its stated tolerance and time budget."""
import math
import time
from pathlib import Path

import pytest

from mmv2v import metrics
from mmv2v.channel import LinkBudgetParams, antenna_gain_db, noise_power_dbm, path_loss_db
from mmv2v.cli import main
from mmv2v.engine import EngineConfig, default_world, run_scenario
from mmv2v.matching import verify_against_oracle
from mmv2v.scenario import is_los
from mmv2v.utility import UtilityWeights

SEEDS = range(10)
CAPACITIES = (1, 2, 3, 4)


@pytest.fixture(scope="module")
def worlds():
    return {s: default_world(s) for s in SEEDS}


@pytest.fixture(scope="module")
def sweep_runs(worlds):
    """Default 20-vehicle, 300-timeslot runs at theta = 15 deg for every capacity (R = 20 m) and c = 4 at R = 40 m."""
    runs, started = {}, time.perf_counter()
    for c in CAPACITIES:
        cfg = EngineConfig(capacity=c, weights=UtilityWeights(radius=20.0))
        runs[(c, 20.0)] = [run_scenario(worlds[s], cfg, s) for s in SEEDS]
    cfg = EngineConfig(capacity=4, weights=UtilityWeights(radius=40.0))
    runs[(4, 40.0)] = [run_scenario(worlds[s], cfg, s) for s in SEEDS]
    runs["elapsed"] = time.perf_counter() - started
    return runs


def test_criterion_1_link_budget(record):
    started = time.perf_counter()
    p = LinkBudgetParams()
    checks = {
        "noise": (noise_power_dbm(p), -74.66),
        "pl10": (path_loss_db(10.0, p), 97.00),
        "g5": (antenna_gain_db(math.radians(5)), 32.18),
        "g15": (antenna_gain_db(math.radians(15)), 22.63),
    }
    elapsed = time.perf_counter() - started
    ok = all(abs(v - want) <= 0.01 for v, want in checks.values()) and elapsed < 1.0
    detail = ", ".join(f"{k}={v:.3f}" for k, (v, _) in checks.items()) + f" ({elapsed * 1e3:.1f} ms)"
    assert record(1, ok, detail), detail


@pytest.fixture(scope="module")
def verify_report():
    started = time.perf_counter()
    report = verify_against_oracle(10_000, max_n=6, max_capacity=3, seed=2024)
    return report, time.perf_counter() - started


def test_criterion_2_sf_soundness(record, verify_report):
    report, elapsed = verify_report
    ok = report.sound and report.instances >= 10_000 and elapsed < 120
    detail = f"{report.summary()} ({elapsed:.1f} s)"
    assert record(2, ok, detail), detail


def test_criterion_3_constraint_compliance(record, worlds):
    world = worlds[0]
    cfg = EngineConfig(capacity=3)
    started = time.perf_counter()
    res = run_scenario(world, cfg, 0)  # engine asserts every invariant per timeslot
    elapsed = time.perf_counter() - started
    pairs = violations = 0
    for rep in res.reports:
        states = {s.id: s for s in world.traces.vehicles(rep.t)}
        for a, b in rep.matching.pairs:
            pairs += 1
            pa, pb = states[a].position, states[b].position
            violations += (not is_los(world.geometry, pa, pb)) or math.dist(pa, pb) > cfg.weights.radius
        for v in rep.vehicles:
            violations += v.degree > cfg.capacity
        busy = [(v, s) for (a, b), s in rep.schedule.assignment.items() for v in (a, b)]
        violations += len(busy) != len(set(busy))
        violations += not math.isclose(sum(v.sent for v in rep.vehicles),
                                       sum(v.received for v in rep.vehicles), abs_tol=1e-12)
    ok = violations == 0 and pairs > 0 and elapsed < 10
    detail = f"{pairs} matched pairs over {len(res)} timeslots, {violations} violations ({elapsed:.2f} s)"
    assert record(3, ok, detail), detail


def test_criterion_4_utilisation_grows_with_capacity(record, sweep_runs):
    means = [metrics.seed_mean(sweep_runs[(c, 20.0)], metrics.average_utilisation) for c in CAPACITIES]
    ok = all(a < b for a, b in zip(means, means[1:]))
    detail = "mean utilisation c=1..4: " + " ".join(f"{m:.4f}" for m in means)
    assert record(4, ok, detail), detail


def test_criterion_5_emergency_exchange(record, sweep_runs):
    ratios = {}
    for c in CAPACITIES:
        runs = sweep_runs[(c, 20.0)]
        e = metrics.seed_mean(runs, metrics.average_exchanged, "emergency")
        a = metrics.seed_mean(runs, metrics.average_exchanged, "all")
        ratios[c] = e / a
    ok = 0.8 <= ratios[1] <= 1.2 and all(ratios[c] >= 1.0 for c in (2, 3, 4))
    detail = "e-CAV/all exchanged ratio " + " ".join(f"c={c}:{r:.3f}" for c, r in ratios.items())
    assert record(5, ok, detail), detail


def test_criterion_6_regional_access(record, sweep_runs):
    vals = {}
    for radius in (20.0, 40.0):
        runs = sweep_runs[(4, radius)]
        vals[radius] = (metrics.seed_mean(runs, metrics.average_regional_access, "emergency"),
                        metrics.seed_mean(runs, metrics.average_regional_access, "all"))
    ordering = all(e > a for e, a in vals.values()) and all(
        vals[40.0][k] > vals[20.0][k] for k in (0, 1))
    band = all(2.0 <= x <= 10.0 for pair in vals.values() for x in pair)
    detail = (f"R=20 e/all {vals[20.0][0]:.2f}/{vals[20.0][1]:.2f}, R=40 e/all "
              f"{vals[40.0][0]:.2f}/{vals[40.0][1]:.2f}; ordering {'ok' if ordering else 'FAIL'}, "
              f"2-10 band {'ok' if band else 'FAIL'}")
    assert record(6, ordering and band, detail), detail


def _csv_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_criterion_7_sweep_determinism(record, tmp_path):
    cfg = tmp_path / "sweep.yaml"
    cfg.write_text("mobility:\n  duration: 30\nrun:\n  seeds: 2\n")
    for name in ("a", "b"):
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    a, b = _csv_bytes(tmp_path / "a"), _csv_bytes(tmp_path / "b")
    ok = a == b and len(a) == 2 * 24 * 5 + 1
    detail = f"{len(a)} CSV files compared, {'identical' if a == b else 'DIFFERENT'}"
    assert record(7, ok, detail), detail


def test_criterion_8_performance(record, worlds, verify_report):
    # heaviest cell of the grid: widest radius, narrowest beam, largest capacity
    cfg = EngineConfig(capacity=4, weights=UtilityWeights(radius=40.0),
                       link=LinkBudgetParams(beamwidth=math.radians(5)))
    started = time.perf_counter()
    res = run_scenario(worlds[1], cfg, 1)
    cell = time.perf_counter() - started
    _, verify_elapsed = verify_report
    ok = len(res) == 300 and cell < 10 and verify_elapsed < 120
    detail = f"one cell {cell:.2f} s (limit 10 s), verify 1e4 instances {verify_elapsed:.1f} s (limit 120 s)"
    assert record(8, ok, detail), detail
