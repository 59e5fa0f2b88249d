import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import walkinq.optimizer as opt
from walkinq.metrics import SimulationConfig, social_cost
from walkinq.model import WalkinqError
from walkinq.optimizer import (
    DEConfig,
    SweepSpec,
    best_equal_spacing,
    evaluate_schedule,
    gamma_column,
    optimize_de,
    repair_schedule,
    schedule_seed,
    sweep_equal_spacing,
    write_sweep_csv,
)

from conftest import HORIZON, frame


class TestRepair:
    @settings(max_examples=150, deadline=None)
    @given(
        st.lists(st.floats(-1.0, 6.0, allow_nan=False), min_size=1, max_size=5)
    )
    def test_properties_and_idempotence(self, xs):
        got = repair_schedule(xs, HORIZON, 0.01)
        assert all(0.0 <= t <= HORIZON for t in got)
        assert all(b - a >= 0.01 - 1e-12 for a, b in zip(got, got[1:]))
        assert repair_schedule(got, HORIZON, 0.01) == got

    def test_sorts_and_separates_duplicates(self):
        assert repair_schedule([3.0, 1.0, 1.0], HORIZON, 0.01) == (1.0, 1.01, 3.0)

    def test_clips_at_horizon(self):
        got = repair_schedule([4.999, 5.3, 7.0], HORIZON, 0.01)
        assert got == (4.98, 4.99, 5.0)

    def test_infeasible_raises(self):
        with pytest.raises(WalkinqError):
            repair_schedule([0.0] * 4, 0.02, 0.01)


class TestScheduleSeed:
    def test_deterministic_and_distinct(self):
        a = schedule_seed(7, (0.0, 2.5, 5.0))
        assert a == schedule_seed(7, (0.0, 2.5, 5.0))
        assert a != schedule_seed(8, (0.0, 2.5, 5.0))
        assert a != schedule_seed(7, (0.0, 2.4, 5.0))


class TestSweepSpec:
    def test_deltas_and_validity(self):
        spec = SweepSpec(delta_start=0.1, delta_stop=5.0, delta_step=0.1)
        deltas = spec.deltas()
        assert deltas[0] == 0.1 and deltas[-1] == 5.0 and len(deltas) == 50
        triples = spec.schedules(HORIZON)
        # both patterns die above delta = T/2
        assert max(d for _, d, _ in triples) == 2.5
        fronts = [s for p, d, s in triples if p == "front"]
        backs = [s for p, d, s in triples if p == "back"]
        assert len(fronts) == len(backs) == 25
        assert (0.0, 2.5, 5.0) in fronts and (0.0, 2.5, 5.0) in backs

    def test_empty_gammas_defaulted(self):
        spec = SweepSpec(gammas=())
        assert spec.gammas == opt.DEFAULT_GAMMAS

    def test_gamma_column_names(self):
        assert gamma_column(0.1) == "phi_g01"
        assert gamma_column(0.5) == "phi_g05"
        assert gamma_column(0.9) == "phi_g09"
        assert gamma_column(0.25) == "phi_g025"


@pytest.fixture(scope="module")
def tiny_sweep():
    spec = SweepSpec(delta_start=0.5, delta_stop=2.5, delta_step=0.5)
    params = frame(2)
    sim = SimulationConfig(replications=3000, seed=100)
    return spec, sweep_equal_spacing(spec, params, sim)


class TestSweep:
    def test_coincident_patterns_identical(self, tiny_sweep):
        spec, rows = tiny_sweep
        mid = [r for r in rows if r.delta == 2.5]
        assert len(mid) == 2
        a, b = mid
        assert a.times == b.times == (0.0, 2.5, 5.0)
        assert a.phi == b.phi
        assert a.breakdown.phi_s == b.breakdown.phi_s

    def test_csv_roundtrip(self, tiny_sweep, tmp_path):
        spec, rows = tiny_sweep
        path = tmp_path / "sweep.csv"
        write_sweep_csv(rows, spec.gammas, str(path))
        import csv

        with open(path) as fh:
            parsed = list(csv.reader(fh))
        assert parsed[0] == [
            "delta", "schedule", "phi_s", "e_w", "e_i",
            "phi_g01", "phi_g05", "phi_g09",
        ]
        assert len(parsed) == len(rows) + 1
        sched_cell = parsed[1][1]
        assert len(sched_cell.split(",")) == 3

    def test_best_row(self, tiny_sweep):
        spec, rows = tiny_sweep
        best, phi = best_equal_spacing(rows, 0.5)
        assert phi == min(social_cost(r.breakdown, 0.5) for r in rows if r.breakdown)

    def test_solver_failure_recorded_in_row(self, monkeypatch):
        calls = {"n": 0}
        real = opt.evaluate_schedule

        def flaky(times, params, sim, solve_config=None):
            calls["n"] += 1
            if times[1] == 1.0:
                raise WalkinqError("synthetic failure")
            return real(times, params, sim, solve_config)

        monkeypatch.setattr(opt, "evaluate_schedule", flaky)
        spec = SweepSpec(pattern="front", delta_start=0.5, delta_stop=1.5, delta_step=0.5)
        rows = sweep_equal_spacing(spec, frame(2), SimulationConfig(replications=1000, seed=1))
        failed = [r for r in rows if r.error]
        assert len(failed) == 1 and failed[0].times[1] == 1.0
        assert all(r.breakdown is not None for r in rows if not r.error)


@pytest.fixture(scope="module")
def full_sweep_lam2():
    # walk-in wait and idle time are numeric, so cheap replications do
    spec = SweepSpec()
    sim = SimulationConfig(replications=2000, seed=55)
    return sweep_equal_spacing(spec, frame(2), sim)


class TestSweepExtremes:

    def test_walkin_wait_minimised_by_latest_packing(self, full_sweep_lam2):
        rows = [r for r in full_sweep_lam2 if r.breakdown]
        best = min(rows, key=lambda r: r.breakdown.e_w)
        assert best.times == (4.8, 4.9, 5.0)

    def test_idle_maximised_by_latest_packing(self, full_sweep_lam2):
        rows = [r for r in full_sweep_lam2 if r.breakdown]
        worst = max(rows, key=lambda r: r.breakdown.e_i)
        assert worst.times == (4.8, 4.9, 5.0)

    def test_front_pattern_cheaper_idle_and_scheduled_waits(self, full_sweep_lam2):
        # early-packed schedules keep the server busier and shelter the
        # appointment holders from walk-ins
        by_key = {(r.pattern, r.delta): r for r in full_sweep_lam2 if r.breakdown}
        for d in (0.5, 1.0, 1.5, 2.0):
            front, back = by_key[("front", d)], by_key[("back", d)]
            assert front.breakdown.e_i < back.breakdown.e_i
            assert front.breakdown.phi_s < back.breakdown.phi_s + 0.05


class TestDifferentialEvolution:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            DEConfig(weight=2.5)
        with pytest.raises(ValueError):
            DEConfig(population=3)
        assert DEConfig(m=3).pop_size() == 45

    def test_small_run_monotone_and_seeded(self):
        params = frame(2)
        config = DEConfig(
            m=3,
            population=6,
            max_iters=4,
            window=2,
            seed=31,
            inloop_replications=400,
            final_replications=2000,
        )
        seed_schedule = (0.0, 2.5, 5.0)
        result = optimize_de(params, 0.5, config, seeds=[seed_schedule])
        best_in_loop = [phi for _, phi in result.trace]
        assert all(b <= a + 1e-12 for a, b in zip(best_in_loop, best_in_loop[1:]))
        assert len(result.best_schedule) == 3
        # elitist re-evaluation: the returned objective never exceeds the
        # seed's own full-replication price
        seed_cost = social_cost(
            evaluate_schedule(
                seed_schedule,
                params,
                SimulationConfig(replications=config.final_replications, seed=config.seed),
            ),
            0.5,
        )
        assert result.phi_star <= seed_cost + 1e-12
