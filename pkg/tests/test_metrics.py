import numpy as np
import pytest

from walkinq import Schedule, solve
from walkinq.metrics import (
    CostBreakdown,
    SimulationConfig,
    SimulationInputError,
    _run_days,
    idle_time_numeric,
    inverse_cdf_nodes,
    sample_arrival_times,
    simulate,
    simulate_days,
    social_cost,
)

from conftest import HORIZON, frame


@pytest.fixture(scope="module")
def eq135():
    return solve(Schedule.parse("1,3,5", HORIZON), frame(2))


@pytest.fixture(scope="module")
def eq025():
    return solve(Schedule.parse("0,2,5", HORIZON), frame(2))


class TestSampling:
    def test_atom_mass_and_support(self, eq135):
        rng = np.random.default_rng(0)
        u = rng.random(200_000)
        t = sample_arrival_times(eq135, u)
        assert np.all(t >= 0.0) and np.all(t <= HORIZON)
        atom_frac = np.mean(t == 0.0)
        se = np.sqrt(eq135.p_e * (1 - eq135.p_e) / len(u))
        assert abs(atom_frac - eq135.p_e) < 4 * se

    def test_gaps_receive_no_mass(self, eq135):
        rng = np.random.default_rng(1)
        t = sample_arrival_times(eq135, rng.random(200_000))
        # the stretch right after the atom is a gap: f = 0 until re-entry
        re_entry = eq135.times[np.argmax(eq135.density > 0)]
        assert re_entry > 0.05
        inside = (t > 1e-9) & (t < re_entry - 1e-9)
        assert not inside.any()
        for a in (1.0, 3.0):
            j = int(np.argmin(np.abs(eq135.times - a)))
            gap_end = a
            while eq135.density[j] == 0.0 and j + 1 < len(eq135.times):
                j += 1
                gap_end = eq135.times[j]
            inside = (t > a + 1e-9) & (t < gap_end - 1e-9)
            assert not inside.any(), a

    def test_nodes_strictly_informative(self, eq135):
        f_nodes, t_nodes = inverse_cdf_nodes(eq135)
        assert np.all(np.diff(f_nodes) >= 0)
        assert f_nodes[0] == pytest.approx(eq135.p_e)

    def test_early_samples_negative(self):
        result = solve(Schedule.parse("1,3,5", HORIZON), frame(2), early=True)
        rng = np.random.default_rng(2)
        t = sample_arrival_times(result, rng.random(100_000))
        frac_neg = np.mean(t < 0)
        j0 = int(np.searchsorted(result.times, -1e-12))
        assert frac_neg == pytest.approx(result.cdf[j0], abs=0.01)


class TestDayKernel:
    def run_one(self, walk_t, walk_srv, sched_t, sched_srv, horizon=5.0):
        walk_t = np.asarray(walk_t, float)
        offs = np.array([0, len(walk_t)], dtype=np.int64)
        m = len(sched_t)
        wait_sum = np.zeros(1)
        sched_wait = np.zeros(max(m, 1))[:m] if m else np.zeros(0)
        sched_wait = np.zeros(m)
        idle = np.zeros(1)
        busy = np.zeros(1)
        over = np.zeros(1)
        _run_days(
            walk_t.copy(),
            offs,
            np.asarray(walk_srv, float).copy(),
            np.asarray(sched_t, float),
            np.asarray(sched_srv, float),
            horizon,
            wait_sum,
            sched_wait,
            idle,
            busy,
            over,
        )
        return wait_sum[0], sched_wait, idle[0], busy[0], over[0]

    def test_single_walkin_no_wait(self):
        wsum, _, idle, busy, over = self.run_one([1.0], [0.7], [], [])
        assert wsum == 0.0
        assert busy == pytest.approx(0.7)
        assert idle == pytest.approx(5.0 - 0.7)
        assert over == 0.0

    def test_appointment_overtakes_waiting_walkin(self):
        # walk-in at 0.5 waits behind a long service; the appointment at 1.0
        # lands before the walk-in starts and is served first
        wsum, sched_wait, idle, busy, over = self.run_one(
            [0.5], [1.0], [1.0], [2.0]
        )
        # service 1: [0.5, 2.5] (walk-in arrives to idle server... no:
        # server idle until 0.5, walk-in starts immediately -> wait 0
        assert wsum == 0.0
        # appointment arrives at 1.0 mid-service, waits until 2.5... wait:
        # walk-in service runs [0.5, 1.5]; appointment waits 0.5
        assert sched_wait[0] == pytest.approx(0.5)
        assert busy == pytest.approx(1.0 + 2.0)
        assert idle + busy == pytest.approx(5.0)

    def test_priority_at_simultaneous_arrival(self):
        # both the walk-in and the appointment arrive at 1.0: the holder goes
        # first, the walk-in waits out her service
        wsum, sched_wait, idle, busy, over = self.run_one(
            [1.0], [0.5], [1.0], [0.75]
        )
        assert sched_wait[0] == 0.0
        assert wsum == pytest.approx(0.75)

    def test_early_walkins_start_at_open(self):
        wsum, _, idle, busy, over = self.run_one([-2.0, -1.0], [1.0, 1.0], [], [])
        assert wsum == pytest.approx(2.0 + (1.0 + 1.0))  # waits 2.0 and 2.0
        assert busy == pytest.approx(2.0)

    def test_overtime_measured(self):
        wsum, _, idle, busy, over = self.run_one([4.9], [1.0], [], [])
        assert over == pytest.approx(0.9)
        assert busy == pytest.approx(0.1)
        assert idle == pytest.approx(4.9)


class TestSimulate:
    def test_first_scheduled_at_zero_never_waits(self, eq025):
        cb = simulate(eq025, config=SimulationConfig(replications=4000, seed=5))
        assert cb.per_customer[0] == 0.0

    def test_seed_determinism_bitwise(self, eq135):
        a = simulate(eq135, config=SimulationConfig(replications=20_000, seed=9))
        b = simulate(eq135, config=SimulationConfig(replications=20_000, seed=9))
        assert a.e_w == b.e_w and a.e_i == b.e_i and a.phi_s == b.phi_s
        assert a.per_customer == b.per_customer
        assert a.ci_halfwidths == b.ci_halfwidths

    def test_conservation_idle_plus_busy(self, eq135):
        stats = simulate_days(
            eq135, eq135.schedule, eq135.params, SimulationConfig(replications=5000, seed=3)
        )
        assert np.max(np.abs(stats.idle + stats.busy - HORIZON)) < 1e-9

    def test_rejects_unsolved_input(self, eq135):
        import dataclasses

        broken = dataclasses.replace(eq135, cdf=eq135.cdf * 0.5)
        with pytest.raises(SimulationInputError):
            simulate(broken)

    def test_lindley_oracle_and_little_m0(self):
        # with no appointments the day is plain FCFS: waits follow the
        # one-line recursion start_i = max(arr_i, end_{i-1})
        result = solve(Schedule.parse("", HORIZON), frame(2))
        config = SimulationConfig(replications=3000, seed=17)
        stats = simulate_days(result, result.schedule, result.params, config)

        counts = np.random.default_rng([config.seed, 0]).poisson(2.0, config.replications)
        assert np.array_equal(counts, stats.walk_count)
        total = int(counts.sum())
        u = np.random.default_rng([config.seed, 1]).random(total)
        arrivals = sample_arrival_times(result, u)
        services = np.random.default_rng([config.seed, 2]).exponential(1.0, total)

        offs = np.concatenate([[0], np.cumsum(counts)])
        sum_sojourn = 0.0
        sum_area = 0.0
        for r in range(config.replications):
            raw = arrivals[offs[r] : offs[r + 1]]
            order = np.argsort(raw, kind="stable")
            a = raw[order]
            s = services[offs[r] : offs[r + 1]][order]
            end = 0.0
            wsum = 0.0
            for i in range(len(a)):
                start = max(a[i], end, 0.0)
                wsum += start - a[i]
                end = start + s[i]
            assert wsum == pytest.approx(stats.walk_wait_sum[r], abs=1e-9)
            sum_sojourn += wsum + s.sum()
            # time-average number in system via the event sweep identity
            sum_area += wsum + s.sum()
        n_mean = counts.mean()
        w_mean = sum_sojourn / total
        l_mean = sum_area / config.replications / HORIZON
        rate = n_mean / HORIZON
        assert l_mean == pytest.approx(rate * w_mean, rel=1e-9)


class TestCosts:
    def test_social_cost_endpoints(self):
        cb = CostBreakdown(
            phi_s=1.5, per_customer=(0.5, 1.0), e_w=2.0, e_i=0.7, lam=2.0
        )
        assert social_cost(cb, 0.0) == pytest.approx(0.7)
        assert social_cost(cb, 1.0) == pytest.approx(1.5 + 2.0 * 2.0)
        assert social_cost(cb, 0.3) == pytest.approx(0.3 * 5.5 + 0.7 * 0.7)
        with pytest.raises(ValueError):
            social_cost(cb, 1.2)

    def test_idle_approaches_horizon_without_demand(self):
        from walkinq import ModelParams

        params = ModelParams(lam=0.01, mu=1.0, horizon=HORIZON)
        result = solve(Schedule.parse("", HORIZON), params)
        assert idle_time_numeric(result) == pytest.approx(HORIZON, abs=0.05)

    def test_idle_numeric_close_to_simulation(self, eq135):
        cb = simulate(eq135, config=SimulationConfig(replications=100_000, seed=23))
        se = cb.ci_halfwidths["e_i"] / 1.96
        assert abs(idle_time_numeric(eq135) - cb.e_i) < 3 * se
