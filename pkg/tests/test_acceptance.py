"""Acceptance suite: one printed pass/fail line per criterion.

Standard frame throughout: T=5, mu=1, delta=0.01, trunc_mass=0.999.
Run with ``pytest -s tests/test_acceptance.py`` to see the lines.
"""

import time

import numpy as np
import pytest

from walkinq import Schedule, solve, verify_equilibrium
from walkinq.dynamics import StateVector, equilibrium_density, state_size
from walkinq.metrics import (
    SimulationConfig,
    idle_time_numeric,
    simulate,
    simulate_days,
    social_cost,
)
from walkinq.optimizer import (
    DEConfig,
    SweepSpec,
    best_equal_spacing,
    evaluate_schedule,
    optimize_de,
    sweep_equal_spacing,
)
from walkinq.waiting import build_wait_table, wait_given_queue, wait_time_derivative

from conftest import HORIZON, REFERENCE_ATOMS, frame, tagged_wait_mc

CROSS_VALIDATION_SEED = 11
SWEEP_SEED = 2024
DE_SEED = 909

# published equal-spacing optima: (lam, gamma) -> (schedule, objective)
EQUAL_SPACING_OPTIMA = {
    (2, 0.1): ((0.0, 0.6, 1.2), 1.6383),
    (2, 0.5): ((0.0, 1.1, 2.2), 2.7133),
    (2, 0.9): ((0.0, 2.5, 5.0), 3.4868),
    (4, 0.1): ((0.0, 0.5, 1.0), 1.8527),
    (4, 0.5): ((0.0, 2.5, 5.0), 6.5603),
    (4, 0.9): ((0.0, 2.5, 5.0), 11.0276),
}


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"{'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def sweep_tables():
    tables = {}
    for lam in (2, 4):
        tables[lam] = sweep_equal_spacing(
            SweepSpec(),
            frame(lam),
            SimulationConfig(replications=100_000, seed=SWEEP_SEED),
        )
    return tables


def test_01_atom_reproduction():
    worst = 0.0
    slowest = 0.0
    for (text, lam), want in REFERENCE_ATOMS.items():
        tic = time.perf_counter()
        result = solve(Schedule.parse(text, HORIZON), frame(lam))
        elapsed = time.perf_counter() - tic
        slowest = max(slowest, elapsed)
        worst = max(worst, abs(result.p_e - want))
        assert abs(result.p_e - want) <= 0.02, (text, lam, result.p_e, want)
        assert elapsed <= 60.0
    report(
        "atom reproduction, no-early case (10 instances, +-0.02)",
        True,
        f"max |p_e err|={worst:.4f}, slowest solve {slowest:.2f}s",
    )


def test_02_equilibrium_property(solved_instances):
    worst_dev = 0.0
    worst_margin = 0.0
    for (text, lam), result in solved_instances.items():
        rep = verify_equilibrium(result)
        worst_dev = max(worst_dev, rep.max_on_support_rel_dev)
        worst_margin = min(worst_margin, rep.min_off_support_margin / result.e_w)
        assert rep.max_on_support_rel_dev <= 0.02, (text, lam)
        assert rep.min_off_support_margin >= -1e-3 * result.e_w, (text, lam)
    report(
        "equilibrium property: on-support E_w within 2%, off-support margin >= -1e-3 E_w",
        True,
        f"max dev={worst_dev:.4f}, min margin={worst_margin:.2e} (relative)",
    )


def test_03_structural_propositions(solved_instances, solved_early):
    for (text, lam), result in solved_instances.items():
        rep = verify_equilibrium(result)
        assert rep.cdf_jump_free, (text, lam)  # no atom hides anywhere in F
        assert rep.gap_after_atom, (text, lam)
        assert all(rep.gap_after_appointment.values()), (text, lam)
    for (text, lam), result in solved_early.items():
        assert result.p_e == 0.0, (text, lam)
        rep = verify_equilibrium(result)
        assert rep.no_atom_under_early and rep.cdf_jump_free, (text, lam)
        assert all(rep.gap_after_appointment.values()), (text, lam)
    report(
        "structural propositions: atoms only at 0, none under early arrivals, "
        "density vanishes right of interior appointments",
        True,
        f"{len(solved_instances)} closed-day + {len(solved_early)} early instances",
    )


def test_04_cross_validation(solved_instances):
    worst_w = worst_i = 0.0
    for (text, lam), result in solved_instances.items():
        config = SimulationConfig(replications=1_000_000, seed=CROSS_VALIDATION_SEED)
        breakdown = simulate(result, config=config)
        se_w = breakdown.ci_halfwidths["e_w"] / 1.96
        se_i = breakdown.ci_halfwidths["e_i"] / 1.96
        z_w = abs(breakdown.e_w - result.e_w) / se_w
        z_i = abs(breakdown.e_i - idle_time_numeric(result)) / se_i
        worst_w = max(worst_w, z_w)
        worst_i = max(worst_i, z_i)
        assert z_w <= 3.0, (text, lam, z_w)
        assert z_i <= 3.0, (text, lam, z_i)
    stats = simulate_days(
        result, result.schedule, result.params,
        SimulationConfig(replications=20_000, seed=CROSS_VALIDATION_SEED),
    )
    conservation = float(np.max(np.abs(stats.idle + stats.busy - HORIZON)))
    assert conservation <= 1e-9
    report(
        "cross-validation: DES at 1e6 replications within 3 SE of numeric E_w/E_I; "
        "idle+busy=T per replication",
        True,
        f"max z_Ew={worst_w:.2f}, max z_EI={worst_i:.2f}, conservation err={conservation:.1e}",
    )


def test_05_oracle_equivalence():
    params = frame(2)
    sched = Schedule.parse("1,3,5", HORIZON)
    aug = sched.augment()
    table = build_wait_table(aug, 1.0, state_size(params, 3) - 1)
    rng = np.random.default_rng(2027)

    # boundary-wait cells against the tagged-customer simulation
    reps = 1_000_000
    worst_z = 0.0
    for _ in range(10):
        k = int(rng.integers(0, 3))
        n = int(rng.integers(1, table.valid_max(k) + 1))
        waits = tagged_wait_mc(aug.points[k], n, sched.times, 1.0, reps, rng)
        se = waits.std() / np.sqrt(reps)
        z = abs(waits.mean() - table.at(k, n)) / se
        worst_z = max(worst_z, z)
        assert z <= 3.0, (k, n, z)

    # analytic time derivative against central differences
    h = 1e-5
    worst_rel = 0.0
    checked = 0
    while checked < 1000:
        k = int(rng.integers(0, 3))
        lo, hi = aug.points[k], aug.points[k + 1]
        t = rng.uniform(lo + 2 * h, hi - 2 * h)
        n = int(rng.integers(1, table.valid_max(k) + 1))
        fd = (
            wait_given_queue(table, aug, k, n, t + h)
            - wait_given_queue(table, aug, k, n, t - h)
        ) / (2 * h)
        an = wait_time_derivative(table, aug, k, n, t)
        # absolute floor covers central-difference cancellation noise
        # (~eps*w/2h) where the true derivative is itself near zero
        rel = abs(an - fd) / max(abs(fd), 1e-9)
        if abs(an - fd) > 1e-9:
            worst_rel = max(worst_rel, rel)
            assert rel <= 1e-4, (k, n, t, rel)
        checked += 1

    # balance density against the last-segment closed form
    worst_gap = 0.0
    n_size = state_size(params, 3)
    for _ in range(100):
        p = np.zeros(n_size)
        body = rng.random(n_size - 3)
        p[: n_size - 3] = body / body.sum()
        got = equilibrium_density(StateVector(p, 5.0), table, aug, 3, params.lam)
        want = (params.mu / params.lam) * (1.0 - p[0])
        worst_gap = max(worst_gap, abs(got - want))
        assert abs(got - want) <= 1e-8
    report(
        "oracle equivalence: wait table vs tagged MC (3 SE), derivative vs finite "
        "differences (1e-4 rel), balance density vs closed form (1e-8)",
        True,
        f"max z={worst_z:.2f}, max rel={worst_rel:.2e}, max gap={worst_gap:.2e}",
    )


def test_06_equal_spacing_grid(sweep_tables):
    lines = []
    for (lam, gamma), (want_sched, want_phi) in EQUAL_SPACING_OPTIMA.items():
        rows = sweep_tables[lam]
        best, phi_best = best_equal_spacing(rows, gamma)
        paper_row = next(r for r in rows if r.times == want_sched)
        phi_paper = social_cost(paper_row.breakdown, gamma)
        # the published schedule must be optimal at sweep resolution: exact
        # argmin, or tied with it within 0.5% (the objective is flat near
        # its minimum and the published cost pipeline is unspecified)
        tie_gap = (phi_paper - phi_best) / phi_best
        assert tie_gap <= 0.005, (lam, gamma, best.times, tie_gap)
        rel = abs(phi_paper - want_phi) / want_phi
        assert rel <= 0.05, (lam, gamma, phi_paper, want_phi)
        tag = "exact" if best.times == want_sched else f"tie+{tie_gap:.2%}"
        lines.append(f"({lam},{gamma}):{tag},phi rel {rel:.2%}")
    report(
        "equal-spacing grid reproduction: published schedules optimal at grid "
        "resolution, objective within +-5%",
        True,
        "; ".join(lines),
    )


def test_07_search_improvement_direction(sweep_tables):
    lines = []
    for (lam, gamma), _ in EQUAL_SPACING_OPTIMA.items():
        rows = sweep_tables[lam]
        best, _ = best_equal_spacing(rows, gamma)
        config = DEConfig(
            m=3,
            population=16,
            max_iters=12,
            window=6,
            seed=DE_SEED,
            inloop_replications=4_000,
            final_replications=100_000,
        )
        de = optimize_de(frame(lam), gamma, config, seeds=[best.times])
        phi_eq = social_cost(
            evaluate_schedule(
                best.times,
                frame(lam),
                SimulationConfig(replications=100_000, seed=DE_SEED),
            ),
            gamma,
        )
        improvement = (phi_eq - de.phi_star) / phi_eq
        assert de.phi_star <= phi_eq + 1e-12, (lam, gamma)
        assert 0.0 <= improvement <= 0.05, (lam, gamma, improvement)
        incumbents = [phi for _, phi in de.trace]
        assert all(b <= a + 1e-12 for a, b in zip(incumbents, incumbents[1:]))
        lines.append(f"({lam},{gamma}):{improvement:+.2%}")
    report(
        "schedule search direction: evolved objective never above the "
        "equal-spacing optimum, improvement within [0%, 5%]",
        True,
        "; ".join(lines),
    )


def test_08_refinement(solved_instances):
    worst_p = 0.0
    worst_w = 0.0
    for (text, lam), coarse in solved_instances.items():
        fine = solve(Schedule.parse(text, HORIZON), frame(lam, delta=0.005))
        dp = abs(fine.p_e - coarse.p_e)
        dw = abs(fine.e_w - coarse.e_w) / coarse.e_w
        worst_p = max(worst_p, dp)
        worst_w = max(worst_w, dw)
        assert dp < 0.01, (text, lam, dp)
        assert dw < 0.01, (text, lam, dw)
    report(
        "refinement: halving the step moves every p_e by < 0.01 and E_w by < 1%",
        True,
        f"max |dp_e|={worst_p:.4f}, max |dE_w|/E_w={worst_w:.4f}",
    )
