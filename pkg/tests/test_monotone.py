import numpy as np
import pytest

from volsurf.errors import MonotoneConvergenceError
from volsurf.grid import build_interval, build_periodic_strip
from volsurf.model import ModelParams, State, equilibrium_state, solve_equilibrium
from volsurf.monotone import (check_sandwich, comparison_experiment,
                              run_monotone)
from volsurf.stepper import StepConfig, integrate


def test_zero_start_converges_immediately():
    g = build_interval(8, 1.0)
    p = ModelParams(alpha=2.0, beta=1.0, delta_u=1.0, delta_v=0.0)
    s0 = State(np.zeros(g.n_omega), np.zeros(g.n_gamma))
    solution, report = run_monotone(s0, g, p, StepConfig(dt=0.05), 0.5)
    assert report.converged
    assert report.k_final == 1
    assert report.bounds == (0.0, 0.0)
    for s in solution:
        assert np.all(s.u == 0.0)
        assert np.all(s.v == 0.0)
    assert check_sandwich(report).passed


def test_equilibrium_start_is_sandwiched_fixed_point():
    g = build_interval(10, 1.0)
    p = ModelParams(alpha=1.0, beta=1.0, delta_u=1.0, delta_v=0.0)
    eq = solve_equilibrium(p, g, 3.0)
    s0 = equilibrium_state(eq, g)
    tol = 1e-8
    solution, report = run_monotone(s0, g, p, StepConfig(dt=0.05), 0.5,
                                    outer_tol=tol)
    assert report.converged
    gaps = np.asarray(report.gaps)
    assert np.all(np.diff(gaps) < 0.0)
    for s in solution:
        assert np.max(np.abs(s.u - eq.u_inf)) <= 10 * tol
        assert np.max(np.abs(s.v - eq.v_inf)) <= 10 * tol
    assert check_sandwich(report).passed


def test_monotone_limit_matches_newton_trajectory():
    g = build_interval(20, 1.0)
    p = ModelParams(alpha=2.0, beta=1.0, delta_u=1.0, delta_v=0.0)
    s0 = State(np.ones(g.n_omega), np.zeros(g.n_gamma))
    cfg = StepConfig(dt=0.01)
    tol = 1e-8
    solution, report = run_monotone(s0, g, p, cfg, 0.5, outer_tol=tol)
    assert report.converged
    assert check_sandwich(report).passed

    newton = [s0.copy()]
    integrate(s0.copy(), g, p, cfg, 0.5, observer=lambda s: newton.append(s.copy()))
    assert len(newton) == len(solution)
    worst = 0.0
    for a, b in zip(solution, newton):
        worst = max(worst, float(np.max(np.abs(a.u - b.u))),
                    float(np.max(np.abs(a.v - b.v))))
    assert worst <= max(10 * tol, 1e-6)


def test_iterates_stay_inside_bounding_box():
    g = build_periodic_strip(8, 4, 1.0, 1.0)
    p = ModelParams(alpha=1.0, beta=2.0, delta_u=1.0, delta_v=1.0)
    rng = np.random.default_rng(2)
    s0 = State(rng.uniform(0.0, 1.5, g.n_omega), rng.uniform(0.0, 1.5, g.n_gamma))
    _, report = run_monotone(s0, g, p, StepConfig(dt=0.05), 0.5)
    a_bound, b_bound = report.bounds
    eps = 1e-9 * max(1.0, a_bound, b_bound)
    for k in range(len(report.lower_u)):
        assert np.min(report.lower_u[k]) >= -eps
        assert np.min(report.lower_v[k]) >= -eps
        assert np.max(report.upper_u[k]) <= a_bound + eps
        assert np.max(report.upper_v[k]) <= b_bound + eps


def test_gap_sequence_monotone_under_slack():
    g = build_periodic_strip(6, 3, 1.0, 1.0)
    p = ModelParams(alpha=2.0, beta=3.0, delta_u=1.0, delta_v=0.5)
    rng = np.random.default_rng(4)
    s0 = State(rng.uniform(0.2, 2.0, g.n_omega), rng.uniform(0.2, 2.0, g.n_gamma))
    _, report = run_monotone(s0, g, p, StepConfig(dt=0.05), 0.4)
    gaps = np.asarray(report.gaps)
    scale = max(1.0, *report.bounds)
    assert np.all(np.diff(gaps) <= 1e-9 * scale)


def test_nonconvergence_raises_with_gap_history():
    g = build_interval(10, 1.0)
    p = ModelParams(alpha=2.0, beta=1.0, delta_u=1.0, delta_v=0.0)
    s0 = State(np.ones(g.n_omega), np.zeros(g.n_gamma))
    with pytest.raises(MonotoneConvergenceError) as exc_info:
        run_monotone(s0, g, p, StepConfig(dt=0.05), 0.5,
                     outer_tol=1e-14, k_max=3)
    gaps = exc_info.value.gaps
    assert len(gaps) == 4  # starting gap plus one per sweep
    assert all(gap >= 0.0 for gap in gaps)


def test_huge_tolerance_accepts_single_sweep():
    g = build_interval(6, 1.0)
    p = ModelParams(alpha=1.0, beta=1.0, delta_u=1.0, delta_v=0.0)
    s0 = State(np.ones(g.n_omega), np.full(g.n_gamma, 0.5))
    _, report = run_monotone(s0, g, p, StepConfig(dt=0.1), 0.2,
                             outer_tol=100.0, k_max=1)
    assert report.converged
    assert report.k_final == 1
    assert check_sandwich(report).passed


def test_sandwich_flags_swapped_stacks():
    g = build_interval(10, 1.0)
    p = ModelParams(alpha=2.0, beta=1.0, delta_u=1.0, delta_v=0.0)
    s0 = State(np.ones(g.n_omega), np.zeros(g.n_gamma))
    _, report = run_monotone(s0, g, p, StepConfig(dt=0.05), 0.3)
    report.lower_u, report.upper_u = report.upper_u, report.lower_u
    report.lower_v, report.upper_v = report.upper_v, report.lower_v
    verdict = check_sandwich(report)
    assert not verdict.passed
    assert verdict.worst_violation < 0.0
    assert verdict.ordering in ("lower_nondecreasing", "lower_below_upper",
                                "upper_nonincreasing")


def test_sandwich_requires_two_iterates():
    from volsurf.monotone import IterationReport
    with pytest.raises(ValueError):
        check_sandwich(IterationReport(times=np.array([0.0, 0.1])))


def test_run_monotone_validation():
    g = build_interval(5, 1.0)
    p = ModelParams(alpha=1.0, beta=1.0, delta_u=1.0, delta_v=0.0)
    good = State(np.ones(g.n_omega), np.ones(g.n_gamma))
    cfg = StepConfig(dt=0.1)
    with pytest.raises(ValueError):
        run_monotone(State(np.ones(3), np.ones(2)), g, p, cfg, 0.5)
    with pytest.raises(ValueError):
        run_monotone(good, g, p, cfg, 0.0)
    with pytest.raises(ValueError):
        run_monotone(good, g, p, cfg, 0.5, outer_tol=0.0)
    with pytest.raises(ValueError):
        run_monotone(good, g, p, cfg, 0.5, k_max=0)


# ------------------------------------------------------- comparison principle


def test_comparison_identical_states():
    g = build_interval(8, 1.0)
    p = ModelParams(alpha=1.0, beta=1.0, delta_u=1.0, delta_v=0.0)
    s = State(np.ones(g.n_omega), np.full(g.n_gamma, 0.5))
    verdict = comparison_experiment(s.copy(), s.copy(), g, p,
                                    StepConfig(dt=0.05), 0.5)
    assert verdict.passed
    assert abs(verdict.worst_violation) <= 1e-10


def test_comparison_ordered_pair_stays_ordered():
    g = build_periodic_strip(8, 4, 1.0, 1.0)
    p = ModelParams(alpha=1.0, beta=2.0, delta_u=1.0, delta_v=1.0)
    rng = np.random.default_rng(13)
    low = State(rng.uniform(0.1, 1.0, g.n_omega), rng.uniform(0.1, 1.0, g.n_gamma))
    high = State(low.u + 0.5, low.v + 0.5)
    verdict = comparison_experiment(low, high, g, p, StepConfig(dt=0.02), 0.5)
    assert verdict.passed
    assert verdict.worst_violation >= -1e-8


def test_comparison_zero_floor_keeps_solutions_nonnegative():
    g = build_interval(10, 1.0)
    p = ModelParams(alpha=2.0, beta=1.0, delta_u=1.0, delta_v=0.0)
    zero = State(np.zeros(g.n_omega), np.zeros(g.n_gamma))
    rng = np.random.default_rng(17)
    high = State(rng.uniform(0.0, 2.0, g.n_omega), rng.uniform(0.0, 2.0, g.n_gamma))
    verdict = comparison_experiment(zero, high, g, p, StepConfig(dt=0.02), 0.5)
    assert verdict.passed


def test_comparison_validation():
    g = build_interval(5, 1.0)
    p = ModelParams(alpha=1.0, beta=1.0, delta_u=1.0, delta_v=0.0)
    low = State(np.ones(g.n_omega), np.ones(g.n_gamma))
    high = State(np.zeros(g.n_omega), np.zeros(g.n_gamma))
    with pytest.raises(ValueError):
        comparison_experiment(low, high, g, p, StepConfig(dt=0.1), 0.5)
    shifted = State(np.ones(g.n_omega) * 2.0, np.ones(g.n_gamma), time=1.0)
    with pytest.raises(ValueError):
        comparison_experiment(low, shifted, g, p, StepConfig(dt=0.1), 0.5)
