import csv
import io
import json
import math

import numpy as np
import pytest

from fockreg.convergence import (
    COLUMNS,
    ConvergenceReport,
    DEFAULT_GUARD,
    cutoff_gap_bound,
    bound_power_growth,
    bound_spin_commutator,
    cauchy_gap,
    induction_step_check,
    order_of_limits,
    power_growth_bound,
    power_growth_seminorm,
    refinement_gaps,
    run_convergence_study,
    spin_commutator_norm,
    tail_seminorm_spin_boson,
    two_mode_gap,
    two_mode_invariance,
)
from fockreg.fock_core import TruncationSpec, number
from fockreg.models import Displaced, Free, SpinBoson, TwoMode
from fockreg.seminorms import DecayFunction
from fockreg.spin_lattice import SpinSystem, product_state, random_unit_state

F = DecayFunction(1.0)


# ---- bounds -------------------------------------------------------------------------


def test_cutoff_bound_value_and_edge_cases():
    expected = 2 * sum(math.exp(-(s - 1)) * s**0.5 for s in range(4, 7))
    assert cutoff_gap_bound(F, 0, 3, 6) == pytest.approx(expected, rel=1e-14)
    assert cutoff_gap_bound(F, 1, 5, 5) == 0.0
    with pytest.raises(ValueError):
        cutoff_gap_bound(F, 0, 6, 3)
    values = [cutoff_gap_bound(F, 1, M, 20) for M in range(0, 21)]
    assert all(x >= y for x, y in zip(values, values[1:]))


@pytest.mark.parametrize("M, L", [(3, 6), (6, 12), (12, 24)])
@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_gap_below_cutoff_bound(M, L, k, t):
    assert cauchy_gap(Free(), "a", L, M, t, F, k).total <= cutoff_gap_bound(F, k, M, L)


def test_gap_basic_properties():
    assert cauchy_gap(Free(), "a", 6, 3, 0.0, F, 1).total == 0.0
    g1 = cauchy_gap(Free(), "a", 6, 3, 1.1, F, 1).total
    g2 = cauchy_gap(Free(), "a", 3, 6, 1.1, F, 1).total
    assert g1 == pytest.approx(g2, rel=1e-14)
    with pytest.raises(ValueError):
        cauchy_gap(Free(), "a", 4, 4, 1.0, F, 0)
    with pytest.raises(TypeError):
        cauchy_gap(TwoMode(), "a", 4, 2, 1.0, F, 0)


def test_number_operator_is_not_moved():
    spec = TruncationSpec.for_cutoff(12, DEFAULT_GUARD)
    g = cauchy_gap(Free(), number(spec), 12, 6, 1.7, F, 2, spec)
    assert g.total <= 1e-12


def test_power_growth_bounds():
    assert bound_power_growth(F, 1, 4, 16, 0.0, 0.1) == 0.0
    values = [bound_power_growth(F, 1, L, L**2, 1.0, 0.1) for L in (4, 8, 16, 32)]
    assert all(x > y for x, y in zip(values, values[1:]))
    for L in (1, 3, 6):
        for k in range(3):
            for l in range(1, 5):
                assert power_growth_seminorm(F, k, L, l) <= power_growth_bound(F, k, L, l)


def test_spin_commutator_bound():
    assert bound_spin_commutator(4, 2) == 0.25
    assert bound_spin_commutator(7, 0) == 1.0
    rng = np.random.default_rng(3)
    for V in (2, 4, 9):
        sys = SpinSystem.chain(V)
        for _ in range(5):
            psi = random_unit_state(sys, rng)
            for l in range(5):
                assert spin_commutator_norm(sys, "x", sys.sites[0], l, psi) <= bound_spin_commutator(V, l) * (1 + 1e-12)


# ---- measured behavior -----------------------------------------------------------------


@pytest.mark.parametrize("k, t", [(0, 0.5), (0, 2.0), (1, 0.5), (1, 2.0), (2, 0.5), (2, 1.0)])
def test_refinement_gaps_nonincreasing(k, t):
    gaps = refinement_gaps(list(range(2, 13)), t, F, k)
    assert all(x >= y for x, y in zip(gaps, gaps[1:]))


def test_refinement_gap_bump_at_high_power_and_long_time():
    # k = 2 weights amplify the first cutoff levels enough to break monotonicity
    gaps = refinement_gaps([2, 3, 4], 2.0, F, 2)
    assert gaps[1] > gaps[0] > gaps[2]


@pytest.mark.parametrize("k", [0, 1])
def test_induction_step(k):
    for M, L in ((3, 6), (6, 12)):
        measured, bound = induction_step_check(L, M, 1.0, F, k)
        assert measured <= bound


def test_two_mode_cutoff_independence():
    for L in (1, 3, 6):
        assert two_mode_invariance(L, 1.3) <= 1e-10
    assert two_mode_gap(6, 3, 2.0) <= 1e-10


def test_tail_vanishes_trivially():
    sys = SpinSystem.chain(4)
    assert tail_seminorm_spin_boson(SpinBoson(1.0, 0.1, sys), 2, 0.0, F, 1)[0] == 0.0
    assert tail_seminorm_spin_boson(SpinBoson(1.0, 0.0, sys), 2, 0.7, F, 1)[0] <= 1e-15


@pytest.mark.parametrize("k", [0, 1, 2])
def test_tail_decreases_with_cutoff_at_fixed_volume(k):
    model = SpinBoson(1.0, 0.1, SpinSystem.chain(4))
    values = [tail_seminorm_spin_boson(model, L, 0.5, F, k) for L in range(2, 9)]
    measured = [m for m, _ in values]
    # for k = 2 the tail first rises from L = 2 to L = 3
    start = 1 if k == 2 else 0
    assert all(x > y for x, y in zip(measured[start:], measured[start + 1 :]))
    assert measured[0] > measured[2] > measured[4]
    assert all(m <= env for m, env in values)


def test_order_of_limits_agree():
    ol = order_of_limits(1.0, 0.1, (2, 4, 6), (2, 4, 6), 0.5, F)
    assert ol.agree
    with pytest.raises(ValueError):
        order_of_limits(1.0, 0.1, (2, 4), (2, 4), 0.5, F)


def test_displaced_gap_is_finite_and_small():
    g = cauchy_gap(Displaced(0.2), "a", 12, 6, 1.0, F, 0)
    assert 0 <= g.total < 1e-1


# ---- study driver and report ---------------------------------------------------------------


def test_free_study_passes_and_serializes():
    rep = run_convergence_study(Free(), [3, 6, 12])
    assert rep.all_satisfied
    checks = {r.check for r in rep.rows}
    assert {"cauchy_gap", "induction_step", "gap_trend"} <= checks
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert tuple(rows[0]) == COLUMNS
    assert len(rows) == len(rep.rows) + 1
    payload = json.loads(rep.to_json())
    assert payload["metadata"]["schedule"] == [3, 6, 12]
    assert len(payload["rows"]) == len(rep.rows)


def test_study_report_is_independent_of_scheduling():
    from concurrent.futures import ThreadPoolExecutor

    serial = run_convergence_study(Free(), [3, 6], t_grid=(0.5, 1.0)).to_json()
    with ThreadPoolExecutor(4) as pool:
        parallel = run_convergence_study(Free(), [3, 6], t_grid=(0.5, 1.0), mapper=pool.map).to_json()
    assert serial == parallel


def test_two_mode_and_displaced_studies():
    assert run_convergence_study(TwoMode(), [1, 3, 6], t_grid=(0.5, 2.0)).all_satisfied
    rep = run_convergence_study(Displaced(0.2), [3, 6, 12], t_grid=(0.5,))
    assert rep.all_satisfied
    assert all(r.satisfied is None for r in rep.rows if r.check == "gap_trend")


def test_spin_boson_study():
    rep = run_convergence_study(SpinBoson(1.0, 0.1), [1, 2], t_grid=(0.5,), indices=[(F, 0)], r=2, order_grid=None)
    assert rep.all_satisfied
    assert {"exp_bound", "interaction_tail", "spin_commutator", "power_growth", "residual_trend"} <= {r.check for r in rep.rows}


def test_study_rejects_bad_input():
    with pytest.raises(ValueError):
        run_convergence_study(Free(), [6, 3])
    with pytest.raises(ValueError):
        run_convergence_study(Free(), [3, 6], t_grid=())


def test_partial_report_survives_failure():
    rep = ConvergenceReport()

    def broken(fn, jobs):
        jobs = list(jobs)
        yield fn(jobs[0])
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        run_convergence_study(Free(), [3, 6], t_grid=(0.5, 1.0), mapper=broken, report=rep)
    assert len(rep.rows) >= 1
    assert rep.metadata["model"] == "free"
