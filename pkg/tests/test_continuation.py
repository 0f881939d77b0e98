import numpy as np
import pytest

from romaccel.continuation import (ContinuationSchedule, SolverSpec, contraction_probe,
                                   continuation_run)
from romaccel.problems import RiccatiProblem, gen_random_spd, riccati_family, riccati_map


@pytest.fixture(scope="module")
def fam10():
    return riccati_family(10, gen_random_spd(10, 0))


def test_schedule_validation():
    with pytest.raises(ValueError):
        ContinuationSchedule([0.1, 0.1])
    with pytest.raises(ValueError):
        ContinuationSchedule([-1.0])
    with pytest.raises(ValueError):
        ContinuationSchedule(b_start=0.1, factor=1.0)
    with pytest.raises(ValueError):
        ContinuationSchedule()
    with pytest.raises(ValueError):
        SolverSpec("newton")


def test_plain_single_stage(fam10):
    out = continuation_run(fam10, ContinuationSchedule([0.05], budget=200), "plain")
    assert len(out) == 1 and out[0].converged
    assert out[0].final_diff < 1e-6
    assert out[0].outer_iterations <= 10
    assert out[0].inner_steps > out[0].outer_iterations


def test_plain_stops_at_failure(fam10):
    out = continuation_run(fam10, ContinuationSchedule([0.05, 0.1, 0.5, 0.6], budget=200),
                           "plain")
    assert [o.status for o in out] == ["converged", "converged", "failed", "unattempted"]
    assert len(out.traces) == 2


def test_nested_table_schedule(fam10):
    b = [1, 2, 5, 10, 20, 40, 45, 47.5]
    out = continuation_run(fam10, ContinuationSchedule(b, budget=200), "nested", m=7)
    assert all(o.converged for o in out)
    assert all(o.final_diff < 1e-6 for o in out)
    for tr, o in zip(out.traces, out):
        assert all(rec.param_b == o.b for rec in tr)


@pytest.mark.parametrize("solver", ["anderson", "sampled", "rom_gn"])
def test_other_solvers(fam10, solver):
    out = continuation_run(fam10, ContinuationSchedule([0.05, 0.1], budget=100), solver, m=4)
    assert all(o.converged for o in out)


def test_warm_start_saves_work(fam10):
    sched = ContinuationSchedule([1.0, 1.2], budget=200)
    warm = continuation_run(fam10, sched, "nested", m=4)
    cold = continuation_run(fam10, sched, "nested", m=4, warm_start=False)
    assert warm[1].converged and cold[1].converged
    assert warm[1].inner_steps <= cold[1].inner_steps


def test_growth_rule_with_midpoint_retry():
    fam = riccati_family(1, np.array([[0.5]]))
    out = continuation_run(fam, ContinuationSchedule(b_start=0.2, factor=1.5, max_stages=12,
                                                     budget=60), "plain")
    bs = [o.b for o in out]
    assert bs[:3] == pytest.approx([0.2, 0.3, 0.45])
    # scalar plain iteration contracts iff 2 b u* < 1, i.e. b < 1.5 for q = 0.5
    conv = [o.b for o in out if o.converged]
    assert max(conv) < 1.5
    assert not out[-1].converged


@pytest.mark.parametrize("b", [0.01, 0.05])
def test_scalar_small_b_converges(b):
    fam = riccati_family(1, np.array([[0.7]]))
    out = continuation_run(fam, ContinuationSchedule([b]), "plain")
    assert out[0].converged


def test_outcomes_reproducible(fam10):
    sched = ContinuationSchedule([0.5, 1.0], budget=100)
    a = continuation_run(fam10, sched, "nested", m=4)
    b = continuation_run(fam10, sched, "nested", m=4)
    assert a == b
    np.testing.assert_array_equal(a.x, b.x)


def test_contraction_probe():
    Q = gen_random_spd(10, 0)
    F0 = riccati_map(RiccatiProblem(10, Q, 0.0))
    assert contraction_probe(F0, np.zeros(100))
    big = riccati_map(RiccatiProblem(10, Q, 1e3))
    assert not contraction_probe(big, Q.ravel(order="F"), 3)
    small = riccati_map(RiccatiProblem(10, Q, 0.05))
    x = continuation_run(riccati_family(10, Q), ContinuationSchedule([0.05], tol=1e-12,
                                                                     budget=500), "plain").x
    assert contraction_probe(small, x)
    with pytest.raises(ValueError):
        contraction_probe(small, x, 1)
