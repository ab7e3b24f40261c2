import math

import numpy as np
import pytest

from dtfl import reputation as rep
from dtfl.cost import (ClientProfile, ServerProfile, aggregate_cost, dt_cost, local_cost,
                       local_energy_from_time)
from dtfl.errors import InfeasibleError


def test_local_cost_reference_point():
    pr = ClientProfile(1000, 1e7)
    t, e = local_cost(pr, 0.0, 1e9)
    assert t == pytest.approx(10.0, rel=1e-12)
    assert e == pytest.approx(1.0, rel=1e-12)


def test_local_cost_all_mapped_and_linearity():
    pr = ClientProfile(1000, 1e7, v_max=1.0)
    assert local_cost(pr, 1.0, 2e9) == (0.0, 0.0)
    t1, e1 = local_cost(pr, 0.2, 3e9)
    t2, e2 = local_cost(pr, 0.6, 3e9)     # half the local share
    assert t2 == pytest.approx(t1 / 2, rel=1e-12)
    assert e2 == pytest.approx(e1 / 2, rel=1e-12)


def test_energy_time_form_agrees():
    pr = ClientProfile(2345, 1e7)
    for v, f in [(0.0, 1e9), (0.3, 4.2e9), (0.5, 9.9e9)]:
        t, e = local_cost(pr, v, f)
        assert local_energy_from_time(pr, v, t) == pytest.approx(e, rel=1e-12)


def test_local_cost_bounds_checked():
    pr = ClientProfile(1000)
    with pytest.raises(ValueError):
        local_cost(pr, 0.0, 20e9)
    with pytest.raises(ValueError):
        local_cost(pr, 0.9, 1e9)


def test_dt_cost():
    pr = ClientProfile(1000, 1e7)
    srv = ServerProfile(1e11)
    assert dt_cost(pr, srv, 0.5, 0.025) == pytest.approx(2.0, rel=1e-12)
    assert dt_cost(pr, srv, 0.0, 0.3) == 0.0
    assert dt_cost(pr, srv, 0.5, 0.05) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(InfeasibleError):
        dt_cost(pr, srv, 0.5, 0.0)


def test_aggregate_cost_max_and_sum():
    one = aggregate_cost({0: (1.0, 1.0, 2.0, 0.0, 2.0)})
    assert (one.T, one.E) == (3.0, 1.0)
    two = aggregate_cost({0: (2.0, 0.5, 2.0, 0.0, 0.0), 1: (3.0, 0.25, 2.0, 0.0, 1.0)})
    assert two.T == 5.0
    assert two.E == 0.75
    with pytest.raises(ValueError):
        aggregate_cost({})


def test_profile_validation():
    with pytest.raises(ValueError):
        ClientProfile(0)
    with pytest.raises(ValueError):
        ClientProfile(10, f_bounds=(2e9, 1e9))
    with pytest.raises(ValueError):
        ServerProfile(epsilon=-1)


# --- reputation -------------------------------------------------------------

def test_accuracy_contribution():
    pr = ClientProfile(1000, ac_params=(1.0, 1.0, 1e-4))
    assert rep.accuracy_contribution(pr) == pytest.approx(1 - math.exp(-0.1), rel=1e-12)
    assert rep.accuracy_contribution(pr) == pytest.approx(0.09516, abs=1e-5)
    assert rep.accuracy_contribution(pr, epsilon=1e9) == pytest.approx(1.0)


def _state(m, weights=rep.PROPOSED_WEIGHTS):
    return rep.ReputationState.initial([ClientProfile(1000, id=i) for i in range(m)],
                                       weights=weights)


def test_staleness_update():
    st = _state(3)
    st = rep.update_staleness(st, [1])
    np.testing.assert_array_equal(st.ms, [2, 1, 2])
    st = rep.update_staleness(st, [])
    np.testing.assert_array_equal(st.ms, [3, 2, 3])
    st = rep.update_staleness(st, [0])
    np.testing.assert_array_equal(st.ms, [1, 3, 4])


def test_normalized_staleness():
    st = _state(2)
    st = rep.update_staleness(rep.update_staleness(st, [0]), [0])
    np.testing.assert_allclose(rep.normalized_staleness(st), [0.25, 0.75])
    np.testing.assert_allclose(rep.normalized_staleness(_state(4)), [0.25] * 4)
    assert rep.normalized_staleness(_state(1))[0] == 1.0


def test_pi_degree():
    assert rep.pi_degree((3, 1)) == 0.75
    assert rep.pi_degree((4, 0)) == 1.0
    assert rep.pi_degree((0, 0)) == 0.5


def test_score_weighting():
    st = _state(1)
    st = rep.ReputationState(st.ids, np.array([0.5]), np.array([1]), np.array([[1, 0]]),
                             (0.3, 0.5, 0.2))
    # one client: normalised staleness is 1, so recompute the expected score with it
    assert rep.reputation(st, 0) == pytest.approx(0.3 * 0.5 + 0.5 * 1.0 + 0.2 * 1.0)
    st1 = rep.ReputationState(st.ids, st.ac, st.ms, st.pi_counts, (1.0, 0.0, 0.0))
    assert rep.reputation(st1, 0) == 0.5


def test_score_reference_value():
    # AC = 0.5, normalised staleness 0.2, PI = 1 with weights (0.3, 0.5, 0.2)
    ms = np.array([1, 4])          # 1 / 5 = 0.2 for client 0
    st = rep.ReputationState((0, 1), np.array([0.5, 0.5]), ms, np.array([[2, 0], [0, 0]]))
    assert rep.reputation(st, 0) == pytest.approx(0.45, abs=1e-12)


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        _state(2, weights=(0.5, 0.5, 0.5))


def test_select_top_n():
    st = rep.ReputationState((1, 2, 3), np.array([0.9, 0.1, 0.5]), np.ones(3, int),
                             np.zeros((3, 2), int), (1.0, 0.0, 0.0))
    assert set(rep.select_top_n(st, 2)) == {1, 3}
    assert rep.select_top_n(st, 2, exclude=(1,)) == (3, 2)
    eq = _state(4)
    assert rep.select_top_n(eq, 2) == (0, 1)
    assert set(rep.select_top_n(eq, 4)) == {0, 1, 2, 3}
    with pytest.raises(ValueError):
        rep.select_top_n(eq, 5)


def test_verdicts_counted():
    st = rep.record_verdicts(_state(2), {0: True, 1: False})
    st = rep.record_verdicts(st, {0: True})
    np.testing.assert_array_equal(st.pi_counts, [[2, 0], [0, 1]])
    np.testing.assert_allclose(rep.pi_degrees(st), [1.0, 0.0])
