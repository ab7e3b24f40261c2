import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from dtfl import fl
from dtfl import reputation as rep
from dtfl.channel import ChannelState, TransmitPlan, decoding_order, rate
from dtfl.cost import ClientProfile, ServerProfile, local_cost, local_energy_from_time
from dtfl.errors import InfeasibleError
from dtfl.game import (PowerProblem, balance_alpha, dinkelbach_power, make_instance,
                       stackelberg_solve)

gain = st.floats(1e-14, 1e-8)
power = st.floats(0.01, 0.1)


@given(st.lists(st.tuples(gain, power), min_size=1, max_size=5))
def test_removing_interference_never_lowers_rate(clients):
    gains = np.array([g for g, _ in clients])
    st_ = ChannelState(gains, 4e-15, 1e6)
    order = decoding_order(st_)
    powers = {i: p for i, (_, p) in enumerate(clients)}
    plan = TransmitPlan(powers, {i: 1e6 for i in powers}, order)
    for n in powers:
        alone = TransmitPlan({j: (p if j == n else 0.0) for j, p in powers.items()},
                             plan.payload_bits, order)
        assert rate(st_, alone, n) >= rate(st_, plan, n)


@given(st.integers(1, 10_000), st.floats(0, 0.9), st.floats(1e9, 10e9))
def test_energy_forms_agree(d, v, f):
    pr = ClientProfile(d, v_max=0.9)
    t, e = local_cost(pr, v, f)
    assume(t > 0)
    assert local_energy_from_time(pr, v, t) == pytest.approx(e, rel=1e-12)


@given(st.lists(st.floats(1e6, 1e11), min_size=1, max_size=6), st.floats(0.05, 20))
def test_follower_equal_finish_and_budget(cycles, t_total):
    alpha, t_dt, over = balance_alpha(cycles, 1e10, t_total)
    assert alpha.sum() <= 1 + 1e-12
    if over:
        assert alpha.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.ptp(t_dt) <= 1e-9 * t_dt.max()
    assert t_dt.min() >= t_total * (1 - 1e-12)


@given(st.floats(10, 1e5), st.floats(0.05, 10), st.floats(1e5, 5e6))
@settings(max_examples=60)
def test_dinkelbach_monotone_and_feasible(F, G, bits):
    prob = PowerProblem(F, bits, 1e6, G, 0.01, 0.1)
    try:
        p, trace = dinkelbach_power(prob)
    except InfeasibleError:
        assert prob.required_power() > 0.1
        return
    assert all(b >= a for a, b in zip(trace.q, trace.q[1:]))
    assert abs(trace.W[-1]) <= 1e-6
    assert prob.rate(p) >= prob.required_rate() * (1 - 1e-9)
    assert 0.01 <= p <= 0.1


@given(st.lists(st.integers(0, 9), min_size=1, max_size=8))
def test_staleness_bookkeeping(selected):
    m = 10
    state = rep.ReputationState.initial([ClientProfile(100, id=i) for i in range(m)])
    before = state.ms.copy()
    after = rep.update_staleness(state, set(selected)).ms
    for c in range(m):
        assert after[c] == (1 if c in selected else before[c] + 1)
    assert rep.normalized_staleness(state).sum() == pytest.approx(1.0, abs=1e-12)


@given(st.lists(st.tuples(st.integers(1, 5000), st.floats(0, 1)), min_size=1, max_size=6))
def test_aggregation_weights_sum_to_one(items):
    contribs = [fl.Contribution(i, np.zeros(1) if v < 1 else None, d, v)
                for i, (d, v) in enumerate(items)]
    local, twin = fl.aggregation_weights(contribs, 0.0)
    assert local.sum() + twin == pytest.approx(1.0, abs=1e-12)
    assert np.all(local >= 0) and twin >= 0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_solver_output_is_feasible(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    profiles = [ClientProfile(int(rng.integers(200, 3000)), v_max=float(rng.uniform(0, 0.9)), id=i)
                for i in range(n)]
    gains = rng.exponential(size=n) * rng.uniform(20, 500, size=n) ** -3.76
    inst = make_instance(profiles, ServerProfile(), gains)
    try:
        d, cost = stackelberg_solve(inst)
    except InfeasibleError:
        return
    assert np.all(d.t_cmp + d.t_com <= 10.0 * (1 + 1e-9))
    assert np.all((d.p >= 0.01 - 1e-15) & (d.p <= 0.1 + 1e-15))
    assert np.all((d.f >= 1e9 * (1 - 1e-12)) & (d.f <= 10e9 * (1 + 1e-12)))
    assert d.alpha.sum() <= 1 + 1e-12
    assert cost.E >= 0 and cost.T > 0
