"""End-to-end rounds: selection, channel draw, allocation, training, screening,
aggregation and cost; plus the baseline allocators and parameter sweeps."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from dtfl import fl
from dtfl import reputation as rep
from dtfl.channel import sample_gains, sample_positions
from dtfl.cost import ClientProfile, CostReport, ServerProfile, dt_workload, local_cost
from dtfl.errors import InfeasibleError
from dtfl.game import (AllocationDecision, GameInstance, make_instance, stackelberg_solve,
                       transmit_times)
from dtfl.scenario import Scenario

log = logging.getLogger(__name__)

RANDOM_DRAWS = 200


@dataclass
class MetricsRow:
    round: int
    scheme: str
    seed: int
    accuracy: float
    T: float
    E: float
    total: float
    t_cmp: float
    t_com: float
    t_dt: float
    e_cmp: float
    e_com: float
    ni_count: int
    gamma: float
    selected: str
    dropped: str

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]


@dataclass
class World:
    """Everything fixed for one run: data, client profiles and positions."""

    scenario: Scenario
    data: fl.Dataset
    profiles: dict
    distances: np.ndarray
    poisoners: frozenset
    server: ServerProfile
    twins: dict


def _synthetic(sc: Scenario) -> fl.Dataset:
    return fl.gaussian_mixture(sc.n_clients, sc.samples_per_client, separation=sc.separation,
                               noise_scales=np.full(20, sc.feature_noise), n_val=sc.n_val,
                               n_test=sc.n_test, distribution=sc.distribution,
                               labels_per_client=sc.labels_per_client, seed=sc.seed)


def _mnist(sc: Scenario) -> fl.Dataset:
    from dtfl.mnist import load_mnist

    X, y = load_mnist(sc.mnist_dir, "train")
    X_test, y_test = load_mnist(sc.mnist_dir, "test")
    rng = np.random.default_rng(sc.seed)
    # hold out the validation set first, then split the rest among clients
    perm = rng.permutation(len(y))
    val, rest = perm[:sc.n_val], perm[sc.n_val:]
    per_label = sc.labels_per_client if sc.distribution == "noniid" else None
    parts = fl.partition_indices(y[rest], sc.n_clients, sc.samples_per_client, rng, per_label)
    train = np.concatenate([rest[parts[c]] for c in range(sc.n_clients)])
    partition = {c: np.arange(c * sc.samples_per_client, (c + 1) * sc.samples_per_client)
                 for c in range(sc.n_clients)}
    return fl.Dataset(X[train], y[train], partition, X[val], y[val],
                      X_test[:sc.n_test], y_test[:sc.n_test], 10)


def build_world(sc: Scenario, with_data: bool = True) -> World:
    """Clients, positions and (unless ``with_data`` is false) the learning data."""
    rng = np.random.default_rng([sc.seed, 1])
    data = None
    if with_data:
        data = _synthetic(sc) if sc.dataset == "synthetic" else _mnist(sc)
    n_bad = int(round(sc.poison_ratio * sc.n_clients))
    poisoners = frozenset(rng.choice(sc.n_clients, size=n_bad, replace=False).tolist())
    sizes = {c: len(data.partition[c]) if data else sc.samples_per_client
             for c in range(sc.n_clients)}
    profiles = {
        c: ClientProfile(sizes[c], sc.cycles_per_sample, (sc.f_min, sc.f_max),
                         (sc.p_min, sc.p_max), sc.v_max, c not in poisoners, id=c)
        for c in range(sc.n_clients)
    }
    distances = sample_positions(sc.n_clients, sc.radius, rng)
    server = ServerProfile(sc.f_server, sc.epsilon, sc.t_max, sc.kappa)
    twins = {}
    if with_data:
        twins = {c: fl.map_to_twin(data.client(c)[0], sc.dt_deviation,
                                   np.random.default_rng([sc.seed, 6, c]))
                 for c in range(sc.n_clients)}
    return World(sc, data, profiles, distances, poisoners, server, twins)


def initial_reputation(world: World) -> rep.ReputationState:
    sc = world.scenario
    return rep.ReputationState.initial([world.profiles[c] for c in range(sc.n_clients)],
                                       sc.epsilon, sc.weights, sc.pi_prior)


def round_gains(world: World, round_index: int) -> np.ndarray:
    """Fresh small-scale fading for every client, reproducible per (seed, round)."""
    sc = world.scenario
    rng = np.random.default_rng([sc.seed, 2, round_index])
    ch = sample_gains(world.distances, rng, bandwidth=sc.bandwidth,
                      exponent=sc.path_loss_exponent)
    return ch.gains


# ---------------------------------------------------------------------------
# allocation

def _instance(world: World, selected, gains, scheme: str) -> GameInstance:
    sc = world.scenario
    profiles = [world.profiles[c] for c in selected]
    if scheme == "no_dt":
        profiles = [ClientProfile(p.data_size, p.cycles_per_sample, p.f_bounds, p.p_bounds, 0.0,
                                  p.honest, p.ac_params, p.id) for p in profiles]
    return make_instance(profiles, world.server, gains[list(selected)], sc.bandwidth,
                         sc.payload_bits, access="oma" if scheme == "oma" else "noma",
                         compute_free=scheme == "ideal", noise=sc.noise_power)


def random_allocate(inst: GameInstance, rng: np.random.Generator, draws: int = RANDOM_DRAWS):
    """Uniform draws of (p, f, v) inside the boxes and a uniform point on the
    share simplex, redrawn until every client meets the round deadline."""
    srv = inst.server
    n = len(inst.profiles)
    for _ in range(draws):
        p = np.array([rng.uniform(*pr.p_bounds) for pr in inst.profiles])
        f = np.array([rng.uniform(*pr.f_bounds) for pr in inst.profiles])
        v = np.array([rng.uniform(0.0, pr.v_max) for pr in inst.profiles])
        alpha = rng.dirichlet(np.ones(n))
        t_com = transmit_times(inst, p)
        pairs = [local_cost(pr, vi, fi, srv.kappa) for pr, vi, fi in zip(inst.profiles, v, f)]
        t_cmp = np.array([a for a, _ in pairs])
        if np.all(t_cmp + t_com <= srv.t_max):
            e_cmp = np.array([b for _, b in pairs])
            cycles = np.array([dt_workload(pr, vi, srv.epsilon) for pr, vi in zip(inst.profiles, v)])
            t_dt = np.where(cycles > 0, cycles / (alpha * srv.f_server), 0.0)
            decision = AllocationDecision(inst.ids, p, f, v, alpha, t_cmp, t_com, t_dt,
                                          over_budget=bool(np.any(t_dt > srv.t_max)))
            return decision, CostReport(inst.ids, t_cmp, e_cmp, t_com, p * t_com, t_dt)
    raise InfeasibleError(f"no deadline-feasible random draw in {draws} tries",
                          constraint="deadline")


def allocate(world: World, selected, gains, scheme: str, rng=None):
    """(AllocationDecision, CostReport) for ``selected`` under ``scheme``."""
    inst = _instance(world, selected, gains, scheme)
    if scheme == "random":
        return random_allocate(inst, rng or np.random.default_rng(world.scenario.seed))
    return stackelberg_solve(inst)


def baseline_allocate(world: World, scheme: str, selected, gains, rng=None):
    if scheme == "proposed":
        raise ValueError("use allocate() for the proposed scheme")
    return allocate(world, selected, gains, scheme, rng)


def select_and_allocate(world: World, state: rep.ReputationState, gains, scheme: str, rng):
    """Top-N selection; a client that makes the instance infeasible is dropped and
    the next best one takes its place. Returns (selected, decision, cost, dropped)."""
    sc = world.scenario
    dropped = []
    while True:
        pool = len(state.ids) - len(dropped)
        if pool < 1:
            return (), None, None, tuple(dropped)
        selected = rep.select_top_n(state, min(sc.n_selected, pool), exclude=dropped)
        try:
            decision, cost = allocate(world, selected, gains, scheme, rng)
            return selected, decision, cost, tuple(dropped)
        except InfeasibleError as exc:
            culprit = exc.client if exc.client in selected else min(selected, key=lambda c: gains[c])
            log.info("round infeasible (%s); dropping client %s", exc, culprit)
            dropped.append(culprit)


# ---------------------------------------------------------------------------
# simulation

def _fmt(ids) -> str:
    return ";".join(str(c) for c in ids)


def simulate_rounds(sc: Scenario):
    """Yield ``(FlRound, CostReport or None, MetricsRow)`` for every round."""
    world = build_world(sc)
    data = world.data
    C = data.n_classes
    state = initial_reputation(world)
    w = fl.init_params(data.n_features, C)
    for t in range(sc.rounds):
        gains = round_gains(world, t)
        rng = np.random.default_rng([sc.seed, 3, t])
        selected, decision, cost, dropped = select_and_allocate(world, state, gains, sc.scheme, rng)
        contribs, X_twin, y_twin = [], [], []
        for i, c in enumerate(selected):
            X, y = data.client(c)
            y = fl.poison(y, C, c not in world.poisoners)
            crng = np.random.default_rng([sc.seed, 4, t, c])
            v = float(decision.v[i])
            w_local = fl.local_train(w, X, y, v, sc.epochs, sc.lr, crng, C, sc.batch_size)
            contribs.append(fl.Contribution(c, w_local, len(y), v))
            Xc, yc = fl.twin_copy(world.twins[c], y, v, sc.epsilon, crng)
            X_twin.append(Xc)
            y_twin.append(yc)
        if selected:
            w_twin = fl.dt_train(w, np.vstack(X_twin), np.concatenate(y_twin), sc.epochs, sc.lr,
                                 np.random.default_rng([sc.seed, 5, t]), C, sc.batch_size)
        else:
            w_twin = w
        verdicts = {}
        if sc.roni and contribs:
            verdicts = fl.roni_round(w, contribs, data.X_val, data.y_val, sc.roni_threshold, C)
            state = rep.record_verdicts(state, verdicts)
        accepted = [cb for cb in contribs if verdicts.get(cb.client, True)]
        if accepted:
            local, twin = fl.aggregation_weights(accepted, sc.epsilon)
            w = fl.aggregate(accepted, w_twin, sc.epsilon)
            gamma = fl.convergence_factor(sc.epsilon, len(accepted),
                                          sum(cb.data_size for cb in accepted))
        else:
            local, twin, gamma = np.zeros(0), 0.0, 1.0
        state = rep.update_staleness(state, selected, t)
        acc = fl.accuracy(w, data.X_test, data.y_test, C)
        record = fl.FlRound(t, tuple(selected), verdicts, tuple(cb.client for cb in accepted),
                            local, twin, gamma, acc, model=w, contributions=tuple(contribs),
                            twin_model=w_twin, staleness=rep.normalized_staleness(state))
        if cost is None:
            nums = dict(T=0.0, E=0.0, t_cmp=0.0, t_com=0.0, t_dt=0.0, e_cmp=0.0, e_com=0.0)
        else:
            nums = cost.as_dict()
        row = MetricsRow(t, sc.scheme, sc.seed, acc, nums["T"], nums["E"], nums["T"] + nums["E"],
                         nums["t_cmp"], nums["t_com"], nums["t_dt"], nums["e_cmp"], nums["e_com"],
                         sum(1 for ok in verdicts.values() if not ok), gamma, _fmt(selected),
                         _fmt(dropped))
        yield record, cost, row


def run_simulation(sc: Scenario):
    """Stream of :class:`MetricsRow`, one per round."""
    for _, _, row in simulate_rounds(sc):
        yield row


def _cell(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(rows, out, columns=None):
    """Write dataclass rows (or dicts) to a path or text stream; returns the row count."""
    own = isinstance(out, (str, bytes)) or hasattr(out, "__fspath__")
    fh = open(out, "w", newline="") if own else out
    try:
        writer = csv.writer(fh, lineterminator="\n")
        header = None
        n = 0
        if columns is not None:
            header = list(columns)
            writer.writerow(header)
        for row in rows:
            d = asdict(row) if not isinstance(row, dict) else row
            if header is None:
                header = list(d)
                writer.writerow(header)
            writer.writerow([_cell(d[k]) for k in header])
            n += 1
        return n
    finally:
        if own:
            fh.close()


def simulation_csv(sc: Scenario) -> str:
    buf = io.StringIO()
    write_csv(run_simulation(sc), buf, MetricsRow.columns())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# sweeps

AXES = {
    "dn": ("payload_bits", 1e6),     # values in Mbit
    "n": ("n_selected", 1),
    "b": ("bandwidth", 1e6),         # values in MHz
}
SWEEP_COLUMNS = ["axis", "value", "scheme", "seed", "status", "T", "E", "total"]


def cost_point(sc: Scenario, scheme: str, seed: int):
    """One allocation at round 0 of a fresh world; (status, CostReport or None)."""
    sc = sc.replace(seed=seed, scheme=scheme, rounds=0)
    world = build_world(sc, with_data=False)
    state = initial_reputation(world)
    gains = round_gains(world, 0)
    rng = np.random.default_rng([seed, 3, 0])
    selected, _, cost, _ = select_and_allocate(world, state, gains, scheme, rng)
    return ("ok", cost) if cost is not None else ("infeasible", None)


def sweep(sc: Scenario, axis: str, values, schemes=("proposed", "no_dt", "oma", "random", "ideal"),
          seeds=range(20)):
    """Long-format rows (dicts) of round cost per axis value, scheme and seed."""
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; choose from {sorted(AXES)}")
    if len(values) == 0:
        raise ValueError("no sweep values")
    field_name, unit = AXES[axis]
    for value in values:
        raw = value * unit
        try:
            point = sc.replace(**{field_name: int(raw) if field_name == "n_selected" else float(raw)})
            if field_name == "n_selected" and raw != int(raw):
                raise ValueError("N must be an integer")
        except ValueError as exc:
            log.warning("skipping %s=%s: %s", axis, value, exc)
            yield {"axis": axis, "value": value, "scheme": "", "seed": "", "status": "invalid",
                   "T": "", "E": "", "total": ""}
            continue
        for scheme in schemes:
            for seed in seeds:
                status, cost = cost_point(point, scheme, seed)
                T = cost.T if cost else math.nan
                E = cost.E if cost else math.nan
                yield {"axis": axis, "value": value, "scheme": scheme, "seed": seed,
                       "status": status, "T": T if cost else "", "E": E if cost else "",
                       "total": T + E if cost else ""}


def sweep_medians(rows):
    """``{(value, scheme): median total}`` over feasible rows."""
    acc = {}
    for r in rows:
        if r["status"] == "ok":
            acc.setdefault((r["value"], r["scheme"]), []).append(r["total"])
    return {k: float(np.median(v)) for k, v in acc.items()}
