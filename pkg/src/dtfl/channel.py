"""NOMA uplink model: gains, SIC decoding order, rates and transmit cost.

Clients are addressed by integer id. A :class:`ChannelState` keeps the ids
next to the gains so that sorting for the decoding order never loses track
of who is who.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from dtfl.errors import InfeasibleError

NOISE_DENSITY_DBM_HZ = -174.0
PATH_LOSS_EXPONENT = 3.76


def noise_power(bandwidth: float, density_dbm_hz: float = NOISE_DENSITY_DBM_HZ) -> float:
    """Thermal noise power in watts over ``bandwidth`` Hz."""
    return 10.0 ** ((density_dbm_hz - 30.0) / 10.0) * bandwidth


@dataclass(frozen=True)
class ChannelState:
    gains: np.ndarray
    noise_power: float
    bandwidth: float
    ids: tuple = field(default=None)

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=float).reshape(-1)
        object.__setattr__(self, "gains", gains)
        ids = tuple(range(len(gains))) if self.ids is None else tuple(int(i) for i in self.ids)
        if len(ids) != len(gains):
            raise ValueError("ids and gains differ in length")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate client ids")
        object.__setattr__(self, "ids", ids)
        if np.any(gains <= 0) or not np.all(np.isfinite(gains)):
            raise ValueError("channel gains must be positive and finite")
        if self.noise_power <= 0 or self.bandwidth <= 0:
            raise ValueError("noise power and bandwidth must be positive")

    @classmethod
    def from_mapping(cls, gains: Mapping[int, float], bandwidth: float, noise=None):
        ids = sorted(gains)
        noise = noise_power(bandwidth) if noise is None else noise
        return cls(np.array([gains[i] for i in ids]), noise, bandwidth, tuple(ids))

    def gain(self, client: int) -> float:
        return float(self.gains[self.ids.index(client)])

    def subset(self, clients: Sequence[int]) -> "ChannelState":
        return ChannelState(np.array([self.gain(c) for c in clients]),
                            self.noise_power, self.bandwidth, tuple(clients))


@dataclass(frozen=True)
class TransmitPlan:
    """Per-client powers (W), payloads (bits) and the SIC decoding order."""

    powers: Mapping[int, float]
    payload_bits: Mapping[int, float]
    decode_order: tuple
    p_bounds: tuple = None

    def __post_init__(self):
        order = tuple(int(c) for c in self.decode_order)
        object.__setattr__(self, "decode_order", order)
        if len(set(order)) != len(order):
            raise ValueError("decode order repeats a client")
        if set(order) != set(self.powers):
            raise ValueError("decode order must be a permutation of the powered clients")
        if self.p_bounds is not None:
            lo, hi = self.p_bounds
            for c, p in self.powers.items():
                if not lo <= p <= hi:
                    raise ValueError(f"power {p} of client {c} outside [{lo}, {hi}]")


def decoding_order(state: ChannelState) -> tuple:
    """Client ids by descending gain; equal gains go to the smaller id first."""
    return tuple(c for _, c in sorted(zip(-state.gains, state.ids)))


def interference(state: ChannelState, plan: TransmitPlan, n: int) -> float:
    """Received power of everything decoded after ``n`` (still present at SIC stage n)."""
    pos = plan.decode_order.index(n)
    return sum(plan.powers[j] * state.gain(j) for j in plan.decode_order[pos + 1:])


def rate(state: ChannelState, plan: TransmitPlan, n: int) -> float:
    """Achievable rate of client ``n`` in bits/s under SIC."""
    if n not in plan.decode_order:
        raise KeyError(f"client {n} is not in the decode order")
    denom = interference(state, plan, n) + state.noise_power
    if denom <= 0:
        raise ValueError("non-positive interference-plus-noise")
    return state.bandwidth * math.log2(1.0 + plan.powers[n] * state.gain(n) / denom)


def transmit_cost(state: ChannelState, plan: TransmitPlan, n: int) -> tuple:
    """(latency s, energy J) for uploading client ``n``'s payload."""
    bits = plan.payload_bits[n]
    if bits == 0:
        return 0.0, 0.0
    r = rate(state, plan, n)
    if r <= 0:
        raise InfeasibleError(f"client {n} has zero rate", client=n, constraint="rate")
    t = bits / r
    return t, plan.powers[n] * t


def sample_positions(m: int, radius: float, rng: np.random.Generator, min_distance=1.0):
    """Distances of ``m`` points dropped uniformly in a disc around the server."""
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=m))
    return np.clip(r, min_distance, radius)


def sample_gains(distances, seed=None, *, bandwidth=1e6, exponent=PATH_LOSS_EXPONENT,
                 fading=None, ids=None) -> ChannelState:
    """Rayleigh block fading on top of distance path loss.

    ``seed`` may be an int or a ``numpy.random.Generator``. Passing ``fading``
    overrides the exponential draws (used to pin the small-scale term).
    """
    d = np.asarray(distances, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    if fading is None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        fading = rng.exponential(1.0, size=d.shape)
    g = np.asarray(fading, dtype=float) * d ** (-exponent)
    return ChannelState(g, noise_power(bandwidth), bandwidth, ids)
