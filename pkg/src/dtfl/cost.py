"""Computation latency/energy of local and digital-twin training, and round totals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dtfl.errors import InfeasibleError

KAPPA = 2e-28


@dataclass(frozen=True)
class ClientProfile:
    """Static parameters of one client.

    ``ac_params`` are the three coefficients of the accuracy-contribution
    curve (asymptote, scale, rate).
    """

    data_size: int
    cycles_per_sample: float = 1e7
    f_bounds: tuple = (1e9, 10e9)
    p_bounds: tuple = (0.01, 0.1)
    v_max: float = 0.5
    honest: bool = True
    ac_params: tuple = (1.0, 1.0, 1e-4)
    id: int = 0

    def __post_init__(self):
        f_lo, f_hi = self.f_bounds
        p_lo, p_hi = self.p_bounds
        if self.data_size < 1:
            raise ValueError("data_size must be >= 1")
        if self.cycles_per_sample <= 0:
            raise ValueError("cycles_per_sample must be positive")
        if not 0 < f_lo <= f_hi:
            raise ValueError(f"bad frequency bounds {self.f_bounds}")
        if not 0 < p_lo <= p_hi:
            raise ValueError(f"bad power bounds {self.p_bounds}")
        if not 0 <= self.v_max <= 1:
            raise ValueError("v_max must lie in [0, 1]")

    def workload(self, v: float) -> float:
        """CPU cycles left on the device when a fraction ``v`` is mapped to the twin."""
        return self.cycles_per_sample * (1.0 - v) * self.data_size


@dataclass(frozen=True)
class ServerProfile:
    f_server: float = 100e9
    epsilon: float = 0.0      # twin data-size mismatch, in samples
    t_max: float = 10.0
    kappa: float = KAPPA

    def __post_init__(self):
        if self.f_server <= 0 or self.t_max <= 0 or self.kappa <= 0:
            raise ValueError("server frequency, deadline and kappa must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


def local_cost(profile: ClientProfile, v: float, f: float, kappa: float = KAPPA,
               check: bool = True) -> tuple:
    """(latency s, energy J) of training on the locally kept share."""
    if check:
        f_lo, f_hi = profile.f_bounds
        if not -1e-12 <= v <= profile.v_max + 1e-12:
            raise ValueError(f"v={v} outside [0, {profile.v_max}]")
        if not f_lo * (1 - 1e-12) <= f <= f_hi * (1 + 1e-12):
            raise ValueError(f"f={f} outside [{f_lo}, {f_hi}]")
    w = profile.workload(v)
    return w / f, 0.5 * kappa * w * f * f


def local_energy_from_time(profile: ClientProfile, v: float, t: float, kappa: float = KAPPA) -> float:
    """Energy written in terms of the computing time instead of the frequency."""
    w = profile.workload(v)
    if w == 0:
        return 0.0
    return kappa * w ** 3 / (2.0 * t * t)


def dt_workload(profile: ClientProfile, v: float, deviation: float) -> float:
    return profile.cycles_per_sample * (v * profile.data_size + deviation)


def dt_cost(profile: ClientProfile, server: ServerProfile, v: float, alpha: float) -> float:
    """Latency of the twin-side training; its energy is not charged to anyone."""
    work = dt_workload(profile, v, server.epsilon)
    if work < 0:
        raise ValueError("negative twin workload")
    if work == 0:
        return 0.0
    if alpha <= 0:
        raise InfeasibleError("twin workload with no server share", client=profile.id,
                              constraint="alpha")
    return work / (alpha * server.f_server)


@dataclass
class CostReport:
    """Per-client phase costs (arrays aligned with ``ids``) and round totals."""

    ids: tuple
    t_cmp: np.ndarray
    e_cmp: np.ndarray
    t_com: np.ndarray
    e_com: np.ndarray
    t_dt: np.ndarray
    T: float = field(init=False)
    E: float = field(init=False)

    def __post_init__(self):
        for name in ("t_cmp", "e_cmp", "t_com", "e_com", "t_dt"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if len(arr) != len(self.ids):
                raise ValueError(f"{name} has {len(arr)} entries for {len(self.ids)} clients")
            if np.any(arr < 0):
                raise ValueError(f"{name} has negative entries")
            setattr(self, name, arr)
        self.T = float(np.max(np.maximum(self.t_cmp + self.t_com, self.t_dt)))
        self.E = float(np.sum(self.e_cmp + self.e_com))

    @property
    def total(self) -> float:
        return self.T + self.E

    def as_dict(self) -> dict:
        return {
            "T": self.T, "E": self.E,
            "t_cmp": float(self.t_cmp.max()), "t_com": float(self.t_com.max()),
            "t_dt": float(self.t_dt.max()),
            "e_cmp": float(self.e_cmp.sum()), "e_com": float(self.e_com.sum()),
        }


def aggregate_cost(entries) -> CostReport:
    """Build a report from ``{id: (t_cmp, e_cmp, t_com, e_com, t_dt)}``."""
    if not entries:
        raise ValueError("empty selection")
    ids = tuple(entries)
    cols = np.array([entries[i] for i in ids], dtype=float).T
    return CostReport(ids, *cols)
