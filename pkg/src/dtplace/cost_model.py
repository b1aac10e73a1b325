"""Latency/energy cost of serving digital twins from chosen servers.

Every device uploads its workload to the server hosting its twin, which then
executes the twin's update there.  Times are seconds, energies millijoules.

Transmission differs by target.  The cloud path discounts the device's
nominal bandwidth ``b`` by ``gamma``; the edge path rate falls off with
distance as ``lambda_ / dist`` (distance clamped to one meter).  Execution
takes ``delta`` instructions per data unit at the server's clock speed (GHz,
converted to instructions per second).  Device energy is transmission energy
per unit plus execution energy per instruction, both taken from the server
side of the split.

A twin cannot update before its slowest member device has uploaded, so a
twin's synchronization time is the max transmission time over its members.
A twin with ``k`` members refreshes ``k`` times per cycle, which scales its
per-cycle time by ``k``.  The scalar objective mixes total time and total
energy with weight ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError
from .scenario import Scenario


@dataclass(frozen=True)
class Decision:
    """Dense placement: ``assignment[m]`` is the server index hosting DT m.

    Edge servers occupy indices ``0 .. S-1``; the cloud is index ``S``.
    """

    assignment: tuple[int, ...]

    def one_hot(self, num_servers: int) -> np.ndarray:
        out = np.zeros((len(self.assignment), num_servers))
        out[np.arange(len(self.assignment)), list(self.assignment)] = 1.0
        return out


@dataclass(frozen=True)
class CostBreakdown:
    """Per-device and per-DT components behind one scalar cost."""

    per_device_tx_time: tuple[float, ...]
    per_device_exec_time: tuple[float, ...]
    per_device_energy: tuple[float, ...]
    per_dt_sync_time: tuple[float, ...]
    per_dt_time: tuple[float, ...]
    total_time: float
    total_energy: float
    weighted_cost: float

    def as_record(self) -> dict[str, float]:
        """Flat scalars, ready for one CSV row."""
        return {
            "total_time": self.total_time,
            "total_energy": self.total_energy,
            "weighted_cost": self.weighted_cost,
        }


def _positive(name: str, value: float) -> None:
    if not value > 0:
        raise DomainError(f"{name} must be positive, got {value!r}")


def cloud_tx_time(w: float, b: float, gamma: float) -> float:
    """Seconds to push ``w`` data units over the discounted cloud path."""
    _positive("w", w)
    _positive("b", b)
    if not 0 < gamma <= 1:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma!r}")
    return w / (b * gamma)


def cloud_exec_time(w: float, delta: float, f_c: float) -> float:
    """Seconds to execute ``delta * w`` instructions at ``f_c`` GHz."""
    _positive("w", w)
    _positive("delta", delta)
    _positive("f_c", f_c)
    return delta * w / (f_c * 1e9)


def cloud_energy(w: float, e_t_c: float, theta_c: float, delta: float) -> float:
    """Transmission plus execution energy (mJ) for a cloud-served device."""
    _positive("w", w)
    _positive("e_t_c", e_t_c)
    _positive("theta_c", theta_c)
    _positive("delta", delta)
    return e_t_c * w + theta_c * delta * w


def edge_rate(loc_n: tuple[float, float], loc_s: tuple[float, float], lambda_: float) -> float:
    """Edge uplink rate in Mbps; distance is clamped to one meter."""
    dist = math.hypot(loc_n[0] - loc_s[0], loc_n[1] - loc_s[1])
    return lambda_ / max(dist, 1.0)


def edge_tx_time(w: float, loc_n: tuple[float, float], loc_s: tuple[float, float],
                 lambda_: float) -> float:
    """Seconds to push ``w`` data units to an edge server."""
    return w / edge_rate(loc_n, loc_s, lambda_)


def edge_exec_time(w: float, delta: float, f_e: float) -> float:
    """Seconds to execute ``delta * w`` instructions at ``f_e`` GHz."""
    _positive("w", w)
    _positive("delta", delta)
    _positive("f_e", f_e)
    return delta * w / (f_e * 1e9)


def edge_energy(w: float, e_t_e: float, theta_e: float, delta: float) -> float:
    """Transmission plus execution energy (mJ) for an edge-served device."""
    _positive("w", w)
    _positive("e_t_e", e_t_e)
    _positive("theta_e", theta_e)
    _positive("delta", delta)
    return e_t_e * w + theta_e * delta * w


def _device_matrices(s: Scenario):
    """Per-device, per-server transmission time, execution time, and energy.

    Returns ``(tx, ex, en)``, each shaped ``(N, S+1)`` with the cloud in the
    last column.  Shares its arithmetic with :func:`evaluate` so the two
    agree to rounding.
    """
    pool, dev, par = s.servers, s.devices, s.params
    w = np.asarray(dev.workloads, dtype=float)
    b = np.asarray(dev.bandwidths, dtype=float)
    loc = np.asarray(dev.locations, dtype=float).reshape(len(dev.workloads), 2)
    eloc = np.asarray(pool.edge_locations, dtype=float).reshape(pool.num_edge, 2)

    dist = np.hypot(loc[:, None, 0] - eloc[None, :, 0], loc[:, None, 1] - eloc[None, :, 1])
    dist = np.maximum(dist, 1.0)
    tx = np.empty((len(w), pool.num_edge + 1))
    tx[:, :-1] = w[:, None] / (par.lambda_ / dist)
    tx[:, -1] = w / (b * par.gamma)

    clocks = np.append(np.asarray(pool.edge_clock_speeds, dtype=float), pool.cloud_clock_speed)
    ex = par.delta * w[:, None] / (clocks[None, :] * 1e9)

    en = np.empty_like(tx)
    en[:, :-1] = (pool.edge_tx_energy * w + pool.edge_exec_energy * par.delta * w)[:, None]
    en[:, -1] = pool.cloud_tx_energy * w + pool.cloud_exec_energy * par.delta * w
    return tx, ex, en


def evaluate(s: Scenario, d: Decision) -> CostBreakdown:
    """Score one placement decision.

    The caller supplies a scenario that passes :func:`scenario.validate`;
    assignment length and server indices are checked here.
    """
    m = s.num_dts
    if len(d.assignment) != m:
        raise ContractError(
            f"decision length {len(d.assignment)} differs from num_dts {m}"
        )
    assign = np.asarray(d.assignment, dtype=int)
    if assign.size and (assign.min() < 0 or assign.max() >= s.num_servers_total):
        raise ContractError("server index out of range in decision")

    own = np.asarray(s.devices.ownership, dtype=int)
    tx_all, ex_all, en_all = _device_matrices(s)
    chosen = assign[own]
    rows = np.arange(own.size)
    tx = tx_all[rows, chosen]
    ex = ex_all[rows, chosen]
    en = en_all[rows, chosen]

    counts = np.bincount(own, minlength=m).astype(float)
    sync = np.zeros(m)
    np.maximum.at(sync, own, tx)
    exec_sum = np.zeros(m)
    np.add.at(exec_sum, own, ex)
    dt_time = counts * (sync + exec_sum)

    # Sequential sums keep the totals bit-identical to summing the reported
    # per-DT and per-device components.
    total_time = float(sum(dt_time.tolist()))
    total_energy = float(sum(en.tolist()))
    alpha = s.params.alpha
    weighted = float(alpha * total_time + (1.0 - alpha) * total_energy)
    return CostBreakdown(
        per_device_tx_time=tuple(float(v) for v in tx),
        per_device_exec_time=tuple(float(v) for v in ex),
        per_device_energy=tuple(float(v) for v in en),
        per_dt_sync_time=tuple(float(v) for v in sync),
        per_dt_time=tuple(float(v) for v in dt_time),
        total_time=total_time,
        total_energy=total_energy,
        weighted_cost=weighted,
    )


def per_dt_cost_table(s: Scenario) -> np.ndarray:
    """Weighted cost contribution of hosting each DT on each server.

    The objective decomposes per DT, so for any decision ``d`` the scalar
    cost equals ``sum(table[m, d.assignment[m]] for m)`` up to rounding.
    Shaped ``(num_dts, num_servers_total)``; used for exhaustive search and
    bulk scoring.
    """
    own = np.asarray(s.devices.ownership, dtype=int)
    m = s.num_dts
    tx, ex, en = _device_matrices(s)

    counts = np.bincount(own, minlength=m).astype(float)
    sync = np.zeros((m, tx.shape[1]))
    np.maximum.at(sync, own, tx)
    exec_sum = np.zeros_like(sync)
    np.add.at(exec_sum, own, ex)
    energy_sum = np.zeros_like(sync)
    np.add.at(energy_sum, own, en)

    alpha = s.params.alpha
    dt_time = counts[:, None] * (sync + exec_sum)
    return alpha * dt_time + (1.0 - alpha) * energy_sum
