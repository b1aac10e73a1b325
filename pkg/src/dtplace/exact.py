"""Exhaustive placement search plus the three non-learning reference schemes.

``solve_exact`` enumerates every assignment of DTs to servers, so it is the
ground truth on small instances and refuses to run past a cap.  The reference
schemes are the usual yardsticks: uniform random placement, everything on the
cloud, and greedy workload balancing across all servers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cost_model import CostBreakdown, Decision, evaluate, per_dt_cost_table
from .errors import EnumerationCapError
from .scenario import Scenario

ENUMERATION_CAP = 2 ** 24
_CHUNK = 1 << 16


@dataclass(frozen=True)
class SchemeResult:
    decision: Decision
    cost: CostBreakdown
    scheme_name: str
    elapsed: float


def search_space_size(s: Scenario) -> int:
    return s.num_servers_total ** s.num_dts


def solve_exact(s: Scenario, cap: int = ENUMERATION_CAP) -> SchemeResult:
    """Minimize the weighted cost over all ``(S+1)^M`` assignments.

    Assignments are scanned as mixed-radix numbers with DT 0 as the most
    significant digit, and ties keep the earliest (lexicographically
    smallest) assignment.  The scan is chunked; each chunk reduces to a
    ``(cost, index)`` pair and pairs merge associatively, so any partition of
    the index range yields the same result.
    """
    start = time.perf_counter()
    m, r = s.num_dts, s.num_servers_total
    total = search_space_size(s)
    if total > cap:
        raise EnumerationCapError(
            f"search space holds {total} assignments, above the cap of {cap}"
        )

    table = per_dt_cost_table(s)
    radix = r ** (m - 1 - np.arange(m, dtype=np.int64))
    cols = np.arange(m)
    best_cost = np.inf
    best_index = -1
    for lo in range(0, total, _CHUNK):
        idx = np.arange(lo, min(lo + _CHUNK, total), dtype=np.int64)
        digits = (idx[:, None] // radix[None, :]) % r
        costs = table[cols[None, :], digits].sum(axis=1)
        k = int(np.argmin(costs))
        if costs[k] < best_cost or (costs[k] == best_cost and idx[k] < best_index):
            best_cost = float(costs[k])
            best_index = int(idx[k])

    assignment = tuple(int(best_index // radix[j] % r) for j in range(m))
    decision = Decision(assignment)
    return SchemeResult(decision, evaluate(s, decision), "exact", time.perf_counter() - start)


def scheme_random(s: Scenario, seed: int) -> SchemeResult:
    """Place each DT on a uniformly random server."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    assignment = tuple(int(v) for v in rng.integers(0, s.num_servers_total, size=s.num_dts))
    decision = Decision(assignment)
    return SchemeResult(decision, evaluate(s, decision), "ro", time.perf_counter() - start)


def scheme_cloud_only(s: Scenario) -> SchemeResult:
    """Place every DT on the cloud server."""
    start = time.perf_counter()
    decision = Decision((s.num_servers_total - 1,) * s.num_dts)
    return SchemeResult(decision, evaluate(s, decision), "co", time.perf_counter() - start)


def scheme_average_distribution(s: Scenario) -> SchemeResult:
    """Balance summed DT workloads across all servers, cloud included.

    Classic greedy balancing: DTs in decreasing workload order (index breaks
    ties) each go to the currently lightest server (lowest index breaks
    ties).  Final server loads differ by at most the largest single DT
    workload.
    """
    start = time.perf_counter()
    w = np.asarray(s.devices.workloads, dtype=float)
    own = np.asarray(s.devices.ownership, dtype=int)
    dt_load = np.zeros(s.num_dts)
    np.add.at(dt_load, own, w)

    order = sorted(range(s.num_dts), key=lambda m: (-dt_load[m], m))
    server_load = np.zeros(s.num_servers_total)
    assignment = [0] * s.num_dts
    for m in order:
        target = int(np.argmin(server_load))
        assignment[m] = target
        server_load[target] += dt_load[m]
    decision = Decision(tuple(assignment))
    return SchemeResult(decision, evaluate(s, decision), "ad", time.perf_counter() - start)
