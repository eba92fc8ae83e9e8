"""Conjunctive rollout gate, behavioral drift and risk-budget accounting.

A candidate rolls out only if every clause holds: regression tests,
contract probes, latency bound, drift bound, locked-node protection and
(when required) human approval. All clauses are measured even after one
fails, so reports are complete.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import EmptyWindow, NoProbes
from .graph import ArtefactGraph

RISK_WINDOW = 50


@dataclass(frozen=True)
class SafetyPolicy:
    tau_test: float = 0.85
    p_max: float = 450.0
    epsilon: float = 0.05  # drift bound
    delta: float = 0.2  # risk budget over the trailing window
    require_approval: bool = False
    locked_node_ids: frozenset[str] = frozenset()
    approve_generations: frozenset[int] = frozenset()

    def __post_init__(self):
        for name in ("tau_test", "epsilon", "delta"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"policy {name} out of [0,1]: {value}")
        if self.p_max <= 0:
            raise ValueError(f"policy p_max must be positive: {self.p_max}")


@dataclass(frozen=True)
class GateReport:
    passed: bool
    clause_results: dict[str, bool]
    measured: dict[str, float | bool]

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "clauses": dict(self.clause_results),
            "measured": dict(self.measured),
        }


def drift(candidate: ArtefactGraph, current: ArtefactGraph, env) -> float:
    """Fraction of behavioral probes whose outcome differs between graphs."""
    probes_candidate = env.probes(candidate)
    probes_current = env.probes(current)
    if not probes_candidate:
        raise NoProbes("environment defines no behavioral probes")
    differing = sum(1 for a, b in zip(probes_candidate, probes_current) if a != b)
    return differing / len(probes_candidate)


def locked_nodes_modified(
    candidate: ArtefactGraph, current: ArtefactGraph, policy: SafetyPolicy
) -> bool:
    """True if any locked node differs between current and candidate.

    Locks come from node-level pins in the current production graph and from
    the policy's explicit id list; removal counts as modification.
    """
    locked_ids = {nid for nid, node in current.nodes.items() if node.locked}
    locked_ids |= set(policy.locked_node_ids)
    for nid in locked_ids:
        if nid not in current.nodes:
            continue  # policy names a node this estate does not have
        if nid not in candidate.nodes or candidate.nodes[nid] != current.nodes[nid]:
            return True
    return False


def gate(
    candidate: ArtefactGraph,
    current: ArtefactGraph,
    policy: SafetyPolicy,
    env,
    generation: int | None = None,
    approver: Callable[[int], bool] | None = None,
) -> GateReport:
    """Evaluate all six clauses; `passed` is their conjunction."""
    test_rate = env.test_rate(candidate)
    contracts_ok = all(env.probes(candidate))
    latency_ms = env.metrics(candidate).P
    drift_value = drift(candidate, current, env)
    locked_touched = locked_nodes_modified(candidate, current, policy)

    if not policy.require_approval:
        approved = True
    elif approver is not None:
        approved = bool(approver(generation if generation is not None else -1))
    else:
        approved = generation is not None and generation in policy.approve_generations

    clauses = {
        "tests": test_rate >= policy.tau_test,
        "contracts": contracts_ok,
        "latency": latency_ms <= policy.p_max,
        "drift": drift_value <= policy.epsilon,
        "locks": not locked_touched,
        "approval": approved,
    }
    measured = {
        "test_rate": test_rate,
        "contracts_ok": contracts_ok,
        "latency_ms": latency_ms,
        "drift": drift_value,
        "locked_modified": locked_touched,
    }
    return GateReport(all(clauses.values()), clauses, measured)


def risk_estimate(history: Sequence[GateReport | bool], window: int = RISK_WINDOW) -> float:
    """Empirical gate pass fraction over the trailing window.

    The engine suppresses rollout whenever 1 - estimate exceeds the policy's
    risk budget delta.
    """
    if not history:
        raise EmptyWindow("risk estimate needs at least one gate report")
    tail = list(history)[-window:]
    passed = sum(1 for r in tail if (r.passed if isinstance(r, GateReport) else bool(r)))
    return passed / len(tail)


@dataclass
class RiskWindow:
    """Single-writer trailing window of gate outcomes."""

    window: int = RISK_WINDOW
    outcomes: list[bool] = field(default_factory=list)

    def push(self, passed: bool) -> None:
        self.outcomes.append(passed)
        if len(self.outcomes) > self.window:
            del self.outcomes[: len(self.outcomes) - self.window]

    def estimate(self) -> float:
        return risk_estimate(self.outcomes, self.window)
