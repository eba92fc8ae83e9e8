"""The generation loop: clone, mutate, evaluate, learn, select, gate, roll out.

Per-candidate randomness derives from (master seed, generation, candidate
index), so evaluation may run on any number of threads without changing a
single byte of output. Bandit updates use the reward observed from the
previous generation's rollout; selection never sees the scalarization
weights, which only decide what rolls out.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .bandit import BanditState, bandit_update
from .errors import (
    EmptyPopulation,
    EngineRunError,
    GraphEvolveError,
    OperatorPrecondition,
    OutOfRangeEvent,
    UnknownEventKind,
)
from .graph import ArtefactGraph
from .metrics import FitnessVector, aggregate_utility, fitness_vector, normalize_latency
from .operators import (
    OperatorConfig,
    OperatorKind,
    OperatorRecord,
    build_operators,
    sample_ops,
)
from .safety import GateReport, RiskWindow, SafetyPolicy, gate
from .selection import QdArchive, SelectionParams, select_qd
from .simenv import EnvironmentHandle
from .rng import derive_seed

EVENT_KINDS = ("weight_shift", "policy_change", "environment_shock")


@dataclass(frozen=True)
class EngineEvent:
    """A scheduled mid-run intervention."""

    generation: int
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Ablations:
    disable_wm: bool = False
    disable_cp: bool = False
    disable_ds: bool = False
    disable_bw: bool = False
    disable_tr: bool = False
    disable_novelty: bool = False

    def disabled_kinds(self) -> set[str]:
        mapping = {
            "WM": self.disable_wm,
            "CP": self.disable_cp,
            "DS": self.disable_ds,
            "BW": self.disable_bw,
            "TR": self.disable_tr,
        }
        return {k for k, off in mapping.items() if off}


@dataclass(frozen=True)
class EngineConfig:
    n: int = 64
    T: int = 30
    gamma: float = 0.97
    mutation_rate: float = 0.3
    seed: int = 0
    workers: int = 1
    operators: OperatorConfig = field(default_factory=OperatorConfig)
    selection: SelectionParams = field(default_factory=SelectionParams)
    archive_capacity: int = 256
    archive_k: int = 5
    bandit: BanditState = field(default_factory=BanditState)
    safety: SafetyPolicy = field(default_factory=SafetyPolicy)
    risk_window: int = 50
    ablations: Ablations = field(default_factory=Ablations)
    events: tuple[EngineEvent, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"population size must be >= 1, got {self.n}")
        if self.T < 1:
            raise ValueError(f"generation count must be >= 1, got {self.T}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma out of [0,1]: {self.gamma}")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError(f"mutation_rate out of [0,1]: {self.mutation_rate}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    def effective_operators(self) -> OperatorConfig:
        """Operator block with engine-level rate and ablation toggles applied."""
        disabled = self.ablations.disabled_kinds()
        enabled = tuple(k for k in self.operators.enabled if k not in disabled)
        return dataclasses.replace(
            self.operators, mutation_rate=self.mutation_rate, enabled=enabled
        )

    def effective_selection(self) -> SelectionParams:
        if self.ablations.disable_novelty:
            return dataclasses.replace(self.selection, beta_nov=0.0)
        return self.selection


@dataclass
class RolloutState:
    """Production pointer plus everything already rolled out."""

    current: ArtefactGraph
    history: list[tuple[int, str]] = field(default_factory=list)
    discounted_return: float = 0.0


@dataclass
class GenerationRecord:
    generation: int
    weights: tuple[float, ...]
    pool_fitness: list[tuple[float, ...]]
    population_ids: list[str]
    best_graph_id: str
    best_utility: float
    mean_utility: float
    gate_report: GateReport
    risk_estimate: float
    rolled_out: bool
    rollout_reward: float | None
    current_graph_id: str
    current_latency_ms: float
    current_security: float
    current_doc_freshness: float
    archive_size: int
    discounted_return: float
    events_applied: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "generation": self.generation,
            "weights": list(self.weights),
            "pool_fitness": [list(f) for f in self.pool_fitness],
            "population_ids": list(self.population_ids),
            "best_graph_id": self.best_graph_id,
            "best_utility": self.best_utility,
            "mean_utility": self.mean_utility,
            "gate": self.gate_report.as_dict(),
            "risk_estimate": self.risk_estimate,
            "rolled_out": self.rolled_out,
            "rollout_reward": self.rollout_reward,
            "current_graph_id": self.current_graph_id,
            "current_latency_ms": self.current_latency_ms,
            "current_security": self.current_security,
            "current_doc_freshness": self.current_doc_freshness,
            "archive_size": self.archive_size,
            "discounted_return": self.discounted_return,
            "events_applied": list(self.events_applied),
        }


@dataclass
class RunResult:
    records: list[GenerationRecord]
    archive: QdArchive
    rollout: RolloutState
    bandit: BanditState


def best(candidates: Sequence[tuple[ArtefactGraph, FitnessVector]], weights: Sequence[float]) -> tuple[ArtefactGraph, FitnessVector]:
    """Argmax of scalarized utility; deterministic tie-breaking.

    Ties fall to the lexicographically larger fitness vector, then to the
    smaller lineage id.
    """
    if not candidates:
        raise EmptyPopulation("best() over an empty population")

    def sort_key(item):
        graph, fitness = item
        utility = aggregate_utility(fitness, weights)
        return (-utility, tuple(-c for c in fitness.components), graph.graph_id)

    return min(candidates, key=sort_key)


@dataclass
class _EngineState:
    bandit: BanditState
    policy: SafetyPolicy
    env: EnvironmentHandle


def apply_event(event: EngineEvent, state: _EngineState) -> _EngineState:
    """Apply one scheduled intervention to the live engine state."""
    if event.kind == "weight_shift":
        weights = tuple(float(x) for x in event.params["weights"])
        pinned = event.params.get("pinned")
        pinned_t = tuple(bool(b) for b in pinned) if pinned is not None else None
        state.bandit = BanditState(weights, state.bandit.eta, pinned_t)
    elif event.kind == "policy_change":
        overrides = dict(event.params)
        if "locked_node_ids" in overrides:
            overrides["locked_node_ids"] = frozenset(overrides["locked_node_ids"])
        if "approve_generations" in overrides:
            overrides["approve_generations"] = frozenset(overrides["approve_generations"])
        state.policy = dataclasses.replace(state.policy, **overrides)
    elif event.kind == "environment_shock":
        state.env.apply_shock(str(event.params.get("shock", "latency_spike")), float(event.params.get("factor", 1.0)))
    else:
        raise UnknownEventKind(f"unknown event kind {event.kind!r}")
    return state


def validate_events(events: Sequence[EngineEvent], total_generations: int) -> None:
    for event in events:
        if event.kind not in EVENT_KINDS:
            raise UnknownEventKind(f"unknown event kind {event.kind!r}")
        if not 1 <= event.generation <= total_generations:
            raise OutOfRangeEvent(
                f"event {event.kind!r} scheduled at generation {event.generation}, run has 1..{total_generations}"
            )


def _evaluate(graph: ArtefactGraph, env: EnvironmentHandle) -> tuple[ArtefactGraph, FitnessVector, tuple[float, ...]]:
    """Fitness plus descriptor; stores the measured perf signature on the graph."""
    raw = env.metrics(graph)
    fit = fitness_vector(raw, env.bounds)
    latency_norm = normalize_latency(raw.P, env.bounds)
    if graph.attributes.get("latency_norm") != latency_norm:
        graph = graph.with_graph_attrs({"latency_norm": latency_norm})
    return graph, fit, graph.descriptor().vector()


def run(
    config: EngineConfig,
    env: EnvironmentHandle,
    genesis: ArtefactGraph,
    approver=None,
) -> RunResult:
    """Execute the full loop for config.T generations; deterministic per seed.

    `approver` is the interactive hook for policies that require human
    sign-off; batch runs rely on the policy's generation allowlist instead.
    """
    validate_events(config.events, config.T)
    ops_config = config.effective_operators()
    operators = build_operators(ops_config)
    sel_params = config.effective_selection()

    archive = QdArchive(capacity=config.archive_capacity, k=config.archive_k)
    state = _EngineState(bandit=config.bandit, policy=config.safety, env=env)
    risk = RiskWindow(window=config.risk_window)
    rollout = RolloutState(current=genesis)
    population = [genesis.with_identity(f"g0.{i}", 0) for i in range(config.n)]
    pending: tuple[float, FitnessVector] | None = None
    records: list[GenerationRecord] = []

    events_by_gen: dict[int, list[EngineEvent]] = {}
    for event in config.events:
        events_by_gen.setdefault(event.generation, []).append(event)

    for t in range(1, config.T + 1):
        try:
            applied = []
            for event in events_by_gen.get(t, []):
                state = apply_event(event, state)
                applied.append(event.kind)

            mutants = [
                _mutate(parent, i, t, config, operators, ops_config, env)
                for i, parent in enumerate(population)
            ]
            pool = population + mutants

            if config.workers > 1:
                with ThreadPoolExecutor(max_workers=config.workers) as pool_exec:
                    evaluated = list(pool_exec.map(lambda g: _evaluate(g, env), pool))
            else:
                evaluated = [_evaluate(g, env) for g in pool]

            if pending is not None:
                reward, fit = pending
                state.bandit = bandit_update(state.bandit, fit, reward)
                pending = None
            weights = state.bandit.w

            survivors, archive = select_qd(
                [(g, f, d) for g, f, d in evaluated],
                config.n,
                sel_params,
                archive,
                seed=derive_seed(config.seed, "select", t),
            )
            fitness_of = {g.graph_id: f for g, f, _ in evaluated}
            population = survivors

            best_graph, best_fit = best([(g, fitness_of[g.graph_id]) for g in population], weights)
            report = gate(
                best_graph, rollout.current, state.policy, env, generation=t, approver=approver
            )
            risk.push(report.passed)
            estimate = risk.estimate()

            rolled = report.passed and (1.0 - estimate) <= state.policy.delta
            reward_value: float | None = None
            if rolled:
                rollout.current = best_graph
                rollout.history.append((t, best_graph.graph_id))
                reward_value = env.reward(best_graph)
                utility = aggregate_utility(best_fit, weights)
                rollout.discounted_return += (config.gamma ** (t - 1)) * utility
                pending = (reward_value, best_fit)

            current_raw = env.metrics(rollout.current)
            utilities = [aggregate_utility(f, weights) for _, f, _ in evaluated]
            records.append(
                GenerationRecord(
                    generation=t,
                    weights=weights,
                    pool_fitness=[tuple(f.components) for _, f, _ in evaluated],
                    population_ids=[g.graph_id for g in population],
                    best_graph_id=best_graph.graph_id,
                    best_utility=aggregate_utility(best_fit, weights),
                    mean_utility=sum(utilities) / len(utilities),
                    gate_report=report,
                    risk_estimate=estimate,
                    rolled_out=rolled,
                    rollout_reward=reward_value,
                    current_graph_id=rollout.current.graph_id,
                    current_latency_ms=current_raw.P,
                    current_security=current_raw.S,
                    current_doc_freshness=current_raw.D,
                    archive_size=len(archive.entries),
                    discounted_return=rollout.discounted_return,
                    events_applied=applied,
                )
            )
        except GraphEvolveError as exc:
            raise EngineRunError(t, exc) from exc
    return RunResult(records, archive, rollout, state.bandit)


def _mutate(
    parent: ArtefactGraph,
    index: int,
    generation: int,
    config: EngineConfig,
    operators: dict[OperatorKind, object],
    ops_config: OperatorConfig,
    env: EnvironmentHandle,
) -> ArtefactGraph:
    """Apply this candidate's sampled operator chain; preconditions downgrade
    to rejected lineage records so long runs survive, e.g., running out of
    legacy nodes to transmute."""
    base = derive_seed(config.seed, "mut", generation, index)
    kinds = sample_ops(base, ops_config)
    graph = parent
    for kind in kinds:
        op = operators[kind]
        try:
            outcome = op.apply(graph, derive_seed(base, kind.value), env)
            graph = outcome.graph
        except OperatorPrecondition as exc:
            record = OperatorRecord.build(kind, False, {"precondition": str(exc)})
            graph = graph.with_lineage(record)
    return graph.with_identity(f"g{generation}.{index}", generation)
