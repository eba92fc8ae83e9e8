"""Pluggable mutation operators over artefact graphs.

Five reference operators: weight merge (WM), code patch (CP), doc sync
(DS), build weave (BW) and transmute (TR). Each is deterministic given
(graph, seed, environment state) and returns a MutationOutcome whose record
is populated even on rejection; a rejected outcome's graph content is
identical to the input.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    AllOperatorsDisabled,
    NoBuildNodes,
    NoCodeNodes,
    NoDocPairs,
    NoLegacyNodes,
    NoMergeableNodes,
    NonPositiveImprovement,
    ShapeMismatch,
)
from .graph import ArtefactGraph, ArtefactNode, EdgeType, NodeType, Scalar
from .metrics import freshness, reproducibility, tokenize
from .rng import derive_seed, generator, text_embedding, unit_uniform


class OperatorKind(enum.Enum):
    WM = "WM"
    CP = "CP"
    DS = "DS"
    BW = "BW"
    TR = "TR"


KIND_ORDER = tuple(OperatorKind)


@dataclass(frozen=True)
class OperatorRecord:
    """Lineage entry: which operator ran, what it drew, how it decided."""

    kind: str
    accepted: bool
    params: tuple[tuple[str, Scalar], ...]
    p_accept: float | None = None

    @classmethod
    def build(cls, kind: OperatorKind, accepted: bool, params: Mapping[str, Scalar], p_accept=None):
        return cls(kind.value, accepted, tuple(sorted(params.items())), p_accept)


@dataclass(frozen=True)
class MutationOutcome:
    accepted: bool
    graph: ArtefactGraph
    record: OperatorRecord


@dataclass(frozen=True)
class PatchFeatures:
    """Signals the critic extracts from a proposed code patch."""

    compile_ok: int  # 0/1
    static_delta: float  # signed count of static findings removed
    size_penalty: float  # edit-script length / 100, >= 0

    def __post_init__(self):
        for name in ("compile_ok", "static_delta", "size_penalty"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"patch feature {name} not finite")
        if self.size_penalty < 0:
            raise ValueError("size penalty must be >= 0")


class EnvironmentProtocol(Protocol):
    """The slice of the simulation environment operators rely on."""

    def patch_proposal(self, graph: ArtefactGraph, node_id: str, seed: int) -> tuple[dict, PatchFeatures]: ...
    def doc_template(self, code_node: ArtefactNode) -> tuple[str, ...]: ...
    def rebuild(self, graph: ArtefactGraph, m: int) -> list[str]: ...
    def transmute_params(self, node_id: str) -> tuple[float, float]: ...


# -- weight merge ------------------------------------------------------------


def beta_lambda(alpha: float, seed: int) -> float:
    """Symmetric Beta(alpha, alpha) draw via two gamma variates."""
    if alpha <= 0:
        raise ValueError(f"beta shape must be positive, got {alpha}")
    rng = generator("beta", seed)
    x = float(rng.standard_gamma(alpha))
    y = float(rng.standard_gamma(alpha))
    if x + y == 0.0:
        return 0.5
    return x / (x + y)


def align(w_b: np.ndarray, w_a: np.ndarray) -> np.ndarray:
    """Permute rows of w_b to minimize Frobenius distance to w_a.

    Solved as an assignment problem over squared row distances, so the
    result is the exact optimum; the row multiset never changes.
    """
    w_b = np.asarray(w_b, dtype=float)
    w_a = np.asarray(w_a, dtype=float)
    if w_b.shape != w_a.shape:
        raise ShapeMismatch(f"cannot align {w_b.shape} against {w_a.shape}")
    if w_b.ndim != 2:
        raise ShapeMismatch(f"merge tensors must be 2-D, got {w_b.ndim}-D")
    # cost[i, j]: row i of w_b placed at slot j (compared against row j of w_a)
    cost = ((w_b[:, None, :] - w_a[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(w_b.shape[0], dtype=int)
    perm[cols] = rows
    return w_b[perm]


def weight_merge(
    w_a: np.ndarray,
    w_b: np.ndarray,
    alpha: float,
    seed: int,
    lam: float | None = None,
) -> tuple[np.ndarray, float]:
    """Convex combination of two aligned weight tensors.

    lam is drawn once from Beta(alpha, alpha) unless forced via the test
    hook; returns (merged tensor, lam actually used).
    """
    w_a = np.asarray(w_a, dtype=float)
    w_b = np.asarray(w_b, dtype=float)
    if w_a.shape != w_b.shape:
        raise ShapeMismatch(f"cannot merge {w_a.shape} with {w_b.shape}")
    if lam is None:
        lam = beta_lambda(alpha, seed)
    merged = lam * w_a + (1.0 - lam) * align(w_b, w_a)
    return merged, lam


def tensor_to_attrs(tensor: np.ndarray, prefix: str = "wm") -> dict[str, Scalar]:
    """Flatten a merge tensor into scalar node attributes."""
    tensor = np.asarray(tensor, dtype=float)
    out: dict[str, Scalar] = {f"{prefix}_rows": tensor.shape[0], f"{prefix}_cols": tensor.shape[1]}
    for i in range(tensor.shape[0]):
        for j in range(tensor.shape[1]):
            out[f"{prefix}_{i}_{j}"] = float(tensor[i, j])
    return out


def tensor_from_attrs(attrs: Mapping[str, Scalar], prefix: str = "wm") -> np.ndarray | None:
    rows = attrs.get(f"{prefix}_rows")
    cols = attrs.get(f"{prefix}_cols")
    if rows is None or cols is None:
        return None
    tensor = np.zeros((int(rows), int(cols)))
    for i in range(int(rows)):
        for j in range(int(cols)):
            tensor[i, j] = float(attrs[f"{prefix}_{i}_{j}"])
    return tensor


# -- code patch ----------------------------------------------------------------


def patch_acceptance(features: PatchFeatures, theta: Sequence[float]) -> float:
    """Logistic acceptance over [1, compile_ok, static_delta, -size_penalty]."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (4,):
        raise ValueError(f"theta must have 4 components, got shape {theta.shape}")
    x = np.asarray([1.0, features.compile_ok, features.static_delta, -features.size_penalty])
    z = float(theta @ x)
    return 1.0 / (1.0 + math.exp(-z))


# -- operator configuration ------------------------------------------------------


@dataclass(frozen=True)
class OperatorConfig:
    """Run-level knobs for the five operators plus sampling."""

    mutation_rate: float = 0.3
    enabled: tuple[str, ...] = tuple(k.value for k in KIND_ORDER)
    merge_alpha: float = 1.0
    patch_theta: tuple[float, float, float, float] = (-2.0, 3.5, 0.6, 1.0)
    doc_threshold: float = 0.8  # tau_D
    doc_blend: float = 0.5
    rebuilds: int = 4  # m
    transmute_threshold: float = 0.93
    transmute_max_iters: int = 8

    def __post_init__(self):
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError(f"mutation_rate out of [0,1]: {self.mutation_rate}")
        unknown = [k for k in self.enabled if k not in {x.value for x in KIND_ORDER}]
        if unknown:
            raise ValueError(f"unknown operator kinds enabled: {unknown}")
        if self.rebuilds < 1:
            raise ValueError("rebuild count must be >= 1")

    def enabled_kinds(self) -> list[OperatorKind]:
        return [k for k in KIND_ORDER if k.value in self.enabled]


def first_pass_sample(seed: int, kinds: Sequence[OperatorKind], rate: float, round_no: int = 0) -> list[OperatorKind]:
    """One independent Bernoulli(rate) inclusion pass over the enabled kinds.

    Each kind draws from its own named stream so that disabling one kind
    never shifts another kind's draws at matched seeds.
    """
    return [k for k in kinds if unit_uniform("ops", seed, k.value, round_no) < rate]


def sample_ops(seed: int, config: OperatorConfig) -> list[OperatorKind]:
    """Sample the operator kinds applied to one candidate this generation.

    Every enabled kind joins independently with probability mutation_rate;
    empty samples are redrawn so each candidate mutates at least once.
    """
    kinds = config.enabled_kinds()
    if not kinds:
        raise AllOperatorsDisabled("no mutation operator kinds enabled")
    for round_no in range(64):
        picked = first_pass_sample(seed, kinds, config.mutation_rate, round_no)
        if picked:
            return picked
    # rate so small that 64 rounds all came up empty: force one kind
    return [kinds[derive_seed("ops-fallback", seed) % len(kinds)]]


# -- graph-level operators ---------------------------------------------------------


class MutationOperator(Protocol):
    kind: OperatorKind

    def apply(self, graph: ArtefactGraph, seed: int, env: EnvironmentProtocol) -> MutationOutcome: ...


def _tensor_nodes(graph: ArtefactGraph) -> list[ArtefactNode]:
    out = []
    for node in (graph.nodes[i] for i in sorted(graph.nodes)):
        if node.node_type in (NodeType.COMPILER, NodeType.POLICY) and tensor_from_attrs(node.attributes) is not None:
            out.append(node)
    return out


@dataclass(frozen=True)
class WeightMergeOp:
    """Merge the weight tensors of two operator-model nodes."""

    alpha: float = 1.0
    kind: OperatorKind = OperatorKind.WM

    def apply(self, graph: ArtefactGraph, seed: int, env: EnvironmentProtocol) -> MutationOutcome:
        carriers = _tensor_nodes(graph)
        if not carriers:
            raise NoMergeableNodes("no compiler/policy node carries a merge tensor")
        rng = generator("wm", seed)
        target = carriers[int(rng.integers(len(carriers)))]
        if len(carriers) > 1:
            others = [n for n in carriers if n.id != target.id]
            donor = others[int(rng.integers(len(others)))]
        else:
            donor = target
        w_a = tensor_from_attrs(target.attributes)
        w_b = tensor_from_attrs(donor.attributes)
        merged, lam = weight_merge(w_a, w_b, self.alpha, derive_seed("wm-lam", seed))
        new_target = target.attrs_with(tensor_to_attrs(merged))
        out = graph.with_node(new_target)
        record = OperatorRecord.build(
            self.kind, True, {"target": target.id, "donor": donor.id, "lambda": lam}
        )
        return MutationOutcome(True, out.with_lineage(record), record)


@dataclass(frozen=True)
class CodePatchOp:
    """Perturb one code node's latent quality, gated by a logistic critic."""

    theta: tuple[float, float, float, float] = (-2.0, 3.5, 0.6, 1.0)
    force_accept: bool = False  # test hook: skip the Bernoulli gate
    kind: OperatorKind = OperatorKind.CP

    def apply(self, graph: ArtefactGraph, seed: int, env: EnvironmentProtocol) -> MutationOutcome:
        code = graph.nodes_of_type(NodeType.CODE)
        if not code:
            raise NoCodeNodes("code patch needs at least one code node")
        rng = generator("cp", seed)
        node = code[int(rng.integers(len(code)))]
        changes, features = env.patch_proposal(graph, node.id, derive_seed("cp-prop", seed))
        p = patch_acceptance(features, self.theta)
        accepted = True if self.force_accept else bool(rng.random() < p)
        params = {
            "node": node.id,
            "compile_ok": features.compile_ok,
            "static_delta": features.static_delta,
            "size_penalty": features.size_penalty,
        }
        params.update({f"set_{k}": v for k, v in changes.items()})
        record = OperatorRecord.build(self.kind, accepted, params, p_accept=p)
        if not accepted:
            return MutationOutcome(False, graph.with_lineage(record), record)
        out = graph.with_node(node.attrs_with(changes))
        return MutationOutcome(True, out.with_lineage(record), record)


@dataclass(frozen=True)
class DocSyncOp:
    """Regenerate a doc node from its paired code node's current content."""

    threshold: float = 0.8  # tau_D
    blend: float = 0.5
    kind: OperatorKind = OperatorKind.DS

    def apply(self, graph: ArtefactGraph, seed: int, env: EnvironmentProtocol) -> MutationOutcome:
        pairs = sorted(
            (src, dst)
            for src, dst, k in graph.edges
            if k is EdgeType.DOCUMENTS
            and src in graph.nodes
            and graph.nodes[src].node_type is NodeType.DOC
            and dst in graph.nodes
            and graph.nodes[dst].node_type is NodeType.CODE
        )
        if not pairs:
            raise NoDocPairs("doc sync needs a doc node paired to code via a documents edge")
        rng = generator("ds", seed)
        doc_id, code_id = pairs[int(rng.integers(len(pairs)))]
        doc = graph.nodes[doc_id]
        ref = list(env.doc_template(graph.nodes[code_id]))
        old = tokenize(str(doc.attributes.get("text", "")))
        new = list(ref)

        dim = graph.dim
        emb_ref = text_embedding(" ".join(ref), dim)
        f_old = freshness(ref, old, emb_ref, text_embedding(" ".join(old), dim), self.blend)
        f_new = freshness(ref, new, emb_ref, text_embedding(" ".join(new), dim), self.blend)
        accepted = f_new >= self.threshold and f_new >= f_old
        record = OperatorRecord.build(
            self.kind,
            accepted,
            {"doc": doc_id, "code": code_id, "freshness_old": f_old, "freshness_new": f_new},
        )
        if not accepted:
            return MutationOutcome(False, graph.with_lineage(record), record)
        out = graph.with_node(doc.attrs_with({"text": " ".join(new)}))
        return MutationOutcome(True, out.with_lineage(record), record)


@dataclass(frozen=True)
class BuildWeaveOp:
    """Toggle a build flag or add a dependency, keep it if repro holds up."""

    rebuilds: int = 4  # m
    kind: OperatorKind = OperatorKind.BW

    def apply(self, graph: ArtefactGraph, seed: int, env: EnvironmentProtocol) -> MutationOutcome:
        builds = graph.nodes_of_type(NodeType.BUILD)
        if not builds:
            raise NoBuildNodes("build weave needs at least one build node")
        rng = generator("bw", seed)
        node = builds[int(rng.integers(len(builds)))]
        if rng.random() < 0.5:
            action = "toggle_flag"
            changes: dict[str, Scalar] = {"hermetic": 1 - int(node.attributes.get("hermetic", 0))}
        else:
            action = "add_dep"
            changes = {"deps": int(node.attributes.get("deps", 0)) + 1}
        candidate = graph.with_node(node.attrs_with(changes))
        hashes = env.rebuild(candidate, self.rebuilds)
        repro = reproducibility(hashes)
        previous = float(graph.attributes.get("repro", 0.0))
        accepted = repro >= previous
        record = OperatorRecord.build(
            self.kind,
            accepted,
            {"node": node.id, "action": action, "repro": repro, "previous": previous},
        )
        if not accepted:
            return MutationOutcome(False, graph.with_lineage(record), record)
        out = candidate.with_graph_attrs({"repro": repro})
        return MutationOutcome(True, out.with_lineage(record), record)


@dataclass(frozen=True)
class TransmuteOp:
    """Translate one legacy code node, iterating until the pass rate holds.

    The repair loop is the pass-rate recurrence p <- p + (1 - p) * rho with
    per-node (p0, rho) supplied by the environment; acceptance requires
    reaching the threshold within the iteration budget.
    """

    threshold: float = 0.93
    max_iters: int = 8
    kind: OperatorKind = OperatorKind.TR

    def apply(self, graph: ArtefactGraph, seed: int, env: EnvironmentProtocol) -> MutationOutcome:
        legacy = [n for n in graph.nodes_of_type(NodeType.CODE) if str(n.attributes.get("legacy_lang", ""))]
        if not legacy:
            raise NoLegacyNodes("transmute needs a code node tagged with a legacy language")
        rng = generator("tr", seed)
        node = legacy[int(rng.integers(len(legacy)))]
        p0, rho = env.transmute_params(node.id)
        rate, iterations = transmute_pass_rates(p0, rho, self.threshold, self.max_iters)
        accepted = rate >= self.threshold
        record = OperatorRecord.build(
            self.kind,
            accepted,
            {
                "node": node.id,
                "source_lang": str(node.attributes.get("legacy_lang", "")),
                "p0": p0,
                "rho": rho,
                "iterations": iterations,
                "pass_rate": rate,
            },
        )
        if not accepted:
            return MutationOutcome(False, graph.with_lineage(record), record)
        out = graph.with_node(node.attrs_with({"legacy_lang": "", "pass_rate": rate}))
        return MutationOutcome(True, out.with_lineage(record), record)


def transmute_pass_rates(p0: float, rho: float, threshold: float, max_iters: int) -> tuple[float, int]:
    """Run the repair recurrence; returns (final rate, iterations used)."""
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"initial pass rate out of [0,1]: {p0}")
    if p0 < threshold and rho <= 0.0:
        raise NonPositiveImprovement(f"improvement factor {rho} cannot reach threshold {threshold}")
    rate = p0
    iterations = 0
    while rate < threshold and iterations < max_iters:
        rate = rate + (1.0 - rate) * rho
        iterations += 1
    return rate, iterations


def build_operators(config: OperatorConfig) -> dict[OperatorKind, MutationOperator]:
    """Instantiate the enabled operators from the run configuration."""
    table: dict[OperatorKind, MutationOperator] = {
        OperatorKind.WM: WeightMergeOp(alpha=config.merge_alpha),
        OperatorKind.CP: CodePatchOp(theta=config.patch_theta),
        OperatorKind.DS: DocSyncOp(threshold=config.doc_threshold, blend=config.doc_blend),
        OperatorKind.BW: BuildWeaveOp(rebuilds=config.rebuilds),
        OperatorKind.TR: TransmuteOp(
            threshold=config.transmute_threshold, max_iters=config.transmute_max_iters
        ),
    }
    return {k: table[k] for k in config.enabled_kinds()}
