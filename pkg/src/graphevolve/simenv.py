"""Synthetic legacy-estate environment.

Generates fixture graphs with a hidden quality landscape and answers every
query the evolution loop would otherwise send to live systems: metric
readings, behavioral probes, rebuild hashes, rollout rewards, translation
difficulty and doc regeneration templates. Every answer is a pure function
of (estate seed, graph content, query arguments), so runs are hermetic and
repeatable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import InvalidSpec
from .graph import ArtefactGraph, ArtefactNode, EdgeType, NodeType, Scalar, make_node
from .metrics import (
    NormalizationBounds,
    RawMetrics,
    fitness_vector,
    freshness,
    reproducibility,
    tokenize,
)
from .operators import PatchFeatures, tensor_from_attrs, tensor_to_attrs
from .rng import derive_seed, generator, text_embedding, unit_uniform

LEGACY_LANGS = ("cobol", "fortran", "perl", "vb6")

_VOCAB = (
    "ledger", "batch", "router", "cache", "queue", "session", "billing", "audit",
    "parser", "gateway", "report", "index", "stream", "quota", "token", "policy",
    "order", "invoice", "retry", "shard", "backup", "schema", "metricset", "probe",
)


@dataclass(frozen=True)
class EstateSpec:
    """Shape and latent parameters of a synthetic estate."""

    node_counts: dict[str, int] = field(default_factory=dict)
    edge_density: dict[str, float] = field(
        default_factory=lambda: {
            "calls": 1.6,
            "generates": 0.5,
            "derived_from": 0.1,
            "builds": 5.0,
            "documents": 1.0,
            "depends_on": 0.8,
            "emits_metric": 0.5,
            "dynamic_call": 0.3,
        }
    )
    dim: int = 16
    quality_range: tuple[float, float] = (0.3, 0.6)
    legacy_fraction: float = 0.15
    doc_stale_fraction: float = 0.5
    probe_count: int = 40
    flakiness: float = 0.08
    hermetic_gain: float = 0.8  # how much a hermetic build flag damps flakiness
    init_rebuilds: int = 4
    # latency latent model: P = max(floor, base - gain * sum(quality)) * shock
    latency_base: float = 520.0
    latency_gain: float = 4.5
    latency_floor: float = 100.0
    bounds: tuple[float, float] = (100.0, 500.0)
    tensor_shape: tuple[int, int] = (4, 4)
    tensor_noise: float = 0.6
    patch_delta: tuple[float, float] = (-0.04, 0.12)
    compile_ok_rate: float = 0.9
    transmute_p0: tuple[float, float] = (0.45, 0.8)
    transmute_rho: tuple[float, float] = (0.25, 0.6)
    reward_weights: tuple[float, ...] = (0.3, 0.2, 0.2, 0.1, 0.1, 0.1)
    reward_noise: float = 0.01  # sigma
    metric_noise: float = 0.01

    def validate(self) -> None:
        for key, count in self.node_counts.items():
            try:
                NodeType(key)
            except ValueError:
                raise InvalidSpec(f"node_counts: unknown node type {key!r}") from None
            if count < 0:
                raise InvalidSpec(f"node_counts.{key}: negative count {count}")
        for name, value in (
            ("legacy_fraction", self.legacy_fraction),
            ("doc_stale_fraction", self.doc_stale_fraction),
            ("flakiness", self.flakiness),
            ("compile_ok_rate", self.compile_ok_rate),
        ):
            if not 0.0 <= value <= 1.0:
                raise InvalidSpec(f"{name} out of [0,1]: {value}")
        if self.probe_count < 0:
            raise InvalidSpec(f"probe_count negative: {self.probe_count}")
        if not self.bounds[0] < self.bounds[1]:
            raise InvalidSpec(f"latency bounds not ordered: {self.bounds}")
        if len(self.reward_weights) != 6:
            raise InvalidSpec("reward_weights must have 6 components")
        if any(w < 0 for w in self.reward_weights) or sum(self.reward_weights) <= 0:
            raise InvalidSpec("reward_weights must be non-negative and not all zero")
        if self.reward_noise < 0 or self.metric_noise < 0:
            raise InvalidSpec("noise levels must be non-negative")


def reference_spec() -> EstateSpec:
    return EstateSpec(
        node_counts={
            "code": 60, "doc": 20, "build": 8, "compiler": 2, "test": 10, "schema": 4,
            "policy": 2, "ticket": 8, "ui": 3, "log": 3, "metric": 6, "data": 4,
        },
        doc_stale_fraction=0.35,
    )


def minimal_spec() -> EstateSpec:
    # few nodes, so each code node carries real latency weight
    return replace(
        reference_spec(),
        node_counts={
            "code": 6, "doc": 3, "build": 2, "compiler": 2, "test": 1, "schema": 1,
            "policy": 1, "ticket": 1, "metric": 1,
        },
        probe_count=10,
        flakiness=0.0,
        legacy_fraction=0.34,
        latency_base=420.0,
        latency_gain=12.0,
    )


PRESETS = {
    "reference": reference_spec,
    "minimal": minimal_spec,
    "flaky-build": lambda: replace(reference_spec(), flakiness=0.35),
    "latency-shock": lambda: replace(reference_spec(), latency_base=600.0),
}


def get_preset(name: str) -> EstateSpec:
    if name not in PRESETS:
        raise InvalidSpec(f"unknown estate preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[name]()


class EnvironmentHandle:
    """Oracle for one generated estate.

    Read-only during a generation; environment shocks mutate the handle only
    at generation barriers and bump a state version that invalidates the
    metric cache.
    """

    def __init__(self, spec: EstateSpec, seed: int, probes: list[tuple[str, float]], target_tensor: np.ndarray):
        self.spec = spec
        self.seed = seed
        self.probe_defs = probes
        self.target_tensor = target_tensor
        self.bounds = NormalizationBounds(*spec.bounds)
        w = np.asarray(spec.reward_weights, dtype=float)
        self._reward_w = w / w.sum()
        self.latency_factor = 1.0
        self.state_version = 0
        self._metric_cache: dict[tuple[int, str], RawMetrics] = {}
        self._probe_cache: dict[tuple[int, str], tuple[bool, ...]] = {}

    # -- state ---------------------------------------------------------------

    def apply_shock(self, kind: str, factor: float) -> None:
        if kind != "latency_spike":
            raise InvalidSpec(f"unknown environment shock {kind!r}")
        self.latency_factor *= factor
        self.state_version += 1

    # -- latent metric model --------------------------------------------------

    def metrics(self, graph: ArtefactGraph) -> RawMetrics:
        key = (self.state_version, graph.content_hash())
        cached = self._metric_cache.get(key)
        if cached is not None:
            return cached

        code = graph.nodes_of_type(NodeType.CODE)
        qualities = [float(n.attributes.get("quality", 0.0)) for n in code]
        mean_q = sum(qualities) / len(qualities) if qualities else 0.0
        legacy = sum(1 for n in code if str(n.attributes.get("legacy_lang", ""))) / len(code) if code else 0.0

        noise_u = self._structure_noise(graph, "u")
        noise_b = self._structure_noise(graph, "b")

        u = _clamp01(0.2 + 0.65 * mean_q - 0.25 * legacy + noise_u)
        p = max(self.spec.latency_floor, self.spec.latency_base - self.spec.latency_gain * sum(qualities))
        p *= self.latency_factor
        s = _clamp01(0.25 + 0.6 * self._tensor_closeness(graph) + 0.15 * mean_q)
        b = _clamp01(0.18 + 0.55 * mean_q + 0.22 * (1.0 - legacy) + noise_b)
        d = self._doc_freshness(graph)
        c = _clamp01(float(graph.attributes.get("repro", 0.0)))

        raw = RawMetrics(U=u, P=p, S=s, B=b, D=d, C=c)
        self._metric_cache[key] = raw
        return raw

    def test_rate(self, graph: ArtefactGraph) -> float:
        """Pass rate of the estate's regression suite for this graph."""
        code = graph.nodes_of_type(NodeType.CODE)
        qualities = [float(n.attributes.get("quality", 0.0)) for n in code]
        mean_q = sum(qualities) / len(qualities) if qualities else 0.0
        legacy = sum(1 for n in code if str(n.attributes.get("legacy_lang", ""))) / len(code) if code else 0.0
        return _clamp01(0.82 + 0.2 * mean_q - 0.15 * legacy)

    def _tensor_closeness(self, graph: ArtefactGraph) -> float:
        scores = []
        scale = float(np.sqrt(self.target_tensor.size))
        for node in (graph.nodes[i] for i in sorted(graph.nodes)):
            if node.node_type not in (NodeType.COMPILER, NodeType.POLICY):
                continue
            tensor = tensor_from_attrs(node.attributes)
            if tensor is None or tensor.shape != self.target_tensor.shape:
                continue
            err = float(np.linalg.norm(tensor - self.target_tensor))
            scores.append(max(0.0, 1.0 - err / scale))
        return sum(scores) / len(scores) if scores else 0.0

    def _doc_freshness(self, graph: ArtefactGraph) -> float:
        pair_of = {
            src: dst
            for src, dst, k in graph.edges
            if k is EdgeType.DOCUMENTS and src in graph.nodes and dst in graph.nodes
        }
        docs = graph.nodes_of_type(NodeType.DOC)
        if not docs:
            return 1.0
        total = 0.0
        for doc in docs:
            code_id = pair_of.get(doc.id)
            if code_id is None or graph.nodes[code_id].node_type is not NodeType.CODE:
                continue  # undocumented pairing counts as fully stale (0)
            ref = list(self.doc_template(graph.nodes[code_id]))
            cand = tokenize(str(doc.attributes.get("text", "")))
            total += self._freshness_cached(tuple(ref), tuple(cand), graph.dim)
        return total / len(docs)

    @staticmethod
    def _freshness_cached(ref: tuple[str, ...], cand: tuple[str, ...], dim: int) -> float:
        return _freshness_of(ref, cand, dim)

    def _structure_noise(self, graph: ArtefactGraph, tag: str) -> float:
        """Deterministic jitter from the graph's *structure* only.

        Latent attributes are excluded from the hash on purpose: quality
        changes must move metrics monotonically, so the jitter cannot follow
        them.
        """
        material = ";".join(
            f"{i}:{graph.nodes[i].node_type.value}" for i in sorted(graph.nodes)
        ) + "|" + ";".join(sorted(f"{s}->{d}:{k.value}" for s, d, k in graph.edges))
        h = hashlib.sha256(material.encode()).hexdigest()
        return (unit_uniform("mnoise", self.seed, tag, h) * 2.0 - 1.0) * self.spec.metric_noise

    # -- oracle queries ---------------------------------------------------------

    def probes(self, graph: ArtefactGraph) -> list[bool]:
        key = (self.state_version, graph.content_hash())
        cached = self._probe_cache.get(key)
        if cached is None:
            results = []
            for node_id, threshold in self.probe_defs:
                node = graph.nodes.get(node_id)
                ok = node is not None and float(node.attributes.get("quality", 0.0)) >= threshold
                results.append(ok)
            cached = tuple(results)
            self._probe_cache[key] = cached
        return list(cached)

    def rebuild(self, graph: ArtefactGraph, m: int) -> list[str]:
        """Simulated rebuild hashes; divergence odds shrink on hermetic builds."""
        builds = graph.nodes_of_type(NodeType.BUILD)
        config = ";".join(
            f"{n.id}={sorted(n.attributes.items())!r}" for n in builds
        )
        config_hash = hashlib.sha256((str(self.seed) + "|" + config).encode()).hexdigest()
        hermetic = (
            sum(float(n.attributes.get("hermetic", 0)) for n in builds) / len(builds)
            if builds
            else 0.0
        )
        f_eff = self.spec.flakiness * (1.0 - self.spec.hermetic_gain * hermetic)
        hashes = []
        for i in range(m):
            if unit_uniform("rebuild", self.seed, config_hash, i) < f_eff:
                hashes.append(hashlib.sha256(f"{config_hash}|div|{i}".encode()).hexdigest())
            else:
                hashes.append(config_hash)
        return hashes

    def reward(self, graph: ArtefactGraph) -> float:
        """Post-rollout scalar KPI: hidden weights dotted with fitness, plus noise."""
        f = fitness_vector(self.metrics(graph), self.bounds).as_array()
        base = float(self._reward_w @ f)
        noise = float(
            generator("reward-noise", self.seed, graph.content_hash()).standard_normal()
        ) * self.spec.reward_noise
        return _clamp01(base + noise)

    def transmute_params(self, node_id: str) -> tuple[float, float]:
        lo, hi = self.spec.transmute_p0
        p0 = lo + (hi - lo) * unit_uniform("tr-p0", self.seed, node_id)
        lo, hi = self.spec.transmute_rho
        rho = lo + (hi - lo) * unit_uniform("tr-rho", self.seed, node_id)
        return p0, rho

    def doc_template(self, code_node: ArtefactNode) -> tuple[str, ...]:
        """Reference documentation tokens for a code node's current content."""
        quality = float(code_node.attributes.get("quality", 0.0))
        lang = str(code_node.attributes.get("legacy_lang", "")) or "modern"
        words = [
            _VOCAB[derive_seed("vocab", self.seed, code_node.id, i) % len(_VOCAB)]
            for i in range(4)
        ]
        return (
            "module", code_node.id, "language", lang,
            "tier", str(int(round(quality * 2))),
            "covers", *words,
        )

    def patch_proposal(self, graph: ArtefactGraph, node_id: str, seed: int) -> tuple[dict, PatchFeatures]:
        """Draft one quality patch for a code node plus its critic features."""
        node = graph.nodes[node_id]
        rng = generator("patch", self.seed, node_id, seed)
        lo, hi = self.spec.patch_delta
        delta = lo + (hi - lo) * float(rng.random())
        compile_ok = 1 if float(rng.random()) < self.spec.compile_ok_rate else 0
        if not compile_ok:
            delta = -abs(delta) - 0.05  # a broken patch hurts if it lands
        quality = float(node.attributes.get("quality", 0.0))
        new_quality = _clamp01(quality + delta)
        static_delta = round(delta * 20.0, 6)
        size_penalty = float(rng.integers(5, 61)) / 100.0
        return (
            {"quality": new_quality},
            PatchFeatures(compile_ok=compile_ok, static_delta=static_delta, size_penalty=size_penalty),
        )


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


@lru_cache(maxsize=100_000)
def _freshness_of(ref: tuple[str, ...], cand: tuple[str, ...], dim: int) -> float:
    # pure in its arguments, so one cache serves every environment
    return freshness(
        list(ref), list(cand),
        text_embedding(" ".join(ref), dim), text_embedding(" ".join(cand), dim),
    )


# -- estate generation ------------------------------------------------------------


def generate_estate(spec: EstateSpec, seed: int) -> tuple[ArtefactGraph, EnvironmentHandle]:
    """Build the initial production graph and its environment oracle."""
    spec.validate()
    rng = generator("estate", seed)
    graph = ArtefactGraph(dim=spec.dim)

    target_tensor = (
        generator("estate-target", seed).random(spec.tensor_shape) * 2.0 - 1.0
    )

    ids_by_type: dict[NodeType, list[str]] = {t: [] for t in NodeType}
    for node_type in NodeType:
        count = int(spec.node_counts.get(node_type.value, 0))
        for i in range(count):
            node_id = f"{node_type.value}{i:03d}"
            attrs = _initial_attrs(spec, seed, node_type, node_id, i, rng, target_tensor)
            locked = node_type is NodeType.POLICY and i == 0  # one human-pinned policy node
            graph = graph.add_node(make_node(node_id, node_type, attrs, locked=locked, dim=spec.dim))
            ids_by_type[node_type].append(node_id)

    graph = _wire_edges(graph, spec, seed, ids_by_type)
    graph = _write_doc_texts(graph, spec, seed, ids_by_type)

    probes = _make_probes(graph, spec, seed, ids_by_type[NodeType.CODE])
    env = EnvironmentHandle(spec, seed, probes, target_tensor)

    # measured baselines live on the graph so fitness and descriptors see them
    repro = reproducibility(env.rebuild(graph, spec.init_rebuilds))
    raw_p = env.metrics(graph.with_graph_attrs({"repro": repro})).P
    latency_norm = (raw_p - env.bounds.p_min) / (env.bounds.p_max - env.bounds.p_min)
    graph = graph.with_graph_attrs(
        {"repro": repro, "latency_norm": min(1.0, max(0.0, latency_norm))}
    )
    return graph, env


def _initial_attrs(
    spec: EstateSpec,
    seed: int,
    node_type: NodeType,
    node_id: str,
    index: int,
    rng: np.random.Generator,
    target_tensor: np.ndarray,
) -> dict[str, Scalar]:
    if node_type is NodeType.CODE:
        lo, hi = spec.quality_range
        attrs: dict[str, Scalar] = {"quality": round(lo + (hi - lo) * float(rng.random()), 6)}
        if float(rng.random()) < spec.legacy_fraction:
            attrs["legacy_lang"] = LEGACY_LANGS[int(rng.integers(len(LEGACY_LANGS)))]
        return attrs
    if node_type is NodeType.BUILD:
        return {"hermetic": 0, "deps": int(rng.integers(2, 9))}
    if node_type in (NodeType.COMPILER, NodeType.POLICY):
        noise = (rng.random(spec.tensor_shape) * 2.0 - 1.0) * spec.tensor_noise
        return tensor_to_attrs(target_tensor + noise)
    if node_type is NodeType.DOC:
        return {"text": ""}  # filled after pairing
    if node_type is NodeType.TICKET:
        return {"status": "open", "priority": int(rng.integers(1, 4))}
    return {}


def _wire_edges(
    graph: ArtefactGraph, spec: EstateSpec, seed: int, ids: dict[NodeType, list[str]]
) -> ArtefactGraph:
    rng = generator("estate-edges", seed)
    density = spec.edge_density
    code = ids[NodeType.CODE]

    def pick(pool: list[str]) -> str:
        return pool[int(rng.integers(len(pool)))]

    if len(code) > 1:
        for kind, key in ((EdgeType.CALLS, "calls"), (EdgeType.DYNAMIC_CALL, "dynamic_call"), (EdgeType.DERIVED_FROM, "derived_from")):
            for _ in range(int(round(density.get(key, 0.0) * len(code)))):
                src, dst = pick(code), pick(code)
                if src != dst:
                    graph = graph.add_edge(src, dst, kind)
    for _ in range(int(round(density.get("depends_on", 0.0) * len(code)))):
        if not code:
            break
        src = pick(code)
        dst = src if rng.random() < 0.1 else pick(code)  # self-dependency is legal
        graph = graph.add_edge(src, dst, EdgeType.DEPENDS_ON)
    for i, doc_id in enumerate(ids[NodeType.DOC]):
        if code:
            graph = graph.add_edge(doc_id, code[i % len(code)], EdgeType.DOCUMENTS)
    for build_id in ids[NodeType.BUILD]:
        for _ in range(int(round(density.get("builds", 0.0)))):
            if code:
                graph = graph.add_edge(build_id, pick(code), EdgeType.BUILDS)
    for comp_id in ids[NodeType.COMPILER]:
        for _ in range(int(round(density.get("generates", 0.0) * max(1, len(code)) / max(1, len(ids[NodeType.COMPILER]))))):
            if code:
                graph = graph.add_edge(comp_id, pick(code), EdgeType.GENERATES)
    metric_ids = ids[NodeType.METRIC]
    if metric_ids:
        for _ in range(int(round(density.get("emits_metric", 0.0) * len(code)))):
            if code:
                graph = graph.add_edge(pick(code), pick(metric_ids), EdgeType.EMITS_METRIC)
    return graph


def _write_doc_texts(
    graph: ArtefactGraph, spec: EstateSpec, seed: int, ids: dict[NodeType, list[str]]
) -> ArtefactGraph:
    """Fill doc node text: a share of docs start stale, the rest fresh."""
    pair_of = {
        src: dst for src, dst, k in graph.edges if k is EdgeType.DOCUMENTS
    }
    # template logic must match the handle's; build a throwaway oracle
    env = EnvironmentHandle(spec, seed, [], np.zeros(spec.tensor_shape))
    for i, doc_id in enumerate(ids[NodeType.DOC]):
        code_id = pair_of.get(doc_id)
        if code_id is None:
            continue
        tokens = list(env.doc_template(graph.nodes[code_id]))
        if unit_uniform("stale", seed, doc_id) < spec.doc_stale_fraction:
            # stale docs lost half their content and picked up noise words
            kept = tokens[::2]
            filler = [_VOCAB[derive_seed("stale-w", seed, doc_id, j) % len(_VOCAB)] for j in range(3)]
            text = " ".join(kept + ["deprecated"] + filler)
        else:
            text = " ".join(tokens)
        graph = graph.with_node(graph.nodes[doc_id].attrs_with({"text": text}))
    return graph


def _make_probes(
    graph: ArtefactGraph, spec: EstateSpec, seed: int, code_ids: list[str]
) -> list[tuple[str, float]]:
    """Behavioral probes: business rules tied to a code node's latent quality.

    Thresholds start strictly below the node's initial quality, so the
    baseline estate passes every probe; later quality drops can flip them.
    """
    if not code_ids or spec.probe_count == 0:
        return []
    rng = generator("estate-probes", seed)
    probes = []
    for _ in range(spec.probe_count):
        node_id = code_ids[int(rng.integers(len(code_ids)))]
        quality = float(graph.nodes[node_id].attributes.get("quality", 0.0))
        # well below initial quality: only a serious regression flips a probe
        threshold = quality * (0.15 + 0.35 * float(rng.random()))
        probes.append((node_id, round(threshold, 6)))
    return probes
