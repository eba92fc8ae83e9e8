"""Typed directed graph of software artefacts.

Graphs are value-like: every operation returns a new graph and never touches
its input, so graph values are safe to share across threads. Node and edge
types are closed sets; serialization is canonical (sorted nodes, edges and
attribute keys) so equal graphs always produce identical bytes.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Union

from .errors import (
    DuplicateId,
    EmbeddingDimensionMismatch,
    IllegalSelfLoop,
    MalformedInput,
    UnknownEndpoint,
)
from .rng import pseudo_embedding

Scalar = Union[str, int, float, bool]

DEFAULT_DIM = 16


class NodeType(enum.Enum):
    CODE = "code"
    DOC = "doc"
    BUILD = "build"
    COMPILER = "compiler"
    TEST = "test"
    SCHEMA = "schema"
    POLICY = "policy"
    TICKET = "ticket"
    UI = "ui"
    LOG = "log"
    METRIC = "metric"
    DATA = "data"


class EdgeType(enum.Enum):
    CALLS = "calls"
    GENERATES = "generates"
    DERIVED_FROM = "derived_from"
    BUILDS = "builds"
    DOCUMENTS = "documents"
    DEPENDS_ON = "depends_on"
    EMITS_METRIC = "emits_metric"
    # runtime-trace provenance, distinct from static `calls`
    DYNAMIC_CALL = "dynamic_call"


NODE_TYPE_ORDER = tuple(NodeType)

# a module may depend on its own prior version slice; every other self-loop
# is a degenerate cycle and rejected
SELF_LOOP_ALLOWED = frozenset({EdgeType.DEPENDS_ON})

Edge = tuple[str, str, EdgeType]


@dataclass(frozen=True)
class ArtefactNode:
    """One artefact: code file, doc section, build script, ticket, ..."""

    id: str
    node_type: NodeType
    embedding: tuple[float, ...]
    attributes: Mapping[str, Scalar] = field(default_factory=dict)
    locked: bool = False

    def attrs_with(self, changes: Mapping[str, Scalar], dim: int | None = None) -> "ArtefactNode":
        """Copy of this node with updated attributes and a refreshed embedding.

        The embedding tracks (id, attributes) like the rest of the system's
        pseudo-encoder; pass dim=None to keep the stored embedding length.
        """
        attrs = dict(self.attributes)
        attrs.update(changes)
        d = dim if dim is not None else len(self.embedding)
        return replace(self, attributes=attrs, embedding=node_embedding(self.id, attrs, d))


def node_embedding(node_id: str, attributes: Mapping[str, Scalar], dim: int) -> tuple[float, ...]:
    """Pseudo-embedding of a node from its id and attribute content."""
    key = node_id + "|" + json.dumps({k: attributes[k] for k in sorted(attributes)}, sort_keys=True)
    return pseudo_embedding(key, dim)


def make_node(
    node_id: str,
    node_type: NodeType,
    attributes: Mapping[str, Scalar] | None = None,
    locked: bool = False,
    dim: int = DEFAULT_DIM,
) -> ArtefactNode:
    attrs = dict(attributes or {})
    return ArtefactNode(node_id, node_type, node_embedding(node_id, attrs, dim), attrs, locked)


@dataclass(frozen=True)
class BehaviorDescriptor:
    """Numeric summary used for novelty distances.

    12 node-type histogram slots (normalized to sum 1, all-zero when the
    graph is empty) followed by a 2-slot performance signature.
    """

    type_histogram: tuple[float, ...]
    perf_signature: tuple[float, float]

    def vector(self) -> tuple[float, ...]:
        return self.type_histogram + self.perf_signature


class ArtefactGraph:
    """Immutable typed directed graph value.

    Mutation-style methods return new graphs sharing unchanged node objects
    with their parent, so copies are cheap. `attributes` is a graph-level
    scalar map for evaluation state such as measured reproducibility.
    """

    __slots__ = (
        "dim",
        "nodes",
        "edges",
        "attributes",
        "generation_born",
        "lineage",
        "graph_id",
        "_canonical",
        "_content_hash",
    )

    def __init__(
        self,
        dim: int = DEFAULT_DIM,
        nodes: Mapping[str, ArtefactNode] | None = None,
        edges: Iterable[Edge] | None = None,
        attributes: Mapping[str, Scalar] | None = None,
        generation_born: int = 0,
        lineage: tuple = (),
        graph_id: str = "g0",
    ):
        self.dim = dim
        self.nodes: dict[str, ArtefactNode] = dict(nodes or {})
        self.edges: frozenset[Edge] = frozenset(edges or ())
        self.attributes: dict[str, Scalar] = dict(attributes or {})
        self.generation_born = generation_born
        self.lineage: tuple = tuple(lineage)
        self.graph_id = graph_id
        self._canonical: bytes | None = None
        self._content_hash: str | None = None

    # -- construction helpers ---------------------------------------------

    def _clone(self, **over) -> "ArtefactGraph":
        kw = dict(
            dim=self.dim,
            nodes=self.nodes,
            edges=self.edges,
            attributes=self.attributes,
            generation_born=self.generation_born,
            lineage=self.lineage,
            graph_id=self.graph_id,
        )
        kw.update(over)
        return ArtefactGraph(**kw)

    def add_node(self, node: ArtefactNode) -> "ArtefactGraph":
        if node.id in self.nodes:
            raise DuplicateId(f"node id {node.id!r} already present")
        if len(node.embedding) != self.dim:
            raise EmbeddingDimensionMismatch(
                f"node {node.id!r}: embedding length {len(node.embedding)} != graph dim {self.dim}"
            )
        nodes = dict(self.nodes)
        nodes[node.id] = node
        return self._clone(nodes=nodes)

    def add_edge(self, src: str, dst: str, kind: EdgeType) -> "ArtefactGraph":
        for endpoint in (src, dst):
            if endpoint not in self.nodes:
                raise UnknownEndpoint(f"edge endpoint {endpoint!r} not in graph")
        if src == dst and kind not in SELF_LOOP_ALLOWED:
            raise IllegalSelfLoop(f"self-loop on {src!r} illegal for edge type {kind.value}")
        edge = (src, dst, kind)
        if edge in self.edges:
            return self  # idempotent
        return self._clone(edges=self.edges | {edge})

    def with_node(self, node: ArtefactNode) -> "ArtefactGraph":
        """Replace an existing node (same id) with a new version."""
        if node.id not in self.nodes:
            raise UnknownEndpoint(f"cannot replace unknown node {node.id!r}")
        if len(node.embedding) != self.dim:
            raise EmbeddingDimensionMismatch(
                f"node {node.id!r}: embedding length {len(node.embedding)} != graph dim {self.dim}"
            )
        nodes = dict(self.nodes)
        nodes[node.id] = node
        return self._clone(nodes=nodes)

    def remove_node(self, node_id: str) -> "ArtefactGraph":
        if node_id not in self.nodes:
            raise UnknownEndpoint(f"cannot remove unknown node {node_id!r}")
        nodes = dict(self.nodes)
        del nodes[node_id]
        edges = frozenset(e for e in self.edges if e[0] != node_id and e[1] != node_id)
        return self._clone(nodes=nodes, edges=edges)

    def remove_edge(self, src: str, dst: str, kind: EdgeType) -> "ArtefactGraph":
        edge = (src, dst, kind)
        if edge not in self.edges:
            return self
        return self._clone(edges=self.edges - {edge})

    def with_graph_attrs(self, changes: Mapping[str, Scalar]) -> "ArtefactGraph":
        attrs = dict(self.attributes)
        attrs.update(changes)
        return self._clone(attributes=attrs)

    def with_lineage(self, record, generation: int | None = None, graph_id: str | None = None) -> "ArtefactGraph":
        return self._clone(
            lineage=self.lineage + (record,),
            generation_born=self.generation_born if generation is None else generation,
            graph_id=self.graph_id if graph_id is None else graph_id,
        )

    def with_identity(self, graph_id: str, generation_born: int) -> "ArtefactGraph":
        return self._clone(graph_id=graph_id, generation_born=generation_born)

    # -- queries ------------------------------------------------------------

    def nodes_of_type(self, node_type: NodeType) -> list[ArtefactNode]:
        return [self.nodes[i] for i in sorted(self.nodes) if self.nodes[i].node_type is node_type]

    def descriptor(self) -> BehaviorDescriptor:
        """Node-type histogram plus the stored performance signature.

        The performance slots read the graph attributes `latency_norm` and
        `repro`, defaulting to 0 when the graph has not been evaluated yet.
        """
        counts = [0] * len(NODE_TYPE_ORDER)
        for node in self.nodes.values():
            counts[NODE_TYPE_ORDER.index(node.node_type)] += 1
        total = sum(counts)
        hist = tuple(c / total for c in counts) if total else tuple([0.0] * len(NODE_TYPE_ORDER))
        perf = (
            float(self.attributes.get("latency_norm", 0.0)),
            float(self.attributes.get("repro", 0.0)),
        )
        return BehaviorDescriptor(hist, perf)

    # -- identity -----------------------------------------------------------

    def canonical_bytes(self) -> bytes:
        if self._canonical is None:
            self._canonical = serialize(self)
        return self._canonical

    def content_hash(self) -> str:
        if self._content_hash is None:
            self._content_hash = hashlib.sha256(self.canonical_bytes()).hexdigest()
        return self._content_hash

    def __eq__(self, other) -> bool:
        if not isinstance(other, ArtefactGraph):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.nodes == other.nodes
            and self.edges == other.edges
            and self.attributes == other.attributes
        )

    def __hash__(self):
        return hash(self.content_hash())

    def __repr__(self):
        return f"ArtefactGraph(id={self.graph_id!r}, nodes={len(self.nodes)}, edges={len(self.edges)})"


@dataclass
class GraphDelta:
    """Difference between two graphs; apply(delta, a) reconstructs b."""

    nodes_added: list[ArtefactNode] = field(default_factory=list)
    nodes_removed: list[str] = field(default_factory=list)
    nodes_changed: list[ArtefactNode] = field(default_factory=list)
    edges_added: list[Edge] = field(default_factory=list)
    edges_removed: list[Edge] = field(default_factory=list)
    attrs_set: dict[str, Scalar] = field(default_factory=dict)
    attrs_removed: list[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (
            self.nodes_added
            or self.nodes_removed
            or self.nodes_changed
            or self.edges_added
            or self.edges_removed
            or self.attrs_set
            or self.attrs_removed
        )


def diff(a: ArtefactGraph, b: ArtefactGraph) -> GraphDelta:
    """Delta over logical content; lineage and generation are bookkeeping."""
    delta = GraphDelta()
    for nid in sorted(b.nodes.keys() - a.nodes.keys()):
        delta.nodes_added.append(b.nodes[nid])
    for nid in sorted(a.nodes.keys() - b.nodes.keys()):
        delta.nodes_removed.append(nid)
    for nid in sorted(a.nodes.keys() & b.nodes.keys()):
        if a.nodes[nid] != b.nodes[nid]:
            delta.nodes_changed.append(b.nodes[nid])
    delta.edges_added = sorted(
        (e for e in b.edges - a.edges), key=lambda e: (e[0], e[1], e[2].value)
    )
    delta.edges_removed = sorted(
        (e for e in a.edges - b.edges), key=lambda e: (e[0], e[1], e[2].value)
    )
    for key in sorted(set(a.attributes) | set(b.attributes)):
        if key not in b.attributes:
            delta.attrs_removed.append(key)
        elif a.attributes.get(key) != b.attributes[key]:
            delta.attrs_set[key] = b.attributes[key]
    return delta


def apply_delta(delta: GraphDelta, a: ArtefactGraph) -> ArtefactGraph:
    nodes = dict(a.nodes)
    for nid in delta.nodes_removed:
        nodes.pop(nid, None)
    for node in delta.nodes_added:
        nodes[node.id] = node
    for node in delta.nodes_changed:
        nodes[node.id] = node
    edges = set(e for e in a.edges if e[0] in nodes and e[1] in nodes)
    edges -= set(delta.edges_removed)
    edges |= set(delta.edges_added)
    attrs = dict(a.attributes)
    for key in delta.attrs_removed:
        attrs.pop(key, None)
    attrs.update(delta.attrs_set)
    return ArtefactGraph(
        dim=a.dim,
        nodes=nodes,
        edges=edges,
        attributes=attrs,
        generation_born=a.generation_born,
        lineage=a.lineage,
        graph_id=a.graph_id,
    )


# -- serialization ----------------------------------------------------------

FORMAT_VERSION = 1


def serialize(graph: ArtefactGraph) -> bytes:
    """Canonical UTF-8 JSON bytes of the graph's logical content.

    Nodes sort by id and edges by (src, dst, kind) so two serializations of
    equal graphs are byte-identical, which build reproducibility checks rely
    on. Lineage and generation bookkeeping are intentionally not part of the
    format.
    """
    doc = {
        "version": FORMAT_VERSION,
        "dim": graph.dim,
        "attributes": {k: graph.attributes[k] for k in sorted(graph.attributes)},
        "nodes": [
            {
                "id": n.id,
                "type": n.node_type.value,
                "embedding": list(n.embedding),
                "attributes": {k: n.attributes[k] for k in sorted(n.attributes)},
                "locked": n.locked,
            }
            for n in (graph.nodes[i] for i in sorted(graph.nodes))
        ],
        "edges": [
            {"src": s, "dst": d, "kind": k.value}
            for s, d, k in sorted(graph.edges, key=lambda e: (e[0], e[1], e[2].value))
        ],
    }
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def deserialize(data: bytes) -> ArtefactGraph:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedInput(f"not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedInput("top level: expected a JSON object")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise MalformedInput(f"version: expected {FORMAT_VERSION}, got {version!r}")
    dim = doc.get("dim")
    if not isinstance(dim, int) or dim <= 0:
        raise MalformedInput(f"dim: expected positive integer, got {dim!r}")

    graph = ArtefactGraph(dim=dim, attributes=_check_attrs(doc.get("attributes", {}), "attributes"))
    for idx, raw in enumerate(doc.get("nodes", [])):
        where = f"nodes[{idx}]"
        if not isinstance(raw, dict):
            raise MalformedInput(f"{where}: expected object")
        nid = raw.get("id")
        if not isinstance(nid, str) or not nid:
            raise MalformedInput(f"{where}.id: expected non-empty string")
        try:
            ntype = NodeType(raw.get("type"))
        except ValueError:
            raise MalformedInput(f"{where}.type: unknown node type {raw.get('type')!r}") from None
        emb = raw.get("embedding")
        if not isinstance(emb, list) or not all(isinstance(x, (int, float)) for x in emb):
            raise MalformedInput(f"{where}.embedding: expected list of numbers")
        node = ArtefactNode(
            nid,
            ntype,
            tuple(float(x) for x in emb),
            _check_attrs(raw.get("attributes", {}), f"{where}.attributes"),
            bool(raw.get("locked", False)),
        )
        try:
            graph = graph.add_node(node)
        except (DuplicateId, EmbeddingDimensionMismatch) as exc:
            raise MalformedInput(f"{where}: {exc}") from exc
    for idx, raw in enumerate(doc.get("edges", [])):
        where = f"edges[{idx}]"
        if not isinstance(raw, dict):
            raise MalformedInput(f"{where}: expected object")
        try:
            kind = EdgeType(raw.get("kind"))
        except ValueError:
            raise MalformedInput(f"{where}.kind: unknown edge type {raw.get('kind')!r}") from None
        try:
            graph = graph.add_edge(raw.get("src"), raw.get("dst"), kind)
        except (UnknownEndpoint, IllegalSelfLoop) as exc:
            raise MalformedInput(f"{where}: {exc}") from exc
    return graph


def _check_attrs(raw: object, where: str) -> dict[str, Scalar]:
    if not isinstance(raw, dict):
        raise MalformedInput(f"{where}: expected object")
    out: dict[str, Scalar] = {}
    for key, value in raw.items():
        if not isinstance(key, str):
            raise MalformedInput(f"{where}: non-string key {key!r}")
        if not isinstance(value, (str, int, float, bool)):
            raise MalformedInput(f"{where}.{key}: expected scalar, got {type(value).__name__}")
        out[key] = value
    return out
