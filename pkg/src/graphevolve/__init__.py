"""graphevolve: safety-gated multi-objective evolution of artefact graphs."""

from .bandit import BanditState, bandit_update, project_simplex
from .engine import (
    Ablations,
    EngineConfig,
    EngineEvent,
    GenerationRecord,
    RolloutState,
    RunResult,
    best,
    run,
)
from .graph import (
    ArtefactGraph,
    ArtefactNode,
    BehaviorDescriptor,
    EdgeType,
    GraphDelta,
    NodeType,
    apply_delta,
    deserialize,
    diff,
    make_node,
    serialize,
)
from .metrics import (
    FitnessVector,
    NormalizationBounds,
    RawMetrics,
    aggregate_utility,
    discounted_return,
    fitness_vector,
    freshness,
    normalize_latency,
    reproducibility,
    rouge_l,
)
from .operators import (
    MutationOutcome,
    OperatorConfig,
    OperatorKind,
    PatchFeatures,
    align,
    build_operators,
    patch_acceptance,
    sample_ops,
    weight_merge,
)
from .safety import GateReport, SafetyPolicy, drift, gate, risk_estimate
from .selection import (
    ArchiveEntry,
    QdArchive,
    SelectionParams,
    novelty,
    pareto_ranks,
    select_qd,
    selection_probabilities,
)
from .simenv import EnvironmentHandle, EstateSpec, generate_estate, get_preset

__version__ = "0.1.0"

__all__ = [
    "Ablations", "ArchiveEntry", "ArtefactGraph", "ArtefactNode", "BanditState",
    "BehaviorDescriptor", "EdgeType", "EngineConfig", "EngineEvent", "EnvironmentHandle",
    "EstateSpec", "FitnessVector", "GateReport", "GenerationRecord", "GraphDelta",
    "MutationOutcome", "NodeType", "NormalizationBounds", "OperatorConfig", "OperatorKind",
    "PatchFeatures", "QdArchive", "RawMetrics", "RolloutState", "RunResult", "SafetyPolicy",
    "SelectionParams", "aggregate_utility", "align", "apply_delta", "bandit_update", "best",
    "build_operators", "deserialize", "diff", "discounted_return", "drift", "fitness_vector",
    "freshness", "gate", "generate_estate", "get_preset", "make_node", "normalize_latency",
    "novelty", "pareto_ranks", "patch_acceptance", "project_simplex", "reproducibility",
    "risk_estimate", "rouge_l", "run", "sample_ops", "select_qd", "selection_probabilities",
    "serialize", "weight_merge",
]
