"""Run configuration: file parsing, overrides, validation, echoing.

Two input syntaxes: a sectioned key=value file (INI-style, values typed as
JSON fragments) or a JSON object with the same section names. Validation
happens before any run and reports the exact `section.key` at fault.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .bandit import BanditState
from .engine import Ablations, EngineConfig, EngineEvent
from .errors import ConfigError
from .operators import OperatorConfig, OperatorKind
from .safety import SafetyPolicy
from .selection import SelectionParams
from .simenv import PRESETS, EstateSpec, get_preset

SECTIONS = ("engine", "operators", "selection", "bandit", "safety", "estate", "output")

_ABLATION_KEYS = (
    "disable_wm", "disable_cp", "disable_ds", "disable_bw", "disable_tr", "disable_novelty",
)

_ENGINE_KEYS = {"n", "T", "gamma", "mutation_rate", "seed", "workers", "events", *_ABLATION_KEYS}
_OPERATOR_KEYS = {
    "enabled", "mutation_rate", "merge_alpha", "patch_theta", "doc_threshold", "doc_blend",
    "rebuilds", "transmute_threshold", "transmute_max_iters",
}
_SELECTION_KEYS = {"alpha_sel", "beta_nov", "default_novelty", "archive_capacity", "k"}
_BANDIT_KEYS = {"eta", "initial_w", "pinned"}
_SAFETY_KEYS = {
    "tau_test", "p_max", "epsilon", "delta", "require_approval", "locked_node_ids",
    "approve_generations", "risk_window",
}
_ESTATE_KEYS = {
    "preset", "seed", "node_counts", "edge_density", "dim", "quality_range", "legacy_fraction",
    "doc_stale_fraction", "probe_count", "flakiness", "hermetic_gain", "init_rebuilds",
    "latency_base", "latency_gain", "latency_floor", "bounds", "tensor_shape", "tensor_noise",
    "patch_delta", "compile_ok_rate", "transmute_p0", "transmute_rho", "reward_weights",
    "reward_noise", "metric_noise",
}
_OUTPUT_KEYS = {"dir"}

_KNOWN = {
    "engine": _ENGINE_KEYS,
    "operators": _OPERATOR_KEYS,
    "selection": _SELECTION_KEYS,
    "bandit": _BANDIT_KEYS,
    "safety": _SAFETY_KEYS,
    "estate": _ESTATE_KEYS,
    "output": _OUTPUT_KEYS,
}


@dataclass(frozen=True)
class RunConfig:
    engine: EngineConfig
    estate: EstateSpec
    estate_preset: str | None
    estate_seed: int | None
    out_dir: str

    def as_dict(self) -> dict:
        """Normalized effective configuration, suitable for echoing."""
        eng = self.engine
        return {
            "engine": {
                "n": eng.n,
                "T": eng.T,
                "gamma": eng.gamma,
                "mutation_rate": eng.mutation_rate,
                "seed": eng.seed,
                "workers": eng.workers,
                **{k: getattr(eng.ablations, k) for k in _ABLATION_KEYS},
                "events": [
                    {"generation": e.generation, "kind": e.kind, **e.params} for e in eng.events
                ],
            },
            "operators": {
                "enabled": list(eng.operators.enabled),
                "mutation_rate": eng.operators.mutation_rate,
                "merge_alpha": eng.operators.merge_alpha,
                "patch_theta": list(eng.operators.patch_theta),
                "doc_threshold": eng.operators.doc_threshold,
                "doc_blend": eng.operators.doc_blend,
                "rebuilds": eng.operators.rebuilds,
                "transmute_threshold": eng.operators.transmute_threshold,
                "transmute_max_iters": eng.operators.transmute_max_iters,
            },
            "selection": {
                "alpha_sel": eng.selection.alpha_sel,
                "beta_nov": eng.selection.beta_nov,
                "default_novelty": eng.selection.default_novelty,
                "archive_capacity": eng.archive_capacity,
                "k": eng.archive_k,
            },
            "bandit": {
                "eta": eng.bandit.eta,
                "initial_w": list(eng.bandit.w),
                "pinned": list(eng.bandit.pinned) if eng.bandit.pinned else None,
            },
            "safety": {
                "tau_test": eng.safety.tau_test,
                "p_max": eng.safety.p_max,
                "epsilon": eng.safety.epsilon,
                "delta": eng.safety.delta,
                "require_approval": eng.safety.require_approval,
                "locked_node_ids": sorted(eng.safety.locked_node_ids),
                "approve_generations": sorted(eng.safety.approve_generations),
                "risk_window": eng.risk_window,
            },
            "estate": {
                "preset": self.estate_preset,
                "seed": self.estate_seed,
                **{
                    f.name: _jsonable(getattr(self.estate, f.name))
                    for f in dataclasses.fields(self.estate)
                },
            },
            "output": {"dir": self.out_dir},
        }


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def parse_value(text: str):
    """Interpret a raw config value: JSON fragment first, bare string last."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_sections(path: str | Path) -> dict[str, dict]:
    """Read a config file into {section: {key: value}}."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        out = {}
        for section, body in doc.items():
            if not isinstance(body, dict):
                raise ConfigError(f"{path}: section {section!r} must be an object")
            out[str(section)] = dict(body)
        return out
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case (T vs t)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return {
        section: {key: parse_value(raw) for key, raw in parser.items(section)}
        for section in parser.sections()
    }


def apply_overrides(sections: dict[str, dict], overrides: list[str]) -> dict[str, dict]:
    """Apply repeatable --override section.key=value flags."""
    out = {s: dict(body) for s, body in sections.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key_path, _, raw = item.partition("=")
        if "." not in key_path:
            raise ConfigError(f"override key {key_path!r} must look like section.key")
        section, _, key = key_path.partition(".")
        out.setdefault(section, {})[key] = parse_value(raw)
    return out


def build_run_config(sections: dict[str, dict]) -> RunConfig:
    """Validate sections against the schema and assemble the run config."""
    for section in sections:
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in sections[section]:
            if key not in _KNOWN[section]:
                raise ConfigError(f"unknown config key {section}.{key}")

    engine_raw = dict(sections.get("engine", {}))
    operators_raw = dict(sections.get("operators", {}))
    selection_raw = dict(sections.get("selection", {}))
    bandit_raw = dict(sections.get("bandit", {}))
    safety_raw = dict(sections.get("safety", {}))
    estate_raw = dict(sections.get("estate", {}))
    output_raw = dict(sections.get("output", {}))

    # mutation_rate may be stated in either block but must agree
    rate_engine = engine_raw.get("mutation_rate")
    rate_ops = operators_raw.pop("mutation_rate", None)
    if rate_engine is not None and rate_ops is not None and rate_engine != rate_ops:
        raise ConfigError(
            "engine.mutation_rate and operators.mutation_rate disagree "
            f"({rate_engine} vs {rate_ops})"
        )
    mutation_rate = rate_engine if rate_engine is not None else rate_ops

    operators = _build("operators", OperatorConfig, operators_raw, coerce={
        "enabled": lambda v: tuple(_expect_list_of_str("operators.enabled", v)),
        "patch_theta": lambda v: tuple(_expect_floats("operators.patch_theta", v, 4)),
    })
    selection = _build("selection", SelectionParams, {
        k: v for k, v in selection_raw.items() if k in {"alpha_sel", "beta_nov", "default_novelty"}
    })
    bandit_kwargs = {}
    if "eta" in bandit_raw:
        bandit_kwargs["eta"] = bandit_raw["eta"]
    if "initial_w" in bandit_raw:
        bandit_kwargs["w"] = tuple(_expect_floats("bandit.initial_w", bandit_raw["initial_w"], 6))
    if bandit_raw.get("pinned") is not None:
        bandit_kwargs["pinned"] = tuple(bool(b) for b in bandit_raw["pinned"])
    bandit = _build("bandit", BanditState, bandit_kwargs)

    safety_kwargs = {k: v for k, v in safety_raw.items() if k not in {"risk_window"}}
    if "locked_node_ids" in safety_kwargs:
        safety_kwargs["locked_node_ids"] = frozenset(
            _expect_list_of_str("safety.locked_node_ids", safety_kwargs["locked_node_ids"])
        )
    if "approve_generations" in safety_kwargs:
        safety_kwargs["approve_generations"] = frozenset(
            int(g) for g in safety_kwargs["approve_generations"]
        )
    safety = _build("safety", SafetyPolicy, safety_kwargs)

    ablations = _build(
        "engine", Ablations, {k: bool(engine_raw[k]) for k in _ABLATION_KEYS if k in engine_raw}
    )
    events = _parse_events(engine_raw.get("events", []))

    engine_kwargs = {
        k: engine_raw[k] for k in ("n", "T", "gamma", "seed", "workers") if k in engine_raw
    }
    if mutation_rate is not None:
        engine_kwargs["mutation_rate"] = mutation_rate
    engine = _build(
        "engine",
        EngineConfig,
        {
            **engine_kwargs,
            "operators": operators,
            "selection": selection,
            "bandit": bandit,
            "safety": safety,
            "ablations": ablations,
            "events": events,
            "archive_capacity": selection_raw.get("archive_capacity", 256),
            "archive_k": selection_raw.get("k", 5),
            "risk_window": safety_raw.get("risk_window", 50),
        },
    )

    preset = estate_raw.pop("preset", None)
    estate_seed = estate_raw.pop("seed", None)
    if estate_seed is not None and not isinstance(estate_seed, int):
        raise ConfigError(f"estate.seed must be an integer, got {estate_seed!r}")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"estate.preset: unknown preset {preset!r}; known: {sorted(PRESETS)}")
    base = get_preset(preset) if preset is not None else get_preset("reference")
    estate_over = {}
    for key, value in estate_raw.items():
        current = getattr(base, key)
        if isinstance(current, tuple) and isinstance(value, list):
            value = tuple(value)
        estate_over[key] = value
    try:
        estate = dataclasses.replace(base, **estate_over) if estate_over else base
        estate.validate()
    except (TypeError, ValueError, ConfigError) as exc:
        raise ConfigError(f"estate: {exc}") from exc
    except Exception as exc:  # InvalidSpec carries the field name already
        raise ConfigError(f"estate: {exc}") from exc

    out_dir = str(output_raw.get("dir", "out"))
    effective_preset = preset if preset is not None else ("reference" if not estate_over else None)
    return RunConfig(engine, estate, effective_preset, estate_seed, out_dir)


def _build(section: str, cls, kwargs: dict, coerce: dict | None = None):
    if coerce:
        kwargs = dict(kwargs)
        for key, fn in coerce.items():
            if key in kwargs:
                kwargs[key] = fn(kwargs[key])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc
    except ValueError as exc:
        # name the first offending key if we can
        raise ConfigError(f"{section}: {exc}") from exc


def _parse_events(raw) -> tuple[EngineEvent, ...]:
    if not isinstance(raw, list):
        raise ConfigError("engine.events must be a list of event objects")
    events = []
    for idx, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ConfigError(f"engine.events[{idx}] must be an object")
        body = dict(item)
        try:
            generation = int(body.pop("generation"))
            kind = str(body.pop("kind"))
        except KeyError as exc:
            raise ConfigError(f"engine.events[{idx}] missing field {exc.args[0]!r}") from exc
        events.append(EngineEvent(generation, kind, body))
    return tuple(events)


def _expect_floats(where: str, value, length: int) -> list[float]:
    if not isinstance(value, list) or len(value) != length:
        raise ConfigError(f"{where} must be a list of {length} numbers")
    try:
        return [float(x) for x in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where} must contain only numbers") from exc


def _expect_list_of_str(where: str, value) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise ConfigError(f"{where} must be a list of strings")
    return value


def default_run_config() -> RunConfig:
    return build_run_config({})
