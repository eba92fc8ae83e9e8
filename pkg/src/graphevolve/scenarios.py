"""Preconfigured behavioral scenarios with pass/fail verdicts.

Each scenario runs a small, fully seeded experiment and checks a directional
claim: mid-run adaptation to a latency-heavy weight shift, the three
ablation directions, and bandit convergence on a stationary synthetic
reward. The CLI prints one line per check; the acceptance suite asserts the
verdicts directly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .bandit import BanditState, bandit_update
from .engine import Ablations, EngineConfig, EngineEvent, run
from .errors import UnknownScenario
from .metrics import FitnessVector
from .rng import derive_seed
from .simenv import generate_estate, get_preset

SCENARIO_NAMES = (
    "adaptation",
    "ablation-wm",
    "ablation-cp",
    "ablation-novelty",
    "bandit-convergence",
)

LATENCY_HEAVY_W = (0.08, 0.6, 0.08, 0.08, 0.08, 0.08)


@dataclass
class ScenarioResult:
    name: str
    passed: bool
    lines: list[str] = field(default_factory=list)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] scenario {self.name}"


def _scenario_engine_config(seed: int, *, n: int, T: int, **over) -> EngineConfig:
    return EngineConfig(n=n, T=T, seed=seed, **over)


def scenario_adaptation(base_seed: int = 0, seeds: int = 10, n: int = 24, T: int = 13) -> ScenarioResult:
    """Shift the weights toward latency at generation 10; within three
    generations the production graph must be faster while security stays
    >= 0.7 and doc freshness >= 0.8."""
    shift = EngineEvent(10, "weight_shift", {"weights": list(LATENCY_HEAVY_W)})
    ok = 0
    lines = []
    for i in range(seeds):
        seed = derive_seed("adaptation", base_seed, i)
        config = _scenario_engine_config(seed, n=n, T=T, events=(shift,))
        genesis, env = generate_estate(get_preset("reference"), derive_seed(seed, "estate"))
        result = run(config, env, genesis)
        by_gen = {r.generation: r for r in result.records}
        lat10 = by_gen[10].current_latency_ms
        lat13 = by_gen[13].current_latency_ms
        window = [by_gen[g] for g in range(10, 14)]
        sec_ok = all(r.current_security >= 0.7 for r in window)
        doc_ok = all(r.current_doc_freshness >= 0.8 for r in window)
        good = lat13 < lat10 and sec_ok and doc_ok
        ok += good
        lines.append(
            f"seed {i}: latency gen10={lat10:.1f}ms gen13={lat13:.1f}ms"
            f" security>=0.7 {'yes' if sec_ok else 'NO'}"
            f" freshness>=0.8 {'yes' if doc_ok else 'NO'}"
            f" -> {'ok' if good else 'fail'}"
        )
    passed = ok >= 8
    lines.append(f"adaptation holds on {ok}/{seeds} seeds (need >= 8)")
    return ScenarioResult("adaptation", passed, lines)


def _paired_runs(which: str, seed: int, n: int, T: int):
    """One full run and one ablated run at the same seed."""
    ablations = {
        "wm": Ablations(disable_wm=True),
        "cp": Ablations(disable_cp=True),
        "novelty": Ablations(disable_novelty=True),
    }[which]
    base = _scenario_engine_config(seed, n=n, T=T)
    ablated = dataclasses.replace(base, ablations=ablations)
    genesis, env_a = generate_estate(get_preset("reference"), derive_seed(seed, "estate"))
    genesis_b, env_b = generate_estate(get_preset("reference"), derive_seed(seed, "estate"))
    full = run(base, env_a, genesis)
    cut = run(ablated, env_b, genesis_b)
    return full, cut


def scenario_ablation(which: str, base_seed: int = 0, seeds: int = 10, n: int = 16, T: int = 24) -> ScenarioResult:
    """Direction checks: removing a mechanism must cost what it pays for."""
    if which not in ("wm", "cp", "novelty"):
        raise UnknownScenario(f"unknown ablation {which!r}")
    ok = 0
    lines = []
    for i in range(seeds):
        seed = derive_seed("ablation", which, base_seed, i)
        full, cut = _paired_runs(which, seed, n, T)
        if which == "novelty":
            a, b = len(full.archive.entries), len(cut.archive.entries)
            good = b < a
            lines.append(f"seed {i}: archive full={a} disabled={b} -> {'ok' if good else 'fail'}")
        elif which == "cp":
            a = full.records[-1].current_latency_ms
            b = cut.records[-1].current_latency_ms
            good = b > a
            lines.append(
                f"seed {i}: final rolled latency full={a:.1f}ms disabled={b:.1f}ms -> {'ok' if good else 'fail'}"
            )
        else:  # wm
            a = full.records[-1].best_utility
            b = cut.records[-1].best_utility
            good = b < a
            lines.append(
                f"seed {i}: final best utility full={a:.4f} disabled={b:.4f} -> {'ok' if good else 'fail'}"
            )
        ok += good
    passed = ok >= 7
    lines.append(f"ablation {which} direction holds on {ok}/{seeds} seeds (need >= 7)")
    return ScenarioResult(f"ablation-{which}", passed, lines)


def scenario_bandit_convergence(seeds: int = 100, updates: int = 2000, tol: float = 0.1) -> ScenarioResult:
    """Stationary synthetic reward r = w*.F + N(0, 0.01); the learned weights
    must land within L1 distance 0.1 of the hidden w* by the update budget."""
    ok = 0
    lines = []
    worst = 0.0
    for i in range(seeds):
        rng = np.random.Generator(np.random.PCG64(derive_seed("bandit-conv", i)))
        hidden = rng.gamma(1.0, size=6)
        hidden = hidden / hidden.sum()
        state = BanditState()
        for _ in range(updates):
            f = FitnessVector(tuple(rng.random(6).tolist()))
            reward = float(hidden @ f.as_array()) + float(rng.normal(0.0, 0.01))
            state = bandit_update(state, f, reward)
        l1 = float(np.abs(state.weights() - hidden).sum())
        worst = max(worst, l1)
        ok += l1 < tol
    passed = ok >= int(0.95 * seeds)
    lines.append(f"converged on {ok}/{seeds} seeds (worst L1 {worst:.4f}, need >= {int(0.95 * seeds)})")
    return ScenarioResult("bandit-convergence", passed, lines)


def run_scenario(name: str, base_seed: int = 0) -> ScenarioResult:
    if name == "adaptation":
        return scenario_adaptation(base_seed)
    if name == "ablation-wm":
        return scenario_ablation("wm", base_seed)
    if name == "ablation-cp":
        return scenario_ablation("cp", base_seed)
    if name == "ablation-novelty":
        return scenario_ablation("novelty", base_seed)
    if name == "bandit-convergence":
        return scenario_bandit_convergence()
    raise UnknownScenario(f"unknown scenario {name!r}; known: {', '.join(SCENARIO_NAMES)}")
