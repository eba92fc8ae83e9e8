"""Online scalarization-weight learning on the probability simplex.

One update per rollout: move the weights along the prediction-error
gradient, then project back onto the simplex. Components can be pinned by a
human policy; pinned weights keep their value and the free ones share the
remaining mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteInput
from .metrics import N_COMPONENTS, FitnessVector

SIMPLEX_TOL = 1e-9


def project_simplex(v: np.ndarray | list[float], total: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {x : x >= 0, sum x = total}.

    Sort-and-threshold: sort descending, find the largest prefix whose
    running mean keeps the threshold below every member, subtract, clamp.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput(f"cannot project non-finite vector {v!r}")
    if total <= 0:
        raise ValueError(f"simplex mass must be positive, got {total}")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.size + 1)
    positive = u - (css - total) / idx > 0
    rho = int(np.nonzero(positive)[0][-1])
    tau = (css[rho] - total) / (rho + 1)
    return np.maximum(v - tau, 0.0)


@dataclass(frozen=True)
class BanditState:
    """Scalarization weights plus learning rate and optional pin mask."""

    w: tuple[float, ...] = field(default_factory=lambda: tuple([1.0 / N_COMPONENTS] * N_COMPONENTS))
    eta: float = 0.05
    pinned: tuple[bool, ...] | None = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.shape != (N_COMPONENTS,):
            raise ValueError(f"weight vector must have {N_COMPONENTS} components")
        if np.any(w < -SIMPLEX_TOL) or abs(float(w.sum()) - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"weights off simplex: {self.w}")
        if self.eta <= 0:
            raise ValueError(f"learning rate must be positive, got {self.eta}")
        if self.pinned is not None and len(self.pinned) != N_COMPONENTS:
            raise ValueError("pin mask must cover all components")

    def weights(self) -> np.ndarray:
        return np.asarray(self.w, dtype=float)


def bandit_update(state: BanditState, fitness: FitnessVector, reward: float) -> BanditState:
    """One projected-gradient step from an observed scalar reward.

    w <- ProjSimplex(w + eta * (r - w.F) * F); pinned components are restored
    afterwards and the free components are re-projected onto the sub-simplex
    holding the remaining mass.
    """
    w = state.weights()
    f = fitness.as_array()
    error = reward - float(w @ f)
    v = w + state.eta * error * f

    if state.pinned is None or not any(state.pinned):
        projected = project_simplex(v)
        return BanditState(tuple(projected.tolist()), state.eta, state.pinned)

    mask = np.asarray(state.pinned, dtype=bool)
    out = w.copy()  # pinned components keep their frozen values
    free_mass = 1.0 - float(w[mask].sum())
    if np.any(~mask):
        if free_mass <= SIMPLEX_TOL:
            out[~mask] = 0.0
        else:
            out[~mask] = project_simplex(v[~mask], total=free_mass)
    return BanditState(tuple(out.tolist()), state.eta, state.pinned)
