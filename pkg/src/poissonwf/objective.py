"""Poisson likelihood objective, Wirtinger gradients, alignment and step-size rules.

Gradients follow the conjugate-Wirtinger convention: for a real objective f
and any direction d, the directional derivative of f at z along d is
``2 * Re(vdot(gradient(z), d))``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidParameterError, ShapeError, SingularEvaluationError
from .measurement import MeasurementEnsemble, ObservationSet, as_signal


class ModelKind(enum.Enum):
    POISSON = "poisson"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class Heuristic:
    """mu_t = min(1 - exp(-t / t0), cap), with t the 1-based iteration count."""

    t0: float = 330.0
    cap: float = 0.2

    def __post_init__(self):
        if not (self.t0 > 0 and self.cap > 0):
            raise InvalidParameterError("heuristic step needs t0 > 0 and cap > 0")

    @property
    def name(self) -> str:
        return "heuristic"


@dataclass(frozen=True)
class Constant:
    mu: float = 0.2

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidParameterError(f"constant step must be positive, got {self.mu!r}")

    @property
    def name(self) -> str:
        return f"constant:{self.mu:g}"


@dataclass(frozen=True)
class FisherInfo:
    """Step from the observed Fisher information along the gradient."""

    @property
    def name(self) -> str:
        return "fisher"


StepSizeRule = Union[Heuristic, Constant, FisherInfo]


def parse_rule(text: str) -> StepSizeRule:
    """Parse ``heuristic``, ``constant:<mu>`` (or ``constant``) and ``fisher``."""
    key, _, arg = text.strip().lower().partition(":")
    if key == "heuristic" and not arg:
        return Heuristic()
    if key == "fisher" and not arg:
        return FisherInfo()
    if key == "constant":
        try:
            return Constant(float(arg)) if arg else Constant()
        except ValueError:
            pass
    raise InvalidParameterError(f"unknown step rule {text!r}; use heuristic, constant:<mu> or fisher")


@dataclass(frozen=True)
class AlignmentResult:
    phase: complex
    distance: float
    h: np.ndarray


def align_and_distance(x, z) -> AlignmentResult:
    """Best global phase aligning ``x`` to ``z`` and the resulting distance.

    ``phase`` minimizes ``||x * phase - z||``; ``h = conj(phase) * z - x``.
    When ``x^* z = 0`` every phase is optimal and phase 1 is returned.
    """
    x = as_signal(x, "x")
    z = as_signal(z, "z")
    if x.shape != z.shape:
        raise ShapeError(f"dimension mismatch: {x.size} vs {z.size}")
    p = np.vdot(x, z)
    phase = complex(p / abs(p)) if p != 0 else 1.0 + 0.0j
    h = phase.conjugate() * z - x
    return AlignmentResult(phase, float(np.linalg.norm(h)), h)


def distance(x, z) -> float:
    return align_and_distance(x, z).distance


def nrmse(x, z) -> float:
    """dist(z, x) / ||x||."""
    return distance(x, z) / float(np.linalg.norm(x))


def _log_argument(u: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = u + b
    bad = ~(d > 0)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise SingularEvaluationError(j, float(d[j]))
    return d


def _check(z, A: MeasurementEnsemble, obs: ObservationSet) -> np.ndarray:
    z = as_signal(z, "z")
    if z.size != A.n:
        raise ShapeError(f"iterate has dimension {z.size}, ensemble expects {A.n}")
    if obs.m != A.m:
        raise ShapeError(f"{obs.m} observations for {A.m} measurements")
    return z


def poisson_weights(u: np.ndarray, obs: ObservationSet) -> np.ndarray:
    """Per-measurement weights 1 - y_j / (u_j + b_j) for intensities u."""
    return 1.0 - obs.observed / _log_argument(u, obs.background)


def gaussian_residuals(u: np.ndarray, obs: ObservationSet) -> np.ndarray:
    """u_j - (y_j - b_j): the least-squares model fits background-subtracted data."""
    return u - (obs.observed - obs.background)


def objective(z, A: MeasurementEnsemble, obs: ObservationSet, model: ModelKind = ModelKind.POISSON) -> float:
    """Evaluate the data-fit objective at ``z``.

    Poisson: (1/m) sum(u_j + b_j - y_j log(u_j + b_j)) with u_j = |a_j^* z|^2.
    Gaussian: (1/(2m)) sum(u_j - (y_j - b_j))^2.
    """
    z = _check(z, A, obs)
    u = A.intensities(z)
    return _objective_from_intensities(u, obs, model)


def _objective_from_intensities(u, obs, model) -> float:
    if model is ModelKind.POISSON:
        d = _log_argument(u, obs.background)
        return float(np.mean(d - obs.observed * np.log(d)))
    r = gaussian_residuals(u, obs)
    return 0.5 * float(np.mean(r * r))


def gradient(z, A: MeasurementEnsemble, obs: ObservationSet, model: ModelKind = ModelKind.POISSON) -> np.ndarray:
    """Wirtinger gradient (1/m) sum_j w_j a_j a_j^* z.

    w_j = 1 - y_j / (|a_j^* z|^2 + b_j) for the Poisson model and
    w_j = |a_j^* z|^2 - (y_j - b_j) for the Gaussian model.
    """
    z = _check(z, A, obs)
    Az = A.rows @ z
    u = np.abs(Az) ** 2
    w = poisson_weights(u, obs) if model is ModelKind.POISSON else gaussian_residuals(u, obs)
    return A.adjoint @ (w * Az) / A.m


def gradient_single(z, A: MeasurementEnsemble, obs: ObservationSet, j: int) -> np.ndarray:
    """Poisson gradient of the j-th term alone, without the 1/m factor."""
    z = _check(z, A, obs)
    if not (0 <= j < A.m):
        raise IndexError(f"measurement index {j} out of range for m={A.m}")
    row = A.rows[j]
    az = complex(row @ z)
    d = az.real**2 + az.imag**2 + obs.background[j]
    if not d > 0:
        raise SingularEvaluationError(j, d)
    w = 1.0 - obs.observed[j] / d
    return (w * az) * row.conj()


def step_size(rule: StepSizeRule, iteration: int, z, grad, A: MeasurementEnsemble, obs: ObservationSet) -> float:
    """Step length for ``rule`` in normalized units.

    Steps are expressed for the unit-power ensemble (rows divided by
    ``A.scale``, so E[a a^*] = I); the solvers convert them to the
    calibrated ensemble.  The Fisher step is

        scale^2 * ||g||^2 / ((1/m) (A g)^* D (A g)),  D = diag(u / (u + b)),

    which is the step length along ``-g`` for the mean-normalized objective.
    A zero gradient gives 0.0 for the Fisher rule.
    """
    if isinstance(rule, Heuristic):
        t = int(iteration)
        if t < 1:
            raise InvalidParameterError("heuristic step counts iterations from 1")
        return min(1.0 - math.exp(-t / rule.t0), rule.cap)
    if isinstance(rule, Constant):
        return rule.mu
    if isinstance(rule, FisherInfo):
        g = np.asarray(grad, dtype=np.complex128)
        gg = float(np.vdot(g, g).real)
        if gg == 0.0:
            return 0.0
        u = A.intensities(z)
        D = u / _log_argument(u, obs.background)
        Ag = A.rows @ g
        quad = float(np.sum(D * (Ag.real**2 + Ag.imag**2))) / A.m
        return A.scale**2 * gg / quad
    raise InvalidParameterError(f"unknown step rule {rule!r}")
