"""Wirtinger Flow, Incremental Wirtinger Flow and initializers.

Step lengths are given for the unit-power ensemble (E[a a^*] = I), which is
the scale the convergence constants refer to.  For a calibrated ensemble with
rows ``scale * r_j`` the Poisson update therefore reads

    z <- z - (mu / scale^2) * grad f(z),

and the least-squares baseline uses the Wirtinger Flow normalization
mu / ||z0||^2 on the unit-power ensemble, i.e. mu / (scale^4 ||z0||^2) here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import InvalidParameterError, ShapeError
from .measurement import MeasurementEnsemble, ObservationSet, as_signal, complex_normal
from .objective import (
    Constant,
    FisherInfo,
    ModelKind,
    StepSizeRule,
    _objective_from_intensities,
    gaussian_residuals,
    nrmse,
    poisson_weights,
    step_size,
)
from .rng import RngStream


@dataclass(frozen=True)
class SolverConfig:
    model: ModelKind = ModelKind.POISSON
    rule: StepSizeRule = field(default_factory=Constant)
    max_iters: int = 500
    nrmse_tol: float = 0.0
    record_every: int = 1
    iwf_mu_scale: float = 0.2

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidParameterError("max_iters must be at least 1")
        if not self.nrmse_tol >= 0:
            raise InvalidParameterError("nrmse_tol must be nonnegative")
        if self.record_every < 1:
            raise InvalidParameterError("record_every must be at least 1")
        if not self.iwf_mu_scale > 0:
            raise InvalidParameterError("iwf_mu_scale must be positive")
        if self.model is ModelKind.GAUSSIAN and isinstance(self.rule, FisherInfo):
            raise InvalidParameterError("the Fisher step is defined for the Poisson model only")


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    nrmse: float
    objective: float
    step: float


@dataclass
class SolverTrace:
    """Per-iteration records of one solve.

    ``nrmse`` is NaN throughout when the solve ran without a ground truth.
    """

    iterations: list[TraceRecord]
    final_z: np.ndarray
    converged: bool
    total_iters: int

    @property
    def iters(self) -> np.ndarray:
        return np.array([r.iter for r in self.iterations])

    @property
    def nrmse(self) -> np.ndarray:
        return np.array([r.nrmse for r in self.iterations])

    @property
    def objective(self) -> np.ndarray:
        return np.array([r.objective for r in self.iterations])

    @property
    def steps(self) -> np.ndarray:
        return np.array([r.step for r in self.iterations])

    @property
    def final_nrmse(self) -> float:
        return self.iterations[-1].nrmse


@dataclass(frozen=True)
class OraclePerturbation:
    """z0 = x + rho * ||x|| * u with u uniform on the complex unit sphere."""

    rho: float = 1.0 / 15.0


@dataclass(frozen=True)
class PowerSpectral:
    """Leading eigenvector of (1/m) sum (y_j - b_j) a_j a_j^*, found by power iteration."""

    iters: int = 100


Initializer = Union[OraclePerturbation, PowerSpectral]


def random_unit_vector(n: int, gen: np.random.Generator) -> np.ndarray:
    u = complex_normal(gen, n)
    return u / np.linalg.norm(u)


def initialize(x, A: MeasurementEnsemble, obs: ObservationSet, init: Initializer, rng: RngStream) -> np.ndarray:
    """Produce a starting point.

    ``x`` is needed only by :class:`OraclePerturbation`; pass None with
    :class:`PowerSpectral`.
    """
    gen = rng.generator()
    if isinstance(init, OraclePerturbation):
        if not (0 < init.rho < 1):
            raise InvalidParameterError(f"perturbation radius must lie in (0, 1), got {init.rho!r}")
        x = as_signal(x, "x")
        return x + init.rho * np.linalg.norm(x) * random_unit_vector(x.size, gen)
    if isinstance(init, PowerSpectral):
        if init.iters < 1:
            raise InvalidParameterError("power iteration needs at least one step")
        weights = obs.observed - obs.background
        v = random_unit_vector(A.n, gen)
        for _ in range(init.iters):
            v = A.adjoint @ (weights * (A.rows @ v))
            v /= np.linalg.norm(v)
        # E[(y - b) a a^*] on the calibrated ensemble carries a factor scale^4,
        # the mean intensity scale^2 * ||x||^2
        norm_sq = float(np.mean(np.maximum(weights, 0.0))) / A.scale**2
        return math.sqrt(norm_sq) * v
    raise InvalidParameterError(f"unknown initializer {init!r}")


def _check_inputs(x, A, obs, z0):
    z0 = as_signal(z0, "z0")
    if z0.size != A.n:
        raise ShapeError(f"z0 has dimension {z0.size}, ensemble expects {A.n}")
    if obs.m != A.m:
        raise ShapeError(f"{obs.m} observations for {A.m} measurements")
    if x is not None:
        x = as_signal(x, "x")
        if x.size != A.n:
            raise ShapeError(f"x has dimension {x.size}, ensemble expects {A.n}")
    return x, z0


def wf_solve(x, A: MeasurementEnsemble, obs: ObservationSet, z0, cfg: SolverConfig) -> SolverTrace:
    """Run z_{k+1} = z_k - mu_k grad f(z_k).

    The ground truth ``x`` is used only to record NRMSE and to stop once it
    drops to ``cfg.nrmse_tol`` (when the tolerance is positive); with
    ``x=None`` the solver runs ``cfg.max_iters`` iterations and records
    objective values only.  A record is kept every ``cfg.record_every``
    iterations and at the final iterate; its ``step`` is the step the rule
    produces at that iterate.
    """
    x, z = _check_inputs(x, A, obs, z0)
    z = z.copy()
    m = A.m
    poisson = cfg.model is ModelKind.POISSON
    if poisson:
        unit = 1.0 / A.scale**2
    else:
        unit = 1.0 / (A.scale**4 * float(np.vdot(z, z).real))

    records: list[TraceRecord] = []
    converged = False
    k = 0
    while True:
        Az = A.rows @ z
        u = np.abs(Az) ** 2
        w = poisson_weights(u, obs) if poisson else gaussian_residuals(u, obs)
        grad = A.adjoint @ (w * Az) / m
        stationary = not np.any(grad)
        mu = 0.0 if stationary else step_size(cfg.rule, k + 1, z, grad, A, obs)

        err = nrmse(x, z) if x is not None else math.nan
        reached = x is not None and cfg.nrmse_tol > 0 and err <= cfg.nrmse_tol
        last = reached or stationary or k == cfg.max_iters
        if last or k % cfg.record_every == 0:
            records.append(TraceRecord(k, err, _objective_from_intensities(u, obs, cfg.model), mu))
        if last:
            converged = x is not None and err <= cfg.nrmse_tol
            break
        z = z - (mu * unit) * grad
        k += 1
    return SolverTrace(records, z, converged, k)


def iwf_solve(x, A: MeasurementEnsemble, obs: ObservationSet, z0, cfg: SolverConfig, rng: RngStream) -> SolverTrace:
    """Incremental WF: each step uses one uniformly drawn measurement.

    The step is ``cfg.iwf_mu_scale / n`` in unit-power units; ``cfg.rule``
    is not consulted.  Records (taken every ``cfg.record_every`` steps and at
    the end) evaluate the full objective, so a coarse grid such as one
    record per epoch of m steps keeps the run cheap.
    """
    if cfg.model is not ModelKind.POISSON:
        raise InvalidParameterError("incremental WF is implemented for the Poisson model")
    x, z = _check_inputs(x, A, obs, z0)
    z = z.copy()
    mu = cfg.iwf_mu_scale / A.n
    unit = mu / A.scale**2
    rows = A.rows
    rows_conj = rows.conj()
    y = obs.observed
    b = obs.background
    picks = rng.generator().integers(0, A.m, size=cfg.max_iters)

    def record(s):
        err = nrmse(x, z) if x is not None else math.nan
        u = np.abs(rows @ z) ** 2
        records.append(TraceRecord(s, err, _objective_from_intensities(u, obs, ModelKind.POISSON), mu))
        return err

    records: list[TraceRecord] = []
    err = record(0)
    s = 0
    while True:
        if x is not None and cfg.nrmse_tol > 0 and err <= cfg.nrmse_tol:
            break
        if s == cfg.max_iters:
            break
        j = picks[s]
        az = complex(rows[j] @ z)
        d = az.real * az.real + az.imag * az.imag + b[j]
        w = 1.0 - y[j] / d
        if w != 0.0:
            z -= (unit * w * az) * rows_conj[j]
        s += 1
        if s % cfg.record_every == 0 or s == cfg.max_iters:
            err = record(s)
    converged = x is not None and err <= cfg.nrmse_tol
    return SolverTrace(records, z, converged, s)
