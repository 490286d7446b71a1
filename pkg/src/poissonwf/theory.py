"""Convergence constants and Monte-Carlo checks of the local regularity conditions.

All empirical quantities are evaluated on the unit-power ensemble (rows
divided by ``A.scale``), the normalization under which the smoothness and
curvature constants are stated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ExcludedDirectionError, InvalidParameterError, OutOfTheoryRangeError, ShapeError
from .measurement import MeasurementEnsemble, ObservationSet, as_signal
from .objective import poisson_weights
from .rng import RngStream
from .solvers import random_unit_vector

# Breakpoints of the admissible (alpha1, alpha2, rho) region.
RHO1 = (2.0 * math.sqrt(76015.0) - 276.0) / 2477.0
T2 = (8075.0 - math.sqrt(45678865.0)) / 990.0
RHO2 = (2.0 * math.sqrt(39.0) - 12.0) / 3.0


def smoothness_constant(alpha1: float, delta: float = 0.0) -> float:
    """u_smo = (1 + 1 / (2 sqrt(alpha1))) (1 + delta)."""
    if not alpha1 > 0:
        raise InvalidParameterError(f"alpha1 must be positive, got {alpha1!r}")
    if not delta >= 0:
        raise InvalidParameterError(f"delta must be nonnegative, got {delta!r}")
    return (1.0 + 1.0 / (2.0 * math.sqrt(alpha1))) * (1.0 + delta)


def region_upper_bound(alpha1: float, rho: float) -> float:
    """Supremum of admissible alpha2 for the given alpha1 and rho."""
    if rho <= RHO1:
        slope = 3.0
    else:
        slope = 3.0 - (3.0 - T2) * (rho - RHO1) / (1.0 / 6.0 - RHO1)
    return slope * alpha1 - (rho + 1.0) ** 2


def in_region(alpha1: float, alpha2: float, rho: float) -> bool:
    """Whether (alpha1, alpha2, rho) satisfies the sufficient curvature conditions."""
    if not (0 < rho <= RHO2):
        raise OutOfTheoryRangeError(f"rho must lie in (0, {RHO2:.5f}], got {rho!r}")
    return alpha1 <= alpha2 < region_upper_bound(alpha1, rho)


@dataclass(frozen=True)
class CurvatureConstants:
    alpha1: float
    alpha2: float
    rho: float
    delta: float
    U: float
    L1: float
    L2: float
    phi1: float
    phi2: float
    psi: float
    varphi: float
    lcur_hat: float
    u_smo: float
    in_region: bool
    rho1: float = RHO1
    t2: float = T2
    rho2: float = RHO2

    @property
    def l_cur(self) -> float:
        """Curvature constant after the covering-argument deduction, lcur_hat - delta."""
        return self.lcur_hat - self.delta

    @property
    def max_step(self) -> float:
        """Largest step with a guaranteed contraction, 2 l_cur / u_smo^2."""
        return 2.0 * self.l_cur / self.u_smo**2

    def contraction(self, mu: float) -> float:
        """Per-iteration factor 1 - mu (2 l_cur - mu u_smo^2) on dist^2."""
        return 1.0 - mu * (2.0 * self.l_cur - mu * self.u_smo**2)


def curvature_constants(alpha1: float, alpha2: float, rho: float, delta: float = 0.0) -> CurvatureConstants:
    """Evaluate the curvature-condition constants at perturbation size ``rho``.

    ``delta`` is the concentration slack; it is subtracted as delta/4 from
    both phi1 and phi2, and ``l_cur`` deducts it once more from
    ``lcur_hat``.  With delta = 0, phi1 and phi2 reduce to the region
    constants Phi1 and Phi2.
    """
    if not (0 < alpha1 <= alpha2):
        raise InvalidParameterError(f"need 0 < alpha1 <= alpha2, got {alpha1!r}, {alpha2!r}")
    if not (0 < rho <= RHO2):
        raise OutOfTheoryRangeError(f"rho must lie in (0, {RHO2:.5f}], got {rho!r}")
    if not delta >= 0:
        raise InvalidParameterError(f"delta must be nonnegative, got {delta!r}")

    U = (1.0 + rho) ** 2 + alpha2
    L1 = (1.0 - rho) ** 2 + alpha1
    L2 = alpha1
    phi1 = (1.0 - 6.0 * rho) / (4.0 * U) - rho**2 / (16.0 * L1) - delta / 4.0
    phi2 = (9.0 + 16.0 * rho**2) / (32.0 * U) - 3.0 / (32.0 * L2) - delta / 4.0
    psi = 63.0 / (128.0 * U) - 9.0 / (128.0 * L2)
    varphi = 81.0 * U * rho**2 / (U**2 * (7.0 + 16.0 * U * psi))
    aligned = (2.0 - 3.0 * rho + rho**2) / ((1.0 + rho) ** 2 + alpha2) * (1.0 - delta)
    lcur_hat = min((phi1 + phi2 - varphi) / 4.0, aligned)
    return CurvatureConstants(
        alpha1=alpha1,
        alpha2=alpha2,
        rho=rho,
        delta=delta,
        U=U,
        L1=L1,
        L2=L2,
        phi1=phi1,
        phi2=phi2,
        psi=psi,
        varphi=varphi,
        lcur_hat=lcur_hat,
        u_smo=smoothness_constant(alpha1, delta),
        in_region=in_region(alpha1, alpha2, rho),
    )


@dataclass
class ProbeReport:
    """Extremes of the smoothness and curvature ratios over random probes in S_x(rho).

    The per-probe ratios are kept in ``smoothness_ratios`` and
    ``curvature_ratios``.
    """

    max_smoothness_ratio: float
    min_curvature_ratio: float
    min_normalized_intensity: float
    probes: int
    rho: float
    smoothness_ratios: np.ndarray
    curvature_ratios: np.ndarray


def _normalized_gradients(Z: np.ndarray, A: MeasurementEnsemble, obs: ObservationSet) -> np.ndarray:
    """Poisson gradients on the unit-power ensemble for each row of Z."""
    AZ = A.rows @ Z.T
    W = np.empty(AZ.shape)
    for k in range(AZ.shape[1]):
        W[:, k] = poisson_weights(np.abs(AZ[:, k]) ** 2, obs)
    return (A.adjoint @ (W * AZ)).T / (A.m * A.scale**2)


def probe_neighborhood(x, A: MeasurementEnsemble, obs: ObservationSet, rho: float, probes: int, rng: RngStream) -> ProbeReport:
    """Sample z = x + r u with r uniform on (0, rho ||x||] and u uniform on the unit sphere.

    For each probe records ||grad f(z)|| / dist(x, z) and
    Re<grad f(z), z - x e^{i phi(z)}> / dist^2(x, z).
    """
    x = as_signal(x, "x")
    if x.size != A.n:
        raise ShapeError(f"x has dimension {x.size}, ensemble expects {A.n}")
    if not rho > 0 or probes < 1:
        raise InvalidParameterError("need rho > 0 and at least one probe")
    gen = rng.generator()
    xnorm = float(np.linalg.norm(x))
    # 1 - U with U in [0, 1) keeps the radius strictly positive
    radii = rho * xnorm * (1.0 - gen.random(probes))
    dirs = np.stack([random_unit_vector(x.size, gen) for _ in range(probes)])
    Z = x[None, :] + radii[:, None] * dirs

    G = _normalized_gradients(Z, A, obs)
    p = Z @ x.conj()
    phase = np.where(p != 0, p / np.where(p != 0, np.abs(p), 1.0), 1.0)
    E = Z - phase[:, None] * x[None, :]
    dist = np.linalg.norm(E, axis=1)
    smooth = np.linalg.norm(G, axis=1) / dist
    curv = np.real(np.sum(G.conj() * E, axis=1)) / dist**2

    c_x = float(np.min(np.abs(A.rows @ x)) / (A.scale * xnorm))
    return ProbeReport(float(smooth.max()), float(curv.min()), c_x, int(probes), float(rho), smooth, curv)


def empirical_smoothness(x, A, obs, rho, probes, rng) -> ProbeReport:
    """Probe report whose headline figure is ``max_smoothness_ratio``."""
    return probe_neighborhood(x, A, obs, rho, probes, rng)


def empirical_curvature(x, A, obs, rho, probes, rng) -> ProbeReport:
    """Probe report whose headline figure is ``min_curvature_ratio``."""
    return probe_neighborhood(x, A, obs, rho, probes, rng)


@dataclass(frozen=True)
class ConcentrationCheck:
    name: str
    measured: float
    lower: float
    upper: float

    @property
    def passed(self) -> bool:
        return self.lower <= self.measured <= self.upper


def empirical_concentration(x, h_tilde, A: MeasurementEnsemble, delta: float) -> list[ConcentrationCheck]:
    """Check the indicator-weighted concentration inequalities for a fixed pair (x, h).

    ``x`` and ``h_tilde`` are normalized to unit length and ``h_tilde`` is
    rotated so that h^* x is real and nonnegative.  Returns the two-sided
    bound on (1/m) sum |a_j^* u|^2 for u = x and u = h, followed by the five
    split-sum inequalities (con1, con2, con2', con3, con4).
    """
    x = as_signal(x, "x")
    h = as_signal(h_tilde, "h_tilde")
    if x.shape != h.shape or x.size != A.n:
        raise ShapeError("x, h_tilde and the ensemble must share one dimension")
    if not delta > 0:
        raise InvalidParameterError("delta must be positive")
    x = x / np.linalg.norm(x)
    h = h / np.linalg.norm(h)
    p = np.vdot(h, x)
    if abs(p) > 0:
        h = h * (p / abs(p))
    r = float(np.vdot(h, x).real)
    if abs(r) >= 1.0 - 1e-12:
        raise ExcludedDirectionError("h_tilde must not be a unimodular multiple of x")

    raw = A.rows / A.scale
    ax = raw @ x
    ah = raw @ h
    # Re(h^* a a^* x) = Re(conj(a^* h) a^* x)
    cross = np.real(ah.conj() * ax)
    above = np.abs(ax) > np.abs(ah)
    ix2 = np.abs(ax) ** 2
    ratio = cross**2 / ix2
    mean = lambda v: float(np.mean(v))  # noqa: E731

    return [
        ConcentrationCheck("isometry_x", mean(ix2), 1 - delta, 1 + delta),
        ConcentrationCheck("isometry_h", mean(np.abs(ah) ** 2), 1 - delta, 1 + delta),
        ConcentrationCheck("con1", mean(cross * above) - r / 2, -delta, delta),
        ConcentrationCheck("con2", mean(ix2 * above), 0.5 - delta, 0.75 + delta),
        ConcentrationCheck("con2p", mean(ix2 * ~above), 0.25 - delta, 0.5 + delta),
        ConcentrationCheck("con3", mean(ratio * above), 1 / 8 + 7 / 32 * r**2 - delta, 1 / 4 + r**2 / 4 + delta),
        ConcentrationCheck("con4", mean(ratio * ~above), 1 / 4 + r**2 / 4 - delta, 3 / 8 + 9 / 32 * r**2 + delta),
    ]


def empirical_gradient_lipschitz(x, A: MeasurementEnsemble, obs: ObservationSet, s: float, pairs: int, rng: RngStream) -> float:
    """Largest |Re<grad f(x+h1) - grad f(x+h2), h2>| / (s ||x|| ||h1 - h2||) over random pairs.

    h1 and h2 are drawn independently with ||h1|| = ||h2|| = s ||x||;
    coincident pairs are skipped.
    """
    x = as_signal(x, "x")
    if not (0 < s < 1) or pairs < 1:
        raise InvalidParameterError("need 0 < s < 1 and at least one pair")
    gen = rng.generator()
    radius = s * float(np.linalg.norm(x))
    H1 = radius * np.stack([random_unit_vector(x.size, gen) for _ in range(pairs)])
    H2 = radius * np.stack([random_unit_vector(x.size, gen) for _ in range(pairs)])
    G1 = _normalized_gradients(x[None, :] + H1, A, obs)
    G2 = _normalized_gradients(x[None, :] + H2, A, obs)
    num = np.abs(np.real(np.sum((G1 - G2).conj() * H2, axis=1)))
    gap = np.linalg.norm(H1 - H2, axis=1)
    keep = gap > 0
    if not keep.any():
        return 0.0
    return float(np.max(num[keep] / (radius * gap[keep])))

