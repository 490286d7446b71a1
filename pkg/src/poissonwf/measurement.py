"""Signals, calibrated complex Gaussian ensembles, backgrounds and Poisson observations.

Conventions
-----------
A complex standard normal variate has independent real and imaginary parts
drawn from N(0, 1/2), so E|w|^2 = 1.  An ensemble stores one row per
measurement; row ``j`` holds the conjugated sensing vector a_j^*, so
``rows @ z`` evaluates every inner product a_j^* z at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEnsembleError, InvalidParameterError, ShapeError
from .rng import RngStream

# Below this rate Poisson variates come from sequential-search inversion,
# at or above it from transformed rejection.
POISSON_INVERSION_LIMIT = 10.0


def complex_normal(gen: np.random.Generator, shape) -> np.ndarray:
    """Draw unit-variance circular complex Gaussian variates."""
    re = gen.standard_normal(shape)
    im = gen.standard_normal(shape)
    return (re + 1j * im) / math.sqrt(2.0)


def as_signal(values, name: str = "signal") -> np.ndarray:
    """Validate and return a 1-D complex128 array with finite entries."""
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim != 1 or arr.size == 0:
        raise ShapeError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} has non-finite entries")
    return arr


def intensities(rows: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Return |a_j^* z|^2 for every row.

    All intensity evaluations in the package go through this function so
    that recomputing |a_j^* x|^2 at the ground truth reproduces the stored
    clean intensities bit for bit.
    """
    return np.abs(rows @ z) ** 2


@dataclass(frozen=True)
class MeasurementEnsemble:
    """Calibrated sensing matrix.

    Attributes
    ----------
    rows : ndarray, shape (m, n)
        Row j is a_j^*, already multiplied by ``scale``.
    scale : float
        Calibration constant applied to every raw Gaussian row.  Dividing the
        rows by it recovers an ensemble with E[a a^*] = I.
    stream : RngStream or None
        Stream the raw rows were drawn from (None for hand-built ensembles).
    """

    rows: np.ndarray
    scale: float = 1.0
    stream: RngStream | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.complex128)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise ShapeError(f"rows must be a non-empty (m, n) matrix, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise InvalidParameterError("ensemble has non-finite entries")
        if not self.scale > 0:
            raise InvalidParameterError(f"scale must be positive, got {self.scale!r}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "_adjoint", np.ascontiguousarray(rows.conj().T))

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    @property
    def adjoint(self) -> np.ndarray:
        """A^* as a contiguous (n, m) array; ``adjoint @ v`` is sum_j v_j a_j."""
        return self._adjoint

    def intensities(self, z) -> np.ndarray:
        return intensities(self.rows, z)


@dataclass(frozen=True)
class ObservationSet:
    """Observations y = clean + background + noise, plus how they were built."""

    clean_intensity: np.ndarray
    background: np.ndarray
    noise: np.ndarray
    observed: np.ndarray
    eta_level: float = 0.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    noise_type: str = "poisson"

    @property
    def m(self) -> int:
        return self.observed.shape[0]


def generate_signal(n: int, rng: RngStream) -> np.ndarray:
    """Draw a ground-truth signal with i.i.d. unit-variance complex Gaussian entries."""
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"signal dimension must be a positive integer, got {n!r}")
    gen = rng.generator()
    while True:
        x = complex_normal(gen, int(n))
        if np.linalg.norm(x) > 0:
            return x


def generate_measurements(x, m: int, target_mean_intensity: float, rng: RngStream) -> MeasurementEnsemble:
    """Draw ``m`` complex Gaussian rows scaled so that mean_j |a_j^* x|^2 hits the target.

    The calibration constant is computed from the realized rows and signal,
    not from the expectation, so the empirical mean matches the target to
    rounding error.
    """
    x = as_signal(x, "x")
    if int(m) != m or m < 1:
        raise InvalidParameterError(f"number of measurements must be a positive integer, got {m!r}")
    if not (target_mean_intensity > 0 and math.isfinite(target_mean_intensity)):
        raise InvalidParameterError(f"target mean intensity must be positive, got {target_mean_intensity!r}")
    raw = complex_normal(rng.generator(), (int(m), x.size))
    mean_raw = float(np.mean(intensities(raw, x)))
    if not mean_raw > 0:
        raise DegenerateEnsembleError("mean raw intensity is zero; cannot calibrate the ensemble")
    scale = math.sqrt(target_mean_intensity / mean_raw)
    return MeasurementEnsemble(raw * scale, scale=scale, stream=rng)


def sample_background(clean_intensity, alpha1: float, alpha2: float, rng: RngStream) -> np.ndarray:
    """Draw backgrounds b_j = s_j * clean_j with log s_j uniform on [log alpha1, log alpha2]."""
    clean = np.asarray(clean_intensity, dtype=np.float64)
    if not (alpha1 > 0 and alpha1 <= alpha2 and math.isfinite(alpha2)):
        raise InvalidParameterError(f"need 0 < alpha1 <= alpha2, got alpha1={alpha1!r}, alpha2={alpha2!r}")
    if clean.ndim != 1:
        raise ShapeError("clean intensity must be a vector")
    if np.any(clean <= 0):
        j = int(np.flatnonzero(clean <= 0)[0])
        raise DegenerateEnsembleError(f"clean intensity is not positive at index {j}")
    if alpha1 == alpha2:
        return alpha1 * clean
    u = rng.generator().random(clean.size)
    lo, hi = math.log(alpha1), math.log(alpha2)
    s = np.exp(u * (hi - lo) + lo)
    # exp/log rounding can leave s a few ulps outside [alpha1, alpha2]
    return np.clip(s, alpha1, alpha2) * clean


def _poisson_inversion(lam: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    u = gen.random(lam.shape)
    k = np.zeros(lam.shape, dtype=np.int64)
    p = np.exp(-lam)
    cdf = p.copy()
    active = np.flatnonzero(u > cdf)
    while active.size:
        k[active] += 1
        p[active] *= lam[active] / k[active]
        cdf[active] += p[active]
        # p underflows once the tail is exhausted; the cdf can then stall a
        # few ulps below u, so those draws stop at the current k
        keep = (u[active] > cdf[active]) & (p[active] > 0)
        active = active[keep]
    return k


def _poisson_ptrs(lam: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Hörmann's transformed rejection with squeeze (PTRS), valid for lam >= 10."""
    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)

    out = np.empty(lam.shape, dtype=np.int64)
    pending = np.arange(lam.size)
    while pending.size:
        la, aa, bb = lam[pending], a[pending], b[pending]
        u = gen.random(pending.size) - 0.5
        v = gen.random(pending.size)
        us = 0.5 - np.abs(u)
        k = np.floor((2.0 * aa / us + bb) * u + la + 0.43)

        fast = (us >= 0.07) & (v <= vr[pending])
        reject = (k < 0) | ((us < 0.013) & (v > us))
        with np.errstate(divide="ignore", invalid="ignore"):
            kk = np.where(k < 0, 0.0, k)
            lhs = np.log(v) + np.log(inv_alpha[pending]) - np.log(aa / (us * us) + bb)
            rhs = -la + kk * loglam[pending] - _lgamma(kk + 1.0)
        accept = fast | (~reject & (lhs <= rhs))

        out[pending[accept]] = k[accept].astype(np.int64)
        pending = pending[~accept]
    return out


_lgamma = np.vectorize(math.lgamma, otypes=[np.float64])


def poisson_variates(lam, gen: np.random.Generator) -> np.ndarray:
    """Exact Poisson draws, one per entry of ``lam``."""
    lam = np.asarray(lam, dtype=np.float64)
    if not np.all(np.isfinite(lam)) or np.any(lam < 0):
        raise InvalidParameterError("Poisson rates must be finite and nonnegative")
    flat = lam.ravel()
    out = np.zeros(flat.shape, dtype=np.int64)
    small = np.flatnonzero((flat > 0) & (flat < POISSON_INVERSION_LIMIT))
    large = np.flatnonzero(flat >= POISSON_INVERSION_LIMIT)
    if small.size:
        out[small] = _poisson_inversion(flat[small], gen)
    if large.size:
        out[large] = _poisson_ptrs(flat[large], gen)
    return out.reshape(lam.shape)


def sample_poisson(lam: float, rng: RngStream, size: int | None = None):
    """Draw Poisson(lam) variates from ``rng``.

    Returns a Python int when ``size`` is None, otherwise an int64 array of
    ``size`` independent draws.
    """
    if not (math.isfinite(lam) and lam >= 0):
        raise InvalidParameterError(f"Poisson rate must be finite and nonnegative, got {lam!r}")
    gen = rng.generator()
    if size is None:
        return int(poisson_variates(np.array([lam]), gen)[0])
    return poisson_variates(np.full(int(size), float(lam)), gen)


def _check_background(A: MeasurementEnsemble, background) -> np.ndarray:
    b = np.asarray(background, dtype=np.float64)
    if b.shape != (A.m,):
        raise ShapeError(f"background has shape {b.shape}, expected ({A.m},)")
    if np.any(~(b > 0)):
        raise InvalidParameterError("background must be strictly positive")
    return b


def _ratio_bounds(clean: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    ratio = b / clean
    return float(ratio.min()), float(ratio.max())


def build_observations(x, A: MeasurementEnsemble, background, eta_level: float, rng: RngStream) -> ObservationSet:
    """Form y_j = |a_j^* x|^2 + b_j + eta * Poisson(|a_j^* x|^2 + b_j).

    The noise term is the scaled Poisson draw itself, so it is nonnegative
    with mean eta * (clean + b).  ``eta_level = 0`` gives noiseless data
    without consuming the stream.
    """
    x = as_signal(x, "x")
    if x.size != A.n:
        raise ShapeError(f"signal has dimension {x.size}, ensemble expects {A.n}")
    b = _check_background(A, background)
    if not (eta_level >= 0 and math.isfinite(eta_level)):
        raise InvalidParameterError(f"noise level must be finite and nonnegative, got {eta_level!r}")
    clean = A.intensities(x)
    if eta_level == 0:
        noise = np.zeros(A.m)
    else:
        noise = eta_level * poisson_variates(clean + b, rng.generator()).astype(np.float64)
    a1, a2 = _ratio_bounds(clean, b)
    return ObservationSet(clean, b, noise, clean + b + noise, float(eta_level), a1, a2, "poisson")


def build_gaussian_observations(x, A: MeasurementEnsemble, background, eta_level: float, rng: RngStream) -> ObservationSet:
    """Form y_j = |a_j^* x|^2 + b_j + e_j with i.i.d. e_j ~ N(0, sigma^2).

    sigma = eta * mean_j(|a_j^* x|^2 + b_j), i.e. the Poisson construction's
    noise scale evaluated at the average intensity.  The spread is the same
    for every measurement, which is the setting where the least-squares
    model is the maximum-likelihood estimator.
    """
    x = as_signal(x, "x")
    if x.size != A.n:
        raise ShapeError(f"signal has dimension {x.size}, ensemble expects {A.n}")
    b = _check_background(A, background)
    if not (eta_level >= 0 and math.isfinite(eta_level)):
        raise InvalidParameterError(f"noise level must be finite and nonnegative, got {eta_level!r}")
    clean = A.intensities(x)
    if eta_level == 0:
        noise = np.zeros(A.m)
    else:
        sigma = eta_level * float(np.mean(clean + b))
        noise = sigma * rng.generator().standard_normal(A.m)
    a1, a2 = _ratio_bounds(clean, b)
    return ObservationSet(clean, b, noise, clean + b + noise, float(eta_level), a1, a2, "gaussian")
