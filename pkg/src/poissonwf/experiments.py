"""Experiment drivers: success sweeps, convergence traces, background influence,
model comparison, the constants report and the convergence-condition checks.

Every trial draws its data from ``RngStream(seed, trial)`` with fixed children

    0 signal, 1 measurements, 2 background, 3 noise, 4 initializer, 5 incremental picks

so trials are paired across grid points, step rules and models.  Results are
plain tables; :func:`write_csv` emits them with ``repr`` floats so reruns are
byte-identical.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError
from .measurement import (
    build_gaussian_observations,
    build_observations,
    generate_measurements,
    generate_signal,
    sample_background,
)
from .objective import Constant, FisherInfo, Heuristic, ModelKind, StepSizeRule
from .rng import RngStream
from .solvers import OraclePerturbation, SolverConfig, initialize, random_unit_vector, wf_solve
from .theory import (
    RHO1,
    RHO2,
    T2,
    curvature_constants,
    empirical_concentration,
    empirical_gradient_lipschitz,
    in_region,
    probe_neighborhood,
    smoothness_constant,
)

KINDS = ("trace", "sweep", "background", "compare", "theory", "verify")
TARGET_MEAN_INTENSITY = 2.0
NRMSE_DEFINITION = "dist(z, x) / ||x||, dist minimized over a global unimodular phase"
GAUSSIAN_COMPARATOR = (
    "y = clean + b + e, e_j i.i.d. N(0, sigma^2), sigma = eta * mean_j(clean_j + b_j)"
)
# known success thresholds by noise level
THRESHOLDS = {1e-3: 0.5e-3, 0.1: 0.5}
BACKGROUND_ALPHA1 = (0.01, 0.05, 0.1, 0.5, 1.0)
TRACE_RULES = (Heuristic(), Constant(0.2), FisherInfo())


@dataclass
class ExperimentConfig:
    kind: str = "sweep"
    n: int = 100
    m_over_n: tuple[float, ...] = tuple(round(3.0 + 0.2 * i, 10) for i in range(11))
    eta: float = 1e-3
    trials: int = 100
    max_iters: int = 500
    rule: StepSizeRule = field(default_factory=Constant)
    alpha1: tuple[float, ...] = (1.0,)
    alpha2: tuple[float, ...] = (1.0,)
    rho: tuple[float, ...] = (1.0 / 15.0,)
    delta: float = 0.0
    threshold: float | None = None
    probes: int = 0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown experiment kind {self.kind!r}")
        self.m_over_n = tuple(float(v) for v in self.m_over_n)
        self.alpha1 = tuple(float(v) for v in self.alpha1)
        self.alpha2 = tuple(float(v) for v in self.alpha2)
        self.rho = tuple(float(v) for v in self.rho)
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameterError("n must be a positive integer")
        grid = self.m_over_n
        if not grid or any(v <= 0 for v in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidParameterError("m/n grid must be nonempty, positive and strictly ascending")
        if self.trials < 1 or self.max_iters < 1 or self.workers < 1 or self.probes < 0:
            raise InvalidParameterError("trials, iters and workers must be at least 1, probes nonnegative")
        if not (self.eta >= 0 and math.isfinite(self.eta)):
            raise InvalidParameterError("eta must be finite and nonnegative")
        if not (self.alpha1 and self.alpha2 and self.rho):
            raise InvalidParameterError("alpha1, alpha2 and rho need at least one value")
        if min(self.alpha1 + self.alpha2 + self.rho) <= 0:
            raise InvalidParameterError("alpha1, alpha2 and rho must be positive")
        if self.threshold is not None and not self.threshold > 0:
            raise InvalidParameterError("threshold must be positive")
        if not self.delta >= 0:
            raise InvalidParameterError("delta must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise InvalidParameterError("seed must be an unsigned 64-bit integer")

    def measurements(self, ratio: float) -> int:
        return max(1, int(round(ratio * self.n)))

    def single(self, name: str) -> float:
        values = getattr(self, name)
        if len(values) != 1:
            raise InvalidParameterError(f"{self.kind} takes a single {name} value, got {list(values)}")
        return values[0]

    def describe(self) -> dict:
        d = asdict(self)
        d["rule"] = self.rule.name
        return d


# ---------------------------------------------------------------- tables


@dataclass
class Table:
    header: tuple[str, ...]
    rows: list[tuple]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(table: Table, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_cell(v) for v in row])


def write_meta(cfg: ExperimentConfig, path, extra: dict | None = None) -> None:
    meta = {
        "command": cfg.kind,
        "nrmse": NRMSE_DEFINITION,
        "gaussian_noise": GAUSSIAN_COMPARATOR,
        "target_mean_intensity": TARGET_MEAN_INTENSITY,
        "config": cfg.describe(),
    }
    if extra:
        meta.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


# ---------------------------------------------------------------- trials


def success_threshold(eta: float, explicit: float | None = None) -> float:
    """Success threshold on NRMSE; noise levels other than 1e-3 and 0.1 need ``explicit``."""
    if explicit is not None:
        return float(explicit)
    for level, thr in THRESHOLDS.items():
        if math.isclose(eta, level, rel_tol=1e-12):
            return thr
    raise InvalidParameterError(f"no default success threshold for eta={eta!r}; pass one explicitly")


def make_problem(n, m, eta, alpha1, alpha2, stream: RngStream, noise_type="poisson"):
    """Draw (x, A, obs, z0) for one trial from its stream."""
    x = generate_signal(n, stream.child(0))
    A = generate_measurements(x, m, TARGET_MEAN_INTENSITY, stream.child(1))
    b = sample_background(A.intensities(x), alpha1, alpha2, stream.child(2))
    build = build_observations if noise_type == "poisson" else build_gaussian_observations
    obs = build(x, A, b, eta, stream.child(3))
    z0 = initialize(x, A, obs, OraclePerturbation(), stream.child(4))
    return x, A, obs, z0


def _curve(trace, length: int, attr: str) -> np.ndarray:
    """Per-iteration values, carrying the last record forward after an early stop."""
    vals = getattr(trace, attr)
    out = np.empty(length)
    out[: vals.size] = vals[:length]
    out[vals.size :] = vals[-1]
    return out


def _task(args):
    """One solve; module-level so it can be shipped to worker processes."""
    kind, n, m, eta, a1, a2, seed, trial, noise, model, rule, iters, tol = args
    x, A, obs, z0 = make_problem(n, m, eta, a1, a2, RngStream(seed, trial), noise)
    cfg = SolverConfig(model=model, rule=rule, max_iters=iters, nrmse_tol=tol)
    tr = wf_solve(x, A, obs, z0, cfg)
    if kind == "final":
        return tr.final_nrmse
    L = iters + 1
    return _curve(tr, L, "nrmse"), _curve(tr, L, "objective"), _curve(tr, L, "steps")


def _run_tasks(tasks, workers: int):
    if workers <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


# ---------------------------------------------------------------- experiments


@dataclass(frozen=True)
class SweepRow:
    m_over_n: float
    eta: float
    rule_name: str
    success_rate: float
    trials: int
    mean_final_nrmse: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    threshold: float
    successes: dict[float, list[bool]]

    def table(self) -> Table:
        return Table(
            ("m_over_n", "eta", "rule", "success_rate", "trials", "mean_final_nrmse"),
            [(r.m_over_n, r.eta, r.rule_name, r.success_rate, r.trials, r.mean_final_nrmse) for r in self.rows],
        )


def run_success_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Success rate of WF-Poisson from the oracle start, per m/n.

    Each solve stops as soon as NRMSE reaches the threshold; a trial succeeds
    when its NRMSE is below the threshold within ``max_iters`` iterations.
    ``mean_final_nrmse`` averages the NRMSE at the stopping iterate.
    """
    thr = success_threshold(cfg.eta, cfg.threshold)
    a1, a2 = cfg.single("alpha1"), cfg.single("alpha2")
    rows, successes = [], {}
    for ratio in cfg.m_over_n:
        tasks = [
            ("final", cfg.n, cfg.measurements(ratio), cfg.eta, a1, a2, cfg.seed, t, "poisson",
             ModelKind.POISSON, cfg.rule, cfg.max_iters, thr)
            for t in range(cfg.trials)
        ]
        finals = np.array(_run_tasks(tasks, cfg.workers))
        ok = finals < thr
        successes[ratio] = [bool(v) for v in ok]
        rows.append(SweepRow(ratio, cfg.eta, cfg.rule.name, int(ok.sum()) / cfg.trials, cfg.trials, float(finals.mean())))
    return SweepResult(rows, thr, successes)


@dataclass
class TraceResult:
    rules: list[str]
    mean_nrmse: dict[str, np.ndarray]
    mean_objective: dict[str, np.ndarray]
    mean_step: dict[str, np.ndarray]
    successes: dict[str, list[bool]]
    threshold: float | None

    def table(self) -> Table:
        rows = []
        for name in self.rules:
            for k in range(self.mean_nrmse[name].size):
                rows.append((name, k, self.mean_nrmse[name][k], self.mean_objective[name][k], self.mean_step[name][k]))
        return Table(("rule", "iter", "mean_nrmse", "mean_objective", "mean_step"), rows)


def run_convergence_trace(cfg: ExperimentConfig, rules=TRACE_RULES) -> TraceResult:
    """Mean NRMSE, objective and step per iteration for each rule on identical trials.

    All ``max_iters`` iterations are run.  When a success threshold is known
    for ``cfg.eta`` (or given), each trial also gets a success flag: its NRMSE
    dropped below the threshold at some iteration.
    """
    m = cfg.measurements(cfg.single("m_over_n"))
    a1, a2 = cfg.single("alpha1"), cfg.single("alpha2")
    try:
        thr = success_threshold(cfg.eta, cfg.threshold)
    except InvalidParameterError:
        thr = None
    out = TraceResult([], {}, {}, {}, {}, thr)
    for rule in rules:
        tasks = [
            ("curve", cfg.n, m, cfg.eta, a1, a2, cfg.seed, t, "poisson", ModelKind.POISSON, rule, cfg.max_iters, 0.0)
            for t in range(cfg.trials)
        ]
        curves = _run_tasks(tasks, cfg.workers)
        err = np.stack([c[0] for c in curves])
        name = rule.name
        out.rules.append(name)
        out.mean_nrmse[name] = err.mean(axis=0)
        out.mean_objective[name] = np.stack([c[1] for c in curves]).mean(axis=0)
        out.mean_step[name] = np.stack([c[2] for c in curves]).mean(axis=0)
        out.successes[name] = [bool(v) for v in (err.min(axis=1) < thr)] if thr is not None else []
    return out


@dataclass
class BackgroundResult:
    alpha1: list[float]
    mean_nrmse: dict[float, np.ndarray]

    def table(self) -> Table:
        rows = []
        for a1 in self.alpha1:
            for k, v in enumerate(self.mean_nrmse[a1]):
                rows.append((a1, 1.0 / a1, k, v))
        return Table(("alpha1", "alpha2", "iter", "mean_nrmse"), rows)


def run_background_influence(cfg: ExperimentConfig) -> BackgroundResult:
    """Mean NRMSE per iteration for backgrounds sandwiched in [alpha1, 1/alpha1] * clean."""
    m = cfg.measurements(cfg.single("m_over_n"))
    grid = sorted(cfg.alpha1)
    if any(a > 1 for a in grid):
        raise InvalidParameterError("background levels need alpha1 <= 1 so that alpha1 <= 1/alpha1")
    res = BackgroundResult(grid, {})
    for a1 in grid:
        tasks = [
            ("curve", cfg.n, m, cfg.eta, a1, 1.0 / a1, cfg.seed, t, "poisson", ModelKind.POISSON, cfg.rule,
             cfg.max_iters, 0.0)
            for t in range(cfg.trials)
        ]
        res.mean_nrmse[a1] = np.stack([c[0] for c in _run_tasks(tasks, cfg.workers)]).mean(axis=0)
    return res


@dataclass(frozen=True)
class ComparisonRow:
    noise_type: str
    model: str
    m_over_n: float
    eta: float
    mean_final_nrmse: float
    trials: int


@dataclass
class ComparisonResult:
    rows: list[ComparisonRow]

    def table(self) -> Table:
        return Table(
            ("noise_type", "model", "m_over_n", "eta", "mean_final_nrmse", "trials"),
            [(r.noise_type, r.model, r.m_over_n, r.eta, r.mean_final_nrmse, r.trials) for r in self.rows],
        )

    def lookup(self, noise_type: str, model: str, ratio: float) -> float:
        for r in self.rows:
            if r.noise_type == noise_type and r.model == model and r.m_over_n == ratio:
                return r.mean_final_nrmse
        raise KeyError((noise_type, model, ratio))


def run_model_comparison(cfg: ExperimentConfig) -> ComparisonResult:
    """Mean final NRMSE of WF-Poisson and WF-Gaussian under Poisson and Gaussian noise.

    Both models see the same data in each trial and run all ``max_iters``
    iterations with ``cfg.rule``.
    """
    if isinstance(cfg.rule, FisherInfo):
        raise InvalidParameterError("the comparison needs a rule defined for both models")
    a1, a2 = cfg.single("alpha1"), cfg.single("alpha2")
    rows = []
    for noise in ("poisson", "gaussian"):
        for model in (ModelKind.POISSON, ModelKind.GAUSSIAN):
            for ratio in cfg.m_over_n:
                tasks = [
                    ("final", cfg.n, cfg.measurements(ratio), cfg.eta, a1, a2, cfg.seed, t, noise, model, cfg.rule,
                     cfg.max_iters, 0.0)
                    for t in range(cfg.trials)
                ]
                finals = np.array(_run_tasks(tasks, cfg.workers))
                rows.append(ComparisonRow(noise, model.value, ratio, cfg.eta, float(finals.mean()), cfg.trials))
    return ComparisonResult(rows)


THEORY_HEADER = (
    "alpha1", "alpha2", "rho", "delta", "U", "L1", "L2", "phi1", "phi2", "psi", "varphi", "lcur_hat", "u_smo",
    "in_region",
)
PROBE_HEADER = (
    "alpha1", "alpha2", "rho", "n", "m", "probes", "max_smoothness_ratio", "min_curvature_ratio",
    "min_normalized_intensity", "u_smo", "l_cur",
)


@dataclass
class TheoryResult:
    constants: Table
    probes: Table | None


def _noiseless(n, m, a1, a2, stream):
    x = generate_signal(n, stream.child(0))
    A = generate_measurements(x, m, TARGET_MEAN_INTENSITY, stream.child(1))
    b = sample_background(A.intensities(x), a1, a2, stream.child(2))
    return x, A, build_observations(x, A, b, 0.0, stream.child(3))


def run_theory_report(cfg: ExperimentConfig) -> TheoryResult:
    """Closed-form constants on the (alpha1, alpha2, rho) grid.

    With ``cfg.probes > 0`` every cell is also probed empirically on a
    noiseless instance with n = ``cfg.n`` and m/n = the single grid ratio.
    """
    rows, probe_rows = [], []
    for a1 in cfg.alpha1:
        for a2 in cfg.alpha2:
            if a1 > a2:
                raise InvalidParameterError(f"grid cell alpha1={a1} exceeds alpha2={a2}")
            for rho in cfg.rho:
                c = curvature_constants(a1, a2, rho, cfg.delta)
                rows.append((a1, a2, rho, cfg.delta, c.U, c.L1, c.L2, c.phi1, c.phi2, c.psi, c.varphi, c.lcur_hat,
                             c.u_smo, c.in_region))
                if cfg.probes:
                    m = cfg.measurements(cfg.single("m_over_n"))
                    stream = RngStream(cfg.seed, len(probe_rows))
                    x, A, obs = _noiseless(cfg.n, m, a1, a2, stream)
                    rep = probe_neighborhood(x, A, obs, rho, cfg.probes, stream.child(6))
                    probe_rows.append((a1, a2, rho, cfg.n, m, cfg.probes, rep.max_smoothness_ratio,
                                       rep.min_curvature_ratio, rep.min_normalized_intensity, c.u_smo, c.l_cur))
    probes = Table(PROBE_HEADER, probe_rows) if cfg.probes else None
    return TheoryResult(Table(THEORY_HEADER, rows), probes)


@dataclass(frozen=True)
class Check:
    name: str
    params: str
    measured: float
    bound: str
    passed: bool


def reconcile_curvature(alpha1=0.8, alpha2=1.2, rho=1.0 / 15.0, target=0.0126, tol=5e-4, delta_max=2e-3, steps=2000):
    """Scan delta in (0, delta_max] for lcur_hat - delta within ``tol`` of ``target``.

    Returns (delta, l_cur) at the closest point of the scan.
    """
    deltas = delta_max * np.arange(1, steps + 1) / steps
    vals = np.array([curvature_constants(alpha1, alpha2, rho, d).l_cur for d in deltas])
    k = int(np.argmin(np.abs(vals - target)))
    return float(deltas[k]), float(vals[k])


def region_violations(samples: int, rng: RngStream) -> tuple[int, int]:
    """Count in-region triples violating phi1, phi2, psi, phi1 + phi2 - varphi > 0.

    Triples are drawn with rho uniform on (0, rho2], alpha1 log-uniform on
    [0.05, 20] and alpha2 uniform between alpha1 and the region boundary, so
    most samples are in the region.  Returns (in_region_count, violations).
    """
    gen = rng.generator()
    hits = bad = 0
    while hits < samples:
        rho = RHO2 * (1.0 - gen.random())
        a1 = math.exp(gen.uniform(math.log(0.05), math.log(20.0)))
        slope = 3.0 if rho <= RHO1 else 3.0 - (3.0 - T2) * (rho - RHO1) / (1.0 / 6.0 - RHO1)
        top = slope * a1 - (1.0 + rho) ** 2
        if top <= a1:
            continue
        a2 = gen.uniform(a1, top)
        if not in_region(a1, a2, rho):
            continue
        c = curvature_constants(a1, a2, rho)
        hits += 1
        if not (c.phi1 > 0 and c.phi2 > 0 and c.psi > 0 and c.phi1 + c.phi2 - c.varphi > 0):
            bad += 1
    return hits, bad


def run_verify(cfg: ExperimentConfig) -> list[Check]:
    """Closed-form and Monte-Carlo checks of the local convergence conditions.

    Probe instances use n = ``cfg.n``, m = 20 n, alpha1 = 0.8, alpha2 = 1.2
    and rho = 1/15; concentration uses m = 200 n.
    """
    n = cfg.n
    root = RngStream(cfg.seed)
    checks = []

    u = smoothness_constant(0.8, 0.01)
    checks.append(Check("smoothness_constant", "alpha1=0.8 delta=0.01", u, "[1.57, 1.58]", 1.57 <= u <= 1.58))
    d, lc = reconcile_curvature()
    checks.append(Check("curvature_constant", f"alpha1=0.8 alpha2=1.2 rho=1/15 delta={d:.6g}", lc,
                        "0.0126 +- 5e-4", abs(lc - 0.0126) <= 5e-4))
    for name, val, ref in (("rho1", RHO1, 0.11119), ("t2", T2, 1.32968), ("rho2", RHO2, 0.16333)):
        checks.append(Check(f"boundary_{name}", "radical form", val, f"{ref} to 5 decimals", round(val, 5) == ref))
    hits, bad = region_violations(10_000, root.child(1))
    checks.append(Check("region_consistency", f"samples={hits}", float(bad), "0 violations", bad == 0))

    probes = cfg.probes or 1000
    x, A, obs = _noiseless(n, 20 * n, 0.8, 1.2, root.child(2))
    rep = probe_neighborhood(x, A, obs, 1.0 / 15.0, probes, root.child(3))
    params = f"n={n} m=20n alpha1=0.8 alpha2=1.2 rho=1/15 probes={probes}"
    checks.append(Check("smoothness_probe", params, rep.max_smoothness_ratio, "<= 1.58", rep.max_smoothness_ratio <= 1.58))
    checks.append(Check("curvature_probe", params, rep.min_curvature_ratio, ">= 0.0126", rep.min_curvature_ratio >= 0.0126))

    gen = root.child(4).generator()
    xc = random_unit_vector(n, gen)
    hc = random_unit_vector(n, gen)
    Ac = generate_measurements(xc, 200 * n, TARGET_MEAN_INTENSITY, root.child(5))
    for c in empirical_concentration(xc, hc, Ac, 0.05):
        checks.append(Check(f"concentration_{c.name}", f"n={n} m=200n delta=0.05", c.measured,
                            f"[{c.lower!r}, {c.upper!r}]", c.passed))

    xl, Al, obsl = _noiseless(n, 20 * n, 1.0, 1.0, root.child(6))
    r1 = empirical_gradient_lipschitz(xl, Al, obsl, 0.05, 200, root.child(7))
    r2 = empirical_gradient_lipschitz(xl, Al, obsl, 0.1, 200, root.child(8))
    ratio = max(r1, r2) / min(r1, r2)
    checks.append(Check("gradient_lipschitz_scale", f"n={n} m=20n s=0.05,0.1 pairs=200", ratio, "<= 2",
                        ratio <= 2.0 and math.isfinite(ratio)))
    return checks


def verify_table(checks: list[Check]) -> Table:
    return Table(("check_name", "param_summary", "measured", "bound", "pass"),
                 [(c.name, c.params, c.measured, c.bound, c.passed) for c in checks])


# ---------------------------------------------------------------- plots


def write_svg(path, series: dict[str, tuple[np.ndarray, np.ndarray]], xlabel: str, ylabel: str, logy=True) -> None:
    """Line plot of named (x, y) series as a reproducible SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "poissonwf", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, (xs, ys) in series.items():
            ax.plot(xs, ys, label=label)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def svg_series(kind: str, result) -> tuple[dict, str, str, bool]:
    if kind == "trace":
        return ({r: (np.arange(v.size), v) for r, v in result.mean_nrmse.items()}, "iteration", "mean NRMSE", True)
    if kind == "background":
        return ({f"alpha1={a}": (np.arange(v.size), v) for a, v in result.mean_nrmse.items()},
                "iteration", "mean NRMSE", True)
    if kind == "sweep":
        rows = result.rows
        return ({rows[0].rule_name: ([r.m_over_n for r in rows], [r.success_rate for r in rows])},
                "m/n", "success rate", False)
    if kind == "compare":
        series = {}
        for r in result.rows:
            xs, ys = series.setdefault(f"{r.model} model, {r.noise_type} noise", ([], []))
            xs.append(r.m_over_n)
            ys.append(r.mean_final_nrmse)
        return series, "m/n", "mean final NRMSE", True
    raise InvalidParameterError(f"no plot for {kind}")


def sibling(path, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.stem + suffix)
