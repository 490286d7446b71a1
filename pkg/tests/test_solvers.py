import numpy as np
import pytest

from poissonwf import (
    Constant,
    FisherInfo,
    Heuristic,
    InvalidParameterError,
    ModelKind,
    OraclePerturbation,
    PowerSpectral,
    RngStream,
    SolverConfig,
    distance,
    gradient,
    gradient_single,
    initialize,
    iwf_solve,
    nrmse,
    wf_solve,
)
from poissonwf.experiments import make_problem

from conftest import make_instance


def test_start_at_truth_is_converged():
    x, A, obs = make_instance(10, 60, seed=1)
    tr = wf_solve(x, A, obs, x, SolverConfig(max_iters=50))
    assert tr.converged and tr.total_iters == 0
    assert tr.final_nrmse == 0.0
    assert np.array_equal(tr.final_z, x)


def test_oracle_perturbation_radius():
    x, A, obs = make_instance(20, 100, seed=2)
    for t in range(50):
        z0 = initialize(x, A, obs, OraclePerturbation(1 / 15), RngStream(2, t))
        assert nrmse(x, z0) <= 1 / 15 + 1e-15
    z0 = initialize(x, A, obs, OraclePerturbation(1e-9), RngStream(3))
    assert nrmse(x, z0) < 2e-9
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(InvalidParameterError):
            initialize(x, A, obs, OraclePerturbation(bad), RngStream(0))


def test_power_spectral_start():
    errs = []
    for t in range(20):
        x, A, obs = make_instance(16, 50 * 16, seed=100 + t)
        z0 = initialize(None, A, obs, PowerSpectral(100), RngStream(9, t))
        errs.append(nrmse(x, z0))
    assert np.median(errs) < 0.5
    assert np.mean(np.array(errs) < 0.5) >= 0.9


def test_records_and_oracle_independence():
    x, A, obs, z0 = make_problem(16, 80, 1e-3, 0.5, 2.0, RngStream(4))
    cfg = SolverConfig(rule=Heuristic(), max_iters=37, record_every=5)
    with_x = wf_solve(x, A, obs, z0, cfg)
    blind = wf_solve(None, A, obs, z0, cfg)
    assert np.array_equal(with_x.final_z, blind.final_z)
    assert list(with_x.iters) == [0, 5, 10, 15, 20, 25, 30, 35, 37]
    assert np.all(np.isnan(blind.nrmse)) and not blind.converged
    assert np.array_equal(with_x.objective, blind.objective)


def test_tolerance_stops_early():
    x, A, obs, z0 = make_problem(16, 96, 0.0, 1.0, 1.0, RngStream(5))
    tr = wf_solve(x, A, obs, z0, SolverConfig(max_iters=2000, nrmse_tol=1e-3))
    assert tr.converged
    assert tr.final_nrmse <= 1e-3 < tr.nrmse[-2]
    assert tr.total_iters < 2000


def test_noiseless_small_step_is_monotone():
    x, A, obs, z0 = make_problem(32, 8 * 32, 0.0, 1.0, 1.0, RngStream(6))
    tr = wf_solve(x, A, obs, z0, SolverConfig(rule=Constant(0.01), max_iters=300))
    assert np.all(np.diff(tr.nrmse) < 0)


@pytest.mark.parametrize("rule", [Heuristic(), Constant(0.2), FisherInfo()])
def test_rules_reduce_error(rule):
    x, A, obs, z0 = make_problem(32, 5 * 32, 1e-3, 1.0, 1.0, RngStream(7))
    tr = wf_solve(x, A, obs, z0, SolverConfig(rule=rule, max_iters=300))
    assert tr.final_nrmse < 0.1 * tr.nrmse[0]
    assert np.all(tr.steps > 0)


def test_fisher_faster_than_constant():
    x, A, obs, z0 = make_problem(32, 5 * 32, 0.0, 1.0, 1.0, RngStream(8))
    fisher = wf_solve(x, A, obs, z0, SolverConfig(rule=FisherInfo(), max_iters=100))
    const = wf_solve(x, A, obs, z0, SolverConfig(rule=Constant(0.2), max_iters=100))
    assert fisher.final_nrmse < const.final_nrmse


def test_gaussian_model_converges_noiseless():
    x, A, obs, z0 = make_problem(32, 5 * 32, 0.0, 1.0, 1.0, RngStream(9))
    tr = wf_solve(x, A, obs, z0, SolverConfig(model=ModelKind.GAUSSIAN, max_iters=500))
    assert tr.final_nrmse < 1e-4


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        SolverConfig(model=ModelKind.GAUSSIAN, rule=FisherInfo())
    for kwargs in (dict(max_iters=0), dict(nrmse_tol=-1.0), dict(record_every=0), dict(iwf_mu_scale=0.0)):
        with pytest.raises(InvalidParameterError):
            SolverConfig(**kwargs)
    x, A, obs = make_instance(4, 20)
    with pytest.raises(InvalidParameterError):
        iwf_solve(x, A, obs, x, SolverConfig(model=ModelKind.GAUSSIAN), RngStream(0))


def test_iwf_fixed_at_truth():
    x, A, obs = make_instance(10, 100, seed=10)
    tr = iwf_solve(x, A, obs, x, SolverConfig(max_iters=2000, record_every=500), RngStream(1))
    assert distance(x, tr.final_z) <= 1e-12 * np.linalg.norm(x)


def test_iwf_single_terms_are_unbiased():
    x, A, obs, z0 = make_problem(8, 80, 1e-3, 0.5, 2.0, RngStream(11))
    z = z0
    for s in range(5):
        cfg = SolverConfig(max_iters=100, record_every=100)
        z = iwf_solve(x, A, obs, z, cfg, RngStream(11, s)).final_z
        avg = np.mean([gradient_single(z, A, obs, j) for j in range(A.m)], axis=0)
        full = gradient(z, A, obs)
        assert np.linalg.norm(avg - full) <= 1e-10 * np.linalg.norm(full)


def test_iwf_converges_and_is_seeded():
    x, A, obs, z0 = make_problem(20, 200, 0.0, 1.0, 1.0, RngStream(12))
    cfg = SolverConfig(max_iters=20_000, record_every=1000)
    a = iwf_solve(x, A, obs, z0, cfg, RngStream(12, 0, (5,)))
    b = iwf_solve(x, A, obs, z0, cfg, RngStream(12, 0, (5,)))
    assert np.array_equal(a.final_z, b.final_z)
    assert a.final_nrmse < 0.1 * a.nrmse[0]
    assert a.iters[-1] == 20_000 and len(a.iterations) == 21


def test_error_scales_linearly_with_noise():
    n, m, trials = 64, 640, 50
    means = []
    for eta in (1e-4, 1e-3, 1e-2):
        finals = []
        for t in range(trials):
            x, A, obs, z0 = make_problem(n, m, eta, 1.0, 1.0, RngStream(13, t))
            tr = wf_solve(x, A, obs, z0, SolverConfig(max_iters=2000, record_every=2000))
            finals.append(tr.final_nrmse)
        means.append(np.mean(finals))
    slope = np.polyfit(np.log10([1e-4, 1e-3, 1e-2]), np.log10(means), 1)[0]
    assert 0.8 <= slope <= 1.2
