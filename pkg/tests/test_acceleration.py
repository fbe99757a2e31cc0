import math

import numpy as np
import pytest

from inputuq.acceleration import CEConfig, _clamp, cross_entropy_tilt, is_second_moment, write_trajectory
from inputuq.errors import CrossEntropyError
from inputuq.input_models import Exponential, Gaussian
from inputuq.monte_carlo import ExperimentBatch, PerformanceFunction, is_estimate, run_batch

SF5 = 2.8665157187919391e-7
# exp(75) * sf(15): IS second moment of N(5,1) sampling for the N(0,1) tail past 5 (mpmath)
SECOND_MOMENT_5 = 1.3704605184103976e-18


def tail(beta):
    return PerformanceFunction(lambda x: (x[:, 0] > beta).astype(float))


def test_config_validation():
    with pytest.raises(ValueError):
        CEConfig(severity=abs, elite_fraction=0.0)
    with pytest.raises(ValueError):
        CEConfig(severity=abs, samples_per_iter=50, elite_fraction=0.1)
    with pytest.raises(ValueError):
        CEConfig(severity=abs, smoothing=0.0)


def test_gaussian_tail_target():
    res = cross_entropy_tilt(Gaussian(0.0, 1.0), CEConfig(severity=lambda x: x[:, 0] - 5.0), np.random.default_rng(0))
    assert res.converged
    assert 4.0 <= res.model.mu <= 6.0
    assert res.model.sigma == 1.0
    levels = [it.level for it in res.trajectory]
    assert levels[-1] == 0.0 and levels == sorted(levels, reverse=True)
    tilt, model = res
    assert model is res.model and tilt is res.tilt


def test_non_rare_event_converges_immediately():
    res = cross_entropy_tilt(Gaussian(0.0, 1.0), CEConfig(severity=lambda x: x[:, 0]), np.random.default_rng(1))
    assert len(res.trajectory) == 1 and res.trajectory[0].level == 0.0
    assert abs(res.tilt[0]) < 1.0


def test_ce_stderr_close_to_optimal_shift():
    nominal = Gaussian(0.0, 1.0)
    res = cross_entropy_tilt(nominal, CEConfig(severity=lambda x: x[:, 0] - 5.0), np.random.default_rng(2))
    rng = np.random.default_rng(3)
    ce = is_estimate(run_batch(res.model, nominal, tail(5.0), 10_000, rng))
    best = is_estimate(run_batch(Gaussian(5.0, 1.0), nominal, tail(5.0), 10_000, rng))
    assert ce.stderr <= 1.2 * best.stderr
    assert abs(ce.point - SF5) <= 4 * ce.stderr


def test_exponential_tilt_toward_large_values():
    nominal = Exponential(1.0)
    res = cross_entropy_tilt(nominal, CEConfig(severity=lambda x: x[:, 0] - 15.0), np.random.default_rng(4))
    # optimal exponential proposal for x > 15 has mean 16
    assert 12 < res.model.mean[0] < 20
    assert 0 < res.tilt[0] < 1.0
    est = is_estimate(run_batch(res.model, nominal, tail(15.0), 20_000, np.random.default_rng(5)))
    assert abs(est.point - math.exp(-15)) <= 4 * est.stderr


def test_stall_raises_with_trajectory():
    cfg = CEConfig(severity=lambda x: np.full(len(x), -1.0), stall_limit=3)
    with pytest.raises(CrossEntropyError) as err:
        cross_entropy_tilt(Gaussian(0.0, 1.0), cfg, np.random.default_rng(6))
    assert len(err.value.trajectory) == 4


def test_max_iters_without_convergence():
    cfg = CEConfig(severity=lambda x: x[:, 0] - 1e6, max_iters=2)
    res = cross_entropy_tilt(Gaussian(0.0, 1.0), cfg, np.random.default_rng(7))
    assert not res.converged and len(res.trajectory) == 2


def test_clamp_flags_boundary_violations():
    out, flagged = _clamp(np.array([0.5, 3.0]), np.array([1.0, 2.0]))
    assert flagged and out.tolist() == [0.5, 1.9]
    out, flagged = _clamp(np.array([0.5]), np.array([np.inf]))
    assert not flagged and out.tolist() == [0.5]


def test_reproducible_given_seed():
    cfg = CEConfig(severity=lambda x: x[:, 0] - 4.0)
    a = cross_entropy_tilt(Gaussian(0, 1), cfg, np.random.default_rng(8))
    b = cross_entropy_tilt(Gaussian(0, 1), cfg, np.random.default_rng(8))
    assert a.model == b.model and len(a.trajectory) == len(b.trajectory)


def test_trajectory_csv(tmp_path):
    res = cross_entropy_tilt(Gaussian(0, 1), CEConfig(severity=lambda x: x[:, 0] - 3.0), np.random.default_rng(9))
    write_trajectory(res.trajectory, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,level,tilt0,elite_count,clamped"
    assert len(lines) == len(res.trajectory) + 1


def test_second_moment_examples():
    g = Gaussian(0, 1)
    zeros = ExperimentBatch(np.zeros((5, 1)), np.zeros(5), g, np.zeros(5), g)
    assert is_second_moment(zeros) == 0.0
    x = np.zeros((4, 1))
    w = 0.37
    const = ExperimentBatch(x, np.ones(4), g, g.log_density(x) - math.log(w), g)
    assert is_second_moment(const) == pytest.approx(w * w, rel=1e-14)


def test_second_moment_against_integral():
    b = run_batch(Gaussian(5.0, 1.0), Gaussian(0.0, 1.0), tail(5.0), 100_000, np.random.default_rng(10))
    assert is_second_moment(b) == pytest.approx(SECOND_MOMENT_5, rel=0.2)
