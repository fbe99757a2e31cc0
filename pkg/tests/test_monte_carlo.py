import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inputuq.errors import ModelMismatchError, PerformanceEvaluationError
from inputuq.input_models import Exponential, Gaussian, Product, fit_mle
from inputuq.monte_carlo import (
    ExperimentBatch,
    IntervalKind,
    PerformanceFunction,
    clt_ci,
    crude_estimate,
    is_estimate,
    normal_quantile,
    normal_sf,
    run_batch,
)

# high-precision erfc values, frozen
SF5 = 2.8665157187919391e-7
SF1_959964 = 0.024999999096442404
SF2 = 0.022750131948179207
Z975 = 1.9599639845400542


def tail(beta):
    return PerformanceFunction(lambda x: (x[:, 0] > beta).astype(float), name=f"tail>{beta}")


def make_batch(outputs, log_ratio=0.0):
    n = len(outputs)
    g = Gaussian(0.0, 1.0)
    x = np.zeros((n, 1))
    logq = g.log_density(x) - log_ratio
    return ExperimentBatch(x, np.asarray(outputs, float), g, logq, g)


def test_frozen_oracles_match_mpmath():
    mpmath.mp.dps = 30
    sf = lambda v: float(mpmath.erfc(mpmath.mpf(v) / mpmath.sqrt(2)) / 2)
    assert sf(5) == pytest.approx(SF5, rel=1e-15)
    assert sf("1.959964") == pytest.approx(SF1_959964, rel=1e-15)
    assert float(mpmath.sqrt(2) * mpmath.erfinv(mpmath.mpf("0.95"))) == pytest.approx(Z975, rel=1e-15)


def test_normal_quantile_examples():
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(0.975) == pytest.approx(Z975, abs=1e-12)
    assert normal_quantile(0.025) == pytest.approx(-normal_quantile(0.975), abs=1e-15)
    for bad in (0.0, 1.0, -0.1, float("nan")):
        with pytest.raises(ValueError):
            normal_quantile(bad)


def test_normal_quantile_accuracy_budget():
    mpmath.mp.dps = 40
    us = np.concatenate([np.logspace(-10, -1, 60), np.linspace(0.05, 0.95, 61), 1 - np.logspace(-10, -1, 60)])
    worst = 0.0
    for u in us:
        exact = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(float(u)) - 1))
        worst = max(worst, abs(normal_quantile(u) - exact))
    assert worst <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-10, 1 - 1e-10))
def test_normal_quantile_inverts_cdf(u):
    assert float(normal_sf(-normal_quantile(u))) == pytest.approx(u, rel=1e-8, abs=1e-15)


def test_normal_sf_far_tail():
    assert float(normal_sf(5.0)) == pytest.approx(SF5, rel=1e-13)


def test_clt_ci_symmetry_and_validation():
    lo, hi = clt_ci(0.3, 0.04, 0.05)
    assert (lo + hi) / 2 == pytest.approx(0.3, abs=1e-16)
    assert hi - 0.3 == pytest.approx(Z975 * 0.2, rel=1e-12)
    with pytest.raises(ValueError):
        clt_ci(0.0, -1.0)
    with pytest.raises(ValueError):
        clt_ci(0.0, 1.0, 1.5)


def test_clt_ci_coverage():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((10_000, 100))
    means, var = x.mean(axis=1), x.var(axis=1, ddof=1) / 100
    half = normal_quantile(0.975) * np.sqrt(var)
    cover = np.mean(np.abs(means) <= half)
    assert 0.94 <= cover <= 0.96


def test_crude_estimate_examples():
    est = crude_estimate(make_batch([0, 0, 1, 1]))
    assert est.point == 0.5 and est.kind is IntervalKind.CLT_SIMULATION_ONLY
    zero = crude_estimate(make_batch([0, 0, 0]))
    assert (zero.point, zero.stderr, zero.lower, zero.upper) == (0.0, 0.0, 0.0, 0.0)


def test_crude_estimate_at_1_96():
    g = Gaussian(0.0, 1.0)
    b = run_batch(g, g, tail(1.959964), 1_000_000, np.random.default_rng(13))
    assert 0.024 <= crude_estimate(b).point <= 0.026


def test_crude_estimate_rejects_tilted_batch():
    b = run_batch(Gaussian(5, 1), Gaussian(0, 1), tail(5.0), 10, np.random.default_rng(0))
    with pytest.raises(ModelMismatchError):
        crude_estimate(b)


def test_is_estimate_trivial_cases():
    one = is_estimate(make_batch([1.0], log_ratio=math.log(0.3)))
    assert one.point == pytest.approx(0.3, rel=1e-15) and one.stderr == 0.0
    g = Gaussian(1.0, 2.0)
    b = run_batch(g, Gaussian(0, 1), tail(1.5), 500, np.random.default_rng(1))
    assert is_estimate(b, target_model=g).point == b.outputs.mean()


def test_is_gaussian_tail():
    perf = tail(5.0)
    b = run_batch(Gaussian(5.0, 1.0), Gaussian(0.0, 1.0), perf, 100_000, np.random.default_rng(14))
    est = is_estimate(b)
    assert abs(est.point - SF5) <= 3 * est.stderr
    crude_se = math.sqrt(SF5 * (1 - SF5) / 1e5)
    assert est.stderr * 100 <= crude_se


def test_is_variance_reduction_at_1e4():
    b = run_batch(Gaussian(5.0, 1.0), Gaussian(0.0, 1.0), tail(5.0), 10_000, np.random.default_rng(15))
    assert is_estimate(b).stderr * 100 <= math.sqrt(SF5 * (1 - SF5) / 1e4)


def test_is_and_crude_agree_at_beta_2():
    rng = np.random.default_rng(16)
    nominal = Gaussian(0.0, 1.0)
    crude = crude_estimate(run_batch(nominal, nominal, tail(2.0), 200_000, rng))
    for mu in (1.0, 2.0, 2.5):
        est = is_estimate(run_batch(Gaussian(mu, 1.0), nominal, tail(2.0), 200_000, rng))
        assert abs(est.point - crude.point) <= 5 * math.hypot(est.stderr, crude.stderr)
        assert abs(est.point - SF2) <= 5 * est.stderr


def test_run_batch_examples():
    rng = np.random.default_rng(17)
    const = PerformanceFunction(lambda x: np.ones(len(x)))
    b = run_batch(Exponential(1.0), Exponential(2.0), const, 100, rng)
    assert (b.outputs == 1).all() and const.calls == 100
    g = Gaussian(0, 1)
    assert run_batch(g, g, tail(5.0), 10_000, rng).outputs.sum() == 0
    half = run_batch(Gaussian(5, 1), g, tail(5.0), 10_000, rng).outputs.mean()
    assert 0.47 < half < 0.53


def test_run_batch_counts_and_is_thread_independent():
    model = Product((Exponential(1.0), Gaussian(0, 1)))
    perf = PerformanceFunction(lambda x: x[:, 0] + x[:, 1])
    a = run_batch(model, model, perf, 20_000, np.random.default_rng(5), threads=1, chunk_size=1000)
    b = run_batch(model, model, perf, 20_000, np.random.default_rng(5), threads=4, chunk_size=1000)
    assert perf.calls == 40_000
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.outputs, b.outputs)
    assert a.logdensity_consistent()


def test_perf_failures_carry_sample():
    bad = PerformanceFunction(lambda x: np.where(x[:, 0] > 0, np.nan, 0.0))
    with pytest.raises(PerformanceEvaluationError) as err:
        run_batch(Gaussian(0, 1), Gaussian(0, 1), bad, 50, np.random.default_rng(0))
    assert err.value.samples is not None

    def boom(p):
        raise RuntimeError("sim crashed")

    scalar = PerformanceFunction(boom, vectorized=False)
    with pytest.raises(PerformanceEvaluationError):
        run_batch(Gaussian(0, 1), Gaussian(0, 1), scalar, 3, np.random.default_rng(0))


def test_batch_is_immutable_and_validated():
    b = make_batch([0.0, 1.0])
    with pytest.raises(ValueError):
        b.outputs[0] = 5.0
    g = Gaussian(0, 1)
    with pytest.raises(ValueError):
        ExperimentBatch(np.zeros((2, 1)), np.zeros(3), g, np.zeros(2), g)
    with pytest.raises(ValueError):
        ExperimentBatch(np.zeros((0, 1)), np.zeros(0), g, np.zeros(0), g)


def test_batch_head():
    b = run_batch(Gaussian(5, 1), Gaussian(0, 1), tail(5.0), 100, np.random.default_rng(0))
    h = b.head(10)
    assert h.size == 10
    np.testing.assert_array_equal(h.outputs, b.outputs[:10])
    with pytest.raises(ValueError):
        b.head(0)


def test_batch_save_load_bit_exact(tmp_path):
    rng = np.random.default_rng(21)
    data = np.column_stack([rng.exponential(0.3, 40), rng.normal(size=40)])
    fitted = fit_mle((Exponential, Gaussian), data)
    sampling = fitted.model.tilt([1.0, 0.5])
    perf = PerformanceFunction(lambda x: x[:, 0] * (x[:, 1] > 0))
    b = run_batch(sampling, fitted, perf, 300, rng)
    b.save(tmp_path / "batch.csv", {"seed": 21})
    back = ExperimentBatch.load(tmp_path / "batch.csv")
    np.testing.assert_array_equal(back.samples, b.samples)
    np.testing.assert_array_equal(back.outputs, b.outputs)
    np.testing.assert_array_equal(back.sampling_logdensity, b.sampling_logdensity)
    assert back.sampling_model == b.sampling_model
    assert back.nominal_model.model == fitted.model
    assert is_estimate(back).point == is_estimate(b).point
