"""Acceptance suite: one PASS/FAIL line per criterion at its stated tolerance.

Runs the stock experiments at their default (desk) scale, so the whole
module takes several minutes.
"""

import math

import numpy as np
import pytest

from inputuq import lane_change as lc
from inputuq.bootstrap_uq import lr_reuse_estimates
from inputuq.cli import main
from inputuq.experiments.av_demo import run_av_demo
from inputuq.experiments.config import default_config
from inputuq.experiments.runner import substream
from inputuq.experiments.tables import run_table1, run_table2
from inputuq.experiments.variance import run_variance_decomposition_check
from inputuq.input_models import Gaussian
from inputuq.monte_carlo import PerformanceFunction, is_estimate, normal_sf, run_batch

SF5 = 2.8665157187919391e-7  # high-precision erfc oracle

TABLE1_TARGETS = {
    "plain": {10: (84.7, 84.7), 20: (91.4, 91.4), 100: (94.1, 94.1)},
    "parametric": {10: (92.2, 92.2), 20: (93.1, 93.1), 100: (95.1, 95.1)},
    "asym-closed": {10: (88.3, 90.2), 20: (92.0, 95.2), 100: (92.0, 95.2)},
    "asym-empirical": {10: (88.3, 90.2), 20: (92.0, 95.2), 100: (92.0, 95.2)},
}
TABLE2_CF_COVERAGE = {100: 0.9432, 1000: 0.9451}
TABLE2_CF_WIDTH = {100: 1.33e-5, 1000: 8.85e-7}
TABLE2_SU_MAX = {100: 0.10, 1000: 0.15}


@pytest.fixture(scope="module")
def table2_result():
    return run_table2(default_config("table2"))


@pytest.fixture(scope="module")
def av_result():
    return run_av_demo(default_config("av-demo"))


def tail(beta):
    return PerformanceFunction(lambda x: (x[:, 0] > beta).astype(float), name=f"tail>{beta}")


def test_c1_table1_coverage(report):
    reports = run_table1(default_config("table1"))
    bad = []
    cells = []
    for r in reports:
        lo, hi = TABLE1_TARGETS[r.method][r.k]
        pct = 100 * r.coverage
        cells.append(f"{r.method}/k={r.k}={pct:.1f}%")
        if not lo - 3.0 <= pct <= hi + 3.0:
            bad.append(cells[-1])
    ok = report("C1 Table I coverage within 3pp", not bad, ", ".join(cells))
    assert ok, bad


def test_c2_table2_desk_scale(report, table2_result):
    by = {(r.method, r.k): r for r in table2_result.reports}
    checks = []
    for k in (100, 1000):
        cf, lr, su = by["CF", k], by["LR", k], by["SU", k]
        checks += [
            (f"CF cov k={k} {cf.coverage:.4f}", abs(cf.coverage - TABLE2_CF_COVERAGE[k]) <= 0.03),
            (f"LR cov k={k} {lr.coverage:.4f}", abs(lr.coverage - cf.coverage) <= 0.03),
            (f"CF width k={k} {cf.mean_width:.3e}", abs(cf.mean_width / TABLE2_CF_WIDTH[k] - 1) <= 0.25),
            (f"SU cov k={k} {su.coverage:.4f}", su.coverage <= TABLE2_SU_MAX[k]),
        ]
    ok = report("C2 Table II desk scale", all(c for _, c in checks),
                ", ".join(f"{d}{'' if c else ' (out)'}" for d, c in checks))
    assert ok


def test_c3_is_correctness(report):
    perf = tail(5.0)
    batch = run_batch(Gaussian(5.0, 1.0), Gaussian(0.0, 1.0), perf, 100_000, substream(20190, "acceptance/c3"))
    est = is_estimate(batch)
    crude_se = math.sqrt(SF5 * (1 - SF5) / batch.size)
    z = abs(est.point - SF5) / est.stderr
    ratio = crude_se / est.stderr
    ok = report("C3 IS correctness", z <= 3 and ratio >= 100,
                f"estimate {est.point:.6e}, |z|={z:.2f}, crude/IS stderr ratio {ratio:.0f}")
    assert ok


def test_c4_lr_unbiasedness(report):
    params = np.array([
        [0.0, 1.0], [0.1, 1.0], [-0.1, 1.0], [0.2, 0.95], [-0.2, 1.05],
        [0.05, 1.1], [-0.05, 0.9], [0.15, 1.08], [-0.15, 0.93], [0.0, 1.12],
    ])
    truth = normal_sf((5.0 - params[:, 0]) / params[:, 1])
    nominal = Gaussian(0.0, 1.0)
    perf = tail(5.0)
    est = np.empty((200, len(params)))
    for s in range(200):
        batch = run_batch(Gaussian(5.0, 1.0), nominal, perf, 10_000, substream(20190, "acceptance/c4", s))
        before = perf.calls
        est[s] = lr_reuse_estimates(params, batch, diagnostics=False).estimates
        assert perf.calls == before
    se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
    z = np.abs(est.mean(axis=0) - truth) / se
    ok = report("C4 LR-reuse unbiasedness", bool((z <= 5).all()),
                f"max |z| over 10 replicates = {z.max():.2f} (200 seeds)")
    assert ok


def test_c5_zero_extra_trials(report, table2_result, av_result):
    rng = np.random.default_rng(5)
    perf = tail(2.0)
    batch = run_batch(Gaussian(2.0, 1.0), Gaussian(0.0, 1.0), perf, 5000, rng)
    before = perf.calls
    lr_reuse_estimates(rng.normal([0, 1], [0.1, 0.05], size=(300, 2)), batch)
    direct = perf.calls - before
    total = direct + table2_result.lr_extra_calls + av_result.lr_extra_calls
    ok = report("C5 zero extra trials", total == 0,
                f"extra perf calls: direct {direct}, table2 {table2_result.lr_extra_calls}, "
                f"av-demo {av_result.lr_extra_calls}")
    assert ok


def test_c6_figure3_structure(report, av_result):
    rows = {r["n"]: r for r in av_result.rows}
    ns = [1000, 10_000, 100_000]
    su = np.array([rows[n]["su_width"] for n in ns])
    slope = float(np.polyfit(np.log(ns), np.log(su), 1)[0])
    iu = np.array([r["iu_width"] for r in av_result.rows if r["n"] >= 10_000])
    variation = float((iu.max() - iu.min()) / iu.min())
    wider = rows[100_000]["iu_width"] > rows[100_000]["su_width"]
    ok = report(
        "C6 Figure 3 structure",
        -0.6 <= slope <= -0.4 and variation < 0.2 and wider,
        f"SU log-slope {slope:.3f} (need [-0.6, -0.4]), LR width variation {100 * variation:.1f}% (need < 20%), "
        f"input width {rows[100_000]['iu_width']:.3e} vs SU width {rows[100_000]['su_width']:.3e}",
    )
    assert ok


def test_c6_oracle_crude_mc_agreement(report, av_result):
    model = av_result.fitted.model
    rng = substream(20190, "acceptance/crude-oracle")
    total, chunk, hits = 100_000_000, 5_000_000, 0
    for _ in range(total // chunk):
        hits += int(lc.crash_array(model.sample(chunk, rng)).sum())
    gamma = hits / total
    crude_se = math.sqrt(gamma * (1 - gamma) / total)
    row = av_result.rows[-1]
    z = abs(row["estimate"] - gamma) / math.hypot(row["stderr"], crude_se)
    ok = report("C6 oracle: IS at n=1e5 vs 1e8 crude MC", z <= 3,
                f"IS {row['estimate']:.4e} +- {row['stderr']:.1e}, crude {gamma:.4e} +- {crude_se:.1e}, z={z:.2f}")
    assert ok


def test_c7_variance_decomposition(report):
    rep = run_variance_decomposition_check(default_config("var-check"))
    shares = [r.simulation_share for r in rep.n_trend]
    monotone = all(a > b for a, b in zip(shares, shares[1:]))
    k_ratio = rep.k_trend[0].input_term / rep.k_trend[-1].input_term
    ok = report("C7 variance decomposition gap < 10%", rep.main.gap < 0.10,
                f"gap {100 * rep.main.gap:.2f}%, simulation share over n {[round(s, 3) for s in shares]}, "
                f"input term k=100 / k=10000 ratio {k_ratio:.0f}")
    assert ok and monotone


def test_c8_determinism(report, tmp_path, capsys):
    import json

    configs = {
        "table1": {"reps": 20, "k_values": [10, 100], "replicates": 100},
        "table2": {"reps": 10, "k_values": [100], "replicates": 50, "n": 2000},
        "av-demo": {"n_grid": [1000, 5000], "replicates": 50},
        "var-check": {"reps": 40, "inner": 30, "lhs_pairs": 3000, "trend_reps": 10, "trend_inner": 5,
                      "n_grid": [10, 100]},
    }
    data = tmp_path / "xi.csv"
    data.write_text("xi\n" + "\n".join(repr(float(v)) for v in np.random.default_rng(1).standard_normal(200)) + "\n")
    sampling = tmp_path / "q.json"
    sampling.write_text(json.dumps({"family": "gaussian", "mu": 3.0, "sigma": 1.0}))
    mismatched = []
    for threads_a, threads_b in ((1, 1), (1, 4)):
        outs = []
        for tag, threads in (("a", threads_a), ("b", threads_b)):
            root = tmp_path / f"{threads_a}{threads_b}{tag}"
            for name, fields in configs.items():
                cfg = tmp_path / f"{name}.json"
                cfg.write_text(json.dumps({"experiment": name, **fields}))
                assert main([name, "--config", str(cfg), "--out", str(root / name), "--threads", str(threads)]) == 0
            user = root / "user"
            t = ["--threads", str(threads), "--seed", "9", "--out", str(user)]
            assert main(["fit", str(data), "--family", "gaussian", *t]) == 0
            assert main(["estimate", "--model", str(user / "fit.json"), "--sampling", str(sampling),
                         "--beta", "3", "-n", "20000", *t]) == 0
            assert main(["uq", "--batch", str(user / "batch.csv"), "--replicates", "200", *t]) == 0
            outs.append(root)
        for f in sorted(outs[0].rglob("*.csv")):
            if f.read_bytes() != (outs[1] / f.relative_to(outs[0])).read_bytes():
                mismatched.append(f"{threads_a}v{threads_b}:{f.relative_to(outs[0])}")
        count = len(list(outs[0].rglob("*.csv")))
    capsys.readouterr()
    ok = report("C8 determinism across runs and thread counts", not mismatched,
                f"{count} CSVs compared per pair for all 7 subcommands; mismatches: {mismatched or 'none'}")
    assert ok
