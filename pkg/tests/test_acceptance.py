"""The ten acceptance criteria. Each test records one PASS/FAIL line, shown
at the end of the pytest run and when this file is run as a script."""
import itertools
import math
import time

import numpy as np
from scipy.stats import linregress

from acceptance_log import record
from instances import instances, tabular_instances
from oracles import bayes_and_ml_error, brute_mi, gt_channel
from supportbounds import (
    Bernoulli,
    DiscreteDistribution,
    DiscreteIID,
    Fixed,
    Gaussian,
    GroupTestingNoiseless,
    LinearGaussian,
    MissingWrap,
    ProblemDims,
    Probit,
    SupportPartition,
    TabularDiscrete,
    bounds_group_testing,
    bounds_multivariate,
    eo_second_derivative_bound,
    eo_single_letter,
    finite_size_error_bound,
    mi_discrete_exact,
    mi_group_testing,
    mi_linear_gaussian,
    mi_missing,
    mi_monte_carlo,
    mi_probit,
    ml_decode_batch,
    necessity_threshold,
    run_trials,
    snr_necessity_linear,
    validate_bound,
)
from supportbounds.bounds import gt_figure_rows, linear_lower_bound, necessity_missing
from supportbounds.exponent import central_derivative_at_zero, second_difference
from supportbounds.info import product_channel


def _partitions(k):
    return [SupportPartition.with_unknown(i, k) for i in range(1, k + 1)]


def test_criterion_01_exponent_identities():
    t0 = time.time()
    worst_e0 = worst_rel = 0.0
    for inst in instances():
        for part in _partitions(inst.k):
            worst_e0 = max(worst_e0, abs(eo_single_letter(inst.model, inst.q, inst.beta, part, 0.0)))
            mi = mi_discrete_exact(inst.model, inst.q, inst.beta, part).value
            d = central_derivative_at_zero(inst.model, inst.q, inst.beta, part)
            worst_rel = max(worst_rel, abs(d - mi) / mi)
    secs = time.time() - t0
    ok = worst_e0 <= 1e-12 and worst_rel <= 1e-6 and secs < 10
    record(1, ok, f"max|E_o(0)|={worst_e0:.2e}, max rel derivative error={worst_rel:.2e}", secs)
    assert ok


def test_criterion_02_closed_forms_vs_oracles():
    t0 = time.time()
    worst_gt = 0.0
    for k in range(1, 5):
        for p in (0.1, 0.5, 1.0 / k):
            if not 0 < p < 1:
                continue
            pmf = (1 - p, p)
            for i in range(1, k + 1):
                worst_gt = max(worst_gt, abs(mi_group_testing(p, i, k).value - brute_mi(gt_channel, pmf, k, i)))
    part = SupportPartition.with_unknown(1, 2)
    lin_ref = mi_linear_gaussian([1.0], 10.0, 10).value
    pro_ref = mi_probit(1, 2).value
    hits = {"linear": 0, "probit": 0}
    for seed in range(100):
        e = mi_monte_carlo(LinearGaussian(10.0), Gaussian(0.1), [1.0, 1.0], part, 10**6, seed)
        hits["linear"] += abs(e.value - lin_ref) <= 3 * e.std_error
        e = mi_monte_carlo(Probit(), Gaussian(1.0), [1.0, 1.0], part, 10**6, seed)
        hits["probit"] += abs(e.value - pro_ref) <= 3 * e.std_error
    secs = time.time() - t0
    ok = worst_gt <= 1e-12 and min(hits.values()) >= 99 and secs < 300
    record(2, ok, f"GT max abs error={worst_gt:.2e}, MC within 3 se: {hits}", secs)
    assert ok


def test_criterion_03_exact_two_variable_case():
    t0 = time.time()
    model, q = GroupTestingNoiseless(), Bernoulli(p=0.5)
    worst, consistent, below = 0.0, True, True
    for t in range(1, 21):
        dims = ProblemDims(2, 1, t)
        bound = finite_size_error_bound(dims, model, q, None)
        worst = max(worst, abs(bound.union_bound - 2.0**-t))
        rep = run_trials(model, q, None, dims, 10**5, seed=t)
        exact = 2.0 ** (-t - 1)
        consistent &= rep.ci_lo <= exact <= rep.ci_hi
        below &= validate_bound(rep, bound).passed and exact <= bound.union_bound
    secs = time.time() - t0
    ok = worst <= 1e-12 and consistent and below and secs < 60
    record(3, ok, f"max|bound-2^-T|={worst:.1e}, exact value inside Wilson CI: {consistent}, below bound: {below}", secs)
    assert ok


CONTAINMENT = [
    ("gt N=10", GroupTestingNoiseless(), Bernoulli(p=0.5), None, 10, 18),
    ("gt N=20", GroupTestingNoiseless(), Bernoulli(p=0.5), None, 20, 24),
    ("linear snr=1e2", LinearGaussian(100.0), None, Fixed((1.0, 1.0)), 16, 5),
    ("linear snr=1e3", LinearGaussian(1000.0), None, Fixed((1.0, 1.0)), 16, 3),
    ("probit N=12", Probit(), Gaussian(1.0), Fixed((1.0, 1.0)), 12, 50),
    ("missing gt rho=0.3", MissingWrap(GroupTestingNoiseless(), 0.3), Bernoulli(p=0.5), None, 10, 25),
]


def test_criterion_04_bound_containment():
    t0 = time.time()
    lines, ok = [], True
    for name, model, q, prior, n, t in CONTAINMENT:
        q = Gaussian(1.0 / t) if q is None else q
        dims = ProblemDims(n, 2, t)
        bound = finite_size_error_bound(dims, model, q, prior)
        rep = run_trials(model, q, prior, dims, 2 * 10**4, seed=2024)
        v = validate_bound(rep, bound)
        ok &= v.passed and not v.skipped
        lines.append(f"{name}: ci_lo={rep.ci_lo:.4f} <= {bound.union_bound:.4f}")
    secs = time.time() - t0
    ok &= secs < 1800
    record(4, ok, "; ".join(lines), secs)
    assert ok


def test_criterion_05_group_testing_threshold_shape():
    t0 = time.time()
    ok, lines = True, []
    for k in (2, 4):
        rows = gt_figure_rows(k, [100, 1000, 10000])
        ub = np.array([r["t_upper"] for r in rows])
        lb = np.array([r["t_lower"] for r in rows])
        ratio = ub / lb
        r2 = linregress(np.log([100, 1000, 10000]), ub).rvalue ** 2
        ok &= bool(np.all(ub >= lb)) and bool(np.all(np.diff(ratio) < 0)) and r2 > 0.99
        lines.append(f"K={k}: UB/LB={np.round(ratio, 3).tolist()}, R^2={r2:.5f}")
    secs = time.time() - t0
    ok &= secs < 60
    record(5, ok, "; ".join(lines), secs)
    assert ok


def test_criterion_06_compressed_sensing_ratio():
    t0 = time.time()
    dims = ProblemDims(512, 16, 1)
    snr_star = snr_necessity_linear(dims, 1.0)
    grid = np.logspace(0, 8, 161)

    def ratios(snr):
        return np.array([t / linear_lower_bound(dims, snr, 1.0, t) for t in grid])

    below = ratios(0.9 * snr_star)
    above = ratios(10.0 * snr_star)
    crossing = grid[np.argmax(above >= 1.0)] if (above >= 1.0).any() else None
    secs = time.time() - t0
    ok = bool(below.max() < 1.0) and crossing is not None and secs < 60
    record(6, ok, f"SNR*={snr_star:.4f}; max T/LB below={below.max():.4f}; crossing at T={crossing}", secs)
    assert ok


def test_criterion_07_missing_data():
    t0 = time.time()
    worst_gap, worst_scale = -np.inf, 0.0
    for k in (1, 2, 3):
        for p in (0.3, 0.5):
            base = necessity_threshold(ProblemDims(1000, k, 1), [mi_group_testing(p, i, k) for i in range(1, k + 1)])
            for rho in (0.1, 0.3, 0.5):
                mw = MissingWrap(GroupTestingNoiseless(), rho)
                for part in _partitions(k):
                    m = mi_missing(mw, Bernoulli(p=p), None, part).value
                    worst_gap = max(worst_gap, m - (1 - rho) * mi_group_testing(p, part.i, k).value)
                scaled = necessity_missing(base, rho)
                worst_scale = max(worst_scale, abs(scaled.t_threshold * (1 - rho) / base.t_threshold - 1.0))
    secs = time.time() - t0
    ok = worst_gap <= 1e-12 and worst_scale <= 1e-12 and secs < 60
    record(7, ok, f"max(I_miss - (1-rho) I)={worst_gap:.2e}, max scaling error={worst_scale:.1e}", secs)
    assert ok


def test_criterion_08_multivariate_factorization():
    t0 = time.time()
    worst, cases = 0.0, 0
    for inst in tabular_instances():
        table = inst.model.channel(inst.q, inst.k, inst.beta)
        pmf = inst.model.input_pmf(inst.q)
        for r in (2, 3):
            if pmf.size ** (r * inst.k) * table.shape[-1] ** r > 10**6:
                continue
            t_r, q_r = product_channel(table, pmf, r)
            model_r = TabularDiscrete(t_r, check_symmetry=False)  # fixed beta may break exchangeability
            law_r = DiscreteDistribution(tuple(float(v) for v in range(q_r.size)), tuple(q_r))
            for part in _partitions(inst.k):
                single = mi_discrete_exact(inst.model, inst.q, inst.beta, part).value
                worst = max(worst, abs(mi_discrete_exact(model_r, law_r, None, part).value - r * single))
                cases += 1
    dims = ProblemDims(1000, 3, 1)
    base = bounds_group_testing(dims, 1 / 3)
    div_err = 0.0
    for r in (2, 3):
        for b, s in zip(base, bounds_multivariate(base, r)):
            div_err = max(div_err, abs(s.t_threshold * r - b.t_threshold) / b.t_threshold)
    secs = time.time() - t0
    ok = worst <= 1e-12 and div_err <= 1e-15 and secs < 10
    record(8, ok, f"{cases} cases, max|I_R - R I|={worst:.1e}, threshold division error={div_err:.1e}", secs)
    assert ok


def _bayes_cases():
    for inst in instances():
        if inst.k > 2:
            continue
        priors = [None]
        if inst.beta is not None:
            vals = inst.model.beta_values
            priors.append(DiscreteIID(vals, tuple([1.0 / len(vals)] * len(vals))))
        for prior, n, t in itertools.product(priors, range(2 * inst.k, 6), (1, 2, 3)):
            if inst.q.size ** (n * t) <= 2**15:
                yield inst, prior, n, t


def test_criterion_09_decoder_bayes_optimal():
    t0 = time.time()
    worst, cases = 0.0, 0
    for inst, prior, n, t in _bayes_cases():
        key = prior if prior is not None else inst.beta

        def decode(x, y, inst=inst, key=key):
            return ml_decode_batch(inst.model, key, x, y, inst.k, inst.q)

        ml, bayes = bayes_and_ml_error(inst.model, inst.q, inst.k, n, t, inst.beta, prior, decode)
        worst = max(worst, abs(ml - bayes))
        cases += 1
    secs = time.time() - t0
    ok = worst <= 1e-12 and secs < 300
    record(9, ok, f"{cases} (instance, prior, N, T) cases, max|P_ML - P_Bayes|={worst:.1e}", secs)
    assert ok


def test_criterion_10_second_derivative_sandwich():
    t0 = time.time()
    worst = -np.inf
    for inst in tabular_instances():
        for part in _partitions(inst.k):
            for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
                fd = abs(second_difference(inst.model, inst.q, inst.beta, part, rho))
                weighted, sup = eo_second_derivative_bound(inst.model, inst.q, inst.beta, part, rho)
                worst = max(worst, fd - weighted, weighted - sup)
    secs = time.time() - t0
    ok = worst <= 1e-6 and secs < 60
    record(10, ok, f"max sandwich violation={worst:.2e}", secs)
    assert ok


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                pass
