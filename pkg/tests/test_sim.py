import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supportbounds import (
    Bernoulli,
    ConfigError,
    ConfigMismatch,
    Dataset,
    DiscreteIID,
    Fixed,
    Gaussian,
    GroupTestingNoiseless,
    LinearGaussian,
    ProblemDims,
    SupportSet,
    finite_size_error_bound,
    ml_decode,
    ml_decode_batch,
    run_trials,
    sample_dataset,
    validate_bound,
)
from supportbounds.sim import CAMPAIGN_COLUMNS, campaign_csv, iter_supports, validate_per_i, wilson_interval

GT, FAIR = GroupTestingNoiseless(), Bernoulli(p=0.5)


def test_wilson_interval_matches_formula():
    e, n, z = 30, 1000, 1.959963984540054
    p = e / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    lo, hi = wilson_interval(e, n)
    assert lo == pytest.approx(centre - half, rel=1e-9)
    assert hi == pytest.approx(centre + half, rel=1e-9)
    assert wilson_interval(0, 10)[0] == 0.0


def test_support_enumeration_order():
    rows = [tuple(r) for blk in iter_supports(6, 3, chunk=7) for r in blk]
    assert len(rows) == 20 and rows == sorted(rows)


def test_decoder_recovers_distinguishable_columns():
    # each column has a distinct pattern, so the OR of two columns identifies them
    x = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    y = np.array([0, 1, 0, 1])
    ds = Dataset(x, y, SupportSet((1, 3)), None, None)
    assert ml_decode(GT, None, ds).indices == (1, 3)


def test_tie_goes_to_smallest_support():
    x = np.array([[1, 1, 1, 1], [0, 0, 0, 0]], dtype=float)
    ds = Dataset(x, np.array([1, 0]), SupportSet((2, 3)), None, None)
    assert ml_decode(GT, None, ds).indices == (0, 1)


def test_batch_matches_single():
    dims = ProblemDims(6, 2, 8)
    sets = [sample_dataset(GT, FAIR, None, dims, SupportSet((0, 4)), s) for s in range(20)]
    x = np.stack([d.x for d in sets])
    y = np.stack([d.y for d in sets])
    batch = ml_decode_batch(GT, None, x, y, 2)
    assert [tuple(r) for r in batch] == [ml_decode(GT, None, d).indices for d in sets]


def test_linear_high_snr_recovers():
    rep = run_trials(LinearGaussian(1e3), Gaussian(1 / 200), Fixed((1.0, 1.0)), ProblemDims(20, 2, 200), 1000, 5)
    assert rep.errors_total <= 10


def test_two_items_error_rate():
    # the other column duplicates the outcome with prob 2^-T and the tie is lost half the time
    rep = run_trials(GT, FAIR, None, ProblemDims(2, 1, 5), 100_000, 11)
    assert rep.ci_lo <= 2.0**-6 <= rep.ci_hi


def test_single_trial():
    rep = run_trials(GT, FAIR, None, ProblemDims(4, 1, 3), 1, 0)
    assert rep.trials == 1 and rep.errors_total in (0, 1)
    with pytest.raises(ConfigError):
        run_trials(GT, FAIR, None, ProblemDims(4, 1, 3), 0, 0)


def test_relabelling_without_ties():
    # equal coefficients so the fixed vector does not depend on index order
    dims = ProblemDims(6, 2, 4)
    args = (LinearGaussian(10.0), Gaussian(0.25), Fixed((1.0, 1.0)), dims, 400, 3)
    base = run_trials(*args)
    other = run_trials(*args, relabel=[3, 5, 0, 1, 4, 2])
    assert base.errors_by_overlap == other.errors_by_overlap
    with pytest.raises(ConfigError):
        run_trials(*args, relabel=[0, 0, 1, 2, 3, 4])


def test_deterministic_and_block_independent():
    dims = ProblemDims(8, 2, 6)
    a = run_trials(GT, FAIR, None, dims, 3000, 42)
    b = run_trials(GT, FAIR, None, dims, 3000, 42)
    assert a.to_json() == b.to_json()
    c = run_trials(GT, FAIR, None, dims, 3000, 43)
    assert c.errors_total != a.errors_total or c.errors_by_overlap != a.errors_by_overlap


@settings(max_examples=15)
@given(st.integers(2, 3), st.integers(1, 6), st.integers(0, 10**6))
def test_overlap_counts_sum(k, t, seed):
    rep = run_trials(GT, Bernoulli(p=0.3), None, ProblemDims(2 * k + 1, k, t), 50, seed)
    assert sum(rep.errors_by_overlap.values()) == rep.errors_total
    assert set(rep.errors_by_overlap) == set(range(1, k + 1))
    assert rep.ci_lo <= rep.empirical_pe <= rep.ci_hi


def test_oracle_decoder_not_worse_on_average():
    from instances import instances

    inst = [s for s in instances() if s.name == "logistic_sign_k2"][0]
    prior = DiscreteIID((-1.0, 1.0), (0.5, 0.5))
    dims = ProblemDims(5, 2, 6)
    marg = run_trials(inst.model, inst.q, prior, dims, 4000, 8)
    orac = run_trials(inst.model, inst.q, prior, dims, 4000, 8, decoder_beta="oracle")
    assert orac.errors_total <= marg.errors_total + 4 * math.sqrt(marg.errors_total + 1)


def test_validate_bound():
    dims = ProblemDims(8, 2, 6)
    rep = run_trials(GT, FAIR, None, dims, 2000, 1)
    assert validate_bound(rep, 1.0).passed
    low = validate_bound(rep, 0.0)
    assert not low.passed and low.margin < 0
    bound = finite_size_error_bound(dims, GT, FAIR, None)
    assert validate_bound(rep, bound).passed
    with pytest.raises(ConfigMismatch):
        validate_bound(rep, finite_size_error_bound(dims.with_samples(7), GT, FAIR, None))
    with pytest.raises(ConfigError):
        validate_bound(rep, 1.5)


def test_vacuous_interval_is_skipped():
    rep = run_trials(GT, FAIR, None, ProblemDims(4, 1, 2), 3, 0)
    with pytest.warns(UserWarning):
        v = validate_bound(rep, 0.0)
    assert v.skipped


def test_per_i_and_campaign():
    dims = ProblemDims(8, 2, 6)
    rep = run_trials(GT, FAIR, None, dims, 2000, 1)
    rep.analytic_union_bound = finite_size_error_bound(dims, GT, FAIR, None).union_bound
    per = finite_size_error_bound(dims, GT, FAIR, None).per_i
    assert all(v.passed for v in validate_per_i(rep, per))
    lines = campaign_csv([rep, rep]).splitlines()
    assert lines[0] == ",".join(CAMPAIGN_COLUMNS) and len(lines) == 3
    d = json.loads(rep.to_json())
    assert d["errors_total"] == rep.errors_total and d["dims"]["n"] == 8
