"""Exhaustive maximum-likelihood support decoding and Monte Carlo error
estimation.

Supports are visited in lexicographic order and a running argmax keeps the
first maximiser, so ties resolve to the lexicographically smallest support.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binomtest

from .errors import ConfigError, ConfigMismatch
from .model import (
    Dataset,
    DiscreteIID,
    Fixed,
    GaussianFloor,
    LinearGaussian,
    MissingWrap,
    ObservationModel,
    ProblemDims,
    Probit,
    SupportSet,
    _default_q,
    check_compatible,
    marginal_log_likelihood,
)

SUPPORT_CHUNK = 4096
CELL_BUDGET = 1 << 21
DECODER_MODES = ("marginal", "oracle")


def iter_supports(n: int, k: int, chunk: int = SUPPORT_CHUNK):
    """Yield arrays of shape (<= chunk, k) covering all k-subsets of range(n)
    in lexicographic order."""
    it = itertools.combinations(range(n), k)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.asarray(block, dtype=np.int64)


def _prior_terms(model, prior_or_beta, k):
    """(beta vectors, log weights) the decoder integrates over, or None when
    the prior is continuous and needs the per-support fallback."""
    if not model.has_beta:
        return [np.zeros(k)], np.zeros(1)
    if isinstance(prior_or_beta, (Fixed, DiscreteIID)):
        vecs, logw = prior_or_beta.support(k)
        return [np.asarray(v) for v in vecs], logw
    if isinstance(prior_or_beta, GaussianFloor) or prior_or_beta is None:
        return None
    b = np.asarray(prior_or_beta, dtype=float)
    if b.shape != (k,):
        raise ConfigError(f"beta must have length K={k}")
    return [b], np.zeros(1)


def _score_supports(model, q, terms, x, y, supports):
    """Log marginal likelihoods, shape (B, C), for a batch of datasets
    x (B, T, N), y (B, T) and candidate supports (C, K)."""
    vecs, logw = terms
    xs = np.moveaxis(x[:, :, supports], 2, 1)  # (B, C, T, K)
    yy = y[:, None, :]
    per = [model.row_loglik(q, xs, b, yy).sum(axis=-1) + lw for b, lw in zip(vecs, logw)]
    if len(per) == 1:
        return per[0]
    return logsumexp(np.stack(per), axis=0)


def _decode_batch(model, q, terms, x, y, n, k):
    """Running argmax over all supports for every dataset in the batch."""
    b, t = y.shape
    best = np.full(b, -np.inf)
    arg = np.zeros((b, k), dtype=np.int64)
    found = np.zeros(b, dtype=bool)
    chunk = max(1, min(SUPPORT_CHUNK, CELL_BUDGET // max(1, b * t * k)))
    for sup in iter_supports(n, k, chunk):
        sc = _score_supports(model, q, terms, x, y, sup)
        j = np.argmax(sc, axis=1)
        top = sc[np.arange(b), j]
        better = (top > best) | (~found & (top >= best))
        best = np.where(better, top, best)
        arg[better] = sup[j[better]]
        found |= better
    return arg


def ml_decode(model: ObservationModel, prior_or_beta, dataset: Dataset, dims: ProblemDims | None = None, q=None) -> SupportSet:
    """argmax over all K-subsets of the marginal likelihood p(Y | X_S).

    ``prior_or_beta`` is a coefficient prior (integrated out) or a known
    K-vector. Ties go to the lexicographically smallest support.
    """
    dims = dataset.dims if dims is None else dims
    dims.check_enumerable()
    n, k = dims.n_vars, dims.k_sparse
    q = _default_q(model, k) if q is None else q
    terms = _prior_terms(model, prior_or_beta, k)
    x, y = dataset.x, dataset.y
    if terms is None:
        return _decode_fallback(model, q, prior_or_beta, x, y, n, k)
    arg = _decode_batch(model, q, terms, x[None], np.asarray(y)[None], n, k)
    return SupportSet(tuple(int(v) for v in arg[0]))


def ml_decode_batch(model: ObservationModel, prior_or_beta, x, y, k: int, q=None) -> np.ndarray:
    """Decode a stack of datasets x (B, T, N), y (B, T) at once; returns the
    chosen supports as a (B, K) integer array with the same tie rule as
    :func:`ml_decode`."""
    x, y = np.asarray(x, dtype=float), np.asarray(y)
    b, t, n = x.shape
    ProblemDims(n, k, t).check_enumerable()
    q = _default_q(model, k) if q is None else q
    terms = _prior_terms(model, prior_or_beta, k)
    if terms is None:
        return np.array([_decode_fallback(model, q, prior_or_beta, x[j], y[j], n, k).indices for j in range(b)])
    return _decode_batch(model, q, terms, x, y, n, k)


def _decode_fallback(model, q, prior, x, y, n, k):
    best, arg = -np.inf, None
    for sup in itertools.combinations(range(n), k):
        s = marginal_log_likelihood(model, x[:, list(sup)], y, prior, q)
        if arg is None or s > best:
            best, arg = s, sup
    return SupportSet(arg)


# ---------------------------------------------------------------------------
# reports


def wilson_interval(errors: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(errors), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class SimulationReport:
    trials: int
    errors_total: int
    errors_by_overlap: dict[int, int]
    empirical_pe: float
    ci_lo: float
    ci_hi: float
    dims: ProblemDims
    model_id: dict
    seed: int
    decoder_beta: str = "marginal"
    analytic_union_bound: float | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if sum(self.errors_by_overlap.values()) != self.errors_total:
            raise ValueError("per-overlap error counts do not sum to the total")
        if 0 in self.errors_by_overlap:
            raise ValueError("overlap 0 is a success, not an error")

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "errors_total": self.errors_total,
            "errors_by_overlap": {str(i): c for i, c in sorted(self.errors_by_overlap.items())},
            "empirical_pe": self.empirical_pe,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "analytic_union_bound": self.analytic_union_bound,
            "dims": self.dims.to_dict(),
            "model": self.model_id,
            "seed": self.seed,
            "decoder_beta": self.decoder_beta,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def campaign_row(self) -> dict:
        return {
            "n": self.dims.n_vars,
            "k": self.dims.k_sparse,
            "t": self.dims.n_samples,
            "empirical_pe": self.empirical_pe,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "union_bound": self.analytic_union_bound,
        }


CAMPAIGN_COLUMNS = ("n", "k", "t", "empirical_pe", "ci_lo", "ci_hi", "union_bound")


def campaign_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CAMPAIGN_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.campaign_row())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# trials


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _batch_outcomes(model, q, xs, betas, rng):
    """Outcomes for xs (B, T, K) with per-trial coefficients betas (B, K)."""
    inner = model.inner if isinstance(model, MissingWrap) else model
    if isinstance(inner, LinearGaussian):
        s = np.einsum("btk,bk->bt", xs, betas)
        return s + rng.standard_normal(s.shape) * math.sqrt(inner.noise_var)
    if isinstance(inner, Probit):
        s = np.einsum("btk,bk->bt", xs, betas)
        return (s + rng.standard_normal(s.shape) >= 0).astype(np.int64)
    y = np.empty(xs.shape[:2], dtype=np.int64)
    if not inner.has_beta:
        return inner.sample_outcomes(q, xs, None, rng)
    for key in np.unique(betas, axis=0):
        rows = (betas == key).all(axis=1)
        y[rows] = inner.sample_outcomes(q, xs[rows], key, rng)
    return y


def _draw_batch(model, q, prior, dims, size, rng):
    n, k, t = dims.n_vars, dims.k_sparse, dims.n_samples
    supports = np.sort(np.argsort(rng.random((size, n)), axis=1)[:, :k], axis=1)
    if model.has_beta:
        if isinstance(prior, Fixed):
            betas = np.tile(prior.sample(k), (size, 1))
        else:
            betas = np.stack([prior.sample(k, rng) for _ in range(size)])
    else:
        betas = np.zeros((size, k))
    x = q.sample((size, t, n), rng)
    xs = np.take_along_axis(x, supports[:, None, :], axis=2)
    y = _batch_outcomes(model, q, xs, betas, rng)
    if isinstance(model, MissingWrap) and model.miss_prob > 0:
        x = np.where(rng.random(x.shape) < model.miss_prob, np.nan, x)
    return supports, betas, x, y


def run_trials(
    model: ObservationModel,
    q,
    prior,
    dims: ProblemDims,
    n_trials: int,
    seed: int,
    *,
    decoder_beta: str = "marginal",
    relabel=None,
    block_size: int | None = None,
) -> SimulationReport:
    """Simulate ``n_trials`` independent experiments with a uniformly drawn
    support each, decode by exhaustive ML and tally errors by overlap.

    Trials are generated in blocks with independent random streams derived
    from (seed, block index). ``decoder_beta="oracle"`` gives the decoder the
    realised coefficients; ``"marginal"`` integrates them under the prior.
    ``relabel`` is an optional permutation of variable labels applied to
    every trial (the decoder is label-symmetric up to tie-breaking).
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be at least 1")
    if decoder_beta not in DECODER_MODES:
        raise ConfigError(f"decoder_beta must be one of {DECODER_MODES}")
    if dims.n_samples < 1:
        raise ConfigError("simulation needs T >= 1")
    dims.check_enumerable()
    n, k, t = dims.n_vars, dims.k_sparse, dims.n_samples
    check_compatible(model, q, prior, k)
    perm = None if relabel is None else np.asarray(relabel, dtype=np.int64)
    if perm is not None and sorted(perm.tolist()) != list(range(n)):
        raise ConfigError("relabel must be a permutation of range(N)")
    if block_size is None:
        block_size = int(max(1, min(4096, CELL_BUDGET // max(1, t * min(dims.n_supports, SUPPORT_CHUNK) * k))))
    base_terms = _prior_terms(model, prior, k) if decoder_beta == "marginal" else None
    counts = dict.fromkeys(range(1, k + 1), 0)
    for blk, start in enumerate(range(0, n_trials, block_size)):
        size = min(block_size, n_trials - start)
        rng = _block_rng(seed, blk)
        supports, betas, x, y = _draw_batch(model, q, prior, dims, size, rng)
        if perm is not None:
            # variable j is renamed perm[j]
            x = x[:, :, np.argsort(perm)]
            new = perm[supports]
            order = np.argsort(new, axis=1)
            supports = np.take_along_axis(new, order, axis=1)
            betas = np.take_along_axis(betas, order, axis=1)
        decoded = _decode_trials(model, q, prior, base_terms, decoder_beta, x, y, betas, n, k)
        wrong = (decoded[:, :, None] != supports[:, None, :]).all(axis=2).sum(axis=1)
        for i in range(1, k + 1):
            counts[i] += int((wrong == i).sum())
    total = sum(counts.values())
    lo, hi = wilson_interval(total, n_trials)
    return SimulationReport(
        n_trials, total, counts, total / n_trials, lo, hi, dims, model.to_dict(), seed, decoder_beta,
        config={"q": q.to_dict(), "prior": None if prior is None else prior.to_dict()},
    )


def _decode_trials(model, q, prior, base_terms, mode, x, y, betas, n, k):
    if mode == "marginal" and base_terms is not None:
        return _decode_batch(model, q, base_terms, x, y, n, k)
    if mode == "oracle" and model.has_beta:
        out = np.empty((len(y), k), dtype=np.int64)
        for key in np.unique(betas, axis=0):
            rows = np.flatnonzero((betas == key).all(axis=1))
            out[rows] = _decode_batch(model, q, ([key], np.zeros(1)), x[rows], y[rows], n, k)
        return out
    if mode == "oracle":
        return _decode_batch(model, q, ([np.zeros(k)], np.zeros(1)), x, y, n, k)
    out = np.empty((len(y), k), dtype=np.int64)
    for b in range(len(y)):
        out[b] = _decode_fallback(model, q, prior, x[b], y[b], n, k).indices
    return out


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Verdict:
    passed: bool
    skipped: bool
    margin: float
    bound: float
    ci_lo: float
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "skipped": self.skipped,
            "margin": self.margin,
            "bound": self.bound,
            "ci_lo": self.ci_lo,
            "reason": self.reason,
        }


VACUOUS_WIDTH = 0.5


def validate_bound(report: SimulationReport, bound) -> Verdict:
    """Pass iff the lower Wilson limit of the empirical error rate is at most
    the analytic bound. ``bound`` is a probability or a FiniteSizeBound, whose
    configuration must match the report's."""
    from .bounds import FiniteSizeBound

    if isinstance(bound, FiniteSizeBound):
        if bound.dims != report.dims:
            raise ConfigMismatch(f"bound is for {bound.dims}, report for {report.dims}")
        if bound.model_id is not None and bound.model_id != report.model_id:
            raise ConfigMismatch("bound and report were computed for different models")
        value = bound.union_bound
    else:
        value = float(bound)
    if not 0.0 <= value <= 1.0:
        raise ConfigError("bound must be a probability")
    margin = value - report.ci_lo
    if report.ci_hi - report.ci_lo >= VACUOUS_WIDTH:
        warnings.warn("too few trials: confidence interval is vacuous, containment check skipped", stacklevel=2)
        return Verdict(True, True, margin, value, report.ci_lo, "confidence interval vacuous")
    passed = report.ci_lo <= value
    return Verdict(passed, False, margin, value, report.ci_lo, "" if passed else "empirical error exceeds bound")


def validate_per_i(report: SimulationReport, per_i_bounds) -> list[Verdict]:
    """Per-overlap containment: Wilson lower limit of count_i / trials <= bound_i."""
    out = []
    for i, b in enumerate(per_i_bounds, start=1):
        lo, _ = wilson_interval(report.errors_by_overlap.get(i, 0), report.trials)
        out.append(Verdict(lo <= b, False, float(b) - lo, float(b), lo))
    return out
