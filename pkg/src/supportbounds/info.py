"""Conditional mutual information I(X_S1; Y | X_S2, beta) for the observation
models: exact enumeration, closed forms, quadrature and a Monte Carlo oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._numerics import CLAMP_TOL, GH_DEFAULT_ORDER, binary_entropy, gauss_expect, gh_nodes, log_ndtr, logsumexp
from .errors import ConfigError, EnumerationCapExceeded, ZeroInformation
from .model import (
    TABLE_CAP,
    DiscreteIID,
    Fixed,
    Gaussian,
    GaussianFloor,
    LinearGaussian,
    MissingWrap,
    ObservationModel,
    Probit,
    SupportPartition,
)

METHODS = ("exact", "closed_form", "quadrature", "monte_carlo")


@dataclass(frozen=True)
class MIEstimate:
    value: float
    method: str
    std_error: float = 0.0
    partition_size_i: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown MI method {self.method!r}")
        v = float(self.value)
        if v < 0 and v >= -CLAMP_TOL:
            v = 0.0
        object.__setattr__(self, "value", v)

    def scaled(self, factor: float) -> "MIEstimate":
        return MIEstimate(self.value * factor, self.method, self.std_error * factor, self.partition_size_i)

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method, "std_error": self.std_error, "i": self.partition_size_i}


def _clamp(v: float) -> float:
    if v < -CLAMP_TOL:
        raise ArithmeticError(f"mutual information came out negative: {v}")
    return max(v, 0.0)


# ---------------------------------------------------------------------------
# exact enumeration


def _split_table(table: np.ndarray, pmf: np.ndarray, partition: SupportPartition):
    """Reorder a channel table to (x_S1, x_S2, y) flat axes plus product pmfs."""
    k = partition.k
    a = table.shape[0]
    t = np.transpose(table, list(partition.s1) + list(partition.s2) + [k])
    n1, n2 = a**partition.i, a ** (k - partition.i)
    t = t.reshape(n1, n2, table.shape[-1])
    q1 = _product_pmf(pmf, partition.i)
    q2 = _product_pmf(pmf, k - partition.i)
    return t, q1, q2


def _product_pmf(pmf: np.ndarray, m: int) -> np.ndarray:
    out = np.ones(1)
    for _ in range(m):
        out = np.multiply.outer(out, pmf).ravel()
    return out


def channel_mi(table: np.ndarray, pmf: np.ndarray, partition: SupportPartition) -> float:
    """I(X_S1; Y | X_S2) for a dense channel table and per-coordinate input pmf."""
    w, q1, q2 = _split_table(table, pmf, partition)
    mix = np.einsum("a,abY->bY", q1, w)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(w > 0, np.log(w) - np.log(mix)[None], 0.0)
    return float(np.einsum("a,b,abY->", q1, q2, w * lr))


def _check_cap(model, q, k):
    a = len(model.input_pmf(q))
    ny = getattr(model, "n_outcomes", None) or 2
    if a**k * ny > TABLE_CAP:
        raise EnumerationCapExceeded(f"enumeration size {a}^{k} x {ny} exceeds {TABLE_CAP}")


def _beta_terms(model, beta, k):
    """(list of beta vectors, weights) from a fixed vector, a prior or None."""
    if not model.has_beta:
        return [None], np.ones(1)
    if beta is None:
        raise ConfigError(f"{model.name} model needs beta or a prior")
    if isinstance(beta, (Fixed, DiscreteIID)):
        vecs, logw = beta.support(k)
        return [np.asarray(v) for v in vecs], np.exp(logw)
    if isinstance(beta, GaussianFloor):
        raise ConfigError("exact enumeration needs a finite coefficient prior")
    b = np.asarray(beta, dtype=float)
    if b.shape != (k,):
        raise ConfigError(f"beta must have length K={k}")
    return [b], np.ones(1)


def mi_discrete_exact(model: ObservationModel, q, beta, partition: SupportPartition) -> MIEstimate:
    """Exact conditional MI by enumerating (x_S1, x_S2, y).

    ``beta`` may be a K-vector, a Fixed/DiscreteIID prior (giving the
    beta-averaged MI) or None for models without coefficients.
    """
    if not model.is_discrete or not getattr(q, "is_discrete", False):
        raise ConfigError("mi_discrete_exact needs a discrete model and alphabet")
    k = partition.k
    _check_cap(model, q, k)
    pmf = model.input_pmf(q)
    vecs, weights = _beta_terms(model, beta, k)
    total = 0.0
    for b, wgt in zip(vecs, weights):
        total += wgt * channel_mi(model.channel(q, k, b), pmf, partition)
    return MIEstimate(_clamp(total), "exact", 0.0, partition.i)


def mi_group_testing(p: float, i: int, k: int) -> MIEstimate:
    """Closed form (1-p)^(K-i) h_b((1-p)^i) for the noiseless OR channel."""
    if not 0.0 < p < 1.0:
        raise ConfigError(f"need 0 < p < 1, got {p}")
    if not 1 <= i <= k:
        raise ConfigError(f"need 1 <= i <= K, got i={i}, K={k}")
    qq = 1.0 - p
    return MIEstimate(qq ** (k - i) * binary_entropy(qq**i), "closed_form", 0.0, i)


def mi_missing(model: MissingWrap, q, beta, partition: SupportPartition) -> MIEstimate:
    """Exact MI of the erasure-augmented channel I(Z_S1; Y | Z_S2, beta)."""
    if not isinstance(model, MissingWrap) or not model.inner.is_discrete:
        raise ConfigError("mi_missing needs a MissingWrap over a discrete model")
    return mi_discrete_exact(model, q, beta, partition)


def product_channel(table: np.ndarray, pmf, r: int) -> tuple[np.ndarray, np.ndarray]:
    """R independent replicas of a channel sharing the support.

    Each coordinate's symbol becomes an R-tuple of replica inputs (alphabet
    |X|^R, product pmf) and the outcome an R-tuple (alphabet |Y|^R), with
    replica r seeing only its own inputs. Returns (table, pmf).
    """
    if int(r) != r or r < 1:
        raise ConfigError("r must be a positive integer")
    table = np.asarray(table, dtype=float)
    k = table.ndim - 1
    a, ny = table.shape[0], table.shape[-1]
    out, q = table, np.asarray(pmf, dtype=float)
    for m in range(1, int(r)):
        # axes of the outer product: (x_1..x_K, y) of `out`, then of `table`
        big = np.multiply.outer(out, table)
        order = [ax for j in range(k) for ax in (j, k + 1 + j)] + [k, 2 * k + 1]
        out = np.transpose(big, order).reshape((a ** (m + 1),) * k + (ny ** (m + 1),))
        q = np.multiply.outer(q, np.asarray(pmf, dtype=float)).ravel()
    return out, q


# ---------------------------------------------------------------------------
# Gaussian linear model


def mi_linear_gaussian(beta_s1, snr: float, t: int) -> MIEstimate:
    """1/2 log(1 + |beta_S1|^2 SNR / T) for Gaussian(1/T) variables."""
    if not snr > 0 or t < 1:
        raise ConfigError("need snr > 0 and t >= 1")
    b = np.asarray(beta_s1, dtype=float)
    i = int(b.size)
    return MIEstimate(0.5 * math.log1p(float(b @ b) * snr / t), "closed_form", 0.0, i)


def mi_linear_jensen_upper(i: int, sigma_sq: float, snr: float, t: float) -> MIEstimate:
    """1/2 log(1 + i sigma^2 SNR / T): upper bound on the beta-averaged MI under
    a Gaussian coefficient prior of variance sigma^2."""
    if not snr > 0 or t <= 0 or sigma_sq <= 0:
        raise ConfigError("need positive snr, t and sigma_sq")
    return MIEstimate(0.5 * math.log1p(i * sigma_sq * snr / t), "closed_form", 0.0, i)


def _linear_mi(model: LinearGaussian, q, beta, partition) -> MIEstimate:
    if not isinstance(q, Gaussian):
        raise ConfigError("closed-form linear MI needs Gaussian variables")
    b1 = np.asarray(beta, dtype=float)[list(partition.s1)]
    v1 = float(b1 @ b1) * q.variance
    return MIEstimate(0.5 * math.log1p(v1 * model.snr), "closed_form", 0.0, partition.i)


# ---------------------------------------------------------------------------
# probit model


def _hb_phi(z):
    """h_b(Phi(z)) accurate in the tails (uses the smaller of Phi(z), Phi(-z))."""
    lp = log_ndtr(-np.abs(z))
    p = np.exp(lp)
    return -p * lp - (1.0 - p) * np.log1p(-p)


def expect_hb_phi(var: float, order: int = GH_DEFAULT_ORDER):
    """E[h_b(Phi(U))] for U ~ N(0, var), with quadrature error estimate.

    For var > 1 the integrand is narrow relative to the weight, so the
    expectation is rewritten against N(0, 1) with a density-ratio factor.
    """
    if var == 0:
        return math.log(2.0), 0.0
    if var <= 1.0:
        return gauss_expect(_hb_phi, var, order)

    def reweighted(u):
        return _hb_phi(u) * np.exp(0.5 * u * u * (1.0 - 1.0 / var)) / math.sqrt(var)

    return gauss_expect(reweighted, 1.0, order)


def probit_entropies(v1: float, v2: float, order: int = GH_DEFAULT_ORDER):
    """(H(Y|Z2), H(Y|Z), quadrature error) for Y = 1{Z1 + Z2 + W >= 0} with
    Z1 ~ N(0, v1), Z2 ~ N(0, v2), W ~ N(0, 1)."""
    h2, e2 = expect_hb_phi(v2 / (1.0 + v1), order)
    h, e = expect_hb_phi(v1 + v2, order)
    return h2, h, e2 + e


def mi_probit(i: int, k: int, quadrature_order: int = GH_DEFAULT_ORDER) -> MIEstimate:
    """H(Y|Z2) - H(Y|Z) with Z2 ~ N(0, K-i), Z ~ N(0, K) for unit coefficients."""
    if not 1 <= i <= k:
        raise ConfigError(f"need 1 <= i <= K, got i={i}, K={k}")
    if quadrature_order < 16:
        raise ConfigError("quadrature_order must be at least 16")
    h2, h, err = probit_entropies(float(i), float(k - i), quadrature_order)
    return MIEstimate(_clamp(h2 - h), "quadrature", err, i)


def _probit_mi(model: Probit, q, beta, partition, order=GH_DEFAULT_ORDER) -> MIEstimate:
    b = np.asarray(beta, dtype=float)
    v1 = float(b[list(partition.s1)] @ b[list(partition.s1)]) * q.variance
    v2 = float(b[list(partition.s2)] @ b[list(partition.s2)]) * q.variance
    h2, h, err = probit_entropies(v1, v2, order)
    return MIEstimate(_clamp(h2 - h), "quadrature", err, partition.i)


def probit_entropy_bounds(i: int, k: int) -> dict:
    """Closed-form envelopes for the probit entropies with unit coefficients.

    Returns a lower bound on H(Y|Z2), an upper bound on H(Y|Z) and their
    difference, which lower-bounds the MI (it is negative, hence vacuous,
    until K is large).
    """
    d2 = float(k - i)
    s2 = float(i + 1)
    r = 1.0 + 2.0 * d2 / s2
    h2_lower = math.log(2.0) / (12.0 * math.sqrt(r)) + d2 / (24.0 * s2 * r**1.5)
    kk = float(k)
    b = 1.0 / kk + 1.0
    h_upper = math.log(12.0) / math.sqrt(b * kk) + 1.0 / (2.0 * math.sqrt(kk) * b**1.5)
    return {"h_cond_revealed_lower": h2_lower, "h_cond_full_upper": h_upper, "mi_lower": h2_lower - h_upper}


# ---------------------------------------------------------------------------
# dispatch and worst case


def conditional_mi(model: ObservationModel, q, beta, partition: SupportPartition) -> MIEstimate:
    """Fixed-beta conditional MI by the natural method for the model."""
    if model.is_discrete:
        return mi_discrete_exact(model, q, beta, partition)
    if isinstance(model, LinearGaussian):
        return _linear_mi(model, q, beta, partition)
    if isinstance(model, Probit):
        return _probit_mi(model, q, beta, partition)
    raise ConfigError(f"no deterministic MI method for {model!r}; use mi_monte_carlo")


def mi_worst_case(model: ObservationModel, q, beta_candidates: Sequence, partition: SupportPartition):
    """Minimum conditional MI over a finite set of coefficient vectors.

    Returns (MIEstimate, minimising beta); ties go to the lexicographically
    smallest candidate. A zero minimum raises ZeroInformation.
    """
    cands = [tuple(float(v) for v in np.atleast_1d(c)) for c in beta_candidates]
    if not cands:
        raise ConfigError("beta_candidates is empty")
    cands = sorted(set(cands))
    best, arg = None, None
    for c in cands:
        est = conditional_mi(model, q, np.asarray(c) if model.has_beta else None, partition)
        if best is None or est.value < best.value:
            best, arg = est, c
    if best.value <= CLAMP_TOL:
        raise ZeroInformation(f"worst-case MI is zero at beta={arg} (i={partition.i})")
    return best, np.asarray(arg)


def sign_candidates(k: int, b_min: float) -> list[tuple[float, ...]]:
    """Default worst-case grid {-b_min, +b_min}^K."""
    import itertools

    return [tuple(s * b_min for s in signs) for signs in itertools.product((-1.0, 1.0), repeat=k)]


# ---------------------------------------------------------------------------
# Monte Carlo oracle


def _mc_values_discrete(model, q, beta_draws, partition, x, y):
    k = partition.k
    pmf = model.input_pmf(q)
    idx = model.input_index(q, x) if not isinstance(model, MissingWrap) else _aug_index(q, x)
    out = np.empty(len(y))
    a = len(pmf)
    for key in np.unique(beta_draws, axis=0) if model.has_beta else [None]:
        rows = np.ones(len(y), bool) if key is None else (beta_draws == key).all(axis=1)
        table = model.channel(q, k, key)
        w, q1, _ = _split_table(table, pmf, partition)
        mix = np.einsum("a,abY->bY", q1, w)
        f1 = np.zeros(rows.sum(), dtype=np.int64)
        for j in partition.s1:
            f1 = f1 * a + idx[rows, j]
        f2 = np.zeros(rows.sum(), dtype=np.int64)
        for j in partition.s2:
            f2 = f2 * a + idx[rows, j]
        yy = y[rows].astype(np.int64)
        out[rows] = np.log(w[f1, f2, yy]) - np.log(mix[f2, yy])
    return out


def _aug_index(q, x):
    return q.index_of(x)


def _sample_x(q, model, shape, rng):
    x = q.sample(shape, rng)
    if isinstance(model, MissingWrap) and model.miss_prob > 0:
        x = np.where(rng.random(shape) < model.miss_prob, np.nan, x)
    return x


def _mc_values_continuous(model, q, betas, partition, x, y, inner, order):
    s1, s2 = list(partition.s1), list(partition.s2)
    b1, b2 = betas[:, s1], betas[:, s2]
    m1 = (x[:, s1] * b1).sum(axis=1)
    m2 = (x[:, s2] * b2).sum(axis=1)
    v1 = (b1 * b1).sum(axis=1) * q.variance
    if isinstance(model, LinearGaussian):
        nv = model.noise_var
        full = -0.5 * (np.log(2 * np.pi * nv) + (y - m1 - m2) ** 2 / nv)
        if inner == "analytic":
            tot = nv + v1
            marg = -0.5 * (np.log(2 * np.pi * tot) + (y - m2) ** 2 / tot)
        else:
            z, w = gh_nodes(order)
            s = np.sqrt(v1)[:, None] * z[None, :]
            lp = -0.5 * (np.log(2 * np.pi * nv) + (y[:, None] - m2[:, None] - s) ** 2 / nv)
            marg = logsumexp(lp, b=w[None, :], axis=1)
        return full - marg
    sign = np.where(y == 1, 1.0, -1.0)
    full = log_ndtr(sign * (m1 + m2))
    if inner == "analytic":
        marg = log_ndtr(sign * m2 / np.sqrt(1.0 + v1))
    else:
        z, w = gh_nodes(order)
        s = np.sqrt(v1)[:, None] * z[None, :]
        marg = logsumexp(log_ndtr(sign[:, None] * (m2[:, None] + s)), b=w[None, :], axis=1)
    return full - marg


def mi_monte_carlo(
    model: ObservationModel,
    q,
    beta,
    partition: SupportPartition,
    n_samples: int,
    seed: int,
    *,
    n_groups: int = 100,
    inner: str = "analytic",
    order: int = GH_DEFAULT_ORDER,
    chunk: int = 1 << 18,
) -> MIEstimate:
    """Monte Carlo estimate of E[log p(Y|X_S1,X_S2,beta) - log p(Y|X_S2,beta)].

    Outer draws are (beta, x, y) from the generative model. The inner marginal
    over X_S1 is an exact sum for discrete models; for the Gaussian-input
    models it integrates the scalar projection <x_S1, beta_S1> either in
    closed form (``inner="analytic"``) or by Gauss-Hermite (``"quadrature"``).
    The standard error is a delete-one-group jackknife over ``n_groups``
    contiguous groups.
    """
    if n_samples < 10**4:
        raise ConfigError("mi_monte_carlo needs at least 10^4 samples")
    if inner not in ("analytic", "quadrature"):
        raise ConfigError(f"unknown inner method {inner!r}")
    k = partition.k
    base = model.inner if isinstance(model, MissingWrap) else model
    if not model.is_discrete:
        if isinstance(model, MissingWrap):
            raise ConfigError("Monte Carlo MI with missing data needs a discrete inner model")
        if not isinstance(q, Gaussian):
            raise ConfigError("continuous Monte Carlo MI needs Gaussian variables")
    vals = np.empty(n_samples)
    for c, start in enumerate(range(0, n_samples, chunk)):
        n = min(chunk, n_samples - start)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(c,)))
        if model.has_beta:
            if isinstance(beta, (Fixed, DiscreteIID, GaussianFloor)):
                betas = np.stack([beta.sample(k, rng) for _ in range(n)]) if not isinstance(beta, Fixed) else np.tile(beta.sample(k), (n, 1))
            else:
                betas = np.tile(np.asarray(beta, dtype=float), (n, 1))
        else:
            betas = np.zeros((n, k))
        x = _sample_x(q, model, (n, k), rng)
        if model.is_discrete:
            y = _sample_discrete_y(model, q, x, betas, rng)
            vals[start : start + n] = _mc_values_discrete(model, q, betas, partition, x, y)
        else:
            y = _sample_continuous_y(base, x, betas, rng)
            vals[start : start + n] = _mc_values_continuous(base, q, betas, partition, x, y, inner, order)
    est = float(vals.mean())
    g = min(n_groups, n_samples)
    groups = np.array([grp.mean() for grp in np.array_split(vals, g)])
    sizes = np.array([len(grp) for grp in np.array_split(vals, g)])
    loo = (est * n_samples - groups * sizes) / (n_samples - sizes)
    se = math.sqrt((g - 1) / g * float(((loo - loo.mean()) ** 2).sum()))
    return MIEstimate(max(est, 0.0), "monte_carlo", se, partition.i)


def _sample_discrete_y(model, q, x, betas, rng):
    k = x.shape[1]
    y = np.empty(len(x), dtype=np.int64)
    keys = np.unique(betas, axis=0) if model.has_beta else [None]
    idx = q.index_of(x)
    for key in keys:
        rows = np.ones(len(x), bool) if key is None else (betas == key).all(axis=1)
        table = model.channel(q, k, key)
        probs = table[tuple(idx[rows, j] for j in range(k))]
        u = rng.random(rows.sum())[:, None]
        y[rows] = (u >= np.cumsum(probs, axis=-1)).sum(axis=-1).clip(max=table.shape[-1] - 1)
    return y


def _sample_continuous_y(model, x, betas, rng):
    s = (x * betas).sum(axis=1)
    if isinstance(model, LinearGaussian):
        return s + rng.standard_normal(len(s)) * math.sqrt(model.noise_var)
    return (s + rng.standard_normal(len(s)) >= 0).astype(np.int64)
