"""Sample-complexity thresholds (necessity and sufficiency) and the finite-size
union bound on the ML decoder's error probability.

Every threshold is a maximum over the number i of misidentified support
elements of numerator(i) / denominator(i), where numerators are log-binomial
coefficients and denominators are conditional mutual informations.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from ._numerics import log_binom
from .errors import ConfigError, InfiniteThreshold, NoFiniteThreshold, SideConditionFailed, ZeroInformation
from .exponent import optimize_rho, second_difference
from .info import MIEstimate, mi_group_testing, mi_probit, probit_entropies, probit_entropy_bounds
from .model import Bernoulli, GroupTestingNoiseless, ProblemDims, SupportPartition

KINDS = ("necessity", "sufficiency_fixed", "sufficiency_scaling", "finite_size", "partial_recovery", "snr_necessity")
T_BRACKET = (1e-9, 1e12)
DEFAULT_EPSILON = 0.1
DEFAULT_TAU = 12.0


@dataclass(frozen=True)
class BoundTerm:
    i: int
    numerator: float
    denominator: float
    ratio: float
    vacuous: bool = False

    def to_dict(self) -> dict:
        return {
            "i": self.i,
            "numerator_nats": self.numerator,
            "denominator_nats": self.denominator,
            "ratio_T": self.ratio,
            "vacuous": self.vacuous,
        }


@dataclass
class BoundReport:
    kind: str
    per_i: list[BoundTerm]
    t_threshold: float
    argmax_i: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown report kind {self.kind!r}")

    def term(self, i: int) -> BoundTerm:
        for t in self.per_i:
            if t.i == i:
                return t
        raise KeyError(i)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "t_threshold": self.t_threshold,
            "argmax_i": self.argmax_i,
            "per_i": [t.to_dict() for t in self.per_i],
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "numerator_nats", "denominator_nats", "ratio_T", "vacuous"])
        for t in self.per_i:
            w.writerow([t.i, repr(t.numerator), repr(t.denominator), repr(t.ratio), int(t.vacuous)])
        return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"not serialisable: {type(o)}")


def _by_i(mis: Sequence, k: int) -> dict[int, float]:
    """Map i -> MI value, taking i from the estimates when they carry it."""
    out = {}
    for pos, m in enumerate(mis, start=1):
        if isinstance(m, MIEstimate):
            i = m.partition_size_i or pos
            v = m.value
        else:
            i, v = pos, float(m)
        if not 1 <= i <= k:
            raise ConfigError(f"MI entry for i={i} outside 1..{k}")
        if i in out:
            raise ConfigError(f"duplicate MI entry for i={i}")
        out[i] = v
    return out


def _assemble(kind, terms: list[BoundTerm], params) -> BoundReport:
    terms = sorted(terms, key=lambda t: t.i)
    best = max(terms, key=lambda t: (t.ratio, -t.i))
    return BoundReport(kind, terms, best.ratio, best.i, params)


def _dims_params(dims: ProblemDims, **extra) -> dict:
    return {"dims": dims.to_dict(), **extra}


# ---------------------------------------------------------------------------
# generic thresholds


def necessity_threshold(dims: ProblemDims, mi_avg_per_i: Sequence, *, i_range: Iterable[int] | None = None, model_id: str = "") -> BoundReport:
    """T >= max_i log C(N-K+i, i) / I_avg(i) (beta-averaged MI)."""
    n, k = dims.n_vars, dims.k_sparse
    mis = _by_i(mi_avg_per_i, k)
    idx = sorted(mis) if i_range is None else sorted(i_range)
    terms = []
    for i in idx:
        if i not in mis:
            raise ConfigError(f"missing MI for i={i}")
        num = log_binom(n - k + i, i)
        if mis[i] <= 0:
            raise InfiniteThreshold(f"averaged MI is zero at i={i}: recovery impossible at any T")
        terms.append(BoundTerm(i, num, mis[i], num / mis[i], num == 0))
    return _assemble("necessity", terms, _dims_params(dims, model=model_id))


def sufficiency_threshold_fixed(
    dims: ProblemDims,
    mi_worst_per_i: Sequence,
    epsilon: float = DEFAULT_EPSILON,
    *,
    i_range: Iterable[int] | None = None,
    model_id: str = "",
) -> BoundReport:
    """T > (1 + eps) max_i log C(N-K, i) / I_worst(i)."""
    if epsilon < 0:
        raise ConfigError("epsilon must be non-negative")
    n, k = dims.n_vars, dims.k_sparse
    mis = _by_i(mi_worst_per_i, k)
    idx = sorted(mis) if i_range is None else sorted(i_range)
    terms = []
    for i in idx:
        num = log_binom(n - k, i)
        if mis[i] <= 0:
            raise ZeroInformation(f"worst-case MI is zero at i={i}")
        terms.append(BoundTerm(i, num, mis[i], (1.0 + epsilon) * num / mis[i], num == 0))
    return _assemble("sufficiency_fixed", terms, _dims_params(dims, model=model_id, epsilon=epsilon))


def sufficiency_threshold_multiletter(dims: ProblemDims, mi_per_i: Sequence, tau: float = DEFAULT_TAU, model_id: str = "") -> BoundReport:
    """Known-beta scaling condition T > tau max_i log C(N-K, i) / I(i); with
    a fixed beta the multi-letter MI is T times the single-letter one."""
    rep = sufficiency_threshold_fixed(dims, mi_per_i, tau - 1.0, model_id=model_id)
    rep.kind = "sufficiency_scaling"
    rep.params = _dims_params(dims, model=model_id, tau=tau, form="multi-letter, fixed beta")
    return rep


def _premise_check(exponent_model, partition_i, k, mi, tau, grid=None):
    model, q, beta = exponent_model
    grid = np.linspace(0.0, 1.0, 9) if grid is None else grid
    part = SupportPartition.with_unknown(partition_i, k)
    worst = max(abs(second_difference(model, q, beta, part, r)) for r in grid)
    return {"i": partition_i, "max_abs_eo_second": worst, "limit": tau / 5.0 * mi, "held": worst <= tau / 5.0 * mi}


def sufficiency_threshold_scaling(
    dims: ProblemDims,
    mi_worst_per_i: Sequence,
    tau: float = DEFAULT_TAU,
    p_min: float = 1.0,
    t_current: float | None = None,
    *,
    exponent_model=None,
    model_id: str = "",
) -> BoundReport:
    """T > tau max_i log C(N-K, i) / (I_worst(i) - K / (T p_min)).

    ``t_current`` (default: dims.n_samples) is the T used in the penalty.
    With ``exponent_model = (model, q, beta)`` the curvature premise
    |E_o''| <= (tau/5) I is checked on a 9-point rho grid and reported.
    """
    if not 0 < p_min <= 1:
        raise ConfigError("p_min must lie in (0, 1]")
    if tau <= 0:
        raise ConfigError("tau must be positive")
    n, k = dims.n_vars, dims.k_sparse
    t = dims.n_samples if t_current is None else t_current
    if not t > 0:
        raise ConfigError("the penalty needs a positive T")
    penalty = k / (t * p_min)
    mis = _by_i(mi_worst_per_i, k)
    terms, premise = [], []
    for i in sorted(mis):
        if mis[i] <= 0:
            raise ZeroInformation(f"worst-case MI is zero at i={i}")
        den = mis[i] - penalty
        if den <= 0:
            raise SideConditionFailed(
                f"side condition I >= K/(T p_min) fails at i={i}: I={mis[i]:.6g}, K/(T p_min)={penalty:.6g}"
            )
        num = log_binom(n - k, i)
        terms.append(BoundTerm(i, num, den, tau * num / den, num == 0))
        if exponent_model is not None:
            premise.append(_premise_check(exponent_model, i, k, mis[i], tau))
    params = _dims_params(dims, model=model_id, tau=tau, p_min=p_min, t_current=t, penalty=penalty)
    if premise:
        params["premise"] = premise
        params["premise_held"] = all(p["held"] for p in premise)
    return _assemble("sufficiency_scaling", terms, params)


# ---------------------------------------------------------------------------
# finite-size bound


@dataclass
class FiniteSizeBound:
    per_i: np.ndarray
    union_bound: float
    rho: np.ndarray
    objective: np.ndarray
    dims: ProblemDims
    model_id: dict | None = None

    def __iter__(self):
        yield self.per_i
        yield self.union_bound

    def to_dict(self) -> dict:
        return {
            "dims": self.dims.to_dict(),
            "union_bound": self.union_bound,
            "per_i": [
                {"i": i + 1, "bound": float(b), "rho": float(r), "objective_nats": float(o)}
                for i, (b, r, o) in enumerate(zip(self.per_i, self.rho, self.objective))
            ],
        }


def finite_size_error_bound(dims: ProblemDims, model, q, beta_or_prior, rho_strategy="optimize") -> FiniteSizeBound:
    """P(E_i) <= exp(-(T E(rho) - rho log C(N-K, i) - log C(K, i))), clamped
    to 1, and the union bound min(1, sum_i).

    E(rho) is E_o(rho, beta) for a fixed beta (or a model without
    coefficients) and the penalised minimum over the support of a DiscreteIID
    prior otherwise. ``rho_strategy`` is "optimize" or a fixed rho in [0, 1].
    """
    k = dims.k_sparse
    bounds, rhos, objs = [], [], []
    for i in range(1, k + 1):
        part = SupportPartition.with_unknown(i, k)
        if dims.n_samples == 0:
            rho, obj = 0.0, -log_binom(k, i)
        elif rho_strategy == "optimize":
            rho, obj = optimize_rho(model, q, beta_or_prior, part, dims)
        else:
            from .exponent import _objective_fn

            rho = float(rho_strategy)
            if not 0.0 <= rho <= 1.0:
                raise ConfigError("fixed rho must lie in [0, 1]")
            obj = _objective_fn(model, q, beta_or_prior, part, dims)(rho)
        rhos.append(rho)
        objs.append(obj)
        bounds.append(min(1.0, math.exp(-obj)) if obj > -700 else 1.0)
    per_i = np.array(bounds)
    return FiniteSizeBound(per_i, float(min(1.0, per_i.sum())), np.array(rhos), np.array(objs), dims, model.to_dict())


def samples_for_error(dims: ProblemDims, model, q, beta_or_prior, target: float, t_max: int = 10**7) -> int:
    """Smallest T with finite-size union bound <= target (bisection on the
    monotone bound)."""
    if not 0 < target < 1:
        raise ConfigError("target error must lie in (0, 1)")

    def ok(t):
        return finite_size_error_bound(dims.with_samples(t), model, q, beta_or_prior).union_bound <= target

    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > t_max:
            raise NoFiniteThreshold(f"union bound stays above {target} up to T={t_max}")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# partial recovery, multivariate


def partial_recovery_thresholds(dims: ProblemDims, mi_per_i: Sequence, k_recover: int, kind: str = "necessity", **kw) -> BoundReport:
    """Same threshold with i restricted to {K - k_recover + 1, ..., K}."""
    k = dims.k_sparse
    if not 1 <= k_recover <= k:
        raise ConfigError(f"need 1 <= k_recover <= K, got {k_recover}")
    rng = range(k - k_recover + 1, k + 1)
    if kind == "necessity":
        rep = necessity_threshold(dims, mi_per_i, i_range=rng, **kw)
    elif kind == "sufficiency_fixed":
        rep = sufficiency_threshold_fixed(dims, mi_per_i, i_range=rng, **kw)
    else:
        raise ConfigError(f"partial recovery supports necessity or sufficiency_fixed, got {kind!r}")
    rep.params.update(k_recover=k_recover, base_kind=kind)
    rep.kind = "partial_recovery"
    return rep


def bounds_multivariate(base_reports, r_problems: int):
    """R problems sharing the support: MI scales by R, every ratio by 1/R.

    Accepts one report or a tuple of reports and returns the same shape.
    """
    if int(r_problems) != r_problems or r_problems < 1:
        raise ConfigError("r_problems must be a positive integer")
    if isinstance(base_reports, BoundReport):
        return _scale_report(base_reports, r_problems)
    return tuple(_scale_report(r, r_problems) for r in base_reports)


def _scale_report(rep: BoundReport, r: int) -> BoundReport:
    terms = [BoundTerm(t.i, t.numerator, t.denominator * r, t.ratio / r, t.vacuous) for t in rep.per_i]
    out = _assemble(rep.kind, terms, {**rep.params, "r_problems": r})
    return out


# ---------------------------------------------------------------------------
# self-consistent thresholds


def _solve_increasing(g, target, what):
    """Smallest T with g(T) >= target for increasing g on T_BRACKET."""
    lo, hi = T_BRACKET
    if g(lo) >= target:
        return lo
    if g(hi) < target:
        raise NoFiniteThreshold(f"{what}: no T <= {hi:.0e} satisfies the condition")
    return brentq(lambda t: g(t) - target, lo, hi, xtol=1e-9, rtol=1e-14, maxiter=500)


def _t_gauss(t, c):
    """T * 1/2 log(1 + c / T); increasing in T with limit c / 2."""
    return 0.5 * t * math.log1p(c / t)


def snr_necessity_linear(dims: ProblemDims, sigma_sq: float) -> float:
    """SNR > 2 max_i log C(N-K+i, i) / (i sigma^2)."""
    if not sigma_sq > 0:
        raise ConfigError("sigma_sq must be positive")
    n, k = dims.n_vars, dims.k_sparse
    return max(2.0 * log_binom(n - k + i, i) / (i * sigma_sq) for i in range(1, k + 1))


def linear_lower_bound(dims: ProblemDims, snr: float, sigma_sq: float, t: float) -> float:
    """max_i log C(N-K+i, i) / (1/2 log(1 + i sigma^2 SNR / T)) evaluated at T."""
    n, k = dims.n_vars, dims.k_sparse
    return max(log_binom(n - k + i, i) / (0.5 * math.log1p(i * sigma_sq * snr / t)) for i in range(1, k + 1))


def bounds_linear_regression(dims: ProblemDims, snr: float, sigma_sq: float = 1.0, b_min: float = 1.0, epsilon: float = DEFAULT_EPSILON):
    """Necessity with denominator 1/2 log(1 + i sigma^2 SNR / T) and sufficiency
    with the worst-case denominator 1/2 log(1 + i b_min^2 SNR / T), both solved
    self-consistently in T."""
    if not (snr > 0 and sigma_sq > 0 and b_min > 0 and epsilon >= 0):
        raise ConfigError("snr, sigma_sq and b_min must be positive, epsilon non-negative")
    n, k = dims.n_vars, dims.k_sparse
    nec, suf = [], []
    for i in range(1, k + 1):
        num = log_binom(n - k + i, i)
        c = i * sigma_sq * snr
        t = _solve_increasing(lambda tt: _t_gauss(tt, c), num, f"necessity at i={i}") if num > 0 else 0.0
        den = 0.5 * math.log1p(c / t) if t > 0 else math.inf
        nec.append(BoundTerm(i, num, den, t, num == 0))
        num_s = log_binom(n - k, i)
        cs = i * b_min**2 * snr
        ts = _solve_increasing(lambda tt: _t_gauss(tt, cs), (1.0 + epsilon) * num_s, f"sufficiency at i={i}") if num_s > 0 else 0.0
        den_s = 0.5 * math.log1p(cs / ts) if ts > 0 else math.inf
        suf.append(BoundTerm(i, num_s, den_s, ts, num_s == 0))
    p = dict(model="linear", snr=snr, sigma_sq=sigma_sq, b_min=b_min)
    return (
        _assemble("necessity", nec, _dims_params(dims, **p)),
        _assemble("sufficiency_fixed", suf, _dims_params(dims, epsilon=epsilon, **p)),
    )


def necessity_missing(base_necessity: BoundReport, miss_prob: float) -> BoundReport:
    """Scale a complete-data necessity report by 1/(1 - miss_prob)."""
    if not 0.0 <= miss_prob < 1.0:
        raise ConfigError("miss_prob must lie in [0, 1)")
    keep = 1.0 - miss_prob
    terms = [BoundTerm(t.i, t.numerator, t.denominator * keep, t.ratio / keep, t.vacuous) for t in base_necessity.per_i]
    return _assemble("necessity", terms, {**base_necessity.params, "miss_prob": miss_prob})


def bounds_missing(dims: ProblemDims, miss_prob: float, base_necessity: BoundReport, b_min: float, snr: float, epsilon: float = DEFAULT_EPSILON):
    """Necessity scaled by 1/(1 - miss_prob); linear-model sufficiency with
    denominator 1/2 log(1 + (1-rho) i SNR b^2 / (K rho SNR b^2 + T))."""
    if not 0.0 <= miss_prob < 1.0:
        raise ConfigError("miss_prob must lie in [0, 1)")
    if not (b_min > 0 and snr > 0 and epsilon >= 0):
        raise ConfigError("b_min and snr must be positive, epsilon non-negative")
    n, k = dims.n_vars, dims.k_sparse
    keep = 1.0 - miss_prob
    nec = necessity_missing(base_necessity, miss_prob)
    gain = snr * b_min**2
    terms = []
    for i in range(1, k + 1):
        num = log_binom(n - k, i)
        a = keep * i * gain
        b = k * miss_prob * gain

        def g(t, a=a, b=b):
            return 0.5 * t * math.log1p(a / (b + t))

        t = _solve_increasing(g, (1.0 + epsilon) * num, f"missing-data sufficiency at i={i}") if num > 0 else 0.0
        den = 0.5 * math.log1p(a / (b + t))
        terms.append(BoundTerm(i, num, den, t, num == 0))
    suf = _assemble(
        "sufficiency_fixed",
        terms,
        _dims_params(dims, model="missing-linear", miss_prob=miss_prob, b_min=b_min, snr=snr, epsilon=epsilon),
    )
    return nec, suf


# ---------------------------------------------------------------------------
# group testing and probit


def bounds_group_testing(dims: ProblemDims, p: float, epsilon: float = DEFAULT_EPSILON):
    """(necessity, sufficiency) for noiseless group testing with test
    inclusion probability p."""
    k = dims.k_sparse
    mis = [mi_group_testing(p, i, k) for i in range(1, k + 1)]
    return (
        necessity_threshold(dims, mis, model_id="group-testing"),
        sufficiency_threshold_fixed(dims, mis, epsilon, model_id="group-testing"),
    )


def gt_figure_rows(k: int, n_grid: Sequence[int], p: float | None = None, epsilon: float = DEFAULT_EPSILON, target: float = 0.05):
    """Rows (n, k, t_lower, t_upper, t_upper_asymptotic) for group testing.

    ``t_upper`` is the smallest T whose finite-size union bound is at most
    ``target``; ``t_upper_asymptotic`` is the (1+eps) mutual-information
    threshold.
    """
    p = 1.0 / k if p is None else p
    rows = []
    for n in n_grid:
        dims = ProblemDims(int(n), k, 1)
        nec, suf = bounds_group_testing(dims, p, epsilon)
        t_up = samples_for_error(dims, GroupTestingNoiseless(), Bernoulli(p=p), None, target)
        rows.append({"n": int(n), "k": k, "t_lower": nec.t_threshold, "t_upper": float(t_up), "t_upper_asymptotic": suf.t_threshold})
    return rows


def bounds_probit(dims: ProblemDims, epsilon: float = DEFAULT_EPSILON, quadrature_order: int = 64):
    """(necessity, sufficiency) for unit-coefficient probit regression, plus
    a check of the closed-form entropy envelopes against quadrature."""
    k = dims.k_sparse
    mis = [mi_probit(i, k, quadrature_order) for i in range(1, k + 1)]
    checks = []
    for m in mis:
        env = probit_entropy_bounds(m.partition_size_i, k)
        h2, h, _ = probit_entropies(float(m.partition_size_i), float(k - m.partition_size_i), quadrature_order)
        checks.append(
            {
                "i": m.partition_size_i,
                "mi": m.value,
                "mi_lower": env["mi_lower"],
                "h_revealed": h2,
                "h_revealed_lower": env["h_cond_revealed_lower"],
                "h_full": h,
                "h_full_upper": env["h_cond_full_upper"],
                "holds": bool(m.value >= env["mi_lower"] and h2 >= env["h_cond_revealed_lower"] and h <= env["h_cond_full_upper"]),
            }
        )
    if not all(c["holds"] for c in checks):
        raise ArithmeticError(f"probit entropy envelopes violated: {checks}")
    nec = necessity_threshold(dims, mis, model_id="probit")
    suf = sufficiency_threshold_fixed(dims, mis, epsilon, model_id="probit")
    nec.params["entropy_bounds"] = checks
    suf.params["entropy_bounds"] = checks
    return nec, suf
