"""Single-letter Gallager-type exponent E_o(rho, beta), its lower bound under
a discrete coefficient prior, curvature bounds and the rho optimisation used
by the finite-size error bound.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._numerics import GH_DEFAULT_ORDER, GH_MAX_ORDER, GH_TOL, gh_nodes, log_binom, log_ndtr
from .errors import ConfigError, QuadratureError
from .info import _beta_terms, _check_cap, _split_table, conditional_mi
from .model import (
    DiscreteIID,
    Fixed,
    Gaussian,
    GaussianFloor,
    LinearGaussian,
    ObservationModel,
    ProblemDims,
    Probit,
    SupportPartition,
)

FD_STEP = 1e-4
GOLDEN_TOL = 1e-6
GRID_FALLBACK = 33
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# discrete channels


def _discrete_parts(model, q, beta, partition):
    _check_cap(model, q, partition.k)
    table = model.channel(q, partition.k, beta)
    w, q1, q2 = _split_table(table, model.input_pmf(q), partition)
    with np.errstate(divide="ignore"):
        return np.log(w), np.log(q1), np.log(q2)


def _eo_discrete(logw, logq1, logq2, rho: float) -> float:
    a = 1.0 / (1.0 + rho)
    inner = logsumexp(logq1[:, None, None] + a * logw, axis=0)  # (x2, y)
    total = logsumexp(logq2[:, None] + (1.0 + rho) * inner)
    return -float(total)


# ---------------------------------------------------------------------------
# Gaussian-input channels


def _projections(model, q, beta, partition):
    if not isinstance(q, Gaussian):
        raise ConfigError(f"{model.name} exponent needs Gaussian variables")
    b = np.asarray(beta, dtype=float)
    if b.shape != (partition.k,):
        raise ConfigError(f"beta must have length K={partition.k}")
    b1, b2 = b[list(partition.s1)], b[list(partition.s2)]
    return float(b1 @ b1) * q.variance, float(b2 @ b2) * q.variance


def eo_linear_closed_form(v1: float, snr: float, rho: float) -> float:
    """(rho/2) log(1 + v1 SNR / (1 + rho)) with v1 the variance of <x_S1, beta_S1>."""
    return 0.5 * rho * math.log1p(v1 * snr / (1.0 + rho))


def _converged(fn, order):
    """fn(order) with order doubling until successive values agree to 1e-10;
    at the maximum order a discrepancy up to GH_TOL is still accepted."""
    val = fn(order)
    m, err = order, math.inf
    while m < GH_MAX_ORDER:
        m *= 2
        nxt = fn(m)
        err = abs(nxt - val)
        val = nxt
        if err <= 1e-10:
            return val
    if err <= GH_TOL:
        return val
    raise QuadratureError(f"exponent quadrature did not converge by order {GH_MAX_ORDER} (last diff {err:.3g})")


def eo_linear_quadrature(v1: float, snr: float, rho: float, order: int = GH_DEFAULT_ORDER) -> float:
    """Gauss-Hermite evaluation of the linear-model exponent integral
    -log int [E_s p(y|s)^(1/(1+rho))]^(1+rho) dy (cross-check for the closed form)."""
    nv = 1.0 / snr
    a = 1.0 / (1.0 + rho)
    ty = v1 + nv

    # inner nodes follow N(c y, 2 tau^2), twice the variance of the normalised
    # integrand, so the integrand-to-node-density ratio stays smooth at high SNR
    tau2 = 1.0 / (1.0 / v1 + a / nv)
    c = tau2 * a / nv
    sp = math.sqrt(2.0 * tau2)

    def once(m):
        z, w = gh_nodes(m)
        y = math.sqrt(ty) * z
        s = c * y[:, None] + sp * z[None, :]
        log_prior = -0.5 * (np.log(2 * np.pi * v1) + s**2 / v1)
        log_node = -0.5 * (np.log(2 * np.pi * sp * sp) + z[None, :] ** 2)
        logp = -0.5 * (np.log(2 * np.pi * nv) + (y[:, None] - s) ** 2 / nv)
        inner = logsumexp(a * logp + log_prior - log_node, b=w[None, :], axis=1)
        log_ref = -0.5 * (np.log(2 * np.pi * ty) + y**2 / ty)
        return -float(logsumexp((1.0 + rho) * inner - log_ref, b=w))

    return _converged(once, order)


def eo_probit_quadrature(v1: float, v2: float, rho: float, order: int = GH_DEFAULT_ORDER) -> float:
    """Nested Gauss-Hermite exponent for the probit channel, integrating the
    scalar projections s1 ~ N(0, v1) and s2 ~ N(0, v2)."""
    a = 1.0 / (1.0 + rho)

    def once(m):
        z, w = gh_nodes(m)
        s1 = math.sqrt(v1) * z
        s2 = math.sqrt(v2) * z if v2 > 0 else np.zeros(1)
        w2 = w if v2 > 0 else np.ones(1)
        tot = []
        for sign in (1.0, -1.0):
            lp = log_ndtr(sign * (s2[:, None] + s1[None, :]))
            inner = logsumexp(a * lp, b=w[None, :], axis=1)
            tot.append(logsumexp((1.0 + rho) * inner, b=w2))
        return -float(logsumexp(tot))

    return _converged(once, order)


# ---------------------------------------------------------------------------
# public evaluation


def _eo_raw(model: ObservationModel, q, beta, partition: SupportPartition, rho: float, method: str = "auto") -> float:
    """E_o without range checks (rho > -1 allowed, for central differences)."""
    if rho == 0:
        return 0.0
    if model.is_discrete:
        return _eo_discrete(*_discrete_parts(model, q, beta, partition), rho)
    if isinstance(model, LinearGaussian):
        v1, _ = _projections(model, q, beta, partition)
        if method == "quadrature":
            return eo_linear_quadrature(v1, model.snr, rho)
        return eo_linear_closed_form(v1, model.snr, rho)
    if isinstance(model, Probit):
        v1, v2 = _projections(model, q, beta, partition)
        return eo_probit_quadrature(v1, v2, rho)
    raise ConfigError(f"no exponent evaluation for {model!r}")


def _check_rho(rho):
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"rho must lie in [0, 1], got {rho}")


def eo_single_letter(model: ObservationModel, q, beta, partition: SupportPartition, rho: float, method: str = "auto") -> float:
    """E_o(rho, beta) = -log sum_{y, x_S2} [sum_{x_S1} Q(x_S1) p(y, x_S2 | x_S1, beta)^(1/(1+rho))]^(1+rho).

    Sums become Gaussian integrals for the linear (closed form, or
    ``method="quadrature"``) and probit (nested Gauss-Hermite) models.
    """
    _check_rho(rho)
    if model.has_beta and beta is None:
        raise ConfigError(f"{model.name} exponent needs beta")
    return _eo_raw(model, q, beta, partition, rho, method)


def _p_min(prior) -> float:
    if prior is None or isinstance(prior, Fixed):
        return 1.0
    if isinstance(prior, DiscreteIID):
        return prior.p_min
    if isinstance(prior, GaussianFloor):
        raise ConfigError("exponent lower bound needs a prior with p_min (Fixed or DiscreteIID)")
    raise ConfigError(f"unsupported prior {prior!r}")


def _min_eo(model, q, prior, partition, rho):
    vecs, _ = _beta_terms(model, prior, partition.k)
    return min(_eo_raw(model, q, b, partition, rho) for b in vecs)


def eo_lower_bound(model: ObservationModel, q, prior, partition: SupportPartition, rho: float, dims: ProblemDims) -> float:
    """-rho K / (T p_min) + min_beta E_o(rho, beta) over the prior's support."""
    _check_rho(rho)
    p_min = _p_min(prior)
    if dims.n_samples < 1:
        raise ConfigError("exponent lower bound needs T >= 1")
    if rho == 0:
        return 0.0
    return -rho * dims.k_sparse / (dims.n_samples * p_min) + _min_eo(model, q, prior, partition, rho)


def eo_second_derivative_bound(model: ObservationModel, q, beta, partition: SupportPartition, rho: float) -> tuple[float, float]:
    """(weighted, sup) bounds on |E_o''(rho)| from E[u log^2 u] with
    u = W^a / sum_x1 Q(x1) W^a, a = 1/(1+rho), weights
    g = Q(x2) (sum_x1 Q(x1) W^a)^(1/a)."""
    _check_rho(rho)
    if not model.is_discrete:
        raise ConfigError("second-derivative bound needs a discrete model")
    logw, logq1, logq2 = _discrete_parts(model, q, beta, partition)
    a = 1.0 / (1.0 + rho)
    inner = logsumexp(logq1[:, None, None] + a * logw, axis=0)  # (x2, y)
    with np.errstate(invalid="ignore"):
        logu = a * logw - inner[None]
        ulog2u = np.where(np.isfinite(logu), np.exp(logu) * logu**2, 0.0)
    per_cell = np.einsum("a,abY->bY", np.exp(logq1), ulog2u)
    logg = logq2[:, None] + (1.0 + rho) * inner
    g = np.exp(logg - logsumexp(logg))
    live = g > 0
    weighted = float((g * per_cell).sum())
    sup = float(per_cell[live].max()) if live.any() else 0.0
    return weighted, sup


# ---------------------------------------------------------------------------
# rho optimisation


def _objective_fn(model, q, beta_or_prior, partition, dims):
    """rho -> T E(rho) - rho log C(N-K, i) - log C(K, i), where E is E_o for a
    fixed beta and the penalised minimum for a DiscreteIID prior."""
    t, k, n, i = dims.n_samples, dims.k_sparse, dims.n_vars, partition.i
    lb_nk = log_binom(n - k, i)
    lb_k = log_binom(k, i)
    random_beta = isinstance(beta_or_prior, DiscreteIID) and len(beta_or_prior.points) > 1
    if isinstance(beta_or_prior, GaussianFloor):
        raise ConfigError("finite-size bound needs a Fixed or DiscreteIID prior")
    if isinstance(beta_or_prior, Fixed):
        beta_or_prior = np.asarray(beta_or_prior.values)
    elif isinstance(beta_or_prior, DiscreteIID) and not random_beta:
        beta_or_prior = np.full(k, beta_or_prior.points[0])

    def f(rho):
        if rho == 0 or t == 0:
            return -lb_k - rho * lb_nk
        if random_beta:
            te = t * _min_eo(model, q, beta_or_prior, partition, rho) - rho * k / beta_or_prior.p_min
        else:
            te = t * _eo_raw(model, q, beta_or_prior, partition, rho)
        return te - rho * lb_nk - lb_k

    return f


def _golden_max(f, lo=0.0, hi=1.0, tol=GOLDEN_TOL):
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def optimize_rho(model: ObservationModel, q, beta_or_prior, partition: SupportPartition, dims: ProblemDims) -> tuple[float, float]:
    """Maximise T E(rho) - rho log C(N-K, i) - log C(K, i) over [0, 1].

    Golden-section search (the objective is concave) with both endpoints
    checked explicitly; a 33-point grid is used instead when a coarse
    concavity check fails.
    """
    f = _objective_fn(model, q, beta_or_prior, partition, dims)
    coarse = np.linspace(0.0, 1.0, 5)
    fv = np.array([f(r) for r in coarse])
    chords = fv[1:-1] - 0.5 * (fv[:-2] + fv[2:])
    cands = list(zip(coarse, fv))
    if (chords < -1e-9 * max(1.0, np.abs(fv).max())).any():
        grid = np.linspace(0.0, 1.0, GRID_FALLBACK)
        cands += [(r, f(r)) for r in grid]
    else:
        cands.append(_golden_max(f))
    best = max(cands, key=lambda c: (c[1], -c[0]))
    return float(best[0]), float(best[1])


# ---------------------------------------------------------------------------
# curves


def central_derivative_at_zero(model, q, beta, partition, h: float = FD_STEP) -> float:
    """Central difference of E_o at rho = 0 (E_o is smooth on (-1, inf))."""
    return (_eo_raw(model, q, beta, partition, h) - _eo_raw(model, q, beta, partition, -h)) / (2 * h)


def second_difference(model, q, beta, partition, rho: float, h: float = 1e-3) -> float:
    f = lambda r: _eo_raw(model, q, beta, partition, r)
    return (f(rho + h) - 2 * f(rho) + f(rho - h)) / (h * h)


@dataclass
class ExponentCurve:
    rho_grid: np.ndarray
    eo_values: np.ndarray
    beta: np.ndarray
    partition_size_i: int
    derivative_at_zero: float
    second_derivative_bound: float | None
    mi: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def derivative_residual(self) -> float | None:
        if self.mi is None:
            return None
        return abs(self.derivative_at_zero - self.mi) / max(self.mi, 1e-300)

    def concavity_violation(self) -> float:
        """Largest amount by which a midpoint chord test fails (0 if concave)."""
        r, e = self.rho_grid, self.eo_values
        worst = 0.0
        for j in range(1, len(r) - 1):
            lam = (r[j + 1] - r[j]) / (r[j + 1] - r[j - 1])
            chord = lam * e[j - 1] + (1 - lam) * e[j + 1]
            worst = max(worst, chord - e[j])
        return worst

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rho", "eo_nats"])
        for r, e in zip(self.rho_grid, self.eo_values):
            w.writerow([repr(float(r)), repr(float(e))])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "beta": [float(b) for b in self.beta],
            "i": self.partition_size_i,
            "derivative_at_zero": self.derivative_at_zero,
            "mi": self.mi,
            "derivative_residual": self.derivative_residual,
            "concavity_violation": self.concavity_violation(),
            "concave": self.concavity_violation() <= 1e-9,
            "second_derivative_bound": self.second_derivative_bound,
            **self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.sidecar(), indent=2, sort_keys=True)


def exponent_curve(model: ObservationModel, q, beta, partition: SupportPartition, rho_grid) -> ExponentCurve:
    """E_o over a rho grid with derivative and curvature diagnostics."""
    grid = np.asarray(rho_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 9:
        raise ConfigError("rho grid needs at least 9 points for the concavity diagnostics")
    if (np.diff(grid) <= 0).any() or grid[0] != 0.0 or grid[-1] > 1.0:
        raise ConfigError("rho grid must be increasing in [0, 1] and start at 0")
    vals = np.array([eo_single_letter(model, q, beta, partition, r) for r in grid])
    deriv = central_derivative_at_zero(model, q, beta, partition)
    mi = conditional_mi(model, q, beta, partition).value
    d2 = None
    diag = {}
    if model.is_discrete:
        bounds = [eo_second_derivative_bound(model, q, beta, partition, r) for r in grid]
        d2 = max(b[0] for b in bounds)
        diag["second_derivative_sup_bound"] = max(b[1] for b in bounds)
    b = np.zeros(0) if beta is None else np.asarray(beta, dtype=float)
    return ExponentCurve(grid, vals, b, partition.i, deriv, d2, mi, diag)
