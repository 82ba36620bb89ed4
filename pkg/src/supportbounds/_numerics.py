"""Small numerical helpers shared across modules (all quantities in nats)."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp, ndtr, log_ndtr

from .errors import QuadratureError

__all__ = [
    "log_binom",
    "binary_entropy",
    "gh_nodes",
    "gauss_expect",
    "logsumexp",
    "ndtr",
    "log_ndtr",
    "CLAMP_TOL",
]

CLAMP_TOL = 1e-12
GH_DEFAULT_ORDER = 64
GH_MAX_ORDER = 256
GH_TOL = 1e-6


def log_binom(n, k):
    """log C(n, k) through log-gamma; exact integer arithmetic for n <= 60."""
    if np.ndim(n) == 0 and np.ndim(k) == 0:
        n, k = int(n), int(k)
        if k < 0 or k > n:
            raise ValueError(f"log_binom needs 0 <= k <= n, got n={n}, k={k}")
        if n <= 60:
            return math.log(math.comb(n, k))
        return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def binary_entropy(p):
    """h_b(p) in nats, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0) - np.where(q > 0, q * np.log(q), 0.0)
    return h if h.ndim else float(h)


@lru_cache(maxsize=32)
def gh_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes and weights normalised to sum to one."""
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_expect(f, var: float, order: int = GH_DEFAULT_ORDER, check: bool = True):
    """E[f(Z)] for Z ~ N(0, var) by Gauss-Hermite quadrature.

    With ``check`` the order is doubled until two successive orders agree to
    GH_TOL; the returned error is the last discrepancy.
    """
    def once(m):
        x, w = gh_nodes(m)
        return float(np.dot(w, f(np.sqrt(var) * x)))

    val = once(order)
    if not check:
        return val, 0.0
    m = order
    while m < GH_MAX_ORDER:
        m *= 2
        nxt = once(m)
        err = abs(nxt - val)
        val = nxt
        if err <= GH_TOL:
            return val, err
    raise QuadratureError(f"Gauss-Hermite did not converge by order {GH_MAX_ORDER} (last diff {err:.3g})")
