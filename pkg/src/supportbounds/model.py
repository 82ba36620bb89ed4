"""Problem dimensions, variable distributions, coefficient priors, observation
models and synthetic data generation.

Every observation model works on rows of the *selected* columns ``x_S`` (the
last axis has length K) and a coefficient vector ``beta`` of length K. Discrete
models additionally expose their conditional law as a dense table
``P(y | x_S)`` indexed by alphabet positions, which is what the exact
information and exponent computations enumerate.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from ._numerics import log_ndtr, log_binom
from .errors import ConfigError, EnumerationCapExceeded

SUPPORT_CAP = 10**6
TABLE_CAP = 10**7
ROW_BLOCK = 4096

# stream ids for SeedSequence spawn keys
_STREAM_BETA, _STREAM_X, _STREAM_Y, _STREAM_MASK = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# dimensions and index sets


@dataclass(frozen=True)
class ProblemDims:
    """Problem size: N variables, K salient ones, T observations.

    ``n_samples = 0`` is accepted so that bound evaluations can be asked about
    the no-data edge case; data generation requires at least one row.
    """

    n_vars: int
    k_sparse: int
    n_samples: int = 1

    def __post_init__(self):
        n, k, t = self.n_vars, self.k_sparse, self.n_samples
        if int(n) != n or int(k) != k or int(t) != t:
            raise ConfigError("dimensions must be integers")
        if k < 1 or 2 * k > n:
            raise ConfigError(f"need 1 <= K <= N/2, got N={n}, K={k}")
        if t < 0:
            raise ConfigError(f"need T >= 0, got {t}")

    @property
    def n_supports(self) -> int:
        return math.comb(self.n_vars, self.k_sparse)

    def check_enumerable(self, cap: int = SUPPORT_CAP) -> None:
        if self.n_supports > cap:
            raise EnumerationCapExceeded(
                f"C({self.n_vars},{self.k_sparse}) = {self.n_supports} exceeds the cap {cap}"
            )

    def with_samples(self, t: int) -> "ProblemDims":
        return ProblemDims(self.n_vars, self.k_sparse, t)

    def log_binom(self, n: int, k: int) -> float:
        return log_binom(n, k)

    def to_dict(self) -> dict:
        return {"n": self.n_vars, "k": self.k_sparse, "t": self.n_samples}


@dataclass(frozen=True, order=True)
class SupportSet:
    """K distinct variable indices kept in increasing order."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise ConfigError(f"support indices must be distinct: {self.indices}")
        if idx and idx[0] < 0:
            raise ConfigError("support indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def validate(self, dims: ProblemDims) -> None:
        if len(self.indices) != dims.k_sparse:
            raise ConfigError(f"support has {len(self.indices)} indices, K={dims.k_sparse}")
        if self.indices[-1] >= dims.n_vars:
            raise ConfigError(f"support index {self.indices[-1]} out of range for N={dims.n_vars}")

    def differing(self, other: "SupportSet") -> int:
        """Number of indices of ``self`` missing from ``other``."""
        return len(set(self.indices) - set(other.indices))


@dataclass(frozen=True)
class SupportPartition:
    """Split of the K support positions into an unknown part ``s1`` (size i)
    and a revealed part ``s2`` (size K - i).

    Positions refer to the ordering of the support (and of ``beta``), not to
    variable indices.
    """

    s1: tuple[int, ...]
    s2: tuple[int, ...]

    def __post_init__(self):
        s1 = tuple(int(v) for v in self.s1)
        s2 = tuple(int(v) for v in self.s2)
        if len(s1) < 1:
            raise ConfigError("the unknown part of a partition needs at least one index")
        if set(s1) & set(s2) or len(set(s1)) != len(s1) or len(set(s2)) != len(s2):
            raise ConfigError("partition parts must be disjoint sets")
        if sorted(s1 + s2) != list(range(len(s1) + len(s2))):
            raise ConfigError("partition must cover positions 0..K-1")
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "s2", s2)

    @classmethod
    def with_unknown(cls, i: int, k: int) -> "SupportPartition":
        if not 1 <= i <= k:
            raise ConfigError(f"need 1 <= i <= K, got i={i}, K={k}")
        return cls(tuple(range(i)), tuple(range(i, k)))

    @property
    def i(self) -> int:
        return len(self.s1)

    @property
    def k(self) -> int:
        return len(self.s1) + len(self.s2)


# ---------------------------------------------------------------------------
# variable distributions


@dataclass(frozen=True)
class DiscreteDistribution:
    """IID finite-alphabet variable law (values with probabilities)."""

    values: tuple[float, ...]
    probs: tuple[float, ...]
    is_discrete = True

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        p = tuple(float(x) for x in self.probs)
        if len(v) != len(p) or not v:
            raise ConfigError("values and probs must be non-empty and of equal length")
        if len(set(v)) != len(v) or any(math.isnan(x) for x in v):
            raise ConfigError("alphabet values must be distinct numbers")
        if min(p) < 0 or abs(sum(p) - 1.0) > 1e-12:
            raise ConfigError(f"pmf must be non-negative and sum to 1, got {p}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @property
    def pmf(self) -> np.ndarray:
        return np.asarray(self.probs)

    @property
    def size(self) -> int:
        return len(self.values)

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.size, size=size, p=self.pmf)
        return np.asarray(self.values)[idx]

    def index_of(self, x) -> np.ndarray:
        """Alphabet positions of ``x``; NaN (missing) maps to ``size``."""
        x = np.asarray(x, dtype=float)
        vals = np.asarray(self.values)
        out = np.full(x.shape, -1, dtype=np.int64)
        for j, v in enumerate(vals):
            out[x == v] = j
        out[np.isnan(x)] = self.size
        if (out < 0).any():
            bad = x[out < 0].ravel()[:3]
            raise ConfigError(f"values {bad.tolist()} are not in the alphabet {self.values}")
        return out

    def to_dict(self) -> dict:
        return {"kind": "discrete", "values": list(self.values), "probs": list(self.probs)}


@dataclass(frozen=True)
class Bernoulli(DiscreteDistribution):
    values: tuple[float, ...] = field(init=False, default=(0.0, 1.0))
    probs: tuple[float, ...] = field(init=False, default=(0.5, 0.5))
    p: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"Bernoulli p must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "probs", (1.0 - float(self.p), float(self.p)))
        super().__post_init__()

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(size) < self.p).astype(float)

    def to_dict(self) -> dict:
        return {"kind": "bernoulli", "p": self.p}


@dataclass(frozen=True)
class Gaussian:
    """Zero-mean Gaussian variables."""

    variance: float
    is_discrete = False

    def __post_init__(self):
        if not self.variance > 0:
            raise ConfigError(f"Gaussian variance must be positive, got {self.variance}")

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(size) * math.sqrt(self.variance)

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "variance": self.variance}


# ---------------------------------------------------------------------------
# coefficient priors


@dataclass(frozen=True)
class Fixed:
    """Known coefficients (point-mass prior)."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    p_min = 1.0

    def sample(self, k: int, rng=None) -> np.ndarray:
        if len(self.values) != k:
            raise ConfigError(f"fixed beta has length {len(self.values)}, K={k}")
        return np.asarray(self.values)

    def support(self, k: int) -> tuple[list[tuple[float, ...]], np.ndarray]:
        self.sample(k)
        return [self.values], np.zeros(1)

    def to_dict(self) -> dict:
        return {"kind": "fixed", "values": list(self.values)}


@dataclass(frozen=True)
class DiscreteIID:
    """Each coefficient drawn IID from a finite set of points."""

    points: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        pts = tuple(float(v) for v in self.points)
        pr = tuple(float(v) for v in self.probs)
        if len(pts) != len(pr) or not pts or len(set(pts)) != len(pts):
            raise ConfigError("prior points must be distinct and match probs")
        if min(pr) <= 0 or abs(sum(pr) - 1.0) > 1e-12:
            raise ConfigError("prior masses must be positive and sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", pr)

    @property
    def p_min(self) -> float:
        return min(self.probs)

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.points)[rng.choice(len(self.points), size=k, p=self.probs)]

    def support(self, k: int) -> tuple[list[tuple[float, ...]], np.ndarray]:
        """All of B^K in lexicographic order with their log-probabilities."""
        combos = list(itertools.product(range(len(self.points)), repeat=k))
        logp = np.log(np.asarray(self.probs))
        vecs = [tuple(self.points[j] for j in c) for c in combos]
        return vecs, np.array([logp[list(c)].sum() for c in combos])

    def to_dict(self) -> dict:
        return {"kind": "discrete_iid", "points": list(self.points), "probs": list(self.probs)}


@dataclass(frozen=True)
class GaussianFloor:
    """N(0, variance) coefficients conditioned on |beta_k| >= b_min.

    ``variance`` is that of the untruncated Gaussian. There is no p_min for
    this prior, so exponent lower bounds reject it.
    """

    variance: float
    b_min: float = 0.0

    def __post_init__(self):
        if not self.variance > 0 or self.b_min < 0:
            raise ConfigError("GaussianFloor needs variance > 0 and b_min >= 0")

    @property
    def p_min(self):
        raise ConfigError("GaussianFloor prior has no p_min; use a DiscreteIID or Fixed prior")

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        sd = math.sqrt(self.variance)
        if self.b_min == 0:
            return rng.standard_normal(k) * sd
        a = self.b_min / sd
        mag = stats.truncnorm.rvs(a, np.inf, size=k, random_state=rng) * sd
        sign = np.where(rng.random(k) < 0.5, -1.0, 1.0)
        return sign * mag

    def to_dict(self) -> dict:
        return {"kind": "gaussian_floor", "variance": self.variance, "b_min": self.b_min}


# ---------------------------------------------------------------------------
# observation models


class ObservationModel:
    """Common surface of the observation models.

    Subclasses provide ``sample_outcomes`` and ``row_loglik``; discrete ones
    also provide ``channel``.
    """

    name = "abstract"
    is_discrete = False
    has_beta = True

    def check_q(self, q) -> None:
        pass

    def sample_outcomes(self, q, xs: np.ndarray, beta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def row_loglik(self, q, xs: np.ndarray, beta: np.ndarray, y: np.ndarray) -> np.ndarray:
        """log p(y | x_S, beta) for every row; ``xs`` has K on the last axis."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class DiscreteModel(ObservationModel):
    is_discrete = True
    n_outcomes = 2

    def channel(self, q: DiscreteDistribution, k: int, beta=None) -> np.ndarray:
        """Dense table P(y | x_S, beta) of shape (|X|,)*K + (|Y|,)."""
        raise NotImplementedError

    def input_pmf(self, q: DiscreteDistribution) -> np.ndarray:
        return q.pmf

    def input_index(self, q: DiscreteDistribution, xs) -> np.ndarray:
        idx = q.index_of(xs)
        if (idx == q.size).any():
            raise ConfigError(f"{self.name} does not accept missing entries")
        return idx

    def row_loglik(self, q, xs, beta, y):
        k = np.shape(xs)[-1]
        table = self.channel(q, k, beta)
        with np.errstate(divide="ignore"):
            logt = np.log(table).reshape(-1)
        idx = self.input_index(q, xs)
        a = table.shape[0]
        flat = np.zeros(idx.shape[:-1], dtype=np.int64)
        for j in range(k):
            flat = flat * a + idx[..., j]
        y = np.asarray(y)
        yi = y.astype(np.int64)
        if (yi != y).any() or (yi < 0).any() or (yi >= self.n_outcomes).any():
            raise ConfigError(f"outcomes must be integers in [0, {self.n_outcomes})")
        return logt[flat * self.n_outcomes + yi]

    def sample_outcomes(self, q, xs, beta, rng):
        k = np.shape(xs)[-1]
        table = self.channel(q, k, beta)
        idx = self.input_index(q, xs)
        probs = table[tuple(idx[..., j] for j in range(k))]
        u = rng.random(probs.shape[:-1])[..., None]
        return (u >= np.cumsum(probs, axis=-1)).sum(axis=-1).clip(max=self.n_outcomes - 1)


def _check_table_cap(a: int, k: int, ny: int):
    if a**k * ny > TABLE_CAP:
        raise EnumerationCapExceeded(f"table of size {a}^{k} x {ny} exceeds {TABLE_CAP}")


class GroupTestingNoiseless(DiscreteModel):
    """Boolean OR of the salient variables; no latent coefficients."""

    name = "group-testing"
    has_beta = False
    n_outcomes = 2

    def check_q(self, q):
        if not getattr(q, "is_discrete", False) or not set(q.values) <= {0.0, 1.0}:
            raise ConfigError("group testing needs binary {0, 1} variables")

    def channel(self, q, k, beta=None):
        self.check_q(q)
        _check_table_cap(q.size, k, 2)
        vals = np.asarray(q.values)
        grids = np.meshgrid(*([vals] * k), indexing="ij")
        y1 = np.zeros(grids[0].shape, dtype=bool) if k else np.zeros((), bool)
        for g in grids:
            y1 |= g > 0
        return np.stack([~y1, y1], axis=-1).astype(float)

    def sample_outcomes(self, q, xs, beta, rng):
        return (np.asarray(xs) > 0).any(axis=-1).astype(np.int64)

    def to_dict(self):
        return {"kind": self.name}

    def __eq__(self, other):
        return type(other) is type(self)

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return "GroupTestingNoiseless()"


class TabularDiscrete(DiscreteModel):
    """Explicit conditional table over finite alphabets.

    ``table`` has shape ``(|X|,)*K + (|B|,)*K + (|Y|,)`` when ``beta_values``
    is given and ``(|X|,)*K + (|Y|,)`` otherwise. Axis entries are alphabet
    positions of the variable distribution.
    """

    name = "tabular"

    def __init__(self, table, beta_values: Sequence[float] | None = None, check_symmetry: bool = True):
        t = np.array(table, dtype=float)
        t.setflags(write=False)
        self.table = t
        self.beta_values = None if beta_values is None else tuple(float(b) for b in beta_values)
        self.has_beta = self.beta_values is not None
        if self.has_beta:
            if (t.ndim - 1) % 2:
                raise ConfigError("table with beta axes needs 2K + 1 dimensions")
            self.k = (t.ndim - 1) // 2
            if any(s != len(self.beta_values) for s in t.shape[self.k : 2 * self.k]):
                raise ConfigError("beta axes must match beta_values")
        else:
            self.k = t.ndim - 1
        self.n_inputs = t.shape[0]
        if any(s != self.n_inputs for s in t.shape[: self.k]):
            raise ConfigError("all x axes must have the same alphabet size")
        self.n_outcomes = t.shape[-1]
        if (t < 0).any() or np.abs(t.sum(axis=-1) - 1.0).max() > 1e-12:
            raise ConfigError("every conditional distribution must be non-negative and sum to 1")
        if check_symmetry and not self.is_symmetric():
            raise ConfigError("table is not invariant under joint permutation of (x, beta) coordinates")

    @classmethod
    def from_function(cls, k: int, n_inputs: int, n_outcomes: int, fn, beta_values=None, **kw) -> "TabularDiscrete":
        """Build a table from ``fn(x_positions, beta_values_tuple) -> pmf``."""
        if beta_values is None:
            shape = (n_inputs,) * k + (n_outcomes,)
            table = np.zeros(shape)
            for x in itertools.product(range(n_inputs), repeat=k):
                table[x] = fn(x, None)
        else:
            nb = len(beta_values)
            shape = (n_inputs,) * k + (nb,) * k + (n_outcomes,)
            table = np.zeros(shape)
            for x in itertools.product(range(n_inputs), repeat=k):
                for b in itertools.product(range(nb), repeat=k):
                    table[x + b] = fn(x, tuple(beta_values[j] for j in b))
        return cls(table, beta_values, **kw)

    def is_symmetric(self) -> bool:
        k = self.k
        for perm in itertools.permutations(range(k)):
            axes = list(perm)
            if self.has_beta:
                axes += [k + p for p in perm]
            axes.append(self.table.ndim - 1)
            if not np.array_equal(np.transpose(self.table, axes), self.table):
                return False
        return True

    def check_q(self, q):
        if not getattr(q, "is_discrete", False) or q.size != self.n_inputs:
            raise ConfigError(f"tabular model needs a discrete variable law with {self.n_inputs} symbols")

    def beta_index(self, beta) -> tuple[int, ...]:
        if not self.has_beta:
            return ()
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.k,):
            raise ConfigError(f"beta must have length K={self.k}")
        vals = np.asarray(self.beta_values)
        idx = []
        for b in beta:
            hit = np.flatnonzero(np.isclose(vals, b, rtol=0, atol=1e-12))
            if hit.size == 0:
                raise ConfigError(f"beta value {b} not in {self.beta_values}")
            idx.append(int(hit[0]))
        return tuple(idx)

    def channel(self, q, k, beta=None):
        self.check_q(q)
        if k != self.k:
            raise ConfigError(f"table is for K={self.k}, got K={k}")
        if self.has_beta and beta is None:
            raise ConfigError("this tabular model needs beta")
        t = self.table
        if self.has_beta:
            bidx = self.beta_index(beta)
            t = t[(slice(None),) * k + bidx]
        return np.asarray(t)

    def to_dict(self):
        return {
            "kind": self.name,
            "table": self.table.tolist(),
            "beta_values": None if self.beta_values is None else list(self.beta_values),
        }

    def __eq__(self, other):
        return (
            isinstance(other, TabularDiscrete)
            and self.beta_values == other.beta_values
            and np.array_equal(self.table, other.table)
        )

    def __hash__(self):
        return hash((self.table.tobytes(), self.beta_values))

    def __repr__(self):
        return f"TabularDiscrete(k={self.k}, |X|={self.n_inputs}, |Y|={self.n_outcomes}, beta={self.beta_values})"


@dataclass(frozen=True, eq=True)
class LinearGaussian(ObservationModel):
    """y = <x_S, beta> + w with w ~ N(0, 1/snr).

    The usual normalisation draws the variables from ``Gaussian(1/T)``; see
    :meth:`default_q`.
    """

    snr: float
    name = "linear"

    def __post_init__(self):
        if not self.snr > 0:
            raise ConfigError(f"SNR must be positive, got {self.snr}")

    @property
    def noise_var(self) -> float:
        return 1.0 / self.snr

    @staticmethod
    def default_q(dims: ProblemDims) -> Gaussian:
        return Gaussian(1.0 / dims.n_samples)

    def check_q(self, q):
        if getattr(q, "is_discrete", False):
            return
        if not isinstance(q, Gaussian):
            raise ConfigError("linear model needs Gaussian or discrete variables")

    def sample_outcomes(self, q, xs, beta, rng):
        mean = np.asarray(xs) @ np.asarray(beta, dtype=float)
        if math.isinf(self.snr):
            return mean
        return mean + rng.standard_normal(mean.shape) * math.sqrt(self.noise_var)

    def row_loglik(self, q, xs, beta, y):
        xs = np.asarray(xs, dtype=float)
        beta = np.asarray(beta, dtype=float)
        miss = np.isnan(xs)
        var = np.full(xs.shape[:-1], self.noise_var)
        if miss.any():
            if not isinstance(q, Gaussian):
                raise ConfigError("missing entries in the linear model need a Gaussian variable law")
            var = var + (miss * beta**2).sum(axis=-1) * q.variance
            xs = np.where(miss, 0.0, xs)
        mean = xs @ beta
        r = np.asarray(y, dtype=float) - mean
        return -0.5 * (np.log(2 * np.pi * var) + r * r / var)

    def to_dict(self):
        return {"kind": self.name, "snr": self.snr}


@dataclass(frozen=True, eq=True)
class Probit(ObservationModel):
    """y = 1{<x_S, beta> + w >= 0} with unit-variance Gaussian noise."""

    name = "probit"

    @staticmethod
    def default_q(dims: ProblemDims | None = None) -> Gaussian:
        return Gaussian(1.0)

    def check_q(self, q):
        if not isinstance(q, Gaussian):
            raise ConfigError("probit model needs Gaussian variables")

    def sample_outcomes(self, q, xs, beta, rng):
        s = np.asarray(xs) @ np.asarray(beta, dtype=float)
        return (s + rng.standard_normal(s.shape) >= 0).astype(np.int64)

    def row_loglik(self, q, xs, beta, y):
        xs = np.asarray(xs, dtype=float)
        beta = np.asarray(beta, dtype=float)
        miss = np.isnan(xs)
        scale = np.ones(xs.shape[:-1])
        if miss.any():
            scale = np.sqrt(1.0 + (miss * beta**2).sum(axis=-1) * q.variance)
            xs = np.where(miss, 0.0, xs)
        s = (xs @ beta) / scale
        y = np.asarray(y)
        if not np.isin(y, (0, 1)).all():
            raise ConfigError("probit outcomes must be 0 or 1")
        return log_ndtr(np.where(y == 1, s, -s))

    def to_dict(self):
        return {"kind": self.name}


class MissingWrap(ObservationModel):
    """Inner model observed through independent erasures of each variable.

    For discrete inner models the erasure symbol is appended to the input
    alphabet, giving an ordinary discrete channel from the erased variables
    to the outcome.
    """

    name = "missing"

    def __init__(self, inner: ObservationModel, miss_prob: float):
        if isinstance(inner, MissingWrap):
            raise ConfigError("nested MissingWrap is not supported")
        if not 0.0 <= miss_prob < 1.0:
            raise ConfigError(f"miss_prob must lie in [0, 1), got {miss_prob}")
        self.inner = inner
        self.miss_prob = float(miss_prob)
        self.is_discrete = inner.is_discrete
        self.has_beta = inner.has_beta
        self.n_outcomes = getattr(inner, "n_outcomes", None)

    def check_q(self, q):
        self.inner.check_q(q)

    def input_pmf(self, q):
        if self.miss_prob == 0:
            return q.pmf
        return np.append((1.0 - self.miss_prob) * q.pmf, self.miss_prob)

    def input_index(self, q, xs):
        idx = q.index_of(xs)
        if self.miss_prob == 0 and (idx == q.size).any():
            raise ConfigError("missing entries with miss_prob = 0")
        return idx

    def channel(self, q, k, beta=None):
        """Table over the augmented alphabet (erasure is the last symbol)."""
        base = self.inner.channel(q, k, beta)
        if self.miss_prob == 0:
            return base
        _check_table_cap(q.size + 1, k, base.shape[-1])
        t = base
        for ax in range(k):
            erased = np.tensordot(q.pmf, t, axes=([0], [ax]))
            t = np.concatenate([t, np.expand_dims(erased, ax)], axis=ax)
        return t

    def row_loglik(self, q, xs, beta, y):
        if self.is_discrete:
            return DiscreteModel.row_loglik(self, q, xs, beta, y)
        return self.inner.row_loglik(q, xs, beta, y)

    def sample_outcomes(self, q, xs, beta, rng):
        return self.inner.sample_outcomes(q, xs, beta, rng)

    def to_dict(self):
        return {"kind": self.name, "miss_prob": self.miss_prob, "inner": self.inner.to_dict()}

    def __eq__(self, other):
        return isinstance(other, MissingWrap) and other.inner == self.inner and other.miss_prob == self.miss_prob

    def __hash__(self):
        return hash((self.inner, self.miss_prob))

    def __repr__(self):
        return f"MissingWrap({self.inner!r}, miss_prob={self.miss_prob})"


def model_from_dict(d: dict) -> ObservationModel:
    kind = d["kind"]
    if kind == "group-testing":
        return GroupTestingNoiseless()
    if kind == "linear":
        return LinearGaussian(float(d["snr"]))
    if kind == "probit":
        return Probit()
    if kind == "tabular":
        return TabularDiscrete(d["table"], d.get("beta_values"))
    if kind == "missing":
        return MissingWrap(model_from_dict(d["inner"]), float(d["miss_prob"]))
    raise ConfigError(f"unknown model kind {kind!r}")


def distribution_from_dict(d: dict):
    kind = d["kind"]
    if kind == "bernoulli":
        return Bernoulli(p=float(d["p"]))
    if kind == "gaussian":
        return Gaussian(float(d["variance"]))
    if kind == "discrete":
        return DiscreteDistribution(tuple(d["values"]), tuple(d["probs"]))
    raise ConfigError(f"unknown distribution kind {kind!r}")


def prior_from_dict(d: dict | None):
    if d is None:
        return None
    kind = d["kind"]
    if kind == "fixed":
        return Fixed(tuple(d["values"]))
    if kind == "discrete_iid":
        return DiscreteIID(tuple(d["points"]), tuple(d["probs"]))
    if kind == "gaussian_floor":
        return GaussianFloor(float(d["variance"]), float(d["b_min"]))
    raise ConfigError(f"unknown prior kind {kind!r}")


def check_compatible(model: ObservationModel, q, prior, k: int) -> None:
    model.check_q(q)
    if model.has_beta and prior is None:
        raise ConfigError(f"{model.name} model needs a coefficient prior")
    if isinstance(prior, Fixed):
        prior.sample(k)
    if isinstance(model, TabularDiscrete) or isinstance(getattr(model, "inner", None), TabularDiscrete):
        tab = model if isinstance(model, TabularDiscrete) else model.inner
        if tab.k != k:
            raise ConfigError(f"table is for K={tab.k}, got K={k}")
        if tab.has_beta and isinstance(prior, GaussianFloor):
            raise ConfigError("tabular model needs a finite coefficient prior")


# ---------------------------------------------------------------------------
# datasets


class Dataset:
    """Variables, missing mask, coefficients and outcomes of one experiment.

    ``x`` returns the observed matrix with missing entries as NaN; the
    complete matrix is kept privately for oracle tests.
    """

    def __init__(self, x, y, true_support: SupportSet, beta, seed: int | None, mask=None):
        x = np.array(x, dtype=float)
        self._x = x
        self._x.setflags(write=False)
        m = np.zeros(x.shape, dtype=bool) if mask is None else np.array(mask, dtype=bool)
        if m.shape != x.shape:
            raise ConfigError("mask must match x")
        m.setflags(write=False)
        self.mask = m
        y = np.array(y)
        y.setflags(write=False)
        self.y = y
        b = np.array([] if beta is None else beta, dtype=float)
        b.setflags(write=False)
        self.beta = b
        self.true_support = true_support
        self.seed = seed

    @property
    def x(self) -> np.ndarray:
        out = self._x.copy()
        out[self.mask] = np.nan
        out.setflags(write=False)
        return out

    @property
    def dims(self) -> ProblemDims:
        t, n = self._x.shape
        return ProblemDims(n, len(self.true_support), t)

    def columns(self, support: SupportSet) -> np.ndarray:
        return self.x[:, list(support.indices)]

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.x, other.x, equal_nan=True)
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.beta, other.beta)
            and self.true_support == other.true_support
            and self.seed == other.seed
        )

    def __repr__(self):
        t, n = self._x.shape
        return f"Dataset(T={t}, N={n}, support={self.true_support.indices}, seed={self.seed})"


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _draw_x(q, shape, seed: int, stream: int) -> np.ndarray:
    """Rows in independent blocks of ROW_BLOCK, each with its own stream."""
    t, n = shape
    out = np.empty(shape)
    for b, start in enumerate(range(0, t, ROW_BLOCK)):
        stop = min(start + ROW_BLOCK, t)
        out[start:stop] = q.sample((stop - start, n), _stream(seed, stream, b))
    return out


def sample_dataset(model: ObservationModel, q, prior, dims: ProblemDims, support: SupportSet, seed: int) -> Dataset:
    """Draw T rows of IID variables, one coefficient vector, and outcomes.

    Rows are generated in fixed-size blocks with per-block random streams
    derived from ``seed``, so the result does not depend on evaluation order.
    """
    support = support if isinstance(support, SupportSet) else SupportSet(tuple(support))
    support.validate(dims)
    if dims.n_samples < 1:
        raise ConfigError("sample_dataset needs T >= 1")
    k = dims.k_sparse
    check_compatible(model, q, prior, k)
    beta = prior.sample(k, _stream(seed, _STREAM_BETA)) if model.has_beta else np.zeros(0)
    x = _draw_x(q, (dims.n_samples, dims.n_vars), seed, _STREAM_X)
    xs = x[:, list(support.indices)]
    y = _sample_rows(model, q, xs, beta, seed)
    ds = Dataset(x, y, support, beta if model.has_beta else None, seed)
    if isinstance(model, MissingWrap) and model.miss_prob > 0:
        ds = _mask_dataset(ds, model.miss_prob, seed)
    return ds


def _sample_rows(model, q, xs, beta, seed):
    inner = model.inner if isinstance(model, MissingWrap) else model
    t = xs.shape[0]
    parts = []
    for b, start in enumerate(range(0, t, ROW_BLOCK)):
        rows = xs[start : start + ROW_BLOCK]
        rng = _stream(seed, _STREAM_Y, b)
        parts.append(inner.sample_outcomes(q, rows, beta if inner.has_beta else None, rng))
    return np.concatenate(parts) if parts else np.zeros(0)


def _mask_dataset(ds: Dataset, miss_prob: float, seed: int) -> Dataset:
    t, n = ds._x.shape
    mask = np.empty((t, n), dtype=bool)
    for b, start in enumerate(range(0, t, ROW_BLOCK)):
        stop = min(start + ROW_BLOCK, t)
        mask[start:stop] = _stream(seed, _STREAM_MASK, b).random((stop - start, n)) < miss_prob
    return Dataset(ds._x, ds.y, ds.true_support, ds.beta if ds.beta.size else None, ds.seed, mask | ds.mask)


def apply_missing(dataset: Dataset, miss_prob: float, seed: int) -> Dataset:
    """Mask each entry independently with probability ``miss_prob``.

    Existing masks are kept (masked entries stay masked).
    """
    if not 0.0 <= miss_prob < 1.0:
        raise ConfigError(f"miss_prob must lie in [0, 1), got {miss_prob}")
    if miss_prob == 0:
        return dataset
    return _mask_dataset(dataset, miss_prob, seed)


# ---------------------------------------------------------------------------
# likelihoods


def log_likelihood(model: ObservationModel, x_row, beta, y, q=None) -> float:
    """log p(y | x_S, beta) for a single row.

    For tabular models without ``q`` the entries of ``x_row`` are taken to be
    alphabet positions.
    """
    x_row = np.asarray(x_row, dtype=float)
    if q is None:
        q = _default_q(model, x_row.size)
    if model.has_beta:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != x_row.shape:
            raise ConfigError(f"beta has shape {beta.shape}, x_S has {x_row.shape}")
    return float(model.row_loglik(q, x_row[None, :], beta, np.asarray([y]))[0])


def _default_q(model, k):
    inner = model.inner if isinstance(model, MissingWrap) else model
    if isinstance(inner, GroupTestingNoiseless):
        return Bernoulli(0.5)
    if isinstance(inner, TabularDiscrete):
        n = inner.n_inputs
        return DiscreteDistribution(tuple(range(n)), (1.0 / n,) * n)
    if isinstance(inner, Probit):
        return Gaussian(1.0)
    if isinstance(model, MissingWrap):
        raise ConfigError("missing-data likelihoods need the variable law q")
    return None


def _prior_terms(prior, k):
    """(list of beta vectors, log weights) for finite priors."""
    if prior is None:
        return [np.zeros(0)], np.zeros(1)
    vecs, logw = prior.support(k)
    return [np.asarray(v) for v in vecs], logw


def marginal_log_likelihood(model: ObservationModel, x_cols, y, prior, q=None, *, n_draws: int = 20000, seed: int = 0) -> float:
    """log p(Y^T | X_S^T) with the coefficients integrated out under ``prior``.

    Exact for Fixed and DiscreteIID priors (log-sum over B^K); closed form for
    the linear model with a plain Gaussian prior; otherwise a seeded Monte
    Carlo average over prior draws (see :func:`marginal_log_likelihood_mc`).
    """
    x_cols = np.asarray(x_cols, dtype=float)
    y = np.asarray(y)
    k = x_cols.shape[1]
    if q is None:
        q = _default_q(model, k)
    if not model.has_beta or prior is None:
        return float(model.row_loglik(q, x_cols, np.zeros(k), y).sum())
    if isinstance(prior, (Fixed, DiscreteIID)):
        vecs, logw = _prior_terms(prior, k)
        ll = np.array([model.row_loglik(q, x_cols, b, y).sum() for b in vecs])
        return float(logsumexp(ll + logw))
    if isinstance(prior, GaussianFloor) and prior.b_min == 0 and isinstance(model, LinearGaussian) and not np.isnan(x_cols).any():
        cov = prior.variance * x_cols @ x_cols.T + model.noise_var * np.eye(len(y))
        return float(stats.multivariate_normal(mean=np.zeros(len(y)), cov=cov).logpdf(y.astype(float)))
    return marginal_log_likelihood_mc(model, x_cols, y, prior, q, n_draws=n_draws, seed=seed)[0]


def marginal_log_likelihood_mc(model, x_cols, y, prior, q=None, *, n_draws: int = 20000, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo log marginal likelihood and its delta-method standard error."""
    x_cols = np.asarray(x_cols, dtype=float)
    k = x_cols.shape[1]
    if q is None:
        q = _default_q(model, k)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(97,)))
    ll = np.empty(n_draws)
    for j in range(n_draws):
        ll[j] = model.row_loglik(q, x_cols, prior.sample(k, rng), y).sum()
    m = ll.max()
    w = np.exp(ll - m)
    val = m + math.log(w.mean())
    se = w.std(ddof=1) / (math.sqrt(n_draws) * w.mean())
    return float(val), float(se)
