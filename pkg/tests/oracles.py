"""Independent brute-force oracles used by the tests. Plain Python loops over
the joint distribution, no shared code with the package internals."""
import itertools
import math

import numpy as np


def brute_mi(channel, pmf, k, i):
    """I(X_1..X_i; Y | X_{i+1}..X_K) for IID inputs with law ``pmf`` and
    ``channel(x_tuple) -> sequence of outcome probabilities``."""
    a = len(pmf)
    joint = {}
    for x in itertools.product(range(a), repeat=k):
        px = math.prod(pmf[v] for v in x)
        for y, w in enumerate(channel(x)):
            if px * w > 0:
                joint[(x[:i], x[i:], y)] = joint.get((x[:i], x[i:], y), 0.0) + px * w

    def marg(keyf):
        out = {}
        for key, p in joint.items():
            kk = keyf(key)
            out[kk] = out.get(kk, 0.0) + p
        return out

    p12 = marg(lambda t: (t[0], t[1]))
    p2y = marg(lambda t: (t[1], t[2]))
    p2 = marg(lambda t: t[1])
    return sum(p * math.log(p * p2[s2] / (p12[(s1, s2)] * p2y[(s2, y)])) for (s1, s2, y), p in joint.items())


def gt_channel(x):
    return (0.0, 1.0) if any(x) else (1.0, 0.0)


def table_channel(table):
    t = np.asarray(table)
    return lambda x: t[tuple(x)]


def bayes_and_ml_error(model, q, k, n, t, beta, prior, decode):
    """Exact (ML error, Bayes error) by enumerating every input matrix and
    outcome vector; ``decode(x_values, y) -> (B, K) supports``."""
    a = q.size
    pmf = np.asarray(q.pmf)
    vals = np.asarray(q.values, dtype=float)
    if prior is None:
        tables = [(1.0, model.channel(q, k, beta))]
    else:
        vecs, logw = prior.support(k)
        tables = [(math.exp(lw), model.channel(q, k, v)) for v, lw in zip(vecs, logw)]
    ny = tables[0][1].shape[-1]
    xi = np.array(list(itertools.product(range(a), repeat=n * t))).reshape(-1, t, n)
    px = pmf[xi].prod(axis=(1, 2))
    ys = np.array(list(itertools.product(range(ny), repeat=t)))
    sups = list(itertools.combinations(range(n), k))
    lik = np.zeros((len(xi), len(sups), len(ys)))
    rows = np.arange(t)[:, None]
    for c, s in enumerate(sups):
        for w, tab in tables:
            cell = tab[tuple(xi[:, :, j] for j in s)]  # (M, T, |Y|)
            lik[:, c, :] += w * np.prod(cell[:, rows, ys.T], axis=1)
    bayes = 1.0 - float(np.sum(px[:, None] * lik.max(axis=1))) / len(sups)
    x_all = np.repeat(vals[xi], len(ys), axis=0)
    y_all = np.tile(ys, (len(xi), 1))
    dec = decode(x_all, y_all)
    col = {s: c for c, s in enumerate(sups)}
    ci = np.array([col[tuple(int(v) for v in r)] for r in dec]).reshape(len(xi), len(ys))
    chosen = np.take_along_axis(lik, ci[:, None, :], axis=1)[:, 0, :]
    ml = 1.0 - float(np.sum(px[:, None] * chosen)) / len(sups)
    return ml, bayes
