"""Dataset CSV/JSON round trip.

CSV rows hold ``y, x_0..x_{N-1}, m_0..m_{N-1}``; floats are written with 17
significant digits and masked entries are left empty. The JSON sidecar
carries dimensions, model, variable law, prior, seed, support and beta.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import Dataset, SupportSet, distribution_from_dict, model_from_dict, prior_from_dict


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dataset_to_csv(ds: Dataset) -> str:
    x, mask, y = ds.x, ds.mask, ds.y
    t, n = x.shape
    discrete_y = np.issubdtype(y.dtype, np.integer)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["y"] + [f"x_{j}" for j in range(n)] + [f"m_{j}" for j in range(n)])
    for r in range(t):
        yv = str(int(y[r])) if discrete_y else _fmt(y[r])
        xs = ["" if mask[r, j] else _fmt(x[r, j]) for j in range(n)]
        w.writerow([yv] + xs + [str(int(b)) for b in mask[r]])
    return buf.getvalue()


def dataset_header(ds: Dataset, model=None, q=None, prior=None) -> dict:
    return {
        "dims": ds.dims.to_dict(),
        "seed": ds.seed,
        "support": list(ds.true_support.indices),
        "beta": [_fmt(b) for b in ds.beta],
        "y_dtype": "int" if np.issubdtype(ds.y.dtype, np.integer) else "float",
        "model": None if model is None else model.to_dict(),
        "q": None if q is None else q.to_dict(),
        "prior": None if prior is None else prior.to_dict(),
    }


def dataset_from_csv(text: str, header: dict) -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ConfigError("empty dataset CSV")
    cols = rows[0]
    n = (len(cols) - 1) // 2
    if cols[0] != "y" or len(cols) != 2 * n + 1:
        raise ConfigError("unexpected dataset CSV columns")
    body = rows[1:]
    ydt = int if header.get("y_dtype") == "int" else float
    y = np.array([ydt(r[0]) for r in body], dtype=np.int64 if ydt is int else float)
    mask = np.array([[c == "1" for c in r[1 + n :]] for r in body], dtype=bool).reshape(len(body), n)
    x = np.array([[float(c) if c != "" else np.nan for c in r[1 : 1 + n]] for r in body]).reshape(len(body), n)
    beta = [float(b) for b in header.get("beta", [])]
    return Dataset(x, y, SupportSet(tuple(header["support"])), beta or None, header.get("seed"), mask)


def write_dataset(path, ds: Dataset, model=None, q=None, prior=None) -> tuple[Path, Path]:
    path = Path(path)
    path.write_text(dataset_to_csv(ds))
    side = path.with_suffix(".json")
    side.write_text(json.dumps(dataset_header(ds, model, q, prior), indent=2, sort_keys=True))
    return path, side


def read_dataset(path):
    """Return (dataset, model, q, prior) from a CSV file and its JSON sidecar."""
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    ds = dataset_from_csv(path.read_text(), header)
    model = None if header.get("model") is None else model_from_dict(header["model"])
    q = None if header.get("q") is None else distribution_from_dict(header["q"])
    return ds, model, q, prior_from_dict(header.get("prior"))
