"""JSON and CSV reading and writing."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .market import Kind, MarketInstance, make_instance

TRACE_HEADER = ("t", "F", "grad_norm")


def instance_to_dict(inst: MarketInstance, genspec: dict | None = None) -> dict:
    d = {
        "kind": inst.kind.value,
        "budgets": inst.budgets.tolist(),
        "valuations": inst.valuations.tolist(),
    }
    if genspec is not None:
        d["genspec"] = genspec
    return d


def instance_from_dict(d: dict) -> MarketInstance:
    try:
        return make_instance(d["kind"], d["valuations"], d["budgets"])
    except KeyError as exc:
        raise ValueError(f"instance JSON lacks field {exc}") from None


def write_json(path, payload: dict):
    text = json.dumps(payload, indent=1, allow_nan=False)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_instance(path, inst: MarketInstance, genspec: dict | None = None):
    write_json(path, instance_to_dict(inst, genspec))


def read_instance(path) -> MarketInstance:
    return instance_from_dict(read_json(path))


def read_prices(path) -> np.ndarray:
    """Prices from ``{"prices": [...]}``, ``{"mu": [...]}`` or a bare list."""
    d = read_json(path)
    if isinstance(d, list):
        return np.asarray(d, dtype=float)
    if "prices" in d:
        return np.asarray(d["prices"], dtype=float)
    if "mu" in d:
        return np.exp(np.asarray(d["mu"], dtype=float))
    raise ValueError("price file needs a 'prices' or 'mu' field")


def write_trace(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for t, f, g in np.asarray(trace).reshape(-1, 3):
            w.writerow((int(t), repr(float(f)), repr(float(g))))


def read_trace(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != TRACE_HEADER:
        raise ValueError("unexpected trace header")
    return np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, 3)


def load_ratings(path, kind="linear") -> tuple[MarketInstance, list, list]:
    """Dense market from ``buyer_id,item_id,rating`` rows.

    Unrated pairs get valuation 0.  Buyers and items left without any
    positive rating are dropped.  Budgets are 1.  Returns the instance and
    the kept buyer and item ids.
    """
    buyers: dict[str, int] = {}
    items: dict[str, int] = {}
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].strip().lower() in ("buyer_id", "user_id", "buyer"):
                continue
            b, it, r = row[0].strip(), row[1].strip(), float(row[2])
            entries.append((buyers.setdefault(b, len(buyers)), items.setdefault(it, len(items)), r))
    v = np.zeros((len(buyers), len(items)))
    for i, j, r in entries:
        v[i, j] = max(r, 0.0)
    keep_r = (v > 0).any(axis=1)
    v = v[keep_r]
    keep_c = (v > 0).any(axis=0)
    v = v[:, keep_c]
    bid = [k for k, i in sorted(buyers.items(), key=lambda x: x[1]) if keep_r[i]]
    iid = [k for k, j in sorted(items.items(), key=lambda x: x[1]) if keep_c[j]]
    return make_instance(Kind.parse(kind), v, np.ones(v.shape[0])), bid, iid
