"""Dataset CSV and parameter JSON round-trips."""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .model import Dataset, SgameParams

_COL = re.compile(r"^([xy])(\d+)$")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_dataset_csv(data: Dataset, path) -> None:
    header = [f"x{j + 1}" for j in range(data.p)] + [f"y{z + 1}" for z in range(data.q)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for xi, yi in zip(data.design, data.responses):
            w.writerow([_fmt(v) for v in xi] + [_fmt(v) for v in yi])


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    kinds = []
    for h in header:
        m = _COL.match(h)
        if m is None:
            raise ValueError(f"{path}: unexpected column name {h!r}; expected x1..xp,y1..yq")
        kinds.append((m.group(1), int(m.group(2))))
    p = sum(1 for c, _ in kinds if c == "x")
    q = len(kinds) - p
    expected = [("x", j + 1) for j in range(p)] + [("y", z + 1) for z in range(q)]
    if kinds != expected or q == 0:
        raise ValueError(f"{path}: header must read x1,...,xp,y1,...,yq")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: no observations")
    try:
        values = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    if values.shape[1] != p + q:
        raise ValueError(f"{path}: ragged rows")
    return Dataset(values[:, :p], values[:, p:])


def params_to_json(psi: SgameParams, **extra) -> str:
    d = psi.to_dict()
    d.update(extra)
    return json.dumps(d, indent=2)


def params_from_json(text: str) -> SgameParams:
    return SgameParams.from_dict(json.loads(text))


def save_params(psi: SgameParams, path, **extra) -> None:
    Path(path).write_text(params_to_json(psi, **extra) + "\n")


def load_params(path) -> SgameParams:
    return params_from_json(Path(path).read_text())


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")
