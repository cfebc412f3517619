"""Readers and writers for the on-disk formats.

dataset   CSV with header ``x,y``
support   one key per line, file order = position order
mean      CSV with header ``x,mu``; an optional ``__default__,value`` row
spec      JSON ``{"points": [{"x": ..., "p": ..., "law": {...}}, ...]}``
"""

from __future__ import annotations

import csv
import json
import math

from .core import DataError, Dataset, MeanHypothesis, OrderedSupport, ParameterError
from .distributions import DiscreteDistributionSpec

DEFAULT_KEY = "__default__"
DEFAULT_MEAN = 0.5


class InputError(DataError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


def _rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != list(header):
            raise InputError(path, 1, f"expected header {','.join(header)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            yield reader.line_num, row


def _unit_float(path, line, text, what):
    try:
        v = float(text)
    except ValueError:
        raise InputError(path, line, f"{what} {text!r} is not a number") from None
    if math.isnan(v) or v < 0.0 or v > 1.0:
        raise InputError(path, line, f"{what} {v} outside [0, 1]")
    return v


def read_dataset(path) -> Dataset:
    keys, ys = [], []
    for line, row in _rows(path, ("x", "y")):
        if len(row) != 2:
            raise InputError(path, line, f"expected 2 fields, got {len(row)}")
        keys.append(row[0])
        ys.append(_unit_float(path, line, row[1], "y"))
    return Dataset(tuple(keys), ys)


def write_dataset(path, dataset: Dataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for k, y in zip(dataset.keys, dataset.y):
            w.writerow([k, repr(float(y))])


def read_support(path) -> OrderedSupport:
    keys, seen = [], {}
    with open(path, encoding="utf-8") as fh:
        for line, text in enumerate(fh, start=1):
            key = text.rstrip("\r\n")
            if not key.strip():
                continue
            if key in seen:
                raise InputError(path, line, f"duplicate key {key!r} (first on line {seen[key]})")
            seen[key] = line
            keys.append(key)
    return OrderedSupport(tuple(keys))


def write_support(path, support: OrderedSupport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k in support.keys:
            fh.write(f"{k}\n")


def read_mean(path) -> MeanHypothesis:
    values, default = {}, DEFAULT_MEAN
    for line, row in _rows(path, ("x", "mu")):
        if len(row) != 2:
            raise InputError(path, line, f"expected 2 fields, got {len(row)}")
        v = _unit_float(path, line, row[1], "mu")
        if row[0] == DEFAULT_KEY:
            default = v
        elif row[0] in values:
            raise InputError(path, line, f"duplicate key {row[0]!r}")
        else:
            values[row[0]] = v
    return MeanHypothesis(values, default)


def write_mean(path, mean: MeanHypothesis) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "mu"])
        for k, v in mean.values.items():
            w.writerow([k, repr(float(v))])
        w.writerow([DEFAULT_KEY, repr(float(mean.default))])


def read_spec(path) -> DiscreteDistributionSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON ({exc})") from None
    return DiscreteDistributionSpec.from_json(doc)


def write_spec(path, spec: DiscreteDistributionSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_json(), fh, indent=1)
        fh.write("\n")
