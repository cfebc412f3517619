"""Interval construction for the conditional mean E[Y | X = x].

Inputs are a labelled dataset with responses in [0, 1], a hypothesized
ordered support and a hypothesized mean function. The output is a half-width
shared by every query point, from which ``interval_at(x)`` is read off.

Feature values are opaque hashable keys; only equality is ever used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

INF = math.inf


class ParameterError(ValueError):
    """Invalid parameters or usage (as opposed to bad data content)."""


class DataError(ValueError):
    """Input data violating a domain invariant (e.g. y outside [0, 1])."""


class Sample(NamedTuple):
    x: Hashable
    y: float


@dataclass(frozen=True)
class Dataset:
    keys: tuple
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 1 or y.shape[0] != len(self.keys):
            raise DataError("keys and y must have the same length")
        if y.size and (np.isnan(y).any() or y.min() < 0.0 or y.max() > 1.0):
            raise DataError("responses must lie in [0, 1]")
        y.setflags(write=False)
        object.__setattr__(self, "keys", tuple(self.keys))
        object.__setattr__(self, "y", y)

    @classmethod
    def from_pairs(cls, pairs: Iterable) -> "Dataset":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), np.array([p[1] for p in pairs], dtype=np.float64))

    def __len__(self) -> int:
        return len(self.keys)

    def __iter__(self):
        return (Sample(k, float(v)) for k, v in zip(self.keys, self.y))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(tuple(self.keys[i] for i in idx), self.y[idx])


@dataclass(frozen=True)
class OrderedSupport:
    """Hypothesized support; position ``m`` (1-based) is ``keys[m - 1]``."""

    keys: tuple

    def __post_init__(self):
        keys = tuple(self.keys)
        if len(set(keys)) != len(keys):
            raise ParameterError("support keys must be distinct")
        object.__setattr__(self, "keys", keys)

    def __len__(self) -> int:
        return len(self.keys)

    def positions(self) -> dict:
        return {k: m for m, k in enumerate(self.keys, start=1)}


@dataclass(frozen=True)
class MeanHypothesis:
    values: Mapping
    default: float = 0.5

    def __post_init__(self):
        vals = dict(self.values)
        for v in list(vals.values()) + [self.default]:
            if not (0.0 <= v <= 1.0):
                raise ParameterError(f"mean hypothesis value {v} outside [0, 1]")
        object.__setattr__(self, "values", vals)

    def __call__(self, x) -> float:
        return float(self.values.get(x, self.default))

    def knows(self, x) -> bool:
        return x in self.values


@dataclass(frozen=True)
class CIParams:
    alpha: float
    gamma: float
    delta: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError("alpha must lie in (0, 1)")
        if self.gamma <= 0 or self.delta <= 0:
            raise ParameterError("gamma and delta must be positive")
        if self.gamma + self.delta >= self.alpha:
            raise ParameterError(
                f"constraint gamma + delta < alpha violated "
                f"({self.gamma} + {self.delta} >= {self.alpha})"
            )

    @property
    def slack(self) -> float:
        return self.alpha - self.delta - self.gamma


@dataclass(frozen=True)
class GroupSummary:
    m: int
    n_m: int
    ybar_m: float
    s2_m: float | None  # None when n_m < 2


def group_summaries(dataset: Dataset, support: OrderedSupport):
    """Per-position count, mean and unbiased variance of the responses.

    Returns ``(groups, off_support)``: one summary per support position with
    at least one observation (in position order), and the number of samples
    whose key is not in the support.
    """
    if len(dataset) == 0:
        raise ParameterError("dataset must be nonempty")
    pos = support.positions()
    buckets: dict[int, list] = {}
    off = 0
    for k, y in zip(dataset.keys, dataset.y):
        m = pos.get(k)
        if m is None:
            off += 1
        else:
            buckets.setdefault(m, []).append(float(y))
    groups = []
    for m in sorted(buckets):
        ys = buckets[m]
        n_m = len(ys)
        ybar = math.fsum(ys) / n_m
        s2 = math.fsum((v - ybar) ** 2 for v in ys) / (n_m - 1) if n_m >= 2 else None
        groups.append(GroupSummary(m, n_m, ybar, s2))
    return groups, off


def support_threshold(n: int, params: CIParams) -> float:
    return (1.0 - params.gamma) * n + math.sqrt(n * math.log(2.0 / params.delta) / 2.0)


def mhat_from_counts(counts_by_position: Sequence[int], n: int, params: CIParams):
    """Smallest prefix length whose cumulative count reaches the threshold."""
    thr = support_threshold(n, params)
    if thr > n:
        return INF
    total = 0
    for m, c in enumerate(counts_by_position, start=1):
        total += c
        if total >= thr:
            return m
    return INF


def effective_support_estimate(dataset: Dataset, support: OrderedSupport, params: CIParams):
    n = len(dataset)
    if n < 1:
        raise ParameterError("dataset must be nonempty")
    pos = support.positions()
    counts = [0] * len(support)
    for k in dataset.keys:
        m = pos.get(k)
        if m is not None:
            counts[m - 1] += 1
    return mhat_from_counts(counts, n, params)


def z_statistic(groups: Sequence[GroupSummary], mean: MeanHypothesis, support: OrderedSupport):
    """Collision statistic and the number of positions observed at least twice."""
    terms = []
    for g in groups:
        if g.n_m < 2:
            continue
        mu = mean(support.keys[g.m - 1])
        terms.append((g.n_m - 1) * ((g.ybar_m - mu) ** 2 - g.s2_m / g.n_m))
    return math.fsum(terms), len(terms)


def delta_hat(m_hat, n: int, z: float, n_geq2: int, params: CIParams) -> float:
    if n < 2:
        raise ParameterError("need n >= 2 samples")
    if m_hat == INF:
        return INF
    z_plus = max(z, 0.0)
    scale = math.sqrt((2.0 * m_hat + n) / (n * (n - 1.0)))
    return scale * math.sqrt(4.0 * z_plus + 8.0 * math.sqrt(n_geq2 / params.delta) + 24.0 / params.delta)


def clip_interval(mu: float, halfwidth: float) -> tuple[float, float]:
    return max(0.0, mu - halfwidth), min(1.0, mu + halfwidth)


@dataclass(frozen=True)
class CIReport:
    n: int
    m_hat_gamma: float
    z: float
    z_plus: float
    n_geq2: int
    delta_hat: float
    halfwidth: float
    off_support: int
    mean: MeanHypothesis = field(repr=False)
    groups: tuple = field(default=(), repr=False)

    def interval_at(self, x) -> tuple[float, float]:
        return clip_interval(self.mean(x), self.halfwidth)

    def length_at(self, x) -> float:
        lo, hi = self.interval_at(x)
        return hi - lo

    @property
    def trivial(self) -> bool:
        return self.m_hat_gamma == INF


def construct_ci(dataset: Dataset, support: OrderedSupport, mean: MeanHypothesis,
                 params: CIParams) -> CIReport:
    n = len(dataset)
    if n < 2:
        raise ParameterError("need n >= 2 samples")
    groups, off = group_summaries(dataset, support)
    counts = [0] * len(support)
    for g in groups:
        counts[g.m - 1] = g.n_m
    m_hat = mhat_from_counts(counts, n, params)
    z, n2 = z_statistic(groups, mean, support)
    dh = delta_hat(m_hat, n, z, n2, params)
    return CIReport(
        n=n,
        m_hat_gamma=m_hat,
        z=z,
        z_plus=max(z, 0.0),
        n_geq2=n2,
        delta_hat=dh,
        halfwidth=dh / params.slack,
        off_support=off,
        mean=mean,
        groups=tuple(groups),
    )
