"""Synthetic discrete joint laws with exact ground truth.

A :class:`DiscreteDistributionSpec` puts probability ``p_m`` on key ``x_m``
and draws ``Y | X = x_m`` from a bounded response law. Conditional means,
effective support sizes and variance quantiles are all available in closed
form, which is what the simulation harness scores against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import rng
from .core import INF, Dataset, OrderedSupport, ParameterError

PROB_TOL = 1e-12


@dataclass(frozen=True)
class Bernoulli:
    q: float

    def __post_init__(self):
        if not (0.0 <= self.q <= 1.0):
            raise ParameterError(f"Bernoulli mean {self.q} outside [0, 1]")

    def mean(self) -> float:
        return float(self.q)

    def variance(self) -> float:
        return float(self.q * (1.0 - self.q))

    def atoms(self):
        """Sorted (values, weights) with zero-weight atoms dropped."""
        vals, wts = [0.0, 1.0], [1.0 - self.q, self.q]
        keep = [i for i in range(2) if wts[i] > 0]
        return tuple(vals[i] for i in keep), tuple(wts[i] for i in keep)

    def to_json(self) -> dict:
        return {"type": "bernoulli", "mean": self.q}


@dataclass(frozen=True)
class FiniteSupport:
    values: tuple
    weights: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        wts = tuple(float(w) for w in self.weights)
        if len(vals) != len(wts) or not vals:
            raise ParameterError("finite-support law needs matching nonempty values/weights")
        if any(v < 0.0 or v > 1.0 for v in vals):
            raise ParameterError("response values must lie in [0, 1]")
        if any(w < 0.0 for w in wts) or abs(math.fsum(wts) - 1.0) > PROB_TOL:
            raise ParameterError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "weights", wts)

    def atoms(self):
        merged: dict[float, list] = {}
        for v, w in zip(self.values, self.weights):
            if w > 0:
                merged.setdefault(v, []).append(w)
        vals = sorted(merged)
        return tuple(vals), tuple(math.fsum(merged[v]) for v in vals)

    def mean(self) -> float:
        return math.fsum(v * w for v, w in zip(self.values, self.weights))

    def variance(self) -> float:
        mu = self.mean()
        return math.fsum(w * (v - mu) ** 2 for v, w in zip(self.values, self.weights))

    def to_json(self) -> dict:
        return {"type": "finite", "values": list(self.values), "weights": list(self.weights)}


def law_from_json(obj: dict):
    kind = obj.get("type")
    if kind == "bernoulli":
        return Bernoulli(float(obj["mean"]))
    if kind == "finite":
        return FiniteSupport(tuple(obj["values"]), tuple(obj["weights"]))
    raise ParameterError(f"unknown response law type {kind!r}")


def as_finite(law) -> FiniteSupport:
    vals, wts = law.atoms()
    return FiniteSupport(vals, wts)


@dataclass(frozen=True, eq=False)
class DiscreteDistributionSpec:
    keys: tuple
    probs: np.ndarray
    laws: tuple

    def __post_init__(self):
        keys = tuple(self.keys)
        probs = np.asarray(self.probs, dtype=np.float64)
        laws = tuple(self.laws)
        if not (len(keys) == probs.shape[0] == len(laws)) or not keys:
            raise ParameterError("keys, probs and laws must be nonempty and aligned")
        if len(set(keys)) != len(keys):
            raise ParameterError("spec keys must be distinct")
        if (probs <= 0).any():
            raise ParameterError("point probabilities must be positive")
        if abs(math.fsum(probs.tolist()) - 1.0) > PROB_TOL * max(1.0, len(keys) / 1e4):
            raise ParameterError("point probabilities must sum to 1")
        probs.setflags(write=False)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "laws", laws)

    def __len__(self) -> int:
        return len(self.keys)

    @cached_property
    def index(self) -> dict:
        return {k: i for i, k in enumerate(self.keys)}

    @cached_property
    def means(self) -> np.ndarray:
        cache: dict = {}
        return np.array([cache.setdefault(id(l), l.mean()) for l in self.laws])

    @cached_property
    def variances(self) -> np.ndarray:
        cache: dict = {}
        return np.array([cache.setdefault(id(l), l.variance()) for l in self.laws])

    def mu(self, key) -> float:
        """True conditional mean at ``key`` (0.0 off the support; never queried in practice)."""
        i = self.index.get(key)
        return 0.0 if i is None else float(self.means[i])

    @cached_property
    def _cum_probs(self) -> np.ndarray:
        return np.cumsum(self.probs)

    @cached_property
    def _response_tables(self):
        cache: dict = {}
        rows = []
        for law in self.laws:
            row = cache.get(id(law))
            if row is None:
                if isinstance(law, Bernoulli):
                    # y = 1 iff u < q
                    row = ((1.0, 0.0), (law.q, INF))
                else:
                    cum = np.cumsum(law.weights)
                    cum[-1] = INF
                    row = (law.values, tuple(cum))
                cache[id(law)] = row
            rows.append(row)
        width = max(len(r[0]) for r in rows)
        vals = np.empty((len(rows), width))
        cums = np.full((len(rows), width), INF)
        for i, (v, c) in enumerate(rows):
            vals[i, : len(v)] = v
            vals[i, len(v):] = v[-1]
            cums[i, : len(c)] = c
        return vals, cums

    def draw(self, u_x: np.ndarray, u_y: np.ndarray):
        """Map uniforms to (point index, response) by inverse CDFs."""
        idx = np.searchsorted(self._cum_probs, u_x, side="right")
        np.minimum(idx, len(self.keys) - 1, out=idx)
        vals, cums = self._response_tables
        k = (cums[idx] <= u_y[..., None]).sum(axis=-1)
        return idx, vals[idx, k]

    def sample_indices(self, n: int, seed: int):
        if n < 0:
            raise ParameterError("n must be nonnegative")
        u_x, u_y = rng.uniform_pairs(seed, np.arange(n, dtype=np.uint64))
        return self.draw(u_x, u_y)

    def sample_batch(self, n: int, seeds) -> tuple[np.ndarray, np.ndarray]:
        """Rows equal ``sample_indices(n, seed)`` for each seed."""
        seeds = np.asarray(seeds, dtype=np.uint64)[:, None]
        u_x, u_y = rng.uniform_pairs(seeds, np.arange(n, dtype=np.uint64)[None, :])
        return self.draw(u_x, u_y)

    def to_json(self) -> dict:
        return {
            "points": [
                {"x": k, "p": float(p), "law": law.to_json()}
                for k, p, law in zip(self.keys, self.probs, self.laws)
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DiscreteDistributionSpec":
        try:
            pts = obj["points"]
            return cls(
                tuple(str(p["x"]) for p in pts),
                np.array([float(p["p"]) for p in pts]),
                tuple(law_from_json(p["law"]) for p in pts),
            )
        except (KeyError, TypeError) as exc:
            raise ParameterError(f"malformed spec document: {exc}") from exc


def sample_dataset(spec: DiscreteDistributionSpec, n: int, seed: int) -> Dataset:
    idx, y = spec.sample_indices(n, seed)
    return Dataset(tuple(spec.keys[i] for i in idx), y)


def key_names(M: int) -> tuple:
    width = len(str(M - 1))
    return tuple(f"x{m:0{width}d}" for m in range(M))


def uniform(M: int, law=None, laws: Sequence | None = None) -> DiscreteDistributionSpec:
    if laws is None:
        laws = (law if law is not None else Bernoulli(0.5),) * M
    return DiscreteDistributionSpec(key_names(M), np.full(M, 1.0 / M), tuple(laws))


def near_uniform(M: int, eta: float, seed: int, law=None, laws: Sequence | None = None):
    """Random weights in [1, eta], normalised; every p_m is at most eta / M."""
    if eta < 1:
        raise ParameterError("eta must be at least 1")
    w = 1.0 + (eta - 1.0) * rng.uniforms(seed, M, rng.STREAM_SPEC)
    probs = w / w.sum()
    if laws is None:
        laws = (law if law is not None else Bernoulli(0.5),) * M
    return DiscreteDistributionSpec(key_names(M), probs, tuple(laws))


def random_bernoulli_laws(M: int, seed: int) -> tuple:
    q = rng.uniform_pairs(seed, np.arange(M, dtype=np.uint64), rng.STREAM_SPEC)[1]
    return tuple(Bernoulli(float(v)) for v in q)


def descending_support(spec: DiscreteDistributionSpec) -> OrderedSupport:
    order = np.argsort(-spec.probs, kind="stable")
    return OrderedSupport(tuple(spec.keys[i] for i in order))


def _prefix_length(probs_in_order: np.ndarray, gamma: float):
    need = 1.0 - gamma - PROB_TOL
    cum = np.cumsum(probs_in_order)
    hit = np.nonzero(cum >= need)[0]
    return int(hit[0]) + 1 if hit.size else INF


def true_effective_support(spec: DiscreteDistributionSpec, gamma: float,
                           ordering: OrderedSupport | None = None):
    """(fewest points holding 1 - gamma mass, prefix length of ``ordering`` doing so)."""
    if not (0.0 <= gamma < 1.0):
        raise ParameterError("gamma must lie in [0, 1)")
    m_gamma = _prefix_length(np.sort(spec.probs)[::-1], gamma)
    if ordering is None:
        return m_gamma, m_gamma
    p = np.array([spec.probs[spec.index[k]] if k in spec.index else 0.0 for k in ordering.keys])
    return m_gamma, _prefix_length(p, gamma)


def variance_quantile(spec: DiscreteDistributionSpec, beta: float) -> float:
    """Smallest v with P{Var(Y | X) <= v} >= beta."""
    if not (0.0 < beta <= 1.0):
        raise ParameterError("beta must lie in (0, 1]")
    order = np.argsort(spec.variances, kind="stable")
    cum = np.cumsum(spec.probs[order])
    i = int(np.searchsorted(cum, beta - PROB_TOL, side="left"))
    return float(spec.variances[order[min(i, len(order) - 1)]])


@dataclass(frozen=True)
class LowerBoundParams:
    alpha: float
    beta: float
    gamma: float
    sigma2_beta: float
    m_gamma: float
    n: int

    def __post_init__(self):
        if self.beta <= 0 or self.alpha <= 0:
            raise ParameterError("alpha and beta must be positive")
        if self.gamma <= self.alpha + self.beta:
            raise ParameterError("need gamma > alpha + beta")
        if self.sigma2_beta < 0 or self.n < 1:
            raise ParameterError("sigma2_beta must be >= 0 and n >= 1")


def theorem1_lower_bound(params: LowerBoundParams) -> float:
    """Length floor shared by every distribution-free interval at this P and n."""
    gap = params.gamma - params.alpha - params.beta
    rate = 1.0 if params.m_gamma == INF else min(params.m_gamma**0.25 / math.sqrt(params.n), 1.0)
    return params.sigma2_beta * gap**1.5 * rate / 3.0
