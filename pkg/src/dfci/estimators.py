"""First-stage guesses: an ordered support and a mean function.

Validity of the interval never depends on how good these are, only its
length does. The plug-in estimators here are deliberately simple.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import NamedTuple

import numpy as np

from . import rng
from .core import Dataset, MeanHypothesis, OrderedSupport, ParameterError
from .distributions import DiscreteDistributionSpec


class Split(NamedTuple):
    train: Dataset
    infer: Dataset
    empty_train: bool


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not (0.0 < fraction < 1.0):
        raise ParameterError("fraction must lie in (0, 1)")
    perm = np.argsort(rng.uniforms(seed, n, rng.STREAM_SPLIT), kind="stable")
    n_train = math.floor(fraction * n)
    return perm[:n_train], perm[n_train:]


def split_dataset(dataset: Dataset, fraction: float, seed: int) -> Split:
    if len(dataset) == 0:
        raise ParameterError("dataset must be nonempty")
    tr, inf = split_indices(len(dataset), fraction, seed)
    return Split(dataset.subset(tr), dataset.subset(inf), len(tr) == 0)


def order_support_by_frequency(train: Dataset) -> OrderedSupport:
    counts = Counter(train.keys)
    return OrderedSupport(tuple(sorted(counts, key=lambda k: (-counts[k], str(k)))))


def fit_plugin_mean(train: Dataset, default: float = 0.5) -> MeanHypothesis:
    if not (0.0 <= default <= 1.0):
        raise ParameterError("default must lie in [0, 1]")
    ys = defaultdict(list)
    for k, y in zip(train.keys, train.y):
        ys[k].append(float(y))
    return MeanHypothesis({k: min(1.0, max(0.0, math.fsum(v) / len(v))) for k, v in ys.items()}, default)


def oracle_mean(spec: DiscreteDistributionSpec, default: float = 0.5) -> MeanHypothesis:
    return MeanHypothesis(dict(zip(spec.keys, spec.means.tolist())), default)


def _noise_directions(M: int, seed: int) -> np.ndarray:
    u_sign, u_mag = rng.uniform_pairs(seed, np.arange(M, dtype=np.uint64), rng.STREAM_NOISE)
    return np.where(u_sign < 0.5, -1.0, 1.0) * (0.5 + u_mag)


def noisy_oracle_values(spec: DiscreteDistributionSpec, err: float, seed: int) -> np.ndarray:
    """Per-point hypothesis values whose p-weighted MSE against the truth is err**2."""
    if err < 0:
        raise ParameterError("err must be nonnegative")
    mu = spec.means
    if err == 0:
        return mu.copy()
    z = _noise_directions(len(spec), seed)
    p = spec.probs

    def mse(c):
        return float(np.dot(p, (np.clip(mu + c * z, 0.0, 1.0) - mu) ** 2))

    target = err * err
    ceiling = float(np.dot(p, np.where(z > 0, 1.0 - mu, mu) ** 2))
    if target > ceiling:
        raise ParameterError(
            f"err={err} infeasible: clipping caps the achievable RMS error at {math.sqrt(ceiling):.4g}"
        )
    lo, hi = 0.0, 1.0
    while mse(hi) < target:
        hi *= 2.0
        if hi > 1e6:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mse(mid) < target:
            lo = mid
        else:
            hi = mid
    return np.clip(mu + hi * z, 0.0, 1.0)


def noisy_oracle_mean(spec: DiscreteDistributionSpec, err: float, seed: int,
                      default: float = 0.5) -> MeanHypothesis:
    vals = noisy_oracle_values(spec, err, seed)
    return MeanHypothesis(dict(zip(spec.keys, vals.tolist())), default)


# integer-coded variants used by the simulation engine; point indices refer to spec order


def frequency_positions(train_idx: np.ndarray, lex_rank: np.ndarray) -> np.ndarray:
    """Support position (0-based, -1 if unseen) of every spec point.

    ``lex_rank[i]`` is the rank of key ``i`` in lexicographic order.
    """
    M = lex_rank.shape[0]
    pos = np.full(M, -1, dtype=np.int64)
    seen, counts = np.unique(train_idx, return_counts=True)
    if seen.size:
        order = np.lexsort((lex_rank[seen], -counts))
        pos[seen[order]] = np.arange(seen.size)
    return pos


def plugin_values(train_idx: np.ndarray, train_y: np.ndarray, M: int, default: float) -> np.ndarray:
    counts = np.bincount(train_idx, minlength=M)
    sums = np.bincount(train_idx, weights=train_y, minlength=M)
    out = np.full(M, float(default))
    seen = counts > 0
    out[seen] = np.clip(sums[seen] / counts[seen], 0.0, 1.0)
    return out
