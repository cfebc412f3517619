"""Hard-instance constructions behind the length lower bound.

``median_split`` writes a response law as an even mixture of a "low" and a
"high" half whose means differ by at least twice the variance.
``perturbed_spec`` tilts that mixture by ``+-eps`` on each cell of a
partition of the feature space, and the remaining functions evaluate, exactly
on small instances, how hard the tilted sign-mixture is to tell apart from the
original law.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import binom

from .core import ParameterError
from .distributions import DiscreteDistributionSpec, FiniteSupport, true_effective_support


class OutcomeSpaceTooLarge(ParameterError):
    pass


@dataclass(frozen=True)
class MedianSplit:
    q0: FiniteSupport
    q1: FiniteSupport
    mean_gap: float
    x_med: float


def median_split(q) -> MedianSplit:
    """Split at the smallest atom whose CDF reaches 1/2."""
    vals, wts = q.atoms()
    cum = 0.0
    med = len(vals) - 1
    for i, w in enumerate(wts):
        cum += w
        if cum >= 0.5:
            med = i
            break
    x_med = vals[med]
    q_lo = math.fsum(wts[:med])
    q_hi = math.fsum(wts[med + 1:])
    lo_vals = vals[: med + 1]
    lo_wts = [2.0 * w for w in wts[:med]] + [max(0.0, 1.0 - 2.0 * q_lo)]
    hi_vals = vals[med:]
    hi_wts = [max(0.0, 1.0 - 2.0 * q_hi)] + [2.0 * w for w in wts[med + 1:]]
    q0 = FiniteSupport(lo_vals, _renorm(lo_wts))
    q1 = FiniteSupport(hi_vals, _renorm(hi_wts))
    return MedianSplit(q0, q1, q1.mean() - q0.mean(), x_med)


def _renorm(wts):
    s = math.fsum(wts)
    return tuple(w / s for w in wts)


def mix_laws(w1: float, law1, law0) -> FiniteSupport:
    """``w1 * law1 + (1 - w1) * law0`` on the union of atoms."""
    acc: dict[float, list] = {}
    for law, w in ((law1, w1), (law0, 1.0 - w1)):
        for v, p in zip(*law.atoms()):
            acc.setdefault(v, []).append(w * p)
    vals = sorted(acc)
    return FiniteSupport(tuple(vals), _renorm([math.fsum(acc[v]) for v in vals]))


@dataclass(frozen=True)
class PerturbedFamily:
    """Tilted versions of ``base`` indexed by one sign per cell.

    ``cells`` lists the perturbed cells; keys not in any cell form the
    untouched heavy-atom set.
    """

    base: DiscreteDistributionSpec
    cells: tuple
    epsilons: tuple
    signs: tuple = None
    fixed: tuple = field(init=False)

    def __post_init__(self):
        cells = tuple(tuple(c) for c in self.cells)
        eps = tuple(float(e) for e in self.epsilons)
        signs = tuple(self.signs) if self.signs is not None else (1,) * len(cells)
        if not (len(cells) == len(eps) == len(signs)):
            raise ParameterError("cells, epsilons and signs must align")
        if any(e < 0.0 or e > 0.5 for e in eps):
            raise ParameterError("epsilons must lie in [0, 0.5]")
        if any(s not in (1, -1) for s in signs):
            raise ParameterError("signs must be +1 or -1")
        seen = [k for c in cells for k in c]
        if len(set(seen)) != len(seen) or any(k not in self.base.index for k in seen):
            raise ParameterError("cells must be disjoint subsets of the base keys")
        covered = set(seen)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "fixed", tuple(k for k in self.base.keys if k not in covered))

    @classmethod
    def standard(cls, base: DiscreteDistributionSpec, epsilon: float, gamma: float, signs=None):
        """Heavy atoms (p > 1/M_gamma) stay fixed; every other point is its own cell."""
        m_gamma, _ = true_effective_support(base, gamma)
        light = [k for k, p in zip(base.keys, base.probs) if p <= 1.0 / m_gamma]
        return cls(base, tuple((k,) for k in light), (epsilon,) * len(light), signs)

    def with_signs(self, signs) -> "PerturbedFamily":
        return PerturbedFamily(self.base, self.cells, self.epsilons, tuple(signs))

    def cell_probs(self) -> np.ndarray:
        return np.array([math.fsum(self.base.probs[self.base.index[k]] for k in c) for c in self.cells])

    def mean_gaps(self) -> dict:
        return {k: median_split(self.base.laws[self.base.index[k]]).mean_gap
                for c in self.cells for k in c}


def perturbed_spec(family: PerturbedFamily) -> DiscreteDistributionSpec:
    base = family.base
    laws = list(base.laws)
    for cell, eps, a in zip(family.cells, family.epsilons, family.signs):
        if eps == 0.0:
            continue
        for k in cell:
            i = base.index[k]
            split = median_split(base.laws[i])
            laws[i] = mix_laws(0.5 + a * eps, split.q1, split.q0)
    return DiscreteDistributionSpec(base.keys, base.probs, tuple(laws))


def tv_mixture_bound(epsilons: Sequence[float], cell_probs: Sequence[float], n: int) -> float:
    eps = np.asarray(epsilons, dtype=np.float64)
    p = np.asarray(cell_probs, dtype=np.float64)
    return 2.0 * n * math.sqrt(math.fsum((eps**4 * p**2).tolist()))


def binom_mixture_kl(n_trials: int, epsilon: float) -> tuple[float, float]:
    """KL(0.5 Bin(N, 1/2 + eps) + 0.5 Bin(N, 1/2 - eps) || Bin(N, 1/2)) and 8 N (N-1) eps^4."""
    if not (1 <= n_trials <= 64):
        raise ParameterError("n_trials must lie in [1, 64]")
    if not (0.0 <= epsilon <= 0.5):
        raise ParameterError("epsilon must lie in [0, 0.5]")
    bound = 8.0 * n_trials * (n_trials - 1) * epsilon**4
    if n_trials == 1 or epsilon == 0.0:
        # the symmetric mixture is exactly Bin(N, 1/2) here; skip the rounding noise
        return 0.0, bound
    k = np.arange(n_trials + 1)
    log_f0 = binom.logpmf(k, n_trials, 0.5)
    log_f1 = np.logaddexp(binom.logpmf(k, n_trials, 0.5 + epsilon),
                          binom.logpmf(k, n_trials, 0.5 - epsilon)) - math.log(2.0)
    f1 = np.exp(log_f1)
    live = f1 > 0
    terms = np.zeros_like(f1)
    terms[live] = f1[live] * (log_f1[live] - log_f0[live])
    kl = math.fsum(sorted(terms.tolist(), key=abs))
    return max(kl, 0.0), bound


def _draw_table(spec: DiscreteDistributionSpec, atoms: list) -> np.ndarray:
    """P{(X, Y) = atom} for every (point index, y value) atom."""
    out = np.zeros(len(atoms))
    finite = [dict(zip(*law.atoms())) for law in spec.laws]
    for j, (i, v) in enumerate(atoms):
        out[j] = spec.probs[i] * finite[i].get(v, 0.0)
    return out


def _power_outer(table: np.ndarray, n: int) -> np.ndarray:
    out = np.ones(1)
    for _ in range(n):
        out = np.multiply.outer(out, table).ravel()
    return out


def empirical_tv_tiny(base: DiscreteDistributionSpec, family: PerturbedFamily, n: int,
                      max_outcomes: int = 10**6) -> float:
    """Exact TV between n iid draws from ``base`` and the uniform sign-mixture of P_a^n."""
    if family.base is not base and family.base.keys != base.keys:
        raise ParameterError("family must be built on the given base spec")
    atom_set = set()
    sign_vectors = list(itertools.product((1, -1), repeat=len(family.cells)))
    specs = [perturbed_spec(family.with_signs(s)) for s in sign_vectors]
    for spec in [base] + specs:
        for i, law in enumerate(spec.laws):
            atom_set.update((i, v) for v in law.atoms()[0])
    atoms = sorted(atom_set)
    size = len(atoms) ** n
    if size > max_outcomes or size * len(sign_vectors) > 50 * max_outcomes:
        raise OutcomeSpaceTooLarge(
            f"outcome space {len(atoms)}^{n} x {len(sign_vectors)} sign vectors exceeds cap"
        )
    p_null = _power_outer(_draw_table(base, atoms), n)
    p_mix = np.zeros_like(p_null)
    for spec in specs:
        p_mix += _power_outer(_draw_table(spec, atoms), n)
    p_mix /= len(specs)
    diffs = np.sort(np.abs(p_null - p_mix))
    return 0.5 * math.fsum(diffs.tolist())
