"""Monte Carlo engine for coverage, length and moment checks.

Trials run on integer-coded data: point indices into the distribution instead of
opaque keys, so whole chunks of trials are processed with array operations.
``tests/test_harness.py`` pins this fast path to :func:`dfci.core.construct_ci`.

Trial ``t`` always uses seed ``derive_seed(master, t)`` and trials are
processed in fixed-size chunks, so results do not depend on ``threads``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binomtest, linregress

from . import rng
from .adversarial import (
    PerturbedFamily,
    binom_mixture_kl,
    empirical_tv_tiny,
    median_split,
    tv_mixture_bound,
)
from .core import INF, CIParams, ParameterError, support_threshold
from .distributions import (
    Bernoulli,
    DiscreteDistributionSpec,
    FiniteSupport,
    LowerBoundParams,
    theorem1_lower_bound,
    true_effective_support,
    uniform,
    variance_quantile,
)
from .estimators import frequency_positions, noisy_oracle_values, plugin_values, split_indices

CHUNK = 256

RESULT_COLUMNS = (
    "n", "M", "coverage_hat", "cov_lo", "cov_hi", "mean_length", "se_length",
    "mean_delta_hat", "frac_mhat_inf", "seed",
)


@dataclass(frozen=True)
class ExperimentConfig:
    spec: DiscreteDistributionSpec
    n_grid: tuple
    trials: int
    params: CIParams
    mean_source: str = "oracle"  # oracle | noisy | plugin
    mean_err: float = 0.0
    split_fraction: float = 0.5
    support_source: str = "true"  # true | frequency
    seed: int = 0
    default_mean: float = 0.5
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if not self.n_grid or min(self.n_grid) < 2:
            raise ParameterError("n_grid entries must be >= 2")
        if self.mean_source not in ("oracle", "noisy", "plugin"):
            raise ParameterError(f"unknown mean source {self.mean_source!r}")
        if self.support_source not in ("true", "frequency"):
            raise ParameterError(f"unknown support source {self.support_source!r}")
        if self.needs_training and not (0.0 < self.split_fraction < 1.0):
            raise ParameterError("split_fraction must lie in (0, 1)")

    @property
    def needs_training(self) -> bool:
        return self.mean_source == "plugin" or self.support_source == "frequency"


@dataclass(frozen=True)
class CellResult:
    n: int
    M: int
    trials: int
    coverage_hat: float
    cov_lo: float
    cov_hi: float
    mean_length: float
    se_length: float
    mean_delta_hat: float
    mean_z: float
    mean_n_geq2: float
    se_n_geq2: float
    frac_mhat_inf: float
    seed: int

    def row(self) -> dict:
        return {c: getattr(self, c) for c in RESULT_COLUMNS}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    cells: list
    trials: dict = field(default_factory=dict)  # n -> per-trial arrays when requested


# ---------------------------------------------------------------- statistics


def batch_statistics(idx: np.ndarray, y: np.ndarray, pos_map: np.ndarray, mu_hyp: np.ndarray,
                     params: CIParams, mu_true: np.ndarray | None = None) -> dict:
    """Interval statistics for each row of ``(idx, y)``.

    ``pos_map[i]`` is the 0-based support position of spec point ``i`` (-1 when
    the hypothesized support omits it) and ``mu_hyp[i]`` the hypothesized mean.
    """
    T, n = idx.shape
    M = pos_map.shape[0]
    n_support = int(pos_map.max()) + 1 if M else 0
    pos = pos_map[idx]
    in_sup = pos >= 0

    thr = support_threshold(n, params)
    mhat = np.full(T, INF)
    if thr <= n and n_support > 0:
        k = max(1, math.ceil(thr))
        kth = np.sort(np.where(in_sup, pos, n_support), axis=1)[:, k - 1]
        ok = kth < n_support
        mhat[ok] = kth[ok] + 1

    rows = np.broadcast_to(np.arange(T, dtype=np.int64)[:, None], (T, n))
    codes = (rows * M + idx)[in_sup]
    yv = y[in_sup]
    uniq, inv, cnt = np.unique(codes, return_inverse=True, return_counts=True)
    ybar = np.bincount(inv, weights=yv) / cnt
    ss = np.bincount(inv, weights=(yv - ybar[inv]) ** 2)
    rep = cnt >= 2
    s2 = np.where(rep, ss / np.maximum(cnt - 1, 1), 0.0)
    g_pt = uniq % M
    g_row = uniq // M
    d2 = (ybar - mu_hyp[g_pt]) ** 2
    terms = np.where(rep, (cnt - 1) * (d2 - s2 / cnt), 0.0)
    z = np.bincount(g_row, weights=terms, minlength=T)
    n2 = np.bincount(g_row, weights=rep.astype(np.float64), minlength=T)

    finite = np.isfinite(mhat)
    dh = np.full(T, INF)
    scale = np.sqrt((2.0 * mhat[finite] + n) / (n * (n - 1.0)))
    dh[finite] = scale * np.sqrt(
        4.0 * np.maximum(z[finite], 0.0) + 8.0 * np.sqrt(n2[finite] / params.delta) + 24.0 / params.delta
    )
    out = {"mhat": mhat, "z": z, "n_geq2": n2, "delta_hat": dh, "halfwidth": dh / params.slack}
    if mu_true is not None:
        off2 = (mu_hyp[g_pt] - mu_true[g_pt]) ** 2
        out["ez_cond"] = np.bincount(g_row, weights=(cnt - 1) * off2, minlength=T)
    return out


def interval_arrays(mu: np.ndarray, halfwidth: np.ndarray):
    return np.maximum(0.0, mu - halfwidth), np.minimum(1.0, mu + halfwidth)


# ---------------------------------------------------------------- experiments


def _fixed_inputs(config: ExperimentConfig):
    spec = config.spec
    M = len(spec)
    if config.support_source == "true":
        pos_map = np.empty(M, dtype=np.int64)
        pos_map[np.argsort(-spec.probs, kind="stable")] = np.arange(M)
    else:
        pos_map = None
    if config.mean_source == "oracle":
        mu_hyp = spec.means.copy()
    elif config.mean_source == "noisy":
        mu_hyp = noisy_oracle_values(spec, config.mean_err, rng.derive_seed(config.seed, 2**63))
    else:
        mu_hyp = None
    return pos_map, mu_hyp


def _run_chunk(config: ExperimentConfig, n: int, seeds: np.ndarray, fixed, lex_rank) -> dict:
    spec = config.spec
    idx, y = spec.sample_batch(n + 1, seeds)
    test_idx = idx[:, n]
    idx, y = idx[:, :n], y[:, :n]
    pos_fixed, mu_fixed = fixed
    if not config.needs_training:
        st = batch_statistics(idx, y, pos_fixed, mu_fixed, config.params)
        mu_test = mu_fixed[test_idx]
    else:
        parts = []
        mu_test = np.empty(len(seeds))
        for t, s in enumerate(seeds):
            tr, inf = split_indices(n, config.split_fraction, int(s))
            if len(inf) < 2:
                raise ParameterError("inference split needs at least 2 samples")
            tr_idx, tr_y = idx[t, tr], y[t, tr]
            pos = pos_fixed if pos_fixed is not None else frequency_positions(tr_idx, lex_rank)
            mu = (mu_fixed if mu_fixed is not None
                  else plugin_values(tr_idx, tr_y, len(spec), config.default_mean))
            parts.append(batch_statistics(idx[t, inf][None, :], y[t, inf][None, :], pos, mu, config.params))
            mu_test[t] = mu[test_idx[t]]
        st = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    lo, hi = interval_arrays(mu_test, st["halfwidth"])
    truth = spec.means[test_idx]
    st["covered"] = (lo <= truth) & (truth <= hi)
    st["length"] = hi - lo
    st["mu_test"] = mu_test
    st["truth"] = truth
    return st


def _summarise(n: int, M: int, seed: int, st: dict) -> CellResult:
    T = st["covered"].shape[0]
    k = int(st["covered"].sum())
    ci = binomtest(k, T).proportion_ci(confidence_level=0.95)
    lengths = st["length"]
    dh = st["delta_hat"]
    fin = np.isfinite(dh)
    sd = lambda a: float(np.std(a, ddof=1)) / math.sqrt(T) if T > 1 else 0.0
    return CellResult(
        n=n,
        M=M,
        trials=T,
        coverage_hat=k / T,
        cov_lo=max(0.0, float(ci.low)),
        cov_hi=min(1.0, float(ci.high)),
        mean_length=float(np.mean(lengths)),
        se_length=sd(lengths),
        mean_delta_hat=float(np.mean(dh[fin])) if fin.any() else INF,
        mean_z=float(np.mean(st["z"])),
        mean_n_geq2=float(np.mean(st["n_geq2"])),
        se_n_geq2=sd(st["n_geq2"]),
        frac_mhat_inf=float(np.mean(~np.isfinite(st["mhat"]))),
        seed=seed,
    )


def run_coverage_experiment(config: ExperimentConfig, threads: int = 1,
                            keep_trials: bool = False) -> ExperimentResult:
    fixed = _fixed_inputs(config)
    lex_rank = np.empty(len(config.spec), dtype=np.int64)
    lex_rank[np.argsort(np.array(config.spec.keys, dtype=object), kind="stable")] = np.arange(len(config.spec))
    seeds = rng.derive_seeds(config.seed, range(config.trials))
    chunks = [seeds[i:i + CHUNK] for i in range(0, config.trials, CHUNK)]
    cells, kept = [], {}
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for n in config.n_grid:
            parts = list(pool.map(lambda s: _run_chunk(config, n, s, fixed, lex_rank), chunks))
            st = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
            cells.append(_summarise(n, len(config.spec), config.seed, st))
            if keep_trials:
                kept[n] = st
    return ExperimentResult(config, cells, kept)


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    points: int


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> SlopeFit:
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    if lx.size < 2 or np.ptp(lx) == 0:
        raise ParameterError("need at least two distinct abscissae for a slope")
    if lx.size == 2:
        slope = float((ly[1] - ly[0]) / (lx[1] - lx[0]))
        return SlopeFit(slope, math.nan, float(ly[0] - slope * lx[0]), 2)
    fit = linregress(lx, ly)
    return SlopeFit(float(fit.slope), float(fit.stderr), float(fit.intercept), int(lx.size))


def _check_grid(grid: Sequence[int], name: str):
    if len(grid) == 1:
        return
    if len(grid) < 4:
        raise ParameterError(f"{name} grid needs a single value or at least 4 points")
    g = np.asarray(grid, dtype=float)
    if (np.diff(g) <= 0).any():
        raise ParameterError(f"{name} grid must be strictly increasing")
    ratios = g[1:] / g[:-1]
    if np.ptp(np.log(ratios)) > 1e-9:
        raise ParameterError(f"{name} grid must be geometric")


@dataclass
class ScalingResult:
    cells: list
    lower_bounds: dict  # (n, M) -> reference value
    n_slopes: dict  # M -> SlopeFit of log length on log n
    M_slopes: dict  # n -> SlopeFit of log length on log M
    excluded: list
    field: str = "mean_length"


def slopes_from_cells(cells: Sequence[CellResult], field_name: str = "mean_length"):
    """Fit log(field) on log n per M and on log M per n; drop cells with M_hat = inf in > 50% of trials."""
    excluded = [(c.n, c.M) for c in cells if c.frac_mhat_inf > 0.5]
    keep = [c for c in cells if c.frac_mhat_inf <= 0.5]
    n_slopes, M_slopes = {}, {}
    for M in sorted({c.M for c in keep}):
        row = sorted((c for c in keep if c.M == M), key=lambda c: c.n)
        if len({c.n for c in row}) >= 2:
            n_slopes[M] = fit_loglog_slope([c.n for c in row], [getattr(c, field_name) for c in row])
    for n in sorted({c.n for c in keep}):
        row = sorted((c for c in keep if c.n == n), key=lambda c: c.M)
        if len({c.M for c in row}) >= 2:
            M_slopes[n] = fit_loglog_slope([c.M for c in row], [getattr(c, field_name) for c in row])
    return n_slopes, M_slopes, excluded


def run_scaling_study(base: ExperimentConfig, M_grid: Sequence[int],
                      spec_factory: Callable[[int], DiscreteDistributionSpec] | None = None,
                      threads: int = 1, lb_beta: float = 0.05, lb_gamma: float = 0.5) -> ScalingResult:
    if base.mean_source != "oracle":
        raise ParameterError("slope fitting requires the oracle mean")
    n_grid = sorted(base.n_grid)
    M_grid = sorted(int(m) for m in M_grid)
    if len(n_grid) == 1 and len(M_grid) == 1:
        raise ParameterError("degenerate grid: need more than one n or more than one M")
    _check_grid(n_grid, "n")
    _check_grid(M_grid, "M")
    factory = spec_factory or (lambda M: uniform(M, Bernoulli(0.5)))
    cells, lbs = [], {}
    for j, M in enumerate(M_grid):
        spec = factory(M)
        ns = tuple(n for n in n_grid if M <= n * n)
        if not ns:
            continue
        cfg = replace(base, spec=spec, n_grid=ns, seed=rng.derive_seed(base.seed, 2**62 + j))
        res = run_coverage_experiment(cfg, threads=threads)
        cells.extend(res.cells)
        m_gamma, _ = true_effective_support(spec, lb_gamma)
        s2 = variance_quantile(spec, lb_beta)
        for n in ns:
            try:
                lbs[(n, M)] = theorem1_lower_bound(
                    LowerBoundParams(base.params.alpha, lb_beta, lb_gamma, s2, m_gamma, n))
            except ParameterError:
                lbs[(n, M)] = math.nan
    n_slopes, M_slopes, excluded = slopes_from_cells(cells)
    return ScalingResult(cells, lbs, n_slopes, M_slopes, excluded)


# ---------------------------------------------------------------- Z moments


@dataclass(frozen=True)
class ZMomentReport:
    n: int
    trials: int
    expected_z: float
    mc_mean_z: float
    se_mean_z: float
    mean_ok: bool
    var_cond_mean: float
    var_cond_mean_se: float
    var_cond_mean_bound: float
    var_cond_mean_ok: bool
    cond_var_excess: float  # mean of (Z - E[Z|X])^2 - N>=2 - 2 E[Z|X]; should be <= 0
    cond_var_excess_se: float
    cond_var_ok: bool

    @property
    def ok(self) -> bool:
        return self.mean_ok and self.var_cond_mean_ok and self.cond_var_ok


def expected_z(spec: DiscreteDistributionSpec, mu_hyp: np.ndarray, n: int) -> float:
    factor = collision_factor(n, spec.probs)
    return math.fsum(((mu_hyp - spec.means) ** 2 * factor).tolist())


def check_z_moments(spec: DiscreteDistributionSpec, mean, n: int, trials: int, seed: int,
                    params: CIParams | None = None, n_se: float = 4.0, chunk: int = 4096) -> ZMomentReport:
    """Monte Carlo check of the mean and variance identities of the collision statistic."""
    mu_hyp = np.array([mean(k) for k in spec.keys]) if callable(mean) else np.asarray(mean, dtype=float)
    params = params or CIParams(0.2, 0.05, 0.05)
    pos_map = np.arange(len(spec), dtype=np.int64)
    seeds = rng.derive_seeds(seed, range(trials))
    zs, ecs, n2s = [], [], []
    for i in range(0, trials, chunk):
        idx, y = spec.sample_batch(n, seeds[i:i + chunk])
        st = batch_statistics(idx, y, pos_map, mu_hyp, params, mu_true=spec.means)
        zs.append(st["z"])
        ecs.append(st["ez_cond"])
        n2s.append(st["n_geq2"])
    z, ec, n2 = np.concatenate(zs), np.concatenate(ecs), np.concatenate(n2s)
    ez = expected_z(spec, mu_hyp, n)
    root_t = math.sqrt(trials)

    mc = float(z.mean())
    se = float(z.std(ddof=1)) / root_t
    mean_ok = abs(mc - ez) <= n_se * se + 1e-12

    centred = (ec - ec.mean()) ** 2
    v = float(centred.sum() / (trials - 1))
    v_se = float(centred.std(ddof=1)) / root_t
    v_ok = v <= 2.0 * ez + n_se * v_se + 1e-12

    excess = (z - ec) ** 2 - n2 - 2.0 * ec
    ex = float(excess.mean())
    ex_se = float(excess.std(ddof=1)) / root_t
    cv_ok = ex <= n_se * ex_se + 1e-12
    return ZMomentReport(n, trials, ez, mc, se, mean_ok, v, v_se, 2.0 * ez, v_ok, ex, ex_se, cv_ok)


# ---------------------------------------------------------------- scalar inequalities


def collision_factor(n, p):
    """n p - 1 + (1 - p)^n, evaluated without cancellation."""
    n = np.asarray(n, dtype=float)
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return n * p + np.expm1(n * np.log1p(-p))


def factor_bounds(n, p):
    n = np.asarray(n, dtype=float)
    p = np.asarray(p, dtype=float)
    lower = n * (n - 1.0) * p**2 / (2.0 + n * p)
    upper = n**2 * p**2 / (1.0 + n * p)
    return lower, collision_factor(n, p), upper


@dataclass(frozen=True)
class ScalarInequalityReport:
    n_max: int
    p_steps: int
    max_lower_violation: float  # max of lower - middle
    max_upper_violation: float  # max of middle - upper
    worst_lower: tuple
    worst_upper: tuple
    per_n: list  # (n, worst p lower, lower, middle, worst p upper, middle, upper)

    def passed(self, tol: float = 1e-12) -> bool:
        return self.max_lower_violation <= tol and self.max_upper_violation <= tol


def check_scalar_inequalities(n_max: int, p_steps: int) -> ScalarInequalityReport:
    if n_max < 1 or p_steps < 1:
        raise ParameterError("n_max and p_steps must be >= 1")
    ns = np.arange(1, n_max + 1, dtype=float)[:, None]
    ps = (np.arange(p_steps + 1) / p_steps)[None, :]
    lower, mid, upper = factor_bounds(ns, ps)
    v_lo = lower - mid
    v_hi = mid - upper
    i_lo = np.unravel_index(np.argmax(v_lo), v_lo.shape)
    i_hi = np.unravel_index(np.argmax(v_hi), v_hi.shape)
    per_n = []
    for r in range(n_max):
        a, b = int(np.argmax(v_lo[r])), int(np.argmax(v_hi[r]))
        per_n.append((r + 1, float(ps[0, a]), float(lower[r, a]), float(mid[r, a]),
                      float(ps[0, b]), float(mid[r, b]), float(upper[r, b])))
    return ScalarInequalityReport(
        n_max, p_steps, float(v_lo[i_lo]), float(v_hi[i_hi]),
        (int(ns[i_lo[0], 0]), float(ps[0, i_lo[1]])),
        (int(ns[i_hi[0], 0]), float(ps[0, i_hi[1]])),
        per_n,
    )


# ---------------------------------------------------------------- lemma grid


def random_finite_law(seed: int, max_atoms: int = 6) -> FiniteSupport:
    u, v = rng.uniform_pairs(seed, np.arange(2 * max_atoms + 1, dtype=np.uint64), rng.STREAM_SPEC)
    k = 1 + int(u[0] * max_atoms)
    values = np.round(v[1:k + 1], 6)
    w = u[1:k + 1] + 1e-3
    return FiniteSupport(tuple(values.tolist()), tuple((w / w.sum()).tolist()))


def random_tiny_instance(seed: int):
    """(base spec, family, n) with <= 3 cells, binary responses and n <= 2."""
    u, v = rng.uniform_pairs(seed, np.arange(16, dtype=np.uint64), rng.STREAM_SPEC)
    k = 1 + int(u[0] * 3)
    n = 1 + int(u[1] * 2)
    w = u[2:2 + k] + 0.05
    laws = tuple(Bernoulli(float(q)) for q in np.round(v[:k], 6))
    spec = DiscreteDistributionSpec(tuple(f"c{i}" for i in range(k)), w / w.sum(), laws)
    eps = tuple(float(e) for e in np.round(0.5 * v[8:8 + k], 6))
    return spec, PerturbedFamily(spec, tuple((key,) for key in spec.keys), eps), n


LEMMA_TOL = 1e-12


def lemma_rows(seed: int = 0, n_max: int = 200, p_steps: int = 2000, kl_max_n: int = 40,
               n_laws: int = 1000, n_tv: int = 100) -> list:
    """Rows ``(lemma, instance, lhs, rhs, pass)``; each row asserts ``lhs <= rhs``."""
    rows = []
    rep = check_scalar_inequalities(n_max, p_steps)
    for n, p_lo, lower, mid_lo, p_hi, mid_hi, upper in rep.per_n:
        rows.append(("collision_factor_lower", f"n={n};p={p_lo:.6g}", lower, mid_lo,
                     lower <= mid_lo + LEMMA_TOL))
        rows.append(("collision_factor_upper", f"n={n};p={p_hi:.6g}", mid_hi, upper,
                     mid_hi <= upper + LEMMA_TOL))
    for N in range(1, kl_max_n + 1):
        for j in range(11):
            eps = j / 20
            kl, bound = binom_mixture_kl(N, eps)
            rows.append(("binomial_mixture_kl", f"N={N};eps={eps:.2f}", kl, bound, kl <= bound + LEMMA_TOL))
    for i in range(n_laws):
        law = random_finite_law(rng.derive_seed(seed, i))
        sp = median_split(law)
        recon = _reconstruction_error(law, sp)
        ok = recon <= LEMMA_TOL and 2.0 * law.variance() <= sp.mean_gap + LEMMA_TOL
        rows.append(("median_split", f"law={i};recon_err={recon:.3g}", 2.0 * law.variance(), sp.mean_gap, ok))
    for i in range(n_tv):
        spec, fam, n = random_tiny_instance(rng.derive_seed(seed, 10**6 + i))
        tv = empirical_tv_tiny(spec, fam, n)
        bound = tv_mixture_bound(fam.epsilons, fam.cell_probs(), n)
        rows.append(("mixture_tv", f"instance={i};cells={len(fam.cells)};n={n}", tv, bound,
                     tv <= bound + LEMMA_TOL))
    return rows


def _reconstruction_error(law, split) -> float:
    vals, wts = law.atoms()
    d0 = dict(zip(*split.q0.atoms()))
    d1 = dict(zip(*split.q1.atoms()))
    atoms = set(vals) | set(d0) | set(d1)
    target = dict(zip(vals, wts))
    return max(abs(0.5 * d0.get(a, 0.0) + 0.5 * d1.get(a, 0.0) - target.get(a, 0.0)) for a in atoms)


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "pass" if v else "FAIL"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_results_csv(path, cells: Sequence[CellResult], extra: dict | None = None) -> None:
    header = list(RESULT_COLUMNS) + (list(extra) if extra else [])
    rows = []
    for c in cells:
        r = [getattr(c, k) for k in RESULT_COLUMNS]
        if extra:
            r += [extra[k][(c.n, c.M)] for k in extra]
        rows.append(r)
    write_csv(path, header, rows)
