import math

import numpy as np
import pytest

from dfci import rng
from dfci.core import CIParams, Dataset, MeanHypothesis, OrderedSupport, ParameterError, construct_ci
from dfci.distributions import Bernoulli, FiniteSupport, near_uniform, random_bernoulli_laws, uniform
from dfci.estimators import fit_plugin_mean, order_support_by_frequency, split_dataset
from dfci.harness import (
    CellResult,
    ExperimentConfig,
    check_scalar_inequalities,
    check_z_moments,
    collision_factor,
    expected_z,
    factor_bounds,
    fit_loglog_slope,
    interval_arrays,
    lemma_rows,
    run_coverage_experiment,
    run_scaling_study,
    slopes_from_cells,
)

P = CIParams(0.2, 0.05, 0.05)
WIDE = CIParams(0.9, 0.1, 0.3)


def reference_trials(config, n):
    """Per-trial (halfwidth, mu_test) built with the keyed reference implementation."""
    spec = config.spec
    out = []
    for s in rng.derive_seeds(config.seed, range(config.trials)):
        idx, y = spec.sample_indices(n + 1, int(s))
        keys = tuple(spec.keys[i] for i in idx[:n])
        data = Dataset(keys, y[:n])
        test_key = spec.keys[idx[n]]
        if config.needs_training:
            sp = split_dataset(data, config.split_fraction, int(s))
            data = sp.infer
        if config.support_source == "true":
            support = OrderedSupport(tuple(spec.keys[i] for i in np.argsort(-spec.probs, kind="stable")))
        else:
            support = order_support_by_frequency(sp.train)
        if config.mean_source == "oracle":
            mean = MeanHypothesis(dict(zip(spec.keys, spec.means.tolist())))
        else:
            mean = fit_plugin_mean(sp.train, config.default_mean)
        rep = construct_ci(data, support, mean, config.params)
        out.append((rep.halfwidth, mean(test_key), rep.m_hat_gamma, rep.z, rep.n_geq2))
    return out


class TestFastPathMatchesReference:
    @pytest.mark.parametrize("mean_source,support_source", [
        ("oracle", "true"), ("plugin", "frequency"), ("plugin", "true"), ("oracle", "frequency")])
    def test_agreement(self, mean_source, support_source):
        spec = near_uniform(12, 2.0, seed=1, laws=random_bernoulli_laws(12, 2))
        cfg = ExperimentConfig(spec, (40, 300), 30, WIDE, mean_source=mean_source,
                               support_source=support_source, seed=5)
        res = run_coverage_experiment(cfg, keep_trials=True)
        for n in cfg.n_grid:
            st = res.trials[n]
            for t, (h, mu, m, z, n2) in enumerate(reference_trials(cfg, n)):
                assert st["mhat"][t] == m and st["n_geq2"][t] == n2
                assert st["z"][t] == pytest.approx(z, rel=1e-10, abs=1e-10)
                assert st["mu_test"][t] == pytest.approx(mu, rel=1e-13)
                if math.isinf(h):
                    assert math.isinf(st["halfwidth"][t])
                else:
                    assert st["halfwidth"][t] == pytest.approx(h, rel=1e-10)

    def test_continuous_responses(self):
        laws = tuple(FiniteSupport((0.0, 0.25, 0.9), (0.3, 0.3, 0.4)) for _ in range(5))
        spec = uniform(5, laws=laws)
        cfg = ExperimentConfig(spec, (60,), 20, WIDE, seed=2)
        st = run_coverage_experiment(cfg, keep_trials=True).trials[60]
        for t, (h, *_rest) in enumerate(reference_trials(cfg, 60)):
            assert st["halfwidth"][t] == pytest.approx(h, rel=1e-10)


class TestCoverageExperiment:
    def test_deterministic_responses_always_covered(self):
        spec = uniform(10, laws=tuple(Bernoulli(float(i % 2)) for i in range(10)))
        cell = run_coverage_experiment(ExperimentConfig(spec, (50, 500), 100, P, seed=1)).cells
        assert all(c.coverage_hat == 1.0 for c in cell)

    def test_single_trial(self):
        cfg = ExperimentConfig(uniform(5), (400,), 1, WIDE, seed=3)
        res = run_coverage_experiment(cfg, keep_trials=True)
        c = res.cells[0]
        assert c.coverage_hat in (0.0, 1.0) and c.se_length == 0.0
        assert c.mean_length == res.trials[400]["length"][0]
        assert 0.0 <= c.cov_lo <= c.coverage_hat <= c.cov_hi <= 1.0

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            ExperimentConfig(uniform(3), (1,), 10, P)
        with pytest.raises(ParameterError):
            ExperimentConfig(uniform(3), (10,), 0, P)
        with pytest.raises(ParameterError):
            ExperimentConfig(uniform(3), (10,), 5, P, mean_source="magic")

    def test_thread_count_does_not_change_results(self):
        spec = near_uniform(30, 2.0, seed=9)
        cfg = ExperimentConfig(spec, (100, 700), 600, WIDE, mean_source="plugin",
                               support_source="frequency", seed=12)
        a = run_coverage_experiment(cfg, threads=1).cells
        b = run_coverage_experiment(cfg, threads=4).cells
        assert a == b

    def test_inflating_halfwidth_never_loses_coverage(self):
        cfg = ExperimentConfig(uniform(20, laws=random_bernoulli_laws(20, 4)), (2000,), 400, WIDE,
                               mean_source="noisy", mean_err=0.2, seed=21)
        st = run_coverage_experiment(cfg, keep_trials=True).trials[2000]
        for scale in (1.01, 1.5, 3.0):
            lo, hi = interval_arrays(st["mu_test"], st["halfwidth"] * scale)
            wider = (lo <= st["truth"]) & (st["truth"] <= hi)
            assert np.all(wider >= st["covered"])

    def test_collision_count_bound(self):
        eta, M, n = 2.0, 400, 300
        cfg = ExperimentConfig(near_uniform(M, eta, seed=6), (n,), 2000, P, seed=4)
        c = run_coverage_experiment(cfg).cells[0]
        assert c.mean_n_geq2 <= min(eta**2 * n**2 / M, M) + 4 * c.se_n_geq2


class TestZMoments:
    def test_hand_case(self):
        spec = uniform(1, Bernoulli(0.5))
        assert expected_z(spec, np.array([0.0]), 2) == 0.25
        rep = check_z_moments(spec, np.array([0.0]), 2, 20_000, seed=1)
        assert rep.ok, rep

    def test_oracle_mean_gives_zero(self):
        spec = uniform(6, laws=random_bernoulli_laws(6, 1))
        assert expected_z(spec, spec.means, 50) == 0.0
        assert check_z_moments(spec, spec.means, 50, 10_000, seed=2).ok

    def test_offset_small_spec(self):
        spec = near_uniform(8, 3.0, seed=3, laws=random_bernoulli_laws(8, 3))
        rep = check_z_moments(spec, np.clip(spec.means + 0.3, 0, 1), 20, 20_000, seed=3)
        assert rep.ok, rep

    def test_small_cell_factor_vanishes(self):
        assert collision_factor(100, 1e-12) == pytest.approx(0.5 * 100 * 99 * 1e-24, rel=1e-6)

    def test_keyed_mean_accepted(self):
        spec = uniform(2)
        rep = check_z_moments(spec, MeanHypothesis({}, 0.2), 5, 2_000, seed=0)
        assert rep.expected_z == pytest.approx(expected_z(spec, np.array([0.2, 0.2]), 5))


class TestScalarInequalities:
    def test_spot_values(self):
        lo, mid, hi = factor_bounds(2, 0.5)
        assert (float(lo), float(mid), float(hi)) == (1 / 6, 0.25, 0.5)
        lo, mid, hi = factor_bounds(3, 1.0)
        assert (float(lo), float(mid), float(hi)) == (6 / 5, 2.0, 9 / 4)

    def test_zero_probability(self):
        assert tuple(float(v) for v in factor_bounds(7, 0.0)) == (0.0, 0.0, 0.0)

    def test_grid(self):
        rep = check_scalar_inequalities(60, 400)
        assert rep.passed()
        with pytest.raises(ParameterError):
            check_scalar_inequalities(0, 10)


class TestSlopes:
    def test_exact_power_law(self):
        n = [256, 512, 1024, 2048]
        assert fit_loglog_slope(n, [3.0 / math.sqrt(k) for k in n]).slope == pytest.approx(-0.5, abs=1e-12)

    def test_constant(self):
        assert fit_loglog_slope([1, 2, 4, 8], [0.3] * 4).slope == pytest.approx(0.0, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(ParameterError):
            fit_loglog_slope([5, 5, 5], [1, 2, 3])
        base = ExperimentConfig(uniform(4), (100,), 5, P)
        with pytest.raises(ParameterError):
            run_scaling_study(base, [4])
        with pytest.raises(ParameterError):
            run_scaling_study(ExperimentConfig(uniform(4), (100, 200, 400), 5, P), [4])
        with pytest.raises(ParameterError):
            run_scaling_study(ExperimentConfig(uniform(4), (100, 200, 300, 400), 5, P), [4])

    def test_exclusion_of_trivial_cells(self):
        def cell(n, length, inf):
            return CellResult(n, 10, 1, 1.0, 0, 1, length, 0, 1, 0, 0, 0, inf, 0)
        cells = [cell(100, 1.0, 1.0)] + [cell(n, 5 / math.sqrt(n), 0.0) for n in (200, 400, 800)]
        n_slopes, _, excluded = slopes_from_cells(cells)
        assert excluded == [(100, 10)] and n_slopes[10].slope == pytest.approx(-0.5)

    def test_small_study(self):
        base = ExperimentConfig(uniform(4), (64, 128, 256, 512), 20, WIDE, seed=1)
        res = run_scaling_study(base, [4, 8, 16, 32])
        assert len(res.cells) == 16 and len(res.lower_bounds) == 16
        # the reference bound needs gamma > alpha + beta, impossible at alpha = 0.9
        assert all(math.isnan(v) for v in res.lower_bounds.values())
        res = run_scaling_study(ExperimentConfig(uniform(4), (64, 128, 256, 512), 20, P, seed=1), [4, 8, 16, 32])
        assert all(v > 0 for v in res.lower_bounds.values())


def test_lemma_rows_small_grid_all_pass():
    rows = lemma_rows(seed=3, n_max=20, p_steps=50, kl_max_n=6, n_laws=30, n_tv=10)
    assert rows and all(r[4] for r in rows)
    assert {r[0] for r in rows} == {"collision_factor_lower", "collision_factor_upper",
                                    "binomial_mixture_kl", "median_split", "mixture_tv"}
