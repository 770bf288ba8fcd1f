from nlvolret.abm import (SimConfig, draw_return, ensemble, herding_degree, horizon_weights, init_state,
                          lag_weights, perceived_volatility, return_norm, run_manifest, sample_seeds, save_manifest,
                          simulate, step, trading_probabilities, volatility_weights, weighted_return)
from nlvolret.detect import cross_sectional_average, parse_grid, scan_grid, window_grid
from nlvolret.observables import WindowPair, unit_curves
from nlvolret.timeseries import VolatilitySpec
import json
import os

import numpy as np
import pytest

slow = pytest.mark.skipif(os.environ.get('NLVOLRET_SLOW') != '1', reason='set NLVOLRET_SLOW=1 for long runs')

small = SimConfig(n_agents=100, max_horizon=5, p=0.05, total_steps=300, warmup_discard=100, seed=3)


class AlwaysBuy:
    """
    Generator stand-in where every group buys
    """

    def multinomial(self, n, probs):
        return np.array([n, 0, 0])


class Test_weights:

    def test_single_horizon(self):
        assert horizon_weights(1, 1.12).tolist() == [1.0]

    def test_two_horizons(self):
        gamma = horizon_weights(2, 1.0)
        assert gamma == pytest.approx([2 / 3, 1 / 3])
        assert lag_weights(gamma) == pytest.approx([1, 1 / 3])
        assert return_norm(gamma) == pytest.approx(0.75)
        assert volatility_weights(gamma) == pytest.approx([5 / 6, 1 / 6])

    @pytest.mark.parametrize('M, eta', [(5, 0.5), (150, 1.12), (40, 2.0)])
    def test_normalized(self, M, eta):
        gamma = horizon_weights(M, eta)
        assert len(gamma) == M
        assert gamma.sum() == pytest.approx(1.0)
        assert (np.diff(gamma) < 0).all()

    @pytest.mark.parametrize('M, eta', [(0, 1.0), (5, 0.0), (5, -1.0)])
    def test_errors(self, M, eta):
        with pytest.raises(ValueError):
            horizon_weights(M, eta)


class Test_agent_inputs:

    gamma = horizon_weights(2, 1.0)

    def test_weighted_return(self):
        assert weighted_return([3.0, 6.0], self.gamma) == pytest.approx(5.25)

    def test_weighted_return_uses_last_days(self):
        assert weighted_return([100.0, 3.0, 6.0], self.gamma) == pytest.approx(5.25)

    def test_constant_history(self):
        gamma = horizon_weights(150, 1.12)
        assert weighted_return(np.full(150, 10000.0), gamma) == pytest.approx(10000.0)

    def test_short_history(self):
        with pytest.raises(ValueError):
            weighted_return([1.0], self.gamma)

    def test_perceived_volatility(self):
        assert perceived_volatility([1.0, 2.0], self.gamma) == pytest.approx(11 / 9)

    def test_flat_volatility(self):
        assert perceived_volatility([0.7, 0.7], self.gamma) == pytest.approx(1.0)
        assert perceived_volatility([0.0, 0.0], self.gamma) == 1.0

    @pytest.mark.parametrize('r_prime, n, D, groups', [
        (100, 10000, 0.01, 100),
        (-300, 10000, 0.03, 33),
        (0, 10000, 0.0, 10000),
        (20000, 10000, 1.0, 1),
        (0.4, 10000, 4e-5, 10000)])
    def test_herding(self, r_prime, n, D, groups):
        res_D, res_groups = herding_degree(r_prime, n)
        assert res_D == pytest.approx(D)
        assert res_groups == groups

    def test_trading_probabilities(self):
        p_buy, p_sell = trading_probabilities(2.0, 0.0154, 1 / 80)
        assert p_buy == pytest.approx(0.0154 * 81 / 80)
        assert p_buy + p_sell == pytest.approx(2 * 0.0154)

    @pytest.mark.parametrize('c, xi', [(1 / 80, 1.0), (-1 / 80, 1.0), (0.0, 3.0)])
    def test_neutral(self, c, xi):
        assert trading_probabilities(xi, 0.0154, c) == pytest.approx((0.0154, 0.0154))

    def test_clamped(self):
        assert trading_probabilities(500.0, 0.0154, 1.0) == (2 * 0.0154, 0.0)
        assert trading_probabilities(500.0, 0.0154, -1.0) == (0.0, 2 * 0.0154)


class Test_draw:

    @pytest.mark.parametrize('n, groups', [(10, 3), (10000, 1), (10000, 10000), (101, 10)])
    def test_all_buy(self, n, groups):
        assert draw_return(n, groups, 0.1, 0.1, AlwaysBuy()) == n

    @pytest.mark.parametrize('groups, tol', [(1000, 3.0), (10, 20.0)])
    def test_expected_return(self, groups, tol):
        rng = np.random.default_rng(12)
        draws = [draw_return(1000, groups, 0.3, 0.1, rng) for _ in range(2000)]
        assert np.mean(draws) == pytest.approx(200, abs=tol)

    def test_group_multiples(self):
        rng = np.random.default_rng(4)
        draws = {draw_return(100, 4, 0.2, 0.2, rng) for _ in range(200)}
        assert all(d % 25 == 0 for d in draws)


class Test_simulation:

    def test_step_all_buy(self):
        state = init_state(small)
        state.rng = AlwaysBuy()
        t = state.t
        assert step(state) == 100
        assert state.R[t] == 100
        assert state.V[t] == 100
        assert state.t == t + 1

    def test_state_matches_reference(self):
        state = init_state(small)
        for _ in range(50):
            step(state)
        gamma = horizon_weights(5, small.eta)
        assert state.r_prime == pytest.approx(weighted_return(state.history, gamma))
        assert state.xi == pytest.approx(perceived_volatility(state.V[:state.t], gamma))
        assert (state.D, state.group_count) == herding_degree(state.r_prime, small.n_agents)

    def test_seeded_history(self):
        state = init_state(small)
        assert state.t == 5
        assert np.array_equal(state.V[:5], np.abs(state.R[:5]))

    def test_arrays_grow(self):
        state = init_state(small)
        for _ in range(small.total_steps + 10):
            step(state)
        assert state.t == 5 + small.total_steps + 10
        assert len(state.R) >= state.t

    def test_simulate(self):
        returns = simulate(small)
        assert returns.n == 200
        assert returns.name == 'sim_3'
        assert abs(returns.values.mean()) < 1e-10
        assert returns.values.std() == pytest.approx(1.0)

    def test_deterministic(self):
        assert np.array_equal(simulate(small).values, simulate(small).values)

    def test_seed_matters(self):
        other = SimConfig(**{**small.__dict__, 'seed': 4})
        assert not np.array_equal(simulate(small).values, simulate(other).values)

    @slow
    def test_default_config(self):
        returns = simulate(SimConfig(seed=1))
        assert returns.n == 5000


class Test_config:

    def test_defaults(self):
        cfg = SimConfig()
        assert cfg.n_agents == 10000
        assert cfg.max_horizon == 150
        assert cfg.c == 1 / 80
        assert cfg.kept_steps == 5000

    @pytest.mark.parametrize('kwargs', [
        {'n_agents': 0},
        {'p': 0.5},
        {'p': 0.0},
        {'c': 1.5},
        {'eta': 0.0},
        {'total_steps': 15000},
        {'warmup_discard': 100}])
    def test_errors(self, kwargs):
        with pytest.raises(ValueError):
            SimConfig(**kwargs)


class Test_ensemble:

    def test_seeds(self):
        seeds = sample_seeds(0, 20)
        assert len(set(seeds)) == 20
        assert seeds == sample_seeds(0, 20)
        assert seeds != sample_seeds(1, 20)

    def test_seed_count(self):
        with pytest.raises(ValueError):
            sample_seeds(0, 0)

    def test_ensemble(self):
        samples = ensemble(small, 3, base_seed=7, jobs=1, progress=False)
        assert [s.name for s in samples] == ['sample_000', 'sample_001', 'sample_002']
        assert [s.metadata['seed'] for s in samples] == sample_seeds(7, 3)
        again = ensemble(small, 3, base_seed=7, jobs=1, progress=False)
        for a, b in zip(samples, again):
            assert np.array_equal(a.values, b.values)

    def test_manifest(self, tmp_path):
        seeds = sample_seeds(7, 2)
        manifest = run_manifest(small, 7, seeds)
        assert 'seed' not in manifest['config']
        assert manifest['n_samples'] == 2
        assert manifest['points_per_sample'] == 200
        save_manifest(manifest, tmp_path / 'manifest.json')
        with open(tmp_path / 'manifest.json') as f:
            assert json.load(f) == manifest


@pytest.fixture(scope='module')
def default_ensembles():
    """
    100 samples of the default model per preference degree c, simulated once
    """

    cache = {}

    def get(c):
        if c not in cache:
            cache[c] = ensemble(SimConfig(c=c), 100, base_seed=0, jobs=None, progress=False)
        return cache[c]
    return get


def amplitude(samples):
    """
    Mean of delta P over lags 1..10 and its standard error across samples
    """

    curves = unit_curves(samples, VolatilitySpec.parse('abs'), WindowPair(3, 150), 'delta_p', 30)
    per_sample = np.array([curve.values[:10].mean() for curve in curves])
    return per_sample.mean(), per_sample.std(ddof=1) / np.sqrt(len(per_sample))


@slow
class Test_ensemble_curves:

    def test_positive_preference(self, default_ensembles):
        curves = unit_curves(default_ensembles(1 / 80), VolatilitySpec.parse('abs'), WindowPair(3, 150),
                             'delta_p', 30)
        values = cross_sectional_average(curves).values
        assert (values[:15] > 0).all()
        assert 0.015 <= values[:10].mean() <= 0.045

    def test_negative_preference(self, default_ensembles):
        mean, se = amplitude(default_ensembles(-1 / 80))
        assert mean < -3 * se

    def test_no_preference(self, default_ensembles):
        mean, se = amplitude(default_ensembles(0.0))
        assert abs(mean) < 3 * se

    def test_c_ordering(self, default_ensembles):
        a40, se40 = amplitude(default_ensembles(1 / 40))
        a80, se80 = amplitude(default_ensembles(1 / 80))
        a160, se160 = amplitude(default_ensembles(1 / 160))
        assert a40 - a80 > np.hypot(se40, se80)
        assert a80 - a160 > np.hypot(se80, se160)
        # doubling c doubles the amplitude
        assert 1.5 <= a40 / a80 <= 2.5

    def test_landscape_structure(self, default_ensembles):
        pairs = window_grid(*parse_grid('1:44:3,45:250:15'))
        land = scan_grid(default_ensembles(1 / 80), VolatilitySpec.parse('abs'), pairs, t_max=150, jobs=None,
                         progress=False)
        effective = land.effective
        assert len(effective) > 0
        assert (effective['ap0'] > 0).all()
        grid_share = np.mean([p.T2 < 120 for p in pairs])
        assert (effective['T2'] < 120).mean() < grid_share
