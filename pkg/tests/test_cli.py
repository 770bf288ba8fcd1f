from nlvolret.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_OK, main
from nlvolret.config import ConfigError, RunConfig
import json
import os

import numpy as np
import pandas as pd
import pytest

root = os.path.join(os.path.dirname(__file__), '..')
index_path = os.path.join(root, 'tests', 'sample_index.csv')
yahoo_path = os.path.join(root, 'tests', 'sample_yahoo.csv')


@pytest.fixture
def price_folder(tmp_path):
    folder = tmp_path / 'prices'
    folder.mkdir()
    for i in range(3):
        rng = np.random.default_rng(100 + i)
        closes = 50 * np.exp(np.cumsum(0.02 * rng.standard_normal(400)))
        dates = pd.bdate_range('2012-01-02', periods=400).strftime('%Y-%m-%d')
        pd.DataFrame({'date': dates, 'close': closes}).to_csv(folder / f'stock{i}.csv', index=False)
    return folder


def read_json(path):
    with open(path) as f:
        return json.load(f)


class Test_analyze:

    def test_single_series(self, tmp_path):
        out = tmp_path / 'out'
        args = ['analyze', '--input', index_path, '--t1', '5', '--t2', '50', '--tmax', '60', '--out', str(out), '-q']
        assert main(args) == EXIT_OK
        assert (out / 'run_config.json').exists()
        assert (out / 'curves' / 'sample_index.csv').exists()
        assert not (out / 'ttest.csv').exists()
        with open(out / 'mean_curve.csv') as f:
            assert f.readline().startswith('# single series')
        mean = pd.read_csv(out / 'mean_curve.csv', comment='#')
        assert mean.columns.tolist() == ['t', 'value', 'count']
        assert len(mean) == 60
        summary = read_json(out / 'analysis.json')
        assert summary['T1'] == 5
        assert summary['n_units'] == 1
        assert 'detection' in summary

    def test_curve_columns(self, tmp_path):
        out = tmp_path / 'out'
        main(['analyze', '--input', index_path, '--t1', '5', '--t2', '50', '--tmax', '30', '--out', str(out), '-q'])
        curve = pd.read_csv(out / 'curves' / 'sample_index.csv', comment='#')
        assert curve.columns.tolist() == ['t', 'value', 'n_pos', 'n_neg', 'p0']
        assert curve['t'].tolist() == list(range(1, 31))

    def test_ensemble(self, tmp_path, price_folder):
        out = tmp_path / 'out'
        args = ['analyze', '--input', str(price_folder), '--observable', 'g', '--t1', '4', '--t2', '60',
                '--tmax', '40', '--out', str(out), '-q']
        assert main(args) == EXIT_OK
        assert pd.read_csv(out / 'mean_curve.csv').columns.tolist() == ['t', 'value', 'se', 'count']
        ttest = pd.read_csv(out / 'ttest.csv')
        assert ttest.columns.tolist() == ['lag', 't_stat', 'p_value', 'df']
        assert (ttest['df'] == 2).all()
        summary = read_json(out / 'analysis.json')
        assert summary['units'] == ['stock0', 'stock1', 'stock2']
        assert summary['observable'] == 'g'
        assert 'detection' not in summary

    def test_one_day_rms_matches_abs(self, tmp_path):
        common = ['analyze', '--input', index_path, '--t1', '3', '--t2', '40', '--tmax', '50', '-q']
        assert main(common + ['--out', str(tmp_path / 'a')]) == EXIT_OK
        assert main(common + ['--observable', 'delta_p1', '--vol', 'rms:1', '--out', str(tmp_path / 'b')]) == EXIT_OK
        a = (tmp_path / 'a' / 'mean_curve.csv').read_bytes()
        b = (tmp_path / 'b' / 'mean_curve.csv').read_bytes()
        assert a == b

    def test_config_file(self, tmp_path):
        config = tmp_path / 'run.json'
        config.write_text(json.dumps({'input': [index_path], 't1': 5, 't2': 50, 'tmax': 30, 'observable': 'f'}))
        out = tmp_path / 'out'
        assert main(['analyze', '--config', str(config), '--observable', 'h', '--out', str(out), '-q']) == EXIT_OK
        assert read_json(out / 'analysis.json')['observable'] == 'h'
        assert read_json(out / 'run_config.json')['tmax'] == 30


class Test_landscape:

    def test_rerun_identical(self, tmp_path, price_folder):
        args = ['landscape', '--input', str(price_folder), '--grid', '2:6:2,40:60:10', '--tmax', '50',
                '--jobs', '1', '-q']
        assert main(args + ['--out', str(tmp_path / 'a')]) == EXIT_OK
        assert main(args + ['--out', str(tmp_path / 'b')]) == EXIT_OK
        a = (tmp_path / 'a' / 'landscape.csv').read_bytes()
        assert a == (tmp_path / 'b' / 'landscape.csv').read_bytes()
        land = pd.read_csv(tmp_path / 'a' / 'landscape.csv')
        assert land.columns.tolist() == ['T1', 'T2', 'ap0']
        assert len(land) == 9
        summary = read_json(tmp_path / 'a' / 'landscape.json')
        assert summary['n_cells'] == 9
        assert summary['amplitude'] == 'ap0'


class Test_simulate:

    def test_simulate_and_analyze(self, tmp_path):
        out = tmp_path / 'out'
        args = ['simulate', '--samples', '2', '--agents', '100', '--horizon', '5', '--p', '0.05', '--steps', '400',
                '--discard', '100', '--seed', '1', '--jobs', '1', '--analyze', '--tmax', '50',
                '--out', str(out), '-q']
        assert main(args) == EXIT_OK
        series = pd.read_csv(out / 'series' / 'sample_000.csv')
        assert series.columns.tolist() == ['index', 'value']
        assert len(series) == 300
        assert (out / 'series' / 'sample_001.csv').exists()
        manifest = read_json(out / 'manifest.json')
        assert manifest['n_samples'] == 2
        assert manifest['base_seed'] == 1
        assert len(set(manifest['seeds'])) == 2
        summary = read_json(out / 'analysis' / 'analysis.json')
        assert (summary['T1'], summary['T2']) == (3, 150)
        assert (out / 'analysis' / 'ttest.csv').exists()

    def test_bad_parameters(self, tmp_path):
        args = ['simulate', '--steps', '100', '--discard', '200', '--out', str(tmp_path / 'out'), '-q']
        assert main(args) == EXIT_CONFIG


class Test_shuffle_test:

    def test_report(self, tmp_path, price_folder):
        out = tmp_path / 'out'
        args = ['shuffle-test', '--input', str(price_folder), '--t1', '5', '--t2', '50', '--tmax', '30',
                '--shuffles', '2', '--seed', '4', '--jobs', '1', '--out', str(out), '-q']
        assert main(args) == EXIT_OK
        null = pd.read_csv(out / 'null_curves.csv')
        assert null.columns.tolist() == ['t', 'shuffle_000', 'shuffle_001']
        report = read_json(out / 'null_report.json')
        assert report['n_shuffles'] == 2
        assert 0 <= report['significant_fraction'] <= 1


class Test_errors:

    @pytest.mark.parametrize('args', [
        ['analyze', '--input', index_path, '--observable', 'foo'],
        ['analyze', '--input', index_path, '--t1', '10'],
        ['analyze', '--input', index_path, '--t1', '10', '--t2', '5'],
        ['analyze', '--input', index_path, '--vol', 'rms:0'],
        ['analyze', '--input', index_path, '--alpha', '2'],
        ['landscape', '--input', index_path, '--grid', '1:44'],
        ['analyze']])
    def test_config_errors(self, tmp_path, args):
        assert main(args + ['--out', str(tmp_path / 'out'), '-q']) == EXIT_CONFIG

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / 'run.json'
        config.write_text(json.dumps({'input': [index_path], 'windows': 5}))
        assert main(['analyze', '--config', str(config), '--out', str(tmp_path / 'out'), '-q']) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        args = ['analyze', '--config', str(tmp_path / 'none.json'), '--out', str(tmp_path / 'out'), '-q']
        assert main(args) == EXIT_CONFIG

    @pytest.mark.parametrize('args', [
        ['analyze', '--input', 'no_such_file.csv'],
        ['analyze', '--input', yahoo_path, '--format', 'yahoo'],
        ['analyze', '--input', index_path, '--format', 'yahoo']])
    def test_input_errors(self, tmp_path, args):
        assert main(args + ['--out', str(tmp_path / 'out'), '-q']) == EXIT_INPUT

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(['--version'])
        assert e.value.code == 0
        assert 'nlvolret' in capsys.readouterr().out


class Test_config:

    def test_defaults(self):
        config = RunConfig.build({'command': 'analyze', 'input': index_path})
        assert config.input == [index_path]
        assert (config.pair().T1, config.pair().T2) == (24, 205)
        assert config.seed == 0

    def test_default_grid(self):
        config = RunConfig.build({'command': 'landscape', 'input': [index_path]})
        assert len(config.pairs()) == 1848

    def test_grid_respects_rms_window(self):
        config = RunConfig.build({'command': 'landscape', 'input': [index_path], 'observable': 'delta_p1',
                                  'vol': 'rms:5'})
        assert min(p.T1 for p in config.pairs()) == 5

    def test_sim_config(self):
        sim = RunConfig.build({'command': 'simulate', 'c': -0.0125, 'seed': 3}).sim_config()
        assert sim.c == -0.0125
        assert sim.seed == 3

    def test_errors(self):
        with pytest.raises(ConfigError):
            RunConfig.build({'command': 'analyze', 'input': [index_path], 'tmax': 0})


def tree_bytes(folder):
    return {str(p.relative_to(folder)): p.read_bytes() for p in sorted(folder.rglob('*')) if p.is_file()}


class Test_jobs:

    def test_run_config_without_execution_keys(self, tmp_path):
        out = tmp_path / 'out'
        main(['analyze', '--input', index_path, '--t1', '5', '--t2', '50', '--tmax', '30', '--jobs', '2',
              '--out', str(out), '-q'])
        saved = read_json(out / 'run_config.json')
        assert 'jobs' not in saved
        assert 'out' not in saved
        assert saved['t1'] == 5

    def test_landscape(self, tmp_path, price_folder):
        args = ['landscape', '--input', str(price_folder), '--grid', '2:6:2,40:60:10', '--tmax', '50', '-q']
        assert main(args + ['--jobs', '1', '--out', str(tmp_path / 'a')]) == EXIT_OK
        assert main(args + ['--jobs', '3', '--out', str(tmp_path / 'b')]) == EXIT_OK
        assert tree_bytes(tmp_path / 'a') == tree_bytes(tmp_path / 'b')

    def test_simulate(self, tmp_path):
        args = ['simulate', '--samples', '3', '--agents', '100', '--horizon', '5', '--p', '0.05', '--steps', '400',
                '--discard', '100', '--seed', '2', '--analyze', '--tmax', '50', '-q']
        assert main(args + ['--jobs', '1', '--out', str(tmp_path / 'a')]) == EXIT_OK
        assert main(args + ['--jobs', '3', '--out', str(tmp_path / 'b')]) == EXIT_OK
        a = tree_bytes(tmp_path / 'a')
        assert 'series/sample_002.csv' in a
        assert a == tree_bytes(tmp_path / 'b')

    def test_shuffle_test(self, tmp_path, price_folder):
        args = ['shuffle-test', '--input', str(price_folder), '--t1', '5', '--t2', '50', '--tmax', '30',
                '--shuffles', '3', '--seed', '4', '-q']
        assert main(args + ['--jobs', '1', '--out', str(tmp_path / 'a')]) == EXIT_OK
        assert main(args + ['--jobs', '3', '--out', str(tmp_path / 'b')]) == EXIT_OK
        assert tree_bytes(tmp_path / 'a') == tree_bytes(tmp_path / 'b')
