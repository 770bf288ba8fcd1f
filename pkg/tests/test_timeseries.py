from nlvolret.timeseries import (PriceFormat, PriceSeries, RawReturnSeries, ReturnSeries, VolatilityKind,
                                 VolatilitySpec, denormalize, load_price_series, log_returns, normalize,
                                 returns_from_prices, shuffle, trailing_mean, volatility)
import io
import math
import os

import numpy as np
import pandas as pd
import pytest

root = os.path.join(os.path.dirname(__file__), '..')
index_path = os.path.join(root, 'tests', 'sample_index.csv')
yahoo_path = os.path.join(root, 'tests', 'sample_yahoo.csv')


def prices_from_closes(closes):
    dates = pd.date_range('2020-01-01', periods=len(closes), freq='D')
    return PriceSeries(pd.DataFrame({'date': dates, 'close': closes}), metadata={'name': 'test'})


class Test_load_price_series:

    def test_two_column(self):
        prices = load_price_series(io.BytesIO(b'2020-01-02,100\n2020-01-03,105'))
        assert list(prices.closes) == [100, 105]

    def test_header_and_sorting(self):
        data = b'date,close\n2020-01-03,105\n2020-01-02,100\n'
        prices = load_price_series(io.BytesIO(data))
        assert list(prices.closes) == [100, 105]
        assert prices.dates.iloc[0] == pd.Timestamp('2020-01-02')

    def test_sample_file(self):
        prices = load_price_series(index_path)
        assert len(prices) == 400
        assert prices.metadata['name'] == 'sample_index'
        assert (prices.closes > 0).all()

    def test_yahoo_file(self):
        prices = load_price_series(yahoo_path, PriceFormat.YAHOO_CSV)
        assert len(prices) == 10
        assert prices.closes[0] == 100.5
        assert prices.metadata['price_format'] == 'yahoo'

    @pytest.mark.parametrize('data, fmt, message', [
        (b'Date,Open,High,Low,Close,Adj Close,Volume\n2020-01-02,1,1,1,0,1,10\n2020-01-03,1,1,1,2,1,10',
         'yahoo', 'non-positive price'),
        (b'2020-01-02,100\n2020-01-02,101', 'two_column', 'duplicate date 2020-01-02'),
        (b'2020-01-02,100\n2020-01-03,abc', 'two_column', 'non-numeric close'),
        (b'2020-01-02,100\n2020-13-03,101', 'two_column', 'unreadable date'),
        (b'2020-01-02,100', 'two_column', 'at least 2 rows'),
        (b'2020-01-02,100\n2020-01-03,-1', 'two_column', 'row 2'),
        (b'Date,Open\n2020-01-02,1\n2020-01-03,1', 'yahoo', 'Close'),
        (b'\xff\xfe2020', 'two_column', 'UTF-8'),
    ])
    def test_errors(self, data, fmt, message):
        with pytest.raises(ValueError, match=message):
            load_price_series(io.BytesIO(data), fmt)


class Test_returns:

    @pytest.mark.parametrize('closes, result', [
        ([100, 100], [0.0]),
        ([100, 100 * math.e], [1.0]),
        ([100, 105], [0.04879016416943205])])
    def test_log_returns(self, closes, result):
        raw = log_returns(prices_from_closes(closes))
        assert raw.values == pytest.approx(result, abs=1e-12)

    def test_normalize(self):
        res = normalize(RawReturnSeries([1, 2, 3]))
        assert res.values == pytest.approx([-1.224744871391589, 0, 1.224744871391589])
        assert res.sigma_raw == pytest.approx(math.sqrt(2 / 3))
        assert res.mean_raw == 2

    @pytest.mark.parametrize('a', [0.5, 3.0, 1e-4])
    def test_normalize_two_points(self, a):
        assert normalize(RawReturnSeries([a, -a])).values == pytest.approx([1, -1])

    def test_normalize_invariants(self):
        res = returns_from_prices(load_price_series(index_path))
        assert res.n == 399
        assert abs(res.values.mean()) < 1e-10
        assert abs(res.values.std() - 1) < 1e-10

    @pytest.mark.parametrize('raw', [[5, 5, 5], [1.0]])
    def test_normalize_errors(self, raw):
        with pytest.raises(ValueError):
            normalize(RawReturnSeries(raw))

    def test_degenerate_message(self):
        with pytest.raises(ValueError, match='degenerate series'):
            normalize(RawReturnSeries([5, 5, 5]))

    def test_denormalize(self):
        raw = RawReturnSeries([0.01, -0.02, 0.005, 0.03])
        back = denormalize(normalize(raw))
        assert back.values == pytest.approx(raw.values, rel=1e-12)

    def test_values_read_only(self):
        res = normalize(RawReturnSeries([1, 2, 3]))
        with pytest.raises(ValueError):
            res.values[0] = 10


class Test_volatility:

    @pytest.mark.parametrize('text, kind, m', [
        ('abs', VolatilityKind.ABS, 5),
        ('rms', VolatilityKind.RMS_WINDOW, 5),
        ('rms:3', VolatilityKind.RMS_WINDOW, 3),
        ('RMSCUM', VolatilityKind.RMS_CUMULATIVE, 5)])
    def test_parse(self, text, kind, m):
        spec = VolatilitySpec.parse(text)
        assert spec.kind == kind
        assert spec.m == m

    @pytest.mark.parametrize('text', ['rms:0', 'foo', 'rms:x'])
    def test_parse_errors(self, text):
        with pytest.raises(ValueError):
            VolatilitySpec.parse(text)

    def test_str_round_trip(self):
        for text in ['abs', 'rms:5', 'rmscum']:
            assert str(VolatilitySpec.parse(text)) == text

    def test_abs(self):
        v = volatility(ReturnSeries([-2, 3]), VolatilitySpec(VolatilityKind.ABS))
        assert list(v.values) == [2, 3]
        assert v.first_valid == 1

    def test_rms_window(self):
        v = volatility(ReturnSeries([3, 4]), VolatilitySpec(VolatilityKind.RMS_WINDOW, 2))
        assert v.first_valid == 2
        assert v.at(2) == pytest.approx(3.5355339059327378)
        assert np.isnan(v.values[0])

    def test_rms_window_too_short(self):
        with pytest.raises(ValueError):
            volatility(ReturnSeries([1, 2, 3]), VolatilitySpec(VolatilityKind.RMS_WINDOW, 5))

    def test_rms_cumulative_rejected(self):
        with pytest.raises(ValueError, match='defined at window level'):
            volatility(ReturnSeries([1, 2, 3]), VolatilitySpec(VolatilityKind.RMS_CUMULATIVE))

    def test_rms_m1_equals_abs(self):
        r = ReturnSeries([0.5, -1.5, 2.0, -0.25])
        v1 = volatility(r, VolatilitySpec(VolatilityKind.RMS_WINDOW, 1))
        v = volatility(r, VolatilitySpec(VolatilityKind.ABS))
        assert np.array_equal(v1.values, v.values)

    def test_abs_sign_flip(self):
        r = np.array([0.5, -1.5, 2.0, -0.25])
        spec = VolatilitySpec(VolatilityKind.ABS)
        assert np.array_equal(volatility(ReturnSeries(r), spec).values, volatility(ReturnSeries(-r), spec).values)

    def test_trailing_mean(self):
        res = trailing_mean(np.array([1.0, 2.0, 3.0, 4.0]), 2)
        assert np.isnan(res[0])
        assert list(res[1:]) == [1.5, 2.5, 3.5]


class Test_shuffle:

    r = ReturnSeries(np.linspace(-2, 2, 50), metadata={'name': 'lin'})

    def test_deterministic(self):
        assert np.array_equal(shuffle(self.r, 5).values, shuffle(self.r, 5).values)

    def test_permutation(self):
        res = shuffle(self.r, 11)
        assert sorted(res.values) == sorted(self.r.values)
        assert not np.array_equal(res.values, self.r.values)

    def test_length_one(self):
        one = ReturnSeries([0.3])
        assert list(shuffle(one, 1).values) == [0.3]

    def test_metadata(self):
        res = shuffle(self.r, 3)
        assert res.metadata['shuffle_seed'] == 3
        assert res.metadata['shuffled'] is True
        assert res.metadata['name'] == 'lin'


class Test_load_and_save:

    def test_csv(self, tmp_path):
        res = returns_from_prices(load_price_series(index_path))
        path = tmp_path / 'series.csv'
        res.to_csv(path)
        res2 = ReturnSeries.read_csv(path)
        assert res2.name == 'series'
        assert res2.values == pytest.approx(res.values, rel=1e-14)
        assert pd.read_csv(path).columns.tolist() == ['index', 'value']

    def test_json(self, tmp_path):
        res = returns_from_prices(load_price_series(index_path))
        path = tmp_path / 'series.json'
        res.to_json(path)
        res2 = ReturnSeries.read_json(path)
        assert res.metadata == res2.metadata
        assert res2.sigma_raw == res.sigma_raw
        assert np.array_equal(res2.values, res.values)
