#    This file is part of nlvolret.
#
#    nlvolret is free software: you can redistribute it and/or modify
#    it under the terms of the GNU General Public License as published by
#    the Free Software Foundation, either version 3 of the License, or
#    (at your option) any later version.
#
#    nlvolret is distributed in the hope that it will be useful,
#    but WITHOUT ANY WARRANTY; without even the implied warranty of
#    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#    GNU General Public License for more details.
#
#    You should have received a copy of the GNU General Public License
#    along with nlvolret.  If not, see <http://www.gnu.org/licenses/>.

from dataclasses import dataclass, field
from functools import partial
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import betainc

from .observables import (DEFAULT_T_MAX, LagCurve, Observable, WindowPair, lag_curve)
from .parallel import parallel_map
from .timeseries import FLOAT_FORMAT, ReturnSeries, VolatilitySpec, shuffle

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.01
DEFAULT_LAG_SPAN = (1, 10)


@dataclass
class TTestResult:
    """
    One-sample two-sided Student's t-test against zero mean
    """

    lag: Optional[int]
    t_stat: float
    p_value: float
    df: int
    mean: float = float("nan")
    count: int = 0
    degenerate: bool = False


def t_sf_two_sided(t: Union[float, np.ndarray], df: Union[int, np.ndarray]) -> np.ndarray:
    """
    Two-sided tail probability P(|T| > |t|) of the Student t distribution

    Uses the regularized incomplete beta function
    I_{df/(df+t^2)}(df/2, 1/2).
    """

    t = np.asarray(t, dtype=float)
    df = np.asarray(df, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = df / (df + t * t)
    return np.clip(betainc(df / 2.0, 0.5, x), 0.0, 1.0)


def t_test_arrays(mean: np.ndarray, sd: np.ndarray, count: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Vectorized t-tests from per lag moments

    Return
    ------
    dict with arrays t_stat, p_value, df, degenerate.
    p_value is NaN where count < 2.
    """

    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    count = np.asarray(count, dtype=float)

    degenerate = sd == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stat = mean / (sd / np.sqrt(count))
        p_value = t_sf_two_sided(t_stat, count - 1)

    # zero variance: certainty when the mean is off zero, nothing to reject otherwise
    t_stat = np.where(degenerate, np.where(mean == 0, 0.0, np.sign(mean) * np.inf), t_stat)
    p_value = np.where(degenerate, np.where(mean == 0, 1.0, 0.0), p_value)
    p_value = np.where(count < 2, np.nan, p_value)
    return {"t_stat": t_stat, "p_value": p_value, "df": count - 1, "degenerate": degenerate}


def t_test_from_moments(mean: float, sd: float, count: int, lag: Optional[int] = None) -> TTestResult:
    """
    t-test from sample mean, sample standard deviation (ddof=1) and count
    """

    if count < 2:
        raise ValueError(f"t-test needs at least 2 values, got {count}")
    res = t_test_arrays(np.array([mean]), np.array([sd]), np.array([count]))
    return TTestResult(
        lag=lag,
        t_stat=float(res["t_stat"][0]),
        p_value=float(res["p_value"][0]),
        df=int(count - 1),
        mean=float(mean),
        count=int(count),
        degenerate=bool(res["degenerate"][0]),
    )


def t_test_per_lag(values_across_units: Sequence[float], lag: Optional[int] = None) -> TTestResult:
    """
    Test whether the values of one lag across stocks or samples differ from zero

    Parameters
    ----------
    values_across_units: Sequence[float]
        one value per unit, NaN values are left out
    lag: int
        Optional. Lag the values belong to, only stored in the result.

    Return
    ------
    TTestResult
        zero-variance samples are flagged degenerate, with p = 0 if the
        mean differs from zero and p = 1 otherwise
    """

    values = np.asarray(values_across_units, dtype=float)
    values = values[~np.isnan(values)]
    if len(values) < 2:
        raise ValueError(f"t-test needs at least 2 values, got {len(values)}")
    return t_test_from_moments(values.mean(), values.std(ddof=1), len(values), lag)


def stack_curves(curves: Sequence[LagCurve]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Curves as a (units, lags) array

    Return
    ------
    lags, values
    """

    if len(curves) == 0:
        raise ValueError("no curves given")
    lags = curves[0].lags
    for curve in curves[1:]:
        if len(curve.lags) != len(lags) or not np.array_equal(curve.lags, lags):
            raise ValueError("curves have mismatched lag ranges")
    return lags, np.vstack([curve.values for curve in curves])


def curve_moments(curves: Sequence[LagCurve]) -> pd.DataFrame:
    """
    Per lag mean, sample standard deviation and count of non-NaN values
    """

    lags, values = stack_curves(curves)
    finite = ~np.isnan(values)
    count = finite.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, np.where(finite, values, 0.0).sum(axis=0) / count, np.nan)
        dev = np.where(finite, values - mean, 0.0)
        sd = np.where(count > 1, np.sqrt((dev * dev).sum(axis=0) / (count - 1)), np.nan)
    return pd.DataFrame({"t": lags, "mean": mean, "sd": sd, "count": count})


def t_test_table(curves: Sequence[LagCurve]) -> pd.DataFrame:
    """
    Per lag t-tests across curves of different units

    Return
    ------
    pandas DataFrame
        columns lag, t_stat, p_value, df, degenerate
    """

    moments = curve_moments(curves)
    res = t_test_arrays(moments["mean"], moments["sd"], moments["count"])
    return pd.DataFrame({
        "lag": moments["t"],
        "t_stat": res["t_stat"],
        "p_value": res["p_value"],
        "df": res["df"].astype(int),
        "degenerate": res["degenerate"],
    })


def save_t_test_table(table: pd.DataFrame, filename) -> None:
    """
    Dump t-test report as CSV 'lag,t_stat,p_value,df'
    """

    table.loc[:, ["lag", "t_stat", "p_value", "df"]].to_csv(filename, index=False, float_format=FLOAT_FORMAT)


def _span_mask(lags: np.ndarray, lag_span: Tuple[int, int]) -> np.ndarray:
    lo, hi = lag_span
    mask = (lags >= lo) & (lags <= hi)
    if mask.sum() != hi - lo + 1:
        raise ValueError(f"curves do not cover lags {lo}..{hi}")
    return mask


def confirm_nonzero(
    per_unit_curves: Sequence[LagCurve],
    lag_span: Tuple[int, int] = DEFAULT_LAG_SPAN,
    alpha: float = DEFAULT_ALPHA,
) -> bool:
    """
    Confirm a curve is non-zero: every lag of the span has p < alpha

    Parameters
    ----------
    per_unit_curves: Sequence[LagCurve]
        one curve per stock or sample, same lags
    lag_span: Tuple[int, int]
        Optional. Default (1, 10). Inclusive lag range.
    alpha: float
        Optional. Default 0.01. Significance level.

    Return
    ------
    bool
    """

    table = t_test_table(per_unit_curves)
    mask = _span_mask(table["lag"].to_numpy(), lag_span)
    return bool((table.loc[mask, "p_value"] < alpha).all())


@dataclass
class NullReport:
    """
    Curves recomputed on shuffled returns and their significance
    """

    null_curves: pd.DataFrame
    per_shuffle_fraction: List[float]
    significant_fraction: Optional[float]
    seeds: List[int] = field(default_factory=list)
    metadata: Dict = field(default_factory=dict)

    def summary(self) -> Dict:
        return {
            **self.metadata,
            "n_shuffles": len(self.per_shuffle_fraction),
            "shuffle_seeds": self.seeds,
            "per_shuffle_fraction": self.per_shuffle_fraction,
            "significant_fraction": self.significant_fraction,
        }


def _null_task(
    shuffle_seed: int,
    units: Sequence[ReturnSeries],
    spec: VolatilitySpec,
    pair: WindowPair,
    observable: Observable,
    t_max: int,
) -> List[LagCurve]:
    rng = np.random.default_rng(shuffle_seed)
    return [lag_curve(shuffle(unit, rng), spec, pair, observable, t_max) for unit in units]


def surrogate_null(
    units: Sequence[ReturnSeries],
    spec: VolatilitySpec,
    pair: WindowPair,
    observable: Union[Observable, str] = Observable.DELTA_P,
    n_shuffles: int = 50,
    seed: int = 0,
    t_max: int = DEFAULT_T_MAX,
    alpha: float = DEFAULT_ALPHA,
    lags: Optional[Tuple[int, int]] = None,
    jobs: Optional[int] = 1,
    progress: bool = False,
) -> NullReport:
    """
    Null test with randomly shuffled returns

    Each shuffle permutes every unit with its own seeded generator,
    recomputes the observable and t-tests every lag across units.

    Parameters
    ----------
    units: Sequence[ReturnSeries]
        ensemble of stocks or samples
    spec: VolatilitySpec
        volatility estimator
    pair: WindowPair
        short and long window
    observable: Observable
        Optional. Default DELTA_P.
    n_shuffles: int
        Optional. Default 50. At least 1.
    seed: int
        Optional. Default 0. Base seed, shuffle seeds are spawned from it.
    t_max: int
        Optional. Default 150.
    alpha: float
        Optional. Default 0.01.
    lags: Tuple[int, int]
        Optional. Inclusive lag range for significance fractions, default all lags.
    jobs: int
        Optional. Default 1. Worker processes over shuffles.
    progress: bool
        Optional. Default False.

    Return
    ------
    NullReport
        null_curves has column t and one mean curve per shuffle
    """

    if n_shuffles < 1:
        raise ValueError(f"n_shuffles must be >= 1, got {n_shuffles}")
    observable = Observable.parse(observable)

    children = np.random.SeedSequence(seed).spawn(n_shuffles)
    seeds = [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]

    task = partial(_null_task, units=list(units), spec=spec, pair=pair, observable=observable, t_max=t_max)

    null_curves = pd.DataFrame({"t": np.arange(1, t_max + 1)})
    fractions: List[float] = []
    for k, curves in enumerate(parallel_map(task, seeds, jobs=jobs, desc="shuffles", progress=progress)):
        moments = curve_moments(curves)
        null_curves[f"shuffle_{k:03d}"] = moments["mean"].to_numpy()
        if len(curves) < 2:
            continue
        table = t_test_table(curves)
        mask = np.ones(len(table), dtype=bool) if lags is None else _span_mask(table["lag"].to_numpy(), lags)
        fractions.append(float((table.loc[mask, "p_value"] < alpha).mean()))

    significant = float(np.mean(fractions)) if fractions else None
    if significant is None:
        logger.warning("single unit: shuffled curves computed without t-tests")
    else:
        logger.info("null test: %.4f of lags significant at alpha=%g over %d shuffles", significant, alpha, n_shuffles)

    metadata = {
        "observable": observable.value,
        "volatility": str(spec),
        "T1": pair.T1,
        "T2": pair.T2,
        "seed": seed,
        "alpha": alpha,
        "n_units": len(units),
        "lags": list(lags) if lags is not None else [1, t_max],
    }
    return NullReport(null_curves, fractions, significant, seeds, metadata)
