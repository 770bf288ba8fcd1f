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

"""
Volatility-return observables nonlocal in time.

Day indices t' are 1-based as in the formulas: r(t') is returns.values[t'-1].
All series are stored aligned with the return series, NaN where undefined.
"""

from dataclasses import dataclass
from enum import Enum
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .metadata import MetaData
from .timeseries import (FLOAT_FORMAT, ReturnSeries, VolatilityKind, VolatilitySpec,
                         trailing_mean, volatility)

logger = logging.getLogger(__name__)

DEFAULT_T_MAX = 150
CURVE_COLUMNS = ["t", "value", "n_pos", "n_neg", "p0"]
# tie tolerance of delta v in units of T2 * eps
TIE_ULPS = 8


class Observable(str, Enum):
    DELTA_P = "delta_p"
    DELTA_P1 = "delta_p1"
    DELTA_P2 = "delta_p2"
    F = "f"
    F1 = "f1"
    G = "g"
    H = "h"
    LOCAL_F = "local_f"

    @staticmethod
    def parse(text: Union[str, "Observable"]) -> "Observable":
        if isinstance(text, Observable):
            return text
        try:
            return Observable(str(text).strip().lower())
        except ValueError:
            names = ", ".join(o.name for o in Observable)
            raise ValueError(f"There is no such observable: {text}. May be one of {names}") from None

    @property
    def is_probability(self) -> bool:
        return self in (Observable.DELTA_P, Observable.DELTA_P1, Observable.DELTA_P2)

    @property
    def amplitude_name(self) -> str:
        return "ap0" if self.is_probability or self == Observable.G else "af0"


@dataclass(frozen=True, order=True)
class WindowPair:
    """
    Short window T1 and long window T2 in trading days, 1 <= T1 < T2
    """

    T1: int
    T2: int

    def __post_init__(self):
        if int(self.T1) != self.T1 or int(self.T2) != self.T2:
            raise ValueError(f"window lengths must be integers, got T1={self.T1}, T2={self.T2}")
        if self.T1 < 1 or self.T1 >= self.T2:
            raise ValueError(f"window pair must satisfy 1 <= T1 < T2, got T1={self.T1}, T2={self.T2}")
        object.__setattr__(self, "T1", int(self.T1))
        object.__setattr__(self, "T2", int(self.T2))


def effective_spec(observable: Observable, spec: VolatilitySpec) -> VolatilitySpec:
    """
    Volatility estimator an observable is built on

    DELTA_P1 and F1 use the m-day RMS volatility (m from spec),
    DELTA_P2 the window RMS, the rest use spec as given.
    """

    observable = Observable.parse(observable)
    if observable in (Observable.DELTA_P1, Observable.F1):
        return VolatilitySpec(VolatilityKind.RMS_WINDOW, spec.m)
    if observable == Observable.DELTA_P2:
        return VolatilitySpec(VolatilityKind.RMS_CUMULATIVE, spec.m)
    return spec


class DeltaVSeries(object):
    """
    Difference of average volatilities <v>_T1 - <v>_T2, aligned with returns.

    Positive values mark a volatile recent market, negative a stable one.
    """

    def __init__(
        self,
        values: Sequence[float],
        first_valid: int,
        spec: Optional[VolatilitySpec] = None,
        pair: Optional[WindowPair] = None,
    ):
        """
        Parameters
        ----------
        values: Sequence[float]
            values[i] belongs to t' = i + 1, entries before first_valid are ignored
        first_valid: int
            smallest t' where the difference is defined
        spec: VolatilitySpec
            Optional. Estimator the difference was built from.
        pair: WindowPair
            Optional. Windows the difference was built from.
        """

        values = np.array(values, dtype=float)
        if first_valid < 1 or first_valid > len(values):
            raise ValueError(f"first_valid={first_valid} outside 1..{len(values)}")
        values[:first_valid - 1] = np.nan
        values.setflags(write=False)
        self.values = values
        self.first_valid = int(first_valid)
        self.spec = spec
        self.pair = pair

    def at(self, t_prime: int) -> float:
        if t_prime < self.first_valid or t_prime > len(self.values):
            raise ValueError(f"delta v undefined at t'={t_prime}")
        return float(self.values[t_prime - 1])

    @property
    def defined(self) -> np.ndarray:
        return self.values[self.first_valid - 1:]

    def __len__(self) -> int:
        return len(self.values)

    def to_csv(self, filename: Union[Path, str]) -> None:
        """
        Dump as CSV 't_prime,delta_v' for the defined days
        """

        t_prime = np.arange(self.first_valid, len(self.values) + 1)
        pd.DataFrame({"t_prime": t_prime, "delta_v": self.defined}).to_csv(
            filename, index=False, float_format=FLOAT_FORMAT)


class LagCurve(object):
    """
    An observable as a function of lag t = 1..t_max

    table columns for single series curves:
    t, value, n_pos, n_neg, n_zero_dv, n_zero_r, n_valid, p0, defined.
    Averaged curves carry t, value, se, count instead.
    """

    def __init__(self, table: pd.DataFrame, metadata: Optional[Dict] = None):
        if "t" not in table or "value" not in table:
            raise ValueError("LagCurve table needs 't' and 'value' columns")
        self.table = table.reset_index(drop=True)
        self.metadata = MetaData(metadata)

    @property
    def lags(self) -> np.ndarray:
        return self.table["t"].to_numpy()

    @property
    def values(self) -> np.ndarray:
        return self.table["value"].to_numpy(dtype=float)

    @property
    def observable(self) -> Optional[Observable]:
        if "observable" in self.metadata:
            return Observable.parse(self.metadata["observable"])
        return None

    def with_values(self, values: Sequence[float], **metadata) -> "LagCurve":
        """
        Copy of the curve with value column replaced
        """

        table = pd.DataFrame({"t": self.lags, "value": np.asarray(values, dtype=float)})
        return LagCurve(table, self.metadata.copy().add(metadata))

    def __len__(self) -> int:
        return len(self.table)

    def __repr__(self) -> str:
        return f"LagCurve({self.metadata.get('observable')}, {len(self)} lags)"

    def to_csv(self, filename: Union[Path, str], columns: Optional[Sequence[str]] = None) -> None:
        """
        Dump curve as CSV

        Parameters
        ----------
        filename: str
            path for saving
        columns: Sequence[str]
            Optional. By default 't,value,n_pos,n_neg,p0' for single series
            curves and all columns otherwise.
        """

        if columns is None:
            columns = CURVE_COLUMNS if "n_pos" in self.table else list(self.table.columns)
        self.table.loc[:, list(columns)].to_csv(filename, index=False, float_format=FLOAT_FORMAT)

    @staticmethod
    def read_csv(filename: Union[Path, str], metadata: Optional[Dict] = None) -> "LagCurve":
        return LagCurve(pd.read_csv(filename, comment="#"), metadata)


def window_avg_volatility(
    returns: ReturnSeries,
    spec: VolatilitySpec,
    T: int,
    t_prime: int,
) -> float:
    """
    Average volatility over the T days ending at t'

    Parameters
    ----------
    returns: ReturnSeries
        normalized returns
    spec: VolatilitySpec
        ABS: mean of |r| over T days.
        RMS_WINDOW: mean of the m-day RMS volatility over the last T-m+1 days, T >= m.
        RMS_CUMULATIVE: sqrt of mean of r^2 over T days.
    T: int
        window length
    t_prime: int
        1-based day, T <= t' <= n

    Return
    ------
    float
    """

    r = returns.values
    if T < 1 or t_prime < T or t_prime > len(r):
        raise ValueError(f"window T={T} ending at t'={t_prime} is out of range 1..{len(r)}")

    window = r[t_prime - T:t_prime]
    if spec.kind == VolatilityKind.ABS:
        return float(np.abs(window).sum() / T)
    if spec.kind == VolatilityKind.RMS_CUMULATIVE:
        return float(np.sqrt((window * window).sum() / T))

    m = spec.m
    if T < m:
        raise ValueError(f"window T={T} is shorter than volatility window m={m}")
    v1 = [np.sqrt((r[s - m:s] * r[s - m:s]).sum() / m) for s in range(t_prime - T + m, t_prime + 1)]
    return float(np.sum(v1) / (T - m + 1))


def window_average_series(returns: ReturnSeries, spec: VolatilitySpec, T: int) -> np.ndarray:
    """
    <v(t')>_T for every t', NaN for t' < T
    """

    r = returns.values
    if spec.kind == VolatilityKind.ABS:
        return trailing_mean(np.abs(r), T)
    if spec.kind == VolatilityKind.RMS_CUMULATIVE:
        return np.sqrt(trailing_mean(r * r, T))

    m = spec.m
    if T < m:
        raise ValueError(f"window T={T} is shorter than volatility window m={m}")
    v1 = volatility(returns, spec).values
    out = np.full(len(r), np.nan)
    out[m - 1:] = trailing_mean(v1[m - 1:], T - m + 1)
    return out


def volatility_difference(short: np.ndarray, long: np.ndarray, T2: int) -> np.ndarray:
    """
    short - long, with differences inside the rounding of the window sums set to 0

    A window sum of T values carries a relative error below T * eps, so
    equal averages computed over windows of different length may differ
    in the last bits. Those days are ties and enter neither condition.
    """

    d = short - long
    with np.errstate(invalid="ignore"):
        tie = np.abs(d) <= TIE_ULPS * T2 * np.finfo(float).eps * (np.abs(short) + np.abs(long))
    return np.where(tie, 0.0, d)


def delta_v_series(returns: ReturnSeries, spec: VolatilitySpec, pair: WindowPair) -> DeltaVSeries:
    """
    Difference of the average volatilities in the short and long window

    Days whose two averages agree up to rounding get delta v = 0 exactly,
    see volatility_difference.

    Parameters
    ----------
    returns: ReturnSeries
        normalized returns, longer than T2
    spec: VolatilitySpec
        volatility estimator
    pair: WindowPair
        short window T1 and long window T2

    Return
    ------
    DeltaVSeries
        defined from t' = T2
    """

    if not isinstance(pair, WindowPair):
        pair = WindowPair(*pair)
    if returns.n <= pair.T2:
        raise ValueError(f"series of length {returns.n} is too short for T2={pair.T2}")

    short = window_average_series(returns, spec, pair.T1)
    long = window_average_series(returns, spec, pair.T2)
    return DeltaVSeries(volatility_difference(short, long, pair.T2), first_valid=pair.T2, spec=spec, pair=pair)


class _LagMatrix(object):
    """
    Future returns r(t'+t) for t' >= first_valid and t = 1..t_max as
    float indicator matrices, so lag sums become matrix-vector products.
    Row k is t' = first_valid + k, column j is t = j + 1.
    """

    def __init__(self, r: np.ndarray, first_valid: int, t_max: int):
        n = len(r)
        rows = n - first_valid
        if t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {t_max}")
        if rows < t_max:
            raise ValueError(f"series of length {n} has no valid t' at lag {t_max} "
                             f"(first valid day {first_valid})")

        padded = np.concatenate([r, np.full(t_max, np.nan)])
        future = sliding_window_view(padded[first_valid:], t_max)[:rows]

        valid = ~np.isnan(future)
        self.first_valid = first_valid
        self.t_max = t_max
        self.valid = valid.astype(float)
        self.future = np.where(valid, future, 0.0)
        self.positive = (self.future > 0).astype(float)
        self.zero = (valid & (self.future == 0)).astype(float)
        self.sign = np.sign(self.future)
        self.nonzero = (self.sign != 0).astype(float)

    def rows(self, x: np.ndarray) -> np.ndarray:
        """
        Part of an aligned series belonging to the matrix rows
        """

        return x[self.first_valid - 1:self.first_valid - 1 + len(self.valid)]


def _counts(d: np.ndarray, lm: _LagMatrix) -> Dict[str, np.ndarray]:
    sd = np.sign(d)
    pos = (sd > 0).astype(float)
    neg = (sd < 0).astype(float)
    zero = (sd == 0).astype(float)

    k_pos = pos @ lm.positive
    k_neg = neg @ lm.positive
    n_pos = pos @ lm.valid
    n_neg = neg @ lm.valid
    with np.errstate(invalid="ignore", divide="ignore"):
        p_volatile = np.where(n_pos > 0, k_pos / n_pos, np.nan)
        p_stable = np.where(n_neg > 0, k_neg / n_neg, np.nan)
        p0 = np.where(n_pos + n_neg > 0, (k_pos + k_neg) / (n_pos + n_neg), np.nan)

    return {
        "k_pos": k_pos, "k_neg": k_neg, "n_pos": n_pos, "n_neg": n_neg,
        "n_zero_dv": zero @ lm.valid,
        "n_zero_r": np.ones(len(d)) @ lm.zero,
        "n_valid": np.ones(len(d)) @ lm.valid,
        "p_volatile": p_volatile, "p_stable": p_stable, "p0": p0,
    }


def _observable_values(observable: Observable, d: np.ndarray, lm: _LagMatrix,
                       counts: Dict[str, np.ndarray]) -> np.ndarray:
    n_valid = counts["n_valid"]
    if observable.is_probability:
        return counts["p_volatile"] - counts["p_stable"]

    with np.errstate(invalid="ignore", divide="ignore"):
        if observable in (Observable.F, Observable.F1, Observable.LOCAL_F):
            return (d @ lm.future) / n_valid
        sd = np.sign(d)
        if observable == Observable.H:
            return (sd @ lm.future) / n_valid
        # G: terms with a zero sign on either side are left out
        both = (sd != 0).astype(float) @ lm.nonzero
        return np.where(both > 0, (sd @ lm.sign) / both, np.nan)


def _local_series(returns: ReturnSeries, spec: VolatilitySpec) -> DeltaVSeries:
    if spec.kind == VolatilityKind.RMS_CUMULATIVE:
        spec = VolatilitySpec(VolatilityKind.ABS)
    v = volatility(returns, spec)
    return DeltaVSeries(v.values, first_valid=v.first_valid, spec=spec)


def curve_from_delta_v(
    returns: ReturnSeries,
    dv: DeltaVSeries,
    observable: Union[Observable, str] = Observable.DELTA_P,
    t_max: int = DEFAULT_T_MAX,
) -> LagCurve:
    """
    Observable curve for a given volatility difference series

    Valid days at lag t are first_valid <= t' <= n - t. Days with
    delta v = 0 belong to neither condition, returns equal to 0 are not
    counted as positive; both are reported per lag.

    Parameters
    ----------
    returns: ReturnSeries
        normalized returns
    dv: DeltaVSeries
        condition series aligned with returns
    observable: Observable
        Optional. Default DELTA_P.
    t_max: int
        Optional. Default 150. Largest lag.

    Return
    ------
    LagCurve
    """

    observable = Observable.parse(observable)
    if len(dv) != returns.n:
        raise ValueError(f"delta v series of length {len(dv)} does not match returns of length {returns.n}")

    lm = _LagMatrix(returns.values, dv.first_valid, t_max)
    d = lm.rows(dv.values)
    counts = _counts(d, lm)
    values = _observable_values(observable, d, lm, counts)

    table = pd.DataFrame({
        "t": np.arange(1, t_max + 1),
        "value": values,
        "n_pos": counts["n_pos"].astype(int),
        "n_neg": counts["n_neg"].astype(int),
        "n_zero_dv": counts["n_zero_dv"].astype(int),
        "n_zero_r": counts["n_zero_r"].astype(int),
        "n_valid": counts["n_valid"].astype(int),
        "p0": counts["p0"],
        "defined": ~np.isnan(values),
    })

    metadata = MetaData({"name": returns.name, "observable": observable.value, "t_max": t_max})
    if dv.pair is not None:
        metadata.add({"T1": dv.pair.T1, "T2": dv.pair.T2})
    if dv.spec is not None:
        metadata.add({"volatility": str(dv.spec)})
    return LagCurve(table, metadata)


def lag_curve(
    returns: ReturnSeries,
    spec: VolatilitySpec,
    pair: WindowPair,
    observable: Union[Observable, str] = Observable.DELTA_P,
    t_max: int = DEFAULT_T_MAX,
) -> LagCurve:
    """
    Observable as a function of lag for one series and one window pair

    Parameters
    ----------
    returns: ReturnSeries
        normalized returns
    spec: VolatilitySpec
        volatility estimator. DELTA_P1 and F1 always use the m-day RMS
        volatility, DELTA_P2 the window RMS volatility.
    pair: WindowPair
        short and long window. Ignored for LOCAL_F.
    observable: {DELTA_P, DELTA_P1, DELTA_P2, F, F1, G, H, LOCAL_F}
        Optional. Default DELTA_P.
        DELTA_P - P+ on volatile days minus P+ on stable days.
        F - mean of delta v(t') * r(t'+t).
        G - mean of sgn(delta v(t')) * sgn(r(t'+t)), zero signs left out.
        H - mean of sgn(delta v(t')) * r(t'+t).
        LOCAL_F - mean of v(t') * r(t'+t), local baseline.
    t_max: int
        Optional. Default 150. Largest lag.

    Return
    ------
    LagCurve
    """

    observable = Observable.parse(observable)
    spec = effective_spec(observable, spec)
    if observable == Observable.LOCAL_F:
        dv = _local_series(returns, spec)
    else:
        dv = delta_v_series(returns, spec, pair)
    return curve_from_delta_v(returns, dv, observable, t_max)


@dataclass
class ConditionalProbabilities:
    """
    Conditional and unconditional probabilities of a positive return at one lag
    """

    p_plus_given_volatile: float
    p_plus_given_stable: float
    p0: float
    n_pos: int
    n_neg: int
    n_zero_dv: int
    n_zero_r: int
    k_pos: int
    k_neg: int

    @property
    def volatile_defined(self) -> bool:
        return self.n_pos > 0

    @property
    def stable_defined(self) -> bool:
        return self.n_neg > 0

    @property
    def delta_p(self) -> float:
        return self.p_plus_given_volatile - self.p_plus_given_stable


def conditional_probabilities(returns: ReturnSeries, dv: DeltaVSeries, t: int) -> ConditionalProbabilities:
    """
    P+(t) on volatile days, P+(t) on stable days and P0(t)

    P0 is counted over the days entering either condition, so
    n_pos * P+volatile + n_neg * P+stable = (n_pos + n_neg) * P0.
    An empty condition gives NaN for its branch and a False *_defined flag.

    Parameters
    ----------
    returns: ReturnSeries
        normalized returns
    dv: DeltaVSeries
        condition series aligned with returns
    t: int
        lag, >= 1

    Return
    ------
    ConditionalProbabilities
    """

    if t < 1:
        raise ValueError(f"lag must be >= 1, got {t}")
    lm = _LagMatrix(returns.values, dv.first_valid, t)
    counts = _counts(lm.rows(dv.values), lm)
    j = t - 1

    res = ConditionalProbabilities(
        p_plus_given_volatile=float(counts["p_volatile"][j]),
        p_plus_given_stable=float(counts["p_stable"][j]),
        p0=float(counts["p0"][j]),
        n_pos=int(counts["n_pos"][j]),
        n_neg=int(counts["n_neg"][j]),
        n_zero_dv=int(counts["n_zero_dv"][j]),
        n_zero_r=int(counts["n_zero_r"][j]),
        k_pos=int(counts["k_pos"][j]),
        k_neg=int(counts["k_neg"][j]),
    )
    if not (res.volatile_defined and res.stable_defined):
        logger.debug("empty condition at lag %d: n_pos=%d n_neg=%d", t, res.n_pos, res.n_neg)
    return res


def unit_grid_values(
    returns: ReturnSeries,
    spec: VolatilitySpec,
    pairs: Sequence[WindowPair],
    observable: Union[Observable, str] = Observable.DELTA_P,
    t_max: int = DEFAULT_T_MAX,
) -> np.ndarray:
    """
    Curve values of one series for many window pairs

    Window averages are computed once per window length and lag matrices
    once per T2, so a full grid costs little more than its T2 count.

    Return
    ------
    np.ndarray
        shape (len(pairs), t_max), row i belongs to pairs[i]
    """

    observable = Observable.parse(observable)
    spec = effective_spec(observable, spec)
    out = np.full((len(pairs), t_max), np.nan)

    if observable == Observable.LOCAL_F:
        curve = lag_curve(returns, spec, pairs[0] if pairs else None, observable, t_max)
        out[:] = curve.values
        return out

    averages: Dict[int, np.ndarray] = {}

    def average(T: int) -> np.ndarray:
        if T not in averages:
            averages[T] = window_average_series(returns, spec, T)
        return averages[T]

    by_t2: Dict[int, List[int]] = {}
    for i, pair in enumerate(pairs):
        by_t2.setdefault(pair.T2, []).append(i)

    for T2 in sorted(by_t2):
        if returns.n <= T2:
            raise ValueError(f"series {returns.name!r} of length {returns.n} is too short for T2={T2}")
        lm = _LagMatrix(returns.values, T2, t_max)
        for i in by_t2[T2]:
            d = lm.rows(volatility_difference(average(pairs[i].T1), average(T2), T2))
            out[i] = _observable_values(observable, d, lm, _counts(d, lm))
    return out


def unit_curves(
    units: Iterable[ReturnSeries],
    spec: VolatilitySpec,
    pair: WindowPair,
    observable: Union[Observable, str] = Observable.DELTA_P,
    t_max: int = DEFAULT_T_MAX,
) -> List[LagCurve]:
    """
    One curve per series for a single window pair
    """

    return [lag_curve(unit, spec, pair, observable, t_max) for unit in units]
