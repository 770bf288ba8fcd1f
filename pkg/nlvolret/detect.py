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

from dataclasses import asdict, dataclass
from functools import partial
import json
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .metadata import MetaData
from .observables import (DEFAULT_T_MAX, LagCurve, Observable, WindowPair,
                          effective_spec, unit_grid_values)
from .parallel import parallel_map
from .stats import DEFAULT_ALPHA, DEFAULT_LAG_SPAN, curve_moments, t_test_arrays
from .timeseries import FLOAT_FORMAT, ReturnSeries, VolatilityKind, VolatilitySpec

logger = logging.getLogger(__name__)

DEFAULT_TAU = 44
MIN_RUN = 10
DEFAULT_T1_RANGE = (1, 44, 1)
DEFAULT_T2_RANGE = (45, 250, 5)

CurveLike = Union[LagCurve, Sequence[float], np.ndarray]


def _as_values(curve: CurveLike) -> np.ndarray:
    if isinstance(curve, LagCurve):
        return curve.values
    return np.asarray(curve, dtype=float)


def smooth3(curve: CurveLike) -> Union[LagCurve, np.ndarray]:
    """
    Centered 3-lag moving average

    At the first and last lag the window shrinks to the 2 available points.

    Parameters
    ----------
    curve: LagCurve or array
        at least 3 lags

    Return
    ------
    LagCurve if a LagCurve was given, np.ndarray otherwise
    """

    v = _as_values(curve)
    if len(v) < 3:
        raise ValueError(f"smoothing needs at least 3 lags, got {len(v)}")

    out = np.empty(len(v))
    out[1:-1] = (v[:-2] + v[1:-1] + v[2:]) / 3
    out[0] = (v[0] + v[1]) / 2
    out[-1] = (v[-2] + v[-1]) / 2

    if isinstance(curve, LagCurve):
        return curve.with_values(out, smoothed=True)
    return out


@dataclass
class DetectionResult:
    """
    Outcome of the non-zero criteria for one smoothed curve

    t1 - first lag whose sign differs from the sign at lag 1
    ap1, ap2 - mean absolute values over the first part (1..t1-1)
    and the second part (t1..t1+tau-1)
    t0 - length of the initial run beyond ap2
    ap0 - mean over lags 1..t0 if both conditions hold, 0 otherwise
    """

    t1: int
    ap1: float
    ap2: float
    t0: int
    ap0: float
    passed_i: bool
    passed_ii: bool

    @property
    def accepted(self) -> bool:
        return self.ap0 != 0

    @staticmethod
    def rejected() -> "DetectionResult":
        return DetectionResult(t1=0, ap1=float("nan"), ap2=float("nan"), t0=0, ap0=0.0,
                               passed_i=False, passed_ii=False)


def classify(smoothed: CurveLike, tau: int = DEFAULT_TAU) -> DetectionResult:
    """
    Decide whether a smoothed curve differs from zero

    The sign s of lag 1 sets the direction, so negative curves are
    tested as mirrored positive ones. NaN lags never raise, they fail
    every comparison.

    t0 is the length of the leading run with s * value > ap2 and is
    searched within the first part only, lags 1..t1-1. A curve that
    stays above ap2 past t1 still gets t0 = t1 - 1.

    Parameters
    ----------
    smoothed: LagCurve or array
        smoothed curve, see smooth3
    tau: int
        Optional. Default 44. Length of the second part.

    Return
    ------
    DetectionResult
        curves not longer than tau are rejected
    """

    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")

    v = _as_values(smoothed)
    L = len(v)
    if L <= tau:
        logger.debug("curve of %d lags is too short for tau=%d", L, tau)
        return DetectionResult.rejected()

    signs = np.sign(v)
    s = signs[0]
    t1_max = L - tau + 1
    changes = np.flatnonzero(signs[1:] != s)
    t1 = min(int(changes[0]) + 2, t1_max) if len(changes) else t1_max

    first = v[:t1 - 1]
    second = v[t1 - 1:t1 - 1 + tau]
    ap1 = float(np.abs(first).mean())
    ap2 = float(np.abs(second).mean())

    beyond = s * first > ap2
    t0 = int(np.argmin(beyond)) if not beyond.all() else len(first)

    passed_i = t0 > MIN_RUN
    passed_ii = bool((np.abs(second) < ap1).all())
    ap0 = float(v[:t0].mean()) if passed_i and passed_ii else 0.0
    if np.isnan(ap0):
        ap0 = 0.0

    return DetectionResult(t1=t1, ap1=ap1, ap2=ap2, t0=t0, ap0=ap0,
                           passed_i=bool(passed_i), passed_ii=passed_ii)


class Landscape(object):
    """
    Amplitude of a non-zero curve over a grid of window pairs

    table columns: T1, T2, ap0 (after both passes), ap0_pass1, t0, t1,
    ap1, ap2, passed_i, passed_ii and, after a confirmed scan, confirmed.
    """

    def __init__(
        self,
        table: pd.DataFrame,
        ap0_bar: float,
        metadata: Optional[Dict] = None,
    ):
        if not {"T1", "T2", "ap0"} <= set(table.columns):
            raise ValueError("Landscape table needs 'T1', 'T2' and 'ap0' columns")
        self.table = table.sort_values(["T1", "T2"]).reset_index(drop=True)
        self.ap0_bar = float(ap0_bar)
        self.metadata = MetaData(metadata)

    @property
    def observable(self) -> Optional[Observable]:
        if "observable" in self.metadata:
            return Observable.parse(self.metadata["observable"])
        return None

    @property
    def grid(self) -> Dict[WindowPair, float]:
        return {WindowPair(int(a), int(b)): float(x)
                for a, b, x in zip(self.table["T1"], self.table["T2"], self.table["ap0"])}

    def __getitem__(self, pair: WindowPair) -> float:
        row = self.table[(self.table["T1"] == pair.T1) & (self.table["T2"] == pair.T2)]
        if row.empty:
            raise KeyError(pair)
        return float(row["ap0"].iloc[0])

    def __len__(self) -> int:
        return len(self.table)

    @property
    def effective(self) -> pd.DataFrame:
        return self.table[self.table["ap0"] != 0]

    @property
    def effective_region(self) -> List[WindowPair]:
        eff = self.effective
        return [WindowPair(int(a), int(b)) for a, b in zip(eff["T1"], eff["T2"])]

    @property
    def max_ap0(self) -> float:
        """
        Signed amplitude with the largest magnitude, 0 for an empty landscape
        """

        eff = self.effective
        if eff.empty:
            return 0.0
        return float(eff["ap0"].iloc[int(np.argmax(np.abs(eff["ap0"].to_numpy())))])

    @property
    def argmax(self) -> Optional[WindowPair]:
        eff = self.effective
        if eff.empty:
            return None
        row = eff.iloc[int(np.argmax(np.abs(eff["ap0"].to_numpy())))]
        return WindowPair(int(row["T1"]), int(row["T2"]))

    def summary(self) -> Dict:
        """
        Landscape in a few numbers

        Return
        ------
        dict
            observable, amplitude name, ap0_bar, max_ap0, argmax,
            effective_region, effective T1 and T2 ranges, cell counts and
            confirmed cells if the scan confirmed them
        """

        eff = self.effective
        argmax = self.argmax
        summary = {
            "observable": self.metadata.get("observable"),
            "amplitude": self.observable.amplitude_name if self.observable else "ap0",
            "ap0_bar": self.ap0_bar,
            "max_ap0": self.max_ap0,
            "argmax": {"T1": argmax.T1, "T2": argmax.T2} if argmax else None,
            "effective_region": [{"T1": p.T1, "T2": p.T2} for p in self.effective_region],
            "effective_T1": [int(eff["T1"].min()), int(eff["T1"].max())] if not eff.empty else None,
            "effective_T2": [int(eff["T2"].min()), int(eff["T2"].max())] if not eff.empty else None,
            "n_cells": len(self.table),
            "n_pass1": int((self.table["ap0_pass1"] != 0).sum()) if "ap0_pass1" in self.table else None,
            "n_effective": len(eff),
        }
        if "confirmed" in self.table:
            conf = self.table[self.table["confirmed"].astype(bool)]
            summary["confirmed"] = [{"T1": int(a), "T2": int(b)} for a, b in zip(conf["T1"], conf["T2"])]
        for key, value in self.metadata.items():
            summary.setdefault(key, value)
        return summary

    def to_csv(self, filename: Union[Path, str]) -> None:
        """
        Dump as CSV 'T1,T2,ap0', zero cells included
        """

        self.table.loc[:, ["T1", "T2", "ap0"]].to_csv(filename, index=False, float_format=FLOAT_FORMAT)

    def to_json(self, filename: Union[Path, str]) -> None:
        """
        Dump summary as JSON
        """

        with open(filename, "w") as f:
            json.dump(self.summary(), f, indent=2)

    @staticmethod
    def read_csv(filename: Union[Path, str], metadata: Optional[Dict] = None) -> "Landscape":
        """
        Read a 'T1,T2,ap0' dump, ap0_bar is not stored and is set to NaN
        """

        return Landscape(pd.read_csv(filename), float("nan"), metadata)


def landscape_from_results(
    results: Mapping[WindowPair, DetectionResult],
    metadata: Optional[Dict] = None,
) -> Landscape:
    """
    Apply the relative magnitude condition to classified cells

    Pass one collects the non-zero amplitudes and their signed mean
    ap0_bar. Pass two keeps only cells with |ap0| > |ap0_bar|, so a
    single non-zero cell is always removed.

    Parameters
    ----------
    results: Mapping[WindowPair, DetectionResult]
        classification of every grid cell
    metadata: dict
        Optional. Stored in the landscape, 'observable' is used by summaries.

    Return
    ------
    Landscape
    """

    rows = [{"T1": pair.T1, "T2": pair.T2, **asdict(res)} for pair, res in results.items()]
    table = pd.DataFrame(rows, columns=["T1", "T2", "t1", "ap1", "ap2", "t0", "ap0", "passed_i", "passed_ii"])
    table = table.rename(columns={"ap0": "ap0_pass1"})

    nonzero = table["ap0_pass1"][table["ap0_pass1"] != 0]
    ap0_bar = float(nonzero.mean()) if len(nonzero) else 0.0
    table["ap0"] = np.where(np.abs(table["ap0_pass1"]) > abs(ap0_bar), table["ap0_pass1"], 0.0)

    logger.info("landscape: %d cells, %d pass one, %d effective, ap0_bar=%.6g",
                len(table), len(nonzero), int((table["ap0"] != 0).sum()), ap0_bar)
    return Landscape(table, ap0_bar, metadata)


def landscape_scan(
    curves: Mapping[WindowPair, CurveLike],
    tau: int = DEFAULT_TAU,
    smooth: bool = True,
    metadata: Optional[Dict] = None,
) -> Landscape:
    """
    Two pass landscape over window pairs

    Parameters
    ----------
    curves: Mapping[WindowPair, LagCurve]
        one (averaged) curve per grid cell
    tau: int
        Optional. Default 44.
    smooth: bool
        Optional. Default True. Smooth curves with smooth3 before classification.
        Set False if curves are smoothed already.
    metadata: dict
        Optional. By default the observable of the first curve is recorded.

    Return
    ------
    Landscape
    """

    results = {pair: classify(smooth3(curve) if smooth else curve, tau) for pair, curve in curves.items()}
    if metadata is None:
        metadata = {}
        first = next(iter(curves.values()), None)
        if isinstance(first, LagCurve) and first.observable is not None:
            metadata["observable"] = first.observable.value
    return landscape_from_results(results, metadata)


def cross_sectional_average(curves: Sequence[LagCurve]) -> LagCurve:
    """
    Average curve over stocks or samples

    Parameters
    ----------
    curves: Sequence[LagCurve]
        curves with the same lags. NaN values are left out per lag.

    Return
    ------
    LagCurve
        columns t, value, se, count. se is the sample standard deviation
        over sqrt(count), NaN where fewer than 2 values exist.
    """

    moments = curve_moments(curves)
    with np.errstate(invalid="ignore", divide="ignore"):
        se = moments["sd"] / np.sqrt(moments["count"])
    table = pd.DataFrame({
        "t": moments["t"],
        "value": moments["mean"],
        "se": se,
        "count": moments["count"].astype(int),
    })

    metadata = curves[0].metadata.copy()
    metadata.add({"name": MetaData.combine_names(curves), "n_units": len(curves), "averaged": True})
    return LagCurve(table, metadata)


def subsample_average(
    curves: Sequence[LagCurve],
    sizes: Sequence[int],
    seed: Optional[int] = None,
) -> Dict[int, LagCurve]:
    """
    Averages over random subsets of units

    A curve that does not change with the subset size does not depend
    on the particular stocks or samples.

    Parameters
    ----------
    curves: Sequence[LagCurve]
        one curve per unit
    sizes: Sequence[int]
        subset sizes, each 1..len(curves)
    seed: int
        Optional. Default None. Seed of the subset draws.

    Return
    ------
    Dict[int, LagCurve]
        averaged curve per size, metadata 'units' lists the chosen indices
    """

    rng = np.random.default_rng(seed)
    out = {}
    for size in sizes:
        if size < 1 or size > len(curves):
            raise ValueError(f"subset size {size} outside 1..{len(curves)}")
        idx = np.sort(rng.choice(len(curves), size=size, replace=False))
        avg = cross_sectional_average([curves[i] for i in idx])
        avg.metadata.add({"units": idx.tolist(), "subset_seed": seed})
        out[int(size)] = avg
    return out


def parse_grid(text: str) -> Tuple[Tuple[int, int, int], Tuple[int, int, int]]:
    """
    Parse grid text 't1_min:t1_max:step,t2_min:t2_max:step', bounds inclusive

    Return
    ------
    t1_range, t2_range
    """

    try:
        parts = [tuple(int(x) for x in part.split(":")) for part in text.split(",")]
    except ValueError:
        raise ValueError(f"grid must look like '1:44:1,45:250:5', got {text!r}") from None
    if len(parts) != 2 or any(len(p) != 3 for p in parts):
        raise ValueError(f"grid must look like '1:44:1,45:250:5', got {text!r}")
    for lo, hi, step in parts:
        if lo < 1 or hi < lo or step < 1:
            raise ValueError(f"bad grid range {lo}:{hi}:{step}")
    return parts[0], parts[1]


def window_grid(
    t1_range: Tuple[int, int, int] = DEFAULT_T1_RANGE,
    t2_range: Tuple[int, int, int] = DEFAULT_T2_RANGE,
    m: Optional[int] = None,
) -> List[WindowPair]:
    """
    Window pairs of a landscape grid

    Parameters
    ----------
    t1_range: Tuple[int, int, int]
        Optional. Default (1, 44, 1). Inclusive start, stop and step of T1.
    t2_range: Tuple[int, int, int]
        Optional. Default (45, 250, 5). Inclusive start, stop and step of T2.
    m: int
        Optional. Smallest admissible T1, for estimators averaging m-day volatilities.

    Return
    ------
    List[WindowPair]
        pairs with T1 < T2 ordered by T1 then T2
    """

    t1_min, t1_max, t1_step = t1_range
    if m is not None:
        t1_min = max(t1_min, m)
    t2_min, t2_max, t2_step = t2_range
    pairs = [WindowPair(T1, T2)
             for T1 in range(t1_min, t1_max + 1, t1_step)
             for T2 in range(t2_min, t2_max + 1, t2_step)
             if T1 < T2]
    if not pairs:
        raise ValueError(f"empty grid for T1 {t1_range} and T2 {t2_range}")
    return pairs


def scan_grid(
    units: Sequence[ReturnSeries],
    spec: VolatilitySpec,
    pairs: Sequence[WindowPair],
    observable: Union[Observable, str] = Observable.DELTA_P,
    t_max: int = DEFAULT_T_MAX,
    tau: int = DEFAULT_TAU,
    alpha: float = DEFAULT_ALPHA,
    lag_span: Tuple[int, int] = DEFAULT_LAG_SPAN,
    jobs: Optional[int] = None,
    progress: bool = True,
) -> Landscape:
    """
    Landscape of the averaged observable over a grid of window pairs

    Curves of every unit are computed in worker processes, one task per
    unit. Unit results arrive in input order, so the landscape does not
    depend on jobs.

    Parameters
    ----------
    units: Sequence[ReturnSeries]
        stocks or samples, each longer than the largest T2 + t_max
    spec: VolatilitySpec
        volatility estimator
    pairs: Sequence[WindowPair]
        grid cells, see window_grid
    observable: Observable
        Optional. Default DELTA_P.
    t_max: int
        Optional. Default 150.
    tau: int
        Optional. Default 44.
    alpha: float
        Optional. Default 0.01. Significance for confirming effective cells.
    lag_span: Tuple[int, int]
        Optional. Default (1, 10). Lags that must all be significant.
    jobs: int
        Optional. Default None - number of cpu.
    progress: bool
        Optional. Default True.

    Return
    ------
    Landscape
        with a 'confirmed' column when there are at least 2 units
    """

    if len(units) == 0:
        raise ValueError("no series to scan")
    observable = Observable.parse(observable)
    pairs = list(pairs)

    task = partial(unit_grid_values, spec=spec, pairs=pairs, observable=observable, t_max=t_max)

    total = np.zeros((len(pairs), t_max))
    total_sq = np.zeros((len(pairs), t_max))
    count = np.zeros((len(pairs), t_max))
    for values in parallel_map(task, list(units), jobs=jobs, desc="series", progress=progress):
        finite = ~np.isnan(values)
        x = np.where(finite, values, 0.0)
        total += x
        total_sq += x * x
        count += finite

    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / count, np.nan)
        var = np.where(count > 1, (total_sq - total * total / count) / (count - 1), np.nan)
        sd = np.sqrt(np.clip(var, 0.0, None))

    results = {pair: classify(smooth3(mean[i]), tau) for i, pair in enumerate(pairs)}

    metadata = {
        "observable": observable.value,
        "volatility": str(effective_spec(observable, spec)),
        "n_units": len(units),
        "t_max": t_max,
        "tau": tau,
    }
    landscape = landscape_from_results(results, metadata)

    if len(units) < 2:
        logger.warning("single series: effective cells are not confirmed by t-tests")
        return landscape

    lo, hi = lag_span
    index = {pair: i for i, pair in enumerate(pairs)}
    confirmed = []
    for T1, T2, ap0 in zip(landscape.table["T1"], landscape.table["T2"], landscape.table["ap0"]):
        if ap0 == 0:
            confirmed.append(False)
            continue
        i = index[WindowPair(int(T1), int(T2))]
        res = t_test_arrays(mean[i, lo - 1:hi], sd[i, lo - 1:hi], count[i, lo - 1:hi])
        confirmed.append(bool((res["p_value"] < alpha).all()))
    landscape.table["confirmed"] = confirmed
    logger.info("%d of %d effective cells confirmed at alpha=%g", sum(confirmed), len(landscape.effective), alpha)
    return landscape


def min_t1(observable: Union[Observable, str], spec: VolatilitySpec) -> Optional[int]:
    """
    Smallest T1 an observable admits with the given estimator, None if any
    """

    if effective_spec(observable, spec).kind == VolatilityKind.RMS_WINDOW:
        return spec.m
    return None
