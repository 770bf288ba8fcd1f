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

from dataclasses import dataclass
from enum import Enum
import io
import json
import logging
from pathlib import Path
from typing import BinaryIO, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .metadata import MetaData

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.15g"

Source = Union[str, Path, BinaryIO, io.IOBase]
Seed = Union[int, np.random.Generator]


class PriceFormat(str, Enum):
    TWO_COLUMN = "two_column"
    YAHOO_CSV = "yahoo"


class VolatilityKind(str, Enum):
    ABS = "abs"
    RMS_WINDOW = "rms"
    RMS_CUMULATIVE = "rmscum"


@dataclass(frozen=True)
class VolatilitySpec:
    """
    Which volatility estimator to use.

    ABS is |r(t')|, RMS_WINDOW is the m-day root mean square of returns,
    RMS_CUMULATIVE is the root mean square over the whole averaging window
    and only exists at window level.
    """

    kind: VolatilityKind = VolatilityKind.ABS
    m: int = 5

    def __post_init__(self):
        object.__setattr__(self, "kind", VolatilityKind(self.kind))
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"volatility window m must be integer >= 1, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @staticmethod
    def parse(text: str) -> "VolatilitySpec":
        """
        Parse 'abs', 'rms', 'rms:<m>' or 'rmscum'

        Parameters
        ----------
        text: str
            volatility description as used on the command line

        Return
        ------
        VolatilitySpec
        """

        text = str(text).strip().lower()
        if text == "abs":
            return VolatilitySpec(VolatilityKind.ABS)
        if text == "rmscum":
            return VolatilitySpec(VolatilityKind.RMS_CUMULATIVE)
        if text == "rms":
            return VolatilitySpec(VolatilityKind.RMS_WINDOW)
        if text.startswith("rms:"):
            try:
                m = int(text[4:])
            except ValueError:
                raise ValueError(f"Cannot read volatility window from '{text}'") from None
            return VolatilitySpec(VolatilityKind.RMS_WINDOW, m)
        raise ValueError(f"There is no such volatility: {text}. May be abs, rms:<m> or rmscum")

    def __str__(self) -> str:
        if self.kind == VolatilityKind.RMS_WINDOW:
            return f"rms:{self.m}"
        return self.kind.value


def trailing_mean(x: np.ndarray, window: int) -> np.ndarray:
    """
    Mean of the last `window` points ending at every index

    Parameters
    ----------
    x: np.ndarray
        input values
    window: int
        window length, >= 1

    Return
    ------
    np.ndarray
        same length as x, NaN for the first window-1 entries
    """

    x = np.asarray(x, dtype=float)
    out = np.full(len(x), np.nan)
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if len(x) >= window:
        out[window - 1:] = sliding_window_view(x, window).sum(axis=1) / window
    return out


class PriceSeries(object):
    """
    Daily closing prices of one index or stock
    """

    def __init__(self, table: pd.DataFrame, metadata: Optional[Dict] = None):
        """
        Parameters
        ----------
        table: pandas DataFrame
            columns 'date' (datetime64) and 'close' (positive float)
        metadata: Dict
            Optional. Default None. 'name' is used as the symbol.
        """

        table = table.loc[:, ["date", "close"]].reset_index(drop=True)
        if len(table) < 2:
            raise ValueError(f"Price series needs at least 2 rows, got {len(table)}")
        if not table["date"].is_monotonic_increasing or table["date"].duplicated().any():
            raise ValueError("Dates of a price series must be strictly increasing")
        if (table["close"] <= 0).any():
            raise ValueError("non-positive price in price series")

        self.table = table
        self.metadata = MetaData(metadata)

    @property
    def symbol(self) -> str:
        return str(self.metadata.get("name", ""))

    @property
    def dates(self) -> pd.Series:
        return self.table["date"]

    @property
    def closes(self) -> np.ndarray:
        return self.table["close"].to_numpy(dtype=float)

    def __len__(self) -> int:
        return len(self.table)

    def __repr__(self) -> str:
        return f"PriceSeries({self.symbol!r}, {len(self)} days)"


class RawReturnSeries(object):
    """
    Logarithmic returns R(t') = ln Y(t') - ln Y(t'-1)
    """

    def __init__(self, values: Sequence[float], metadata: Optional[Dict] = None):
        values = np.array(values, dtype=float)
        values.setflags(write=False)
        self.values = values
        self.metadata = MetaData(metadata)

    def __len__(self) -> int:
        return len(self.values)


class ReturnSeries(object):
    """
    Normalized returns r(t') = (R(t') - <R>) / sigma

    Values are read-only, so a series can be shared between workers.
    """

    def __init__(
        self,
        values: Sequence[float],
        mean_raw: float = 0.0,
        sigma_raw: float = 1.0,
        metadata: Optional[Dict] = None,
    ):
        """
        Parameters
        ----------
        values: Sequence[float]
            normalized returns
        mean_raw: float
            Optional. Default 0. Mean <R> subtracted from raw returns.
        sigma_raw: float
            Optional. Default 1. Population standard deviation of raw returns.
        metadata: Dict
            Optional. Default None. Provenance, 'name' is the unit name.
        """

        values = np.array(values, dtype=float)
        values.setflags(write=False)
        self.values = values
        self.mean_raw = float(mean_raw)
        self.sigma_raw = float(sigma_raw)
        self.metadata = MetaData(metadata)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def name(self) -> str:
        return str(self.metadata.get("name", ""))

    @property
    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"index": np.arange(1, self.n + 1), "value": self.values})

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"ReturnSeries({self.name!r}, n={self.n})"

    def to_csv(self, filename: Union[Path, str]) -> None:
        """
        Dump series as CSV 'index,value' with 15 significant digits

        Caution
        -------
        Metadata, mean and sigma are lost. Use to_json to keep them.
        """

        self.table.to_csv(filename, index=False, float_format=FLOAT_FORMAT)

    @staticmethod
    def read_csv(filename: Union[Path, str], metadata: Optional[Dict] = None) -> "ReturnSeries":
        """
        Read a series dump written by to_csv

        Values are taken as already normalized.

        Parameters
        ----------
        filename: str
            path to 'index,value' csv file
        metadata: Dict
            Optional. If name is absent it is taken from filename.

        Return
        ------
        ReturnSeries
        """

        table = pd.read_csv(filename)
        if "value" not in table.columns:
            raise ValueError(f"{filename}: series dump must have 'value' column")
        if "index" in table.columns:
            table = table.sort_values(by="index")
        values = pd.to_numeric(table["value"], errors="coerce")
        if values.isnull().any():
            raise ValueError(f"{filename}: non-numeric value in row {int(values.isnull().to_numpy().argmax()) + 1}")

        metadata = MetaData(metadata)
        if "name" not in metadata:
            metadata["name"] = Path(filename).stem
        return ReturnSeries(values.to_numpy(), metadata=metadata)

    def to_json(self, filename: Union[Path, str]) -> None:
        """
        Save series with mean, sigma and metadata to json
        """

        with open(filename, "w") as f:
            json.dump(self._to_dict(), f)

    @staticmethod
    def read_json(filename: Union[Path, str]) -> "ReturnSeries":
        with open(filename, "rb") as f:
            return ReturnSeries._from_dict(json.load(f))

    def _to_dict(self) -> Dict:
        return {
            "metadata": dict(self.metadata),
            "mean_raw": self.mean_raw,
            "sigma_raw": self.sigma_raw,
            "values": self.values.tolist(),
        }

    @staticmethod
    def _from_dict(res: Dict) -> "ReturnSeries":
        return ReturnSeries(res["values"], res["mean_raw"], res["sigma_raw"], metadata=res["metadata"])


class VolatilitySeries(object):
    """
    Volatility aligned with the return series it was computed from.

    values[i] belongs to t' = i + 1; entries before first_valid are NaN.
    """

    def __init__(self, values: np.ndarray, spec: VolatilitySpec, first_valid: int):
        values = np.array(values, dtype=float)
        values.setflags(write=False)
        self.values = values
        self.spec = spec
        self.first_valid = int(first_valid)

    def at(self, t_prime: int) -> float:
        """
        Volatility at 1-based day t'
        """

        if t_prime < self.first_valid or t_prime > len(self.values):
            raise ValueError(f"volatility undefined at t'={t_prime}, valid range {self.first_valid}..{len(self.values)}")
        return float(self.values[t_prime - 1])

    def __len__(self) -> int:
        return len(self.values)


def _read_source(source: Source) -> io.StringIO:
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as f:
            data = f.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8-sig")
        except UnicodeDecodeError as e:
            raise ValueError(f"price data is not valid UTF-8: {e}") from None
    return io.StringIO(data)


def load_price_series(
    source: Source,
    format: Union[PriceFormat, str] = PriceFormat.TWO_COLUMN,
    metadata: Optional[Dict] = None,
) -> PriceSeries:
    """
    Read daily closing prices from csv

    Parameters
    ----------
    source: str, Path or binary stream
        UTF-8 csv data
    format: {'two_column', 'yahoo'}
        Optional. Default 'two_column'.
        'two_column' - rows 'YYYY-MM-DD,close', optional header 'date,close'.
        'yahoo' - header 'Date,Open,High,Low,Close,Adj Close,Volume',
        only Date and Close are read. Close is taken as is, not Adj Close.
    metadata: Dict
        Optional. If name is absent it is taken from the file name.

    Return
    ------
    PriceSeries
        rows sorted by date
    """

    format = PriceFormat(format)
    buffer = _read_source(source)

    if format == PriceFormat.TWO_COLUMN:
        table = pd.read_csv(buffer, header=None, names=["date", "close"], dtype=str,
                            skipinitialspace=True, skip_blank_lines=True)
        if len(table) > 0 and str(table.loc[0, "date"]).strip().lower() == "date":
            table = table.iloc[1:].reset_index(drop=True)
    else:
        table = pd.read_csv(buffer, dtype=str, skipinitialspace=True)
        table.columns = [str(col).strip() for col in table.columns]
        missing = {"Date", "Close"} - set(table.columns)
        if missing:
            raise ValueError(f"Yahoo csv must have Date and Close columns, missing {sorted(missing)}")
        table = table.loc[:, ["Date", "Close"]].rename(columns={"Date": "date", "Close": "close"})

    if len(table) < 2:
        raise ValueError(f"Price series needs at least 2 rows, got {len(table)}")

    dates = pd.to_datetime(table["date"].str.strip(), format="%Y-%m-%d", errors="coerce")
    if dates.isnull().any():
        row = int(dates.isnull().to_numpy().argmax())
        raise ValueError(f"unreadable date '{table.loc[row, 'date']}' in row {row + 1}")

    closes = pd.to_numeric(table["close"].str.strip(), errors="coerce")
    if closes.isnull().any():
        row = int(closes.isnull().to_numpy().argmax())
        raise ValueError(f"non-numeric close '{table.loc[row, 'close']}' in row {row + 1}")
    bad = (closes <= 0).to_numpy()
    if bad.any():
        row = int(bad.argmax())
        raise ValueError(f"non-positive price {closes[row]} in row {row + 1} ({dates[row].date()})")

    duplicated = dates.duplicated().to_numpy()
    if duplicated.any():
        row = int(duplicated.argmax())
        raise ValueError(f"duplicate date {dates[row].date()} in row {row + 1}")

    table = pd.DataFrame({"date": dates, "close": closes.astype(float)})
    table = table.sort_values(by="date").reset_index(drop=True)

    metadata = MetaData(metadata)
    if "name" not in metadata and not hasattr(source, "read"):
        metadata["name"] = Path(source).stem
    metadata["price_format"] = format.value

    logger.debug("loaded %d prices for %s", len(table), metadata.get("name"))
    return PriceSeries(table, metadata)


def log_returns(prices: PriceSeries) -> RawReturnSeries:
    """
    Logarithmic returns R(t') = ln Y(t') - ln Y(t'-1)

    Calendar gaps are ignored, consecutive rows are consecutive trading days.

    Return
    ------
    RawReturnSeries
        one value shorter than prices
    """

    values = np.diff(np.log(prices.closes))
    return RawReturnSeries(values, metadata=prices.metadata.copy())


def normalize(raw: RawReturnSeries) -> ReturnSeries:
    """
    Normalize returns to zero mean and unit population standard deviation

    Parameters
    ----------
    raw: RawReturnSeries
        at least 2 returns, not all equal

    Return
    ------
    ReturnSeries
    """

    values = np.asarray(raw.values, dtype=float)
    if len(values) < 2:
        raise ValueError(f"normalize needs at least 2 returns, got {len(values)}")

    mean = values.mean()
    sigma = values.std()
    if np.ptp(values) == 0 or sigma == 0:
        raise ValueError("degenerate series: returns have zero standard deviation")

    metadata = raw.metadata.copy().add({"normalized": True})
    return ReturnSeries((values - mean) / sigma, mean_raw=mean, sigma_raw=sigma, metadata=metadata)


def denormalize(returns: ReturnSeries) -> RawReturnSeries:
    """
    Inverse of normalize: values * sigma + mean
    """

    return RawReturnSeries(returns.values * returns.sigma_raw + returns.mean_raw,
                           metadata=returns.metadata.copy())


def returns_from_prices(prices: PriceSeries) -> ReturnSeries:
    """
    Normalized log-returns of a price series
    """

    return normalize(log_returns(prices))


def volatility(returns: ReturnSeries, spec: VolatilitySpec) -> VolatilitySeries:
    """
    Daily volatility series

    Parameters
    ----------
    returns: ReturnSeries
        normalized returns
    spec: VolatilitySpec
        ABS gives |r(t')| from t'=1,
        RMS_WINDOW gives sqrt(mean of r^2 over the last m days) from t'=m.
        RMS_CUMULATIVE is defined only for window averages and is rejected here.

    Return
    ------
    VolatilitySeries
    """

    r = returns.values
    if spec.kind == VolatilityKind.ABS:
        return VolatilitySeries(np.abs(r), spec, first_valid=1)

    if spec.kind == VolatilityKind.RMS_WINDOW:
        if len(r) < spec.m:
            raise ValueError(f"returns length {len(r)} is shorter than volatility window m={spec.m}")
        return VolatilitySeries(np.sqrt(trailing_mean(r * r, spec.m)), spec, first_valid=spec.m)

    raise ValueError("RMS_CUMULATIVE volatility is defined at window level, use window_avg_volatility")


def shuffle(returns: ReturnSeries, seed: Seed) -> ReturnSeries:
    """
    Random permutation of returns

    Parameters
    ----------
    returns: ReturnSeries
        series to permute
    seed: int or numpy Generator
        the generator is never taken from global state

    Return
    ------
    ReturnSeries
        same multiset of values, same mean and sigma
    """

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    metadata = returns.metadata.copy()
    if not isinstance(seed, np.random.Generator):
        metadata["shuffle_seed"] = int(seed)
    metadata["shuffled"] = True
    return ReturnSeries(rng.permutation(returns.values), returns.mean_raw, returns.sigma_raw, metadata)
