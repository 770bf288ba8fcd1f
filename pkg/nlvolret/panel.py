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

from collections import UserList
import glob
import json
import logging
import os
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

from .timeseries import ReturnSeries, load_price_series, returns_from_prices

logger = logging.getLogger(__name__)

SERIES_FORMAT = "series"
SUFFIXES = (".csv", ".txt")


class SeriesList(UserList):
    """
    List of ReturnSeries, the units (stocks or simulated samples) of an ensemble
    """

    def __init__(self, series: Optional[Iterable[ReturnSeries]] = None):
        """
        Parameters
        ----------
        series: Sequence[ReturnSeries]
            Optional. Default None - empty list.
        """

        series = [] if series is None else list(series)
        for s in series:
            if not isinstance(s, ReturnSeries):
                raise ValueError(f"SeriesList must contain only ReturnSeries objects, not {type(s)}")
        super().__init__(series)
        self.data: List[ReturnSeries]

    def get_names(self) -> List[str]:
        """
        Names of the series in list order
        """

        return [s.name for s in self]

    @staticmethod
    def expand_paths(inputs: Sequence[Union[Path, str]]) -> List[Path]:
        """
        Files named by inputs: plain paths, glob patterns or folders

        Folders contribute their .csv and .txt files. Each group is sorted,
        so the order is reproducible.

        Parameters
        ----------
        inputs: Sequence[str]
            paths, patterns or folders

        Return
        ------
        List[Path]
        """

        files: List[Path] = []
        for item in inputs:
            item = str(item)
            if os.path.isdir(item):
                found = sorted(p for p in Path(item).iterdir() if p.suffix.lower() in SUFFIXES)
            elif glob.has_magic(item):
                found = sorted(Path(p) for p in glob.glob(item))
            else:
                found = [Path(item)]
            if not found:
                raise ValueError(f"no input files match {item}")
            files.extend(found)
        return files

    @staticmethod
    def load(inputs: Sequence[Union[Path, str]], format: str = "two_column") -> "SeriesList":
        """
        Load and normalize returns from files

        Parameters
        ----------
        inputs: Sequence[str]
            paths, glob patterns or folders, see expand_paths
        format: {'two_column', 'yahoo', 'series'}
            Optional. Default 'two_column'.
            'two_column' and 'yahoo' are price files, see load_price_series.
            'series' are normalized return dumps 'index,value'.

        Return
        ------
        SeriesList
            names are file stems, repeated stems get a numeric suffix
        """

        series = SeriesList()
        seen = {}
        for path in SeriesList.expand_paths(inputs):
            try:
                if format == SERIES_FORMAT:
                    s = ReturnSeries.read_csv(path)
                else:
                    s = returns_from_prices(load_price_series(path, format))
            except (ValueError, OSError) as e:
                message = str(e) if str(path) in str(e) else f"{path}: {e}"
                raise ValueError(message) from e

            name = s.name
            if name in seen:
                seen[name] += 1
                s.metadata["name"] = f"{name}_{seen[name]}"
            else:
                seen[name] = 0
            s.metadata["source_file"] = str(path)
            series.append(s)

        logger.info("loaded %d series", len(series))
        return series

    @staticmethod
    def read_csv(folder: Union[Path, str], format: str = SERIES_FORMAT) -> "SeriesList":
        """
        Read every .csv or .txt file of a folder

        Parameters
        ----------
        folder: str
            folder with one file per series
        format: {'series', 'two_column', 'yahoo'}
            Optional. Default 'series'.

        Return
        ------
        SeriesList
        """

        return SeriesList.load([folder], format)

    def to_csv(self, folder: Union[Path, str]) -> List[Path]:
        """
        Save every series into '<folder>/<name>.csv'

        Return
        ------
        List[Path]
            written files
        """

        os.makedirs(folder, exist_ok=True)
        written = []
        for s in self:
            path = Path(folder) / f"{s.name}.csv"
            s.to_csv(path)
            written.append(path)
        return written

    def to_json(self, filename: Union[Path, str]) -> None:
        """
        Save all series with metadata into one json file
        """

        with open(filename, "w") as f:
            json.dump([s._to_dict() for s in self], f)

    @staticmethod
    def read_json(filename: Union[Path, str]) -> "SeriesList":
        with open(filename, "rb") as f:
            res = json.load(f)
        return SeriesList(ReturnSeries._from_dict(item) for item in res)
