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

from typing import Dict, Optional, Mapping, Sequence
from collections import UserDict


class MetaData(UserDict):
    """
    Provenance of a series, curve or landscape.

    Keys are lower-cased and spaces replaced by '_', so
    'Shuffle Seed' and 'shuffle_seed' are the same entry.
    """

    def __init__(self, metadata: Optional[Mapping] = None):
        """
        Parameters
        ----------
        metadata: Mapping
            Optional. Default None. Initial entries. Keys must be strings.
        """

        if metadata is None:
            metadata = {}
        elif not isinstance(metadata, Mapping):
            raise ValueError(f"Metadata must be a mapping or None, not {type(metadata)}")

        super().__init__(self._make_uniform(metadata))

    @staticmethod
    def _make_uniform(metadata: Mapping) -> Dict:
        uniform = {}
        for key, value in metadata.items():
            if not isinstance(key, str):
                raise ValueError(f"Key in metadata must be string, not {type(key)}")
            uniform[key.lower().replace(" ", "_")] = value
        return uniform

    def add(self, metadata: Mapping) -> "MetaData":
        """
        Add or overwrite entries

        Parameters
        ----------
        metadata: Mapping
            new entries, for example {'shuffle_seed': 7}

        Return
        ------
        MetaData
            self, for chaining
        """

        if not isinstance(metadata, Mapping):
            raise ValueError(f"Metadata must be a mapping, not {type(metadata)}")

        for key, value in self._make_uniform(metadata).items():
            self[key] = value
        return self

    def copy(self) -> "MetaData":
        return MetaData(dict(self.data))

    @staticmethod
    def combine_names(items: Sequence, sep: str = "+", limit: int = 3) -> str:
        """
        Joint name for an average over several objects carrying metadata

        Parameters
        ----------
        items: Sequence
            objects with a `metadata` attribute
        sep: str
            separator between names. Default '+'.
        limit: int
            at most this many names are spelled out, the rest is counted.

        Return
        ------
        str
        """

        names = [str(item.metadata.get("name", "_")) for item in items]
        if len(names) <= limit:
            return sep.join(names)
        return f"{sep.join(names[:limit])}{sep}...({len(names)} total)"
