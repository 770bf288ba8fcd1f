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

from dataclasses import asdict, dataclass, field, fields
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from .abm import SimConfig
from .detect import DEFAULT_TAU, min_t1, parse_grid, window_grid
from .observables import DEFAULT_T_MAX, Observable, WindowPair
from .timeseries import VolatilitySpec

logger = logging.getLogger(__name__)

COMMANDS = ("analyze", "landscape", "simulate", "shuffle-test")
FORMATS = ("two_column", "yahoo", "series")
DEFAULT_GRID = "1:44:1,45:250:5"
DEFAULT_PAIR = (24, 205)
DEFAULT_SIM_PAIR = (3, 150)
# keys left out of run_config.json
EXECUTION_KEYS = ("out", "jobs")


class ConfigError(ValueError):
    """
    Invalid run configuration
    """


@dataclass(frozen=True)
class RunConfig:
    """
    Everything a command needs, built from defaults, a json file and flags

    t1 and t2 left as None take the command default: (24, 205) for
    observed prices and (3, 150) for the analysis chained to a simulation.
    jobs None means one worker per cpu.
    """

    command: str = "analyze"
    input: List[str] = field(default_factory=list)
    format: str = "two_column"
    observable: str = "delta_p"
    vol: str = "abs"
    t1: Optional[int] = None
    t2: Optional[int] = None
    grid: str = DEFAULT_GRID
    tmax: int = DEFAULT_T_MAX
    tau: int = DEFAULT_TAU
    alpha: float = 0.01
    seed: Optional[int] = 0
    samples: int = 100
    shuffles: int = 50
    c: float = 1 / 80
    agents: int = 10000
    horizon: int = 150
    eta: float = 1.12
    p: float = 0.0154
    steps: int = 20000
    discard: int = 15000
    out: str = "out"
    jobs: Optional[int] = None
    analyze: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}, may be one of {', '.join(COMMANDS)}")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}, may be one of {', '.join(FORMATS)}")
        for name in ("tmax", "tau", "samples", "shuffles"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if (self.t1 is None) != (self.t2 is None):
            raise ConfigError("t1 and t2 must be given together")
        if self.command != "simulate" and not self.input:
            raise ConfigError(f"{self.command} needs at least one --input")

        # parse once here so errors surface as configuration errors
        try:
            self.observable_enum
            self.volatility_spec
            if self.t1 is not None:
                WindowPair(self.t1, self.t2)
            if self.command == "landscape":
                self.pairs()
            if self.command == "simulate":
                self.sim_config()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def observable_enum(self) -> Observable:
        return Observable.parse(self.observable)

    @property
    def volatility_spec(self) -> VolatilitySpec:
        return VolatilitySpec.parse(self.vol)

    def pair(self, default: Tuple[int, int] = DEFAULT_PAIR) -> WindowPair:
        if self.t1 is None:
            return WindowPair(*default)
        return WindowPair(self.t1, self.t2)

    def pairs(self) -> List[WindowPair]:
        t1_range, t2_range = parse_grid(self.grid)
        return window_grid(t1_range, t2_range, m=min_t1(self.observable_enum, self.volatility_spec))

    def sim_config(self) -> SimConfig:
        return SimConfig(
            n_agents=self.agents,
            max_horizon=self.horizon,
            eta=self.eta,
            p=self.p,
            c=self.c,
            total_steps=self.steps,
            warmup_discard=self.discard,
            seed=self.seed,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def settings(self) -> Dict[str, Any]:
        """
        Keys that decide the results, without the output folder and worker count
        """

        return {k: v for k, v in self.to_dict().items() if k not in EXECUTION_KEYS}

    @staticmethod
    def keys() -> List[str]:
        return [f.name for f in fields(RunConfig)]

    @staticmethod
    def build(
        overrides: Mapping[str, Any],
        config_file: Optional[Union[Path, str]] = None,
    ) -> "RunConfig":
        """
        Merge defaults, json config file and flags, later ones win

        Parameters
        ----------
        overrides: Mapping
            values given on the command line, None entries are skipped
        config_file: str
            Optional. Json object with the same keys as the flags.

        Return
        ------
        RunConfig
        """

        values: Dict[str, Any] = {}
        if config_file is not None:
            values.update(load_config_file(config_file))
        values.update({k: v for k, v in overrides.items() if v is not None})

        unknown = set(values) - set(RunConfig.keys())
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        if isinstance(values.get("input"), str):
            values["input"] = [values["input"]]
        try:
            return RunConfig(**values)
        except TypeError as e:
            raise ConfigError(str(e)) from None


def load_config_file(filename: Union[Path, str]) -> Dict[str, Any]:
    """
    Read a json object of settings, '-' in keys is read as '_'
    """

    try:
        with open(filename, "rb") as f:
            res = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config file {filename}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {filename} is not valid json: {e}") from None
    if not isinstance(res, dict):
        raise ConfigError(f"config file {filename} must hold a json object")
    logger.debug("config file %s: %s", filename, res)
    return {str(k).replace("-", "_"): v for k, v in res.items()}
