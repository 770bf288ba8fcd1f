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
Command line batch runs. Every command writes flat CSV/JSON files into --out.

Exit codes: 0 success, 1 input error, 2 configuration error.
"""

import argparse
from dataclasses import asdict
import json
import logging
import os
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from .__version__ import __version__
from .abm import ensemble, run_manifest, save_manifest
from .config import DEFAULT_PAIR, DEFAULT_SIM_PAIR, FORMATS, ConfigError, RunConfig
from .detect import classify, cross_sectional_average, scan_grid, smooth3
from .observables import CURVE_COLUMNS, Observable, unit_curves
from .panel import SeriesList
from .stats import DEFAULT_LAG_SPAN, save_t_test_table, surrogate_null, t_test_table
from .timeseries import FLOAT_FORMAT

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONFIG = 2

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"


def _write_json(data: Dict, filename: Path) -> None:
    with open(filename, "w") as f:
        json.dump(data, f, indent=2)


def _prepare_out(config: RunConfig) -> Path:
    out = Path(config.out)
    os.makedirs(out, exist_ok=True)
    _write_json(config.settings(), out / "run_config.json")
    return out


def load_units(config: RunConfig) -> SeriesList:
    return SeriesList.load(config.input, config.format)


def analyze_units(units: Sequence, config: RunConfig, out: Path, default_pair=DEFAULT_PAIR) -> Path:
    """
    Per unit curves, their cross-sectional mean and per lag t-tests

    Files
    -----
    curves/<name>.csv - 't,value,n_pos,n_neg,p0'
    mean_curve.csv - 't,value,se,count', for a single unit 't,value,count'
    after a comment line
    ttest.csv - 'lag,t_stat,p_value,df', only for 2 or more units
    analysis.json - windows, observable and the criteria on the mean curve
    """

    observable = config.observable_enum
    pair = config.pair(default_pair)
    curves = unit_curves(units, config.volatility_spec, pair, observable, config.tmax)

    os.makedirs(out / "curves", exist_ok=True)
    for unit, curve in zip(units, curves):
        curve.to_csv(out / "curves" / f"{unit.name}.csv", columns=CURVE_COLUMNS)

    mean = cross_sectional_average(curves)
    if len(curves) == 1:
        with open(out / "mean_curve.csv", "w") as f:
            f.write("# single series: standard error undefined\n")
            mean.table.loc[:, ["t", "value", "count"]].to_csv(f, index=False, float_format=FLOAT_FORMAT)
    else:
        mean.to_csv(out / "mean_curve.csv", columns=["t", "value", "se", "count"])
        save_t_test_table(t_test_table(curves), out / "ttest.csv")

    summary = {
        "observable": observable.value,
        "volatility": curves[0].metadata.get("volatility"),
        "T1": pair.T1,
        "T2": pair.T2,
        "t_max": config.tmax,
        "n_units": len(curves),
        "units": [unit.name for unit in units],
    }
    if config.tmax > config.tau:
        summary["detection"] = asdict(classify(smooth3(mean), config.tau))
    _write_json(summary, out / "analysis.json")

    logger.info("analyzed %d series for %s, T1=%d, T2=%d", len(curves), observable.value, pair.T1, pair.T2)
    return out


def cmd_analyze(config: RunConfig) -> Path:
    out = _prepare_out(config)
    return analyze_units(load_units(config), config, out)


def cmd_landscape(config: RunConfig) -> Path:
    """
    landscape.csv 'T1,T2,ap0' over the whole grid and landscape.json summary
    """

    out = _prepare_out(config)
    units = load_units(config)
    pairs = config.pairs()
    logger.info("scanning %d window pairs over %d series", len(pairs), len(units))

    landscape = scan_grid(
        units,
        config.volatility_spec,
        pairs,
        observable=config.observable_enum,
        t_max=config.tmax,
        tau=config.tau,
        alpha=config.alpha,
        lag_span=DEFAULT_LAG_SPAN,
        jobs=config.jobs,
        progress=logger.isEnabledFor(logging.INFO),
    )
    landscape.to_csv(out / "landscape.csv")
    landscape.to_json(out / "landscape.json")
    return out


def cmd_simulate(config: RunConfig) -> Path:
    """
    series/sample_XXX.csv dumps and manifest.json, with --analyze also
    the analysis of the samples in analysis/
    """

    out = _prepare_out(config)
    sim = config.sim_config()
    samples = ensemble(sim, config.samples, base_seed=config.seed, jobs=config.jobs,
                       progress=logger.isEnabledFor(logging.INFO))

    SeriesList(samples).to_csv(out / "series")
    manifest = run_manifest(sim, config.seed, [s.metadata["seed"] for s in samples])
    save_manifest(manifest, out / "manifest.json")

    if config.analyze:
        analyze_units(samples, config, out / "analysis", default_pair=DEFAULT_SIM_PAIR)
    return out


def cmd_shuffle_test(config: RunConfig) -> Path:
    """
    null_curves.csv with one mean curve per shuffle and null_report.json
    """

    out = _prepare_out(config)
    units = load_units(config)
    report = surrogate_null(
        units,
        config.volatility_spec,
        config.pair(),
        observable=config.observable_enum,
        n_shuffles=config.shuffles,
        seed=config.seed,
        t_max=config.tmax,
        alpha=config.alpha,
        jobs=config.jobs,
        progress=logger.isEnabledFor(logging.INFO),
    )
    report.null_curves.to_csv(out / "null_curves.csv", index=False, float_format=FLOAT_FORMAT)
    _write_json(report.summary(), out / "null_report.json")
    return out


COMMANDS: Dict[str, Callable[[RunConfig], Path]] = {
    "analyze": cmd_analyze,
    "landscape": cmd_landscape,
    "simulate": cmd_simulate,
    "shuffle-test": cmd_shuffle_test,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_file", default=None,
                        help="json file with settings, flags override it")
    common.add_argument("--input", action="extend", nargs="+", default=None,
                        help="price or series files, glob patterns or folders")
    common.add_argument("--format", choices=FORMATS, default=None)
    common.add_argument("--observable", default=None,
                        help="one of " + ", ".join(o.value for o in Observable))
    common.add_argument("--vol", default=None, help="abs, rms:<m> or rmscum")
    common.add_argument("--t1", type=int, default=None, help="short window")
    common.add_argument("--t2", type=int, default=None, help="long window")
    common.add_argument("--grid", default=None, help="T1 and T2 ranges, e.g. 1:44:1,45:250:5")
    common.add_argument("--tmax", type=int, default=None, help="largest lag")
    common.add_argument("--tau", type=int, default=None, help="length of the second part")
    common.add_argument("--alpha", type=float, default=None, help="significance level")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--samples", type=int, default=None, help="simulated samples")
    common.add_argument("--shuffles", type=int, default=None, help="shuffled surrogates")
    common.add_argument("--c", type=float, default=None, help="asymmetric preference degree")
    common.add_argument("--agents", type=int, default=None)
    common.add_argument("--horizon", type=int, default=None, help="longest investment horizon M")
    common.add_argument("--eta", type=float, default=None)
    common.add_argument("--p", type=float, default=None, help="one-sided trading probability")
    common.add_argument("--steps", type=int, default=None)
    common.add_argument("--discard", type=int, default=None)
    common.add_argument("--out", default=None, help="output folder")
    common.add_argument("--jobs", type=int, default=None, help="worker processes, default number of cpu")
    common.add_argument("--analyze", action="store_true", default=None,
                        help="simulate: analyze the samples after the run")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="nlvolret",
        description="Nonlocal volatility-return correlations of stock markets and an agent-based model",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="curves of one window pair")
    sub.add_parser("landscape", parents=[common], help="amplitude over a grid of window pairs")
    sub.add_parser("simulate", parents=[common], help="agent-based model ensemble")
    sub.add_parser("shuffle-test", parents=[common], help="null test on shuffled returns")
    return parser


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run a command, return the exit code
    """

    args = build_parser().parse_args(argv)
    setup_logging(args.verbose, args.quiet)

    overrides = {k: v for k, v in vars(args).items() if k not in ("config_file", "verbose", "quiet")}
    try:
        config = RunConfig.build(overrides, args.config_file)
        out = COMMANDS[config.command](config)
    except ConfigError as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except (ValueError, OSError) as e:
        logger.error("%s", e)
        return EXIT_INPUT

    logger.info("%s finished, results in %s", config.command, out)
    return EXIT_OK
