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
Agent-based market with investment horizons, herding and an asymmetric
trading preference driven by the perceived volatility.

Histories are chronological arrays, the last entry is the current day t.
"""

from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .parallel import parallel_map
from .timeseries import RawReturnSeries, ReturnSeries, normalize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """
    Parameters of one simulation

    n_agents - N, agents trading one share each
    max_horizon - M, longest investment horizon in days
    eta - exponent of the power-law horizon weights
    p - one-sided trading probability, buy + sell probability is 2p
    c - asymmetric preference degree, negative values flip the effect
    total_steps - simulated days after the seeded history
    warmup_discard - leading simulated days dropped from the output
    seed - generator seed, None for fresh entropy
    """

    n_agents: int = 10000
    max_horizon: int = 150
    eta: float = 1.12
    p: float = 0.0154
    c: float = 1 / 80
    total_steps: int = 20000
    warmup_discard: int = 15000
    seed: Optional[int] = None

    def __post_init__(self):
        if self.n_agents < 1:
            raise ValueError(f"n_agents must be >= 1, got {self.n_agents}")
        if self.max_horizon < 1:
            raise ValueError(f"max_horizon must be >= 1, got {self.max_horizon}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if not 0 < self.p < 0.5:
            raise ValueError(f"p must be in (0, 1/2), got {self.p}")
        if abs(self.c) > 1:
            raise ValueError(f"|c| must be <= 1, got {self.c}")
        if not self.total_steps > self.warmup_discard >= self.max_horizon:
            raise ValueError(
                "steps must satisfy total_steps > warmup_discard >= max_horizon, "
                f"got {self.total_steps}, {self.warmup_discard}, {self.max_horizon}")

    @property
    def kept_steps(self) -> int:
        return self.total_steps - self.warmup_discard


@lru_cache(maxsize=None)
def _horizon_weights(M: int, eta: float) -> Tuple[float, ...]:
    gamma = np.arange(1, M + 1, dtype=float) ** -eta
    return tuple(gamma / gamma.sum())


def horizon_weights(M: int, eta: float) -> np.ndarray:
    """
    Normalized power-law weights gamma_i = i^-eta / sum_j j^-eta, i = 1..M
    """

    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if eta <= 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    return np.array(_horizon_weights(int(M), float(eta)))


def lag_weights(gamma: np.ndarray) -> np.ndarray:
    """
    w_j = sum of gamma_i over i > j, j = 0..M-1, the weight of R(t-j)
    """

    return np.cumsum(gamma[::-1])[::-1]


def return_norm(gamma: np.ndarray) -> float:
    """
    k = 1 / sum_j w_j, so a history of R = N gives R' = N
    """

    return float(1.0 / lag_weights(gamma).sum())


def volatility_weights(gamma: np.ndarray) -> np.ndarray:
    """
    u_j = sum of gamma_i / i over i > j, the weight of V(t-j) in sum_i gamma_i V_i
    """

    i = np.arange(1, len(gamma) + 1)
    return np.cumsum((gamma / i)[::-1])[::-1]


def _recent(history: Sequence[float], M: int) -> np.ndarray:
    history = np.asarray(history, dtype=float)
    if len(history) < M:
        raise ValueError(f"history of {len(history)} days is shorter than M={M}")
    return history[-M:][::-1]


def weighted_return(history: Sequence[float], gamma: np.ndarray, k: Optional[float] = None) -> float:
    """
    Weighted average return R'(t) over all horizons

    R'(t) = k sum_i gamma_i sum_{j<i} R(t-j), computed as k sum_j w_j R(t-j).

    Parameters
    ----------
    history: Sequence[float]
        R up to day t, chronological, at least M entries
    gamma: np.ndarray
        horizon weights, M entries
    k: float
        Optional. Default 1 / sum_j w_j.

    Return
    ------
    float
    """

    if k is None:
        k = return_norm(gamma)
    return float(k * (lag_weights(gamma) @ _recent(history, len(gamma))))


def herding_degree(r_prime: float, n_agents: int) -> Tuple[float, int]:
    """
    Herding degree D = |R'| / N and the number of groups

    Return
    ------
    D, group_count
        group_count = round(1/D) clamped to 1..N, N for D = 0
    """

    D = min(abs(r_prime) / n_agents, 1.0)
    if D == 0:
        return 0.0, int(n_agents)
    group_count = int(np.floor(1.0 / D + 0.5))
    return D, min(max(group_count, 1), int(n_agents))


def perceived_volatility(v_history: Sequence[float], gamma: np.ndarray) -> float:
    """
    Volatility perceived by all agents relative to the longest horizon

    xi = sum_i gamma_i V_i / V_M, V_i being the mean of the last i values
    of V. A zero V_M gives the neutral xi = 1.

    Parameters
    ----------
    v_history: Sequence[float]
        V = |R| up to day t, chronological, at least M entries
    gamma: np.ndarray
        horizon weights, M entries

    Return
    ------
    float
    """

    recent = _recent(v_history, len(gamma))
    v_m = recent.mean()
    if v_m == 0:
        return 1.0
    return float((volatility_weights(gamma) @ recent) / v_m)


def trading_probabilities(xi: float, p: float, c: float) -> Tuple[float, float]:
    """
    Buy and sell probabilities, P_buy = p [c xi + (1 - c)]

    P_buy is clamped to [0, 2p] and P_sell = 2p - P_buy, so an agent
    trades with probability 2p whatever xi is.
    """

    p_buy = min(max(p * (c * xi + (1 - c)), 0.0), 2 * p)
    return p_buy, 2 * p - p_buy


def draw_return(
    n_agents: int,
    group_count: int,
    p_buy: float,
    p_sell: float,
    rng: np.random.Generator,
) -> int:
    """
    Net demand of N agents split into group_count groups acting together

    Group sizes differ by at most one, N % group_count groups have one
    agent more. Only sizes enter the return, so members are not assigned
    individually.
    """

    q, big = divmod(n_agents, group_count)
    probs = [p_buy, p_sell, max(1.0 - p_buy - p_sell, 0.0)]
    buy_big, sell_big, _ = rng.multinomial(big, probs)
    buy_small, sell_small, _ = rng.multinomial(group_count - big, probs)
    return int((q + 1) * (buy_big - sell_big) + q * (buy_small - sell_small))


@dataclass
class SimState:
    """
    Histories and derived quantities of a running simulation

    R and V hold t filled days, the first M are the seeded history.
    r_prime, D, group_count and xi are computed from days up to t and
    drive the draw of day t + 1.
    """

    config: SimConfig
    rng: np.random.Generator
    gamma: np.ndarray
    k: float
    R: np.ndarray
    V: np.ndarray
    t: int
    r_prime: float = 0.0
    D: float = 0.0
    group_count: int = 1
    xi: float = 1.0
    _w_chrono: np.ndarray = field(default=None, repr=False)
    _u_chrono: np.ndarray = field(default=None, repr=False)

    @property
    def history(self) -> np.ndarray:
        return self.R[:self.t]

    @property
    def simulated(self) -> np.ndarray:
        return self.R[self.config.max_horizon:self.t]

    def refresh(self) -> None:
        """
        Recompute R', D, group count and xi from the last M days
        """

        M = self.config.max_horizon
        recent_r = self.R[self.t - M:self.t]
        recent_v = self.V[self.t - M:self.t]
        self.r_prime = float(self.k * (self._w_chrono @ recent_r))
        self.D, self.group_count = herding_degree(self.r_prime, self.config.n_agents)
        v_m = recent_v.mean()
        self.xi = 1.0 if v_m == 0 else float((self._u_chrono @ recent_v) / v_m)


def init_state(config: SimConfig) -> SimState:
    """
    Seed M days of standard Gaussian returns, V seeded with their absolute values
    """

    M = config.max_horizon
    rng = np.random.default_rng(config.seed)
    gamma = horizon_weights(M, config.eta)

    size = M + config.total_steps
    R = np.zeros(size)
    V = np.zeros(size)
    R[:M] = rng.standard_normal(M)
    V[:M] = np.abs(R[:M])

    state = SimState(
        config=config,
        rng=rng,
        gamma=gamma,
        k=return_norm(gamma),
        R=R,
        V=V,
        t=M,
        _w_chrono=lag_weights(gamma)[::-1].copy(),
        _u_chrono=volatility_weights(gamma)[::-1].copy(),
    )
    state.refresh()
    return state


def step(state: SimState) -> int:
    """
    Simulate one day

    Groups are redrawn every day from the current herding degree, every
    group buys, sells or holds with the probabilities set by the perceived
    volatility.

    Return
    ------
    int
        R(t+1), net demand in shares
    """

    cfg = state.config
    if state.t == len(state.R):
        state.R = np.concatenate([state.R, np.zeros(len(state.R))])
        state.V = np.concatenate([state.V, np.zeros(len(state.V))])

    p_buy, p_sell = trading_probabilities(state.xi, cfg.p, cfg.c)
    R = draw_return(cfg.n_agents, state.group_count, p_buy, p_sell, state.rng)

    state.R[state.t] = R
    state.V[state.t] = abs(R)
    state.t += 1
    state.refresh()
    return R


def simulate(config: SimConfig, progress: bool = False) -> ReturnSeries:
    """
    Run one simulation and return its normalized returns

    Parameters
    ----------
    config: SimConfig
        model parameters and seed
    progress: bool
        Optional. Default False. Show tqdm progress bar.

    Return
    ------
    ReturnSeries
        total_steps - warmup_discard normalized returns
    """

    state = init_state(config)
    for _ in tqdm(range(config.total_steps), desc="steps", disable=not progress):
        step(state)

    kept = state.simulated[config.warmup_discard:]
    metadata = {
        "name": f"sim_{config.seed}",
        "source": "abm",
        "seed": config.seed,
        "c": config.c,
        "n_agents": config.n_agents,
        "max_horizon": config.max_horizon,
    }
    try:
        returns = normalize(RawReturnSeries(kept, metadata))
    except ValueError:
        raise ValueError(f"degenerate simulation: constant returns after warmup (seed={config.seed})") from None

    logger.debug("simulated seed %s: %d points", config.seed, returns.n)
    return returns


def sample_seeds(base_seed: Optional[int], n: int) -> List[int]:
    """
    Independent per-sample seeds spawned from one base seed

    Parameters
    ----------
    base_seed: int
        root of the seed tree, None for fresh entropy
    n: int
        number of seeds, >= 1

    Return
    ------
    List[int]
        distinct 64-bit seeds
    """

    if n < 1:
        raise ValueError(f"number of samples must be >= 1, got {n}")
    children = np.random.SeedSequence(base_seed).spawn(n)
    seeds = [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]
    if len(set(seeds)) != n:
        raise ValueError(f"seed collision among {n} samples from base seed {base_seed}")
    return seeds


def ensemble(
    config: SimConfig,
    n_samples: int,
    base_seed: Optional[int] = None,
    jobs: Optional[int] = 1,
    progress: bool = True,
) -> List[ReturnSeries]:
    """
    Independent simulations with derived seeds

    Parameters
    ----------
    config: SimConfig
        model parameters, its seed is replaced per sample
    n_samples: int
        number of runs, >= 1
    base_seed: int
        Optional. Default config.seed.
    jobs: int
        Optional. Default 1. Worker processes, None for number of cpu.
    progress: bool
        Optional. Default True.

    Return
    ------
    List[ReturnSeries]
        named sample_000, sample_001, ... in seed order
    """

    if base_seed is None:
        base_seed = config.seed
    seeds = sample_seeds(base_seed, n_samples)
    configs = [replace(config, seed=seed) for seed in seeds]

    samples = []
    for k, series in enumerate(parallel_map(simulate, configs, jobs=jobs, desc="samples", progress=progress)):
        series.metadata.add({"name": f"sample_{k:03d}", "sample": k})
        samples.append(series)

    logger.info("ensemble of %d samples, c=%g, base seed %s", n_samples, config.c, base_seed)
    return samples


def run_manifest(config: SimConfig, base_seed: Optional[int], seeds: Sequence[int]) -> Dict:
    """
    Everything needed to reproduce an ensemble
    """

    params = asdict(config)
    params.pop("seed")
    return {
        "config": params,
        "base_seed": base_seed,
        "seeds": list(seeds),
        "n_samples": len(seeds),
        "discarded": config.warmup_discard,
        "points_per_sample": config.kept_steps,
    }


def save_manifest(manifest: Dict, filename: Union[Path, str]) -> None:
    with open(filename, "w") as f:
        json.dump(manifest, f, indent=2)
