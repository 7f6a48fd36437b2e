"""Configurations, replicate streams and the simulation driver."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import _engine

__all__ = [
    "Model",
    "ConfigError",
    "SimulationError",
    "SimulationConfig",
    "SurvivorConfiguration",
    "replicate_rng",
    "thread_count",
    "run_replicate",
    "simulate",
]

THREADS_ENV = "COALDET_THREADS"
DEBUG_ENV = "COALDET_DEBUG"


class Model(str, Enum):
    PARITY_WALK = "parity_walk"
    CT_SIMPLE_WALK = "ct_simple_walk"
    BROWNIAN_FINE_LATTICE = "brownian_fine_lattice"


class ConfigError(ValueError):
    """Invalid simulation configuration."""


class SimulationError(RuntimeError):
    """A replicate violated an invariant of the dynamics."""


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream number ``index`` under master key ``seed``.

    Streams are counter offsets of one keyed generator, so replicate ``r``
    sees the same numbers whatever order or thread it runs in.
    """
    return np.random.Generator(np.random.Philox(key=int(seed)).jumped(int(index)))


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(n, 1)


@dataclass(frozen=True)
class SimulationConfig:
    """One simulation run.

    ``initial_occupancy`` is ``"all"`` (every site of the window), an explicit
    list of sites, or ``{"parity": p}`` for the parity walk.  Lengths are in
    sites for the lattice models and in real units for the fine lattice.
    """

    model: Model
    horizon: float
    window_halfwidth: float
    replicates: int
    seed: int
    margin_sigmas: float = 6.0
    lattice_spacing: float | None = None
    initial_occupancy: object = "all"

    def __post_init__(self):
        try:
            object.__setattr__(self, "model", Model(self.model))
        except ValueError:
            raise ConfigError(f"unknown model {self.model!r}") from None
        if self.seed is None or isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError("an integer seed is required")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError("replicates must be a positive integer")
        T = float(self.horizon)
        if not (math.isfinite(T) and T >= 0):
            raise ConfigError(f"horizon must be finite and >= 0, got {self.horizon}")
        if self.model is Model.PARITY_WALK and T != int(T):
            raise ConfigError("the parity walk needs an integer number of steps")
        if self.margin_sigmas < 0:
            raise ConfigError("margin_sigmas must be >= 0")
        if self.model is Model.BROWNIAN_FINE_LATTICE:
            if self.lattice_spacing is None or not self.lattice_spacing > 0:
                raise ConfigError("the fine lattice needs lattice_spacing > 0")
        elif self.lattice_spacing is not None:
            raise ConfigError("lattice_spacing only applies to brownian_fine_lattice")
        occ = self.initial_occupancy
        if isinstance(occ, dict):
            if set(occ) != {"parity"} or occ["parity"] not in (0, 1):
                raise ConfigError("parity occupancy must be {'parity': 0 or 1}")
            if self.model is not Model.PARITY_WALK:
                raise ConfigError("sublattice occupancy only applies to parity_walk")
        elif isinstance(occ, str):
            if occ != "all":
                raise ConfigError(f"unknown occupancy {occ!r}")
            if self.model is Model.PARITY_WALK:
                raise ConfigError(
                    "parity_walk cannot occupy both parities: particles on opposite "
                    "sublattices swap places without ever sharing a site, so they "
                    "cross instead of coalescing; use {'parity': p}"
                )
        else:
            sites = list(occ)
            if not sites or any(int(s) != s for s in sites):
                raise ConfigError("explicit occupancy must be a nonempty list of integer sites")
            if any(a >= b for a, b in zip(sites, sites[1:])):
                raise ConfigError("explicit sites must be strictly increasing")
            if self.model is Model.PARITY_WALK and len({s % 2 for s in sites}) > 1:
                raise ConfigError(
                    "parity_walk sites must share one parity: particles on opposite "
                    "sublattices cross without meeting"
                )
            object.__setattr__(self, "initial_occupancy", tuple(int(s) for s in sites))
        if self.window_halfwidth <= 0:
            raise ConfigError("window_halfwidth must be positive")
        if self.explicit_sites is None and self.observation_halfwidth_sites() <= 0:
            raise ConfigError(
                f"window halfwidth {self.window_halfwidth} does not exceed the margin "
                f"{self.margin:.6g}"
            )

    @property
    def explicit_sites(self):
        return self.initial_occupancy if isinstance(self.initial_occupancy, tuple) else None

    @property
    def spacing(self) -> float:
        """Length of one lattice step in reported units."""
        return float(self.lattice_spacing) if self.model is Model.BROWNIAN_FINE_LATTICE else 1.0

    @property
    def site_step(self) -> int:
        """Distance between occupied sites in lattice units."""
        return 2 if self.model is Model.PARITY_WALK else 1

    @property
    def margin(self) -> float:
        return self.margin_sigmas * math.sqrt(2.0 * float(self.horizon))

    def halfwidth_sites(self) -> int:
        return int(round(self.window_halfwidth / self.spacing))

    def observation_halfwidth_sites(self) -> int:
        return int(math.floor((self.window_halfwidth - self.margin) / self.spacing + 1e-9))

    def starts(self) -> np.ndarray:
        """Initial sites in lattice units."""
        if self.explicit_sites is not None:
            return np.asarray(self.explicit_sites, dtype=np.int64)
        L = self.halfwidth_sites()
        sites = np.arange(-L, L + 1, dtype=np.int64)
        if self.model is Model.PARITY_WALK:
            sites = sites[sites % 2 == self.initial_occupancy["parity"]]
        return sites

    def observation_window(self) -> tuple[float, float]:
        """Half-open window ``[lo, hi)`` in reported units."""
        if self.explicit_sites is not None:
            return (-math.inf, math.inf)
        W = self.observation_halfwidth_sites()
        return (-W * self.spacing, W * self.spacing)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.value
        if isinstance(self.initial_occupancy, tuple):
            d["initial_occupancy"] = list(self.initial_occupancy)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        missing = {"model", "horizon", "window_halfwidth", "replicates", "seed"} - set(d)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "SimulationConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class SurvivorConfiguration:
    """One replicate at time ``T``.

    Positions are in reported units.  ``basins[j]`` is the closed interval of
    initial sites absorbed by survivor ``j`` and ``walls[j]`` separates basins
    ``j`` and ``j + 1``.
    """

    survivors: np.ndarray
    walls: np.ndarray
    basins: np.ndarray
    observation_window: tuple[float, float]
    spacing: float = 1.0
    replicate: int = 0
    extras: dict = field(default_factory=dict, compare=False)

    def survivors_in_window(self) -> np.ndarray:
        lo, hi = self.observation_window
        return self.survivors[(self.survivors >= lo) & (self.survivors < hi)]

    def walls_in_window(self) -> np.ndarray:
        lo, hi = self.observation_window
        return self.walls[(self.walls >= lo) & (self.walls < hi)]


def _check_replicate(pos, lo, hi, n):
    if n == 0:
        return
    if lo[0] != 0 or hi[-1] != n - 1 or np.any(lo[1:] != hi[:-1] + 1) or np.any(hi < lo):
        raise SimulationError("basins do not partition the initial sites")
    if np.any(np.diff(pos) <= 0):
        raise SimulationError("survivor order was not preserved")


def run_replicate(config: SimulationConfig, index: int) -> SurvivorConfiguration:
    """Replicate number ``index`` of ``config`` (deterministic in both)."""
    rng = replicate_rng(config.seed, index)
    starts = config.starts()
    T = float(config.horizon)
    if config.model is Model.PARITY_WALK:
        pos, lo, hi = _engine.run_parity_walk(starts, int(T), rng)
    elif config.model is Model.CT_SIMPLE_WALK:
        pos, lo, hi = _engine.run_ct_walk(starts, 1.0, T, rng)
    else:
        eps = config.spacing
        pos, lo, hi = _engine.run_ct_walk(starts, 1.0 / (2.0 * eps * eps), T, rng)
    _check_replicate(pos, lo, hi, len(starts))
    s = config.spacing
    walls = 0.5 * (starts[hi[:-1]] + starts[lo[1:]]) * s
    basins = np.stack([starts[lo], starts[hi]], axis=-1) * s
    if config.model is Model.BROWNIAN_FINE_LATTICE:
        survivors = pos * s
    else:
        survivors, basins = pos, basins.astype(np.int64)
    return SurvivorConfiguration(
        survivors=survivors,
        walls=walls,
        basins=basins,
        observation_window=config.observation_window(),
        spacing=s,
        replicate=index,
    )


def simulate(
    config: SimulationConfig,
    replicates: Sequence[int] | None = None,
    threads: int | None = None,
) -> Iterator[SurvivorConfiguration]:
    """Yield replicates in index order; threads only change the wall time."""
    indices = range(config.replicates) if replicates is None else replicates
    threads = thread_count() if threads is None else max(int(threads), 1)
    if threads == 1:
        for r in indices:
            yield run_replicate(config, r)
        return
    with ThreadPoolExecutor(threads) as pool:
        # bounded look-ahead keeps memory flat on long runs
        pending = []
        it = iter(indices)
        for r in it:
            pending.append(pool.submit(run_replicate, config, r))
            if len(pending) >= 4 * threads:
                yield pending.pop(0).result()
        for fut in pending:
            yield fut.result()
