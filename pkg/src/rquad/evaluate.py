"""Robustness sweep of a frozen policy over mass and action perturbations."""
from __future__ import annotations

import io
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import env as quad_env
from . import nn
from .env import EnvConfig, PerturbConfig
from .nn import MlpParams
from .sim import QuadState

STRESS_MASS_RATIOS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0)
STRESS_DELTAS = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)
CORNER_LABEL = "mass_ratio\\delta"
SWEEP_STREAM_KEY = 0x535750


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class PerturbGrid:
    mass_ratios: tuple = STRESS_MASS_RATIOS
    deltas: tuple = STRESS_DELTAS
    episodes_per_cell: int = 10

    def __post_init__(self):
        object.__setattr__(self, "mass_ratios", tuple(float(m) for m in self.mass_ratios))
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        if not self.mass_ratios or min(self.mass_ratios) <= 0:
            raise ValueError(f"mass_ratios: need positive values, got {self.mass_ratios}")
        if not self.deltas or min(self.deltas) < 0 or max(self.deltas) > 1:
            raise ValueError(f"deltas: need values in [0, 1], got {self.deltas}")
        if self.episodes_per_cell < 1:
            raise ValueError(f"episodes_per_cell: must be >= 1, got {self.episodes_per_cell}")

    @property
    def shape(self) -> tuple:
        return len(self.mass_ratios), len(self.deltas)

    def cells(self):
        return itertools.product(range(len(self.mass_ratios)), range(len(self.deltas)))


@dataclass
class Heatmap:
    grid: PerturbGrid
    mean_returns: np.ndarray
    # per_cell_returns[i][j] lists the episode returns of cell (i, j)
    per_cell_returns: List[List[List[float]]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join([CORNER_LABEL] + [repr(d) for d in self.grid.deltas]) + "\n")
        for m, row in zip(self.grid.mass_ratios, self.mean_returns):
            buf.write(",".join([repr(m)] + [repr(float(v)) for v in row]) + "\n")
        return buf.getvalue()

    def episodes_csv(self) -> str:
        buf = io.StringIO()
        buf.write("mass_ratio,delta,episode,return\n")
        for i, j in self.grid.cells():
            for k, ret in enumerate(self.per_cell_returns[i][j]):
                buf.write(f"{self.grid.mass_ratios[i]!r},{self.grid.deltas[j]!r},{k},{float(ret)!r}\n")
        return buf.getvalue()

    def save(self, path, episodes_path=None) -> None:
        Path(path).write_text(self.to_csv())
        if episodes_path is not None:
            Path(episodes_path).write_text(self.episodes_csv())

    @classmethod
    def from_csv(cls, text: str) -> "Heatmap":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty heatmap CSV")
        header = [c.strip() for c in lines[0].split(",")]
        if header[0] != CORNER_LABEL:
            raise ValueError(f"heatmap CSV must start with {CORNER_LABEL!r}, got {header[0]!r}")
        deltas = [float(c) for c in header[1:]]
        ratios, rows = [], []
        for ln in lines[1:]:
            cols = [float(c) for c in ln.split(",")]
            if len(cols) != len(deltas) + 1:
                raise ValueError(f"row {ln!r} has {len(cols) - 1} values, header has {len(deltas)}")
            ratios.append(cols[0])
            rows.append(cols[1:])
        # episode count is not recorded in the matrix file
        grid = PerturbGrid(tuple(ratios), tuple(deltas), 1)
        return cls(grid, np.array(rows, dtype=float))

    @classmethod
    def load(cls, path) -> "Heatmap":
        return cls.from_csv(Path(path).read_text())


def episode_return(
    policy: MlpParams,
    config: EnvConfig,
    rng: np.random.Generator,
    perturb: PerturbConfig = quad_env.NOMINAL,
    initial_state: Optional[QuadState] = None,
) -> float:
    """Undiscounted return of one deterministic rollout of ``policy``.

    The initial state is drawn from the training distribution unless given.
    """
    task = config.task
    plant = config.params.with_mass_ratio(perturb.mass_ratio)
    state = initial_state if initial_state is not None else quad_env.reset(task, rng, config.params)
    obs = quad_env.observe(state, task)
    total, t, done = 0.0, 0, False
    while not done:
        a = nn.predict(policy, obs)
        state, obs, r, done = quad_env.env_step(state, a, t, config, rng, perturb, plant)
        total += r
        t += 1
    return total


def cell_rng(seed: int, i: int, j: int, k: int) -> np.random.Generator:
    ss = np.random.SeedSequence([seed, SWEEP_STREAM_KEY, i, j, k])
    return np.random.Generator(np.random.PCG64(ss))


def run_cell(policy: MlpParams, grid: PerturbGrid, config: EnvConfig, seed: int, i: int, j: int) -> List[float]:
    perturb = PerturbConfig(grid.mass_ratios[i], grid.deltas[j])
    return [
        episode_return(policy, config, cell_rng(seed, i, j, k), perturb)
        for k in range(grid.episodes_per_cell)
    ]


def sweep(
    policy: MlpParams,
    grid: PerturbGrid = PerturbGrid(),
    config: EnvConfig = EnvConfig(),
    seed: int = 0,
    n_jobs: int = 1,
    order: Optional[Sequence[tuple]] = None,
) -> Heatmap:
    """Mean episode return for every (mass ratio, delta) cell.

    Each episode owns a stream derived from ``(seed, i, j, k)``, so the
    result does not depend on ``order`` or ``n_jobs``.
    """
    cells = list(order) if order is not None else list(grid.cells())
    if sorted(cells) != sorted(grid.cells()):
        raise ValueError("order must be a permutation of the grid cells")
    if n_jobs == 1:
        results = [run_cell(policy, grid, config, seed, i, j) for i, j in cells]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(
            delayed(run_cell)(policy, grid, config, seed, i, j) for i, j in cells
        )
    per_cell = [[None] * len(grid.deltas) for _ in grid.mass_ratios]
    for (i, j), rets in zip(cells, results):
        per_cell[i][j] = rets
    means = np.array([[float(np.mean(c)) for c in row] for row in per_cell])
    return Heatmap(grid, means, per_cell)


@dataclass
class Comparison:
    difference: np.ndarray
    win_fraction: float
    grid: PerturbGrid

    def to_csv(self) -> str:
        return Heatmap(self.grid, self.difference).to_csv()


def _same_axes(a: PerturbGrid, b: PerturbGrid) -> bool:
    return a.mass_ratios == b.mass_ratios and a.deltas == b.deltas


def compare(robust: Heatmap, baseline: Heatmap) -> Comparison:
    """Cell-wise ``robust - baseline`` and the share of cells robust wins strictly."""
    if not _same_axes(robust.grid, baseline.grid):
        raise GridMismatchError(
            f"grids differ: mass ratios {robust.grid.mass_ratios} x deltas {robust.grid.deltas} "
            f"vs mass ratios {baseline.grid.mass_ratios} x deltas {baseline.grid.deltas}"
        )
    diff = np.asarray(robust.mean_returns) - np.asarray(baseline.mean_returns)
    wins = float(np.mean(np.asarray(robust.mean_returns) > np.asarray(baseline.mean_returns)))
    return Comparison(diff, wins, robust.grid)


def average(heatmaps: Sequence[Heatmap]) -> Heatmap:
    """Cell-wise mean over heatmaps sharing one grid (e.g. several seeds)."""
    first = heatmaps[0]
    for h in heatmaps[1:]:
        if not _same_axes(first.grid, h.grid):
            raise GridMismatchError("cannot average heatmaps over different grids")
    means = np.mean([h.mean_returns for h in heatmaps], axis=0)
    return Heatmap(first.grid, means)
