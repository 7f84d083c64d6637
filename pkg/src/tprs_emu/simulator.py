"""Two-spill pollutant channel simulator and external dataset ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import OutputGrid, grid_from_locations, lattice_grid
from .design import InputRanges, read_design_csv, write_design_csv
from .errors import InputError

# (low, high) for mass 1, diffusion 1, mass 2, diffusion 2
POLLUTANT_RANGES = np.array([[7.0, 13.0], [0.02, 0.12], [7.0, 13.0], [0.02, 0.12]])

DEFAULT_LOCATION_BOX = (0.0, 3.0)
DEFAULT_TIME_BOX = (0.0, 60.5)


@dataclass
class SimDataset:
    """``n`` runs of a simulator on a common output grid (raw responses)."""

    inputs: np.ndarray
    grid: OutputGrid
    responses: np.ndarray
    ranges: InputRanges
    run_ids: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.responses = np.atleast_2d(np.asarray(self.responses, dtype=float))
        n = self.inputs.shape[0]
        if self.responses.shape != (n, self.grid.r):
            raise InputError(
                f"responses shape {self.responses.shape} != ({n}, {self.grid.r})"
            )
        if self.inputs.shape[1] != self.ranges.d:
            raise InputError("inputs and ranges disagree on d")
        if self.run_ids is None:
            self.run_ids = np.arange(n)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def unit_inputs(self) -> np.ndarray:
        return self.ranges.to_unit(self.inputs)


@dataclass(frozen=True)
class SpillConfig:
    """Second-spill geometry and which inputs vary.

    Inputs not listed in ``active_dims`` are held at ``fixed`` (defaults to
    the mid-points of their ranges).
    """

    L: float = 1.505
    t_spill: float = 30.1525
    active_dims: tuple = (0, 1, 2, 3)
    fixed: tuple = field(default_factory=lambda: tuple(POLLUTANT_RANGES.mean(axis=1)))

    def __post_init__(self):
        if not self.t_spill > 0:
            raise InputError("t_spill must be positive")
        for j, v in enumerate(self.fixed):
            lo, hi = POLLUTANT_RANGES[j]
            if not lo <= v <= hi:
                raise InputError(f"fixed value {v} for x{j + 1} outside [{lo}, {hi}]")

    @classmethod
    def scenario(cls, d: int, **kw) -> "SpillConfig":
        if d not in (1, 2, 3, 4):
            raise InputError(f"scenario d must be 1..4, got {d}")
        return cls(active_dims=tuple(range(d)), **kw)

    @property
    def ranges(self) -> InputRanges:
        sel = POLLUTANT_RANGES[list(self.active_dims)]
        return InputRanges(sel[:, 0], sel[:, 1])

    def full_input(self, x_active) -> np.ndarray:
        x = np.array(self.fixed, dtype=float)
        x[list(self.active_dims)] = x_active
        return x


def _spill(mass, diff, loc, time):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        amp = mass / np.sqrt(4.0 * math.pi * diff * time)
        return amp * np.exp(-(loc**2) / (4.0 * diff * time))


def concentration_field(x, S, config: SpillConfig | None = None) -> np.ndarray:
    """Concentration at every row ``(location, time)`` of ``S`` for inputs ``x``."""
    config = config or SpillConfig()
    x = np.asarray(x, dtype=float)
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if x.shape != (4,):
        raise InputError("x must hold (mass1, diff1, mass2, diff2)")
    if S.shape[1] != 2:
        raise InputError("output locations must be (location, time) pairs")
    if np.any(S[:, 1] <= 0):
        raise InputError("time must be strictly positive")
    if x[1] <= 0 or x[3] <= 0:
        raise InputError("diffusion rates must be positive")
    s1, s2 = S[:, 0], S[:, 1]
    out = _spill(x[0], x[1], s1, s2)
    late = s2 > config.t_spill
    if np.any(late):
        out[late] += _spill(x[2], x[3], s1[late] - config.L, s2[late] - config.t_spill)
    return out


def pollutant_concentration(x, s, config: SpillConfig | None = None) -> float:
    """Closed-form two-spill concentration at one ``(location, time)``."""
    return float(concentration_field(x, np.asarray(s, dtype=float)[None, :], config)[0])


def default_grid(k_location: int = 50, k_time: int = 50, location_box=DEFAULT_LOCATION_BOX,
                 time_box=DEFAULT_TIME_BOX) -> OutputGrid:
    return lattice_grid((k_location, k_time), (location_box, time_box))


def generate_dataset(design, scenario_d: int, grid: OutputGrid,
                     config: SpillConfig | None = None) -> SimDataset:
    """Run the simulator at every design point over the grid.

    ``design`` columns are the first ``scenario_d`` inputs in physical units.
    """
    config = config or SpillConfig.scenario(scenario_d)
    design = np.atleast_2d(np.asarray(design, dtype=float))
    if design.shape[1] != scenario_d or len(config.active_dims) != scenario_d:
        raise InputError(
            f"design has {design.shape[1]} columns; scenario d={scenario_d}, "
            f"config varies {len(config.active_dims)}"
        )
    Y = np.vstack([concentration_field(config.full_input(row), grid.locations, config) for row in design])
    return SimDataset(design, grid, Y, config.ranges)


def read_external(inputs_csv, grid_csv, outputs_csv, ranges: InputRanges | None = None,
                  grid: OutputGrid | None = None) -> SimDataset:
    """Load ``inputs.csv`` / ``grid.csv`` / ``outputs.csv`` into a dataset.

    ``outputs.csv`` must hold exactly one ``y`` per (run, location) pair.
    When ``ranges`` is omitted the input box is the data's min/max.
    """
    run_ids, X = read_design_csv(inputs_csv)
    with open(grid_csv, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0] != "loc_id":
        raise InputError(f"{grid_csv}: expected header loc_id,s1,...")
    loc_ids = [r[0] for r in rows[1:]]
    S = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    if grid is None:
        grid = grid_from_locations(S)
    elif not np.allclose(grid.locations, S):
        raise InputError(f"{grid_csv} does not match the supplied grid")
    run_pos = {rid: i for i, rid in enumerate(run_ids)}
    loc_pos = {lid: j for j, lid in enumerate(loc_ids)}
    Y = np.full((len(run_ids), len(loc_ids)), np.nan)
    with open(outputs_csv, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["run_id", "loc_id", "y"]:
            raise InputError(f"{outputs_csv}: expected header run_id,loc_id,y")
        for row in reader:
            if not row:
                continue
            try:
                i, j = run_pos[row[0]], loc_pos[row[1]]
            except KeyError as exc:
                raise InputError(f"{outputs_csv}: unknown id {exc}") from exc
            if not np.isnan(Y[i, j]):
                raise InputError(f"{outputs_csv}: duplicate cell ({row[0]}, {row[1]})")
            Y[i, j] = float(row[2])
    missing = np.argwhere(np.isnan(Y))
    if missing.size:
        i, j = missing[0]
        raise InputError(
            f"{outputs_csv}: {len(missing)} missing cells, first run={run_ids[i]} loc={loc_ids[j]}"
        )
    if ranges is None:
        lo, hi = X.min(axis=0), X.max(axis=0)
        ranges = InputRanges(lo, np.where(hi > lo, hi, lo + 1.0))
    return SimDataset(X, grid, Y, ranges, run_ids=run_ids)


def write_external(dataset: SimDataset, directory) -> None:
    """Write a dataset as the ``inputs/grid/outputs`` CSV triple."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_design_csv(directory / "inputs.csv", dataset.inputs)
    with open(directory / "grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["loc_id"] + [f"s{j + 1}" for j in range(dataset.grid.q)])
        for j, row in enumerate(dataset.grid.locations):
            w.writerow([j] + [repr(float(v)) for v in row])
    with open(directory / "outputs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "loc_id", "y"])
        for i in range(dataset.n):
            for j in range(dataset.grid.r):
                w.writerow([i, j, repr(float(dataset.responses[i, j]))])
