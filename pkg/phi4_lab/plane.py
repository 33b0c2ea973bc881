"""
Approximating the plane by growing tori.

Initial data on a large torus are cut off and periodized onto smaller ones,
M-periodic fields are tiled onto multiples of M, and weighted norms are taken
over the central M-cell. The two studies measure how far the Wick stack and
the remainder Y move when M doubles, with every torus driven by the same
white noise.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from phi4_lab.besov import (
    STEP_CENTER,
    STEP_HALF_WIDTH,
    BesovParams,
    DyadicPartition,
    PartitionConfig,
    PolynomialWeight,
    besov_terms,
    block_values,
    build_partition,
    lq_aggregate,
    smooth_step,
    weighted_lp_norm,
)
from phi4_lab.errors import ConfigError, IncommensurateGrids
from phi4_lab.gaussian import (
    HeatSampler,
    NoiseStream,
    WickStack,
    grid_wick_variance,
)
from phi4_lab.grid import RealField, TorusGrid
from phi4_lab.solver import SolverConfig, solve_global

CSV_COLUMNS = ("n", "M", "D", "fit_exponent")


@dataclass(frozen=True)
class PeriodizationConfig:
    """Cutoff equal to 1 on |x| < bump_inner*M and 0 beyond bump_outer*M."""

    bump_inner: float = 1.0 / 4.0
    bump_outer: float = 1.0 / 3.0
    theta: float = 1.5

    def __post_init__(self):
        if not 0 < self.bump_inner < self.bump_outer < 0.5:
            raise ValueError(
                "need 0 < bump_inner < bump_outer < 1/2, got "
                f"{self.bump_inner}, {self.bump_outer}"
            )

    def cutoff(self, x1: np.ndarray, x2: np.ndarray, M: float) -> np.ndarray:
        """phi(x/M) evaluated at the given points."""
        r = np.sqrt(x1**2 + x2**2) / M
        # map [inner, outer] onto the transition band of smooth_step
        u = (r - self.bump_inner) / (self.bump_outer - self.bump_inner)
        band = STEP_CENTER + STEP_HALF_WIDTH * (2.0 * u - 1.0)
        return smooth_step(band, self.theta)


def _cell_offset(large: TorusGrid, small: TorusGrid) -> int:
    """Index of the small torus' first point inside the large grid."""
    if not math.isclose(large.spacing, small.spacing, rel_tol=1e-12):
        raise IncommensurateGrids(
            f"spacings differ: {large.spacing:g} vs {small.spacing:g}"
        )
    excess = large.points_per_side - small.points_per_side
    if excess < 0 or excess % 2:
        raise IncommensurateGrids(
            f"torus M={small.side_length:g} does not sit centrally in "
            f"M={large.side_length:g}"
        )
    return excess // 2


def grid_for(M: float, spacing: float) -> TorusGrid:
    """The torus of side M with the given spacing."""
    points = M / spacing
    if abs(points - round(points)) > 1e-9 * points:
        raise IncommensurateGrids(f"side {M:g} is not a multiple of h={spacing:g}")
    return TorusGrid(M, int(round(points)))


def periodize_initial(
    X0: RealField,
    M: float,
    config: Optional[PeriodizationConfig] = None,
) -> RealField:
    """
    Sum over z in M Z^2 of (phi_M X0)(. - z), on the M-torus with X0's spacing.

    X0 lives on a reference torus at least as large as M. The cut-off field is
    folded back modulo M, so the result agrees with X0 wherever phi_M = 1.
    """
    config = config or PeriodizationConfig()
    reference = X0.grid
    if M > reference.side_length * (1 + 1e-12):
        raise IncommensurateGrids(
            f"M={M:g} exceeds the reference torus side {reference.side_length:g}"
        )
    target = grid_for(M, reference.spacing)
    offset = _cell_offset(reference, target)
    x1, x2 = reference.points()
    cut = config.cutoff(x1, x2, M) * X0.values
    n = target.points_per_side
    index = (np.arange(reference.points_per_side) - offset) % n
    folded = np.zeros(target.shape)
    rows, cols = np.meshgrid(index, index, indexing="ij")
    np.add.at(folded, (rows, cols), cut)
    return RealField(target, folded)


def tile(f: RealField, factor: int) -> RealField:
    """The M-periodic field f seen on the torus of side factor*M."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"tiling factor must be a positive integer, got {factor}")
    factor = int(factor)
    n = f.grid.points_per_side
    large = TorusGrid(factor * f.grid.side_length, factor * n)
    index = (np.arange(factor * n) - (factor - 1) * n // 2) % n
    return RealField(large, f.values[np.ix_(index, index)])


def cell_besov_norm(
    f: RealField,
    partition: DyadicPartition,
    params: BesovParams,
    cell: float,
) -> float:
    """
    Besov norm of f with the L^p sums restricted to the central cell of side
    ``cell``. Blocks are computed on f's own torus.
    """
    grid = f.grid
    small = grid_for(cell, grid.spacing)
    offset = _cell_offset(grid, small)
    window = slice(offset, offset + small.points_per_side)
    weights = params.weight.on_grid(grid)[window, window]
    blocks = [block[window, window] for block in block_values(f, partition)]
    terms = besov_terms(blocks, params, weights, grid.spacing**2)
    return lq_aggregate(terms, params.q)


@dataclass
class StudyConfig:
    """
    Shared setup of the convergence studies.

    Each torus M of ``M_list`` is compared with the torus refinement*M. All
    tori have spacing 1/points_per_unit and crop their noise from the largest.
    """

    M_list: Tuple[float, ...]
    points_per_unit: int
    dt: float
    t_window: Tuple[float, float]
    sigma: float
    alpha: float
    alpha_prime: float
    p: float
    refinement: int = 2
    theta: float = 1.5
    delta: float = 0.5

    def __post_init__(self):
        self.M_list = tuple(float(m) for m in self.M_list)
        if not self.M_list or min(self.M_list) <= 0:
            raise ConfigError("M_list must hold at least one positive side")
        if int(self.refinement) != self.refinement or self.refinement < 1:
            raise ConfigError(
                f"refinement must be a positive integer, got {self.refinement}"
            )
        if self.points_per_unit < 1:
            raise ConfigError("points_per_unit must be positive")
        t0, t1 = self.t_window
        if not 0 < t0 <= t1:
            raise ConfigError(
                f"time window must satisfy 0 < t0 <= t1, got {t0}, {t1}"
            )
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not 0 < self.alpha < self.alpha_prime:
            raise ConfigError("need 0 < alpha < alpha'")
        if self.sigma < 0 or self.p < 1:
            raise ConfigError("need sigma >= 0 and p >= 1")

    @property
    def spacing(self) -> float:
        return 1.0 / self.points_per_unit

    def sides(self) -> List[float]:
        """Every torus side the study touches, ascending."""
        return sorted(set(self.M_list) | {self.refinement * m for m in self.M_list})

    def grids(self) -> Dict[float, TorusGrid]:
        return {m: grid_for(m, self.spacing) for m in self.sides()}

    def times(self) -> np.ndarray:
        steps = int(math.ceil(self.t_window[1] / self.dt - 1e-9))
        return self.dt * np.arange(steps + 1)

    def window_indices(self) -> List[int]:
        times = self.times()
        t0, t1 = self.t_window
        tol = 1e-9 * self.dt
        return [i for i, t in enumerate(times) if t0 - tol <= t <= t1 + tol]


@dataclass
class DecayTable:
    """
    Distances per (n, M), the largest over seeds, with the per-seed series and
    every place where a distance failed to shrink as M grew.
    """

    rows: List[Dict] = field(default_factory=list)
    per_seed: List[Dict] = field(default_factory=list)
    violations: List[Dict] = field(default_factory=list)
    summary: Dict = field(default_factory=dict)

    def to_csv_rows(self) -> List[List]:
        header = [list(CSV_COLUMNS)]
        return header + [[row[c] for c in CSV_COLUMNS] for row in self.rows]

    def to_dict(self) -> Dict:
        return {
            "rows": self.rows,
            "per_seed": self.per_seed,
            "violations": self.violations,
            "summary": self.summary,
        }


def _fit_exponent(sides: Sequence[float], values: Sequence[float]) -> float:
    """Slope of log D against log M, NaN when fewer than two positive values."""
    points = [(math.log(m), math.log(d)) for m, d in zip(sides, values) if d > 0]
    if len(set(x for x, _ in points)) < 2:
        return math.nan
    x, y = zip(*points)
    return float(np.polyfit(x, y, 1)[0])


def _collect(
    seeds: Sequence[int],
    study: StudyConfig,
    per_seed: Callable[[int], Dict[int, List[float]]],
    workers: int,
    components: Sequence[int],
) -> DecayTable:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(per_seed, seeds))
    else:
        results = [per_seed(seed) for seed in seeds]
    table = DecayTable()
    sides = list(study.M_list)
    for seed, distances in zip(seeds, results):
        for n in components:
            series = distances[n]
            table.per_seed.append({"seed": seed, "n": n, "M": sides, "D": series})
            order = sorted(range(len(sides)), key=lambda j: sides[j])
            for before, after in zip(order, order[1:]):
                if sides[after] > sides[before] and series[after] >= series[before] > 0:
                    table.violations.append(
                        {
                            "seed": seed,
                            "n": n,
                            "M": sides[after],
                            "D": series[after],
                            "previous": series[before],
                        }
                    )
    for n in components:
        worst = [
            max(distances[n][j] for distances in results) for j in range(len(sides))
        ]
        exponent = _fit_exponent(sides, worst)
        for m, d in zip(sides, worst):
            table.rows.append({"n": n, "M": m, "D": d, "fit_exponent": exponent})
    return table


def _partitions(study: StudyConfig, grids: Dict[float, TorusGrid]):
    return {
        side: build_partition(
            grid, PartitionConfig.for_grid(grid, study.theta, study.delta)
        )
        for side, grid in grids.items()
    }


def _sampled_stack(grid, times, seed, reference, subtracted) -> WickStack:
    return WickStack(
        grid,
        times,
        HeatSampler(grid, NoiseStream(seed), reference),
        subtracted=subtracted,
        keep_history=False,
    )


def stack_convergence_study(
    seeds: Sequence[int],
    study: StudyConfig,
    workers: int = 1,
    verbose: bool = False,
) -> DecayTable:
    """
    D_n(M) = sup over the window of t^((n-1)alpha') ||Z^n_M - Z^n_{rM}||.

    The norm is B^{-alpha}_{p/n, inf} with polynomial weight sigma, summed over
    the central M-cell; r is the study's refinement factor.
    """
    grids = study.grids()
    reference = grids[max(grids)]
    times = study.times()
    window = study.window_indices()
    partitions = _partitions(study, grids)
    weight = PolynomialWeight(study.sigma)
    r = int(study.refinement)
    # one subtracted constant for all tori, so they differ only through noise
    subtracted = grid_wick_variance(reference, 1.0)

    def per_seed(seed):
        stacks = {
            side: _sampled_stack(grid, times, seed, reference, subtracted)
            for side, grid in grids.items()
        }
        distances = {n: [0.0] * len(study.M_list) for n in (1, 2, 3)}
        for i in window:
            t = float(times[i])
            triples = {side: stack.triple(i) for side, stack in stacks.items()}
            for j, m in enumerate(study.M_list):
                for n in (1, 2, 3):
                    gap = tile(triples[m][n - 1], r) - triples[r * m][n - 1]
                    params = BesovParams(
                        -study.alpha, max(study.p / n, 1.0), math.inf, weight
                    )
                    norm = cell_besov_norm(gap, partitions[r * m], params, m)
                    value = t ** ((n - 1) * study.alpha_prime) * norm
                    distances[n][j] = max(distances[n][j], value)
            for stack in stacks.values():
                stack.discard_before(i)
        if verbose:
            print(f"[converge] stack seed={seed} done")
        return distances

    table = _collect(seeds, study, per_seed, workers, (1, 2, 3))
    table.summary = {
        "study": "stack",
        "reference_exponent": study.sigma - 2.0,
        "M_list": list(study.M_list),
        "seeds": list(seeds),
        "violations": len(table.violations),
    }
    return table


def _bound_violations(
    bounds: Dict[Tuple[int, float], float], factor: float
) -> List[Dict[str, float]]:
    """Runs whose bound exceeds factor times their seed's smallest-torus bound."""
    found = []
    for seed in sorted({seed for seed, _ in bounds}):
        sides = sorted(m for s, m in bounds if s == seed)
        base = bounds[(seed, sides[0])]
        for m in sides[1:]:
            value = bounds[(seed, m)]
            if value > factor * base:
                ratio = value / base if base > 0 else math.inf
                found.append({"seed": seed, "M": m, "ratio": ratio})
    return found


def solution_convergence_study(
    seeds: Sequence[int],
    study: StudyConfig,
    config: SolverConfig,
    workers: int = 1,
    zero_noise: bool = False,
    verbose: bool = False,
    bound_factor: float = 2.0,
) -> DecayTable:
    """
    sup_t ||Y_M - Y_{rM}|| in B^{beta}_{p/9, inf} with polynomial weight sigma
    on the central M-cell.

    The summary also carries the uniform bound: sup_t ||Y_t||_{L^p} with the
    same weight for every run, their maximum C, and every run whose bound
    exceeds bound_factor times the bound of the seed's smallest torus.
    """
    if not math.isclose(config.dt, study.dt):
        raise ConfigError(f"solver dt={config.dt} differs from study dt={study.dt}")
    grids = study.grids()
    reference = grids[max(grids)]
    times = config.times()
    partitions = _partitions(study, grids)
    params = BesovParams(
        config.beta, max(study.p / 9, 1.0), math.inf, PolynomialWeight(study.sigma)
    )
    weight = PolynomialWeight(study.sigma)
    r = int(study.refinement)
    subtracted = grid_wick_variance(reference, 1.0)
    bounds: Dict[Tuple[int, float], float] = {}

    def per_seed(seed):
        trajectories = {}
        for side, grid in grids.items():
            if zero_noise:
                stack = WickStack.zero(grid, times)
            else:
                stack = _sampled_stack(grid, times, seed, reference, subtracted)
            traj = solve_global(stack, config, verbose=verbose)
            bounds[(seed, side)] = max(
                weighted_lp_norm(y, config.p_diag, weight) for y in traj.Y
            )
            trajectories[side] = traj
        distances = {1: [0.0] * len(study.M_list)}
        for j, m in enumerate(study.M_list):
            coarse, fine = trajectories[m], trajectories[r * m]
            distances[1][j] = max(
                cell_besov_norm(tile(a, r) - b, partitions[r * m], params, m)
                for a, b in zip(coarse.Y, fine.Y)
            )
        if verbose:
            print(f"[converge] solution seed={seed} done")
        return distances

    table = _collect(seeds, study, per_seed, workers, (1,))
    table.summary = {
        "study": "solution",
        "M_list": list(study.M_list),
        "seeds": list(seeds),
        "violations": len(table.violations),
        "uniform_bounds": [
            {"seed": seed, "M": m, "sup_lp": value}
            for (seed, m), value in sorted(bounds.items())
        ],
        "common_bound": max(bounds.values()) if bounds else 0.0,
        "bound_factor": bound_factor,
        "bound_violations": _bound_violations(bounds, bound_factor),
    }
    return table
