"""
The remainder equation dY = (Laplacian Y + Psi(Y, Z)) dt in mild form.

Time stepping is exponential Euler: the heat factor is exact per Fourier mode
and Psi is frozen over each step, with the stack taken at the step midpoint.
Short windows are solved by Picard iteration of the discrete mild map and glued
together; a window is halved when the iteration fails to contract.
"""

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from phi4_lab.besov import FlatWeight, lp_sum
from phi4_lab.errors import (
    ConditionWarning,
    ConfigError,
    PicardDiverged,
    SolverAbort,
)
from phi4_lab.gaussian import WickStack
from phi4_lab.grid import (
    Dealiaser,
    RealField,
    TorusGrid,
    analyze,
    check_same_grid,
    synthesize,
    wavenumber_magnitudes,
)

GUESSES = ("heat", "zero", "noise")


@dataclass
class SolverConfig:
    a: float
    dt: float
    T: float
    p_diag: int
    alpha: float
    alpha_prime: float
    beta: float
    picard_tol: float = 1e-10
    picard_max_iters: int = 50
    record_every: int = 1
    initial_window: int = 64
    picard_guess: str = "heat"
    energy_diagnostics: bool = True

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ConfigError(
                f"dt and T must be positive, got dt={self.dt}, T={self.T}"
            )
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError(f"T={self.T} is not a multiple of dt={self.dt}")
        if int(self.p_diag) != self.p_diag or self.p_diag < 4 or self.p_diag % 2:
            raise ConfigError(f"p must be an even integer >= 4, got {self.p_diag}")
        if not 0 < self.alpha < self.alpha_prime:
            raise ConfigError(
                f"need 0 < alpha < alpha', got {self.alpha}, {self.alpha_prime}"
            )
        if not 1 < self.beta < 2:
            raise ConfigError(f"need 1 < beta < 2, got {self.beta}")
        if self.record_every < 1 or self.initial_window < 1:
            raise ConfigError("record_every and initial_window must be >= 1")
        if self.picard_guess not in GUESSES:
            raise ConfigError(
                f"picard_guess must be one of {', '.join(GUESSES)}, "
                f"got {self.picard_guess!r}"
            )

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    def conditions(self) -> List[Tuple[str, bool]]:
        """Smallness conditions of the L^p a-priori bound, with their status."""
        p, ap, b = self.p_diag, self.alpha_prime, self.beta
        return [
            ("alpha'(p+2) < 1", ap * (p + 2) < 1),
            (
                "(alpha'+beta)/2 + 3(alpha'+1/p) < 1",
                (ap + b) / 2 + 3 * (ap + 1 / p) < 1,
            ),
        ]

    def warn_conditions(self) -> List[str]:
        failed = [name for name, holds in self.conditions() if not holds]
        for name in failed:
            warnings.warn(
                f"a-priori condition {name} fails for p={self.p_diag}, "
                f"alpha'={self.alpha_prime}, beta={self.beta}",
                ConditionWarning,
                stacklevel=2,
            )
        return failed


class Dynamics:
    """Spectral operators of one (grid, config) pair."""

    def __init__(self, grid: TorusGrid, config: SolverConfig):
        self.grid = grid
        self.config = config
        lam = wavenumber_magnitudes(grid) ** 2
        z = -lam * config.dt
        self.decay = np.exp(z)
        self.phi1 = np.divide(np.expm1(z), z, out=np.ones_like(z), where=z != 0)
        self.forcing = config.dt * self.phi1
        self.dealiaser = Dealiaser(grid, order=3)
        self._energy: Dict[int, Dealiaser] = {}
        self._z1, self._z2 = grid.wavevectors()
        self._mask = grid.resolved_mask()

    def psi_hat(self, y_hat: np.ndarray, stack_hat: Sequence[np.ndarray]) -> np.ndarray:
        lift = self.dealiaser.lift
        y = lift(y_hat)
        z1, z2, z3 = (lift(s) for s in stack_hat)
        a = self.config.a
        values = -(y**3) - 3 * y * y * z1 - 3 * y * z2 - z3 + a * (y + z1)
        return self.dealiaser.project(values)

    def step(self, y_hat: np.ndarray, stack_hat: Sequence[np.ndarray]) -> np.ndarray:
        return self.decay * y_hat + self.forcing * self.psi_hat(y_hat, stack_hat)

    def sup(self, spectrum: np.ndarray) -> float:
        return float(np.max(np.abs(synthesize(self.grid, spectrum))))

    def energy_terms(
        self,
        y_hat: np.ndarray,
        psi: Optional[np.ndarray],
        p: Optional[int] = None,
    ) -> Tuple[float, float]:
        """
        (1/p) int Y^p and the right side of its time derivative.

        Integrals are exact for the band-limited Y: the integrands are
        evaluated on a grid padded enough for degree p.
        """
        p = self.config.p_diag if p is None else p
        if p not in self._energy:
            self._energy[p] = Dealiaser(self.grid, order=p)
        padded = self._energy[p]
        lift = padded.lift
        area = (self.grid.side_length / padded.padded_size) ** 2
        y = lift(y_hat)
        d1 = lift(1j * self._z1 * self._mask * y_hat)
        d2 = lift(1j * self._z2 * self._mask * y_hat)
        power = y ** (p - 2)
        level = float(np.sum(power * y * y)) * area / p
        rate = -(p - 1) * float(np.sum(power * (d1 * d1 + d2 * d2))) * area
        if psi is not None:
            rate += float(np.sum(lift(psi) * power * y)) * area
        return level, rate


def psi(Y: RealField, stack_at_t: Sequence[RealField], a: float) -> RealField:
    """-Y^3 - 3Y^2 Z1 - 3Y Z2 - Z3 + a(Y + Z1), all products dealiased."""
    grid = check_same_grid(Y, *stack_at_t)
    dealiaser = Dealiaser(grid, order=3)
    y = dealiaser.lift_field(Y)
    z1, z2, z3 = (dealiaser.lift_field(z) for z in stack_at_t)
    values = -(y**3) - 3 * y * y * z1 - 3 * y * z2 - z3 + a * (y + z1)
    return dealiaser.to_field(values)


def step_mild(
    Y: RealField,
    stack_window: Sequence[RealField],
    dt: float,
    config: SolverConfig,
) -> RealField:
    """One exponential Euler step from Y with the stack frozen at stack_window."""
    grid = check_same_grid(Y, *stack_window)
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if dt != config.dt:
        config = _with_dt(config, dt)
    dynamics = Dynamics(grid, config)
    stack_hat = [analyze(grid, z.values) for z in stack_window]
    y_hat = dynamics.step(analyze(grid, Y.values), stack_hat)
    return RealField(grid, synthesize(grid, y_hat))


def _with_dt(config: SolverConfig, dt: float) -> SolverConfig:
    return replace(config, dt=dt, T=dt * max(1, round(config.T / dt)))


def _midpoints(
    stack: WickStack, start: int, count: int
) -> List[Tuple[np.ndarray, ...]]:
    spectra = [stack.spectra(i) for i in range(start, start + count + 1)]
    return [
        tuple(0.5 * (a + b) for a, b in zip(spectra[j], spectra[j + 1]))
        for j in range(count)
    ]


@dataclass
class LocalSolution:
    """Spectra of Y on a Picard window, the initial value included."""

    grid: TorusGrid
    start: int
    spectra: List[np.ndarray]
    iterations: int
    differences: List[float]
    residual: float = 0.0

    def fields(self) -> List[RealField]:
        return [RealField(self.grid, synthesize(self.grid, s)) for s in self.spectra]


def _initial_guess(
    dynamics: Dynamics,
    y0: np.ndarray,
    stack: WickStack,
    start: int,
    count: int,
    guess: str,
) -> List[np.ndarray]:
    if guess == "zero":
        return [y0] + [np.zeros_like(y0) for _ in range(count)]
    if guess == "noise":
        return [y0] + [stack.spectra(start + j)[0] for j in range(1, count + 1)]
    trajectory = [y0]
    for _ in range(count):
        trajectory.append(dynamics.decay * trajectory[-1])
    return trajectory


def _picard(
    dynamics: Dynamics,
    stack: WickStack,
    y0: np.ndarray,
    start: int,
    count: int,
    guess: str,
) -> LocalSolution:
    config = dynamics.config
    mids = _midpoints(stack, start, count)
    trajectory = _initial_guess(dynamics, y0, stack, start, count, guess)
    differences = []
    for iteration in range(1, config.picard_max_iters + 1):
        forcing = [dynamics.psi_hat(trajectory[j], mids[j]) for j in range(count)]
        update = [y0]
        for j in range(count):
            update.append(dynamics.decay * update[j] + dynamics.forcing * forcing[j])
        gap = max(dynamics.sup(new - old) for new, old in zip(update, trajectory))
        if not math.isfinite(gap):
            raise PicardDiverged("non-finite Picard iterate", iteration)
        differences.append(gap)
        trajectory = update
        if gap < config.picard_tol:
            break
    else:
        raise PicardDiverged(
            f"no contraction after {config.picard_max_iters} iterations "
            f"(last difference {differences[-1]:.3e})",
            config.picard_max_iters,
        )
    residual = max(
        dynamics.sup(trajectory[j + 1] - dynamics.step(trajectory[j], mids[j]))
        for j in range(count)
    )
    return LocalSolution(
        dynamics.grid, start, trajectory, iteration, differences, residual
    )


def picard_local(
    stack: WickStack,
    Y_init: RealField,
    t0: float,
    T_star: float,
    config: SolverConfig,
) -> LocalSolution:
    """Fixed point of the discrete mild map on [t0, t0 + T_star]."""
    if not T_star > 0:
        raise ValueError(f"window length must be positive, got {T_star}")
    grid = check_same_grid(Y_init, stack.W(0))
    start = int(round(t0 / config.dt))
    count = max(1, int(round(T_star / config.dt)))
    if start + count >= len(stack):
        raise ValueError("window extends beyond the stack")
    dynamics = Dynamics(grid, config)
    y0 = analyze(grid, Y_init.values)
    return _picard(dynamics, stack, y0, start, count, config.picard_guess)


@dataclass
class StepDiagnostics:
    t: float
    lp_norm: float
    energy_residual: float
    picard_iters: int


@dataclass
class Trajectory:
    times: np.ndarray
    indices: List[int]
    Y: List[RealField]
    X: List[RealField]
    diagnostics: List[StepDiagnostics]
    config: SolverConfig
    windows: List[int] = field(default_factory=list)

    @property
    def grid(self) -> TorusGrid:
        return self.Y[0].grid


def solve_global(
    stack: WickStack,
    config: SolverConfig,
    Y0: Optional[RealField] = None,
    verbose: bool = False,
) -> Trajectory:
    """
    Glue Picard windows over [0, T].

    Windows start at ``initial_window`` steps, halve after a failed Picard
    iteration and grow back after each success. A failed single-step window
    raises SolverAbort.
    """
    grid = stack.grid
    steps = config.steps
    if len(stack) < steps + 1 or not np.allclose(
        stack.times[: steps + 1], config.times(), rtol=0, atol=1e-12 * config.T
    ):
        raise ValueError("stack times do not cover [0, T] on the solver time grid")
    dynamics = Dynamics(grid, config)
    if Y0 is None:
        y_hat = np.zeros(grid.shape, dtype=complex)
    else:
        check_same_grid(Y0, stack.W(0))
        y_hat = analyze(grid, Y0.values)
    p = config.p_diag
    flat = np.ones(grid.shape)
    area = grid.spacing**2

    def lp_norm(spectrum):
        return lp_sum(synthesize(grid, spectrum), p, flat, area)

    def energy(spectrum, index):
        if not config.energy_diagnostics:
            return (math.nan, math.nan)
        term = dynamics.psi_hat(spectrum, stack.spectra(index))
        return dynamics.energy_terms(spectrum, term)

    times, indices, ys, xs = [], [], [], []
    diagnostics: List[StepDiagnostics] = []

    def record(index, spectrum):
        values = synthesize(grid, spectrum)
        times.append(float(stack.times[index]))
        indices.append(index)
        ys.append(RealField(grid, values))
        xs.append(RealField(grid, values + stack.triple(index)[0].values))

    record(0, y_hat)
    previous_energy = energy(y_hat, 0)
    diagnostics.append(StepDiagnostics(0.0, lp_norm(y_hat), 0.0, 0))

    window = config.initial_window
    windows = []
    n = 0
    while n < steps:
        count = min(window, steps - n)
        try:
            local = _picard(dynamics, stack, y_hat, n, count, config.picard_guess)
        except PicardDiverged as exc:
            if count == 1:
                raise SolverAbort(float(stack.times[n])) from exc
            window = max(1, count // 2)
            if verbose:
                print(f"[solver] t={stack.times[n]:.4g}: {exc}; window -> {window}")
            continue
        windows.append(count)
        for j in range(1, count + 1):
            index = n + j
            spectrum = local.spectra[j]
            current_energy = energy(spectrum, index)
            residual = (current_energy[0] - previous_energy[0]) - 0.5 * config.dt * (
                current_energy[1] + previous_energy[1]
            )
            previous_energy = current_energy
            diagnostics.append(
                StepDiagnostics(
                    float(stack.times[index]),
                    lp_norm(spectrum),
                    residual,
                    local.iterations,
                )
            )
            if index % config.record_every == 0 or index == steps:
                record(index, spectrum)
        y_hat = local.spectra[-1]
        n += count
        stack.discard_before(n)
        window = min(window * 2, config.initial_window)
    return Trajectory(np.array(times), indices, ys, xs, diagnostics, config, windows)


def heat_trajectory(Y0: RealField, config: SolverConfig) -> Trajectory:
    """Pure heat flow of Y0 sampled on the solver time grid."""
    grid = Y0.grid
    dynamics = Dynamics(grid, config)
    spectrum = analyze(grid, Y0.values)
    times = config.times()
    ys = []
    diagnostics = []
    for n, t in enumerate(times):
        values = synthesize(grid, spectrum)
        ys.append(RealField(grid, values))
        norm = lp_sum(values, config.p_diag, np.ones(grid.shape), grid.spacing**2)
        diagnostics.append(StepDiagnostics(float(t), norm, math.nan, 0))
        spectrum = dynamics.decay * spectrum
    return Trajectory(times, list(range(len(times))), ys, list(ys), diagnostics, config)


@dataclass
class EnergyReport:
    times: np.ndarray
    residuals: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(np.abs(self.residuals)))

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0


def energy_report(traj: Trajectory, stack: Optional[WickStack], p: int) -> EnergyReport:
    """
    Per-interval residual of the L^p energy identity along a trajectory.

    (1/p) d||Y||_p^p = -(p-1) <grad Y, Y^{p-2} grad Y> + <Psi, Y^{p-1}>, with the
    right side integrated by the trapezoid rule over recorded times. Passing
    ``stack=None`` drops the Psi term (heat-only dynamics).
    """
    if p % 2 or p < 2:
        raise ValueError(f"p must be a positive even integer, got {p}")
    dynamics = Dynamics(traj.grid, traj.config)
    terms = []
    for index, y in zip(traj.indices, traj.Y):
        spectrum = analyze(traj.grid, y.values)
        term = None
        if stack is not None:
            term = dynamics.psi_hat(spectrum, stack.spectra(index))
        terms.append(dynamics.energy_terms(spectrum, term, p))
    times = np.asarray(traj.times, dtype=float)
    levels = np.array([level for level, _ in terms])
    rates = np.array([rate for _, rate in terms])
    widths = np.diff(times)
    residuals = np.diff(levels) - 0.5 * widths * (rates[1:] + rates[:-1])
    return EnergyReport(times[1:], residuals)


@dataclass
class AprioriReport:
    sup_norm: float
    initial_norm: float
    bound_offset: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def apriori_check(traj: Trajectory, p: float) -> AprioriReport:
    """sup_t ||Y_t||_p minus ||Y_0||_p over the recorded trajectory."""
    weight = FlatWeight()
    norms = [
        lp_sum(y.values, p, weight.on_grid(y.grid), y.grid.spacing**2) for y in traj.Y
    ]
    sup_norm = max(norms)
    return AprioriReport(sup_norm, norms[0], sup_norm - norms[0])


def resubstitution_error(traj: Trajectory, stack: WickStack) -> float:
    """
    Largest relative gap between consecutive recorded steps and the discrete
    mild map; requires record_every = 1.
    """
    config = traj.config
    if any(b - a != 1 for a, b in zip(traj.indices, traj.indices[1:])):
        raise ValueError("resubstitution needs every step recorded")
    grid = traj.grid
    dynamics = Dynamics(grid, config)
    worst = 0.0
    spectra = [analyze(grid, y.values) for y in traj.Y]
    for j in range(len(spectra) - 1):
        index = traj.indices[j]
        predicted = dynamics.step(spectra[j], stack.midpoint_spectra(index))
        scale = max(1.0, dynamics.sup(spectra[j + 1]))
        worst = max(worst, dynamics.sup(predicted - spectra[j + 1]) / scale)
    return worst


def sup_distance(first: Trajectory, second: Trajectory) -> float:
    """Largest pointwise gap between two trajectories on common record times."""
    if first.indices != second.indices:
        raise ValueError("trajectories are recorded at different times")
    return max(
        float(np.max(np.abs(a.values - b.values))) for a, b in zip(first.Y, second.Y)
    )
