"""
Randomized numerical checks of the Besov-space inequalities.

Each kind draws random band-limited trial fields, evaluates both sides of an
inequality with constant 1 on the right, and reports the largest ratio seen.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.fft

from phi4_lab.besov import (
    ANNULUS_INNER,
    ANNULUS_OUTER,
    BesovParams,
    DyadicPartition,
    FlatWeight,
    besov_norm,
    bony_decomposition,
    derivative,
    exponent_ratio,
    gradient,
    heat_propagate,
    inner_product,
    paraproduct_less,
    resonant,
    truncation_flag,
    weighted_lp_norm,
)
from phi4_lab.errors import FitFailed, UnknownInequality
from phi4_lab.grid import (
    RealField,
    SpectralField,
    TorusGrid,
    dealiased_product,
    forward_transform,
    inverse_transform,
    wavenumber_magnitudes,
)

ANNULUS_DECAY_RATE = 0.25
DECAY_NOISE_FLOOR = 1e-13
DECAY_MIN_DECADES = 6.0


@dataclass
class InequalityReport:
    kind: str
    trials: int
    max_ratio: float
    witness_seed: Optional[int]
    truncation_flag: bool = False
    skipped: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def trial_ratio(lhs: float, rhs: float) -> Optional[float]:
    """lhs/rhs, None for 0/0 and inf when only the right side vanishes."""
    if rhs == 0:
        return None if lhs == 0 else math.inf
    return lhs / rhs


@dataclass
class _Context:
    grid: TorusGrid
    partition: DyadicPartition
    params: BesovParams
    fraction: float
    options: dict

    def option(self, name, default):
        return self.options.get(name, default)

    def besov(self, f: RealField, **changes) -> float:
        return besov_norm(f, self.partition, self.params.with_(**changes))


def _random_field(rng: np.random.Generator, ctx: _Context) -> RealField:
    return RealField.random(
        ctx.grid, rng, fraction=ctx.fraction, slope=rng.uniform(0.0, 3.0)
    )


def _frequency_scale(rng: np.random.Generator, ctx: _Context, top: float) -> float:
    """Log-uniform lambda >= 1 with lambda * top below the trial band limit."""
    grid = ctx.grid
    band = ctx.fraction * math.pi * grid.points_per_side / grid.side_length
    low = max(1.0, 4 * math.pi / grid.side_length)
    high = max(low, band / top)
    return float(math.exp(rng.uniform(math.log(low), math.log(high))))


def _restricted_field(
    rng: np.random.Generator, ctx: _Context, inner: float, outer: float
) -> RealField:
    """Random field whose spectrum lies in the shell inner <= |zeta| <= outer."""
    grid = ctx.grid
    white = RealField(grid, rng.standard_normal(grid.shape))
    spectrum = forward_transform(white).coefficients
    r = wavenumber_magnitudes(grid)
    mask = (r >= inner) & (r <= outer) & grid.resolved_mask()
    return inverse_transform(SpectralField(grid, spectrum * mask))


def _bernstein(rng, ctx):
    p = ctx.params.p
    r = ctx.option("r", 1.0)
    order = tuple(ctx.option("order", (1, 0)))
    weight = ctx.params.weight
    lam = _frequency_scale(rng, ctx, 1.0)
    f = _restricted_field(rng, ctx, 0.0, lam)
    lhs = weighted_lp_norm(derivative(f, order), p, weight)
    exponent = sum(order) + 2 * (1 / r - 1 / p)
    rhs = lam**exponent * weighted_lp_norm(f, r, weight.scaled(exponent_ratio(r, p)))
    return lhs, rhs


def _embedding(rng, ctx):
    p = ctx.params.p
    r = ctx.option("r", 1.0)
    alpha = ctx.params.alpha
    beta = alpha + 2 * (1 / r - 1 / p)
    f = _random_field(rng, ctx)
    lhs = ctx.besov(f)
    weight = ctx.params.weight.scaled(exponent_ratio(r, p))
    rhs = ctx.besov(f, alpha=beta, p=r, weight=weight)
    return lhs, rhs


def _derivative(rng, ctx):
    order = tuple(ctx.option("order", (1, 0)))
    f = _random_field(rng, ctx)
    lhs = ctx.besov(derivative(f, order), alpha=ctx.params.alpha - sum(order))
    return lhs, ctx.besov(f)


_EXPONENTS = (1.0, 2.0, 4.0, math.inf)


def _harmonic(nu: float, a: float, b: float) -> float:
    inverse = (1 - nu) / a + nu / b
    return math.inf if inverse == 0 else 1.0 / inverse


def _interpolation(rng, ctx):
    alpha0, alpha1 = rng.uniform(-1.0, 1.0, size=2)
    p0, p1, q0, q1 = (float(rng.choice(_EXPONENTS)) for _ in range(4))
    nu = float(rng.uniform(0.0, 1.0))
    f = _random_field(rng, ctx)
    lhs = ctx.besov(
        f,
        alpha=(1 - nu) * alpha0 + nu * alpha1,
        p=_harmonic(nu, p0, p1),
        q=_harmonic(nu, q0, q1),
    )
    rhs = ctx.besov(f, alpha=alpha0, p=p0, q=q0) ** (1 - nu)
    rhs *= ctx.besov(f, alpha=alpha1, p=p1, q=q1) ** nu
    return lhs, rhs


def _heat_time(rng) -> float:
    return float(10.0 ** rng.uniform(-3.0, 0.0))


def _heat_smoothing(rng, ctx):
    alpha = ctx.params.alpha
    beta = alpha - ctx.option("gap", 1.0)
    t = _heat_time(rng)
    f = _random_field(rng, ctx)
    lhs = ctx.besov(heat_propagate(f, t))
    return lhs, t ** ((beta - alpha) / 2) * ctx.besov(f, alpha=beta)


def _heat_time_regularity(rng, ctx):
    alpha = ctx.params.alpha
    gap = ctx.option("gap", 1.0)
    if not 0 <= gap <= 2:
        raise ValueError(f"time regularity needs 0 <= beta - alpha <= 2, got {gap}")
    t = _heat_time(rng)
    f = _random_field(rng, ctx)
    lhs = ctx.besov(f - heat_propagate(f, t))
    return lhs, t ** (gap / 2) * ctx.besov(f, alpha=alpha + gap)


def _heat_annulus(rng, ctx):
    lam = _frequency_scale(rng, ctx, ANNULUS_OUTER)
    f = _restricted_field(rng, ctx, ANNULUS_INNER * lam, ANNULUS_OUTER * lam)
    t = _heat_time(rng)
    p, weight = ctx.params.p, ctx.params.weight
    lhs = weighted_lp_norm(heat_propagate(f, t), p, weight)
    rhs = math.exp(-ANNULUS_DECAY_RATE * t * lam**2) * weighted_lp_norm(f, p, weight)
    return lhs, rhs


def _heat_ball(rng, ctx):
    lam = _frequency_scale(rng, ctx, 1.0)
    f = _restricted_field(rng, ctx, 0.0, lam)
    t = _heat_time(rng)
    p, weight = ctx.params.p, ctx.params.weight
    lhs = weighted_lp_norm(f - heat_propagate(f, t), p, weight)
    return lhs, min(t * lam**2, 1.0) * weighted_lp_norm(f, p, weight)


def _split_exponent(p: float, nu: float) -> Tuple[float, float]:
    """(p1, p2) with 1/p1 = nu/p and 1/p2 = (1 - nu)/p."""
    return _harmonic(nu, math.inf, p), _harmonic(1 - nu, math.inf, p)


def _paraproduct(rng, ctx):
    alpha1 = ctx.option("alpha1", -0.5)
    alpha2 = ctx.option("alpha2", 1.0)
    if alpha1 == 0:
        raise ValueError("paraproduct estimate needs alpha1 != 0")
    p1, p2 = _split_exponent(ctx.params.p, 0.5)
    f, g = _random_field(rng, ctx), _random_field(rng, ctx)
    low_high = paraproduct_less(f, g, ctx.partition)
    lhs = ctx.besov(low_high, alpha=min(alpha1, 0) + alpha2)
    rhs = ctx.besov(f, alpha=alpha1, p=p1, q=math.inf)
    return lhs, rhs * ctx.besov(g, alpha=alpha2, p=p2)


def _resonant(rng, ctx):
    alpha1 = ctx.option("alpha1", -0.25)
    alpha2 = ctx.option("alpha2", 0.75)
    if not alpha1 + alpha2 > 0:
        raise ValueError("resonant estimate needs alpha1 + alpha2 > 0")
    p1, p2 = _split_exponent(ctx.params.p, 0.5)
    f, g = _random_field(rng, ctx), _random_field(rng, ctx)
    lhs = ctx.besov(resonant(f, g, ctx.partition), alpha=alpha1 + alpha2)
    rhs = ctx.besov(f, alpha=alpha1, p=p1, q=math.inf)
    return lhs, rhs * ctx.besov(g, alpha=alpha2, p=p2)


def _multiplicative_1(rng, ctx):
    alpha = ctx.option("alpha_positive", 0.5)
    if not alpha > 0:
        raise ValueError("multiplicative inequality I needs alpha > 0")
    p1, p2 = _split_exponent(ctx.params.p, float(rng.uniform(0.0, 1.0)))
    f, g = _random_field(rng, ctx), _random_field(rng, ctx)
    lhs = ctx.besov(dealiased_product(f, g), alpha=alpha)
    return lhs, ctx.besov(f, alpha=alpha, p=p1) * ctx.besov(g, alpha=alpha, p=p2)


def _multiplicative_2(rng, ctx):
    alpha = ctx.option("alpha_negative", -0.25)
    beta = ctx.option("beta", 0.5)
    if not alpha < 0 < beta or not alpha + beta > 0:
        raise ValueError(
            "multiplicative inequality II needs alpha < 0 < beta and alpha + beta > 0"
        )
    p1, p2 = _split_exponent(ctx.params.p, float(rng.uniform(0.0, 1.0)))
    f, g = _random_field(rng, ctx), _random_field(rng, ctx)
    lhs = ctx.besov(dealiased_product(f, g), alpha=alpha)
    return lhs, ctx.besov(f, alpha=alpha, p=p1) * ctx.besov(g, alpha=beta, p=p2)


def _conjugate(p: float) -> float:
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1)


def _duality(rng, ctx):
    alpha = ctx.params.alpha
    if not 0 <= alpha < 1:
        raise ValueError(f"duality is claimed for alpha in [0, 1), got {alpha}")
    f, g = _random_field(rng, ctx), _random_field(rng, ctx)
    lhs = abs(inner_product(f, g, ctx.params.weight))
    rhs = ctx.besov(f) * ctx.besov(
        g, alpha=-alpha, p=_conjugate(ctx.params.p), q=_conjugate(ctx.params.q)
    )
    return lhs, rhs


def _gradient(rng, ctx):
    alpha = ctx.params.alpha
    if not 0 < alpha < 1:
        raise ValueError(f"gradient estimate needs alpha in (0, 1), got {alpha}")
    weight = ctx.params.weight
    f = _random_field(rng, ctx)
    d1, d2 = gradient(f)
    grad = RealField(f.grid, np.hypot(d1.values, d2.values))
    base = weighted_lp_norm(f, 1.0, weight)
    slope = weighted_lp_norm(grad, 1.0, weight)
    lhs = ctx.besov(f, p=1.0, q=1.0)
    return lhs, base ** (1 - alpha) * slope**alpha + base


INEQUALITIES: Dict[str, Callable] = {
    "bernstein": _bernstein,
    "embedding": _embedding,
    "derivative": _derivative,
    "interpolation": _interpolation,
    "heat_smoothing": _heat_smoothing,
    "heat_time_regularity": _heat_time_regularity,
    "heat_annulus": _heat_annulus,
    "heat_ball": _heat_ball,
    "paraproduct": _paraproduct,
    "resonant": _resonant,
    "multiplicative_1": _multiplicative_1,
    "multiplicative_2": _multiplicative_2,
    "duality": _duality,
    "gradient": _gradient,
}


def verify_inequality(
    kind: str,
    trial_count: int,
    grid: TorusGrid,
    partition: DyadicPartition,
    params: Optional[BesovParams] = None,
    root_seed: int = 0,
    spectrum_fraction: float = 1.0 / 3.0,
    workers: int = 1,
    **options,
) -> InequalityReport:
    """
    Largest observed lhs/rhs ratio of inequality ``kind`` over random trials.

    Trial i draws from the i-th child of SeedSequence(root_seed), so the first
    n trials are the same whatever the total count or worker count.
    """
    try:
        trial = INEQUALITIES[kind]
    except KeyError:
        raise UnknownInequality(
            f"unknown inequality {kind!r}; choose from {', '.join(INEQUALITIES)}"
        ) from None
    if params is None:
        params = BesovParams(alpha=0.5, p=2.0, q=2.0, weight=FlatWeight())
    ctx = _Context(grid, partition, params, spectrum_fraction, options)
    children = np.random.SeedSequence(root_seed).spawn(trial_count)
    seeds = [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]

    def run(seed):
        return trial_ratio(*trial(np.random.default_rng(seed), ctx))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            ratios = list(pool.map(run, seeds))
    else:
        ratios = [run(seed) for seed in seeds]

    max_ratio, witness, skipped = 0.0, None, 0
    for seed, ratio in zip(seeds, ratios):
        if ratio is None:
            skipped += 1
        elif witness is None or ratio > max_ratio:
            max_ratio, witness = ratio, seed
    return InequalityReport(
        kind=kind,
        trials=trial_count,
        max_ratio=max_ratio,
        witness_seed=witness,
        truncation_flag=truncation_flag(grid, params.weight),
        skipped=skipped,
    )


@dataclass
class DecayFit:
    c: float
    C: float
    residual: float
    decades: float


def fourier_decay_check(
    bump: np.ndarray, theta: float, spacing: float = 1.0
) -> DecayFit:
    """
    Fit |phi_hat(zeta)| ~ C exp(-c |zeta|^(1/theta)) on the resolved band.

    The fit uses the monotone upper envelope of the spectrum above a noise floor
    of 1e-13 times its peak. ``residual`` is the RMS log misfit relative to the
    logarithmic dynamic range.
    """
    if not theta > 1:
        raise FitFailed(f"Gevrey index must exceed 1, got {theta}")
    amplitude = np.abs(scipy.fft.rfft(np.asarray(bump, dtype=float))) * spacing
    zeta = 2 * np.pi * scipy.fft.rfftfreq(len(bump), spacing)
    envelope = np.maximum.accumulate(amplitude[::-1])[::-1]
    peak = float(envelope[0])
    if peak == 0:
        raise FitFailed("input has no spectral content")
    keep = (envelope > DECAY_NOISE_FLOOR * peak) & (zeta > 0)
    if keep.sum() < 3:
        raise FitFailed("too few resolved frequencies above the noise floor")
    log_env = np.log(envelope[keep])
    log_range = float(log_env.max() - log_env.min())
    decades = log_range / math.log(10)
    if decades < DECAY_MIN_DECADES:
        raise FitFailed(
            f"dynamic range of {decades:.2f} decades is below {DECAY_MIN_DECADES}"
        )
    abscissa = zeta[keep] ** (1.0 / theta)
    slope, intercept = np.polyfit(abscissa, log_env, 1)
    misfit = log_env - (slope * abscissa + intercept)
    residual = float(np.sqrt(np.mean(misfit**2))) / log_range
    c = -float(slope)
    if not c > 0:
        raise FitFailed(f"fitted decay rate c = {c:.3g} is not positive")
    return DecayFit(c=c, C=float(np.exp(intercept)), residual=residual, decades=decades)


def bony_defect(f: RealField, g: RealField, partition: DyadicPartition) -> float:
    """Relative sup-norm gap between fg and its three Bony pieces."""
    product = dealiased_product(f, g)
    low, diagonal, high = bony_decomposition(f, g, partition)
    scale = product.max_abs()
    gap = (product - low - diagonal - high).max_abs()
    return gap / scale if scale else gap
