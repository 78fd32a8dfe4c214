"""Parameters, unit-measure grids, cell fields, quadrature and source terms.

Fields are plain numpy arrays shaped like ``grid.shape`` holding cell
averages.  Every grid has total measure one, so spatial integrals and
spatial means coincide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError, NumericError, ShapeError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the repulsive chemotaxis system.

    ``D`` multiplies the cell diffusion, ``chi`` the chemotactic flux,
    ``r`` the logistic growth and ``a`` the chemical self-production.
    """

    D: float
    chi: float
    r: float
    a: float = 0.0

    def __post_init__(self):
        for name in ("D", "chi", "r", "a"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite")
        if self.D <= 0:
            raise DomainError("D must be > 0")
        if self.r <= 0:
            raise DomainError("r must be > 0")
        if self.a < 0:
            raise DomainError("a must be >= 0")


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred mesh of a 1D interval or 2D rectangle of measure 1."""

    shape: tuple
    lengths: tuple = None

    def __post_init__(self):
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        if len(shape) not in (1, 2):
            raise DomainError("only 1D and 2D grids are supported")
        if any(n < 1 for n in shape):
            raise DomainError("cells_per_axis must be positive")
        lengths = self.lengths
        if lengths is None:
            lengths = (1.0,) * len(shape)
        lengths = tuple(float(x) for x in lengths)
        if len(lengths) != len(shape) or any(x <= 0 for x in lengths):
            raise DomainError("need one positive length per axis")
        if abs(math.prod(lengths) - 1.0) > 1e-14:
            raise DomainError("axis lengths must multiply to 1 (|Omega| = 1)")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def interval(cls, n):
        return cls((n,))

    @classmethod
    def rectangle(cls, nx, ny, lx=1.0):
        return cls((nx, ny), (lx, 1.0 / lx))

    @property
    def dimension(self):
        return len(self.shape)

    @property
    def cells_per_axis(self):
        return self.shape

    @property
    def n_cells(self):
        return math.prod(self.shape)

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.lengths, self.shape))

    @property
    def cell_measure(self):
        return math.prod(self.spacing)

    @property
    def total_measure(self):
        return math.prod(self.lengths)

    def centers(self):
        """Cell-centre coordinates, one broadcastable array per axis."""
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.shape, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")


def as_field(values, grid: Grid, name="field") -> np.ndarray:
    """Validate ``values`` against ``grid`` and return it shaped like the grid.

    Flat arrays in row-major order are accepted.
    """
    arr = np.asarray(values, dtype=float)
    if arr.shape != grid.shape:
        if arr.size != grid.n_cells:
            raise ShapeError(f"{name} has {arr.size} values, grid has {grid.n_cells} cells")
        arr = arr.reshape(grid.shape)
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
        raise NumericError(f"{name} is not finite at cell {bad}")
    return arr


def constant_field(value, grid: Grid) -> np.ndarray:
    return np.full(grid.shape, float(value))


def integral(values, grid: Grid) -> float:
    f = as_field(values, grid)
    return float(f.sum() * grid.cell_measure)


def l2_norm_sq(values, grid: Grid) -> float:
    f = as_field(values, grid)
    return float(np.sum(f * f) * grid.cell_measure)


def grad_l2_sq(values, grid: Grid) -> float:
    """Discrete integral of the squared gradient from interior face jumps.

    Boundary faces carry no flux (homogeneous Neumann) and contribute zero,
    so an axis with a single cell adds nothing.
    """
    f = as_field(values, grid)
    total = 0.0
    for axis, h in enumerate(grid.spacing):
        jump = np.diff(f, axis=axis)
        total += float(np.sum(jump * jump)) / (h * h)
    return total * grid.cell_measure


# -- source terms -----------------------------------------------------------


@dataclass(frozen=True)
class PeriodicSignal:
    """``mean_level + amplitude * sin(2*pi*(t + phase)/period)``."""

    mean_level: float
    amplitude: float = 0.0
    period: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise DomainError("period must be > 0")

    def __call__(self, t):
        return self.mean_level + self.amplitude * np.sin(TWO_PI * (t + self.phase) / self.period)

    def average(self):
        return self.mean_level

    def sup_norm(self):
        return abs(self.mean_level) + abs(self.amplitude)

    def minimum(self):
        return self.mean_level - abs(self.amplitude)


@dataclass(frozen=True)
class DecaySignal:
    """``scale * exp(-rate * t)``; integrable and square integrable on (0, inf)."""

    scale: float
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("decay rate must be > 0")

    def __call__(self, t):
        return self.scale * np.exp(-self.rate * t)


@dataclass(frozen=True)
class Constant:
    f0: float

    def __post_init__(self):
        if not self.f0 >= 0:
            raise DomainError("constant source must be >= 0")

    @property
    def ftilde(self):
        return PeriodicSignal(self.f0)


@dataclass(frozen=True)
class HomogeneousPeriodic:
    ftilde: PeriodicSignal

    def __post_init__(self):
        if self.ftilde.minimum() < 0:
            raise DomainError(f"source takes negative values (min {self.ftilde.minimum():.3g})")


@dataclass(frozen=True, eq=False)
class SeparablePerturbed:
    """``f(x, t) = ftilde(t) + p(t) q(x)`` with ``q`` a field on ``grid``."""

    ftilde: PeriodicSignal
    p: DecaySignal
    q: np.ndarray
    grid: Grid
    _qmin: float = field(init=False, repr=False)
    _qmax: float = field(init=False, repr=False)

    def __post_init__(self):
        q = as_field(self.q, self.grid, "q").copy()
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "_qmin", float(q.min()))
        object.__setattr__(self, "_qmax", float(q.max()))
        lower = _sampled_lower_bound(self.ftilde, self.p, self._qmin, self._qmax)
        if lower < -1e-12:
            raise DomainError(f"source takes negative values (sampled min {lower:.3g})")

    @property
    def q_sup(self):
        return max(abs(self._qmin), abs(self._qmax))


SourceSpec = Union[Constant, HomogeneousPeriodic, SeparablePerturbed]


def _sampled_lower_bound(ftilde, p, qmin, qmax, per_unit=1000):
    """Minimum of ftilde(t) + p(t) q(x) over sampled t >= 0 and all cells.

    Past ``t_star`` the perturbation is dominated by ``min ftilde`` and the
    bound is closed-form, so sampling stops there.
    """
    # p has a fixed sign, so only one side of q can pull f down
    neg = max(0.0, -qmin) if p.scale >= 0 else max(0.0, qmax)
    fmin = ftilde.minimum()
    if abs(p.scale) * neg == 0.0:
        return fmin
    if fmin > 0:
        t_star = max(0.0, math.log(abs(p.scale) * neg / fmin) / p.rate)
    else:
        t_star = 50.0 / p.rate
    horizon = t_star + ftilde.period
    step = min(ftilde.period, 1.0 / p.rate) / per_unit
    n = min(int(math.ceil(horizon / step)) + 1, 2_000_000)
    t = np.linspace(0.0, horizon, n)
    pt = p(t)
    worst_q = np.where(pt >= 0, qmin, qmax)
    sampled = float(np.min(ftilde(t) + pt * worst_q))
    tail = fmin - abs(float(p(horizon))) * neg
    return min(sampled, tail)


def _check_time(t):
    if t < 0:
        raise DomainError("time must be >= 0")


def eval_source_homogeneous(spec: SourceSpec, t: float) -> float:
    _check_time(t)
    if isinstance(spec, Constant):
        return float(spec.f0)
    return float(spec.ftilde(t))


def eval_source(spec: SourceSpec, cell_index: int, t: float) -> float:
    _check_time(t)
    if cell_index < 0:
        raise IndexError(f"cell index {cell_index} is negative")
    if isinstance(spec, Constant):
        return float(spec.f0)
    value = float(spec.ftilde(t))
    if isinstance(spec, SeparablePerturbed):
        if cell_index >= spec.grid.n_cells:
            raise IndexError(f"cell index {cell_index} outside grid of {spec.grid.n_cells} cells")
        value += float(spec.p(t)) * float(spec.q.flat[cell_index])
    return value


def source_field(spec: SourceSpec, grid: Grid, t: float) -> np.ndarray:
    """f(., t) sampled on every cell of ``grid``."""
    _check_time(t)
    base = eval_source_homogeneous(spec, t)
    if isinstance(spec, SeparablePerturbed):
        if spec.grid.shape != grid.shape:
            raise ShapeError("source perturbation is bound to a different grid")
        return base + float(spec.p(t)) * spec.q
    return np.full(grid.shape, base)


def source_coefficients(spec: SourceSpec, grid: Grid):
    """Flatten any source into ``(mean, amp, period, phase, p_scale, p_rate, q)``.

    Used by the compiled kernels, which evaluate every variant with the same
    formula.
    """
    if isinstance(spec, Constant):
        return float(spec.f0), 0.0, 1.0, 0.0, 0.0, 1.0, np.zeros(grid.n_cells)
    ft = spec.ftilde
    if isinstance(spec, SeparablePerturbed):
        if spec.grid.shape != grid.shape:
            raise ShapeError("source perturbation is bound to a different grid")
        return (ft.mean_level, ft.amplitude, ft.period, ft.phase,
                spec.p.scale, spec.p.rate, np.ascontiguousarray(spec.q, dtype=float).ravel())
    return ft.mean_level, ft.amplitude, ft.period, ft.phase, 0.0, 1.0, np.zeros(grid.n_cells)


def ftilde_sup_norm(spec: SourceSpec) -> float:
    if isinstance(spec, Constant):
        return abs(spec.f0)
    return spec.ftilde.sup_norm()


def source_period(spec: SourceSpec):
    """Period of the homogeneous part, or None for a constant source."""
    if isinstance(spec, Constant):
        return None
    return spec.ftilde.period


def f_l1_deviation(spec: SourceSpec, grid: Grid, t: float) -> float:
    """||f(., t) - ftilde(t)||_{L^1}."""
    if not isinstance(spec, SeparablePerturbed):
        return 0.0
    return abs(float(spec.p(t))) * float(np.abs(spec.q).sum() * grid.cell_measure)
