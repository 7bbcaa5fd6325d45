"""Grids, sampled fields, and discrete calculus on regular boxes.

Everything downstream (transition kernels, walker ensembles, the density and
phase solvers) shares the conventions fixed here:

* cell-centered uniform grids over [-L/2, L/2) per axis,
* midpoint-rule integrals (sum of cell values times cell volume),
* second-order central differences respecting the boundary condition,
* a diagonal configuration-space metric with weight 1/sigma_a^2 per axis,
  so the squared step length of a displacement dx is sum_a dx_a^2/sigma_a^2.

Axes play the role of particle coordinates: an axis with its own sigma_a^2
carries its own mass.  Axes belonging to identical particles should share one
sigma_sq value; that is a modeling convention, not something enforced here.

Fields are treated as immutable values: operations return new instances and
never mutate the wrapped arrays in place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, DegenerateDensityError, GridMismatchError

PERIODIC = "periodic"
REFLECTING = "reflecting"
BOUNDARIES = (PERIODIC, REFLECTING)

# Relative floor used whenever log(rho) or 1/sqrt(rho) is needed: cells below
# floor * max(rho) are clamped there.  Cells that far down carry no mass worth
# resolving, and the clamp keeps osmotic velocities finite at exact zeros.
DENSITY_REL_FLOOR = 1e-12

# Absolute guard so log() never sees an exact zero even when the caller asks
# for an (almost) unclamped logarithm.
LOG_ABS_GUARD = 1e-300


def _as_tuple(value, dim, kind=float, name="value"):
    """Broadcast a scalar or sequence to a per-axis tuple of length dim."""
    if np.isscalar(value):
        return tuple(kind(value) for _ in range(dim))
    seq = tuple(kind(v) for v in value)
    if len(seq) != dim:
        raise ConfigError(f"{name} needs 1 or {dim} entries, got {len(seq)}")
    return seq


@dataclass(frozen=True, eq=False)
class ConfigSpace:
    """A regular box: extents, point counts, boundary rule, metric weights."""

    dim: int
    extents: tuple
    points: tuple
    boundary: str = PERIODIC
    sigma_sq: tuple = None

    def __post_init__(self):
        if self.dim < 1 or self.dim > 3:
            raise ConfigError(f"dim must be 1, 2, or 3, got {self.dim}")
        object.__setattr__(self, "extents", _as_tuple(self.extents, self.dim, float, "extents"))
        object.__setattr__(self, "points", _as_tuple(self.points, self.dim, int, "points"))
        sig = self.sigma_sq if self.sigma_sq is not None else 1.0
        object.__setattr__(self, "sigma_sq", _as_tuple(sig, self.dim, float, "sigma_sq"))
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if any(L <= 0 for L in self.extents):
            raise ConfigError("extents must be positive")
        if any(n < 4 for n in self.points):
            raise ConfigError("need at least 4 points per axis")
        if any(s <= 0 for s in self.sigma_sq):
            raise ConfigError("sigma_sq must be positive")

    @cached_property
    def spacings(self):
        return tuple(L / n for L, n in zip(self.extents, self.points))

    @cached_property
    def cell_volume(self):
        return float(np.prod(self.spacings))

    @property
    def shape(self):
        return self.points

    @property
    def size(self):
        return int(np.prod(self.points))

    def axis_coords(self, axis):
        """Cell centers along one axis: -L/2 + (i + 1/2) dx."""
        L, n = self.extents[axis], self.points[axis]
        dx = L / n
        return -0.5 * L + (np.arange(n) + 0.5) * dx

    @cached_property
    def meshes(self):
        """Full coordinate arrays, one grid-shaped array per axis."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij")) if self.dim > 1 else (axes[0],)

    def wrap(self, positions):
        """Map arbitrary points back into the box (wrap or reflect)."""
        pos = np.array(positions, dtype=float, copy=True)
        pos = pos.reshape(-1, self.dim)
        for a in range(self.dim):
            lo = -0.5 * self.extents[a]
            L = self.extents[a]
            if self.boundary == PERIODIC:
                pos[:, a] = (pos[:, a] - lo) % L + lo
            else:
                # fold repeatedly: period-2L sawtooth gives specular reflection
                y = (pos[:, a] - lo) % (2.0 * L)
                pos[:, a] = lo + np.where(y > L, 2.0 * L - y, y)
        return pos

    def min_image(self, delta):
        """Displacements under the boundary rule (minimum image if periodic)."""
        d = np.array(delta, dtype=float, copy=True)
        if self.boundary == PERIODIC:
            ext = np.asarray(self.extents)
            d -= ext * np.round(d / ext)
        return d

    def cell_index(self, positions):
        """Integer cell indices (W, dim) for in-box positions."""
        pos = self.wrap(positions)
        idx = np.empty(pos.shape, dtype=np.intp)
        for a in range(self.dim):
            lo = -0.5 * self.extents[a]
            dx = self.spacings[a]
            idx[:, a] = np.clip(((pos[:, a] - lo) / dx).astype(np.intp), 0, self.points[a] - 1)
        return idx

    def same_grid(self, other):
        return (
            self.dim == other.dim
            and self.extents == other.extents
            and self.points == other.points
            and self.boundary == other.boundary
            and self.sigma_sq == other.sigma_sq
        )


def _check_same_space(a, b):
    if not a.space.same_grid(b.space):
        raise GridMismatchError("fields live on different grids")


@dataclass(frozen=True, eq=False)
class ScalarField:
    space: ConfigSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.space.shape:
            raise GridMismatchError(f"values shape {v.shape} != grid shape {self.space.shape}")
        object.__setattr__(self, "values", v)

    def integral(self):
        return float(self.values.sum()) * self.space.cell_volume


@dataclass(frozen=True, eq=False)
class VectorField:
    """One component per axis, stored as an array of shape (dim, *grid)."""

    space: ConfigSpace
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float)
        if c.shape != (self.space.dim,) + self.space.shape:
            raise GridMismatchError(
                f"components shape {c.shape} != {(self.space.dim,) + self.space.shape}"
            )
        object.__setattr__(self, "components", c)


@dataclass(frozen=True, eq=False)
class ComplexField:
    space: ConfigSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.space.shape:
            raise GridMismatchError(f"values shape {v.shape} != grid shape {self.space.shape}")
        object.__setattr__(self, "values", v)

    def norm_sq(self):
        return float((np.abs(self.values) ** 2).sum()) * self.space.cell_volume


@dataclass(frozen=True, eq=False)
class PhysicalParams:
    """Per-axis masses and the shared step/time constants.

    The constants are tied together: mass_a = 2 A / sigma_a^2, osmotic mass
    mu_a = 2 B / sigma_a^2, and eta = 2 A / tau, so eta / mass_a =
    sigma_a^2 / tau is the diffusion velocity scale per axis.  Constructors
    keep these identities exact; hand-built instances are validated.
    """

    masses: np.ndarray
    osmotic_masses: np.ndarray
    sigma_sq: tuple
    eta: float
    tau: float
    a_coeff: float
    b_coeff: float
    beta: float = 0.0

    def __post_init__(self):
        dim = len(self.sigma_sq)
        m = np.asarray(self.masses, dtype=float).reshape(dim)
        mu = np.asarray(self.osmotic_masses, dtype=float).reshape(dim)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "osmotic_masses", mu)
        object.__setattr__(self, "sigma_sq", tuple(float(s) for s in self.sigma_sq))
        if np.any(m <= 0) or np.any(mu < 0):
            raise ConfigError("masses must be positive and osmotic masses nonnegative")
        if self.eta <= 0 or self.tau <= 0 or self.a_coeff <= 0 or self.b_coeff < 0:
            raise ConfigError("eta, tau, a_coeff must be positive; b_coeff nonnegative")
        sig = np.asarray(self.sigma_sq)
        if not np.allclose(m * sig, 2.0 * self.a_coeff, rtol=1e-12, atol=0.0):
            raise ConfigError("mass_a * sigma_a^2 must equal 2 A on every axis")
        if not np.allclose(mu * sig, 2.0 * self.b_coeff, rtol=1e-12, atol=1e-300):
            raise ConfigError("osmotic_mass_a * sigma_a^2 must equal 2 B on every axis")
        if not math.isclose(self.eta, 2.0 * self.a_coeff / self.tau, rel_tol=1e-12):
            raise ConfigError("eta must equal 2 A / tau")

    @classmethod
    def from_metric(cls, sigma_sq, tau, a_coeff, b_coeff, beta=0.0):
        sig = tuple(float(s) for s in (sigma_sq if not np.isscalar(sigma_sq) else (sigma_sq,)))
        m = np.array([2.0 * a_coeff / s for s in sig])
        mu = np.array([2.0 * b_coeff / s for s in sig])
        return cls(m, mu, sig, 2.0 * a_coeff / tau, tau, a_coeff, b_coeff, beta)

    @classmethod
    def from_masses(cls, masses, eta=1.0, osmotic_ratio=1.0, tau=1.0, beta=0.0):
        """Derive the metric from masses: sigma_a^2 = eta tau / mass_a.

        osmotic_ratio = mu/m is a single number; the couplings admit only one
        shared value of B, hence one ratio for all axes.
        """
        m = np.atleast_1d(np.asarray(masses, dtype=float))
        if np.any(m <= 0):
            raise ConfigError("masses must be positive")
        ratio = float(osmotic_ratio)
        if ratio < 0:
            raise ConfigError("osmotic_ratio must be nonnegative")
        a_coeff = 0.5 * eta * tau
        sig = tuple(2.0 * a_coeff / mi for mi in m)
        return cls(m, ratio * m, sig, eta, tau, a_coeff, a_coeff * ratio, beta)

    @property
    def dim(self):
        return len(self.sigma_sq)

    @property
    def kappa(self):
        """Rescaling factor that maps osmotic masses onto the masses."""
        if self.b_coeff <= 0.0:
            raise ConfigError("kappa is undefined when the osmotic coupling is zero")
        return math.sqrt(self.a_coeff / self.b_coeff)

    @property
    def eta_over_m(self):
        """Diffusion velocity scale sigma_a^2 / tau, one entry per axis."""
        return self.eta / self.masses

    def matches_space(self, space):
        if len(self.sigma_sq) != space.dim or not np.allclose(
            self.sigma_sq, space.sigma_sq, rtol=1e-12
        ):
            raise GridMismatchError("params.sigma_sq disagrees with the grid's sigma_sq")


# ---------------------------------------------------------------------------
# discrete calculus


def _axis_pad(values, axis):
    """Pad one cell on both ends of an axis by symmetric (even) extension."""
    width = [(0, 0)] * values.ndim
    width[axis] = (1, 1)
    return np.pad(values, width, mode="symmetric")


def _slice_axis(arr, axis, sl):
    idx = [slice(None)] * arr.ndim
    idx[axis] = sl
    return arr[tuple(idx)]


def axis_gradient(f: ScalarField, axis: int) -> np.ndarray:
    """Second-order central difference along one axis (raw array)."""
    dx = f.space.spacings[axis]
    v = f.values
    if f.space.boundary == PERIODIC:
        return (np.roll(v, -1, axis) - np.roll(v, 1, axis)) / (2.0 * dx)
    p = _axis_pad(v, axis)
    return (_slice_axis(p, axis, slice(2, None)) - _slice_axis(p, axis, slice(None, -2))) / (2.0 * dx)


def axis_second_derivative(f: ScalarField, axis: int) -> np.ndarray:
    """Three-point second difference along one axis (raw array)."""
    dx = f.space.spacings[axis]
    v = f.values
    if f.space.boundary == PERIODIC:
        return (np.roll(v, -1, axis) - 2.0 * v + np.roll(v, 1, axis)) / dx**2
    p = _axis_pad(v, axis)
    return (
        _slice_axis(p, axis, slice(2, None))
        - 2.0 * v
        + _slice_axis(p, axis, slice(None, -2))
    ) / dx**2


def gradient(f: ScalarField) -> VectorField:
    comps = np.stack([axis_gradient(f, a) for a in range(f.space.dim)])
    return VectorField(f.space, comps)


def laplacian(f: ScalarField) -> ScalarField:
    total = np.zeros(f.space.shape)
    for a in range(f.space.dim):
        total += axis_second_derivative(f, a)
    return ScalarField(f.space, total)


# ---------------------------------------------------------------------------
# densities


def normalize_density(rho: ScalarField) -> ScalarField:
    """Rescale to unit integral.  Degenerate input is an error, not a fix-up."""
    v = rho.values
    scale = float(np.abs(v).max()) if v.size else 0.0
    if float(v.min()) < -1e-14 * scale:
        raise DegenerateDensityError("density has negative entries")
    v = np.maximum(v, 0.0)  # forgive roundoff-scale negatives only
    total = v.sum() * rho.space.cell_volume
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateDensityError("density has zero or non-finite total mass")
    return ScalarField(rho.space, v / total)


def clamped_log(values: np.ndarray, rel_floor: float = DENSITY_REL_FLOOR) -> np.ndarray:
    """log with a relative floor: cells below rel_floor * max are clamped."""
    vmax = float(np.max(values))
    if vmax <= 0.0:
        raise DegenerateDensityError("cannot take log of a nonpositive field")
    floor = max(rel_floor * vmax, LOG_ABS_GUARD)
    return np.log(np.maximum(values, floor))


def entropy_field(rho: ScalarField, phi: ScalarField) -> ScalarField:
    """Entropy that drives short steps: S = phi + log sqrt(rho)."""
    _check_same_space(rho, phi)
    return ScalarField(rho.space, phi.values + 0.5 * clamped_log(rho.values))


def integrate(f: ScalarField) -> float:
    return f.integral()


def density_moments(rho: ScalarField):
    """Center of mass and variance per axis under the midpoint rule.

    Coordinates are the raw cell centers; on periodic boxes this is only
    meaningful while the mass stays away from the wrap seam.
    """
    w = rho.values * rho.space.cell_volume
    total = w.sum()
    com = np.empty(rho.space.dim)
    var = np.empty(rho.space.dim)
    for a in range(rho.space.dim):
        x = rho.space.meshes[a]
        com[a] = (w * x).sum() / total
        var[a] = (w * (x - com[a]) ** 2).sum() / total
    return com, var


def l1_distance(a: ScalarField, b: ScalarField) -> float:
    _check_same_space(a, b)
    return float(np.abs(a.values - b.values).sum()) * a.space.cell_volume


def l2_distance(a: ScalarField, b: ScalarField) -> float:
    _check_same_space(a, b)
    return math.sqrt(float(((a.values - b.values) ** 2).sum()) * a.space.cell_volume)


def l2_norm(f: ScalarField) -> float:
    return math.sqrt(float((f.values**2).sum()) * f.space.cell_volume)


# ---------------------------------------------------------------------------
# sampling fields at off-grid points


def interpolate_scalar(space: ConfigSpace, values: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of a grid array at (W, dim) positions.

    Periodic axes wrap; reflecting axes see the even extension of the data,
    matching the symmetric-pad convention of the difference stencils.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, space.dim)
    base = np.empty((pos.shape[0], space.dim), dtype=np.intp)
    frac = np.empty((pos.shape[0], space.dim))
    for a in range(space.dim):
        lo = -0.5 * space.extents[a]
        dx = space.spacings[a]
        f = (pos[:, a] - lo) / dx - 0.5  # fractional index in cell-center units
        i0 = np.floor(f).astype(np.intp)
        base[:, a] = i0
        frac[:, a] = f - i0

    # reflecting fold mirrors about cell centers: -1 -> 0, n -> n-1
    def fold_reflect(idx, n):
        idx = np.where(idx < 0, -1 - idx, idx)
        return np.where(idx >= n, 2 * n - 1 - idx, idx)

    out = np.zeros(pos.shape[0])
    for corner in range(1 << space.dim):
        weight = np.ones(pos.shape[0])
        gather = []
        for a in range(space.dim):
            hi = (corner >> a) & 1
            idx = base[:, a] + hi
            n = space.points[a]
            idx = idx % n if space.boundary == PERIODIC else fold_reflect(idx, n)
            gather.append(idx)
            weight *= frac[:, a] if hi else (1.0 - frac[:, a])
        out += weight * values[tuple(gather)]
    return out


def interpolate_vector(field: VectorField, positions: np.ndarray) -> np.ndarray:
    pos = np.asarray(positions, dtype=float).reshape(-1, field.space.dim)
    out = np.empty_like(pos)
    for a in range(field.space.dim):
        out[:, a] = interpolate_scalar(field.space, field.components[a], pos)
    return out
