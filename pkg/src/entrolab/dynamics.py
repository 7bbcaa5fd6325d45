"""Coupled density/phase dynamics on the statistical manifold.

The state is a pair (rho, phi).  The density moves along the current
velocity v_a = (eta/m_a)(dphi/dx_a - beta A_a) by the continuity equation,
and the phase obeys a Hamilton-Jacobi equation with an osmotic correction:

    eta dphi/dt + sum_a (eta^2 / 2 m_a)(dphi/dx_a - beta A_a)^2 + V
        - sum_a (mu_a eta^2 / 2 m_a^2) (d^2 sqrt(rho)/dx_a^2) / sqrt(rho) = 0 .

Together these conserve the functional

    E = int rho [ sum_a (eta^2/2 m_a)(dphi_a - beta A_a)^2
                + sum_a (mu_a eta^2 / 8 m_a^2)(dlog rho / dx_a)^2 + V ]

for static potentials.  When mu_a = m_a the pair is the polar form of a
linear wave equation; general mu is handled by the same stepper and can be
mapped onto the linear case by the rescaling in regraduate().

Time stepping is a symmetric (Strang) composition: half step of rho, full
step of phi against the half-stepped density, half step of rho with the new
phase.  Each substep uses the explicit midpoint rule, so the whole step is
second order in dt and second order in dx (central fluxes).  The composition
is the kick-drift-kick pattern of a canonically conjugate pair, which keeps
linearized modes neutrally stable up to the dispersion bound reported by
coupled_stability_limit; periodic boxes only.

The polar form is singular where rho -> 0, and five guards keep the
vacuum from poisoning the supported region; none of them engages on cells
that carry measurable mass.  (1) The density entering the osmotic force
is clamped at DENSITY_REL_FLOOR times its peak and the stencil's
amplitude ratios are clipped, so the force is zero deep in empty regions
and bounded across unresolved jumps.  (2) Continuity faces steeper than
FACE_RATIO_LIMIT in density fall back from central to donor-cell flux, so
cliffs diffuse monotonically instead of ringing negative.  (3) The energy
integrand and the stability estimate ignore cells below the support
floor, a connected-region mask with hysteresis (SUPPORT_REL_FLOOR,
SUPPORT_CORE_FACTOR): velocities over empty cells move nothing.  (4)
After every step the phase below the support floor is rewritten by a
smooth blend of slope-tapered extensions from the two support boundaries,
because phase kinks seeded at the clamp edge would otherwise grow and
creep back into the support through the kinetic term, and any jump inside
the fill would act as a convergent velocity that compresses trace density
into fake mass.  (5) Density below VACUUM_FLUSH_FLOOR times the peak is
flushed to exact zero, removing the seed such compression would feed on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, StabilityError
from .fields import (
    DENSITY_REL_FLOOR,
    PERIODIC,
    ConfigSpace,
    PhysicalParams,
    ScalarField,
    VectorField,
    _axis_pad,
    _slice_axis,
    axis_gradient,
    axis_second_derivative,
    clamped_log,
    gradient,
    normalize_density,
)


@dataclass(frozen=True, eq=False)
class ManifoldState:
    rho: ScalarField
    phi: ScalarField
    time: float = 0.0

    def __post_init__(self):
        if not self.rho.space.same_grid(self.phi.space):
            raise ConfigError("rho and phi live on different grids")

    @property
    def space(self) -> ConfigSpace:
        return self.rho.space


@dataclass(frozen=True)
class EnergyBreakdown:
    current_term: float
    osmotic_term: float
    potential_term: float

    @property
    def total(self):
        return self.current_term + self.osmotic_term + self.potential_term


# relative density level that counts as dynamical support; kept well above
# the clamp floor so the clamped osmotic shell lies entirely in the vacuum
SUPPORT_REL_FLOOR = 1e-8
# a connected region only counts as support if it climbs this far above the
# floor somewhere; bare floor-level islands are transport noise, not mass
SUPPORT_CORE_FACTOR = 100.0
# density this far below the peak is flushed to exact zero after each step;
# trace amounts left in the vacuum are the seed that convergent filled-phase
# velocities can compress back up into fake mass islands
VACUUM_FLUSH_FLOOR = 1e-14


def _mass_mask(rho_values):
    """Support = connected regions above the floor that contain a core cell.

    Transport noise sprinkles isolated cells around the floor level; treating
    them as support would hand the phase fill garbage boundary slopes, so a
    region is kept only if it reaches SUPPORT_CORE_FACTOR times the floor.
    Components are connected across the periodic wrap.
    """
    peak = rho_values.max()
    loose = rho_values >= SUPPORT_REL_FLOOR * peak
    if loose.all():
        return loose
    labels, n = ndimage.label(loose)
    parent = list(range(n + 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a in range(rho_values.ndim):
        idx_lo = [slice(None)] * rho_values.ndim
        idx_lo[a] = 0
        idx_hi = [slice(None)] * rho_values.ndim
        idx_hi[a] = -1
        lo = np.atleast_1d(labels[tuple(idx_lo)]).ravel()
        hi = np.atleast_1d(labels[tuple(idx_hi)]).ravel()
        for i, j in zip(lo, hi):
            if i and j:
                ri, rj = find(int(i)), find(int(j))
                if ri != rj:
                    parent[ri] = rj
    roots = np.array([find(i) for i in range(n + 1)])
    rooted = roots[labels]
    core = rho_values >= SUPPORT_CORE_FACTOR * SUPPORT_REL_FLOOR * peak
    kept = np.unique(rooted[core])
    kept = kept[kept != 0]
    return np.isin(rooted, kept)


def _extend_phase_into_vacuum(phi_values, rho_values):
    """Extend the phase from the support boundary into sub-floor cells.

    The phase carries no information where there is no density, but evolving
    it there lets the clamped osmotic term build phase kinks at the clamp
    edge that creep back into the support through the kinetic term.  Each
    vacuum cell is instead rewritten from the nearest support boundary:
    linearly in one dimension (the boundary value and its one-sided slope,
    so a translating packet keeps its advection phase ramp across the
    boundary), by nearest-value dilation in higher dimensions.  The fill is
    linear in the phase values, so it commutes with the coupling-rescaling
    map; no cell that carries mass is touched.
    """
    mask = _mass_mask(rho_values)
    if mask.all():
        return phi_values
    if phi_values.ndim == 1:
        return _linear_fill_1d(phi_values, mask)
    filled = mask.copy()
    out = np.where(mask, phi_values, 0.0)
    while not filled.all():
        acc = np.zeros_like(out)
        cnt = np.zeros(out.shape)
        for a in range(out.ndim):
            for s in (1, -1):
                nb_ok = np.roll(filled, s, axis=a)
                nb_val = np.roll(out, s, axis=a)
                take = ~filled & nb_ok
                acc[take] += nb_val[take]
                cnt[take] += 1.0
        newly = cnt > 0
        out[newly] = acc[newly] / cnt[newly]
        filled |= newly
    return out


def _edge_slope(phi, m, i, inward):
    """Per-cell phase increment at a support boundary cell, one-sided.

    Averaged over up to three cells into the support to keep a single noisy
    boundary value from steering the whole fill ramp.
    """
    n = m.size
    for k in (3, 2, 1):
        if all(m[(i + inward * t) % n] for t in range(1, k + 1)):
            d = (phi[(i + inward * k) % n] - phi[i]) / k
            return d if inward > 0 else -d
    return 0.0


# the fill ramp's slope decays by this factor per cell, so the extension
# goes flat within ~10 cells and deep-vacuum fill ramps cannot advect the
# floor-level leakage into puddles where two ramps meet
FILL_SLOPE_DECAY = 0.7


def _linear_fill_1d(phi_values, mask):
    n = mask.size
    shift = int(np.argmax(mask))  # rotate a supported cell to index 0
    m = np.roll(mask, -shift)
    phi = np.roll(phi_values, -shift).copy()
    r = FILL_SLOPE_DECAY
    edges = np.flatnonzero(m[:-1] != m[1:])  # last index of each run
    # runs alternate supported / vacuum starting supported; pair them up
    for start, stop in zip(edges[::2], np.append(edges[1::2], n - 1)):
        left = start  # last supported cell before the gap
        right = (stop + 1) % n  # first supported cell after the gap
        gap = stop - start
        slope_l = _edge_slope(phi, m, left, -1)
        slope_r = _edge_slope(phi, m, right, +1)
        # Blend the two tapered branches with a smoothstep weight instead of
        # letting them meet at a point: a meeting-point jump is a convergent
        # velocity singularity that compresses whatever trace density sits
        # in the gap at an unbounded rate.
        for k in range(1, gap + 1):
            j = gap + 1 - k
            branch_l = phi[left] + slope_l * (1.0 - r**k) / (1.0 - r)
            branch_r = phi[right] - slope_r * (1.0 - r**j) / (1.0 - r)
            s = k / (gap + 1.0)
            w = 1.0 - s * s * (3.0 - 2.0 * s)
            phi[left + k] = w * branch_l + (1.0 - w) * branch_r
    return np.roll(phi, shift)


# neighbor amplitude ratios above this are unresolved jumps, not tails: a
# resolved exponential tail changes by e^{|dlog rho| dx / 2} per cell.  The
# curvature of a jump is clipped to the stencil scale instead of diverging
# as (amp_live / amp_floor) / dx^2.
AMP_RATIO_LIMIT = 8.0


def _axis_neighbors(values, space, axis):
    if space.boundary == PERIODIC:
        return np.roll(values, -1, axis), np.roll(values, 1, axis)
    p = _axis_pad(values, axis)
    return _slice_axis(p, axis, slice(2, None)), _slice_axis(p, axis, slice(None, -2))


def quantum_potential(rho: ScalarField, params: PhysicalParams) -> ScalarField:
    """The osmotic curvature term sum_a (mu_a eta^2 / 2 m_a^2) Lap_a sqrt(rho)/sqrt(rho).

    The density is clamped at DENSITY_REL_FLOOR relative to its peak before
    the ratio is formed, so the term is zero deep in empty regions, and the
    neighbor amplitude ratios entering the second difference are clipped at
    AMP_RATIO_LIMIT, so it stays bounded across unresolved cliffs.  On
    resolved profiles neither guard engages and the term is the plain
    three-point ratio.
    """
    params.matches_space(rho.space)
    space = rho.space
    amp = np.sqrt(np.maximum(rho.values, DENSITY_REL_FLOOR * rho.values.max()))
    out = np.zeros(space.shape)
    for a in range(space.dim):
        coeff = params.osmotic_masses[a] * params.eta**2 / (2.0 * params.masses[a] ** 2)
        if coeff == 0.0:
            continue
        plus, minus = _axis_neighbors(amp, space, a)
        curv = (
            np.minimum(plus / amp, AMP_RATIO_LIMIT)
            + np.minimum(minus / amp, AMP_RATIO_LIMIT)
            - 2.0
        ) / space.spacings[a] ** 2
        out += coeff * curv
    return ScalarField(space, out)


def current_velocity(phi: ScalarField, params: PhysicalParams, A: VectorField | None = None) -> VectorField:
    g = gradient(phi).components
    if A is not None:
        g = g - params.beta * A.components
    scale = params.eta_over_m.reshape((-1,) + (1,) * phi.space.dim)
    return VectorField(phi.space, scale * g)


def energy(
    state: ManifoldState,
    params: PhysicalParams,
    V: ScalarField,
    A: VectorField | None = None,
) -> EnergyBreakdown:
    """Midpoint-rule energy integrals; empty cells contribute nothing."""
    params.matches_space(state.space)
    space = state.space
    rho = state.rho.values
    mask = _mass_mask(rho)
    weight = np.where(mask, rho, 0.0) * space.cell_volume

    gphi = gradient(state.phi).components
    if A is not None:
        gphi = gphi - params.beta * A.components
    current = 0.0
    for a in range(space.dim):
        coeff = params.eta**2 / (2.0 * params.masses[a])
        current += coeff * float((weight * gphi[a] ** 2).sum())

    glog = gradient(ScalarField(space, clamped_log(rho))).components
    osmotic = 0.0
    for a in range(space.dim):
        coeff = params.osmotic_masses[a] * params.eta**2 / (8.0 * params.masses[a] ** 2)
        osmotic += coeff * float((weight * glog[a] ** 2).sum())

    potential = float((weight * V.values).sum())
    return EnergyBreakdown(current_term=current, osmotic_term=osmotic, potential_term=potential)


# ---------------------------------------------------------------------------
# stepping


def _require_periodic(space):
    if space.boundary != PERIODIC:
        raise ConfigError("the coupled solver runs on periodic boxes only")


def _phase_rhs(rho_values, phi_values, space, params, V_values, A):
    kinetic = np.zeros(space.shape)
    phi_field = ScalarField(space, phi_values)
    for a in range(space.dim):
        g = axis_gradient(phi_field, a)
        if A is not None:
            g = g - params.beta * A.components[a]
        kinetic += (params.eta**2 / (2.0 * params.masses[a])) * g**2
    q = quantum_potential(ScalarField(space, rho_values), params).values
    return (q - kinetic - V_values) / params.eta


# faces with a density ratio above this are advected donor-cell instead of
# centrally: central fluxes ring on unresolved cliffs, the ringing clips
# negative, and the clipping sharpens the cliff into an exact-zero wall
FACE_RATIO_LIMIT = math.exp(1.5)


def _continuity_rhs_central(rho_values, phi_values, space, params, A):
    """-sum_a d(rho v_a)/dx_a in flux form.

    Faces between cells of comparable density take the second-order central
    flux; faces steeper than FACE_RATIO_LIMIT fall back to first-order
    donor-cell, which diffuses a cliff monotonically instead of ringing.
    Resolved mass-carrying regions never trigger the fallback.
    """
    phi_field = ScalarField(space, phi_values)
    rhs = np.zeros(space.shape)
    for a in range(space.dim):
        g = axis_gradient(phi_field, a)
        if A is not None:
            g = g - params.beta * A.components[a]
        v = params.eta_over_m[a] * g
        cell_flux = rho_values * v
        rho_plus = np.roll(rho_values, -1, a)
        central = 0.5 * (cell_flux + np.roll(cell_flux, -1, a))
        v_face = 0.5 * (v + np.roll(v, -1, a))
        donor = np.where(v_face > 0.0, rho_values, rho_plus) * v_face
        steep = (rho_values > FACE_RATIO_LIMIT * rho_plus) | (
            rho_plus > FACE_RATIO_LIMIT * rho_values
        )
        face = np.where(steep, donor, central)  # face[i]: between cells i, i+1
        rhs -= (face - np.roll(face, 1, a)) / space.spacings[a]
    return rhs


def phase_step(
    state: ManifoldState,
    params: PhysicalParams,
    V: ScalarField,
    dt: float,
    A: VectorField | None = None,
) -> ScalarField:
    """Advance phi by one explicit midpoint step with rho frozen."""
    params.matches_space(state.space)
    space = state.space
    rho = state.rho.values
    phi = state.phi.values
    k1 = _phase_rhs(rho, phi, space, params, V.values, A)
    mid = phi + 0.5 * dt * k1
    k2 = _phase_rhs(rho, mid, space, params, V.values, A)
    return ScalarField(space, phi + dt * k2)


def _rho_halfstep(rho_values, phi_values, space, params, A, half_dt):
    k1 = _continuity_rhs_central(rho_values, phi_values, space, params, A)
    mid = rho_values + 0.5 * half_dt * k1
    k2 = _continuity_rhs_central(mid, phi_values, space, params, A)
    return rho_values + half_dt * k2


def coupled_stability_limit(
    state: ManifoldState,
    params: PhysicalParams,
    A: VectorField | None = None,
    safety: float = 0.8,
) -> float:
    """Admissible dt: dispersion of the osmotic term plus advection.

    The stiffest linearized mode oscillates at
    omega_max = sum_a sqrt(mu_a/m_a) (eta / 2 m_a) lambda_a with lambda_a the
    largest stencil eigenvalue 4/dx_a^2; the kick-drift-kick composition is
    neutrally stable for omega dt <= 2.  Advection speeds are measured only
    where the density carries mass (velocity over empty cells moves nothing).
    """
    space = state.space
    omega = 0.0
    for a in range(space.dim):
        ratio = params.osmotic_masses[a] / params.masses[a]
        omega += math.sqrt(ratio) * (params.eta / (2.0 * params.masses[a])) * 4.0 / space.spacings[a] ** 2
    v = current_velocity(state.phi, params, A).components
    mask = _mass_mask(state.rho.values)
    rate = 0.5 * omega
    for a in range(space.dim):
        vmax = float(np.abs(v[a])[mask].max()) if mask.any() else 0.0
        rate += vmax / space.spacings[a]
    if rate <= 0.0:
        return math.inf
    return safety / rate


def coupled_step(
    state: ManifoldState,
    params: PhysicalParams,
    V: ScalarField,
    dt: float,
    A: VectorField | None = None,
) -> ManifoldState:
    """One symmetric split step: rho half, phi full, rho half."""
    params.matches_space(state.space)
    _require_periodic(state.space)
    space = state.space
    limit = coupled_stability_limit(state, params, A, safety=1.0)
    if dt > limit:
        raise StabilityError(f"dt={dt:g} exceeds the split-step bound {limit:g}", dt_max=limit)

    rho_half = _rho_halfstep(state.rho.values, state.phi.values, space, params, A, 0.5 * dt)
    rho_half = np.maximum(rho_half, 0.0)
    phi_new = phase_step(
        ManifoldState(ScalarField(space, rho_half), state.phi, state.time), params, V, dt, A
    )
    rho_new = _rho_halfstep(rho_half, phi_new.values, space, params, A, 0.5 * dt)
    rho_new = np.maximum(rho_new, 0.0)
    rho_new[rho_new < VACUUM_FLUSH_FLOOR * rho_new.max()] = 0.0
    rho_new = normalize_density(ScalarField(space, rho_new))
    phi_out = ScalarField(space, _extend_phase_into_vacuum(phi_new.values, rho_new.values))
    return ManifoldState(rho=rho_new, phi=phi_out, time=state.time + dt)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class EnergyRateReport:
    times: np.ndarray
    totals: np.ndarray
    numeric_rates: np.ndarray  # centered differences, interior snapshots
    imposed_rates: np.ndarray  # int rho (dV/dt + eta beta v . dA/dt)
    scale: float

    @property
    def max_relative_mismatch(self):
        if self.numeric_rates.size == 0:
            return 0.0
        return float(np.abs(self.numeric_rates - self.imposed_rates).max() / self.scale)


def energy_rate_audit(
    states,
    params: PhysicalParams,
    V_series,
    A_series=None,
) -> EnergyRateReport:
    """Compare dE/dt along a trajectory with the imposed-rate integral.

    For static potentials the imposed rate is zero and the report reduces to
    an energy-drift audit.  Rates are normalized by max(|imposed rate|,
    |E(0)| / duration) so both the driven and the static cases read as
    relative numbers.
    """
    states = list(states)
    if len(states) < 3:
        raise ValueError("need at least three snapshots for centered rates")
    if len(V_series) != len(states):
        raise ValueError("V_series must align with the snapshots")
    if A_series is not None and len(A_series) != len(states):
        raise ValueError("A_series must align with the snapshots")

    times = np.array([s.time for s in states])
    totals = np.array(
        [
            energy(s, params, V_series[k], A_series[k] if A_series else None).total
            for k, s in enumerate(states)
        ]
    )
    numeric = np.empty(len(states) - 2)
    imposed = np.empty(len(states) - 2)
    for k in range(1, len(states) - 1):
        span = times[k + 1] - times[k - 1]
        numeric[k - 1] = (totals[k + 1] - totals[k - 1]) / span
        vdot = (V_series[k + 1].values - V_series[k - 1].values) / span
        rate = states[k].rho.values * vdot
        if A_series is not None:
            v = current_velocity(states[k].phi, params, A_series[k]).components
            adot = (A_series[k + 1].components - A_series[k - 1].components) / span
            rate = rate + states[k].rho.values * params.eta * params.beta * (v * adot).sum(axis=0)
        imposed[k - 1] = float(rate.sum()) * states[k].space.cell_volume

    duration = times[-1] - times[0]
    scale = max(float(np.abs(imposed).max()) if imposed.size else 0.0, abs(totals[0]) / duration)
    if scale == 0.0:
        scale = 1.0
    return EnergyRateReport(times=times, totals=totals, numeric_rates=numeric, imposed_rates=imposed, scale=scale)


def hamilton_jacobi_residual(
    before: ManifoldState,
    after: ManifoldState,
    params: PhysicalParams,
    V: ScalarField,
) -> float:
    """Mass-weighted L2 norm of the classical Hamilton-Jacobi left-hand side.

    The action is eta * phi; its time derivative comes from differencing the
    two snapshots, the spatial terms from the midpoint fields.  The weight
    rho keeps the norm insensitive to cells that carry no probability (the
    phase of an empty cell is unobservable).  For states evolved by
    coupled_step the residual equals the osmotic curvature term up to scheme
    error, so it shrinks as eta^2 (or linearly in mu) toward the classical
    limit.
    """
    params.matches_space(before.space)
    span = after.time - before.time
    if span <= 0:
        raise ValueError("snapshots must be time-ordered")
    space = before.space
    phi_mid = 0.5 * (before.phi.values + after.phi.values)
    rho_mid = 0.5 * (before.rho.values + after.rho.values)
    lhs = params.eta * (after.phi.values - before.phi.values) / span + V.values
    phi_field = ScalarField(space, phi_mid)
    for a in range(space.dim):
        g = axis_gradient(phi_field, a)
        lhs = lhs + (params.eta**2 / (2.0 * params.masses[a])) * g**2
    weight = np.where(_mass_mask(rho_mid), rho_mid, 0.0)
    return math.sqrt(float((weight * lhs**2).sum()) * space.cell_volume)


def regraduate(state: ManifoldState, params: PhysicalParams, kappa: float | None = None):
    """Rescale (phi, eta, tau, mu) leaving the physical trajectory invariant.

    phi' = kappa phi, eta' = eta/kappa, tau' = kappa tau, mu' = kappa^2 mu;
    masses are untouched.  With the natural choice kappa = sqrt(A/B) the
    rescaled osmotic masses equal the masses and the dynamics becomes the
    polar form of the linear wave equation.

    The charge coupling carries inverse action units, so it rescales as
    beta' = kappa beta; the drift combination grad(phi) - beta A then picks
    up a uniform factor kappa and the velocity field is left untouched.
    """
    if kappa is None:
        kappa = params.kappa
    if kappa <= 0:
        raise ConfigError("kappa must be positive")
    new_params = PhysicalParams(
        masses=params.masses,
        osmotic_masses=kappa**2 * params.osmotic_masses,
        sigma_sq=params.sigma_sq,
        eta=params.eta / kappa,
        tau=kappa * params.tau,
        a_coeff=params.a_coeff,
        b_coeff=kappa**2 * params.b_coeff,
        beta=kappa * params.beta,
    )
    new_phi = ScalarField(state.space, kappa * state.phi.values)
    return ManifoldState(rho=state.rho, phi=new_phi, time=state.time), new_params
