import math

import numpy as np
import pytest

from entrolab import fokker_planck as fp
from entrolab.errors import StabilityError
from entrolab.fields import (
    ScalarField,
    density_moments,
    l2_distance,
    normalize_density,
)

from conftest import field_l2, gaussian_density, make_params, make_space, zero_field


def sine_entropy(space, amplitude, mode=1):
    x = space.meshes[0]
    return ScalarField(
        space, amplitude * np.sin(2.0 * math.pi * mode * x / space.extents[0])
    )


def test_velocity_decomposition_identity():
    p = make_params(masses=(2.0,), eta=1.5, tau=0.2)
    space = make_space(12.0, 128, p)
    S = sine_entropy(space, 0.3)
    rho = gaussian_density(space, 0.0, 1.0)
    dec = fp.velocity_fields(rho, S, p)
    assert np.allclose(
        dec.current.components, dec.drift.components + dec.osmotic.components
    )
    # drift = (eta/m) dS/dx on the stencil
    from entrolab.fields import axis_gradient

    assert np.allclose(
        dec.drift.components[0], p.eta_over_m[0] * axis_gradient(S, 0)
    )


def test_fp_step_conserves_mass():
    p = make_params(tau=0.1)
    space = make_space(12.0, 128, p)
    S = sine_entropy(space, 0.3)
    rho = gaussian_density(space, 0.0, 1.0)
    dt = 0.25 * fp.fp_stability_limit(S, p)
    stepped = fp.fp_step(rho, S, p, dt)
    assert stepped.integral() == pytest.approx(1.0, abs=1e-12)
    assert stepped.values.min() >= 0.0


def test_fp_step_enforces_stability_bound():
    p = make_params(tau=0.1)
    space = make_space(12.0, 128, p)
    S = sine_entropy(space, 0.3)
    rho = gaussian_density(space, 0.0, 1.0)
    limit = fp.fp_stability_limit(S, p, safety=1.0)
    with pytest.raises(StabilityError) as exc:
        fp.fp_step(rho, S, p, 1.5 * limit)
    assert exc.value.dt_max == pytest.approx(limit)


def test_pure_diffusion_variance_growth_is_exact():
    """Flat entropy: d var/dt = eta/m on the discrete scheme as well."""
    p = make_params(tau=0.1)
    space = make_space(8.0, 256, p)
    rho = gaussian_density(space, 0.0, 0.05)
    S = zero_field(space)
    dt = 1e-4
    _, v0 = density_moments(rho)
    for _ in range(100):
        rho = fp.fp_step(rho, S, p, dt)
    _, v1 = density_moments(rho)
    growth = (v1[0] - v0[0]) / (100 * dt)
    assert growth == pytest.approx(p.eta_over_m[0], abs=1e-10)


def test_two_fp_forms_agree_on_smooth_data():
    """Drift-diffusion and continuity forms are independent discretizations
    of the same flow; they must agree to scheme order, and the agreement is
    the cross-check that keeps either one honest."""
    p = make_params(tau=0.1)
    space = make_space(12.0, 128, p)
    S = sine_entropy(space, 0.3)
    a = gaussian_density(space, 0.0, 1.0)
    b = gaussian_density(space, 0.0, 1.0)
    dt = 0.2 * fp.fp_stability_limit(S, p, rho=a)
    for _ in range(50):
        a = fp.fp_step(a, S, p, dt)
        b = fp.fp_step_continuity(b, S, p, dt)
    assert l2_distance(a, b) < 2e-3


def test_equilibrium_is_stationary():
    """rho proportional to exp(2S) balances drift against diffusion; the
    residual operator is written so this holds to roundoff on the grid."""
    p = make_params(tau=0.1)
    space = make_space(10.0, 128, p)
    S = sine_entropy(space, 0.4)
    rho = normalize_density(ScalarField(space, np.exp(2.0 * S.values)))
    assert fp.stationarity_residual(rho, S, p) < 1e-12
    # fp_step's drift-diffusion stencil is not equilibrium-exact, so the
    # state creeps toward the discrete fixed point; it must stay at the
    # stencil's O(dx^2) distance, not wander off
    dt = 0.3 * fp.fp_stability_limit(S, p)
    stepped = fp.fp_step(rho, S, p, dt)
    assert field_l2(stepped.values, rho.values, space) < 1e-5
    r = stepped
    for _ in range(499):
        r = fp.fp_step(r, S, p, dt)
    assert field_l2(r.values, rho.values, space) < 1e-3


def test_stationarity_residual_detects_disequilibrium():
    p = make_params(tau=0.1)
    space = make_space(10.0, 128, p)
    S = sine_entropy(space, 0.4)
    rho = gaussian_density(space, 0.0, 1.0)
    assert fp.stationarity_residual(rho, S, p) > 1e-3


def test_stability_limit_scales_with_grid():
    p = make_params(tau=0.1)
    coarse = make_space(12.0, 64, p)
    fine = make_space(12.0, 128, p)
    lim_c = fp.fp_stability_limit(sine_entropy(coarse, 0.3), p)
    lim_f = fp.fp_stability_limit(sine_entropy(fine, 0.3), p)
    assert lim_c / lim_f == pytest.approx(4.0, rel=0.2)
