import math

import numpy as np
import pytest

from nagumo_pb.energy import AutonomousSystem, choose_band, equilibrium, level_curve, rot_floor, time_map
from nagumo_pb.flow import IntegratorSettings, LinearSystem, integrate
from nagumo_pb.model import SystemParams, Weight, split_weight
from nagumo_pb.rotation import (NonstandardIntegrandWarning, RadiusSearchError, ReferenceHitError,
                                outer_radius_search, rot_integral, rot_m, rot_many, rot_over,
                                sample_circle_rot, unwrap_angle)


@pytest.fixture(scope="module")
def harmonic():
    return LinearSystem(1.0, beta=2 * math.pi)


def test_circular_motion_unwraps_to_minus_two_pi(harmonic):
    traj = integrate((1.0, 0.0), 0.0, 2 * math.pi, harmonic)
    rec = unwrap_angle(traj, (0.0, 0.0))
    assert rec.theta[-1] - rec.theta[0] == pytest.approx(-2 * math.pi, abs=1e-8)
    assert -math.pi < rec.theta[0] <= math.pi
    assert np.all(np.abs(np.diff(rec.theta)) < math.pi / 2)
    assert rec.winding == pytest.approx(1.0, abs=1e-9)


def test_unwrap_refines_coarse_samples(harmonic):
    # few solver steps per turn; refinement must still keep increments below pi/2
    traj = integrate((1.0, 0.0), 0.0, 6 * math.pi, LinearSystem(1.0, beta=6 * math.pi),
                     IntegratorSettings(1e-3, 1e-3, 100.0))
    rec = unwrap_angle(traj, (0.0, 0.0))
    assert np.all(np.abs(np.diff(rec.theta)) < math.pi / 2)
    assert rec.winding == pytest.approx(3.0, abs=1e-2)


def test_constant_solution_has_constant_angle(const20, auto20):
    an = equilibrium(auto20)
    traj = integrate((an, 0.0), 0.0, 2.0, const20)
    rec = unwrap_angle(traj, (0.3, 0.2))
    assert np.ptp(rec.theta) < 1e-10


def test_harmonic_rot_is_one(harmonic):
    assert rot_m((1.0, 0.0), (0.0, 0.0), 1, harmonic) == pytest.approx(1.0, abs=1e-9)
    assert rot_integral((1.0, 0.0), (0.0, 0.0), 1, harmonic) == pytest.approx(1.0, abs=1e-9)


def test_closed_orbit_one_turn(auto20, gamma20, const20):
    tau = time_map(auto20, gamma20)
    r = rot_over((gamma20.b_plus, 0.0), gamma20.center, 0.0, tau, const20)
    assert r == pytest.approx(1.0, abs=1e-7)


def test_rot_floor_lower_bound(f0):
    sys = AutonomousSystem(0.1, 320.0, f0)
    lc = level_curve(sys, choose_band(sys))
    p = sys.params(beta=1.0)
    floor = rot_floor(sys, lc, 1, 1.0)
    assert floor == 1
    rots = rot_many(lc.resample(32), lc.center, 1, p).rot
    assert np.all(rots >= floor)
    tau = time_map(sys, lc)
    assert np.all(rots <= math.ceil(1.0 / tau))


def test_rot_integral_matches_definition_at_origin(const20):
    z0 = (0.5, 0.3)
    a = rot_m(z0, (0.0, 0.0), 2, const20)
    b = rot_integral(z0, (0.0, 0.0), 2, const20)
    assert b == pytest.approx(a, abs=1e-6)


def test_rot_integral_flags_nonorigin_reference(const20):
    with pytest.warns(NonstandardIntegrandWarning):
        rot_integral((0.5, 0.3), (0.6, 0.0), 1, const20)


def test_reference_hit(const20, auto20):
    an = equilibrium(auto20)
    with pytest.raises(ReferenceHitError):
        rot_m((an, 0.0), (an, 0.0), 1, const20)


def test_tolerance_refinement_stability(step20):
    s = IntegratorSettings()
    for z0 in [(0.3, 0.2), (0.65, 0.0), (0.9, -0.3)]:
        r1 = rot_m(z0, (0.61, 0.0), 2, step20, s)
        r2 = rot_m(z0, (0.61, 0.0), 2, step20, s.tightened(10))
        assert abs(r1 - r2) < 1e-6


def test_outer_radius_free_particle():
    res = outer_radius_search((0.6, 0.0), 1, LinearSystem(0.0), r_init=2.0)
    assert res.radius == 2.0
    assert res.max_rot < 0.5


@pytest.mark.parametrize("m", [1, 2, 3])
def test_outer_radius_default_model(const20, m):
    q0 = (0.6129, 0.0)
    res = outer_radius_search(q0, m, const20, n_samples=64)
    assert math.isfinite(res.radius)
    assert np.all(res.rots < 1.0)
    _, rots2, ok = sample_circle_rot(2 * res.radius, q0, m, const20, IntegratorSettings(), 64)
    assert ok and rots2.max() <= res.max_rot + 0.1


def test_outer_radius_rejects_far_reference(const20):
    with pytest.raises(ValueError):
        outer_radius_search((2.0, 0.0), 1, const20)


def test_outer_radius_failure_reported(const20):
    with pytest.raises(RadiusSearchError):
        outer_radius_search((0.6, 0.0), 1, const20, r_init=0.01, r_max=0.02, margin=0.0)
