import math

import numpy as np
import pytest

from nagumo_pb.energy import (AutonomousSystem, EnergyError, choose_band, energy, equilibrium,
                              first_return_time, level_curve, period_bound, rot_floor, time_map)
from nagumo_pb.model import Nonlinearity, build_modified

from conftest import bisect_root


def oracle_equilibrium(nbar, g=0.1, a=0.6):
    # away from zero, g s = nbar F(s) reduces to (1 - s)(s - a) = g / nbar
    return bisect_root(lambda s: (1 - s) * (s - a) - g / nbar, a, a + 0.5 * (1 - a))


def test_energy_symmetry_and_origin(auto20):
    assert energy((0.0, 0.0), auto20) == 0.0
    for z in [(0.3, 0.7), (0.65, -0.1), (-0.2, 0.5), (1.3, 2.0)]:
        assert energy(z, auto20) == energy((z[0], -z[1]), auto20)


def test_primitive_matches_quadrature(f0):
    from scipy.integrate import quad
    for x in (-0.7, 0.3, 0.8, 1.0, 1.6):
        assert f0.primitive(x) == pytest.approx(quad(f0, 0.0, x, limit=200)[0], abs=1e-12)


def test_equilibrium_nbar20(auto20):
    assert equilibrium(auto20) == pytest.approx(oracle_equilibrium(20.0), abs=1e-11)
    assert equilibrium(auto20) == pytest.approx(0.612917, abs=1e-6)


def test_equilibrium_above_a_and_decreasing(f0):
    prev = math.inf
    for nbar in (3.0, 5.0, 20.0, 80.0, 200.0, 320.0, 1e4):
        an = equilibrium(AutonomousSystem(0.1, nbar, f0))
        assert an > 0.6
        assert an < prev
        assert an == pytest.approx(oracle_equilibrium(nbar), abs=1e-10)
        prev = an


def test_no_equilibrium_below_threshold(f0):
    # max of (1 - s)(s - 0.6) is 0.04, so nbar must be at least g / 0.04 = 2.5
    with pytest.raises(EnergyError) as exc:
        equilibrium(AutonomousSystem(0.1, 2.4, f0))
    assert exc.value.code == "no-equilibrium"


def test_band_default(auto20, f0):
    assert float(f0.deriv(0.6)) == pytest.approx(0.24, abs=1e-14)
    band = choose_band(auto20)
    # F'(s) = 0.12 <=> 3 s^2 - 3.2 s + 0.72 = 0, right-hand root
    b_oracle = (3.2 + math.sqrt(3.2 ** 2 - 4 * 3 * 0.72)) / 6
    assert band.b == pytest.approx(b_oracle, abs=1e-10)
    assert band.d0 == pytest.approx(0.12, abs=1e-9)
    assert band.mu0 == pytest.approx(0.1 / 0.12, rel=1e-8)
    s = np.linspace(band.a, band.b, 2001)
    assert np.all(f0.deriv(s) >= band.d0 - 1e-12)


def test_band_hypothesis_violation():
    flat = np.polymul(np.polymul([-1.0, 1.0], [1.0, 0.0]), np.poly([0.6, 0.6, 0.6]))
    f = Nonlinearity(tuple(flat), 0.6)
    sys = AutonomousSystem(0.1, 20.0, build_modified(f))
    with pytest.raises(EnergyError) as exc:
        choose_band(sys)
    assert exc.value.code == "hypothesis"


def test_level_curve_properties(auto20, band20, gamma20):
    lc = gamma20
    Ea = float(auto20.potential(band20.a))
    Eb = float(auto20.potential(band20.b))
    assert lc.c == pytest.approx(min(Ea, Eb), abs=1e-15)
    assert float(auto20.potential(lc.a_nbar)) < lc.c
    assert lc.b_minus < lc.a_nbar < lc.b_plus
    assert float(auto20.potential(lc.b_plus)) == pytest.approx(lc.c, abs=1e-10)
    assert float(auto20.potential(lc.b_minus)) == pytest.approx(lc.c, abs=1e-10)
    assert np.max(np.abs(energy(lc.boundary, auto20) - lc.c)) < 1e-10
    assert lc.is_star_shaped()


def test_level_curve_fraction_rule(auto20, band20, gamma20):
    half = level_curve(auto20, band20, ("fraction", 0.5))
    assert gamma20.b_minus < half.b_minus < half.a_nbar < half.b_plus < gamma20.b_plus
    for bad in (0.0, 1.5):
        with pytest.raises(EnergyError) as exc:
            level_curve(auto20, band20, ("fraction", bad))
        assert exc.value.code == "invalid-level"


def test_energy_strictly_convex_on_band(auto20, band20):
    x = np.linspace(band20.a, band20.b, 4001)
    E = auto20.potential(x)
    assert np.all(np.diff(E, 2) > 0)
    an = equilibrium(auto20)
    far = np.abs(x - an) > 1e-6
    assert np.all(E[far] > float(auto20.potential(an)))


@pytest.mark.parametrize("nbar", [20.0, 80.0, 320.0])
def test_time_map_bound_and_flow_oracle(f0, nbar):
    sys = AutonomousSystem(0.1, nbar, f0)
    band = choose_band(sys)
    lc = level_curve(sys, band)
    tau = time_map(sys, lc)
    assert tau <= period_bound(nbar, band.d0, 0.1)
    assert abs(tau - first_return_time(sys, lc)) < 1e-6


def test_time_map_decreasing(f0):
    taus = []
    for nbar in (20.0, 80.0, 320.0):
        sys = AutonomousSystem(0.1, nbar, f0)
        taus.append(time_map(sys, level_curve(sys, choose_band(sys))))
    assert taus[0] > taus[1] > taus[2]


def test_period_bound_value():
    assert period_bound(20.0, 0.12, 0.1) == pytest.approx(2 * math.pi / math.sqrt(2.3))
    assert period_bound(20.0, 0.12, 0.1) == pytest.approx(4.143, abs=1e-3)


def test_rot_floor_examples(f0):
    assert rot_floor(None, None, 1, 1.0, tau=4.0) == 0
    assert rot_floor(None, None, 1, 1.0, tau=0.3) == 3
    floors = []
    for nbar in (20.0, 80.0):
        sys = AutonomousSystem(0.1, nbar, f0)
        floors.append(rot_floor(sys, level_curve(sys, choose_band(sys)), 10, 1.0))
    assert 1.5 <= floors[1] / floors[0] <= 2.5
