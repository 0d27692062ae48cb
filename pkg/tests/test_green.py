import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geopressure.green import external_angle, green_potential, trace_external_ray, trace_rays
from geopressure.mapcore import MapSpec, evaluate
from geopressure.tree import select_base_point


def naive_green(c, z, d=2, n=40):
    # direct iteration, stopped well before overflow
    k = 0
    while abs(z) < 1e100 and k < n:
        z = z ** d + c
        k += 1
    return math.log(abs(z)) / d ** k


def test_green_z2():
    f = MapSpec.unicritical(2, 0)
    assert green_potential(f, 2) == pytest.approx(math.log(2), abs=1e-14)
    assert green_potential(f, 0.5) == 0
    assert green_potential(f, 1) == 0


@given(st.floats(-2, 0.25), st.floats(0.05, 3), st.floats(0, 2 * math.pi))
def test_green_functional_equation(c, r, phi):
    f = MapSpec.unicritical(2, c)
    z = (2.2 + r) * cmath.exp(1j * phi)
    g = green_potential(f, z)
    assert g > 0
    assert green_potential(f, evaluate(f, z)) == pytest.approx(2 * g, rel=1e-12)
    assert g == pytest.approx(naive_green(c, z), rel=1e-10)


def test_rays_z2_are_radial():
    f = MapSpec.unicritical(2, 0)
    angles = [Fraction(0), Fraction(1, 3), Fraction(5, 8)]
    pts = trace_rays(f, angles, [0.2, 0.05])
    for i, p in enumerate([0.2, 0.05]):
        for j, a in enumerate(angles):
            assert pts[i, j] == pytest.approx(cmath.exp(p + 2j * math.pi * float(a)), abs=1e-12)


def test_ray_points_have_requested_potential():
    f = MapSpec.unicritical(2, -1)
    ray = trace_external_ray(f, Fraction(1, 3), 0.4, 0.01)
    assert np.all(np.diff(ray.potentials) < 0)
    for p, z in zip(ray.potentials, ray.points):
        assert green_potential(f, z) == pytest.approx(p, rel=1e-9)
        assert external_angle(f, z) == pytest.approx(1 / 3, abs=1e-9)


def test_ray_of_angle_zero_for_basilica_is_real():
    f = MapSpec.unicritical(2, -1)
    ray = trace_external_ray(f, 0, 0.2, 0.01)
    assert np.max(np.abs(ray.points.imag)) < 1e-12
    assert np.all(ray.points.real > (1 + math.sqrt(5)) / 2)


def test_external_angle_of_real_points():
    f = MapSpec.unicritical(2, -1)
    assert external_angle(f, 3.0) == pytest.approx(0, abs=1e-12)
    assert external_angle(f, -3.0) == pytest.approx(0.5, abs=1e-12)


def test_non_polynomial_rejected():
    with pytest.raises(ValueError):
        green_potential(MapSpec.rational([1, 0, 1], [0, 2]), 1)


def test_base_point_for_basilica_matches_bisection():
    f = MapSpec.unicritical(2, -1)
    z = select_base_point(f, eta=0.2)
    lo, hi = (1 + math.sqrt(5)) / 2, 4.0
    for _ in range(80):
        mid = (lo + hi) / 2
        if naive_green(-1, mid) < 0.1:
            lo = mid
        else:
            hi = mid
    assert abs(z.imag) < 1e-12
    assert z.real == pytest.approx(lo, abs=1e-9)
    assert green_potential(f, z) == pytest.approx(0.1, rel=1e-9)
