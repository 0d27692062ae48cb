import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geopressure.errors import PoleError
from geopressure.mapcore import (
    MapSpec,
    critical_points,
    derivative_modulus,
    distance_to_critical_set,
    evaluate,
    preimages,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
points = st.builds(complex, finite, finite)


def maps():
    uni = st.builds(MapSpec.unicritical, st.integers(2, 4), points.map(lambda z: z / 2))
    poly = st.lists(points, min_size=3, max_size=5).filter(lambda a: abs(a[-1]) > 0.3) \
        .map(MapSpec.polynomial)
    rat = st.sampled_from([
        MapSpec.rational([1, 0, 1], [0, 2]),            # (z^2 + 1) / 2z
        MapSpec.rational([0, 0, 1], [1, 0, 0.5]),
        MapSpec.rational([-1, 0, 0, 1], [0, 0, 3]),
    ])
    return st.one_of(uni, poly, rat)


class TestEvaluate:
    def test_examples(self, z2):
        assert evaluate(z2, 1 + 1j) == 2j
        assert evaluate(MapSpec.unicritical(2, -1), 0) == -1
        assert evaluate(MapSpec.unicritical(3, 0), 2) == 8

    def test_pole(self):
        f = MapSpec.rational([1, 0, 1], [0, 1])
        with pytest.raises(PoleError):
            evaluate(f, 0)
        with pytest.raises(PoleError):
            derivative_modulus(f, 0)

    def test_array_input(self, z2):
        z = np.array([1, 2j, -1])
        assert np.allclose(evaluate(z2, z), z ** 2)

    def test_rejects_bad_specs(self):
        with pytest.raises(ValueError):
            MapSpec.unicritical(1, 0)
        with pytest.raises(ValueError):
            MapSpec.polynomial([1, 2])
        with pytest.raises(ValueError):
            MapSpec.rational([-1, 0, 1], [1, 1])          # shared root at -1

    def test_dict_roundtrip(self):
        for f in (MapSpec.unicritical(3, -0.5 + 0.1j), MapSpec.polynomial([1, 0, -3, 1]),
                  MapSpec.rational([1, 0, 1], [0, 2])):
            assert MapSpec.from_dict(f.to_dict()) == f


class TestDerivative:
    def test_examples(self, z2):
        assert derivative_modulus(z2, 1, "euclidean") == 2
        assert derivative_modulus(z2, 1, "spherical") == 2
        assert derivative_modulus(MapSpec.unicritical(2, 1), 0, "euclidean") == 0

    def test_default_metric(self):
        assert MapSpec.unicritical(2, 0).default_metric == "euclidean"
        assert MapSpec.rational([1, 0, 1], [0, 2]).default_metric == "spherical"

    @given(maps(), points)
    def test_finite_difference(self, f, z):
        try:
            d = derivative_modulus(f, z, "euclidean")
            h = 1e-7 * cmath.exp(0.3j)
            fd = abs(evaluate(f, z + h) - evaluate(f, z)) / abs(h)
        except PoleError:
            return
        if distance_to_critical_set(f, z) < 1e-3 or not math.isfinite(d) or d > 1e3:
            return
        if not f.is_polynomial:
            q = abs(np.polyval(np.asarray(f.denominator)[::-1], z))
            if q < 0.1:
                return
        assert abs(d - fd) <= 1e-5 * max(1.0, d)

    @given(maps(), points)
    def test_spherical_consistency(self, f, z):
        try:
            e = derivative_modulus(f, z, "euclidean")
            s = derivative_modulus(f, z, "spherical")
            w = evaluate(f, z)
        except PoleError:
            return
        with np.errstate(all="ignore"):
            oracle = e * (1 + abs(z) ** 2) / (1 + abs(w) ** 2)
        if not math.isfinite(oracle):
            # naive quotient overflows next to a pole; the spherical value must stay finite
            assert math.isfinite(s)
            return
        assert s == pytest.approx(oracle, rel=1e-12)

    def test_spherical_finite_near_pole(self):
        f = MapSpec.rational([1, 0, 1], [0, 2])
        # f = (1 + z^2) / 2z behaves like 1/(2z) near 0, whose spherical derivative tends to 2
        assert derivative_modulus(f, 1e-200j, "spherical") == pytest.approx(2.0, rel=1e-12)


class TestCriticalPoints:
    def test_unicritical(self):
        assert critical_points(MapSpec.unicritical(2, 0.3)) == [(0j, 2)]
        assert critical_points(MapSpec.unicritical(3, 0.3)) == [(0j, 3)]

    def test_cubic(self):
        crit = critical_points(MapSpec.polynomial([0, -3, 0, 1]))
        assert [m for _, m in crit] == [2, 2]
        assert abs(crit[0][0] + 1) < 1e-12 and abs(crit[1][0] - 1) < 1e-12

    def test_degenerate_critical_point(self):
        crit = critical_points(MapSpec.polynomial([1, 0, 0, 1]))   # z^3 + 1
        assert len(crit) == 1 and crit[0][1] == 3 and abs(crit[0][0]) < 1e-5

    def test_rational(self):
        crit = critical_points(MapSpec.rational([1, 0, 1], [0, 2]))   # Newton map of z^2 - 1
        locs = sorted(round(c.real, 9) for c, _ in crit)
        assert locs == [-1.0, 1.0]

    @given(maps())
    def test_derivative_vanishes(self, f):
        for c, nu in critical_points(f):
            assert nu >= 2
            if not f.is_polynomial and abs(np.polyval(np.asarray(f.denominator)[::-1], c)) < 1e-9:
                continue                                  # multiple pole, critical on the sphere
            assert derivative_modulus(f, c, "euclidean") <= 1e-5 * (1 + abs(c)) ** f.degree


class TestPreimages:
    def test_examples(self, z2):
        pre = preimages(z2, 4)
        assert [m for _, m in pre] == [1, 1]
        assert abs(pre[0][0] + 2) < 1e-15 and abs(pre[1][0] - 2) < 1e-15
        assert preimages(MapSpec.unicritical(2, -1), -1) == [(0j, 2)]
        cube = preimages(MapSpec.unicritical(3, 0), 8)
        want = sorted((2 * cmath.exp(2j * math.pi * k / 3) for k in range(3)),
                      key=lambda w: (w.real, w.imag))
        assert all(abs(w - v) < 1e-14 and m == 1 for (w, m), v in zip(cube, want))

    def test_deterministic_order(self):
        f = MapSpec.polynomial([0.2, 0, -1, 1])
        pre = preimages(f, 0.7 + 0.1j)
        assert pre == sorted(pre, key=lambda p: (p[0].real, p[0].imag))
        assert pre == preimages(f, 0.7 + 0.1j)

    def test_polynomial_collapse(self):
        f = MapSpec.polynomial([0, -3, 0, 1])     # f(1) = -2 with nu(1) = 2
        pre = preimages(f, -2)
        assert sorted(m for _, m in pre) == [1, 2]

    @given(maps(), points)
    def test_count_and_residual(self, f, z):
        try:
            w0 = evaluate(f, z)
        except PoleError:
            return
        if not abs(w0) < 1e6:
            return
        pre = preimages(f, w0)
        assert sum(m for _, m in pre) == f.degree
        for w, _ in pre:
            assert abs(evaluate(f, w) - w0) <= 1e-10 * (1 + abs(w0))


class TestDistance:
    def test_examples(self, z2):
        assert distance_to_critical_set(MapSpec.unicritical(2, 0.4), 1) == 1
        assert distance_to_critical_set(MapSpec.polynomial([0, -3, 0, 1]), 0) == pytest.approx(1, abs=1e-12)
        assert distance_to_critical_set(z2, 0) == 0

    def test_no_critical_points(self):
        # Moebius-free rational of degree 2 always has critical points; use a
        # map whose finite critical set is empty: 1/z^2 has its only critical
        # points at 0 and infinity, 0 is a pole, so check the array path instead
        f = MapSpec.unicritical(2, 0)
        d = distance_to_critical_set(f, np.array([1, 2j]))
        assert np.allclose(d, [1, 2])
