import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geopressure.errors import BudgetError, GeoPressureWarning
from geopressure.mapcore import MapSpec
from geopressure.tree import (
    FUZZY,
    PLAIN,
    RESTRICTED,
    FuzzyParams,
    deriv_bounds_on_disk,
    expand_tree,
    fuzzy_tree_pressure,
    multi_sample_tree_pressure,
    plain_tree_pressure,
    restricted_fuzzy_tree_pressure,
    run_tree,
    select_base_point,
)

LOG2 = math.log(2)


def brute_plain(c, d, z, n, t, delta=0.0):
    """Naive recursive enumeration with numpy roots; independent of the package."""
    total = 0.0
    stack = [(complex(z), 0, 0.0)]
    while stack:
        w, k, acc = stack.pop()
        if k == n:
            total += math.exp(-t * acc)
            continue
        coeffs = [1] + [0] * (d - 1) + [c - w]
        for y in np.roots(coeffs):
            base = d * (abs(y) + delta) ** (d - 1)
            stack.append((complex(y), k + 1, acc + math.log(base)))
    return math.log(total) / n


class TestBasePoint:
    def test_z2(self):
        f = MapSpec.unicritical(2, 0)
        assert select_base_point(f, 0.2, 0) == pytest.approx(math.exp(0.1), abs=1e-12)
        assert select_base_point(f, 0.2, 0.5) == pytest.approx(-math.exp(0.1), abs=1e-12)


class TestExpand:
    def test_z2_depth2(self):
        ex = expand_tree(MapSpec.unicritical(2, 0), 1, 2)
        ends = sorted((b.endpoint for b in ex), key=lambda w: (round(w.real, 9), round(w.imag, 9)))
        want = [-1, -1j, 1j, 1]
        assert all(abs(a - b) < 1e-14 for a, b in zip(ends, want))
        assert ex.branch_count == 4 and ex.pruned == 0

    def test_basilica_depth1(self):
        ex = list(expand_tree(MapSpec.unicritical(2, -1), 2, 1))
        assert sorted(round(b.endpoint.real, 12) for b in ex) == [-round(math.sqrt(3), 12),
                                                                   round(math.sqrt(3), 12)]

    def test_z2_depth20_log_plain(self):
        ex = expand_tree(MapSpec.unicritical(2, 0), 1, 20)
        lp = ex.run.records["log_plain"]
        assert ex.branch_count == 2 ** 20
        assert np.max(np.abs(lp - 20 * LOG2)) < 1e-9

    def test_visitor_sees_every_branch(self):
        seen = []
        ex = expand_tree(MapSpec.unicritical(3, 0.1), 0.5, 3, visitor=seen.append)
        list(ex)
        assert len(seen) == 27

    def test_pruning_counts(self):
        ex = expand_tree(MapSpec.unicritical(2, -1), 2, 1, FuzzyParams(delta=0.1, Delta=2.0))
        assert ex.branch_count == 0 and ex.pruned == 2


class TestDerivBounds:
    def test_examples(self):
        z2, z3 = MapSpec.unicritical(2, 0), MapSpec.unicritical(3, 0)
        assert deriv_bounds_on_disk(z2, 1, 0.25) == pytest.approx((1.5, 2.5))
        assert deriv_bounds_on_disk(z2, 0.1, 0.2) == pytest.approx((0, 0.6))
        assert deriv_bounds_on_disk(z3, 2, 0.5) == pytest.approx((6.75, 18.75))

    @given(st.lists(st.builds(complex, st.floats(-2, 2), st.floats(-2, 2)), min_size=3, max_size=5)
           .filter(lambda a: abs(a[-1]) > 0.2),
           st.builds(complex, st.floats(-2, 2), st.floats(-2, 2)), st.floats(0, 0.5))
    def test_polynomial_bounds_contain_samples(self, coeffs, center, r):
        f = MapSpec.polynomial(coeffs)
        lo, hi = deriv_bounds_on_disk(f, center, r)
        der = np.polynomial.polynomial.polyder(np.asarray(coeffs))
        rho = r * np.sqrt(np.linspace(0, 1, 9))[:, None]
        pts = center + rho * np.exp(2j * np.pi * np.linspace(0, 1, 33))[None, :]
        vals = np.abs(np.polynomial.polynomial.polyval(pts, der))
        assert np.all(vals <= hi * (1 + 1e-12) + 1e-12)
        assert np.all(vals >= lo * (1 - 1e-12) - 1e-12)


class TestPlain:
    def test_z2_examples(self):
        f = MapSpec.unicritical(2, 0)
        vals = [s.value for s in plain_tree_pressure(f, 1, 10, [0.5, 1.0])]
        assert vals[0] == pytest.approx(0.5 * LOG2, abs=1e-12)
        assert vals[1] == pytest.approx(0, abs=1e-12)

    def test_basilica_hand_enumeration(self):
        s = plain_tree_pressure(MapSpec.unicritical(2, -1), 2, 1, [1.0])[0]
        assert s.value == pytest.approx(math.log(2 / (2 * math.sqrt(3))), abs=1e-12)
        assert s.branch_count == 2

    @given(st.integers(2, 4), st.integers(1, 6), st.floats(0, 2),
           st.floats(0.2, 3), st.floats(0, 2 * math.pi))
    def test_zd_exact(self, d, n, t, r, phi):
        if d ** n > 5000:
            n = 3
        f = MapSpec.unicritical(d, 0)
        z = cmath.exp(1j * phi)
        v = plain_tree_pressure(f, z, n, [t])[0].value
        assert v == pytest.approx((1 - t) * math.log(d), abs=1e-10)

    @pytest.mark.parametrize("c", [-1, -0.5, 0.25, -0.12 + 0.75j])
    def test_against_brute_force(self, c):
        z = 1.3 + 0.2j
        got = [s.value for s in plain_tree_pressure(MapSpec.unicritical(2, c), z, 6, [0.3, 1.0, 1.7])]
        want = [brute_plain(c, 2, z, 6, t) for t in (0.3, 1.0, 1.7)]
        assert got == pytest.approx(want, abs=1e-10)

    def test_generic_polynomial_path(self):
        # z^2 - 1 written as a general polynomial takes the generic walk
        g = MapSpec.polynomial([-1, 0, 1])
        f = MapSpec.unicritical(2, -1)
        ts = [0.5, 1.0, 1.5]
        a = [s.value for s in plain_tree_pressure(g, 2.5, 7, ts)]
        b = [s.value for s in plain_tree_pressure(f, 2.5, 7, ts)]
        assert a == pytest.approx(b, abs=1e-10)

    def test_rational_map_runs(self):
        f = MapSpec.rational([1, 0, 1], [0, 2])
        s = plain_tree_pressure(f, 0.5 + 0.7j, 5, [1.0])[0]
        assert s.branch_count == 32 and math.isfinite(s.value)

    def test_t_grid_consistency(self):
        f = MapSpec.unicritical(2, -0.5)
        full = [s.value for s in plain_tree_pressure(f, 1.2, 10, [0.2, 0.9, 1.4])]
        for t, v in zip([0.2, 0.9, 1.4], full):
            assert plain_tree_pressure(f, 1.2, 10, [t])[0].value == pytest.approx(v, abs=1e-13)

    def test_threads_agree(self):
        f = MapSpec.unicritical(2, -0.5)
        a = run_tree(f, 1.2, 12, FUZZY, [0.5, 1.0], delta=1e-3, threads=1).values
        b = run_tree(f, 1.2, 12, FUZZY, [0.5, 1.0], delta=1e-3, threads=4).values
        assert np.array_equal(a, b)

    def test_budget(self):
        with pytest.raises(BudgetError):
            run_tree(MapSpec.unicritical(2, 0), 1, 30, PLAIN, [1.0])
        with pytest.raises(BudgetError):
            run_tree(MapSpec.unicritical(2, 0), 1, 12, PLAIN, [1.0], node_budget=1000)


class TestFuzzy:
    def test_examples(self):
        f = MapSpec.unicritical(2, 0)
        assert fuzzy_tree_pressure(f, 1, 1, 0.1, [1.0])[0].value == pytest.approx(math.log(2 / 2.2), abs=1e-12)
        assert abs(fuzzy_tree_pressure(f, 1, 1, 1e-9, [1.0])[0].value) < 1e-8
        assert fuzzy_tree_pressure(f, 1, 1, 0.1, [0.0])[0].value == pytest.approx(LOG2, abs=1e-12)

    def test_rejects_nonpositive_delta(self):
        with pytest.raises(ValueError):
            fuzzy_tree_pressure(MapSpec.unicritical(2, 0), 1, 1, 0, [1.0])

    @pytest.mark.parametrize("c", [-1, 0.2j])
    def test_against_brute_force(self, c):
        z, ts = 1.5, (0.5, 1.2)
        got = [s.value for s in fuzzy_tree_pressure(MapSpec.unicritical(2, c), z, 5, 0.01, ts)]
        want = [brute_plain(c, 2, z, 5, t, delta=0.01) for t in ts]
        assert got == pytest.approx(want, abs=1e-10)

    @given(st.floats(-1.5, 0.25), st.floats(0.01, 2), st.floats(1e-4, 0.05), st.integers(1, 8))
    def test_below_plain(self, c, t, delta, n):
        f = MapSpec.unicritical(2, c)
        p = plain_tree_pressure(f, 1.7, n, [t])[0].value
        q = fuzzy_tree_pressure(f, 1.7, n, delta, [t])[0].value
        assert q <= p + 1e-12

    @given(st.floats(-1.5, 0.25), st.floats(0.01, 2), st.floats(1e-4, 0.05), st.floats(0.1, 0.9))
    def test_delta_monotone(self, c, t, delta, shrink):
        f = MapSpec.unicritical(2, c)
        big = fuzzy_tree_pressure(f, 1.7, 6, delta, [t])[0].value
        small = fuzzy_tree_pressure(f, 1.7, 6, delta * shrink, [t])[0].value
        assert small >= big - 1e-12


class TestRestricted:
    def test_examples(self):
        f = MapSpec.unicritical(2, 0)
        assert restricted_fuzzy_tree_pressure(f, 1, 1, 0.1, 0.01, [1.0])[0].value == \
            pytest.approx(math.log(2 / 2.02), abs=1e-12)
        s = restricted_fuzzy_tree_pressure(f, 1, 5, 0.5, 0.05, [1.0])[0]
        assert s.value == pytest.approx(math.log(2 / 2.1), abs=1e-12)
        assert s.branch_count == 32

    def test_all_pruned(self):
        with pytest.warns(GeoPressureWarning, match="pruned"):
            s = restricted_fuzzy_tree_pressure(MapSpec.unicritical(2, -1), 2, 1, 2, 0.1, [1.0])[0]
        assert s.value == -math.inf and s.branch_count == 0 and s.pruned == 2

    def test_delta_constraint(self):
        with pytest.raises(ValueError):
            restricted_fuzzy_tree_pressure(MapSpec.unicritical(2, 0), 1, 1, 0.1, 0.05, [1.0])

    @given(st.floats(-1.5, 0.25), st.floats(0.01, 2), st.floats(0.01, 0.5), st.integers(1, 8))
    def test_below_fuzzy(self, c, t, Delta, n):
        f = MapSpec.unicritical(2, c)
        delta = Delta / 10
        q = fuzzy_tree_pressure(f, 1.7, n, delta, [t])[0].value
        r = run_tree(f, 1.7, n, RESTRICTED, [t], delta=delta, Delta=Delta)
        if r.leaves:
            assert r.values[0] <= q + 1e-12

    @given(st.integers(2, 3), st.integers(1, 6), st.floats(0.05, 0.9))
    def test_branch_count_exact_on_zd(self, d, n, rad):
        # every backward point of z with |z| = rad^(d^n) has modulus rad^(d^(n-k))
        f = MapSpec.unicritical(d, 0)
        if d ** n > 3000:
            n = 4
        z = rad ** (d ** n)
        if z < 1e-200:
            return
        Delta = 0.5
        if any(abs(rad ** (d ** j) - Delta) < 1e-9 for j in range(n)):
            return
        run = run_tree(f, z, n, RESTRICTED, [1.0], delta=Delta / 10, Delta=Delta)
        first_bad = next((k for k in range(1, n + 1) if rad ** (d ** (n - k)) <= Delta), None)
        if first_bad is None:
            assert run.leaves == d ** n and run.pruned == 0
        else:
            assert run.leaves == 0 and run.pruned == d ** n


class TestMultiSample:
    def test_examples(self):
        f = MapSpec.unicritical(2, 0)
        s = multi_sample_tree_pressure(f, 1, 1, 0.1, 2, [1.0])[0]
        assert s.value == pytest.approx(math.log(2 * min(1 / 1.9, 1 / 2.1)), abs=1e-12)

    def test_seed_changes_orientation_only(self):
        f = MapSpec.unicritical(2, -0.5)
        a = multi_sample_tree_pressure(f, 1.2, 6, 0.01, 3, [1.0], seed=0)[0].value
        b = multi_sample_tree_pressure(f, 1.2, 6, 0.01, 3, [1.0], seed=7)[0].value
        c = multi_sample_tree_pressure(f, 1.2, 6, 0.01, 3, [1.0], seed=7)[0].value
        assert b == c and abs(a - b) < 1e-2

    @given(st.floats(-1.5, 0.25), st.floats(0.01, 2), st.floats(1e-4, 0.05), st.integers(2, 6))
    def test_between_fuzzy_and_plain(self, c, t, delta, m):
        f = MapSpec.unicritical(2, c)
        p = plain_tree_pressure(f, 1.7, 6, [t])[0].value
        q = fuzzy_tree_pressure(f, 1.7, 6, delta / 2, [t])[0].value
        s = multi_sample_tree_pressure(f, 1.7, 6, delta, m, [t])[0].value
        assert q - 1e-12 <= s <= p + 1e-12

    def test_rejects_m1(self):
        with pytest.raises(ValueError):
            multi_sample_tree_pressure(MapSpec.unicritical(2, 0), 1, 1, 0.1, 1, [1.0])
