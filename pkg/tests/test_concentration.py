import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flagsim.concentration import (GradientField, concentration_at, construct_witness,
                                   exact_concentration_color, position_fraction,
                                   run_concentration_ribbon)
from flagsim.errors import (ConstructionError, InvalidMeasurement, SingularityError,
                            UnsupportedAspect)
from flagsim.validators import canonical_coloring


def band_oracle(x, a, k):
    """Color from the true position: smallest z with x/a <= z/k."""
    f = x / a
    for z in range(1, k + 1):
        if f <= z / k + 1e-15:
            return z
    return k


def test_concentration_examples():
    assert concentration_at(1.0, 0.0, 3.7) == 1.0
    assert concentration_at(2.0, 0.0, 1) == pytest.approx(0.5)
    assert concentration_at(0.5, 0.0, 2) == pytest.approx(4.0)


def test_concentration_singular():
    with pytest.raises(SingularityError):
        concentration_at((1.0, 2.0), (1.0, 2.0), 1)


def test_color_examples():
    assert exact_concentration_color([1.0, 1.0], 1.5, 3) == 2
    g = GradientField(1.0, 6.0)
    c1, c2 = g.measure(0.5)
    assert (c1, c2) == pytest.approx((2.0, 1 / 5.5))
    assert exact_concentration_color([c1, c2], 1.0, 3) == 1
    g2 = GradientField(2.0, 6.0)
    m = g2.measure(5.5)
    assert m == pytest.approx((1 / 30.25, 4.0))
    assert exact_concentration_color(m, 2.0, 3) == 3


def test_bad_measurement():
    with pytest.raises(InvalidMeasurement):
        position_fraction(0.0, 1.0, 1.0)
    with pytest.raises(InvalidMeasurement):
        exact_concentration_color([1.0], 1.0, 3)


@settings(max_examples=300)
@given(st.floats(0.01, 0.99), st.floats(0.1, 1e4), st.sampled_from([0.5, 1.0, 2.0, 3.0]))
def test_fraction_recovers_position(frac, a, alpha):
    c = GradientField(alpha, a).measure(frac * a)
    assert position_fraction(*c, alpha) == pytest.approx(frac, rel=1e-9)


@settings(max_examples=300)
@given(st.floats(0.001, 0.999), st.integers(2, 6), st.sampled_from([0.5, 1.0, 2.0]))
def test_color_matches_band_oracle(frac, k, alpha):
    # stay away from band edges where float recovery may round either way
    if min(abs(frac * k - z) for z in range(k + 1)) < 1e-7:
        return
    m = GradientField(alpha, 1.0).measure(frac)
    assert exact_concentration_color(m, alpha, k) == band_oracle(frac, 1.0, k)


def test_ribbon_examples():
    assert run_concentration_ribbon(9, 1.0, 1.0, 3).colors == [1, 1, 1, 2, 2, 2, 3, 3, 3]
    assert run_concentration_ribbon(9, 9.0, 1.0, 3).colors == \
        run_concentration_ribbon(9, 9000.0, 1.0, 3).colors
    assert run_concentration_ribbon(1, 1.0, 1.0, 3).colors == [1]
    tr = run_concentration_ribbon(20, 1.0, 1.0, 3)
    assert tr.rounds == 0 and tr.total_message_bits == 0


def test_cell_center_offset_rounds_up():
    # the midpoint of cell 1 of 4 lies past 1/3, unlike the canonical band
    assert run_concentration_ribbon(4, 1.0, 1.0, 3, offset=0.5).colors == [1, 2, 2, 3]
    assert canonical_coloring(4, 3) == [1, 1, 2, 3]


def test_ribbon_oracle_and_scale_invariance():
    for n in range(1, 201):
        for k in range(2, 6):
            ref = canonical_coloring(n, k)
            for alpha in (0.5, 1.0, 2.0):
                runs = [run_concentration_ribbon(n, a, alpha, k).colors for a in (1.0, 7.0, 1e3)]
                assert runs[0] == ref, (n, k, alpha)
                assert runs[1] == runs[0] == runs[2]


def test_witness_example():
    w = construct_witness(3.0, 1.0, 1 / 12)
    assert w.a2 == pytest.approx(math.sqrt(3))
    assert w.x == pytest.approx(1.25)
    assert w.x2 == pytest.approx(0.4330127, abs=1e-6)
    assert w.b2 == pytest.approx(math.sqrt(6.5))
    assert w.x ** 2 + w.b ** 2 / 4 == pytest.approx(1.8125)
    assert (w.x - w.a) ** 2 + w.b ** 2 / 4 == pytest.approx(3.3125)
    assert w.x2 ** 2 + w.b2 ** 2 / 4 == pytest.approx(1.8125)
    assert (w.x2 - w.a2) ** 2 + w.b2 ** 2 / 4 == pytest.approx(3.3125)


def test_witness_small_eps_limit():
    w = construct_witness(2.0, 1.0, 1e-9)
    assert w.a2 == pytest.approx(w.a, rel=1e-6)
    assert w.x2 == pytest.approx(w.a / 3, rel=1e-6)
    assert w.b2 == pytest.approx(w.b, rel=1e-6)


def test_witness_errors():
    with pytest.raises(ConstructionError):
        construct_witness(3.0, 1.0, 1 / 6)
    with pytest.raises(ConstructionError):
        construct_witness(3.0, 1.0, 0.0)
    with pytest.raises(UnsupportedAspect):
        construct_witness(1.0, 1.0, 0.1)


def test_witness_contradiction_certificate():
    w = construct_witness(3.0, 1.0, 0.05)
    alpha = 1.5
    m1 = GradientField(alpha, w.a, w.b).measure((w.x, w.y))
    m2 = GradientField(alpha, w.a2, w.b2).measure((w.x2, w.y2))
    assert np.allclose(m1, m2, rtol=1e-9)
    # the same input must be color 2 in the first flag and color 1 in the second
    assert w.x / w.a - 1 / 3 >= w.eps - 1e-12 and 2 / 3 - w.x / w.a > w.eps
    assert w.x2 / w.a2 <= 1 / 3 - w.eps + 1e-12


@settings(max_examples=300, deadline=None)
@given(st.floats(0.05, 100.0), st.floats(1.001, 50.0), st.floats(1e-6, 1 / 6 - 1e-6))
def test_witness_soundness(b, ratio, eps):
    w = construct_witness(b * ratio, b, eps)
    d1, d2 = w.residuals()
    assert d1 < 1e-9 and d2 < 1e-9
    assert w.a2 > 0 and w.x2 > 0 and w.b2 > 0
    c1, c2 = w.corner_distances()
    assert np.allclose(c1, c2, rtol=1e-9, atol=0)
