import numpy as np
import pytest

from principal_config import jets


def fd4(fn, x, h=1e-3):
    """Independent 4-jet of a scalar callable by central differences."""
    f = fn
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h) - 2 * f(x) + f(x - h)) / h ** 2
    d3 = (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) \
        / (2 * h ** 3)
    return np.array([f(x), d1, d2, d3])


@pytest.mark.parametrize("x", [0.13, 1.7, -2.4])
def test_harmonics_jet_matches_fd(x):
    h = jets.Harmonics([(2.0, 0.3, 1.5), (3.0, -0.7, 0.4), (0.0, 0.0, 2.0)])

    def f(t):
        return (1.5 * np.cos(2 * t + 0.3) + 0.4 * np.cos(3 * t - 0.7)
                + 2.0)

    got = h.jet(x)
    want = fd4(f, x)
    assert np.allclose(got, want, rtol=1e-5, atol=1e-5)


def test_harmonics_product_is_exact():
    a = jets.Harmonics([(1.0, 0.2, 0.7), (2.0, -0.4, 1.1)])
    b = jets.Harmonics([(3.0, 0.9, 0.5), (0.0, 0.0, 0.3)])
    prod = a.times(b)
    xs = np.linspace(-3, 3, 37)
    direct = a.jet(xs)[0] * b.jet(xs)[0]
    assert np.allclose(prod.jet(xs)[0], direct, atol=1e-13)


def test_product_and_sum_collapse_to_harmonics():
    a = jets.Wave(1.0)
    b = jets.wave_sin(2.0, amp=0.5)
    assert isinstance(jets.Product(a, b), jets.Harmonics)
    assert isinstance(jets.SumFn(a, b), jets.Harmonics)


def test_poly_jet():
    p = jets.Poly([1.0, -2.0, 0.5, 3.0])   # 1 - 2x + 0.5x^2 + 3x^3

    def f(x):
        return 1 - 2 * x + 0.5 * x ** 2 + 3 * x ** 3

    got = p.jet(0.77)
    assert np.allclose(got, fd4(f, 0.77), rtol=1e-5, atol=1e-5)
    assert got[3] == pytest.approx(18.0)


def test_smoothstep_limits_and_continuity():
    s = jets.SmoothStep(0.2, 0.8)
    assert s.jet(0.1)[0] == 0.0
    assert s.jet(0.9)[0] == 1.0
    assert np.all(s.jet(0.1)[1:] == 0.0)
    # C2 at the joints: value/1st/2nd continuous, 3rd jumps
    eps = 1e-9
    lo, hi = s.jet(0.2 - eps), s.jet(0.2 + eps)
    assert np.allclose(lo[:3], hi[:3], atol=1e-6)
    assert abs(lo[3] - hi[3]) > 1.0


def test_even_reflect_flips_odd_derivatives():
    inner = jets.SmoothStep(0.2, 0.8)
    r = jets.EvenReflect(inner)
    plus = r.jet(0.5)
    minus = r.jet(-0.5)
    assert minus[0] == plus[0]
    assert minus[1] == -plus[1]
    assert minus[2] == plus[2]


def test_cos_of_composition():
    inner = jets.SmoothStep(0.0, 1.0, gain=0.9)
    c = jets.CosOf(inner)

    def f(x):
        t = np.clip(x, 0, 1)
        s = t ** 3 * (10 - 15 * t + 6 * t * t)
        return np.cos(0.9 * s)

    got = c.jet(0.43)
    assert np.allclose(got, fd4(f, 0.43, h=1e-4), rtol=1e-4, atol=1e-4)
