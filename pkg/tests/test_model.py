import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from preytaxis.model import (ModelParams, chi, chi_derivative, logistic_growth,
                             predation_rate, reaction_f1, reaction_f2, reaction_jacobian,
                             reactions)

finite = st.floats(-20, 20, allow_nan=False)


def test_defaults():
    p = ModelParams()
    assert (p.d1, p.d2, p.e, p.a, p.r, p.K, p.p, p.q) == (0.1, 0.1, 1, 0.25, 2, 4, 1, 1)
    assert (p.u_m, p.M1, p.M2) == (2, 2, 4)
    assert p.bounds == (2, 4)


@pytest.mark.parametrize("field", ["d1", "d2", "e", "a", "r", "K", "p", "u_m", "M2"])
def test_nonpositive_rejected(field):
    with pytest.raises(ValueError, match=field):
        ModelParams(**{field: 0.0})


def test_m1_below_um_rejected():
    with pytest.raises(ValueError, match="M1"):
        ModelParams(M1=1.0, u_m=2.0)


def test_predation_rate_examples():
    p = ModelParams()
    assert predation_rate(0.0, p) == 0.0
    assert predation_rate(1.0, p) == 0.5
    sat = ModelParams(p=2.0, q=4.0)
    assert abs(predation_rate(1e12, sat) - 0.5) < 1e-11


def test_logistic_examples():
    assert logistic_growth(0.0, ModelParams(r=1, K=1)) == 0.0
    assert logistic_growth(2.0, ModelParams(r=3, K=2)) == 0.0
    assert logistic_growth(1.0, ModelParams()) == 1.5


def test_chi_examples():
    p = ModelParams()
    assert chi(p.u_m, p) == 0.0
    assert chi(1.0, p) == 1.0
    assert chi(-0.5, p) == 0.0
    assert chi(p.u_m + 0.5, p) == 0.0


def test_reaction_examples():
    assert reaction_f1(2.0, -1.0, ModelParams(a=3.0)) == -6.0
    assert reaction_f1(-1.0, 5.0, ModelParams()) == 0.0
    assert reaction_f1(1.0, 1.0, ModelParams()) == 0.25
    assert reaction_f2(3.0, -2.0, ModelParams()) == 0.0
    assert reaction_f2(-1.0, 1.0, ModelParams()) == 1.5
    assert reaction_f2(1.0, 1.0, ModelParams()) == 1.0


def test_zero_state_is_rest_point():
    p = ModelParams()
    assert reaction_f1(0.0, 0.0, p) == 0.0
    assert reaction_f2(0.0, 0.0, p) == 0.0
    assert chi(0.0, p) == 0.0


def test_fused_reactions_match(rng):
    p = ModelParams()
    u1 = rng.uniform(-3, 5, (7, 40))
    u2 = rng.uniform(-3, 5, (7, 40))
    f1, f2 = reactions(u1, u2, p)
    np.testing.assert_allclose(f1, reaction_f1(u1, u2, p), atol=1e-14)
    np.testing.assert_allclose(f2, reaction_f2(u1, u2, p), atol=1e-14)
    a, b = reactions(1.0, 1.0, p)
    assert a.shape == () and float(a) == 0.25 and float(b) == 1.0


@settings(max_examples=200, deadline=None)
@given(finite, finite)
def test_branch_definitions(u1, u2):
    """Sign extension written out case by case."""
    p = ModelParams()
    pi = p.p * u2 / (1 + p.q * u2) if u2 >= 0 else 0.0
    k = p.r * u2 * (1 - u2 / p.K)
    if u1 >= 0 and u2 >= 0:
        f1, f2 = p.e * pi * u1 - p.a * u1, k - pi * u1
    elif u1 >= 0:
        f1, f2 = -p.a * u1, 0.0
    elif u2 >= 0:
        f1, f2 = 0.0, k
    else:
        f1, f2 = 0.0, 0.0
    assert reaction_f1(u1, u2, p) == pytest.approx(f1, abs=1e-12)
    assert reaction_f2(u1, u2, p) == pytest.approx(f2, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(finite)
def test_chi_piecewise(u1):
    p = ModelParams()
    expected = u1 * (p.u_m - u1) if 0 <= u1 <= p.u_m else 0.0
    assert chi(u1, p) == pytest.approx(expected, abs=1e-12)
    assert chi(u1, p) >= 0


def test_jacobian_matches_differences(rng):
    p = ModelParams()
    # stay away from the kinks at 0 where one-sided values differ
    u1 = rng.uniform(0.1, 3, 200) * rng.choice([-1, 1], 200)
    u2 = rng.uniform(0.1, 3, 200) * rng.choice([-1, 1], 200)
    h = 1e-6
    d = reaction_jacobian(u1, u2, p)
    fd = [(reaction_f1(u1 + h, u2, p) - reaction_f1(u1 - h, u2, p)) / (2 * h),
          (reaction_f1(u1, u2 + h, p) - reaction_f1(u1, u2 - h, p)) / (2 * h),
          (reaction_f2(u1 + h, u2, p) - reaction_f2(u1 - h, u2, p)) / (2 * h),
          (reaction_f2(u1, u2 + h, p) - reaction_f2(u1, u2 - h, p)) / (2 * h)]
    for a, b in zip(d, fd):
        np.testing.assert_allclose(a, b, atol=1e-7)
    x = np.array([-1.0, 0.5, 1.5, 3.0])
    fdc = (chi(x + h, p) - chi(x - h, p)) / (2 * h)
    np.testing.assert_allclose(chi_derivative(x, p), fdc, atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(finite, finite, finite, finite)
def test_reactions_globally_lipschitz(u1, u2, v1, v2):
    """Sign extension keeps the reactions Lipschitz on bounded boxes."""
    p = ModelParams()
    du = np.hypot(u1 - v1, u2 - v2)
    # Lipschitz constant of the extended F on [-20, 20]^2
    L = 2 * (p.e * p.p + p.a) * 20 + p.r * (1 + 2 * 20 / p.K) + p.p * 20 + p.p
    for f in (reaction_f1, reaction_f2):
        assert abs(f(u1, u2, p) - f(v1, v2, p)) <= L * du + 1e-9
