import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tempvis import model
from tempvis.model import DEFAULT_PARAMS, SensitivityParams

finite_pos = st.floats(0, 200, allow_nan=False)


def test_default_constants():
    p = DEFAULT_PARAMS
    assert p.a == (3.2714, 0.3830, 0.7669, -0.2555)
    assert (p.b1, p.b2, p.b3, p.b4) == (1.0051, 0.1830, 0.9517, 0.0173)
    assert p.b5 == (-0.1375, 0.3753, 2.3855)
    assert (p.r, p.L_min, p.p_g, p.beta0, p.beta1) == (1.9932, 50.0, 0.5, 1.7934, 1.5)


@given(finite_pos)
def test_power_transform_roundtrip(x):
    y = model.power_transform(x)
    assert y == pytest.approx(math.log(1 + x))
    assert model.inverse_power_transform(y) == pytest.approx(x, rel=1e-12, abs=1e-12)


@given(st.floats(0.1, 3), st.floats(0.5, 2), finite_pos)
def test_general_box_cox_roundtrip(lam1, lam2, x):
    y = model.power_transform(x, lam1, lam2)
    assert model.inverse_power_transform(y, lam1, lam2) == pytest.approx(x, rel=1e-9, abs=1e-9)


def test_power_transform_domain():
    with pytest.raises(ValueError):
        model.power_transform(-2.0)


@given(st.floats(0, 6))
def test_delange_polynomial_matches_polyval(x):
    expected = np.polyval(list(reversed(DEFAULT_PARAMS.a)), x)
    assert model.s_delange(x) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_softplus_stable():
    assert model.softplus(0.0) == pytest.approx(math.log(2))
    assert model.softplus(1000.0) == pytest.approx(1000.0)
    assert model.softplus(-1000.0) == pytest.approx(0.0)
    x = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(model.softplus(x), np.log1p(np.exp(x)))


def test_ecc_power_zero_base_convention():
    q = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_array_equal(model._ecc_power(0.0, q), [0.0, 1.0, 0.0])
    np.testing.assert_allclose(model._ecc_power(2.0, q), [0.5, 1.0, 4.0])


def test_sensitivity_composition():
    f_t, f_h, f_v, e = 10.0, 2.0, 3.0, 15.0
    ft, fh, fv, el = (math.log1p(v) for v in (f_t, f_h, f_v, e))
    p = DEFAULT_PARAMS
    s = fh + fv
    q = p.b5[0] * s * s + p.b5[1] * s + p.b5[2]
    t = p.b1 - p.b2 * s ** p.b3 - p.b4 * el ** q
    u = ft - p.b6 + p.b7 * s + p.b8 * el
    dl = sum(c * u ** i for i, c in enumerate(p.a))
    expected = t * math.log1p(math.exp(dl))
    assert model.log_sensitivity(f_t, f_h, f_v, e) == pytest.approx(expected, rel=1e-12)
    assert model.linear_sensitivity(f_t, f_h, f_v, e) == pytest.approx(math.expm1(expected))


def test_threshold_is_reciprocal_and_inf_when_insensitive():
    assert model.threshold_contrast(10, 0, 0, 10) == pytest.approx(
        1 / model.linear_sensitivity(10, 0, 0, 10))
    steep = SensitivityParams(b2=5.0)
    assert model.threshold_contrast(10, 9, 9, 10, steep) == math.inf


def test_psychometric_anchors():
    assert model.psychometric(0.0) == 0.5
    assert model.psychometric(1.4041) == pytest.approx(0.75, abs=1e-3)
    grid = np.linspace(0, 20, 10_000)
    assert np.all(np.diff(model.psychometric(grid)) >= 0)
    with pytest.raises(ValueError):
        model.psychometric(-1.0)


@given(st.floats(0, 0.999))
def test_contrast_for_probability_inverts(p):
    c = model.contrast_for_probability(p)
    assert model.detection_probability(c) == pytest.approx(p, abs=1e-9)
    assert model.normalized_probability(model.psychometric(c)) == pytest.approx(p, abs=1e-9)


def test_normalized_probability_clamps():
    with pytest.warns(RuntimeWarning):
        assert model.normalized_probability(0.3) == 0.0
    assert model.normalized_probability(1.0) == 1.0


@pytest.mark.parametrize("fh", [0.0, 4.54, 9.06])
@pytest.mark.parametrize("fv", [0.0, 4.54, 9.06])
def test_sensitivity_nonincreasing_in_eccentricity(fh, fv):
    for ft in (2.5, 5, 10, 20, 30, 60):
        s = [model.linear_sensitivity(ft, fh, fv, e) for e in (10, 25, 40)]
        assert s[0] >= s[1] >= s[2]


def test_foveal_peak_near_ten_hz():
    f = np.linspace(0.5, 60, 600)
    peak = f[np.argmax(model.linear_sensitivity(f, 0, 0, 0))]
    assert 4 < peak < 15


def test_cff_properties():
    cff = [model.critical_flicker_frequency(0, 0, e) for e in (0, 10, 25, 40)]
    assert all(a > b for a, b in zip(cff, cff[1:]))
    assert model.critical_flicker_frequency(0, 0, 0, c_max=1.0) >= cff[0]
    assert model.critical_flicker_frequency(9, 9, 40, c_max=0.001) is None
    # at the returned frequency the threshold is met, just above it is not
    f = cff[1]
    assert model.linear_sensitivity(f, 0, 0, 10) >= 2
    assert model.linear_sensitivity(f + 0.02, 0, 0, 10) < 2
    with pytest.raises(ValueError):
        model.critical_flicker_frequency(0, 0, 0, c_max=0)


def test_params_validation_and_roundtrip(tmp_path):
    with pytest.raises(ValueError):
        SensitivityParams(r=0.5)
    with pytest.raises(ValueError):
        SensitivityParams(b2=-1)
    with pytest.raises(ValueError):
        SensitivityParams.from_dict({"gamma": 1})
    p = DEFAULT_PARAMS.with_b(DEFAULT_PARAMS.b * 1.1)
    assert np.allclose(p.b, DEFAULT_PARAMS.b * 1.1)
    assert SensitivityParams.from_dict(p.to_dict()) == p
    path = tmp_path / "p.json"
    path.write_text('{"r": 2.5}')
    assert SensitivityParams.from_json(path).r == 2.5
