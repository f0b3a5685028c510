import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tempvis import model
from tempvis.geometry import GazePoint, code_to_luminance
from tempvis.visibility import (PatchAnalyzer, VisibilityMap, analyze_video, jnd_scale,
                                minkowski_pool, patch_probability, sensitivity_volume)


def flicker_frames(shape, n, amplitude=0.1, f_t=10.0, fps=120.0):
    t = np.arange(n) / fps
    return [np.full(shape, 0.5 + amplitude * np.cos(2 * np.pi * f_t * ti)) for ti in t]


def test_minkowski_excludes_static_and_matches_norm():
    c = np.zeros((3, 2, 2))
    c[0] = 100.0
    c[1, 0, 0] = 3.0
    c[2, 1, 1] = -4.0
    assert minkowski_pool(c, 2.0) == pytest.approx(5.0)
    assert minkowski_pool(c, 1.0) == pytest.approx(7.0)
    with pytest.raises(ValueError):
        minkowski_pool(c, 0.5)


@given(st.floats(1, 4), st.floats(0.1, 10))
def test_minkowski_homogeneous(r, k):
    c = np.random.default_rng(0).random((3, 4, 4))
    assert minkowski_pool(k * c, r) == pytest.approx(k * minkowski_pool(c, r))


def test_jnd_scale_elementwise():
    np.testing.assert_allclose(jnd_scale([0.1, 0.2], [10, 5]), [1.0, 1.0])


def test_sensitivity_volume_layout(geom):
    vol = sensitivity_volume((25, 71, 71), 10.0, geom)
    assert vol.shape == (25, 71, 71)
    f = 1 / (2 * 70) * 34.11556
    assert vol[4, 0, 7] == pytest.approx(model.linear_sensitivity(10.0, 7 * f, 0.0, 10.0), rel=1e-4)
    assert vol[4, 7, 0] == pytest.approx(vol[4, 0, 7])


def test_static_patch_is_invisible(geom):
    c_m, psi, p = patch_probability(np.full((25, 71, 71), 80.0), 5.0, geom=geom)
    assert c_m < 1e-9 and psi == pytest.approx(0.5) and p == pytest.approx(0.0, abs=1e-9)


def test_patch_dims_guard(geom):
    with pytest.raises(ValueError, match="any_dims"):
        patch_probability(np.ones((10, 10, 10)), 0.0, geom=geom)
    patch_probability(np.ones((10, 10, 10)), 0.0, geom=geom, any_dims=True)
    with pytest.raises(ValueError):
        patch_probability(np.ones((25, 71, 71)), 0.0)


def test_probability_grows_with_flicker_amplitude(geom):
    ps = []
    for amp in (0.01, 0.05, 0.2):
        lum = code_to_luminance(geom, np.stack(flicker_frames((71, 71), 25, amp)))
        ps.append(patch_probability(lum, 10.0, geom=geom)[2])
    assert ps[0] < ps[1] < ps[2]


@pytest.mark.parametrize("dtype,rtol", [(np.float64, 1e-12), (np.float32, 1e-4)])
def test_analyzer_matches_reference(geom, dtype, rtol):
    rng = np.random.default_rng(2)
    patches = rng.random((3, 25, 71, 71)) * 30 + 60
    eccs = [0.0, 7.5, 33.0]
    fast = PatchAnalyzer(geom, dtype=dtype).pooled(patches, eccs)
    ref = [patch_probability(patches[i], e, geom=geom)[0] for i, e in enumerate(eccs)]
    np.testing.assert_allclose(fast, ref, rtol=rtol)


def test_analyzer_local_scaling_and_eccentric_shift(geom):
    params = model.SensitivityParams(b8=0.05, b7=0.01)
    rng = np.random.default_rng(3)
    patches = rng.random((2, 25, 71, 71)) * 30 + 60
    fast = PatchAnalyzer(geom, params, dtype=np.float64).pooled(patches, [3.0, 20.0], [0.03, 0.025])
    ref = [patch_probability(patches[0], 3.0, params, geom, deg_per_px=0.03)[0],
           patch_probability(patches[1], 20.0, params, geom, deg_per_px=0.025)[0]]
    np.testing.assert_allclose(fast, ref, rtol=1e-10)


def test_analyze_static_video_is_zero(small_geom):
    frames = [np.full((142, 142), 0.4)] * 50
    vmap = analyze_video(frames, GazePoint(70, 70), small_geom)
    assert vmap.shape == (2, 2, 2)
    assert not np.any(vmap.p_norm) and not np.any(vmap.c_m)
    assert vmap.coverage == pytest.approx(1.0)


def test_analyze_probability_falls_with_eccentricity(geom):
    g = geom.cropped(426, 71)
    vmap = analyze_video(flicker_frames((71, 426), 25, 0.05), GazePoint(35, 35), g)
    row = vmap.p_norm[0, 0]
    assert np.all(np.diff(vmap.ecc_deg[0, 0]) > 0)
    assert np.all(np.diff(row) < 0)
    assert vmap.ecc_deg[0, 0, 0] == pytest.approx(0.0, abs=1e-9)


def test_analyze_gaze_sources_agree(small_geom):
    frames = flicker_frames((142, 142), 50, 0.05)
    g = GazePoint(10, 20)
    fixed = analyze_video(frames, g, small_geom)
    seq = analyze_video(frames, [g, g], small_geom)
    call = analyze_video(frames, lambda f: g, small_geom)
    np.testing.assert_array_equal(fixed.p_norm, seq.p_norm)
    np.testing.assert_array_equal(fixed.p_norm, call.p_norm)


def test_analyze_gaze_callable_sampled_mid_window(small_geom):
    seen = []

    def gaze(frame):
        seen.append(frame)
        return GazePoint(0, 0)
    analyze_video(flicker_frames((142, 142), 50), gaze, small_geom)
    assert seen == [12, 37]


def test_analyze_skips_partial_window_and_border(geom):
    g = geom.cropped(150, 80)
    vmap = analyze_video(flicker_frames((80, 150), 60), GazePoint(0, 0), g)
    assert vmap.shape == (2, 1, 2)
    assert vmap.n_frames == 60
    assert vmap.coverage == pytest.approx(50 * 71 * 142 / (60 * 80 * 150))


def test_analyze_errors(small_geom):
    with pytest.raises(ValueError, match="at least"):
        analyze_video(flicker_frames((142, 142), 10), GazePoint(0, 0), small_geom)
    with pytest.raises(ValueError, match="shape"):
        analyze_video(flicker_frames((100, 142), 25), GazePoint(0, 0), small_geom)
    with pytest.raises(ValueError):
        analyze_video([], GazePoint(0, 0), small_geom, workers=0)


def test_workers_do_not_change_results(geom):
    g = geom.cropped(213, 213)
    rng = np.random.default_rng(9)
    frames = [rng.random((213, 213)) for _ in range(25)]
    a = analyze_video(frames, GazePoint(0, 0), g, workers=1)
    b = analyze_video(frames, GazePoint(0, 0), g, workers=4)
    assert a.to_csv() == b.to_csv()


def test_csv_roundtrip(small_geom):
    vmap = analyze_video(flicker_frames((142, 142), 25, 0.05), GazePoint(3, 4), small_geom)
    text = vmap.to_csv()
    assert text.splitlines()[0] == "t_idx,x_idx,y_idx,ecc_deg,C_M,psi,p_norm"
    back = VisibilityMap.from_csv(text)
    np.testing.assert_array_equal(back.p_norm, vmap.p_norm)
    np.testing.assert_array_equal(back.c_m, vmap.c_m)
    with pytest.raises(ValueError):
        VisibilityMap.from_csv("t_idx,x_idx,y_idx,ecc_deg,C_M,psi,p_norm\n")
