import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tempvis.aliasing import (FlowField, cff_csv, cff_table, flicker_score, motion_compensate,
                              read_flo, read_flows, score_report, write_flo,
                              write_flow_container)
from tempvis.visibility import VisibilityMap

probs = arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 1))


def translating(shape, n, speed, period=16.0):
    x = np.arange(shape[1])
    return np.stack([np.tile(0.5 + 0.4 * np.cos(2 * np.pi * (x - speed * t) / period), (shape[0], 1))
                     for t in range(n)])


def test_flo_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    flow = FlowField(rng.normal(size=(5, 7)), rng.normal(size=(5, 7)))
    write_flo(tmp_path / "a.flo", flow)
    raw = (tmp_path / "a.flo").read_bytes()
    assert raw[:4] == b"PIEH"
    assert int.from_bytes(raw[4:8], "little") == 7
    back = read_flo(tmp_path / "a.flo")
    np.testing.assert_allclose(back.dx, flow.dx.astype(np.float32))
    np.testing.assert_allclose(back.dy, flow.dy.astype(np.float32))


def test_flo_rejects_garbage(tmp_path):
    (tmp_path / "bad.flo").write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(ValueError, match="magic"):
        read_flo(tmp_path / "bad.flo")
    write_flo(tmp_path / "short.flo", FlowField.uniform((2, 2), 1, 1))
    data = (tmp_path / "short.flo").read_bytes()[:-4]
    (tmp_path / "short.flo").write_bytes(data)
    with pytest.raises(ValueError):
        read_flo(tmp_path / "short.flo")


def test_flow_container(tmp_path):
    flows = [FlowField.uniform((3, 4), i, -i) for i in range(3)]
    manifest = write_flow_container(tmp_path / "flows", flows)
    for source in (manifest, tmp_path / "flows"):
        back = read_flows(source)
        assert [f.dx[0, 0] for f in back] == [0, 1, 2]
    (tmp_path / "flows" / "manifest.json").unlink()
    assert len(read_flows(tmp_path / "flows")) == 3
    assert len(read_flows(tmp_path / "flows" / "flow_00000.flo")) == 1


def test_flow_validation():
    with pytest.raises(ValueError):
        FlowField(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        FlowField(np.full((2, 2), np.nan), np.zeros((2, 2)))


def test_zero_flow_is_identity():
    frames = np.random.default_rng(1).random((30, 8, 9))
    flows = [FlowField.uniform((8, 9), 0, 0)] * 29
    np.testing.assert_allclose(motion_compensate(frames, flows), frames, atol=1e-9)


def test_translation_compensated_in_interior():
    frames = translating((20, 120), 25, 2.0)
    out = motion_compensate(frames, [FlowField.uniform((20, 120), 2, 0)] * 24)
    interior = out[:, :, : 120 - 48]
    np.testing.assert_allclose(interior, np.broadcast_to(frames[0][:, :72], interior.shape),
                               atol=1e-9)
    assert np.ptp(frames[:, :, :72], axis=0).max() > 0.5


def test_compensation_restarts_each_window():
    frames = translating((4, 200), 50, 1.0)
    out = motion_compensate(frames, [FlowField.uniform((4, 200), 1, 0)] * 49)
    np.testing.assert_allclose(out[25], frames[25])
    np.testing.assert_allclose(out[30][:, :100], frames[25][:, :100], atol=1e-9)


def test_compensation_errors():
    frames = np.zeros((3, 4, 4))
    with pytest.raises(ValueError, match="flows"):
        motion_compensate(frames, [FlowField.uniform((4, 4), 0, 0)])
    with pytest.raises(ValueError, match="shape"):
        motion_compensate(frames, [FlowField.uniform((4, 5), 0, 0)] * 2)


def test_flicker_score_closed_forms():
    assert flicker_score(np.zeros(10)) == 0.0
    assert flicker_score(np.ones((2, 3, 4))) == pytest.approx(1.0)
    m = np.zeros(8)
    m[3] = 1
    assert flicker_score(m) == pytest.approx((1 / 8) ** (1 / 3))
    with pytest.raises(ValueError):
        flicker_score(np.array([]))


@given(probs)
def test_flicker_score_permutation_invariant(p):
    perm = np.random.default_rng(0).permutation(len(p))
    assert flicker_score(p[perm]) == pytest.approx(flicker_score(p))


@given(st.floats(0, 1), st.integers(1, 6))
def test_flicker_score_refinement_invariant(v, k):
    assert flicker_score(np.full((2, 2), v)) == pytest.approx(flicker_score(np.full((2 * k, 2 * k), v)))


@given(probs, st.integers(0, 29), st.floats(0, 1))
def test_flicker_score_monotone(p, i, bump):
    i %= len(p)
    q = p.copy()
    q[i] = max(q[i], bump)
    assert flicker_score(q) >= flicker_score(p) - 1e-12


def test_score_report():
    vm = VisibilityMap(*(np.full((1, 2, 2), 0.5),) * 4)
    rep = score_report(vm, note="x")
    assert rep["flicker_score"] == pytest.approx(0.5) and rep["grid"] == [1, 2, 2]
    assert rep["note"] == "x"


def test_cff_table():
    eccs = [0.0, 10.0, 25.0, 40.0]
    rows = cff_table(eccs, [0.0, 2.0])
    zero = [c for f, e, c in rows if f == 0.0]
    assert all(a > b for a, b in zip(zero, zero[1:]))
    high = cff_table(eccs, [0.0, 2.0], c_max=1.0)
    assert all(h[2] >= r[2] for h, r in zip(high, rows))
    none = cff_table([40.0], [9.0], c_max=0.001)
    assert none[0][2] is None
    text = cff_csv(none + rows)
    assert text.splitlines()[0] == "f_cpd,ecc_deg,cff_hz"
    assert text.splitlines()[1] == "9.0,40.0,"
    with pytest.raises(ValueError):
        cff_table([], [0.0])
