import numpy as np
import pytest
from PIL import Image

from tempvis import io
from tempvis.geometry import srgb_to_linear


def test_frame_order_is_numeric(tmp_path):
    for i in (10, 2, 1):
        io.write_png(tmp_path / f"f{i}.png", np.full((2, 2), i, np.uint8))
    assert [p.name for p in io.list_frames(tmp_path)] == ["f1.png", "f2.png", "f10.png"]
    with pytest.raises(FileNotFoundError):
        io.list_frames(tmp_path / "missing")
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValueError):
        io.list_frames(tmp_path / "empty")


def test_read_8_and_16_bit(tmp_path):
    io.write_png(tmp_path / "a.png", np.full((3, 3), 128, np.uint8))
    io.write_png(tmp_path / "b.png", np.full((3, 3), 32768, np.uint16))
    a = io.read_image(tmp_path / "a.png")
    b = io.read_image(tmp_path / "b.png")
    assert a[0, 0] == pytest.approx(float(srgb_to_linear(128 / 255)))
    assert b[0, 0] == pytest.approx(float(srgb_to_linear(32768 / 65535)))
    assert io.read_image(tmp_path / "a.png", linear_input=True)[0, 0] == pytest.approx(128 / 255)


def test_color_uses_rec709_weights(tmp_path):
    rgb = np.zeros((2, 2, 3), np.uint8)
    rgb[..., 1] = 255
    Image.fromarray(rgb).save(tmp_path / "g.png")
    assert io.read_image(tmp_path / "g.png")[0, 0] == pytest.approx(0.7152)


def test_encode_roundtrip(tmp_path):
    frames = [np.linspace(0, 1, 16).reshape(4, 4)] * 2
    paths = io.write_frames(tmp_path / "out", frames, bit_depth=16)
    assert len(paths) == 2
    back = np.stack(list(io.read_frames(tmp_path / "out")))
    np.testing.assert_allclose(back[0], frames[0], atol=1e-4)
    with pytest.raises(ValueError):
        io.encode(frames[0], bit_depth=12)


def test_heatmap_overlay():
    bg = np.zeros((4, 6), np.uint8)
    hm = io.heatmap(np.array([[0.0, 1.0]]), bg, (2, 3))
    assert hm.shape == (4, 6, 3) and hm.dtype == np.uint8
    assert tuple(hm[0, 0]) == (0, 0, 0)
    assert hm[0, 4, 0] > 0 and hm[0, 4, 1] == 0
    assert tuple(hm[3, 5]) == (0, 0, 0)
