"""PNG frame directories, single images and visibility heatmaps."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import linear_to_srgb, srgb_to_linear

PNG_COMPRESS_LEVEL = 6
REC709 = np.array([0.2126, 0.7152, 0.0722])


def _frame_number(path: Path) -> tuple[int, str]:
    digits = re.findall(r"\d+", path.stem)
    return (int(digits[-1]) if digits else -1, path.name)


def list_frames(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frame directory not found: {directory}")
    files = sorted(directory.glob("*.png"), key=_frame_number)
    if not files:
        raise ValueError(f"no PNG frames in {directory}")
    return files


def read_image(path, linear_input: bool = False) -> np.ndarray:
    """Display-linear luminance values in [0, 1] from an 8- or 16-bit PNG.

    Color images are decoded per channel and combined with Rec. 709
    weights; alpha is dropped.
    """
    with Image.open(Path(path)) as img:
        arr = np.asarray(img)
        mode = img.mode
    if arr.dtype == np.uint8:
        v = arr / 255.0
    elif arr.dtype in (np.uint16, np.int32) or mode.startswith("I"):
        v = arr.astype(float) / 65535.0
    elif arr.dtype == bool:
        v = arr.astype(float)
    else:
        raise ValueError(f"{path}: unsupported pixel type {arr.dtype} ({mode})")
    if v.ndim == 3:
        v = v[..., :3] if v.shape[-1] >= 3 else v[..., 0]
    if not linear_input:
        v = srgb_to_linear(v)
    if v.ndim == 3:
        v = v @ REC709
    return np.clip(v, 0.0, 1.0)


def read_frames(directory, linear_input: bool = False):
    """Yield frames of a numbered PNG sequence in order."""
    for path in list_frames(directory):
        yield read_image(path, linear_input)


def encode(values, bit_depth: int = 8, linear_output: bool = False) -> np.ndarray:
    v = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
    if not linear_output:
        v = linear_to_srgb(v)
    if bit_depth == 8:
        return np.round(v * 255.0).astype(np.uint8)
    if bit_depth == 16:
        return np.round(v * 65535.0).astype(np.uint16)
    raise ValueError("bit depth must be 8 or 16")


def write_png(path, array) -> None:
    img = Image.fromarray(np.asarray(array))
    img.save(Path(path), format="PNG", compress_level=PNG_COMPRESS_LEVEL)


def write_frames(directory, frames, bit_depth: int = 8, prefix: str = "frame",
                 linear_output: bool = False) -> list[Path]:
    """Write display-linear frames as sRGB-encoded PNGs numbered from 0."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        path = directory / f"{prefix}_{i:05d}.png"
        write_png(path, encode(frame, bit_depth, linear_output))
        paths.append(path)
    return paths


def heatmap(p_norm_grid, background, patch_shape, opacity: float = 0.6) -> np.ndarray:
    """RGB overlay of one window's probability grid on an 8-bit encoded frame.

    Each cell is upsampled nearest-neighbor to its patch size and shown as
    red blended over the frame in proportion to its probability.
    """
    grid = np.asarray(p_norm_grid, dtype=float)
    py, px = patch_shape
    up = np.kron(grid, np.ones((py, px)))
    bg = np.asarray(background, dtype=float) / 255.0
    h, w = bg.shape
    alpha = np.zeros((h, w))
    alpha[:up.shape[0], :up.shape[1]] = opacity * np.clip(up, 0.0, 1.0)
    rgb = np.repeat(bg[..., None], 3, axis=-1)
    red = np.array([1.0, 0.0, 0.0])
    rgb = (1.0 - alpha[..., None]) * rgb + alpha[..., None] * red
    return np.round(rgb * 255.0).astype(np.uint8)
