"""Temporal-aliasing evaluation: motion compensation, flicker scores, CFF tables."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .decomposition import PATCH_DIMS
from .model import DEFAULT_PARAMS, SensitivityParams, critical_flicker_frequency
from .visibility import VisibilityMap

FLO_MAGIC = 202021.25  # b"PIEH" read as little-endian float32


@dataclass
class FlowField:
    """Forward motion from frame ``i`` to ``i + 1`` in pixels per frame.

    ``dx`` and ``dy`` are ``(H, W)``; a pixel at ``(x, y)`` in frame ``i``
    appears at ``(x + dx, y + dy)`` in frame ``i + 1``.
    """

    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        self.dx = np.asarray(self.dx, dtype=float)
        self.dy = np.asarray(self.dy, dtype=float)
        if self.dx.shape != self.dy.shape or self.dx.ndim != 2:
            raise ValueError("flow components must be 2-D arrays of equal shape")
        if not (np.all(np.isfinite(self.dx)) and np.all(np.isfinite(self.dy))):
            raise ValueError("flow contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.dx.shape

    @classmethod
    def uniform(cls, shape, dx: float, dy: float) -> "FlowField":
        return cls(np.full(shape, float(dx)), np.full(shape, float(dy)))


def write_flo(path, flow: FlowField) -> None:
    h, w = flow.shape
    uv = np.stack([flow.dx, flow.dy], axis=-1).astype("<f4")
    with open(Path(path), "wb") as fh:
        fh.write(np.array([FLO_MAGIC], dtype="<f4").tobytes())
        fh.write(np.array([w, h], dtype="<i4").tobytes())
        fh.write(uv.tobytes())


def read_flo(path) -> FlowField:
    data = Path(path).read_bytes()
    if len(data) < 12 or np.frombuffer(data[:4], dtype="<f4")[0] != np.float32(FLO_MAGIC):
        raise ValueError(f"{path}: not a .flo file (bad magic)")
    w, h = (int(v) for v in np.frombuffer(data[4:12], dtype="<i4"))
    if w <= 0 or h <= 0:
        raise ValueError(f"{path}: invalid dimensions {w}x{h}")
    body = np.frombuffer(data[12:], dtype="<f4")
    if body.size != 2 * w * h:
        raise ValueError(f"{path}: expected {2 * w * h} floats, found {body.size}")
    uv = body.reshape(h, w, 2).astype(float)
    return FlowField(uv[..., 0], uv[..., 1])


def write_flow_container(directory, flows) -> Path:
    """Write one ``.flo`` per frame pair plus a ``manifest.json`` listing them in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, flow in enumerate(flows):
        name = f"flow_{i:05d}.flo"
        write_flo(directory / name, flow)
        names.append(name)
    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps({"format": "flo", "pairs": names}, indent=2))
    return manifest


def read_flows(path) -> list[FlowField]:
    """Flows from a manifest JSON, a directory (manifest or sorted ``*.flo``) or one file."""
    path = Path(path)
    if path.is_dir():
        if (path / "manifest.json").exists():
            path = path / "manifest.json"
        else:
            files = sorted(path.glob("*.flo"))
            if not files:
                raise ValueError(f"no .flo files in {path}")
            return [read_flo(f) for f in files]
    if path.suffix == ".json":
        manifest = json.loads(path.read_text())
        return [read_flo(path.parent / name) for name in manifest["pairs"]]
    return [read_flo(path)]


def _sample(img: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    return map_coordinates(img, [y, x], order=1, mode="nearest")


def motion_compensate(frames, flows, window: int = PATCH_DIMS[0]) -> np.ndarray:
    """Warp every frame back onto the first frame of its window.

    For a pixel ``p`` of the reference frame its position in frame ``k``
    is followed along the composed flows; frame ``k`` is then sampled
    there bilinearly with edge clamping.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 3:
        raise ValueError("frames must be a (T, H, W) array")
    flows = list(flows)
    if len(flows) != len(frames) - 1:
        raise ValueError(f"need {len(frames) - 1} flows for {len(frames)} frames, got {len(flows)}")
    shape = frames.shape[1:]
    for f in flows:
        if f.shape != shape:
            raise ValueError(f"flow shape {f.shape} does not match frames {shape}")
    y0, x0 = np.meshgrid(np.arange(shape[0], dtype=float), np.arange(shape[1], dtype=float),
                         indexing="ij")
    out = np.empty_like(frames)
    for k in range(len(frames)):
        if k % window == 0:
            y, x = y0.copy(), x0.copy()
            out[k] = frames[k]
            continue
        flow = flows[k - 1]
        dx = _sample(flow.dx, y, x)
        dy = _sample(flow.dy, y, x)
        x = x + dx
        y = y + dy
        out[k] = _sample(frames[k], y, x)
    return out


def flicker_score(vmap: VisibilityMap | np.ndarray, beta: float = 3.0) -> float:
    """Mean-normalized Minkowski pooling of ``p_norm`` over all cells."""
    p = vmap.p_norm if isinstance(vmap, VisibilityMap) else np.asarray(vmap, dtype=float)
    if p.size == 0:
        raise ValueError("empty visibility map")
    if beta <= 0:
        raise ValueError("beta must be positive")
    return float(np.mean(p ** beta) ** (1.0 / beta))


def score_report(vmap: VisibilityMap, beta: float = 3.0, **extra) -> dict:
    return {"flicker_score": flicker_score(vmap, beta), "beta": beta,
            "grid": list(vmap.shape), "mean_p_norm": float(np.mean(vmap.p_norm)),
            "max_p_norm": float(np.max(vmap.p_norm)), **extra}


def cff_table(eccentricities, spatial_freqs, c_max: float = 0.5,
              params: SensitivityParams = DEFAULT_PARAMS, f_max: float = 120.0):
    """Rows of ``(f_cpd, e_deg, cff_hz or None)``; each frequency is horizontal."""
    eccentricities = list(eccentricities)
    spatial_freqs = list(spatial_freqs)
    if not eccentricities or not spatial_freqs:
        raise ValueError("eccentricities and spatial frequencies must be non-empty")
    return [(float(f), float(e),
             critical_flicker_frequency(f, 0.0, e, c_max=c_max, params=params, f_max=f_max))
            for f in spatial_freqs for e in eccentricities]


def cff_csv(rows) -> str:
    lines = ["f_cpd,ecc_deg,cff_hz"]
    for f, e, c in rows:
        lines.append(f"{f!r},{e!r},{'' if c is None else repr(float(c))}")
    return "\n".join(lines) + "\n"
