"""Per-frame metric depth maps: ingestion, serialization, sub-pixel sampling.

Depth values are meters; exactly 0.0 marks an invalid/missing sample.
Two on-disk formats are supported:

  .cbdm (bit-exact): magic b"CBDM", little-endian u32 width, u32 height,
      then width*height little-endian float32, row-major, meters.
  16-bit grayscale PNG: integer millimeters (value / 1000.0 m; 0 = invalid).

Files are named depth_%06d.cbdm / depth_%06d.png, 0-based.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CorruptFile, DimensionMismatch, MissingFrame, NoValidDepth, PixelOutOfBounds

CBDM_MAGIC = b"CBDM"


@dataclass(frozen=True)
class DepthMap:
    values: np.ndarray  # (height, width) float32, meters, 0 = invalid
    frame_index: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError("depth map must be a 2D grid")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("depth values must be finite and >= 0 (0 marks invalid)")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def valid_fraction(self) -> float:
        return float(np.count_nonzero(self.values) / self.values.size)


@dataclass(frozen=True)
class DepthSequence:
    maps: list[DepthMap]
    source: str = "ingested"  # ingested | synthetic

    def __post_init__(self):
        if not self.maps:
            raise ValueError("depth sequence must contain at least one map")
        w, h = self.maps[0].width, self.maps[0].height
        for m in self.maps:
            if (m.width, m.height) != (w, h):
                raise DimensionMismatch("all depth maps must share dimensions")

    def __len__(self):
        return len(self.maps)

    def __getitem__(self, n: int) -> DepthMap:
        return self.maps[n]

    @property
    def width(self) -> int:
        return self.maps[0].width

    @property
    def height(self) -> int:
        return self.maps[0].height


def write_cbdm(path, values: np.ndarray) -> None:
    v = np.ascontiguousarray(np.asarray(values, dtype="<f4"))
    h, w = v.shape
    with open(path, "wb") as fh:
        fh.write(CBDM_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(v.tobytes())


def read_cbdm(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != CBDM_MAGIC:
        raise CorruptFile(path, f"bad magic in {path}")
    w, h = struct.unpack_from("<II", data, 4)
    expected = 12 + 4 * w * h
    if len(data) != expected:
        raise CorruptFile(path, f"{path}: expected {expected} bytes, found {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w).astype(np.float32)


def write_depth_png(path, values: np.ndarray) -> None:
    """16-bit grayscale PNG in millimeters (lossy beyond 1 mm)."""
    mm = np.clip(np.rint(np.asarray(values, dtype=np.float64) * 1000.0), 0, 65535)
    Image.fromarray(mm.astype(np.uint16)).save(path)


def read_depth_png(path) -> np.ndarray:
    try:
        img = Image.open(path)
        arr = np.asarray(img)
    except Exception as exc:
        raise CorruptFile(path, f"{path}: {exc}") from exc
    if arr.ndim != 2:
        raise CorruptFile(path, f"{path}: depth PNG must be single-channel")
    return (arr.astype(np.float32)) / 1000.0


def load_depth_sequence(directory, expected_frames: int, source: str = "ingested") -> DepthSequence:
    """Load depth_%06d.cbdm (preferred) or depth_%06d.png for each frame."""
    directory = Path(directory)
    maps = []
    dims = None
    for n in range(expected_frames):
        cbdm = directory / f"depth_{n:06d}.cbdm"
        png = directory / f"depth_{n:06d}.png"
        if cbdm.exists():
            values = read_cbdm(cbdm)
        elif png.exists():
            values = read_depth_png(png)
        else:
            raise MissingFrame(n)
        if dims is None:
            dims = values.shape
        elif values.shape != dims:
            raise DimensionMismatch(
                f"frame {n}: depth is {values.shape[1]}x{values.shape[0]}, "
                f"expected {dims[1]}x{dims[0]}"
            )
        maps.append(DepthMap(values=values, frame_index=n))
    return DepthSequence(maps=maps, source=source)


def save_depth_sequence(directory, seq: DepthSequence) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for n, m in enumerate(seq.maps):
        write_cbdm(directory / f"depth_{n:06d}.cbdm", m.values)


def sample_depth(depth_map: DepthMap, pixel, strategy: str = "bilinear-valid") -> float:
    """Depth at a sub-pixel location.

    nearest: closest grid value (may be 0/invalid -> NoValidDepth).
    bilinear-valid: interpolate over the <=4 neighbors, dropping invalid
    samples and renormalizing the weights.
    """
    u, v = float(pixel[0]), float(pixel[1])
    w, h = depth_map.width, depth_map.height
    if not (0 <= u <= w - 1 and 0 <= v <= h - 1):
        raise PixelOutOfBounds(f"pixel ({u}, {v}) outside [0,{w - 1}]x[0,{h - 1}]")
    grid = depth_map.values
    if strategy == "nearest":
        value = float(grid[int(round(v)), int(round(u))])
        if value <= 0:
            raise NoValidDepth(f"invalid depth at nearest grid point of ({u}, {v})")
        return value
    if strategy != "bilinear-valid":
        raise ValueError(f"unknown sampling strategy {strategy!r}")

    x0 = min(int(np.floor(u)), w - 1)
    y0 = min(int(np.floor(v)), h - 1)
    fx, fy = u - x0, v - y0
    acc = 0.0
    weight = 0.0
    for dx, dy, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        if wgt == 0.0:
            continue
        x, y = x0 + dx, y0 + dy
        if x >= w or y >= h:
            continue
        value = float(grid[y, x])
        if value <= 0:
            continue
        acc += wgt * value
        weight += wgt
    if weight == 0.0:
        raise NoValidDepth(f"all depth neighbors of ({u}, {v}) are invalid")
    return acc / weight
