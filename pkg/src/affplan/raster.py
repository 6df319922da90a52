"""Dense image-plane state descriptions and the operations over them.

States are square RGBD rasters in [0, 1], float32, shaped (H, W, 4) with
row 0 at world y = 0.  A difference descriptor adds a fifth overwrite-mask
channel; applying it to a state blends the painted channels in where the
mask is set and keeps the old pixel elsewhere.  Goal matching slides a
small goal window over a state and scores the best placement by MSE over
a configurable channel subset.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .config import WORLD_EXTENT
from .errors import DimensionError, FormatError

RASTER_MAGIC = b"RGBDF1\n"

STATE_CHANNELS = 4
DIFF_CHANNELS = 5


def _as_unit_f32(data: np.ndarray, channels: int, what: str) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim != 3 or arr.shape[2] != channels:
        raise DimensionError(f"{what} must be (H, W, {channels}), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{what} must be non-empty, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise DimensionError(f"{what} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DimensionError(f"{what} values must lie in [0, 1]")
    out = np.ascontiguousarray(arr, dtype=np.float32)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RasterState:
    """A rendered scene: channels R, G, B, depth."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_unit_f32(self.data, STATE_CHANNELS, "state raster")
        if arr.shape[0] != arr.shape[1]:
            raise DimensionError(f"state raster must be square, got {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def resolution(self) -> int:
        return self.data.shape[0]

    @property
    def rgb(self) -> np.ndarray:
        return self.data[:, :, :3]

    @property
    def depth(self) -> np.ndarray:
        return self.data[:, :, 3]


@dataclass(frozen=True)
class DiffDescriptor:
    """A predicted or measured change: R, G, B, depth, overwrite mask."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "data", _as_unit_f32(self.data, DIFF_CHANNELS, "diff raster"))

    @property
    def mask(self) -> np.ndarray:
        return self.data[:, :, 4]

    @property
    def channels(self) -> np.ndarray:
        return self.data[:, :, :4]


class PixelSample(NamedTuple):
    r: float
    g: float
    b: float
    d: float


POSITIVE = "positive"
NEGATIVE = "negative"
RGB_CHANNELS = (0, 1, 2)
RGBD_CHANNELS = (0, 1, 2, 3)


@dataclass(frozen=True)
class GoalSpec:
    """A goal window, its polarity, and the channels that count.

    The window may be smaller than the state it is matched against.  A
    3-channel goal raster can only constrain R, G, B; depth matching
    requires a 4-channel goal.
    """

    image: np.ndarray
    polarity: str = POSITIVE
    channels: tuple[int, ...] = RGBD_CHANNELS

    def __post_init__(self):
        arr = np.asarray(self.image)
        if arr.ndim != 3 or arr.shape[2] not in (3, 4):
            raise DimensionError(f"goal raster must be (h, w, 3|4), got {arr.shape}")
        arr = _as_unit_f32(arr, arr.shape[2], "goal raster")
        object.__setattr__(self, "image", arr)
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise DimensionError(f"polarity must be positive|negative, got {self.polarity!r}")
        ch = tuple(sorted(set(self.channels)))
        if not ch:
            raise DimensionError("channel mask must be non-empty")
        if any(c not in (0, 1, 2, 3) for c in ch):
            raise DimensionError(f"channel indices must be in 0..3, got {ch}")
        if arr.shape[2] == 3 and 3 in ch:
            raise DimensionError("a 3-channel goal cannot constrain the depth channel")
        object.__setattr__(self, "channels", ch)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def selected(self) -> np.ndarray:
        """Goal values for the channels under comparison, float64."""
        return self.image[:, :, list(self.channels)].astype(np.float64)


def apply_diff(state: RasterState, diff: DiffDescriptor) -> RasterState:
    """Blend a difference into a state: mask keeps the paint, else the old pixel."""
    if diff.data.shape[:2] != state.data.shape[:2]:
        raise DimensionError(
            f"diff {diff.data.shape[:2]} does not match state {state.data.shape[:2]}")
    m = diff.mask[:, :, None]
    out = m * diff.channels + (1.0 - m) * state.data
    return RasterState(np.clip(out, 0.0, 1.0))


def window_mse(goal: GoalSpec, state: RasterState, x: int, y: int) -> float:
    """MSE between the goal and the state window whose top-left pixel is (x, y)."""
    h, w = goal.height, goal.width
    res = state.resolution
    if x < 0 or y < 0 or x + w > res or y + h > res:
        raise DimensionError(f"window ({x}, {y}) size ({w}x{h}) exceeds state {res}")
    patch = state.data[y:y + h, x:x + w, list(goal.channels)].astype(np.float64)
    delta = patch - goal.selected()
    return float(np.mean(delta * delta))


def goal_loss(goal: GoalSpec, state: RasterState) -> tuple[float, int, int]:
    """Best (lowest) window MSE over all placements, with its (x, y) offset.

    Ties resolve to the smallest y, then the smallest x.  Window bounds are
    inclusive of the state edges, so a goal the size of the state has exactly
    one placement.
    """
    h, w = goal.height, goal.width
    res = state.resolution
    if h > res or w > res:
        raise DimensionError(f"goal ({w}x{h}) larger than state ({res})")
    sel = list(goal.channels)
    field = state.data[:, :, sel].astype(np.float64)
    g = goal.selected()
    # windows[y, x, c, i, j] is the state patch at offset (x, y)
    windows = np.lib.stride_tricks.sliding_window_view(field, (h, w), axis=(0, 1))
    sq = np.einsum("yxcij,yxcij->yx", windows, windows, optimize=True)
    cross = np.einsum("yxcij,ijc->yx", windows, g, optimize=True)
    ssd = sq - 2.0 * cross + float(np.sum(g * g))
    mse = ssd / (h * w * len(sel))
    flat = int(np.argmin(mse))          # first minimum in (y, x) scan order
    ny, nx = mse.shape
    best_y, best_x = divmod(flat, nx)
    # einsum rounding can leave a tiny negative residue on perfect matches
    loss = max(float(mse[best_y, best_x]), 0.0)
    return loss, int(best_x), int(best_y)


def project(point, width: int, height: int, extent=WORLD_EXTENT) -> tuple[int, int]:
    """World point (metres, x/y/[z]) to a pixel index, clamped to the grid."""
    x, y = float(point[0]), float(point[1])
    px = int(np.floor(x / extent[0] * width))
    py = int(np.floor(y / extent[1] * height))
    return min(max(px, 0), width - 1), min(max(py, 0), height - 1)


def sample_pixel(state: RasterState, point, extent=WORLD_EXTENT) -> PixelSample:
    """RGBD values under a world point."""
    px, py = project(point, state.resolution, state.resolution, extent)
    r, g, b, d = (float(v) for v in state.data[py, px])
    return PixelSample(r, g, b, d)


def change_mask(before: RasterState, after: RasterState) -> np.ndarray:
    """Binary (H, W) float32 mask of pixels that differ in any channel."""
    changed = np.any(before.data != after.data, axis=2)
    return changed.astype(np.float32)


def make_diff(before: RasterState, after: RasterState) -> DiffDescriptor:
    """Canonical measured difference: new values where changed, zero elsewhere."""
    mask = change_mask(before, after)
    channels = after.data * mask[:, :, None]
    return DiffDescriptor(np.concatenate([channels, mask[:, :, None]], axis=2))


# --- file formats --------------------------------------------------------

def save_raster(array: np.ndarray, path) -> None:
    """Write a float32 raster: magic, ASCII "W H C" line, little-endian data."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise DimensionError(f"raster must be 2-D or 3-D, got {arr.shape}")
    h, w, c = arr.shape
    with open(path, "wb") as f:
        f.write(RASTER_MAGIC)
        f.write(f"{w} {h} {c}\n".encode("ascii"))
        f.write(arr.astype("<f4").tobytes(order="C"))


def load_raster(path) -> np.ndarray:
    """Read a raster written by save_raster.  Returns (H, W, C) float32."""
    raw = Path(path).read_bytes()
    if not raw.startswith(RASTER_MAGIC):
        raise FormatError(f"{path}: bad magic")
    body = raw[len(RASTER_MAGIC):]
    nl = body.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        w, h, c = (int(t) for t in body[:nl].split())
    except ValueError as e:
        raise FormatError(f"{path}: bad header: {e}") from e
    if w < 1 or h < 1 or c < 1:
        raise FormatError(f"{path}: bad dimensions {w}x{h}x{c}")
    payload = body[nl + 1:]
    expected = w * h * c * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, want {expected}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    return np.ascontiguousarray(arr)


def load_state(path) -> RasterState:
    arr = load_raster(path)
    if arr.shape[2] != STATE_CHANNELS:
        raise FormatError(f"{path}: expected 4 channels, got {arr.shape[2]}")
    return RasterState(arr)


def load_goal(path, polarity: str = POSITIVE,
              channels: tuple[int, ...] = RGBD_CHANNELS) -> GoalSpec:
    arr = load_raster(path)
    if arr.shape[2] not in (3, 4):
        raise FormatError(f"{path}: goal needs 3 or 4 channels, got {arr.shape[2]}")
    if arr.shape[2] == 3:
        channels = tuple(c for c in channels if c != 3)
    return GoalSpec(arr, polarity=polarity, channels=channels)


def export_ppm(state: RasterState, path, depth_path=None) -> None:
    """Write the RGB planes as binary PPM and the depth plane as PGM."""
    path = Path(path)
    h, w = state.data.shape[:2]
    rgb = np.round(state.rgb * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes(order="C"))
    if depth_path is None:
        depth_path = path.with_name(path.stem + "_depth.pgm")
    d = np.round(state.depth * 255.0).astype(np.uint8)
    with open(depth_path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(d.tobytes(order="C"))


def blank_state(resolution: int, colour=(0.5, 0.5, 0.5), depth: float = 0.0) -> RasterState:
    data = np.empty((resolution, resolution, 4), dtype=np.float32)
    data[:, :, :3] = np.asarray(colour, dtype=np.float32)
    data[:, :, 3] = depth
    return RasterState(data)
