"""Image containers, kernels, color conversion and 16-bit Netpbm I/O.

Everything downstream works on real-valued, channel-planar images with a
nominal [0, 1] range.  Quantization happens only at file boundaries.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage


class ColorDomain(Enum):
    LINEAR_RGB = "linear_rgb"
    YUV = "yuv"
    PLANE = "plane"


class BayerPattern(Enum):
    RGGB = "RGGB"
    BGGR = "BGGR"
    GRBG = "GRBG"
    GBRG = "GBRG"


class PnmFormatError(ValueError):
    """Malformed Netpbm header or unsupported variant."""


class PnmTruncatedError(ValueError):
    """Pixel payload shorter than the header promises."""


@dataclass
class PlanarImage:
    """Channel-planar real image: data has shape (channels, height, width)."""

    data: np.ndarray
    domain: ColorDomain

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim == 2:
            self.data = self.data[None, :, :]
        if self.data.ndim != 3:
            raise ValueError(f"expected (channels, height, width) data, got shape {self.data.shape}")
        if self.data.shape[0] not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {self.data.shape[0]}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image contains non-finite values")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def plane(self, c: int = 0) -> np.ndarray:
        return self.data[c]


@dataclass
class BayerMosaic:
    """Single-plane CFA image; data has shape (height, width), values in [0, 1]."""

    data: np.ndarray
    pattern: BayerPattern

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"mosaic data must be 2-D, got shape {self.data.shape}")
        h, w = self.data.shape
        if h % 2 or w % 2:
            raise ValueError(f"mosaic dimensions must be even, got {w}x{h}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("mosaic contains non-finite values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


# Channel index (0=R, 1=G, 2=B) of the 2x2 CFA tile, rows = y % 2, cols = x % 2.
_CFA_TILES = {
    BayerPattern.RGGB: ((0, 1), (1, 2)),
    BayerPattern.BGGR: ((2, 1), (1, 0)),
    BayerPattern.GRBG: ((1, 0), (2, 1)),
    BayerPattern.GBRG: ((1, 2), (0, 1)),
}


def cfa_channel_at(pattern: BayerPattern, x: int, y: int) -> int:
    """RGB channel index sampled at pixel (x, y); 2-periodic in both axes."""
    return _CFA_TILES[pattern][y % 2][x % 2]


def cfa_channel_map(pattern: BayerPattern, height: int, width: int) -> np.ndarray:
    """(height, width) int array of the RGB channel index at every site."""
    tile = np.asarray(_CFA_TILES[pattern], dtype=np.int64)
    reps = (height + 1) // 2, (width + 1) // 2
    return np.tile(tile, reps)[:height, :width]


@dataclass
class Kernel2D:
    """Odd square convolution kernel."""

    taps: np.ndarray = field()

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 2 or self.taps.shape[0] != self.taps.shape[1]:
            raise ValueError(f"kernel must be square, got shape {self.taps.shape}")
        if self.taps.shape[0] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.taps.shape[0]}")

    @property
    def size(self) -> int:
        return self.taps.shape[0]


def gaussian_kernel(size: int, sigma: float) -> Kernel2D:
    """Normalized 2-D Gaussian, taps ∝ exp(-(dx²+dy²)/(2σ²))."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = size // 2
    d = np.arange(-r, r + 1, dtype=np.float64)
    dist2 = d[:, None] ** 2 + d[None, :] ** 2
    taps = np.exp(-dist2 / (2.0 * sigma * sigma))
    return Kernel2D(taps / taps.sum())


def box_kernel(size: int) -> Kernel2D:
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    return Kernel2D(np.full((size, size), 1.0 / (size * size)))


# Derivative kernels oriented for true convolution (scipy.ndimage.convolve
# flips the kernel): an increasing-x ramp of slope s maps to G_H == s.
_SCHARR_H = Kernel2D(np.array([[3.0, 0.0, -3.0],
                               [10.0, 0.0, -10.0],
                               [3.0, 0.0, -3.0]]) / 32.0)
_SCHARR_V = Kernel2D(_SCHARR_H.taps.T)

# Column second-difference [-1, 2, -1]^T (vertical support, horizontal detail)
# and its transpose; both symmetric, so convolution == correlation.
DETAIL_COLUMN = Kernel2D(np.array([[0.0, -1.0, 0.0],
                                   [0.0, 2.0, 0.0],
                                   [0.0, -1.0, 0.0]]))
DETAIL_ROW = Kernel2D(DETAIL_COLUMN.taps.T)


def convolve_plane(plane: np.ndarray, k: Kernel2D) -> np.ndarray:
    """2-D convolution of a single plane, borders by edge replication."""
    if k.size > min(plane.shape):
        raise ValueError(
            f"kernel exceeds image: {k.size}x{k.size} vs {plane.shape[1]}x{plane.shape[0]}"
        )
    return ndimage.convolve(plane, k.taps, mode="nearest")


def convolve2d(img: PlanarImage, k: Kernel2D) -> PlanarImage:
    """Per-channel 2-D convolution with edge-replicated borders."""
    out = np.stack([convolve_plane(img.data[c], k) for c in range(img.channels)])
    return PlanarImage(out, img.domain)


def scharr_gradients(plane: PlanarImage) -> tuple[PlanarImage, PlanarImage]:
    """Scharr derivative pair: G_H tracks horizontal change, G_V vertical.

    Normalized by 1/32 so a unit-slope ramp yields gradient 1.0.
    """
    if plane.channels != 1:
        raise ValueError(f"scharr_gradients expects a single-channel image, got {plane.channels}")
    g_h = convolve_plane(plane.data[0], _SCHARR_H)
    g_v = convolve_plane(plane.data[0], _SCHARR_V)
    return (PlanarImage(g_h, ColorDomain.PLANE), PlanarImage(g_v, ColorDomain.PLANE))


# BT.601 full-range luma/chroma coefficients.
_KR, _KG, _KB = 0.299, 0.587, 0.114
_U_SCALE, _V_SCALE = 0.564, 0.713


def rgb_to_yuv(img: PlanarImage) -> PlanarImage:
    if img.domain is not ColorDomain.LINEAR_RGB or img.channels != 3:
        raise ValueError("rgb_to_yuv expects a 3-channel linear-RGB image")
    r, g, b = img.data
    y = _KR * r + _KG * g + _KB * b
    u = _U_SCALE * (b - y)
    v = _V_SCALE * (r - y)
    return PlanarImage(np.stack([y, u, v]), ColorDomain.YUV)


def yuv_to_rgb(img: PlanarImage) -> PlanarImage:
    if img.domain is not ColorDomain.YUV or img.channels != 3:
        raise ValueError("yuv_to_rgb expects a 3-channel YUV image")
    y, u, v = img.data
    r = y + v / _V_SCALE
    b = y + u / _U_SCALE
    g = (y - _KR * r - _KB * b) / _KG
    return PlanarImage(np.stack([r, g, b]), ColorDomain.LINEAR_RGB)


def luma(img: PlanarImage) -> np.ndarray:
    """BT.601 luma plane of an RGB image; Y channel of YUV; identity on planes."""
    if img.channels == 1:
        return img.data[0]
    if img.domain is ColorDomain.YUV:
        return img.data[0]
    r, g, b = img.data
    return _KR * r + _KG * g + _KB * b


def bayer_subsample(rgb: PlanarImage, pattern: BayerPattern) -> BayerMosaic:
    """Keep the CFA-dictated channel at every pixel."""
    if rgb.domain is not ColorDomain.LINEAR_RGB or rgb.channels != 3:
        raise ValueError("bayer_subsample expects a 3-channel linear-RGB image")
    h, w = rgb.height, rgb.width
    if h % 2 or w % 2:
        raise ValueError(f"bayer_subsample requires even dimensions, got {w}x{h}")
    chan = cfa_channel_map(pattern, h, w)
    ys, xs = np.mgrid[0:h, 0:w]
    return BayerMosaic(rgb.data[chan, ys, xs], pattern)


# ---------------------------------------------------------------------------
# Netpbm I/O: binary PGM (P5) / PPM (P6), maxval 65535, big-endian samples.
# ---------------------------------------------------------------------------

_MAXVAL = 65535


def _quantize16(data: np.ndarray) -> np.ndarray:
    # round-half-up, clamped to the representable range
    q = np.floor(np.clip(data, 0.0, 1.0) * _MAXVAL + 0.5)
    return q.astype(">u2")


def _read_pnm_header(raw: bytes, path: Path) -> tuple[bytes, int, int, int, int]:
    """Parse magic, width, height, maxval; returns payload offset as well."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.match(rb"\s*(#[^\n]*\n|\S+)", raw[pos:])
        if m is None:
            raise PnmFormatError(f"{path}: incomplete Netpbm header")
        pos += m.end()
        tok = m.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise PnmFormatError(f"{path}: unsupported magic {magic!r}, want P5/P6")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise PnmFormatError(f"{path}: non-numeric header field") from exc
    if width <= 0 or height <= 0:
        raise PnmFormatError(f"{path}: bad dimensions {width}x{height}")
    if maxval != _MAXVAL:
        raise PnmFormatError(f"{path}: maxval {maxval} unsupported, want {_MAXVAL}")
    # exactly one whitespace byte separates the maxval from the raster
    if pos >= len(raw) or raw[pos:pos + 1] not in b" \t\n\r":
        raise PnmFormatError(f"{path}: missing raster separator")
    return magic, width, height, maxval, pos + 1


def write_image(path: str | Path, img: PlanarImage | BayerMosaic) -> None:
    """Write 16-bit PGM/PPM; Bayer mosaics get a CFA sidecar JSON."""
    path = Path(path)
    if isinstance(img, BayerMosaic):
        samples = _quantize16(img.data)
        magic, channels = b"P5", 1
        height, width = img.data.shape
    elif img.channels == 1:
        samples = _quantize16(img.data[0])
        magic, channels = b"P5", 1
        height, width = img.height, img.width
    else:
        # interleave planar channels to per-pixel RGB sample order
        samples = _quantize16(np.moveaxis(img.data, 0, -1))
        magic, channels = b"P6", 3
        height, width = img.height, img.width
    header = b"%s\n%d %d\n%d\n" % (magic, width, height, _MAXVAL)
    path.write_bytes(header + samples.tobytes())
    if isinstance(img, BayerMosaic):
        sidecar = path.with_suffix(path.suffix + ".json")
        sidecar.write_text(json.dumps({"pattern": img.pattern.value}) + "\n")


def read_image(path: str | Path) -> PlanarImage | BayerMosaic:
    """Read 16-bit PGM/PPM; a CFA sidecar JSON turns a PGM into a BayerMosaic."""
    path = Path(path)
    raw = path.read_bytes()
    magic, width, height, _, offset = _read_pnm_header(raw, path)
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels * 2
    payload = raw[offset:offset + need]
    if len(payload) < need:
        raise PnmTruncatedError(f"{path}: payload {len(payload)} bytes, expected {need}")
    samples = np.frombuffer(payload, dtype=">u2").astype(np.float64) / _MAXVAL
    if channels == 3:
        data = np.moveaxis(samples.reshape(height, width, 3), -1, 0)
        return PlanarImage(data, ColorDomain.LINEAR_RGB)
    plane = samples.reshape(height, width)
    sidecar = path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        return BayerMosaic(plane, BayerPattern(meta["pattern"]))
    return PlanarImage(plane, ColorDomain.PLANE)


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """8-bit PGM, 0/255 encoding of a boolean mask."""
    path = Path(path)
    mask = np.asarray(mask, dtype=bool)
    header = b"P5\n%d %d\n255\n" % (mask.shape[1], mask.shape[0])
    path.write_bytes(header + (mask.astype(np.uint8) * 255).tobytes())


def read_mask(path: str | Path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.match(rb"\s*(#[^\n]*\n|\S+)", raw[pos:])
        if m is None:
            raise PnmFormatError(f"{path}: incomplete Netpbm header")
        pos += m.end()
        if not m.group(1).startswith(b"#"):
            tokens.append(m.group(1))
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise PnmFormatError(f"{path}: expected 8-bit P5 mask")
    if pos >= len(raw) or raw[pos:pos + 1] not in b" \t\n\r":
        raise PnmFormatError(f"{path}: missing raster separator")
    pos += 1
    width, height = int(tokens[1]), int(tokens[2])
    need = width * height
    payload = raw[pos:pos + need]
    if len(payload) < need:
        raise PnmTruncatedError(f"{path}: payload {len(payload)} bytes, expected {need}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width) >= 128
