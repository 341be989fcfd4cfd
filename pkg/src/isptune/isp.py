"""The tunable four-block pipeline: Bayer NR, demosaic, YUV NR, sharpening.

Each block exposes a fixed set of four abstracted parameters with physical
ranges (see BLOCK_PARAM_SPECS) and has a passthrough setting, so the whole
pipeline composes to a parameter-independent baseline.  Blocks are pure
functions; intermediate tap outputs are kept for per-block fitness.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from .imaging import (
    BayerMosaic,
    ColorDomain,
    PlanarImage,
    cfa_channel_map,
    convolve_plane,
    box_kernel,
    gaussian_kernel,
    rgb_to_yuv,
    yuv_to_rgb,
)
from .optim import ParamSpec
from .refgen import NoiseModel


class BlockId(Enum):
    BAYER_NR = "bayer_nr"
    DEMOSAIC = "demosaic"
    YUV_NR = "yuv_nr"
    SHARPEN = "sharpen"


PIPELINE_ORDER = (BlockId.BAYER_NR, BlockId.DEMOSAIC, BlockId.YUV_NR, BlockId.SHARPEN)

BLOCK_PARAM_SPECS: dict[BlockId, list[ParamSpec]] = {
    BlockId.BAYER_NR: [
        ParamSpec("spatial_sigma", 0.5, 3.0),
        ParamSpec("range_scale", 0.0, 8.0),   # range sigma = range_scale * noise sigma
        ParamSpec("radius", 1.0, 3.0),        # window radius, rounded to {1, 2, 3}
        ParamSpec("strength", 0.0, 1.0),
    ],
    BlockId.DEMOSAIC: [
        ParamSpec("grad_threshold", 0.0, 0.5),
        ParamSpec("chroma_median", 0.0, 2.0),  # median half-window, rounded to {0, 1, 2}
        ParamSpec("chroma_strength", 0.0, 1.0),
        ParamSpec("anti_zipper", 0.0, 1.0),
    ],
    BlockId.YUV_NR: [
        ParamSpec("luma_sigma", 0.0, 0.2),
        ParamSpec("chroma_sigma", 0.0, 0.3),
        ParamSpec("spatial_sigma", 0.5, 4.0),
        ParamSpec("strength", 0.0, 1.0),
    ],
    BlockId.SHARPEN: [
        ParamSpec("usm_sigma", 0.5, 3.0),
        ParamSpec("coring", 0.0, 0.05),
        ParamSpec("gain", 0.0, 4.0),
        ParamSpec("overshoot", 0.0, 0.5),
    ],
}

# Settings at which each block leaves its input untouched.
PASSTHROUGH_VALUES: dict[BlockId, dict[str, float]] = {
    BlockId.BAYER_NR: {"spatial_sigma": 1.0, "range_scale": 0.0, "radius": 1.0, "strength": 0.0},
    BlockId.DEMOSAIC: {"grad_threshold": 0.0, "chroma_median": 0.0,
                       "chroma_strength": 0.0, "anti_zipper": 0.0},
    BlockId.YUV_NR: {"luma_sigma": 0.0, "chroma_sigma": 0.0, "spatial_sigma": 1.0, "strength": 0.0},
    BlockId.SHARPEN: {"usm_sigma": 1.0, "coring": 0.0, "gain": 0.0, "overshoot": 0.0},
}


@dataclass
class BlockParams:
    block: BlockId
    values: dict[str, float]

    def __post_init__(self):
        specs = {s.name: s for s in BLOCK_PARAM_SPECS[self.block]}
        if set(self.values) != set(specs):
            raise ValueError(
                f"{self.block.value}: parameters must be exactly {sorted(specs)}, "
                f"got {sorted(self.values)}"
            )
        for name, v in self.values.items():
            s = specs[name]
            if not (s.physical_min <= v <= s.physical_max):
                raise ValueError(
                    f"{self.block.value}.{name}={v} outside [{s.physical_min}, {s.physical_max}]"
                )

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def passthrough_params(block: BlockId) -> BlockParams:
    return BlockParams(block, dict(PASSTHROUGH_VALUES[block]))


def default_params(block: BlockId) -> BlockParams:
    """Mid-range settings for every parameter."""
    return BlockParams(block, {
        s.name: 0.5 * (s.physical_min + s.physical_max) for s in BLOCK_PARAM_SPECS[block]
    })


@dataclass
class PipelineTuning:
    blocks: dict[BlockId, BlockParams]

    def __post_init__(self):
        missing = [b.value for b in PIPELINE_ORDER if b not in self.blocks]
        if missing:
            raise ValueError(f"incomplete tuning, missing blocks: {missing}")
        for b, p in self.blocks.items():
            if p.block is not b:
                raise ValueError(f"params for {p.block.value} filed under {b.value}")

    def __getitem__(self, block: BlockId) -> BlockParams:
        return self.blocks[block]

    def to_dict(self) -> dict[str, dict[str, float]]:
        return {b.value: {s.name: float(self.blocks[b].values[s.name])
                          for s in BLOCK_PARAM_SPECS[b]}
                for b in PIPELINE_ORDER}

    @classmethod
    def from_dict(cls, d: dict[str, dict[str, float]]) -> "PipelineTuning":
        return cls({BlockId(k): BlockParams(BlockId(k), dict(v)) for k, v in d.items()})


def passthrough_tuning() -> PipelineTuning:
    return PipelineTuning({b: passthrough_params(b) for b in PIPELINE_ORDER})


def _check_block(p: BlockParams, expected: BlockId) -> None:
    if p.block is not expected:
        raise ValueError(f"expected {expected.value} params, got {p.block.value}")


def _bilateral(plane: np.ndarray, spatial_sigma: float, range_sigma,
               radius: int, guide: np.ndarray | None = None) -> np.ndarray:
    """Bilateral filter; `range_sigma` may be per-pixel, `guide` drives range weights."""
    g = plane if guide is None else guide
    h, w = plane.shape
    pad_p = np.pad(plane, radius, mode="edge")
    pad_g = np.pad(g, radius, mode="edge")
    denom_r = 2.0 * np.maximum(np.asarray(range_sigma, dtype=np.float64), 1e-12) ** 2
    inv_2ss = 1.0 / (2.0 * spatial_sigma * spatial_sigma)
    acc = np.zeros_like(plane)
    wacc = np.zeros_like(plane)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            sw = np.exp(-(dx * dx + dy * dy) * inv_2ss)
            sp = pad_p[radius + dy:radius + dy + h, radius + dx:radius + dx + w]
            sg = pad_g[radius + dy:radius + dy + h, radius + dx:radius + dx + w]
            wgt = sw * np.exp(-((sg - g) ** 2) / denom_r)
            acc += wgt * sp
            wacc += wgt
    return acc / wacc


def bayer_nr(m: BayerMosaic, p: BlockParams, nm: NoiseModel) -> BayerMosaic:
    """Per-CFA-plane bilateral with noise-adaptive range sigma."""
    _check_block(p, BlockId.BAYER_NR)
    beta = p["strength"]
    if beta == 0.0:
        return BayerMosaic(m.data.copy(), m.pattern)
    radius = int(round(p["radius"]))
    out = m.data.copy()
    for oy in (0, 1):
        for ox in (0, 1):
            plane = m.data[oy::2, ox::2]
            sigma_r = p["range_scale"] * nm.sigma(plane)
            filtered = _bilateral(plane, p["spatial_sigma"], sigma_r, radius)
            out[oy::2, ox::2] = (1.0 - beta) * plane + beta * filtered
    return BayerMosaic(out, m.pattern)


_DIFF_KERNEL = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]])


def _interp_color_diff(raw: np.ndarray, green: np.ndarray, sites: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of (raw - green) from `sites` to all pixels."""
    mask = sites.astype(np.float64)
    diff = (raw - green) * mask
    num = ndimage.convolve(diff, _DIFF_KERNEL, mode="nearest")
    den = ndimage.convolve(mask, _DIFF_KERNEL, mode="nearest")
    return green + num / den


def demosaic(m: BayerMosaic, p: BlockParams) -> PlanarImage:
    """Gradient-directed green, bilinear color-difference red/blue, optional
    chroma-median false-color suppression and anti-zipper green blur."""
    _check_block(p, BlockId.DEMOSAIC)
    t_g = p["grad_threshold"]
    half = int(round(p["chroma_median"]))
    lam = p["chroma_strength"]
    zip_strength = p["anti_zipper"]

    raw = m.data
    chan = cfa_channel_map(m.pattern, m.height, m.width)
    pad = np.pad(raw, 1, mode="edge")
    north, south = pad[:-2, 1:-1], pad[2:, 1:-1]
    west, east = pad[1:-1, :-2], pad[1:-1, 2:]

    # Horizontal/vertical green neighbors of every R/B site are green samples.
    grad_h = np.abs(west - east)
    grad_v = np.abs(north - south)
    g_h = 0.5 * (west + east)
    g_v = 0.5 * (north + south)
    g_avg = 0.25 * (north + south + west + east)
    directed = np.where(grad_h + t_g < grad_v, g_h, np.where(grad_v + t_g < grad_h, g_v, g_avg))
    green = np.where(chan == 1, raw, directed)
    if zip_strength > 0.0:
        green = (1.0 - zip_strength) * green + zip_strength * convolve_plane(green, box_kernel(3))

    red = _interp_color_diff(raw, green, chan == 0)
    blue = _interp_color_diff(raw, green, chan == 2)

    if lam > 0.0 and half > 0:
        size = 2 * half + 1
        for plane in (red, blue):
            d = plane - green
            d_med = ndimage.median_filter(d, size=size, mode="nearest")
            plane += lam * (d_med - d)
    return PlanarImage(np.stack([red, green, blue]), ColorDomain.LINEAR_RGB)


def yuv_nr(img: PlanarImage, p: BlockParams) -> PlanarImage:
    """Bilateral on Y, joint bilateral on U/V guided by Y."""
    _check_block(p, BlockId.YUV_NR)
    if img.domain is not ColorDomain.YUV:
        raise ValueError("yuv_nr expects a YUV image")
    beta = p["strength"]
    if beta == 0.0:
        return PlanarImage(img.data.copy(), ColorDomain.YUV)
    sigma_s = p["spatial_sigma"]
    radius = max(1, int(round(1.5 * sigma_s)))
    y, u, v = img.data
    y_f = _bilateral(y, sigma_s, p["luma_sigma"], radius) if p["luma_sigma"] > 0.0 else y
    u_f = _bilateral(u, sigma_s, p["chroma_sigma"], radius, guide=y)
    v_f = _bilateral(v, sigma_s, p["chroma_sigma"], radius, guide=y)
    out = (1.0 - beta) * img.data + beta * np.stack([y_f, u_f, v_f])
    return PlanarImage(out, ColorDomain.YUV)


_USM_KERNEL_SIZE = 9


def sharpen(img: PlanarImage, p: BlockParams) -> PlanarImage:
    """Unsharp mask on Y with coring and a local-extremum overshoot clamp."""
    _check_block(p, BlockId.SHARPEN)
    if img.domain is not ColorDomain.YUV:
        raise ValueError("sharpen expects a YUV image")
    gain = p["gain"]
    if gain == 0.0:
        return PlanarImage(img.data.copy(), ColorDomain.YUV)
    y = img.data[0]
    blurred = convolve_plane(y, gaussian_kernel(_USM_KERNEL_SIZE, p["usm_sigma"]))
    detail = y - blurred
    detail = np.sign(detail) * np.maximum(np.abs(detail) - p["coring"], 0.0)
    y_sharp = y + gain * detail
    local_min = ndimage.minimum_filter(y, size=3, mode="nearest")
    local_max = ndimage.maximum_filter(y, size=3, mode="nearest")
    y_out = np.clip(y_sharp, local_min - p["overshoot"], local_max + p["overshoot"])
    return PlanarImage(np.stack([y_out, img.data[1], img.data[2]]), ColorDomain.YUV)


@dataclass
class PipelineTaps:
    """Per-block intermediate outputs plus the final clamped RGB."""

    bayer_nr: BayerMosaic | None = None
    demosaic: PlanarImage | None = None
    yuv_nr: PlanarImage | None = None
    sharpen: PlanarImage | None = None
    final_rgb: PlanarImage | None = None

    def for_block(self, block: BlockId):
        tap = {
            BlockId.BAYER_NR: self.bayer_nr,
            BlockId.DEMOSAIC: self.demosaic,
            BlockId.YUV_NR: self.yuv_nr,
            BlockId.SHARPEN: self.sharpen,
        }[block]
        if tap is None:
            raise ValueError(f"tap output for {block.value} not available")
        return tap


def run_pipeline(m: BayerMosaic, tuning: PipelineTuning, nm: NoiseModel) -> PipelineTaps:
    """BayerNR -> demosaic -> YUV NR -> sharpen; clamps only the final RGB."""
    a = bayer_nr(m, tuning[BlockId.BAYER_NR], nm)
    b = demosaic(a, tuning[BlockId.DEMOSAIC])
    c = yuv_nr(rgb_to_yuv(b), tuning[BlockId.YUV_NR])
    d = sharpen(c, tuning[BlockId.SHARPEN])
    rgb = yuv_to_rgb(d)
    final = PlanarImage(np.clip(rgb.data, 0.0, 1.0), ColorDomain.LINEAR_RGB)
    return PipelineTaps(bayer_nr=a, demosaic=b, yuv_nr=c, sharpen=d, final_rgb=final)
