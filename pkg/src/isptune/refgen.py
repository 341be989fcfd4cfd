"""Reference generation and the simulated sensor that replaces real captures.

Per-block references come from temporally fused bursts (noise reduction), a
clean/noisy simulated pair (demosaic) and an edge-steered unsharp mask of
the fused luma (sharpening).  The capture simulator adds signal-dependent
Gaussian noise from an affine variance model onto Bayer-subsampled clean RGB.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .imaging import (
    DETAIL_COLUMN,
    DETAIL_ROW,
    BayerMosaic,
    BayerPattern,
    ColorDomain,
    PlanarImage,
    bayer_subsample,
    box_kernel,
    convolve_plane,
    gaussian_kernel,
    scharr_gradients,
)


@dataclass(frozen=True)
class NoiseModel:
    """Affine signal-dependent variance: sigma^2(I) = a*gain*I + b*gain^2."""

    a: float
    b: float
    gain: float = 1.0

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError("noise coefficients must be non-negative")
        if self.gain < 1.0:
            raise ValueError("sensor gain must be >= 1")

    def variance(self, level):
        return self.a * self.gain * np.asarray(level) + self.b * self.gain**2

    def sigma(self, level):
        return np.sqrt(np.maximum(self.variance(level), 0.0))

    def with_gain(self, gain: float) -> "NoiseModel":
        return NoiseModel(self.a, self.b, gain)


@dataclass
class Burst:
    """N frames of a static scene, identical geometry and CFA pattern."""

    frames: list[BayerMosaic]

    def __post_init__(self):
        if not self.frames:
            raise ValueError("burst must contain at least one frame")
        first = self.frames[0]
        for fr in self.frames[1:]:
            if fr.data.shape != first.data.shape or fr.pattern is not first.pattern:
                raise ValueError("burst frames must share geometry and pattern")

    def __len__(self) -> int:
        return len(self.frames)


def temporal_fusion(b: Burst) -> BayerMosaic:
    """Per-pixel arithmetic mean over the burst.

    Computed as base frame plus the mean of deltas: identical frames fuse to
    the frame bit-exactly and cancellation error stays at noise scale.
    """
    base = b.frames[0].data
    deltas = np.stack([fr.data - base for fr in b.frames])
    return BayerMosaic(base + deltas.mean(axis=0), b.frames[0].pattern)


def blend_references(a: BayerMosaic, b: BayerMosaic, w: float) -> BayerMosaic:
    """IQ-preference blend w*a + (1-w)*b between two reference candidates."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"blend weight {w} outside [0, 1]")
    if a.data.shape != b.data.shape or a.pattern is not b.pattern:
        raise ValueError("blend inputs must share geometry and pattern")
    return BayerMosaic(w * a.data + (1.0 - w) * b.data, a.pattern)


def calibrate_noise_model(flat_bursts: list[tuple[Burst, float]]) -> NoiseModel:
    """Least-squares fit of sample variance vs mean level over flat captures."""
    if len({level for _, level in flat_bursts}) < 2:
        raise ValueError("noise calibration needs at least 2 distinct mean levels")
    levels = np.array([level for _, level in flat_bursts])
    variances = np.array([
        np.var(np.stack([fr.data for fr in burst.frames]), ddof=1)
        for burst, _ in flat_bursts
    ])
    design = np.stack([levels, np.ones_like(levels)], axis=1)
    (a, b), *_ = np.linalg.lstsq(design, variances, rcond=None)
    if a < 0 or b < 0:
        warnings.warn(f"clamping negative noise fit (a={a:.3e}, b={b:.3e}) to zero")
        a, b = max(a, 0.0), max(b, 0.0)
    return NoiseModel(float(a), float(b))


def simulate_capture(clean_rgb: PlanarImage, nm: NoiseModel, pattern: BayerPattern,
                     n_frames: int, seed: int) -> Burst:
    """Bayer-subsample clean RGB and add per-pixel Gaussian sensor noise.

    Each frame draws from its own substream keyed by (seed, frame index),
    so bursts are reproducible regardless of evaluation order.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    clean = bayer_subsample(clean_rgb, pattern)
    sigma = nm.sigma(clean.data)
    frames = []
    for t in range(n_frames):
        rng = np.random.default_rng([seed, t])
        noisy = np.clip(clean.data + rng.standard_normal(clean.data.shape) * sigma, 0.0, 1.0)
        frames.append(BayerMosaic(noisy, pattern))
    return Burst(frames)


@dataclass
class SharpenRefConfig:
    """Edge-directed unsharp-mask reference constants."""

    alpha: float = 1.0
    sigma_usm: float = 2.5
    usm_size: int = 9
    sigma_ndir: float = 0.5
    box_size: int = 9
    flat_percentile: float = 0.1

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 < self.flat_percentile < 1.0:
            raise ValueError("flat_percentile must be in (0, 1)")


def flat_mask_from_gradients(fused_y: PlanarImage, percentile: float) -> np.ndarray:
    """Fallback flat selection: lowest-percentile gradient magnitude pixels."""
    gh, gv = scharr_gradients(fused_y)
    mag = np.hypot(gh.data[0], gv.data[0])
    return mag <= np.quantile(mag, percentile)


def sharpening_reference(fused_y: PlanarImage, cfg: SharpenRefConfig,
                         flat_mask: np.ndarray | None = None) -> PlanarImage:
    """Sharpening target: unsharp mask of the fused luma with edge steering.

    Directional second-difference detail is weighted by the Scharr gradient
    ratio; non-directional unsharp detail is gated by local detail energy
    normalized to flat-region statistics.  The overall strength alpha scales
    the added detail linearly.
    """
    if fused_y.channels != 1:
        raise ValueError("sharpening reference expects single-channel fused luma")
    if flat_mask is None:
        flat_mask = flat_mask_from_gradients(fused_y, cfg.flat_percentile)
    flat_mask = np.asarray(flat_mask, dtype=bool)
    if flat_mask.shape != (fused_y.height, fused_y.width):
        raise ValueError("flat mask geometry does not match the image")
    if not flat_mask.any():
        raise ValueError("flat mask is empty")

    y = fused_y.data[0]
    gh_img, gv_img = scharr_gradients(fused_y)
    abs_h, abs_v = np.abs(gh_img.data[0]), np.abs(gv_img.data[0])

    both_tiny = (abs_h < 1e-12) & (abs_v < 1e-12)
    w = np.where(both_tiny, 0.5, abs_h / np.where(both_tiny, 1.0, abs_h + abs_v))

    d_dir = w * convolve_plane(y, DETAIL_COLUMN) + (1.0 - w) * convolve_plane(y, DETAIL_ROW)
    d_ndir = y - convolve_plane(y, gaussian_kernel(cfg.usm_size, cfg.sigma_usm))

    w_ndir = np.exp(-np.minimum(abs_h, abs_v) ** 2 / cfg.sigma_ndir**2)
    energy = convolve_plane(np.abs(d_ndir), box_kernel(cfg.box_size))
    sigma_alpha = max(float(energy[flat_mask].mean() + energy[flat_mask].std()), 1e-6)
    alpha_ndir = 1.0 - np.exp(-energy / sigma_alpha**2)

    ref = y + cfg.alpha * alpha_ndir * (w_ndir * d_ndir + (1.0 - w_ndir) * d_dir)
    return PlanarImage(ref, ColorDomain.PLANE)


# ---------------------------------------------------------------------------
# Synthetic chart scenes (stand-in for lab captures)
# ---------------------------------------------------------------------------

@dataclass
class SceneSpec:
    """Chart description: flats, edges, a zone plate, color patches."""

    width: int
    height: int
    elements: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.width < 16 or self.height < 16 or self.width % 2 or self.height % 2:
            raise ValueError(f"scene dimensions must be even and >= 16, got "
                             f"{self.width}x{self.height}")

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "elements": self.elements}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(int(d["width"]), int(d["height"]), list(d["elements"]))


def _as_rgb(value) -> np.ndarray:
    v = np.asarray(value, dtype=np.float64).reshape(-1)
    if v.size == 1:
        v = np.repeat(v, 3)
    if v.size != 3:
        raise ValueError(f"color must be scalar or RGB triple, got {value!r}")
    return v


def zone_plate_value(dx: float, dy: float, radius: float, kmax: float,
                     amplitude: float) -> float:
    """Radial chirp: instantaneous frequency kmax/2 cycles/px at the rim."""
    r2 = dx * dx + dy * dy
    return 0.5 + amplitude * np.cos(np.pi * kmax * r2 / (2.0 * radius))


def synthesize_scene(spec: SceneSpec, seed: int) -> tuple[PlanarImage, np.ndarray]:
    """Render the chart; returns (linear RGB image, boolean flat-region mask)."""
    h, w = spec.height, spec.width
    canvas = np.full((3, h, w), 0.4)
    flat = np.zeros((h, w), dtype=bool)
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    for el in spec.elements:
        kind = el["kind"]
        x0, y0, rw, rh = el["rect"]
        sl = np.s_[y0:y0 + rh, x0:x0 + rw]
        region_x, region_y = xs[sl], ys[sl]
        cx, cy = x0 + (rw - 1) / 2.0, y0 + (rh - 1) / 2.0
        if kind == "flat":
            canvas[:, y0:y0 + rh, x0:x0 + rw] = _as_rgb(el["value"])[:, None, None]
            flat[sl] = True
            continue
        flat[sl] = False
        if kind == "edge":
            theta = np.deg2rad(el.get("angle_deg", 0.0))
            side = (region_x - cx) * np.cos(theta) + (region_y - cy) * np.sin(theta) >= 0
            low, high = _as_rgb(el["low"]), _as_rgb(el["high"])
            canvas[:, y0:y0 + rh, x0:x0 + rw] = np.where(
                side[None], high[:, None, None], low[:, None, None])
        elif kind == "zone_plate":
            radius = min(rw, rh) / 2.0
            amp = el.get("amplitude", 0.35)
            kmax = el.get("kmax", 0.9)
            plate = zone_plate_value(region_x - cx, region_y - cy, radius, kmax, amp)
            canvas[:, y0:y0 + rh, x0:x0 + rw] = plate[None]
        elif kind == "patches":
            rows, cols = int(el["rows"]), int(el["cols"])
            colors = el.get("colors")
            if colors is None:
                colors = rng.uniform(0.08, 0.92, size=(rows * cols, 3)).tolist()
            for i in range(rows):
                for j in range(cols):
                    py0 = y0 + i * rh // rows
                    py1 = y0 + (i + 1) * rh // rows
                    px0 = x0 + j * rw // cols
                    px1 = x0 + (j + 1) * rw // cols
                    color = _as_rgb(colors[(i * cols + j) % len(colors)])
                    canvas[:, py0:py1, px0:px1] = color[:, None, None]
        else:
            raise ValueError(f"unknown scene element kind {kind!r}")

    if not flat.any():
        raise ValueError("scene has no flat region")
    return PlanarImage(np.clip(canvas, 0.0, 1.0), ColorDomain.LINEAR_RGB), flat


def default_scene_spec(width: int = 128, height: int = 128) -> SceneSpec:
    """Tuning chart: two flat levels, slanted and straight edges, a zone
    plate, and a strip of color patches."""
    def rx(frac):
        return int(round(frac * width))

    def ry(frac):
        return int(round(frac * height))

    return SceneSpec(width, height, [
        {"kind": "flat", "rect": [0, 0, rx(0.5), ry(0.3)], "value": 0.55},
        {"kind": "flat", "rect": [rx(0.5), 0, width - rx(0.5), ry(0.3)], "value": 0.25},
        {"kind": "edge", "rect": [0, ry(0.3), rx(0.34), ry(0.36)],
         "angle_deg": 8.0, "low": 0.15, "high": 0.8},
        {"kind": "edge", "rect": [rx(0.34), ry(0.3), rx(0.33), ry(0.36)],
         "angle_deg": 0.0, "low": 0.2, "high": 0.75},
        {"kind": "zone_plate", "rect": [rx(0.67), ry(0.3), width - rx(0.67), ry(0.36)],
         "amplitude": 0.35, "kmax": 0.9},
        {"kind": "patches", "rect": [0, ry(0.66), width, height - ry(0.66)],
         "rows": 2, "cols": 6},
    ])
