"""Pixel-difference fitness (SAD) and evaluation metrics (MAD, SSIM, MS-SSIM).

The optimizer minimizes SAD in each block's native domain; SSIM / MS-SSIM are
reporting-only metrics computed on the luma plane for color inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import BayerMosaic, ColorDomain, PlanarImage, gaussian_kernel, convolve_plane, luma

ImageLike = PlanarImage | BayerMosaic | np.ndarray


def _as_array(img: ImageLike) -> np.ndarray:
    if isinstance(img, (PlanarImage, BayerMosaic)):
        return img.data
    return np.asarray(img, dtype=np.float64)


def _check_pair(a: ImageLike, b: ImageLike) -> tuple[np.ndarray, np.ndarray]:
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def sad(a: ImageLike, b: ImageLike) -> float:
    """Sum of absolute differences over all samples."""
    x, y = _check_pair(a, b)
    return float(np.sum(np.abs(x - y)))


def mad_8bit(a: ImageLike, b: ImageLike) -> float:
    """Mean absolute difference reported on a 0-255 scale."""
    x, y = _check_pair(a, b)
    return 255.0 * float(np.mean(np.abs(x - y)))


_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_L = 1.0
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
# canonical five dyadic-scale weights
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _to_plane(img: ImageLike) -> np.ndarray:
    if isinstance(img, PlanarImage):
        return luma(img)
    arr = _as_array(img)
    if arr.ndim == 3:
        if arr.shape[0] == 1:
            return arr[0]
        raise ValueError("metric expects a single-channel input; pass luma explicitly")
    return arr


def _ssim_maps(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel luminance and contrast-structure maps (11x11 Gaussian window)."""
    if min(x.shape) < _SSIM_WINDOW:
        raise ValueError(f"image smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} SSIM window")
    c1 = (_SSIM_K1 * _SSIM_L) ** 2
    c2 = (_SSIM_K2 * _SSIM_L) ** 2
    win = gaussian_kernel(_SSIM_WINDOW, _SSIM_SIGMA)
    mu_x = convolve_plane(x, win)
    mu_y = convolve_plane(y, win)
    var_x = convolve_plane(x * x, win) - mu_x * mu_x
    var_y = convolve_plane(y * y, win) - mu_y * mu_y
    cov = convolve_plane(x * y, win) - mu_x * mu_y
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    cs = (2.0 * cov + c2) / (var_x + var_y + c2)
    return lum, cs


def ssim(a: ImageLike, b: ImageLike) -> float:
    """Mean structural similarity, standard 11x11 Gaussian sigma-1.5 config."""
    x, y = _check_pair(_to_plane(a), _to_plane(b))
    lum, cs = _ssim_maps(x, y)
    return float(np.mean(lum * cs))


def _downsample2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    h2, w2 = h - h % 2, w - w % 2
    p = plane[:h2, :w2]
    return 0.25 * (p[0::2, 0::2] + p[0::2, 1::2] + p[1::2, 0::2] + p[1::2, 1::2])


def ms_ssim(a: ImageLike, b: ImageLike) -> float:
    """Multi-scale SSIM; scales drop (weights renormalized) on small images.

    Uses as many dyadic scales (max 5) as leave the coarsest image at least
    one SSIM window wide, so the full five-scale form needs min dim >= 176.
    """
    x, y = _check_pair(_to_plane(a), _to_plane(b))
    n_scales = 1
    size = min(x.shape)
    while n_scales < len(MS_SSIM_WEIGHTS) and size // 2 >= _SSIM_WINDOW:
        n_scales += 1
        size //= 2
    weights = np.asarray(MS_SSIM_WEIGHTS[:n_scales])
    weights = weights / weights.sum()

    score = 1.0
    for level in range(n_scales):
        lum, cs = _ssim_maps(x, y)
        if level < n_scales - 1:
            term = float(np.mean(cs))
            x, y = _downsample2(x), _downsample2(y)
        else:
            term = float(np.mean(lum * cs))
        score *= max(term, 0.0) ** weights[level]
    return float(score)


@dataclass
class FitnessReport:
    """Metric bundle for one block/tuning comparison."""

    sad: float
    mad_8bit: float
    ssim: float
    ms_ssim: float
    domain: str
    pixel_count: int


def fitness_report(output: ImageLike, reference: ImageLike, domain: str) -> FitnessReport:
    x, y = _check_pair(output, reference)
    return FitnessReport(
        sad=sad(x, y),
        mad_8bit=mad_8bit(x, y),
        ssim=ssim(_to_plane(output), _to_plane(reference)),
        ms_ssim=ms_ssim(_to_plane(output), _to_plane(reference)),
        domain=domain,
        pixel_count=int(x.size),
    )


def block_comparison(block, taps, reference) -> tuple[np.ndarray, np.ndarray]:
    """(output, reference) arrays for a block, in its native fitness domain.

    BayerNR compares on the Bayer plane, demosaic on linear RGB, YUV NR on the
    full YUV triple, and sharpening on Y alone.
    """
    from .isp import BlockId  # late import keeps isp free to import fitness helpers

    tap = taps.for_block(block)
    if block is BlockId.BAYER_NR:
        if not isinstance(reference, BayerMosaic) or reference.pattern is not tap.pattern:
            raise ValueError("BayerNR fitness needs a Bayer reference with matching pattern")
        return tap.data, reference.data
    if block is BlockId.SHARPEN:
        ref_plane = _to_plane(reference) if (
            not isinstance(reference, PlanarImage) or reference.channels == 1
        ) else reference.data[0]
        return tap.data[0], ref_plane
    want = ColorDomain.LINEAR_RGB if block is BlockId.DEMOSAIC else ColorDomain.YUV
    if not isinstance(reference, PlanarImage) or reference.domain is not want:
        raise ValueError(f"{block.value} fitness needs a {want.value} reference")
    return tap.data, reference.data


def block_fitness(block, taps, reference) -> float:
    """SAD between a block's tap output and its reference; the tuning objective."""
    out, ref = block_comparison(block, taps, reference)
    return sad(out, ref)
