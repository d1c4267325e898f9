"""Preprocessing kernels: grayscale, Gaussian blur, non-local means,
adaptive mean threshold, Canny.

Conventions shared by every kernel:
  - images are HxW (or HxWx3) uint8 arrays; math runs in float64 internally
  - borders use reflect-101 (mirror without repeating the edge pixel),
    which is numpy's "reflect" pad mode
  - outputs are re-quantized by round-half-up and clamped to [0, 255]

The non-local means here is the direct O(N * S^2 * T^2) form, affordable at
the image sizes this pipeline targets and simple enough to double as its
own reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidBlockSize, InvalidKernel, InvalidRadius, InvalidThresholds
from .imgio import quantize_u8

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Luma conversion: round(0.299 R + 0.587 G + 0.114 B)."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidKernel(f"expected HxWx3 RGB image, got shape {img.shape}")
    r, g, b = GRAY_WEIGHTS
    gray = r * img[:, :, 0].astype(np.float64) + g * img[:, :, 1] + b * img[:, :, 2]
    return quantize_u8(gray)


def derived_sigma(kernel_size: int) -> float:
    """Default blur sigma when the caller passes sigma <= 0."""
    return 0.3 * ((kernel_size - 1) * 0.5 - 1.0) + 0.8


def gaussian_kernel_1d(kernel_size: int, sigma: float) -> np.ndarray:
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise InvalidKernel(f"kernel size must be odd and positive, got {kernel_size}")
    if sigma <= 0:
        sigma = derived_sigma(kernel_size)
    radius = kernel_size // 2
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _filter1d(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Correlate one axis with a 1D kernel under reflect-101 borders."""
    radius = len(kernel) // 2
    if radius == 0:
        return img * kernel[0]
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(img, pad, mode="reflect")
    out = np.zeros(img.shape, dtype=np.float64)
    for i, k in enumerate(kernel):
        if axis == 0:
            out += k * padded[i : i + img.shape[0], :]
        else:
            out += k * padded[:, i : i + img.shape[1]]
    return out


def _separable_filter(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return _filter1d(_filter1d(img, kernel, axis=0), kernel, axis=1)


def gaussian_blur(image: np.ndarray, kernel_size: int = 5, sigma: float = 0.0) -> np.ndarray:
    """Separable Gaussian blur; sigma <= 0 selects the derived default."""
    kernel = gaussian_kernel_1d(kernel_size, sigma)
    return quantize_u8(_separable_filter(np.asarray(image, dtype=np.float64), kernel))


def _box_sum_valid(values: np.ndarray, width: int) -> np.ndarray:
    """Sum over width x width windows, windows fully inside the array."""
    rows = np.zeros((values.shape[0] - width + 1, values.shape[1]), dtype=np.float64)
    for i in range(width):
        rows += values[i : i + rows.shape[0], :]
    out = np.zeros((rows.shape[0], values.shape[1] - width + 1), dtype=np.float64)
    for j in range(width):
        out += rows[:, j : j + out.shape[1]]
    return out


def nlm_denoise(
    image: np.ndarray,
    h: float = 10.0,
    template_radius: int = 3,
    search_radius: int = 10,
    noise_sigma: float = 0.0,
) -> np.ndarray:
    """Direct non-local means.

    Each pixel becomes the weight-normalized average of the centers of its
    search window; the weight of a candidate is
    exp(-max(d^2 - 2*noise_sigma^2, 0) / h^2) with d^2 the mean squared
    difference between the two template patches.
    """
    if template_radius < 0 or search_radius < template_radius:
        raise InvalidRadius(
            f"need 0 <= template_radius <= search_radius, got "
            f"{template_radius}, {search_radius}"
        )
    if h <= 0:
        raise InvalidRadius(f"h must be positive, got {h}")
    img = np.asarray(image, dtype=np.float64)
    height, width = img.shape
    pad = search_radius + template_radius
    padded = np.pad(img, pad, mode="reflect")
    patch_width = 2 * template_radius + 1
    patch_area = float(patch_width * patch_width)
    offset = 2.0 * noise_sigma * noise_sigma

    acc = np.zeros_like(img)
    weight_sum = np.zeros_like(img)
    # Region whose box sums land exactly on the original pixel grid.
    r0 = pad - template_radius
    r1 = pad + height + template_radius
    c0 = pad - template_radius
    c1 = pad + width + template_radius
    for di in range(-search_radius, search_radius + 1):
        for dj in range(-search_radius, search_radius + 1):
            diff = padded[r0:r1, c0:c1] - padded[r0 + di : r1 + di, c0 + dj : c1 + dj]
            d2 = _box_sum_valid(diff * diff, patch_width) / patch_area
            w = np.exp(-np.maximum(d2 - offset, 0.0) / (h * h))
            acc += w * padded[pad + di : pad + di + height, pad + dj : pad + dj + width]
            weight_sum += w
    return quantize_u8(acc / weight_sum)


def adaptive_threshold(image: np.ndarray, block_size: int = 11, c: float = 2.0) -> np.ndarray:
    """Mean-adaptive binarization: 255 where pixel > neighborhood mean - c."""
    if block_size < 3 or block_size % 2 == 0:
        raise InvalidBlockSize(f"block size must be odd and >= 3, got {block_size}")
    img = np.asarray(image, dtype=np.float64)
    box = np.full(block_size, 1.0 / block_size)
    local_mean = _separable_filter(img, box)
    return np.where(img > local_mean - c, 255, 0).astype(np.uint8)


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)

# Neighbor offset (dr, dc) for each quantized gradient direction.
_DIRECTION_OFFSETS = {0: (0, 1), 45: (1, 1), 90: (1, 0), 135: (1, -1)}


def _correlate3x3(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    padded = np.pad(img, 1, mode="reflect")
    out = np.zeros(img.shape, dtype=np.float64)
    for i in range(3):
        for j in range(3):
            out += kernel[i, j] * padded[i : i + img.shape[0], j : j + img.shape[1]]
    return out


def quantize_direction(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Gradient direction folded to {0, 45, 90, 135} degrees."""
    deg = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.zeros(deg.shape, dtype=np.int64)
    bins[(deg >= 22.5) & (deg < 67.5)] = 45
    bins[(deg >= 67.5) & (deg < 112.5)] = 90
    bins[(deg >= 112.5) & (deg < 157.5)] = 135
    return bins


def canny(image: np.ndarray, low: float = 50.0, high: float = 150.0) -> np.ndarray:
    """Four-stage Canny detector.

    5x5 Gaussian smooth (sigma 1.4), Sobel gradients, non-maximum
    suppression along the quantized direction, then double threshold with
    8-connected hysteresis. Magnitudes above `high` are strong; those in
    [low, high] survive only when transitively connected to a strong pixel.
    """
    if low < 0 or low > high:
        raise InvalidThresholds(f"need 0 <= low <= high, got {low}, {high}")
    img = np.asarray(image, dtype=np.float64)
    smoothed = _separable_filter(img, gaussian_kernel_1d(5, 1.4))
    gx = _correlate3x3(smoothed, _SOBEL_X)
    gy = _correlate3x3(smoothed, _SOBEL_Y)
    magnitude = np.hypot(gx, gy)
    direction = quantize_direction(gx, gy)

    # Non-maximum suppression: a pixel survives when it is >= its neighbor
    # ahead along the gradient and strictly > the neighbor behind, so a
    # two-pixel plateau keeps exactly one pixel. Out-of-bounds reads as 0.
    h, w = magnitude.shape
    padded = np.pad(magnitude, 1, mode="constant")
    suppressed = np.zeros_like(magnitude)
    for angle, (dr, dc) in _DIRECTION_OFFSETS.items():
        mask = direction == angle
        ahead = padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
        behind = padded[1 - dr : 1 - dr + h, 1 - dc : 1 - dc + w]
        keep = mask & (magnitude >= ahead) & (magnitude > behind)
        suppressed[keep] = magnitude[keep]

    strong = suppressed > high
    weak = (suppressed >= low) & (suppressed <= high) & (suppressed > 0)

    # Hysteresis: flood from strong pixels across 8-connected weak pixels.
    out = strong.copy()
    stack = list(zip(*np.nonzero(strong)))
    while stack:
        r, c = stack.pop()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and weak[rr, cc] and not out[rr, cc]:
                    out[rr, cc] = True
                    stack.append((rr, cc))
    return np.where(out, 255, 0).astype(np.uint8)


STAGE_NAMES = ("gray", "blur", "denoise", "thresh", "canny")


@dataclass
class PreprocessParams:
    """Knobs for the five-stage chain; defaults mirror common library
    behavior for each named operation."""

    gaussian_kernel: int = 5
    gaussian_sigma: float = 0.0  # <= 0 selects the derived default
    nlm_h: float = 10.0
    nlm_template_radius: int = 3
    nlm_search_radius: int = 10
    thresh_block: int = 11
    thresh_c: float = 2.0
    canny_low: float = 50.0
    canny_high: float = 150.0
    feed_stage: str = "denoise"

    def validate(self) -> None:
        if self.feed_stage not in STAGE_NAMES:
            raise InvalidKernel(
                f"feed_stage must be one of {STAGE_NAMES}, got {self.feed_stage!r}"
            )


def run_stages(
    image: np.ndarray,
    params: PreprocessParams | None = None,
    through: str = "canny",
) -> list[tuple[str, np.ndarray]]:
    """Run the stage sequence up to and including `through`.

    The input may be RGB (H,W,3) or already-grayscale (H,W); in the latter
    case the gray stage is the input itself. Each stage feeds the next.
    """
    params = params or PreprocessParams()
    params.validate()
    if through not in STAGE_NAMES:
        raise InvalidKernel(f"no stage named {through!r}")
    gray = image.copy() if image.ndim == 2 else to_grayscale(image)
    stages = [("gray", gray)]
    last = STAGE_NAMES.index(through)
    if last >= 1:
        stages.append(
            ("blur", gaussian_blur(gray, params.gaussian_kernel, params.gaussian_sigma))
        )
    if last >= 2:
        stages.append(
            (
                "denoise",
                nlm_denoise(
                    stages[-1][1],
                    params.nlm_h,
                    params.nlm_template_radius,
                    params.nlm_search_radius,
                ),
            )
        )
    if last >= 3:
        stages.append(
            ("thresh", adaptive_threshold(stages[-1][1], params.thresh_block, params.thresh_c))
        )
    if last >= 4:
        stages.append(("canny", canny(stages[-1][1], params.canny_low, params.canny_high)))
    return stages


def preprocess_chain(
    image_rgb: np.ndarray, params: PreprocessParams | None = None
) -> list[tuple[str, np.ndarray]]:
    """Run the five stages strictly in sequence, each feeding the next.

    Returns [(name, image)] for gray, blur, denoise, thresh, canny. Which
    stage feeds the classifier is a separate choice (params.feed_stage);
    the later binary stages are mainly diagnostic artifacts.
    """
    return run_stages(image_rgb, params, through="canny")


def stage_output(stages: list[tuple[str, np.ndarray]], name: str) -> np.ndarray:
    for stage_name, img in stages:
        if stage_name == name:
            return img
    raise InvalidKernel(f"no stage named {name!r}")
