"""Reference oracles used by the test suite.

Everything here is written independently of the package implementations it
checks: plain loops, exact integer arithmetic where possible, breadth-first
search for connectivity. Slow is fine; these run on small fixtures.
"""

from collections import deque

import numpy as np

from almondnet.rng import Rng


def rng_u8_image(seed: int, height: int, width: int) -> np.ndarray:
    """Deterministic random uint8 image drawn from the package generator."""
    g = Rng(seed)
    flat = [g.below(256) for _ in range(height * width)]
    return np.array(flat, dtype=np.uint8).reshape(height, width)


def rng_int_array(rng: Rng, shape: tuple[int, ...], low: int, high: int) -> np.ndarray:
    """Integer-valued float array; exact under any float summation order."""
    n = int(np.prod(shape))
    flat = [rng.randrange(low, high + 1) for _ in range(n)]
    return np.array(flat, dtype=np.float64).reshape(shape)


def naive_conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    stride: int,
    padding: str,
) -> np.ndarray:
    """Seven explicit loops, NHWC in / NHWC out, zero padding for 'same'.

    Same padding follows the ceil(size/stride) output rule with the extra
    pixel on the bottom/right.
    """
    n, h, w, c = x.shape
    kh, kw, _, f = weight.shape

    def out_len(size, kernel):
        if padding == "same":
            return -(-size // stride)
        return (size - kernel) // stride + 1

    def pad_amount(size, kernel):
        out = -(-size // stride)
        total = max((out - 1) * stride + kernel - size, 0)
        return total // 2

    oh, ow = out_len(h, kh), out_len(w, kw)
    top = pad_amount(h, kh) if padding == "same" else 0
    left = pad_amount(w, kw) if padding == "same" else 0
    out = np.zeros((n, oh, ow, f), dtype=np.float64)
    for b in range(n):
        for oy in range(oh):
            for ox in range(ow):
                for fi in range(f):
                    acc = float(bias[fi])
                    for ky in range(kh):
                        for kx in range(kw):
                            iy = oy * stride + ky - top
                            ix = ox * stride + kx - left
                            if 0 <= iy < h and 0 <= ix < w:
                                for ci in range(c):
                                    acc += x[b, iy, ix, ci] * weight[ky, kx, ci, fi]
                    out[b, oy, ox, fi] = acc
    return out


def blur_2d_oracle(image: np.ndarray, kernel_size: int, sigma: float) -> np.ndarray:
    """Gaussian blur via one full 2D kernel and a per-pixel window sum."""
    radius = kernel_size // 2
    ys = np.arange(-radius, radius + 1, dtype=np.float64)
    k2 = np.exp(-(ys[:, None] ** 2 + ys[None, :] ** 2) / (2.0 * sigma * sigma))
    k2 /= k2.sum()
    padded = np.pad(np.asarray(image, dtype=np.float64), radius, mode="reflect")
    h, w = image.shape
    out = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            window = padded[i : i + kernel_size, j : j + kernel_size]
            out[i, j] = float((window * k2).sum())
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def bfs_hysteresis(strong: np.ndarray, weak: np.ndarray) -> np.ndarray:
    """Survivors of double thresholding: strong pixels plus every weak pixel
    reachable from one through 8-connected weak chains. Breadth-first."""
    h, w = strong.shape
    out = strong.copy()
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        r, c = queue.popleft()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and weak[rr, cc] and not out[rr, cc]:
                    out[rr, cc] = True
                    queue.append((rr, cc))
    return out


def window_sums_exact(image: np.ndarray, block: int) -> np.ndarray:
    """Per-pixel block x block window sums under reflect padding, computed
    in exact integer arithmetic."""
    radius = block // 2
    padded = np.pad(np.asarray(image, dtype=np.int64), radius, mode="reflect")
    h, w = image.shape
    out = np.empty((h, w), dtype=np.int64)
    for i in range(h):
        for j in range(w):
            out[i, j] = int(padded[i : i + block, j : j + block].sum())
    return out


def naive_nlm(
    image: np.ndarray, h: float, template_radius: int, search_radius: int
) -> np.ndarray:
    """Per-pixel non-local means: three nested loops, no vectorization."""
    img = np.asarray(image, dtype=np.float64)
    pad = search_radius + template_radius
    padded = np.pad(img, pad, mode="reflect")
    width = 2 * template_radius + 1
    area = float(width * width)
    height, w = img.shape
    out = np.empty_like(img)
    for i in range(height):
        for j in range(w):
            ci, cj = i + pad, j + pad
            ref = padded[
                ci - template_radius : ci + template_radius + 1,
                cj - template_radius : cj + template_radius + 1,
            ]
            acc = 0.0
            wsum = 0.0
            for di in range(-search_radius, search_radius + 1):
                for dj in range(-search_radius, search_radius + 1):
                    cand = padded[
                        ci + di - template_radius : ci + di + template_radius + 1,
                        cj + dj - template_radius : cj + dj + template_radius + 1,
                    ]
                    d2 = float(((ref - cand) ** 2).sum()) / area
                    weight = np.exp(-d2 / (h * h))
                    acc += weight * padded[ci + di, cj + dj]
                    wsum += weight
            out[i, j] = acc / wsum
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def random_confusion(rng: Rng, max_classes: int = 5, max_count: int = 40) -> np.ndarray:
    """Random nonnegative count matrix with at least one observation."""
    k = rng.randrange(2, max_classes + 1)
    counts = np.array(
        [[rng.below(max_count + 1) for _ in range(k)] for _ in range(k)],
        dtype=np.int64,
    )
    if counts.sum() == 0:
        counts[rng.below(k), rng.below(k)] = 1
    return counts


def labels_from_confusion(counts: np.ndarray) -> tuple[list[int], list[int]]:
    """Expand a count matrix into (y_true, y_pred) label lists."""
    y_true: list[int] = []
    y_pred: list[int] = []
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            y_true.extend([i] * int(counts[i, j]))
            y_pred.extend([j] * int(counts[i, j]))
    return y_true, y_pred


def make_manifest(per_class, classes=("almond", "shell")):
    """Path-only manifest with per_class samples of each class."""
    from almondnet.dataset import DatasetManifest, Sample

    samples = []
    for ci, name in enumerate(classes):
        for i in range(per_class):
            samples.append(Sample(ci, name, path=f"{name}_{i:04d}.pgm"))
    return DatasetManifest(samples, classes, "all")


def order_digest(manifest) -> str:
    """Short digest of the sample path order, for freezing split results."""
    import hashlib

    joined = "\n".join(s.path for s in manifest.samples)
    return hashlib.sha256(joined.encode()).hexdigest()[:16]


def canny_flood_fill_expected(image: np.ndarray, low: float, high: float) -> np.ndarray:
    """Expected canny output: the detector's own pre-threshold state (same
    internal building blocks, so identical floats), double-thresholded and
    grown by the independent BFS above."""
    from almondnet.imageproc import (
        _DIRECTION_OFFSETS,
        _SOBEL_X,
        _SOBEL_Y,
        _correlate3x3,
        _separable_filter,
        gaussian_kernel_1d,
        quantize_direction,
    )

    smoothed = _separable_filter(
        np.asarray(image, dtype=np.float64), gaussian_kernel_1d(5, 1.4)
    )
    gx = _correlate3x3(smoothed, _SOBEL_X)
    gy = _correlate3x3(smoothed, _SOBEL_Y)
    magnitude = np.hypot(gx, gy)
    direction = quantize_direction(gx, gy)
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
    return np.where(bfs_hysteresis(strong, weak), 255, 0).astype(np.uint8)
