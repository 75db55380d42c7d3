"""Classical edge detectors and the adaptive Canny pipeline.

The adaptive variant derives its hysteresis thresholds from per-image
statistics (t_high = mean + k * stddev, t_low = t_high / 2) instead of fixed
constants, so the detector needs no manual tuning across images of different
brightness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import raster
from .errors import DimensionError, ParameterError

__all__ = [
    "GradientField",
    "CannyThresholds",
    "EdgeMap",
    "gradient",
    "log_edges",
    "adaptive_canny",
    "compare_edge_detectors",
    "boundary_precision_recall",
]

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)
SOBEL_Y = SOBEL_X.T
PREWITT_X = np.array([[-1, 0, 1], [-1, 0, 1], [-1, 0, 1]], dtype=float)
PREWITT_Y = PREWITT_X.T
# Roberts cross is 2x2; embedded in a 3x3 frame to satisfy the odd-size
# convolution contract (zero row/column does not change the response).
ROBERTS_X = np.array([[0, 0, 0], [0, 1, 0], [0, 0, -1]], dtype=float)
ROBERTS_Y = np.array([[0, 0, 0], [0, 0, 1], [0, -1, 0]], dtype=float)

_OPERATORS = {
    "sobel": (SOBEL_X, SOBEL_Y),
    "prewitt": (PREWITT_X, PREWITT_Y),
    "roberts": (ROBERTS_X, ROBERTS_Y),
}


@dataclass(frozen=True)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    direction: np.ndarray  # radians in (-pi, pi]


@dataclass(frozen=True)
class CannyThresholds:
    t_low: float
    t_high: float
    mu: float
    sigma: float
    k: float


@dataclass(frozen=True)
class EdgeMap:
    mask: np.ndarray  # uint8, 255 = edge pixel
    thresholds: CannyThresholds


def gradient(img, operator: str = "sobel") -> GradientField:
    """Apply a first-derivative operator (sobel, prewitt or roberts)."""
    if operator not in _OPERATORS:
        raise ParameterError(f"unknown gradient operator {operator!r}")
    kx, ky = _OPERATORS[operator]
    gx = raster.convolve(img, kx)
    gy = raster.convolve(img, ky)
    return GradientField(gx, gy, np.hypot(gx, gy), np.arctan2(gy, gx))


def log_edges(img, sigma: float = 2.0, contrast_min: float = 8.0) -> np.ndarray:
    """Laplacian-of-Gaussian zero-crossing edges.

    A pixel is marked when its 3x3 LoG neighborhood straddles zero and the
    local swing (max - min) exceeds ``contrast_min``.
    """
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    smoothed = raster.gaussian_blur(img, sigma)
    lap = raster.convolve(smoothed, np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=float))
    p = np.pad(lap, 1, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(p, (3, 3))
    lo = win.min(axis=(2, 3))
    hi = win.max(axis=(2, 3))
    crossing = (lo < 0) & (hi > 0) & ((hi - lo) >= contrast_min)
    return raster.mask_from_bool(crossing)


def _shift(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Shift with zero fill; out-of-image neighbors count as magnitude 0."""
    h, w = a.shape
    out = np.zeros_like(a)
    ys = slice(max(0, dy), h + min(0, dy))
    xs = slice(max(0, dx), w + min(0, dx))
    ys_src = slice(max(0, -dy), h + min(0, -dy))
    xs_src = slice(max(0, -dx), w + min(0, -dx))
    out[ys, xs] = a[ys_src, xs_src]
    return out


# Quantized gradient directions: (dx, dy) step along the gradient normal.
_NMS_STEPS = {0: (1, 0), 1: (1, 1), 2: (0, 1), 3: (-1, 1)}


def _non_maximum_suppression(mag: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Keep only ridge pixels of the magnitude field.

    The gradient direction is quantized to 4 bins (0, 45, 90, 135 degrees
    modulo 180). A pixel survives when it is strictly greater than the
    neighbor in the +direction and at least as large as the one in the
    -direction; the asymmetric tie-break thins 2-pixel plateaus to one.
    """
    deg = np.rad2deg(direction) % 180.0
    bins = np.rint(deg / 45.0).astype(int) % 4
    keep = np.zeros(mag.shape, dtype=bool)
    for b, (dx, dy) in _NMS_STEPS.items():
        sel = bins == b
        n_plus = _shift(mag, -dy, -dx)  # value of the neighbor at (x+dx, y+dy)
        n_minus = _shift(mag, dy, dx)
        keep |= sel & (mag > n_plus) & (mag >= n_minus)
    return np.where(keep, mag, 0.0)


_NEIGHBORS8 = np.array(
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
)


def _hysteresis(mag: np.ndarray, t_low: float, t_high: float) -> np.ndarray:
    """Strong pixels seed a flood over 8-connected weak pixels."""
    strong = mag >= t_high
    weak = mag >= t_low
    visited = strong.copy()
    frontier = np.argwhere(strong)
    h, w = mag.shape
    while frontier.size:
        cand = frontier[:, None, :] + _NEIGHBORS8[None, :, :]
        cand = cand.reshape(-1, 2)
        ok = (
            (cand[:, 0] >= 0)
            & (cand[:, 0] < h)
            & (cand[:, 1] >= 0)
            & (cand[:, 1] < w)
        )
        cand = cand[ok]
        flat = cand[:, 0] * w + cand[:, 1]
        flat = np.unique(flat)
        ys, xs = flat // w, flat % w
        new = weak[ys, xs] & ~visited[ys, xs]
        visited[ys[new], xs[new]] = True
        frontier = np.column_stack([ys[new], xs[new]])
    return visited


def adaptive_canny(img, k: float = 0.33, smooth_sigma: float = 1.4) -> EdgeMap:
    """Canny edge detection with image-statistics-driven thresholds.

    Pipeline: Gaussian smoothing, Sobel gradient, 4-bin non-maximum
    suppression, hysteresis with t_high = clip(mu + k*sigma, 1, 255) and
    t_low = t_high / 2, where mu and sigma are the mean and standard
    deviation of the input intensities.
    """
    a = raster.as_gray(img)
    mu, var = raster.mean_variance(a)
    sigma = float(np.sqrt(var))
    t_high = float(np.clip(mu + k * sigma, 1.0, 255.0))
    t_low = 0.5 * t_high
    smoothed = raster.gaussian_blur(a, smooth_sigma)
    field = gradient(smoothed, "sobel")
    nms = _non_maximum_suppression(field.magnitude, field.direction)
    edges = _hysteresis(nms, t_low, t_high)
    return EdgeMap(
        mask=raster.mask_from_bool(edges),
        thresholds=CannyThresholds(t_low=t_low, t_high=t_high, mu=mu, sigma=sigma, k=k),
    )


# ---------------------------------------------------------------------------
# comparison harness

def boundary_precision_recall(detected, truth) -> tuple[float, float]:
    """Boundary precision/recall with 1-px tolerance matching.

    Precision of an empty detection is defined as 1.0 (recorded convention).
    """
    d = raster.as_mask(detected)
    t = raster.as_mask(truth)
    if d.shape != t.shape:
        raise DimensionError(f"shape mismatch {d.shape} vs {t.shape}")
    n_det = int(np.count_nonzero(d))
    n_tru = int(np.count_nonzero(t))
    if n_det == 0:
        return (1.0, 1.0) if n_tru == 0 else (1.0, 0.0)
    if n_tru == 0:
        return 0.0, 1.0
    t_dil = raster.dilate(t, 3)
    d_dil = raster.dilate(d, 3)
    precision = np.count_nonzero((d > 0) & (t_dil > 0)) / n_det
    recall = np.count_nonzero((t > 0) & (d_dil > 0)) / n_tru
    return float(precision), float(recall)


# Fixed binarization thresholds for the non-adaptive operators. These are the
# harness defaults the adaptive detector is compared against; they cannot
# follow image statistics by construction.
DEFAULT_FIXED_THRESHOLDS = {"sobel": 200.0, "prewitt": 150.0, "roberts": 60.0}


def detector_outputs(img, prefilter: bool = True) -> dict[str, np.ndarray]:
    """Binary edge maps from every detector at its default parameters.

    With ``prefilter`` every operator sees the same bilateral-smoothed input,
    the noise-reduction step the pipeline applies before edge detection; the
    comparison stays level because nobody gets a different image.
    """
    a = raster.as_gray(img)
    if prefilter:
        a = raster.bilateral_filter(a, 2.0, 15.0, 3)
    outputs = {}
    for op, thresh in DEFAULT_FIXED_THRESHOLDS.items():
        outputs[op] = raster.mask_from_bool(gradient(a, op).magnitude >= thresh)
    outputs["log"] = log_edges(a)
    outputs["adaptive_canny"] = adaptive_canny(a).mask
    return outputs


def compare_edge_detectors(img, truth, prefilter: bool = True) -> dict[str, dict[str, float]]:
    """Run every detector at its defaults and score against a truth mask.

    Returns {operator: {precision, recall, f1}} for sobel, prewitt, roberts,
    log and adaptive_canny.
    """
    a = raster.as_gray(img)
    t = raster.as_mask(truth)
    if a.shape != t.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {t.shape}")
    table = {}
    for op, mask in detector_outputs(a, prefilter=prefilter).items():
        p, r = boundary_precision_recall(mask, t)
        f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        table[op] = {"precision": p, "recall": r, "f1": f1}
    return table
