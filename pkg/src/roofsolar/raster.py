"""Core raster types and low-level kernels.

Conventions used by every downstream module:

* A grayscale image is a 2-D float64 array with intensities in [0, 255].
  Intermediate results stay real-valued; quantization to 8 bit happens only
  at I/O boundaries so rounding does not cascade through the pipeline.
* A mask is a 2-D uint8 array holding only the values 0 and 255.
* Border policy is edge replication everywhere.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, ParameterError

__all__ = [
    "as_gray",
    "as_mask",
    "mask_from_bool",
    "to_grayscale",
    "convolve",
    "gaussian_kernel",
    "gaussian_blur",
    "bilateral_filter",
    "morphology",
    "erode",
    "dilate",
    "distance_transform",
    "histogram",
    "mean_variance",
    "otsu_threshold",
    "read_gray",
    "read_rgb",
    "write_gray",
    "write_mask",
]


# ---------------------------------------------------------------------------
# type helpers

def as_gray(img) -> np.ndarray:
    """Validate and return a 2-D float64 grayscale image."""
    a = np.asarray(img, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"expected non-empty 2-D image, got shape {a.shape}")
    return a


def as_mask(mask) -> np.ndarray:
    """Validate and return a binary uint8 mask (values 0/255 only)."""
    a = np.asarray(mask)
    if a.ndim != 2 or a.size == 0:
        raise DimensionError(f"expected non-empty 2-D mask, got shape {a.shape}")
    a = a.astype(np.uint8, copy=False)
    bad = np.setdiff1d(np.unique(a), [0, 255])
    if bad.size:
        raise ParameterError(f"mask contains non-binary values {bad.tolist()}")
    return a


def mask_from_bool(b) -> np.ndarray:
    return np.where(np.asarray(b, dtype=bool), 255, 0).astype(np.uint8)


# ---------------------------------------------------------------------------
# conversion and convolution

def to_grayscale(rgb) -> np.ndarray:
    """ITU-R 601 luma conversion: 0.299 R + 0.587 G + 0.114 B."""
    a = np.asarray(rgb, dtype=float)
    if a.ndim != 3 or a.shape[2] < 3 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"expected non-empty HxWx3 image, got shape {a.shape}")
    return 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]


def convolve(img, kernel) -> np.ndarray:
    """2-D convolution with edge-replicated borders.

    Output has the input's dimensions and is not clipped; downstream stages
    clip when materializing to [0, 255].
    """
    a = as_gray(img)
    k = np.asarray(kernel, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ParameterError(f"kernel must be square, got shape {k.shape}")
    if k.shape[0] % 2 == 0:
        raise ParameterError(f"kernel size must be odd, got {k.shape[0]}")
    if not np.all(np.isfinite(k)):
        raise ParameterError("kernel weights must be finite")
    r = k.shape[0] // 2
    if r == 0:
        return a * k[0, 0]
    padded = np.pad(a, r, mode="edge")
    windows = sliding_window_view(padded, k.shape)
    # true convolution: flip the kernel
    return np.einsum("ijkl,kl->ij", windows, k[::-1, ::-1])


def _convolve_1d(a: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    r = len(w) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    p = np.pad(a, pad, mode="edge")
    win = sliding_window_view(p, len(w), axis=axis)
    return np.tensordot(win, w[::-1], axes=([2], [0]))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian, size 2*ceil(3*sigma)+1, weights summing to 1."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    r = int(np.ceil(3.0 * sigma))
    xs = np.arange(-r, r + 1, dtype=float)
    g = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Gaussian smoothing via two separable 1-D passes (same weights as
    :func:`gaussian_kernel`, much cheaper on large images)."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    a = as_gray(img)
    r = int(np.ceil(3.0 * sigma))
    xs = np.arange(-r, r + 1, dtype=float)
    g = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return _convolve_1d(_convolve_1d(a, g, axis=0), g, axis=1)


# ---------------------------------------------------------------------------
# bilateral filter

def bilateral_filter(img, sigma_spatial: float, sigma_range: float, radius: int) -> np.ndarray:
    """Edge-preserving smoothing.

    Each pixel becomes the mean of its (2r+1)^2 window weighted by
    exp(-d^2 / 2*sigma_spatial^2) * exp(-di^2 / 2*sigma_range^2) where d is
    the spatial offset and di the intensity difference to the center pixel.
    """
    if not (sigma_spatial > 0 and sigma_range > 0):
        raise ParameterError("bilateral sigmas must be > 0")
    if radius < 1:
        raise ParameterError(f"radius must be >= 1, got {radius}")
    a = as_gray(img)
    h, w = a.shape
    padded = np.pad(a, radius, mode="edge")
    num = np.zeros_like(a)
    den = np.zeros_like(a)
    inv2ss = 1.0 / (2.0 * sigma_spatial ** 2)
    inv2sr = 1.0 / (2.0 * sigma_range ** 2)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            shifted = padded[radius + dy : radius + dy + h, radius + dx : radius + dx + w]
            ws = np.exp(-(dy * dy + dx * dx) * inv2ss)
            wr = np.exp(-((shifted - a) ** 2) * inv2sr)
            weight = ws * wr
            num += weight * shifted
            den += weight
    return num / den


# ---------------------------------------------------------------------------
# binary morphology

def _window_extreme(mask01: np.ndarray, size: int, take_max: bool) -> np.ndarray:
    r = size // 2
    p = np.pad(mask01, r, mode="edge")
    win = sliding_window_view(p, (size, size))
    return win.max(axis=(2, 3)) if take_max else win.min(axis=(2, 3))


def erode(mask, size: int = 3) -> np.ndarray:
    if size % 2 == 0 or size < 1:
        raise ParameterError(f"structuring element size must be odd >= 1, got {size}")
    return _window_extreme(as_mask(mask), size, take_max=False)


def dilate(mask, size: int = 3) -> np.ndarray:
    if size % 2 == 0 or size < 1:
        raise ParameterError(f"structuring element size must be odd >= 1, got {size}")
    return _window_extreme(as_mask(mask), size, take_max=True)


def morphology(mask, op: str, size: int = 3) -> np.ndarray:
    """Binary morphology with a square structuring element.

    open = erode then dilate, close = dilate then erode.
    """
    if op == "erode":
        return erode(mask, size)
    if op == "dilate":
        return dilate(mask, size)
    if op == "open":
        return dilate(erode(mask, size), size)
    if op == "close":
        return erode(dilate(mask, size), size)
    raise ParameterError(f"unknown morphology op {op!r}")


# ---------------------------------------------------------------------------
# distance transform

_INF = np.float64(np.inf)


def _chamfer_pass(d: np.ndarray, reverse: bool) -> None:
    """One pass of the 3-4 chamfer: propagate from the previous row, then
    sweep along the row (running minimum of d[j] + 3*(i-j))."""
    h, w = d.shape
    rows = range(h - 1, -1, -1) if reverse else range(h)
    col = np.arange(w, dtype=float) * 3.0
    first = True
    for y in rows:
        if not first:
            prev = d[y + 1] if reverse else d[y - 1]
            np.minimum(d[y], prev + 3.0, out=d[y])
            np.minimum(d[y][1:], prev[:-1] + 4.0, out=d[y][1:])
            np.minimum(d[y][:-1], prev[1:] + 4.0, out=d[y][:-1])
        first = False
        row = d[y]
        if reverse:
            t = row[::-1] - col
            np.minimum.accumulate(t, out=t)
            row[::-1] = t + col
        else:
            t = row - col
            np.minimum.accumulate(t, out=t)
            row[:] = t + col


def _edt_1d_sq(f: np.ndarray) -> np.ndarray:
    """Exact 1-D squared distance transform (lower-envelope of parabolas)."""
    n = len(f)
    d = np.empty(n)
    v = np.zeros(n, dtype=int)
    z = np.empty(n + 1)
    z[0], z[1] = -_INF, _INF
    k = 0
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = _INF
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) ** 2 + f[v[k]]
    return d


def distance_transform(mask, exact: bool = False) -> np.ndarray:
    """Per-pixel distance to the nearest 0-pixel.

    Default is a two-pass 3-4 chamfer (error within 9% of the true Euclidean
    distance); ``exact=True`` switches to the exact squared-EDT algorithm.
    A mask with no zero pixel yields +inf everywhere.
    """
    m = as_mask(mask)
    if not np.any(m == 0):
        return np.full(m.shape, _INF)
    if exact:
        fsq = np.where(m == 0, 0.0, _INF)
        # rows with no zero pixel stay +inf; the parabola code needs finites
        big = float(sum(m.shape)) ** 2 * 4.0
        fsq[np.isinf(fsq)] = big
        work = np.apply_along_axis(_edt_1d_sq, 1, fsq)
        work = np.apply_along_axis(_edt_1d_sq, 0, work)
        return np.sqrt(work)
    d = np.where(m == 0, 0.0, _INF)
    _chamfer_pass(d, reverse=False)
    _chamfer_pass(d, reverse=True)
    return d / 3.0


# ---------------------------------------------------------------------------
# statistics

def histogram(img) -> np.ndarray:
    """256-bin intensity histogram; bin b counts pixels with floor(clip(v)) == b."""
    a = as_gray(img)
    idx = np.floor(np.clip(a, 0.0, 255.0)).astype(np.intp)
    return np.bincount(idx.ravel(), minlength=256)


def mean_variance(img) -> tuple[float, float]:
    """Population mean and variance of the intensities."""
    a = as_gray(img)
    return float(a.mean()), float(a.var())


def otsu_threshold(img) -> int:
    """Threshold t in [0, 255] maximizing between-class variance of the
    histogram split into {<= t} and {> t}; ties go to the smallest t."""
    hist = histogram(img).astype(float)
    total = hist.sum()
    p = hist / total
    bins = np.arange(256, dtype=float)
    w0 = np.cumsum(p)
    mu_cum = np.cumsum(p * bins)
    mu_total = mu_cum[-1]
    w1 = 1.0 - w0
    valid = (w0 > 0) & (w1 > 0)
    sigma_b = np.zeros(256)
    sigma_b[valid] = (mu_total * w0[valid] - mu_cum[valid]) ** 2 / (w0[valid] * w1[valid])
    return int(np.argmax(sigma_b))


# ---------------------------------------------------------------------------
# I/O: PNG via Pillow, PGM accepted as a fallback input

def _read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        tokens.append(data[start:i])
    magic = tokens[0]
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P5":
        raw = np.frombuffer(data[i + 1 :], dtype=np.uint8, count=w * h)
        arr = raw.reshape(h, w).astype(float)
    elif magic == b"P2":
        vals = np.array(data[i:].split(), dtype=float)[: w * h]
        arr = vals.reshape(h, w)
    else:
        raise ParameterError(f"unsupported PNM magic {magic!r}")
    return arr * (255.0 / maxval) if maxval != 255 else arr


def read_gray(path: str) -> np.ndarray:
    """Read a PNG (or PGM) file as a grayscale image."""
    if str(path).lower().endswith((".pgm", ".pnm")):
        return _read_pgm(str(path))
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("RGB", "RGBA", "P"):
            return to_grayscale(np.asarray(im.convert("RGB"), dtype=float))
        return np.asarray(im.convert("L"), dtype=float)


def read_rgb(path: str) -> np.ndarray:
    """Read an image file as an HxWx3 uint8 array."""
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_gray(path: str, img) -> None:
    """Write a grayscale image as 8-bit PNG (values clipped and rounded)."""
    from PIL import Image

    a = np.clip(np.asarray(img, dtype=float), 0, 255)
    Image.fromarray(np.rint(a).astype(np.uint8), mode="L").save(path)


def write_mask(path: str, mask) -> None:
    """Write a mask as 8-bit PNG with values exactly 0/255."""
    from PIL import Image

    Image.fromarray(as_mask(mask), mode="L").save(path)
