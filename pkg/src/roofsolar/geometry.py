"""Polygon shape approximation and the final roof segmentation.

Contour convention: points are integer (x, y) pixel coordinates, closed
(last connects to first), clockwise. With y growing downward, clockwise here
means signed shoelace area <= 0; that sign is normalized at construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import edges as edges_mod
from . import raster
from .errors import NoRoofFoundError, ParameterError

__all__ = [
    "Contour",
    "HoughLine",
    "connected_components",
    "trace_contours",
    "hough_lines",
    "hough_accumulator",
    "cluster_lines",
    "pixel_fill",
    "polygon_fill",
    "region_fill",
    "roof_mask",
]


def shoelace_area(points: np.ndarray) -> float:
    """Signed area, positive for counter-clockwise under the y-down frame."""
    x = points[:, 0].astype(float)
    y = points[:, 1].astype(float)
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class Contour:
    points: np.ndarray  # (n, 2) int, columns (x, y), closed implicitly
    area: int  # pixels enclosed by the polygon, boundary included

    @property
    def n_points(self) -> int:
        return len(self.points)

    @classmethod
    def make(cls, points) -> "Contour":
        pts = np.asarray(points, dtype=int)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise ParameterError(f"contour needs >= 3 (x, y) points, got shape {pts.shape}")
        # drop consecutive duplicates, including a repeated closing point
        keep = np.any(pts != np.roll(pts, 1, axis=0), axis=1)
        pts = pts[keep] if keep.any() else pts[:1]
        if len(pts) < 3:
            raise ParameterError("contour degenerates to fewer than 3 distinct points")
        if shoelace_area(pts) > 0:
            pts = pts[::-1].copy()
        hi = pts.max(axis=0)
        filled = polygon_fill(pts, (int(hi[1]) + 2, int(hi[0]) + 2))
        return cls(points=pts, area=int(np.count_nonzero(filled)))


@dataclass(frozen=True)
class HoughLine:
    rho: float  # signed distance from origin, pixels
    theta: float  # normal angle, radians in [0, pi)
    votes: int


# ---------------------------------------------------------------------------
# connected components and boundary tracing

_N8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
_N4 = [(-1, 0), (0, -1), (0, 1), (1, 0)]


def connected_components(mask, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Connected-component labeling of a binary mask. Labels start at 1."""
    if connectivity not in (4, 8):
        raise ParameterError(f"connectivity must be 4 or 8, got {connectivity}")
    m = raster.as_mask(mask) > 0
    h, w = m.shape
    labels = np.zeros((h, w), dtype=np.int32)
    offsets = np.array(_N8 if connectivity == 8 else _N4)
    next_label = 0
    for y0, x0 in np.argwhere(m):
        if labels[y0, x0]:
            continue
        next_label += 1
        labels[y0, x0] = next_label
        frontier = np.array([[y0, x0]])
        while frontier.size:
            cand = (frontier[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
            ok = (
                (cand[:, 0] >= 0) & (cand[:, 0] < h)
                & (cand[:, 1] >= 0) & (cand[:, 1] < w)
            )
            cand = cand[ok]
            flat = np.unique(cand[:, 0] * w + cand[:, 1])
            ys, xs = flat // w, flat % w
            new = m[ys, xs] & (labels[ys, xs] == 0)
            labels[ys[new], xs[new]] = next_label
            frontier = np.column_stack([ys[new], xs[new]])
    return labels, next_label


# Moore neighborhood in clockwise order on screen (x right, y down),
# starting east: E, SE, S, SW, W, NW, N, NE.
_MOORE = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def _moore_trace(m: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Trace the outer boundary of the component containing ``start``.

    ``start`` must be the component's first pixel in row-major order, so its
    west neighbor is background. Stops when the start pixel is re-entered
    from the initial backtrack direction (Jacob's criterion).
    """
    h, w = m.shape

    def fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and m[y, x]

    sx, sy = start
    boundary = [(sx, sy)]
    # backtrack starts at the west neighbor (known background)
    prev_dir = _MOORE.index((-1, 0))
    cx, cy = sx, sy
    second: tuple[int, int] | None = None
    max_steps = 4 * int(m.sum()) + 8
    while len(boundary) <= max_steps:
        found = -1
        for i in range(1, 9):
            d = (prev_dir + i) % 8
            dx, dy = _MOORE[d]
            if fg(cx + dx, cy + dy):
                found = d
                break
        if found < 0:
            break  # isolated pixel
        dx, dy = _MOORE[found]
        nx, ny = cx + dx, cy + dy
        if second is None:
            second = (nx, ny)
        elif (cx, cy) == (sx, sy) and (nx, ny) == second:
            boundary.pop()  # drop the start duplicate appended on re-entry
            break
        boundary.append((nx, ny))
        cx, cy = nx, ny
        # new backtrack: the neighbor we examined just before the hit
        prev_dir = (found + 5) % 8
    return boundary


def trace_contours(mask, min_area: int = 100, min_points: int = 12) -> list["Contour"]:
    """Moore boundary tracing of every 8-connected foreground component.

    Contours whose enclosed pixel area or boundary point count falls below
    the thresholds are dropped. Returned in decreasing area order.
    """
    m = raster.as_mask(mask) > 0
    labels, n = connected_components(raster.mask_from_bool(m))
    out = []
    for lab in range(1, n + 1):
        comp = labels == lab
        ys, xs = np.nonzero(comp)
        start = (int(xs[0]), int(ys[0]))  # argwhere order is row-major
        boundary = _moore_trace(comp, start)
        if len(boundary) < max(3, min_points):
            continue
        contour = Contour.make(boundary)
        if contour.area < min_area:
            continue
        out.append(contour)
    out.sort(key=lambda c: -c.area)
    return out


# ---------------------------------------------------------------------------
# Hough transform

def hough_accumulator(
    edge_mask, rho_res: float = 1.0, theta_res_deg: float = 1.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rho, theta) vote accumulator over all edge pixels.

    Bins: theta = k * theta_res in [0, 180) degrees, rho quantized to
    round((x cos t + y sin t + D) / rho_res) with D the image diagonal.
    Returns (accumulator, rho_values, theta_values_rad).
    """
    m = _edge_array(edge_mask)
    h, w = m.shape
    diag = math.hypot(h - 1, w - 1)
    n_theta = int(round(180.0 / theta_res_deg))
    thetas = np.deg2rad(np.arange(n_theta) * theta_res_deg)
    n_rho = int(math.floor(2.0 * diag / rho_res)) + 1
    rhos = np.arange(n_rho) * rho_res - diag
    acc = np.zeros((n_rho, n_theta), dtype=np.int64)
    ys, xs = np.nonzero(m)
    if len(ys) == 0:
        return acc, rhos, thetas
    cos = np.cos(thetas)
    sin = np.sin(thetas)
    r = xs[:, None] * cos[None, :] + ys[:, None] * sin[None, :]
    idx = np.rint((r + diag) / rho_res).astype(np.intp)
    np.clip(idx, 0, n_rho - 1, out=idx)
    for j in range(n_theta):
        acc[:, j] = np.bincount(idx[:, j], minlength=n_rho)
    return acc, rhos, thetas


def _edge_array(edge_mask) -> np.ndarray:
    if isinstance(edge_mask, edges_mod.EdgeMap):
        return raster.as_mask(edge_mask.mask)
    return raster.as_mask(edge_mask)


def hough_lines(
    edge_mask,
    rho_res: float = 1.0,
    theta_res_deg: float = 1.0,
    votes_min: int = 20,
) -> list[HoughLine]:
    """Peaks of the Hough accumulator, sorted by votes descending.

    A peak is a bin at least as large as its 8 accumulator neighbors and
    holding >= votes_min votes.
    """
    acc, rhos, thetas = hough_accumulator(edge_mask, rho_res, theta_res_deg)
    if acc.max() == 0:
        return []
    p = np.pad(acc, 1, mode="constant")
    win = np.lib.stride_tricks.sliding_window_view(p, (3, 3))
    is_peak = (acc >= votes_min) & (acc == win.max(axis=(2, 3)))
    out = [
        HoughLine(rho=float(rhos[i]), theta=float(thetas[j]), votes=int(acc[i, j]))
        for i, j in np.argwhere(is_peak)
    ]
    out.sort(key=lambda l: (-l.votes, l.rho, l.theta))
    return out


# ---------------------------------------------------------------------------
# K-means line reduction

def _embed(lines: list[HoughLine], rho_scale: float) -> np.ndarray:
    """Feature (rho/rho_max, cos 2theta, sin 2theta); angle doubling makes
    theta = 0 and theta -> pi adjacent."""
    return np.array(
        [[l.rho / rho_scale, math.cos(2 * l.theta), math.sin(2 * l.theta)] for l in lines]
    )


def _merge_wrap_twins(
    lines: list[HoughLine], theta_tol: float = math.radians(3.0), rho_tol: float = 3.0
) -> list[HoughLine]:
    """Collapse accumulator duplicates of one physical line.

    A line near theta = 0 leaks votes into bins at theta close to pi with
    the sign of rho flipped; (rho, theta) and (-rho, theta +- pi) are the
    same line. Twins are merged into the higher-vote form, votes added and
    rho/theta vote-averaged through the foot-point projection.
    """
    pool = sorted(lines, key=lambda l: (-l.votes, l.rho, l.theta))
    used = [False] * len(pool)
    merged: list[HoughLine] = []
    for i, a in enumerate(pool):
        if used[i]:
            continue
        group = [a]
        used[i] = True
        for j in range(i + 1, len(pool)):
            b = pool[j]
            if used[j]:
                continue
            if abs(abs(a.theta - b.theta) - math.pi) <= theta_tol and abs(a.rho + b.rho) <= rho_tol:
                group.append(b)
                used[j] = True
        if len(group) == 1:
            merged.append(a)
            continue
        w = np.array([float(g.votes) for g in group])
        ang = math.atan2(
            sum(wi * math.sin(2 * g.theta) for wi, g in zip(w, group)),
            sum(wi * math.cos(2 * g.theta) for wi, g in zip(w, group)),
        )
        theta = (ang / 2.0) % math.pi
        rho = float(
            sum(wi * g.rho * math.cos(g.theta - theta) for wi, g in zip(w, group)) / w.sum()
        )
        merged.append(HoughLine(rho=rho, theta=theta, votes=int(w.sum())))
    merged.sort(key=lambda l: (-l.votes, l.rho, l.theta))
    return merged


def cluster_lines(lines: list[HoughLine], k: int = 4, max_iter: int = 100) -> list[HoughLine]:
    """Reduce Hough peaks to k representative lines by vote-weighted K-means.

    Accumulator wrap twins are merged first. Deterministic: initialized from
    the k highest-vote lines. If fewer than k lines are supplied, k is
    reduced to the input size.
    """
    if not lines:
        return []
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    lines = _merge_wrap_twins(lines)
    if k > len(lines):
        warnings.warn(f"only {len(lines)} distinct lines available, reducing k from {k}")
        k = len(lines)
    rho_scale = max(max(abs(l.rho) for l in lines), 1e-9)
    feats = _embed(lines, rho_scale)
    weights = np.array([float(l.votes) for l in lines])
    order = sorted(range(len(lines)), key=lambda i: (-lines[i].votes, i))
    centroids = feats[order[:k]].copy()
    assign = np.zeros(len(lines), dtype=int)
    for _ in range(max_iter):
        d = ((feats[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = d.argmin(axis=1)
        for c in range(k):
            sel = new_assign == c
            if sel.any():
                wsum = weights[sel].sum()
                centroids[c] = (feats[sel] * weights[sel, None]).sum(axis=0) / wsum
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    out = []
    thetas = np.array([l.theta for l in lines])
    rhos = np.array([l.rho for l in lines])
    for c in range(k):
        sel = assign == c
        if not sel.any():
            continue
        wsum = weights[sel].sum()
        ang = math.atan2(
            (feats[sel, 2] * weights[sel]).sum(), (feats[sel, 1] * weights[sel]).sum()
        )
        theta = (ang / 2.0) % math.pi
        # a line appears as (rho, theta) or (-rho, theta +- pi); projecting
        # each member's foot point onto the representative normal (the
        # cos(theta_i - theta) factor) averages both forms consistently
        proj = rhos[sel] * np.cos(thetas[sel] - theta)
        rho = float((proj * weights[sel]).sum() / wsum)
        out.append(HoughLine(rho=rho, theta=theta, votes=int(weights[sel].sum())))
    out.sort(key=lambda l: -l.votes)
    return out


# ---------------------------------------------------------------------------
# polygon filling

def _rasterize_segment(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer pixels along a segment (Bresenham)."""
    pts = []
    dx = abs(x1 - x0)
    dy = abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx - dy
    x, y = x0, y0
    while True:
        pts.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy
    return pts


def polygon_fill(points, shape: tuple[int, int]) -> np.ndarray:
    """Scanline fill of a closed polygon, boundary pixels included.

    Interior comes from even-odd scanline pairing; the polygon edges are
    rasterized on top so pixels on the outline are always part of the fill.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise ParameterError("polygon fill needs >= 3 points")
    h, w = shape
    out = np.zeros((h, w), dtype=bool)
    n = len(pts)
    x1 = pts[:, 0]
    y1 = pts[:, 1]
    x2 = np.roll(x1, -1)
    y2 = np.roll(y1, -1)
    nonflat = y1 != y2
    y_lo = max(0, int(math.ceil(y1.min())))
    y_hi = min(h - 1, int(math.floor(y1.max())))
    for y in range(y_lo, y_hi + 1):
        hit = nonflat & (((y1 <= y) & (y < y2)) | ((y2 <= y) & (y < y1)))
        if not hit.any():
            continue
        crossings = np.sort(
            x1[hit] + (y - y1[hit]) * (x2[hit] - x1[hit]) / (y2[hit] - y1[hit])
        )
        for a, b in zip(crossings[::2], crossings[1::2]):
            # strict interior: centers with a < x < b
            lo = max(0, int(math.floor(a)) + 1)
            hi_x = min(w - 1, int(math.ceil(b)) - 1)
            if hi_x >= lo:
                out[y, lo : hi_x + 1] = True
    ipts = np.rint(pts).astype(int)
    steps = np.abs(np.diff(ipts, axis=0, append=ipts[:1])).max(axis=1)
    if (steps <= 1).all():
        # traced contours are pixel-adjacent: the points are the outline
        ys_c = np.clip(ipts[:, 1], 0, h - 1)
        xs_c = np.clip(ipts[:, 0], 0, w - 1)
        inb = (ipts[:, 0] >= 0) & (ipts[:, 0] < w) & (ipts[:, 1] >= 0) & (ipts[:, 1] < h)
        out[ys_c[inb], xs_c[inb]] = True
    else:
        for i in range(n):
            for x, y in _rasterize_segment(*ipts[i], *ipts[(i + 1) % n]):
                if 0 <= y < h and 0 <= x < w:
                    out[y, x] = True
    return raster.mask_from_bool(out)


def pixel_fill(contour: Contour, shape: tuple[int, int]) -> np.ndarray:
    """Fill the contour interior, then dilate once to take in the pixels
    surrounding the outline."""
    pts = np.asarray(contour.points, dtype=float)
    if len(pts) < 3:
        raise ParameterError("contour must have >= 3 points")
    if abs(shoelace_area(pts)) < 0.5:
        raise ParameterError("degenerate (collinear) contour cannot be filled")
    return raster.dilate(polygon_fill(pts, shape), 3)


# ---------------------------------------------------------------------------
# region-based filling

def region_fill(img, lines: list[HoughLine], t: float) -> np.ndarray:
    """Partition the image by the k lines' side classification; cells whose
    mean intensity exceeds t become roof (255)."""
    if len(lines) < 2:
        raise ParameterError(f"region fill needs >= 2 lines, got {len(lines)}")
    a = raster.as_gray(img)
    h, w = a.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    cell_id = np.zeros((h, w), dtype=np.int64)
    for i, line in enumerate(lines):
        side = (xs * math.cos(line.theta) + ys * math.sin(line.theta) - line.rho) >= 0
        cell_id |= side.astype(np.int64) << i
    _, inverse = np.unique(cell_id.ravel(), return_inverse=True)
    sums = np.bincount(inverse, weights=a.ravel())
    counts = np.bincount(inverse)
    means = sums / counts
    roof_cells = means > t
    return raster.mask_from_bool(roof_cells[inverse].reshape(h, w))


# ---------------------------------------------------------------------------
# the final segmentation: boundary contour minus canny obstacles

def _largest_component(mask: np.ndarray) -> np.ndarray:
    labels, n = connected_components(mask)
    if n == 0:
        return np.zeros_like(mask)
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    return raster.mask_from_bool(labels == counts.argmax())


def roof_mask(
    img,
    bilateral_sigma_spatial: float = 2.0,
    bilateral_sigma_range: float = 15.0,
    bilateral_radius: int = 3,
    obstacle_canny_k: float = -1.25,
    contour_min_area: int = 100,
    contour_min_points: int = 12,
    edge_min_area: int = 30,
    edge_min_points: int = 12,
    obstacle_max_frac: float = 0.5,
    compactness_max: float = 200.0,
    max_frame_frac: float = 0.98,
) -> np.ndarray:
    """Usable-roof segmentation combining two feature routes.

    Route (a): bilateral smoothing, Otsu threshold, contour tracing; the
    largest plausible contour filled = roof boundary. Route (b): adaptive
    Canny on the smoothed image, closed and traced; small closed contours
    filled = obstacles. Output is (a) minus (b), closed once, largest
    component kept. Candidates are rejected when their outline is wildly
    non-compact (points^2 / area > compactness_max, which kills percolating
    noise blobs) or when they swallow nearly the whole frame.

    The obstacle pass runs the adaptive detector at ``obstacle_canny_k``,
    more permissive than the 0.33 default: obstacle rims sit on the roof
    plateau and are much weaker than the roof/background outline, so at the
    default sensitivity they never seed hysteresis.
    """
    a = raster.as_gray(img)
    h, w = a.shape
    smoothed = raster.bilateral_filter(
        a, bilateral_sigma_spatial, bilateral_sigma_range, bilateral_radius
    )
    t = raster.otsu_threshold(smoothed)
    hist = raster.histogram(smoothed)
    if np.count_nonzero(hist) < 2:
        raise NoRoofFoundError("image carries a single intensity, nothing to segment")
    binary = raster.mask_from_bool(smoothed > t)
    candidates = trace_contours(binary, min_area=contour_min_area, min_points=contour_min_points)
    boundary = None
    for c in candidates:  # sorted by area descending
        if c.n_points ** 2 > compactness_max * c.area:
            continue
        if c.area > max_frame_frac * h * w:
            continue
        boundary = c
        break
    if boundary is None:
        raise NoRoofFoundError("no plausible roof contour survived the thresholds")
    boundary_fill = pixel_fill(boundary, (h, w))

    edge_map = edges_mod.adaptive_canny(smoothed, k=obstacle_canny_k)
    linked = raster.morphology(edge_map.mask, "close", 3)
    obstacle_fill = np.zeros((h, w), dtype=bool)
    for c in trace_contours(linked, min_area=edge_min_area, min_points=edge_min_points):
        if c.area > obstacle_max_frac * boundary.area:
            continue  # the roof outline itself, not an obstacle
        obstacle_fill |= pixel_fill(c, (h, w)) > 0

    usable = (boundary_fill > 0) & ~obstacle_fill
    usable = raster.morphology(raster.mask_from_bool(usable), "close", 3)
    usable = _largest_component(usable)
    if not usable.any():
        raise NoRoofFoundError("usable area vanished after obstacle subtraction")
    return usable
