"""Panel placement: pack rotated rows of solar cells into the usable mask.

Patches are rigid rows of 5, 4 or 3 cells placed greedily in raster order,
largest first. Feasibility is exact: a candidate is accepted only when every
pixel of its rotated footprint is still free roof, so no placed panel can
stick out of the building or overlap a neighbor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import raster
from .errors import ParameterError

__all__ = [
    "PanelSpec",
    "PlacedPatch",
    "PanelLayout",
    "Orientation",
    "LayoutStats",
    "ground_resolution",
    "panel_footprint_px",
    "orientation_angle",
    "footprint_offsets",
    "place_panels",
    "layout_stats",
]

EARTH_RADIUS_M = 6378137.0
_EQUATOR_RESOLUTION = 2.0 * math.pi * EARTH_RADIUS_M / 256.0  # 156543.03392 m/px at z0


@dataclass(frozen=True)
class PanelSpec:
    cell_width_m: float = 1.65
    cell_height_m: float = 0.99
    patch_shapes: tuple[int, ...] = (5, 4, 3)  # cells per rigid row, descending
    rated_watts: float = 330.0

    def validate(self) -> "PanelSpec":
        if self.cell_width_m <= 0 or self.cell_height_m <= 0:
            raise ParameterError("panel cell dimensions must be positive")
        if not self.patch_shapes:
            raise ParameterError("patch shape list must be non-empty")
        if list(self.patch_shapes) != sorted(self.patch_shapes, reverse=True):
            raise ParameterError("patch shapes must be sorted by cell count descending")
        if self.rated_watts < 0:
            raise ParameterError("rated watts must be >= 0")
        return self


@dataclass(frozen=True)
class PlacedPatch:
    anchor: tuple[int, int]  # (x, y) patch origin before rotation
    cells: int
    angle_deg: float
    footprint: np.ndarray = field(repr=False)  # (k, 2) int pixel coords (x, y)


@dataclass(frozen=True)
class PanelLayout:
    patches: tuple[PlacedPatch, ...]
    total_cells: int
    covered_px: int
    usable_px: int
    covered_m2: float
    usable_m2: float
    coverage_ratio: float
    cell_px: tuple[int, int]
    angle_deg: float
    mpp: float
    gap_px: int


@dataclass(frozen=True)
class Orientation:
    angle_deg: float
    facing: str  # "south" | "north" | "unspecified"
    tilt_deg: float


@dataclass(frozen=True)
class LayoutStats:
    usable_m2: float
    covered_m2: float
    panel_cells: int
    capacity_kw: float
    annual_kwh: float
    coverage_ratio: float


def ground_resolution(lat: float, zoom: int) -> float:
    """Web-Mercator meters per pixel at a latitude and zoom level."""
    if not abs(lat) < 85.05:
        raise ParameterError(f"latitude must satisfy |lat| < 85.05, got {lat}")
    if not 0 <= zoom <= 22:
        raise ParameterError(f"zoom must be in [0, 22], got {zoom}")
    return _EQUATOR_RESOLUTION * math.cos(math.radians(lat)) / (2 ** zoom)


def panel_footprint_px(spec: PanelSpec, mpp: float) -> tuple[int, int]:
    """Per-cell pixel footprint: dimensions rounded to nearest, floor 1 px."""
    spec.validate()
    if not mpp > 0:
        raise ParameterError(f"meters-per-pixel must be > 0, got {mpp}")
    w = max(1, int(math.floor(spec.cell_width_m / mpp + 0.5)))
    h = max(1, int(math.floor(spec.cell_height_m / mpp + 0.5)))
    return w, h


def orientation_angle(lat: float | None, azimuth_override: float | None = None) -> Orientation:
    """Image-plane row angle plus reported facing/tilt.

    Tiles are north-up, so equator-facing rows run east-west: angle 0 unless
    overridden. The hemisphere picks the reported facing; tilt-from-horizontal
    equals |lat| and does not change the 2-D footprint.
    """
    if lat is not None and not -90.0 <= lat <= 90.0:
        raise ParameterError(f"latitude must be in [-90, 90], got {lat}")
    angle = float(azimuth_override) if azimuth_override is not None else 0.0
    if lat is None:
        return Orientation(angle_deg=angle, facing="unspecified", tilt_deg=0.0)
    facing = "south" if lat >= 0 else "north"
    return Orientation(angle_deg=angle, facing=facing, tilt_deg=abs(lat))


# ---------------------------------------------------------------------------
# rotated footprint geometry

def _snapped_cos_sin(angle_deg: float) -> tuple[float, float]:
    c = math.cos(math.radians(angle_deg))
    s = math.sin(math.radians(angle_deg))
    # exact values at multiples of 90 degrees keep rotation tests bit-stable
    for v in (-1.0, 0.0, 1.0):
        if abs(c - v) < 1e-12:
            c = v
        if abs(s - v) < 1e-12:
            s = v
    return c, s


def footprint_offsets(w_px: int, h_px: int, angle_deg: float) -> np.ndarray:
    """Integer offsets (dx, dy) covered by a w x h rectangle rotated by
    ``angle_deg`` about its origin corner.

    Coverage is geometric, not resampled: an offset belongs to the footprint
    when the inverse-rotated point lands in the half-open box [0,w) x [0,h),
    so an angle-0 patch covers exactly w*h pixels.
    """
    if w_px < 1 or h_px < 1:
        raise ParameterError("footprint dimensions must be >= 1 px")
    c, s = _snapped_cos_sin(angle_deg)
    corners = np.array([(0.0, 0.0), (w_px, 0.0), (0.0, h_px), (w_px, h_px)])
    rot = np.column_stack(
        [corners[:, 0] * c - corners[:, 1] * s, corners[:, 0] * s + corners[:, 1] * c]
    )
    x_lo = int(math.floor(rot[:, 0].min())) - 1
    x_hi = int(math.ceil(rot[:, 0].max())) + 1
    y_lo = int(math.floor(rot[:, 1].min())) - 1
    y_hi = int(math.ceil(rot[:, 1].max())) + 1
    xs, ys = np.meshgrid(np.arange(x_lo, x_hi + 1), np.arange(y_lo, y_hi + 1))
    # inverse rotation of the pixel-center offsets
    lx = xs * c + ys * s
    ly = -xs * s + ys * c
    inside = (lx >= 0.0) & (lx < w_px) & (ly >= 0.0) & (ly < h_px)
    out = np.column_stack([xs[inside], ys[inside]])
    order = np.lexsort((out[:, 0], out[:, 1]))
    return out[order]


def _dilate_offsets(offsets: np.ndarray, gap_px: int) -> np.ndarray:
    if gap_px <= 0:
        return offsets
    shifts = np.array(
        [(dx, dy) for dy in range(-gap_px, gap_px + 1) for dx in range(-gap_px, gap_px + 1)]
    )
    grown = (offsets[:, None, :] + shifts[None, :, :]).reshape(-1, 2)
    return np.unique(grown, axis=0)


def place_panels(
    mask,
    spec: PanelSpec,
    mpp: float,
    angle_deg: float = 0.0,
    gap_px: int = 1,
) -> PanelLayout:
    """Greedy raster-order packing of rotated patches, largest shape first.

    For each shape, anchors are screened with a shift-sum feasibility count
    (a footprint-shaped erosion of the working mask), then re-checked against
    the live mask in raster order; acceptance stamps the footprint plus a
    ``gap_px`` clearance ring out of the working mask. Every accepted
    footprint lies entirely inside the input mask, and footprints are
    pairwise disjoint.
    """
    m = raster.as_mask(mask)
    spec.validate()
    cell_w, cell_h = panel_footprint_px(spec, mpp)
    h, w = m.shape
    work = np.ascontiguousarray(m > 0).astype(np.uint8)
    usable_px = int(work.sum())
    patches: list[PlacedPatch] = []

    for cells in spec.patch_shapes:
        offsets = footprint_offsets(cells * cell_w, cell_h, angle_deg)
        n_off = len(offsets)
        if n_off == 0 or n_off > usable_px:
            continue
        # feasibility count: how many footprint pixels are free at each anchor
        count = np.zeros((h, w), dtype=np.int32)
        for dx, dy in offsets:
            src_y = slice(max(0, dy), max(0, h + min(0, dy)))
            src_x = slice(max(0, dx), max(0, w + min(0, dx)))
            dst_y = slice(max(0, -dy), max(0, h + min(0, -dy)))
            dst_x = slice(max(0, -dx), max(0, w + min(0, -dx)))
            count[dst_y, dst_x] += work[src_y, src_x]
        candidates = np.argwhere(count == n_off)  # row-major = raster order
        if candidates.size == 0:
            continue
        off_x = offsets[:, 0]
        off_y = offsets[:, 1]
        stamp_off = _dilate_offsets(offsets, gap_px)
        for ay, ax in candidates:
            if not work[off_y + ay, off_x + ax].all():
                continue  # a previous patch ate part of this footprint
            fp = offsets + (ax, ay)
            patches.append(
                PlacedPatch(
                    anchor=(int(ax), int(ay)),
                    cells=int(cells),
                    angle_deg=float(angle_deg),
                    footprint=fp,
                )
            )
            sx = stamp_off[:, 0] + ax
            sy = stamp_off[:, 1] + ay
            ok = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
            work[sy[ok], sx[ok]] = 0

    covered_px = int(sum(len(p.footprint) for p in patches))
    total_cells = int(sum(p.cells for p in patches))
    covered_m2 = total_cells * spec.cell_width_m * spec.cell_height_m
    usable_m2 = usable_px * mpp * mpp
    ratio = covered_px / usable_px if usable_px else 0.0
    return PanelLayout(
        patches=tuple(patches),
        total_cells=total_cells,
        covered_px=covered_px,
        usable_px=usable_px,
        covered_m2=covered_m2,
        usable_m2=usable_m2,
        coverage_ratio=ratio,
        cell_px=(cell_w, cell_h),
        angle_deg=float(angle_deg),
        mpp=float(mpp),
        gap_px=int(gap_px),
    )


def layout_stats(
    layout: PanelLayout,
    mpp: float,
    spec: PanelSpec,
    insolation_hours_per_day: float = 5.0,
    performance_ratio: float = 0.75,
) -> LayoutStats:
    """Coverage and energy numbers for a layout."""
    if insolation_hours_per_day < 0 or not 0 <= performance_ratio <= 1:
        raise ParameterError("insolation must be >= 0 and performance ratio in [0, 1]")
    capacity_kw = layout.total_cells * spec.rated_watts / 1000.0
    annual_kwh = capacity_kw * insolation_hours_per_day * 365.0 * performance_ratio
    return LayoutStats(
        usable_m2=layout.usable_px * mpp * mpp,
        covered_m2=layout.total_cells * spec.cell_width_m * spec.cell_height_m,
        panel_cells=layout.total_cells,
        capacity_kw=capacity_kw,
        annual_kwh=annual_kwh,
        coverage_ratio=layout.coverage_ratio,
    )
