"""End-to-end orchestration: config, analyze, overlay rendering, reports.

A run is reproducible by construction: reports carry no timestamps or host
details, floats are canonicalized to 6 significant digits, and every number
can be re-derived from the emitted mask and layout files (see ``verify``).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import geometry, placement, raster, tiles
from .errors import DimensionError, ParameterError

__all__ = [
    "PipelineConfig",
    "SolarReport",
    "analyze",
    "render_overlay",
    "report_write",
    "report_read",
    "verify_output",
]

SCHEMA_VERSION = "1"
MASK_FILE = "mask.png"
OVERLAY_FILE = "overlay.png"
LAYOUT_FILE = "layout.json"
REPORT_FILE = "report.json"


@dataclass(frozen=True)
class PipelineConfig:
    # roof_mask route
    bilateral_sigma_spatial: float = 2.0
    bilateral_sigma_range: float = 15.0
    bilateral_radius: int = 3
    obstacle_canny_k: float = -1.25
    contour_min_area: int = 100
    contour_min_points: int = 12
    edge_min_area: int = 30
    edge_min_points: int = 12
    obstacle_max_frac: float = 0.5
    compactness_max: float = 200.0
    max_frame_frac: float = 0.98
    # edge detector
    canny_k: float = 0.33
    canny_sigma: float = 1.4
    # snake route (exposed through the segment subcommand)
    snake_alpha: float = 0.1
    snake_beta: float = 0.05
    snake_gamma: float = 1.0
    snake_iters: int = 400
    snake_points: int = 100
    gvf_mu: float = 0.2
    gvf_iters: int = 200
    # polygon approximation
    k_lines: int = 4
    hough_votes_min: int = 20
    region_threshold: float | None = None  # None = Otsu of the input
    # panels
    panel_width_m: float = 1.65
    panel_height_m: float = 0.99
    panel_watts: float = 330.0
    patch_shapes: tuple[int, ...] = (5, 4, 3)
    gap_px: int = 1
    angle_override: float | None = None
    # energy model
    insolation_hours: float = 5.0
    performance_ratio: float = 0.75
    # tiles
    zoom: int = 20
    tile_size: int = 640
    mpp_override: float | None = None  # used when analyzing a bare image

    def panel_spec(self) -> placement.PanelSpec:
        return placement.PanelSpec(
            cell_width_m=self.panel_width_m,
            cell_height_m=self.panel_height_m,
            patch_shapes=tuple(self.patch_shapes),
            rated_watts=self.panel_watts,
        )

    def to_text(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            v = getattr(self, f.name)
            if v is None:
                s = "none"
            elif isinstance(v, tuple):
                s = ",".join(str(x) for x in v)
            else:
                s = repr(v) if isinstance(v, float) else str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        values: dict = {}
        known = {f.name: f for f in fields(cls)}
        defaults = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError(f"config line {lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in known:
                raise ParameterError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _parse_config_value(key, raw, getattr(defaults, key))
        return replace(defaults, **values)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]


def _parse_config_value(key: str, raw: str, default):
    if raw.lower() == "none":
        return None
    if key == "patch_shapes":
        return tuple(int(x) for x in raw.split(",") if x.strip())
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float) or default is None:
        return float(raw)
    return raw


@dataclass(frozen=True)
class SolarReport:
    schema: str
    lat: float | None
    lng: float | None
    zoom: int | None
    provider_id: str
    config_hash: str
    method: str
    mpp: float
    angle_deg: float
    facing: str
    tilt_deg: float
    usable_area_m2: float
    covered_area_m2: float
    panel_cells: int
    panel_patches: int
    capacity_kw: float
    annual_kwh: float
    coverage_ratio: float
    mask_file: str
    overlay_file: str
    layout_file: str

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _round_sig(x: float, sig: int = 6) -> float:
    if x == 0 or not math.isfinite(x):
        return 0.0 if x == 0 else x
    return float(f"{x:.{sig}g}")


def _canonical(obj):
    if isinstance(obj, float):
        return _round_sig(obj)
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def report_write(report: SolarReport, path) -> None:
    """Canonical JSON: sorted keys, floats at 6 significant digits."""
    payload = _canonical(report.to_dict())
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def report_read(path) -> dict:
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# overlay rendering

def render_overlay(base_rgb, mask, layout: placement.PanelLayout) -> np.ndarray:
    """Roof boundary in green, panel footprints in blue at 60% opacity with
    solid blue outlines."""
    base = np.asarray(base_rgb, dtype=np.uint8)
    m = raster.as_mask(mask)
    if base.ndim != 3 or base.shape[:2] != m.shape:
        raise DimensionError(f"overlay shape mismatch: {base.shape} vs {m.shape}")
    out = base.astype(float).copy()
    boundary = (m > 0) & ~(raster.erode(m, 3) > 0)
    out[boundary] = (0.0, 255.0, 0.0)
    h, w = m.shape
    blue = np.array([0.0, 0.0, 255.0])
    fp_grid = np.zeros((h, w), dtype=bool)
    for patch in layout.patches:
        xs, ys = patch.footprint[:, 0], patch.footprint[:, 1]
        out[ys, xs] = 0.4 * out[ys, xs] + 0.6 * blue
        fp_grid[ys, xs] = True
    if layout.patches:
        outline = fp_grid & ~(raster.erode(raster.mask_from_bool(fp_grid), 3) > 0)
        out[outline] = blue
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# the full pipeline

def _roof_mask_from_config(gray: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    return geometry.roof_mask(
        gray,
        bilateral_sigma_spatial=cfg.bilateral_sigma_spatial,
        bilateral_sigma_range=cfg.bilateral_sigma_range,
        bilateral_radius=cfg.bilateral_radius,
        obstacle_canny_k=cfg.obstacle_canny_k,
        contour_min_area=cfg.contour_min_area,
        contour_min_points=cfg.contour_min_points,
        edge_min_area=cfg.edge_min_area,
        edge_min_points=cfg.edge_min_points,
        obstacle_max_frac=cfg.obstacle_max_frac,
        compactness_max=cfg.compactness_max,
        max_frame_frac=cfg.max_frame_frac,
    )


def analyze(
    cfg: PipelineConfig,
    image=None,
    image_path=None,
    latlng: tuple[float, float] | None = None,
    provider=None,
    cache: tiles.TileCache | None = None,
    out_dir=None,
) -> SolarReport:
    """Run the full pipeline on an image file, array, or coordinates.

    Coordinates require a tile provider. When ``out_dir`` is given the mask,
    overlay, layout and report files are written there.
    """
    lat = lng = None
    provider_id = "local-image"
    if latlng is not None:
        if provider is None:
            raise ParameterError("coordinate input requires a tile provider")
        lat, lng = float(latlng[0]), float(latlng[1])
        req = tiles.TileRequest(lat=lat, lng=lng, zoom=cfg.zoom, size=cfg.tile_size)
        rgb = tiles.fetch(req, provider, cache)
        provider_id = type(provider).__name__
    elif image is not None:
        arr = np.asarray(image)
        rgb = (
            np.clip(np.rint(arr), 0, 255).astype(np.uint8)
            if arr.ndim == 3
            else np.repeat(
                np.clip(np.rint(arr), 0, 255).astype(np.uint8)[..., None], 3, axis=2
            )
        )
    elif image_path is not None:
        if str(image_path).lower().endswith((".pgm", ".pnm")):
            g = raster.read_gray(image_path)
            rgb = np.repeat(np.clip(np.rint(g), 0, 255).astype(np.uint8)[..., None], 3, axis=2)
        else:
            rgb = raster.read_rgb(image_path)
    else:
        raise ParameterError("analyze needs an image, an image path, or coordinates")

    gray = raster.to_grayscale(rgb)
    mask = _roof_mask_from_config(gray, cfg)

    if lat is not None:
        mpp = placement.ground_resolution(lat, cfg.zoom)
    elif cfg.mpp_override is not None:
        mpp = cfg.mpp_override
    else:
        mpp = placement.ground_resolution(0.0, cfg.zoom)

    orient = placement.orientation_angle(lat, cfg.angle_override)
    spec = cfg.panel_spec()
    layout = placement.place_panels(mask, spec, mpp, orient.angle_deg, cfg.gap_px)
    stats = placement.layout_stats(
        layout, mpp, spec, cfg.insolation_hours, cfg.performance_ratio
    )

    report = SolarReport(
        schema=SCHEMA_VERSION,
        lat=lat,
        lng=lng,
        zoom=cfg.zoom if lat is not None else None,
        provider_id=provider_id,
        config_hash=cfg.config_hash(),
        method="boundary-contour-minus-canny-obstacles",
        mpp=mpp,
        angle_deg=orient.angle_deg,
        facing=orient.facing,
        tilt_deg=orient.tilt_deg,
        usable_area_m2=stats.usable_m2,
        covered_area_m2=stats.covered_m2,
        panel_cells=stats.panel_cells,
        panel_patches=len(layout.patches),
        capacity_kw=stats.capacity_kw,
        annual_kwh=stats.annual_kwh,
        coverage_ratio=stats.coverage_ratio,
        mask_file=MASK_FILE,
        overlay_file=OVERLAY_FILE,
        layout_file=LAYOUT_FILE,
    )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        raster.write_mask(out / MASK_FILE, mask)
        overlay = render_overlay(rgb, mask, layout)
        from PIL import Image

        Image.fromarray(overlay, mode="RGB").save(out / OVERLAY_FILE)
        _layout_write(layout, spec, cfg, out / LAYOUT_FILE)
        report_write(report, out / REPORT_FILE)
    return report


def _layout_write(
    layout: placement.PanelLayout, spec: placement.PanelSpec, cfg: PipelineConfig, path
) -> None:
    payload = {
        "cell_px": list(layout.cell_px),
        "cell_m": [spec.cell_width_m, spec.cell_height_m],
        "rated_watts": spec.rated_watts,
        "angle_deg": layout.angle_deg,
        "gap_px": layout.gap_px,
        "mpp": layout.mpp,
        "insolation_hours": cfg.insolation_hours,
        "performance_ratio": cfg.performance_ratio,
        "usable_px": layout.usable_px,
        "covered_px": layout.covered_px,
        "total_cells": layout.total_cells,
        "patches": [
            {"anchor": list(p.anchor), "cells": p.cells} for p in layout.patches
        ],
    }
    Path(path).write_text(json.dumps(_canonical(payload), sort_keys=True, indent=2) + "\n")


def verify_output(out_dir) -> list[str]:
    """Audit an analyze() output directory.

    Recomputes every report number from the emitted mask and layout files
    and returns a list of discrepancies (empty = verified).
    """
    out = Path(out_dir)
    problems: list[str] = []
    report = report_read(out / REPORT_FILE)
    layout = json.loads((out / LAYOUT_FILE).read_text())
    mask = raster.read_gray(out / MASK_FILE).astype(np.uint8)

    h, w = mask.shape
    cell_w, cell_h = layout["cell_px"]
    angle = layout["angle_deg"]
    seen = np.zeros((h, w), dtype=bool)
    covered = 0
    cells = 0
    for p in layout["patches"]:
        off = placement.footprint_offsets(p["cells"] * cell_w, cell_h, angle)
        xs = off[:, 0] + p["anchor"][0]
        ys = off[:, 1] + p["anchor"][1]
        if not ((xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)).all():
            problems.append(f"patch at {p['anchor']} leaves the image")
            continue
        if not (mask[ys, xs] == 255).all():
            problems.append(f"patch at {p['anchor']} has pixels off the roof mask")
        if seen[ys, xs].any():
            problems.append(f"patch at {p['anchor']} overlaps another patch")
        seen[ys, xs] = True
        covered += len(off)
        cells += p["cells"]

    usable = int(np.count_nonzero(mask == 255))

    def check(name: str, got, want, tol=1e-6):
        if isinstance(want, float):
            if abs(got - want) > tol * max(1.0, abs(want)):
                problems.append(f"{name}: report {got} != recomputed {want}")
        elif got != want:
            problems.append(f"{name}: report {got} != recomputed {want}")

    check("usable_px", layout["usable_px"], usable)
    check("covered_px", layout["covered_px"], covered)
    check("total_cells", layout["total_cells"], cells)
    check("panel_cells", report["panel_cells"], cells)
    mpp = layout["mpp"]
    check("usable_area_m2", report["usable_area_m2"], _round_sig(usable * mpp * mpp), 1e-5)
    cw_m, ch_m = layout["cell_m"]
    check("covered_area_m2", report["covered_area_m2"], _round_sig(cells * cw_m * ch_m), 1e-5)
    cap = cells * layout["rated_watts"] / 1000.0
    check("capacity_kw", report["capacity_kw"], _round_sig(cap), 1e-5)
    annual = cap * layout["insolation_hours"] * 365.0 * layout["performance_ratio"]
    check("annual_kwh", report["annual_kwh"], _round_sig(annual), 1e-5)
    ratio = covered / usable if usable else 0.0
    check("coverage_ratio", report["coverage_ratio"], _round_sig(ratio), 1e-5)
    check("schema", report["schema"], SCHEMA_VERSION)
    return problems
