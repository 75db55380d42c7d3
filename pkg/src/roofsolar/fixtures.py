"""Synthetic rooftop scenes with exact ground truth.

Each scene is a convex 4-6-gon roof over a textured background, optionally
with rectangular or disc obstacles strictly inside the roof. The usable-area
mask is rasterized from the same geometry that paints the image, so every
IoU/precision claim in the test suite is measured against exact truth.

Rasterization here is an independent half-plane test for convex polygons,
deliberately not sharing code with the scanline fill in ``geometry``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import raster
from .errors import ParameterError

__all__ = ["Obstacle", "RoofScene", "generate", "corpus", "DIFFICULTIES"]

DIFFICULTIES = ("clean", "noisy", "low_contrast")

# rendering constants
_RENDER_BLUR_SIGMA = 0.7  # softens edges the way real imagery does
_NOISE_SIGMA = {"clean": 2.0, "noisy": 12.0, "low_contrast": 2.0}
_LOW_CONTRAST_GAP = 25.0


@dataclass(frozen=True)
class Obstacle:
    kind: str  # "rect" | "disc"
    cx: float
    cy: float
    w: float  # rect width / disc diameter
    h: float
    intensity: float


@dataclass(frozen=True)
class RoofScene:
    seed: int
    difficulty: str
    size: int
    polygon: np.ndarray  # (k, 2) float vertices, (x, y)
    obstacles: tuple[Obstacle, ...]
    roof_intensity: float
    background_intensity: float
    image: np.ndarray = field(repr=False)
    truth: np.ndarray = field(repr=False)  # usable-area mask (roof minus obstacles)
    roof_mask_full: np.ndarray = field(repr=False)  # roof polygon without holes


def convex_polygon_mask(vertices: np.ndarray, size: int) -> np.ndarray:
    """Rasterize a convex polygon: pixel centers on or inside every edge."""
    v = np.asarray(vertices, dtype=float)
    k = len(v)
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    # orientation sign so "inside" is consistent for either winding
    area2 = 0.0
    for i in range(k):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % k]
        area2 += x1 * y2 - x2 * y1
    sgn = 1.0 if area2 > 0 else -1.0
    inside = np.ones((size, size), dtype=bool)
    for i in range(k):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % k]
        cross = (x2 - x1) * (ys - y1) - (y2 - y1) * (xs - x1)
        inside &= sgn * cross >= 0.0
    return inside


def _obstacle_mask(ob: Obstacle, size: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    if ob.kind == "disc":
        r = ob.w / 2.0
        return (xs - ob.cx) ** 2 + (ys - ob.cy) ** 2 <= r * r
    return (
        (np.abs(xs - ob.cx) <= ob.w / 2.0)
        & (np.abs(ys - ob.cy) <= ob.h / 2.0)
    )


def _points_in_convex(v: np.ndarray, pts: np.ndarray) -> np.ndarray:
    k = len(v)
    area2 = 0.0
    for i in range(k):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % k]
        area2 += x1 * y2 - x2 * y1
    sgn = 1.0 if area2 > 0 else -1.0
    ok = np.ones(len(pts), dtype=bool)
    for i in range(k):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % k]
        cross = (x2 - x1) * (pts[:, 1] - y1) - (y2 - y1) * (pts[:, 0] - x1)
        ok &= sgn * cross >= 0.0
    return ok


def _roof_polygon(rng: np.random.Generator, size: int, arity: int) -> np.ndarray:
    """Convex k-gon inscribed in a randomly oriented ellipse (always convex)."""
    cx = size / 2.0 + rng.uniform(-0.05, 0.05) * size
    cy = size / 2.0 + rng.uniform(-0.05, 0.05) * size
    a = rng.uniform(0.26, 0.40) * size / 2.0 * 2.0
    b = rng.uniform(0.26, 0.40) * size / 2.0 * 2.0
    phi = rng.uniform(0, np.pi)
    gaps = rng.uniform(0.6, 1.4, arity)
    angles = np.cumsum(gaps) / gaps.sum() * 2.0 * np.pi + rng.uniform(0, 2 * np.pi)
    ex = a * np.cos(angles)
    ey = b * np.sin(angles)
    xs = cx + ex * np.cos(phi) - ey * np.sin(phi)
    ys = cy + ex * np.sin(phi) + ey * np.cos(phi)
    return np.column_stack([xs, ys])


def _sample_obstacles(
    rng: np.random.Generator,
    poly: np.ndarray,
    roof_val: float,
    n_target: int,
    placed_min_gap: float = 4.0,
) -> list[Obstacle]:
    obstacles: list[Obstacle] = []
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)
    for _ in range(n_target):
        placed = None
        for _attempt in range(30):
            kind = "rect" if rng.uniform() < 0.5 else "disc"
            w = rng.uniform(10.0, 22.0)
            h = w if kind == "disc" else rng.uniform(10.0, 22.0)
            cx = rng.uniform(lo[0], hi[0])
            cy = rng.uniform(lo[1], hi[1])
            margin = 5.0
            corners = np.array(
                [
                    [cx - w / 2 - margin, cy - h / 2 - margin],
                    [cx + w / 2 + margin, cy - h / 2 - margin],
                    [cx + w / 2 + margin, cy + h / 2 + margin],
                    [cx - w / 2 - margin, cy + h / 2 + margin],
                ]
            )
            if not _points_in_convex(poly, corners).all():
                continue
            clash = False
            for other in obstacles:
                if (
                    abs(cx - other.cx) < (w + other.w) / 2 + placed_min_gap
                    and abs(cy - other.cy) < (h + other.h) / 2 + placed_min_gap
                ):
                    clash = True
                    break
            if clash:
                continue
            delta = rng.uniform(40.0, 80.0)
            sign = -1.0 if rng.uniform() < 0.7 else 1.0
            val = float(np.clip(roof_val + sign * delta, 5.0, 250.0))
            placed = Obstacle(kind, float(cx), float(cy), float(w), float(h), val)
            break
        if placed is not None:
            obstacles.append(placed)
    return obstacles


def generate(
    seed: int,
    difficulty: str = "clean",
    size: int = 256,
    arity: int | None = None,
    n_obstacles: int | None = None,
) -> RoofScene:
    """Deterministically render one rooftop scene with its ground truth."""
    if difficulty not in DIFFICULTIES:
        raise ParameterError(f"difficulty must be one of {DIFFICULTIES}, got {difficulty!r}")
    if size < 64:
        raise ParameterError(f"scene size must be >= 64, got {size}")
    rng = np.random.default_rng(seed)
    if arity is None:
        arity = int(rng.integers(4, 7))
    if arity not in (4, 5, 6):
        raise ParameterError(f"roof polygon arity must be 4..6, got {arity}")

    roof_val = float(rng.uniform(150.0, 220.0))
    if difficulty == "low_contrast":
        bg_val = roof_val - _LOW_CONTRAST_GAP
    else:
        bg_val = float(rng.uniform(40.0, 110.0))

    poly = _roof_polygon(rng, size, arity)
    if n_obstacles is None:
        n_obstacles = int(rng.integers(0, 4))
    obstacles = tuple(_sample_obstacles(rng, poly, roof_val, n_obstacles))

    roof_px = convex_polygon_mask(poly, size)
    obstacle_px = np.zeros((size, size), dtype=bool)
    for ob in obstacles:
        obstacle_px |= _obstacle_mask(ob, size)

    # background: flat value plus a gentle linear ramp
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    ramp_dir = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(ramp_dir) * xs + np.sin(ramp_dir) * ys) / size
    img = bg_val + 8.0 * (ramp - ramp.mean())
    img[roof_px] = roof_val
    for ob in obstacles:
        img[_obstacle_mask(ob, size)] = ob.intensity

    img = raster.gaussian_blur(img, _RENDER_BLUR_SIGMA)
    img = img + rng.normal(0.0, _NOISE_SIGMA[difficulty], (size, size))
    img = np.clip(img, 0.0, 255.0)

    truth = raster.mask_from_bool(roof_px & ~obstacle_px)
    return RoofScene(
        seed=seed,
        difficulty=difficulty,
        size=size,
        polygon=poly,
        obstacles=obstacles,
        roof_intensity=roof_val,
        background_intensity=bg_val,
        image=img,
        truth=truth,
        roof_mask_full=raster.mask_from_bool(roof_px),
    )


def corpus(n: int, seed0: int = 1000, size: int = 256) -> list[RoofScene]:
    """n scenes round-robin over difficulty x polygon arity (4/5/6)."""
    if n < 1:
        raise ParameterError(f"corpus size must be >= 1, got {n}")
    scenes = []
    for i in range(n):
        difficulty = DIFFICULTIES[i % 3]
        arity = 4 + (i // 3) % 3
        scenes.append(generate(seed0 + i, difficulty, size=size, arity=arity))
    return scenes
