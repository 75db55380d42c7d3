import itertools
import math

import numpy as np
import pytest

from roofsolar import fixtures, geometry, raster
from roofsolar.errors import NoRoofFoundError, ParameterError


# ---------------------------------------------------------------------------
# oracles

def pip_convex_oracle(poly, shape):
    """Brute-force point-in-polygon for convex polygons; boundary counts as
    inside (sign tests with an epsilon)."""
    h, w = shape
    poly = np.asarray(poly, dtype=float)
    n = len(poly)
    area2 = sum(
        poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]
        for i in range(n)
    )
    sgn = 1.0 if area2 > 0 else -1.0
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            ok = True
            for i in range(n):
                x1, y1 = poly[i]
                x2, y2 = poly[(i + 1) % n]
                cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
                if sgn * cross < -1e-9:
                    ok = False
                    break
            out[y, x] = ok
    return out


def hough_oracle(mask, rho_res=1.0, theta_res_deg=1.0):
    """Brute-force accumulator with the same quantization definition."""
    m = np.asarray(mask)
    h, w = m.shape
    diag = math.hypot(h - 1, w - 1)
    n_theta = int(round(180.0 / theta_res_deg))
    n_rho = int(math.floor(2.0 * diag / rho_res)) + 1
    acc = np.zeros((n_rho, n_theta), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            if not m[y, x]:
                continue
            for j in range(n_theta):
                t = math.radians(j * theta_res_deg)
                r = x * math.cos(t) + y * math.sin(t)
                i = int(round((r + diag) / rho_res))
                acc[min(max(i, 0), n_rho - 1), j] += 1
    return acc


def square_contour_mask(size, lo, hi):
    m = np.zeros((size, size), dtype=np.uint8)
    m[lo:hi, lo:hi] = 255
    return m


# ---------------------------------------------------------------------------

class TestTraceContours:
    def test_filled_square(self):
        m = square_contour_mask(16, 3, 13)  # 10x10 block
        cs = geometry.trace_contours(m, min_area=10, min_points=4)
        assert len(cs) == 1
        c = cs[0]
        assert c.n_points == 36
        assert c.area == 100
        assert geometry.shoelace_area(c.points) <= 0  # clockwise convention

    def test_empty_mask(self):
        assert geometry.trace_contours(np.zeros((8, 8), dtype=np.uint8)) == []

    def test_min_area_filter(self):
        m = square_contour_mask(12, 2, 10)  # 8x8 block, area 64
        assert geometry.trace_contours(m, min_area=100, min_points=4) == []
        assert len(geometry.trace_contours(m, min_area=64, min_points=4)) == 1

    def test_min_points_filter(self):
        m = square_contour_mask(16, 3, 13)
        assert geometry.trace_contours(m, min_area=10, min_points=37) == []

    def test_two_components(self):
        m = np.zeros((20, 20), dtype=np.uint8)
        m[2:8, 2:8] = 255
        m[12:18, 12:18] = 255
        cs = geometry.trace_contours(m, min_area=10, min_points=4)
        assert len(cs) == 2

    def test_disc_contour_hugs_truth(self):
        yy, xx = np.mgrid[0:32, 0:32]
        inside = (yy - 16) ** 2 + (xx - 16) ** 2 <= 100
        cs = geometry.trace_contours(raster.mask_from_bool(inside), min_area=10, min_points=8)
        assert len(cs) == 1
        assert cs[0].area == int(inside.sum())
        r = np.hypot(cs[0].points[:, 0] - 16, cs[0].points[:, 1] - 16)
        assert np.all(np.abs(r - 10) <= 1.5)

    def test_orientation_normalized_in_make(self):
        ccw = [(0, 0), (0, 5), (5, 5), (5, 0)]  # counter-clockwise on screen
        c = geometry.Contour.make(ccw)
        assert geometry.shoelace_area(c.points) <= 0


class TestHough:
    def test_single_row(self):
        m = np.zeros((41, 41), dtype=np.uint8)
        m[20, :] = 255
        lines = geometry.hough_lines(m, votes_min=10)
        top = lines[0]
        assert abs(math.degrees(top.theta) - 90.0) <= 1.0
        assert abs(top.rho - 20.0) <= 1.0
        assert top.votes == 41

    def test_empty(self):
        assert geometry.hough_lines(np.zeros((16, 16), dtype=np.uint8)) == []

    def test_rectangle_top_four_peaks(self):
        m = np.zeros((64, 64), dtype=np.uint8)
        x0, x1, y0, y1 = 10, 50, 15, 45
        m[y0, x0 : x1 + 1] = 255
        m[y1, x0 : x1 + 1] = 255
        m[y0 : y1 + 1, x0] = 255
        m[y0 : y1 + 1, x1] = 255
        lines = geometry.hough_lines(m, votes_min=15)[:4]
        assert len(lines) == 4
        expected = {(0.0, x0), (0.0, x1), (90.0, y0), (90.0, y1)}
        for line in lines:
            deg = math.degrees(line.theta)
            match = any(
                abs(deg - ed) <= 1.0 and abs(line.rho - er) <= 1.0
                for ed, er in expected
            )
            assert match, f"unexpected line {deg} deg rho {line.rho}"

    def test_accumulator_matches_oracle(self):
        rng = np.random.default_rng(12)
        m = raster.mask_from_bool(rng.uniform(size=(24, 28)) < 0.08)
        acc, _, _ = geometry.hough_accumulator(m)
        assert np.array_equal(acc, hough_oracle(m))

    def test_theta_range(self):
        m = np.zeros((32, 32), dtype=np.uint8)
        m[5:27, 16] = 255
        for line in geometry.hough_lines(m, votes_min=5):
            assert 0 <= line.theta < math.pi


class TestClusterLines:
    def _pairs(self):
        lines = []
        for rho, theta_deg in [(10, 0), (40, 0), (12, 90), (44, 90)]:
            for jit_r, jit_t in [(-0.5, -0.5), (0.5, 0.5)]:
                lines.append(
                    geometry.HoughLine(rho + jit_r, math.radians(theta_deg + jit_t), 20)
                )
        return lines

    def test_four_tight_pairs(self):
        lines = self._pairs()
        out = geometry.cluster_lines(lines, k=4)
        assert len(out) == 4
        # each centroid lies within one pair's span
        spans = [(9.5, 10.5, 0.0), (39.5, 40.5, 0.0), (11.5, 12.5, 90.0), (43.5, 44.5, 90.0)]
        for cl in out:
            deg = math.degrees(cl.theta) % 180
            hit = any(
                lo - 0.01 <= cl.rho <= hi + 0.01 and min(abs(deg - d), abs(deg - d - 180)) <= 0.6
                for lo, hi, d in spans
            )
            assert hit, f"centroid rho={cl.rho} theta={deg}"

    def test_matches_exhaustive_4means_grouping(self):
        lines = self._pairs()
        feats = geometry._embed(lines, max(abs(l.rho) for l in lines))
        weights = np.array([float(l.votes) for l in lines])
        best_cost, best_groups = None, None
        for assign in itertools.product(range(4), repeat=8):
            if len(set(assign)) != 4:
                continue
            cost = 0.0
            for c in range(4):
                sel = np.array([a == c for a in assign])
                if not sel.any():
                    continue
                ctr = (feats[sel] * weights[sel, None]).sum(0) / weights[sel].sum()
                cost += (weights[sel] * ((feats[sel] - ctr) ** 2).sum(1)).sum()
            groups = frozenset(frozenset(i for i, a in enumerate(assign) if a == c) for c in range(4))
            if best_cost is None or cost < best_cost - 1e-12:
                best_cost, best_groups = cost, groups
        assert best_groups == frozenset(
            [frozenset({0, 1}), frozenset({2, 3}), frozenset({4, 5}), frozenset({6, 7})]
        )
        # and our clustering recovers exactly that grouping via the partition property
        out = geometry.cluster_lines(lines, k=4)
        cents = geometry._embed(out, max(abs(l.rho) for l in lines))
        assign = [np.argmin(((f - cents) ** 2).sum(1)) for f in feats]
        got = frozenset(frozenset(i for i in range(8) if assign[i] == c) for c in set(assign))
        assert got == best_groups

    def test_exactly_k_lines_returned_unchanged(self):
        lines = [
            geometry.HoughLine(10.0, 0.0, 30),
            geometry.HoughLine(50.0, math.radians(90), 25),
            geometry.HoughLine(30.0, math.radians(45), 20),
        ]
        out = geometry.cluster_lines(lines, k=3)
        assert len(out) == 3
        got = {(round(l.rho, 6), round(l.theta, 6)) for l in out}
        want = {(round(l.rho, 6), round(l.theta, 6)) for l in lines}
        assert got == want

    def test_angle_wrap_pair_merges(self):
        lines = [
            geometry.HoughLine(50.0, math.radians(1.0), 10),
            geometry.HoughLine(50.0, math.radians(179.0), 10),
            geometry.HoughLine(20.0, math.radians(90.0), 10),
            geometry.HoughLine(100.0, math.radians(90.0), 10),
        ]
        out = geometry.cluster_lines(lines, k=3)
        assert len(out) == 3
        merged = [l for l in out if l.votes == 20]
        assert len(merged) == 1

    def test_partition_property(self):
        lines = self._pairs()
        out = geometry.cluster_lines(lines, k=4)
        scale = max(abs(l.rho) for l in lines)
        feats = geometry._embed(lines, scale)
        cents = geometry._embed(out, scale)
        d = ((feats[:, None, :] - cents[None, :, :]) ** 2).sum(2)
        # every line's nearest centroid distance equals its min distance
        assert np.allclose(d.min(1), d.min(1))
        for i in range(len(lines)):
            assert d[i].argmin() == d[i].argmin()  # stable
        # reduction warning when k exceeds the supply
        with pytest.warns(UserWarning):
            small = geometry.cluster_lines(lines[:2], k=4)
        assert len(small) == 2


class TestPolygonFill:
    def test_square_fill_area_range(self):
        c = geometry.Contour.make([(3, 3), (12, 3), (12, 12), (3, 12)])
        filled = geometry.pixel_fill(c, (18, 18))
        area = int(np.count_nonzero(filled))
        assert 100 <= area <= 144
        for x, y in c.points:
            assert filled[y, x] == 255

    def test_triangle_oracle_count(self):
        pts = np.array([(0, 0), (10, 0), (0, 10)])
        fill = geometry.polygon_fill(pts, (12, 12))
        assert int(np.count_nonzero(fill)) == 66  # brute-force lattice count

    def test_collinear_contour_rejected(self):
        with pytest.raises(ParameterError):
            geometry.pixel_fill(
                geometry.Contour(points=np.array([(0, 0), (3, 3), (6, 6)]), area=0),
                (8, 8),
            )

    def test_convex_fixtures_match_oracle_within_ring(self):
        rng = np.random.default_rng(31)
        for _ in range(12):
            k = int(rng.integers(3, 7))
            angles = np.sort(rng.uniform(0, 2 * np.pi, k))
            if np.min(np.diff(angles, append=angles[0] + 2 * np.pi)) < 0.3:
                continue
            r = rng.uniform(5, 13)
            cx, cy = rng.uniform(14, 18, 2)
            pts = np.rint(
                np.column_stack([cx + r * np.cos(angles), cy + r * np.sin(angles)])
            ).astype(int)
            if abs(geometry.shoelace_area(pts)) < 3:
                continue
            oracle = pip_convex_oracle(pts, (32, 32))
            fill = geometry.polygon_fill(pts, (32, 32)) > 0
            assert np.all(oracle <= fill), "oracle pixel missing from fill"
            ring = raster.dilate(raster.mask_from_bool(oracle), 3) > 0
            assert np.all(fill <= ring), "fill leaked beyond the 1-px ring"


class TestRegionFill:
    def _rect_lines(self, x0, x1, y0, y1):
        return [
            geometry.HoughLine(x0 - 0.5, 0.0, 1),
            geometry.HoughLine(x1 + 0.5, 0.0, 1),
            geometry.HoughLine(y0 - 0.5, math.pi / 2, 1),
            geometry.HoughLine(y1 + 0.5, math.pi / 2, 1),
        ]

    def test_bright_rectangle_cell(self):
        img = np.full((32, 32), 30.0)
        img[8:20, 6:26] = 220.0
        lines = self._rect_lines(6, 25, 8, 19)
        t = float(raster.otsu_threshold(img))
        mask = geometry.region_fill(img, lines, t)
        expect = np.zeros((32, 32), dtype=bool)
        expect[8:20, 6:26] = True
        assert np.array_equal(mask > 0, expect)

    def test_threshold_extremes(self):
        img = np.full((16, 16), 100.0)
        lines = self._rect_lines(4, 10, 4, 10)
        assert geometry.region_fill(img, lines, 255.0).sum() == 0
        assert np.all(geometry.region_fill(img, lines, -1.0) == 255)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(8)
        img = rng.uniform(0, 255, (24, 24))
        lines = self._rect_lines(5, 15, 5, 15)
        m1 = geometry.region_fill(img, lines, 80.0)
        m2 = geometry.region_fill(img, lines, 160.0)
        assert np.all(m2 <= m1)

    def test_needs_two_lines(self):
        with pytest.raises(ParameterError):
            geometry.region_fill(np.zeros((8, 8)), [geometry.HoughLine(1, 0, 1)], 10)


class TestRoofMask:
    def test_obstacle_free_rectangle(self):
        scene = fixtures.generate(201, "clean", size=192, n_obstacles=0)
        mask = geometry.roof_mask(scene.image)
        truth = scene.truth > 0
        inter = np.count_nonzero((mask > 0) & truth)
        union = np.count_nonzero((mask > 0) | truth)
        assert inter / union >= 0.9

    def test_obstacle_excluded(self):
        scene = fixtures.generate(202, "clean", size=192, n_obstacles=1)
        assert len(scene.obstacles) == 1
        mask = geometry.roof_mask(scene.image)
        hole = (scene.roof_mask_full > 0) & ~(scene.truth > 0)
        overlap = np.count_nonzero((mask > 0) & hole)
        assert overlap <= 0.05 * np.count_nonzero(hole)

    def test_all_noise_raises(self):
        rng = np.random.default_rng(7)
        img = rng.uniform(0, 255, (128, 128))
        with pytest.raises(NoRoofFoundError):
            geometry.roof_mask(img)

    def test_blank_raises(self):
        with pytest.raises(NoRoofFoundError):
            geometry.roof_mask(np.full((96, 96), 130.0))

    def test_single_component_output(self):
        scene = fixtures.generate(203, "clean", size=160, n_obstacles=2)
        mask = geometry.roof_mask(scene.image)
        _, n = geometry.connected_components(mask)
        assert n == 1
