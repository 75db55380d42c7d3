"""Command-line interface.

Exit codes: 0 success, 2 no roof found, 3 provider failure, 4 bad
parameters. Subcommands mirror the pipeline stages so each intermediate
product can be inspected on its own.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import edges as edges_mod
from . import fixtures as fixtures_mod
from . import geometry, pipeline, placement, raster, regionseg, texture, tiles
from .errors import NoRoofFoundError, ParameterError, ProviderError, RoofSolarError

EXIT_OK = 0
EXIT_NO_ROOF = 2
EXIT_PROVIDER = 3
EXIT_PARAMS = 4


def _load_config(path: str | None) -> pipeline.PipelineConfig:
    if path is None:
        return pipeline.PipelineConfig()
    return pipeline.PipelineConfig.from_text(Path(path).read_text())


def _provider_from_env_or_args(args) -> object:
    if getattr(args, "fixture_dir", None):
        return tiles.FixtureDirectoryProvider(args.fixture_dir)
    template = os.environ.get(tiles.URL_ENV)
    if template:
        return tiles.UrlTemplateProvider(template)
    raise ParameterError(
        f"no tile provider: pass --fixture-dir or set {tiles.URL_ENV}"
    )


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# subcommand handlers

def _cmd_analyze(args) -> int:
    cfg = _load_config(args.config)
    if args.zoom is not None:
        from dataclasses import replace

        cfg = replace(cfg, zoom=args.zoom)
    out_dir = Path(args.out)
    if args.image:
        report = pipeline.analyze(cfg, image_path=args.image, out_dir=out_dir)
    else:
        provider = _provider_from_env_or_args(args)
        cache = tiles.TileCache()
        report = pipeline.analyze(
            cfg,
            latlng=(args.lat, args.lng),
            provider=provider,
            cache=cache,
            out_dir=out_dir,
        )
    print(f"report written to {out_dir / pipeline.REPORT_FILE}")
    print(
        f"usable {report.usable_area_m2:.1f} m^2, {report.panel_cells} cells, "
        f"{report.capacity_kw:.2f} kW, {report.annual_kwh:.0f} kWh/yr"
    )
    return EXIT_OK


def _cmd_fetch(args) -> int:
    req = tiles.TileRequest(lat=args.lat, lng=args.lng, zoom=args.zoom, size=args.size)
    provider = _provider_from_env_or_args(args)
    rgb = tiles.fetch(req, provider, tiles.TileCache())
    from PIL import Image

    Image.fromarray(rgb, mode="RGB").save(args.out)
    print(f"tile saved to {args.out}")
    return EXIT_OK


def _cmd_segment(args) -> int:
    cfg = _load_config(args.config)
    img = raster.read_gray(args.image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.method == "watershed":
        lm = regionseg.watershed_segment(img)
        from PIL import Image

        palette = [0, 0, 0, 64, 64, 64] + [
            c for i in range(254) for c in ((37 * i) % 256, (97 * i) % 256, (151 * i) % 256)
        ]
        pal_img = Image.fromarray((lm.labels % 256).astype(np.uint8), mode="P")
        pal_img.putpalette(palette[: 256 * 3])
        pal_img.save(out / "labels.png")
        print(f"{lm.n_objects} object regions -> {out / 'labels.png'}")
    elif args.method == "snake":
        contour = regionseg.snake_roof_segment(
            img,
            alpha=cfg.snake_alpha,
            beta=cfg.snake_beta,
            gamma=cfg.snake_gamma,
            gvf_mu=cfg.gvf_mu,
            gvf_iters=cfg.gvf_iters,
            snake_iters=cfg.snake_iters,
            n_points=cfg.snake_points,
        )
        _write_json(out / "contour.json", {"points": contour.points.tolist(), "area_px": contour.area})
        print(f"contour with {contour.n_points} points -> {out / 'contour.json'}")
    else:  # gmm
        model = texture.fit_gmm2(raster.histogram(img))
        mask = texture.gmm_segment(img, model)
        raster.write_mask(out / "gmm_mask.png", mask)
        _write_json(out / "gmm_model.json", model.as_dict())
        print(f"gmm mask -> {out / 'gmm_mask.png'}")
    return EXIT_OK


def _cmd_edges(args) -> int:
    img = raster.read_gray(args.image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = edges_mod.detector_outputs(img)
    if args.k != 0.33:
        outputs["adaptive_canny"] = edges_mod.adaptive_canny(
            raster.bilateral_filter(img, 2.0, 15.0, 3), k=args.k
        ).mask
    for op, mask in outputs.items():
        raster.write_mask(out / f"edges_{op}.png", mask)
    if args.truth:
        truth = raster.read_gray(args.truth)
        table = edges_mod.compare_edge_detectors(img, raster.mask_from_bool(truth > 127))
        lines = ["operator,precision,recall,f1"]
        for op, row in table.items():
            lines.append(f"{op},{row['precision']:.4f},{row['recall']:.4f},{row['f1']:.4f}")
        (out / "comparison.csv").write_text("\n".join(lines) + "\n")
        print(f"comparison -> {out / 'comparison.csv'}")
    print(f"edge maps -> {out}")
    return EXIT_OK


def _cmd_texture(args) -> int:
    img = raster.read_gray(args.image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = texture.GaborParams(f=args.frequency, theta=args.theta, size=args.size)
    response = texture.gabor_response(img, params)
    peak = response.max()
    raster.write_gray(out / "gabor_response.png", response / peak * 255.0 if peak > 0 else response)
    model = texture.fit_gmm2(raster.histogram(img))
    _write_json(out / "gmm_model.json", model.as_dict())
    print(f"gabor response + gmm model -> {out}")
    return EXIT_OK


def _cmd_polygon(args) -> int:
    cfg = _load_config(args.config)
    img = raster.read_gray(args.image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    em = edges_mod.adaptive_canny(img, k=cfg.canny_k)
    lines = geometry.hough_lines(em.mask, votes_min=cfg.hough_votes_min)
    if len(lines) < 2:
        raise NoRoofFoundError("fewer than 2 Hough lines; cannot partition the image")
    clustered = geometry.cluster_lines(lines, k=args.lines)
    t = args.threshold if args.threshold is not None else float(raster.otsu_threshold(img))
    mask = geometry.region_fill(img, clustered, t)
    raster.write_mask(out / "region_mask.png", mask)
    _write_json(
        out / "lines.json",
        [{"rho": l.rho, "theta": l.theta, "votes": l.votes} for l in clustered],
    )
    print(f"{len(clustered)} lines, region mask -> {out}")
    return EXIT_OK


def _cmd_place(args) -> int:
    cfg = _load_config(args.config)
    mask = raster.read_gray(args.mask).astype(np.uint8)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = placement.PanelSpec(
        cell_width_m=args.panel_w_m,
        cell_height_m=args.panel_h_m,
        patch_shapes=tuple(cfg.patch_shapes),
        rated_watts=args.watts,
    )
    mpp = args.mpp if args.mpp else placement.ground_resolution(0.0, cfg.zoom)
    layout = placement.place_panels(mask, spec, mpp, args.angle, args.gap)
    base = np.repeat(mask[..., None], 3, axis=2)
    overlay = pipeline.render_overlay(base, mask, layout)
    from PIL import Image

    Image.fromarray(overlay, mode="RGB").save(out / "placement.png")
    pipeline._layout_write(layout, spec, cfg, out / "layout.json")
    print(f"{layout.total_cells} cells in {len(layout.patches)} patches -> {out}")
    return EXIT_OK


def _cmd_fixtures(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenes = fixtures_mod.corpus(args.count, seed0=args.seed, size=args.size)
    for scene in scenes:
        raster.write_gray(out / f"scene_{scene.seed}.png", scene.image)
        raster.write_mask(out / f"truth_{scene.seed}.png", scene.truth)
    print(f"{len(scenes)} scene/truth pairs -> {out}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    problems = pipeline.verify_output(args.dir)
    if problems:
        for p in problems:
            print(f"FAIL {p}")
        return 1
    print("verified: report numbers match the emitted mask and layout")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="roofsolar",
        description="Rooftop solar potential analysis from satellite imagery",
    )
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="full pipeline: image or coordinates -> report")
    a.add_argument("--image", help="input image (PNG or PGM)")
    a.add_argument("--lat", type=float)
    a.add_argument("--lng", type=float)
    a.add_argument("--zoom", type=int, default=None)
    a.add_argument("--config", help="flat key=value config file")
    a.add_argument("--fixture-dir", help="serve tiles from this directory")
    a.add_argument("--out", required=True, help="output directory")
    a.set_defaults(fn=_cmd_analyze)

    f = sub.add_parser("fetch", help="fetch one tile to a file")
    f.add_argument("--lat", type=float, required=True)
    f.add_argument("--lng", type=float, required=True)
    f.add_argument("--zoom", type=int, default=20)
    f.add_argument("--size", type=int, default=640)
    f.add_argument("--fixture-dir")
    f.add_argument("--out", required=True)
    f.set_defaults(fn=_cmd_fetch)

    s = sub.add_parser("segment", help="run one segmentation method")
    s.add_argument("--image", required=True)
    s.add_argument("--method", choices=["watershed", "snake", "gmm"], required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_segment)

    e = sub.add_parser("edges", help="per-operator edge maps and comparison CSV")
    e.add_argument("--image", required=True)
    e.add_argument("--truth", help="ground-truth boundary mask for scoring")
    e.add_argument("--k", type=float, default=0.33, help="adaptive canny sensitivity")
    e.add_argument("--out", required=True)
    e.set_defaults(fn=_cmd_edges)

    t = sub.add_parser("texture", help="gabor response and 2-component GMM fit")
    t.add_argument("--image", required=True)
    t.add_argument("--frequency", type=float, default=0.1)
    t.add_argument("--theta", type=float, default=0.0)
    t.add_argument("--size", type=int, default=21)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=_cmd_texture)

    g = sub.add_parser("polygon", help="hough + k-means lines and region fill")
    g.add_argument("--image", required=True)
    g.add_argument("--lines", type=int, default=4, help="cluster count, 4..6")
    g.add_argument("--threshold", type=float, default=None, help="default: Otsu")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_polygon)

    pl = sub.add_parser("place", help="pack panels into a usable-area mask")
    pl.add_argument("--mask", required=True)
    pl.add_argument("--angle", type=float, default=0.0)
    pl.add_argument("--gap", type=int, default=1)
    pl.add_argument("--panel-w-m", type=float, default=1.65)
    pl.add_argument("--panel-h-m", type=float, default=0.99)
    pl.add_argument("--watts", type=float, default=330.0)
    pl.add_argument("--mpp", type=float, default=None)
    pl.add_argument("--config")
    pl.add_argument("--out", required=True)
    pl.set_defaults(fn=_cmd_place)

    x = sub.add_parser("fixtures", help="write synthetic scene/truth pairs")
    x.add_argument("--count", type=int, default=50)
    x.add_argument("--seed", type=int, default=1000)
    x.add_argument("--size", type=int, default=256)
    x.add_argument("--out", required=True)
    x.set_defaults(fn=_cmd_fixtures)

    v = sub.add_parser("verify", help="recompute report numbers from artifacts")
    v.add_argument("dir")
    v.set_defaults(fn=_cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "analyze":
        if bool(args.image) == (args.lat is not None or args.lng is not None):
            print("error: pass exactly one of --image or --lat/--lng", file=sys.stderr)
            return EXIT_PARAMS
        if args.image is None and (args.lat is None or args.lng is None):
            print("error: both --lat and --lng are required", file=sys.stderr)
            return EXIT_PARAMS
    try:
        return args.fn(args)
    except NoRoofFoundError as exc:
        print(f"error: no roof found: {exc}", file=sys.stderr)
        return EXIT_NO_ROOF
    except ProviderError as exc:
        print(f"error: tile provider: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except ParameterError as exc:
        print(f"error: bad parameters: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except RoofSolarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
