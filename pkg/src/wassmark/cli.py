"""Command-line entry point: ``wassmark <command> ...``.

Exit status: 0 success, 1 validation failure, 2 partial success (some
records skipped).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import signal
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from wassmark import fit as fitmod
from wassmark import io
from wassmark.heatmap import BoundaryWarning, Decoder, TargetSpec, decode_batch, edge_distance, in_bounds, make_gaussian_target
from wassmark.metrics import EvalPairing, ImagePair, LandmarkMapping, LandmarkSet, NormalizationRule, evaluate
from wassmark.ot import SinkhornConfig, exact_w1, sinkhorn_w1
from wassmark.ot.common import check_normalized
from wassmark.ot.cost import DENSE_CELL_LIMIT
from wassmark.perturb import PerturbKind, PerturbSpec, motion_blur_sequence, occlude

log = logging.getLogger("wassmark")

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 1, 2

# float32 storage moves the total mass of a 64x64 map by ~1e-7
STORED_MASS_ATOL = 1e-5


class CliError(Exception):
    """Validation failure reported to the user with exit status 1."""


def _dump_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _out(args) -> Path:
    out = Path(args.output_dir or args.config.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _map(args, fn, items):
    """Order-preserving map, threaded when --threads > 1."""
    if args.threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(args.threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _renormalize(stack: np.ndarray) -> np.ndarray:
    """Check each stored map is a distribution, then restore its unit mass in float64."""
    for k, hm in enumerate(stack):
        check_normalized(hm, f"heatmap {k}", atol=STORED_MASS_ATOL)
    return stack / stack.sum(axis=(1, 2), keepdims=True)


def _parse_norm(text: str | None) -> NormalizationRule | None:
    """``explicit:D``, ``bbox-width:W`` or ``inter-ocular:I,J``."""
    if text is None:
        return None
    kind, _, arg = text.partition(":")
    try:
        if kind == "inter-ocular":
            i, j = (int(v) for v in arg.split(","))
            return NormalizationRule.inter_ocular(i, j)
        return NormalizationRule(kind, value=float(arg))
    except ValueError as e:
        raise CliError(f"bad --normalization {text!r}: {e}") from None


# --- gen-targets ------------------------------------------------------------


def cmd_gen_targets(args) -> int:
    cfg = args.config.target
    lf = io.read_landmarks(args.landmarks)
    if not lf.records:
        raise CliError(f"{args.landmarks}: no image records")
    sigma = args.sigma or cfg.sigma
    size = args.size or (cfg.height, cfg.width)
    scale = args.scale or cfg.scale
    spec = TargetSpec(sigma, size[0], size[1], args.amplitude or cfg.amplitude)
    maps, index, skipped = [], [], 0
    for rec in lf.records:
        for j, (x, y) in enumerate(rec.landmarks.points):
            hx, hy = x / scale, y / scale
            if not in_bounds(hx, hy, spec.shape):
                log.warning("%s landmark %d: (%.3f, %.3f) maps outside the heatmap, skipped", rec.image_id, j, hx, hy)
                skipped += 1
                continue
            if edge_distance(hx, hy, spec.shape) < 3 * sigma:
                log.warning("%s landmark %d: centre within 3 sigma of the heatmap edge", rec.image_id, j)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BoundaryWarning)
                maps.append(make_gaussian_target((hx, hy), spec))
            index.append({"image": rec.image_id, "landmark": j})
    if not maps:
        raise CliError("every landmark mapped outside the heatmap; nothing written")
    out = _out(args)
    io.write_heatmaps(out / "targets.hmf", np.stack(maps))
    _dump_json(
        out / "targets.index.json",
        {"entries": index, "scale": scale, "sigma": sigma, "shape": list(spec.shape), "amplitude": spec.amplitude.value},
    )
    print(f"wrote {len(maps)} heatmaps to {out / 'targets.hmf'} ({skipped} skipped)")
    return EXIT_PARTIAL if skipped else EXIT_OK


# --- decode -----------------------------------------------------------------


def cmd_decode(args) -> int:
    cfg = args.config.decode
    stack = io.read_heatmaps(args.heatmaps).astype(np.float64)
    method = Decoder(args.method or cfg.method)
    scale = args.scale or cfg.scale
    logits = args.logits or cfg.logits
    index_path = Path(args.index) if args.index else Path(args.heatmaps).with_suffix(".index.json")
    if index_path.exists():
        entries = json.loads(index_path.read_text())["entries"]
    elif args.landmarks_per_image:
        m = args.landmarks_per_image
        entries = [{"image": f"image{k // m:05d}", "landmark": k % m} for k in range(len(stack))]
    else:
        raise CliError(f"no sidecar index at {index_path}; pass --index or --landmarks-per-image")
    if len(entries) != len(stack):
        raise CliError(f"{len(stack)} heatmaps but {len(entries)} index entries")
    if args.landmarks_per_image:
        counts = {}
        for e in entries:
            counts[e["image"]] = counts.get(e["image"], 0) + 1
        bad = {k: v for k, v in counts.items() if v != args.landmarks_per_image}
        if bad:
            k, v = next(iter(bad.items()))
            raise CliError(f"image {k!r} has {v} heatmaps, expected {args.landmarks_per_image}")
    if method is Decoder.GET_BC and not logits:
        try:
            stack = _renormalize(stack)
        except ValueError as e:
            raise CliError(f"{e} (GET_BC needs normalized heatmaps; pass --logits for raw outputs)") from None
    pts = decode_batch(list(stack), method, scale, logits=logits)
    groups: dict[str, list] = {}
    for e, p in zip(entries, pts):
        groups.setdefault(e["image"], []).append((e["landmark"], p))
    records = []
    for image_id, items in groups.items():
        items.sort(key=lambda t: t[0])
        records.append(io.LandmarkRecord(image_id, LandmarkSet(np.array([p for _, p in items]))))
    out = _out(args)
    io.write_landmarks(out / "decoded.json", io.LandmarkFile(records))
    print(f"decoded {len(pts)} heatmaps into {len(records)} images -> {out / 'decoded.json'}")
    return EXIT_OK


# --- eval -------------------------------------------------------------------


def _read_mapping(path) -> list[tuple[int, int]]:
    doc = json.loads(Path(path).read_text())
    pairs = doc["pairs"] if isinstance(doc, dict) else doc
    return [(int(p), int(g)) for p, g in pairs]


def cmd_eval(args) -> int:
    cfg = args.config.eval
    pred = io.read_landmarks(args.pred).by_id()
    gt = io.read_landmarks(args.gt)
    default_norm = _parse_norm(args.normalization)
    if default_norm is None and cfg.normalization is not None:
        default_norm = io._norm_from_dict(cfg.normalization, "config.eval.normalization")
    missing = [r.image_id for r in gt.records if r.image_id not in pred]
    extra = sorted(set(pred) - {r.image_id for r in gt.records})
    unmatched = missing + extra
    if unmatched and not args.allow_partial:
        raise CliError(f"unmatched image ids: {', '.join(unmatched[:10])}" + (" ..." if len(unmatched) > 10 else ""))
    pairs = _read_mapping(args.mapping) if args.mapping else None
    if pairs == []:
        raise CliError("landmark mapping is empty")
    images = []
    for r in gt.records:
        if r.image_id not in pred:
            continue
        norm = r.normalization or default_norm
        if norm is None:
            raise CliError(f"image {r.image_id!r} has no normalization; pass --normalization")
        p = pred[r.image_id].landmarks
        if pairs is None:
            if len(p) != len(r.landmarks):
                raise CliError(f"image {r.image_id!r}: {len(p)} predicted vs {len(r.landmarks)} ground-truth landmarks")
            images.append(ImagePair(p, r.landmarks, norm, r.image_id))
        else:
            # the normalization is resolved on the full ground truth before projecting
            d = norm.distance(r.landmarks)
            pm = LandmarkMapping(len(p), tuple(i for i, _ in pairs))
            gm = LandmarkMapping(len(r.landmarks), tuple(j for _, j in pairs))
            images.append(ImagePair(pm.apply(p), gm.apply(r.landmarks), NormalizationRule.explicit(d), r.image_id))
    if not images:
        raise CliError("no image could be paired")
    pairing = EvalPairing(tuple(images))
    thresholds = args.thresholds or cfg.thresholds
    grid = np.linspace(0.0, args.ced_max or cfg.ced_grid_max, cfg.ced_grid_points)
    report = evaluate(pairing, thresholds, grid, cfg.auc_ceilings, image_wise_ced=args.image_wise or cfg.image_wise_ced)
    out = _out(args)
    doc = report.summary()
    doc["config_digest"] = args.config.digest()
    doc["unmatched"] = unmatched
    doc["nme_per_image"] = dict(zip(report.image_ids, report.nme_per_image.tolist()))
    _dump_json(out / "report.json", doc)
    with open(out / "ced.csv", "w") as fh:
        fh.write("theta,ced\n")
        for t, c in zip(report.ced_grid, report.ced):
            fh.write(f"{float(t)!r},{float(c)!r}\n")
    if args.svg:
        (out / "ced.svg").write_text(ced_svg(report.ced_grid, report.ced))
    print(json.dumps({"nme": report.nme, "auc": doc["auc"], "fr_image": doc["fr_image"], "fr_landmark": doc["fr_landmark"]}, sort_keys=True))
    return EXIT_PARTIAL if unmatched else EXIT_OK


def ced_svg(grid, ced, width: int = 400, height: int = 300) -> str:
    """Minimal hand-written SVG line plot of a CED curve."""
    pad = 40
    x0, x1 = float(grid[0]), float(grid[-1])
    span = (x1 - x0) or 1.0

    def px(t, c):
        return pad + (t - x0) / span * (width - 2 * pad), height - pad - c * (height - 2 * pad)

    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in (px(t, c) for t, c in zip(grid, ced)))
    bx0, by0 = px(x0, 0.0)
    bx1, by1 = px(x1, 1.0)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<rect x="{bx0:.2f}" y="{by1:.2f}" width="{bx1 - bx0:.2f}" height="{by0 - by1:.2f}" fill="none" stroke="#999"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="#c0392b" stroke-width="2"/>\n'
        f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" font-size="12">NME threshold ({x0:g} to {x1:g})</text>\n'
        f'<text x="12" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 12 {height / 2:.0f})" text-anchor="middle">CED</text>\n'
        "</svg>\n"
    )


# --- perturb ----------------------------------------------------------------


def read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.float64) / 255.0


def write_png(path, img: np.ndarray) -> None:
    from PIL import Image

    arr = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def cmd_perturb(args) -> int:
    cfg = args.config.perturb
    axes = (0.0, 0.0) if args.zero_area else cfg.semi_axis_range
    spec = PerturbSpec(
        kind=args.kind or cfg.kind,
        protocol=args.protocol or cfg.protocol,
        seed=args.seed,
        semi_axis_range=axes,
        blur_multiplier=cfg.blur_multiplier,
        blur_cap=cfg.blur_cap,
        nose_index=cfg.nose_index if args.nose_index is None else args.nose_index,
    )
    files = sorted(Path(args.images).glob("*.png"))
    if not files:
        raise CliError(f"no PNG files in {args.images}")
    out = _out(args)
    manifest = {"kind": spec.kind.value, "protocol": spec.protocol.value, "seed": spec.seed, "items": []}
    if spec.kind is PerturbKind.OCCLUSION:

        def one(item):
            k, f = item
            img, ell = occlude(read_png(f), spec, k)
            return f, img, ell

        for f, img, ell in _map(args, one, list(enumerate(files))):
            write_png(out / f.name, img)
            shape = img.shape[:2]
            manifest["items"].append(
                {"file": f.name, "ellipse": ell.to_dict(), "area": ell.area, "clipped_area": ell.clipped_area(shape), "clipped": not ell.inside(shape)}
            )
    else:
        if args.nose_track is None:
            raise CliError("motion blur needs --nose-track")
        track = io.read_landmarks(args.nose_track).by_id()
        points = []
        for f in files:
            rec = track.get(f.stem) or track.get(f.name)
            if rec is None:
                raise CliError(f"no nose-track record for frame {f.name}")
            lms = rec.landmarks.points
            points.append(lms[0] if len(lms) == 1 else lms[spec.nose_index])
        frames, kernels = motion_blur_sequence([read_png(f) for f in files], points, spec)
        for f, img, k in zip(files, frames, kernels):
            write_png(out / f.name, img)
            manifest["items"].append({"file": f.name, "kernel": k.to_dict()})
    _dump_json(out / "manifest.json", manifest)
    print(f"perturbed {len(files)} images -> {out}")
    return EXIT_OK


# --- ot ---------------------------------------------------------------------


def cmd_ot(args) -> int:
    c = args.config.sinkhorn
    cfg = SinkhornConfig(args.epsilon or c.epsilon, c.max_iterations, c.marginal_tolerance)
    a = io.read_heatmaps(args.a).astype(np.float64)
    b = io.read_heatmaps(args.b).astype(np.float64)
    if a.shape != b.shape:
        raise CliError(f"heatmap stacks differ in shape: {a.shape} vs {b.shape}")
    if args.exact and a.shape[1] * a.shape[2] > DENSE_CELL_LIMIT:
        raise CliError(f"--exact is limited to {DENSE_CELL_LIMIT} cells per heatmap, got {a.shape[1]}x{a.shape[2]}")
    a, b = _renormalize(a), _renormalize(b)

    def one(k):
        r = sinkhorn_w1(a[k], b[k], cfg, gradient=False)
        row = {"pair": k, "sinkhorn": r.value, "iterations": r.iterations_used, "converged": r.converged}
        if args.exact:
            d, _ = exact_w1(a[k], b[k])
            row["exact"] = d
            row["relative_gap"] = abs(r.value - d) / d if d > 0 else (0.0 if r.value == 0 else math.inf)
        return row

    rows = _map(args, one, list(range(len(a))))
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    _dump_json(_out(args) / "ot.json", {"epsilon": cfg.epsilon, "pairs": rows})
    return EXIT_OK


# --- fit-demo / spurious-study ----------------------------------------------


def cmd_fit_demo(args) -> int:
    c = args.config.fit
    loss = args.loss or c.loss
    prob = fitmod.offset_blob_problem(
        loss,
        size=args.size or c.size,
        sigma=args.sigma or c.sigma,
        distance=c.distance if args.distance is None else args.distance,
        step=args.step or c.step,
        iterations=args.iterations or c.iterations or 1000,
    )
    trace = fitmod.fit(prob)
    out = _out(args)
    fitmod.write_trace_csv(trace, out / f"fit_{prob.loss.value}.csv")
    summary = {
        "loss": prob.loss.value,
        "step": prob.step,
        "iterations": len(trace),
        "diverged": trace.diverged,
        "final_bc": trace.final_bc,
        "final_max": trace.final_max,
        "relative_decrease_100": trace.relative_decrease(100) if len(trace) > 100 else None,
    }
    _dump_json(out / f"fit_{prob.loss.value}.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_PARTIAL if trace.diverged else EXIT_OK


def cmd_spurious(args) -> int:
    setup = fitmod.SpuriousSetup(distance=args.distance)
    fractions = args.fractions or [0.0, 0.05, 0.1, 0.15, 0.2, round(setup.dominance_mass() + 1e-3, 4), 0.3, 0.4]
    rows = fitmod.spurious_activation_study(fractions, setup)
    out = _out(args)
    with open(out / "spurious.csv", "w") as fh:
        fh.write("mass,bc_displacement,analytic_displacement,max_displacement\n")
        for r in rows:
            fh.write(f"{r.mass!r},{r.bc_displacement!r},{r.analytic_displacement!r},{r.max_displacement!r}\n")
    for r in rows:
        print(f"m={r.mass:.4f}  GET_BC {r.bc_displacement:7.3f} px (analytic {r.analytic_displacement:7.3f})  GET_MAX {r.max_displacement:7.3f} px")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def _size(text: str) -> tuple[int, int]:
    h, _, w = text.lower().partition("x")
    return int(h), int(w or h)


def _global_flags(p, default) -> None:
    p.add_argument("--config", default=default, help="YAML or JSON run config (unknown keys are errors)")
    p.add_argument("--seed", type=int, default=default, help="RNG seed (default: config seed, else 0)")
    p.add_argument("--threads", type=int, default=default, help="worker threads for per-item work (default 1)")
    p.add_argument("--output-dir", default=default, help="where artifacts are written (default: config or cwd)")
    p.add_argument("-v", "--verbose", action="store_true", default=False if default is None else default)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wassmark",
        description="Heatmap losses, decoders, metrics and perturbations for landmark regression.",
        epilog="exit status: 0 success, 1 validation failure, 2 partial success (records skipped)",
    )
    _global_flags(p, None)
    # the same flags are accepted after the command name too
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    g = command("gen-targets", help="Gaussian target heatmaps from a landmark file")
    g.add_argument("landmarks")
    g.add_argument("--sigma", type=float)
    g.add_argument("--size", type=_size, help="heatmap HxW (default 64x64)")
    g.add_argument("--scale", type=float, help="image px per heatmap px (default 4)")
    g.add_argument("--amplitude", choices=["normalized", "peak-one"])
    g.set_defaults(func=cmd_gen_targets)

    d = command("decode", help="heatmap file -> landmark file")
    d.add_argument("heatmaps")
    d.add_argument("--method", choices=[m.value for m in Decoder])
    d.add_argument("--scale", type=float, help="image px per heatmap px (default 4)")
    d.add_argument("--logits", action="store_true", help="inputs are raw logits; softmax before GET_BC")
    d.add_argument("--index", help="sidecar index (default: <heatmaps>.index.json)")
    d.add_argument("--landmarks-per-image", type=int)
    d.set_defaults(func=cmd_decode)

    e = command("eval", help="NME / FR / CED / AUC report")
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("--mapping", help="JSON list of [pred_index, gt_index] pairs for common landmarks")
    e.add_argument("--normalization", help="explicit:D | bbox-width:W | inter-ocular:I,J (for records without one)")
    e.add_argument("--thresholds", type=float, nargs="+")
    e.add_argument("--ced-max", type=float)
    e.add_argument("--image-wise", action="store_true", help="image-wise CED instead of landmark-wise")
    e.add_argument("--allow-partial", action="store_true")
    e.add_argument("--svg", action="store_true", help="also render ced.svg")
    e.set_defaults(func=cmd_eval)

    q = command("perturb", help="seeded occlusion or motion blur over a PNG directory")
    q.add_argument("images")
    q.add_argument("--kind", choices=[k.value for k in PerturbKind])
    q.add_argument("--protocol", choices=["large", "medium"])
    q.add_argument("--nose-track", help="landmark file with one record per frame (id = file stem)")
    q.add_argument("--nose-index", type=int)
    q.add_argument("--zero-area", action="store_true", help="empty occluder (identity run)")
    q.set_defaults(func=cmd_perturb)

    o = command("ot", help="Sinkhorn (and optionally exact) W1 between paired heatmaps")
    o.add_argument("a")
    o.add_argument("b")
    o.add_argument("--epsilon", type=float)
    o.add_argument("--exact", action="store_true", help=f"also solve the LP (<= {DENSE_CELL_LIMIT} cells)")
    o.set_defaults(func=cmd_ot)

    f = command("fit-demo", help="fit logits from an offset blob and write the trace")
    f.add_argument("--loss", choices=[k.value for k in fitmod.LossKind])
    f.add_argument("--distance", type=float)
    f.add_argument("--sigma", type=float)
    f.add_argument("--size", type=int)
    f.add_argument("--step", type=float)
    f.add_argument("--iterations", type=int)
    f.set_defaults(func=cmd_fit_demo)

    s = command("spurious-study", help="decoder displacement vs spurious mass")
    s.add_argument("--fractions", type=float, nargs="+")
    s.add_argument("--distance", type=float, default=30.0)
    s.set_defaults(func=cmd_spurious)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(signal, "SIGPIPE"):
        signal.signal(signal.SIGPIPE, signal.SIG_DFL)  # quiet exit when piped into head
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.config = io.load_config(args.config) if args.config else io.RunConfig()
        args.seed = args.config.seed if args.seed is None else args.seed
        args.threads = args.config.threads if args.threads is None else args.threads
        if args.threads < 1:
            raise CliError(f"--threads must be >= 1, got {args.threads}")
        return args.func(args)
    except (CliError, ValueError, KeyError, FileNotFoundError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
