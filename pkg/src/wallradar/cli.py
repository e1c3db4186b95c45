"""Batch command-line frontend: simulate, focus, detect, features, export, eval.

Exit codes: 0 ok, 1 usage/parameter error, 2 bad input file, 3 numerical failure.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from .detect import CfarConfig, cfar_detect, extract_sequence, localization_error, match_detections
from .focusing import backproject, image_entropy, rma
from .polarimetry import dispersion_features, estimate_reflection_spectrum, fresnel
from .render import to_grayscale, write_pgm, write_png
from .scene import Channel, synthesize_bscan
from .waveform import WaveformConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BAD_INPUT = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ds.DatasetError(f"{path}: {exc}") from exc


def _waveform_from_args(args) -> WaveformConfig:
    return WaveformConfig(
        carrier=args.carrier, bandwidth=args.bandwidth, sample_rate=args.sample_rate
    )


def _add_waveform_args(p):
    p.add_argument("--carrier", type=float, default=7.29e9)
    p.add_argument("--bandwidth", type=float, default=1.5e9)
    p.add_argument("--sample-rate", type=float, default=23.328e9)


def cmd_simulate(args) -> int:
    scene = ds.scene_from_dict(_load_json(args.scene))
    cfg = ds.scan_from_dict(_load_json(args.scan))
    wf = _waveform_from_args(args)
    records = [
        synthesize_bscan(scene, cfg, wf, Channel.CO),
        synthesize_bscan(scene, cfg, wf, Channel.CROSS),
    ]
    ds.write_dataset(args.out, records, record_type="bscan")
    print(f"wrote {len(records)} channels ({records[0].n_columns}x{records[0].n_samples}) to {args.out}")
    return EXIT_OK


def cmd_focus(args) -> int:
    contents = ds.read_dataset(args.indir)
    if contents.manifest["record_type"] != "bscan":
        raise ds.InconsistentManifestError("focus expects a B-scan dataset")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images, extras = [], []
    for bscan, entry in zip(contents.records, contents.entries):
        if args.algo == "rma":
            img = rma(bscan, args.eps, args.speed, frame_rate=args.frame_rate, taper=args.taper)
        else:
            img = backproject(bscan, args.eps, args.speed, frame_rate=args.frame_rate)
        entropy = image_entropy(img) if img.data.max() > 0 else float("nan")
        channel = entry.get("channel", "co")
        gray = to_grayscale(img)
        write_pgm(out / f"image_{channel}.pgm", gray)
        write_png(out / f"image_{channel}.png", gray)
        images.append(img)
        extras.append(
            {"channel": channel, "entropy": entropy, "scene": entry.get("scene")}
        )
        print(f"{channel}: entropy={entropy:.4f}")
    ds.write_dataset(out, images, record_type="image", extras=extras)
    return EXIT_OK


def cmd_detect(args) -> int:
    contents = ds.read_dataset(args.indir)
    if contents.manifest["record_type"] != "image":
        raise ds.InconsistentManifestError("detect expects a focused-image dataset")
    cfg = CfarConfig(train=args.train, guard=args.guard, pfa=args.pfa)
    report = []
    for img, entry in zip(contents.records, contents.entries):
        detections = cfar_detect(img, cfg)
        recs = []
        truth = None
        if entry.get("scene") and entry["scene"].get("targets"):
            truth = [ds.target_from_dict(t) for t in entry["scene"]["targets"]]
        for d in detections:
            rec = {"x": d.x, "depth": d.depth, "peak": d.peak, "snr_db": d.snr_db}
            if truth:
                matched = match_detections([d], truth)[0][1]
                ex, ez = localization_error(d, matched)
                rec.update({"error_x": ex, "error_depth": ez})
            recs.append(rec)
        report.append({"channel": entry.get("channel", "co"), "detections": recs})
    out_path = Path(args.out) if args.out else Path(args.indir) / "detections.json"
    out_path.write_text(json.dumps({"images": report}, indent=2), encoding="utf-8")
    n_total = sum(len(r["detections"]) for r in report)
    print(f"{n_total} detections -> {out_path}")
    return EXIT_OK


def cmd_features(args) -> int:
    contents = ds.read_dataset(args.indir)
    if contents.manifest["record_type"] != "bscan":
        raise ds.InconsistentManifestError("features expects a B-scan dataset")
    by_channel = {
        entry.get("channel", "co"): rec
        for rec, entry in zip(contents.records, contents.entries)
    }
    if "co" not in by_channel or "cross" not in by_channel:
        raise ds.InconsistentManifestError("features needs both polarization channels")
    b_co, b_cross = by_channel["co"], by_channel["cross"]
    eps = args.eps
    speed = args.speed
    if (eps is None or speed is None) and b_co.scene is not None and b_co.scan is not None:
        eps = eps if eps is not None else b_co.scene.permittivity
        speed = speed if speed is not None else b_co.scan.speed
    if eps is None or speed is None:
        print("features: need --eps and --speed when scans carry no provenance", file=sys.stderr)
        return EXIT_USAGE

    img = rma(b_co, eps, speed, frame_rate=args.frame_rate, taper=True)
    detections = cfar_detect(img, CfarConfig(guard=args.guard, pfa=args.pfa))
    wf = b_co.waveform
    rows = []
    for d in detections:
        sample = extract_sequence(b_co, b_cross, d, window=args.window)
        feats = dispersion_features(sample.co.astype(float), wf)
        spec = estimate_reflection_spectrum(sample.co.astype(float), wf)
        band_gain = float(np.mean(np.abs(spec.gamma[spec.valid]))) if spec.valid.any() else 0.0
        co_rms = float(np.sqrt(np.mean(sample.co.astype(float) ** 2)))
        cross_rms = float(np.sqrt(np.mean(sample.cross.astype(float) ** 2)))
        rows.append(
            {
                "x_m": d.x,
                "depth_m": d.depth,
                "snr_db": d.snr_db,
                "envelope_width_s": feats.envelope_width,
                "spectral_centroid_hz": feats.spectral_centroid,
                "spectral_skewness": feats.spectral_skewness,
                "band_reflectivity": band_gain,
                "cross_to_co_rms": cross_rms / co_rms if co_rms > 0 else 0.0,
            }
        )
    out = Path(args.out) if args.out else Path(args.indir) / "features.csv"
    with open(out, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(
            f,
            fieldnames=[
                "x_m",
                "depth_m",
                "snr_db",
                "envelope_width_s",
                "spectral_centroid_hz",
                "spectral_skewness",
                "band_reflectivity",
                "cross_to_co_rms",
            ],
        )
        writer.writeheader()
        writer.writerows(rows)
    print(f"{len(rows)} feature rows -> {out}")
    return EXIT_OK


def cmd_export_dataset(args) -> int:
    if args.kind == "inet":
        ds.generate_inet_dataset(args.out, args.n, args.seed)
    else:
        ds.generate_mnet_dataset(args.out, args.n, args.seed)
    print(f"wrote {args.n} {args.kind} records to {args.out}")
    return EXIT_OK


def _error_cdf(errors):
    values = np.sort(np.asarray(errors, dtype=float))
    return [(float(v), (i + 1) / len(values)) for i, v in enumerate(values)]


def cmd_eval(args) -> int:
    pred = _load_json(Path(args.pred) / "detections.json" if Path(args.pred).is_dir() else args.pred)
    truth_contents = ds.read_dataset(args.truth)
    targets = []
    for entry in truth_contents.entries:
        scene = entry.get("scene")
        if scene:
            targets.extend(ds.target_from_dict(t) for t in scene.get("targets", []))
    if not targets:
        raise ds.InconsistentManifestError("truth dataset carries no target provenance")

    errors_x, errors_z = [], []
    for image_report in pred.get("images", []):
        for rec in image_report.get("detections", []):
            best = min(
                targets,
                key=lambda t: (rec["x"] - t.x) ** 2 + (rec["depth"] - t.depth) ** 2,
            )
            errors_x.append(abs(rec["x"] - best.x))
            errors_z.append(abs(rec["depth"] - best.depth))
    if not errors_x:
        print("eval: no detections to score", file=sys.stderr)
        return EXIT_BAD_INPUT

    out = Path(args.out) if args.out else Path("eval_cdf.csv")
    with open(out, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "error_m", "cdf"])
        for v, c in _error_cdf(errors_x):
            writer.writerow(["x", f"{v:.6f}", f"{c:.6f}"])
        for v, c in _error_cdf(errors_z):
            writer.writerow(["depth", f"{v:.6f}", f"{c:.6f}"])
    print(
        f"median |x_e-x_a| = {np.median(errors_x) * 100:.2f} cm, "
        f"median |z_e-z_a| = {np.median(errors_z) * 100:.2f} cm -> {out}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wallradar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize dual-channel B-scans")
    p.add_argument("--scene", required=True)
    p.add_argument("--scan", required=True)
    p.add_argument("--out", required=True)
    _add_waveform_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("focus", help="focus B-scans into depth images")
    p.add_argument("--algo", choices=("rma", "bp"), default="rma")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--speed", type=float, required=True)
    p.add_argument("--frame-rate", type=float, default=40.0)
    # aperture taper suppresses truncation wings that otherwise CFAR-detect
    p.add_argument("--taper", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_focus)

    p = sub.add_parser("detect", help="CFAR detection on focused images")
    p.add_argument("--pfa", type=float, default=1e-4)
    p.add_argument("--train", type=int, default=8)
    # guard sized to the focused point response, wider than the bare-cell default
    p.add_argument("--guard", type=int, default=10)
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("features", help="per-detection dispersion/polarimetry features")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--speed", type=float, default=None)
    p.add_argument("--frame-rate", type=float, default=40.0)
    p.add_argument("--pfa", type=float, default=1e-4)
    p.add_argument("--guard", type=int, default=10)
    p.add_argument("--window", type=int, default=10)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("export-dataset", help="write training datasets")
    p.add_argument("--kind", choices=("inet", "mnet"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_dataset)

    p = sub.add_parser("eval", help="CDF tables of localization errors")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ds.DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
