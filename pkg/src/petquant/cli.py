"""Command-line interface and cohort orchestration.

Subcommands: extract (six metrics per patient), detect (lesion matching),
evaluate (agreement suite + detection summary), vote (ensemble masks),
loss (kernel values for a probability field), phantom (synthetic data).

Outputs are byte-deterministic: CSV floats use 9 significant digits, JSON
floats use Python's shortest round-trip repr, and row order follows
patient_id. Nothing in the pipeline depends on wall-clock time.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .agreement import AgreementConfig, PairedSeries, evaluate_series, report_to_dict
from .components import connected_components
from .detection import cohort_summary, dice_coefficient, f1_score, match_lesions
from .io import FileFormat, load_mask, load_volume, save_mask, save_volume
from .losses import LossConfig, ProbabilityField, all_losses, l1_norms, norm_histogram
from .metrics import patient_metrics
from .phantom import PerturbationSpec, generate_phantom, perturb_mask, random_phantom_spec
from .preprocess import CT_CLIP_MAX, CT_CLIP_MIN, DEFAULT_VOTE_THRESHOLD, majority_vote
from .volume import Connectivity, VoxelSpacing

METRIC_COLUMNS = ("suv_mean", "suv_max", "tmtv_cc", "tla", "dmax_cm", "lesion_count")
METRICS_CSV_HEADER = ("patient_id", "source") + METRIC_COLUMNS
DETECTION_CSV_HEADER = ("patient_id", "tp", "fp", "fn", "f1", "dsc")

_EPILOG = (
    "pipeline constants: equivalence margin 0.2 of the reference mean; "
    "TOST alpha 0.05; TDI percentile tau 0.95; focal gamma 2; histogram "
    f"bin width kappa 0.1; ensemble vote threshold {DEFAULT_VOTE_THRESHOLD} of 5; "
    f"CT clip [{CT_CLIP_MIN:g}, {CT_CLIP_MAX:g}] HU"
)


@dataclass(frozen=True)
class PatientEntry:
    patient_id: str
    suv_path: Path
    gt_mask_path: Path
    pred_mask_paths: tuple[Path, ...]


class ManifestError(Exception):
    pass


def parse_manifest(path: str | Path) -> list[PatientEntry]:
    """Read the cohort manifest CSV; paths resolve relative to the manifest."""
    path = Path(path)
    base = path.parent
    entries = []
    seen = set()
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"patient_id", "suv_path", "gt_mask_path", "pred_mask_paths"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ManifestError(
                    f"{path}: manifest must have header columns {sorted(required)}"
                )
            for row in reader:
                pid = row["patient_id"].strip()
                if not pid:
                    raise ManifestError(f"{path}: empty patient_id")
                if pid in seen:
                    raise ManifestError(f"{path}: duplicate patient_id {pid!r}")
                seen.add(pid)
                preds = tuple(
                    base / p.strip() for p in row["pred_mask_paths"].split(";") if p.strip()
                )
                if not preds:
                    raise ManifestError(f"{path}: patient {pid!r} has no prediction masks")
                entries.append(PatientEntry(
                    patient_id=pid,
                    suv_path=base / row["suv_path"].strip(),
                    gt_mask_path=base / row["gt_mask_path"].strip(),
                    pred_mask_paths=preds,
                ))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    entries.sort(key=lambda e: e.patient_id)
    return entries


def missing_files(entries: list[PatientEntry]) -> list[tuple[str, Path]]:
    gone = []
    for e in entries:
        for p in (e.suv_path, e.gt_mask_path, *e.pred_mask_paths):
            if not p.exists():
                gone.append((e.patient_id, p))
    return gone


def _load_prediction(entry: PatientEntry, vote_threshold: int | None):
    masks = [load_mask(p) for p in entry.pred_mask_paths]
    if len(masks) == 1 and vote_threshold is None:
        return masks[0]
    return majority_vote(masks, vote_threshold)


def extract_cohort(entries: list[PatientEntry], connectivity: Connectivity,
                   vote_threshold: int | None) -> tuple[list[dict], list[str]]:
    """Six metrics per patient for both gt and pred sources.

    Per-patient failures become an error row (source='error') and are also
    returned as messages; processing continues with the next patient.
    """
    rows, errors = [], []
    for entry in entries:
        try:
            volume = load_volume(entry.suv_path)
            gt = load_mask(entry.gt_mask_path)
            pred = _load_prediction(entry, vote_threshold)
            for source, mask in (("gt", gt), ("pred", pred)):
                pm = patient_metrics(volume, mask, connectivity)
                rows.append({
                    "patient_id": entry.patient_id,
                    "source": source,
                    "suv_mean": pm.suv_mean,
                    "suv_max": pm.suv_max,
                    "tmtv_cc": pm.tmtv,
                    "tla": pm.tla,
                    "dmax_cm": pm.dmax,
                    "lesion_count": pm.lesion_count,
                })
        except Exception as exc:  # noqa: BLE001 - per-patient isolation
            errors.append(f"{entry.patient_id}: {exc}")
            rows.append({"patient_id": entry.patient_id, "source": "error",
                         **{c: None for c in METRIC_COLUMNS}})
    return rows, errors


def detect_cohort(entries: list[PatientEntry], connectivity: Connectivity,
                  vote_threshold: int | None) -> tuple[list[dict], list[str]]:
    """Per-patient detection scores (TP/FP/FN, F1, patient Dice)."""
    rows, errors = [], []
    for entry in entries:
        try:
            volume = load_volume(entry.suv_path)
            gt = load_mask(entry.gt_mask_path)
            pred = _load_prediction(entry, vote_threshold)
            outcome = match_lesions(
                volume,
                connected_components(gt, connectivity),
                connected_components(pred, connectivity),
            )
            rows.append({
                "patient_id": entry.patient_id,
                "tp": outcome.tp,
                "fp": outcome.fp,
                "fn": outcome.fn,
                "f1": f1_score(outcome),
                "dsc": dice_coefficient(gt, pred),
            })
        except Exception as exc:  # noqa: BLE001
            errors.append(f"{entry.patient_id}: {exc}")
    return rows, errors


def evaluate_metrics(metric_rows: list[dict], cfg: AgreementConfig) -> dict:
    """Agreement suite over gt/pred metric rows aligned by patient_id."""
    by_source: dict[str, dict[str, dict]] = {"gt": {}, "pred": {}}
    for row in metric_rows:
        src = row["source"]
        if src in by_source:
            by_source[src][row["patient_id"]] = row

    gt_ids = sorted(by_source["gt"])
    pred_ids = sorted(by_source["pred"])
    if gt_ids != pred_ids:
        odd = sorted(set(gt_ids).symmetric_difference(pred_ids))
        raise ValueError(f"unmatched patient_id(s) between gt and pred rows: {', '.join(odd)}")
    if not gt_ids:
        raise ValueError("no gt/pred metric rows to evaluate")

    reports = []
    for metric in METRIC_COLUMNS:
        series = PairedSeries(
            metric_name=metric,
            y=np.array([float(by_source["gt"][pid][metric]) for pid in gt_ids]),
            y_hat=np.array([float(by_source["pred"][pid][metric]) for pid in gt_ids]),
        )
        reports.append(report_to_dict(evaluate_series(series, cfg), cfg))
    return {
        "config": {"delta": cfg.delta_fraction, "alpha": cfg.alpha, "tau": cfg.tau},
        "n_patients": len(gt_ids),
        "metrics": reports,
    }


def summarize_detection(det_rows: list[dict]) -> dict:
    """Cohort detection summary: mean TP/FP/FN/F1 and mean/median/IQR DSC.

    Patients with an undefined F1 (no lesions anywhere) are excluded from
    the F1 mean only.
    """
    if not det_rows:
        raise ValueError("no detection rows to summarize")

    def col(name):
        return np.array([float(r[name]) for r in det_rows], dtype=np.float64)

    f1_vals = np.array([float(r["f1"]) for r in det_rows if r["f1"] is not None])
    dsc = cohort_summary(col("dsc"))
    out = {"n_patients": len(det_rows)}
    for name in ("tp", "fp", "fn"):
        vals = col(name)
        out[f"mean_{name}"] = float(vals.mean())
        out[f"std_{name}"] = float(vals.std())
    out["mean_f1"] = float(f1_vals.mean()) if f1_vals.size else None
    out["std_f1"] = float(f1_vals.std()) if f1_vals.size else None
    out["mean_dsc"] = dsc.mean
    out["std_dsc"] = dsc.std
    out["median_dsc"] = dsc.median
    out["q25_dsc"] = dsc.iqr[0]
    out["q75_dsc"] = dsc.iqr[1]
    return out


# ---------------------------------------------------------------------------
# deterministic serialization

def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def write_csv(path: Path, header: tuple[str, ...], rows: list[dict]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt_cell(row.get(col)) for col in header))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_metrics_csv(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {"patient_id": row["patient_id"], "source": row["source"]}
            for col in METRIC_COLUMNS:
                raw = row.get(col, "")
                parsed[col] = float(raw) if raw not in ("", None) else None
            rows.append(parsed)
    return rows


def read_metrics_file(path: str | Path) -> list[dict]:
    """Metric rows from either the CSV or the JSON that extract writes."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())["rows"]
    return read_metrics_csv(path)


def read_detection_csv(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "patient_id": row["patient_id"],
                "tp": int(row["tp"]),
                "fp": int(row["fp"]),
                "fn": int(row["fn"]),
                "f1": float(row["f1"]) if row["f1"] != "" else None,
                "dsc": float(row["dsc"]),
            })
    return rows


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="optional JSON config file; explicit flags override it")
    p.add_argument("--connectivity", type=int, choices=(6, 18, 26), default=None,
                   help="component neighborhood (default: 26)")
    p.add_argument("--delta", type=float, default=None,
                   help="equivalence margin as a fraction of the reference mean (default: 0.2)")
    p.add_argument("--alpha", type=float, default=None,
                   help="TOST significance level (default: 0.05)")
    p.add_argument("--tau", type=float, default=None,
                   help="TDI percentile (default: 0.95)")
    p.add_argument("--vote", type=int, default=None, metavar="K",
                   help="majority-vote threshold for multiple prediction masks "
                        "(default: 3 for five masks, strict majority otherwise)")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for anything randomized (default: 0)")
    p.add_argument("--format", choices=("csv", "json", "both"), default=None,
                   help="tabular report format(s) to write (default: both)")
    p.add_argument("--image-format", choices=("rawjson", "nifti"), default=None,
                   help="volume/mask output format (default: rawjson)")


_CONFIG_DEFAULTS = {
    "connectivity": 26,
    "delta": 0.2,
    "alpha": 0.05,
    "tau": 0.95,
    "vote": None,
    "seed": 0,
    "format": "both",
    "image_format": "rawjson",
}


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the JSON config file, overridden by flags."""
    cfg = dict(_CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read config {args.config}: {exc}") from exc
        for key in cfg:
            if key in loaded:
                cfg[key] = loaded[key]
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="petquant",
        description="Quantify 3D PET lesion segmentations and score cohort agreement.",
        epilog=_EPILOG,
    )
    parser.add_argument("--version", action="version", version=f"petquant {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser("extract", epilog=_EPILOG,
                               help="compute the six clinical metrics per patient")
    p_extract.add_argument("--manifest", type=Path, required=True)
    p_extract.add_argument("--out-dir", type=Path, required=True)
    _add_common(p_extract)

    p_detect = sub.add_parser("detect", epilog=_EPILOG,
                              help="score predicted lesions against ground truth")
    p_detect.add_argument("--manifest", type=Path, required=True)
    p_detect.add_argument("--out-dir", type=Path, required=True)
    _add_common(p_detect)

    p_eval = sub.add_parser("evaluate", epilog=_EPILOG,
                            help="run the statistical agreement suite over extracted metrics")
    p_eval.add_argument("--metrics", type=Path, required=True,
                        help="metrics CSV (or JSON) produced by extract")
    p_eval.add_argument("--detection", type=Path, default=None,
                        help="optional detection CSV produced by detect")
    p_eval.add_argument("--out-dir", type=Path, required=True)
    _add_common(p_eval)

    p_vote = sub.add_parser("vote", epilog=_EPILOG,
                            help="majority-vote an ensemble of masks")
    p_vote.add_argument("--inputs", type=Path, nargs="+", required=True)
    p_vote.add_argument("--out", type=Path, required=True)
    _add_common(p_vote)

    p_loss = sub.add_parser("loss", epilog=_EPILOG,
                            help="evaluate segmentation loss kernels on a probability field")
    p_loss.add_argument("--pred", type=Path, required=True,
                        help="foreground probability volume (RAWJSON or NIfTI)")
    p_loss.add_argument("--gt", type=Path, required=True,
                        help="binary ground-truth mask")
    p_loss.add_argument("--epsilon", type=float, default=1e-5,
                        help="Dice denominator guard (default: %(default)s)")
    p_loss.add_argument("--gamma", type=float, default=2.0,
                        help="focal exponent (default: %(default)s)")
    p_loss.add_argument("--focal-alpha", type=float, default=1.0,
                        help="focal balance factor (default: %(default)s)")
    p_loss.add_argument("--kappa", type=float, default=0.1,
                        help="L1-error histogram bin width (default: %(default)s)")
    p_loss.add_argument("--out", type=Path, default=None,
                        help="also write the JSON report here")

    p_phantom = sub.add_parser("phantom", epilog=_EPILOG,
                               help="generate a synthetic phantom patient")
    p_phantom.add_argument("--out-dir", type=Path, required=True)
    p_phantom.add_argument("--name", default="phantom",
                           help="file prefix (default: %(default)s)")
    p_phantom.add_argument("--dims", default="24,24,24",
                           help="grid size nx,ny,nz (default: %(default)s)")
    p_phantom.add_argument("--spacing", default="2,2,2",
                           help="voxel spacing mm (default: %(default)s)")
    p_phantom.add_argument("--max-lesions", type=int, default=3,
                           help="lesion count upper bound (default: %(default)s)")
    p_phantom.add_argument("--noise-sd", type=float, default=0.0,
                           help="background noise sd (default: %(default)s)")
    p_phantom.add_argument("--perturb-drop", type=float, default=0.0,
                           help="probability of dropping each lesion in pred (default: %(default)s)")
    p_phantom.add_argument("--perturb-add", type=float, default=0.0,
                           help="probability of injecting each false blob in pred (default: %(default)s)")
    p_phantom.add_argument("--perturb-dilate", type=int, default=0,
                           help="dilation (+) or erosion (-) steps for pred (default: %(default)s)")
    p_phantom.add_argument("--perturb-shift", type=int, default=0,
                           help="voxel shift applied to pred (default: %(default)s)")
    _add_common(p_phantom)
    return parser


# ---------------------------------------------------------------------------
# subcommand drivers

def _cmd_extract(args) -> int:
    cfg = resolve_config(args)
    entries = parse_manifest(args.manifest)
    gone = missing_files(entries)
    if gone:
        for pid, p in gone:
            print(f"error: patient {pid}: missing file {p}", file=sys.stderr)
        return 2
    conn = Connectivity.from_int(cfg["connectivity"])
    rows, errors = extract_cohort(entries, conn, cfg["vote"])
    args.out_dir.mkdir(parents=True, exist_ok=True)
    if cfg["format"] in ("csv", "both"):
        write_csv(args.out_dir / "metrics.csv", METRICS_CSV_HEADER, rows)
    if cfg["format"] in ("json", "both"):
        write_json(args.out_dir / "metrics.json", {"config": cfg, "rows": rows})
    for msg in errors:
        print(f"error: {msg}", file=sys.stderr)
    return 1 if errors else 0


def _cmd_detect(args) -> int:
    cfg = resolve_config(args)
    entries = parse_manifest(args.manifest)
    gone = missing_files(entries)
    if gone:
        for pid, p in gone:
            print(f"error: patient {pid}: missing file {p}", file=sys.stderr)
        return 2
    conn = Connectivity.from_int(cfg["connectivity"])
    rows, errors = detect_cohort(entries, conn, cfg["vote"])
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(args.out_dir / "detection.csv", DETECTION_CSV_HEADER, rows)
    for msg in errors:
        print(f"error: {msg}", file=sys.stderr)
    return 1 if errors else 0


def _cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    agreement_cfg = AgreementConfig(
        delta_fraction=cfg["delta"], alpha=cfg["alpha"], tau=cfg["tau"],
    )
    metric_rows = [r for r in read_metrics_file(args.metrics) if r["source"] != "error"]
    try:
        report = evaluate_metrics(metric_rows, agreement_cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_json(args.out_dir / "agreement.json", report)
    if args.detection is not None:
        det_rows = read_detection_csv(args.detection)
        summary = summarize_detection(det_rows)
        if cfg["format"] in ("csv", "both"):
            write_csv(args.out_dir / "detection_summary.csv",
                      tuple(summary.keys()), [summary])
        if cfg["format"] in ("json", "both"):
            write_json(args.out_dir / "detection_summary.json", summary)
    return 0


def _cmd_vote(args) -> int:
    cfg = resolve_config(args)
    masks = [load_mask(p) for p in args.inputs]
    voted = majority_vote(masks, cfg["vote"])
    save_mask(voted, args.out)  # format detected from the suffix
    return 0


def _cmd_loss(args) -> int:
    loss_cfg = LossConfig(epsilon=args.epsilon, gamma=args.gamma,
                          alpha=args.focal_alpha, kappa=args.kappa)
    pred = load_volume(args.pred)
    gt = load_mask(args.gt)
    field = ProbabilityField.from_foreground(pred.data, gt)
    values = all_losses(field, loss_cfg)
    hist = norm_histogram(l1_norms(field), loss_cfg)
    values["histogram"] = [
        {"center": float(c), "count": int(n), "width": float(w), "weight": float(wt)}
        for c, n, w, wt in zip(hist.centers, hist.counts, hist.widths, hist.weights)
    ]
    text = json.dumps(values, indent=2, sort_keys=True)
    print(text)
    if args.out is not None:
        args.out.write_text(text + "\n")
    return 0


def _parse_triplet(text: str, cast):
    parts = [cast(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated values, got {text!r}")
    return tuple(parts)


def _cmd_phantom(args) -> int:
    cfg = resolve_config(args)
    dims = _parse_triplet(args.dims, int)
    spacing = VoxelSpacing(*_parse_triplet(args.spacing, float))
    spec = random_phantom_spec(
        seed=cfg["seed"], dims=dims, spacing=spacing,
        max_lesions=args.max_lesions, noise_sd=args.noise_sd,
    )
    volume, gt_mask, expected = generate_phantom(spec)
    pred_mask = perturb_mask(gt_mask, PerturbationSpec(
        seed=cfg["seed"] + 1,
        drop_lesion_prob=args.perturb_drop,
        add_false_prob=args.perturb_add,
        dilate_erode_voxels=args.perturb_dilate,
        shift_voxels=args.perturb_shift,
    ))

    args.out_dir.mkdir(parents=True, exist_ok=True)
    if cfg["image_format"] == "rawjson":
        fmt, ext = FileFormat.RAWJSON, ".json"
    else:
        fmt, ext = FileFormat.NIFTI1, ".nii.gz"
    prefix = args.out_dir / args.name
    save_volume(volume, Path(f"{prefix}_suv{ext}"), fmt)
    save_mask(gt_mask, Path(f"{prefix}_gt{ext}"), fmt)
    save_mask(pred_mask, Path(f"{prefix}_pred{ext}"), fmt)
    write_json(Path(f"{prefix}_expected.json"), {
        "patient_id": args.name,
        "suv_mean": expected.suv_mean,
        "suv_max": expected.suv_max,
        "tmtv_cc": expected.tmtv,
        "tla": expected.tla,
        "dmax_cm": expected.dmax,
        "lesion_count": expected.lesion_count,
    })
    return 0


_COMMANDS = {
    "extract": _cmd_extract,
    "detect": _cmd_detect,
    "evaluate": _cmd_evaluate,
    "vote": _cmd_vote,
    "loss": _cmd_loss,
    "phantom": _cmd_phantom,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ManifestError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
