"""Batch command-line front end: fuse, clean up, evaluate, split, pipeline.

Exit codes: 0 success, 1 validation failure, 2 I/O or file-format failure,
3 pipeline completed with per-subject failures. All outputs are
deterministic: no timestamps, fixed gzip metadata, rows sorted by subject,
and results independent of ``--jobs``.
"""

from __future__ import annotations

import csv
import functools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import click

from .ensemble import average_maps
from .errors import NiftiError, ValidationError
from .metrics import MetricReport, aggregate, evaluate_case
from .nifti import read_volume, write_volume
from .postprocess import PostprocessParams, postprocess
from .splits import fold_summary, read_subject_records, size_balanced_split, write_fold_csv
from .volume import as_binary_mask, as_probability_map

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_PARTIAL = 3

FORMAT_VERSION = 1

_METRIC_COLUMNS = (
    "subject_id",
    "dice",
    "lesion_f1",
    "slc",
    "vd",
    "hd95",
    "pred_components",
    "gt_components",
)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            _fail(EXIT_VALIDATION, str(exc))
        except (NiftiError, OSError) as exc:
            _fail(EXIT_IO, str(exc))

    return wrapper


def _write_json(path: Path | str, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def _load_json_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        config = json.load(f)
    if not isinstance(config, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return config


def _build_params(
    config: dict,
    base_threshold: float | None,
    high_threshold: float | None,
    min_peak_prob: float | None,
    small_case_cutoff: int | None,
    connectivity: int | None,
) -> PostprocessParams:
    """Merge config-file values with CLI flags; flags win."""
    section = config.get("postprocess") or {}
    if not isinstance(section, dict):
        raise ValidationError('"postprocess" config section must be a JSON object')
    allowed = {
        "base_threshold",
        "high_threshold",
        "min_peak_probability",
        "small_case_cutoff",
    }
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ValidationError(f"unknown postprocess config key(s): {unknown}")

    defaults = PostprocessParams()

    def pick(flag, key, fallback):
        if flag is not None:
            return flag
        return section.get(key, fallback)

    conn = connectivity if connectivity is not None else config.get(
        "connectivity", defaults.connectivity
    )
    return PostprocessParams(
        base_threshold=pick(base_threshold, "base_threshold", defaults.base_threshold),
        high_threshold=pick(high_threshold, "high_threshold", defaults.high_threshold),
        min_peak_probability=pick(
            min_peak_prob, "min_peak_probability", defaults.min_peak_probability
        ),
        small_case_cutoff=pick(
            small_case_cutoff, "small_case_cutoff", defaults.small_case_cutoff
        ),
        connectivity=conn,
    )


def _postprocess_option(*names, **kwargs):
    return click.option(*names, default=None, **kwargs)


@click.group()
def cli():
    """Probability-map fusion, cleanup, evaluation, and CV-split tools."""


# ---------------------------------------------------------------------------
# ensemble
# ---------------------------------------------------------------------------


@cli.command("ensemble")
@click.option("-i", "--input", "inputs", multiple=True, required=True,
              help="Probability-map file; repeat once per model.")
@click.option("-o", "--output", required=True, help="Fused map output path.")
@click.option("-w", "--weight", "weights", multiple=True, type=float,
              help="Optional per-input weight; repeat to match inputs.")
@_handle_errors
def cmd_ensemble(inputs, output, weights):
    """Average probability maps voxelwise into one fused map."""
    maps = [as_probability_map(read_volume(p)) for p in inputs]
    fused = average_maps(maps, list(weights) if weights else None)
    write_volume(fused, output, datatype="float32")


# ---------------------------------------------------------------------------
# postprocess
# ---------------------------------------------------------------------------


@cli.command("postprocess")
@click.option("-i", "--input", "input_path", required=True,
              help="Probability-map file to clean up.")
@click.option("-o", "--output", required=True, help="Binary mask output path.")
@click.option("--report", "report_path", required=True,
              help="JSON report output path.")
@_postprocess_option("--base-threshold", type=float)
@_postprocess_option("--high-threshold", type=float)
@_postprocess_option("--min-peak-prob", type=float)
@_postprocess_option("--small-case-cutoff", type=int)
@_postprocess_option("--connectivity", type=int)
@click.option("--config", "config_path", default=None,
              help="JSON config supplying parameter defaults; flags override.")
@_handle_errors
def cmd_postprocess(input_path, output, report_path, base_threshold, high_threshold,
                    min_peak_prob, small_case_cutoff, connectivity, config_path):
    """Threshold and clean up a probability map; write mask plus JSON report."""
    params = _build_params(
        _load_json_config(config_path),
        base_threshold, high_threshold, min_peak_prob, small_case_cutoff, connectivity,
    )
    prob = as_probability_map(read_volume(input_path))
    mask, report = postprocess(prob, params)
    write_volume(mask, output, datatype="uint8")
    _write_json(report_path, {"format_version": FORMAT_VERSION, **report.to_dict()})


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _read_manifest(path: str) -> list[tuple[str, str, str]]:
    with open(path, newline="") as f:
        rows = [line for line in f if not line.startswith("#")]
    reader = csv.DictReader(rows)
    fields = reader.fieldnames or []
    required = {"subject_id", "pred_file", "gt_file"}
    if not required.issubset(fields):
        raise ValidationError(
            f"{path}: manifest header must contain subject_id,pred_file,gt_file, "
            f"got {fields}"
        )
    pairs = []
    seen = set()
    for row in reader:
        sid = row["subject_id"]
        if sid in seen:
            raise ValidationError(f"{path}: duplicate subject_id {sid!r}")
        seen.add(sid)
        pairs.append((sid, row["pred_file"], row["gt_file"]))
    if not pairs:
        raise ValidationError(f"{path}: no subject rows found")
    return pairs


def _resolve(base: str, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else Path(base) / p


def _format_float(x: float) -> str:
    return repr(float(x))


def _write_metrics_csv(path: Path | str, results: list[tuple[str, MetricReport]]) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# format_version={FORMAT_VERSION}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(_METRIC_COLUMNS)
        for sid, r in results:
            writer.writerow([
                sid,
                _format_float(r.dice),
                _format_float(r.lesion_f1),
                r.slc,
                r.vd,
                "" if r.hd95 is None else _format_float(r.hd95),
                r.pred_components,
                r.gt_components,
            ])


def _evaluate_pairs(pairs, connectivity, jobs):
    """Evaluate (sid, pred_path, gt_path) tuples; returns results sorted by sid."""

    def one(pair):
        sid, pred_path, gt_path = pair
        pred = as_binary_mask(read_volume(pred_path))
        gt = as_binary_mask(read_volume(gt_path))
        return sid, evaluate_case(pred, gt, connectivity)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(one, pairs))
    return sorted(results, key=lambda item: item[0])


@cli.command("evaluate")
@click.option("--pred-dir", required=True, help="Directory holding predicted masks.")
@click.option("--gt-dir", required=True, help="Directory holding ground-truth masks.")
@click.option("--manifest", required=True,
              help="CSV pairing manifest: subject_id,pred_file,gt_file.")
@click.option("--metrics-csv", required=True, help="Per-case CSV output path.")
@click.option("--summary-json", required=True, help="Aggregate JSON output path.")
@click.option("--connectivity", type=int, default=26, show_default=True)
@click.option("--jobs", type=int, default=os.cpu_count, help="Worker threads.")
@_handle_errors
def cmd_evaluate(pred_dir, gt_dir, manifest, metrics_csv, summary_json, connectivity, jobs):
    """Score predicted masks against ground truth over a pairing manifest."""
    pairs = [
        (sid, _resolve(pred_dir, pred_name), _resolve(gt_dir, gt_name))
        for sid, pred_name, gt_name in _read_manifest(manifest)
    ]
    missing = sorted(
        sid for sid, pred_path, gt_path in pairs
        if not pred_path.exists() or not gt_path.exists()
    )
    if missing:
        _fail(EXIT_IO, f"missing prediction/ground-truth files for: {', '.join(missing)}")

    results = _evaluate_pairs(pairs, connectivity, jobs)
    _write_metrics_csv(metrics_csv, results)
    agg = aggregate([r for _, r in results])
    _write_json(summary_json, {"format_version": FORMAT_VERSION, **agg.to_dict()})


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------


@cli.command("split")
@click.option("-i", "--input", "input_path", required=True,
              help="Cohort CSV: subject_id,lesion_volume.")
@click.option("-k", "--folds", "k", type=int, required=True, help="Fold count.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--folds-csv", required=True, help="Assignment CSV output path.")
@click.option("--summary-json", required=True, help="Per-fold summary JSON path.")
@click.option("--jobs", type=int, default=1, help="Accepted for symmetry; unused.")
@_handle_errors
def cmd_split(input_path, k, seed, folds_csv, summary_json, jobs):
    """Assign subjects to lesion-size-balanced cross-validation folds."""
    records = read_subject_records(input_path)
    fa = size_balanced_split(records, k, seed)
    write_fold_csv(fa, folds_csv)
    summaries = fold_summary(fa, records)
    _write_json(summary_json, {
        "format_version": FORMAT_VERSION,
        "k": fa.k,
        "seed": fa.seed,
        "folds": [
            {
                "fold": s.fold,
                "count": s.count,
                "mean_volume": s.mean_volume,
                "median_volume": s.median_volume,
            }
            for s in summaries
        ],
    })


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Subject:
    id: str
    maps: tuple[Path, ...]
    gt: Path | None


def _load_pipeline_plan(config_path, output_dir_flag):
    config = _load_json_config(config_path)
    base = Path(config_path).resolve().parent

    if output_dir_flag is not None:
        output_dir = Path(output_dir_flag)
    else:
        raw = config.get("output_dir")
        if raw is None:
            raise ValidationError('pipeline config must set "output_dir"')
        output_dir = _resolve(base, raw)

    formats = config.get("report_formats", ["csv", "json"])
    if not isinstance(formats, list) or not set(formats) <= {"csv", "json"}:
        raise ValidationError(
            f'"report_formats" must be a list drawn from ["csv", "json"], got {formats!r}'
        )

    raw_subjects = config.get("subjects")
    if not raw_subjects or not isinstance(raw_subjects, list):
        raise ValidationError('pipeline config must set a non-empty "subjects" list')
    subjects = []
    seen = set()
    for entry in raw_subjects:
        if not isinstance(entry, dict) or "id" not in entry or "maps" not in entry:
            raise ValidationError(
                'each subject needs at least {"id": ..., "maps": [...]}'
            )
        sid = str(entry["id"])
        if not sid or "/" in sid or os.sep in sid:
            raise ValidationError(f"subject id {sid!r} is not a valid directory name")
        if sid in seen:
            raise ValidationError(f"duplicate subject id {sid!r}")
        seen.add(sid)
        maps = entry["maps"]
        if not isinstance(maps, list) or not maps:
            raise ValidationError(f"subject {sid!r} needs a non-empty maps list")
        gt = entry.get("gt")
        subjects.append(
            _Subject(
                id=sid,
                maps=tuple(_resolve(base, m) for m in maps),
                gt=_resolve(base, gt) if gt else None,
            )
        )
    subjects.sort(key=lambda s: s.id)
    return config, output_dir, formats, subjects


def _run_subject(subject: _Subject, output_dir: Path, params: PostprocessParams,
                 force: bool) -> bool:
    """Fuse and clean one subject; returns True if work was performed."""
    subj_dir = output_dir / subject.id
    prob_path = subj_dir / "prob.nii.gz"
    mask_path = subj_dir / "mask.nii.gz"
    report_path = subj_dir / "postprocess.json"
    if not force and prob_path.exists() and mask_path.exists() and report_path.exists():
        return False

    maps = [as_probability_map(read_volume(p)) for p in subject.maps]
    fused = average_maps(maps)
    subj_dir.mkdir(parents=True, exist_ok=True)
    write_volume(fused, prob_path, datatype="float32")

    # Re-read the written map so the data flow matches chained subcommands.
    prob = as_probability_map(read_volume(prob_path))
    mask, report = postprocess(prob, params)
    write_volume(mask, mask_path, datatype="uint8")
    _write_json(report_path, {"format_version": FORMAT_VERSION, **report.to_dict()})
    return True


@cli.command("pipeline")
@click.option("--config", "config_path", required=True,
              help="Pipeline JSON config (subjects, parameters, output_dir).")
@click.option("--output-dir", default=None, help="Override the config output_dir.")
@_postprocess_option("--base-threshold", type=float)
@_postprocess_option("--high-threshold", type=float)
@_postprocess_option("--min-peak-prob", type=float)
@_postprocess_option("--small-case-cutoff", type=int)
@_postprocess_option("--connectivity", type=int)
@click.option("--jobs", type=int, default=os.cpu_count, help="Worker threads.")
@click.option("--force", is_flag=True, help="Recompute even if outputs exist.")
@_handle_errors
def cmd_pipeline(config_path, output_dir, base_threshold, high_threshold, min_peak_prob,
                 small_case_cutoff, connectivity, jobs, force):
    """Run fuse, cleanup, and (with ground truth) evaluation per subject.

    Subjects whose outputs already exist are skipped unless --force is given;
    every subject is attempted and failures are reported together.
    """
    config, out_dir, formats, subjects = _load_pipeline_plan(config_path, output_dir)
    params = _build_params(config, base_threshold, high_threshold, min_peak_prob,
                           small_case_cutoff, connectivity)

    out_dir.mkdir(parents=True, exist_ok=True)
    statuses: dict[str, bool] = {}
    failures: dict[str, str] = {}

    def worker(subject: _Subject):
        try:
            return subject.id, _run_subject(subject, out_dir, params, force), None
        except (ValidationError, NiftiError, OSError) as exc:
            return subject.id, False, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for sid, processed, error in pool.map(worker, subjects):
            if error is not None:
                failures[sid] = error
            else:
                statuses[sid] = processed

    scored = [s for s in subjects if s.gt is not None and s.id not in failures]
    if scored and formats:
        metrics_csv = out_dir / "metrics.csv"
        summary_json = out_dir / "summary.json"
        wanted = [metrics_csv] if "csv" in formats else []
        wanted += [summary_json] if "json" in formats else []
        stale = force or any(statuses.values()) or any(not p.exists() for p in wanted)
        if stale:
            def eval_worker(subject: _Subject):
                try:
                    pred = as_binary_mask(read_volume(out_dir / subject.id / "mask.nii.gz"))
                    gt = as_binary_mask(read_volume(subject.gt))
                    return subject.id, evaluate_case(pred, gt, params.connectivity), None
                except (ValidationError, NiftiError, OSError) as exc:
                    return subject.id, None, str(exc)

            results = []
            with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
                for sid, report, error in pool.map(eval_worker, scored):
                    if error is not None:
                        failures[sid] = error
                    else:
                        results.append((sid, report))
            results.sort(key=lambda item: item[0])
            if results:
                if "csv" in formats:
                    _write_metrics_csv(metrics_csv, results)
                if "json" in formats:
                    agg = aggregate([r for _, r in results])
                    _write_json(summary_json,
                                {"format_version": FORMAT_VERSION, **agg.to_dict()})

    for sid in sorted(failures):
        click.echo(f"error: subject {sid}: {failures[sid]}", err=True)
    if failures:
        sys.exit(EXIT_PARTIAL)


def main():
    cli()


if __name__ == "__main__":
    main()
