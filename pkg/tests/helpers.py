"""Shared builders for test volumes."""

from __future__ import annotations

import numpy as np

from lesionkit import BinaryMask, ComponentSet, ProbabilityMap


def random_dims(rng: np.random.Generator, max_side: int, min_side: int = 1):
    return tuple(int(n) for n in rng.integers(min_side, max_side + 1, size=3))


def random_mask(
    rng: np.random.Generator,
    dims,
    density: float | None = None,
    spacing=(1.0, 1.0, 1.0),
) -> BinaryMask:
    if density is None:
        density = float(rng.uniform(0.05, 0.6))
    data = (rng.random(dims) < density).astype(np.uint8)
    return BinaryMask(data, spacing)


def random_nonempty_mask(rng, dims, density=None, spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    m = random_mask(rng, dims, density, spacing)
    if m.data.any():
        return m
    data = np.array(m.data)
    idx = tuple(int(rng.integers(0, n)) for n in dims)
    data[idx] = 1
    return BinaryMask(data, spacing)


def random_prob_map(rng, dims, spacing=(1.0, 1.0, 1.0)) -> ProbabilityMap:
    return ProbabilityMap(rng.random(dims, dtype=np.float32), spacing)


def random_spacing(rng, lo=0.5, hi=3.0):
    # float32-representable so NIfTI round trips preserve it exactly
    return tuple(float(np.float32(s)) for s in rng.uniform(lo, hi, size=3))


def blob_prob_map(
    rng,
    dims,
    n_blobs: int,
    peak_range=(0.55, 1.0),
    radius_range=(1, 3),
    background: float = 0.0,
    spacing=(1.0, 1.0, 1.0),
) -> ProbabilityMap:
    """Probability map made of rectangular blobs with chosen peak values."""
    data = np.full(dims, background, dtype=np.float32)
    for _ in range(n_blobs):
        r = int(rng.integers(radius_range[0], radius_range[1] + 1))
        center = [int(rng.integers(0, n)) for n in dims]
        peak = np.float32(rng.uniform(*peak_range))
        sl = tuple(
            slice(max(0, c - r), min(n, c + r + 1)) for c, n in zip(center, dims)
        )
        data[sl] = np.maximum(data[sl], peak)
    return ProbabilityMap(data, spacing)


def partition_of(cs: ComponentSet) -> frozenset:
    """Convert a production labeling into {frozenset of voxel tuples} form."""
    regions = []
    for label in range(1, cs.count + 1):
        coords = np.argwhere(cs.labels == label)
        regions.append(frozenset(map(tuple, coords)))
    return frozenset(regions)


def build_corpus(root, seed: int = 7, dims=(12, 10, 8)):
    """Three-subject synthetic corpus: per-model maps, ground truth, config.

    sub-a and sub-b carry real lesions; sub-c is an empty case (prediction
    and ground truth both empty), so evaluation exercises the undefined-hd95
    path. Returns a dict of the relevant paths.
    """
    import json

    from lesionkit import threshold, write_volume

    rng = np.random.default_rng(seed)
    maps_dir = root / "maps"
    gt_dir = root / "gt"
    maps_dir.mkdir(parents=True, exist_ok=True)
    gt_dir.mkdir(parents=True, exist_ok=True)

    subjects = []
    scheme_counts = {"sub-a": 2, "sub-b": 3, "sub-c": 4}
    for sid, n_schemes in scheme_counts.items():
        if sid == "sub-c":
            gt_mask = threshold(random_prob_map(rng, dims), 1.0)  # empty
            make_map = lambda: blob_prob_map(
                rng, dims, n_blobs=2, peak_range=(0.05, 0.4)
            )
        else:
            gt_mask = threshold(blob_prob_map(rng, dims, n_blobs=3), 0.55)
            make_map = lambda: blob_prob_map(
                rng, dims, n_blobs=4, peak_range=(0.3, 1.0)
            )
        map_names = []
        for i in range(n_schemes):
            name = f"{sid}_scheme{i}.nii.gz"
            write_volume(make_map(), maps_dir / name, datatype="float32")
            map_names.append(f"maps/{name}")
        gt_name = f"{sid}_gt.nii.gz"
        write_volume(gt_mask, gt_dir / gt_name, datatype="uint8")
        subjects.append({"id": sid, "maps": map_names, "gt": f"gt/{gt_name}"})

    config = {
        "format_version": 1,
        "output_dir": "out",
        "connectivity": 26,
        "postprocess": {
            "base_threshold": 0.5,
            "high_threshold": 0.55,
            "min_peak_probability": 0.7,
            "small_case_cutoff": 5000,
        },
        "subjects": subjects,
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2))
    return {
        "config": config_path,
        "maps_dir": maps_dir,
        "gt_dir": gt_dir,
        "subjects": subjects,
    }


def snapshot(root):
    """Map of relative path -> bytes for every file under root."""
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def run_manual_chain(runner, root, corpus, out_dir):
    """Chain the ensemble, postprocess, and evaluate subcommands by hand,
    mirroring the pipeline command's file layout."""
    from lesionkit.cli import cli

    def invoke(args):
        result = runner.invoke(cli, [str(a) for a in args])
        assert result.exit_code == 0, result.output

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_rows = ["subject_id,pred_file,gt_file"]
    for subject in corpus["subjects"]:
        sid = subject["id"]
        subj_dir = out_dir / sid
        subj_dir.mkdir(parents=True, exist_ok=True)
        args = ["ensemble"]
        for rel in subject["maps"]:
            args += ["-i", root / rel]
        prob = subj_dir / "prob.nii.gz"
        invoke(args + ["-o", prob])
        invoke(
            ["postprocess", "-i", prob, "-o", subj_dir / "mask.nii.gz",
             "--report", subj_dir / "postprocess.json"]
        )
        manifest_rows.append(f"{sid},{sid}/mask.nii.gz,{subject['gt']}")

    manifest = root / "manual_manifest.csv"
    manifest.write_text("\n".join(manifest_rows) + "\n")
    invoke(
        ["evaluate", "--pred-dir", out_dir, "--gt-dir", root,
         "--manifest", manifest, "--metrics-csv", out_dir / "metrics.csv",
         "--summary-json", out_dir / "summary.json"]
    )
