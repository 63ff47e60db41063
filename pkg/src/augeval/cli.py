"""Command-line interface: validation, metric evaluation, prompt
generation, selection-core gradient checks, and Canny extraction.

Reports are JSON, written atomically, and self-describing: the config
echo plus the inputs reproduce every number. All randomness flows from
one root seed, split per subsystem by fixed labels. Exit codes: 0
success, 1 validation failure, 2 metric failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import zlib
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import MetricError, ValidationError
from . import distmetrics, imaging, promptgen, structmetrics, tensorio
from . import textalign
from .pamcore import (
    ConditionGrid,
    finite_diff_check,
    init_pam_params,
)
from .tensorio import (
    PairManifest,
    SIGN_CLASSES,
    atomic_write_json,
    load_pair_manifest,
    read_array,
    read_detections,
    read_label_map,
)

DEFAULT_CONFIG = {
    "seed": 0,
    "threads": 1,
    "canny": {"sigma": 1.4, "low": 0.1, "high": 0.2},
    "iou_thresh": 0.5,
    "kernel": {"sigma": 10.0, "normalize": True},
    "msssim_scales": 5,
    "diversity_pairs": 10000,
    "r_precision_k": [1, 5],
    "tau": 1.0,
}

STRUCTURE_KEYS = ("seg_src", "seg_gen", "depth_src", "depth_gen",
                  "boxes_src", "boxes_gen")


def subsystem_seed(root_seed: int, label: str) -> int:
    """Deterministic child seed derived from the root by a fixed label."""
    ss = np.random.SeedSequence([int(root_seed), zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _merge_config(path: str | None, overrides: dict) -> dict:
    config = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path:
        with open(path, "r", encoding="utf-8") as f:
            user = json.load(f)
        for key, value in user.items():
            if isinstance(value, dict) and isinstance(config.get(key), dict):
                config[key].update(value)
            else:
                config[key] = value
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            config.setdefault(key, {}).update(
                {k: v for k, v in value.items() if v is not None})
        else:
            config[key] = value
    return config


def _gray(manifest: PairManifest, rel: str) -> np.ndarray:
    return imaging.read_image_gray(manifest.resolve(rel))


def _image_size(path: str) -> tuple[int, int]:
    from PIL import Image
    with Image.open(path) as im:
        return im.height, im.width


# ---------------------------------------------------------------------------
# validate


def _validate_entry(manifest: PairManifest, entry) -> list[str]:
    problems = []
    try:
        h, w = _image_size(manifest.resolve(entry.original))
        hg, wg = _image_size(manifest.resolve(entry.generated))
        if (h, w) != (hg, wg):
            problems.append(f"pair {entry.pair_id}: image sizes differ "
                            f"({h}x{w} vs {hg}x{wg})")
    except Exception as e:
        return [f"pair {entry.pair_id}: unreadable image: {e}"]

    shapes = {}
    for key in ("seg_src", "seg_gen"):
        rel = entry.path(key)
        if not rel:
            continue
        try:
            labels = read_label_map(manifest.resolve(rel))
            shapes[key] = labels.shape
            if labels.shape != (h, w):
                problems.append(
                    f"pair {entry.pair_id}: {key} shape {labels.shape} != image {h}x{w}")
        except ValidationError as e:
            problems.append(f"pair {entry.pair_id}: {key}: {e}")
    for key in ("depth_src", "depth_gen"):
        rel = entry.path(key)
        if not rel:
            continue
        try:
            depth = read_array(manifest.resolve(rel))
            if depth.shape != (h, w):
                problems.append(
                    f"pair {entry.pair_id}: {key} shape mismatch "
                    f"{depth.shape} != image {h}x{w}")
        except ValidationError as e:
            problems.append(f"pair {entry.pair_id}: {key}: {e}")
    for key in ("boxes_src", "boxes_gen"):
        rel = entry.path(key)
        if not rel:
            continue
        try:
            dets = read_detections(manifest.resolve(rel))
            dets.validate(width=w, height=h)
        except ValidationError as e:
            problems.append(f"pair {entry.pair_id}: {key}: {e}")
    for key in ("embed_src", "embed_gen"):
        rel = entry.path(key)
        if not rel:
            continue
        try:
            emb = read_array(manifest.resolve(rel))
            if not np.isfinite(emb).all():
                problems.append(f"pair {entry.pair_id}: {key}: non-finite values")
        except ValidationError as e:
            problems.append(f"pair {entry.pair_id}: {key}: {e}")
    rel = entry.path("feats_gen")
    if rel:
        try:
            _load_feature_stack(manifest, rel)
        except (ValidationError, OSError, json.JSONDecodeError) as e:
            problems.append(f"pair {entry.pair_id}: feats_gen: {e}")
    return problems


def run_validate(manifest_path: str) -> tuple[int, list[str]]:
    manifest = load_pair_manifest(manifest_path)
    problems = []
    for entry in manifest.entries:
        problems.extend(_validate_entry(manifest, entry))
    return len(manifest), problems


# ---------------------------------------------------------------------------
# metric families


def _load_feature_stack(manifest: PairManifest, rel: str) -> distmetrics.FeatureStack:
    index_path = manifest.resolve(rel)
    with open(index_path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    base = os.path.dirname(index_path)
    layers = []
    weights = []
    for layer in doc["layers"]:
        arr = read_array(os.path.join(base, layer["path"]))
        if arr.ndim != 3:
            raise ValidationError(f"{layer['path']}: feature layer must be CxHxW")
        layers.append(arr.astype(np.float64))
        weights.append(layer.get("weight", 1.0))
    return distmetrics.FeatureStack(layers=layers, weights=weights)


def _structure_pair(manifest: PairManifest, entry, config: dict):
    miou = structmetrics.image_miou(
        read_label_map(manifest.resolve(entry.path("seg_src"))),
        read_label_map(manifest.resolve(entry.path("seg_gen"))),
    )
    depth_terms = structmetrics.depth_pair_terms(
        read_array(manifest.resolve(entry.path("depth_src"))),
        read_array(manifest.resolve(entry.path("depth_gen"))),
    )
    cc = config["canny"]
    src_gray = _gray(manifest, entry.original)
    gen_gray = _gray(manifest, entry.generated)
    src_edges = imaging.canny(src_gray, cc["low"], cc["high"], cc["sigma"])
    gen_edges = imaging.canny(gen_gray, cc["low"], cc["high"], cc["sigma"])
    boxes_src = read_detections(manifest.resolve(entry.path("boxes_src")))
    boxes_gen = read_detections(manifest.resolve(entry.path("boxes_gen")))
    sign_only = tensorio.DetectionSet(
        [b for b in boxes_src.boxes if b.cls in SIGN_CLASSES])
    mask = imaging.build_edge_mask(*src_edges.shape, sign_only)
    edge_terms = structmetrics.edge_l1_terms(src_edges, gen_edges, mask)
    counts = structmetrics.match_boxes(boxes_src, boxes_gen,
                                       iou_thresh=config["iou_thresh"])
    return entry.pair_id, miou, depth_terms, edge_terms, counts


def eval_structure(manifest: PairManifest, config: dict,
                   threads: int) -> tuple[dict, dict, dict]:
    def work(entry):
        return _structure_pair(manifest, entry, config)

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, manifest.entries))
    else:
        results = [work(e) for e in manifest.entries]

    per_image = []
    miou_means = []
    excluded_miou = []
    depth_sse = 0.0
    depth_count = 0
    edge_diff = 0.0
    edge_count = 0
    empty_masks = []
    counts = structmetrics.ClassCounts()
    # Reduce in pair-id order so reports are bit-deterministic.
    for pair_id, miou, (sse, dcount), (ediff, ecount), pair_counts in results:
        per_image.append({
            "id": pair_id,
            "miou": miou.mean,
            "iou_per_class": {str(c): v for c, v in sorted(miou.per_class.items())},
            "depth_sse": sse,
            "depth_valid": dcount,
            "edge_diff": ediff,
            "edge_mask": ecount,
        })
        if miou.mean is None:
            excluded_miou.append(pair_id)
        else:
            miou_means.append(miou.mean)
        depth_sse += sse
        depth_count += dcount
        edge_diff += ediff
        if ecount == 0:
            empty_masks.append(pair_id)
        edge_count += ecount
        counts.merge(pair_counts)

    metrics = {
        "miou": structmetrics.dataset_miou(miou_means),
        "depth_rmse": (float(np.sqrt(depth_sse / depth_count))
                       if depth_count else None),
        "edge_l1": edge_diff / edge_count if edge_count else None,
        "object_f1": structmetrics.object_f1(counts),
    }
    if metrics["depth_rmse"] is None:
        raise MetricError("depth RMSE undefined: no valid depth pixels")
    if metrics["edge_l1"] is None:
        raise MetricError("masked edge L1 undefined: empty mask over whole dataset")
    class_table = {
        cls: {
            "tp": counts.tp.get(cls, 0),
            "fp": counts.fp.get(cls, 0),
            "fn": counts.fn.get(cls, 0),
            "f1": counts.f1(cls),
        }
        for cls in tensorio.DETECTION_CLASSES
        if counts.f1(cls) is not None
    }
    warnings = {}
    if excluded_miou:
        warnings["miou_excluded_images"] = excluded_miou
    if empty_masks:
        warnings["edge_empty_mask_images"] = empty_masks
    return metrics, {"per_image": per_image, "classes": class_table}, warnings


def _load_embeddings(manifest: PairManifest, top_rel: str | None,
                     entry_key: str, override: str | None) -> np.ndarray:
    if override:
        return read_array(override).astype(np.float64)
    if top_rel:
        return read_array(manifest.resolve(top_rel)).astype(np.float64)
    rows = []
    for entry in manifest.entries:
        rel = entry.path(entry_key)
        if not rel:
            raise MetricError(
                f"pair {entry.pair_id} lacks {entry_key}; cannot assemble embeddings")
        rows.append(read_array(manifest.resolve(rel)).reshape(-1))
    return np.stack(rows).astype(np.float64)


def eval_distribution(manifest: PairManifest, config: dict, threads: int,
                      embeddings_src: str | None = None,
                      embeddings_gen: str | None = None) -> tuple[dict, dict, dict]:
    kcfg = distmetrics.KernelConfig(
        sigma=config["kernel"]["sigma"],
        normalize=bool(config["kernel"]["normalize"]),
    )
    x = _load_embeddings(manifest, manifest.embeddings_src, "embed_src",
                         embeddings_src)
    y = _load_embeddings(manifest, manifest.embeddings_gen, "embed_gen",
                         embeddings_gen)
    metrics: dict = {"cmmd": distmetrics.cmmd(x, y, kcfg)}
    detail: dict = {"embedding_counts": [len(x), len(y)]}
    warnings: dict = {}

    have_feats = all(e.path("feats_gen") for e in manifest.entries)
    if have_feats and len(manifest) >= 2:
        n = len(manifest)
        total = n * (n - 1) // 2
        n_pairs = min(int(config["diversity_pairs"]), total)
        pair_seed = subsystem_seed(config["seed"], "diversity_pairs")
        pairs = distmetrics.sample_pairs(n, n_pairs, pair_seed)

        def load_one(entry):
            return (
                _load_feature_stack(manifest, entry.path("feats_gen")),
                _gray(manifest, entry.generated),
            )

        if threads > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
                loaded = list(pool.map(load_one, manifest.entries))
        else:
            loaded = [load_one(e) for e in manifest.entries]
        stacks = [s for s, _ in loaded]
        grays = [g for _, g in loaded]
        lp, ms = distmetrics.diversity_report(
            stacks, grays, pairs, scales=int(config["msssim_scales"]))
        metrics["lpips"] = lp
        metrics["msssim_diversity"] = ms
        detail["diversity_pairs_used"] = len(pairs)
        detail["diversity_pair_seed"] = pair_seed
    else:
        warnings["diversity_skipped"] = "feature stacks missing or fewer than 2 images"
    return metrics, detail, warnings


def eval_text(manifest: PairManifest, config: dict,
              records_base: str | None = None) -> tuple[dict, dict, dict]:
    base = records_base or (manifest.resolve(manifest.records)
                            if manifest.records else None)
    if not base:
        raise MetricError("text alignment needs a records bundle")
    stack = read_array(base + ".actf")
    if stack.ndim != 3 or stack.shape[0] != 2:
        raise ValidationError(
            f"{base}.actf: expected dims [2, N, d], got {list(stack.shape)}")
    ids = []
    with open(base + ".jsonl", "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                ids.append(json.loads(line)["id"])
    if len(ids) != stack.shape[1]:
        raise ValidationError(
            f"records count mismatch: {len(ids)} jsonl rows vs "
            f"{stack.shape[1]} embedding rows")
    seed = subsystem_seed(config["seed"], "text_mismatch")
    records = textalign.build_alignment_records(stack[0], stack[1], seed)
    metrics = {
        f"r_precision@{k}": textalign.r_precision(records, int(k))
        for k in config["r_precision_k"]
    }
    detail = {"records": len(records), "mismatch_seed": seed}
    return metrics, detail, {}


def run_eval(manifest_path: str, config: dict, out_path: str,
             families: list[str] | None = None,
             embeddings_src: str | None = None,
             embeddings_gen: str | None = None,
             records: str | None = None,
             validate_first: bool = True,
             stamp: bool = True) -> dict:
    manifest = load_pair_manifest(manifest_path)
    if validate_first:
        _, problems = run_validate(manifest_path)
        if problems:
            raise ValidationError(
                f"{len(problems)} validation error(s), first: {problems[0]}")

    if families is None:
        families = []
        if all(all(e.path(k) for k in STRUCTURE_KEYS) for e in manifest.entries):
            families.append("structure")
        has_embs = (embeddings_src and embeddings_gen) or (
            manifest.embeddings_src and manifest.embeddings_gen) or all(
            e.path("embed_src") and e.path("embed_gen") for e in manifest.entries)
        if has_embs:
            families.append("distribution")
        if records or manifest.records:
            families.append("text")
    if not families:
        raise MetricError("no metric family has its required inputs")

    threads = int(config["threads"])
    # threads is an execution detail: reports must be identical across
    # worker counts, so it is not echoed.
    report = {
        "toolkit_version": __version__,
        "config": {k: v for k, v in config.items() if k != "threads"},
        "manifest": os.path.abspath(manifest_path),
        "pairs": len(manifest),
        "families": families,
        "metrics": {},
        "detail": {},
        "warnings": {},
        "partial": False,
    }
    try:
        for family in families:
            if family == "structure":
                metrics, detail, warn = eval_structure(manifest, config, threads)
            elif family == "distribution":
                metrics, detail, warn = eval_distribution(
                    manifest, config, threads, embeddings_src, embeddings_gen)
            elif family == "text":
                metrics, detail, warn = eval_text(manifest, config, records)
            else:
                raise ValidationError(f"unknown metric family {family!r}")
            report["metrics"].update(metrics)
            report["detail"][family] = detail
            report["warnings"].update(warn)
    except MetricError as e:
        report["partial"] = True
        report["error"] = str(e)
        report["timestamp"] = _timestamp() if stamp else None
        atomic_write_json(report, out_path)
        raise
    report["timestamp"] = _timestamp() if stamp else None
    atomic_write_json(report, out_path)
    return report


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


# ---------------------------------------------------------------------------
# prompt generation


def run_prompt(manifest_path: str, config: dict, out_path: str, mode: str,
               label_embs_path: str, captions_path: str | None,
               cache_path: str | None, style_path: str | None) -> dict:
    manifest = load_pair_manifest(manifest_path)
    style = promptgen.load_style(style_path)
    labels = read_array(label_embs_path).astype(np.float64)
    n_weather = len(promptgen.WEATHER_LABELS)
    n_axis = n_weather + len(promptgen.TIME_LABELS)
    if labels.ndim != 2 or labels.shape[0] != n_axis:
        raise ValidationError(
            f"label embeddings must be {n_axis}xD "
            f"({n_weather} weather then {len(promptgen.TIME_LABELS)} time rows)")
    weather_embs = labels[:n_weather]
    time_embs = labels[n_weather:]

    raw_captions = {}
    if captions_path:
        with open(captions_path, "r", encoding="utf-8") as f:
            raw_captions = {str(k): v for k, v in json.load(f).items()}

    cache: dict[str, str] = {}
    if cache_path and os.path.isfile(cache_path):
        with open(cache_path, "r", encoding="utf-8") as f:
            cache = {str(k): v for k, v in json.load(f).items()}

    root_seed = int(config["seed"])
    records = []
    warnings: dict = {}
    cache_hits = 0
    regenerated = 0
    for entry in manifest.entries:
        key = str(entry.pair_id)
        if key in cache:
            caption = cache[key]
            cache_hits += 1
        else:
            if key not in raw_captions:
                raise ValidationError(
                    f"pair {entry.pair_id}: no cached or raw caption available")
            result = promptgen.clean_caption(raw_captions[key])
            caption = result.caption
            if result.forbidden_words:
                warnings.setdefault("forbidden_words", {})[key] = result.forbidden_words
            if result.too_long:
                warnings.setdefault("long_captions", {})[key] = result.word_count
            cache[key] = caption
            regenerated += 1

        emb_rel = entry.path("embed_src")
        if not emb_rel:
            raise ValidationError(f"pair {entry.pair_id}: embed_src required "
                                  "for subgroup estimation")
        image_emb = read_array(manifest.resolve(emb_rel)).reshape(-1)
        src = promptgen.estimate_subgroup(image_emb, weather_embs, time_embs)

        seed_i = subsystem_seed(root_seed, f"target:{entry.pair_id}")
        if mode == "train":
            tgt = None
            prompt = promptgen.build_training_prompt(caption, src)
        else:
            tgt = promptgen.sample_target_subgroup(src, seed_i)
            class_names = []
            seg_rel = entry.path("seg_src")
            if seg_rel:
                class_names = promptgen.classes_in_label_map(
                    read_label_map(manifest.resolve(seg_rel)))
            prompt = promptgen.build_eval_prompt(
                caption, class_names, tgt, style[promptgen.style_key(tgt)])
        records.append({
            "id": entry.pair_id,
            "src": src.as_dict(),
            "tgt": tgt.as_dict() if tgt else None,
            "caption": caption,
            "prompt": prompt,
            "seed": seed_i,
        })

    tmp = f"{out_path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    os.replace(tmp, out_path)
    if cache_path:
        atomic_write_json(cache, cache_path)
    return {
        "records": len(records),
        "cache_hits": cache_hits,
        "regenerated": regenerated,
        "warnings": warnings,
    }


# ---------------------------------------------------------------------------
# selection-core check


def run_pam_check(d: int, grid: tuple[int, int], seed: int, eps: float,
                  tau: float, tol: float, out_path: str | None,
                  corrupt: str | None = None) -> dict:
    h, w = grid
    params = init_pam_params(d, seed=seed)
    params.gate.tau = tau
    rng = np.random.default_rng(subsystem_seed(seed, "pam_inputs"))
    grids = ConditionGrid(
        edge=rng.standard_normal((d, h, w)),
        depth=rng.standard_normal((d, h, w)),
        seg=rng.standard_normal((d, h, w)),
    )
    temb = rng.standard_normal(params.gate.psi_t.shape[1])
    cpool = rng.standard_normal(params.gate.psi_c.shape[1])
    result = finite_diff_check(params, grids, temb, cpool, eps=eps, seed=seed,
                               corrupt_group=corrupt)
    report = {
        "toolkit_version": __version__,
        "d": d,
        "grid": [h, w],
        "seed": seed,
        "eps": eps,
        "tau": tau,
        "tolerance": tol,
        "max_rel_err": result.max_rel_err,
        "per_group": result.per_group,
        "pass": result.passed(tol),
    }
    if out_path:
        atomic_write_json(report, out_path)
    return report


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file mirroring the defaults")
    p.add_argument("--seed", type=int, default=None, help="root seed")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="output report path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="augeval", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check every manifest artifact")
    p.add_argument("--manifest", required=True)

    for name in ("eval", "eval-structure", "eval-distribution", "eval-text"):
        p = sub.add_parser(name, help=f"run {name.replace('eval', 'evaluation') if name == 'eval' else name}")
        _add_common(p)
        p.add_argument("--manifest", required=True)
        p.add_argument("--iou-thresh", type=float, default=None)
        p.add_argument("--canny-sigma", type=float, default=None)
        p.add_argument("--canny-low", type=float, default=None)
        p.add_argument("--canny-high", type=float, default=None)
        p.add_argument("--kernel-sigma", type=float, default=None)
        p.add_argument("--pairs", type=int, default=None,
                       help="diversity pair sample size")
        p.add_argument("--embeddings-src", default=None)
        p.add_argument("--embeddings-gen", default=None)
        p.add_argument("--records", default=None,
                       help="base path of the records .actf/.jsonl bundle")
        p.add_argument("--k", default=None, help="comma-separated K values")
        p.add_argument("--no-validate", action="store_true")
        p.add_argument("--no-timestamp", action="store_true")

    p = sub.add_parser("prompt-gen", help="assemble prompt records")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("train", "eval"), required=True)
    p.add_argument("--label-embs", required=True,
                   help="8xD ACTF: weather rows then time rows")
    p.add_argument("--captions", default=None,
                   help="JSON of raw captions keyed by pair id")
    p.add_argument("--caption-cache", default=None)
    p.add_argument("--style", default=None)

    p = sub.add_parser("pam-check", help="finite-difference gradient check")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--grid", default="4x4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out", default=None)
    p.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)

    p = sub.add_parser("canny", help="extract a Canny edge map")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=DEFAULT_CONFIG["canny"]["sigma"])
    p.add_argument("--low", type=float, default=DEFAULT_CONFIG["canny"]["low"])
    p.add_argument("--high", type=float, default=DEFAULT_CONFIG["canny"]["high"])
    return parser


def _eval_config(args) -> dict:
    overrides: dict = {
        "seed": args.seed,
        "threads": args.threads,
        "iou_thresh": args.iou_thresh,
        "diversity_pairs": args.pairs,
        "canny": {"sigma": args.canny_sigma, "low": args.canny_low,
                  "high": args.canny_high},
        "kernel": {"sigma": args.kernel_sigma},
    }
    if args.k:
        overrides["r_precision_k"] = [int(k) for k in args.k.split(",")]
    return _merge_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            count, problems = run_validate(args.manifest)
            for problem in problems:
                print(problem, file=sys.stderr)
            print(f"validated {count} pairs: {len(problems)} error(s)")
            return 0 if not problems else 1

        if args.command in ("eval", "eval-structure", "eval-distribution",
                            "eval-text"):
            config = _eval_config(args)
            families = {
                "eval": None,
                "eval-structure": ["structure"],
                "eval-distribution": ["distribution"],
                "eval-text": ["text"],
            }[args.command]
            report = run_eval(
                args.manifest, config, args.out,
                families=families,
                embeddings_src=args.embeddings_src,
                embeddings_gen=args.embeddings_gen,
                records=args.records,
                validate_first=not args.no_validate,
                stamp=not args.no_timestamp,
            )
            printable = {k: v for k, v in report["metrics"].items()}
            print(json.dumps(printable, sort_keys=True))
            return 0

        if args.command == "prompt-gen":
            config = _merge_config(args.config,
                                   {"seed": args.seed, "threads": args.threads})
            summary = run_prompt(
                args.manifest, config, args.out, args.mode,
                label_embs_path=args.label_embs,
                captions_path=args.captions,
                cache_path=args.caption_cache,
                style_path=args.style,
            )
            print(json.dumps(summary, sort_keys=True))
            return 0

        if args.command == "pam-check":
            h, _, w = args.grid.partition("x")
            report = run_pam_check(
                d=args.d, grid=(int(h), int(w)), seed=args.seed,
                eps=args.eps, tau=args.tau, tol=args.tol,
                out_path=args.out, corrupt=args.corrupt,
            )
            print(json.dumps({"max_rel_err": report["max_rel_err"],
                              "pass": report["pass"]}, sort_keys=True))
            return 0 if report["pass"] else 2

        if args.command == "canny":
            gray = imaging.read_image_gray(args.infile)
            edges = imaging.canny(gray, args.low, args.high, args.sigma)
            imaging.write_edge_png(edges, args.out)
            print(f"wrote {args.out}: {int(edges.sum())} edge pixels")
            return 0

        raise ValidationError(f"unknown command {args.command!r}")
    except ValidationError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 1
    except MetricError as e:
        print(f"metric error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
