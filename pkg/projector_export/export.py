#!/usr/bin/env python3
"""Serialize projector outputs (stubbed or real) for the evaluation toolkit.

Emits label-map PNGs, depth/embedding/feature ACTF files, detection
JSONL, a raw-caption cache, label text embeddings, and a pair manifest
that the toolkit's `validate` and `eval` subcommands consume directly.

Usage:
    export.py --images DIR [--generated DIR] --out DIR \
        --backend seg=stub,depth=stub,det=stub,embed=stub,caption=stub \
        --seed 0
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from actf import write_actf  # noqa: E402
from stubs import (  # noqa: E402
    BackendLoadError,
    jitter_boxes,
    pair_rng,
    parse_backends,
    require_stub_or_load,
    stub_boxes,
    stub_caption,
    stub_depth,
    stub_embedding,
    stub_features,
    stub_label_embeddings,
    stub_segmentation,
    synth_generated,
)

IMAGE_SUFFIXES = (".png",)
MIN_SIDE = 16  # feature pyramid needs two /8 and /16 levels


def _load_gray(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def _save_gray(gray: np.ndarray, path: Path) -> None:
    arr = np.clip(gray * 255.0, 0, 255).round().astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def _save_labels(labels: np.ndarray, path: Path) -> None:
    Image.fromarray(labels.astype(np.uint8), mode="L").save(path, format="PNG")


def _save_boxes(boxes: list[dict], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for b in boxes:
            f.write(json.dumps(b) + "\n")


def _save_feature_stack(layers, stem: Path) -> str:
    doc = {"layers": []}
    for i, layer in enumerate(layers):
        fname = f"{stem.name}_l{i}.actf"
        write_actf(layer, stem.parent / fname)
        doc["layers"].append({"path": fname, "weight": 1.0})
    index = stem.with_suffix(".json")
    index.write_text(json.dumps(doc, indent=2))
    return index.name


def export_projections(image_dir: str, out_dir: str, backends: str = "",
                       seed: int = 0, generated_dir: str | None = None) -> dict:
    """Run the configured backends over every image pair and emit the
    toolkit's ingestion files. Per-image failures are recorded in the
    summary and the pair is left out of the manifest."""
    image_dir = Path(image_dir)
    out = Path(out_dir)
    specs = parse_backends(backends)
    for spec in specs.values():
        require_stub_or_load(spec)  # raises for model mode

    originals = sorted(p for p in image_dir.iterdir()
                       if p.suffix.lower() in IMAGE_SUFFIXES)
    if not originals:
        raise FileNotFoundError(f"no PNG images under {image_dir}")

    for sub in ("images", "seg", "depth", "boxes", "embed", "feats"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    entries = []
    captions: dict[str, str] = {}
    embeds_src: list[np.ndarray] = []
    embeds_gen: list[np.ndarray] = []
    failures: list[dict] = []
    warnings: list[str] = []

    for pair_id, orig_path in enumerate(originals):
        try:
            gray_src = _load_gray(orig_path)
            h, w = gray_src.shape
            if min(h, w) < MIN_SIDE:
                raise ValueError(f"image min side {min(h, w)} < {MIN_SIDE}")
            if generated_dir:
                gen_path_in = Path(generated_dir) / orig_path.name
                gray_gen = _load_gray(gen_path_in)
                if gray_gen.shape != gray_src.shape:
                    raise ValueError("generated image shape differs from original")
            else:
                gray_gen = synth_generated(
                    gray_src, pair_rng(seed, pair_id, "synth"))

            tag = f"{pair_id:04d}"
            rel = {
                "original": f"images/{tag}_orig.png",
                "generated": f"images/{tag}_gen.png",
                "seg_src": f"seg/{tag}_src.png",
                "seg_gen": f"seg/{tag}_gen.png",
                "depth_src": f"depth/{tag}_src.actf",
                "depth_gen": f"depth/{tag}_gen.actf",
                "boxes_src": f"boxes/{tag}_src.jsonl",
                "boxes_gen": f"boxes/{tag}_gen.jsonl",
                "embed_src": f"embed/{tag}_src.actf",
                "embed_gen": f"embed/{tag}_gen.actf",
            }
            _save_gray(gray_src, out / rel["original"])
            _save_gray(gray_gen, out / rel["generated"])

            seg_rng = pair_rng(seed, pair_id, "seg")
            _save_labels(stub_segmentation(h, w, seg_rng), out / rel["seg_src"])
            gen_seg_rng = pair_rng(seed, pair_id, "seg")  # same base layout
            _save_labels(stub_segmentation(h, w, gen_seg_rng, row_shift=1),
                         out / rel["seg_gen"])

            write_actf(stub_depth(gray_src, pair_rng(seed, pair_id, "dep_s")),
                       out / rel["depth_src"])
            write_actf(stub_depth(gray_gen, pair_rng(seed, pair_id, "dep_g")),
                       out / rel["depth_gen"])

            base_boxes = stub_boxes(h, w, pair_rng(seed, pair_id, "boxes"))
            _save_boxes(base_boxes, out / rel["boxes_src"])
            _save_boxes(jitter_boxes(base_boxes, h, w,
                                     pair_rng(seed, pair_id, "boxjit")),
                        out / rel["boxes_gen"])

            emb_src = stub_embedding(gray_src)
            emb_gen = stub_embedding(gray_gen)
            write_actf(emb_src, out / rel["embed_src"])
            write_actf(emb_gen, out / rel["embed_gen"])

            layers, zero_sites = stub_features(gray_gen)
            if zero_sites:
                warnings.append(
                    f"pair {pair_id}: {zero_sites} zero feature sites left as zeros")
            rel["feats_gen"] = "feats/" + _save_feature_stack(
                layers, out / "feats" / tag)

            captions[str(pair_id)] = stub_caption(
                pair_rng(seed, pair_id, "caption"))

            embeds_src.append(emb_src)
            embeds_gen.append(emb_gen)
            entries.append({"id": pair_id, **rel})
        except (OSError, ValueError) as e:
            failures.append({"image": orig_path.name, "error": str(e)})

    if not entries:
        raise RuntimeError("every image failed; nothing to export")

    write_actf(np.stack(embeds_src), out / "embeddings_src.actf")
    write_actf(np.stack(embeds_gen), out / "embeddings_gen.actf")
    write_actf(stub_label_embeddings(seed), out / "label_embs.actf")
    (out / "captions.json").write_text(
        json.dumps(captions, indent=2, sort_keys=True))

    manifest = {
        "entries": entries,
        "embeddings_src": "embeddings_src.actf",
        "embeddings_gen": "embeddings_gen.actf",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))

    summary = {
        "pairs": len(entries),
        "failures": failures,
        "warnings": warnings,
        "seed": seed,
        "backends": {name: spec.mode for name, spec in specs.items()},
        "manifest": str(out / "manifest.json"),
    }
    (out / "export_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True))
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--images", required=True, help="directory of PNGs")
    parser.add_argument("--generated", default=None,
                        help="optional directory of generated counterparts "
                             "matched by filename; synthesized when absent")
    parser.add_argument("--out", required=True)
    parser.add_argument("--backend", default="",
                        help="comma list like seg=stub,depth=stub")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        summary = export_projections(args.images, args.out, args.backend,
                                     args.seed, args.generated)
    except BackendLoadError as e:
        print(f"backend error: {e}", file=sys.stderr)
        return 1
    print(json.dumps({"pairs": summary["pairs"],
                      "failures": len(summary["failures"])}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
