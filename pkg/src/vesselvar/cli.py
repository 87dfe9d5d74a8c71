"""Command-line entry points for the vessel-annotation toolkit.

Every subcommand is reproducible: the same inputs, parameters, and seed
produce byte-identical outputs, including the JSON manifest written next to
each artifact (command, version, inputs with content hashes, parameter
echo, output list — never wall-clock state). Defaults can come from a JSON
config file (--config); explicit flags override it, and --show-config
prints the merged effective configuration without running.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .distance import exact_edt, signed_edge_distance
from .metrics import (
    cldice,
    dataset_summary,
    modified_cldice,
    threshold_sweep,
    write_summary_csv,
    write_sweep_csv,
)
from .patches import (
    DEFAULT_N_DUPLICATES,
    DEFAULT_QUOTAS,
    build_rating_set,
    load_rating_set,
    load_source_dataset,
    sample_patches,
    write_rating_bundle,
)
from .raster import GrayImage, build_annotation, load_gray, load_mask, save_gray
from .rating import (
    agreement_csv_text,
    agreement_table,
    intra_rater_consistency,
    read_response_log,
)
from .skeleton import thin
from .vesselness import (
    FrangiParams,
    ScaleParams,
    append_disagreement_csv,
    disagreement_score,
    frangi,
    sato,
)

DEFAULTS = {
    "edt": {"signed": False},
    "skeleton": {},
    "cldice": {"modified": False, "d": 2.5, "tau": 0.5, "format": "text", "threads": None},
    "cldice-sweep": {"min": 0.5, "max": 6.0, "step": 0.5, "tau": 0.5},
    "vesselness": {
        "filter": "frangi",
        "sigmas": "1,2,3,4,5",
        "beta": 0.5,
        "c": 15.0,
        "polarity": "dark-on-bright",
        "rescale": True,
        "threads": None,
    },
    "patchgen": {"n": 2000, "size": 128, "seed": 0, "images": False, "threads": None},
    "rate-build": {
        "n": 200,
        "size": 128,
        "seed": 0,
        "quota_none": DEFAULT_QUOTAS["NONE"],
        "quota_both": DEFAULT_QUOTAS["BOTH"],
        "quota_a1": DEFAULT_QUOTAS["A1_ONLY"],
        "quota_a2": DEFAULT_QUOTAS["A2_ONLY"],
        "duplicates": DEFAULT_N_DUPLICATES,
        "threads": None,
    },
    "rate-serve": {"host": "127.0.0.1", "port": 8000, "log": None},
    "rate-analyze": {"ref": "A1", "format": "csv", "consistency": None},
}


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_record(path) -> dict:
    path = Path(path)
    rec = {"path": str(path)}
    if path.is_file():
        rec["sha256"] = _sha256_file(path)
    elif (path / "dataset.json").is_file():
        rec["sha256"] = _sha256_file(path / "dataset.json")
    return rec


def write_manifest(path, command: str, inputs: dict, parameters: dict, outputs) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": parameters.get("seed"),
        "inputs": inputs,
        "parameters": parameters,
        "outputs": sorted(str(o) for o in outputs),
    }
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _effective(cmd: str, args: argparse.Namespace) -> dict:
    merged = dict(DEFAULTS[cmd])
    config_path = getattr(args, "config", None)
    if config_path:
        loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key in merged:
                merged[key] = value
    for key in merged:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _maybe_show_config(cmd: str, args, cfg: dict) -> bool:
    if getattr(args, "show_config", False):
        print(json.dumps(cfg, sort_keys=True, indent=2))
        return True
    return False


def _save_field(img: GrayImage, path) -> None:
    """Save a real-valued field with a quantization range wide enough to
    round-trip it (sidecar records the range)."""
    lo = float(img.data.min())
    hi = float(img.data.max())
    if hi <= lo:
        hi = lo + 1.0
    save_gray(img, path, bit_depth=16, quant=(lo, hi))


def _threads_or_cpu(value):
    if value is None:
        return os.cpu_count() or 1
    n = int(value)
    if n < 1:
        raise ValueError("--threads must be >= 1")
    return n


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _cmd_edt(args) -> int:
    cfg = _effective("edt", args)
    if _maybe_show_config("edt", args, cfg):
        return 0
    mask = load_mask(args.input)
    field = signed_edge_distance(mask) if cfg["signed"] else exact_edt(mask)
    _save_field(field, args.output)
    write_manifest(
        str(args.output) + ".manifest.json",
        "edt",
        {"input": _input_record(args.input)},
        {"signed": bool(cfg["signed"]), "seed": None},
        [args.output],
    )
    return 0


def _cmd_skeleton(args) -> int:
    cfg = _effective("skeleton", args)
    if _maybe_show_config("skeleton", args, cfg):
        return 0
    mask = load_mask(args.input)
    skel = thin(mask)
    skel.to_csv(args.output)
    outputs = [args.output]
    if args.png:
        save_gray(
            GrayImage.from_array(skel.to_mask().bits.astype(np.float64)),
            args.png,
            bit_depth=8,
        )
        outputs.append(args.png)
    write_manifest(
        str(args.output) + ".manifest.json",
        "skeleton",
        {"input": _input_record(args.input)},
        {"seed": None},
        outputs,
    )
    return 0


def _pairs_from_dataset(root, threads):
    sources = load_source_dataset(root)
    pairs = []
    ids = []
    for src in sources:
        if len(src.masks) != 2:
            raise ValueError(f"image {src.image_id!r} needs exactly two annotators")
        (id_a, mask_a), (id_b, mask_b) = src.masks
        pairs.append(
            (build_annotation(mask_a, id_a), build_annotation(mask_b, id_b))
        )
        ids.append(src.image_id)
    return ids, pairs


def _cmd_cldice(args) -> int:
    cfg = _effective("cldice", args)
    if _maybe_show_config("cldice", args, cfg):
        return 0
    variant = "modified" if cfg["modified"] else "standard"
    d = float(cfg["d"])
    tau = float(cfg["tau"])
    if args.dataset:
        threads = _threads_or_cpu(cfg["threads"])
        ids, pairs = _pairs_from_dataset(args.dataset, threads)
        summary = dataset_summary(
            pairs,
            variant=variant,
            d=d if variant == "modified" else None,
            pair_ids=ids,
            threads=threads,
        )
        print(f"mean={_fmt(summary.mean_cldice)} std={_fmt(summary.std_cldice)} n={len(ids)}")
        if args.output:
            write_summary_csv(summary, args.output)
            write_manifest(
                str(args.output) + ".manifest.json",
                "cldice",
                {"dataset": _input_record(args.dataset)},
                {"variant": variant, "d": d, "tau": tau, "seed": None},
                [args.output],
            )
        return 0
    if not (args.a and args.b):
        raise ValueError("need --a and --b mask files (or --dataset)")
    ann_a = build_annotation(load_mask(args.a), "A1")
    ann_b = build_annotation(load_mask(args.b), "A2")
    if variant == "modified":
        result = modified_cldice(ann_a, ann_b, d=d, tau=tau)
    else:
        result = cldice(ann_a, ann_b, tau=tau)
    if cfg["format"] == "json":
        print(
            json.dumps(
                {
                    "tprec": result.tprec,
                    "tsens": result.tsens,
                    "cldice": result.cldice,
                    "variant": result.variant,
                },
                sort_keys=True,
            )
        )
    else:
        print(
            f"tprec={_fmt(result.tprec)} tsens={_fmt(result.tsens)} "
            f"cldice={_fmt(result.cldice)}"
        )
    return 0


def _cmd_cldice_sweep(args) -> int:
    cfg = _effective("cldice-sweep", args)
    if _maybe_show_config("cldice-sweep", args, cfg):
        return 0
    lo, hi, step = float(cfg["min"]), float(cfg["max"]), float(cfg["step"])
    if step <= 0 or lo <= 0 or hi < lo:
        raise ValueError("need 0 < min <= max and step > 0")
    thresholds = []
    k = 0
    while lo + k * step <= hi + 1e-9:
        thresholds.append(lo + k * step)
        k += 1
    ann_a = build_annotation(load_mask(args.a), "A1")
    ann_b = build_annotation(load_mask(args.b), "A2")
    curve = threshold_sweep(ann_a, ann_b, thresholds=tuple(thresholds))
    write_sweep_csv(curve, args.output)
    write_manifest(
        str(args.output) + ".manifest.json",
        "cldice-sweep",
        {"a": _input_record(args.a), "b": _input_record(args.b)},
        {"min": lo, "max": hi, "step": step, "tau": float(cfg["tau"]), "seed": None},
        [args.output],
    )
    return 0


def _parse_sigmas(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(s) for s in text)
    return tuple(float(tok) for tok in str(text).split(",") if tok.strip())


def _cmd_vesselness(args) -> int:
    cfg = _effective("vesselness", args)
    if _maybe_show_config("vesselness", args, cfg):
        return 0
    scales = ScaleParams(sigmas=_parse_sigmas(cfg["sigmas"]), polarity=cfg["polarity"])
    params = FrangiParams(beta=float(cfg["beta"]), c=float(cfg["c"]))
    name = cfg["filter"]
    if name not in ("frangi", "sato"):
        raise ValueError("--filter must be frangi or sato")

    def respond(img: GrayImage) -> GrayImage:
        if cfg["rescale"]:
            img = GrayImage.from_array(img.data * 255.0, spacing=img.spacing)
        if name == "frangi":
            return frangi(img, scales, params)
        return sato(img, scales)

    if args.dataset:
        if not args.report:
            raise ValueError("--dataset mode needs --report")
        sources = load_source_dataset(args.dataset)
        report_path = Path(args.report)
        if report_path.exists():
            report_path.unlink()
        from concurrent.futures import ThreadPoolExecutor

        threads = _threads_or_cpu(cfg["threads"])

        def evaluate(src):
            if len(src.masks) != 2:
                raise ValueError(f"image {src.image_id!r} needs exactly two annotators")
            (id_a, mask_a), (id_b, mask_b) = src.masks
            ann_a = build_annotation(mask_a, id_a)
            ann_b = build_annotation(mask_b, id_b)
            return disagreement_score(respond(src.image), ann_a, ann_b)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(evaluate, sources))
        for src, rep in zip(sources, reports):
            append_disagreement_csv(report_path, src.image_id, name, rep)
        write_manifest(
            str(report_path) + ".manifest.json",
            "vesselness",
            {"dataset": _input_record(args.dataset)},
            {
                "filter": name,
                "sigmas": list(scales.sigmas),
                "beta": params.beta,
                "c": params.c,
                "polarity": scales.polarity,
                "rescale": bool(cfg["rescale"]),
                "seed": None,
            },
            [report_path],
        )
        return 0
    if not (args.input and args.output):
        raise ValueError("need --input and --output (or --dataset with --report)")
    response = respond(load_gray(args.input))
    _save_field(response, args.output)
    write_manifest(
        str(args.output) + ".manifest.json",
        "vesselness",
        {"input": _input_record(args.input)},
        {
            "filter": name,
            "sigmas": list(scales.sigmas),
            "beta": params.beta,
            "c": params.c,
            "polarity": scales.polarity,
            "rescale": bool(cfg["rescale"]),
            "seed": None,
        },
        [args.output],
    )
    return 0


def _cmd_patchgen(args) -> int:
    cfg = _effective("patchgen", args)
    if _maybe_show_config("patchgen", args, cfg):
        return 0
    sources = load_source_dataset(args.dataset)
    threads = _threads_or_cpu(cfg["threads"])
    patches = sample_patches(
        sources, n=int(cfg["n"]), size=int(cfg["size"]), seed=int(cfg["seed"]),
        threads=threads,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    if cfg["images"]:
        (out_dir / "patches").mkdir(exist_ok=True)
        for patch in patches:
            img_path = out_dir / "patches" / f"{patch.patch_id}.png"
            save_gray(patch.image, img_path, bit_depth=8)
            outputs.append(img_path)
            for ann in patch.annotations:
                mask_img = GrayImage.from_array(ann.mask.bits.astype(np.float64))
                mask_path = (
                    out_dir / "patches" / f"{patch.patch_id}.{ann.annotator_id}.png"
                )
                save_gray(mask_img, mask_path, bit_depth=8)
                outputs.append(mask_path)
    manifest_path = out_dir / "patches.json"
    records = [
        {
            "patch_id": p.patch_id,
            "source_image_id": p.source_image_id,
            "origin": list(p.origin),
            "size": p.size,
        }
        for p in patches
    ]
    body = {
        "command": "patchgen",
        "version": __version__,
        "seed": int(cfg["seed"]),
        "inputs": {"dataset": _input_record(args.dataset)},
        "parameters": {
            "n": int(cfg["n"]),
            "size": int(cfg["size"]),
            "seed": int(cfg["seed"]),
            "images": bool(cfg["images"]),
        },
        "patches": records,
    }
    manifest_path.write_text(
        json.dumps(body, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(patches)} patches to {manifest_path}", file=sys.stderr)
    return 0


def _cmd_rate_build(args) -> int:
    cfg = _effective("rate-build", args)
    if _maybe_show_config("rate-build", args, cfg):
        return 0
    sources = load_source_dataset(args.dataset)
    threads = _threads_or_cpu(cfg["threads"])
    seed = int(cfg["seed"])
    patches = sample_patches(
        sources, n=int(cfg["n"]), size=int(cfg["size"]), seed=seed, threads=threads
    )
    quotas = {
        "NONE": int(cfg["quota_none"]),
        "BOTH": int(cfg["quota_both"]),
        "A1_ONLY": int(cfg["quota_a1"]),
        "A2_ONLY": int(cfg["quota_a2"]),
    }
    items = build_rating_set(
        patches, quotas=quotas, n_duplicates=int(cfg["duplicates"]), seed=seed
    )
    out_dir = Path(args.out)
    write_rating_bundle(out_dir, patches, items, seed=seed)
    write_manifest(
        out_dir / "manifest.json",
        "rate-build",
        {"dataset": _input_record(args.dataset)},
        {
            "n": int(cfg["n"]),
            "size": int(cfg["size"]),
            "seed": seed,
            "quotas": quotas,
            "duplicates": int(cfg["duplicates"]),
        },
        ["rating_set.json", "dataset.json", f"{len(items)} items"],
    )
    print(f"built rating set with {len(items)} items in {out_dir}", file=sys.stderr)
    return 0


def _cmd_rate_serve(args) -> int:
    cfg = _effective("rate-serve", args)
    if _maybe_show_config("rate-serve", args, cfg):
        return 0
    from .service import run_service

    run_service(
        args.bundle,
        host=cfg["host"],
        port=int(cfg["port"]),
        log_path=cfg["log"],
    )
    return 0


def _cmd_rate_analyze(args) -> int:
    cfg = _effective("rate-analyze", args)
    if _maybe_show_config("rate-analyze", args, cfg):
        return 0
    rating_set = load_rating_set(args.bundle)
    responses = read_response_log(args.log)
    table = agreement_table(responses, rating_set.items, reference=cfg["ref"])
    if cfg["format"] == "json":
        print(
            json.dumps(
                {
                    "reference": table.reference,
                    "average_pct": table.average_pct,
                    "raters": list(table.raters),
                },
                sort_keys=True,
            )
        )
    else:
        print(agreement_csv_text(table), end="")
    outputs = []
    if args.output:
        Path(args.output).write_text(agreement_csv_text(table), encoding="utf-8")
        outputs.append(args.output)
    if cfg["consistency"]:
        rows = ["rater,matched,answered_pairs,excluded_pairs,ratio"]
        for rater, entry in intra_rater_consistency(responses, rating_set.items).items():
            ratio = "" if entry.ratio is None else _fmt(entry.ratio)
            rows.append(
                f"{rater},{entry.matched},{entry.answered_pairs},"
                f"{entry.excluded_pairs},{ratio}"
            )
        Path(cfg["consistency"]).write_text("\n".join(rows) + "\n", encoding="utf-8")
        outputs.append(cfg["consistency"])
    if outputs:
        write_manifest(
            str(outputs[0]) + ".manifest.json",
            "rate-analyze",
            {
                "bundle": _input_record(args.bundle),
                "log": _input_record(args.log),
            },
            {"ref": cfg["ref"], "seed": None},
            outputs,
        )
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; flags override it")
    sub.add_argument(
        "--show-config",
        action="store_true",
        default=None,
        help="print the merged effective configuration and exit",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vesselvar",
        description="agreement metrics and rating pipelines for vessel annotations",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("edt", help="Euclidean distance transform of a mask")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--signed", action="store_true", default=None,
                   help="signed edge distance (negative inside)")
    _add_common(p)
    p.set_defaults(func=_cmd_edt)

    p = subs.add_parser("skeleton", help="thin a mask to its centerline")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="CSV of centerline pixels")
    p.add_argument("--png", help="also save the skeleton as a PNG mask")
    _add_common(p)
    p.set_defaults(func=_cmd_skeleton)

    p = subs.add_parser("cldice", help="centerline agreement between two masks")
    p.add_argument("--a", help="first annotator's mask")
    p.add_argument("--b", help="second annotator's mask")
    p.add_argument("--dataset", help="dataset root: summarize all image pairs")
    p.add_argument("--modified", action="store_true", default=None,
                   help="distance-thresholded variant")
    p.add_argument("--d", type=float, help="distance threshold in pixels")
    p.add_argument("--tau", type=float, help="centerline-pixel threshold")
    p.add_argument("--format", choices=("text", "json"))
    p.add_argument("--output", help="summary CSV (dataset mode)")
    p.add_argument("--threads", type=int)
    _add_common(p)
    p.set_defaults(func=_cmd_cldice)

    p = subs.add_parser("cldice-sweep", help="modified-variant curve over thresholds")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--min", type=float)
    p.add_argument("--max", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--output", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_cldice_sweep)

    p = subs.add_parser("vesselness", help="Frangi/Sato ridge responses")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--dataset", help="dataset root: score every image pair")
    p.add_argument("--report", help="disagreement CSV (dataset mode)")
    p.add_argument("--filter", choices=("frangi", "sato"))
    p.add_argument("--sigmas", help="comma-separated scales in pixels")
    p.add_argument("--beta", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--polarity", choices=("dark-on-bright", "bright-on-dark"))
    p.add_argument("--no-rescale", dest="rescale", action="store_false", default=None,
                   help="keep [0,1] intensities instead of scaling to [0,255]")
    p.add_argument("--threads", type=int)
    _add_common(p)
    p.set_defaults(func=_cmd_vesselness)

    p = subs.add_parser("patchgen", help="sample random annotated patches")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--images", action="store_true", default=None,
                   help="also write patch and mask PNGs")
    p.add_argument("--threads", type=int)
    _add_common(p)
    p.set_defaults(func=_cmd_patchgen)

    p = subs.add_parser("rate-build", help="build a servable rating bundle")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, help="patches to sample before selection")
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--quota-none", type=int)
    p.add_argument("--quota-both", type=int)
    p.add_argument("--quota-a1", type=int)
    p.add_argument("--quota-a2", type=int)
    p.add_argument("--duplicates", type=int)
    p.add_argument("--threads", type=int)
    _add_common(p)
    p.set_defaults(func=_cmd_rate_build)

    p = subs.add_parser("rate-serve", help="serve a rating bundle over HTTP")
    p.add_argument("--bundle", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--log", help="response log path (default: bundle/responses.jsonl)")
    _add_common(p)
    p.set_defaults(func=_cmd_rate_serve)

    p = subs.add_parser("rate-analyze", help="agreement tables from a response log")
    p.add_argument("--bundle", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--ref", help="reference annotator id")
    p.add_argument("--output", help="agreement table CSV")
    p.add_argument("--consistency", help="intra-rater consistency CSV")
    p.add_argument("--format", choices=("csv", "json"))
    _add_common(p)
    p.set_defaults(func=_cmd_rate_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
