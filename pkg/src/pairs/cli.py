"""Command-line front end.

Exit codes: 0 success, 2 unreadable or malformed input, 3 constraint
violation (bad aspect ratio, empty split, oversized search, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aggregate import gate as gate_mod
from .aggregate import mlp as mlp_mod
from .aggregate.modelio import load_model, save_model
from .aggregate.scores import load_scores
from .aggregate.selection import average_predict, beam_search_subsets, top_patches
from .dataset import load_cub
from .errors import InputFormatError, MismatchedIds, PairsError
from .evaluation import (
    DEFAULT_C,
    difficulty_histogram,
    format_histogram_csv,
    format_pck_table,
    format_pck_tsv,
    patch_accuracy,
    pck_report,
)
from .extract import POLICIES, extract_all
from .geometry import parse_size
from .posetensor import decode, read_pose_tensor
from .schema import dump_schema, enumerate_raw_pairs, load_schema, merge_symmetric

log = logging.getLogger("pairs")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _fmt_acc(v) -> str:
    return "nan" if v is None or np.isnan(v) else f"{100 * v:.2f}"


def cmd_schema_check(args) -> int:
    schema = load_schema(args.file)
    raw = enumerate_raw_pairs(schema)
    hybrid = merge_symmetric(schema, raw)
    print(f"keypoints\t{schema.n}")
    print(f"symmetric_pairs\t{len(schema.symmetric_pairs)}")
    print(f"raw_pairs\t{len(raw)}")
    print(f"hybrid_classes\t{len(hybrid)}")
    if args.dump:
        sys.stdout.write("\n" + dump_schema(schema))
    return 0


def cmd_pairs_enumerate(args) -> int:
    schema = load_schema(args.schema)
    classes = enumerate_raw_pairs(schema)
    if args.merge_symmetric:
        classes = merge_symmetric(schema, classes)
    lines = ["index\tclass\tmembers"]
    for k, cls in enumerate(classes):
        members = ";".join(f"{schema.names[i]}__{schema.names[j]}" for i, j in cls.members)
        lines.append(f"{k}\t{cls.label(schema)}\t{members}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_extract(args) -> int:
    index = load_cub(args.root)
    if args.schema:
        schema = load_schema(args.schema)
        if schema.names != index.schema.names:
            raise InputFormatError("schema keypoint names do not match the dataset's parts.txt")
        index.schema = schema
    keypoints = None
    if args.keypoints:
        keypoints = _read_keypoints(args.keypoints)
    try:
        size = parse_size(args.size)
    except ValueError as exc:
        raise InputFormatError(str(exc)) from None
    manifest = extract_all(index, args.out, size, args.policy, args.merge_symmetric,
                           keypoints=keypoints, workers=args.workers)
    summary = {k: manifest[k] for k in ("images", "pairs_per_image", "written",
                                         "skipped_degenerate", "skipped_invisible")}
    summary["errors"] = len(manifest["errors"])
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_decode(args) -> int:
    tensor = read_pose_tensor(args.tensor)
    pose = decode(tensor, args.threshold)
    image_id = args.image_id or Path(args.tensor).stem
    rows = pose.to_rows()
    if args.threshold is not None:
        for row, vis in zip(rows, pose.visible):
            row.append(int(vis))
    _emit(json.dumps({image_id: rows}, indent=1) + "\n", args.out)
    return 0


def _read_keypoints(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputFormatError(f"keypoint file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise InputFormatError(f"{path}: expected an object keyed by image id")
    out = {}
    for key, rows in raw.items():
        arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] < 2:
            raise InputFormatError(f"{path}: image {key}: expected [[x, y, confidence], ...]")
        out[str(key)] = arr
    return out


def cmd_pck(args) -> int:
    preds = _read_keypoints(args.pred)
    index = load_cub(args.gt)
    known = index.by_id()
    unknown = sorted(set(preds) - set(known))
    if unknown:
        raise MismatchedIds(f"{len(unknown)} predicted image ids are not in the dataset (e.g. {unknown[0]})")
    gts = {i: index.poses[i] for i in preds}
    boxes = {i: known[i].bbox for i in preds}
    report = pck_report(preds, gts, boxes, index.schema.names, args.c)
    _emit(format_pck_table(report.names, report.per_keypoint, report.overall) + "\n", None)
    if args.tsv:
        Path(args.tsv).write_text(format_pck_tsv(report), encoding="utf-8")
    return 0


def cmd_aggregate(args) -> int:
    st = load_scores(args.scores)
    lines = []
    if args.method == "avg":
        subset = None if args.k is None else top_patches(st, args.k, args.split)
        sub = list(range(st.n_patches)) if subset is None else list(subset)
        lines.append(f"subset\t{','.join(map(str, sub))}")
        for split in ("train", "test"):
            _, acc = average_predict(st, sub, split)
            lines.append(f"{split}_accuracy\t{_fmt_acc(acc)}")
    elif args.method == "beam":
        report = "train" if args.split == "test" else "test"
        steps = beam_search_subsets(st, args.beam_width, args.k, split=args.split,
                                    report_split=report, workers=args.workers)
        if args.split == "test":
            lines.append("# diagnostic: subsets ranked on the test split")
        lines.append(f"k\t{args.split}_accuracy\t{report}_accuracy\tsubset")
        for s in steps:
            lines.append(f"{s.size}\t{_fmt_acc(s.accuracy)}\t{_fmt_acc(s.report_accuracy)}\t"
                         + ",".join(map(str, s.subset)))
        if args.figure:
            from .plotting import plot_beam
            plot_beam(steps, args.figure, labels=(args.split, report))
    elif args.method == "gate":
        k = st.n_patches if args.k is None else args.k
        if args.model:
            model, _ = load_model(args.model)
            if not isinstance(model, gate_mod.GateModel):
                raise InputFormatError(f"{args.model} does not hold a gate model")
        elif args.constant:
            model = gate_mod.constant_gate(st.n_patches * st.n_classes, st.n_patches, k)
        else:
            model = gate_mod.gate_train(st, k, epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
                                        seed=args.seed, normalize=args.normalize)
        X = st.features()
        for split in ("train", "test"):
            m = st.mask(split)
            pred = gate_mod.gate_predict_batch(model, X[m], st.data[m])
            acc = float(np.mean(pred == st.labels[m])) if m.any() else float("nan")
            lines.append(f"{split}_accuracy\t{_fmt_acc(acc)}")
        if args.model_out:
            save_model(args.model_out, model, {"k": k, "seed": args.seed, "epochs": args.epochs, "lr": args.lr,
                                                "n_patches": st.n_patches, "n_classes": st.n_classes})
    else:
        if args.model:
            model, _ = load_model(args.model)
            if not isinstance(model, mlp_mod.MlpModel):
                raise InputFormatError(f"{args.model} does not hold an MLP model")
        else:
            model = mlp_mod.mlp_train(st, hidden=args.hidden, batch_size=args.batch_size, lr=args.lr,
                                      epochs=args.epochs, seed=args.seed,
                                      val_fraction=args.val_fraction).model
        X = st.features()
        for split in ("train", "test"):
            m = st.mask(split)
            lines.append(f"{split}_accuracy\t{_fmt_acc(mlp_mod.accuracy(model, X[m], st.labels[m]))}")
        if args.model_out:
            save_model(args.model_out, model, {"hidden": model.hidden, "seed": args.seed, "epochs": args.epochs,
                                                "lr": args.lr, "batch_size": args.batch_size,
                                                "in_dim": model.in_dim, "n_classes": model.n_classes})
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_difficulty(args) -> int:
    st = load_scores(args.scores)
    data, labels = st.split(args.split)
    hist = difficulty_histogram(data, labels)
    _emit(format_histogram_csv(hist), args.out)
    if args.figure:
        from .plotting import plot_difficulty
        plot_difficulty(hist, args.figure)
    if args.patch_accuracy:
        acc = patch_accuracy(data, labels)
        text = "patch,accuracy\n" + "".join(f"{p},{a:.6f}\n" for p, a in enumerate(acc))
        Path(args.patch_accuracy).write_text(text, encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pairs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("schema", help="schema utilities")
    ssub = sp.add_subparsers(dest="action", required=True)
    c = ssub.add_parser("check", help="validate a schema file and print pair counts")
    c.add_argument("file")
    c.add_argument("--dump", action="store_true", help="also print the normalised schema")
    c.set_defaults(func=cmd_schema_check)

    pp = sub.add_parser("pairs", help="patch-class enumeration")
    psub = pp.add_subparsers(dest="action", required=True)
    e = psub.add_parser("enumerate", help="list raw pairs or hybrid classes")
    e.add_argument("--schema", required=True)
    e.add_argument("--merge-symmetric", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=cmd_pairs_enumerate)

    x = sub.add_parser("extract", help="warp pose-aligned patches for a dataset")
    x.add_argument("--root", required=True, help="CUB-style dataset root")
    x.add_argument("--schema", help="schema file (defaults to the dataset's parts.txt)")
    x.add_argument("--out", required=True)
    x.add_argument("--size", default="512x256", help="patch WIDTHxHEIGHT, must be 2:1")
    x.add_argument("--policy", choices=POLICIES, default="all")
    x.add_argument("--merge-symmetric", action="store_true", help="write patches per hybrid class directory")
    x.add_argument("--keypoints", help="keypoint JSON overriding annotated locations")
    x.add_argument("--workers", type=int, default=1)
    x.set_defaults(func=cmd_extract)

    d = sub.add_parser("decode", help="decode a pose tensor file to keypoint JSON")
    d.add_argument("--tensor", required=True)
    d.add_argument("--out")
    d.add_argument("--image-id", help="key for the output JSON (default: tensor file stem)")
    d.add_argument("--threshold", type=float, help="mark keypoints below this peak invisible")
    d.set_defaults(func=cmd_decode)

    k = sub.add_parser("pck", help="PCK of predicted keypoints against a dataset")
    k.add_argument("--pred", required=True, help="keypoint JSON")
    k.add_argument("--gt", required=True, help="CUB-style dataset root")
    k.add_argument("--c", type=float, default=DEFAULT_C, help=f"threshold factor (default {DEFAULT_C})")
    k.add_argument("--tsv", help="also write the report as TSV")
    k.set_defaults(func=cmd_pck)

    a = sub.add_parser("aggregate", help="combine per-patch scores into image predictions")
    a.add_argument("method", choices=("avg", "beam", "gate", "mlp"))
    a.add_argument("--scores", required=True, help="score tensor (.csv or binary)")
    a.add_argument("--k", type=int, help="avg: top-k patches; beam: largest subset size; gate: sparsity")
    a.add_argument("--beam-width", type=int, default=10)
    a.add_argument("--split", choices=("train", "test"), default="train",
                   help="split used for ranking/selection (test is diagnostic only)")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--epochs", type=int, default=100)
    a.add_argument("--lr", type=float, default=1e-3)
    a.add_argument("--batch-size", type=int, default=64)
    a.add_argument("--hidden", type=int, default=1024)
    a.add_argument("--val-fraction", type=float, default=0.0)
    a.add_argument("--normalize", choices=("softmax", "sigmoid"), default="softmax")
    a.add_argument("--constant", action="store_true", help="gate: skip training, use uniform gate scores")
    a.add_argument("--model", help="evaluate a saved model instead of training")
    a.add_argument("--model-out", help="save the trained model here")
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--figure", help="beam: write the accuracy curve as PNG")
    a.add_argument("--out")
    a.set_defaults(func=cmd_aggregate)

    h = sub.add_parser("difficulty", help="histogram of correctly predicting patches per image")
    h.add_argument("--scores", required=True)
    h.add_argument("--split", choices=("train", "test", "all"), default="all")
    h.add_argument("--out", help="CSV output (default stdout)")
    h.add_argument("--figure", help="write the histogram as PNG")
    h.add_argument("--patch-accuracy", help="also write per-patch accuracy CSV")
    h.set_defaults(func=cmd_difficulty)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PairsError as exc:
        print(f"pairs: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        # Out-of-range parameter values (k, c, beam width, ...).
        print(f"pairs: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
