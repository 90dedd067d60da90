"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 data-format error.
Every error is reported on stderr as a single line starting with "error:".
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from functools import partial
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .classifier import BoostedModel, TrainingError, train_with_hard_negatives
from .evalharness import (DimensionMismatch, aggregate_localization, aggregate_pixel_scores,
                          localization_score, pixel_score, pr_sweep, sweep_csv)
from .geometry import min_area_rect, pixel_outline
from .imageproc import DecodeError, MSERParams, load_image, save_png
from .pipeline import PipelineConfig, finalize_mask, prepare, finalize
from .simspace import WeightConfig, default_optimal_weights
from .synthetic import PackingError, SyntheticSpec, generate_corpus
from .postproc import PostprocParams
from .training import (SearchConfig, corpus_tgr, diversify_weights, fit_postproc,
                       harvest_classifier_data, load_corpus, samples_from_image, save_corpus)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def load_weights(path) -> list:
    """Weight configs from {"configs": [...]} or a single {"label", "w"} object."""
    obj = json.loads(Path(path).read_text())
    items = obj["configs"] if "configs" in obj else [obj]
    return [WeightConfig(tuple(c["w"]), c.get("label", f"w{k}")) for k, c in enumerate(items)]


def load_postproc(path) -> Optional[PostprocParams]:
    """Fitted postproc thresholds stored next to the weights, if any."""
    obj = json.loads(Path(path).read_text())
    return PostprocParams(**obj["postproc"]) if "postproc" in obj else None


def _pipeline_config(args) -> PipelineConfig:
    base = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text())
    cfg = PipelineConfig.from_dict(base)
    if getattr(args, "weights", None):
        cfg.weights = tuple(load_weights(args.weights))
        fitted = load_postproc(args.weights)
        if fitted is not None and "postproc" not in base:
            cfg.postproc = fitted
    if getattr(args, "model", None):
        cfg.model_path = args.model
        cfg.model = BoostedModel.load(args.model)
    if getattr(args, "threshold", None) is not None:
        cfg.accept_threshold = args.threshold
    if getattr(args, "level", None):
        cfg.output_level = args.level
    if getattr(args, "channels", None):
        cfg.channels = args.channels
    cfg.__post_init__()
    return cfg


def _overlay(image, rects):
    out = image.copy() if image.ndim == 3 else np.stack([image] * 3, -1)
    for r in rects:
        c, s = np.cos(r["angle_rad"]), np.sin(r["angle_rad"])
        u = np.array([c, s]) * r["w"] / 2
        v = np.array([-s, c]) * r["h"] / 2
        ctr = np.array([r["cx"], r["cy"]])
        pts = np.array([ctr - u - v, ctr + u - v, ctr + u + v, ctr - u + v])
        cv2.polylines(out, [np.round(pts).astype(np.int32)], True, (255, 0, 0), 2)
    return out


def _extract_one(path: Path, cfg: PipelineConfig, out: Path, overlay: bool, dump: bool):
    image = load_image(path)
    prep = prepare(image, cfg)
    res = finalize(prep, cfg)
    save_png(out / f"{path.stem}_mask.png", res.mask)
    with open(out / f"{path.stem}_rects.jsonl", "w") as fh:
        for r in res.rects:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    _dump(out / f"{path.stem}_timing.json", res.timing)
    if overlay:
        save_png(out / f"{path.stem}_overlay.png", _overlay(image, res.rects))
    if dump:
        with open(out / f"{path.stem}_dendrograms.jsonl", "w") as fh:
            for d in prep.dendrograms:
                fh.write(d.to_json() + "\n")
    return len(res.rects), res.timing["total"]


def cmd_extract(args) -> int:
    out = Path(args.out)
    paths = [Path(p) for p in args.images]
    for p in paths:
        if not p.is_file():
            raise FileNotFoundError(f"no such image: {p}")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    cfg = _pipeline_config(args)
    out.mkdir(parents=True, exist_ok=True)
    job = partial(_extract_one, cfg=cfg, out=out, overlay=args.overlay,
                  dump=args.dump_dendrograms)
    if args.jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(min(args.jobs, len(paths))) as pool:
            results = list(pool.map(job, paths))
    else:
        results = [job(p) for p in paths]
    if args.verbose:
        for p, (n, ms) in zip(paths, results):
            print(f"{p}: {n} groups, {ms:.0f} ms", file=sys.stderr)
    return EXIT_OK


def _corpus_samples(corpus, channels):
    samples = []
    for name, image, gt in corpus:
        samples.extend(samples_from_image(image, gt, MSERParams(), channels, name))
    return samples


def cmd_train_weights(args) -> int:
    corpus = load_corpus(args.corpus)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    search = SearchConfig(args.lo, args.hi, args.coarse, args.fine)
    samples = _corpus_samples(corpus, args.channels)
    configs = diversify_weights(samples, args.n, search)
    postproc = fit_postproc([(image, gt) for _, image, gt in corpus])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "weights.json", {
        "configs": [{"label": w.label, "w": list(w.w)} for w in configs],
        "tgr": [corpus_tgr(samples, w) for w in configs],
        "combined_tgr": corpus_tgr(samples, configs),
        "postproc": asdict(postproc),
    })
    return EXIT_OK


def cmd_train_classifier(args) -> int:
    corpus = load_corpus(args.corpus)
    weights = load_weights(args.weights) if args.weights else [default_optimal_weights()]
    pairs = [(image, gt) for _, image, gt in corpus]
    P, N = [], []
    for w in weights:
        p, n = harvest_classifier_data(pairs, w, channels=args.channels)
        P.append(p)
        N.append(n)
    P, N = np.vstack(P), np.vstack(N)
    try:
        model = train_with_hard_negatives(P, N, args.rounds, args.hard_k, args.seed)
    except TrainingError as exc:
        raise DataError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.json")
    _dump(out / "training_report.json", {"positives": len(P), "negatives": len(N),
                                         "rounds": model.rounds, "hard_negatives": args.hard_k,
                                         "seed": args.seed})
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    fields = {}
    if args.spec:
        fields = json.loads(Path(args.spec).read_text())
        fields = {k: tuple(v) if isinstance(v, list) else v for k, v in fields.items()}
    if args.distractors:
        fields["distractors"] = True
    if args.no_text:
        fields["text"] = False
    try:
        spec = SyntheticSpec(**fields)
    except TypeError as exc:
        raise DataError(f"bad synthetic spec: {exc}") from exc
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    save_corpus(args.out, generate_corpus(args.seed, args.count, spec))
    return EXIT_OK


def _gt_rects(gt, level="line"):
    rects = []
    for g in gt.groups:
        if g.level != level:
            continue
        px = np.flatnonzero(np.isin(gt.label, g.members).ravel())
        ys, xs = np.divmod(px, gt.label.shape[1])
        rects.append(min_area_rect(pixel_outline(xs, ys)))
    return rects


def _read_rects(path: Path):
    if not path.exists():
        return None
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def cmd_evaluate(args) -> int:
    corpus = load_corpus(args.corpus)
    outputs = Path(args.outputs)
    per_image, pix, loc = [], [], []
    for name, image, gt in corpus:
        mpath = outputs / f"{name}_mask.png"
        mask = cv2.imread(str(mpath), cv2.IMREAD_GRAYSCALE) if mpath.is_file() else None
        if mask is None:
            raise FileNotFoundError(f"missing or unreadable mask {mpath}")
        ps = pixel_score(mask, gt.mask)
        pix.append(ps)
        entry = {"id": name, "pixel": ps.to_dict()}
        rects = _read_rects(outputs / f"{name}_rects.jsonl")
        if rects is not None:
            ls = localization_score(rects, _gt_rects(gt, args.level))
            loc.append(ls)
            entry["localization"] = ls.to_dict()
        per_image.append(entry)
    report = {"images": per_image, "pixel": aggregate_pixel_scores(pix).to_dict(),
              "mean_pixel_fscore": float(np.mean([p.fscore for p in pix])) if pix else 1.0}
    if loc:
        report["localization"] = aggregate_localization(loc).to_dict()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "report.json", report)
    return EXIT_OK


def _thresholds(text):
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise UsageError("--thresholds takes lo:hi:step") from exc
    if step <= 0 or hi < lo:
        raise UsageError("--thresholds needs step > 0 and hi >= lo")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 12) for k in range(n)]


def cmd_sweep(args) -> int:
    thresholds = _thresholds(args.thresholds)
    cfg = _pipeline_config(args)
    if cfg.model is None:
        raise UsageError("sweep needs --model")
    corpus = load_corpus(args.corpus)
    prepared = [prepare(image, cfg) for _, image, _ in corpus]
    truths = [gt.mask for _, _, gt in corpus]
    rows = pr_sweep(prepared, truths, thresholds, finalize_mask(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "pr.csv").write_text(sweep_csv(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hiertext", description=__doc__,
                 formatter_class=argparse.RawDescriptionHelpFormatter)
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def pipeline_flags(p):
        p.add_argument("--config", help="pipeline config JSON (keys as in PipelineConfig)")
        p.add_argument("--model", help="classifier model JSON")
        p.add_argument("--weights", help="weights JSON from train-weights")
        p.add_argument("--threshold", type=float, help="classifier acceptance threshold")
        p.add_argument("--channels", choices=("gray", "mser++"))

    p = sub.add_parser("extract", parents=[common], help="extract text from images")
    p.add_argument("images", nargs="+", help="input PNG images")
    p.add_argument("--out", required=True, help="output directory")
    pipeline_flags(p)
    p.add_argument("--level", choices=("word", "line", "segmentation"))
    p.add_argument("--overlay", action="store_true", help="also write rectangles over the input")
    p.add_argument("--dump-dendrograms", action="store_true",
                   help="write every dendrogram as JSON lines")
    p.add_argument("--jobs", type=int, default=1, help="images processed in parallel")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-weights", parents=[common], help="grid-search similarity weights on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1, help="number of diversified configs")
    p.add_argument("--channels", choices=("gray", "mser++"), default="mser++")
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=1.5)
    p.add_argument("--coarse", type=float, default=0.25)
    p.add_argument("--fine", type=float, default=0.05)
    p.set_defaults(func=cmd_train_weights)

    p = sub.add_parser("train-classifier", parents=[common], help="train the group classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", help="weights JSON (default: built-in optimum)")
    p.add_argument("--channels", choices=("gray", "mser++"), default="mser++")
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--hard-k", type=int, default=100, help="hard negatives added in retraining")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("gen-synthetic", parents=[common], help="write a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--spec", help="JSON with SyntheticSpec fields")
    p.add_argument("--distractors", action="store_true")
    p.add_argument("--no-text", action="store_true", help="distractor-only scenes")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("evaluate", parents=[common], help="score extract outputs against a corpus")
    p.add_argument("--outputs", required=True, help="directory written by extract")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--level", choices=("word", "line"), default="line",
                   help="GT level the rectangles are scored against")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="precision/recall over classifier thresholds")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--thresholds", required=True, help="lo:hi:step; write --thresholds=-2:2:0.5 for negative bounds")
    pipeline_flags(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("a command is required (see --help)")
        return args.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DecodeError, DimensionMismatch, DataError, PackingError, json.JSONDecodeError,
            KeyError, TypeError, ValueError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())
