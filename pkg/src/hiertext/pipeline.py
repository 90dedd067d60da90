"""End-to-end extraction: channels, MSER, dendrograms, stopping rule, fusion."""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import groupdesc
from .classifier import BoostedModel
from .imageproc import MSERParams, extract_regions, project_channels
from .postproc import (PostprocParams, deduplicate, emit_outputs, make_group,
                       merge_collinear, split_words)
from .simspace import WeightConfig, default_optimal_weights
from .slc import build_dendrogram
from .stoprule import NfaContext, annotate, relabel, select_groups

OUTPUT_LEVELS = ("word", "line", "segmentation")
CHANNEL_SETS = ("gray", "mser++")


@dataclass
class PipelineConfig:
    mser: MSERParams = field(default_factory=MSERParams)
    weights: tuple = (default_optimal_weights(),)
    model_path: Optional[str] = None
    model: Optional[BoostedModel] = None
    accept_threshold: Optional[float] = None
    max_cluster_size: int = groupdesc.MAX_CLUSTER_SIZE
    postproc: PostprocParams = field(default_factory=PostprocParams)
    output_level: str = "line"
    channels: str = "mser++"
    workers: int = 1

    def __post_init__(self):
        self.weights = tuple(self.weights)
        if not self.weights:
            raise ValueError("need at least one weight config")
        if self.output_level not in OUTPUT_LEVELS:
            raise ValueError(f"output level must be one of {OUTPUT_LEVELS}")
        if self.channels not in CHANNEL_SETS:
            raise ValueError(f"channel set must be one of {CHANNEL_SETS}")
        if self.model is None and self.model_path is not None:
            self.model = BoostedModel.load(self.model_path)

    def threshold(self) -> float:
        if self.accept_threshold is not None:
            return self.accept_threshold
        return self.model.accept_threshold if self.model is not None else 0.0

    def to_dict(self) -> dict:
        pp = asdict(self.postproc)
        return {
            "mser": asdict(self.mser),
            "weights": [{"label": w.label, "w": list(w.w)} for w in self.weights],
            "model_path": self.model_path,
            "accept_threshold": self.accept_threshold,
            "max_cluster_size": self.max_cluster_size,
            "postproc": pp,
            "output_level": self.output_level,
            "channels": self.channels,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        obj = dict(obj)
        kw = {}
        if "mser" in obj:
            kw["mser"] = MSERParams(**obj.pop("mser"))
        if "weights" in obj:
            kw["weights"] = tuple(WeightConfig(tuple(w["w"]), w.get("label", "w"))
                                  for w in obj.pop("weights"))
        if "postproc" in obj:
            kw["postproc"] = PostprocParams(**obj.pop("postproc"))
        unknown = set(obj) - {"model_path", "accept_threshold", "max_cluster_size",
                              "output_level", "channels", "workers"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw.update(obj)
        return cls(**kw)


@dataclass
class Prepared:
    """Per-image state that does not depend on the acceptance threshold."""

    shape: tuple
    dendrograms: list
    regions: dict
    timing: dict


@dataclass
class ExtractionResult:
    mask: np.ndarray
    rects: list
    groups: list
    timing: dict

    def timing_json(self) -> str:
        return json.dumps(self.timing, indent=1, sort_keys=True)


class _Timer:
    def __init__(self):
        self.ms = {}
        self._t0 = time.perf_counter()

    def add(self, stage, t0):
        self.ms[stage] = self.ms.get(stage, 0.0) + (time.perf_counter() - t0) * 1000.0


def prepare(image: np.ndarray, cfg: PipelineConfig) -> Prepared:
    """Regions, dendrograms with statistics, NFA and classifier scores."""
    timer = _Timer()
    t = time.perf_counter()
    chans = project_channels(image)
    if cfg.channels == "gray":
        chans = chans[:1]
    timer.add("channels", t)
    h, w = chans[0].height, chans[0].width

    t = time.perf_counter()
    regions = {}
    for ch in chans:
        regions[ch.channel_id] = extract_regions(ch, cfg.mser)
    timer.add("regions", t)

    tasks = [(ch.channel_id, wc) for ch in chans for wc in cfg.weights
             if len(regions[ch.channel_id]) >= 2]

    def run(task):
        cid, wc = task
        t0 = time.perf_counter()
        regs = regions[cid]
        d = build_dendrogram(regs, wc, channel_id=cid, max_cluster_size=cfg.max_cluster_size)
        t1 = time.perf_counter()
        annotate(d, NfaContext.for_image(len(regs), w, h), cfg.model, cfg.threshold(),
                 cfg.max_cluster_size)
        return d, t1 - t0, time.perf_counter() - t1

    if cfg.workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            out = list(pool.map(run, tasks))
    else:
        out = [run(task) for task in tasks]
    timer.ms["dendrograms"] = sum(o[1] for o in out) * 1000.0
    timer.ms["classify"] = sum(o[2] for o in out) * 1000.0
    return Prepared((h, w), [o[0] for o in out], regions, timer.ms)


def finalize(prep: Prepared, cfg: PipelineConfig,
             accept_threshold: Optional[float] = None) -> ExtractionResult:
    """Selection and fusion for one acceptance threshold."""
    timing = dict(prep.timing)
    t = time.perf_counter()
    groups = []
    for d in prep.dendrograms:
        if accept_threshold is not None or cfg.model is None:
            if cfg.model is None:
                for node in d.internal_nodes():
                    node.label = node.log_nfa is not None
            else:
                relabel(d, accept_threshold)
        regs = prep.regions[d.channel_id]
        for node in select_groups(d):
            members = d.members(node.node_id)
            groups.append(make_group([regs[i] for i in sorted(members.tolist())],
                                     node.log_nfa, f"{d.channel_id}/{d.weight_label}"))
    timing["select"] = (time.perf_counter() - t) * 1000.0

    t = time.perf_counter()
    seg = np.zeros(prep.shape, np.uint8)
    for g in groups:
        seg.flat[g.pixels] = 255
    if cfg.output_level == "segmentation":
        final = groups
    else:
        final = merge_collinear(deduplicate(groups, cfg.postproc.dedup_iou), cfg.postproc)
        if cfg.output_level == "word":
            words = []
            for g in final:
                words.extend(split_words(g, cfg.postproc.split_factor)
                             if len(g.regions) >= 2 else [g])
            final = words
    _, rects = emit_outputs(final, prep.shape)
    timing["postproc"] = (time.perf_counter() - t) * 1000.0
    timing["total"] = sum(v for k, v in timing.items() if k != "total")
    return ExtractionResult(seg, rects, final, timing)


def extract(image: np.ndarray, cfg: PipelineConfig = None) -> ExtractionResult:
    """Text mask, rotated rectangles and per-stage timings (ms) for one image."""
    cfg = cfg or PipelineConfig()
    return finalize(prepare(image, cfg), cfg)


def finalize_mask(cfg: PipelineConfig):
    """Adapter for threshold sweeps: (Prepared, threshold) -> mask."""
    def run(prep, t):
        return finalize(prep, cfg, t).mask
    return run
