"""Ground truth, text group recall, weight search and classifier harvesting."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import cv2
import numpy as np
from numba import njit

from . import groupdesc
from .groupdesc import RegionTable, batch_group_features, group_features
from .imageproc import (MSERParams, compute_region_features, extract_regions,
                        load_image, project_channels, region_from_pixels, save_png)
from .postproc import PostprocParams, _mergeable, make_group, split_words
from .simspace import WeightConfig, feature_matrix
from .slc import build_dendrogram, build_from_arrays, prim_edges
from .stoprule import is_eligible

LEVELS = ("word", "line")
MATCH_IOU = 0.9
DETECTED = 0.9


class UndefinedInputError(ValueError):
    pass


@dataclass(frozen=True)
class GTGroup:
    id: str
    level: str
    members: tuple

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown group level {self.level!r}")
        object.__setattr__(self, "members", tuple(int(m) for m in self.members))


@dataclass
class GroundTruth:
    label: np.ndarray
    groups: list = field(default_factory=list)

    def __post_init__(self):
        self.label = np.asarray(self.label)
        present = set(np.unique(self.label).tolist()) - {0}
        seen = {lvl: set() for lvl in LEVELS}
        for g in self.groups:
            missing = set(g.members) - present
            if missing:
                raise ValueError(f"group {g.id}: ids {sorted(missing)} not in label image")
            if seen[g.level] & set(g.members):
                raise ValueError(f"group {g.id} overlaps another {g.level} group")
            seen[g.level] |= set(g.members)

    @property
    def mask(self) -> np.ndarray:
        return self.label > 0

    @property
    def char_ids(self) -> list:
        return sorted(set(np.unique(self.label).tolist()) - {0})

    def groups_json(self) -> str:
        return json.dumps({"groups": [{"id": g.id, "level": g.level, "members": list(g.members)}
                                      for g in self.groups]}, indent=1)

    def save(self, label_path, groups_path) -> None:
        if self.label.max(initial=0) > 65535:
            raise ValueError("more than 65535 characters cannot be stored in 16 bits")
        if not cv2.imwrite(str(label_path), self.label.astype(np.uint16)):
            raise OSError(f"cannot write {label_path}")
        Path(groups_path).write_text(self.groups_json())

    @classmethod
    def load(cls, label_path, groups_path) -> "GroundTruth":
        label = cv2.imread(str(label_path), cv2.IMREAD_UNCHANGED)
        if label is None:
            raise OSError(f"cannot read {label_path}")
        if label.ndim != 2:
            raise ValueError(f"{label_path}: label image must be single channel")
        obj = json.loads(Path(groups_path).read_text())
        groups = [GTGroup(str(g["id"]), g["level"], tuple(g["members"])) for g in obj["groups"]]
        return cls(label.astype(np.int32), groups)


# ---------------------------------------------------------------- corpus I/O

def save_corpus(directory, pairs, start: int = 0) -> Path:
    """Write (image, GroundTruth) pairs plus a manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, (image, gt) in enumerate(pairs, start):
        stem = f"{k:05d}"
        save_png(d / f"{stem}.png", image)
        gt.save(d / f"{stem}_label.png", d / f"{stem}_groups.json")
        entries.append({"id": stem, "image": f"{stem}.png", "label": f"{stem}_label.png",
                        "groups": f"{stem}_groups.json"})
    (d / "manifest.json").write_text(json.dumps({"images": entries}, indent=1))
    return d


def load_corpus(directory) -> list:
    """List of (id, image, GroundTruth) from a manifest directory."""
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    out = []
    for e in manifest["images"]:
        image = load_image(d / e["image"])
        gt = GroundTruth.load(d / e["label"], d / e["groups"])
        if gt.label.shape != image.shape[:2]:
            raise ValueError(f"{e['id']}: label and image sizes differ")
        out.append((e["id"], image, gt))
    return out


# ---------------------------------------------------------------- matching

def region_match(r, g) -> float:
    """Pixel IoU of a region (or mask) and a character mask."""
    a = r.mask() if hasattr(r, "mask") else np.asarray(r, dtype=bool)
    b = np.asarray(g, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("masks differ in size")
    union = np.count_nonzero(a | b)
    return np.count_nonzero(a & b) / union if union else 1.0


def match_regions(regions: Sequence, label: np.ndarray, threshold: float = MATCH_IOU) -> np.ndarray:
    """GT character id matched by each region (IoU > threshold), 0 if none."""
    flat = np.asarray(label).ravel()
    sizes = np.bincount(flat)
    out = np.zeros(len(regions), np.int64)
    for k, r in enumerate(regions):
        ids, cnt = np.unique(flat[r.pixels], return_counts=True)
        keep = ids > 0
        ids, cnt = ids[keep], cnt[keep]
        if ids.size == 0:
            continue
        j = int(np.argmax(cnt))
        c, inter = int(ids[j]), int(cnt[j])
        if inter / (r.area + sizes[c] - inter) > threshold:
            out[k] = c
    return out


def _char_groups(groups):
    """char id -> {level: group index}."""
    table = {}
    for gi, g in enumerate(groups):
        for c in g.members:
            table.setdefault(c, {})[g.level] = gi
    return table


def group_contributions(dend, groups: Sequence[GTGroup], matches: np.ndarray) -> np.ndarray:
    """Best |H|/|G| per GT group over the nodes of ``dend``.

    A node counts for G when every member matches a character of G; |H| is
    the number of distinct characters it covers.
    """
    cg = _char_groups(groups)
    best = np.zeros(len(groups))
    sizes = np.array([len(g.members) for g in groups], dtype=np.float64)
    state = [None] * len(dend.nodes)
    for node in dend.nodes:
        i = node.node_id
        if node.is_leaf:
            c = int(matches[i])
            st = {lvl_g: frozenset([c]) for lvl_g in cg.get(c, {}).items()} if c else {}
        else:
            a, b = node.children
            sa, sb = state[a], state[b]
            st = {k: sa[k] | sb[k] for k in sa.keys() & sb.keys()} if sa and sb else {}
        state[i] = st
        for (_, gi), chars in st.items():
            best[gi] = max(best[gi], len(chars) / sizes[gi])
    return best


def text_group_recall(dend, gt: GroundTruth, regions: Optional[Sequence] = None,
                      matches: Optional[np.ndarray] = None) -> float:
    """Mean over GT groups of the largest pure node fraction."""
    if not gt.groups:
        raise UndefinedInputError("text group recall needs at least one GT group")
    if matches is None:
        if regions is None:
            raise ValueError("pass the dendrogram's regions or their matches")
        matches = match_regions(regions, gt.label)
    return float(group_contributions(dend, gt.groups, matches).mean())


# ---------------------------------------------------------------- training samples

@dataclass
class Sample:
    """One (image, channel): region similarity inputs and their GT matches."""

    feats: np.ndarray
    centers: np.ndarray
    matches: np.ndarray
    groups: list
    name: str = ""

    @property
    def n(self) -> int:
        return len(self.feats)

    def with_groups(self, groups) -> "Sample":
        return Sample(self.feats, self.centers, self.matches, list(groups), self.name)

    def encode(self):
        """(group per region and level, n distinct chars per region flag, sizes)."""
        cg = _char_groups(self.groups)
        rg = np.full((self.n, 2), -1, np.int64)
        for k, c in enumerate(self.matches):
            for lvl, gi in cg.get(int(c), {}).items():
                rg[k, LEVELS.index(lvl)] = gi
        sizes = np.array([len(g.members) for g in self.groups], dtype=np.float64)
        return rg, sizes

    def has_duplicate_matches(self) -> bool:
        m = self.matches[self.matches > 0]
        return m.size != np.unique(m).size


def samples_from_image(image, gt: GroundTruth, params: MSERParams = MSERParams(),
                       channels: str = "mser++", name: str = "") -> list:
    out = []
    for ch in _channels(image, channels):
        regions = extract_regions(ch, params)
        if not regions:
            continue
        feats, centers = feature_matrix(regions)
        out.append(Sample(feats, centers, match_regions(regions, gt.label), list(gt.groups),
                          f"{name}:{ch.channel_id}"))
    return out


def _channels(image, which):
    chans = project_channels(image)
    if which == "gray":
        return chans[:1]
    if which != "mser++":
        raise ValueError(f"unknown channel set {which!r}")
    return chans


@njit(cache=True)
def _sample_contrib(feats, centers, w, rg, n_groups):
    """Best pure-node size per group, in characters, from the SLC merge order.

    Member counts stand in for distinct characters; callers route samples
    with duplicate matches to the reference path. The second value flags
    tied edge lengths, whose merge order the reference resolves differently.
    """
    n = feats.shape[0]
    best = np.zeros(n_groups)
    parent = np.arange(n)
    g = rg.copy()
    cnt = np.ones(n)
    for i in range(n):
        for L in range(2):
            if g[i, L] >= 0 and best[g[i, L]] < 1.0:
                best[g[i, L]] = 1.0
    if n < 2:
        return best, False
    ei, ej, ed = prim_edges(feats, centers, w)
    order = np.argsort(ed, kind="mergesort")
    for k in range(1, n - 1):
        if ed[order[k]] == ed[order[k - 1]]:
            return best, True
    for k in order:
        a = ei[k]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = ej[k]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if cnt[a] < cnt[b]:
            a, b = b, a
        parent[b] = a
        cnt[a] += cnt[b]
        for L in range(2):
            if g[a, L] >= 0 and g[a, L] == g[b, L]:
                if cnt[a] > best[g[a, L]]:
                    best[g[a, L]] = cnt[a]
            else:
                g[a, L] = -1
    return best, False


def sample_contributions(sample: Sample, w) -> np.ndarray:
    """TGR contribution of each GT group of ``sample`` under weights ``w``."""
    warr = np.asarray(w.w if isinstance(w, WeightConfig) else w, dtype=np.float64)
    if not sample.groups:
        return np.zeros(0)
    if not sample.has_duplicate_matches():
        rg, sizes = sample.encode()
        best, tied = _sample_contrib(sample.feats, sample.centers, warr, rg, len(sizes))
        if not tied:
            return best / sizes
    d = build_from_arrays(sample.feats, sample.centers, WeightConfig(tuple(warr)))
    return group_contributions(d, sample.groups, sample.matches)


def corpus_tgr(samples: Sequence[Sample], configs) -> float:
    """Mean over samples of TGR, each group taking its best config."""
    if isinstance(configs, WeightConfig):
        configs = [configs]
    vals = []
    for s in samples:
        if not s.groups:
            continue
        c = np.max([sample_contributions(s, w) for w in configs], axis=0)
        vals.append(c.mean())
    if not vals:
        raise UndefinedInputError("corpus has no GT groups")
    return float(np.mean(vals))


# ---------------------------------------------------------------- weight search

@dataclass(frozen=True)
class SearchConfig:
    lo: float = 0.0
    hi: float = 1.5
    coarse_step: float = 0.25
    fine_step: float = 0.05

    def units(self):
        """Grid expressed in integer multiples of the fine step."""
        k = round(self.coarse_step / self.fine_step)
        if abs(k * self.fine_step - self.coarse_step) > 1e-9:
            raise ValueError("coarse step must be a multiple of the fine step")
        lo, hi = round(self.lo / self.fine_step), round(self.hi / self.fine_step)
        return lo, hi, k


def _weights(units, step):
    return tuple(round(u * step, 10) for u in units)


def optimize_weights(samples: Sequence[Sample], search: SearchConfig = SearchConfig(),
                     label: str = "w_opt") -> WeightConfig:
    """Grid search maximizing corpus TGR, then coordinate refinement.

    Candidates are visited in lexicographic order and the first maximum wins,
    so ties go to the lexicographically smallest weights. Refinement only
    moves on strict improvement.
    """
    samples = [s for s in samples if s.groups]
    if not samples:
        raise UndefinedInputError("corpus has no GT groups")
    lo, hi, k = search.units()
    cache = {}

    def objective(units):
        if units not in cache:
            cache[units] = corpus_tgr(samples, WeightConfig(_weights(units, search.fine_step)))
        return cache[units]

    axis = list(range(lo, hi + 1, k))
    best_u, best_v = None, -1.0
    for units in itertools.product(axis, repeat=5):
        v = objective(units)
        if v > best_v:
            best_u, best_v = units, v
    improved = True
    while improved:
        improved = False
        for i in range(5):
            for step in (-1, 1):
                u = list(best_u)
                u[i] += step
                if not lo <= u[i] <= hi:
                    continue
                u = tuple(u)
                v = objective(u)
                if v > best_v:
                    best_u, best_v = u, v
                    improved = True
    return WeightConfig(_weights(best_u, search.fine_step), label)


def diversify_weights(samples: Sequence[Sample], n: int,
                      search: SearchConfig = SearchConfig()) -> list:
    """Successive optimal weights, each fitted to the groups the previous
    configurations left undetected."""
    if n < 1:
        raise ValueError("n must be >= 1")
    remaining = [s for s in samples if s.groups]
    configs = []
    for k in range(n):
        if not remaining:
            break
        w = optimize_weights(remaining, search, f"w_opt{k + 1}")
        configs.append(w)
        nxt, removed = [], 0
        for s in remaining:
            c = sample_contributions(s, w)
            keep = [g for g, v in zip(s.groups, c) if v < DETECTED]
            removed += len(s.groups) - len(keep)
            if keep:
                nxt.append(s.with_groups(keep))
        if removed == 0:
            break
        remaining = nxt
    return configs


# ---------------------------------------------------------------- classifier data

def _gt_group_vectors(channel, gt: GroundTruth, max_cluster_size: int):
    chars = gt.char_ids
    if not chars:
        return []
    index = {c: k for k, c in enumerate(chars)}
    regs = gt_regions(gt, channel.channel_id)
    regions = [compute_region_features(regs[c], channel) for c in chars]
    table = RegionTable.from_regions(regions)
    out = []
    for g in gt.groups:
        if 2 <= len(g.members) <= max_cluster_size:
            out.append(batch_group_features([index[c] for c in g.members], table))
    return out


def harvest_classifier_data(corpus, w: WeightConfig, params: MSERParams = MSERParams(),
                            channels: str = "mser++", coverage: float = 0.8,
                            max_cluster_size: int = groupdesc.MAX_CLUSTER_SIZE):
    """Positive and negative group feature matrices from (image, GroundTruth) pairs.

    Positives are every GT group described as if detected, plus pure
    dendrogram nodes covering more than ``coverage`` of a GT group; negatives
    are nodes none of whose members match a GT character.
    """
    pos, neg = [], []
    for image, gt in corpus:
        cg = _char_groups(gt.groups)
        sizes = [len(g.members) for g in gt.groups]
        for ch in _channels(image, channels):
            pos.extend(_gt_group_vectors(ch, gt, max_cluster_size))
            regions = extract_regions(ch, params)
            if len(regions) < 2:
                continue
            dend = build_dendrogram(regions, w, max_cluster_size=max_cluster_size)
            matches = match_regions(regions, gt.label)
            for node in dend.internal_nodes():
                if not is_eligible(node, max_cluster_size):
                    continue
                m = matches[dend.members(node.node_id)]
                if not m.any():
                    neg.append(group_features(node.stats, dend.table))
                    continue
                if not m.all():
                    continue
                chars = set(m.tolist())
                common = None
                for c in chars:
                    gs = set(cg.get(c, {}).values())
                    common = gs if common is None else common & gs
                if any(len(chars) / sizes[gi] > coverage for gi in common or ()):
                    pos.append(group_features(node.stats, dend.table))
    P = np.array(pos, dtype=np.float64).reshape(-1, len(groupdesc.GROUP_FEATURE_NAMES))
    N = np.array(neg, dtype=np.float64).reshape(-1, len(groupdesc.GROUP_FEATURE_NAMES))
    return P, N


# ---------------------------------------------------------------- postproc thresholds

def gt_regions(gt: GroundTruth, channel_id: str = "gray") -> dict:
    """char id -> Region built from the label image."""
    flat = gt.label.ravel()
    order = np.argsort(flat, kind="stable")
    chars = gt.char_ids
    bounds = np.searchsorted(flat[order], chars + [chars[-1] + 1] if chars else [])
    out = {}
    for k, c in enumerate(chars):
        px = np.sort(order[bounds[k]:bounds[k + 1]])
        out[c] = region_from_pixels(px, gt.label.shape, channel_id)
    return out


def _gt_lines(gt: GroundTruth, regs: dict):
    """(line TextGroup, its word partition as frozensets of char ids, members) per GT line."""
    words = [g for g in gt.groups if g.level == "word"]
    out = []
    for line in (g for g in gt.groups if g.level == "line"):
        chars = set(line.members)
        part = frozenset(frozenset(w.members) for w in words if set(w.members) <= chars)
        grp = make_group([regs[c] for c in line.members])
        out.append((grp, part, list(line.members)))
    return out


def _plateau_middle(values, scores):
    best = max(scores)
    idx = [k for k, s in enumerate(scores) if s == best]
    return values[idx[len(idx) // 2]]


def fit_postproc(corpus, base: PostprocParams = PostprocParams(),
                 split_grid=tuple(np.round(np.arange(1.0, 3.01, 0.25), 2)),
                 angle_grid_deg=(5.0, 10.0, 15.0, 20.0),
                 gap_grid=(1.0, 1.5, 2.0, 2.5, 3.0),
                 ratio_grid=(1.5, 2.0, 2.5, 3.0)) -> PostprocParams:
    """Coarse grid search of the merge and split thresholds on GT groups.

    The split factor maximizes the share of GT lines cut exactly into their
    words; ties take the middle of the best run. The merge thresholds
    maximize balanced accuracy on two kinds of pairs: the two halves of a
    GT line (should merge) and two distinct GT lines of one image (should
    not); ties take the candidate nearest the base values.
    """
    lines, pos, neg = [], [], []
    for image, gt in corpus:
        if not gt.groups:
            continue
        regs = gt_regions(gt)
        img_lines = _gt_lines(gt, regs)
        for grp, part, members in img_lines:
            if len(members) >= 2 and part:
                lines.append((grp, part, {id(regs[c]): c for c in members}))
            if len(members) >= 4:
                c, s = math.cos(grp.baseline), math.sin(grp.baseline)
                order = np.argsort(grp.centers @ np.array([c, s]), kind="stable")
                half = len(order) // 2
                pos.append((make_group([grp.regions[k] for k in order[:half]]),
                            make_group([grp.regions[k] for k in order[half:]])))
        for a, b in itertools.combinations(img_lines, 2):
            neg.append((a[0], b[0]))

    split = base.split_factor
    if lines:
        scores = []
        for tau in split_grid:
            ok = 0
            for grp, part, owner in lines:
                got = frozenset(frozenset(owner[id(r)] for r in w.regions)
                                for w in split_words(grp, tau))
                ok += got == part
            scores.append(ok)
        split = float(_plateau_middle(list(split_grid), scores))

    angle, gap, ratio = base.merge_angle, base.merge_gap, base.merge_height_ratio
    if pos and neg:
        best_key = None
        for a_deg, g, r in itertools.product(angle_grid_deg, gap_grid, ratio_grid):
            p = replace(base, merge_angle=math.radians(a_deg), merge_gap=g, merge_height_ratio=r)
            tpr = np.mean([_mergeable(x, y, p) for x, y in pos])
            tnr = np.mean([not _mergeable(x, y, p) for x, y in neg])
            dist = (abs(math.radians(a_deg) - base.merge_angle) / math.radians(5.0)
                    + abs(g - base.merge_gap) / 0.5 + abs(r - base.merge_height_ratio) / 0.5)
            key = (-(tpr + tnr) / 2, dist, a_deg, g, r)
            if best_key is None or key < best_key:
                best_key = key
        _, _, a_deg, gap, ratio = best_key
        angle = math.radians(a_deg)
    return replace(base, merge_angle=angle, merge_gap=gap, merge_height_ratio=ratio,
                   split_factor=split)
