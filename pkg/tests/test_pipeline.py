import cv2
import numpy as np
import pytest

from hiertext.evalharness import pixel_score
from hiertext.imageproc import extract_regions, project_channels
from hiertext.pipeline import PipelineConfig, extract, finalize, prepare
from hiertext.simspace import WeightConfig, default_optimal_weights
from hiertext.slc import build_dendrogram
from hiertext.stoprule import NfaContext, annotate, select_groups
from hiertext.synthetic import SyntheticSpec, generate_synthetic

TWO_WORDS = SyntheticSpec(words=(2, 2), words_per_line=(2, 2), angle_range=(-10, 10))


def rotate(image, label, degrees):
    h, w = image.shape[:2]
    side = int(np.hypot(h, w)) + 2
    M = cv2.getRotationMatrix2D((w / 2, h / 2), degrees, 1.0)
    M[:, 2] += [(side - w) / 2, (side - h) / 2]
    bg = tuple(int(v) for v in np.median(image.reshape(-1, 3), axis=0))
    im = cv2.warpAffine(image, M, (side, side), flags=cv2.INTER_NEAREST, borderValue=bg)
    lab = cv2.warpAffine(label.astype(np.float32), M, (side, side), flags=cv2.INTER_NEAREST)
    return im, lab.astype(np.int32)


@pytest.fixture
def cfg(small_model):
    return PipelineConfig(model=small_model, channels="gray")


def test_blank_image_gives_empty_outputs():
    r = extract(np.full((60, 80, 3), 128, np.uint8))
    assert r.mask.shape == (60, 80) and not r.mask.any()
    assert r.rects == [] and r.groups == []


def test_two_words_detected(cfg):
    for seed in range(3):
        image, gt = generate_synthetic(seed, TWO_WORDS)
        assert pixel_score(extract(image, cfg).mask, gt.mask).fscore >= 0.9


def test_word_level_splits_line(cfg, fitted_postproc):
    image, gt = generate_synthetic(0, TWO_WORDS)
    words = extract(image, PipelineConfig(model=cfg.model, channels="gray", output_level="word",
                                          postproc=fitted_postproc))
    lines = extract(image, cfg)
    assert len(lines.rects) == 1
    assert len(words.rects) == 2


def test_rotation_changes_little(cfg):
    for seed in range(3):
        image, gt = generate_synthetic(seed, TWO_WORDS)
        f0 = pixel_score(extract(image, cfg).mask, gt.mask).fscore
        im2, lab2 = rotate(image, gt.label, 45)
        f1 = pixel_score(extract(im2, cfg).mask, lab2).fscore
        assert abs(f0 - f1) <= 0.05


def test_deterministic(cfg):
    image, _ = generate_synthetic(5, SyntheticSpec(distractors=True))
    a, b = extract(image, cfg), extract(image, cfg)
    np.testing.assert_array_equal(a.mask, b.mask)
    assert a.rects == b.rects


def test_threads_match_serial(small_model):
    image, _ = generate_synthetic(6, SyntheticSpec(distractors=True))
    ws = (default_optimal_weights(), WeightConfig((1, 1, 1, 1, 1), "w_I"))
    a = extract(image, PipelineConfig(model=small_model, weights=ws, workers=1))
    b = extract(image, PipelineConfig(model=small_model, weights=ws, workers=2))
    np.testing.assert_array_equal(a.mask, b.mask)
    assert a.rects == b.rects


def test_gray_pipeline_equals_manual_stages(cfg):
    image, _ = generate_synthetic(2)
    ch = project_channels(image)[0]
    regions = extract_regions(ch, cfg.mser)
    w = cfg.weights[0]
    d = build_dendrogram(regions, w, max_cluster_size=cfg.max_cluster_size)
    annotate(d, NfaContext.for_image(len(regions), ch.width, ch.height), cfg.model,
             cfg.threshold(), cfg.max_cluster_size)
    mask = np.zeros((ch.height, ch.width), np.uint8)
    for node in select_groups(d):
        for i in d.members(node.node_id):
            mask.flat[regions[i].pixels] = 255
    seg = extract(image, PipelineConfig(model=cfg.model, channels="gray",
                                        output_level="segmentation"))
    np.testing.assert_array_equal(seg.mask, mask)
    np.testing.assert_array_equal(extract(image, cfg).mask, mask)


def test_threshold_override_matches_reprepare(cfg):
    image, _ = generate_synthetic(3, SyntheticSpec(distractors=True))
    prep = prepare(image, cfg)
    for t in (-5.0, 0.0, 5.0):
        direct = extract(image, PipelineConfig(model=cfg.model, channels="gray",
                                               accept_threshold=t))
        np.testing.assert_array_equal(finalize(prep, cfg, t).mask, direct.mask)


def test_timing_keys(cfg):
    image, _ = generate_synthetic(1)
    r = extract(image, cfg)
    assert {"channels", "regions", "dendrograms", "classify", "select", "postproc",
            "total"} <= set(r.timing)
    assert all(v >= 0 for v in r.timing.values())
    assert r.timing["total"] == pytest.approx(sum(v for k, v in r.timing.items() if k != "total"))


def test_config_round_trip(small_model_path):
    cfg = PipelineConfig(model_path=str(small_model_path), accept_threshold=0.5,
                         output_level="word", channels="gray",
                         weights=(WeightConfig((0.1, 0.2, 0.3, 0.4, 0.5), "a"),))
    back = PipelineConfig.from_dict(cfg.to_dict())
    assert back.to_dict() == cfg.to_dict()
    assert back.model is not None


@pytest.mark.parametrize("bad", [{"output_level": "page"}, {"channels": "rgb"}, {"weights": ()}])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        PipelineConfig(**bad)


def test_unknown_config_keys_rejected():
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"colour": 1})
