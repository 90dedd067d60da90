"""Train a small classifier on synthetic scenes, then extract text from a new one.

    python3 demos/extract_synthetic.py [out_dir]

Writes the input image, the text mask and an overlay of the line rectangles.
"""
import sys
from pathlib import Path

import cv2
import numpy as np

from hiertext.classifier import train_with_hard_negatives
from hiertext.evalharness import pixel_score
from hiertext.imageproc import save_png
from hiertext.pipeline import PipelineConfig, extract
from hiertext.simspace import default_optimal_weights
from hiertext.synthetic import SyntheticSpec, generate_corpus, generate_synthetic
from hiertext.training import fit_postproc, harvest_classifier_data


def main(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSpec(distractors=True)
    train = generate_corpus(2024, 100, spec)
    P, N = harvest_classifier_data(train, default_optimal_weights())
    model = train_with_hard_negatives(P, N, rounds=200, k=100)
    print(f"trained on {len(P)} positive and {len(N)} negative groups")

    cfg = PipelineConfig(model=model, postproc=fit_postproc(train), output_level="word")
    image, gt = generate_synthetic(12345, spec)
    res = extract(image, cfg)
    s = pixel_score(res.mask, gt.mask)
    print(f"{len(res.rects)} words; pixel precision {s.precision:.3f} recall {s.recall:.3f}")
    print("stage timings (ms):", {k: round(v, 1) for k, v in res.timing.items()})

    overlay = image.copy()
    for r in res.rects:
        box = cv2.boxPoints(((r["cx"], r["cy"]), (r["w"], r["h"]), np.degrees(r["angle_rad"])))
        cv2.polylines(overlay, [np.round(box).astype(np.int32)], True, (255, 0, 0), 2)
    save_png(out / "input.png", image)
    save_png(out / "mask.png", res.mask)
    save_png(out / "overlay.png", overlay)
    print(f"wrote {out}/input.png, mask.png, overlay.png")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out"))
