"""Why more than one similarity metric helps.

Lines of the first population share color but vary in size and stroke;
lines of the second share size and stroke but vary in color. Neighbouring
clutter copies whichever cue the line does not share. One weighting cannot
isolate both kinds of line; two diversified weightings can.

    python3 demos/learn_weights.py
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from corpora import two_population_corpus  # noqa: E402
from hiertext.simspace import FEATURE_NAMES, identity_weights  # noqa: E402
from hiertext.training import corpus_tgr, diversify_weights, optimize_weights  # noqa: E402


def show(label, w, samples):
    weights = ", ".join(f"{n}={v:.2f}" for n, v in zip(FEATURE_NAMES, w.w))
    print(f"{label:>10}: TGR {corpus_tgr(samples, w):.3f}  ({weights})")


def main():
    samples = two_population_corpus(seed=0)
    show("identity", identity_weights(), samples)
    show("optimized", optimize_weights(samples), samples)
    configs = diversify_weights(samples, 2)
    for w in configs:
        show(w.label, w, samples)
    print(f"{'combined':>10}: TGR {corpus_tgr(samples, configs):.3f}")


if __name__ == "__main__":
    main()
