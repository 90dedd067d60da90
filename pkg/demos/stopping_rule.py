"""A word that absorbs an outlier is still text to the classifier, but the
merged group is less meaningful than the word alone, so the word is kept.

    python3 demos/stopping_rule.py
"""
import numpy as np

from hiertext.groupdesc import RegionTable
from hiertext.simspace import identity_weights
from hiertext.slc import build_from_arrays
from hiertext.stoprule import NfaContext, annotate, select_groups

# intensity, boundary intensity, border gradient, major axis, stroke width
FEATS = np.array([[40, 200, 90, 30, 4], [42, 201, 92, 31, 4], [41, 199, 91, 29, 4],
                  [43, 200, 89, 30, 4], [160, 60, 150, 34, 5]], float)
CENTERS = np.array([[100, 100], [120, 101], [140, 100], [160, 99], [185, 100]], float)


def main():
    n = len(FEATS)
    scalars = np.zeros((n, 8))
    scalars[:, [0, 1, 4, 2, 3]] = FEATS
    scalars[:, 5:7] = 1.0
    table = RegionTable(scalars, FEATS.copy(), CENTERS.copy(), np.zeros((n, 7)))
    d = build_from_arrays(FEATS, CENTERS, identity_weights(), table=table)
    annotate(d, NfaContext.for_image(40, 640, 480))
    for node in d.internal_nodes():
        node.label = True                 # pretend the classifier accepts everything
        print(f"node {node.node_id}: members {sorted(d.members(node.node_id).tolist())} "
              f"log NFA {node.log_nfa:.2f}")
    chosen = select_groups(d)
    print("selected:", [sorted(d.members(c.node_id).tolist()) for c in chosen])


if __name__ == "__main__":
    main()
