"""Real AdaBoost over decision stumps for text-group verification."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .groupdesc import GROUP_FEATURE_NAMES

N_FEATURES = len(GROUP_FEATURE_NAMES)


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class Stump:
    feature_index: int
    threshold: float
    score_left: float
    score_right: float

    def __call__(self, X: np.ndarray) -> np.ndarray:
        # ties go right
        return np.where(X[:, self.feature_index] < self.threshold,
                        self.score_left, self.score_right)


@dataclass
class BoostedModel:
    stumps: list = field(default_factory=list)
    accept_threshold: float = 0.0
    feature_names: tuple = GROUP_FEATURE_NAMES

    @property
    def rounds(self) -> int:
        return len(self.stumps)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.zeros(len(X))
        for s in self.stumps:
            out += s(X)
        return out

    def predict(self, X, accept_threshold: Optional[float] = None) -> np.ndarray:
        t = self.accept_threshold if accept_threshold is None else accept_threshold
        return self.decision_function(X) > t

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "accept_threshold": self.accept_threshold,
            "stumps": [{"f": s.feature_index, "thr": s.threshold,
                        "l": s.score_left, "r": s.score_right} for s in self.stumps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "BoostedModel":
        stumps = [Stump(int(s["f"]), float(s["thr"]), float(s["l"]), float(s["r"]))
                  for s in obj["stumps"]]
        if int(obj.get("rounds", len(stumps))) != len(stumps):
            raise ValueError("model file: rounds does not match stump count")
        for s in stumps:
            if not 0 <= s.feature_index < N_FEATURES:
                raise ValueError(f"model file: bad feature index {s.feature_index}")
        return cls(stumps, float(obj.get("accept_threshold", 0.0)))

    @classmethod
    def from_json(cls, text: str) -> "BoostedModel":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "BoostedModel":
        with open(path) as fh:
            return cls.from_json(fh.read())


def score(model: BoostedModel, h) -> float:
    return float(model.decision_function(np.asarray(h, dtype=np.float64)[None, :])[0])


def verdict(model: BoostedModel, h) -> bool:
    return score(model, h) > model.accept_threshold


def exponential_loss(model: BoostedModel, X, y) -> float:
    """Mean of exp(-y F(x)) with labels y in {-1, +1}."""
    return float(np.mean(np.exp(-np.asarray(y) * model.decision_function(X))))


def _best_stump(X, y, weights, eps):
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        wp = np.where(y[order] > 0, weights[order], 0.0)
        wn = np.where(y[order] > 0, 0.0, weights[order])
        cp, cn = np.cumsum(wp), np.cumsum(wn)
        # candidate splits sit between distinct consecutive values
        cut = np.nonzero(xs[1:] > xs[:-1])[0]
        if cut.size == 0:
            continue
        lp, ln = cp[cut], cn[cut]
        rp, rn = cp[-1] - lp, cn[-1] - ln
        z = 2.0 * (np.sqrt(lp * ln) + np.sqrt(rp * rn))
        k = int(np.argmin(z))
        if best is None or z[k] < best[0]:
            thr = 0.5 * (xs[cut[k]] + xs[cut[k] + 1])
            if not thr > xs[cut[k]]:
                thr = xs[cut[k] + 1]
            left = 0.5 * np.log((lp[k] + eps) / (ln[k] + eps))
            right = 0.5 * np.log((rp[k] + eps) / (rn[k] + eps))
            best = (z[k], Stump(f, float(thr), float(left), float(right)))
    return best


def train(positives, negatives, rounds: int = 200) -> BoostedModel:
    """Real AdaBoost with confidence-rated stumps."""
    P = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    N = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if P.size == 0 or N.size == 0:
        raise TrainingError("both classes need at least one example")
    if rounds < 1:
        raise TrainingError("rounds must be >= 1")
    X = np.vstack([P, N])
    y = np.concatenate([np.ones(len(P)), -np.ones(len(N))])
    weights = np.full(len(X), 1.0 / len(X))
    eps = 1.0 / (4 * len(X))
    model = BoostedModel()
    for _ in range(rounds):
        found = _best_stump(X, y, weights, eps)
        if found is None:
            raise TrainingError("degenerate data: no feature separates any examples")
        stump = found[1]
        model.stumps.append(stump)
        weights = weights * np.exp(-y * stump(X))
        weights /= weights.sum()
    return model


def balance(positives, negatives, seed: int = 0):
    """Downsample the majority class to the size of the minority one."""
    P = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    N = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    rng = np.random.default_rng(seed)
    if len(P) > len(N):
        P = P[np.sort(rng.choice(len(P), len(N), replace=False))]
    elif len(N) > len(P):
        N = N[np.sort(rng.choice(len(N), len(P), replace=False))]
    return P, N


def hard_negatives(model: BoostedModel, pool, k: int) -> np.ndarray:
    """Indices of the k highest-scoring negatives in ``pool``."""
    pool = np.atleast_2d(np.asarray(pool, dtype=np.float64))
    if k <= 0 or pool.size == 0:
        return np.zeros(0, np.int64)
    s = model.decision_function(pool)
    order = np.lexsort((np.arange(len(pool)), -s))
    return np.sort(order[:min(k, len(pool))])


def mine_and_retrain(model: BoostedModel, positives, negative_pool, k: int = 100, *,
                     base_negatives=None, rounds: Optional[int] = None,
                     seed: int = 0) -> BoostedModel:
    """Add the k hardest negatives of ``negative_pool`` and retrain.

    ``base_negatives`` defaults to a class-balanced sample of the pool.
    """
    rounds = rounds or max(model.rounds, 1)
    pool = np.atleast_2d(np.asarray(negative_pool, dtype=np.float64))
    if base_negatives is None:
        P, base = balance(positives, pool, seed)
    else:
        P = np.atleast_2d(np.asarray(positives, dtype=np.float64))
        base = np.atleast_2d(np.asarray(base_negatives, dtype=np.float64))
    idx = hard_negatives(model, pool, k)
    N = np.vstack([base, pool[idx]]) if idx.size else base
    out = train(P, N, rounds)
    out.accept_threshold = model.accept_threshold
    return out


def train_with_hard_negatives(positives, negatives, rounds: int = 200, k: int = 100,
                              seed: int = 0) -> BoostedModel:
    """Balanced first pass, then one round of hard-negative mining."""
    P, N = balance(positives, negatives, seed)
    first = train(P, N, rounds)
    return mine_and_retrain(first, P, negatives, k, base_negatives=N, rounds=rounds)
