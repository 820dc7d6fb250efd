"""Fixed patch selection: average the class scores of a chosen patch subset.

The best subset of each size is found either exhaustively (the reference
oracle, only feasible for few patches) or by beam search, which keeps the
``beam_width`` best subsets of each size and grows only those.  Subsets are
ranked by the number of correctly classified images on the objective split;
ties go to the lexicographically smallest subset.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, EmptySubset, TooLarge
from .scores import ScoreTensor

DEFAULT_CAP = 2_000_000


def _check_subset(subset, n_patches) -> tuple[int, ...]:
    sub = tuple(sorted(set(int(p) for p in subset)))
    if not sub:
        raise EmptySubset("patch subset is empty")
    if sub[0] < 0 or sub[-1] >= n_patches:
        raise DimensionMismatch(f"patch indices must lie in [0, {n_patches})")
    return sub


def _predict(data: np.ndarray, subset: tuple[int, ...]) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties.
    return np.argmax(data[:, subset, :].mean(axis=1), axis=1)


def _n_correct(data, labels, subset) -> int:
    return int(np.count_nonzero(_predict(data, subset) == labels))


def average_predict(st: ScoreTensor, subset=None, split: str = "all"):
    """Predicted class per image of ``split`` and the resulting accuracy.

    ``subset=None`` averages every patch.
    """
    sub = _check_subset(range(st.n_patches) if subset is None else subset, st.n_patches)
    data, labels = st.split(split)
    pred = _predict(data, sub)
    acc = float(np.mean(pred == labels)) if len(labels) else float("nan")
    return pred, acc


def rank_patches(st: ScoreTensor, split: str = "train") -> list[int]:
    """Patch indices by decreasing single-patch accuracy (ties: lower index)."""
    data, labels = st.split(split, require=True)
    correct = [_n_correct(data, labels, (p,)) for p in range(st.n_patches)]
    return sorted(range(st.n_patches), key=lambda p: (-correct[p], p))


def top_patches(st: ScoreTensor, k: int, split: str = "train") -> tuple[int, ...]:
    if not 1 <= k <= st.n_patches:
        raise EmptySubset(f"k must lie in [1, {st.n_patches}], got {k}")
    return tuple(sorted(rank_patches(st, split)[:k]))


def brute_force_best_subset(st: ScoreTensor, k: int, split: str = "train", cap: int = DEFAULT_CAP):
    """Exhaustive search over all ``k``-subsets; returns ``(subset, accuracy)``."""
    n = st.n_patches
    if not 1 <= k <= n:
        raise EmptySubset(f"k must lie in [1, {n}], got {k}")
    total = math.comb(n, k)
    if total > cap:
        raise TooLarge(f"C({n}, {k}) = {total} subsets exceeds the cap of {cap}")
    data, labels = st.split(split, require=True)
    best, best_correct = None, -1
    for sub in itertools.combinations(range(n), k):
        c = _n_correct(data, labels, sub)
        if c > best_correct:
            best, best_correct = sub, c
    return best, best_correct / len(labels)


@dataclass(frozen=True)
class BeamStep:
    size: int
    subset: tuple[int, ...]
    accuracy: float
    report_accuracy: float | None = None


def beam_search_subsets(st: ScoreTensor, beam_width: int, max_k: int | None = None,
                        split: str = "train", report_split: str | None = "test",
                        workers: int = 1) -> list[BeamStep]:
    """Best subset of every size ``1..max_k`` found by beam search.

    ``split`` is the objective.  ``report_split`` is only evaluated on the
    chosen subsets, never used for ranking.  With ``workers > 1`` candidate
    evaluation runs on a thread pool; results come back in candidate order,
    so the outcome does not depend on the worker count.
    """
    if beam_width < 1:
        raise ValueError(f"beam width must be >= 1, got {beam_width}")
    n = st.n_patches
    max_k = n if max_k is None else max_k
    if not 1 <= max_k <= n:
        raise EmptySubset(f"max_k must lie in [1, {n}], got {max_k}")
    data, labels = st.split(split, require=True)
    rep = None
    if report_split is not None:
        rep_data, rep_labels = st.split(report_split)
        if len(rep_labels):
            rep = (rep_data, rep_labels)

    def score_all(cands):
        if workers > 1 and len(cands) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(lambda s: _n_correct(data, labels, s), cands))
        return [_n_correct(data, labels, s) for s in cands]

    steps = []
    beam: list[tuple[int, ...]] = []
    for size in range(1, max_k + 1):
        if size == 1:
            cands = [(p,) for p in range(n)]
        else:
            cands = sorted({tuple(sorted(s + (p,))) for s in beam for p in range(n) if p not in s})
        scores = score_all(cands)
        order = sorted(range(len(cands)), key=lambda c: (-scores[c], cands[c]))
        beam = [cands[c] for c in order[:beam_width]]
        best = order[0]
        rep_acc = None
        if rep is not None:
            rep_acc = _n_correct(rep[0], rep[1], cands[best]) / len(rep[1])
        steps.append(BeamStep(size, cands[best], scores[best] / len(labels), rep_acc))
    return steps
