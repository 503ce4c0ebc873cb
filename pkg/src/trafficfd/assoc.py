"""IoU scoring and optimal one-to-one assignment between tracks and detections.

Scores live in [0, 1] and bigger is better. The solver maximizes the total
score over one-to-one matchings (realized as a min-cost assignment on
1 - score), then gates: matched pairs scoring below the threshold are demoted
to unmatched on both sides. Gating after solving keeps the matching globally
optimal; gating before it can change which pairs are even considered.

When several matchings tie on total score the returned one is the
lexicographically smallest by (track index, detection index). Ties are rare
in real data, so the solver first probes whether any alternative optimum
exists at all and only then pays for the lexicographic construction.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import BoundingBox

# Cost placed on forbidden cells; any value above the max real cost (1.0) works.
_FORBIDDEN = 4.0


@dataclass(frozen=True, slots=True)
class Assignment:
    """Matched (track, detection) index pairs plus the leftovers of each side."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_tracks: tuple[int, ...]
    unmatched_detections: tuple[int, ...]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0.0 when disjoint.

    The overlap is capped at the smaller box area: corner arithmetic like
    (x + w) - x can exceed w by one ulp, which would push the IoU of
    identical boxes above 1.
    """

    left = max(a.x, b.x)
    top = max(a.y, b.y)
    right = min(a.x + a.w, b.x + b.w)
    bottom = min(a.y + a.h, b.y + b.h)
    if right <= left or bottom <= top:
        return 0.0
    inter = min((right - left) * (bottom - top), a.w * a.h, b.w * b.h)
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def score_matrix(tracks: list[BoundingBox], detections: list[BoundingBox]) -> np.ndarray:
    """IoU of every track box against every detection box, shape (n, m).

    Vectorized but arithmetic-identical to calling :func:`iou` pairwise.
    """

    if not tracks or not detections:
        return np.zeros((len(tracks), len(detections)))
    a = np.array([[b.x, b.y, b.w, b.h] for b in tracks])
    b = np.array([[d.x, d.y, d.w, d.h] for d in detections])
    left = np.maximum(a[:, 0, None], b[None, :, 0])
    top = np.maximum(a[:, 1, None], b[None, :, 1])
    right = np.minimum((a[:, 0] + a[:, 2])[:, None], (b[:, 0] + b[:, 2])[None, :])
    bottom = np.minimum((a[:, 1] + a[:, 3])[:, None], (b[:, 1] + b[:, 3])[None, :])
    area_a = (a[:, 2] * a[:, 3])[:, None]
    area_b = (b[:, 2] * b[:, 3])[None, :]
    inter = np.clip(right - left, 0.0, None) * np.clip(bottom - top, 0.0, None)
    inter = np.minimum(inter, np.minimum(area_a, area_b))
    union = area_a + area_b - inter
    return np.where(inter > 0.0, inter / union, 0.0)


def solve_assignment(scores: np.ndarray, threshold: float, greedy: bool = False) -> Assignment:
    """Assign rows (tracks) to columns (detections) by score.

    The default solver is globally optimal; ``greedy=True`` instead matches
    each row in order to its best still-free column, which mirrors the
    simpler per-track strategy and is provided for comparison runs.
    """

    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2:
        raise ValueError(f"scores must be a 2-d matrix, got shape {scores.shape}")
    if not (math.isfinite(threshold) and 0.0 < threshold < 1.0):
        raise ValueError(f"threshold must be strictly between 0 and 1, got {threshold}")
    if scores.size and not (np.isfinite(scores).all() and scores.min() >= 0.0 and scores.max() <= 1.0):
        raise ValueError("scores must be finite and within [0, 1]")

    n, m = scores.shape
    if n == 0 or m == 0:
        return Assignment((), tuple(range(n)), tuple(range(m)))

    if greedy:
        raw = _greedy_pairs(scores, threshold)
    else:
        raw = _optimal_pairs(scores)

    kept = sorted((i, j) for i, j in raw if scores[i, j] >= threshold)
    matched_rows = {i for i, _ in kept}
    matched_cols = {j for _, j in kept}
    return Assignment(
        pairs=tuple(kept),
        unmatched_tracks=tuple(i for i in range(n) if i not in matched_rows),
        unmatched_detections=tuple(j for j in range(m) if j not in matched_cols),
    )


def _greedy_pairs(scores: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    n, m = scores.shape
    free = np.ones(m, dtype=bool)
    pairs = []
    for i in range(n):
        row = np.where(free, scores[i], -1.0)
        j = int(np.argmax(row))
        if row[j] >= threshold:
            pairs.append((i, j))
            free[j] = False
    return pairs


def _matching_total(scores: np.ndarray, pairs: list[tuple[int, int]]) -> float:
    # fsum keeps the comparison independent of summation order.
    return math.fsum(scores[i, j] for i, j in pairs)


def _solve_max(cost: np.ndarray) -> list[tuple[int, int]]:
    rows, cols = linear_sum_assignment(cost)
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


def _optimal_pairs(scores: np.ndarray) -> list[tuple[int, int]]:
    cost = 1.0 - scores
    best = _solve_max(cost)
    total = _matching_total(scores, best)
    if _has_tied_alternative(scores, cost, best, total):
        return _lexicographic_optimum(scores, total)
    return best


def _has_tied_alternative(
    scores: np.ndarray,
    cost: np.ndarray,
    pairs: list[tuple[int, int]],
    total: float,
) -> bool:
    """True when some other matching reaches the same total score.

    Each positive-score matched edge is forbidden in turn and the problem
    re-solved; a tie that matters must avoid at least one such edge.
    Zero-score edges are skipped because they are gated away regardless.
    """

    for i, j in pairs:
        if scores[i, j] <= 0.0:
            continue
        probe = cost.copy()
        probe[i, j] = _FORBIDDEN
        alt = _solve_max(probe)
        if any(probe[a, b] >= _FORBIDDEN for a, b in alt):
            continue
        if _matching_total(scores, alt) == total:
            return True
    return False


def _lexicographic_optimum(scores: np.ndarray, total: float) -> list[tuple[int, int]]:
    """Build the (track, detection)-lexicographically smallest optimal matching.

    Rows are fixed in order: for each row, the smallest column that still
    extends to a matching with the optimal total is forced; if no column
    does, the row is unmatched in every optimum consistent with the prefix
    and is dropped.
    """

    n, m = scores.shape
    chosen: list[tuple[int, int]] = []
    chosen_score = 0.0
    rows_left = list(range(n))
    cols_left = list(range(m))

    for i in range(n):
        rows_left.remove(i)
        accepted = None
        for j in cols_left:
            sub_rows = rows_left
            sub_cols = [c for c in cols_left if c != j]
            sub_total = 0.0
            sub_pairs: list[tuple[int, int]] = []
            if sub_rows and sub_cols:
                sub = scores[np.ix_(sub_rows, sub_cols)]
                sub_pairs = _solve_max(1.0 - sub)
                sub_total = _matching_total(sub, sub_pairs)
            candidate = math.fsum([chosen_score, scores[i, j], sub_total])
            if candidate == total:
                accepted = j
                break
        if accepted is not None:
            chosen.append((i, accepted))
            chosen_score = math.fsum(scores[a, b] for a, b in chosen)
            cols_left.remove(accepted)

    return chosen
