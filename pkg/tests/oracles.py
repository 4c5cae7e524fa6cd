"""Independent reference implementations used to check the library.

Everything here is deliberately written the slow, obvious way, sharing no
code with the package: sets of character offsets, sort-based ranking with
a hand-rolled Pearson, and a plain list-of-lists edit-distance table.
"""

from __future__ import annotations

import math
from typing import Sequence

Pair = tuple[int, int]


def char_set(pairs: Sequence[Pair]) -> set[int]:
    covered: set[int] = set()
    for start, end in pairs:
        covered.update(range(start, end))
    return covered


def iou_brute(pred: Sequence[Pair], gold: Sequence[Pair]) -> float:
    p, g = char_set(pred), char_set(gold)
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    return len(p & g) / len(p | g)


def max_iou_brute(pred: Sequence[Pair],
                  annotators: Sequence[Sequence[Pair]]) -> float:
    return max(iou_brute(pred, ann) for ann in annotators)


def average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j + 2) / 2.0  # 1-based ranks averaged over the tie run
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    return cov / math.sqrt(vx * vy)


def spearman_reference(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank both vectors with average ties, then Pearson on the ranks."""
    x_const = all(v == x[0] for v in x)
    y_const = all(v == y[0] for v in y)
    if x_const and y_const:
        return 1.0
    if x_const or y_const:
        return 0.0
    return pearson(average_ranks(x), average_ranks(y))


def edit_cost_oracle(a: Sequence[str], b: Sequence[str]) -> int:
    """Quadratic DP over plain lists; cost only."""
    rows = len(a) + 1
    cols = len(b) + 1
    table = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        table[i][0] = i
    for j in range(cols):
        table[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            same = a[i - 1] == b[j - 1]
            table[i][j] = min(
                table[i - 1][j - 1] + (0 if same else 1),
                table[i - 1][j] + 1,
                table[i][j - 1] + 1,
            )
    return table[len(a)][len(b)]
