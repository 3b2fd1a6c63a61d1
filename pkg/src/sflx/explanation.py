"""Explanation construction from a pixel ranking.

An explanation is a pixel subset that, kept alone on the background,
still gets the original label. The builder walks ranking prefixes until
one suffices; an optional prune pass then drops pixels while sufficiency
survives, ending 1-minimal. Both interact with the classifier purely
through classify calls, so any handle works.
"""

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .classifiers import Classifier
from .errors import InvalidArgumentError
from .mutation import TestSuite
from .raster import BackgroundColor, CellGrid, Raster, keep_only
from .sfl import Measure, PixelRanking, explanation_ranking

__all__ = [
    "Explanation",
    "build_explanation",
    "prune_explanation",
    "explain_best",
    "explanation_pixels",
]

BINARY_SEARCH_MIN_PIXELS = 4097


@dataclass(frozen=True)
class Explanation:
    """Pixel subset certified sufficient for the original label.

    ``pixels`` keeps addition order (a ranking prefix when built, possibly
    thinned by pruning). With a cell grid the entries are unit indices,
    since cells act as atomic pixels there; ``explanation_pixels`` expands
    them to raster coordinates. ``queries_used`` counts classify calls
    spent by the op that produced this object; pruning adds its own on top.
    """

    pixels: tuple
    sufficient_label: str
    queries_used: int
    measure: Optional[Measure] = None
    pruned: bool = False

    @property
    def size(self) -> int:
        return len(self.pixels)


def _expand(prefix: Sequence[int], grid: Optional[CellGrid]) -> list[int]:
    if grid is None or grid.is_identity:
        return [int(p) for p in prefix]
    out: list[int] = []
    for u in prefix:
        out.extend(int(p) for p in grid.unit_pixels(int(u)))
    return out


def explanation_pixels(e: Explanation, grid: Optional[CellGrid] = None) -> list[int]:
    """Raster pixel indices of the explanation, expanding grid units."""
    return _expand(e.pixels, grid)


def _sufficient(
    h: Classifier,
    image: Raster,
    chosen: Sequence[int],
    y: str,
    bg: BackgroundColor,
    grid: Optional[CellGrid],
) -> bool:
    return h.classify(keep_only(image, _expand(chosen, grid), bg)) == y


def build_explanation(
    h: Classifier,
    image: Raster,
    ranking: PixelRanking,
    bg: BackgroundColor,
    measure: Optional[Measure] = None,
    binary_search: Optional[bool] = None,
    grid: Optional[CellGrid] = None,
) -> Explanation:
    """Shortest sufficient ranking prefix, found by one of two searches.

    The plain search adds ranked pixels one at a time and classifies after
    each addition; the empty prefix is never tested, so the result always
    holds at least one pixel even under a classifier that accepts anything.

    ``binary_search=None`` picks the search automatically: exponential
    probing plus bisection for images above 4096 pixels, the plain scan
    otherwise. The bisection keeps the invariant "low insufficient, high
    sufficient", so the returned prefix length L always has L-1
    insufficient; on monotone classifiers it equals the plain result with
    O(log n) classifications.
    """
    units = len(ranking)
    if units == 0:
        raise InvalidArgumentError("empty ranking")
    n = image.pixel_count
    if grid is None or grid.is_identity:
        if units != n:
            raise InvalidArgumentError(f"ranking covers {units} pixels, image has {n}")
    elif units != grid.units:
        raise InvalidArgumentError(f"ranking covers {units} units, grid has {grid.units}")
    if binary_search is None:
        binary_search = n >= BINARY_SEARCH_MIN_PIXELS

    queries = 1
    y = h.classify(image)
    order = ranking.pixels

    def prefix_ok(length: int) -> bool:
        nonlocal queries
        queries += 1
        return _sufficient(h, image, order[:length], y, bg, grid)

    if not binary_search:
        length = units
        for length in range(1, units + 1):
            if prefix_ok(length):
                break
        chosen = length
    else:
        # exponential probe for a sufficient length, then bisect down;
        # lo always holds a length that tested insufficient (0 = untested
        # empty prefix, insufficient by convention), hi one that tested
        # sufficient
        lo, hi = 0, 1
        chosen = units
        while not prefix_ok(hi):
            lo = hi
            if hi == units:
                break  # unreachable for deterministic classifiers
            hi = min(hi * 2, units)
        else:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if prefix_ok(mid):
                    hi = mid
                else:
                    lo = mid
            chosen = hi

    return Explanation(
        pixels=tuple(int(p) for p in order[:chosen]),
        sufficient_label=y,
        queries_used=queries,
        measure=measure,
    )


def prune_explanation(
    h: Classifier,
    image: Raster,
    e: Explanation,
    bg: BackgroundColor,
    grid: Optional[CellGrid] = None,
) -> Explanation:
    """Drop pixels while the label survives; result is 1-minimal.

    Each pass walks the current pixels in reverse addition order and
    removes any whose absence keeps the explanation sufficient; passes
    repeat until none is removed, so no single remaining pixel is
    droppable even under non-monotone classifiers. The empty set is a
    legal result when a degenerate classifier accepts the bare background.
    """
    y = e.sufficient_label
    current = list(e.pixels)
    queries = 0
    changed = True
    while changed:
        changed = False
        for pix in list(reversed(current)):
            trial = [p for p in current if p != pix]
            queries += 1
            if _sufficient(h, image, trial, y, bg, grid):
                current = trial
                changed = True
    return replace(
        e, pixels=tuple(current), queries_used=e.queries_used + queries, pruned=True
    )


def explain_best(
    h: Classifier,
    image: Raster,
    suite: TestSuite,
    measures: Sequence[Measure],
    bg: BackgroundColor,
    prune: bool = False,
    binary_search: Optional[bool] = None,
    grid: Optional[CellGrid] = None,
) -> tuple[Measure, Explanation]:
    """Smallest explanation across measures, all from one shared suite.

    Candidates are compared after the optional prune pass. Size ties go to
    the measure declared first in the Measure enum.
    """
    if not measures:
        raise InvalidArgumentError("at least one measure is required")
    ordered = [m for m in Measure if m in set(measures)]
    n = image.pixel_count
    best: Optional[tuple[Measure, Explanation]] = None
    for m in ordered:
        ranking = explanation_ranking(suite, n, m, grid)
        e = build_explanation(h, image, ranking, bg, m, binary_search, grid)
        if prune:
            e = prune_explanation(h, image, e, bg, grid)
        if best is None or e.size < best[1].size:
            best = (m, e)
    return best
