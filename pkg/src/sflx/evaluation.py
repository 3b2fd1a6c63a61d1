"""Metrics and benchmarks with exact synthetic ground truth.

Covers explanation size, the deletion curve (mask top-ranked pixels until
the label changes), IoU against a known region, composite image synthesis
with a planted patch, and an exhaustive minimal-explanation oracle for
tiny inputs.
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .classifiers import Classifier
from .errors import InvalidArgumentError
from .explanation import Explanation, explanation_pixels
from .raster import BackgroundColor, CellGrid, MaskSet, Raster, apply_mask
from .rng import make_rng
from .sfl import PixelRanking

__all__ = [
    "DeletionResult",
    "ChimeraSpec",
    "DetectionReport",
    "explanation_size",
    "deletion_curve",
    "iou",
    "chimera_generate",
    "topk_iou_detect",
    "brute_force_min_explanation",
    "size_cdf_rows",
]


def explanation_size(e: Explanation, n: int, grid: Optional[CellGrid] = None) -> float:
    """Fraction of the image the explanation keeps: |pixels| / n."""
    if n <= 0:
        raise InvalidArgumentError("pixel count must be positive")
    return len(explanation_pixels(e, grid)) / n


@dataclass(frozen=True)
class DeletionResult:
    """Outcome of cumulative ranked masking.

    flip_index is the number of top-ranked pixels masked when the label
    first changed (masking one fewer leaves it intact); None when the label
    never changes, in which case flip_fraction saturates at 1.0.
    """

    flip_index: Optional[int]
    flip_fraction: float

    @property
    def flipped(self) -> bool:
        return self.flip_index is not None


def deletion_curve(
    h: Classifier, image: Raster, ranking: PixelRanking, bg: BackgroundColor
) -> DeletionResult:
    """Mask ranked pixels cumulatively until the label changes."""
    n = image.pixel_count
    if len(ranking) != n:
        raise InvalidArgumentError(f"ranking covers {len(ranking)} pixels, image has {n}")
    y = h.classify(image)
    bits = np.zeros(n, dtype=bool)
    for i, pixel in enumerate(ranking.pixels, start=1):
        bits[int(pixel)] = True
        if h.classify(apply_mask(image, MaskSet(bits), bg)) != y:
            return DeletionResult(i, i / n)
    return DeletionResult(None, 1.0)


def iou(a, b) -> float:
    """|a intersect b| / |a union b|; two empty sets give 0.0."""
    sa = set(int(x) for x in a)
    sb = set(int(x) for x in b)
    union = len(sa | sb)
    if union == 0:
        return 0.0
    return len(sa & sb) / union


@dataclass(frozen=True)
class ChimeraSpec:
    """Recipe for composites with a planted patch.

    ``patch_mask`` selects which patch pixels constitute the feature (None
    means the full rectangle). Placement is uniform over valid top-left
    offsets, drawn from ``seed``; no rotation or scaling.
    """

    patch: Raster
    backgrounds: tuple
    target: str
    seed: int = 0
    patch_mask: Optional[MaskSet] = None

    def __post_init__(self):
        pm = self.patch_mask
        if pm is not None:
            if len(pm) != self.patch.pixel_count:
                raise InvalidArgumentError("patch mask length != patch pixel count")
            if pm.cardinality == 0:
                raise InvalidArgumentError("patch mask selects no pixels")
        for b in self.backgrounds:
            if b.channels != self.patch.channels:
                raise InvalidArgumentError("background channels != patch channels")
            if b.width < self.patch.width or b.height < self.patch.height:
                raise InvalidArgumentError("patch does not fit inside every background")


def paste_patch(
    background: Raster, patch: Raster, top: int, left: int, patch_mask: Optional[MaskSet]
) -> tuple[Raster, MaskSet]:
    """Copy the patch onto the background at (top, left); returns the
    composite and the pasted-region mask in composite coordinates."""
    if top < 0 or left < 0 or top + patch.height > background.height or left + patch.width > background.width:
        raise InvalidArgumentError("patch placement out of bounds")
    grid = background.data.reshape(background.height, background.width, background.channels).copy()
    pgrid = patch.data.reshape(patch.height, patch.width, patch.channels)
    keep = (
        patch_mask.bits.reshape(patch.height, patch.width)
        if patch_mask is not None
        else np.ones((patch.height, patch.width), dtype=bool)
    )
    region = grid[top : top + patch.height, left : left + patch.width]
    region[keep] = pgrid[keep]
    rows, cols = np.nonzero(keep)
    gt_indices = (rows + top) * background.width + (cols + left)
    composite = Raster(background.width, background.height, background.channels, grid.ravel())
    return composite, MaskSet.from_indices(background.pixel_count, gt_indices)


def chimera_generate(
    spec: ChimeraSpec, h: Classifier
) -> list[tuple[Raster, MaskSet]]:
    """Paste the patch into each background at a seeded random offset and
    keep only composites the classifier assigns the target label.

    An empty retained list is a legal outcome, not an error.
    """
    rng = make_rng(spec.seed)
    retained = []
    for bgimg in spec.backgrounds:
        top = int(rng.integers(0, bgimg.height - spec.patch.height + 1))
        left = int(rng.integers(0, bgimg.width - spec.patch.width + 1))
        composite, gt = paste_patch(bgimg, spec.patch, top, left, spec.patch_mask)
        if h.classify(composite) == spec.target:
            retained.append((composite, gt))
    return retained


@dataclass(frozen=True)
class DetectionReport:
    """IoU of top-ranked pixel sets against a ground-truth region.

    ``max_iou`` is the best IoU over prefix sizes swept from 1% to 100% of
    the image in 1% steps; ``best_percent`` is the sweep point achieving
    it. ``iou_at_gt_size`` fixes the prefix length to the region size.
    ``detected`` maps each threshold to max_iou >= threshold.
    """

    max_iou: float
    best_percent: int
    iou_at_gt_size: float
    detected: dict

    def detection_row(self) -> list[bool]:
        return [self.detected[t] for t in sorted(self.detected)]


def topk_iou_detect(
    ranking: PixelRanking,
    gt: MaskSet,
    thresholds: Sequence[float] = (0.5, 0.6, 0.7),
) -> DetectionReport:
    n = len(ranking)
    if len(gt) != n:
        raise InvalidArgumentError(f"ground truth covers {len(gt)} pixels, ranking {n}")
    gt_set = set(int(i) for i in gt.indices())
    best, best_percent = -1.0, 0
    for percent in range(1, 101):
        k = max(1, int(np.floor(percent / 100.0 * n + 0.5)))
        score = iou(ranking.pixels[:k], gt_set)
        if score > best:
            best, best_percent = score, percent
    at_gt = iou(ranking.pixels[: len(gt_set)], gt_set) if gt_set else 0.0
    return DetectionReport(
        max_iou=best,
        best_percent=best_percent,
        iou_at_gt_size=at_gt,
        detected={float(t): best >= t for t in thresholds},
    )


BRUTE_FORCE_MAX_PIXELS = 12


def brute_force_min_explanation(
    table: Sequence[str], y: str, n: int
) -> tuple[int, list[frozenset]]:
    """Exhaustive minimal-sufficient-subset oracle for tiny inputs.

    ``table[b]`` is the label when exactly the pixels in bitmask ``b`` are
    kept; a subset is sufficient when its label is ``y``. Returns the
    global minimum size and every minimal-by-inclusion sufficient subset
    (the empty set included, when a degenerate classifier accepts it).
    Limited to n <= 12 (4096 subsets).
    """
    if n > BRUTE_FORCE_MAX_PIXELS:
        raise InvalidArgumentError(f"brute force limited to {BRUTE_FORCE_MAX_PIXELS} pixels")
    total = 1 << n
    if len(table) != total:
        raise InvalidArgumentError(f"table must have {total} entries, got {len(table)}")
    suff = [label == y for label in table]
    if not any(suff):
        raise InvalidArgumentError("no subset is sufficient; original label impossible")
    # suff_below[P]: some subset of P (P included) is sufficient
    suff_below = list(suff)
    for mask in range(total):
        if suff_below[mask]:
            continue
        bit = 1
        while bit <= mask:
            if mask & bit and suff_below[mask ^ bit]:
                suff_below[mask] = True
                break
            bit <<= 1
    minimal = []
    for mask in range(total):
        if not suff[mask]:
            continue
        proper_ok = False
        bit = 1
        while bit <= mask:
            if mask & bit and suff_below[mask ^ bit]:
                proper_ok = True
                break
            bit <<= 1
        if not proper_ok:
            minimal.append(frozenset(i for i in range(n) if mask >> i & 1))
    min_size = min(len(s) for s in minimal)
    return min_size, minimal


def size_cdf_rows(size_fractions: Sequence[float]) -> list[tuple[float, float]]:
    """(size, cumulative fraction of runs at or below that size) pairs,
    one per distinct observed size, ascending."""
    if not size_fractions:
        return []
    values = sorted(size_fractions)
    total = len(values)
    rows = []
    for size, group in itertools.groupby(values):
        count = len(list(group))
        prev = rows[-1][1] if rows else 0.0
        rows.append((size, prev + count / total))
    return rows
