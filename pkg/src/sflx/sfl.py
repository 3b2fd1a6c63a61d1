"""Spectrum accumulation, suspiciousness measures, and pixel ranking.

Per pixel we count the suite's mutants in four buckets crossing
kept/flipped label with unmasked/masked state:

    a_ep  label kept,    pixel unmasked
    a_ef  label flipped, pixel unmasked
    a_np  label kept,    pixel masked
    a_nf  label flipped, pixel masked

``compute_spectra`` treats a pixel's *presence* (unmasked) as the observed
event. For explanation search the informative event is the opposite one:
a pixel whose *masking* co-occurs with label flips is causally implicated,
while a merely present pixel is not. ``masking_spectra`` reorients the
counts accordingly (swap unmasked and masked roles), and every ranking fed
to the explanation builder uses that orientation. Keeping both forms
explicit avoids baking the swap invisibly into the counting loop.
"""

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .mutation import TestSuite
from .raster import CellGrid, Raster

__all__ = [
    "SpectrumVector",
    "Measure",
    "PixelRanking",
    "compute_spectra",
    "masking_spectra",
    "measure_value",
    "rank_pixels",
    "explanation_ranking",
    "ranking_csv",
    "ranking_heatmap",
]


class SpectrumVector(NamedTuple):
    a_ep: int
    a_ef: int
    a_np: int
    a_nf: int


class Measure(enum.Enum):
    """Suspiciousness measures; declaration order is the tie-break order."""

    OCHIAI = "ochiai"
    TARANTULA = "tarantula"
    ZOLTAR = "zoltar"
    WONG2 = "wong2"

    @classmethod
    def parse(cls, name: str) -> "Measure":
        key = name.strip().lower()
        aliases = {"wongii": "wong2", "wong-ii": "wong2", "wong_ii": "wong2"}
        key = aliases.get(key, key)
        for m in cls:
            if m.value == key:
                return m
        raise InvalidArgumentError(f"unknown measure: {name!r}")


@dataclass(frozen=True)
class PixelRanking:
    """Pixel indices sorted by descending measure value.

    Ties keep ascending index order. ``pixels[r]`` is the pixel at rank r
    (0-based) and ``values[r]`` its score. For cell grids the "pixels" are
    unit indices; expand through the grid before touching rasters.
    """

    pixels: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.pixels.shape != self.values.shape:
            raise InvalidArgumentError("ranking arrays must align")

    def __len__(self) -> int:
        return self.pixels.size

    def __iter__(self):
        return zip(self.pixels.tolist(), self.values.tolist())

    def top(self, count: int) -> np.ndarray:
        return self.pixels[:count]


def _mask_matrix(t: TestSuite, n: int) -> tuple[np.ndarray, np.ndarray]:
    if t.pixel_count != n:
        raise InvalidArgumentError(f"suite is over {t.pixel_count} pixels, asked for {n}")
    masks = np.empty((len(t.mutants), n), dtype=bool)
    for i, mu in enumerate(t.mutants):
        if len(mu.mask) != n:
            raise InvalidArgumentError(f"mutant {i} mask length {len(mu.mask)} != {n}")
        masks[i] = mu.mask.bits
    kept = np.fromiter((mu.same_label for mu in t.mutants), dtype=bool, count=len(t.mutants))
    return masks, kept


def compute_spectra(
    t: TestSuite, n: int, grid: Optional[CellGrid] = None
) -> list[SpectrumVector]:
    """Per-pixel bucket counts over the suite; "observed" = unmasked.

    With a cell grid, counts are per unit and a unit counts as masked in a
    mutant when all of its pixels are masked (which is how unit-sampled
    suites mask them).
    """
    masks, kept = _mask_matrix(t, n)
    if grid is not None and not grid.is_identity:
        unit_masks = np.empty((masks.shape[0], grid.units), dtype=bool)
        for u in range(grid.units):
            unit_masks[:, u] = masks[:, grid.unit_pixels(u)].all(axis=1)
        masks = unit_masks
    unmasked = ~masks
    a_ep = (unmasked & kept[:, None]).sum(axis=0)
    a_ef = (unmasked & ~kept[:, None]).sum(axis=0)
    a_np = (masks & kept[:, None]).sum(axis=0)
    a_nf = (masks & ~kept[:, None]).sum(axis=0)
    return [
        SpectrumVector(int(a_ep[i]), int(a_ef[i]), int(a_np[i]), int(a_nf[i]))
        for i in range(masks.shape[1])
    ]


def masking_spectra(spectra: Sequence[SpectrumVector]) -> list[SpectrumVector]:
    """Reorient spectra so that a pixel's masking is the observed event.

    Swaps the unmasked and masked roles (a_ep <-> a_np, a_ef <-> a_nf). A
    high flipped-while-masked count then lands in a_ef, which is what the
    measures reward, so causally implicated pixels rank first.
    """
    return [SpectrumVector(s.a_np, s.a_nf, s.a_ep, s.a_ef) for s in spectra]


def measure_value(measure: Measure, s: SpectrumVector) -> float:
    """Evaluate one measure with fixed zero conventions.

    Ochiai and Zoltar return 0 when a_ef = 0; Tarantula treats an undefined
    component ratio as 0 and returns 0 when both are. Everything else is
    evaluated in 64-bit floating point exactly as written.
    """
    ep, ef, np_, nf = (float(x) for x in s)
    if measure is Measure.OCHIAI:
        if ef == 0.0:
            return 0.0
        return ef / math.sqrt((ef + nf) * (ef + ep))
    if measure is Measure.TARANTULA:
        fail = ef / (ef + nf) if ef + nf > 0.0 else 0.0
        ok = ep / (ep + np_) if ep + np_ > 0.0 else 0.0
        if fail + ok == 0.0:
            return 0.0
        return fail / (fail + ok)
    if measure is Measure.ZOLTAR:
        if ef == 0.0:
            return 0.0
        return ef / (ef + nf + ep + 10000.0 * nf * ep / ef)
    if measure is Measure.WONG2:
        return ef - ep
    raise InvalidArgumentError(f"unhandled measure: {measure}")


def rank_pixels(spectra: Sequence[SpectrumVector], measure: Measure) -> PixelRanking:
    """Descending by value; equal values keep ascending pixel order."""
    values = np.array([measure_value(measure, s) for s in spectra], dtype=np.float64)
    order = np.argsort(-values, kind="stable")
    return PixelRanking(order.astype(np.int64), values[order])


def explanation_ranking(
    t: TestSuite, n: int, measure: Measure, grid: Optional[CellGrid] = None
) -> PixelRanking:
    """The ranking the explanation builder consumes: masking-oriented."""
    return rank_pixels(masking_spectra(compute_spectra(t, n, grid)), measure)


def ranking_csv(ranking: PixelRanking, width: int, measure: Measure) -> str:
    """CSV text: pixel,row,col,measure,value,rank (rank is 1-based)."""
    lines = ["pixel,row,col,measure,value,rank"]
    for rank, (pixel, value) in enumerate(ranking, start=1):
        row, col = divmod(int(pixel), width)
        lines.append(f"{int(pixel)},{row},{col},{measure.value},{float(value)!r},{rank}")
    return "\n".join(lines) + "\n"


def ranking_heatmap(
    ranking: PixelRanking, width: int, height: int, grid: Optional[CellGrid] = None
) -> Raster:
    """Grayscale heatmap of the scores, min-max scaled to [0, 255].

    A constant ranking scales to all zeros. With a cell grid, every pixel
    of a unit takes the unit's score.
    """
    n = width * height
    if grid is not None and not grid.is_identity:
        if len(ranking) != grid.units:
            raise InvalidArgumentError(
                f"ranking covers {len(ranking)} units, grid has {grid.units}"
            )
        scores = np.empty(n, dtype=np.float64)
        for unit, value in zip(ranking.pixels.tolist(), ranking.values.tolist()):
            scores[grid.unit_pixels(int(unit))] = value
    else:
        if len(ranking) != n:
            raise InvalidArgumentError(
                f"ranking covers {len(ranking)} pixels, image has {n}"
            )
        scores = np.empty(n, dtype=np.float64)
        scores[ranking.pixels] = ranking.values
    lo, hi = float(scores.min()), float(scores.max())
    if hi > lo:
        scaled = np.rint((scores - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.zeros(n, dtype=np.uint8)
    return Raster(width, height, 1, scaled)
