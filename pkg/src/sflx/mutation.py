"""Masked-mutant test suite generation.

A suite is built by a feedback loop on the masking fraction sigma: each
round masks round(sigma*n) randomly chosen pixels and classifies the result;
a label flip shrinks sigma by epsilon, a kept label grows it, clamped to
[0, 1]. The flip/keep annotation drives all downstream spectrum counts.
The loop tends to hover around the flip boundary, which keeps the suite
roughly balanced between kept and flipped mutants.
"""

import base64
import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .classifiers import Classifier
from .errors import InvalidArgumentError
from .raster import BackgroundColor, CellGrid, MaskSet, Raster, apply_mask
from .rng import make_rng, sample_without_replacement

__all__ = [
    "MutationParams",
    "AnnotatedMutant",
    "TestSuite",
    "generate_test_suite",
    "suite_balance",
    "suite_to_json",
    "suite_from_json",
]

DEFAULT_SIGMA0 = 1.0 / 5.0
DEFAULT_EPSILON = 1.0 / 6.0
DEFAULT_M = 2000


@dataclass(frozen=True)
class MutationParams:
    """Knobs of the suite generator.

    sigma0 may be the string "random", which draws the starting fraction
    uniformly from [0, 1) using the same seed stream.
    """

    sigma0: Union[float, str] = DEFAULT_SIGMA0
    epsilon: float = DEFAULT_EPSILON
    m: int = DEFAULT_M
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.sigma0, str):
            if self.sigma0 != "random":
                raise InvalidArgumentError(f"sigma0 must be a fraction or 'random', got {self.sigma0!r}")
        elif not (0.0 < float(self.sigma0) < 1.0):
            raise InvalidArgumentError(f"sigma0 must lie in (0, 1), got {self.sigma0}")
        if not (0.0 < self.epsilon < 1.0):
            raise InvalidArgumentError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.m < 1:
            raise InvalidArgumentError(f"suite size m must be >= 1, got {self.m}")


@dataclass(frozen=True)
class AnnotatedMutant:
    """One masked variant: which pixels were masked, and whether the label held."""

    mask: MaskSet
    same_label: bool


@dataclass(frozen=True)
class TestSuite:
    __test__ = False  # not a pytest class, despite the name

    original_label: str
    mutants: tuple
    params: MutationParams
    pixel_count: int
    sigma_trace: tuple = field(default=(), repr=False)

    def __len__(self):
        return len(self.mutants)


def _round_half_up(x: float) -> int:
    # round-half-away-from-zero; x is always >= 0 here
    return int(np.floor(x + 0.5))


def generate_test_suite(
    h: Classifier,
    image: Raster,
    p: MutationParams,
    bg: BackgroundColor,
    grid: Optional[CellGrid] = None,
    chunk: int = 1,
) -> TestSuite:
    """Run the sigma-feedback loop and return the annotated suite.

    The sequence of masks is fully determined by p.seed. When ``grid`` has
    cell size > 1, sampling happens over grid units and each chosen unit
    masks its whole pixel block; stored masks are always pixel-level.

    ``chunk`` > 1 is a throughput deviation for expensive classifiers: each
    step draws ``chunk`` masks at the current sigma, classifies them as one
    batch, then folds the sigma update over their labels in order. chunk=1
    is the exact feedback loop and the default.
    """
    if chunk < 1:
        raise InvalidArgumentError(f"chunk must be >= 1, got {chunk}")
    n = image.pixel_count
    if grid is not None and (grid.width != image.width or grid.height != image.height):
        raise InvalidArgumentError("grid dimensions do not match the image")
    units = grid.units if grid is not None and not grid.is_identity else n

    rng = make_rng(p.seed)
    sigma = rng.random() if p.sigma0 == "random" else float(p.sigma0)
    y = h.classify(image)

    mutants = []
    trace = []
    while len(mutants) < p.m:
        take = min(chunk, p.m - len(mutants))
        masks = []
        for _ in range(take):
            trace.append(sigma)
            count = _round_half_up(sigma * units)
            chosen = sample_without_replacement(rng, units, count)
            if grid is not None and not grid.is_identity:
                bits = np.zeros(units, dtype=bool)
                bits[chosen] = True
                mask = MaskSet(grid.expand(bits))
            else:
                mask = MaskSet.from_indices(n, chosen)
            masks.append(mask)
        labels = h.classify_batch([apply_mask(image, mk, bg) for mk in masks])
        for mk, label in zip(masks, labels):
            same = label == y
            mutants.append(AnnotatedMutant(mk, same))
            sigma = min(sigma + p.epsilon, 1.0) if same else max(sigma - p.epsilon, 0.0)

    return TestSuite(y, tuple(mutants), p, n, tuple(trace))


def suite_balance(t: TestSuite) -> tuple[int, int]:
    """(count kept-label, count flipped-label); the two sum to m."""
    kept = sum(1 for mu in t.mutants if mu.same_label)
    return kept, len(t.mutants) - kept


def suite_to_json(t: TestSuite) -> str:
    """Deterministic JSON dump; masks are base64-packed bitsets."""
    doc = {
        "params": {
            "sigma0": t.params.sigma0,
            "epsilon": t.params.epsilon,
            "m": t.params.m,
            "seed": t.params.seed,
        },
        "pixel_count": t.pixel_count,
        "original_label": t.original_label,
        "mutants": [
            {
                "mask": base64.b64encode(mu.mask.packed()).decode("ascii"),
                "same_label": mu.same_label,
            }
            for mu in t.mutants
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def suite_from_json(text: str) -> TestSuite:
    doc = json.loads(text)
    params = MutationParams(
        sigma0=doc["params"]["sigma0"],
        epsilon=doc["params"]["epsilon"],
        m=doc["params"]["m"],
        seed=doc["params"]["seed"],
    )
    n = doc["pixel_count"]
    mutants = tuple(
        AnnotatedMutant(
            MaskSet.unpack(base64.b64decode(mu["mask"]), n), bool(mu["same_label"])
        )
        for mu in doc["mutants"]
    )
    return TestSuite(doc["original_label"], mutants, params, n)
