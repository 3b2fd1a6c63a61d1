"""Model contract and built-in toy models.

A BridgeModel maps an (height, width, channels) uint8 array to a label
token plus an optional score. Models must behave as pure functions for the
life of the process; the parent assumes identical inputs yield identical
labels.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = ["BridgeModel", "constant_model", "kofs_model"]


@dataclass(frozen=True)
class BridgeModel:
    """predict(pixels) -> (label, score or None); shape is advisory.

    When ``shape`` is set to (height, width, channels), the serving loop
    rejects requests with a different geometry instead of calling predict.
    """

    predict: Callable[[np.ndarray], tuple[str, Optional[float]]]
    shape: Optional[tuple[int, int, int]] = None


def constant_model(label: str, score: Optional[float] = None) -> BridgeModel:
    """Answers the same label regardless of input."""

    def predict(pixels: np.ndarray) -> tuple[str, Optional[float]]:
        return label, score

    return BridgeModel(predict)


def kofs_model(
    s_indices,
    k: int,
    bg,
    target: str = "y-target",
    other: str = "other",
) -> BridgeModel:
    """Labels ``target`` iff at least k pixels of the secret set differ from bg.

    A pixel counts as present when any of its channels differs from the
    matching background byte; pixel indices are row-major over the image,
    independent of channel count. The score is the present-pixel count
    divided by |S|.
    """
    s = np.unique(np.asarray(list(s_indices), dtype=np.int64))
    if s.size == 0:
        raise ValueError("secret set must be nonempty")
    if s.min() < 0:
        raise ValueError("secret set indices must be non-negative")
    if not (1 <= k <= s.size):
        raise ValueError(f"k must be in [1, {s.size}], got {k}")
    bg_arr = np.asarray(list(bg), dtype=np.uint8)

    def predict(pixels: np.ndarray) -> tuple[str, Optional[float]]:
        h, w, c = pixels.shape
        bg_row = np.full(c, bg_arr[0]) if bg_arr.size == 1 else bg_arr
        if bg_row.size != c:
            raise ValueError(f"background has {bg_row.size} channels, image has {c}")
        if int(s.max()) >= h * w:
            raise ValueError(f"secret index {int(s.max())} out of range for {h * w} pixels")
        flat = pixels.reshape(h * w, c)
        alive = (flat != bg_row).any(axis=1)
        count = int(alive[s].sum())
        return (target if count >= k else other), count / s.size

    return BridgeModel(predict)
