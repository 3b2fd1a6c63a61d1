"""Black-box classifier handles.

Everything downstream sees classifiers through the same two calls:
``classify`` (one label for one raster) and ``classify_batch``. Built-in
synthetic classifiers make ground truth exact for testing; the external
handle drives any model wrapped behind the line-delimited JSON protocol
(see ProcessClassifier).

Labels are opaque strings compared by exact equality.
"""

import hashlib
import json
import math
import queue
import shlex
import subprocess
import threading
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ClassifierIOError, InvalidArgumentError
from .raster import BackgroundColor, Raster

__all__ = [
    "Prediction",
    "Classifier",
    "ConstantClassifier",
    "KofSClassifier",
    "LinearClassifier",
    "TruthTableClassifier",
    "PatchKeyedClassifier",
    "ProcessClassifier",
    "parse_classifier_spec",
    "unmasked_pixels",
]


class Prediction(NamedTuple):
    label: str
    score: Optional[float] = None


def unmasked_pixels(image: Raster, bg: BackgroundColor) -> np.ndarray:
    """Bool array over pixel indices: True where any channel differs from bg."""
    bg.check_against(image)
    return (image.pixel_view() != bg.as_array()).any(axis=1)


class Classifier:
    """Deterministic label function over rasters."""

    def classify(self, image: Raster) -> str:
        raise NotImplementedError

    def predict(self, image: Raster) -> Prediction:
        return Prediction(self.classify(image))

    def classify_batch(self, images: Sequence[Raster]) -> list[str]:
        return [self.classify(im) for im in images]

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class ConstantClassifier(Classifier):
    """Answers the same label for every image."""

    def __init__(self, label: str):
        self.label = label

    def classify(self, image: Raster) -> str:
        return self.label


class KofSClassifier(Classifier):
    """Labels ``target`` iff at least k pixels of a secret set S are unmasked.

    "Unmasked" means any channel differs from the background color, so the
    classifier is a monotone function of the unmasked-pixel set. Useful as
    an oracle: the minimal sufficient subsets are exactly the k-subsets of S.
    """

    def __init__(
        self,
        s_indices,
        k: int,
        bg: BackgroundColor,
        target: str = "y-target",
        other: str = "other",
    ):
        self.s = np.unique(np.asarray(list(s_indices), dtype=np.int64))
        if self.s.size == 0:
            raise InvalidArgumentError("secret set S must be nonempty")
        if self.s.min() < 0:
            raise InvalidArgumentError("secret set indices must be non-negative")
        if not (1 <= k <= self.s.size):
            raise InvalidArgumentError(f"k must be in [1, |S|={self.s.size}], got {k}")
        self.k = k
        self.bg = bg
        self.target = target
        self.other = other

    def classify(self, image: Raster) -> str:
        if self.s.max() >= image.pixel_count:
            raise InvalidArgumentError(
                f"secret set index {int(self.s.max())} out of range for "
                f"{image.pixel_count}-pixel image"
            )
        alive = unmasked_pixels(image, self.bg)
        return self.target if int(alive[self.s].sum()) >= self.k else self.other


class LinearClassifier(Classifier):
    """Labels ``pos`` iff sum(w_i * intensity_i) >= threshold.

    Intensity of a pixel is the mean of its channel bytes, so grayscale uses
    the byte directly. Weight vector length must equal the pixel count.
    """

    def __init__(
        self, weights, threshold: float, pos: str = "pos", neg: str = "neg"
    ):
        self.w = np.asarray(weights, dtype=np.float64).ravel()
        if self.w.size == 0:
            raise InvalidArgumentError("weight vector must be nonempty")
        self.threshold = float(threshold)
        self.pos = pos
        self.neg = neg

    def classify(self, image: Raster) -> str:
        if self.w.size != image.pixel_count:
            raise InvalidArgumentError(
                f"weight vector length {self.w.size} != pixel count {image.pixel_count}"
            )
        intensity = image.pixel_view().astype(np.float64).mean(axis=1)
        return self.pos if float(self.w @ intensity) >= self.threshold else self.neg


class TruthTableClassifier(Classifier):
    """Arbitrary label function of the unmasked-pixel set, given as a table.

    ``table[b]`` is the label for the image whose unmasked set has bitmask
    ``b`` (bit i set iff pixel i has any channel differing from bg). Only
    feasible for tiny images; intended for exhaustive oracles.
    """

    MAX_PIXELS = 20

    def __init__(self, n: int, table: Sequence[str], bg: BackgroundColor):
        if n > self.MAX_PIXELS:
            raise InvalidArgumentError(f"truth table limited to {self.MAX_PIXELS} pixels")
        if len(table) != 1 << n:
            raise InvalidArgumentError(
                f"table must have 2^{n} = {1 << n} entries, got {len(table)}"
            )
        self.n = n
        self.table = list(table)
        self.bg = bg
        self._weights = 1 << np.arange(n, dtype=np.int64)

    def classify(self, image: Raster) -> str:
        if image.pixel_count != self.n:
            raise InvalidArgumentError(
                f"truth table is over {self.n} pixels, image has {image.pixel_count}"
            )
        alive = unmasked_pixels(image, self.bg)
        return self.table[int(alive @ self._weights)]


class PatchKeyedClassifier(Classifier):
    """Labels ``target`` iff some window of the image matches the patch.

    A window matches when at least ceil(min_match * patch_pixels) of its
    pixels equal the patch byte-for-byte across channels. Location is free:
    the patch is searched over every valid offset, so composites carry the
    target label wherever the patch was pasted.
    """

    def __init__(
        self,
        patch: Raster,
        min_match: float = 0.5,
        target: str = "y-target",
        other: str = "other",
    ):
        if not (0.0 < min_match <= 1.0):
            raise InvalidArgumentError(f"min_match must be in (0, 1], got {min_match}")
        self.patch = patch
        self.min_match = min_match
        self.needed = math.ceil(min_match * patch.pixel_count)
        self.target = target
        self.other = other

    def classify(self, image: Raster) -> str:
        p, im = self.patch, image
        if im.channels != p.channels:
            raise InvalidArgumentError("patch and image channel counts differ")
        if im.width < p.width or im.height < p.height:
            raise InvalidArgumentError("patch does not fit inside the image")
        grid = im.data.reshape(im.height, im.width, im.channels)
        windows = np.lib.stride_tricks.sliding_window_view(
            grid, (p.height, p.width, p.channels)
        )[:, :, 0]
        pat = p.data.reshape(p.height, p.width, p.channels)
        # pixel matches = all channels equal; count per offset, take the best
        per_pixel = (windows == pat).all(axis=-1)
        best = int(per_pixel.sum(axis=(-2, -1)).max())
        return self.target if best >= self.needed else self.other


_HANDSHAKE_TIMEOUT = 30.0
_RESPONSE_TIMEOUT = 120.0


class ProcessClassifier(Classifier):
    """Client for an external model process speaking line-delimited JSON.

    The child emits one handshake object as its first stdout line:

        {"protocol": "sflx-bridge", "version": 1, "labels_are": "string"}

    then answers each request line

        {"id": <uint64>, "width": w, "height": h, "channels": c,
         "pixels": [<byte>, ...]}

    with {"id": <same>, "label": "...", "score": <optional float>}.
    Responses may arrive out of order; matching is by id. The child exits
    when its stdin reaches EOF.

    Identical rasters are answered from a per-handle memo, so re-queries of
    the same mutant cost nothing. Any protocol violation or child death
    raises ClassifierIOError; labels are never guessed.
    """

    def __init__(self, argv: Sequence[str], response_timeout: float = _RESPONSE_TIMEOUT):
        if not argv:
            raise InvalidArgumentError("empty external classifier command")
        self.argv = list(argv)
        self.response_timeout = response_timeout
        self._memo: dict[bytes, Prediction] = {}
        self._next_id = 0
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise ClassifierIOError(f"cannot start {self.argv[0]!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._drain_stdout, daemon=True)
        self._reader.start()
        self._check_handshake()

    def _drain_stdout(self):
        # runs until child EOF; parent reads only through the queue
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        except ValueError:
            pass  # stdout closed during shutdown
        self._lines.put(None)

    def _next_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise ClassifierIOError(
                f"external classifier produced no output within {timeout:.0f}s"
            ) from None
        if line is None:
            code = self._proc.poll()
            raise ClassifierIOError(
                f"external classifier exited (code {code}) mid-conversation"
            )
        return line

    def _check_handshake(self):
        line = self._next_line(_HANDSHAKE_TIMEOUT)
        try:
            hs = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ClassifierIOError(f"bad handshake line: {line!r}") from exc
        if not isinstance(hs, dict) or hs.get("protocol") != "sflx-bridge":
            raise ClassifierIOError(f"unexpected handshake: {hs!r}")
        if hs.get("version") != 1:
            raise ClassifierIOError(f"unsupported protocol version: {hs.get('version')!r}")
        if hs.get("labels_are") != "string":
            raise ClassifierIOError(f"unsupported label encoding: {hs.get('labels_are')!r}")

    @staticmethod
    def _digest(image: Raster) -> bytes:
        h = hashlib.blake2b(digest_size=16)
        h.update(b"%d %d %d " % (image.width, image.height, image.channels))
        h.update(image.data.tobytes())
        return h.digest()

    def _send(self, rid: int, image: Raster) -> None:
        req = {
            "id": rid,
            "width": image.width,
            "height": image.height,
            "channels": image.channels,
            "pixels": image.data.tolist(),
        }
        try:
            self._proc.stdin.write(json.dumps(req, separators=(",", ":")) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ClassifierIOError("external classifier closed its stdin") from exc

    def _collect(self, wanted: set[int]) -> dict[int, Prediction]:
        got: dict[int, Prediction] = {}
        while wanted:
            line = self._next_line(self.response_timeout)
            try:
                resp = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ClassifierIOError(f"unparseable response line: {line!r}") from exc
            if not isinstance(resp, dict):
                raise ClassifierIOError(f"response is not an object: {resp!r}")
            if "error" in resp:
                raise ClassifierIOError(f"external classifier error: {resp['error']}")
            rid = resp.get("id")
            if rid not in wanted:
                raise ClassifierIOError(f"response for unknown id {rid!r}")
            label = resp.get("label")
            if not isinstance(label, str):
                raise ClassifierIOError(f"response {rid} lacks a string label")
            score = resp.get("score")
            if score is not None and not isinstance(score, (int, float)):
                raise ClassifierIOError(f"response {rid} has non-numeric score")
            got[rid] = Prediction(label, None if score is None else float(score))
            wanted.discard(rid)
        return got

    def predict(self, image: Raster) -> Prediction:
        with self._lock:
            key = self._digest(image)
            hit = self._memo.get(key)
            if hit is not None:
                return hit
            rid = self._next_id
            self._next_id += 1
            self._send(rid, image)
            pred = self._collect({rid})[rid]
            self._memo[key] = pred
            return pred

    def classify(self, image: Raster) -> str:
        return self.predict(image).label

    def classify_batch(self, images: Sequence[Raster]) -> list[str]:
        with self._lock:
            keys = [self._digest(im) for im in images]
            pending: dict[int, list[int]] = {}
            sent: dict[bytes, int] = {}
            for pos, (im, key) in enumerate(zip(images, keys)):
                if key in self._memo or key in sent:
                    continue
                rid = self._next_id
                self._next_id += 1
                sent[key] = rid
                pending.setdefault(rid, []).append(pos)
                self._send(rid, im)
            if sent:
                got = self._collect(set(sent.values()))
                for key, rid in sent.items():
                    self._memo[key] = got[rid]
            return [self._memo[k].label for k in keys]

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        try:
            if proc.stdin and not proc.stdin.closed:
                proc.stdin.close()
            proc.wait(timeout=10)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def _parse_indices(text: str) -> list[int]:
    if text.startswith("@"):
        with open(text[1:], "r", encoding="utf-8") as f:
            text = f.read()
    parts = text.replace(",", " ").split()
    try:
        return [int(p) for p in parts]
    except ValueError as exc:
        raise InvalidArgumentError(f"bad index list: {exc}") from exc


def _parse_floats(text: str) -> list[float]:
    if text.startswith("@"):
        with open(text[1:], "r", encoding="utf-8") as f:
            text = f.read()
    parts = text.replace(",", " ").split()
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise InvalidArgumentError(f"bad weight list: {exc}") from exc


def parse_classifier_spec(spec: str, bg: BackgroundColor) -> Classifier:
    """Build a classifier from a spec string.

    Forms:
      builtin:kofs:<k>:<indices>      k-of-S oracle; indices comma/space
                                      separated, or @file
      builtin:linear:<threshold>:<weights>   weights comma/space separated,
                                      or @file
      builtin:const:<label>           fixed-label classifier
      builtin:patch:<image>[:<min_match>]    patch-presence classifier
      proc:<command line>             external process (sflx-bridge protocol)
    """
    if spec.startswith("proc:"):
        argv = shlex.split(spec[len("proc:"):])
        if not argv:
            raise InvalidArgumentError("proc: spec has an empty command line")
        return ProcessClassifier(argv)
    if spec.startswith("builtin:"):
        rest = spec[len("builtin:"):]
        kind, _, args = rest.partition(":")
        if kind == "const":
            if not args:
                raise InvalidArgumentError("builtin:const needs a label")
            return ConstantClassifier(args)
        if kind == "kofs":
            k_text, _, idx_text = args.partition(":")
            try:
                k = int(k_text)
            except ValueError as exc:
                raise InvalidArgumentError(f"bad k in kofs spec: {k_text!r}") from exc
            return KofSClassifier(_parse_indices(idx_text), k, bg)
        if kind == "linear":
            t_text, _, w_text = args.partition(":")
            try:
                threshold = float(t_text)
            except ValueError as exc:
                raise InvalidArgumentError(f"bad threshold: {t_text!r}") from exc
            return LinearClassifier(_parse_floats(w_text), threshold)
        if kind == "patch":
            from .raster import load_image

            path, _, mm_text = args.partition(":")
            if not path:
                raise InvalidArgumentError("builtin:patch needs an image path")
            min_match = 0.5
            if mm_text:
                try:
                    min_match = float(mm_text)
                except ValueError as exc:
                    raise InvalidArgumentError(f"bad min_match: {mm_text!r}") from exc
            return PatchKeyedClassifier(load_image(path), min_match)
        raise InvalidArgumentError(f"unknown builtin classifier kind: {kind!r}")
    raise InvalidArgumentError(f"unrecognized classifier spec: {spec!r}")
