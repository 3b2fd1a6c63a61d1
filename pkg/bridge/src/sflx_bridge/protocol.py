"""The serving loop: line-delimited JSON over stdin/stdout.

Wire format (UTF-8, one object per line, newline terminated):

  handshake (first line out): {"protocol": "sflx-bridge", "version": 1,
                               "labels_are": "string"}
  request:   {"id": <uint64>, "width": w, "height": h, "channels": c,
              "pixels": [<byte>, ...]}   row-major, channel-interleaved
  response:  {"id": <same>, "label": "...", "score": <optional float>}

A malformed request line produces {"id": null, "error": "..."} and the
loop continues; EOF on stdin ends the process with status 0. Every line is
flushed immediately so the parent never stalls on buffering.
"""

import json
import sys

import numpy as np

from .models import BridgeModel

__all__ = ["PROTOCOL_NAME", "PROTOCOL_VERSION", "serve"]

PROTOCOL_NAME = "sflx-bridge"
PROTOCOL_VERSION = 1

_MAX_ID = (1 << 64) - 1


def _emit(out, doc) -> None:
    out.write(json.dumps(doc, separators=(",", ":")) + "\n")
    out.flush()


def _parse_request(line: str) -> tuple[int, np.ndarray]:
    req = json.loads(line)
    if not isinstance(req, dict):
        raise ValueError("request is not an object")
    rid = req.get("id")
    if not isinstance(rid, int) or isinstance(rid, bool) or not (0 <= rid <= _MAX_ID):
        raise ValueError("id must be an unsigned 64-bit integer")
    dims = {}
    for key in ("width", "height", "channels"):
        v = req.get(key)
        if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
            raise ValueError(f"{key} must be a positive integer")
        dims[key] = v
    pixels = req.get("pixels")
    expected = dims["width"] * dims["height"] * dims["channels"]
    if not isinstance(pixels, list) or len(pixels) != expected:
        raise ValueError(f"pixels must be a list of {expected} bytes")
    arr = np.asarray(pixels)
    if arr.dtype.kind not in "iu" or arr.min() < 0 or arr.max() > 255:
        raise ValueError("pixel values must be integers in [0, 255]")
    shaped = arr.astype(np.uint8).reshape(
        dims["height"], dims["width"], dims["channels"]
    )
    return rid, shaped


def serve(model: BridgeModel, stdin=None, stdout=None) -> int:
    """Answer requests until EOF. Returns the exit status (always 0)."""
    inp = sys.stdin if stdin is None else stdin
    out = sys.stdout if stdout is None else stdout
    _emit(out, {
        "protocol": PROTOCOL_NAME,
        "version": PROTOCOL_VERSION,
        "labels_are": "string",
    })
    for line in inp:
        if not line.strip():
            continue
        try:
            rid, pixels = _parse_request(line)
            if model.shape is not None and pixels.shape != model.shape:
                raise ValueError(
                    f"model expects shape {model.shape}, got {pixels.shape}"
                )
            label, score = model.predict(pixels)
            if not isinstance(label, str):
                raise ValueError("model returned a non-string label")
        except Exception as exc:
            _emit(out, {"id": None, "error": str(exc) or exc.__class__.__name__})
            continue
        resp = {"id": rid, "label": label}
        if score is not None:
            resp["score"] = float(score)
        _emit(out, resp)
    return 0
