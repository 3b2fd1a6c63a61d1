"""Acceptance gate for the bridge: protocol conformance under load and
end-to-end agreement with the in-process classifier.

Each test prints one [ACCEPT] line with the measured numbers.
"""

import json
import shlex
import subprocess
import sys
import time

import numpy as np

from sflx import (
    BackgroundColor,
    KofSClassifier,
    Measure,
    MutationParams,
    build_explanation,
    explanation_ranking,
    generate_test_suite,
    make_rng,
    parse_classifier_spec,
    prune_explanation,
)
from sflx.raster import Raster

BG = BackgroundColor.black(1)


def _report(name, ok, detail):
    print(f"[ACCEPT] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def test_accept_bridge_conformance_1000_requests():
    t0 = time.perf_counter()
    s = np.array([0, 5, 10, 15])
    k = 2
    rng = make_rng(2024)
    ids = rng.permutation(1 << 20)[:1000]  # distinct randomized ids

    requests = []
    expected = {}
    for rid in ids:
        pixels = rng.integers(0, 256, 16)
        alive = pixels[s] != 0
        expected[int(rid)] = "y-target" if int(alive.sum()) >= k else "other"
        requests.append(json.dumps({
            "id": int(rid),
            "width": 4,
            "height": 4,
            "channels": 1,
            "pixels": pixels.tolist(),
        }))

    proc = subprocess.run(
        [sys.executable, "-m", "sflx_bridge.cli", "kofs",
         "--k", str(k), "--s", "0,5,10,15", "--bg", "0"],
        input="".join(r + "\n" for r in requests),
        capture_output=True,
        text=True,
        timeout=120,
    )
    lines = [json.loads(l) for l in proc.stdout.splitlines()]

    handshake_first = lines and lines[0] == {
        "protocol": "sflx-bridge", "version": 1, "labels_are": "string",
    }
    unmatched = 0
    wrong = 0
    for reply in lines[1:]:
        want = expected.pop(reply.get("id"), None)
        if want is None:
            unmatched += 1
        elif reply["label"] != want:
            wrong += 1
    elapsed = time.perf_counter() - t0
    _report(
        "bridge-conformance",
        proc.returncode == 0 and handshake_first and not expected
        and unmatched == 0 and wrong == 0,
        f"handshake first, 1000 randomized requests id-matched, "
        f"{wrong} wrong labels, {unmatched} stray ids in {elapsed:.1f}s",
    )


def test_accept_bridge_explanations_match_in_process():
    t0 = time.perf_counter()
    s = (2, 9, 23, 41)
    k = 2
    rng = make_rng(55)
    image = Raster(8, 8, 1, np.asarray(rng.integers(10, 256, 64), dtype=np.uint8))
    local = KofSClassifier(s, k, BG)

    cmd = " ".join(shlex.quote(p) for p in (
        sys.executable, "-m", "sflx_bridge.cli", "kofs",
        "--k", str(k), "--s", ",".join(map(str, s)), "--bg", "0",
    ))
    agree = 0
    with parse_classifier_spec(f"proc:{cmd}", BG) as remote:
        for seed in range(20):
            params = MutationParams(m=150, seed=seed)
            pixels = {}
            for name, h in (("local", local), ("remote", remote)):
                suite = generate_test_suite(h, image, params, BG)
                ranking = explanation_ranking(suite, 64, Measure.OCHIAI)
                e = prune_explanation(h, image, build_explanation(h, image, ranking, BG), BG)
                pixels[name] = e.pixels
            if pixels["local"] == pixels["remote"]:
                agree += 1
    elapsed = time.perf_counter() - t0
    _report(
        "bridge-end-to-end-equality",
        agree == 20,
        f"pruned explanations pixel-identical for {agree}/20 seeds in {elapsed:.1f}s",
    )
