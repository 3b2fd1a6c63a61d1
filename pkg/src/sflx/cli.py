"""Command-line entry point.

Subcommands:
  explain   rank pixels and emit explanation artifacts for one image
  eval      size + deletion metrics over one or more images
  chimera   synthesize composites with a planted patch; optional detection
  bench     wall-clock and query-count report for the pipeline stages
  selftest  built-in formula and tiny brute-force checks

Exit codes: 0 success, 2 invalid configuration, 3 classifier I/O failure,
4 image I/O failure. All randomness flows from one 64-bit seed (flag,
config file, or SFLX_SEED); identical configurations produce byte-identical
JSON/CSV artifacts.
"""

import argparse
import json
import os
import sys
import time
from fractions import Fraction

import numpy as np

from .classifiers import Classifier, TruthTableClassifier, parse_classifier_spec
from .errors import ClassifierIOError, InvalidArgumentError, UnsupportedFormatError
from .evaluation import (
    ChimeraSpec,
    brute_force_min_explanation,
    chimera_generate,
    deletion_curve,
    explanation_size,
    size_cdf_rows,
    topk_iou_detect,
)
from .explanation import (
    build_explanation,
    explanation_pixels,
    prune_explanation,
)
from .mutation import (
    DEFAULT_EPSILON,
    DEFAULT_M,
    DEFAULT_SIGMA0,
    MutationParams,
    generate_test_suite,
    suite_to_json,
)
from .raster import (
    BackgroundColor,
    CellGrid,
    Raster,
    keep_only,
    load_image,
    save_image,
    write_atomic,
)
from .rng import make_rng
from .sfl import (
    Measure,
    SpectrumVector,
    compute_spectra,
    explanation_ranking,
    masking_spectra,
    measure_value,
    rank_pixels,
    ranking_csv,
    ranking_heatmap,
)

__all__ = ["main"]


class _ImageIO(Exception):
    pass


def _read_image(path: str) -> Raster:
    try:
        return load_image(path)
    except (OSError, UnsupportedFormatError) as exc:
        raise _ImageIO(str(exc)) from exc


def _write_image(image: Raster, path: str) -> None:
    try:
        save_image(image, path)
    except (OSError, UnsupportedFormatError) as exc:
        raise _ImageIO(str(exc)) from exc


def _write_text(path: str, text: str) -> None:
    try:
        write_atomic(path, text.encode("utf-8"))
    except OSError as exc:
        raise _ImageIO(str(exc)) from exc


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- configuration resolution: flags > config file > defaults ---

_CONFIG_KEYS = {
    "classifier",
    "bg",
    "measure",
    "sigma0",
    "epsilon",
    "m",
    "seed",
    "cell",
    "prune",
    "binary_search",
    "chunk",
    "out",
    "dump_suite",
    "target",
    "detect",
}

_DEFAULTS = {
    "bg": None,
    "measure": "all",
    "sigma0": DEFAULT_SIGMA0,
    "epsilon": DEFAULT_EPSILON,
    "m": DEFAULT_M,
    "cell": 1,
    "prune": False,
    "binary_search": "auto",
    "chunk": 1,
    "out": ".",
    "dump_suite": False,
    "detect": False,
}


def _resolve(args: argparse.Namespace) -> dict:
    merged = dict(_DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except OSError as exc:
            raise InvalidArgumentError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise InvalidArgumentError("config file must hold a JSON object")
        unknown = set(loaded) - _CONFIG_KEYS
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        merged.update(loaded)
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if merged.get("seed") is None:
        env = os.environ.get("SFLX_SEED")
        if env is not None:
            try:
                merged["seed"] = int(env)
            except ValueError as exc:
                raise InvalidArgumentError(f"SFLX_SEED is not an integer: {env!r}") from exc
        else:
            merged["seed"] = 0
    merged["seed"] = int(merged["seed"])
    return merged


def _parse_sigma0(value):
    if isinstance(value, str) and value != "random":
        try:
            return float(value)
        except ValueError as exc:
            raise InvalidArgumentError(f"sigma0 must be a number or 'random': {value!r}") from exc
    return value


def _parse_measures(value) -> list[Measure]:
    if isinstance(value, str):
        names = [v for v in value.replace(",", " ").split() if v]
    else:
        names = list(value)
    if "all" in names:
        return list(Measure)
    out: list[Measure] = []
    for name in names:
        m = Measure.parse(name)
        if m not in out:
            out.append(m)
    if not out:
        raise InvalidArgumentError("no measure selected")
    return out


def _parse_bg(value, channels: int) -> BackgroundColor:
    if value is None:
        return BackgroundColor.black(channels)
    if isinstance(value, str):
        parts = [p for p in value.replace(",", " ").split() if p]
    else:
        parts = list(value)
    try:
        bytes_ = [int(p) for p in parts]
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"bad background color: {value!r}") from exc
    if len(bytes_) == 1 and channels == 3:
        bytes_ = bytes_ * 3
    if len(bytes_) != channels:
        raise InvalidArgumentError(
            f"background has {len(bytes_)} values, image has {channels} channels"
        )
    return BackgroundColor(tuple(bytes_))


def _binary_flag(value):
    if value in ("auto", None):
        return None
    if value in ("on", True, "true"):
        return True
    if value in ("off", False, "false"):
        return False
    raise InvalidArgumentError(f"binary-search must be auto/on/off, got {value!r}")


def _grid(image: Raster, cell) -> CellGrid | None:
    cell = int(cell)
    if cell == 1:
        return None
    return CellGrid(image.width, image.height, cell)


def _make_classifier(cfg: dict, bg: BackgroundColor) -> Classifier:
    spec = cfg.get("classifier")
    if not spec:
        raise InvalidArgumentError("a --classifier spec is required")
    try:
        return parse_classifier_spec(spec, bg)
    except OSError as exc:
        raise InvalidArgumentError(f"classifier spec references unreadable file: {exc}") from exc


def _ensure_out(cfg: dict) -> str:
    out = cfg["out"]
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise _ImageIO(f"cannot create output directory: {exc}") from exc
    return out


def _explanation_doc(e, n, measure: Measure, grid) -> dict:
    pixels = explanation_pixels(e, grid)
    return {
        "measure": measure.value,
        "pixel_indices": pixels,
        "size_fraction": len(pixels) / n,
        "sufficient_label": e.sufficient_label,
        "queries_used": e.queries_used,
        "pruned": e.pruned,
    }


def cmd_explain(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    image = _read_image(args.image)
    bg = _parse_bg(cfg["bg"], image.channels)
    measures = _parse_measures(cfg["measure"])
    params = MutationParams(
        sigma0=_parse_sigma0(cfg["sigma0"]),
        epsilon=float(cfg["epsilon"]),
        m=int(cfg["m"]),
        seed=cfg["seed"],
    )
    grid = _grid(image, cfg["cell"])
    binary = _binary_flag(cfg["binary_search"])
    out = _ensure_out(cfg)

    with _make_classifier(cfg, bg) as h:
        suite = generate_test_suite(h, image, params, bg, grid, int(cfg["chunk"]))
        if cfg["dump_suite"]:
            _write_text(os.path.join(out, "suite.json"), suite_to_json(suite))
        n = image.pixel_count
        results = {}
        for m in measures:
            ranking = explanation_ranking(suite, n, m, grid)
            e = build_explanation(h, image, ranking, bg, m, binary, grid)
            if cfg["prune"]:
                e = prune_explanation(h, image, e, bg, grid)
            results[m] = e
            tag = m.value
            _write_text(os.path.join(out, f"ranking-{tag}.csv"),
                        ranking_csv(ranking, image.width if grid is None else grid.cols, m))
            _write_image(ranking_heatmap(ranking, image.width, image.height, grid),
                         os.path.join(out, f"heatmap-{tag}.png"))
            _write_text(os.path.join(out, f"explanation-{tag}.json"),
                        _json_text(_explanation_doc(e, n, m, grid)))
            _write_image(keep_only(image, explanation_pixels(e, grid), bg),
                         os.path.join(out, f"overlay-{tag}.png"))
        if len(measures) > 1:
            winner = min(results, key=lambda m: (results[m].size, list(Measure).index(m)))
            e = results[winner]
            _write_text(os.path.join(out, "explanation-best.json"),
                        _json_text(_explanation_doc(e, n, winner, grid)))
            _write_image(keep_only(image, explanation_pixels(e, grid), bg),
                         os.path.join(out, "overlay-best.png"))
    return 0


_AGGREGATE_HEADER = "image,measure,size_fraction,flip_fraction,best_iou,detect@0.5,detect@0.6,detect@0.7"


def _aggregate_row(image_name, measure, size_fraction, flip_fraction, report=None) -> str:
    if report is None:
        tail = ",,,"
    else:
        flags = [report.detected[t] for t in (0.5, 0.6, 0.7)]
        tail = f"{report.max_iou!r}," + ",".join(str(int(f)) for f in flags)
    sf = "" if size_fraction is None else repr(float(size_fraction))
    ff = "" if flip_fraction is None else repr(float(flip_fraction))
    return f"{image_name},{measure.value},{sf},{ff},{tail}"


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    measures = None
    rows = [_AGGREGATE_HEADER]
    sizes = []
    out = None
    for path in args.images:
        image = _read_image(path)
        bg = _parse_bg(cfg["bg"], image.channels)
        measures = _parse_measures(cfg["measure"])
        params = MutationParams(
            sigma0=_parse_sigma0(cfg["sigma0"]),
            epsilon=float(cfg["epsilon"]),
            m=int(cfg["m"]),
            seed=cfg["seed"],
        )
        grid = _grid(image, cfg["cell"])
        binary = _binary_flag(cfg["binary_search"])
        out = _ensure_out(cfg)
        name = os.path.splitext(os.path.basename(path))[0]
        doc = {"image": name, "measures": {}}
        with _make_classifier(cfg, bg) as h:
            suite = generate_test_suite(h, image, params, bg, grid, int(cfg["chunk"]))
            n = image.pixel_count
            for m in measures:
                ranking = explanation_ranking(suite, n, m, grid)
                entry = {}
                if args.mode in ("size", "both"):
                    e = build_explanation(h, image, ranking, bg, m, binary, grid)
                    if cfg["prune"]:
                        e = prune_explanation(h, image, e, bg, grid)
                    entry["size_fraction"] = explanation_size(e, n, grid)
                    entry["queries_used"] = e.queries_used
                    sizes.append(entry["size_fraction"])
                if args.mode in ("deletion", "both") and grid is None:
                    d = deletion_curve(h, image, ranking, bg)
                    entry["flip_index"] = d.flip_index
                    entry["flip_fraction"] = d.flip_fraction
                doc["measures"][m.value] = entry
                rows.append(_aggregate_row(
                    name, m, entry.get("size_fraction"), entry.get("flip_fraction")
                ))
        _write_text(os.path.join(out, f"metrics-{name}.json"), _json_text(doc))
    if out is not None:
        _write_text(os.path.join(out, "aggregate.csv"), "\n".join(rows) + "\n")
        if sizes:
            cdf = ["size_fraction,cumulative_fraction"]
            cdf += [f"{s!r},{c!r}" for s, c in size_cdf_rows(sizes)]
            _write_text(os.path.join(out, "size-cdf.csv"), "\n".join(cdf) + "\n")
    return 0


def cmd_chimera(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    patch = _read_image(args.patch)
    backgrounds = tuple(_read_image(p) for p in args.backgrounds)
    if not backgrounds:
        raise InvalidArgumentError("at least one background image is required")
    bg = _parse_bg(cfg["bg"], patch.channels)
    target = cfg.get("target")
    if not target:
        raise InvalidArgumentError("--target label is required")
    out = _ensure_out(cfg)

    with _make_classifier(cfg, bg) as h:
        spec = ChimeraSpec(patch, backgrounds, target, cfg["seed"])
        retained = chimera_generate(spec, h)
        summary = {
            "total": len(backgrounds),
            "retained": len(retained),
            "target": target,
            "seed": cfg["seed"],
        }
        rows = [_AGGREGATE_HEADER]
        detections = 0
        for idx, (composite, gt) in enumerate(retained):
            stem = f"composite-{idx:03d}"
            _write_image(composite, os.path.join(out, f"{stem}.png"))
            _write_text(
                os.path.join(out, f"{stem}-gt.json"),
                _json_text({"pixel_indices": [int(i) for i in gt.indices()]}),
            )
            if cfg["detect"]:
                measures = _parse_measures(cfg["measure"])
                params = MutationParams(
                    sigma0=_parse_sigma0(cfg["sigma0"]),
                    epsilon=float(cfg["epsilon"]),
                    m=int(cfg["m"]),
                    seed=cfg["seed"] + idx + 1,
                )
                suite = generate_test_suite(h, composite, params, bg)
                for m in measures:
                    ranking = explanation_ranking(suite, composite.pixel_count, m)
                    report = topk_iou_detect(ranking, gt)
                    if report.detected[0.5]:
                        detections += 1
                    rows.append(_aggregate_row(stem, m, None, None, report))
        if cfg["detect"]:
            summary["detections_at_0.5"] = detections
            _write_text(os.path.join(out, "aggregate.csv"), "\n".join(rows) + "\n")
        _write_text(os.path.join(out, "chimera.json"), _json_text(summary))
    print(f"retained {summary['retained']} of {summary['total']} composites")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    image = _read_image(args.image)
    bg = _parse_bg(cfg["bg"], image.channels)
    measures = _parse_measures(cfg["measure"])
    params = MutationParams(
        sigma0=_parse_sigma0(cfg["sigma0"]),
        epsilon=float(cfg["epsilon"]),
        m=int(cfg["m"]),
        seed=cfg["seed"],
    )
    grid = _grid(image, cfg["cell"])
    binary = _binary_flag(cfg["binary_search"])
    out = _ensure_out(cfg)
    n = image.pixel_count

    doc = {"image": args.image, "m": params.m, "stages": {}, "queries": {}}
    with _make_classifier(cfg, bg) as h:
        t0 = time.perf_counter()
        suite = generate_test_suite(h, image, params, bg, grid, int(cfg["chunk"]))
        t1 = time.perf_counter()
        rankings = {m: explanation_ranking(suite, n, m, grid) for m in measures}
        t2 = time.perf_counter()
        builds = {}
        for m in measures:
            builds[m] = build_explanation(h, image, rankings[m], bg, m, binary, grid)
        t3 = time.perf_counter()
        prune_q = 0
        if cfg["prune"]:
            for m in measures:
                pruned = prune_explanation(h, image, builds[m], bg, grid)
                prune_q += pruned.queries_used - builds[m].queries_used
                builds[m] = pruned
        t4 = time.perf_counter()

    doc["stages"] = {
        "suite_s": t1 - t0,
        "rank_s": t2 - t1,
        "build_s": t3 - t2,
        "prune_s": t4 - t3,
        "total_s": t4 - t0,
    }
    doc["queries"] = {
        "suite": params.m + 1,
        "build": sum(b.queries_used for b in builds.values()) - prune_q,
        "prune": prune_q,
    }
    doc["sizes"] = {m.value: builds[m].size for m in measures}
    _write_text(os.path.join(out, "bench.json"), _json_text(doc))
    print(
        f"suite {doc['stages']['suite_s']:.3f}s, rank {doc['stages']['rank_s']:.3f}s, "
        f"build {doc['stages']['build_s']:.3f}s, prune {doc['stages']['prune_s']:.3f}s "
        f"({doc['queries']['suite'] + doc['queries']['build'] + prune_q} queries)"
    )
    return 0


# --- selftest: formula oracle + tiny exhaustive cross-check ---


def _exact_measure(measure: Measure, s: SpectrumVector) -> Fraction | None:
    """Independent exact-rational evaluation; None where a convention applies."""
    ep, ef, np_, nf = (Fraction(x) for x in s)
    if measure is Measure.OCHIAI:
        if ef == 0:
            return Fraction(0)
        denom_sq = (ef + nf) * (ef + ep)
        return None if denom_sq == 0 else ef * ef / denom_sq  # compare squared
    if measure is Measure.TARANTULA:
        fail = ef / (ef + nf) if ef + nf else Fraction(0)
        ok = ep / (ep + np_) if ep + np_ else Fraction(0)
        return Fraction(0) if fail + ok == 0 else fail / (fail + ok)
    if measure is Measure.ZOLTAR:
        if ef == 0:
            return Fraction(0)
        return ef / (ef + nf + ep + Fraction(10000) * nf * ep / ef)
    if measure is Measure.WONG2:
        return ef - ep
    raise AssertionError(measure)


def _selftest_formulas() -> bool:
    worst = 0.0
    for ep in range(11):
        for ef in range(11):
            for np_ in range(11):
                for nf in range(11):
                    s = SpectrumVector(ep, ef, np_, nf)
                    for m in Measure:
                        got = measure_value(m, s)
                        want = _exact_measure(m, s)
                        if m is Measure.OCHIAI:
                            diff = abs(got * got - float(want))
                        else:
                            diff = abs(got - float(want))
                        worst = max(worst, diff)
    print(f"formula oracle: worst |delta| = {worst:.2e} "
          f"{'PASS' if worst <= 1e-12 else 'FAIL'}")
    return worst <= 1e-12


def _selftest_brute_force(seed: int = 20240801) -> bool:
    rng = make_rng(seed)
    n = 9
    image = Raster(3, 3, 1, np.full(9, 255, dtype=np.uint8))
    bg = BackgroundColor.black(1)
    ok = True
    for trial in range(10):
        table = ["y" if rng.random() < 0.5 else "z" for _ in range(1 << n)]
        table[(1 << n) - 1] = "y"
        table[0] = "z"
        h = TruthTableClassifier(n, table, bg)
        params = MutationParams(m=200, seed=seed + trial)
        suite = generate_test_suite(h, image, params, bg)
        ranking = explanation_ranking(suite, n, Measure.OCHIAI)
        e = build_explanation(h, image, ranking, bg, Measure.OCHIAI)
        e = prune_explanation(h, image, e, bg)
        kept_mask = sum(1 << p for p in e.pixels)
        sufficient = table[kept_mask] == "y"
        min_size, _ = brute_force_min_explanation(table, "y", n)
        ok = ok and sufficient and e.size >= min_size
    print(f"tiny brute-force cross-check: {'PASS' if ok else 'FAIL'}")
    return ok


def cmd_selftest(args: argparse.Namespace) -> int:
    good = _selftest_formulas()
    good = _selftest_brute_force() and good
    return 0 if good else 1


def _add_common(p: argparse.ArgumentParser, needs_classifier: bool = True):
    if needs_classifier:
        p.add_argument("--classifier", help="builtin:kofs:K:IDX..., builtin:linear:T:W..., builtin:const:LABEL, or proc:CMD")
    p.add_argument("--bg", help="background color bytes, e.g. '0' or '12,34,56'")
    p.add_argument("--measure", help="ochiai|tarantula|zoltar|wong2|all (comma list)")
    p.add_argument("--sigma0", help="initial masking fraction in (0,1), or 'random'")
    p.add_argument("--epsilon", type=float, help="masking fraction step")
    p.add_argument("-m", "--suite-size", dest="m", type=int, help="mutant count")
    p.add_argument("--seed", type=int, help="PRNG seed (SFLX_SEED fallback, else 0)")
    p.add_argument("--cell", type=int, help="cell granularity g (default 1)")
    p.add_argument("--prune", action="store_const", const=True, help="1-minimal prune pass")
    p.add_argument("--binary-search", dest="binary_search", choices=["auto", "on", "off"],
                   help="prefix search strategy (auto: on above 4096 pixels)")
    p.add_argument("--chunk", type=int, help="mutants classified per batch (deviation; default 1)")
    p.add_argument("--out", help="output directory (default .)")
    p.add_argument("--config", help="JSON config file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sflx",
        description="Black-box image-classifier explanations from masked-pixel suites.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="rank pixels and build an explanation")
    p.add_argument("image")
    _add_common(p)
    p.add_argument("--dump-suite", dest="dump_suite", action="store_const", const=True,
                   help="also write suite.json")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", help="size / deletion metrics over images")
    p.add_argument("images", nargs="+")
    p.add_argument("--mode", choices=["size", "deletion", "both"], default="both")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("chimera", help="composite synthesis with planted patch")
    p.add_argument("--patch", required=True)
    p.add_argument("--background", dest="backgrounds", action="append", default=[],
                   metavar="PATH", help="background image (repeatable)")
    p.add_argument("--target", help="label that marks a retained composite")
    p.add_argument("--detect", action="store_const", const=True,
                   help="run ranking detection against the planted region")
    _add_common(p)
    p.set_defaults(func=cmd_chimera)

    p = sub.add_parser("bench", help="stage timing and query counts")
    p.add_argument("image")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("selftest", help="formula oracle and tiny exhaustive checks")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidArgumentError as exc:
        print(f"sflx: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except ClassifierIOError as exc:
        print(f"sflx: classifier failure: {exc}", file=sys.stderr)
        return 3
    except _ImageIO as exc:
        print(f"sflx: image I/O failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
