import numpy as np
import pytest

from sflx import (
    BackgroundColor,
    CellGrid,
    ConstantClassifier,
    InvalidArgumentError,
    KofSClassifier,
    Measure,
    MutationParams,
    PixelRanking,
    TruthTableClassifier,
    build_explanation,
    explain_best,
    explanation_pixels,
    explanation_ranking,
    generate_test_suite,
    keep_only,
    make_rng,
    prune_explanation,
)


def ranking_of(order):
    order = np.asarray(order, dtype=np.int64)
    values = np.linspace(1.0, 0.0, order.size)
    return PixelRanking(order, values)


def table_classifier(n, sufficient_sets, bg, y="y", other="z"):
    """Label y exactly when the unmasked set is a superset of one listed set."""
    table = []
    for bits in range(1 << n):
        present = {i for i in range(n) if bits >> i & 1}
        ok = any(present >= s for s in sufficient_sets)
        table.append(y if ok else other)
    return TruthTableClassifier(n, table, bg)


def test_perfect_ranking_single_pixel(bright, bg1):
    img = bright(3, 3)
    h = KofSClassifier([5], 1, bg1)
    e = build_explanation(h, img, ranking_of([5, 0, 1, 2, 3, 4, 6, 7, 8]), bg1)
    assert e.pixels == (5,)
    assert e.sufficient_label == "y-target"
    assert e.queries_used == 2  # one to re-establish the label, one prefix check


def test_always_accepting_classifier_returns_top1(bright, bg1):
    img = bright(2, 2)
    e = build_explanation(ConstantClassifier("w"), img, ranking_of([3, 1, 0, 2]), bg1)
    assert e.pixels == (3,)  # the empty prefix is never consulted


def test_inverted_ranking_lower_bound(bright, bg1):
    # S last: the prefix must cover all of ~S plus k of S
    img = bright(3, 3)
    s, k = [7, 8], 1
    h = KofSClassifier(s, k, bg1)
    e = build_explanation(h, img, ranking_of([0, 1, 2, 3, 4, 5, 6, 7, 8]), bg1)
    assert e.size >= 9 - len(s) + k
    assert e.size == 8  # exactly seven non-S pixels then pixel 7


def test_explanation_reverifies(bright, bg1):
    img = bright(4, 4)
    h = KofSClassifier([2, 7, 11], 2, bg1)
    suite = generate_test_suite(h, img, MutationParams(m=150, seed=31), bg1)
    for m in Measure:
        r = explanation_ranking(suite, 16, m)
        e = build_explanation(h, img, r, bg1, m)
        assert h.classify(keep_only(img, e.pixels, bg1)) == e.sufficient_label


def test_prefix_minimality(bright, bg1):
    img = bright(4, 4)
    h = KofSClassifier([0, 5, 10, 15], 3, bg1)
    suite = generate_test_suite(h, img, MutationParams(m=150, seed=32), bg1)
    r = explanation_ranking(suite, 16, Measure.OCHIAI)
    e = build_explanation(h, img, r, bg1)
    assert e.size > 1
    shorter = e.pixels[:-1]
    assert h.classify(keep_only(img, shorter, bg1)) != e.sufficient_label


def test_binary_equals_linear_on_seeded_cases(bright, bg1):
    rng = make_rng(77)
    for trial in range(30):
        w = int(rng.integers(3, 6))
        img = bright(w, w)
        n = w * w
        size_s = int(rng.integers(1, min(n, 6)))
        s = rng.permutation(n)[:size_s].tolist()
        k = int(rng.integers(1, size_s + 1))
        h = KofSClassifier(s, k, bg1)
        order = rng.permutation(n).tolist()
        lin = build_explanation(h, img, ranking_of(order), bg1, binary_search=False)
        binr = build_explanation(h, img, ranking_of(order), bg1, binary_search=True)
        assert lin.pixels == binr.pixels
        assert binr.queries_used <= lin.queries_used + 4


def test_binary_default_threshold(bright, bg1):
    # small image defaults to the plain scan; both paths agree anyway
    img = bright(3, 3)
    h = KofSClassifier([4], 1, bg1)
    auto = build_explanation(h, img, ranking_of(range(9)), bg1)
    assert auto.pixels == build_explanation(
        h, img, ranking_of(range(9)), bg1, binary_search=False
    ).pixels


def test_build_validates_ranking(bright, bg1):
    img = bright(2, 2)
    with pytest.raises(InvalidArgumentError):
        build_explanation(ConstantClassifier("w"), img, ranking_of([0, 1]), bg1)


# --- pruning ---


def test_prune_keeps_1minimal_untouched(bright, bg1):
    img = bright(3, 3)
    h = KofSClassifier([4, 5], 2, bg1)
    e = build_explanation(h, img, ranking_of([4, 5, 0, 1, 2, 3, 6, 7, 8]), bg1)
    p = prune_explanation(h, img, e, bg1)
    assert p.pixels == e.pixels
    assert p.pruned


def test_prune_drops_redundant_pixel(bright, bg1):
    img = bright(4, 4)
    h = KofSClassifier([5], 1, bg1)
    e = build_explanation(h, img, ranking_of([9, 5] + [i for i in range(16) if i not in (9, 5)]), bg1)
    assert e.pixels == (9, 5)
    p = prune_explanation(h, img, e, bg1)
    assert p.pixels == (5,)


def test_prune_to_empty_on_degenerate_classifier(bright, bg1):
    img = bright(2, 2)
    h = ConstantClassifier("w")
    e = build_explanation(h, img, ranking_of([0, 1, 2, 3]), bg1)
    p = prune_explanation(h, img, e, bg1)
    assert p.pixels == ()


def test_prune_monotone_yields_exactly_k_of_s(bright, bg1):
    img = bright(4, 4)
    s = {1, 6, 11, 12}
    h = KofSClassifier(sorted(s), 2, bg1)
    rng = make_rng(41)
    for _ in range(10):
        order = rng.permutation(16).tolist()
        e = build_explanation(h, img, ranking_of(order), bg1)
        p = prune_explanation(h, img, e, bg1)
        kept = set(p.pixels)
        assert kept <= s
        assert len(kept) == 2


def test_prune_result_is_1minimal_on_random_tables(bright, bg1):
    img = bright(3, 3)
    rng = make_rng(42)
    for trial in range(8):
        table = ["y" if rng.random() < 0.5 else "z" for _ in range(512)]
        table[511] = "y"
        table[0] = "z"
        h = TruthTableClassifier(9, table, bg1)
        e = build_explanation(h, img, ranking_of(rng.permutation(9).tolist()), bg1)
        p = prune_explanation(h, img, e, bg1)
        assert h.classify(keep_only(img, p.pixels, bg1)) == "y"
        for pix in p.pixels:
            rest = [q for q in p.pixels if q != pix]
            assert h.classify(keep_only(img, rest, bg1)) != "y"


def test_prune_fixpoint_handles_nonmonotone_case(bright, bg1):
    # sufficient sets: {0} and {1,2}; build from ranking [2,1,0] gives {2,1};
    # a single reverse pass already works here, the fixpoint must not break it
    img = bright(3, 1)
    h = table_classifier(3, [{0}, {1, 2}], bg1)
    e = build_explanation(h, img, ranking_of([2, 1, 0]), bg1)
    assert set(e.pixels) == {2, 1}
    p = prune_explanation(h, img, e, bg1)
    assert set(p.pixels) == {1, 2}
    for pix in p.pixels:
        rest = [q for q in p.pixels if q != pix]
        assert h.classify(keep_only(img, rest, bg1)) != "y"


# --- explain_best ---


def test_explain_best_single_measure_matches_build(bright, bg1):
    img = bright(4, 4)
    h = KofSClassifier([3, 6, 9], 2, bg1)
    suite = generate_test_suite(h, img, MutationParams(m=120, seed=51), bg1)
    m, e = explain_best(h, img, suite, [Measure.ZOLTAR], bg1)
    assert m is Measure.ZOLTAR
    direct = build_explanation(
        h, img, explanation_ranking(suite, 16, Measure.ZOLTAR), bg1, Measure.ZOLTAR
    )
    assert e.pixels == direct.pixels


def test_explain_best_picks_smallest(bright, bg1):
    img = bright(4, 4)
    h = KofSClassifier([0, 1, 2, 3], 2, bg1)
    suite = generate_test_suite(h, img, MutationParams(m=150, seed=52), bg1)
    sizes = {}
    for m in Measure:
        r = explanation_ranking(suite, 16, m)
        sizes[m] = build_explanation(h, img, r, bg1, m).size
    best_m, best_e = explain_best(h, img, suite, list(Measure), bg1)
    assert best_e.size == min(sizes.values())
    # tie rule: no earlier-declared measure achieves a strictly smaller size
    for m in Measure:
        if m is best_m:
            break
        assert sizes[m] > best_e.size


def test_explain_best_requires_measures(bright, bg1):
    img = bright(2, 2)
    h = ConstantClassifier("w")
    suite = generate_test_suite(h, img, MutationParams(m=5, seed=53), bg1)
    with pytest.raises(InvalidArgumentError):
        explain_best(h, img, suite, [], bg1)


# --- cell grid ---


def test_grid_explanation_expands_units(bright, bg1):
    img = bright(4, 4)
    grid = CellGrid(4, 4, 2)
    h = KofSClassifier([0, 1, 4, 5], 2, bg1)  # exactly unit 0
    suite = generate_test_suite(h, img, MutationParams(m=80, seed=54), bg1, grid=grid)
    r = explanation_ranking(suite, 16, Measure.OCHIAI, grid)
    e = build_explanation(h, img, r, bg1, Measure.OCHIAI, grid=grid)
    pixels = explanation_pixels(e, grid)
    assert h.classify(keep_only(img, pixels, bg1)) == "y-target"
    assert e.pixels == (0,)  # the single sufficient unit
    assert sorted(pixels) == [0, 1, 4, 5]
