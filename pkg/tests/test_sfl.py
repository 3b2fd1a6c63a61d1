import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sflx import (
    AnnotatedMutant,
    BackgroundColor,
    CellGrid,
    InvalidArgumentError,
    KofSClassifier,
    MaskSet,
    Measure,
    MutationParams,
    PixelRanking,
    Raster,
    SpectrumVector,
    TestSuite,
    compute_spectra,
    generate_test_suite,
    masking_spectra,
    measure_value,
    rank_pixels,
    ranking_csv,
    ranking_heatmap,
)


def suite_of(n, entries, label="y"):
    """entries: (masked_indices, same_label) pairs."""
    mutants = tuple(
        AnnotatedMutant(MaskSet.from_indices(n, idx), same) for idx, same in entries
    )
    params = MutationParams(m=len(mutants), seed=0)
    return TestSuite(label, mutants, params, n)


FOUR_MUTANTS = [
    ([], True),
    ([0], False),
    ([0, 1], False),
    ([1], True),
]


def test_spectra_pinned_four_mutant_case():
    suite = suite_of(2, FOUR_MUTANTS)
    spectra = compute_spectra(suite, 2)
    assert spectra[0] == SpectrumVector(a_ep=2, a_ef=0, a_np=0, a_nf=2)
    assert spectra[1] == SpectrumVector(a_ep=1, a_ef=1, a_np=1, a_nf=1)


def test_spectra_all_kept_never_masked():
    suite = suite_of(3, [([], True)] * 7)
    spectra = compute_spectra(suite, 3)
    assert spectra[0] == SpectrumVector(7, 0, 0, 0)


def test_spectra_always_masked_pixel():
    suite = suite_of(2, [([0], True), ([0], False), ([0, 1], True)])
    s0 = compute_spectra(suite, 2)[0]
    assert s0.a_ep == 0 and s0.a_ef == 0
    assert s0.a_np == 2 and s0.a_nf == 1


def test_spectra_rejects_length_mismatch():
    suite = suite_of(2, FOUR_MUTANTS)
    with pytest.raises(InvalidArgumentError):
        compute_spectra(suite, 3)


def test_spectra_sum_and_partition_laws(bright, bg1):
    img = bright(8, 8)
    h = KofSClassifier([0, 9, 18, 27], 2, bg1)
    suite = generate_test_suite(h, img, MutationParams(m=120, seed=21), bg1)
    spectra = compute_spectra(suite, 64)
    for i, s in enumerate(spectra):
        assert s.a_ep + s.a_ef + s.a_np + s.a_nf == 120
        unmasked_count = sum(1 for mu in suite.mutants if not mu.mask.bits[i])
        assert s.a_ep + s.a_ef == unmasked_count


def test_masking_spectra_swaps_roles():
    s = SpectrumVector(1, 2, 3, 4)
    w = masking_spectra([s])[0]
    assert w == SpectrumVector(3, 4, 1, 2)
    assert masking_spectra([w])[0] == s


def test_spectra_with_grid_counts_units(bright, bg1):
    img = bright(4, 4)
    grid = CellGrid(4, 4, 2)
    h = KofSClassifier([0, 1], 1, bg1)
    suite = generate_test_suite(h, img, MutationParams(m=40, seed=3), bg1, grid=grid)
    spectra = compute_spectra(suite, 16, grid)
    assert len(spectra) == 4
    for s in spectra:
        assert s.a_ep + s.a_ef + s.a_np + s.a_nf == 40


# --- measures ---


def test_ochiai_hand_value():
    assert measure_value(Measure.OCHIAI, SpectrumVector(1, 1, 1, 1)) == pytest.approx(0.5)


def test_wong2_hand_value():
    assert measure_value(Measure.WONG2, SpectrumVector(3, 5, 0, 0)) == 2


def test_tarantula_symmetry_point():
    # equal defined ratios -> 0.5
    s = SpectrumVector(2, 3, 2, 3)
    assert measure_value(Measure.TARANTULA, s) == pytest.approx(0.5)


def test_zoltar_zero_nf_case():
    s = SpectrumVector(2, 2, 9, 0)
    assert measure_value(Measure.ZOLTAR, s) == pytest.approx(0.5)


def test_zero_conventions():
    zero_ef = SpectrumVector(5, 0, 2, 7)
    assert measure_value(Measure.OCHIAI, zero_ef) == 0.0
    assert measure_value(Measure.ZOLTAR, zero_ef) == 0.0
    all_zero = SpectrumVector(0, 0, 0, 0)
    for m in Measure:
        assert measure_value(m, all_zero) == 0.0
    # failing ratio defined, passing ratio undefined -> passing treated as 0
    s = SpectrumVector(0, 3, 0, 1)
    assert measure_value(Measure.TARANTULA, s) == pytest.approx(1.0)


@given(
    st.integers(0, 30),
    st.integers(0, 30),
    st.integers(0, 30),
    st.integers(0, 30),
)
def test_measure_ranges(ep, ef, np_, nf):
    s = SpectrumVector(ep, ef, np_, nf)
    m_total = ep + ef + np_ + nf
    for m in (Measure.OCHIAI, Measure.TARANTULA, Measure.ZOLTAR):
        v = measure_value(m, s)
        assert 0.0 <= v <= 1.0
        assert math.isfinite(v)
    w = measure_value(Measure.WONG2, s)
    assert -m_total <= w <= m_total


def test_measure_parse_aliases():
    assert Measure.parse("Ochiai") is Measure.OCHIAI
    assert Measure.parse("WONG2") is Measure.WONG2
    assert Measure.parse("wong-ii") is Measure.WONG2
    with pytest.raises(InvalidArgumentError):
        Measure.parse("magic")


# --- ranking ---


def test_rank_simple_order():
    spectra = [SpectrumVector(5, 0, 0, 5), SpectrumVector(0, 5, 5, 0)]
    r = rank_pixels(spectra, Measure.OCHIAI)
    assert r.pixels.tolist() == [1, 0]
    assert r.values[0] > r.values[1]


def test_rank_tie_break_is_index_order():
    spectra = [SpectrumVector(1, 1, 1, 1)] * 4
    r = rank_pixels(spectra, Measure.OCHIAI)
    assert r.pixels.tolist() == [0, 1, 2, 3]
    assert np.all(r.values == r.values[0])


def test_rank_four_mutant_example():
    # pixel 1 has the higher flipped-while-unmasked share, so it ranks first
    suite = suite_of(2, FOUR_MUTANTS)
    r = rank_pixels(compute_spectra(suite, 2), Measure.OCHIAI)
    assert r.pixels.tolist() == [1, 0]


def test_rank_values_non_increasing(bright, bg1):
    img = bright(8, 8)
    h = KofSClassifier([1, 2, 3], 2, bg1)
    suite = generate_test_suite(h, img, MutationParams(m=60, seed=9), bg1)
    for m in Measure:
        r = rank_pixels(compute_spectra(suite, 64), m)
        assert np.all(np.diff(r.values) <= 0)
        assert sorted(r.pixels.tolist()) == list(range(64))


def test_rank_invariant_under_monotone_transform():
    rng = np.random.default_rng(17)
    spectra = []
    for _ in range(30):
        ep, ef, np_, nf = rng.integers(0, 10, 4).tolist()
        spectra.append(SpectrumVector(ep, ef, np_, nf))
    base = rank_pixels(spectra, Measure.OCHIAI)
    values = np.array([measure_value(Measure.OCHIAI, s) for s in spectra])
    transformed = 3.0 * values + 1.0  # strictly increasing map
    order = np.argsort(-transformed, kind="stable")
    assert order.tolist() == base.pixels.tolist()


def test_ranking_validates_shape():
    with pytest.raises(InvalidArgumentError):
        PixelRanking(np.array([0, 1]), np.array([1.0]))


# --- artifacts ---


def test_ranking_csv_layout():
    spectra = [SpectrumVector(0, 5, 5, 0), SpectrumVector(5, 0, 0, 5)]
    r = rank_pixels(spectra, Measure.OCHIAI)
    text = ranking_csv(r, width=2, measure=Measure.OCHIAI)
    lines = text.strip().split("\n")
    assert lines[0] == "pixel,row,col,measure,value,rank"
    assert lines[1] == "0,0,0,ochiai,1.0,1"
    assert lines[2] == "1,0,1,ochiai,0.0,2"


def test_heatmap_minmax_scaling():
    r = PixelRanking(np.array([0, 1, 2, 3]), np.array([1.0, 0.5, 0.5, 0.0]))
    hm = ranking_heatmap(r, 2, 2)
    assert hm.data.tolist() == [255, 128, 128, 0]


def test_heatmap_constant_is_all_zero():
    r = PixelRanking(np.array([0, 1, 2, 3]), np.full(4, 0.7))
    hm = ranking_heatmap(r, 2, 2)
    assert hm.data.tolist() == [0, 0, 0, 0]


def test_heatmap_grid_expands_units():
    r = PixelRanking(np.array([0, 1, 2, 3]), np.array([1.0, 0.0, 0.0, 0.0]))
    hm = ranking_heatmap(r, 4, 4, CellGrid(4, 4, 2))
    grid = hm.data.reshape(4, 4)
    assert grid[0, 0] == grid[1, 1] == 255
    assert grid[2, 2] == 0
