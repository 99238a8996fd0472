"""Tests for the reference metric, Pearson machinery, and bias reports."""

import math

import numpy as np
import pytest

import attnorigin as ao
from attnorigin.awd import SentenceAwd
from attnorigin.origin import (
    MissingDocBoundariesError,
    PearsonAccumulator,
    SummaryAnalysis,
    doc_positions_from_boundaries,
)
from attnorigin.rouge import RougeScore, RougeTriple
from conftest import make_docset


def triple_of(f1):
    score = RougeScore(precision=f1, recall=f1, f1=f1)
    return RougeTriple(r1=score, r2=score, rl=score)


def metric_from_matrix(matrix):
    return ao.OriginMetric(scores=[[triple_of(v) for v in row] for row in matrix])


def make_analysis(set_id, awd_values, r_matrix, pad=None, boundaries=None):
    values = np.asarray(awd_values, dtype=np.float64)
    L = values.shape[-1]
    pad = np.zeros(L, dtype=bool) if pad is None else np.asarray(pad, dtype=bool)
    positions = doc_positions_from_boundaries(boundaries, L) if boundaries else None
    return SummaryAnalysis(
        set_id=set_id,
        sent_awd=SentenceAwd(values=values),
        origin=metric_from_matrix(r_matrix),
        unit_pad=pad,
        doc_positions=positions,
    )


# ---------------------------------------------------------------------------
# reference_metric
# ---------------------------------------------------------------------------

def para_input(paragraphs, L=4, T=16):
    return ao.unitize(make_docset("s", [paragraphs]), "paragraph", L, T)


def test_reference_identical_sentence_scores_one():
    inp = para_input(["the cat sat on the mat"])
    metric = ao.reference_metric([ao.tokenize("the cat sat on the mat")], inp)
    cell = metric.scores[0][0]
    assert cell.r1.f1 == cell.r2.f1 == cell.rl.f1 == 1.0


def test_reference_disjoint_paragraph_scores_zero():
    inp = para_input(["entirely different words here"])
    metric = ao.reference_metric([["zebra", "quilt"]], inp)
    cell = metric.scores[0][0]
    assert cell.r1.f1 == cell.r2.f1 == cell.rl.f1 == 0.0


def test_reference_two_sentence_paragraph_averages():
    # sentence 1 is disjoint (0.0); sentence 2 tokens are ["the", "cat"],
    # so the generated sentence scores P=2/3, R=1, F=0.8; the cell is 0.4
    inp = para_input(["Dog bone fetch. The cat"])
    metric = ao.reference_metric([["the", "cat", "sat"]], inp)
    assert abs(metric.scores[0][0].r1.f1 - 0.4) < 1e-12


def test_reference_pad_columns_zero():
    inp = para_input(["alpha beta"], L=3)
    metric = ao.reference_metric([["alpha"]], inp)
    assert metric.scores[0][1].r1.f1 == 0.0
    assert metric.scores[0][2].r1.f1 == 0.0


def test_reference_zero_sentences_empty_metric():
    inp = para_input(["alpha beta"])
    metric = ao.reference_metric([], inp)
    assert metric.num_sentences == 0


def test_reference_rejects_all_pad_input():
    docset = ao.MultiDocSet(set_id="s", documents=[ao.RawDocument("d", "", [])])
    inp = ao.unitize(docset, "paragraph", L=2, T=4)
    with pytest.raises(ValueError, match="non-pad"):
        ao.reference_metric([["x"]], inp)


# ---------------------------------------------------------------------------
# pearson
# ---------------------------------------------------------------------------

def oracle_pearson(x, y):
    """Direct covariance formula, written independently."""
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    if vx == 0 or vy == 0:
        return None
    return cov / math.sqrt(vx * vy)


def test_pearson_identity_exact():
    assert ao.pearson([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0


def test_pearson_negation_exact():
    assert ao.pearson([1.0, 2.0, 3.0], [-1.0, -2.0, -3.0]) == -1.0


def test_pearson_hand_value():
    assert ao.pearson([1, 2, 3, 4], [1, 3, 2, 4]) == 0.8


def test_pearson_constant_is_undefined():
    assert ao.pearson([2.0, 2.0, 2.0], [1.0, 2.0, 3.0]) is None
    assert ao.pearson([1.0, 2.0, 3.0], [5.0, 5.0, 5.0]) is None


def test_pearson_rejects_bad_inputs():
    with pytest.raises(ValueError):
        ao.pearson([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        ao.pearson([1.0], [1.0])


def test_pearson_affine_integer_grids_exact_sign():
    # power-of-two lengths and integer values keep every intermediate
    # representable, so affine relations give exactly +/-1
    rng = np.random.default_rng(9)
    for _ in range(100):
        n = int(rng.choice([4, 8, 16, 32]))
        x = rng.integers(0, 21, size=n).astype(np.float64)
        while np.all(x == x[0]):
            x = rng.integers(0, 21, size=n).astype(np.float64)
        a = float(rng.choice([-5, -3, -2, -1, 1, 2, 3, 5]))
        b = float(rng.integers(-10, 11))
        assert ao.pearson(x, a * x + b) == math.copysign(1.0, a)


def test_pearson_matches_oracle_random():
    rng = np.random.default_rng(10)
    for _ in range(200):
        n = int(rng.integers(2, 40))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        got = ao.pearson(x, y)
        expected = oracle_pearson(list(x), list(y))
        assert got is not None and expected is not None
        assert abs(got - expected) < 1e-9
        assert -1.0 <= got <= 1.0


def test_pearson_affine_invariance():
    rng = np.random.default_rng(11)
    x = rng.normal(size=20)
    y = rng.normal(size=20)
    base = ao.pearson(x, y)
    assert abs(ao.pearson(3.5 * x + 2.0, y) - base) < 1e-12
    assert abs(ao.pearson(-2.0 * x + 1.0, y) + base) < 1e-12


# ---------------------------------------------------------------------------
# PearsonAccumulator
# ---------------------------------------------------------------------------

def test_accumulator_matches_pearson():
    rng = np.random.default_rng(12)
    for _ in range(50):
        n = int(rng.integers(2, 50))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        acc = PearsonAccumulator()
        acc.update(x, y)
        assert abs(acc.result() - ao.pearson(x, y)) < 1e-12


def test_accumulator_merge_equals_single_pass():
    rng = np.random.default_rng(13)
    x = rng.normal(size=30)
    y = rng.normal(size=30)
    whole = PearsonAccumulator()
    whole.update(x, y)
    merged = PearsonAccumulator()
    for lo, hi in [(0, 7), (7, 8), (8, 20), (20, 30)]:
        part = PearsonAccumulator()
        part.update(x[lo:hi], y[lo:hi])
        merged.merge(part)
    assert merged.count == whole.count
    assert abs(merged.result() - whole.result()) < 1e-12


def test_accumulator_constant_input_undefined():
    acc = PearsonAccumulator()
    acc.update(np.full(5, 1.0 / 3.0), np.arange(5.0))
    acc.update(np.full(4, 1.0 / 3.0), np.arange(4.0))
    assert acc.m2x == 0.0
    assert acc.result() is None


def test_accumulator_too_few_samples_undefined():
    acc = PearsonAccumulator()
    acc.update([1.0], [2.0])
    assert acc.result() is None


# ---------------------------------------------------------------------------
# correlate_awd_origin
# ---------------------------------------------------------------------------

def test_correlate_proportional_attention_is_one():
    r = [[0.1, 0.4, 0.2], [0.6, 0.1, 0.3]]
    awd = 0.8 * np.asarray(r)[:, None, None, :] + 0.05
    analysis = make_analysis("s", awd, r)
    per_layer, per_head = ao.correlate_awd_origin([analysis], "r1")
    assert per_layer == [1.0]
    assert per_head == [[1.0]]


def test_correlate_uniform_attention_undefined():
    awd = np.full((2, 2, 2, 3), 1.0 / 3.0)
    r = [[0.1, 0.4, 0.2], [0.6, 0.1, 0.3]]
    analysis = make_analysis("s", awd, r)
    per_layer, per_head = ao.correlate_awd_origin([analysis], "r1")
    assert per_layer == [None, None]
    assert per_head == [[None, None], [None, None]]


def test_correlate_two_summary_fixture_matches_flatten_oracle():
    rng = np.random.default_rng(14)
    batch = []
    flat_x = {(layer, head): [] for layer in range(2) for head in range(3)}
    flat_mean = {layer: [] for layer in range(2)}
    flat_r = []
    for s, sentences in enumerate((2, 3)):
        awd = rng.random((sentences, 2, 3, 4))
        awd /= awd.sum(axis=-1, keepdims=True)
        r = rng.random((sentences, 4))
        pad = np.array([False, False, False, True])
        batch.append(make_analysis(f"s{s}", awd, r.tolist(), pad=pad))
        keep = np.flatnonzero(~pad)
        flat_r.extend(r[:, keep].ravel())
        for layer in range(2):
            head_mean = awd[:, layer].mean(axis=1)  # (sentences, units)
            flat_mean[layer].extend(head_mean[:, keep].ravel())
            for head in range(3):
                flat_x[(layer, head)].extend(awd[:, layer, head][:, keep].ravel())
    per_layer, per_head = ao.correlate_awd_origin(batch, "r1")
    for layer in range(2):
        expected = ao.pearson(flat_mean[layer], flat_r)
        assert abs(per_layer[layer] - expected) < 1e-9
        for head in range(3):
            expected = ao.pearson(flat_x[(layer, head)], flat_r)
            assert abs(per_head[layer][head] - expected) < 1e-9


def test_correlate_rejects_empty():
    with pytest.raises(ValueError):
        ao.correlate_awd_origin([], "r1")
    empty = make_analysis("s", np.empty((0, 1, 1, 2)), [])
    with pytest.raises(ValueError, match="usable"):
        ao.correlate_awd_origin([empty], "r1")


# ---------------------------------------------------------------------------
# head / layer correlation matrices
# ---------------------------------------------------------------------------

def test_head_matrix_identical_heads():
    rng = np.random.default_rng(15)
    base = rng.random((3, 1, 1, 4))
    awd = np.repeat(base, 2, axis=2)  # two identical heads
    analysis = make_analysis("s", awd, rng.random((3, 4)).tolist())
    matrix = ao.head_correlations([analysis], layer=0)
    assert matrix[0][1] == 1.0 and matrix[1][0] == 1.0
    assert matrix[0][0] == 1.0 and matrix[1][1] == 1.0


def test_head_matrix_matches_oracle():
    rng = np.random.default_rng(16)
    awd = rng.random((4, 1, 3, 5))
    analysis = make_analysis("s", awd, rng.random((4, 5)).tolist())
    matrix = ao.head_correlations([analysis], layer=0)
    for i in range(3):
        for j in range(3):
            expected = ao.pearson(awd[:, 0, i, :].ravel(), awd[:, 0, j, :].ravel())
            assert abs(matrix[i][j] - expected) < 1e-9
            assert matrix[i][j] == matrix[j][i]


def test_layer_matrix_symmetric_unit_diagonal():
    rng = np.random.default_rng(17)
    awd = rng.random((3, 4, 2, 5))
    analysis = make_analysis("s", awd, rng.random((3, 5)).tolist())
    matrix = ao.layer_correlations([analysis])
    for i in range(4):
        assert matrix[i][i] == 1.0
        for j in range(4):
            assert matrix[i][j] == matrix[j][i]
            assert matrix[i][j] is None or -1.0 <= matrix[i][j] <= 1.0


# ---------------------------------------------------------------------------
# argmax_paragraph
# ---------------------------------------------------------------------------

def test_argmax_one_hot():
    awd = np.zeros((2, 1, 2, 4))
    awd[0, :, :, 3] = 1.0
    awd[1, :, :, 1] = 1.0
    picks = ao.argmax_paragraph(SentenceAwd(values=awd), layer=0)
    assert picks.tolist() == [3, 1]


def test_argmax_uniform_ties_pick_lowest():
    awd = np.full((2, 1, 1, 4), 0.25)
    picks = ao.argmax_paragraph(SentenceAwd(values=awd), layer=0)
    assert picks.tolist() == [0, 0]


def test_argmax_invariant_under_monotone_transform():
    rng = np.random.default_rng(18)
    awd = rng.random((3, 2, 1, 5))
    sent = SentenceAwd(values=awd)
    base = ao.argmax_paragraph(sent, layer=1)
    transformed = SentenceAwd(values=np.exp(2.0 * awd) + 1.0)
    assert np.array_equal(base, ao.argmax_paragraph(transformed, layer=1))


# ---------------------------------------------------------------------------
# positional_bias
# ---------------------------------------------------------------------------

def one_hot_awd(picks, dl=2, mh=2, L=6):
    awd = np.zeros((len(picks), dl, mh, L))
    for s, p in enumerate(picks):
        awd[s, :, :, p] = 1.0
    return awd


BOUNDS = {0: 0, 1: 0, 2: 0, 3: 1, 4: 1, 5: 1}  # two docs, three units each


def test_posbias_first_paragraph_rows():
    batch = [
        make_analysis("s0", one_hot_awd([0, 3]), np.zeros((2, 6)).tolist(), boundaries=BOUNDS),
        make_analysis("s1", one_hot_awd([3, 0]), np.zeros((2, 6)).tolist(), boundaries=BOUNDS),
    ]
    heatmap = ao.positional_bias(batch, layer=0)
    assert heatmap.normalized[0].tolist() == [1.0, 1.0]
    assert heatmap.counts.sum() == 4


def test_posbias_single_sentence_single_cell():
    batch = [make_analysis("s", one_hot_awd([4]), np.zeros((1, 6)).tolist(), boundaries=BOUNDS)]
    heatmap = ao.positional_bias(batch, layer=1)
    assert heatmap.counts[1, 0] == 1  # unit 4 sits at position 1 of doc 1
    assert heatmap.normalized[1, 0] == 1.0
    assert heatmap.counts.sum() == 1


def test_posbias_hand_tally():
    batch = [
        make_analysis("a", one_hot_awd([0, 4, 5]), np.zeros((3, 6)).tolist(), boundaries=BOUNDS),
        make_analysis("b", one_hot_awd([3, 1]), np.zeros((2, 6)).tolist(), boundaries=BOUNDS),
        make_analysis("c", one_hot_awd([2]), np.zeros((1, 6)).tolist(), boundaries=BOUNDS),
    ]
    heatmap = ao.positional_bias(batch, layer=0)
    # sentence 0 picks: units 0, 3, 2 -> positions 0, 0, 2
    assert heatmap.counts[:, 0].tolist() == [2, 0, 1]
    # sentence 1 picks: units 4, 1 -> positions 1, 1
    assert heatmap.counts[:, 1].tolist() == [0, 2, 0]
    # sentence 2 picks: unit 5 -> position 2
    assert heatmap.counts[:, 2].tolist() == [0, 0, 1]


def test_posbias_columns_sum_to_one():
    rng = np.random.default_rng(19)
    batch = []
    for s in range(4):
        n = int(rng.integers(1, 4))
        picks = rng.integers(0, 6, size=n).tolist()
        batch.append(
            make_analysis(f"s{s}", one_hot_awd(picks), np.zeros((n, 6)).tolist(),
                          boundaries=BOUNDS)
        )
    heatmap = ao.positional_bias(batch, layer=1)
    sums = heatmap.normalized.sum(axis=0)
    for col, total in zip(sums, heatmap.counts.sum(axis=0)):
        if total:
            assert abs(col - 1.0) < 1e-9


def test_posbias_missing_boundaries_rejected():
    batch = [make_analysis("s", one_hot_awd([0]), np.zeros((1, 6)).tolist())]
    with pytest.raises(MissingDocBoundariesError):
        ao.positional_bias(batch, layer=0)


# ---------------------------------------------------------------------------
# build_report
# ---------------------------------------------------------------------------

def test_build_report_structure():
    rng = np.random.default_rng(20)
    awd = rng.random((3, 2, 2, 6))
    awd /= awd.sum(axis=-1, keepdims=True)
    analysis = make_analysis("s", awd, rng.random((3, 6)).tolist(), boundaries=BOUNDS)
    report = ao.build_report([analysis])
    assert [row["layer"] for row in report.per_layer] == [1, 2]
    assert len(report.per_head) == 4
    assert len(report.head_matrix) == 2
    assert len(report.layer_matrix) == 2
    assert report.sample_count == 3 * 6
    assert report.posbias is not None


def test_build_report_layer_filter_and_posbias_layer():
    rng = np.random.default_rng(21)
    awd = rng.random((2, 3, 2, 6))
    awd /= awd.sum(axis=-1, keepdims=True)
    analysis = make_analysis("s", awd, rng.random((2, 6)).tolist(), boundaries=BOUNDS)
    report = ao.build_report([analysis], layers=[0, 2], posbias_layer=0)
    assert [row["layer"] for row in report.per_layer] == [1, 3]
    assert [entry["layer"] for entry in report.head_matrix] == [1, 3]


def test_build_report_skips_posbias_without_boundaries():
    rng = np.random.default_rng(22)
    awd = rng.random((2, 1, 1, 4))
    awd /= awd.sum(axis=-1, keepdims=True)
    analysis = make_analysis("s", awd, rng.random((2, 4)).tolist())
    report = ao.build_report([analysis])
    assert report.posbias is None


def test_summary_correlations_per_set_diagnostics():
    rng = np.random.default_rng(24)
    batch = []
    for s in range(2):
        awd = rng.random((3, 2, 2, 4))
        awd /= awd.sum(axis=-1, keepdims=True)
        batch.append(make_analysis(f"s{s}", awd, rng.random((3, 4)).tolist()))
    rows = ao.summary_correlations(batch, "r1")
    assert len(rows) == 2 and len(rows[0]) == 2
    for s, analysis in enumerate(batch):
        expected, _ = ao.correlate_awd_origin([analysis], "r1")
        for layer in range(2):
            assert abs(rows[s][layer] - expected[layer]) < 1e-12


def test_build_report_includes_per_summary():
    rng = np.random.default_rng(25)
    awd = rng.random((3, 2, 2, 6))
    awd /= awd.sum(axis=-1, keepdims=True)
    analysis = make_analysis("only", awd, rng.random((3, 6)).tolist(), boundaries=BOUNDS)
    report = ao.build_report([analysis])
    assert len(report.per_summary) == 2  # one set x two layers
    assert report.per_summary[0]["set_id"] == "only"
    assert report.per_summary[0]["layer"] == 1


def test_build_report_variant_subset():
    rng = np.random.default_rng(23)
    awd = rng.random((2, 1, 1, 4))
    awd /= awd.sum(axis=-1, keepdims=True)
    analysis = make_analysis("s", awd, rng.random((2, 4)).tolist())
    report = ao.build_report([analysis], variants=("r2",))
    row = report.per_layer[0]
    assert row["r1"] is None and row["rl"] is None and row["r2"] is not None
