"""Source-origin reference metric and its correlation with attention.

For every generated sentence and every input unit, the reference metric
holds the mean ROUGE-1/2/L of the sentence against the unit's own
sentences. Pooled Pearson coefficients relate those scores to the
sentence-aggregated attention weights per decoding layer and head;
head-to-head and layer-to-layer correlation matrices and a
positional-bias heatmap complete the report.

Batch statistics accumulate through mergeable running moments so that
summaries can be processed concurrently and merged deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .awd import SentenceAwd
from .rouge import RougeTriple, ZERO_SCORE, RougeScore, rouge_triple
from .textunits import UnitizedInput, split_sentences, tokenize

VARIANTS = ("r1", "r2", "rl")


class MissingDocBoundariesError(ValueError):
    """Raised when positional bias is requested without document boundaries."""


@dataclass
class OriginMetric:
    """ROUGE triples per (generated sentence, input unit) cell.

    Pad-unit columns hold zero scores.
    """

    scores: list[list[RougeTriple]]  # (S, L)

    @property
    def num_sentences(self) -> int:
        return len(self.scores)

    @property
    def num_units(self) -> int:
        return len(self.scores[0]) if self.scores else 0

    def f1_matrix(self, variant: str) -> np.ndarray:
        """F1 scores of one ROUGE variant as an (S, L) array."""
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        return np.array(
            [[getattr(cell, variant).f1 for cell in row] for row in self.scores],
            dtype=np.float64,
        )


def _mean_score(scores: list[RougeScore]) -> RougeScore:
    n = len(scores)
    return RougeScore(
        precision=sum(s.precision for s in scores) / n,
        recall=sum(s.recall for s in scores) / n,
        f1=sum(s.f1 for s in scores) / n,
    )


def reference_metric(
    summary_sentences: list[list[str]], inp: UnitizedInput
) -> OriginMetric:
    """Mean ROUGE of each generated sentence against each unit's sentences.

    Every non-pad unit is split into sentences; a cell averages the
    ROUGE scores of the generated sentence against all of them,
    componentwise per variant. Zero generated sentences give an empty
    metric.
    """
    if inp.num_real_units < 1:
        raise ValueError("input has no non-pad units")
    unit_sentences: list[list[list[str]]] = []
    for unit in inp.units:
        if unit.is_pad:
            unit_sentences.append([])
        else:
            unit_sentences.append([tokenize(s) for s in split_sentences(unit.original_text)])

    zero_triple = RougeTriple(ZERO_SCORE, ZERO_SCORE, ZERO_SCORE)
    rows: list[list[RougeTriple]] = []
    for sentence in summary_sentences:
        row: list[RougeTriple] = []
        for sents in unit_sentences:
            if not sents:
                row.append(zero_triple)
                continue
            triples = [rouge_triple(sentence, ref) for ref in sents]
            row.append(
                RougeTriple(
                    r1=_mean_score([t.r1 for t in triples]),
                    r2=_mean_score([t.r2 for t in triples]),
                    rl=_mean_score([t.rl for t in triples]),
                )
            )
        rows.append(row)
    return OriginMetric(scores=rows)


# ---------------------------------------------------------------------------
# Pearson correlation
# ---------------------------------------------------------------------------

def pearson(x, y) -> float | None:
    """Sample Pearson coefficient, or None when either side is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError(f"need at least 2 samples, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


@dataclass
class PearsonAccumulator:
    """Mergeable running moments for a streaming Pearson coefficient.

    Uses Welford-style centered moments, so constant inputs keep their
    second moment at exactly zero and merging partial accumulators in
    any grouping reproduces the single-pass result.
    """

    count: int = 0
    mean_x: float = 0.0
    mean_y: float = 0.0
    m2x: float = 0.0
    m2y: float = 0.0
    cxy: float = 0.0

    def update(self, x, y) -> None:
        x = np.asarray(x, dtype=np.float64).ravel()
        y = np.asarray(y, dtype=np.float64).ravel()
        if x.size != y.size:
            raise ValueError(f"length mismatch: {x.size} vs {y.size}")
        if x.size == 0:
            return
        # Constant inputs must yield an exactly-zero second moment so the
        # coefficient is flagged undefined; a computed mean of identical
        # values is not always exact, so pin it to the shared value.
        mean_x = float(x[0]) if np.all(x == x[0]) else float(x.mean())
        mean_y = float(y[0]) if np.all(y == y[0]) else float(y.mean())
        dx = x - mean_x
        dy = y - mean_y
        other = PearsonAccumulator(
            count=int(x.size),
            mean_x=mean_x,
            mean_y=mean_y,
            m2x=float(dx @ dx),
            m2y=float(dy @ dy),
            cxy=float(dx @ dy),
        )
        self.merge(other)

    def merge(self, other: "PearsonAccumulator") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count = other.count
            self.mean_x, self.mean_y = other.mean_x, other.mean_y
            self.m2x, self.m2y, self.cxy = other.m2x, other.m2y, other.cxy
            return
        n = self.count + other.count
        dx = other.mean_x - self.mean_x
        dy = other.mean_y - self.mean_y
        w = self.count * other.count / n
        self.m2x += other.m2x + dx * dx * w
        self.m2y += other.m2y + dy * dy * w
        self.cxy += other.cxy + dx * dy * w
        self.mean_x += dx * other.count / n
        self.mean_y += dy * other.count / n
        self.count = n

    def result(self) -> float | None:
        """Coefficient over everything seen; None when undefined."""
        if self.count < 2 or self.m2x == 0.0 or self.m2y == 0.0:
            return None
        r = self.cxy / math.sqrt(self.m2x * self.m2y)
        return min(1.0, max(-1.0, r))


# ---------------------------------------------------------------------------
# Batch correlation
# ---------------------------------------------------------------------------

@dataclass
class SummaryAnalysis:
    """Per-summary bundle: attention, reference metric, and unit layout."""

    set_id: str
    sent_awd: SentenceAwd
    origin: OriginMetric
    unit_pad: np.ndarray  # (L,) bool
    doc_positions: np.ndarray | None  # (L,) within-document unit position

    def __post_init__(self):
        s, dl, mh, L = self.sent_awd.dims
        if self.origin.num_sentences != s:
            raise ValueError(
                f"set {self.set_id!r}: {self.origin.num_sentences} metric rows "
                f"vs {s} attention sentences"
            )
        if s and self.origin.num_units != L:
            raise ValueError(
                f"set {self.set_id!r}: {self.origin.num_units} metric columns "
                f"vs {L} attention units"
            )
        if self.unit_pad.shape != (L,):
            raise ValueError(f"set {self.set_id!r}: unit_pad shape {self.unit_pad.shape}")


def doc_positions_from_boundaries(
    doc_boundaries: dict[int, int] | None, L: int
) -> np.ndarray | None:
    """Within-document position of each unit slot; None when unavailable."""
    if doc_boundaries is None:
        return None
    positions = np.full(L, -1, dtype=np.int64)
    first_of_doc: dict[int, int] = {}
    for idx in sorted(doc_boundaries):
        doc = doc_boundaries[idx]
        first_of_doc.setdefault(doc, idx)
        positions[idx] = idx - first_of_doc[doc]
    return positions


def _head_mean(analysis: SummaryAnalysis) -> np.ndarray:
    """(S, dl, L) attention with heads mean-aggregated."""
    return analysis.sent_awd.values.mean(axis=2)


def correlate_awd_origin(
    batch: list[SummaryAnalysis], variant: str
) -> tuple[list[float | None], list[list[float | None]]]:
    """Pooled Pearson between attention and the reference metric.

    Cells (sentence, non-pad unit) from every summary are flattened into
    paired vectors. Returns per-layer coefficients (heads averaged
    first) and per-(layer, head) coefficients.
    """
    if not batch:
        raise ValueError("empty batch")
    _, dl, mh, _ = batch[0].sent_awd.dims
    layer_acc = [PearsonAccumulator() for _ in range(dl)]
    head_acc = [[PearsonAccumulator() for _ in range(mh)] for _ in range(dl)]
    for analysis in batch:
        if analysis.sent_awd.dims[0] == 0:
            continue
        keep = ~analysis.unit_pad
        r = analysis.origin.f1_matrix(variant)[:, keep].ravel()
        mean_layers = _head_mean(analysis)
        for layer in range(dl):
            layer_acc[layer].update(mean_layers[:, layer, keep].ravel(), r)
            for head in range(mh):
                head_acc[layer][head].update(
                    analysis.sent_awd.values[:, layer, head, keep].ravel(), r
                )
    if layer_acc[0].count == 0:
        raise ValueError("no usable cells in batch")
    per_layer = [acc.result() for acc in layer_acc]
    per_head = [[acc.result() for acc in row] for row in head_acc]
    return per_layer, per_head


def summary_correlations(batch: list[SummaryAnalysis], variant: str) -> list[list[float | None]]:
    """Per-summary, per-layer coefficients (heads averaged); diagnostics
    alongside the pooled estimator."""
    if not batch:
        raise ValueError("empty batch")
    _, dl, _, _ = batch[0].sent_awd.dims
    rows: list[list[float | None]] = []
    for analysis in batch:
        if analysis.sent_awd.dims[0] == 0:
            rows.append([None] * dl)
            continue
        keep = ~analysis.unit_pad
        r = analysis.origin.f1_matrix(variant)[:, keep].ravel()
        mean_layers = _head_mean(analysis)
        row: list[float | None] = []
        for layer in range(dl):
            acc = PearsonAccumulator()
            acc.update(mean_layers[:, layer, keep].ravel(), r)
            row.append(acc.result())
        rows.append(row)
    return rows


def _pairwise_matrix(vectors: list[np.ndarray]) -> list[list[float | None]]:
    n = len(vectors)
    matrix: list[list[float | None]] = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            acc = PearsonAccumulator()
            acc.update(vectors[i], vectors[j])
            r = acc.result()
            matrix[i][j] = r
            matrix[j][i] = r
    return matrix


def head_correlations(batch: list[SummaryAnalysis], layer: int) -> list[list[float | None]]:
    """Pairwise Pearson between the heads of one layer, over batch cells."""
    if not batch:
        raise ValueError("empty batch")
    _, dl, mh, _ = batch[0].sent_awd.dims
    if not 0 <= layer < dl:
        raise ValueError(f"layer {layer} outside [0, {dl})")
    vectors = []
    for head in range(mh):
        parts = [
            a.sent_awd.values[:, layer, head, ~a.unit_pad].ravel()
            for a in batch
            if a.sent_awd.dims[0]
        ]
        vectors.append(np.concatenate(parts) if parts else np.empty(0))
    return _pairwise_matrix(vectors)


def layer_correlations(batch: list[SummaryAnalysis]) -> list[list[float | None]]:
    """Pairwise Pearson between head-averaged layers, over batch cells."""
    if not batch:
        raise ValueError("empty batch")
    _, dl, _, _ = batch[0].sent_awd.dims
    vectors = []
    for layer in range(dl):
        parts = [
            _head_mean(a)[:, layer, ~a.unit_pad].ravel() for a in batch if a.sent_awd.dims[0]
        ]
        vectors.append(np.concatenate(parts) if parts else np.empty(0))
    return _pairwise_matrix(vectors)


def argmax_paragraph(sent_awd: SentenceAwd, layer: int) -> np.ndarray:
    """Per-sentence index of the strongest head-averaged unit; ties pick
    the lowest index."""
    s, dl, _, _ = sent_awd.dims
    if not 0 <= layer < dl:
        raise ValueError(f"layer {layer} outside [0, {dl})")
    if s == 0:
        return np.empty(0, dtype=np.int64)
    return np.argmax(sent_awd.values[:, layer].mean(axis=1), axis=-1)


@dataclass
class PosBiasHeatmap:
    """Within-document positions of the most-attended unit per sentence.

    Rows index the unit position inside its document, columns index the
    generated-sentence position; ``normalized`` divides each column by
    its tally so columns with any mass sum to one.
    """

    counts: np.ndarray  # (rows, cols) int64
    normalized: np.ndarray  # (rows, cols) float64


def positional_bias(batch: list[SummaryAnalysis], layer: int) -> PosBiasHeatmap:
    """Tally the most-attended unit's within-document position per sentence."""
    if not batch:
        raise ValueError("empty batch")
    for analysis in batch:
        if analysis.doc_positions is None:
            raise MissingDocBoundariesError(
                f"set {analysis.set_id!r} lacks document boundaries; "
                "positional bias needs unit-to-document correspondence"
            )
    max_pos = 0
    max_sent = 0
    for analysis in batch:
        real_positions = analysis.doc_positions[~analysis.unit_pad]
        if real_positions.size:
            max_pos = max(max_pos, int(real_positions.max()))
        max_sent = max(max_sent, analysis.sent_awd.dims[0])
    counts = np.zeros((max_pos + 1, max_sent), dtype=np.int64)
    for analysis in batch:
        picks = argmax_paragraph(analysis.sent_awd, layer)
        for sent_idx, unit_idx in enumerate(picks):
            counts[analysis.doc_positions[unit_idx], sent_idx] += 1
    totals = counts.sum(axis=0, keepdims=True)
    normalized = counts / np.where(totals > 0, totals, 1)
    return PosBiasHeatmap(counts=counts, normalized=normalized)


# ---------------------------------------------------------------------------
# Correlation report
# ---------------------------------------------------------------------------

@dataclass
class CorrelationReport:
    """Everything the analyze step reports; layers are 1-based here."""

    per_layer: list[dict]  # {"layer", "r1", "r2", "rl"}
    per_head: list[dict]  # {"layer", "head", "r1", "r2", "rl"}
    head_matrix: list[dict]  # {"layer", "matrix"}
    layer_matrix: list[list[float | None]]
    sample_count: int
    posbias: PosBiasHeatmap | None = None
    per_summary: list[dict] = field(default_factory=list)  # {"set_id", "layer", variants...}


def build_report(
    batch: list[SummaryAnalysis],
    variants: tuple[str, ...] = VARIANTS,
    layers: list[int] | None = None,
    posbias_layer: int | None = None,
    include_posbias: bool = True,
) -> CorrelationReport:
    """Assemble the full correlation report for a batch of summaries.

    ``layers`` filters (0-based) which layers appear; ``posbias_layer``
    picks the layer for the heatmap (default: the last selected layer).
    The heatmap is skipped when any summary lacks document boundaries
    or ``include_posbias`` is false.
    """
    if not batch:
        raise ValueError("empty batch")
    _, dl, mh, _ = batch[0].sent_awd.dims
    selected = list(range(dl)) if layers is None else sorted(set(layers))
    for layer in selected:
        if not 0 <= layer < dl:
            raise ValueError(f"layer {layer} outside [0, {dl})")

    by_variant = {}
    diag_variant = {}
    for variant in VARIANTS:
        if variant in variants:
            by_variant[variant] = correlate_awd_origin(batch, variant)
            diag_variant[variant] = summary_correlations(batch, variant)
        else:
            by_variant[variant] = ([None] * dl, [[None] * mh for _ in range(dl)])
            diag_variant[variant] = [[None] * dl for _ in batch]

    per_layer = [
        {
            "layer": layer + 1,
            **{v: by_variant[v][0][layer] for v in VARIANTS},
        }
        for layer in selected
    ]
    per_head = [
        {
            "layer": layer + 1,
            "head": head,
            **{v: by_variant[v][1][layer][head] for v in VARIANTS},
        }
        for layer in selected
        for head in range(mh)
    ]
    head_matrix = [
        {"layer": layer + 1, "matrix": head_correlations(batch, layer)} for layer in selected
    ]
    per_summary = [
        {
            "set_id": analysis.set_id,
            "layer": layer + 1,
            **{v: diag_variant[v][s][layer] for v in VARIANTS},
        }
        for s, analysis in enumerate(batch)
        for layer in selected
    ]

    sample_count = 0
    for analysis in batch:
        if analysis.sent_awd.dims[0]:
            sample_count += analysis.sent_awd.dims[0] * int((~analysis.unit_pad).sum())

    posbias = None
    if include_posbias and all(a.doc_positions is not None for a in batch):
        target = posbias_layer if posbias_layer is not None else selected[-1]
        posbias = positional_bias(batch, target)

    return CorrelationReport(
        per_layer=per_layer,
        per_head=per_head,
        head_matrix=head_matrix,
        layer_matrix=layer_correlations(batch),
        sample_count=sample_count,
        posbias=posbias,
        per_summary=per_summary,
    )
