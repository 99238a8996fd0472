"""Align recorded attention tensors with beam outcomes; aggregate to sentences.

The beam decoder walks parent links backward from the winning beam to
pick, for each generated token, the attention distribution recorded on
the ancestor that actually produced it. Token-level distributions are
then pooled per generated sentence (mean by default).

The binary tensor format is: magic bytes ``AWD1``, five little-endian
uint32 dims (beams, tokens, layers, heads, units), then float32
little-endian values in [beam][token][layer][head][unit] order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graphattn import AwdTensor

AWD_MAGIC = b"AWD1"
MAX_ELEMENTS = 1 << 31

SentenceSpans = list[tuple[int, int]]

AGGREGATION_MEAN = "mean"
AGGREGATION_MEDIAN = "median"


class AwdFormatError(ValueError):
    """Base class for malformed tensor files."""


class BadMagicError(AwdFormatError):
    pass


class DimOverflowError(AwdFormatError):
    pass


class TruncatedPayloadError(AwdFormatError):
    pass


class BeamTraceError(ValueError):
    """Raised when a beam trace is inconsistent with the tensor dims."""


@dataclass
class SentenceAwd:
    """Sentence-level attention, shape (sentences, layers, heads, units)."""

    values: np.ndarray  # float64

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4:
            raise ValueError(f"sentence tensor must have 4 dims, got {self.values.ndim}")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.values.shape


def write_awd(tensor: AwdTensor, path) -> None:
    values = np.ascontiguousarray(tensor.values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(AWD_MAGIC)
        fh.write(struct.pack("<5I", *values.shape))
        fh.write(values.tobytes())


def read_awd(path) -> AwdTensor:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != AWD_MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {AWD_MAGIC!r}")
    if len(data) < 24:
        raise TruncatedPayloadError(f"header truncated at {len(data)} bytes")
    dims = struct.unpack("<5I", data[4:24])
    total = 1
    for d in dims:
        total *= d
    if total > MAX_ELEMENTS:
        raise DimOverflowError(f"dims {dims} imply {total} elements, cap is {MAX_ELEMENTS}")
    payload = data[24:]
    if len(payload) != 4 * total:
        raise TruncatedPayloadError(
            f"payload has {len(payload)} bytes, dims {dims} require {4 * total}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return AwdTensor(values=values.copy())


def beam_decode_awd(
    awd: AwdTensor,
    beam_trace: Sequence[Sequence[int]],
    winning_beam: int,
    length: int | None = None,
) -> np.ndarray:
    """Token-aligned tensor (length, layers, heads, units) for the winner.

    ``beam_trace[t][b]`` is the beam slot whose recorded step-t
    distribution produced the token that beam ``b`` holds at position t.
    Walking those links backward from the winning beam yields the
    ancestor slot for every step; ``length`` truncates to the winning
    hypothesis when it finished before the last step.
    """
    bs, sl, dl, mh, L = awd.dims
    if len(beam_trace) != sl:
        raise BeamTraceError(f"trace has {len(beam_trace)} steps, tensor has {sl}")
    if not 0 <= winning_beam < bs:
        raise BeamTraceError(f"winning beam {winning_beam} outside [0, {bs})")
    n = sl if length is None else length
    if not 0 <= n <= sl:
        raise BeamTraceError(f"length {n} outside [0, {sl}]")
    aligned = np.empty((n, dl, mh, L), dtype=awd.values.dtype)
    slot = winning_beam
    for t in range(sl - 1, -1, -1):
        row = beam_trace[t]
        if len(row) != bs:
            raise BeamTraceError(f"trace row {t} has {len(row)} entries, expected {bs}")
        parent = row[slot]
        if not 0 <= parent < bs:
            raise BeamTraceError(f"trace step {t}: parent {parent} outside [0, {bs})")
        if t < n:
            aligned[t] = awd.values[parent, t]
        slot = parent
    return aligned


def split_summary_sentences(tokens: Sequence[int], eos_sentence_id: int) -> SentenceSpans:
    """Spans (start, end) per sentence; each span includes its end marker.

    Trailing tokens without a marker form a final span; an empty token
    sequence yields no spans.
    """
    spans: SentenceSpans = []
    start = 0
    for i, tok in enumerate(tokens):
        if tok == eos_sentence_id:
            spans.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        spans.append((start, len(tokens)))
    return spans


def aggregate_to_sentences(
    aligned: np.ndarray, spans: SentenceSpans, method: str = AGGREGATION_MEAN
) -> SentenceAwd:
    """Pool token-level distributions over sentence spans.

    The mean keeps each (layer, head) slice on the probability simplex.
    The median does not, so median slices are renormalized to sum 1
    afterward; a slice whose medians are all zero falls back to the
    span mean.
    """
    if method not in (AGGREGATION_MEAN, AGGREGATION_MEDIAN):
        raise ValueError(f"unknown aggregation {method!r}")
    aligned = np.asarray(aligned, dtype=np.float64)
    sl = aligned.shape[0]
    expected_start = 0
    for start, end in spans:
        if start != expected_start or end <= start:
            raise ValueError(f"spans must be contiguous and ordered, got {spans}")
        expected_start = end
    if expected_start != sl:
        raise ValueError(f"spans cover [0, {expected_start}), tensor has {sl} steps")

    out = np.empty((len(spans),) + aligned.shape[1:], dtype=np.float64)
    for s, (start, end) in enumerate(spans):
        window = aligned[start:end]
        if method == AGGREGATION_MEAN:
            out[s] = window.mean(axis=0)
        else:
            med = np.median(window, axis=0)
            sums = med.sum(axis=-1, keepdims=True)
            mean = window.mean(axis=0)
            out[s] = np.where(sums > 0, med / np.where(sums > 0, sums, 1.0), mean)
    return SentenceAwd(values=out)


# ---------------------------------------------------------------------------
# Summary token file
# ---------------------------------------------------------------------------

@dataclass
class SummaryRecord:
    set_id: str
    tokens: list[int]
    beam_trace: list[list[int]]
    winning_beam: int


def write_summary(record: SummaryRecord, path) -> None:
    obj = {
        "set_id": record.set_id,
        "tokens": record.tokens,
        "beam_trace": record.beam_trace,
        "winning_beam": record.winning_beam,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def read_summary(path) -> SummaryRecord:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        return SummaryRecord(
            set_id=obj["set_id"],
            tokens=[int(t) for t in obj["tokens"]],
            beam_trace=[[int(b) for b in row] for row in obj["beam_trace"]],
            winning_beam=int(obj["winning_beam"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed summary file: {exc}") from None
