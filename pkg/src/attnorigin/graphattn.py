"""Miniature graph-informed transformer decoder with attention recording.

The decoder attends over encoded textual units with logits shifted by a
penalty derived from the similarity graph and a predicted central unit.
Every decode step records the resulting attention distribution (one
probability vector over units per layer and head), and beam-search
generation collects those vectors into a dense tensor indexed
[beam][token][layer][head][unit] together with a parent-beam trace.

There is no training loop; weights are loaded from files or built
synthetically (random, or a "concentrator" construction whose attention
provably lands on one designated unit).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .simgraph import SimilarityGraph
from .textunits import UnitizedInput

PAD_TOKEN = "<pad>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
EOS_SENT_TOKEN = "<eoss>"
SPECIAL_TOKENS = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, EOS_SENT_TOKEN]

# Graph shift penalty applied to attention logits:
#   "sim-squared":  (1 - g**2) / (2 * sigma**2)
#   "diff-squared": ((1 - g)**2) / (2 * sigma**2)
# Both agree at g in {0, 1}.
SHIFT_SIM_SQUARED = "sim-squared"
SHIFT_DIFF_SQUARED = "diff-squared"
SHIFT_FORMS = (SHIFT_SIM_SQUARED, SHIFT_DIFF_SQUARED)


class VocabularyError(ValueError):
    """Raised when tokens or required special ids are missing from the vocab."""


@dataclass(frozen=True)
class ModelConfig:
    d_model: int
    num_layers: int = 8
    num_heads: int = 8
    sigma: float = 1.0
    vocab_size: int = 0
    num_units: int = 0
    max_len: int = 32
    shift_form: str = SHIFT_SIM_SQUARED

    def __post_init__(self):
        if self.d_model % self.num_heads != 0:
            raise ValueError(
                f"d_model={self.d_model} not divisible by num_heads={self.num_heads}"
            )
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.shift_form not in SHIFT_FORMS:
            raise ValueError(f"shift_form must be one of {SHIFT_FORMS}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.num_heads

    def to_json(self) -> dict:
        return {
            "d_model": self.d_model,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "sigma": self.sigma,
            "vocab_size": self.vocab_size,
            "num_units": self.num_units,
            "max_len": self.max_len,
            "shift_form": self.shift_form,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


@dataclass
class DecoderWeights:
    """All model parameters plus the vocabulary they were built for.

    Per layer and head: query/key projections of the global graph
    attention. Per layer: the central-unit feed-forward net, causal
    self-attention projections, the projection applied to concatenated
    head contexts, and a position-wise feed-forward. Sublayers use plain
    residual connections (no normalization), which keeps the stack an
    exact composition of the primitive operations.
    """

    config: ModelConfig
    vocab: list[str]
    embedding: np.ndarray  # (vocab_size, d_model)
    pos_encoding: np.ndarray  # (max(max_len + 1, num_units), d_model)
    w_q: np.ndarray  # (dl, mh, d_model, d_head)
    w_k: np.ndarray  # (dl, mh, d_model, d_head)
    w_g: np.ndarray  # (dl, mh * d_model, d_model)
    cp_w1: np.ndarray  # (dl, d_model, d_model)
    cp_b1: np.ndarray  # (dl, d_model)
    cp_w2: np.ndarray  # (dl, d_model)
    cp_b2: np.ndarray  # (dl,)
    sa_wq: np.ndarray  # (dl, d_model, d_model)
    sa_wk: np.ndarray  # (dl, d_model, d_model)
    sa_wv: np.ndarray  # (dl, d_model, d_model)
    sa_wo: np.ndarray  # (dl, d_model, d_model)
    ff_w1: np.ndarray  # (dl, d_model, d_model)
    ff_b1: np.ndarray  # (dl, d_model)
    ff_w2: np.ndarray  # (dl, d_model, d_model)
    ff_b2: np.ndarray  # (dl, d_model)
    w_out: np.ndarray  # (d_model, vocab_size)
    _token_to_id: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._token_to_id = {tok: i for i, tok in enumerate(self.vocab)}
        self.validate()

    def validate(self) -> None:
        cfg = self.config
        dl, mh, d, dh = cfg.num_layers, cfg.num_heads, cfg.d_model, cfg.d_head
        pos_rows = max(cfg.max_len + 1, cfg.num_units)
        expected = {
            "embedding": (cfg.vocab_size, d),
            "pos_encoding": (pos_rows, d),
            "w_q": (dl, mh, d, dh),
            "w_k": (dl, mh, d, dh),
            "w_g": (dl, mh * d, d),
            "cp_w1": (dl, d, d),
            "cp_b1": (dl, d),
            "cp_w2": (dl, d),
            "cp_b2": (dl,),
            "sa_wq": (dl, d, d),
            "sa_wk": (dl, d, d),
            "sa_wv": (dl, d, d),
            "sa_wo": (dl, d, d),
            "ff_w1": (dl, d, d),
            "ff_b1": (dl, d),
            "ff_w2": (dl, d, d),
            "ff_b2": (dl, d),
            "w_out": (d, cfg.vocab_size),
        }
        if len(self.vocab) != cfg.vocab_size:
            raise ValueError(f"vocab has {len(self.vocab)} entries, config says {cfg.vocab_size}")
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} shape {arr.shape} != expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    def token_id(self, token: str) -> int:
        try:
            return self._token_to_id[token]
        except KeyError:
            raise VocabularyError(f"token {token!r} not in model vocabulary") from None

    @property
    def pad_id(self) -> int:
        return self.token_id(PAD_TOKEN)

    @property
    def bos_id(self) -> int:
        return self.token_id(BOS_TOKEN)

    @property
    def eos_id(self) -> int:
        return self.token_id(EOS_TOKEN)

    @property
    def eos_sent_id(self) -> int:
        return self.token_id(EOS_SENT_TOKEN)


@dataclass
class EncodedUnits:
    """Encoded unit vectors, one d_model row per unit slot."""

    x: np.ndarray  # (L, d_model)


@dataclass
class AwdTensor:
    """Recorded attention distributions, float32.

    Index order is [beam][token][layer][head][unit]; every unit-axis
    slice is a probability vector (pad units carry zero mass).
    """

    values: np.ndarray  # (bs, sl, dl, mh, L)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 5:
            raise ValueError(f"awd tensor must have 5 dims, got {self.values.ndim}")

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        return self.values.shape


@dataclass
class GenerationResult:
    tokens: list[int]
    beam_trace: list[list[int]]  # (sl, bs) parent slot per step
    awd: AwdTensor
    winning_beam: int
    score: float


@dataclass(frozen=True)
class GenerationConfig:
    beam_size: int = 4
    max_len: int | None = None  # defaults to the model's max_len
    length_penalty: float = 0.6


@dataclass
class DecoderState:
    """Prefix token ids (BOS first) plus the fixed encoded input."""

    prefix_ids: list[int]
    encoded: EncodedUnits


# ---------------------------------------------------------------------------
# Numeric helpers
# ---------------------------------------------------------------------------

def _softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=axis, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    return shifted - np.log(np.sum(np.exp(shifted)))


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _graph_shift(g: np.ndarray, sigma: float, shift_form: str) -> np.ndarray:
    if shift_form == SHIFT_SIM_SQUARED:
        return (1.0 - g * g) / (2.0 * sigma * sigma)
    if shift_form == SHIFT_DIFF_SQUARED:
        d = 1.0 - g
        return (d * d) / (2.0 * sigma * sigma)
    raise ValueError(f"shift_form must be one of {SHIFT_FORMS}")


def _pad_units_of(graph: SimilarityGraph) -> np.ndarray:
    # Pad detection relies on the graph invariant: real units carry a
    # unit diagonal, pad rows are all zero including the diagonal.
    return np.diagonal(graph.weights) == 0.0


def sinusoidal_positions(rows: int, d_model: int) -> np.ndarray:
    """Standard fixed sine/cosine positional encodings."""
    pos = np.arange(rows, dtype=np.float64)[:, None]
    dim = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * np.floor(dim / 2.0)) / d_model)
    enc = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return enc


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def encode_units(
    inp: UnitizedInput, weights: DecoderWeights, graph: SimilarityGraph
) -> EncodedUnits:
    """One graph-informed self-attention pass over unit embeddings.

    Each unit starts as the mean of its token embeddings plus its
    positional encoding; attention logits between units are shifted by
    the graph penalty. Pad units encode to the zero vector.
    """
    cfg = weights.config
    L = inp.L
    if graph.size != L:
        raise ValueError(f"graph size {graph.size} != input unit count {L}")
    unit_pad = inp.unit_pad
    u = np.zeros((L, cfg.d_model), dtype=np.float64)
    for i, unit in enumerate(inp.units):
        if unit.is_pad:
            continue
        ids = [weights.token_id(t) for t in unit.tokens]
        u[i] = weights.embedding[ids].mean(axis=0) + weights.pos_encoding[i]
    if unit_pad.all():
        return EncodedUnits(x=np.zeros((L, cfg.d_model), dtype=np.float64))
    logits = (u @ u.T) / math.sqrt(cfg.d_model)
    logits = logits - _graph_shift(graph.weights, cfg.sigma, cfg.shift_form)
    logits[:, unit_pad] = -np.inf
    x = np.zeros((L, cfg.d_model), dtype=np.float64)
    real = ~unit_pad
    x[real] = _softmax(logits[real], axis=-1) @ u
    return EncodedUnits(x=x)


def unscaled_attention(
    y: np.ndarray, x: EncodedUnits | np.ndarray, w_q: np.ndarray, w_k: np.ndarray
) -> np.ndarray:
    """Scaled dot-product logits of one query state against all units."""
    if isinstance(x, EncodedUnits):
        x = x.x
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
        raise ValueError("non-finite attention input")
    d_head = w_q.shape[1]
    q = y @ w_q
    k = x @ w_k
    return (k @ q) / math.sqrt(d_head)


def central_paragraph(
    y: np.ndarray, ffn: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray], L: int
) -> int:
    """Predict the central unit index from one decoder state.

    A two-layer feed-forward net maps the state to a scalar; the index
    is sigmoid(scalar) * (L - 1) rounded half-up.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    w1, b1, w2, b2 = ffn
    hidden = np.tanh(np.asarray(y, dtype=np.float64) @ w1 + b1)
    raw = float(np.squeeze(hidden @ w2 + b2))
    s = int(np.floor(float(_sigmoid(raw)) * (L - 1) + 0.5))
    return min(max(s, 0), L - 1)


def graph_shifted_attention(
    e: np.ndarray,
    graph: SimilarityGraph,
    s: int,
    sigma: float,
    shift_form: str = SHIFT_SIM_SQUARED,
) -> np.ndarray:
    """Attention distribution from logits shifted by the graph penalty.

    Pad units (zero graph diagonal) are masked out before the softmax;
    raises if every unit is padded.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    e = np.asarray(e, dtype=np.float64)
    if not 0 <= s < graph.size:
        raise ValueError(f"central index {s} out of range [0, {graph.size})")
    unit_pad = _pad_units_of(graph)
    if unit_pad.all():
        raise ValueError("all units are padded; no attention targets")
    logits = e - _graph_shift(graph.weights[s], sigma, shift_form)
    logits = np.where(unit_pad, -np.inf, logits)
    return _softmax(logits)


def global_context(beta: np.ndarray, x: EncodedUnits | np.ndarray) -> np.ndarray:
    """Weighted sum of encoded unit vectors; no value projection."""
    if isinstance(x, EncodedUnits):
        x = x.x
    beta = np.asarray(beta, dtype=np.float64)
    if abs(float(beta.sum()) - 1.0) > 1e-6:
        raise ValueError(f"attention weights sum to {beta.sum()}, expected 1")
    return beta @ x


# ---------------------------------------------------------------------------
# Decoder stack
# ---------------------------------------------------------------------------

def start_state(
    inp: UnitizedInput, weights: DecoderWeights, graph: SimilarityGraph
) -> DecoderState:
    encoded = encode_units(inp, weights, graph)
    return DecoderState(prefix_ids=[weights.bos_id], encoded=encoded)


def decode_step(
    state: DecoderState, weights: DecoderWeights, graph: SimilarityGraph
) -> tuple[np.ndarray, np.ndarray]:
    """Run the decoder over the prefix; return next-token logits and betas.

    The betas are the graph-shifted attention distributions of the last
    prefix position, shape (num_layers, num_heads, L). Each layer runs
    causal self-attention, then global graph attention (heads
    concatenated and projected), then a position-wise feed-forward, all
    with residual connections.
    """
    cfg = weights.config
    p = len(state.prefix_ids)
    if p - 1 >= cfg.max_len:
        raise ValueError(f"decoded length {p - 1} reached max_len {cfg.max_len}")
    x = state.encoded.x
    L = x.shape[0]
    unit_pad = _pad_units_of(graph)
    if unit_pad.all():
        raise ValueError("all units are padded; no attention targets")
    shift_all = _graph_shift(graph.weights, cfg.sigma, cfg.shift_form)  # (L, L)

    h = weights.embedding[state.prefix_ids] + weights.pos_encoding[:p]  # (p, d)
    causal = np.triu(np.full((p, p), -np.inf), k=1)
    betas = np.empty((cfg.num_layers, cfg.num_heads, L), dtype=np.float64)

    for layer in range(cfg.num_layers):
        # Causal self-attention over the generated prefix.
        q = h @ weights.sa_wq[layer]
        k = h @ weights.sa_wk[layer]
        v = h @ weights.sa_wv[layer]
        attn = _softmax(q @ k.T / math.sqrt(cfg.d_model) + causal, axis=-1)
        h = h + (attn @ v) @ weights.sa_wo[layer]

        # Central unit per position, from the current states alone.
        hidden = np.tanh(h @ weights.cp_w1[layer] + weights.cp_b1[layer])
        raw = hidden @ weights.cp_w2[layer] + weights.cp_b2[layer]  # (p,)
        s_idx = np.floor(_sigmoid(raw) * (L - 1) + 0.5).astype(np.int64)
        s_idx = np.clip(s_idx, 0, L - 1)
        shift_rows = shift_all[s_idx]  # (p, L)

        # Global graph attention; each head attends the encoded units.
        contexts = []
        for head in range(cfg.num_heads):
            qg = h @ weights.w_q[layer, head]  # (p, d_head)
            kg = x @ weights.w_k[layer, head]  # (L, d_head)
            e = qg @ kg.T / math.sqrt(cfg.d_head)  # (p, L)
            logits = np.where(unit_pad, -np.inf, e - shift_rows)
            beta = _softmax(logits, axis=-1)
            betas[layer, head] = beta[-1]
            contexts.append(beta @ x)
        h = h + np.concatenate(contexts, axis=1) @ weights.w_g[layer]

        # Position-wise feed-forward.
        inner = np.maximum(h @ weights.ff_w1[layer] + weights.ff_b1[layer], 0.0)
        h = h + inner @ weights.ff_w2[layer] + weights.ff_b2[layer]

    logits_vocab = h[-1] @ weights.w_out
    return logits_vocab, betas


# ---------------------------------------------------------------------------
# Beam search
# ---------------------------------------------------------------------------

@dataclass
class _Hypothesis:
    ids: list[int]
    logprob: float
    finished: bool
    last_betas: np.ndarray | None  # (dl, mh, L) float32 recorded at its last step


def _normalized(logprob: float, length: int, alpha: float) -> float:
    return logprob / (max(length, 1) ** alpha)


def generate_with_beam(
    inp: UnitizedInput,
    weights: DecoderWeights,
    graph: SimilarityGraph,
    gen: GenerationConfig = GenerationConfig(),
) -> GenerationResult:
    """Beam search over decode_step, recording attention for every beam.

    Hypotheses are ranked by log-probability divided by length to the
    power of the length penalty. A finished hypothesis keeps its beam
    slot with a frozen score; its recorded tensor slices carry its last
    real distribution forward, which keeps the tensor rectangular (those
    slices fall outside the winner's length and are never consumed).
    Beam slots that exceed the number of distinct hypotheses replicate
    the slot-0 recording for the same reason.
    """
    cfg = weights.config
    if gen.beam_size < 1:
        raise ValueError(f"beam_size must be >= 1, got {gen.beam_size}")
    # Both end markers must exist before any decoding starts.
    eos = weights.eos_id
    _ = weights.eos_sent_id
    banned = {weights.pad_id, weights.bos_id}
    max_steps = cfg.max_len if gen.max_len is None else gen.max_len
    if not 1 <= max_steps <= cfg.max_len:
        raise ValueError(f"max_len {max_steps} outside [1, {cfg.max_len}]")

    encoded = encode_units(inp, weights, graph)
    bs = gen.beam_size
    dl, mh, L = cfg.num_layers, cfg.num_heads, inp.L
    beams = [_Hypothesis(ids=[], logprob=0.0, finished=False, last_betas=None)]
    records: list[np.ndarray] = []
    traces: list[list[int]] = []

    for step in range(max_steps):
        step_betas = np.zeros((bs, dl, mh, L), dtype=np.float32)
        # (score, parent_slot, token or -1 for a frozen hypothesis)
        candidates: list[tuple[float, int, int, float]] = []
        for slot, hyp in enumerate(beams):
            if hyp.finished:
                step_betas[slot] = hyp.last_betas
                score = _normalized(hyp.logprob, len(hyp.ids), gen.length_penalty)
                candidates.append((score, slot, -1, hyp.logprob))
                continue
            state = DecoderState(prefix_ids=[weights.bos_id] + hyp.ids, encoded=encoded)
            logits, betas = decode_step(state, weights, graph)
            betas32 = betas.astype(np.float32)
            step_betas[slot] = betas32
            hyp.last_betas = betas32
            logp = _log_softmax(logits)
            for tok in banned:
                logp[tok] = -np.inf
            order = np.argsort(-logp, kind="stable")[: min(bs, len(logp))]
            for tok in order:
                if not np.isfinite(logp[tok]):
                    continue
                total = hyp.logprob + float(logp[tok])
                score = _normalized(total, len(hyp.ids) + 1, gen.length_penalty)
                candidates.append((score, slot, int(tok), total))
        for slot in range(len(beams), bs):
            step_betas[slot] = step_betas[slot % len(beams)]
        records.append(step_betas)

        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        new_beams: list[_Hypothesis] = []
        trace_row: list[int] = []
        for score, parent, tok, total in candidates[:bs]:
            if tok < 0:
                new_beams.append(beams[parent])
            else:
                parent_hyp = beams[parent]
                new_beams.append(
                    _Hypothesis(
                        ids=parent_hyp.ids + [tok],
                        logprob=total,
                        finished=(tok == eos),
                        last_betas=parent_hyp.last_betas,
                    )
                )
            trace_row.append(parent)
        trace_row.extend([0] * (bs - len(trace_row)))
        traces.append(trace_row)
        beams = new_beams
        if all(h.finished for h in beams):
            break

    best_slot = 0
    best_score = -np.inf
    for slot, hyp in enumerate(beams):
        score = _normalized(hyp.logprob, len(hyp.ids), gen.length_penalty)
        if score > best_score:
            best_slot, best_score = slot, score
    winner = beams[best_slot]
    awd = AwdTensor(values=np.stack(records, axis=1))
    return GenerationResult(
        tokens=list(winner.ids),
        beam_trace=traces,
        awd=awd,
        winning_beam=best_slot,
        score=best_score,
    )


# ---------------------------------------------------------------------------
# Synthetic weights
# ---------------------------------------------------------------------------

def _default_vocab(vocab_size: int) -> list[str]:
    if vocab_size < len(SPECIAL_TOKENS):
        raise ValueError(f"vocab_size must be >= {len(SPECIAL_TOKENS)}")
    return SPECIAL_TOKENS + [f"tok{i:03d}" for i in range(vocab_size - len(SPECIAL_TOKENS))]


def build_vocab(tokens) -> list[str]:
    """Deterministic vocabulary: special tokens then sorted unique tokens."""
    return SPECIAL_TOKENS + sorted(set(tokens) - set(SPECIAL_TOKENS))


def make_synthetic_weights(
    seed: int, config: ModelConfig, vocab: list[str] | None = None
) -> DecoderWeights:
    """Seeded random weights; the same seed reproduces them bit for bit."""
    if vocab is None:
        vocab = _default_vocab(config.vocab_size)
    if len(vocab) != config.vocab_size:
        raise ValueError(f"vocab length {len(vocab)} != vocab_size {config.vocab_size}")
    rng = np.random.default_rng(seed)
    dl, mh, d, dh = config.num_layers, config.num_heads, config.d_model, config.d_head
    scale = 1.0 / math.sqrt(d)
    pos_rows = max(config.max_len + 1, config.num_units)

    def normal(*shape):
        return rng.normal(0.0, scale, size=shape)

    return DecoderWeights(
        config=config,
        vocab=list(vocab),
        embedding=rng.normal(0.0, 1.0, size=(config.vocab_size, d)) * scale,
        pos_encoding=sinusoidal_positions(pos_rows, d),
        w_q=normal(dl, mh, d, dh),
        w_k=normal(dl, mh, d, dh),
        w_g=normal(dl, mh * d, d),
        cp_w1=normal(dl, d, d),
        cp_b1=rng.normal(0.0, 0.1, size=(dl, d)),
        cp_w2=normal(dl, d),
        cp_b2=rng.normal(0.0, 0.1, size=(dl,)),
        sa_wq=normal(dl, d, d),
        sa_wk=normal(dl, d, d),
        sa_wv=normal(dl, d, d),
        sa_wo=normal(dl, d, d),
        ff_w1=normal(dl, d, d),
        ff_b1=rng.normal(0.0, 0.1, size=(dl, d)),
        ff_w2=normal(dl, d, d),
        ff_b2=rng.normal(0.0, 0.1, size=(dl, d)),
        w_out=normal(d, config.vocab_size),
    )


def make_concentrator_weights(
    config: ModelConfig,
    target: int,
    vocab: list[str] | None = None,
    token_script: list[int] | None = None,
    margin: float = 25.0,
) -> DecoderWeights:
    """Weights whose global attention provably concentrates on one unit.

    Construction: token embeddings are zero and position p encodes as
    c + r * b_p with c, b_0, b_1, ... orthogonal basis directions, so
    every decoder state keeps a fixed component along c. W_Q reads only
    that component (a state-independent query) and W_K reads only the
    b_target component of the encoded units, which the strongly
    self-attending encoder makes near-r for the target unit and near-0
    elsewhere. The resulting logit margin between the target and every
    other unit is at least ``margin`` minus a vanishing term, and
    dominates the largest possible graph shift 1 / (2 * sigma**2) for
    any graph when margin is large enough. All other sublayer outputs
    are zeroed so states pass through layers unchanged, making the
    concentration hold at every layer and step.

    ``token_script`` optionally pins the emitted token at each step
    (position-keyed output logits); it should end with the
    end-of-sequence id. Past the script, logits are uniform and the
    lowest allowed token id wins.
    """
    if vocab is None:
        vocab = _default_vocab(config.vocab_size)
    if len(vocab) != config.vocab_size:
        raise ValueError(f"vocab length {len(vocab)} != vocab_size {config.vocab_size}")
    if not 0 <= target < config.num_units:
        raise ValueError(f"target {target} outside [0, {config.num_units})")
    dl, mh, d, dh = config.num_layers, config.num_heads, config.d_model, config.d_head
    pos_rows = max(config.max_len + 1, config.num_units)
    if 1 + pos_rows > d:
        raise ValueError(
            f"d_model={d} too small for concentrator; needs >= {1 + pos_rows}"
        )
    if margin <= 0:
        raise ValueError("margin must be positive")

    gamma = 1.0
    r = math.sqrt(40.0 * math.sqrt(d))
    kappa = margin * math.sqrt(dh) / r

    pos_encoding = np.zeros((pos_rows, d), dtype=np.float64)
    pos_encoding[:, 0] = gamma
    for p in range(pos_rows):
        pos_encoding[p, 1 + p] = r

    w_q = np.zeros((dl, mh, d, dh), dtype=np.float64)
    w_k = np.zeros((dl, mh, d, dh), dtype=np.float64)
    w_q[:, :, 0, 0] = 1.0 / gamma
    w_k[:, :, 1 + target, 0] = kappa

    w_out = np.zeros((d, config.vocab_size), dtype=np.float64)
    if token_script is not None:
        if len(token_script) > config.max_len:
            raise ValueError(
                f"script length {len(token_script)} exceeds max_len {config.max_len}"
            )
        for step, tok in enumerate(token_script):
            w_out[1 + step, tok] = 25.0 / r

    zeros = np.zeros
    return DecoderWeights(
        config=config,
        vocab=list(vocab),
        embedding=zeros((config.vocab_size, d)),
        pos_encoding=pos_encoding,
        w_q=w_q,
        w_k=w_k,
        w_g=zeros((dl, mh * d, d)),
        cp_w1=zeros((dl, d, d)),
        cp_b1=zeros((dl, d)),
        cp_w2=zeros((dl, d)),
        cp_b2=zeros((dl,)),
        sa_wq=zeros((dl, d, d)),
        sa_wk=zeros((dl, d, d)),
        sa_wv=zeros((dl, d, d)),
        sa_wo=zeros((dl, d, d)),
        ff_w1=zeros((dl, d, d)),
        ff_b1=zeros((dl, d)),
        ff_w2=zeros((dl, d, d)),
        ff_b2=zeros((dl, d)),
        w_out=w_out,
    )


# ---------------------------------------------------------------------------
# Weights file
# ---------------------------------------------------------------------------

_PARAM_NAMES = [
    "embedding", "pos_encoding", "w_q", "w_k", "w_g",
    "cp_w1", "cp_b1", "cp_w2", "cp_b2",
    "sa_wq", "sa_wk", "sa_wv", "sa_wo",
    "ff_w1", "ff_b1", "ff_w2", "ff_b2", "w_out",
]


def write_weights(weights: DecoderWeights, path) -> None:
    obj = {
        "config": weights.config.to_json(),
        "vocab": weights.vocab,
        "params": {name: getattr(weights, name).tolist() for name in _PARAM_NAMES},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def read_weights(path) -> DecoderWeights:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        config = ModelConfig.from_json(obj["config"])
        params = {
            name: np.array(obj["params"][name], dtype=np.float64) for name in _PARAM_NAMES
        }
        vocab = list(obj["vocab"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed weights file: {exc}") from None
    return DecoderWeights(config=config, vocab=vocab, **params)
