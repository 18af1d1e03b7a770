"""Desk-scale decoder components.

Masked softmax attention with rotary positions, its random-feature
approximation, a frozen-activation FFN, multi-layer stacking through
connection matrices, grouped-query attention, and greedy decoding.

Conventions:
  * positions are 1-based; the query at position p attends to the p-1
    strictly preceding tokens (the query token itself is excluded),
  * keys are rotated, values are not: k_i = R_i W_k x_i, v_i = W_v x_i,
  * the 1/sqrt(d) score scaling is absorbed into the kernel by dividing
    keys and query by d^{1/4} before the feature map,
  * a position with no preceding tokens yields the zero vector (needed
    when propagating every position through a layer stack).
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyCandidateSet,
    InvalidDimension,
    InvalidIndex,
    InvalidParameter,
    NormalizationDegenerate,
)
from .kernelmap import FourierFeatureMap, phi, phi_matrix
from .sequence import SegmentedSequence, Tag

DEGENERATE_EPS = 1e-12


# ---------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class AttentionParams:
    w_q: np.ndarray  # (d_o, d_i)
    w_k: np.ndarray
    w_v: np.ndarray
    rope_base: float = 10000.0

    def __post_init__(self):
        if not (self.w_q.shape == self.w_k.shape == self.w_v.shape):
            raise InvalidDimension("q/k/v projections must share shape")
        if self.rope_base <= 1.0:
            raise InvalidParameter("rope_base must exceed 1")
        for m in (self.w_q, self.w_k, self.w_v):
            m.setflags(write=False)

    @property
    def d_o(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_i(self) -> int:
        return self.w_q.shape[1]


@dataclass(frozen=True)
class FfnParams:
    w1: np.ndarray  # (d_o, d_h)
    b1: np.ndarray  # (d_o,)
    w2: np.ndarray  # (d_h, d_o)
    b2: np.ndarray  # (d_h,)
    activation: str = "relu"  # "relu" | "identity"

    def __post_init__(self):
        d_o, d_h = self.w1.shape
        if self.w2.shape != (d_h, d_o) or self.b1.shape != (d_o,) or self.b2.shape != (d_h,):
            raise InvalidDimension("inconsistent FFN shapes")
        if self.activation not in ("relu", "identity"):
            raise InvalidParameter(f"unknown activation {self.activation!r}")

    @property
    def d_h(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True)
class LayerStack:
    """Ordered (attention, ffn) layers; conn[l] maps layer l-1 output to layer l input.

    conn has length L with conn[0] unused (None); None elsewhere means identity
    and requires d_o == d_i.
    """

    layers: tuple[tuple[AttentionParams, FfnParams], ...]
    conn: tuple[np.ndarray | None, ...] = ()

    def __post_init__(self):
        conn = self.conn if self.conn else tuple([None] * len(self.layers))
        if len(conn) != len(self.layers):
            raise InvalidDimension("need one connection slot per layer")
        object.__setattr__(self, "conn", conn)
        for l in range(1, len(self.layers)):
            prev_out = self.layers[l - 1][0].d_o
            cur_in = self.layers[l][0].d_i
            w = conn[l]
            if w is None:
                if prev_out != cur_in:
                    raise InvalidDimension(
                        f"layer {l}: identity connection needs d_o == d_i "
                        f"({prev_out} vs {cur_in})"
                    )
            elif w.shape != (cur_in, prev_out):
                raise InvalidDimension(f"layer {l}: connection must be ({cur_in},{prev_out})")


@dataclass(frozen=True)
class GqaConfig:
    """n*g query heads sharing g key/value groups over an output of dim d_o."""

    n: int
    g: int
    d_o: int
    w_concat: np.ndarray | None = None  # (n*g, head_dim, head_dim); None = identity

    def __post_init__(self):
        if self.n < 1 or self.g < 1:
            raise InvalidParameter("n and g must be positive")
        if self.d_o % (self.n * self.g) != 0:
            raise InvalidDimension(f"d_o={self.d_o} not divisible by n*g={self.n * self.g}")
        if self.w_concat is not None and self.w_concat.shape != (
            self.heads,
            self.head_dim,
            self.head_dim,
        ):
            raise InvalidDimension("w_concat must be (n*g, head_dim, head_dim)")

    @property
    def heads(self) -> int:
        return self.n * self.g

    @property
    def head_dim(self) -> int:
        return self.d_o // (self.n * self.g)

    def mix(self, s: int) -> np.ndarray:
        if self.w_concat is None:
            return np.eye(self.head_dim)
        return self.w_concat[s]

    def group_of(self, s: int) -> int:
        """Key/value group serving query head s (0-based): heads s in [i*g, (i+1)*g)."""
        return s // self.g


@dataclass(frozen=True)
class GqaParams:
    """Per-head query projections, per-group key/value projections."""

    w_q: np.ndarray  # (heads, head_dim, d_i)
    w_k: np.ndarray  # (g, head_dim, d_i)
    w_v: np.ndarray  # (g, head_dim, d_i)
    rope_base: float = 10000.0


@dataclass(frozen=True)
class Vocabulary:
    output_embeddings: np.ndarray  # (V, d_o), decode table
    input_embeddings: np.ndarray  # (V, d_i), feedback table for autoregression

    def __post_init__(self):
        if self.output_embeddings.shape[0] != self.input_embeddings.shape[0]:
            raise InvalidDimension("decode and feedback tables must share row count")
        if not (
            np.all(np.isfinite(self.output_embeddings))
            and np.all(np.isfinite(self.input_embeddings))
        ):
            raise InvalidParameter("vocabulary embeddings must be finite")

    @property
    def size(self) -> int:
        return self.output_embeddings.shape[0]


# ---------------------------------------------------------------------------
# rotary positions


def rope(position: int, d_o: int, base: float = 10000.0) -> np.ndarray:
    """Block-diagonal rotation matrix R_position; identity at position 0.

    Odd d_o leaves the final coordinate fixed.  Satisfies R_m' R_n = R_{n-m}.
    """
    if position < 0:
        raise InvalidParameter("position must be non-negative")
    if d_o < 1:
        raise InvalidDimension("d_o must be >= 1")
    out = np.eye(d_o)
    half = d_o // 2
    if half == 0:
        return out
    j = np.arange(half)
    angles = position * base ** (-2.0 * j / d_o)
    c, s = np.cos(angles), np.sin(angles)
    for b in range(half):
        out[2 * b, 2 * b] = c[b]
        out[2 * b, 2 * b + 1] = -s[b]
        out[2 * b + 1, 2 * b] = s[b]
        out[2 * b + 1, 2 * b + 1] = c[b]
    return out


# ---------------------------------------------------------------------------
# attention


def _check_pos(seq: SegmentedSequence, query_pos: int) -> None:
    if query_pos < 2 or query_pos > len(seq):
        raise InvalidIndex(f"query_pos {query_pos} out of range for length {len(seq)}")


def _qkv(params: AttentionParams, seq: SegmentedSequence, query_pos: int):
    """Rotated keys / plain values for positions < query_pos, rotated query at query_pos."""
    x = seq.tokens
    keys = np.empty((params.d_o, query_pos - 1))
    for i in range(query_pos - 1):
        keys[:, i] = rope(i + 1, params.d_o, params.rope_base) @ (params.w_k @ x[i])
    values = params.w_v @ x[: query_pos - 1].T
    q = rope(query_pos, params.d_o, params.rope_base) @ (params.w_q @ x[query_pos - 1])
    return keys, values, q


def exact_attention(
    params: AttentionParams, seq: SegmentedSequence, query_pos: int
) -> np.ndarray:
    """Masked softmax attention output at query_pos, numerically stable."""
    _check_pos(seq, query_pos)
    keys, values, q = _qkv(params, seq, query_pos)
    scores = keys.T @ q / np.sqrt(params.d_o)
    scores -= scores.max()
    w = np.exp(scores)
    w /= w.sum()
    return values @ w


def _kernel_parts(
    params: AttentionParams,
    fmap: FourierFeatureMap,
    seq: SegmentedSequence,
    query_pos: int,
):
    """Shared pieces of every kernelized computation at one position.

    Returns (values, feat_keys, feat_q, c) with keys and query pre-divided by
    d_o^{1/4} so that feature inner products target exp(k.q / sqrt(d_o)).
    """
    _check_pos(seq, query_pos)
    if fmap.input_dim != params.d_o:
        raise InvalidDimension("feature map input_dim must equal d_o")
    keys, values, q = _qkv(params, seq, query_pos)
    scale = params.d_o**0.25
    feat_keys = phi_matrix(fmap, keys / scale)
    feat_q = phi(fmap, q / scale)
    denom = float(np.sum(feat_keys.T @ feat_q))
    if abs(denom) < DEGENERATE_EPS:
        raise NormalizationDegenerate(f"normalization denominator {denom:.3e}")
    return values, feat_keys, feat_q, 1.0 / denom


def kernel_attention(
    params: AttentionParams,
    fmap: FourierFeatureMap,
    seq: SegmentedSequence,
    query_pos: int,
) -> np.ndarray:
    """Random-feature approximation h = c V phi(K)' phi(q)."""
    values, feat_keys, feat_q, c = _kernel_parts(params, fmap, seq, query_pos)
    return c * values @ (feat_keys.T @ feat_q)


def split_attention(
    params: AttentionParams,
    fmap: FourierFeatureMap,
    seq: SegmentedSequence,
    query_pos: int,
):
    """Kernel attention split into task-side and demonstration-side parts."""
    values, feat_keys, feat_q, c = _kernel_parts(params, fmap, seq, query_pos)
    weights = c * (feat_keys.T @ feat_q)
    d_o = params.d_o
    h_t = np.zeros(d_o)
    h_d = np.zeros(d_o)
    for i in range(query_pos - 1):
        part = weights[i] * values[:, i]
        if seq.tags[i] in (Tag.T_INSTR, Tag.T_LEAD):
            h_t += part
        else:
            h_d += part
    return h_t, h_d


def _attention_or_zero(
    params: AttentionParams,
    seq: SegmentedSequence,
    pos: int,
    fmap: FourierFeatureMap | None,
) -> np.ndarray:
    if pos < 2:
        return np.zeros(params.d_o)
    if fmap is None:
        return exact_attention(params, seq, pos)
    return kernel_attention(params, fmap, seq, pos)


# ---------------------------------------------------------------------------
# feed-forward and stacking


def freeze_sigma(ffn: FfnParams, h: np.ndarray) -> np.ndarray:
    """Diagonal matrix reproducing the activation's action at preactivation of h."""
    return np.diag(freeze_sigma_diag(ffn, h))


def freeze_sigma_diag(ffn: FfnParams, h: np.ndarray) -> np.ndarray:
    if ffn.activation == "identity":
        return np.ones(ffn.d_h)
    z = ffn.w2 @ h + ffn.b2
    return (z > 0).astype(float)


def layer_forward(
    params: AttentionParams,
    ffn: FfnParams,
    seq: SegmentedSequence,
    query_pos: int,
    fmap: FourierFeatureMap | None = None,
) -> np.ndarray:
    """Attention followed by the FFN; kernel mode when a feature map is given."""
    h = _attention_or_zero(params, seq, query_pos, fmap)
    z = ffn.w2 @ h + ffn.b2
    act = np.maximum(z, 0.0) if ffn.activation == "relu" else z
    return ffn.w1 @ act + ffn.b1


def stack_trace(
    stack: LayerStack,
    fmap: FourierFeatureMap | None,
    seq: SegmentedSequence,
    query_pos: int,
):
    """Propagate every position through every layer.

    Returns the list of per-layer input sequences (length L, element l is the
    sequence layer l consumes, truncated at query_pos).
    """
    _check_pos(seq, query_pos)
    layer_inputs = [seq.truncate(query_pos)]
    for l, (att, ffn) in enumerate(stack.layers):
        cur = layer_inputs[-1]
        if l == len(stack.layers) - 1:
            break
        outs = np.stack(
            [layer_forward(att, ffn, cur, p, fmap) for p in range(1, query_pos + 1)]
        )
        w = stack.conn[l + 1]
        nxt = outs if w is None else outs @ w.T
        layer_inputs.append(cur.with_tokens(nxt))
    return layer_inputs


def stack_forward(
    stack: LayerStack,
    fmap: FourierFeatureMap | None,
    seq: SegmentedSequence,
    query_pos: int,
) -> np.ndarray:
    """Output of the final layer at query_pos; L = 1 reduces to layer_forward."""
    layer_inputs = stack_trace(stack, fmap, seq, query_pos)
    att, ffn = stack.layers[-1]
    return layer_forward(att, ffn, layer_inputs[-1], query_pos, fmap)


# ---------------------------------------------------------------------------
# grouped-query attention


def gqa_head_parts(
    params: GqaParams,
    cfg: GqaConfig,
    fmap: FourierFeatureMap,
    seq: SegmentedSequence,
    query_pos: int,
    head: int,
):
    """Kernel pieces for one query head (values, feat_keys, feat_q, c)."""
    hd = cfg.head_dim
    if fmap.input_dim != hd:
        raise InvalidDimension("feature map input_dim must equal head_dim")
    grp = cfg.group_of(head)
    x = seq.tokens
    keys = np.empty((hd, query_pos - 1))
    for i in range(query_pos - 1):
        keys[:, i] = rope(i + 1, hd, params.rope_base) @ (params.w_k[grp] @ x[i])
    values = params.w_v[grp] @ x[: query_pos - 1].T
    q = rope(query_pos, hd, params.rope_base) @ (params.w_q[head] @ x[query_pos - 1])
    scale = hd**0.25
    feat_keys = phi_matrix(fmap, keys / scale)
    feat_q = phi(fmap, q / scale)
    denom = float(np.sum(feat_keys.T @ feat_q))
    if abs(denom) < DEGENERATE_EPS:
        raise NormalizationDegenerate(f"head {head}: denominator {denom:.3e}")
    return values, feat_keys, feat_q, 1.0 / denom


def gqa_attention(
    params: GqaParams,
    cfg: GqaConfig,
    fmap: FourierFeatureMap,
    seq: SegmentedSequence,
    query_pos: int,
) -> np.ndarray:
    """Concatenation of per-head block outputs W_concat^(s) c^(s) V phi(K)' phi(q)."""
    _check_pos(seq, query_pos)
    blocks = []
    for s in range(cfg.heads):
        values, feat_keys, feat_q, c = gqa_head_parts(params, cfg, fmap, seq, query_pos, s)
        blocks.append(cfg.mix(s) @ (c * values @ (feat_keys.T @ feat_q)))
    return np.concatenate(blocks)


# ---------------------------------------------------------------------------
# decoding and generation


def decode(vocab: Vocabulary, h: np.ndarray, mask=None) -> int:
    """Greedy argmax of dot(h, output embedding); ties go to the smallest id."""
    if mask is not None:
        ids = sorted(int(v) for v in mask)
        if not ids:
            raise EmptyCandidateSet("candidate mask is empty")
    else:
        ids = range(vocab.size)
    best_id, best_score = -1, -np.inf
    for v in ids:
        score = float(vocab.output_embeddings[v] @ h)
        if score > best_score:
            best_id, best_score = v, score
    if best_id < 0:
        raise EmptyCandidateSet("vocabulary is empty")
    return best_id


@dataclass(frozen=True)
class GenerationTrace:
    ids: tuple[int, ...]
    hiddens: tuple[np.ndarray, ...]
    positions: tuple[int, ...]
    final_seq: SegmentedSequence


def generate(
    forward,
    seq: SegmentedSequence,
    steps: int,
    vocab: Vocabulary,
    mask=None,
    exclude_emitted: bool = False,
) -> GenerationTrace:
    """Autoregressive greedy loop: forward at the last position, decode, append.

    ``forward(seq, pos) -> hidden`` abstracts over the attention variants.
    With ``exclude_emitted`` the output behaves like a ranked list of distinct
    items: an id is removed from the candidate set once emitted.
    """
    if steps < 1:
        raise InvalidParameter("steps must be >= 1")
    remaining = set(range(vocab.size)) if mask is None else {int(v) for v in mask}
    ids, hiddens, positions = [], [], []
    for _ in range(steps):
        pos = len(seq)
        h = forward(seq, pos)
        tok = decode(vocab, h, remaining)
        ids.append(tok)
        hiddens.append(h)
        positions.append(pos)
        if exclude_emitted:
            remaining.discard(tok)
            if not remaining:
                break
        seq = seq.append(vocab.input_embeddings[tok], Tag.T_LEAD)
    return GenerationTrace(tuple(ids), tuple(hiddens), tuple(positions), seq)
