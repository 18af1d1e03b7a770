"""Dual linear models of the kernelized forward passes.

Each forward output at a position equals f(q) = W phi(q~) (+ bias) where
W = W_0 - grad, W_0 collects the task-side (instruction + lead) key/value
terms and grad collects the demonstration terms:

    W_0  = c V_T phi(K~_T)'          grad = -c V_D phi(K~_D)'

Descending the in-context loss from W_0 with one full pass of step size beta
lands exactly on W, so token generation is gradient descent of the dual.
The transformer, layer-stack and grouped-query variants differ only in what
multiplies each value vector and in an additive bias.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidDimension, InvalidIndex, InvalidParameter
from .kernelmap import FourierFeatureMap
from .sequence import SegmentedSequence, Tag
from .transformer import (
    AttentionParams,
    FfnParams,
    GqaConfig,
    GqaParams,
    LayerStack,
    _kernel_parts,
    freeze_sigma_diag,
    gqa_head_parts,
    stack_trace,
)


@dataclass(frozen=True)
class DualModel:
    """Constant part plus rank-1 demonstration contributions.

    ``labels`` column i and ``feats`` column i form contribution
    labels[:,i] (x) feats[:,i]; the normalization c (and, for the transformer
    variant, the frozen FFN map) is already folded into the labels.
    """

    w0: np.ndarray  # (d_out, D)
    labels: np.ndarray  # (d_out, n_demo)
    feats: np.ndarray  # (D, n_demo)
    phi_q: np.ndarray  # (D,) feature vector of the build query
    c: float
    beta: float = 1.0
    alpha: float = 0.0
    bias: np.ndarray | None = None

    @property
    def n_demo(self) -> int:
        return self.labels.shape[1]

    def contribution(self, i: int) -> np.ndarray:
        return np.outer(self.labels[:, i], self.feats[:, i])


def grad_full(dual: DualModel) -> np.ndarray:
    """beta * dL/dW at W_0: minus the contribution sum, plus the L2 term."""
    g = -(dual.labels @ dual.feats.T)
    if dual.alpha:
        g = g + dual.alpha * dual.w0
    return g


def dual_forward(dual: DualModel, phi_q: np.ndarray | None = None) -> np.ndarray:
    """f(q) = (W_0 - grad) phi(q~) + bias; exact for the build query."""
    fq = dual.phi_q if phi_q is None else phi_q
    if fq.shape[0] != dual.w0.shape[1]:
        raise InvalidDimension("query feature dimension mismatch")
    out = (dual.w0 - grad_full(dual)) @ fq
    if dual.bias is not None:
        out = out + dual.bias
    return out


def loss_icl(dual: DualModel, w: np.ndarray) -> float:
    """In-context loss whose one-step descent reproduces the forward output."""
    if w.shape != dual.w0.shape:
        raise InvalidDimension(f"W must be {dual.w0.shape}, got {w.shape}")
    val = -np.sum(dual.labels * (w @ dual.feats)) / dual.beta
    if dual.alpha:
        val += dual.alpha / (2.0 * dual.beta) * float(np.sum(w * w))
    return float(val)


# ---------------------------------------------------------------------------
# builders


def _demo_columns(seq: SegmentedSequence, query_pos: int, include_per: bool):
    task, demo = [], []
    for i in range(query_pos - 1):
        tag = seq.tags[i]
        if tag in (Tag.T_INSTR, Tag.T_LEAD):
            task.append(i)
        elif tag is Tag.D_CURR or (tag is Tag.D_PER and include_per):
            demo.append(i)
    return np.array(task, dtype=int), np.array(demo, dtype=int)


def build_dual_attention(
    params: AttentionParams,
    fmap: FourierFeatureMap,
    seq: SegmentedSequence,
    query_pos: int,
    beta: float = 1.0,
    alpha: float = 0.0,
    include_per: bool = False,
) -> DualModel:
    """Dual of plain kernel attention at query_pos."""
    values, feat_keys, feat_q, c = _kernel_parts(params, fmap, seq, query_pos)
    task, demo = _demo_columns(seq, query_pos, include_per)
    w0 = c * values[:, task] @ feat_keys[:, task].T
    return DualModel(
        w0=w0,
        labels=c * values[:, demo],
        feats=feat_keys[:, demo],
        phi_q=feat_q,
        c=c,
        beta=beta,
        alpha=alpha,
    )


def with_perturbation(
    dual: DualModel,
    params: AttentionParams,
    fmap: FourierFeatureMap,
    seq: SegmentedSequence,
    query_pos: int,
) -> DualModel:
    """Append contributions for the perturbation demonstration tokens."""
    per = [i for i in seq.idx_per if i < query_pos - 1]
    if not per:
        return dual
    _, demo = _demo_columns(seq, query_pos, include_per=False)
    if set(per) & set(demo.tolist()):
        raise InvalidIndex("perturbation indices overlap the demonstration set")
    values, feat_keys, _, _ = _kernel_parts(params, fmap, seq, query_pos)
    per = np.array(per, dtype=int)
    return replace(
        dual,
        labels=np.hstack([dual.labels, dual.c * values[:, per]]),
        feats=np.hstack([dual.feats, feat_keys[:, per]]),
    )


def with_value_regularization(dual: DualModel, alpha: float) -> DualModel:
    """L2 coefficient whose one-step descent scales the task-side values by 1-alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameter(f"alpha must lie in [0, 1], got {alpha}")
    return replace(dual, alpha=float(alpha))


def advance_start(
    params: AttentionParams,
    fmap: FourierFeatureMap,
    seq: SegmentedSequence,
    last_generated: np.ndarray,
    beta: float = 1.0,
) -> tuple[SegmentedSequence, DualModel]:
    """Append the generated token and rebuild the dual at the next position.

    The rebuild recomputes c, W_0 and the query features from scratch; the
    incremental update W_0' = W_0 + c v phi(k~) reuses a c that no longer
    matches the extended key set, so it is only an approximation.
    """
    extended = seq.append(last_generated, Tag.T_LEAD)
    return extended, build_dual_attention(params, fmap, extended, len(extended), beta=beta)


def build_dual_transformer(
    params: AttentionParams,
    ffn: FfnParams,
    fmap: FourierFeatureMap,
    seq: SegmentedSequence,
    query_pos: int,
    beta: float = 1.0,
) -> DualModel:
    """Dual of attention + FFN with the activation frozen at the reference pass."""
    values, feat_keys, feat_q, c = _kernel_parts(params, fmap, seq, query_pos)
    h_ref = c * values @ (feat_keys.T @ feat_q)
    sigma = freeze_sigma_diag(ffn, h_ref)
    w_hat = c * (ffn.w1 * sigma) @ ffn.w2  # c W_FFN1 Sigma W_FFN2
    bias = ffn.b1 + ffn.w1 @ (sigma * ffn.b2)
    task, demo = _demo_columns(seq, query_pos, include_per=False)
    return DualModel(
        w0=w_hat @ values[:, task] @ feat_keys[:, task].T,
        labels=w_hat @ values[:, demo],
        feats=feat_keys[:, demo],
        phi_q=feat_q,
        c=c,
        beta=beta,
        bias=bias,
    )


def build_dual_stack(
    stack: LayerStack,
    fmap: FourierFeatureMap,
    seq: SegmentedSequence,
    query_pos: int,
    beta: float = 1.0,
) -> list[DualModel]:
    """One dual per layer, frozen from a reference kernel-mode forward pass.

    Layer l's dual consumes the reference inputs x^(l) = W_conn x_hat^(l-1);
    the final dual's forward equals stack_forward.  The descent story is
    sequential: only after every layer completes its pass is the stacked
    output reproduced.
    """
    layer_inputs = stack_trace(stack, fmap, seq, query_pos)
    duals = []
    for (att, ffn), layer_seq in zip(stack.layers, layer_inputs):
        duals.append(build_dual_transformer(att, ffn, fmap, layer_seq, query_pos, beta))
    return duals


def build_dual_gqa(
    params: GqaParams,
    cfg: GqaConfig,
    fmap: FourierFeatureMap,
    seq: SegmentedSequence,
    query_pos: int,
    beta: float = 1.0,
) -> list[DualModel]:
    """Blockwise duals, one per query head; concatenated forwards equal GQA."""
    duals = []
    for s in range(cfg.heads):
        values, feat_keys, feat_q, c = gqa_head_parts(params, cfg, fmap, seq, query_pos, s)
        task, demo = _demo_columns(seq, query_pos, include_per=False)
        mix = cfg.mix(s)
        duals.append(
            DualModel(
                w0=c * mix @ values[:, task] @ feat_keys[:, task].T,
                labels=c * mix @ values[:, demo],
                feats=feat_keys[:, demo],
                phi_q=feat_q,
                c=c,
                beta=beta,
            )
        )
    return duals


def dual_gqa_forward(duals: list[DualModel]) -> np.ndarray:
    return np.concatenate([dual_forward(d) for d in duals])


# ---------------------------------------------------------------------------
# descent trajectories


@dataclass
class DescentState:
    """Single-owner mutable descent trajectory of W."""

    w: np.ndarray
    steps_applied: int = 0
    schedule: str = "per-token"  # "per-token" | "fractional:<S>"
    se_log: list[tuple[int, float]] = field(default_factory=list)


def start_descent(dual: DualModel, schedule: str = "per-token") -> DescentState:
    _pass_length(dual, schedule)  # validate early
    return DescentState(w=dual.w0.copy(), schedule=schedule)


def _pass_length(dual: DualModel, schedule: str) -> int:
    if schedule == "per-token":
        return max(dual.n_demo, 1)
    if schedule.startswith("fractional:"):
        s = int(schedule.split(":", 1)[1])
        if s < 1:
            raise InvalidParameter("fractional schedule needs S >= 1")
        return s * max(dual.n_demo, 1)
    raise InvalidParameter(f"unknown schedule {schedule!r}")


def descend(
    dual: DualModel,
    state: DescentState,
    n_steps: int,
    reference: np.ndarray | None = None,
) -> DescentState:
    """Apply n_steps of gradient descent, distributing -grad_full over a pass.

    Per-token applies contribution i at step i; fractional:S applies the
    uniform 1/(S n) share per step.  Either way a complete pass lands on
    W_0 - grad_full.  When a reference output is given, the squared error of
    the current dual prediction is logged after every step.
    """
    if n_steps < 0:
        raise InvalidParameter("n_steps must be >= 0")
    length = _pass_length(dual, state.schedule)
    reg_share = dual.alpha * dual.w0 / length if dual.alpha else None
    for _ in range(n_steps):
        if state.schedule == "per-token":
            if dual.n_demo:
                j = state.steps_applied % dual.n_demo
                state.w += dual.contribution(j)
        else:
            state.w += (dual.labels @ dual.feats.T) / length
        if reg_share is not None:
            state.w -= reg_share
        state.steps_applied += 1
        if reference is not None:
            pred = state.w @ dual.phi_q
            if dual.bias is not None:
                pred = pred + dual.bias
            state.se_log.append((state.steps_applied, float(np.sum((reference - pred) ** 2))))
    return state


# ---------------------------------------------------------------------------
# preliminary duality for a plain linear model


def linear_dual_equivalence(
    w0: np.ndarray, xs: np.ndarray, errors: np.ndarray, x_test: np.ndarray
):
    """Both sides of the linear-model identity W' x' = W_0 x' + LA(E, X, x').

    ``xs`` and ``errors`` hold one training pair per column.
    """
    if xs.shape[1] != errors.shape[1]:
        raise InvalidDimension("one error signal per training input required")
    w_prime = w0 + errors @ xs.T
    lhs = w_prime @ x_test
    rhs = w0 @ x_test + (errors @ (xs.T @ x_test))
    return lhs, rhs
