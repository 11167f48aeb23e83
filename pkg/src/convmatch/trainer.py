"""SGD training with the three-stage curriculum, plus the finite-difference
gradient-check oracle.

Updates follow the two-rate rule: network parameters move by -eta * grad,
embedding rows by -(eta * 0.01) * grad, and only rows of words actually
present in a triple are touched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convnet import encode, encoder_backward
from .corpus import TrainingTriple, TriplePools, mix_sample
from .errors import KinkProximityError, NumericError, StagePoolError, ValidationError
from .matcher import MatcherParams, hinge_loss, match_backward, match_score_with_tape
from .model import TranslationMatcher


@dataclass
class TrainConfig:
    """Curriculum SGD settings. t=None means "size of the easy pool";
    t=0 gives a zero presentation budget (useful for dry runs)."""

    eta: float = 0.02
    embed_lr_factor: float = 0.01
    n: int = 3
    t: int | None = None
    seed: int = 0
    convergence_tol: float = 1e-4

    def __post_init__(self):
        if self.eta <= 0:
            raise ValidationError("eta must be > 0")
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if self.t is not None and self.t < 0:
            raise ValidationError("t must be >= 0")
        if self.convergence_tol < 0:
            raise ValidationError("convergence_tol must be >= 0")


@dataclass
class GradientSet:
    """Structure-matched accumulators: one (dW, dB) per conv layer, matcher
    grads, and sparse per-row embedding grads keyed by vocabulary index."""

    src_stack: list[tuple[np.ndarray, np.ndarray]]
    tgt_stack: list[tuple[np.ndarray, np.ndarray]]
    matcher: MatcherParams
    src_rows: dict[int, np.ndarray] = field(default_factory=dict)
    tgt_rows: dict[int, np.ndarray] = field(default_factory=dict)

    def check_finite(self):
        for name, arrays in self.named_arrays():
            for a in arrays if isinstance(arrays, (list, tuple)) else [arrays]:
                if not np.all(np.isfinite(a)):
                    raise NumericError(f"non-finite gradient in {name}")

    def named_arrays(self):
        items = []
        for i, (dw, db) in enumerate(self.src_stack):
            items.append((f"source_stack.layer{i + 1}", (dw, db)))
        for i, (dw, db) in enumerate(self.tgt_stack):
            items.append((f"target_stack.layer{i + 1}", (dw, db)))
        for name, g in self.matcher.arrays():
            items.append((f"matcher.{name}", (np.atleast_1d(g),)))
        for row, g in self.src_rows.items():
            items.append((f"source_embeddings.row{row}", (g,)))
        for row, g in self.tgt_rows.items():
            items.append((f"target_embeddings.row{row}", (g,)))
        return items


def _scatter_rows(rows: dict[int, np.ndarray], vocab, tokens, d_input: np.ndarray, dim: int):
    # gradient on padding columns and on the tag row never reaches embeddings
    for col, tok in enumerate(tokens):
        seg = d_input[:dim, col]
        row = vocab.index(tok)
        acc = rows.get(row)
        if acc is None:
            rows[row] = seg.copy()
        else:
            acc += seg


def triple_forward(model: TranslationMatcher, triple: TrainingTriple):
    """Scores and tapes for one triple; the source sentence is encoded once
    and shared by the positive and negative branches."""
    ex = triple.example
    f_mat = model.source_matrix(ex.sentence.src_tokens, ex.src_span)
    pos_mat = model.target_matrix(ex.positive_tgt)
    neg_mat = model.target_matrix(triple.negative_tgt)
    x, tape_f = encode(f_mat, model.src_stack)
    y_pos, tape_pos = encode(pos_mat, model.tgt_stack)
    y_neg, tape_neg = encode(neg_mat, model.tgt_stack)
    s_pos, mtape_pos = match_score_with_tape(x, y_pos, model.matcher)
    s_neg, mtape_neg = match_score_with_tape(x, y_neg, model.matcher)
    return s_pos, s_neg, (tape_f, tape_pos, tape_neg, mtape_pos, mtape_neg)


def triple_loss(model: TranslationMatcher, triple: TrainingTriple) -> float:
    s_pos, s_neg, _ = triple_forward(model, triple)
    return hinge_loss(s_pos, s_neg)


def triple_loss_and_grads(model: TranslationMatcher, triple: TrainingTriple):
    """Hinge loss and its exact gradients; grads is None when the margin is
    already satisfied (flat region, all gradients zero)."""
    s_pos, s_neg, tapes = triple_forward(model, triple)
    loss = hinge_loss(s_pos, s_neg)
    if loss <= 0.0:
        return loss, None
    tape_f, tape_pos, tape_neg, mtape_pos, mtape_neg = tapes
    g_pos, dx_pos, dy_pos = match_backward(model.matcher, mtape_pos, -1.0)
    g_neg, dx_neg, dy_neg = match_backward(model.matcher, mtape_neg, 1.0)
    matcher_grads = MatcherParams.zeros_like(model.matcher)
    for name, _ in matcher_grads.arrays():
        setattr(matcher_grads, name, getattr(g_pos, name) + getattr(g_neg, name))

    src_layer_grads, d_src = encoder_backward(tape_f, dx_pos + dx_neg)
    pos_layer_grads, d_pos = encoder_backward(tape_pos, dy_pos)
    neg_layer_grads, d_neg = encoder_backward(tape_neg, dy_neg)
    tgt_layer_grads = [(a + c, b + d) for (a, b), (c, d) in zip(pos_layer_grads, neg_layer_grads)]

    grads = GradientSet(src_stack=src_layer_grads, tgt_stack=tgt_layer_grads,
                        matcher=matcher_grads)
    ex = triple.example
    dim = model.config.embed_dim
    _scatter_rows(grads.src_rows, model.src_vocab, ex.sentence.src_tokens, d_src, dim)
    _scatter_rows(grads.tgt_rows, model.tgt_vocab, ex.positive_tgt, d_pos, dim)
    _scatter_rows(grads.tgt_rows, model.tgt_vocab, triple.negative_tgt, d_neg, dim)
    return loss, grads


def sgd_step(model: TranslationMatcher, grads: GradientSet, config: TrainConfig):
    """In-place SGD update. Network parameters use eta; embedding rows use
    eta * embed_lr_factor and only touched rows move."""
    grads.check_finite()
    eta = config.eta
    for layer, (dw, db) in zip(model.src_stack.layers, grads.src_stack):
        layer.weights -= eta * dw
        layer.bias -= eta * db
    for layer, (dw, db) in zip(model.tgt_stack.layers, grads.tgt_stack):
        layer.weights -= eta * dw
        layer.bias -= eta * db
    m = model.matcher
    gm = grads.matcher
    m.w_c -= eta * gm.w_c
    m.b_c -= eta * gm.b_c
    m.w_h -= eta * gm.w_h
    m.b_h -= eta * gm.b_h
    m.w_o -= eta * gm.w_o
    m.b_o -= eta * gm.b_o
    scale = config.eta * config.embed_lr_factor
    for row, g in grads.src_rows.items():
        model.src_embed.vectors[row] -= scale * g
    for row, g in grads.tgt_rows.items():
        model.tgt_embed.vectors[row] -= scale * g


@dataclass
class TraceEntry:
    stage: int
    step: int
    window: int
    mean_loss: float

    def format(self) -> str:
        return f"{self.stage} {self.step} {self.window} {repr(self.mean_loss)}"


@dataclass
class CurriculumResult:
    model: TranslationMatcher
    snapshots: tuple[TranslationMatcher, TranslationMatcher, TranslationMatcher]
    trace: list[TraceEntry]
    presentations: dict[str, int]


def run_curriculum(
    model: TranslationMatcher,
    pools: TriplePools,
    config: TrainConfig,
    step_hook=None,
) -> CurriculumResult:
    """Three-stage curriculum of Alg-style SGD.

    Stage 1 trains on easy triples for up to n*t presentations; stage 2 on a
    [0.5, 0.5] mixture of easy and medium; stage 3 runs steps s=1..n, each up
    to t presentations on the [1/(s+2), 1/(s+2), s/(s+2)] mixture. Every
    stage exits early when the mean loss of a t-sized window improves on the
    previous window by less than convergence_tol (relative). Snapshots taken
    after each stage are returned in order.

    step_hook(stage, step, presentation, loss, grads, model), when given, is
    called after the gradient computation and before the update.
    """
    if not pools.easy:
        raise StagePoolError("easy")
    rng = np.random.default_rng(config.seed)
    t = len(pools.easy) if config.t is None else config.t
    trace: list[TraceEntry] = []
    presentations = {"easy": 0, "medium": 0, "difficult": 0}

    def run_stage(stage: int, step: int, budget: int, draw, counter: str):
        window_losses: list[float] = []
        prev_mean = None
        window_no = 0
        for p in range(budget):
            triple = draw()
            loss, grads = triple_loss_and_grads(model, triple)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at stage {stage} presentation {p}")
            if step_hook is not None:
                step_hook(stage, step, p, loss, grads, model)
            if grads is not None:
                sgd_step(model, grads, config)
            presentations[counter] += 1
            window_losses.append(loss)
            if len(window_losses) == t:
                window_no += 1
                mean = sum(window_losses) / t
                trace.append(TraceEntry(stage, step, window_no, mean))
                window_losses.clear()
                if prev_mean is not None:
                    if prev_mean <= 0.0 or (prev_mean - mean) < config.convergence_tol * prev_mean:
                        return
                prev_mean = mean

    def draw_easy():
        return pools.easy[int(rng.integers(len(pools.easy)))]

    run_stage(1, 0, config.n * t, draw_easy, "easy")
    snap1 = model.copy()

    if t > 0:
        if not pools.medium:
            raise StagePoolError("medium")
        run_stage(2, 0, config.n * t,
                  lambda: mix_sample([pools.easy, pools.medium], 0, rng), "medium")
    snap2 = model.copy()

    if t > 0:
        if not pools.difficult:
            raise StagePoolError("difficult")
        for s in range(1, config.n + 1):
            run_stage(
                3, s, t,
                lambda s=s: mix_sample([pools.easy, pools.medium, pools.difficult], s, rng),
                "difficult",
            )
    snap3 = model.copy()

    return CurriculumResult(model=model, snapshots=(snap1, snap2, snap3),
                            trace=trace, presentations=presentations)


def write_trace(path, trace):
    """One line per window: ``stage step window mean_loss``."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in trace:
            fh.write(entry.format() + "\n")


# --- finite-difference gradient check -------------------------------------

KINK_TOL = 1e-6
SMALL_GRAD = 1e-6  # below this, analytic and numeric are both treated as zero


@dataclass
class GroupCheck:
    name: str
    max_error: float
    worst_index: tuple
    checked: int


@dataclass
class GradCheckReport:
    groups: list[GroupCheck]
    hinge_active: bool

    @property
    def max_error(self) -> float:
        return max((g.max_error for g in self.groups), default=0.0)

    def worst(self, top: int = 5) -> list[GroupCheck]:
        return sorted(self.groups, key=lambda g: -g.max_error)[:top]


def _assert_away_from_kinks(model: TranslationMatcher, triple: TrainingTriple):
    """Reject probe points where finite differences would cross a ReLU kink,
    a pooling tie, or the hinge boundary."""
    from .convnet import maxpool_forward

    s_pos, s_neg, tapes = triple_forward(model, triple)
    if abs(1.0 + s_neg - s_pos) < KINK_TOL:
        raise KinkProximityError("hinge margin at the kink")
    for tape in tapes[:3]:
        pooled = None
        for conv in tape.conv_tapes:
            pre = conv.layer.weights @ conv.windows + conv.layer.bias[:, None]
            gated_on = conv.gate > 0.0
            # gated-off columns are constant zero, so their ReLU kinks are inert
            if gated_on.any() and np.any(np.abs(pre[:, gated_on]) < KINK_TOL):
                raise KinkProximityError("conv pre-activation near ReLU kink")
            out = np.where(pre > 0.0, pre, 0.0) * conv.gate[None, :]
            pairs = out.shape[1] // 2
            a = out[:, 0:2 * pairs:2]
            b = out[:, 1:2 * pairs:2]
            tied = (np.abs(a - b) < KINK_TOL) & ((np.abs(a) > KINK_TOL) | (np.abs(b) > KINK_TOL))
            if tied.any():
                raise KinkProximityError("max-pool tie between non-zero values")
            pooled, _ = maxpool_forward(out)
        if pooled is not None and pooled.shape[1] > 1:
            top2 = np.sort(pooled, axis=1)[:, -2:]
            gap = top2[:, 1] - top2[:, 0]
            if np.any((gap < KINK_TOL) & (top2[:, 1] > KINK_TOL)):
                raise KinkProximityError("global max tie")
    for mtape in tapes[3:]:
        if np.any(np.abs(mtape.pre_c) < KINK_TOL) or np.any(np.abs(mtape.pre_h) < KINK_TOL):
            raise KinkProximityError("matcher pre-activation near ReLU kink")
    return 1.0 + s_neg - s_pos > 0.0


def _relative_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale <= SMALL_GRAD:
        return 0.0
    return abs(analytic - numeric) / scale


def grad_check(model: TranslationMatcher, triple: TrainingTriple, h: float = 1e-5) -> GradCheckReport:
    """Compare every analytic gradient with central finite differences.

    Covers all conv-layer weights and biases on both stacks, all matcher
    parameters, and the embedding entries of every word in the triple.
    Raises KinkProximityError when the probe point sits within 1e-6 of a
    ReLU kink, a pooling tie, or the hinge boundary.
    """
    if h <= 0:
        raise ValidationError("h must be > 0")
    active = _assert_away_from_kinks(model, triple)
    _, grads = triple_loss_and_grads(model, triple)

    def fd(setter_array, index) -> float:
        original = setter_array[index]
        setter_array[index] = original + h
        up = triple_loss(model, triple)
        setter_array[index] = original - h
        down = triple_loss(model, triple)
        setter_array[index] = original
        return (up - down) / (2.0 * h)

    groups: list[GroupCheck] = []

    def check_array(name: str, target: np.ndarray, analytic: np.ndarray):
        worst, worst_idx = 0.0, ()
        it = np.ndindex(*target.shape)
        for idx in it:
            err = _relative_error(float(analytic[idx]), fd(target, idx))
            if err > worst:
                worst, worst_idx = err, idx
        groups.append(GroupCheck(name, worst, worst_idx, int(np.prod(target.shape))))

    if grads is None:
        # inactive hinge: all analytic gradients are zero by definition
        zero_stack = lambda stack: [(np.zeros_like(l.weights), np.zeros_like(l.bias))
                                    for l in stack.layers]
        grads = GradientSet(zero_stack(model.src_stack), zero_stack(model.tgt_stack),
                            MatcherParams.zeros_like(model.matcher))

    for label, stack, stack_grads in (("source_stack", model.src_stack, grads.src_stack),
                                      ("target_stack", model.tgt_stack, grads.tgt_stack)):
        for i, (layer, (dw, db)) in enumerate(zip(stack.layers, stack_grads)):
            check_array(f"{label}.layer{i + 1}.weights", layer.weights, dw)
            check_array(f"{label}.layer{i + 1}.bias", layer.bias, db)

    m = model.matcher
    gm = grads.matcher
    check_array("matcher.w_c", m.w_c, gm.w_c)
    check_array("matcher.b_c", m.b_c, gm.b_c)
    check_array("matcher.w_h", m.w_h, gm.w_h)
    check_array("matcher.b_h", m.b_h, gm.b_h)
    check_array("matcher.w_o", m.w_o, gm.w_o)

    original = m.b_o
    m.b_o = original + h
    up = triple_loss(model, triple)
    m.b_o = original - h
    down = triple_loss(model, triple)
    m.b_o = original
    numeric = (up - down) / (2.0 * h)
    groups.append(GroupCheck("matcher.b_o", _relative_error(gm.b_o, numeric), (), 1))

    ex = triple.example
    touched_src = sorted({model.src_vocab.index(t) for t in ex.sentence.src_tokens})
    touched_tgt = sorted({model.tgt_vocab.index(t)
                          for t in ex.positive_tgt + triple.negative_tgt})
    for label, table, rows, row_grads in (
        ("source_embeddings", model.src_embed, touched_src, grads.src_rows),
        ("target_embeddings", model.tgt_embed, touched_tgt, grads.tgt_rows),
    ):
        worst, worst_idx = 0.0, ()
        checked = 0
        for row in rows:
            analytic_row = row_grads.get(row)
            for d in range(table.dim):
                analytic = 0.0 if analytic_row is None else float(analytic_row[d])
                err = _relative_error(analytic, fd(table.vectors, (row, d)))
                checked += 1
                if err > worst:
                    worst, worst_idx = err, (row, d)
        groups.append(GroupCheck(label, worst, worst_idx, checked))

    return GradCheckReport(groups=groups, hinge_active=active)
