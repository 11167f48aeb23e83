"""Matching head: combines the two encoder outputs into a scalar score and
provides the max-margin ranking loss.

score(x, y) = w_o . relu(W_h . relu(w_c.[x:y] + b_c) + b_h) + b_o

The output is linear (unbounded) so margins in the hinge loss are
meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ShapeError, ValidationError


@dataclass
class MatcherParams:
    """Combiner layer (hidden x (J_src + J_tgt)) plus a one-hidden-layer MLP
    with a linear scalar output."""

    w_c: np.ndarray
    b_c: np.ndarray
    w_h: np.ndarray
    b_h: np.ndarray
    w_o: np.ndarray
    b_o: float

    def __post_init__(self):
        if self.w_c.shape[0] != self.b_c.shape[0]:
            raise ShapeError("w_c rows must match b_c length")
        if self.w_h.shape != (self.w_o.shape[0], self.w_c.shape[0]):
            raise ShapeError("w_h must be (hidden2, hidden)")
        if self.b_h.shape != self.w_o.shape:
            raise ShapeError("b_h must match w_o")

    @property
    def input_dim(self) -> int:
        return self.w_c.shape[1]

    @classmethod
    def random(cls, src_dim: int, tgt_dim: int, hidden: int, hidden2: int, rng,
               scale: float = 0.05) -> "MatcherParams":
        """Fan-in-scaled weights (sqrt(6/fan_in) bound), +-scale biases."""
        w = lambda rows, fan: rng.uniform(-1, 1, size=(rows, fan)) * np.sqrt(6.0 / fan)
        u = lambda *shape: rng.uniform(-scale, scale, size=shape)
        return cls(
            w_c=w(hidden, src_dim + tgt_dim), b_c=u(hidden),
            w_h=w(hidden2, hidden), b_h=u(hidden2),
            w_o=w(1, hidden2)[0], b_o=float(u(1)[0]),
        )

    @classmethod
    def zeros_like(cls, other: "MatcherParams") -> "MatcherParams":
        vals = {}
        for f in fields(cls):
            v = getattr(other, f.name)
            vals[f.name] = 0.0 if np.isscalar(v) else np.zeros_like(v)
        return cls(**vals)

    def copy(self) -> "MatcherParams":
        return MatcherParams(self.w_c.copy(), self.b_c.copy(), self.w_h.copy(),
                             self.b_h.copy(), self.w_o.copy(), self.b_o)

    def arrays(self):
        """(name, array-or-scalar) pairs in a fixed order."""
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


@dataclass
class MatchTape:
    z: np.ndarray
    pre_c: np.ndarray
    hc: np.ndarray
    pre_h: np.ndarray
    h2: np.ndarray
    src_dim: int


def match_score_with_tape(x: np.ndarray, y: np.ndarray, params: MatcherParams):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape[0] + y.shape[0] != params.input_dim:
        raise ShapeError(
            f"matcher expects concatenated length {params.input_dim}, "
            f"got {x.shape} + {y.shape}"
        )
    z = np.concatenate([x, y])
    pre_c = params.w_c @ z + params.b_c
    hc = np.where(pre_c > 0.0, pre_c, 0.0)
    pre_h = params.w_h @ hc + params.b_h
    h2 = np.where(pre_h > 0.0, pre_h, 0.0)
    s = float(params.w_o @ h2 + params.b_o)
    return s, MatchTape(z, pre_c, hc, pre_h, h2, x.shape[0])


def match_score(x: np.ndarray, y: np.ndarray, params: MatcherParams) -> float:
    """Matching score of a source feature vector against a target one."""
    s, _ = match_score_with_tape(x, y, params)
    return s


def match_backward(params: MatcherParams, tape: MatchTape, ds: float):
    """Gradients of ds * score w.r.t. params, x, and y."""
    g = MatcherParams.zeros_like(params)
    g.w_o = ds * tape.h2
    g.b_o = ds
    dh2 = ds * params.w_o
    dpre_h = dh2 * (tape.pre_h > 0.0)
    g.w_h = np.outer(dpre_h, tape.hc)
    g.b_h = dpre_h
    dhc = params.w_h.T @ dpre_h
    dpre_c = dhc * (tape.pre_c > 0.0)
    g.w_c = np.outer(dpre_c, tape.z)
    g.b_c = dpre_c
    dz = params.w_c.T @ dpre_c
    return g, dz[: tape.src_dim], dz[tape.src_dim :]


def hinge_loss(s_pos: float, s_neg: float) -> float:
    """max(0, 1 + s_neg - s_pos); zero exactly when the margin is >= 1."""
    if not (np.isfinite(s_pos) and np.isfinite(s_neg)):
        raise ValidationError("hinge loss needs finite scores")
    return max(0.0, 1.0 + s_neg - s_pos)


def hinge_active(s_pos: float, s_neg: float) -> bool:
    """Gradient flows iff 1 + s_neg - s_pos > 0 (strict)."""
    return 1.0 + s_neg - s_pos > 0.0
