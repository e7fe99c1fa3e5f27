"""Amplitude encodings of data rows and of the parameter vector, and norm estimation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qpe
from .fixedpoint import FixedPoint
from .qsim import (
    H,
    X,
    Register,
    Ry,
    StateVector,
    _extract,
    apply_basis_oracle,
    apply_gate,
    apply_multiplexed_ry,
    circuit_unitary,
)

METHODS = ("angle_tree", "qram")


def padded_dim(n: int) -> int:
    """Next power of two, at least 2 (the index register needs one qubit)."""
    return max(2, 1 << (int(n) - 1).bit_length())


def pad(v, D: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    D = padded_dim(v.shape[-1]) if D is None else D
    if D < v.shape[-1] or D & (D - 1):
        raise ValueError(f"dimension {D} must be a power of two >= {v.shape[-1]}")
    if v.shape[-1] == D:
        return v
    width = [(0, 0)] * (v.ndim - 1) + [(0, D - v.shape[-1])]
    return np.pad(v, width)


@dataclass(frozen=True)
class EncodingConstants:
    """Scales that turn data and parameters into valid amplitudes.

    ``c2_prime`` is sqrt(D) c2 for the angle-tree encoding and c2 for the
    QRAM-style encoding; it is the factor multiplying w in the flag-11 branch.
    """

    c1: float
    c2: float
    D: int
    method: str = "angle_tree"
    c3: float | None = None
    codec: FixedPoint | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    @property
    def c2_prime(self) -> float:
        return math.sqrt(self.D) * self.c2 if self.method == "angle_tree" else self.c2

    @property
    def L(self) -> int:
        return self.D.bit_length() - 1

    def with_c3(self, c3: float) -> "EncodingConstants":
        return EncodingConstants(self.c1, self.c2, self.D, self.method, c3, self.codec)

    @classmethod
    def from_data(cls, X, w, method="angle_tree", c1=None, c2=None, c3=None, codec=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        w = np.asarray(w, dtype=float)
        D = padded_dim(max(X.shape[1], w.shape[0]))
        if c1 is None:
            m = np.abs(X).max()
            c1 = 1.0 / m if m > 0 else 1.0
        if c2 is None:
            nw = np.linalg.norm(w)
            c2 = 1.0 / nw if nw > 0 else 1.0
        out = cls(float(c1), float(c2), D, method, c3, codec)
        out.validate(X, w)
        return out

    def validate(self, X=None, w=None, F=None):
        if X is not None and np.any(np.abs(self.c1 * np.asarray(X)) > 1 + 1e-12):
            raise ValueError(f"c1={self.c1} gives data amplitudes above 1")
        if w is not None and np.any(np.abs(self.c2 * np.asarray(w)) > 1 + 1e-12):
            raise ValueError(f"c2={self.c2} gives parameter amplitudes above 1")
        if F is not None and self.c3 is not None and np.any(np.abs(self.c3 * np.asarray(F)) > 1 + 1e-12):
            raise ValueError(f"c3={self.c3} gives residual amplitudes above 1")


# ---------------------------------------------------------------------------
# Angle tree


@dataclass
class AngleTree:
    """Binary tree of partial norms; ``h[t]`` has 2^t entries, ``h[L]`` is w itself.

    ``angles[t - 1][j]`` is the rotation splitting node j of level t - 1 into
    its two children. Internal h values are nonnegative; leaf signs live in
    the last level's angles.
    """

    w: np.ndarray
    h: list[np.ndarray]
    angles: list[np.ndarray]
    original_length: int = field(default=0)

    @property
    def depth(self) -> int:
        return len(self.angles)

    @property
    def D(self) -> int:
        return self.w.shape[0]

    @property
    def norm(self) -> float:
        return float(self.h[0][0])

    def recombine(self) -> np.ndarray:
        """Rebuild w top-down from the root norm and the angles."""
        vals = np.array([self.norm])
        for ang in self.angles:
            nxt = np.empty(2 * vals.shape[0])
            nxt[0::2] = vals * np.cos(ang)
            nxt[1::2] = vals * np.sin(ang)
            vals = nxt
        return vals


def build_angle_tree(w, D: int | None = None) -> AngleTree:
    w0 = np.asarray(w, dtype=float)
    wp = pad(w0, D)
    if not np.any(wp):
        raise ValueError("all-zero parameter vector has no encoding")
    L = wp.shape[0].bit_length() - 1
    h = [None] * (L + 1)
    h[L] = wp.copy()
    angles = [None] * L
    for t in range(L, 0, -1):
        even, odd = h[t][0::2], h[t][1::2]
        h[t - 1] = np.hypot(even, odd)
        angles[t - 1] = np.arctan2(odd, even)
    return AngleTree(wp, h, angles, w0.shape[0])


def apply_angle_tree(state: StateVector, tree: AngleTree, index, controls=(), control_values=None):
    """U(theta_L)...U(theta_1) on ``index``; level t acts on the t-th most significant qubit."""
    qs = state.qubits(index)
    L = len(qs)
    if L != tree.depth:
        raise ValueError(f"tree depth {tree.depth} does not match {L}-qubit register")
    base_c = list(state.qubits(controls)) if controls else []
    base_v = list(control_values) if control_values is not None else [1] * len(base_c)
    for t in range(1, L + 1):
        target = qs[L - t]
        upper = [qs[L - 1 - r] for r in range(t - 1)]
        for j, ang in enumerate(tree.angles[t - 1]):
            bits = [(j >> (t - 2 - r)) & 1 for r in range(t - 1)]
            apply_gate(state, Ry(2 * ang), [target], base_c + upper, base_v + bits)
    return state


def prepare_parameter_state(tree: AngleTree) -> StateVector:
    """sum_j (w^j/||w||)|j> with a flag qubit in |1>."""
    state = StateVector.zeros({"index": tree.depth, "flag": 1})
    apply_angle_tree(state, tree, "index")
    apply_gate(state, X, "flag")
    return state


# ---------------------------------------------------------------------------
# Data states


def _amplitude_angles(values, scale):
    a = scale * np.asarray(values, dtype=float)
    if np.any(np.abs(a) > 1 + 1e-12):
        raise ValueError(f"scale {scale} gives amplitudes above 1")
    return 2 * np.arcsin(np.clip(a, -1, 1))


def apply_data_circuit(
    state: StateVector,
    x,
    c,
    index,
    flag,
    controls=(),
    control_values=None,
    codec: FixedPoint | None = None,
    work=None,
):
    """H on ``index`` then rotate ``flag`` to sqrt(1-(c x^j)^2)|0> + c x^j|1> per j.

    With ``codec`` and a ``work`` register the entries are looked up by an
    O_X oracle, the rotation reads the fixed-point value, and the lookup is
    undone so ``work`` returns to |0>. Without it the rotation is keyed on j
    directly (an infinitely precise lookup).
    """
    xs = np.asarray(x, dtype=float)
    cqs = list(state.qubits(controls)) if controls else []
    cvs = list(control_values) if control_values is not None else [1] * len(cqs)
    if cqs:
        sub = _ControlledView(state, cqs, cvs)
        sub.apply(lambda s: apply_data_circuit(s, xs, c, index, flag, codec=codec, work=work))
        return state
    apply_gate(state, H, index)
    if codec is None:
        apply_multiplexed_ry(state, index, state.qubits(flag)[0], _amplitude_angles(xs, c))
        return state
    if work is None:
        raise ValueError("codec lookup needs a work register")
    raws = [codec.encode(v) for v in xs]
    apply_basis_oracle(state, lambda j: raws[j], index, work)
    # rotation angles only for values the lookup can produce
    live = {r: float(_amplitude_angles([codec.decode(r)], c)[0]) for r in set(raws)}
    apply_multiplexed_ry(state, work, state.qubits(flag)[0], lambda raw: live.get(raw, 0.0))
    apply_basis_oracle(state, lambda j: raws[j], index, work)
    return state


class _ControlledView:
    """Apply a circuit only on the subspace where ``controls`` hold ``values``."""

    def __init__(self, state, controls, values):
        self.state, self.controls, self.values = state, controls, values

    def apply(self, circuit):
        s = self.state
        idx = np.arange(s.amplitudes.shape[0], dtype=np.int64)
        sel = np.ones(idx.shape[0], dtype=bool)
        for q, v in zip(self.controls, self.values):
            sel &= ((idx >> q) & 1) == v
        rest = [q for q in range(s.n_qubits) if q not in self.controls]
        sub_idx = idx[sel]
        order = np.argsort(_extract(sub_idx, rest))
        sub_idx = sub_idx[order]
        remap = {old: new for new, old in enumerate(rest)}
        regs = {}
        for name, reg in s.registers.items():
            if not set(reg.qubits) & set(self.controls):
                regs[name] = Register(remap[reg.start], reg.width)
        sub = StateVector(s.amplitudes[sub_idx], regs)
        circuit(sub)
        s.amplitudes[sub_idx] = sub.amplitudes
        s.report.update(sub.report)


def prepare_data_state(x, c1: float, codec: FixedPoint | None = None) -> StateVector:
    """(1/sqrt D) sum_j |j>(sqrt(1-(c1 x^j)^2)|0> + c1 x^j|1>) on registers (index, flag)."""
    x0 = np.asarray(x, dtype=float)
    xp = pad(x0)
    L = xp.shape[0].bit_length() - 1
    if codec is None:
        state = StateVector.zeros({"index": L, "flag": 1})
        apply_data_circuit(state, xp, c1, "index", "flag")
    else:
        state = StateVector.zeros({"index": L, "work": codec.q, "flag": 1})
        apply_data_circuit(state, xp, c1, "index", "flag", codec=codec, work="work")
        state = state.discard("work")
    if xp.shape[0] != x0.shape[0]:
        state.report["zero_padded"] = {"from": int(x0.shape[0]), "to": int(xp.shape[0])}
    return state


def prepare_parameter_state_qram(w, c2: float) -> StateVector:
    """The QRAM-style parameter encoding: the data-state circuit applied to w with scale c2."""
    return prepare_data_state(w, c2)


# ---------------------------------------------------------------------------
# Norm estimation


@dataclass(frozen=True)
class NormEstimate:
    value: float
    mode: str
    theta_tilde: int | None = None
    l: int | None = None
    bound: float = 0.0
    degenerate: bool = False


def qpe_norm(x, c1: float, epsilon_m: float = 1e-2, mode: str = "qpe") -> NormEstimate:
    """Estimate ||x|| from the flag-1 weight P1 = c1^2 ||x||^2 / D.

    ``qpe`` mode runs phase estimation of -A S_0 A^dagger S_1 with
    l = ceil(log2(1/epsilon_m)) ancillas; ``direct`` returns the exact norm.
    """
    xp = pad(x)
    if not np.any(xp):
        raise ValueError("norm estimation needs a non-zero vector")
    if mode == "direct":
        return NormEstimate(float(np.linalg.norm(xp)), "direct")
    if mode != "qpe":
        raise ValueError(f"unknown mode {mode!r}")
    D = xp.shape[0]
    L = D.bit_length() - 1
    l = max(1, math.ceil(math.log2(1 / epsilon_m)))
    layout = {"index": L, "flag": 1}
    A = circuit_unitary(lambda s: apply_data_circuit(s, xp, c1, "index", "flag"), layout)
    good = (np.arange(1 << (L + 1)) >> L) & 1
    Q = qpe.grover_operator(A, good)
    probs = qpe.qpe_probabilities(Q, A[:, 0], l)
    tt = qpe.decode_theta(probs, l)
    theta = qpe.theta_from_tilde(tt, l)
    scale = math.sqrt(D) / c1
    value = scale * math.sin(theta)
    bound = scale * math.pi / (1 << l)
    return NormEstimate(value, "qpe", tt, l, bound, degenerate=tt == 0)
