"""Quantum gradient descent: overlap angle, phase estimation, F register, overlap readout.

Register conventions used throughout:

* |Psi_i>: (index, flag4, flag5). The flag-11 branch carries
  (c1 x_i - c2' w) / (2 sqrt D), so its weight is sin^2 theta_i.
* |psi>:   (index, phi, flag) with phi = c3 F_i|0> + sqrt(1 - (c3 F_i)^2)|1>, flag = |1>.
* |chi^j>: (index, zero, rot) with rot = sqrt(1 - (c1 x_i^j)^2)|0> + c1 x_i^j|1>.

With this pairing <psi|chi^j> = (c1 c3 / M) sum_i F_i x_i^j, which is the
gradient component up to the c1 c3 scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qpe
from .fixedpoint import FixedPoint
from .qsim import (
    H,
    X,
    Histogram,
    StateVector,
    apply_basis_oracle,
    apply_gate,
    apply_multiplexed_ry,
    circuit_unitary,
    sample_measurement,
)
from .qft_arith import apply_F_oracle
from .state_prep import (
    AngleTree,
    EncodingConstants,
    apply_angle_tree,
    apply_data_circuit,
    build_angle_tree,
    pad,
    qpe_norm,
)

# small-angle stand-in for sin^2(k pi / 16) used by the four-qubit readout
APPROX_DENOMINATOR = 26


# ---------------------------------------------------------------------------
# B1: the overlap state


def _as_tree(w, D) -> AngleTree:
    return w if isinstance(w, AngleTree) else build_angle_tree(w, D)


def build_Psi(x, w, constants: EncodingConstants) -> StateVector:
    """|Psi> = 1/2[(|phi(x)> + |phi(w)>)|0> + (|phi(x)> - |phi(w)>)|1>]."""
    D = constants.D
    xp = np.asarray(x, dtype=float)
    if xp.shape[0] > D:
        raise ValueError(f"data row of length {xp.shape[0]} exceeds encoding dimension {D}")
    xp = pad(xp, D)
    if isinstance(w, AngleTree) and w.D != D:
        raise ValueError(f"angle tree dimension {w.D} does not match {D}")
    state = StateVector.zeros({"index": constants.L, "flag4": 1, "flag5": 1})
    _psi_circuit(state, xp, w, constants)
    return state


def _psi_circuit(state, xp, w, constants):
    f5 = state.qubits("flag5")
    apply_gate(state, H, "flag5")
    apply_data_circuit(state, xp, constants.c1, "index", "flag4", controls=f5, control_values=[0])
    if constants.method == "angle_tree":
        tree = _as_tree(w, constants.D)
        apply_angle_tree(state, tree, "index", controls=f5, control_values=[1])
        apply_gate(state, X, "flag4", controls=f5)
    else:
        wv = pad(w.w if isinstance(w, AngleTree) else w, constants.D)
        apply_data_circuit(state, wv, constants.c2, "index", "flag4", controls=f5, control_values=[1])
    apply_gate(state, H, "flag5")
    return state


def sin2_theta(x, w, constants: EncodingConstants) -> float:
    """Closed form of the flag-11 weight."""
    xp, wp = pad(x, constants.D), pad(w, constants.D)
    c1, c2p = constants.c1, constants.c2_prime
    num = c1**2 * xp @ xp + c2p**2 * wp @ wp - 2 * c1 * c2p * (xp @ wp)
    return float(num / (4 * constants.D))


@dataclass
class GroverOperator:
    """Q = -A S_00 A^dagger S_11 for the overlap-state preparation A."""

    prep: np.ndarray
    good: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return qpe.grover_operator(self.prep, self.good)

    @property
    def initial_state(self) -> np.ndarray:
        return self.prep[:, 0]

    @property
    def theta(self) -> float:
        w = float(np.sum(np.abs(self.initial_state[self.good.astype(bool)]) ** 2))
        return math.asin(math.sqrt(min(max(w, 0.0), 1.0)))


def grover_operator(x, w, constants: EncodingConstants) -> GroverOperator:
    xp = pad(x, constants.D)
    layout = {"index": constants.L, "flag4": 1, "flag5": 1}
    A = circuit_unitary(lambda s: _psi_circuit(s, xp, w, constants), layout)
    idx = np.arange(A.shape[0])
    L = constants.L
    good = ((idx >> L) & 1) & ((idx >> (L + 1)) & 1)
    return GroverOperator(A, good)


def estimate_theta(op: GroverOperator, l: int, shots: int = 1024, seed=None) -> Histogram:
    """Phase-estimation histogram over the l-bit outcome register."""
    state = qpe.phase_estimation(op.matrix, op.initial_state, l)
    return sample_measurement(state, "phase", shots, seed)


# ---------------------------------------------------------------------------
# B2: from the angle to F


def sin2_from_tilde(theta_tilde: int, l: int, approx: bool = False) -> float:
    if approx:
        return theta_tilde**2 / APPROX_DENOMINATOR * (16 / (1 << l)) ** 2
    return math.sin(theta_tilde * math.pi / (1 << l)) ** 2


def inner_product_from_sin2(sin2: float, constants: EncodingConstants, norm_x: float, norm_w: float) -> float:
    c1, c2p, D = constants.c1, constants.c2_prime, constants.D
    return (c1**2 * norm_x**2 + c2p**2 * norm_w**2 - 4 * D * sin2) / (2 * c1 * c2p)


def recover_inner_product(
    theta_tilde: int,
    l: int,
    constants: EncodingConstants,
    norm_x: float,
    norm_w: float,
    approx: bool = False,
) -> float:
    """x.w from a phase-estimation outcome (``approx`` uses theta_tilde^2/26 at l = 4)."""
    return inner_product_from_sin2(sin2_from_tilde(theta_tilde, l, approx), constants, norm_x, norm_w)


def _encode_flagged(state, codec, value):
    n = codec.to_int(value)
    if not codec.fits(n):
        state.report["overflow"] = True
    return codec.wrap(n)


def compute_F_register(
    state: StateVector,
    theta_register,
    dot_register,
    constants: EncodingConstants,
    norm_x: float,
    norm_w: float,
    y: float,
    b: float,
    codec: FixedPoint,
    l: int | None = None,
    approx: bool = False,
) -> StateVector:
    """|theta~>|0> -> |theta~>|enc(F)>: sine gate and arithmetic as a lookup, then the QFT F oracle."""
    l = l if l is not None else len(state.qubits(theta_register))

    def dot(tt):
        return _encode_flagged(state, codec, recover_inner_product(tt, l, constants, norm_x, norm_w, approx))

    apply_basis_oracle(state, dot, theta_register, dot_register)
    return apply_F_oracle(state, dot_register, y, b, codec)


def uncompute_F_register(state, theta_register, dot_register, constants, norm_x, norm_w, y, b, codec, l=None, approx=False):
    """Inverse of ``compute_F_register``: the dot register returns to |0>."""
    l = l if l is not None else len(state.qubits(theta_register))
    apply_F_oracle(state, dot_register, b, y, codec)

    def dot(tt):
        return _encode_flagged(state, codec, recover_inner_product(tt, l, constants, norm_x, norm_w, approx))

    return apply_basis_oracle(state, dot, theta_register, dot_register)


def F_from_circuit(dot_value: float, y: float, b: float, codec: FixedPoint) -> tuple[float, bool]:
    """Load enc(x.w) into a q-qubit register, run the F oracle, read the basis value back."""
    state = StateVector.zeros({"dot": codec.q})
    raw = _encode_flagged(state, codec, dot_value)
    apply_basis_oracle(state, lambda _: raw, None, "dot")
    apply_F_oracle(state, "dot", y, b, codec)
    probs = state.probabilities("dot")
    out = int(np.argmax(probs))
    if probs[out] < 1 - 1e-9:
        raise RuntimeError("F register is not a basis state")
    return codec.decode(out), bool(state.report.get("overflow", False))


def F_from_integers(dot_value: float, y: float, b: float, codec: FixedPoint) -> float:
    """Integer model of ``F_from_circuit`` (same rounding and wraparound)."""
    n = codec.to_int(dot_value) - codec.to_int(y) + codec.to_int(b)
    return codec.decode(codec.wrap(n))


# ---------------------------------------------------------------------------
# B2.4 - B3: readout states and the overlap test


def _index_bits(M: int) -> int:
    return max(1, (M - 1).bit_length())


def _uniform_index(state, M):
    qs = state.qubits("index")
    if M == 1 << len(qs):
        apply_gate(state, H, "index")
    else:
        ones = np.zeros(1 << len(qs))
        ones[:M] = 1.0
        apply_angle_tree(state, build_angle_tree(ones), "index")


def build_psi_state(F_values, c3: float, M: int | None = None) -> StateVector:
    """(1/sqrt M) sum_i |i>(c3 F_i|0> + sqrt(1 - (c3 F_i)^2)|1>)|1>."""
    F = np.asarray(F_values, dtype=float)
    M = F.shape[0] if M is None else M
    a = c3 * F
    if np.any(np.abs(a) > 1 + 1e-12):
        raise ValueError(f"c3={c3} gives residual amplitudes above 1")
    state = StateVector.zeros({"index": _index_bits(M), "phi": 1, "flag": 1})
    _uniform_index(state, M)
    apply_multiplexed_ry(state, "index", state.qubits("phi")[0], 2 * np.arccos(np.clip(a, -1, 1)))
    apply_gate(state, X, "flag")
    return state


def build_chi_state(j: int, X_data, c1: float, M: int | None = None, codec: FixedPoint | None = None) -> StateVector:
    """(1/sqrt M) sum_i |i>|0>(sqrt(1 - (c1 x_i^j)^2)|0> + c1 x_i^j|1>)."""
    Xd = np.atleast_2d(np.asarray(X_data, dtype=float))
    if not 0 <= j < Xd.shape[1]:
        raise ValueError(f"component {j} out of range for dimension {Xd.shape[1]}")
    M = Xd.shape[0] if M is None else M
    col = Xd[:M, j]
    if np.any(np.abs(c1 * col) > 1 + 1e-12):
        raise ValueError(f"c1={c1} gives data amplitudes above 1")
    m = _index_bits(M)
    rot_angles = 2 * np.arcsin(np.clip(c1 * col, -1, 1))
    if codec is None:
        state = StateVector.zeros({"index": m, "zero": 1, "rot": 1})
        _uniform_index(state, M)
        apply_multiplexed_ry(state, "index", state.qubits("rot")[0], rot_angles)
        return state
    state = StateVector.zeros({"index": m, "zero": 1, "rot": 1, "work": codec.q})
    _uniform_index(state, M)
    raws = [codec.encode(v) for v in col]
    apply_basis_oracle(state, lambda i: raws[i], "index", "work")
    live = {r: float(2 * np.arcsin(np.clip(c1 * codec.decode(r), -1, 1))) for r in set(raws)}
    apply_multiplexed_ry(state, "work", state.qubits("rot")[0], lambda r: live.get(r, 0.0))
    apply_basis_oracle(state, lambda i: raws[i], "index", "work")
    return state.discard("work")


def swap_test(psi: StateVector, chi: StateVector, shots: int | None = None, seed=None) -> float:
    """Probability of reading |+> on the control of (|0>|psi> + |1>|chi>)/sqrt 2.

    Equals 1/2 + 1/2 Re<psi|chi>. With ``shots`` the probability is
    estimated from that many Bernoulli trials.
    """
    if psi.n_qubits != chi.n_qubits or psi.layout_widths() != chi.layout_widths():
        raise ValueError(f"register layouts differ: {psi.layout_widths()} vs {chi.layout_widths()}")
    joint = StateVector(np.concatenate([psi.amplitudes, chi.amplitudes]) / math.sqrt(2))
    control = joint.n_qubits - 1
    apply_gate(joint, H, [control])
    p = float(joint.probabilities([control])[0])
    if shots is None:
        return p
    rng = np.random.default_rng(seed)
    return rng.binomial(shots, min(max(p, 0.0), 1.0)) / shots


# ---------------------------------------------------------------------------
# Full local gradient


@dataclass
class GradientEstimate:
    g: np.ndarray
    P: np.ndarray
    F: np.ndarray
    c1: float
    c3: float
    backend: str
    theta_mode: str
    l: int | None = None
    shots: int | None = None
    seed: object = None
    theta_tilde: list | None = None
    theta: np.ndarray | None = None
    approx: bool = False
    overflow: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return "exact_amplitude" if self.shots is None else "sampled"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "g": [float(v) for v in self.g],
            "P": [float(v) for v in self.P],
            "F": [float(v) for v in self.F],
            "c1": self.c1,
            "c3": self.c3,
            "backend": self.backend,
            "theta_mode": self.theta_mode,
            "l": self.l,
            "shots": self.shots,
            "approx": self.approx,
            "overflow": self.overflow,
            "theta_tilde": self.theta_tilde,
            "theta": None if self.theta is None else [float(t) for t in self.theta],
        }


def _component_rng(seed, j):
    if seed is None:
        return None
    key = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)
    return np.random.default_rng([*key, j])


def default_codec(X, w, y, b, constants, q: int = 14) -> FixedPoint:
    """Signed format sized for |x.w| and |F| given the encoding scales."""
    X = np.atleast_2d(X)
    nx = np.linalg.norm(X, axis=1).max()
    nw = np.linalg.norm(w)
    c1, c2p = constants.c1, constants.c2_prime
    dot_bound = (c1**2 * nx**2 + c2p**2 * nw**2) / (2 * c1 * c2p)
    bound = dot_bound + abs(b) + np.abs(y).max()
    return FixedPoint.for_range(bound, q)


def local_gradient(
    X,
    y,
    w,
    b: float = 0.0,
    *,
    backend: str = "shortcut",
    theta_mode: str = "exact",
    l: int = 8,
    approx: bool = False,
    shots: int | None = None,
    seed=None,
    method: str = "angle_tree",
    c1: float | None = None,
    c2: float | None = None,
    c3: float | None = None,
    codec: FixedPoint | None = None,
    norm_mode: str = "direct",
) -> GradientEstimate:
    """Gradient of the squared-residual loss read out component by component.

    ``backend='shortcut'`` evaluates the overlap angle, phase-estimation
    outcome and overlap probabilities in closed form; ``backend='full'`` builds
    every state on the simulator (Grover operator, QPE circuit, QFT
    arithmetic for F, readout states, overlap test). ``theta_mode='exact'``
    skips phase discretization; ``'qpe'`` decodes an l-bit estimate.
    ``shots=None`` reads probabilities exactly.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    w = np.asarray(w, dtype=float)
    M, D0 = X.shape
    if y.shape[0] != M:
        raise ValueError(f"{M} samples but {y.shape[0]} labels")
    if w.shape[0] != D0:
        raise ValueError(f"parameter length {w.shape[0]} does not match data dimension {D0}")
    if backend not in ("shortcut", "full"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "full":
        theta_mode = "qpe"
    if theta_mode not in ("exact", "qpe"):
        raise ValueError(f"unknown theta mode {theta_mode!r}")
    if approx and theta_mode != "qpe":
        raise ValueError("the small-angle readout needs a phase-estimation outcome")

    constants = EncodingConstants.from_data(X, w, method=method, c1=c1, c2=c2, codec=codec)
    D = constants.D
    Xp = pad(X, D)
    wp = pad(w, D)
    if backend == "full" and codec is None:
        codec = default_codec(Xp, wp, y, b, constants)
    norm_w = float(np.linalg.norm(wp))
    # x.w = 0 for every row when w = 0; there is no parameter state to encode
    zero_w = norm_w == 0
    tree = build_angle_tree(wp) if method == "angle_tree" and not zero_w else None

    thetas = np.empty(M)
    tildes: list | None = [] if theta_mode == "qpe" else None
    F = np.empty(M)
    overflow = False
    for i in range(M):
        norm_x = qpe_norm(Xp[i], constants.c1, mode=norm_mode).value if np.any(Xp[i]) else 0.0
        if zero_w:
            thetas[i] = math.asin(min(1.0, constants.c1 * norm_x / (2 * math.sqrt(D))))
            if tildes is not None:
                tildes.append(None)
            dot = 0.0
        elif backend == "full":
            op = grover_operator(Xp[i], tree if tree is not None else wp, constants)
            thetas[i] = op.theta
            probs = qpe.qpe_probabilities(op.matrix, op.initial_state, l)
        else:
            thetas[i] = math.asin(math.sqrt(min(max(sin2_theta(Xp[i], wp, constants), 0.0), 1.0)))
            probs = qpe.grover_qpe_probabilities(thetas[i], l) if theta_mode == "qpe" else None
        if zero_w:
            pass
        elif theta_mode == "qpe":
            tt = qpe.decode_theta(probs, l)
            tildes.append(tt)
            dot = inner_product_from_sin2(sin2_from_tilde(tt, l, approx), constants, norm_x, norm_w)
        else:
            dot = inner_product_from_sin2(math.sin(thetas[i]) ** 2, constants, norm_x, norm_w)
        if backend == "full":
            F[i], ov = F_from_circuit(dot, y[i], b, codec)
            overflow |= ov
        elif codec is not None:
            overflow |= not codec.fits(codec.to_int(dot))
            F[i] = F_from_integers(dot, y[i], b, codec)
        else:
            F[i] = dot + b - y[i]

    fmax = np.abs(F).max()
    if c3 is None:
        c3 = 1.0 / fmax if fmax > 0 else 1.0
    constants = constants.with_c3(c3)
    try:
        constants.validate(F=F)
    except ValueError as e:
        i = int(np.argmax(np.abs(c3 * F)))
        raise ValueError(f"sample {i}: {e}") from None

    P = np.empty(D0)
    if backend == "full":
        psi = build_psi_state(F, c3, M)
        for j in range(D0):
            try:
                chi = build_chi_state(j, Xp, constants.c1, M)
            except ValueError as e:
                raise ValueError(f"component {j}: {e}") from None
            P[j] = swap_test(psi, chi, shots, _component_rng(seed, j))
    else:
        overlaps = (c3 * F) @ (constants.c1 * Xp[:, :D0]) / M
        P = 0.5 + 0.5 * overlaps
        if shots is not None:
            for j in range(D0):
                P[j] = _component_rng(seed, j).binomial(shots, min(max(P[j], 0.0), 1.0)) / shots
    g = (2 * P - 1) / (constants.c1 * c3)
    return GradientEstimate(
        g=g,
        P=P,
        F=F,
        c1=constants.c1,
        c3=c3,
        backend=backend,
        theta_mode=theta_mode,
        l=l if theta_mode == "qpe" else None,
        shots=shots,
        seed=seed,
        theta_tilde=tildes,
        theta=thetas,
        approx=approx,
        overflow=overflow,
        extra={"method": method, "c2": constants.c2, "c2_prime": constants.c2_prime, "D": D, "zero_parameter": zero_w},
    )


def theta_error_bound(theta, l: int, constants: EncodingConstants, approx: bool = False, codec: FixedPoint | None = None) -> float:
    """Bound on |F_est - F| when the decoded angle is within one bin of theta."""
    delta = math.pi / (1 << l)
    ds2 = abs(math.sin(2 * theta)) * delta + delta**2
    if approx:
        # the small-angle substitute can only add its own worst deviation over the window
        k_lo = max(0, math.floor((theta - delta) * (1 << l) / math.pi))
        k_hi = math.ceil((theta + delta) * (1 << l) / math.pi)
        ds2 += max(abs(sin2_from_tilde(k, l, True) - sin2_from_tilde(k, l)) for k in range(k_lo, k_hi + 1))
    scale = 4 * constants.D / (2 * constants.c1 * constants.c2_prime)
    bound = scale * ds2
    if codec is not None:
        bound += 1.5 * codec.resolution
    return bound


def gradient_error_bound(est: GradientEstimate, X, constants: EncodingConstants, z: float = 3.0, codec=None) -> np.ndarray:
    """Per-component bound from the angle discretization plus z-sigma shot noise."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    M, D0 = X.shape
    if est.theta_mode == "qpe":
        dF = np.array([theta_error_bound(t, est.l, constants, est.approx, codec) for t in est.theta])
    else:
        dF = np.zeros(M)
    bound = (dF @ np.abs(X)) / M
    if est.shots is not None:
        p = np.clip(est.P, 1.0 / est.shots, 1 - 1.0 / est.shots)
        eps_p = z * np.sqrt(p * (1 - p) / est.shots)
        bound = bound + 2 * eps_p / (est.c1 * est.c3)
    return bound
