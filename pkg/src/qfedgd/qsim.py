"""Dense statevector simulator.

Qubit ordering is little-endian: qubit 0 is the least significant bit of the
basis index. Registers are named contiguous qubit ranges, listed from the
least significant end of the index upward.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import _backend

NORM_TOL = 1e-10


class LayoutError(ValueError):
    """Register layouts or qubit sets are incompatible."""


@dataclass(frozen=True)
class Register:
    start: int
    width: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return tuple(range(self.start, self.start + self.width))


class StateVector:
    """Amplitudes over ``n_qubits`` plus a named register layout.

    Operations mutate the instance and return it, so calls chain. ``report``
    collects run diagnostics (overflow flags, padding notes) raised while the
    state is being processed.
    """

    def __init__(self, amplitudes, registers: Mapping[str, Register] | None = None):
        amps = np.ascontiguousarray(amplitudes, dtype=np.complex128)
        n = amps.shape[0].bit_length() - 1
        if amps.ndim != 1 or amps.shape[0] != 1 << n:
            raise ValueError(f"amplitude length {amps.shape[0]} is not a power of two")
        self.amplitudes = amps
        self.n_qubits = n
        self.registers: dict[str, Register] = dict(registers or {})
        for name, reg in self.registers.items():
            if reg.start < 0 or reg.start + reg.width > n:
                raise LayoutError(f"register {name!r} outside {n} qubits")
        self.report: dict = {}

    @classmethod
    def zeros(cls, layout: Mapping[str, int] | int) -> "StateVector":
        """|0...0> over ``layout`` (a qubit count, or ordered name -> width)."""
        if isinstance(layout, int):
            regs, n = {}, layout
        else:
            regs, n = {}, 0
            for name, width in layout.items():
                regs[name] = Register(n, int(width))
                n += int(width)
        amps = np.zeros(1 << n, dtype=np.complex128)
        amps[0] = 1.0
        return cls(amps, regs)

    def copy(self) -> "StateVector":
        out = StateVector(self.amplitudes.copy(), self.registers)
        out.report = dict(self.report)
        return out

    def qubits(self, register) -> tuple[int, ...]:
        """Resolve a register name, ``range`` or qubit sequence to qubit indices."""
        if isinstance(register, str):
            try:
                return self.registers[register].qubits
            except KeyError:
                raise LayoutError(f"no register named {register!r}") from None
        if isinstance(register, Register):
            return register.qubits
        qs = tuple(int(q) for q in register)
        for q in qs:
            if not 0 <= q < self.n_qubits:
                raise LayoutError(f"qubit {q} out of range for {self.n_qubits} qubits")
        if len(set(qs)) != len(qs):
            raise LayoutError(f"repeated qubit in {qs}")
        return qs

    def layout_widths(self) -> tuple[int, ...]:
        return tuple(r.width for r in sorted(self.registers.values(), key=lambda r: r.start))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self, register=None) -> np.ndarray:
        """Marginal distribution over the basis values of ``register``."""
        if register is None:
            return np.abs(self.amplitudes) ** 2
        qs = np.asarray(self.qubits(register), dtype=np.int64)
        return _backend.kernels.register_probs(self.amplitudes, qs)

    def register_values(self, register) -> np.ndarray:
        """Value of ``register`` for every basis index (vector of ints)."""
        idx = np.arange(self.amplitudes.shape[0], dtype=np.int64)
        return _extract(idx, self.qubits(register))

    def tensor(self, other: "StateVector", prefix: str = "") -> "StateVector":
        """``other`` placed on new qubits above this state's qubits."""
        amps = np.kron(other.amplitudes, self.amplitudes)
        regs = dict(self.registers)
        for name, reg in other.registers.items():
            key = prefix + name
            if key in regs:
                raise LayoutError(f"duplicate register {key!r}")
            regs[key] = Register(reg.start + self.n_qubits, reg.width)
        out = StateVector(amps, regs)
        out.report = {**self.report, **other.report}
        return out

    def discard(self, register, tol: float = NORM_TOL) -> "StateVector":
        """Drop a register that must be in |0...0>; returns the reduced state."""
        qs = self.qubits(register)
        vals = self.register_values(qs)
        stray = np.abs(self.amplitudes[vals != 0])
        if stray.size and stray.max() > tol:
            raise ValueError(f"register {register!r} is not in |0>; max stray amplitude {stray.max():.3e}")
        keep = [q for q in range(self.n_qubits) if q not in qs]
        idx = np.arange(self.amplitudes.shape[0], dtype=np.int64)[vals == 0]
        reduced = np.zeros(1 << len(keep), dtype=np.complex128)
        reduced[_extract(idx, keep)] = self.amplitudes[idx]
        remap = {old: new for new, old in enumerate(keep)}
        regs = {}
        for name, reg in self.registers.items():
            if set(reg.qubits) & set(qs):
                continue
            regs[name] = Register(remap[reg.start], reg.width)
        out = StateVector(reduced, regs)
        out.report = dict(self.report)
        return out

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits}, registers={list(self.registers)})"


def _extract(indices: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    out = np.zeros_like(indices)
    for t, q in enumerate(qubits):
        out |= ((indices >> q) & 1) << t
    return out


def _deposit(indices: np.ndarray, qubits: Sequence[int], values: np.ndarray) -> np.ndarray:
    out = indices.copy()
    for t, q in enumerate(qubits):
        out &= ~(1 << q)
        out |= ((values >> t) & 1) << q
    return out


# ---------------------------------------------------------------------------
# Gates


@dataclass(frozen=True)
class GateSpec:
    """A single-qubit gate.

    kind is one of ``H``, ``X``, ``phase`` (params: lam), ``Ry`` (theta),
    ``R`` (the controlled-phase rotation diag(1, exp(+-2 pi i / 2**k)),
    params: k, sign) or ``U`` (theta, phi, lam in the convention
    [[cos t/2, -e^{i lam} sin t/2], [e^{i phi} sin t/2, e^{i(phi+lam)} cos t/2]]).
    ``matrix`` may be supplied directly with kind ``custom``.
    """

    kind: str
    params: tuple = ()
    custom: np.ndarray | None = field(default=None, compare=False)

    @property
    def matrix(self) -> np.ndarray:
        k, p = self.kind, self.params
        if k == "H":
            m = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        elif k == "X":
            m = np.array([[0, 1], [1, 0]])
        elif k == "phase":
            m = np.diag([1, np.exp(1j * p[0])])
        elif k == "Ry":
            c, s = np.cos(p[0] / 2), np.sin(p[0] / 2)
            m = np.array([[c, -s], [s, c]])
        elif k == "R":
            sign = p[1] if len(p) > 1 else 1
            m = np.diag([1, np.exp(sign * 2j * np.pi / 2 ** p[0])])
        elif k == "U":
            t, phi, lam = p
            c, s = np.cos(t / 2), np.sin(t / 2)
            m = np.array(
                [[c, -np.exp(1j * lam) * s], [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]]
            )
        elif k == "custom":
            m = self.custom
        else:
            raise ValueError(f"unknown gate kind {k!r}")
        return np.ascontiguousarray(m, dtype=np.complex128)

    def adjoint(self) -> "GateSpec":
        return GateSpec("custom", custom=self.matrix.conj().T)


H = GateSpec("H")
X = GateSpec("X")


def Ry(theta: float) -> GateSpec:
    return GateSpec("Ry", (float(theta),))


def phase(lam: float) -> GateSpec:
    return GateSpec("phase", (float(lam),))


def _control_masks(state, controls, control_values):
    cqs = state.qubits(controls) if controls is not None else ()
    if control_values is None:
        control_values = [1] * len(cqs)
    if len(control_values) != len(cqs):
        raise LayoutError("control_values length does not match controls")
    cmask = cval = 0
    for q, v in zip(cqs, control_values):
        cmask |= 1 << q
        cval |= int(bool(v)) << q
    return cqs, cmask, cval


def init_basis_state(n_qubits: int, basis_index: int, registers=None) -> StateVector:
    if not 0 <= basis_index < 1 << n_qubits:
        raise ValueError(f"basis index {basis_index} out of range for {n_qubits} qubits")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[basis_index] = 1.0
    return StateVector(amps, registers)


def apply_gate(state: StateVector, gate: GateSpec, targets, controls=(), control_values=None) -> StateVector:
    """Apply a (multi-)controlled single-qubit gate to each qubit in ``targets``."""
    tqs = state.qubits(targets) if not isinstance(targets, int) else state.qubits([targets])
    cqs, cmask, cval = _control_masks(state, controls, control_values)
    if set(tqs) & set(cqs):
        raise LayoutError(f"targets {tqs} overlap controls {cqs}")
    m = gate.matrix
    for t in tqs:
        _backend.kernels.apply_1q(state.amplitudes, m, t, cmask, cval)
    return state


def apply_unitary(state: StateVector, matrix, targets, controls=(), control_values=None) -> StateVector:
    """Apply a dense 2^k x 2^k unitary; ``targets[0]`` is the matrix's least significant qubit."""
    tqs = state.qubits(targets)
    cqs, cmask, cval = _control_masks(state, controls, control_values)
    if set(tqs) & set(cqs):
        raise LayoutError(f"targets {tqs} overlap controls {cqs}")
    m = np.ascontiguousarray(matrix, dtype=np.complex128)
    if m.shape != (1 << len(tqs),) * 2:
        raise ValueError(f"matrix shape {m.shape} does not match {len(tqs)} targets")
    if len(tqs) == 1:
        _backend.kernels.apply_1q(state.amplitudes, m, tqs[0], cmask, cval)
    else:
        _backend.kernels.apply_kq(state.amplitudes, m, np.asarray(tqs, dtype=np.int64), cmask, cval)
    return state


def apply_swap(state: StateVector, a: int, b: int) -> StateVector:
    idx = np.arange(state.amplitudes.shape[0], dtype=np.int64)
    ba, bb = (idx >> a) & 1, (idx >> b) & 1
    perm = idx ^ ((ba ^ bb) << a) ^ ((ba ^ bb) << b)
    state.amplitudes = _backend.kernels.permute(state.amplitudes, perm)
    return state


def apply_qft(state: StateVector, register, inverse: bool = False, swaps: bool = True) -> StateVector:
    """QFT|a> = 2^{-q/2} sum_k exp(2 pi i a k / 2^q)|k> on ``register`` (gate decomposition)."""
    qs = state.qubits(register)
    n = len(qs)
    sign = -1 if inverse else 1
    ops = []
    for i in range(n - 1, -1, -1):
        ops.append(("H", qs[i], None, None))
        for j in range(i - 1, -1, -1):
            ops.append(("R", qs[i], qs[j], i - j + 1))
    if inverse:
        ops.reverse()
    if swaps and inverse:
        _reverse_qubits(state, qs)
    for kind, t, c, k in ops:
        if kind == "H":
            apply_gate(state, H, [t])
        else:
            apply_gate(state, GateSpec("R", (k, sign)), [t], [c])
    if swaps and not inverse:
        _reverse_qubits(state, qs)
    return state


def _reverse_qubits(state, qs):
    n = len(qs)
    for k in range(n // 2):
        apply_swap(state, qs[k], qs[n - 1 - k])


def apply_basis_oracle(
    state: StateVector,
    f: Callable[[int], int],
    in_register,
    out_register,
    mode: str = "xor",
) -> StateVector:
    """|a>|b> -> |a>|b XOR f(a)> (``xor``) or |a>|(b + f(a)) mod 2^q> (``add_mod``).

    ``f`` is evaluated on every input value that carries amplitude; inputs with
    zero amplitude are mapped with f = 0 so the map stays a permutation.
    """
    iq = state.qubits(in_register) if in_register is not None else ()
    oq = state.qubits(out_register)
    if set(iq) & set(oq):
        raise LayoutError("oracle input and output registers overlap")
    width = len(oq)
    idx = np.arange(state.amplitudes.shape[0], dtype=np.int64)
    a = _extract(idx, iq)
    b = _extract(idx, oq)
    reachable = np.unique(a[np.abs(state.amplitudes) > 0])
    table = np.zeros(1 << len(iq), dtype=np.int64)
    for v in reachable:
        fv = int(f(int(v)))
        if not 0 <= fv < 1 << width:
            raise OverflowError(f"oracle value f({v})={fv} does not fit {width} qubits")
        table[v] = fv
    fa = table[a]
    if mode == "xor":
        nb = b ^ fa
    elif mode == "add_mod":
        nb = (b + fa) & ((1 << width) - 1)
    else:
        raise ValueError(f"unknown oracle mode {mode!r}")
    perm = _deposit(idx, oq, nb)
    state.amplitudes = _backend.kernels.permute(state.amplitudes, perm)
    return state


def apply_multiplexed_ry(state: StateVector, select, target: int, angles) -> StateVector:
    """Ry(angles[v]) on ``target`` for each basis value v of the ``select`` register.

    ``angles`` is an array indexed by the select value, or a callable of it.
    """
    sq = state.qubits(select) if select is not None else ()
    (t,) = state.qubits([target])
    if t in sq:
        raise LayoutError("target inside select register")
    n = state.amplitudes.shape[0]
    g = np.arange(n // 2, dtype=np.int64)
    i0 = ((g >> t) << (t + 1)) | (g & ((1 << t) - 1))
    i1 = i0 | (1 << t)
    v = _extract(i0, sq)
    if callable(angles):
        table = np.array([angles(k) for k in range(1 << len(sq))], dtype=float)
    else:
        table = np.asarray(angles, dtype=float)
        if table.shape[0] < 1 << len(sq):
            table = np.concatenate([table, np.zeros((1 << len(sq)) - table.shape[0])])
    th = table[v]
    c, s = np.cos(th / 2), np.sin(th / 2)
    a0, a1 = state.amplitudes[i0], state.amplitudes[i1]
    state.amplitudes[i0] = c * a0 - s * a1
    state.amplitudes[i1] = s * a0 + c * a1
    return state


def circuit_unitary(circuit: Callable[[StateVector], StateVector], layout) -> np.ndarray:
    """Dense matrix of ``circuit`` obtained by running it on every basis column."""
    probe = StateVector.zeros(layout)
    dim = probe.amplitudes.shape[0]
    u = np.empty((dim, dim), dtype=np.complex128)
    for col in range(dim):
        s = StateVector(np.zeros(dim), probe.registers)
        s.amplitudes[col] = 1.0
        u[:, col] = circuit(s).amplitudes
    return u


# ---------------------------------------------------------------------------
# Measurement


@dataclass
class Histogram:
    """Measurement counts over basis values of a ``width``-qubit register."""

    counts: dict[int, int]
    shots: int
    seed: int | None
    width: int

    def frequencies(self) -> np.ndarray:
        out = np.zeros(1 << self.width)
        for k, c in self.counts.items():
            out[k] = c / self.shots
        return out

    def most_common(self) -> int:
        return max(sorted(self.counts), key=lambda k: self.counts[k])

    def bitstring(self, value: int) -> str:
        """Most-significant-bit-first label, as circuit toolkits print it."""
        return format(value, f"0{self.width}b")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["outcome", "bits", "count"])
        for k in sorted(self.counts):
            w.writerow([k, self.bitstring(k), self.counts[k]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "shots": self.shots,
            "seed": self.seed,
            "counts": {str(k): self.counts[k] for k in sorted(self.counts)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data) -> "Histogram":
        return cls({int(k): int(v) for k, v in data["counts"].items()}, data["shots"], data["seed"], data["width"])


def sample_measurement(state: StateVector, register, shots: int, seed: int | None = None) -> Histogram:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = state.probabilities(register)
    probs = np.clip(probs, 0, None)
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(shots, probs)
    counts = {int(k): int(c) for k, c in enumerate(draws) if c}
    return Histogram(counts, shots, seed, len(state.qubits(register)))


def inner_product(a: StateVector, b: StateVector) -> complex:
    """<a|b>."""
    if a.n_qubits != b.n_qubits or (a.registers and b.registers and a.layout_widths() != b.layout_widths()):
        raise LayoutError(f"layout mismatch: {a.layout_widths()} vs {b.layout_widths()}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def basis_probabilities(state: StateVector, registers: Iterable[str]) -> dict:
    """Joint distribution over several registers, keyed by value tuples (nonzero only)."""
    names = list(registers)
    vals = [state.register_values(n) for n in names]
    probs = np.abs(state.amplitudes) ** 2
    out: dict = {}
    for i in np.nonzero(probs > 1e-15)[0]:
        key = tuple(int(v[i]) for v in vals)
        out[key] = out.get(key, 0.0) + float(probs[i])
    return out
