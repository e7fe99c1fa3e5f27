"""Constant and register addition in the Fourier basis (Draper-style).

After ``apply_qft`` the register qubit j carries the phase
exp(2 pi i a 2^j / 2^q). Adding t multiplies it by exp(2 pi i t 2^j / 2^q),
which splits into the rotations R_k = diag(1, exp(+-2 pi i / 2^k)) with
k = q - j - m for every set bit m of t. Subtraction uses the negative phases.
"""
from __future__ import annotations

import logging

import numpy as np

from .fixedpoint import FixedPoint
from .qsim import GateSpec, StateVector, apply_basis_oracle, apply_gate, apply_qft

log = logging.getLogger(__name__)


def _sign(sign) -> int:
    if sign in ("+", 1, "add"):
        return 1
    if sign in ("-", -1, "sub"):
        return -1
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def fourier_phase_const(state: StateVector, register, t: int, sign="+") -> StateVector:
    """Phase rotations for +-t on a register that is already in the Fourier basis."""
    qs = state.qubits(register)
    q = len(qs)
    s = _sign(sign)
    t %= 1 << q
    for j in range(q):
        for m in range(q - j):
            if (t >> m) & 1:
                apply_gate(state, GateSpec("R", (q - j - m, s)), [qs[j]])
    return state


def fourier_phase_register(state: StateVector, register, addend, sign="+") -> StateVector:
    """Same rotations, each controlled by a qubit of the ``addend`` register."""
    qs = state.qubits(register)
    ts = state.qubits(addend)
    q = len(qs)
    s = _sign(sign)
    for j in range(q):
        for m in range(min(len(ts), q - j)):
            apply_gate(state, GateSpec("R", (q - j - m, s)), [qs[j]], [ts[m]])
    return state


def fourier_add_const(state: StateVector, register, t: int, sign="+") -> StateVector:
    """|a> -> |(a +- t) mod 2^q> via QFT, phase rotations, inverse QFT."""
    apply_qft(state, register)
    fourier_phase_const(state, register, t, sign)
    apply_qft(state, register, inverse=True)
    return state


def fourier_add_register(state: StateVector, register, addend, sign="+") -> StateVector:
    """|a>|t> -> |(a +- t) mod 2^q>|t> with quantum controls from ``addend``."""
    apply_qft(state, register)
    fourier_phase_register(state, register, addend, sign)
    apply_qft(state, register, inverse=True)
    return state


def _overflow_check(state, register, codec, delta):
    vals = state.register_values(register)
    live = np.unique(vals[np.abs(state.amplitudes) > 1e-12])
    for raw in live:
        if not codec.fits(codec.signed_int(int(raw)) + delta):
            return True
    return False


def apply_F_oracle(
    state: StateVector,
    dot_register,
    y: float,
    b: float,
    codec: FixedPoint,
    y_register=None,
    fused: bool = True,
) -> StateVector:
    """Turn |enc(x.w)> into |enc(x.w + b - y)> on ``dot_register``.

    With ``y_register`` the label is loaded by an O_y lookup into that
    register, subtracted under quantum control and unloaded again; otherwise
    its bits are folded into the rotation angles as classical controls.
    ``fused`` drops the QFT^dagger QFT pair between subtraction and addition.
    Overflow of the signed range is recorded in ``state.report``.
    """
    ty, tb = codec.to_int(y), codec.to_int(b)
    if not (codec.fits(ty) and codec.fits(tb)):
        raise OverflowError(f"y={y} or b={b} not representable in {codec}")
    if _overflow_check(state, dot_register, codec, tb - ty):
        state.report["overflow"] = True
        log.warning("F oracle overflows %s", codec)

    if y_register is not None:
        apply_basis_oracle(state, lambda _: codec.wrap(ty), None, y_register)

    apply_qft(state, dot_register)
    if y_register is not None:
        fourier_phase_register(state, dot_register, y_register, "-")
    else:
        fourier_phase_const(state, dot_register, codec.wrap(ty), "-")
    if not fused:
        apply_qft(state, dot_register, inverse=True)
        apply_qft(state, dot_register)
    fourier_phase_const(state, dot_register, codec.wrap(tb), "+")
    apply_qft(state, dot_register, inverse=True)

    if y_register is not None:
        apply_basis_oracle(state, lambda _: codec.wrap(ty), None, y_register)
    return state
