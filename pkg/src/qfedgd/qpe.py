"""Phase estimation of Grover-type operators.

An operator with eigenvalue exp(2 pi i phi) yields phase-register outcomes
peaked at round(phi * 2^l). For Q = -A S_0 A^dagger S_good the relevant
eigenvalues are exp(+-2 i theta) with sin^2 theta the weight of the good
subspace in A|0>, so outcomes sit near +-theta 2^l / pi.
"""
from __future__ import annotations

import numpy as np

from .qsim import H, Histogram, StateVector, apply_gate, apply_qft, apply_unitary


def grover_operator(prep: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Q = -A S_0 A^dagger S_good with S_0 = I - 2|0><0|, S_good = I - 2 Pi_good."""
    dim = prep.shape[0]
    s0 = np.eye(dim)
    s0[0, 0] = -1
    sg = np.diag(np.where(np.asarray(good, dtype=bool), -1.0, 1.0))
    return -prep @ s0 @ prep.conj().T @ sg


def phase_estimation(unitary: np.ndarray, system: np.ndarray, l: int) -> StateVector:
    """Textbook QPE circuit: H on l ancillas, controlled U^(2^k), inverse QFT."""
    if l < 1:
        raise ValueError("phase register needs l >= 1")
    n = unitary.shape[0].bit_length() - 1
    state = StateVector.zeros({"system": n, "phase": l})
    state.amplitudes[: 1 << n] = system
    phase_qs = state.qubits("phase")
    apply_gate(state, H, phase_qs)
    power = np.asarray(unitary, dtype=np.complex128)
    for k in range(l):
        apply_unitary(state, power, "system", controls=[phase_qs[k]])
        power = power @ power
    apply_qft(state, "phase", inverse=True)
    return state


def qpe_probabilities(unitary: np.ndarray, system: np.ndarray, l: int) -> np.ndarray:
    return phase_estimation(unitary, system, l).probabilities("phase")


def analytic_qpe_probabilities(phases, weights, l: int) -> np.ndarray:
    """Outcome distribution for an eigen-decomposed input: sum_w w |Fejer kernel|^2."""
    n = 1 << l
    k = np.arange(n)
    x = np.arange(n)
    out = np.zeros(n)
    for phi, w in zip(phases, weights):
        amp = np.exp(2j * np.pi * np.outer(phi - k / n, x)).sum(axis=1) / n
        out += w * np.abs(amp) ** 2
    return out


def grover_qpe_probabilities(theta: float, l: int) -> np.ndarray:
    """Distribution for A|0> = cos theta |bad> + sin theta |good> (equal +- weights)."""
    return analytic_qpe_probabilities([theta / np.pi, -theta / np.pi], [0.5, 0.5], l)


def fold(k: int, l: int) -> int:
    """k and 2^l - k encode the same sin^2."""
    return min(k, (1 << l) - k)


def decode_theta(result, l: int) -> int:
    """Folded argmax of a QPE histogram or probability vector; ties go to the smaller value."""
    if isinstance(result, Histogram):
        raw = result.frequencies()
    else:
        raw = np.asarray(result, dtype=float)
    folded = np.zeros((1 << (l - 1)) + 1)
    for k, p in enumerate(raw):
        folded[fold(k, l)] += p
    # argmax returns the first maximum, i.e. the smaller theta; compare with a
    # tolerance so float noise between mirror bins cannot break ties
    best = folded.max()
    return int(np.nonzero(folded >= best - 1e-12)[0][0])


def theta_from_tilde(theta_tilde: int, l: int) -> float:
    return theta_tilde * np.pi / (1 << l)
