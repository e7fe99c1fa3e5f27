"""Numpy implementations of the statevector kernels.

Same signatures and in-place semantics as the compiled ``_kernels`` module.
"""
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=256)
def _pair_indices(n, target, cmask, cval):
    g = np.arange(n // 2, dtype=np.int64)
    tk = 1 << target
    i0 = ((g >> target) << (target + 1)) | (g & (tk - 1))
    i0 = i0[(i0 & cmask) == cval]
    return i0, i0 | tk


@lru_cache(maxsize=256)
def _block_indices(n, targets, cmask, cval):
    k = len(targets)
    base = np.arange(n >> k, dtype=np.int64)
    for t in sorted(targets):
        base = ((base >> t) << (t + 1)) | (base & ((1 << t) - 1))
    base = base[(base & cmask) == cval]
    offsets = np.zeros(1 << k, dtype=np.int64)
    for r in range(1 << k):
        for t, q in enumerate(targets):
            if (r >> t) & 1:
                offsets[r] |= 1 << q
    return base[:, None] + offsets[None, :]


def apply_1q(state, mat, target, cmask, cval):
    i0, i1 = _pair_indices(state.shape[0], int(target), int(cmask), int(cval))
    a = state[i0]
    b = state[i1]
    state[i0] = mat[0, 0] * a + mat[0, 1] * b
    state[i1] = mat[1, 0] * a + mat[1, 1] * b


def apply_kq(state, mat, targets, cmask, cval):
    idx = _block_indices(state.shape[0], tuple(int(t) for t in targets), int(cmask), int(cval))
    state[idx] = state[idx] @ mat.T


def permute(state, perm):
    out = np.zeros_like(state)
    out[perm] = state
    return out


def register_probs(state, qubits):
    idx = np.arange(state.shape[0], dtype=np.int64)
    values = np.zeros_like(idx)
    for t, q in enumerate(qubits):
        values |= ((idx >> int(q)) & 1) << t
    return np.bincount(values, weights=np.abs(state) ** 2, minlength=1 << len(qubits))
