# Compiled statevector kernels. Every function mutates ``state`` in place
# except ``permute`` and ``register_probs``; semantics must match _kernels_py.
import numpy as np
cimport numpy as cnp

ctypedef double complex cplx


def apply_1q(cplx[::1] state, cplx[:, ::1] mat, int target, long long cmask, long long cval):
    cdef Py_ssize_t n = state.shape[0]
    cdef long long tk = 1LL << target
    cdef long long g, i0, i1
    cdef cplx a, b
    cdef cplx m00 = mat[0, 0], m01 = mat[0, 1], m10 = mat[1, 0], m11 = mat[1, 1]
    with nogil:
        for g in range(n // 2):
            i0 = ((g >> target) << (target + 1)) | (g & (tk - 1))
            if (i0 & cmask) != cval:
                continue
            i1 = i0 | tk
            a = state[i0]
            b = state[i1]
            state[i0] = m00 * a + m01 * b
            state[i1] = m10 * a + m11 * b


def apply_kq(cplx[::1] state, cplx[:, ::1] mat, long long[::1] targets, long long cmask, long long cval):
    cdef Py_ssize_t n = state.shape[0]
    cdef int k = targets.shape[0]
    cdef Py_ssize_t dim = 1 << k
    cdef long long[::1] sorted_t = np.sort(np.asarray(targets))
    cdef long long[::1] offsets = np.zeros(dim, dtype=np.int64)
    cdef cplx[::1] buf = np.empty(dim, dtype=np.complex128)
    cdef Py_ssize_t r, c, t
    cdef long long g, base, off
    cdef cplx acc
    for r in range(dim):
        off = 0
        for t in range(k):
            if (r >> t) & 1:
                off |= 1LL << targets[t]
        offsets[r] = off
    with nogil:
        for g in range(n >> k):
            base = g
            for t in range(k):
                base = ((base >> sorted_t[t]) << (sorted_t[t] + 1)) | (base & ((1LL << sorted_t[t]) - 1))
            if (base & cmask) != cval:
                continue
            for r in range(dim):
                buf[r] = state[base + offsets[r]]
            for r in range(dim):
                acc = 0
                for c in range(dim):
                    acc = acc + mat[r, c] * buf[c]
                state[base + offsets[r]] = acc


def permute(cplx[::1] state, long long[::1] perm):
    cdef Py_ssize_t n = state.shape[0]
    cdef Py_ssize_t i
    out = np.zeros(n, dtype=np.complex128)
    cdef cplx[::1] o = out
    with nogil:
        for i in range(n):
            o[perm[i]] = state[i]
    return out


def register_probs(cplx[::1] state, long long[::1] qubits):
    cdef Py_ssize_t n = state.shape[0]
    cdef int w = qubits.shape[0]
    out = np.zeros(1 << w, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef int t
    cdef long long v
    cdef cplx a
    with nogil:
        for i in range(n):
            a = state[i]
            v = 0
            for t in range(w):
                v |= ((i >> qubits[t]) & 1) << t
            o[v] += a.real * a.real + a.imag * a.imag
    return out
