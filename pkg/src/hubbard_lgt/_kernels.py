"""In-place numba kernels acting on a flat complex128 amplitude array.

Qubit ``q`` corresponds to bit ``q`` of the basis index (little-endian).
"""
import numpy as np
from numba import njit


@njit(cache=True)
def apply_1q(psi, q, m00, m01, m10, m11):
    n = psi.shape[0]
    step = 1 << q
    for base in range(0, n, 2 * step):
        for k in range(base, base + step):
            a = psi[k]
            b = psi[k + step]
            psi[k] = m00 * a + m01 * b
            psi[k + step] = m10 * a + m11 * b


@njit(cache=True)
def apply_cnot(psi, control, target):
    n = psi.shape[0]
    cmask = 1 << control
    tmask = 1 << target
    for k in range(n):
        if (k & cmask) and not (k & tmask):
            j = k | tmask
            tmp = psi[k]
            psi[k] = psi[j]
            psi[j] = tmp


@njit(cache=True)
def apply_pauli_masks(psi, xmask, zmask, ny):
    """Apply a Pauli string given as X/Z bitmasks; ``ny`` counts Y factors."""
    n = psi.shape[0]
    # Y = i X Z, so the string equals i^ny X^x Z^z
    phase = (1j) ** (ny % 4)
    if xmask == 0:
        for k in range(n):
            if _parity(k & zmask):
                psi[k] = -psi[k] * phase
            else:
                psi[k] = psi[k] * phase
        return
    for k in range(n):
        j = k ^ xmask
        if k < j:
            a = psi[k]
            b = psi[j]
            sa = -phase if _parity(k & zmask) else phase
            sb = -phase if _parity(j & zmask) else phase
            psi[j] = sa * a
            psi[k] = sb * b


@njit(cache=True)
def _parity(x):
    p = 0
    while x:
        x &= x - 1
        p ^= 1
    return p


@njit(cache=True)
def apply_sparse_kq(psi, qubits, nz_rows, nz_cols, nz_vals):
    """Apply a k-qubit operator given by its nonzero entries.

    ``qubits`` must be sorted ascending; local bit p maps to ``qubits[p]``.
    """
    n = psi.shape[0]
    k = qubits.shape[0]
    dim = 1 << k
    offsets = np.zeros(dim, dtype=np.int64)
    for loc in range(dim):
        off = 0
        for p in range(k):
            if (loc >> p) & 1:
                off |= 1 << qubits[p]
        offsets[loc] = off
    local = np.empty(dim, dtype=np.complex128)
    out = np.empty(dim, dtype=np.complex128)
    n_groups = n >> k
    nnz = nz_rows.shape[0]
    for g in range(n_groups):
        # deposit the bits of g around the target qubit positions
        base = g
        for p in range(k):
            q = qubits[p]
            low = base & ((1 << q) - 1)
            base = ((base >> q) << (q + 1)) | low
        for loc in range(dim):
            local[loc] = psi[base + offsets[loc]]
            out[loc] = 0.0
        for e in range(nnz):
            out[nz_rows[e]] += nz_vals[e] * local[nz_cols[e]]
        for loc in range(dim):
            psi[base + offsets[loc]] = out[loc]


@njit(cache=True)
def pauli_expectation(psi, xmask, zmask, ny):
    n = psi.shape[0]
    acc = 0.0 + 0.0j
    for k in range(n):
        j = k ^ xmask
        s = -1.0 if _parity(k & zmask) else 1.0
        # <psi| P |psi> = sum_k conj(psi[j]) * phase * s(k) * psi[k]
        acc += np.conj(psi[j]) * s * psi[k]
    return acc * (1j) ** (ny % 4)
