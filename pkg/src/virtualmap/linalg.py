"""Dense linear-algebra helpers shared across the package.

Conventions fixed here and relied on everywhere else:

* ``vec`` is column-stacking: ``vec(X)[j*d + i] = X[i, j]``, equivalently
  ``X.reshape(-1, order="F")``, so that ``vec(A @ X @ B) = kron(B.T, A) @ vec(X)``.
* Multi-qubit operators live on the Kronecker product with qubit 0 as the
  leftmost (most significant) factor; qubit indices are 0-based.
"""

from __future__ import annotations

import numpy as np


def vec(mat: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(mat).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec` for a square matrix."""
    v = np.asarray(v).reshape(-1)
    if dim is None:
        dim = round(len(v) ** 0.5)
    if dim * dim != len(v):
        raise ValueError(f"vector of length {len(v)} is not a square matrix")
    return v.reshape(dim, dim, order="F")


def kron_all(mats) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def herm(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


def trace_mul(a: np.ndarray, b: np.ndarray) -> complex:
    """Tr[a @ b] without forming the product."""
    return complex(np.einsum("ij,ji->", a, b))


def apply_superop_local(op: np.ndarray, superop: np.ndarray, positions, n: int) -> np.ndarray:
    """Apply a k-local superoperator to an n-qubit operator.

    ``positions`` lists the qubit slots (0-based, within the n-qubit space)
    the map acts on, in the map's own qubit order.
    """
    k = len(positions)
    t = op.reshape((2,) * (2 * n))
    col_axes = [n + p for p in positions]
    row_axes = list(positions)
    src = col_axes + row_axes
    dst = list(range(2 * k))
    t = np.moveaxis(t, src, dst)
    rest = t.shape[2 * k:]
    t = superop @ t.reshape(4**k, -1)
    t = np.moveaxis(t.reshape((2,) * (2 * k) + rest), dst, src)
    return t.reshape(2**n, 2**n)


def multiply_trace_out(op: np.ndarray, factor: np.ndarray, position: int, n: int) -> np.ndarray:
    """Tr_q[op @ (factor on qubit q)], removing qubit ``position``."""
    t = op.reshape((2,) * (2 * n))
    t = np.moveaxis(t, [position, n + position], [0, 1])
    res = np.einsum("rc...,cr->...", t, factor)
    d = 2 ** (n - 1)
    return res.reshape(d, d)


def insert_factor(op: np.ndarray, factor: np.ndarray, slot: int, n: int) -> np.ndarray:
    """Tensor a single-qubit factor into an n-qubit operator at ``slot``."""
    m = np.kron(op, factor).reshape((2,) * (2 * n + 2))
    m = np.moveaxis(m, [n, 2 * n + 1], [slot, n + 1 + slot])
    d = 2 ** (n + 1)
    return m.reshape(d, d)


def partial_trace(op: np.ndarray, keep, n: int) -> np.ndarray:
    """Partial trace of an n-qubit operator keeping the listed qubits (in order)."""
    keep = list(keep)
    t = op.reshape((2,) * (2 * n))
    traced = [q for q in range(n) if q not in keep]
    for q in sorted(traced, reverse=True):
        nq = t.ndim // 2
        t = np.trace(t, axis1=q, axis2=nq + q)
    # remaining axes are in ascending qubit order; permute to requested order
    order = sorted(keep)
    perm = [order.index(q) for q in keep]
    nq = len(keep)
    t = t.transpose([*perm, *[nq + p for p in perm]])
    d = 2**nq
    return t.reshape(d, d)
