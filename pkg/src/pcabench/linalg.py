"""Dense kernels: validated matmul, row softmax, layer norm, QR, Jacobi.

Everything is float64 in, float64 out. The decomposition routines here are
self-contained (no np.linalg factorizations) so the exact and randomized PCA
paths stay independently checkable.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, ConvergenceError, ShapeError


def as_matrix(a, name: str = "array") -> np.ndarray:
    """Coerce to a finite float64 2-D array or raise."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise ContractError(f"{name} contains non-finite entries")
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit shape validation.

    Supports 2-D x 2-D, 3-D x 3-D (equal batch), and mixed 2-D/3-D where
    the 2-D operand is shared across the batch.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim not in (2, 3) or b.ndim not in (2, 3):
        raise ShapeError(f"matmul needs 2-D or 3-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ShapeError(f"batch dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    return np.matmul(a, b)


def softmax_rows(x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Softmax over the last axis with max-subtraction.

    mask, when given, is boolean with True marking positions that may
    receive weight; masked positions come out exactly 0. Rows that are
    fully masked are rejected.
    """
    x = np.asarray(x, dtype=np.float64)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=-1).all():
            raise ContractError("softmax mask leaves at least one row fully masked")
        x = np.where(mask, x, -np.inf)
    shift = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shift)
    return e / np.sum(e, axis=-1, keepdims=True)


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Normalize the last axis to zero mean / unit variance, then affine.

    Variance is the population variance (no Bessel correction).
    """
    x = np.asarray(x, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise ShapeError(
            f"gain/bias must have shape ({width},), got {gain.shape} and {bias.shape}"
        )
    if not eps > 0:
        raise ContractError(f"eps must be positive, got {eps}")
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def orthonormal_columns(a: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis for the column space via modified Gram-Schmidt.

    Two projection passes per column for stability; columns that are
    (numerically) dependent on earlier ones are dropped, so the result can
    be narrower than the input.
    """
    a = as_matrix(a, "a")
    n, k = a.shape
    if k == 0:
        return np.zeros((n, 0))
    scale = float(np.max(np.sqrt(np.sum(a * a, axis=0))))
    if scale == 0.0:
        return np.zeros((n, 0))
    q = np.empty((n, k))
    m = 0
    for j in range(k):
        v = a[:, j].copy()
        for _ in range(2):
            if m:
                v -= q[:, :m] @ (q[:, :m].T @ v)
        norm = float(np.sqrt(v @ v))
        if norm > tol * scale:
            q[:, m] = v / norm
            m += 1
    return q[:, :m].copy()


def jacobi_eigh(sym: np.ndarray, tol: float = 1e-13, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) with eigenvalues sorted descending
    and eigenvectors in the matching columns, so sym == V diag(w) V^T.

    Args:
        sym: symmetric 2-D array; asymmetry beyond 1e-10 (relative to the
            largest entry) is rejected.
        tol: convergence threshold on the largest off-diagonal entry,
            relative to the largest diagonal magnitude.
        max_sweeps: hard cap on full cyclic sweeps.
    """
    a = as_matrix(sym, "sym")
    n, m = a.shape
    if n != m:
        raise ShapeError(f"sym must be square, got {a.shape}")
    big = max(1.0, float(np.max(np.abs(a))))
    if float(np.max(np.abs(a - a.T))) > 1e-10 * big:
        raise ContractError("sym is not symmetric within 1e-10")
    a = (a + a.T) / 2.0
    v = np.eye(n)
    if n == 1:
        return a[0, :1].copy(), v

    for _ in range(max_sweeps):
        diag_scale = max(1.0, float(np.max(np.abs(np.diag(a)))))
        off = a - np.diag(np.diag(a))
        if float(np.max(np.abs(off))) <= tol * diag_scale:
            break
        for p in range(n - 1):
            for q_ in range(p + 1, n):
                apq = a[p, q_]
                if abs(apq) <= 1e-300:
                    continue
                theta = 0.5 * np.arctan2(2.0 * apq, a[q_, q_] - a[p, p])
                c = np.cos(theta)
                s = np.sin(theta)
                rp = a[p, :].copy()
                rq = a[q_, :].copy()
                a[p, :] = c * rp - s * rq
                a[q_, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q_].copy()
                a[:, p] = c * cp - s * cq
                a[:, q_] = s * cp + c * cq
                a[p, q_] = 0.0
                a[q_, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q_].copy()
                v[:, p] = c * vp - s * vq
                v[:, q_] = s * vp + c * vq
    else:
        raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]
