"""PCA on the channel matrix: center, decompose, keep top-P, project.

Two decomposition routes that must agree (and are tested against each
other): an exact path through a Jacobi eigendecomposition of the sample
covariance, and a randomized-SVD fast path (Gaussian sketch, power
iterations with Gram-Schmidt re-orthonormalization, small exact
decomposition of the projected matrix).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InsufficientDataError, ShapeError
from .linalg import as_matrix, jacobi_eigh, orthonormal_columns
from .rng import SeededRng

# re-exported here because it doubles as the exact-decomposition oracle
exact_eig_sym = jacobi_eigh


def center(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subtract per-column means. Returns (centered, means)."""
    h = as_matrix(h, "h")
    if h.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 rows to center, got {h.shape[0]}")
    means = h.mean(axis=0)
    return h - means, means


def randomized_svd(
    a: np.ndarray,
    rank: int,
    oversample: int = 10,
    power_iters: int = 4,
    rng: SeededRng | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Truncated SVD via the randomized range finder.

    Sketch with a Gaussian test matrix of rank+q columns, refine the range
    with power iterations (re-orthonormalizing after every product), then
    decompose the small projected matrix exactly with Jacobi rotations.

    Args:
        a: T x M input.
        rank: number of singular triplets to return, 1 <= rank <= min(T, M).
        oversample: extra sketch columns; capped at min(T, M) - rank.
        power_iters: rounds of (A A^T) applied to the basis, >= 0.
        rng: sketch randomness; defaults to SeededRng(0).

    Returns:
        (u, s, vt): u is T x rank with orthonormal columns, s descending,
        vt is rank x M with orthonormal rows. Trailing triplets beyond the
        numerical rank come back as exact zeros.
    """
    a = as_matrix(a, "a")
    t, m = a.shape
    k = min(t, m)
    if not 1 <= rank <= k:
        raise ContractError(f"rank must lie in [1, {k}] for shape {a.shape}, got {rank}")
    if power_iters < 0:
        raise ContractError(f"power_iters must be >= 0, got {power_iters}")
    if oversample < 0:
        raise ContractError(f"oversample must be >= 0, got {oversample}")
    if rng is None:
        rng = SeededRng(0)

    width = rank + min(oversample, k - rank)
    omega = rng.normal((m, width))
    q = orthonormal_columns(a @ omega)
    for _ in range(power_iters):
        q = orthonormal_columns(a.T @ q)
        q = orthonormal_columns(a @ q)

    if q.shape[1] == 0:
        # input was numerically zero
        return np.zeros((t, rank)), np.zeros(rank), np.zeros((rank, m))

    b = q.T @ a
    small = b @ b.T
    evals, u_small = jacobi_eigh((small + small.T) / 2.0)
    svals = np.sqrt(np.clip(evals, 0.0, None))

    cutoff = max(t, m) * np.finfo(np.float64).eps * (svals[0] if svals.size else 0.0)
    r = q.shape[1]
    u = np.zeros((t, rank))
    s = np.zeros(rank)
    vt = np.zeros((rank, m))
    for i in range(min(rank, r)):
        if svals[i] > cutoff:
            u[:, i] = q @ u_small[:, i]
            s[i] = svals[i]
            vt[i] = (b.T @ u_small[:, i]) / svals[i]
    return u, s, vt


@dataclass
class PcaModel:
    """Fitted projection: x -> (x - means) @ components.T"""

    means: np.ndarray                    # (M,)
    components: np.ndarray               # (P, M), rows orthonormal
    singular_values: np.ndarray          # (P,), descending
    explained_variance_ratio: np.ndarray # (P,), entries in [0, 1]
    total_variance: float                # trace of the sample covariance
    method: str = "exact"
    seed: int | None = None
    n_zero_components: int = 0           # trailing rows zero-filled (rank deficit)
    channel_names: list[str] | None = None

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.components = np.asarray(self.components, dtype=np.float64)
        self.singular_values = np.asarray(self.singular_values, dtype=np.float64)
        self.explained_variance_ratio = np.asarray(self.explained_variance_ratio, dtype=np.float64)
        p, m = self.components.shape
        if self.means.shape != (m,):
            raise ShapeError(f"means shape {self.means.shape} vs components {self.components.shape}")
        if self.singular_values.shape != (p,) or self.explained_variance_ratio.shape != (p,):
            raise ShapeError("singular_values/ratios length must equal component count")
        if np.any(np.diff(self.singular_values) > 1e-12) or np.any(self.singular_values < 0):
            raise ContractError("singular_values must be descending and nonnegative")
        if np.any(self.explained_variance_ratio < -1e-12) or np.any(self.explained_variance_ratio > 1 + 1e-10):
            raise ContractError("explained_variance_ratio entries must lie in [0, 1]")
        if float(self.explained_variance_ratio.sum()) > 1 + 1e-10:
            raise ContractError("explained_variance_ratio sums past 1")

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_channels(self) -> int:
        return self.components.shape[1]

    def to_json(self) -> str:
        doc = {
            "means": self.means.tolist(),
            "components": self.components.tolist(),
            "singular_values": self.singular_values.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "total_variance": self.total_variance,
            "method": self.method,
            "seed": self.seed,
            "n_zero_components": self.n_zero_components,
            "channel_names": self.channel_names,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        doc = json.loads(text)
        return cls(
            means=np.array(doc["means"]),
            components=np.array(doc["components"]),
            singular_values=np.array(doc["singular_values"]),
            explained_variance_ratio=np.array(doc["explained_variance_ratio"]),
            total_variance=doc["total_variance"],
            method=doc["method"],
            seed=doc.get("seed"),
            n_zero_components=doc.get("n_zero_components", 0),
            channel_names=doc.get("channel_names"),
        )


def _canonicalize_signs(components: np.ndarray) -> np.ndarray:
    """Flip rows so each row's largest-magnitude entry is nonnegative."""
    out = components.copy()
    for i in range(out.shape[0]):
        idx = int(np.argmax(np.abs(out[i])))
        if out[i, idx] < 0:
            out[i] = -out[i]
    return out


def fit(
    h: np.ndarray,
    n_components: int,
    method: str = "randomized",
    rng: SeededRng | None = None,
    oversample: int = 10,
    power_iters: int = 4,
    channel_names: list[str] | None = None,
) -> PcaModel:
    """Fit PCA on the T x M channel matrix.

    explained_variance_ratio_i = lambda_i / sum_j lambda_j, where the
    denominator is the trace of the sample covariance (so the randomized
    path never needs the full eigendecomposition).
    """
    h = as_matrix(h, "h")
    t, m = h.shape
    if not 1 <= n_components <= m:
        raise ContractError(f"n_components must lie in [1, {m}], got {n_components}")
    if method not in ("exact", "randomized"):
        raise ContractError(f"method must be 'exact' or 'randomized', got {method!r}")
    if t <= m:
        warnings.warn(f"fit with T={t} <= M={m}: covariance is rank-deficient", stacklevel=2)

    centered, means = center(h)
    total_variance = float(np.sum(centered * centered) / (t - 1))

    if method == "exact":
        cov = centered.T @ centered / (t - 1)
        evals, evecs = jacobi_eigh((cov + cov.T) / 2.0)
        evals = np.clip(evals, 0.0, None)
        components = evecs[:, :n_components].T.copy()
        svals = np.sqrt(evals[:n_components] * (t - 1))
    else:
        if rng is None:
            rng = SeededRng(0)
        _, svals, components = randomized_svd(
            centered, n_components, oversample=oversample, power_iters=power_iters, rng=rng
        )

    cutoff = max(t, m) * np.finfo(np.float64).eps * (float(svals[0]) if svals.size else 0.0)
    zero = svals <= cutoff
    svals = np.where(zero, 0.0, svals)
    components[zero] = 0.0

    if total_variance > 0.0:
        ratios = (svals ** 2 / (t - 1)) / total_variance
    else:
        ratios = np.zeros(n_components)

    return PcaModel(
        means=means,
        components=_canonicalize_signs(components),
        singular_values=svals,
        explained_variance_ratio=ratios,
        total_variance=total_variance,
        method=method,
        seed=rng.seed if (method == "randomized" and rng is not None) else None,
        n_zero_components=int(zero.sum()),
        channel_names=list(channel_names) if channel_names is not None else None,
    )


def transform(model: PcaModel, h: np.ndarray) -> np.ndarray:
    """Project rows onto the fitted components: (h - means) @ components.T"""
    h = as_matrix(h, "h")
    if h.shape[1] != model.n_channels:
        raise ShapeError(f"h has {h.shape[1]} columns, model expects {model.n_channels}")
    return (h - model.means) @ model.components.T


def inverse_transform(model: PcaModel, scores: np.ndarray) -> np.ndarray:
    """Map scores back to channel space: scores @ components + means."""
    scores = as_matrix(scores, "scores")
    if scores.shape[1] != model.n_components:
        raise ShapeError(f"scores has {scores.shape[1]} columns, model has {model.n_components}")
    return scores @ model.components + model.means


def information_kept(model: PcaModel, p_prime: int) -> float:
    """Cumulative explained-variance ratio of the first p_prime components."""
    if not 1 <= p_prime <= model.n_components:
        raise ContractError(f"p_prime must lie in [1, {model.n_components}], got {p_prime}")
    return float(np.sum(model.explained_variance_ratio[:p_prime]))
