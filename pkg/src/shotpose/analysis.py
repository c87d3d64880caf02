"""Unsupervised analysis of latent vectors: k-means++, PCA, exact t-SNE."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

log = logging.getLogger(__name__)


# -- k-means ---------------------------------------------------------------


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray                 # (k, d)
    assignments: dict                     # id -> cluster index
    inertia: float
    seed: int
    n_iter: int
    inertia_history: list[float] = field(default_factory=list)

    @property
    def labels(self) -> np.ndarray:
        return np.array([self.assignments[key] for key in self.assignments])


def _plus_plus_seeding(vectors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = vectors.shape[0]
    centroids = np.empty((k, vectors.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = vectors[first]
    closest = np.sum((vectors - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            choice = int(rng.integers(n))
        else:
            choice = int(rng.choice(n, p=closest / total))
        centroids[i] = vectors[choice]
        closest = np.minimum(closest, np.sum((vectors - centroids[i]) ** 2, axis=1))
    return centroids


def _distances_sq(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.sum((vectors[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def kmeans_fit(vectors: np.ndarray, k: int, seed: int = 0, max_iter: int = 300,
               ids=None) -> ClusterModel:
    """k-means++ seeding followed by Lloyd iterations to a fixpoint.

    Empty clusters are reseeded to the point farthest from its assigned
    centroid, which keeps the recorded inertia nonincreasing.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ContractError(f"expected an (N, d) matrix, got shape {vectors.shape}")
    n = vectors.shape[0]
    if not 1 <= k <= n:
        raise ContractError(f"need 1 <= k <= N, got k={k}, N={n}")
    if ids is None:
        ids = list(range(n))
    elif len(ids) != n:
        raise ContractError("ids must match the number of vectors")

    rng = np.random.default_rng(seed)
    centroids = _plus_plus_seeding(vectors, k, rng)
    dists = _distances_sq(vectors, centroids)
    labels = np.argmin(dists, axis=1)

    history: list[float] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        for c in range(k):
            member = labels == c
            if member.any():
                centroids[c] = vectors[member].mean(axis=0)
            else:
                # Farthest point from its own centroid becomes the new seed.
                per_point = np.sum((vectors - centroids[labels]) ** 2, axis=1)
                centroids[c] = vectors[int(np.argmax(per_point))]
        dists = _distances_sq(vectors, centroids)
        new_labels = np.argmin(dists, axis=1)
        history.append(float(np.sum(np.min(dists, axis=1))))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels

    inertia = float(np.sum(np.min(_distances_sq(vectors, centroids), axis=1)))
    return ClusterModel(
        k=k,
        centroids=centroids,
        assignments={ids[i]: int(labels[i]) for i in range(n)},
        inertia=inertia,
        seed=seed,
        n_iter=n_iter,
        inertia_history=history,
    )


# -- PCA --------------------------------------------------------------------


@dataclass
class PcaModel:
    mean: np.ndarray                      # (dim,)
    components: np.ndarray                # (d, dim), orthonormal rows
    explained_variance: np.ndarray        # (d,), nonincreasing
    explained_variance_ratio: np.ndarray  # (d,)
    total_variance: float


def pca_fit(vectors: np.ndarray, d: int) -> PcaModel:
    """Top-d principal axes via eigendecomposition of the covariance."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError(f"expected an (N, dim) matrix, got shape {x.shape}")
    n, dim = x.shape
    if not 1 <= d <= min(n, dim):
        raise ContractError(f"need 1 <= d <= min(N, dim) = {min(n, dim)}, got d={d}")
    mean = x.mean(axis=0)
    centered = x - mean

    if dim <= n:
        cov = centered.T @ centered / max(n - 1, 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        values = eigvals[order][:d]
        components = eigvecs[:, order][:, :d].T
    else:
        # Gram trick for wide data: eigenvectors of X X^T map back to axes.
        gram = centered @ centered.T / max(n - 1, 1)
        eigvals, eigvecs = np.linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1]
        values = eigvals[order][:d]
        components = np.zeros((d, dim))
        for i in range(d):
            axis = centered.T @ eigvecs[:, order[i]]
            norm = np.linalg.norm(axis)
            if norm > 0:
                axis /= norm
            components[i] = axis

    values = np.clip(values, 0.0, None)
    # Deterministic orientation: largest-magnitude loading is positive.
    for i in range(d):
        pivot = np.argmax(np.abs(components[i]))
        if components[i, pivot] < 0:
            components[i] = -components[i]

    total = float(np.sum(centered ** 2) / max(n - 1, 1))
    ratio = values / total if total > 0 else np.zeros_like(values)
    return PcaModel(mean=mean, components=components, explained_variance=values,
                    explained_variance_ratio=ratio, total_variance=total)


def pca_transform(model: PcaModel, vectors: np.ndarray) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.mean.shape[0]:
        raise ContractError(
            f"vectors have dim {x.shape[1]}, model expects {model.mean.shape[0]}")
    out = (x - model.mean) @ model.components.T
    return out[0] if single else out


# -- t-SNE -------------------------------------------------------------------


@dataclass
class TsneEmbedding:
    points: np.ndarray                    # (N, 2)
    perplexity: float
    kl_history: list[tuple[int, float]]
    final_kl: float
    seed: int


def _conditional_probs(dist_row: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Gaussian affinities at precision `beta`; returns (probs, perplexity)."""
    p = np.exp(-dist_row * beta)
    total = p.sum()
    if total <= 0.0:
        return np.full_like(dist_row, 1.0 / dist_row.size), float(dist_row.size)
    p /= total
    nonzero = p[p > 0]
    entropy = -np.sum(nonzero * np.log(nonzero))
    return p, float(np.exp(entropy))


def _bandwidth_search(dist_row: np.ndarray, perplexity: float,
                      tol: float = 1e-5, max_iter: int = 200) -> np.ndarray:
    """Binary-search the Gaussian precision so the row hits `perplexity`."""
    if np.all(dist_row <= 0.0):
        # Degenerate row (identical points): fall back to uniform affinities.
        return np.full_like(dist_row, 1.0 / dist_row.size)
    beta, lo, hi = 1.0, 0.0, np.inf
    probs, perp = _conditional_probs(dist_row, beta)
    for _ in range(max_iter):
        if abs(perp - perplexity) <= tol:
            break
        if perp > perplexity:
            lo = beta
            beta = beta * 2.0 if np.isinf(hi) else 0.5 * (beta + hi)
        else:
            hi = beta
            beta = 0.5 * (beta + lo)
        probs, perp = _conditional_probs(dist_row, beta)
    return probs


def _pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _joint_probabilities(x: np.ndarray, perplexity: float) -> np.ndarray:
    n = x.shape[0]
    dists = _pairwise_sq_dists(x)
    p_cond = np.zeros((n, n))
    idx = np.arange(n)
    for i in range(n):
        row = dists[i, idx != i]
        p_cond[i, idx != i] = _bandwidth_search(row, perplexity)
    p = (p_cond + p_cond.T) / (2.0 * n)
    return np.maximum(p, 1e-12)


def _kl_divergence(p: np.ndarray, y: np.ndarray) -> float:
    q_num = 1.0 / (1.0 + _pairwise_sq_dists(y))
    np.fill_diagonal(q_num, 0.0)
    q = np.maximum(q_num / q_num.sum(), 1e-12)
    mask = ~np.eye(p.shape[0], dtype=bool)
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def tsne_embed(vectors: np.ndarray, perplexity: float = 30.0, seed: int = 0,
               iters: int = 1000, learning_rate: float | None = None,
               exaggeration: float = 12.0, exaggeration_iters: int = 250,
               kl_every: int = 50) -> TsneEmbedding:
    """Exact t-SNE with early exaggeration and momentum gradient descent.

    `learning_rate=None` picks max(N / (4 * exaggeration), 50), which keeps
    the exaggerated phase stable across dataset sizes.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError(f"expected an (N, d) matrix, got shape {x.shape}")
    n = x.shape[0]
    if n < 5:
        raise ContractError(f"t-SNE needs at least 5 points, got {n}")
    if not perplexity < n / 3:
        raise ContractError(f"perplexity {perplexity} infeasible for N={n}; needs perplexity < N/3")
    if learning_rate is None:
        learning_rate = max(n / (4.0 * exaggeration), 50.0)

    p = _joint_probabilities(x, perplexity)
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((n, 2)) * 1e-4
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)

    kl_history: list[tuple[int, float]] = [(0, _kl_divergence(p, y))]
    for it in range(iters):
        p_eff = p * exaggeration if it < exaggeration_iters else p
        q_num = 1.0 / (1.0 + _pairwise_sq_dists(y))
        np.fill_diagonal(q_num, 0.0)
        q = np.maximum(q_num / q_num.sum(), 1e-12)

        pq = (p_eff - q) * q_num
        grad = 4.0 * (np.diag(pq.sum(axis=1)) - pq) @ y

        momentum = 0.5 if it < exaggeration_iters else 0.8
        flipped = np.sign(grad) != np.sign(velocity)
        gains = np.where(flipped, gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        velocity = momentum * velocity - learning_rate * gains * grad
        y = y + velocity
        y = y - y.mean(axis=0)

        if (it + 1) % kl_every == 0:
            kl_history.append((it + 1, _kl_divergence(p, y)))

    final_kl = _kl_divergence(p, y)
    if kl_history[-1][0] != iters:
        kl_history.append((iters, final_kl))
    return TsneEmbedding(points=y, perplexity=perplexity, kl_history=kl_history,
                         final_kl=final_kl, seed=seed)


def achieved_perplexities(vectors: np.ndarray, perplexity: float) -> np.ndarray:
    """Per-point perplexity actually reached by the bandwidth search."""
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    dists = _pairwise_sq_dists(x)
    idx = np.arange(n)
    out = np.zeros(n)
    for i in range(n):
        row = dists[i, idx != i]
        probs = _bandwidth_search(row, perplexity)
        nonzero = probs[probs > 0]
        out[i] = float(np.exp(-np.sum(nonzero * np.log(nonzero))))
    return out


# -- flattening for the linear baseline --------------------------------------


def flatten_sequence(seq: np.ndarray) -> np.ndarray:
    """Row-major flatten of a (T, 17, 3) sequence: frame, then joint, then axis."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 3:
        raise ContractError(f"expected a (T, J, C) sequence, got shape {seq.shape}")
    return seq.reshape(-1).copy()


def unflatten_sequence(vec: np.ndarray, frames: int = 20, joints: int = 17,
                       coords: int = 3) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.size != frames * joints * coords:
        raise ContractError(
            f"vector of length {vec.size} cannot reshape to ({frames}, {joints}, {coords})")
    return vec.reshape(frames, joints, coords).copy()
