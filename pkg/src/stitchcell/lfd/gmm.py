"""Gaussian mixture fitting over (t, h) points with seeded, regularized EM.

Initialization is k-means++ (scipy's kmeans2); covariances get a small
diagonal ridge each M-step, scaled by the average data variance, so
near-static pose dimensions cannot collapse a component.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from ..errors import SingularComponent, TooFewPoints

EPS_SCALE = 1e-6
MAX_ITERS = 500
LL_TOL = 1e-8
MIN_POINTS_PER_COMPONENT = 8


@dataclass
class GmmModel:
    priors: np.ndarray        # (K,)
    means: np.ndarray         # (K, 7)
    covariances: np.ndarray   # (K, 7, 7)
    epsilon: float
    seed: int | None = None
    log_likelihoods: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.priors = np.asarray(self.priors, dtype=float).reshape(-1)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.covariances = np.asarray(self.covariances, dtype=float)
        if self.covariances.ndim == 2:
            self.covariances = self.covariances[None]

    @property
    def K(self) -> int:
        return len(self.priors)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def validate(self) -> None:
        assert abs(self.priors.sum() - 1.0) < 1e-12, "priors must sum to 1"
        for k in range(self.K):
            sym = np.max(np.abs(self.covariances[k] - self.covariances[k].T))
            assert sym < 1e-9, "covariance not symmetric"
            w = np.linalg.eigvalsh(self.covariances[k])
            assert w.min() > 0, "covariance not positive definite"

    def log_pdf(self, points: np.ndarray) -> np.ndarray:
        """Mixture log density at each point, (N,)."""
        return logsumexp(self._component_log_pdf(points) + np.log(self.priors), axis=1)

    def _component_log_pdf(self, points: np.ndarray) -> np.ndarray:
        """Per-component Gaussian log densities, (N, K)."""
        points = np.atleast_2d(points)
        n, d = points.shape
        out = np.empty((n, self.K))
        for k in range(self.K):
            try:
                chol = np.linalg.cholesky(self.covariances[k])
            except np.linalg.LinAlgError as e:
                raise SingularComponent(f"component {k} covariance not PD") from e
            diff = points - self.means[k]
            z = solve_triangular(chol, diff.T, lower=True)
            maha = np.sum(z * z, axis=0)
            logdet = 2.0 * np.sum(np.log(np.diag(chol)))
            out[:, k] = -0.5 * (maha + logdet + d * np.log(2.0 * np.pi))
        return out


def _initial_assignment(points: np.ndarray, K: int, seed) -> np.ndarray:
    if K == 1:
        return np.zeros(len(points), dtype=int)
    rng = np.random.default_rng(seed)
    # whiten so time and pose dimensions weigh comparably in seeding
    scale = points.std(axis=0)
    scale[scale == 0] = 1.0
    _, labels = kmeans2(points / scale, K, minit="++", seed=rng)
    return labels


def fit_gmm(points: np.ndarray, K: int, seed: int | None = 0) -> GmmModel:
    """EM-fit a K-component Gaussian mixture to (N, 7) points.

    Deterministic for a fixed seed.  Stops when the total log-likelihood
    improves by less than LL_TOL or after MAX_ITERS iterations.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    if K < 1:
        raise ValueError("K must be >= 1")
    if n < K * MIN_POINTS_PER_COMPONENT:
        raise TooFewPoints(
            f"{n} points cannot identify {K} components "
            f"(need >= {K * MIN_POINTS_PER_COMPONENT})"
        )

    epsilon = EPS_SCALE * float(np.mean(np.var(points, axis=0)))
    if epsilon <= 0:
        epsilon = EPS_SCALE

    labels = _initial_assignment(points, K, seed)
    resp = np.zeros((n, K))
    resp[np.arange(n), labels] = 1.0
    # guard: k-means can starve a cluster; give it a token share
    starved = resp.sum(axis=0) < 1.0
    if np.any(starved):
        resp[:, starved] += 1.0 / n
        resp /= resp.sum(axis=1, keepdims=True)

    model = GmmModel(
        priors=np.full(K, 1.0 / K), means=np.zeros((K, d)),
        covariances=np.stack([np.eye(d)] * K), epsilon=epsilon, seed=seed,
    )
    _m_step(model, points, resp)

    lls: list[float] = []
    for _ in range(MAX_ITERS):
        log_comp = model._component_log_pdf(points) + np.log(model.priors)
        log_norm = logsumexp(log_comp, axis=1)
        ll = float(log_norm.sum())
        if lls and ll - lls[-1] < LL_TOL:
            lls.append(ll)
            break
        lls.append(ll)
        resp = np.exp(log_comp - log_norm[:, None])
        _m_step(model, points, resp)
    model.log_likelihoods = lls
    return model


def _m_step(model: GmmModel, points: np.ndarray, resp: np.ndarray) -> None:
    n, d = points.shape
    nk = resp.sum(axis=0)
    nk = np.maximum(nk, 1e-300)
    model.priors = nk / nk.sum()
    model.means = (resp.T @ points) / nk[:, None]
    for k in range(model.K):
        diff = points - model.means[k]
        cov = (resp[:, k][:, None] * diff).T @ diff / nk[k]
        cov += model.epsilon * np.eye(d)
        model.covariances[k] = 0.5 * (cov + cov.T)


def select_k(
    points: np.ndarray,
    k_candidates,
    folds: int = 5,
    seed: int | None = 0,
) -> int:
    """Pick K by mean held-out per-point log-likelihood over k folds.

    Ties break toward the smaller K.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k_candidates = sorted(int(k) for k in k_candidates)
    n = len(points)
    need = folds * max(k_candidates) * MIN_POINTS_PER_COMPONENT
    if n < need:
        raise TooFewPoints(
            f"{n} points too few for {folds}-fold selection over K up to "
            f"{max(k_candidates)} (need >= {need})"
        )
    if len(k_candidates) == 1:
        return k_candidates[0]

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    fold_ids = np.array_split(order, folds)

    best_k, best_score = None, -np.inf
    for K in k_candidates:
        scores = []
        for fi, test_idx in enumerate(fold_ids):
            train_mask = np.ones(n, dtype=bool)
            train_mask[test_idx] = False
            model = fit_gmm(points[train_mask], K, seed=(seed or 0) + 1000 * K + fi)
            scores.append(float(np.mean(model.log_pdf(points[test_idx]))))
        score = float(np.mean(scores))
        if score > best_score:
            best_k, best_score = K, score
    return best_k
