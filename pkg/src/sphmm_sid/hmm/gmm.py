"""Diagonal-covariance Gaussian mixtures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

VAR_FLOOR = 1e-6
_LOG_2PI = np.log(2 * np.pi)


class GmmError(ValueError):
    pass


@dataclass
class GaussianMixture:
    """Weights (M,), means (M, d) and diagonal variances (M, d)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if self.means.shape != self.variances.shape or len(self.weights) != len(self.means):
            raise GmmError("inconsistent mixture parameter shapes")

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_densities(self, X: np.ndarray) -> np.ndarray:
        """log(w_m) + log N(x_t; mu_m, diag var_m), shape (T, M)."""
        X = np.atleast_2d(X)
        if X.shape[1] != self.dim:
            raise GmmError(f"dimension mismatch: got {X.shape[1]}, mixture has {self.dim}")
        return _component_log_densities(X, self.weights[None], self.means[None],
                                        self.variances[None])[:, 0]

    def log_density(self, X: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_densities(X), axis=1)


def gmm_log_density(gmm: GaussianMixture, x: np.ndarray) -> float:
    """Log density of a single vector under ``gmm``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise GmmError("expected a single feature vector")
    return float(gmm.log_density(x[None])[0])


def _component_log_densities(X, weights, means, variances):
    """Vectorized over states: weights (N, M), means/variances (N, M, d) -> (T, N, M)."""
    n, m, d = means.shape
    prec = 1.0 / variances
    # expanded quadratic form: x'Px - 2 x'P mu + mu'P mu
    quad = ((X * X) @ prec.reshape(-1, d).T
            - 2.0 * X @ (means * prec).reshape(-1, d).T
            + np.sum(means * means * prec, axis=-1).reshape(1, -1))
    log_norm = -0.5 * (d * _LOG_2PI + np.sum(np.log(variances), axis=-1))
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    return (log_w + log_norm).reshape(1, n, m) - 0.5 * quad.reshape(-1, n, m)


def stack(gmms):
    """Stack per-state mixtures (same M and d) into (N, M) / (N, M, d) arrays."""
    return (np.stack([g.weights for g in gmms]), np.stack([g.means for g in gmms]),
            np.stack([g.variances for g in gmms]))


def state_log_densities(gmms, X: np.ndarray):
    """Per-state emission log densities (T, N) and per-component terms (T, N, M)."""
    X = np.atleast_2d(X)
    w, mu, var = stack(gmms)
    if X.shape[1] != mu.shape[-1]:
        raise GmmError(f"dimension mismatch: got {X.shape[1]}, model expects {mu.shape[-1]}")
    comp = _component_log_densities(X, w, mu, var)
    return logsumexp(comp, axis=2), comp


def kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; returns k rows of X (repeats allowed when X has few distinct rows)."""
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def kmeans(X: np.ndarray, k: int, rng: np.random.Generator, n_iter: int = 20):
    """Lloyd iterations from k-means++ seeds. Returns (centers, labels)."""
    centers = kmeans_pp(X, k, rng)
    labels = np.zeros(len(X), dtype=np.int64)
    for _ in range(n_iter):
        dist = np.sum((X[:, None, :] - centers[None]) ** 2, axis=2)
        new_labels = np.argmin(dist, axis=1)
        for c in range(k):
            members = X[new_labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centers, labels


def init_mixture(X: np.ndarray, m: int, rng: np.random.Generator,
                 var_floor=VAR_FLOOR) -> GaussianMixture:
    """Equal-weight mixture with k-means centres and per-cluster variances.

    Clusters with fewer than two points take the pooled variance of ``X``.
    Works with ``len(X) < m`` (centres then repeat).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if len(X) == 0:
        raise GmmError("cannot initialize a mixture from no data")
    pooled = np.maximum(X.var(axis=0), var_floor)
    centers, labels = kmeans(X, m, rng)
    variances = np.tile(pooled, (m, 1))
    for c in range(m):
        members = X[labels == c]
        if len(members) >= 2:
            variances[c] = np.maximum(members.var(axis=0), var_floor)
    return GaussianMixture(np.full(m, 1.0 / m), centers, variances)


def reestimate(gmms, X: np.ndarray, comp_log: np.ndarray, state_post: np.ndarray,
               var_floor=VAR_FLOOR):
    """M-step for per-state mixtures.

    Parameters
    ----------
    gmms : list of GaussianMixture
        Current mixtures; components that receive no posterior mass keep
        their parameters.
    X : ndarray (T, d)
        Observations pooled over all training sequences.
    comp_log : ndarray (T, N, M)
        Weighted component log densities under the current mixtures.
    state_post : ndarray (T, N)
        State occupation posteriors.
    var_floor : float or ndarray (d,)
    """
    resp = np.exp(comp_log - logsumexp(comp_log, axis=2, keepdims=True))
    resp = np.nan_to_num(resp) * state_post[:, :, None]
    new = []
    for n, g in enumerate(gmms):
        r = resp[:, n, :]
        occ = r.sum(axis=0)
        total = occ.sum()
        if total <= 0:
            new.append(g)
            continue
        weights = occ / total
        means = g.means.copy()
        variances = g.variances.copy()
        live = occ > 0
        means[live] = (r[:, live].T @ X) / occ[live, None]
        for m in np.flatnonzero(live):
            diff = X - means[m]
            variances[m] = r[:, m] @ (diff * diff) / occ[m]
        variances = np.maximum(variances, var_floor)
        new.append(GaussianMixture(weights, means, variances))
    return new


def gmm_fit(data, m: int, seed: int = 0, tol: float = 1e-6, max_iter: int = 100,
            var_floor=VAR_FLOOR, history=None) -> GaussianMixture:
    """Fit a diagonal GMM by EM from a k-means++ start.

    Stops when the total data log-likelihood improves by less than ``tol``
    or after ``max_iter`` iterations. If ``history`` is a list, the
    log-likelihood before every M-step is appended to it.
    """
    X = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if len(X) < m:
        raise GmmError(f"need at least {m} points for {m} components, got {len(X)}")
    rng = np.random.default_rng(seed)
    centers = kmeans_pp(X, m, rng)
    pooled = np.maximum(X.var(axis=0), var_floor)
    gmm = GaussianMixture(np.full(m, 1.0 / m), centers, np.tile(pooled, (m, 1)))
    prev = -np.inf
    ones = np.ones((len(X), 1))
    for _ in range(max_iter):
        comp = gmm.component_log_densities(X)
        ll = float(logsumexp(comp, axis=1).sum())
        if history is not None:
            history.append(ll)
        if ll - prev < tol:
            break
        prev = ll
        gmm = reestimate([gmm], X, comp[:, None, :], ones, var_floor)[0]
    return gmm


def gmm_sample(gmm: GaussianMixture, rng: np.random.Generator) -> np.ndarray:
    """Draw one vector from ``gmm``."""
    m = rng.choice(gmm.n_components, p=gmm.weights)
    return gmm.means[m] + np.sqrt(gmm.variances[m]) * rng.standard_normal(gmm.dim)
