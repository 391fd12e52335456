"""Gaussian mixture regression: condition a (t, h) mixture on query times.

For each component, the conditional mean is linear in the query time and
the conditional covariance is time-independent; component outputs are
blended by responsibilities beta_k(t).  The blended covariance uses the
squared responsibilities.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .gmm import GmmModel


def gmr(model: GmmModel, t_query) -> tuple[np.ndarray, np.ndarray]:
    """Conditional pose mean and covariance at the query time(s).

    t_query may be a scalar or an array of shape (Q,).  Returns
    (mu (6,) or (Q, 6), sigma (6, 6) or (Q, 6, 6)).
    """
    t = np.atleast_1d(np.asarray(t_query, dtype=float))
    scalar = np.isscalar(t_query) or np.ndim(t_query) == 0
    K = model.K

    mu_t = model.means[:, 0]                      # (K,)
    mu_h = model.means[:, 1:]                     # (K, 6)
    s_tt = model.covariances[:, 0, 0]             # (K,)
    s_ht = model.covariances[:, 1:, 0]            # (K, 6)
    s_hh = model.covariances[:, 1:, 1:]           # (K, 6, 6)

    # time-independent conditional covariance per component
    gain = s_ht / s_tt[:, None]                   # (K, 6) = Sigma_ht Sigma_tt^-1
    cond_cov = s_hh - gain[:, :, None] * s_ht[:, None, :]

    # responsibilities via the log-domain normal density in t
    log_w = (
        np.log(model.priors)[None, :]
        - 0.5 * np.log(2.0 * np.pi * s_tt)[None, :]
        - 0.5 * (t[:, None] - mu_t[None, :]) ** 2 / s_tt[None, :]
    )                                             # (Q, K)
    beta = np.exp(log_w - logsumexp(log_w, axis=1, keepdims=True))

    cond_mu = mu_h[None, :, :] + gain[None, :, :] * (
        t[:, None, None] - mu_t[None, :, None]
    )                                             # (Q, K, 6)

    mu = np.einsum("qk,qkd->qd", beta, cond_mu)
    sigma = np.einsum("qk,kde->qde", beta * beta, cond_cov)

    if scalar:
        return mu[0], sigma[0]
    return mu, sigma


def gmr_betas(model: GmmModel, t_query) -> np.ndarray:
    """Responsibilities beta_k(t), shape (Q, K); rows sum to 1."""
    t = np.atleast_1d(np.asarray(t_query, dtype=float))
    mu_t = model.means[:, 0]
    s_tt = model.covariances[:, 0, 0]
    log_w = (
        np.log(model.priors)[None, :]
        - 0.5 * np.log(2.0 * np.pi * s_tt)[None, :]
        - 0.5 * (t[:, None] - mu_t[None, :]) ** 2 / s_tt[None, :]
    )
    return np.exp(log_w - logsumexp(log_w, axis=1, keepdims=True))
