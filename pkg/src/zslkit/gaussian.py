"""Diagonal-Gaussian embeddings and closed-form dissimilarities.

An embedding is a diagonal Gaussian N(mu, diag(exp(log_var))). For two such
Gaussians the squared 2-Wasserstein distance collapses to

    ||mu_p - mu_q||^2 + sum_k (sigma_p,k - sigma_q,k)^2,

because diagonal covariances commute: the general Bures term
tr(S1) + tr(S2) - 2 tr((S2^1/2 S1 S2^1/2)^1/2) becomes
sum(v_p) + sum(v_q) - 2 sum(sigma_p sigma_q) = sum((sigma_p - sigma_q)^2).
KL divergence and the Bhattacharyya distance use their standard diagonal
closed forms. All math is float64.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ShapeError

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0


class DistanceKind(str, Enum):
    WASSERSTEIN2 = "wasserstein2"
    KULLBACK_LEIBLER = "kl"
    BHATTACHARYYA = "bhattacharyya"
    EUCLIDEAN_MEANS = "euclidean"


@dataclass
class DiagGaussian:
    """One latent embedding: mean and log of the diagonal covariance."""

    mean: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.log_var = np.asarray(self.log_var, dtype=np.float64)
        if self.mean.shape != self.log_var.shape or self.mean.ndim != 1:
            raise ShapeError(
                f"mean and log_var must be 1-D and equal length, got "
                f"{self.mean.shape} and {self.log_var.shape}"
            )

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def std(self):
        return np.exp(0.5 * self.log_var)

    @property
    def var(self):
        return np.exp(self.log_var)


class GaussianBatch:
    """A stack of diagonal Gaussians: means and log-variances of shape (n, K)."""

    def __init__(self, mean, log_var):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.log_var = np.asarray(log_var, dtype=np.float64)
        if self.mean.shape != self.log_var.shape or self.mean.ndim != 2:
            raise ShapeError(
                f"batch mean/log_var must be 2-D with equal shape, got "
                f"{self.mean.shape} and {self.log_var.shape}"
            )

    def __len__(self):
        return self.mean.shape[0]

    def __getitem__(self, i):
        return DiagGaussian(self.mean[i], self.log_var[i])

    @property
    def dim(self):
        return self.mean.shape[1]

    @property
    def std(self):
        return np.exp(0.5 * self.log_var)


def _check_pair(p, q):
    if p.dim != q.dim:
        raise ShapeError(f"dimension mismatch: {p.dim} vs {q.dim}")


def _w2_squared_terms(mu_p, lv_p, mu_q, lv_q):
    dmu = mu_p - mu_q
    dsig = np.exp(0.5 * lv_p) - np.exp(0.5 * lv_q)
    return (dmu * dmu + dsig * dsig).sum(axis=-1)


def _kl_terms(mu_p, lv_p, mu_q, lv_q):
    vp = np.exp(lv_p)
    vq = np.exp(lv_q)
    dmu = mu_p - mu_q
    return 0.5 * (vp / vq + dmu * dmu / vq - 1.0 + lv_q - lv_p).sum(axis=-1)


def _bhattacharyya_terms(mu_p, lv_p, mu_q, lv_q):
    s = np.exp(lv_p) + np.exp(lv_q)
    dmu = mu_p - mu_q
    return (
        dmu * dmu / (4.0 * s)
        + 0.5 * (np.log(s) - 0.5 * (lv_p + lv_q) - np.log(2.0))
    ).sum(axis=-1)


def _euclidean_terms(mu_p, lv_p, mu_q, lv_q):
    dmu = mu_p - mu_q
    return (dmu * dmu).sum(axis=-1)


_DISTANCE_FNS = {
    DistanceKind.WASSERSTEIN2: _w2_squared_terms,
    DistanceKind.KULLBACK_LEIBLER: _kl_terms,
    DistanceKind.BHATTACHARYYA: _bhattacharyya_terms,
    DistanceKind.EUCLIDEAN_MEANS: _euclidean_terms,
}


def distance(kind, mu_p, lv_p, mu_q, lv_q):
    """Elementwise distance over the last axis; broadcasts leading axes."""
    return _DISTANCE_FNS[DistanceKind(kind)](mu_p, lv_p, mu_q, lv_q)


def distance_with_grads(kind, mu_p, lv_p, mu_q, lv_q):
    """Distance plus partials w.r.t. every input, elementwise over rows.

    Returns (d, gmu_p, glv_p, gmu_q, glv_q) where d has the rows' shape and
    each gradient has the input shape.
    """
    kind = DistanceKind(kind)
    dmu = mu_p - mu_q
    if kind is DistanceKind.WASSERSTEIN2:
        sp = np.exp(0.5 * lv_p)
        sq = np.exp(0.5 * lv_q)
        dsig = sp - sq
        d = (dmu * dmu + dsig * dsig).sum(axis=-1)
        return d, 2.0 * dmu, dsig * sp, -2.0 * dmu, -dsig * sq
    if kind is DistanceKind.KULLBACK_LEIBLER:
        vp = np.exp(lv_p)
        vq = np.exp(lv_q)
        d = 0.5 * (vp / vq + dmu * dmu / vq - 1.0 + lv_q - lv_p).sum(axis=-1)
        gmu_p = dmu / vq
        glv_p = 0.5 * (vp / vq - 1.0)
        glv_q = 0.5 * (1.0 - vp / vq - dmu * dmu / vq)
        return d, gmu_p, glv_p, -gmu_p, glv_q
    if kind is DistanceKind.BHATTACHARYYA:
        vp = np.exp(lv_p)
        vq = np.exp(lv_q)
        s = vp + vq
        d = (
            dmu * dmu / (4.0 * s)
            + 0.5 * (np.log(s) - 0.5 * (lv_p + lv_q) - np.log(2.0))
        ).sum(axis=-1)
        ds = 0.5 / s - dmu * dmu / (4.0 * s * s)
        gmu_p = dmu / (2.0 * s)
        return d, gmu_p, vp * ds - 0.25, -gmu_p, vq * ds - 0.25
    # euclidean between means
    d = (dmu * dmu).sum(axis=-1)
    zeros = np.zeros_like(lv_p)
    return d, 2.0 * dmu, zeros, -2.0 * dmu, np.zeros_like(lv_q)


def pairwise_distance(kind, batch_a, batch_b):
    """All-pairs distance matrix of shape (len(a), len(b))."""
    if batch_a.dim != batch_b.dim:
        raise ShapeError(f"dimension mismatch: {batch_a.dim} vs {batch_b.dim}")
    return distance(
        kind,
        batch_a.mean[:, None, :],
        batch_a.log_var[:, None, :],
        batch_b.mean[None, :, :],
        batch_b.log_var[None, :, :],
    )


def w2_squared(p, q):
    """Squared 2-Wasserstein distance between two diagonal Gaussians."""
    _check_pair(p, q)
    return float(_w2_squared_terms(p.mean, p.log_var, q.mean, q.log_var))


def w2_squared_backward(p, q, grad_out=1.0):
    """Partials of w2_squared w.r.t. both arguments, scaled by grad_out.

    Returns ((grad_mean_p, grad_log_var_p), (grad_mean_q, grad_log_var_q)).
    """
    _check_pair(p, q)
    _, gmu_p, glv_p, gmu_q, glv_q = distance_with_grads(
        DistanceKind.WASSERSTEIN2, p.mean, p.log_var, q.mean, q.log_var
    )
    g = float(grad_out)
    return (g * gmu_p, g * glv_p), (g * gmu_q, g * glv_q)


def kl_divergence(p, q):
    """KL(p || q) for diagonal Gaussians; asymmetric, nonnegative."""
    _check_pair(p, q)
    return float(_kl_terms(p.mean, p.log_var, q.mean, q.log_var))


def bhattacharyya(p, q):
    """Bhattacharyya distance for diagonal Gaussians; symmetric, nonnegative."""
    _check_pair(p, q)
    return float(_bhattacharyya_terms(p.mean, p.log_var, q.mean, q.log_var))


def sample(p, n, rng):
    """Draw n reparameterized samples mu + sigma * z, z ~ N(0, I)."""
    if n < 1:
        raise ShapeError(f"sample count must be >= 1, got {n}")
    z = rng.standard_normal((n, p.dim))
    return p.mean + p.std * z
