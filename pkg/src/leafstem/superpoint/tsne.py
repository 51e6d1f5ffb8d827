"""Exact t-SNE with per-point perplexity calibration."""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from numba import njit
from sklearn.utils import check_array, check_random_state

log = logging.getLogger(__name__)

_EPS = 1e-12


@njit(cache=True)
def _calibrate(X, perplexity, tol, max_iter):
    n, dim = X.shape
    target = np.log(perplexity)
    P = np.zeros((n, n))
    row = np.empty(n)
    for i in range(n):
        dmin = np.inf
        for j in range(n):
            d = 0.0
            for c in range(dim):
                t = X[i, c] - X[j, c]
                d += t * t
            row[j] = d
            if j != i and d < dmin:
                dmin = d
        tmp = np.empty(n - 1)
        k = 0
        for j in range(n):
            if j != i:
                tmp[k] = row[j]
                k += 1
        med = np.median(tmp)
        beta = 1.0 / med if med > 0 else 1.0
        lo = 0.0
        hi = np.inf
        for _ in range(max_iter):
            s = 0.0
            sd = 0.0
            for j in range(n):
                if j != i:
                    e = np.exp(-(row[j] - dmin) * beta)
                    s += e
                    sd += (row[j] - dmin) * e
            h = beta * sd / s + np.log(s)
            diff = h - target
            if abs(diff) < tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
        s = 0.0
        for j in range(n):
            if j != i:
                e = np.exp(-(row[j] - dmin) * beta)
                P[i, j] = e
                s += e
        for j in range(n):
            P[i, j] /= s
    return P


@njit(cache=True, fastmath=True)
def _gradient_nd(P, Y, exaggeration, num, grad, with_kl):
    """Fills ``grad`` with dKL/dY for ``exaggeration * P``; returns KL(P||Q) if asked.

    ``num`` is condensed scratch of length n(n-1)/2.
    """
    n, dim = Y.shape
    z = 0.0
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            d = 0.0
            for c in range(dim):
                t = Y[i, c] - Y[j, c]
                d += t * t
            v = 1.0 / (1.0 + d)
            num[k] = v
            z += v
            k += 1
    inv_z = 0.5 / z
    grad[:, :] = 0.0
    acc = np.empty(dim)
    kl = 0.0
    k = 0
    for i in range(n):
        acc[:] = 0.0
        for j in range(i + 1, n):
            v = num[k]
            k += 1
            p = P[i, j]
            coef = 4.0 * (exaggeration * p - v * inv_z) * v
            for c in range(dim):
                t = coef * (Y[i, c] - Y[j, c])
                acc[c] += t
                grad[j, c] -= t
            if with_kl:
                kl += 2.0 * p * np.log(p / max(v * inv_z, 1e-12))
        for c in range(dim):
            grad[i, c] += acc[c]
    return kl


@njit(cache=True, fastmath=True)
def _gradient_2d(P, Y, exaggeration, num, grad, with_kl):
    # same contract as _gradient_nd, unrolled for two components
    n = Y.shape[0]
    z = 0.0
    k = 0
    for i in range(n):
        y0 = Y[i, 0]
        y1 = Y[i, 1]
        for j in range(i + 1, n):
            a = y0 - Y[j, 0]
            b = y1 - Y[j, 1]
            v = 1.0 / (1.0 + a * a + b * b)
            num[k] = v
            z += v
            k += 1
    inv_z = 0.5 / z
    grad[:, :] = 0.0
    kl = 0.0
    k = 0
    for i in range(n):
        y0 = Y[i, 0]
        y1 = Y[i, 1]
        g0 = 0.0
        g1 = 0.0
        for j in range(i + 1, n):
            v = num[k]
            k += 1
            p = P[i, j]
            coef = 4.0 * (exaggeration * p - v * inv_z) * v
            a = coef * (y0 - Y[j, 0])
            b = coef * (y1 - Y[j, 1])
            g0 += a
            g1 += b
            grad[j, 0] -= a
            grad[j, 1] -= b
            if with_kl:
                kl += 2.0 * p * np.log(p / max(v * inv_z, 1e-12))
        grad[i, 0] += g0
        grad[i, 1] += g1
    return kl


def joint_affinities(X, perplexity, tol=1e-5, max_iter=50):
    """Symmetrised joint affinities ``(p_{j|i} + p_{i|j}) / 2N``, floored at 1e-12."""
    P = _calibrate(np.ascontiguousarray(X, dtype=np.float64), float(perplexity), tol, max_iter)
    P = (P + P.T) / (2.0 * len(X))
    np.maximum(P, _EPS, out=P)
    np.fill_diagonal(P, 0.0)
    return P


def _student_kernel(Y):
    sum_y = np.einsum("ij,ij->i", Y, Y)
    num = -2.0 * (Y @ Y.T)
    num += sum_y[:, None]
    num += sum_y[None, :]
    num += 1.0
    np.reciprocal(num, out=num)
    np.fill_diagonal(num, 0.0)
    return num


def kl_divergence(P, Y):
    """KL(P || Q) for joint affinities ``P`` and embedding ``Y``."""
    num = _student_kernel(Y)
    Q = np.maximum(num / num.sum(), _EPS)
    mask = ~np.eye(len(P), dtype=bool)
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


class TSNE(BaseEstimator, TransformerMixin):
    """Exact t-SNE embedding.

    Gradient descent with momentum and adaptive gains. Affinities are
    multiplied by ``early_exaggeration`` for the first ``exaggeration_iter``
    iterations, during which momentum is ``momentum_early``.

    Attributes
    ----------
    embedding_ : ndarray of shape (n_samples, n_components)
    kl_history_ : list of (iteration, KL) pairs, KL measured against the
        un-exaggerated affinities. Iteration 0 is the initial layout.
    kl_divergence_ : float, KL at the final iterate.
    """

    def __init__(self, n_components=2, perplexity=30.0, n_iter=1000, learning_rate=200.0,
                 early_exaggeration=12.0, exaggeration_iter=250, momentum_early=0.5,
                 momentum=0.8, min_gain=0.01, init_scale=1e-4, kl_every=1,
                 perplexity_tol=1e-5, perplexity_iter=50, random_state=None):
        self.n_components = n_components
        self.perplexity = perplexity
        self.n_iter = n_iter
        self.learning_rate = learning_rate
        self.early_exaggeration = early_exaggeration
        self.exaggeration_iter = exaggeration_iter
        self.momentum_early = momentum_early
        self.momentum = momentum
        self.min_gain = min_gain
        self.init_scale = init_scale
        self.kl_every = kl_every
        self.perplexity_tol = perplexity_tol
        self.perplexity_iter = perplexity_iter
        self.random_state = random_state

    def _validate(self, X):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        n = len(X)
        if self.n_iter <= 0:
            raise ValueError("n_iter must be positive")
        if not 1.0 < self.perplexity < n / 3.0:
            raise ValueError(
                f"perplexity {self.perplexity} infeasible for {n} points (need 1 < perplexity < N/3)")
        return X

    def fit(self, X, y=None):
        self.fit_transform(X)
        return self

    def fit_transform(self, X, y=None):
        X = self._validate(X)
        rng = check_random_state(self.random_state)
        P = joint_affinities(X, self.perplexity, self.perplexity_tol, self.perplexity_iter)
        self.affinities_ = P
        n = len(X)
        Y = rng.standard_normal((n, self.n_components)) * self.init_scale
        update = np.zeros_like(Y)
        gains = np.ones_like(Y)
        num = np.empty(n * (n - 1) // 2)
        grad = np.empty_like(Y)
        _gradient = _gradient_2d if self.n_components == 2 else _gradient_nd
        history = []
        for it in range(self.n_iter):
            exaggerate = it < self.exaggeration_iter
            record = it % self.kl_every == 0
            if exaggerate and record:
                history.append((it, float(_gradient(P, Y, 1.0, num, grad, True))))
            kl = _gradient(P, Y, self.early_exaggeration if exaggerate else 1.0, num, grad,
                           record and not exaggerate)
            if record and not exaggerate:
                history.append((it, float(kl)))
            momentum = self.momentum_early if exaggerate else self.momentum
            same_sign = np.sign(grad) == np.sign(update)
            gains = np.where(same_sign, gains * 0.8, gains + 0.2)
            np.clip(gains, self.min_gain, None, out=gains)
            update = momentum * update - self.learning_rate * gains * grad
            Y = Y + update
            Y -= Y.mean(axis=0)
        history.append((self.n_iter, float(_gradient(P, Y, 1.0, num, grad, True))))
        self.embedding_ = Y
        self.kl_history_ = history
        self.kl_divergence_ = history[-1][1]
        self.n_iter_ = self.n_iter
        log.debug("t-SNE n=%d KL %.4f -> %.4f", n, history[0][1], history[-1][1])
        return Y


def tsne_embed(points, perplexity=30.0, n_iter=1000, learning_rate=200.0,
               early_exaggeration=12.0, exaggeration_iter=250, seed=0):
    """Embed ``points`` in 2D; returns an ``(N, 2)`` array."""
    return TSNE(perplexity=perplexity, n_iter=n_iter, learning_rate=learning_rate,
                early_exaggeration=early_exaggeration, exaggeration_iter=exaggeration_iter,
                random_state=seed).fit_transform(points)
