import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from leafstem.superpoint.tsne import TSNE, joint_affinities, kl_divergence, tsne_embed


def reference_affinities(X, perplexity):
    """Per-row bisection on the Gaussian precision, written out directly."""
    D = squareform(pdist(X, "sqeuclidean"))
    n = len(X)
    P = np.zeros((n, n))
    target = np.log(perplexity)
    for i in range(n):
        d = np.delete(D[i], i)
        lo, hi, beta = 0.0, np.inf, 1.0
        for _ in range(200):
            w = np.exp(-(d - d.min()) * beta)
            p = w / w.sum()
            h = -np.sum(p[p > 0] * np.log(p[p > 0]))
            if abs(h - target) < 1e-10:
                break
            if h > target:
                lo, beta = beta, beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi, beta = beta, (beta + lo) / 2
        P[i, np.arange(n) != i] = p
    return (P + P.T) / (2 * n)


def clusters(seed=0, n=90):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0]])
    return np.vstack([c + rng.normal(size=(n // 3, 3)) for c in centers])


def test_affinities_match_reference_bisection():
    X = clusters(1, 60)
    P = joint_affinities(X, 10.0, tol=1e-10, max_iter=200)
    assert np.abs(P - np.maximum(reference_affinities(X, 10.0), 1e-12) *
                  ~np.eye(len(X), dtype=bool)).max() < 1e-8
    assert P.sum() == pytest.approx(1.0, abs=1e-6)   # the floor adds a little mass
    assert np.array_equal(P, P.T)


def test_gradient_matches_finite_differences():
    X = clusters(2, 30)
    P = joint_affinities(X, 5.0)
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(30, 2))
    t = TSNE(perplexity=5.0, n_iter=1, random_state=0)
    t.fit(X)
    from leafstem.superpoint.tsne import _gradient_2d, _gradient_nd
    for fn in (_gradient_2d, _gradient_nd):
        num = np.empty(30 * 29 // 2)
        grad = np.empty_like(Y)
        fn(P, Y, 1.0, num, grad, False)
        eps = 1e-6
        for i, a in [(0, 0), (5, 1), (17, 0), (29, 1)]:
            Yp, Ym = Y.copy(), Y.copy()
            Yp[i, a] += eps
            Ym[i, a] -= eps
            fd = (kl_divergence(P, Yp) - kl_divergence(P, Ym)) / (2 * eps)
            assert grad[i, a] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_kl_decreases_and_trend_after_exaggeration():
    t = TSNE(perplexity=20, n_iter=600, kl_every=1, random_state=0)
    t.fit(clusters(3, 150))
    hist = dict(t.kl_history_)
    assert t.kl_divergence_ < hist[0]
    assert t.kl_divergence_ <= hist[50]
    tail = np.array([hist[i] for i in range(t.n_iter - 50, t.n_iter)] + [t.kl_divergence_])
    assert (np.diff(tail) <= 1e-12).all()
    # KL overshoots briefly when exaggeration is released; judge the trend after that
    post = np.array([hist[i] for i in range(t.exaggeration_iter + 25, t.n_iter)])
    assert (post[1:] / post[:-1]).max() <= 1.05


def test_embedding_separates_clusters():
    Y = tsne_embed(clusters(4, 120), perplexity=15, n_iter=500, seed=1)
    labels = np.repeat([0, 1, 2], 40)
    cent = np.array([Y[labels == k].mean(axis=0) for k in range(3)])
    nearest = np.argmin(((Y[:, None] - cent[None]) ** 2).sum(-1), axis=1)
    assert (nearest == labels).mean() >= 0.95


def test_seeded_runs_are_identical():
    X = clusters(5, 90)
    a = tsne_embed(X, perplexity=10, n_iter=200, seed=3)
    b = tsne_embed(X, perplexity=10, n_iter=200, seed=3)
    assert np.array_equal(a, b)


def test_three_dimensional_output():
    t = TSNE(n_components=3, perplexity=10, n_iter=300, random_state=0)
    Y = t.fit_transform(clusters(6, 60))
    assert Y.shape == (60, 3)
    assert t.kl_divergence_ < t.kl_history_[0][1]


def test_infeasible_perplexity():
    with pytest.raises(ValueError):
        TSNE(perplexity=30).fit(np.random.default_rng(0).normal(size=(60, 3)))
    with pytest.raises(ValueError):
        TSNE(perplexity=1.0).fit(np.random.default_rng(0).normal(size=(60, 3)))
