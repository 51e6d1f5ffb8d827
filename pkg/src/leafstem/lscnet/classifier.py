"""Leaf/stem classifier over whole point sets (one superpoint per sample)."""

from __future__ import annotations

import json
import logging

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_random_state

from ..cloud import LEAF, STEM
from ..validation import check_points
from .model import LSCNet, NetworkSpec

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def normalize_points(points):
    """Translate to the centroid and scale into the unit sphere."""
    points = np.asarray(points, dtype=np.float64)
    centered = points - points.mean(axis=0)
    radius = np.sqrt((centered ** 2).sum(axis=1).max())
    return centered / radius if radius > 0 else centered


def resample(points, n, rng):
    """Exactly ``n`` rows: with replacement when short, without when long."""
    m = len(points)
    if m == n:
        return points
    idx = rng.choice(m, n, replace=m < n)
    return points[idx]


def prepare(points, n, rng):
    return normalize_points(resample(check_points(points), n, rng))


class LSCNetClassifier(BaseEstimator, ClassifierMixin):
    """Classify point sets as Stem (0) or Leaf (1).

    ``X`` is a sequence of ``(n_i, 3)`` arrays. Each sample is resampled to
    ``network["n_points"]`` points and normalized into the unit sphere before
    it reaches the network. Training is mini-batch SGD with momentum and a
    step learning-rate decay.

    Parameters
    ----------
    network : dict or None
        Keyword arguments for :class:`NetworkSpec`; ``None`` uses the defaults.
    class_weight : {"balanced", None}
    dtype : {"float32", "float64"}
    """

    def __init__(self, network=None, epochs=100, batch_size=16, learning_rate=1e-3,
                 momentum=0.9, lr_step=20, lr_gamma=0.5, weight_decay=0.0,
                 class_weight="balanced", dtype="float32", random_state=0, verbose=False):
        self.network = network
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.lr_step = lr_step
        self.lr_gamma = lr_gamma
        self.weight_decay = weight_decay
        self.class_weight = class_weight
        self.dtype = dtype
        self.random_state = random_state
        self.verbose = verbose

    # -- construction ---------------------------------------------------------
    def _spec(self):
        return NetworkSpec(**(self.network or {}))

    def _build(self, seed):
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            net = LSCNet(self._spec())
        return net.to(_DTYPES[self.dtype])

    def _batch(self, samples, rng):
        n = self.model_.spec.n_points
        arr = np.stack([prepare(s, n, rng) for s in samples])
        return torch.as_tensor(arr, dtype=_DTYPES[self.dtype])

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("LSCNetClassifier is not fitted")

    # -- training -------------------------------------------------------------
    def fit(self, X, y):
        X = list(X)
        y = np.asarray(y)
        if len(X) != len(y):
            raise ValueError("X and y lengths differ")
        if not np.isin(y, (STEM, LEAF)).all():
            raise ValueError("labels must be Stem (0) or Leaf (1)")
        if len(np.unique(y)) < 2:
            raise ValueError("training needs at least one example of each class")
        rs = check_random_state(self.random_state)
        seed = int(rs.randint(2 ** 31 - 1))
        self.classes_ = np.array([STEM, LEAF])
        self.model_ = self._build(seed)
        counts = np.bincount(y, minlength=2).astype(np.float64)
        weights = len(y) / (2.0 * counts) if self.class_weight == "balanced" else np.ones(2)
        loss_fn = torch.nn.CrossEntropyLoss(weight=torch.as_tensor(weights, dtype=_DTYPES[self.dtype]))
        opt = torch.optim.SGD(self.model_.parameters(), lr=self.learning_rate,
                              momentum=self.momentum, weight_decay=self.weight_decay)
        sched = torch.optim.lr_scheduler.StepLR(opt, step_size=self.lr_step, gamma=self.lr_gamma)
        gen = torch.Generator().manual_seed(seed)
        n_batches = max(1, int(np.ceil(len(X) / self.batch_size)))
        if len(X) >= 2:
            # batch norm needs two or more samples per batch
            n_batches = min(n_batches, len(X) // 2)
        target = torch.as_tensor(y, dtype=torch.long)
        self.loss_curve_ = []
        self.model_.train()
        for epoch in range(self.epochs):
            order = rs.permutation(len(X))
            total = 0.0
            for idx in np.array_split(order, n_batches):
                xb = self._batch([X[i] for i in idx], rs)
                opt.zero_grad()
                loss = loss_fn(self.model_(xb, gen), target[idx])
                if not torch.isfinite(loss):
                    raise FloatingPointError(f"training loss is not finite at epoch {epoch + 1}")
                loss.backward()
                opt.step()
                total += float(loss.detach()) * len(idx)
            sched.step()
            self.loss_curve_.append(total / len(X))
            if self.verbose:
                log.info("epoch %d loss %.4f", epoch + 1, self.loss_curve_[-1])
        self.model_.eval()
        self.n_features_in_ = 3
        return self

    # -- inference ------------------------------------------------------------
    def decision_function(self, X, batch_size=64, seed=0):
        """Raw scores, shape (n_samples, 2), columns ordered as ``classes_``."""
        self._check_fitted()
        X = list(X)
        rng = np.random.default_rng(seed)
        out = []
        self.model_.eval()
        with torch.no_grad():
            for start in range(0, len(X), batch_size):
                xb = self._batch(X[start:start + batch_size], rng)
                out.append(self.model_(xb).to(torch.float64).numpy())
        return np.concatenate(out) if out else np.empty((0, 2))

    def predict_proba(self, X):
        s = self.decision_function(X)
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    # -- persistence ----------------------------------------------------------
    def save(self, path, config=None):
        """Write an ``.npz`` checkpoint: float64 row-major tensors plus JSON metadata."""
        self._check_fitted()
        meta = {
            "format": "leafstem-lscnet",
            "version": CHECKPOINT_VERSION,
            "network": self.model_.spec.to_dict(),
            "params": {k: v for k, v in self.get_params().items() if k != "network"},
            "classes": self.classes_.tolist(),
            "loss_curve": list(getattr(self, "loss_curve_", [])),
            "config": config or {},
        }
        arrays = {f"tensor/{k}": np.ascontiguousarray(v.detach().to(torch.float64).numpy())
                  for k, v in self.model_.state_dict().items() if v.is_floating_point()}
        arrays.update({f"int/{k}": v.numpy() for k, v in self.model_.state_dict().items()
                       if not v.is_floating_point()})
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("format") != "leafstem-lscnet":
                raise ValueError(f"{path} is not an LSCnet checkpoint")
            if meta["version"] > CHECKPOINT_VERSION:
                raise ValueError(f"checkpoint version {meta['version']} is newer than supported")
            tensors = {k.split("/", 1)[1]: torch.as_tensor(data[k]) for k in data.files
                       if k.startswith(("tensor/", "int/"))}
        clf = cls(network=meta["network"], **meta["params"])
        clf.model_ = clf._build(0)
        dtype = _DTYPES[clf.dtype]
        state = {k: (v.to(dtype) if v.is_floating_point() else v) for k, v in tensors.items()}
        clf.model_.load_state_dict(state)
        clf.model_.eval()
        clf.classes_ = np.asarray(meta["classes"])
        clf.loss_curve_ = meta["loss_curve"]
        clf.n_features_in_ = 3
        clf.checkpoint_meta_ = meta
        return clf


def classify(points, model: LSCNetClassifier):
    """``(score_leaf, score_stem)`` for one point set."""
    s = model.decision_function([points])[0]
    return float(s[1]), float(s[0])


def train(samples, labels, **params) -> LSCNetClassifier:
    return LSCNetClassifier(**params).fit(samples, labels)
