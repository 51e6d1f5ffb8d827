"""Flat pipeline configuration with per-key validation."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .partition import BlockSpec


class ConfigError(ValueError):
    pass


def _pos(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0


def _nonneg(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0


def _pos_int(v):
    return isinstance(v, int) and not isinstance(v, bool) and v > 0


def _nonneg_int(v):
    return isinstance(v, int) and not isinstance(v, bool) and v >= 0


def _unit(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and 0 < v <= 1


def _offsets(v):
    return isinstance(v, (list, tuple)) and len(v) > 0 and all(_nonneg(o) for o in v)


# Network presets. "paper" is the full-size classifier; "desk" is a reduced
# one that trains on a laptop CPU in minutes.
NETWORK_PRESETS = {
    "paper": {},
    "desk": {
        "n_points": 256,
        "layers": [
            {"n_centers": 64, "radius": 0.25, "group_size": 16, "widths": (32, 32, 64),
             "csm": True, "rum": True},
            {"n_centers": 16, "radius": 0.5, "group_size": 16, "widths": (64, 64, 128),
             "csm": True, "rum": True},
        ],
        "global_widths": (128, 256),
        "head_widths": (128, 64),
        "dropout": 0.3,
        "attention_dim": 32,
    },
}


# Whole-pipeline presets: overrides applied on top of the defaults.
PRESETS = {
    "default": {},
    # laptop-scale runs: capped embedding size, small-cluster absorption,
    # reduced network and a short schedule
    "desk": {
        "superpoint.max_points": 1500,
        "cluster.min_size": 5,
        "train.network": "desk",
        "train.epochs": 20,
        "train.learning_rate": 0.01,
        "train.lr_step": 10,
    },
}


@dataclass(frozen=True)
class _Key:
    default: object
    check: object
    doc: str


_KEYS = {
    # normalization
    "msac.inlier_threshold": _Key(0.5, _pos, "MSAC inlier distance (cm)"),
    "msac.iterations": _Key(1000, _pos_int, "MSAC hypotheses"),
    "plant.link_radius": _Key(0.5, _pos, "linking distance for the plant component (cm)"),
    # superpoints
    "superpoint.voxel": _Key(0.12, _pos, "voxel edge before embedding (cm)"),
    "tsne.perplexity": _Key(30.0, _pos, "t-SNE perplexity"),
    "tsne.iterations": _Key(1000, _pos_int, "t-SNE iterations"),
    "tsne.learning_rate": _Key(200.0, _pos, "t-SNE step size"),
    "tsne.early_exaggeration": _Key(12.0, _pos, "t-SNE early exaggeration"),
    "tsne.exaggeration_iter": _Key(250, _nonneg_int, "iterations with exaggeration"),
    "cluster.threshold2d": _Key(1.0, _pos, "2D linking distance in the embedding"),
    "linear.threshold": _Key(0.95, _unit, "linearity above which a cluster is a line"),
    "linear.neighbors": _Key(30, _nonneg_int, "neighbors for the local linearity gate (0 = off)"),
    "solidity.threshold": _Key(0.8, _unit, "solidity below which a cluster is split"),
    "solidity.alpha_factor": _Key(4.0, _pos, "alpha radius in median nearest-neighbor distances"),
    "solidity.max_depth": _Key(6, _nonneg_int, "recursion cap for spectral splitting"),
    "spectral.neighbors": _Key(10, _pos_int, "k for the spectral splitting graph"),
    "cluster.min_size": _Key(1, _pos_int, "clusters smaller than this join a neighbor"),
    "superpoint.max_points": _Key(5000, _pos_int, "cap on embedded points (random subsample above)"),
    # blocks
    "filter.min_conf": _Key(6, _nonneg_int, "minimum confidence kept"),
    "block.edge": _Key(10.0, _pos, "XY block edge (cm)"),
    "block.offsets": _Key([0.0, 5.0], _offsets, "grid offsets, one pass each (cm)"),
    "block.points": _Key(8192, _pos_int, "points per resampled block"),
    "block.voxel": _Key(0.1, _pos, "voxel edge before blocking (cm)"),
    "block.min_train_points": _Key(100, _nonneg_int, "training blocks need this many points"),
    # classifier
    "train.network": _Key("paper", lambda v: v in NETWORK_PRESETS, "network preset"),
    "train.epochs": _Key(100, _pos_int, "training epochs"),
    "train.batch_size": _Key(16, lambda v: _pos_int(v) and v >= 2, "training batch size"),
    "train.learning_rate": _Key(1e-3, _pos, "SGD step size"),
    "train.momentum": _Key(0.9, lambda v: _nonneg(v) and v < 1, "SGD momentum"),
    "train.lr_step": _Key(20, _pos_int, "epochs between step-size decays"),
    "train.lr_gamma": _Key(0.5, _unit, "step-size decay factor"),
    "train.weight_decay": _Key(0.0, _nonneg, "L2 penalty"),
    "train.min_purity": _Key(0.7, _unit, "training superpoints need this label purity"),
    # reproducibility
    "seed": _Key(0, _nonneg_int, "master seed"),
}


class PipelineConfig:
    """Every tunable of the pipeline as one flat mapping.

    Unknown keys and invalid values raise :class:`ConfigError` as soon as
    they are set.
    """

    KEYS = _KEYS

    def __init__(self, **values):
        self._values = {k: spec.default for k, spec in _KEYS.items()}
        self.update(values)

    def update(self, values):
        for key, value in values.items():
            if key not in _KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            default = _KEYS[key].default
            if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if isinstance(default, list) and isinstance(value, tuple):
                value = list(value)
            if not _KEYS[key].check(value):
                raise ConfigError(f"invalid value for {key}: {value!r} ({_KEYS[key].doc})")
            self._values[key] = value
        if not all(o < self._values["block.edge"] for o in self._values["block.offsets"]):
            raise ConfigError("block.offsets must be smaller than block.edge")
        if self._values["tsne.perplexity"] <= 1:
            raise ConfigError("tsne.perplexity must be > 1")
        return self

    def __getitem__(self, key):
        return self._values[key]

    def as_dict(self):
        return dict(self._values)

    def to_json(self):
        return json.dumps(self._values, sort_keys=True)

    @classmethod
    def preset(cls, name, **values):
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **values})

    @classmethod
    def from_file(cls, path, preset="default"):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.preset(preset, **data)

    # -- views for the stages --------------------------------------------------------
    def extractor_params(self, seed=None):
        v = self._values
        return dict(
            voxel_size=v["superpoint.voxel"], perplexity=v["tsne.perplexity"],
            tsne_iter=v["tsne.iterations"],
            learning_rate=v["tsne.learning_rate"], early_exaggeration=v["tsne.early_exaggeration"],
            exaggeration_iter=v["tsne.exaggeration_iter"], cluster_threshold=v["cluster.threshold2d"],
            linear_threshold=v["linear.threshold"],
            linear_neighbors=v["linear.neighbors"] or None,
            solidity_threshold=v["solidity.threshold"], alpha_factor=v["solidity.alpha_factor"],
            max_depth=v["solidity.max_depth"], spectral_neighbors=v["spectral.neighbors"],
            min_cluster_size=v["cluster.min_size"], max_points=v["superpoint.max_points"],
            random_state=v["seed"] if seed is None else seed,
        )

    def classifier_params(self):
        v = self._values
        return dict(
            network=NETWORK_PRESETS[v["train.network"]] or None, epochs=v["train.epochs"],
            batch_size=v["train.batch_size"], learning_rate=v["train.learning_rate"],
            momentum=v["train.momentum"], lr_step=v["train.lr_step"], lr_gamma=v["train.lr_gamma"],
            weight_decay=v["train.weight_decay"],
            random_state=v["seed"],
        )

    def block_spec(self):
        v = self._values
        return BlockSpec(edge=v["block.edge"], offsets=tuple(v["block.offsets"]),
                         points_per_block=v["block.points"], voxel=v["block.voxel"],
                         min_train_points=v["block.min_train_points"])


def parse_override(text):
    """``key=value`` with the value read as JSON when possible, else as a string."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
