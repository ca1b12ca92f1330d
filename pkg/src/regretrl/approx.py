"""State-action value stores: a dense table and a one-hidden-layer tanh network.

Both expose ``predict(s)`` and ``fit_target(s, a, target)``; the latter takes
one gradient step on ``0.5 * (predict(s)[a] - target) ** 2`` and returns the
loss before the step.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ArgumentError, UsageError
from .mdp import TabularMdp

INIT_SCALE = 0.05


class FeatureMap:
    """Fixed state -> feature-vector table with entries in [-1, 1]."""

    def __init__(self, matrix, name: str = "custom"):
        m = np.array(matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ArgumentError("feature matrix must be 2-D (states x dims)")
        if np.any(np.abs(m) > 1.0):
            raise ArgumentError("features must lie in [-1, 1]")
        m.setflags(write=False)
        self.matrix = m
        self.name = name

    @classmethod
    def one_hot(cls, n_states: int) -> "FeatureMap":
        return cls(np.eye(n_states), "one_hot")

    @classmethod
    def grid_xy(cls, mdp: TabularMdp) -> "FeatureMap":
        if mdp.positions is None:
            raise ArgumentError("grid coordinates need an MDP with positions")
        pos = mdp.positions.astype(np.float64)
        span = np.maximum(pos.max(axis=0) - pos.min(axis=0), 1.0)
        return cls(2.0 * (pos - pos.min(axis=0)) / span - 1.0, "grid_xy")

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __call__(self, s: int) -> np.ndarray:
        return self.matrix[s]


def _check_target(target: float) -> float:
    target = float(target)
    if not math.isfinite(target):
        raise ArgumentError(f"non-finite regression target {target!r}")
    return target


class TabularStore:
    kind = "tabular"

    def __init__(self, n_states: int, n_actions: int, alpha: float = 0.5, table=None):
        if alpha <= 0:
            raise ArgumentError("learning rate must be positive")
        self.alpha = float(alpha)
        if table is None:
            table = np.zeros((n_states, n_actions))
        self.table = np.array(table, dtype=np.float64)
        if self.table.shape != (n_states, n_actions):
            raise ArgumentError("table shape does not match (n_states, n_actions)")

    @property
    def n_states(self) -> int:
        return self.table.shape[0]

    @property
    def n_actions(self) -> int:
        return self.table.shape[1]

    def predict(self, s: int) -> np.ndarray:
        return self.table[s].copy()

    def predict_all(self) -> np.ndarray:
        return self.table.copy()

    def fit_target(self, s: int, a: int, target: float) -> float:
        target = _check_target(target)
        entry = self.table[s, a]
        diff = entry - target
        self.table[s, a] = entry + self.alpha * (target - entry)
        return 0.5 * diff * diff

    def copy(self) -> "TabularStore":
        return TabularStore(self.n_states, self.n_actions, self.alpha, self.table)

    def to_dict(self) -> dict:
        return {"kind": "tabular", "shape": list(self.table.shape), "alpha": self.alpha,
                "params": self.table.reshape(-1).tolist()}


class MlpStore:
    """tanh network: features -> hidden -> one output per action."""

    kind = "mlp"

    def __init__(self, features: FeatureMap, n_actions: int, hidden: int = 32,
                 alpha: float = 0.01, params=None):
        if alpha <= 0:
            raise ArgumentError("learning rate must be positive")
        self.features = features
        self.n_actions = int(n_actions)
        self.hidden = int(hidden)
        self.alpha = float(alpha)
        self.params = None if params is None else np.array(params, dtype=np.float64)
        if self.params is not None and self.params.shape != (self.n_params,):
            raise ArgumentError(f"expected {self.n_params} parameters, got {self.params.shape}")

    @classmethod
    def create(cls, features: FeatureMap, n_actions: int, seed: int, hidden: int = 32,
               alpha: float = 0.01) -> "MlpStore":
        store = cls(features, n_actions, hidden, alpha)
        store.initialize(seed)
        return store

    def initialize(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        self.params = rng.uniform(-INIT_SCALE, INIT_SCALE, size=self.n_params)

    @property
    def n_states(self) -> int:
        return self.features.n_states

    @property
    def n_params(self) -> int:
        d, h, k = self.features.dim, self.hidden, self.n_actions
        return h * d + h + k * h + k

    def unpack(self, params=None):
        p = self.params if params is None else params
        if p is None:
            raise UsageError("network parameters are not initialized")
        d, h, k = self.features.dim, self.hidden, self.n_actions
        i = 0
        w1 = p[i:i + h * d].reshape(h, d); i += h * d
        b1 = p[i:i + h]; i += h
        w2 = p[i:i + k * h].reshape(k, h); i += k * h
        b2 = p[i:i + k]
        return w1, b1, w2, b2

    def forward(self, x, params=None):
        w1, b1, w2, b2 = self.unpack(params)
        hid = np.tanh(w1 @ x + b1)
        return w2 @ hid + b2, hid

    def predict(self, s: int) -> np.ndarray:
        return self.forward(self.features(s))[0]

    def predict_all(self) -> np.ndarray:
        return np.array([self.predict(s) for s in range(self.n_states)])

    def loss_and_grad(self, x, a: int, target: float):
        """Squared-error loss at input ``x`` and its gradient w.r.t. the flat parameters."""
        _, _, w2, _ = self.unpack()
        out, hid = self.forward(x)
        delta = out[a] - target
        d, h, k = self.features.dim, self.hidden, self.n_actions
        dz = delta * w2[a] * (1.0 - hid * hid)
        g_w2 = np.zeros((k, h))
        g_w2[a] = delta * hid
        g_b2 = np.zeros(k)
        g_b2[a] = delta
        grad = np.concatenate([np.outer(dz, x).reshape(-1), dz, g_w2.reshape(-1), g_b2])
        return 0.5 * delta * delta, grad

    def input_gradient(self, x, a: int) -> np.ndarray:
        """d output[a] / d input features."""
        w1, _, w2, _ = self.unpack()
        _, hid = self.forward(x)
        return w1.T @ (w2[a] * (1.0 - hid * hid))

    def fit_target(self, s: int, a: int, target: float) -> float:
        target = _check_target(target)
        loss, grad = self.loss_and_grad(self.features(s), a, target)
        self.params = self.params - self.alpha * grad
        return loss

    def copy(self) -> "MlpStore":
        return MlpStore(self.features, self.n_actions, self.hidden, self.alpha,
                        None if self.params is None else self.params.copy())

    def to_dict(self) -> dict:
        if self.params is None:
            raise UsageError("cannot checkpoint an uninitialized network")
        return {"kind": "mlp", "shape": [self.features.dim, self.hidden, self.n_actions],
                "alpha": self.alpha, "params": self.params.tolist(),
                "features": self.features.matrix.tolist(), "feature_name": self.features.name}


def store_from_dict(doc: dict):
    if doc["kind"] == "tabular":
        n_s, n_a = doc["shape"]
        return TabularStore(n_s, n_a, doc["alpha"], np.asarray(doc["params"]).reshape(n_s, n_a))
    if doc["kind"] == "mlp":
        _, hidden, n_a = doc["shape"]
        feats = FeatureMap(doc["features"], doc.get("feature_name", "custom"))
        return MlpStore(feats, n_a, hidden, doc["alpha"], doc["params"])
    raise ArgumentError(f"unknown store kind {doc['kind']!r}")


def grad_check(store: MlpStore, s: int, a: int, target: float, step: float = 1e-5,
               features=None, abs_floor: float = 1e-6) -> float:
    """Max error between analytic and central-difference parameter gradients.

    Error is relative where either gradient exceeds ``abs_floor`` in
    magnitude, absolute otherwise.
    """
    if store.kind != "mlp":
        raise UsageError("gradient check applies to network stores only")
    x = store.features(s) if features is None else np.asarray(features, dtype=np.float64)
    _, analytic = store.loss_and_grad(x, a, target)
    base = store.params
    numeric = np.empty_like(base)
    for i in range(base.shape[0]):
        p = base.copy()
        p[i] = base[i] + step
        hi = 0.5 * (store.forward(x, p)[0][a] - target) ** 2
        p[i] = base[i] - step
        lo = 0.5 * (store.forward(x, p)[0][a] - target) ** 2
        numeric[i] = (hi - lo) / (2.0 * step)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    err = np.where(scale > abs_floor, err / np.where(scale > 0, scale, 1.0), err)
    return float(err.max())
