"""Minimal dense-network engine (ReLU, batch norm, Adam) powering the
Siamese and triplet forward charting functions and the learned
dissimilarity metric.

Weight-sharing branches are realized by forwarding the stacked branch
inputs through one parameter set in a single batch, so every branch's
gradient lands on the same parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dissimilarity import DissimilarityMatrix
from .embed import ChannelChart
from .errors import DataError, NumericalError

_BN_EPS = 1e-5
_BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0
    pairs_per_point: int = 64
    triplets_per_point: int = 16
    q_start: float = 0.2
    q_end: float = 0.02
    margin: float = 1.0


@dataclass(frozen=True)
class DlTrainConfig:
    alpha: float = 500.0  # pair selection threshold, seconds
    beta: float = 1.0  # loss softening, seconds
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0
    pairs_per_point: int = 64

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise DataError("alpha and beta must be > 0")


class MlpModel:
    """Fully connected network: hidden layers are dense + optional batch
    norm + ReLU, the output layer is linear."""

    def __init__(self, layers: list, batchnorm: bool, seed: int, meta: dict | None = None):
        self.layers = layers
        self.batchnorm = batchnorm
        self.seed = seed
        self.meta = dict(meta or {})
        self.norm_mu: np.ndarray | None = None
        self.norm_sigma: np.ndarray | None = None

    # -- construction -------------------------------------------------

    @classmethod
    def create(cls, input_dim: int, hidden: list, output_dim: int, *,
               batchnorm: bool = True, seed: int = 0) -> "MlpModel":
        rng = np.random.default_rng(seed)
        dims = [input_dim] + list(hidden) + [output_dim]
        layers = []
        for li in range(len(dims) - 1):
            fan_in, fan_out = dims[li], dims[li + 1]
            limit = 1.0 / np.sqrt(fan_in)
            layer = {
                "W": rng.uniform(-limit, limit, size=(fan_in, fan_out)),
                "b": np.zeros(fan_out),
            }
            if batchnorm and li < len(dims) - 2:  # hidden layers only
                layer["bn"] = {
                    "gamma": np.ones(fan_out),
                    "beta": np.zeros(fan_out),
                    "mean": np.zeros(fan_out),
                    "var": np.ones(fan_out),
                }
            layers.append(layer)
        return cls(layers, batchnorm, seed)

    @property
    def input_dim(self) -> int:
        return self.layers[0]["W"].shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1]["W"].shape[1]

    @property
    def arch(self) -> list:
        return [self.input_dim] + [l["W"].shape[1] for l in self.layers]

    # -- trainable parameter access ------------------------------------

    def parameters(self) -> list:
        """Trainable arrays in a fixed order (running stats excluded)."""
        out = []
        for l in self.layers:
            out.extend([l["W"], l["b"]])
            if "bn" in l:
                out.extend([l["bn"]["gamma"], l["bn"]["beta"]])
        return out

    def set_parameters(self, params: list) -> None:
        it = iter(params)
        for l in self.layers:
            l["W"] = next(it)
            l["b"] = next(it)
            if "bn" in l:
                l["bn"]["gamma"] = next(it)
                l["bn"]["beta"] = next(it)

    # -- forward / backward --------------------------------------------

    def _normalize(self, X: np.ndarray) -> np.ndarray:
        if self.norm_mu is not None:
            return (X - self.norm_mu) / self.norm_sigma
        return X

    def forward(self, X: np.ndarray, training: bool = False):
        """Returns (output, caches); caches feed :meth:`backward`."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise DataError(
                f"input must be (N, {self.input_dim}), got {X.shape}"
            )
        X = self._normalize(X)
        caches = []
        h = X
        n_layers = len(self.layers)
        for li, l in enumerate(self.layers):
            cache = {"x": h}
            a = h @ l["W"] + l["b"]
            if "bn" in l:
                bn = l["bn"]
                if training:
                    mu = a.mean(axis=0)
                    var = a.var(axis=0)
                    bn["mean"] = (1 - _BN_MOMENTUM) * bn["mean"] + _BN_MOMENTUM * mu
                    bn["var"] = (1 - _BN_MOMENTUM) * bn["var"] + _BN_MOMENTUM * var
                else:
                    mu, var = bn["mean"], bn["var"]
                inv = 1.0 / np.sqrt(var + _BN_EPS)
                ah = (a - mu) * inv
                cache.update(a=a, ah=ah, inv=inv, batch_stats=training)
                a = bn["gamma"] * ah + bn["beta"]
            if li < n_layers - 1:
                cache["mask"] = a > 0
                h = np.where(cache["mask"], a, 0.0)
            else:
                h = a
            caches.append(cache)
        return h, caches

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Inference-mode forward (frozen batch-norm statistics)."""
        out, _ = self.forward(X, training=False)
        return out

    def backward(self, caches: list, dout: np.ndarray) -> list:
        """Parameter gradients (same order as :meth:`parameters`)."""
        grads = [None] * len(self.parameters())
        gi = len(grads)
        d = dout
        for li in range(len(self.layers) - 1, -1, -1):
            l = self.layers[li]
            cache = caches[li]
            if li < len(self.layers) - 1:
                d = d * cache["mask"]
            if "bn" in l:
                ah, inv = cache["ah"], cache["inv"]
                dgamma = np.sum(d * ah, axis=0)
                dbeta = np.sum(d, axis=0)
                dah = d * l["bn"]["gamma"]
                if cache["batch_stats"]:
                    n = ah.shape[0]
                    d = (inv / n) * (
                        n * dah - np.sum(dah, axis=0) - ah * np.sum(dah * ah, axis=0)
                    )
                else:
                    d = dah * inv
                gi -= 2
                grads[gi] = dgamma
                grads[gi + 1] = dbeta
            x = cache["x"]
            dW = x.T @ d
            db = np.sum(d, axis=0)
            d = d @ l["W"].T
            gi -= 2
            grads[gi] = dW
            grads[gi + 1] = db
        return grads

    # -- serialization ---------------------------------------------------

    def describe(self) -> dict:
        return {
            "arch": self.arch,
            "batchnorm": self.batchnorm,
            "has_norm_stats": self.norm_mu is not None,
            "seed": self.seed,
            "meta": self.meta,
        }

    def parameter_blob(self) -> np.ndarray:
        parts = []
        for l in self.layers:
            parts.extend([l["W"].ravel(), l["b"]])
            if "bn" in l:
                bn = l["bn"]
                parts.extend([bn["gamma"], bn["beta"], bn["mean"], bn["var"]])
        if self.norm_mu is not None:
            parts.extend([self.norm_mu, self.norm_sigma])
        return np.concatenate(parts)

    @classmethod
    def from_blob(cls, header: dict, blob: np.ndarray) -> "MlpModel":
        arch = header["arch"]
        model = cls.create(arch[0], arch[1:-1], arch[-1],
                           batchnorm=header["batchnorm"], seed=header.get("seed", 0))
        model.meta = header.get("meta", {})
        pos = 0

        def take(n):
            nonlocal pos
            out = blob[pos:pos + n]
            pos += n
            return out.copy()

        for l in model.layers:
            fi, fo = l["W"].shape
            l["W"] = take(fi * fo).reshape(fi, fo)
            l["b"] = take(fo)
            if "bn" in l:
                for key in ("gamma", "beta", "mean", "var"):
                    l["bn"][key] = take(fo)
        if header.get("has_norm_stats"):
            d = arch[0]
            model.norm_mu = take(d)
            model.norm_sigma = take(d)
        if pos != blob.size:
            raise DataError("model blob size does not match architecture")
        return model


class Adam:
    def __init__(self, params: list, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list, grads: list) -> list:
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            mhat = self.m[i] / (1 - self.beta1**self.t)
            vhat = self.v[i] / (1 - self.beta2**self.t)
            out.append(p - self.lr * mhat / (np.sqrt(vhat) + self.eps))
        return out


# ---------------------------------------------------------------------------
# losses (value + gradient wrt branch outputs)


def siamese_loss(zi: np.ndarray, zj: np.ndarray, d: np.ndarray):
    """Mean squared mismatch between chart distances and dissimilarities."""
    diff = zi - zj
    r = np.sqrt(np.sum(diff**2, axis=1))
    e = d - r
    loss = float(np.mean(e**2))
    n = zi.shape[0]
    safe = np.where(r > 0, r, 1.0)
    coeff = (-2.0 * e / safe / n)[:, None]
    coeff[r == 0] = 0.0
    dzi = coeff * diff
    return loss, dzi, -dzi


def triplet_loss(zi: np.ndarray, zj: np.ndarray, zk: np.ndarray, margin: float):
    """Mean hinge loss max(|zi-zj| - |zi-zk| + margin, 0)."""
    dij = zi - zj
    dik = zi - zk
    rij = np.sqrt(np.sum(dij**2, axis=1))
    rik = np.sqrt(np.sum(dik**2, axis=1))
    hinge = rij - rik + margin
    active = hinge > 0
    loss = float(np.mean(np.where(active, hinge, 0.0)))
    n = zi.shape[0]
    uj = np.where(rij[:, None] > 0, dij / np.where(rij[:, None] > 0, rij[:, None], 1.0), 0.0)
    uk = np.where(rik[:, None] > 0, dik / np.where(rik[:, None] > 0, rik[:, None], 1.0), 0.0)
    a = active[:, None] / n
    dzi = a * (uj - uk)
    dzj = -a * uj
    dzk = a * uk
    return loss, dzi, dzj, dzk


def dl_loss(pred: np.ndarray, d: np.ndarray, beta: float):
    """Softened normalized squared error ((pred - d) / (d + beta))^2."""
    w = 1.0 / (d + beta)
    e = (pred - d) * w
    loss = float(np.mean(e**2))
    dpred = 2.0 * e * w / pred.shape[0]
    return loss, dpred


# ---------------------------------------------------------------------------
# feature standardization


def _fit_normalization(model: MlpModel, F: np.ndarray, copies: int = 1) -> None:
    mu = F.mean(axis=0)
    sigma = F.std(axis=0)
    sigma = np.where(sigma > 0, sigma, 1.0)
    model.norm_mu = np.tile(mu, copies)
    model.norm_sigma = np.tile(sigma, copies)


def _check_training_loss(losses: list, label: str) -> None:
    if not all(np.isfinite(losses)):
        raise NumericalError(
            f"{label} training produced non-finite loss (history: {losses[-5:]})"
        )


# ---------------------------------------------------------------------------
# training drivers


def train_siamese(features: np.ndarray, D: DissimilarityMatrix,
                  hidden: list = (256, 128, 64, 32),
                  cfg: TrainConfig = TrainConfig()) -> MlpModel:
    """Train the forward charting function with the stress loss over
    randomly sampled datapoint pairs."""
    F = np.asarray(features, dtype=np.float64)
    L = F.shape[0]
    if D.L != L:
        raise DataError("dissimilarity matrix row count does not match features")
    model = MlpModel.create(F.shape[1], list(hidden), 2, seed=cfg.seed)
    _fit_normalization(model, F)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    epoch_losses = []
    n_pairs = cfg.pairs_per_point * L
    for _ in range(cfg.epochs):
        ii = rng.integers(0, L, size=n_pairs)
        jj = rng.integers(0, L, size=n_pairs)
        losses = []
        for s in range(0, n_pairs, cfg.batch_size):
            bi, bj = ii[s:s + cfg.batch_size], jj[s:s + cfg.batch_size]
            d = D.values[bi, bj]
            out, caches = model.forward(np.concatenate([F[bi], F[bj]]), training=True)
            n = bi.size
            loss, dzi, dzj = siamese_loss(out[:n], out[n:], d)
            grads = model.backward(caches, np.concatenate([dzi, dzj]))
            model.set_parameters(opt.step(model.parameters(), grads))
            losses.append(loss)
        _check_training_loss(losses, "Siamese")
        epoch_losses.append(float(np.mean(losses)))
    model.meta["mode"] = "siamese"
    model.meta["epoch_losses"] = epoch_losses
    return model


def select_triplets(D: DissimilarityMatrix, q: float, count: int, seed: int):
    """Sample (anchor, close, far) triples: the close sample comes from
    the anchor's q-quantile neighbor set, the far sample from its
    complement; guarantees d(i, close) < d(i, far)."""
    L = D.L
    if not (0 < q < 1):
        raise DataError(f"q must be in (0, 1), got {q}")
    n_close = int(np.floor(q * L))
    if n_close < 1:
        raise DataError(f"q={q} selects no neighbors for L={L}")
    rng = np.random.default_rng(seed)
    values = D.values
    # per-anchor threshold: (n_close + 1)-th smallest among the others
    triplets = np.empty((count, 3), dtype=np.int64)
    got = 0
    attempts = 0
    order_cache: dict = {}
    while got < count:
        attempts += 1
        if attempts > 50 * count:
            raise DataError("triplet selection stalled; dissimilarities degenerate")
        i = int(rng.integers(0, L))
        if i not in order_cache:
            row = values[i]
            others = np.delete(np.arange(L), i)
            svals = np.sort(row[others], kind="stable")
            thresh = svals[n_close] if n_close < others.size else np.inf
            close = others[row[others] < thresh]
            far = others[row[others] >= thresh]
            order_cache[i] = (close, far)
        close, far = order_cache[i]
        if close.size == 0 or far.size == 0:
            continue
        j = int(close[rng.integers(0, close.size)])
        k = int(far[rng.integers(0, far.size)])
        triplets[got] = (i, j, k)
        got += 1
    return triplets


def train_triplet(features: np.ndarray, D: DissimilarityMatrix,
                  hidden: list = (256, 128, 64, 32),
                  cfg: TrainConfig = TrainConfig()) -> MlpModel:
    """Train the charting function with triplet loss; q decays
    geometrically from q_start to q_end, fresh triplets per epoch."""
    F = np.asarray(features, dtype=np.float64)
    L = F.shape[0]
    if D.L != L:
        raise DataError("dissimilarity matrix row count does not match features")
    model = MlpModel.create(F.shape[1], list(hidden), 2, seed=cfg.seed)
    _fit_normalization(model, F)
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    epoch_losses = []
    n_trip = cfg.triplets_per_point * L
    if cfg.epochs > 1:
        qs = cfg.q_start * (cfg.q_end / cfg.q_start) ** (
            np.arange(cfg.epochs) / (cfg.epochs - 1))
    else:
        qs = np.array([cfg.q_start])
    for ep in range(cfg.epochs):
        q = float(qs[ep])
        if int(np.floor(q * L)) < 1:
            q = 1.5 / L
        trip = select_triplets(D, q, n_trip, seed=cfg.seed + ep)
        losses = []
        for s in range(0, n_trip, cfg.batch_size):
            b = trip[s:s + cfg.batch_size]
            n = b.shape[0]
            batch = np.concatenate([F[b[:, 0]], F[b[:, 1]], F[b[:, 2]]])
            out, caches = model.forward(batch, training=True)
            loss, dzi, dzj, dzk = triplet_loss(
                out[:n], out[n:2 * n], out[2 * n:], cfg.margin)
            grads = model.backward(caches, np.concatenate([dzi, dzj, dzk]))
            model.set_parameters(opt.step(model.parameters(), grads))
            losses.append(loss)
        _check_training_loss(losses, "Triplet")
        epoch_losses.append(float(np.mean(losses)))
    model.meta["mode"] = "triplet"
    model.meta["epoch_losses"] = epoch_losses
    return model


def train_dissimilarity_model(features: np.ndarray, timestamps: np.ndarray,
                              hidden: list = (256, 128, 64),
                              cfg: DlTrainConfig = DlTrainConfig()) -> MlpModel:
    """Train the learned metric to predict absolute time differences for
    pairs closer in time than alpha, with the softened NMSE loss."""
    F = np.asarray(features, dtype=np.float64)
    t = np.asarray(timestamps, dtype=np.float64)
    L = F.shape[0]
    iu = np.triu_indices(L, k=1)
    dt = np.abs(t[iu[0]] - t[iu[1]])
    eligible = dt <= cfg.alpha
    pairs = np.column_stack([iu[0][eligible], iu[1][eligible]])
    if pairs.shape[0] == 0:
        raise DataError(f"no pairs with time difference <= alpha={cfg.alpha}")
    model = MlpModel.create(2 * F.shape[1], list(hidden), 1, seed=cfg.seed)
    _fit_normalization(model, F, copies=2)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    epoch_losses = []
    n_pairs = cfg.pairs_per_point * L
    for _ in range(cfg.epochs):
        sel = pairs[rng.integers(0, pairs.shape[0], size=n_pairs)]
        losses = []
        for s in range(0, n_pairs, cfg.batch_size):
            b = sel[s:s + cfg.batch_size]
            d = np.abs(t[b[:, 0]] - t[b[:, 1]])
            X = np.concatenate([F[b[:, 0]], F[b[:, 1]]], axis=1)
            out, caches = model.forward(X, training=True)
            loss, dpred = dl_loss(out[:, 0], d, cfg.beta)
            grads = model.backward(caches, dpred[:, None])
            model.set_parameters(opt.step(model.parameters(), grads))
            losses.append(loss)
        _check_training_loss(losses, "DL")
        epoch_losses.append(float(np.mean(losses)))
    model.meta["mode"] = "dl"
    model.meta["epoch_losses"] = epoch_losses
    return model


def predict_chart(model: MlpModel, features: np.ndarray,
                  batch_size: int = 1024) -> ChannelChart:
    """Map every feature vector through the trained charting function."""
    if model.output_dim != 2:
        raise DataError(f"model output dim must be 2, got {model.output_dim}")
    F = np.asarray(features, dtype=np.float64)
    parts = [model.predict(F[s:s + batch_size]) for s in range(0, F.shape[0], batch_size)]
    z = np.concatenate(parts, axis=0)
    return ChannelChart(z, {
        "method": model.meta.get("mode", "fcf"),
        "metric_tag": model.meta.get("metric_tag", ""),
        "seed": model.seed,
        "hyperparams": {"arch": model.arch},
    })
