"""Nonparametric 2-D embedders operating on a dissimilarity matrix:
stress-minimizing MDS, Sammon's mapping, t-SNE, and Isomap as MDS on
the geodesic-lifted matrix."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .dissimilarity import DissimilarityMatrix
from .errors import DataError, NumericalError
from .geodesic import lift


@dataclass
class ChannelChart:
    """2-D embedding plus provenance (method, metric, hyperparameters)."""

    z: np.ndarray  # (L, 2)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != 2:
            raise DataError(f"chart must be (L, 2), got {z.shape}")
        if not np.all(np.isfinite(z)):
            raise DataError("chart contains non-finite coordinates")
        self.z = z

    @property
    def L(self) -> int:
        return self.z.shape[0]


@dataclass(frozen=True)
class EmbedConfig:
    iterations: int = 1000
    learning_rate: float = 0.05
    momentum: float = 0.8
    seed: int = 0
    perplexity: float = 30.0
    tolerance: float = 1e-12
    early_exaggeration: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise DataError("iterations must be >= 1")
        if not self.learning_rate > 0:
            raise DataError("learning rate must be > 0")


def _init_z(D: np.ndarray, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    scale = 1e-2 * float(np.median(D))
    if scale <= 0:
        scale = 1e-2
    return rng.standard_normal((D.shape[0], 2)) * scale


def _pairdist(z: np.ndarray) -> np.ndarray:
    return squareform(pdist(z))


def _stress_and_gradient(D: np.ndarray, z: np.ndarray,
                         weights: np.ndarray | None = None):
    """Value and gradient of the (optionally weighted) squared-stress
    objective sum_{i<j} w_ij (d_ij - r_ij)^2 in one distance evaluation."""
    r = _pairdist(z)
    e = D - r
    with np.errstate(divide="ignore", invalid="ignore"):
        coeff = np.where(r > 0, e / r, 0.0)
    if weights is not None:
        coeff *= weights
        s = 0.5 * float(np.sum(weights * e * e))
    else:
        s = 0.5 * float(np.sum(e * e))
    np.fill_diagonal(coeff, 0.0)
    # d/dz_i sum_j w (d_ij - r_ij)^2 = -2 sum_j w (d_ij - r_ij)/r_ij (z_i - z_j)
    grad = -2.0 * (coeff.sum(axis=1, keepdims=True) * z - coeff @ z)
    return s, grad


def stress(D: np.ndarray, z: np.ndarray, weights: np.ndarray | None = None) -> float:
    return _stress_and_gradient(D, z, weights)[0]


def stress_gradient(
    D: np.ndarray, z: np.ndarray, weights: np.ndarray | None = None
) -> np.ndarray:
    return _stress_and_gradient(D, z, weights)[1]


def _descend(D: np.ndarray, cfg: EmbedConfig, weights: np.ndarray | None, label: str):
    """Full-batch gradient descent with momentum and step halving on a
    stress increase; returns (z, stress history)."""
    z = _init_z(D, cfg.seed)
    s, grad = _stress_and_gradient(D, z, weights)
    # normalize the step by problem scale so one default lr fits all inputs
    gscale = float(np.abs(grad).max())
    step = cfg.learning_rate * (float(np.median(D)) + 1e-300) / (gscale + 1e-300)

    vel = np.zeros_like(z)
    history = [s]
    for _ in range(cfg.iterations):
        vel = cfg.momentum * vel - step * grad
        z_new = z + vel
        s_new, grad_new = _stress_and_gradient(D, z_new, weights)
        if not np.isfinite(s_new):
            raise NumericalError(f"{label} diverged; reduce the learning rate")
        if s_new > s * 1.01 + 1e-300:
            step *= 0.5
            vel[:] = 0.0
            continue
        step *= 1.02
        z, s, grad = z_new, s_new, grad_new
        history.append(s)
        if len(history) > 2 and abs(history[-2] - s) <= cfg.tolerance * max(s, 1.0):
            break
    return z, history


def _check_matrix(D: DissimilarityMatrix | np.ndarray) -> np.ndarray:
    if isinstance(D, DissimilarityMatrix):
        return D.values
    return DissimilarityMatrix(np.asarray(D, dtype=np.float64), "unknown").values


def _tagof(D) -> str:
    return D.metric_tag if isinstance(D, DissimilarityMatrix) else "unknown"


def mds(D, cfg: EmbedConfig = EmbedConfig()) -> ChannelChart:
    """Least-squares stress MDS by gradient descent from random init."""
    values = _check_matrix(D)
    if np.all(values == 0):
        warnings.warn("all-zero dissimilarity matrix; returning all-zero chart")
        return ChannelChart(np.zeros((values.shape[0], 2)),
                            {"method": "mds", "metric_tag": _tagof(D), "seed": cfg.seed})
    z, history = _descend(values, cfg, None, "MDS")
    return ChannelChart(z, {
        "method": "mds", "metric_tag": _tagof(D), "seed": cfg.seed,
        "hyperparams": {"iterations": cfg.iterations, "learning_rate": cfg.learning_rate,
                        "momentum": cfg.momentum},
        "final_stress": history[-1],
    })


def sammon(D, cfg: EmbedConfig = EmbedConfig()) -> ChannelChart:
    """Sammon's mapping: stress weighted by 1/d_ij, emphasizing small
    dissimilarities.  Zero off-diagonal pairs are excluded."""
    values = _check_matrix(D)
    if np.all(values == 0):
        warnings.warn("all-zero dissimilarity matrix; returning all-zero chart")
        return ChannelChart(np.zeros((values.shape[0], 2)),
                            {"method": "sammon", "metric_tag": _tagof(D), "seed": cfg.seed})
    with np.errstate(divide="ignore"):
        weights = np.where(values > 0, 1.0 / np.where(values > 0, values, 1.0), 0.0)
    np.fill_diagonal(weights, 0.0)
    z, history = _descend(values, cfg, weights, "Sammon")
    return ChannelChart(z, {
        "method": "sammon", "metric_tag": _tagof(D), "seed": cfg.seed,
        "hyperparams": {"iterations": cfg.iterations, "learning_rate": cfg.learning_rate,
                        "momentum": cfg.momentum},
        "final_stress": history[-1],
    })


def isomap(D_base, k: int, cfg: EmbedConfig = EmbedConfig(), *,
           threads: int = 1, repair: bool = False) -> ChannelChart:
    """MDS applied to the geodesic lifting of the base matrix."""
    base = D_base if isinstance(D_base, DissimilarityMatrix) else \
        DissimilarityMatrix(np.asarray(D_base, dtype=np.float64), "unknown")
    geo = lift(base, k, threads=threads, repair=repair)
    chart = mds(geo, cfg)
    chart.provenance["method"] = "isomap"
    chart.provenance.setdefault("hyperparams", {})["k"] = k
    return chart


# ---------------------------------------------------------------------------
# t-SNE


def tsne_probabilities(D: np.ndarray, perplexity: float, *,
                       rel_tol: float = 1e-3, max_iter: int = 200):
    """Symmetrized t-SNE input probabilities p_ij from a dissimilarity
    matrix; per-point kernel widths found by binary search so that the
    conditional distribution's perplexity matches the target.

    Returns (P, sigmas)."""
    L = D.shape[0]
    if not (1.0 < perplexity < L / 3):
        raise DataError(f"perplexity must be in (1, L/3={L / 3:.1f}), got {perplexity}")
    target = np.log2(perplexity)
    P_cond = np.zeros((L, L), dtype=np.float64)
    sigmas = np.zeros(L)
    d2 = D.astype(np.float64) ** 2
    for i in range(L):
        row = np.delete(d2[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        p = None
        for _ in range(max_iter):
            w = np.exp(-row * beta)
            sw = w.sum()
            if sw <= 0:
                # kernel too narrow for this row's scale
                hi = beta
                beta = 0.5 * (lo + beta)
                continue
            p = w / sw
            nz = p > 0
            h = -np.sum(p[nz] * np.log2(p[nz]))  # entropy in bits
            if abs(2.0**h - perplexity) <= rel_tol * perplexity:
                break
            if h > target:  # too spread out: narrow the kernel
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (lo + beta)
        else:
            raise NumericalError(f"perplexity search failed to converge for point {i}")
        P_cond[i, np.arange(L) != i] = p
        sigmas[i] = np.sqrt(0.5 / beta)
    P = (P_cond + P_cond.T) / (2.0 * L)
    return P, sigmas


def _tsne_q(z: np.ndarray):
    d2 = squareform(pdist(z, "sqeuclidean"))
    w = 1.0 / (1.0 + d2)
    np.fill_diagonal(w, 0.0)
    return w / w.sum(), w


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    q = np.clip(Q[mask], 1e-300, None)
    return float(np.sum(P[mask] * np.log(P[mask] / q)))


def tsne(D, cfg: EmbedConfig = EmbedConfig(iterations=500, learning_rate=100.0,
                                           momentum=0.8)) -> ChannelChart:
    """t-SNE on a dissimilarity matrix with Student-t low-dimensional
    kernel, minimized by gradient descent with momentum."""
    values = _check_matrix(D)
    L = values.shape[0]
    P, _ = tsne_probabilities(values, cfg.perplexity)
    rng = np.random.default_rng(cfg.seed)
    z = rng.standard_normal((L, 2)) * 1e-4
    vel = np.zeros_like(z)
    exag_until = 250 if cfg.early_exaggeration else 0
    kl0 = kl_divergence(P, _tsne_q(z)[0])
    for it in range(cfg.iterations):
        Pe = P * 12.0 if it < exag_until else P
        Q, w = _tsne_q(z)
        coeff = (Pe - Q) * w
        grad = 4.0 * (coeff.sum(axis=1, keepdims=True) * z - coeff @ z)
        mom = 0.5 if it < 20 else cfg.momentum
        vel = mom * vel - cfg.learning_rate * grad
        z = z + vel
    kl = kl_divergence(P, _tsne_q(z)[0])
    if not np.isfinite(kl):
        raise NumericalError("t-SNE diverged; reduce the learning rate")
    return ChannelChart(z, {
        "method": "tsne", "metric_tag": _tagof(D), "seed": cfg.seed,
        "hyperparams": {"iterations": cfg.iterations, "learning_rate": cfg.learning_rate,
                        "momentum": cfg.momentum, "perplexity": cfg.perplexity},
        "final_kl": kl, "initial_kl": kl0,
    })
