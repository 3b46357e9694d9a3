"""Pairwise dissimilarity metrics and L x L matrix assembly.

All metrics are symmetric, nonnegative and zero on the diagonal.  The
CS and ADP metrics sum per-(array, bin) cosine-similarity-of-power
terms, each in [0, 1].  Zero-norm antenna vectors (possible behind
blockers in synthetic scenes) contribute 1 when exactly one side is
zero and 0 when both are.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import CsiDataset, TapWindow
from .errors import CalibrationError, DataError

METRIC_TAGS = ("Euc", "Time", "CIRA", "CS", "ADP", "DL", "Fuse")


@dataclass
class DissimilarityMatrix:
    values: np.ndarray
    metric_tag: str
    params: dict | None = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DataError(f"dissimilarity matrix must be square, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("dissimilarity matrix contains non-finite entries")
        if np.any(v < 0):
            raise DataError("dissimilarity matrix contains negative entries")
        if np.any(np.diagonal(v) != 0):
            raise DataError("dissimilarity matrix diagonal must be exactly zero")
        scale = max(1.0, float(np.abs(v).max()))
        if np.abs(v - v.T).max() > 1e-9 * scale:
            raise DataError("dissimilarity matrix is not symmetric within 1e-9")
        self.values = v
        self.params = dict(self.params or {})

    @property
    def L(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FuseConfig:
    """Scaling for min-fusion of a CSI metric with the timestamp metric."""

    gamma: float
    t_thresh: float = 2.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise DataError(f"gamma must be > 0, got {self.gamma}")
        if not self.t_thresh > 0:
            raise DataError(f"t_thresh must be > 0, got {self.t_thresh}")


# ---------------------------------------------------------------------------
# per-pair metrics


def d_euc(ds: CsiDataset, i: int, j: int) -> float:
    """Ground-truth Euclidean distance (baseline/evaluation only)."""
    return float(np.linalg.norm(ds.x[i] - ds.x[j]))


def d_time(ds: CsiDataset, i: int, j: int) -> float:
    return float(abs(ds.t[i] - ds.t[j]))


def d_cira(ds: CsiDataset, i: int, j: int, window: TapWindow) -> float:
    """Sum of absolute impulse-response amplitude differences."""
    window.validate(ds.N_sub)
    Ht = ds.time_domain()[..., window.slice()]
    return float(np.sum(np.abs(np.abs(Ht[i]) - np.abs(Ht[j]))))


def _cos_power_terms(Xi: np.ndarray, Xj: np.ndarray) -> np.ndarray:
    """1 - |<xi, xj>|^2 / (|xi|^2 |xj|^2) along the last (antenna) axis.

    Degenerate vectors: one-sided zero -> 1, both zero -> 0.
    """
    num = np.abs(np.sum(np.conj(Xi) * Xj, axis=-1)) ** 2
    ni = np.sum(np.abs(Xi) ** 2, axis=-1)
    nj = np.sum(np.abs(Xj) ** 2, axis=-1)
    den = ni * nj
    out = np.empty_like(den)
    ok = den > 0
    out[ok] = 1.0 - num[ok] / den[ok]
    both_zero = (ni == 0) & (nj == 0)
    out[~ok] = 1.0
    out[both_zero] = 0.0
    return out


def d_cs(ds: CsiDataset, i: int, j: int) -> float:
    """Frequency-domain cosine-similarity metric, summed over (b, n)."""
    Hi = np.swapaxes(ds.H[i], 1, 2)  # (B, N, M)
    Hj = np.swapaxes(ds.H[j], 1, 2)
    return float(np.sum(_cos_power_terms(Hi, Hj)))


def d_adp(ds: CsiDataset, i: int, j: int, window: TapWindow) -> float:
    """Angle-delay-profile metric: CS structure on windowed time-domain taps."""
    window.validate(ds.N_sub)
    Ht = ds.time_domain()[..., window.slice()]
    Hi = np.swapaxes(Ht[i], 1, 2)  # (B, T, M)
    Hj = np.swapaxes(Ht[j], 1, 2)
    return float(np.sum(_cos_power_terms(Hi, Hj)))


def d_fuse(d_adp_ij: float, d_time_ij: float, cfg: FuseConfig) -> float:
    return min(d_adp_ij, cfg.gamma * d_time_ij)


def d_dl(model, f_i: np.ndarray, f_j: np.ndarray) -> float:
    """Learned metric, symmetrized over input order and clamped at 0."""
    if f_i.shape != f_j.shape or 2 * f_i.shape[-1] != model.input_dim:
        raise DataError(
            f"feature length {f_i.shape[-1]} does not match model input "
            f"dim {model.input_dim}"
        )
    a = model.predict(np.concatenate([f_i, f_j])[None, :])[0, 0]
    b = model.predict(np.concatenate([f_j, f_i])[None, :])[0, 0]
    return max(0.0, 0.5 * (a + b))


# ---------------------------------------------------------------------------
# full-matrix assembly


def _accumulate_terms(make_term, keys, threads: int) -> np.ndarray:
    """Sum make_term(key) over keys in fixed key order regardless of the
    worker count, keeping the reduction bit-deterministic."""
    if threads <= 1:
        acc = None
        for key in keys:
            term = make_term(key)
            acc = term if acc is None else acc + term
        return acc
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(make_term, key) for key in keys]
        acc = None
        for fut in futures:
            term = fut.result()
            acc = term if acc is None else acc + term
    return acc


def _cos_power_matrix(slices, threads: int) -> np.ndarray:
    """Sum of per-(b, bin) CS/ADP term matrices; each slice is (L, M)."""

    def term(X):
        G = X @ np.conj(X.T)  # (L, L) inner products over antennas
        norms = np.real(np.diagonal(G)).copy()
        den = np.outer(norms, norms)
        num = np.abs(G) ** 2
        out = np.empty_like(den)
        ok = den > 0
        out[ok] = 1.0 - num[ok] / den[ok]
        zero = norms == 0
        out[~ok] = 1.0
        if np.any(zero):
            out[np.ix_(zero, zero)] = 0.0
        return out

    total = _accumulate_terms(term, slices, threads)
    np.fill_diagonal(total, 0.0)
    return np.clip(total, 0.0, None)


def _rows_in_blocks(fill_block, L: int, threads: int, block: int = 256) -> np.ndarray:
    out = np.zeros((L, L), dtype=np.float64)
    starts = list(range(0, L, block))

    def run(s):
        fill_block(out, s, min(s + block, L))

    if threads <= 1:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, starts))
    return out


def euclidean_matrix(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(np.clip(d2, 0.0, None))


def pairwise_matrix(
    ds: CsiDataset,
    metric: str,
    *,
    window: TapWindow | None = None,
    fuse_cfg: FuseConfig | None = None,
    model=None,
    features: np.ndarray | None = None,
    threads: int = 1,
) -> DissimilarityMatrix:
    """Assemble the symmetric L x L dissimilarity matrix for one metric.

    Output is bit-identical for any worker count: parallel work is
    reduced in fixed order or written to disjoint row blocks.
    """
    metric = metric.lower()
    L = len(ds)
    params: dict = {}

    if metric == "euc":
        values, tag = euclidean_matrix(ds.x), "Euc"
    elif metric == "time":
        values = np.abs(ds.t[:, None] - ds.t[None, :])
        tag = "Time"
    elif metric == "cira":
        if window is None:
            raise DataError("CIRA requires a tap window")
        window.validate(ds.N_sub)
        A = np.abs(ds.time_domain()[..., window.slice()]).reshape(L, -1)

        def fill(out, s, e):
            out[s:e] = np.sum(np.abs(A[s:e, None, :] - A[None, :, :]), axis=2)

        values, tag = _rows_in_blocks(fill, L, threads), "CIRA"
        params["tau_min"], params["tau_max"] = window.tau_min, window.tau_max
    elif metric == "cs":
        H = ds.H
        slices = [H[:, b, :, n] for b in range(ds.B) for n in range(ds.N_sub)]
        values, tag = _cos_power_matrix(slices, threads), "CS"
    elif metric == "adp":
        if window is None:
            raise DataError("ADP requires a tap window")
        window.validate(ds.N_sub)
        Ht = ds.time_domain()[..., window.slice()]
        slices = [Ht[:, b, :, k] for b in range(ds.B) for k in range(window.n_taps)]
        values, tag = _cos_power_matrix(slices, threads), "ADP"
        params["tau_min"], params["tau_max"] = window.tau_min, window.tau_max
    elif metric == "fuse":
        if window is None or fuse_cfg is None:
            raise DataError("fuse requires a tap window and a FuseConfig")
        adp = pairwise_matrix(ds, "adp", window=window, threads=threads)
        tmat = np.abs(ds.t[:, None] - ds.t[None, :])
        values = np.minimum(adp.values, fuse_cfg.gamma * tmat)
        tag = "Fuse"
        params = dict(adp.params, gamma=fuse_cfg.gamma, t_thresh=fuse_cfg.t_thresh)
    elif metric == "dl":
        if model is None or features is None:
            raise DataError("DL requires a trained model and feature matrix")
        if features.shape[0] != L:
            raise DataError("feature matrix row count does not match dataset")
        def fill(out, s, e):
            for i in range(s, e):
                pairs = np.concatenate(
                    [np.broadcast_to(features[i], features.shape), features], axis=1
                )
                out[i] = model.predict(pairs)[:, 0]

        pred = _rows_in_blocks(fill, L, threads)
        values = np.clip(0.5 * (pred + pred.T), 0.0, None)
        np.fill_diagonal(values, 0.0)
        tag = "DL"
    else:
        raise DataError(f"unknown metric '{metric}'")

    # float64 symmetry can be off at the last ulp after parallel assembly
    values = 0.5 * (values + values.T)
    np.fill_diagonal(values, 0.0)
    return DissimilarityMatrix(values, tag, params)


def fuse_matrices(
    adp: DissimilarityMatrix, time: DissimilarityMatrix, cfg: FuseConfig
) -> DissimilarityMatrix:
    """Elementwise min-fusion of a precomputed ADP and Time matrix."""
    if adp.L != time.L:
        raise DataError("matrix sizes differ")
    values = np.minimum(adp.values, cfg.gamma * time.values)
    params = dict(adp.params, gamma=cfg.gamma, t_thresh=cfg.t_thresh)
    return DissimilarityMatrix(values, "Fuse", params)


def calibrate_gamma(
    ds: CsiDataset,
    d_adp_matrix: DissimilarityMatrix,
    t_thresh: float = 2.0,
    *,
    bins: int = 80,
    smooth_width: int = 5,
    min_mode_separation: int = 10,
) -> float:
    """Pick the time-metric scaling from the valley of the bimodal
    histogram of ADP/time ratios over temporally close pairs.

    Pairs with identical timestamps are excluded (undefined ratio).
    Raises CalibrationError when the histogram is unimodal or there are
    fewer than 100 eligible pairs; supply gamma manually in that case.
    """
    tmat = np.abs(ds.t[:, None] - ds.t[None, :])
    iu = np.triu_indices(len(ds), k=1)
    dt = tmat[iu]
    da = d_adp_matrix.values[iu]
    mask = (dt > 0) & (dt < t_thresh)
    if int(mask.sum()) < 100:
        raise CalibrationError(
            f"only {int(mask.sum())} pairs with 0 < d_time < {t_thresh}; "
            "need >= 100, set gamma manually"
        )
    ratios = da[mask] / dt[mask]
    hi = np.percentile(ratios, 99)
    if hi <= 0:
        raise CalibrationError("all ratios are zero; set gamma manually")
    hist, edges = np.histogram(ratios, bins=bins, range=(0.0, hi))
    smoothed = np.convolve(hist.astype(np.float64),
                           np.ones(smooth_width) / smooth_width, mode="same")
    # local maxima of the smoothed histogram
    peaks = [
        i for i in range(1, bins - 1)
        if smoothed[i] >= smoothed[i - 1] and smoothed[i] > smoothed[i + 1]
    ]
    if smoothed[0] > smoothed[1]:
        peaks.insert(0, 0)
    if smoothed[-1] >= smoothed[-2]:
        peaks.append(bins - 1)
    peaks.sort(key=lambda i: -smoothed[i])
    first = None
    second = None
    for p in peaks:
        if first is None:
            first = p
        elif abs(p - first) >= min_mode_separation:
            second = p
            break
    if first is None or second is None:
        raise CalibrationError(
            "ratio histogram is not bimodal; set gamma manually"
        )
    lo_b, hi_b = sorted((first, second))
    valley = lo_b + int(np.argmin(smoothed[lo_b : hi_b + 1]))
    centers = 0.5 * (edges[:-1] + edges[1:])
    return float(centers[valley])
