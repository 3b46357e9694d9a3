"""Quality metrics for dissimilarity matrices and channel charts:
continuity (CT), trustworthiness (TW), Kruskal's stress (KS), Rajski's
distance (RD), and the affine-optimal mean absolute error (MAE)."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dissimilarity import DissimilarityMatrix, euclidean_matrix
from .embed import ChannelChart
from .errors import DataError


def _rep_distances(representation) -> np.ndarray:
    """Pairwise value matrix for ranking: charts give Euclidean chart
    distances, dissimilarity matrices are used row-wise as-is."""
    if isinstance(representation, ChannelChart):
        return euclidean_matrix(representation.z)
    if isinstance(representation, DissimilarityMatrix):
        return representation.values
    a = np.asarray(representation, dtype=np.float64)
    if a.ndim == 2 and a.shape[1] == 2:
        return euclidean_matrix(a)
    if a.ndim == 2 and a.shape[0] == a.shape[1]:
        return a
    raise DataError(f"representation must be a chart (L,2) or matrix (L,L), got {a.shape}")


def _ranks(values: np.ndarray) -> np.ndarray:
    """ranks[l, i] = 1-based rank of i among l's neighbors (self gets 0);
    ties broken by ascending index."""
    L = values.shape[0]
    ranks = np.zeros((L, L), dtype=np.int64)
    for l in range(L):
        order = np.argsort(values[l], kind="stable")
        order = order[order != l]
        ranks[l, order] = np.arange(1, L)
    return ranks


def default_k(L: int) -> int:
    return max(1, int(round(0.05 * L)))


def continuity_trustworthiness(truth_positions: np.ndarray, representation,
                               K: int | None = None):
    """Neighborhood preservation scores in [0, 1] (1 = perfect).

    Continuity penalizes true neighbors ranked far in the representation;
    trustworthiness penalizes representation neighbors that are far in
    truth."""
    x = np.asarray(truth_positions, dtype=np.float64)
    L = x.shape[0]
    if K is None:
        K = default_k(L)
    k_max = (2 * L - 1) // 3
    if not (1 <= K <= k_max):
        raise DataError(f"K must be in 1..{k_max} for L={L}, got {K}")
    r_true = _ranks(euclidean_matrix(x))
    r_rep = _ranks(_rep_distances(representation))
    norm = 2.0 / (L * K * (2 * L - 3 * K - 1))
    in_true = (r_true >= 1) & (r_true <= K)
    in_rep = (r_rep >= 1) & (r_rep <= K)
    ct = 1.0 - norm * float(np.sum(np.maximum(0, r_rep[in_true] - K)))
    tw = 1.0 - norm * float(np.sum(np.maximum(0, r_true[in_rep] - K)))
    return ct, tw


def kruskal_stress(truth_positions: np.ndarray, representation) -> float:
    """Global structure preservation in [0, 1] (0 = perfect); the
    representation is rescaled by the optimal factor before comparison."""
    x = np.asarray(truth_positions, dtype=np.float64)
    L = x.shape[0]
    iu = np.triu_indices(L, k=1)
    dx = euclidean_matrix(x)[iu]
    dz = _rep_distances(representation)[iu]
    denom = float(np.sum(dz**2))
    if denom == 0:
        return 1.0  # zero-spread representation preserves nothing
    sx2 = float(np.sum(dx**2))
    if sx2 == 0:
        raise DataError("all truth positions coincide; stress undefined")
    beta = float(np.sum(dx * dz)) / denom
    return float(np.sqrt(np.sum((dx - beta * dz) ** 2) / sx2))


def rajski_distance(truth_positions: np.ndarray, representation,
                    bins: int = 100) -> float:
    """1 - I/H over the joint histogram of (true distance, representation
    value) pairs; 0 means the representation determines true distances."""
    x = np.asarray(truth_positions, dtype=np.float64)
    L = x.shape[0]
    if L < 2:
        raise DataError("need at least 2 points")
    iu = np.triu_indices(L, k=1)
    v = euclidean_matrix(x)[iu]
    q = _rep_distances(representation)[iu]
    # equal-width bins over [0, max] per variable
    v_edges = np.linspace(0.0, max(float(v.max()), 1e-300), bins + 1)
    q_edges = np.linspace(0.0, max(float(q.max()), 1e-300), bins + 1)
    joint, _, _ = np.histogram2d(v, q, bins=[v_edges, q_edges])
    p = joint / joint.sum()
    nz = p > 0
    h = -float(np.sum(p[nz] * np.log2(p[nz])))
    if h == 0:
        warnings.warn("zero joint entropy; all pairs fall in one bin")
        return 0.0
    pv = p.sum(axis=1)
    pq = p.sum(axis=0)
    outer = pv[:, None] * pq[None, :]
    mi = float(np.sum(p[nz] * np.log2(p[nz] / outer[nz])))
    return 1.0 - mi / h


def optimal_affine_mae(chart, truth_positions: np.ndarray):
    """Least-squares fit of A z + b to the truth; returns
    (mae, A, b, per-point errors)."""
    z = chart.z if isinstance(chart, ChannelChart) else np.asarray(chart, dtype=np.float64)
    x = np.asarray(truth_positions, dtype=np.float64)
    if z.shape != x.shape or z.ndim != 2 or z.shape[1] != 2:
        raise DataError(f"chart/truth shapes must match (L,2), got {z.shape}, {x.shape}")
    if z.shape[0] < 3:
        raise DataError("need at least 3 points for an affine fit")
    design = np.column_stack([z, np.ones(z.shape[0])])
    if np.linalg.matrix_rank(design) < 3:
        raise DataError("chart points are collinear; affine transform not unique")
    coeffs, *_ = np.linalg.lstsq(design, x, rcond=None)
    A = coeffs[:2].T
    b = coeffs[2]
    errors = np.sqrt(np.sum((design @ coeffs - x) ** 2, axis=1))
    return float(errors.mean()), A, b, errors


def error_cdf(errors: np.ndarray):
    """Empirical CDF sample points: (sorted errors, cumulative fractions)."""
    e = np.sort(np.asarray(errors, dtype=np.float64))
    if e.size == 0:
        raise DataError("no error samples")
    return e, np.arange(1, e.size + 1) / e.size


@dataclass
class EvalReport:
    ct: float
    tw: float
    ks: float
    rd: float
    K: int
    mae: float | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    errors: np.ndarray | None = None
    label: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = {
            "label": self.label, "ct": self.ct, "tw": self.tw, "ks": self.ks,
            "rd": self.rd, "K": self.K, "mae": self.mae,
            "A": None if self.A is None else self.A.tolist(),
            "b": None if self.b is None else self.b.tolist(),
            "error_cdf": None if self.errors is None else np.sort(self.errors).tolist(),
            "extra": self.extra,
        }
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(
            ct=d["ct"], tw=d["tw"], ks=d["ks"], rd=d["rd"], K=d["K"],
            mae=d.get("mae"),
            A=None if d.get("A") is None else np.asarray(d["A"]),
            b=None if d.get("b") is None else np.asarray(d["b"]),
            errors=None if d.get("error_cdf") is None else np.asarray(d["error_cdf"]),
            label=d.get("label", ""), extra=d.get("extra", {}),
        )


def evaluate_matrix(D: DissimilarityMatrix, truth_positions: np.ndarray,
                    K: int | None = None) -> EvalReport:
    """CT/TW/KS/RD of a dissimilarity matrix against true positions."""
    ct, tw = continuity_trustworthiness(truth_positions, D, K)
    return EvalReport(
        ct=ct, tw=tw,
        ks=kruskal_stress(truth_positions, D),
        rd=rajski_distance(truth_positions, D),
        K=K if K is not None else default_k(len(truth_positions)),
        label=D.metric_tag,
    )


def evaluate_chart(chart: ChannelChart, truth_positions: np.ndarray,
                   K: int | None = None) -> EvalReport:
    """All metrics of a chart, including the affine-optimal MAE."""
    ct, tw = continuity_trustworthiness(truth_positions, chart, K)
    mae, A, b, errors = optimal_affine_mae(chart, truth_positions)
    method = chart.provenance.get("method", "chart")
    tag = chart.provenance.get("metric_tag", "")
    return EvalReport(
        ct=ct, tw=tw,
        ks=kruskal_stress(truth_positions, chart),
        rd=rajski_distance(truth_positions, chart),
        K=K if K is not None else default_k(len(truth_positions)),
        mae=mae, A=A, b=b, errors=errors,
        label=f"{method}/{tag}" if tag else method,
    )


_COLS = ("CT^", "TW^", "KSv", "RDv", "MAEv")


def render_table(reports: list) -> str:
    """Fixed-width table, one row per report, sorted by label; parses
    back with :func:`parse_table` at 4-decimal precision."""
    rows = sorted(reports, key=lambda r: r.label)
    width = max([len("label")] + [len(r.label) for r in rows]) + 2
    head = "label".ljust(width) + "".join(c.rjust(9) for c in _COLS)
    lines = [head, "-" * len(head)]
    for r in rows:
        vals = [r.ct, r.tw, r.ks, r.rd, r.mae]
        cells = "".join(
            ("-" if v is None else f"{v:.4f}").rjust(9) for v in vals
        )
        lines.append(r.label.ljust(width) + cells)
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> dict:
    """Inverse of :func:`render_table`: {label: {metric: value|None}}."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    out = {}
    for ln in lines[2:]:
        parts = ln.split()
        label, cells = parts[0], parts[-5:]
        keys = ("ct", "tw", "ks", "rd", "mae")
        out[label] = {
            k: (None if c == "-" else float(c)) for k, c in zip(keys, cells)
        }
    return out
