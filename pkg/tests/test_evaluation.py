"""Evaluation metrics: identities, oracles, report serialization."""

import warnings

import numpy as np
import pytest

from chartlab.dissimilarity import DissimilarityMatrix, euclidean_matrix
from chartlab.embed import ChannelChart
from chartlab.errors import DataError
from chartlab.evaluation import (EvalReport, continuity_trustworthiness,
                                 default_k, error_cdf, evaluate_chart,
                                 evaluate_matrix, kruskal_stress,
                                 optimal_affine_mae, parse_table,
                                 rajski_distance, render_table)


def points(L=40, seed=0):
    return np.random.default_rng(seed).uniform(0, 10, size=(L, 2))


def brute_force_ct_tw(x, z, K):
    """Literal double-sum reference for continuity/trustworthiness."""
    L = x.shape[0]
    dx = euclidean_matrix(x)
    dz = euclidean_matrix(z)

    def ranks(d):
        r = np.zeros((L, L), dtype=int)
        for l in range(L):
            order = [i for i in np.argsort(d[l], kind="stable") if i != l]
            for rank, i in enumerate(order, start=1):
                r[l, i] = rank
        return r

    rx, rz = ranks(dx), ranks(dz)
    norm = 2.0 / (L * K * (2 * L - 3 * K - 1))
    ct = tw = 0.0
    for l in range(L):
        for i in range(L):
            if i == l:
                continue
            if rx[l, i] <= K and rz[l, i] > K:
                ct += rz[l, i] - K
            if rz[l, i] <= K and rx[l, i] > K:
                tw += rx[l, i] - K
    return 1.0 - norm * ct, 1.0 - norm * tw


def test_identity_representation_is_perfect():
    x = points()
    ct, tw = continuity_trustworthiness(x, x)
    assert ct == 1.0 and tw == 1.0
    assert kruskal_stress(x, x) == pytest.approx(0.0, abs=1e-12)
    mae, A, b, errors = optimal_affine_mae(x, x)
    assert mae < 1e-9
    assert np.allclose(A, np.eye(2), atol=1e-9)


def test_similarity_image_preserves_all_metrics():
    x = points(seed=1)
    th = 0.8
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    z = 2.5 * x @ R.T + np.array([3.0, -1.0])
    ct, tw = continuity_trustworthiness(x, z)
    assert ct == 1.0 and tw == 1.0
    assert kruskal_stress(x, z) < 1e-12
    mae = optimal_affine_mae(z, x)[0]
    assert mae < 1e-9


def test_rd_zero_for_distance_determined_representation():
    x = points(seed=2)
    D = DissimilarityMatrix(euclidean_matrix(x), "Euc")
    assert rajski_distance(x, D) == pytest.approx(0.0, abs=1e-12)


def test_ct_tw_against_brute_force():
    x = points(30, seed=3)
    z = points(30, seed=4)
    for K in (1, 2, 5, 10):
        ct, tw = continuity_trustworthiness(x, z, K)
        bct, btw = brute_force_ct_tw(x, z, K)
        assert ct == pytest.approx(bct, abs=1e-12)
        assert tw == pytest.approx(btw, abs=1e-12)


def test_k_validation_and_default():
    x = points(30)
    kmax = (2 * 30 - 1) // 3
    continuity_trustworthiness(x, x, kmax)
    with pytest.raises(DataError):
        continuity_trustworthiness(x, x, kmax + 1)
    with pytest.raises(DataError):
        continuity_trustworthiness(x, x, 0)
    assert default_k(2000) == 100
    assert default_k(10) == 1


def test_kruskal_stress_optimal_scaling():
    x = points(seed=5)
    # any positive rescaling of a perfect chart still gives zero stress
    assert kruskal_stress(x, 0.01 * x) < 1e-12
    assert kruskal_stress(x, 100.0 * x) < 1e-12


def test_kruskal_stress_degenerate_cases():
    x = points(10, seed=6)
    assert kruskal_stress(x, np.zeros_like(x)) == 1.0
    with pytest.raises(DataError):
        kruskal_stress(np.zeros_like(x), x)


def test_rajski_distance_range_and_warning():
    x = points(20, seed=7)
    z = points(20, seed=8)
    rd = rajski_distance(x, z)
    assert 0.0 <= rd <= 1.0
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        val = rajski_distance(x, np.zeros_like(x) if False else x * 0 + 1.0)
    # all representation distances equal -> single-column histogram
    assert val >= 0.0


def test_affine_mae_recovers_transform():
    x = points(seed=9)
    A_true = np.array([[1.5, 0.2], [-0.3, 2.0]])
    b_true = np.array([4.0, -2.0])
    z = (x - b_true) @ np.linalg.inv(A_true).T
    mae, A, b, errors = optimal_affine_mae(z, x)
    assert mae < 1e-9
    assert np.allclose(A, A_true, atol=1e-6)
    assert np.allclose(b, b_true, atol=1e-6)
    assert errors.shape == (x.shape[0],)


def test_affine_mae_rejects_collinear():
    z = np.column_stack([np.arange(10.0), np.arange(10.0) * 2.0])
    x = points(10, seed=10)
    with pytest.raises(DataError):
        optimal_affine_mae(z, x)


def test_error_cdf():
    e, p = error_cdf(np.array([3.0, 1.0, 2.0]))
    assert np.array_equal(e, [1.0, 2.0, 3.0])
    assert np.allclose(p, [1 / 3, 2 / 3, 1.0])
    with pytest.raises(DataError):
        error_cdf(np.array([]))


def test_eval_report_json_roundtrip():
    x = points(seed=11)
    chart = ChannelChart(x.copy(), {"method": "mds", "metric_tag": "Euc"})
    rep = evaluate_chart(chart, x)
    back = EvalReport.from_json(rep.to_json())
    assert back.ct == rep.ct and back.tw == rep.tw
    assert back.ks == rep.ks and back.mae == rep.mae
    assert back.label == rep.label
    assert np.allclose(back.A, rep.A)


def test_evaluate_matrix_report():
    x = points(seed=12)
    D = DissimilarityMatrix(euclidean_matrix(x), "ADP")
    rep = evaluate_matrix(D, x)
    assert rep.label == "ADP"
    assert rep.mae is None
    assert rep.ct == 1.0 and rep.tw == 1.0


def test_table_roundtrip_at_4_decimals():
    reps = [
        EvalReport(ct=0.91234, tw=0.85555, ks=0.3, rd=0.77, K=10,
                   mae=1.23456, label="isomap/G-ADP"),
        EvalReport(ct=1.0, tw=1.0, ks=0.0, rd=0.0, K=10, mae=None,
                   label="ADP"),
    ]
    table = render_table(reps)
    parsed = parse_table(table)
    assert set(parsed) == {"isomap/G-ADP", "ADP"}
    assert parsed["isomap/G-ADP"]["ct"] == pytest.approx(0.9123, abs=5e-5)
    assert parsed["isomap/G-ADP"]["mae"] == pytest.approx(1.2346, abs=5e-5)
    assert parsed["ADP"]["mae"] is None
    # labels are sorted
    lines = [ln for ln in table.splitlines() if ln and not ln.startswith("-")]
    assert lines[1].split()[0] == "ADP"
