"""Dataset container, frequency/time transform and feature vectors."""

import numpy as np
import pytest

from chartlab.dataset import (CsiDataset, TapWindow, compute_features,
                              drop_arrays, feature_length, feature_matrix,
                              from_time_domain, subsample, to_time_domain)
from chartlab.errors import DataError

from conftest import make_dataset


def test_transform_roundtrip():
    rng = np.random.default_rng(1)
    H = rng.standard_normal((3, 2, 4, 16)) + 1j * rng.standard_normal((3, 2, 4, 16))
    back = from_time_domain(to_time_domain(H))
    assert np.allclose(back, H, atol=1e-12)


def test_transform_is_unitary():
    rng = np.random.default_rng(2)
    H = rng.standard_normal((5, 32)) + 1j * rng.standard_normal((5, 32))
    Ht = to_time_domain(H)
    assert np.allclose(np.sum(np.abs(Ht) ** 2, axis=-1),
                       np.sum(np.abs(H) ** 2, axis=-1), rtol=1e-12)


def test_flat_spectrum_concentrates_on_center_tap():
    # a constant spectrum is a zero-delay impulse: tap N/2 + 1 (1-based)
    N = 16
    H = np.ones(N, dtype=complex)
    Ht = to_time_domain(H)
    assert np.argmax(np.abs(Ht)) == N // 2  # 0-based index of tap N/2 + 1
    assert np.abs(Ht[N // 2]) == pytest.approx(np.sqrt(N))


def test_transform_rejects_odd_length():
    with pytest.raises(DataError):
        to_time_domain(np.ones(7, dtype=complex))


def test_tap_window_validation():
    with pytest.raises(DataError):
        TapWindow(0, 4)
    with pytest.raises(DataError):
        TapWindow(5, 4)
    w = TapWindow(3, 6)
    assert w.n_taps == 4
    assert w.slice() == slice(2, 6)
    with pytest.raises(DataError):
        w.validate(4)
    w.validate(8)


def test_windowed_slice_matches_one_based_indexing():
    rng = np.random.default_rng(3)
    Ht = rng.standard_normal((2, 3, 8))
    w = TapWindow(2, 5)
    # taps 2..5 one-based are indices 1..4
    assert np.array_equal(Ht[..., w.slice()], Ht[..., 1:5])


def test_dataset_validation():
    rng = np.random.default_rng(4)
    H = rng.standard_normal((4, 2, 3, 8)) + 0j
    x = rng.uniform(size=(4, 2))
    t = np.arange(4.0)
    with pytest.raises(DataError):
        CsiDataset(H[:1], x[:1], t[:1])  # too few points
    with pytest.raises(DataError):
        CsiDataset(H[..., :7], x, t)  # odd N_sub
    with pytest.raises(DataError):
        CsiDataset(H, x[:3], t)  # length mismatch
    bad = H.copy()
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(DataError):
        CsiDataset(bad, x, t)


def test_dataset_is_immutable(small_ds):
    with pytest.raises(ValueError):
        small_ds.H[0, 0, 0, 0] = 0
    with pytest.raises(ValueError):
        small_ds.x[0, 0] = 0


def test_dataset_accessors(small_ds):
    assert len(small_ds) == 12
    assert (small_ds.B, small_ds.M, small_ds.N_sub) == (2, 3, 8)
    dp = small_ds[3]
    assert dp.H.shape == (2, 3, 8)
    assert dp.t == small_ds.t[3]


def test_time_domain_is_cached(small_ds):
    td1 = small_ds.time_domain()
    td2 = small_ds.time_domain()
    assert td1 is td2
    assert np.allclose(td1, to_time_domain(small_ds.H))


def test_subsample(small_ds):
    sub = subsample(small_ds, 3, offset=1)
    assert len(sub) == 4
    assert np.array_equal(sub.x, small_ds.x[1::3])
    with pytest.raises(DataError):
        subsample(small_ds, 0)
    with pytest.raises(DataError):
        subsample(small_ds, 12)  # leaves a single point


def test_drop_arrays(small_ds):
    one = drop_arrays(small_ds, [2])
    assert one.B == 1
    assert np.allclose(one.H[:, 0], small_ds.H[:, 1])
    with pytest.raises(DataError):
        drop_arrays(small_ds, [0])
    with pytest.raises(DataError):
        drop_arrays(small_ds, [])


def test_feature_matrix_matches_per_point(small_ds, window):
    F = feature_matrix(small_ds, window)
    assert F.shape == (len(small_ds),
                       feature_length(small_ds.B, small_ds.M, window))
    for l in (0, 5, 11):
        f = compute_features(small_ds[l], window)
        assert np.allclose(F[l], f, atol=1e-12)


def test_features_are_phase_invariant(window):
    # a global phase rotation per datapoint leaves autocorrelations intact
    ds = make_dataset(L=4)
    rot = ds.H * np.exp(1j * 0.7)
    f0 = compute_features(ds.H[1], window)
    f1 = compute_features(rot[1], window)
    assert np.allclose(f0, f1, atol=1e-10)
