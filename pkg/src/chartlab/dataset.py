"""CSI data model: dataset container, frequency/time transform, tap
windowing, subsampling and autocorrelation feature vectors.

Frequency-domain CSI is stored in DFT bin order: bin 1 holds the
center-frequency subcarrier.  The time-domain representation is shifted
so that tap 1 is the earliest and tap N_sub the last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class TapWindow:
    """Inclusive 1-based range of time-domain taps to consider."""

    tau_min: int
    tau_max: int

    def __post_init__(self):
        if not (1 <= self.tau_min <= self.tau_max):
            raise DataError(f"invalid tap window [{self.tau_min}, {self.tau_max}]")

    def validate(self, n_sub: int) -> None:
        if self.tau_max > n_sub:
            raise DataError(
                f"tap window [{self.tau_min}, {self.tau_max}] exceeds N_sub={n_sub}"
            )

    @property
    def n_taps(self) -> int:
        return self.tau_max - self.tau_min + 1

    def slice(self) -> slice:
        """0-based slice into the tap axis."""
        return slice(self.tau_min - 1, self.tau_max)


@dataclass(frozen=True)
class CsiDatapoint:
    """One measurement: CSI tensor, ground-truth position, timestamp."""

    H: np.ndarray  # complex, shape (B, M, N_sub)
    x: np.ndarray  # float, shape (2,)
    t: float

    def __post_init__(self):
        if self.H.ndim != 3:
            raise DataError(f"CSI tensor must be (B, M, N_sub), got shape {self.H.shape}")
        b, m, n = self.H.shape
        if b < 1 or m < 1 or n < 2 or n % 2 != 0:
            raise DataError(f"invalid CSI dimensions B={b}, M={m}, N_sub={n}")
        if self.x.shape != (2,):
            raise DataError(f"position must be a 2-vector, got shape {self.x.shape}")
        if not (np.all(np.isfinite(self.H.view(np.float64)))
                and np.all(np.isfinite(self.x)) and math.isfinite(self.t)):
            raise DataError("CSI datapoint contains non-finite entries")


class CsiDataset:
    """Ordered collection of CSI datapoints with identical dimensions.

    Immutable after construction; the time-domain tensor is computed
    lazily once and cached, so O(L^2) metric loops never re-run the
    transform.
    """

    def __init__(self, H: np.ndarray, x: np.ndarray, t: np.ndarray, meta: dict | None = None):
        H = np.asarray(H, dtype=np.complex128)
        x = np.asarray(x, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        if H.ndim != 4:
            raise DataError(f"dataset CSI must be (L, B, M, N_sub), got shape {H.shape}")
        L, B, M, N = H.shape
        if L < 2:
            raise DataError(f"dataset needs at least 2 points, got {L}")
        if N < 2 or N % 2 != 0:
            raise DataError(f"N_sub must be even and >= 2, got {N}")
        if x.shape != (L, 2) or t.shape != (L,):
            raise DataError("positions/timestamps do not match dataset length")
        if not (np.all(np.isfinite(H.view(np.float64)))
                and np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
            raise DataError("dataset contains non-finite entries")
        self._H = H
        self._x = x
        self._t = t
        for a in (self._H, self._x, self._t):
            a.setflags(write=False)
        self.meta = dict(meta or {})
        self._time_domain: np.ndarray | None = None

    def __len__(self) -> int:
        return self._H.shape[0]

    def __getitem__(self, l: int) -> CsiDatapoint:
        return CsiDatapoint(self._H[l], self._x[l], float(self._t[l]))

    @property
    def H(self) -> np.ndarray:
        return self._H

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def t(self) -> np.ndarray:
        return self._t

    @property
    def B(self) -> int:
        return self._H.shape[1]

    @property
    def M(self) -> int:
        return self._H.shape[2]

    @property
    def N_sub(self) -> int:
        return self._H.shape[3]

    def time_domain(self) -> np.ndarray:
        """Cached time-domain tensor, shape (L, B, M, N_sub)."""
        if self._time_domain is None:
            td = to_time_domain(self._H)
            td.setflags(write=False)
            self._time_domain = td
        return self._time_domain


def to_time_domain(H: np.ndarray) -> np.ndarray:
    """Unitary IDFT along the last (subcarrier) axis, tap-shifted so that
    index 0 is the earliest tap and index N_sub-1 the last."""
    H = np.asarray(H, dtype=np.complex128)
    n = H.shape[-1]
    if n < 2 or n % 2 != 0:
        raise DataError(f"N_sub must be even and >= 2, got {n}")
    # unitary IDFT = sqrt(N) * ifft; roll so tap (N/2 + 1) carries zero delay
    return np.roll(np.fft.ifft(H, axis=-1) * math.sqrt(n), n // 2, axis=-1)


def from_time_domain(Ht: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_time_domain` (unitary forward DFT)."""
    Ht = np.asarray(Ht, dtype=np.complex128)
    n = Ht.shape[-1]
    return np.fft.fft(np.roll(Ht, -(n // 2), axis=-1), axis=-1) / math.sqrt(n)


def feature_length(B: int, M: int, window: TapWindow) -> int:
    return 2 * B * B * M * M * window.n_taps


def compute_features(dp: CsiDatapoint | np.ndarray, window: TapWindow) -> np.ndarray:
    """Autocorrelation feature vector of a single datapoint.

    The complex autocorrelations H~[b1,m1,tau] * conj(H~[b2,m2,tau]) are
    laid out lexicographically over (b1, b2, m1, m2, tau), real parts
    first, imaginary parts after.
    """
    H = dp.H if isinstance(dp, CsiDatapoint) else np.asarray(dp)
    window.validate(H.shape[-1])
    Ht = to_time_domain(H)[..., window.slice()]  # (B, M, T)
    c = Ht[:, None, :, None, :] * np.conj(Ht[None, :, None, :, :])  # (B,B,M,M,T)
    c = c.reshape(-1)
    return np.concatenate([c.real, c.imag])


def feature_matrix(ds: CsiDataset, window: TapWindow) -> np.ndarray:
    """Feature vectors for the whole dataset, shape (L, feature_length)."""
    window.validate(ds.N_sub)
    Ht = ds.time_domain()[..., window.slice()]  # (L, B, M, T)
    c = Ht[:, :, None, :, None, :] * np.conj(Ht[:, None, :, None, :, :])
    c = c.reshape(len(ds), -1)
    return np.concatenate([c.real, c.imag], axis=1)


def subsample(ds: CsiDataset, stride: int, offset: int = 0) -> CsiDataset:
    """Keep every stride-th datapoint starting at offset (order preserved)."""
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    if not (0 <= offset < stride):
        raise DataError(f"offset must be in [0, stride), got {offset}")
    idx = np.arange(offset, len(ds), stride)
    if idx.size < 2:
        raise DataError("subsampling leaves fewer than 2 datapoints")
    return CsiDataset(ds.H[idx], ds.x[idx], ds.t[idx], ds.meta)


def drop_arrays(ds: CsiDataset, keep) -> CsiDataset:
    """Restrict CSI to a subset of antenna arrays (1-based indices)."""
    keep = sorted(set(int(b) for b in keep))
    if not keep:
        raise DataError("keep set must be nonempty")
    if keep[0] < 1 or keep[-1] > ds.B:
        raise DataError(f"array indices must be within 1..{ds.B}, got {keep}")
    idx = np.array(keep) - 1
    return CsiDataset(ds.H[:, idx], ds.x, ds.t, ds.meta)


def convert_text_sidecar(path, out_path):  # pragma: no cover - declared stub
    """Converter for external text/sidecar CSI dumps into CCDS1.

    Not implemented: external sounder formats also need their subcarrier
    order normalized to DFT bin order, which is format-specific.
    """
    raise NotImplementedError("external dataset conversion is not implemented")
