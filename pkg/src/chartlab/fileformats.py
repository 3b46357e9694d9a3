"""Binary container formats (all little-endian).

CCDS1  dataset:  magic + u32 JSON header + complex64 CSI [l][b][m][n]
                 + float64 positions [l][2] + float64 timestamps [l]
CCDM1  matrix:   magic + u32 JSON header + float32 row-major upper
                 triangle (diagonal excluded), mirrored on load
CCCH1  chart:    magic + u32 JSON header + float64 [L][2]
CCNN1  model:    magic + u32 JSON header + float32 parameter blob
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataError


def _write_header(f, magic: bytes, header: dict) -> None:
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    f.write(magic)
    f.write(struct.pack("<I", len(payload)))
    f.write(payload)


def _read_header(f, magic: bytes) -> dict:
    got = f.read(len(magic))
    if got != magic:
        raise DataError(f"bad magic: expected {magic!r}, got {got!r}")
    (n,) = struct.unpack("<I", f.read(4))
    return json.loads(f.read(n).decode("utf-8"))


def save_dataset(ds, path) -> None:
    from .dataset import CsiDataset  # noqa: F401 - type documented above

    L, B, M, N = ds.H.shape
    csi = ds.H.astype(np.complex64)
    pos = ds.x.astype(np.float64)
    ts = ds.t.astype(np.float64)
    header = {
        "version": 1,
        "L": L,
        "B": B,
        "M": M,
        "N_sub": N,
        "offsets": {
            "csi": 0,
            "positions": csi.nbytes,
            "timestamps": csi.nbytes + pos.nbytes,
        },
        "meta": ds.meta,
    }
    with open(path, "wb") as f:
        _write_header(f, b"CCDS1", header)
        f.write(csi.tobytes())
        f.write(pos.tobytes())
        f.write(ts.tobytes())


def load_dataset(path):
    from .dataset import CsiDataset

    with open(path, "rb") as f:
        header = _read_header(f, b"CCDS1")
        L, B, M, N = (header[k] for k in ("L", "B", "M", "N_sub"))
        csi = np.frombuffer(f.read(L * B * M * N * 8), dtype=np.complex64)
        pos = np.frombuffer(f.read(L * 2 * 8), dtype=np.float64)
        ts = np.frombuffer(f.read(L * 8), dtype=np.float64)
    return CsiDataset(
        csi.reshape(L, B, M, N).astype(np.complex128),
        pos.reshape(L, 2).copy(),
        ts.copy(),
        header.get("meta"),
    )


def save_matrix(dm, path) -> None:
    L = dm.values.shape[0]
    iu = np.triu_indices(L, k=1)
    header = {"L": L, "metric_tag": dm.metric_tag, "params": dm.params}
    with open(path, "wb") as f:
        _write_header(f, b"CCDM1", header)
        f.write(dm.values[iu].astype(np.float32).tobytes())


def load_matrix(path):
    from .dissimilarity import DissimilarityMatrix

    with open(path, "rb") as f:
        header = _read_header(f, b"CCDM1")
        L = header["L"]
        tri = np.frombuffer(f.read(L * (L - 1) // 2 * 4), dtype=np.float32)
    values = np.zeros((L, L), dtype=np.float64)
    iu = np.triu_indices(L, k=1)
    values[iu] = tri
    values[(iu[1], iu[0])] = tri
    return DissimilarityMatrix(values, header["metric_tag"], header.get("params"))


def save_chart(chart, path) -> None:
    header = {"L": chart.z.shape[0], **chart.provenance}
    with open(path, "wb") as f:
        _write_header(f, b"CCCH1", header)
        f.write(chart.z.astype(np.float64).tobytes())


def load_chart(path):
    from .embed import ChannelChart

    with open(path, "rb") as f:
        header = _read_header(f, b"CCCH1")
        L = header.pop("L")
        z = np.frombuffer(f.read(L * 2 * 8), dtype=np.float64).reshape(L, 2)
    return ChannelChart(z.copy(), header)


def save_model(model, path) -> None:
    header = model.describe()
    blob = model.parameter_blob()
    with open(path, "wb") as f:
        _write_header(f, b"CCNN1", header)
        f.write(blob.astype(np.float32).tobytes())


def load_model(path):
    from .nn import MlpModel

    with open(path, "rb") as f:
        header = _read_header(f, b"CCNN1")
        blob = np.frombuffer(f.read(), dtype=np.float32).astype(np.float64)
    return MlpModel.from_blob(header, blob)
