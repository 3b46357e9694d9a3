"""Synthetic distributed-MIMO CSI generator: a geometric ray model
(line-of-sight plus single-bounce scatterer paths, free-space amplitude
decay, optional line-of-sight blockers) driven along piecewise-linear
trajectories with standstill intervals."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import CsiDataset
from .errors import DataError

C_LIGHT = 299792458.0


@dataclass(frozen=True)
class ArraySpec:
    """Uniform linear array: M antennas centered on position, laid out
    along the orientation direction at the given spacing (default half
    the carrier wavelength, filled in by SceneSpec)."""

    position: tuple
    orientation: tuple
    m: int = 4
    spacing: float | None = None

    def antenna_positions(self, default_spacing: float) -> np.ndarray:
        p = np.asarray(self.position, dtype=np.float64)
        u = np.asarray(self.orientation, dtype=np.float64)
        norm = np.linalg.norm(u)
        if norm == 0:
            raise DataError("array orientation must be nonzero")
        u = u / norm
        s = self.spacing if self.spacing is not None else default_spacing
        offsets = (np.arange(self.m) - (self.m - 1) / 2.0) * s
        return p[None, :] + offsets[:, None] * u[None, :]


@dataclass(frozen=True)
class SceneSpec:
    arrays: tuple
    carrier_freq: float = 3.5e9
    bandwidth: float = 200e6
    n_sub: int = 64
    scatterers: tuple = ()  # ((x, y), gain) pairs
    blockers: tuple = ()  # ((x1, y1), (x2, y2)) segments
    noise_db: float = -30.0

    def __post_init__(self):
        if len(self.arrays) < 1:
            raise DataError("scene needs at least one array")
        if self.n_sub % 2 != 0:
            raise DataError(f"n_sub must be even, got {self.n_sub}")
        for _, gain in self.scatterers:
            if not np.isfinite(gain):
                raise DataError("scatterer gains must be finite")

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.carrier_freq

    @property
    def B(self) -> int:
        return len(self.arrays)

    @property
    def M(self) -> int:
        ms = {a.m for a in self.arrays}
        if len(ms) != 1:
            raise DataError("all arrays must have the same antenna count")
        return ms.pop()

    def to_json(self) -> str:
        return json.dumps({
            "arrays": [
                {"position": list(a.position), "orientation": list(a.orientation),
                 "m": a.m, "spacing": a.spacing}
                for a in self.arrays
            ],
            "carrier_freq": self.carrier_freq,
            "bandwidth": self.bandwidth,
            "n_sub": self.n_sub,
            "scatterers": [[list(p), g] for p, g in self.scatterers],
            "blockers": [[list(p), list(q)] for p, q in self.blockers],
            "noise_db": self.noise_db,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        d = json.loads(text)
        return cls(
            arrays=tuple(
                ArraySpec(tuple(a["position"]), tuple(a["orientation"]),
                          a.get("m", 4), a.get("spacing"))
                for a in d["arrays"]
            ),
            carrier_freq=d.get("carrier_freq", 3.5e9),
            bandwidth=d.get("bandwidth", 200e6),
            n_sub=d.get("n_sub", 64),
            scatterers=tuple((tuple(p), float(g)) for p, g in d.get("scatterers", [])),
            blockers=tuple((tuple(p), tuple(q)) for p, q in d.get("blockers", [])),
            noise_db=d.get("noise_db", -30.0),
        )


@dataclass(frozen=True)
class TrajectorySpec:
    """Waypoint path walked at constant speed; dwell[i] seconds of
    standstill at waypoint i before moving on."""

    waypoints: tuple
    speed: float = 1.0
    dwell: tuple = ()  # seconds per waypoint (padded with zeros)
    sample_interval: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if len(self.waypoints) < 2 and not any(self.dwell):
            raise DataError("need >= 2 waypoints or a standstill interval")
        if self.speed < 0:
            raise DataError("speed must be >= 0")
        if self.sample_interval <= 0:
            raise DataError("sample interval must be > 0")

    def to_json(self) -> str:
        return json.dumps({
            "waypoints": [list(w) for w in self.waypoints],
            "speed": self.speed,
            "dwell": list(self.dwell),
            "sample_interval": self.sample_interval,
            "seed": self.seed,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrajectorySpec":
        d = json.loads(text)
        return cls(
            waypoints=tuple(tuple(w) for w in d["waypoints"]),
            speed=d.get("speed", 1.0),
            dwell=tuple(d.get("dwell", [])),
            sample_interval=d.get("sample_interval", 1.0),
            seed=d.get("seed", 0),
        )


def generate_trajectory(spec: TrajectorySpec):
    """Sample (positions, timestamps) along the path at the configured
    interval, including both endpoints."""
    wp = np.asarray(spec.waypoints, dtype=np.float64)
    dwell = list(spec.dwell) + [0.0] * (len(wp) - len(spec.dwell))
    knots_t = [0.0]
    knots_x = [wp[0]]
    t = 0.0
    for i in range(len(wp)):
        if dwell[i] > 0:
            t += dwell[i]
            knots_t.append(t)
            knots_x.append(wp[i])
        if i + 1 < len(wp):
            seg = float(np.linalg.norm(wp[i + 1] - wp[i]))
            if seg > 0:
                if spec.speed == 0:
                    raise DataError("zero speed with displaced waypoints")
                t += seg / spec.speed
                knots_t.append(t)
                knots_x.append(wp[i + 1])
    if t == 0.0:
        raise DataError("zero-length trajectory")
    times = np.arange(0.0, t + 1e-9, spec.sample_interval)
    knots_t = np.asarray(knots_t)
    knots_x = np.asarray(knots_x)
    x = np.column_stack([
        np.interp(times, knots_t, knots_x[:, d]) for d in range(wp.shape[1])
    ])
    return x, times


def _segments_cross(p, q, a, b) -> bool:
    """True if open segment p-q properly crosses segment a-b."""
    def orient(o, u, v):
        return (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0])

    d1, d2 = orient(a, b, p), orient(a, b, q)
    d3, d4 = orient(p, q, a), orient(p, q, b)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _los_blocked(scene: SceneSpec, ue: np.ndarray, center: np.ndarray) -> bool:
    return any(_segments_cross(ue, center, np.asarray(a), np.asarray(b))
               for a, b in scene.blockers)


def synthesize_csi(scene: SceneSpec, positions: np.ndarray,
                   timestamps: np.ndarray | None = None,
                   seed: int = 0) -> CsiDataset:
    """Frequency-domain CSI for each position from the ray superposition:
    per path, amplitude decays as free space, delay is path length over c,
    and every subcarrier/antenna sees the corresponding phase."""
    x = np.asarray(positions, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise DataError(f"positions must be (L, 2), got {x.shape}")
    L = x.shape[0]
    t = (np.arange(L, dtype=np.float64) if timestamps is None
         else np.asarray(timestamps, dtype=np.float64))
    B, M, N = scene.B, scene.M, scene.n_sub
    freqs = scene.carrier_freq + np.fft.fftfreq(N) * scene.bandwidth
    ant = np.stack([a.antenna_positions(scene.wavelength / 2) for a in scene.arrays])
    centers = np.asarray([a.position for a in scene.arrays], dtype=np.float64)
    sc_pos = np.asarray([p for p, _ in scene.scatterers], dtype=np.float64).reshape(-1, 2)
    sc_gain = np.asarray([g for _, g in scene.scatterers], dtype=np.float64)

    H = np.zeros((L, B, M, N), dtype=np.complex128)
    for l in range(L):
        ue = x[l]
        for b in range(B):
            if np.linalg.norm(ue - centers[b]) < 1e-9:
                raise DataError(
                    f"position {l} coincides with array {b + 1} phase center"
                )
            # path distances per antenna: (n_paths, M)
            dists = []
            amps = []
            if not _los_blocked(scene, ue, centers[b]):
                d_los = np.linalg.norm(ant[b] - ue, axis=1)
                dists.append(d_los)
                amps.append(1.0 / d_los)
            if sc_pos.size:
                d1 = np.linalg.norm(sc_pos - ue, axis=1)  # (S,)
                d2 = np.linalg.norm(ant[b][None, :, :] - sc_pos[:, None, :], axis=2)
                dists.append(d1[:, None] + d2)
                amps.append((sc_gain[:, None] / (d1[:, None] * d2)))
            if not dists:
                continue
            dist = np.concatenate([np.atleast_2d(d) for d in dists], axis=0)
            amp = np.concatenate([np.atleast_2d(a) for a in amps], axis=0)
            tau = dist / C_LIGHT  # (P, M)
            phase = np.exp(-2j * np.pi * tau[:, :, None] * freqs[None, None, :])
            H[l, b] = np.sum(amp[:, :, None] * phase, axis=0)

    if scene.noise_db is not None and np.isfinite(scene.noise_db):
        rng = np.random.default_rng(seed)
        power = np.mean(np.abs(H) ** 2, axis=(1, 2, 3), keepdims=True)
        sigma = np.sqrt(power * 10.0 ** (scene.noise_db / 10.0) / 2.0)
        H = H + sigma * (rng.standard_normal(H.shape)
                         + 1j * rng.standard_normal(H.shape))
    meta = {"synthetic": True, "seed": seed, "noise_db": scene.noise_db,
            "carrier_freq": scene.carrier_freq, "bandwidth": scene.bandwidth}
    return CsiDataset(H, x, t, meta)


# ---------------------------------------------------------------------------
# default desk-scale scene: L-shaped area with a central blocker


def default_scene(n_arrays: int = 2, n_sub: int = 64,
                  noise_db: float = -30.0) -> SceneSpec:
    """~14 m x 14 m L-shaped area (upper-right quadrant removed), arrays
    of 4 antennas on the boundary, a central blocker, and perimeter
    scatterers providing non-line-of-sight coverage."""
    placements = [
        ((0.4, 7.0), (1.0, 1.0)),
        ((7.0, 0.4), (1.0, -1.0)),
        ((0.4, 13.6), (1.0, -1.0)),
        ((13.6, 0.4), (-1.0, 1.0)),
    ]
    if not (1 <= n_arrays <= len(placements)):
        raise DataError(f"n_arrays must be in 1..{len(placements)}")
    arrays = tuple(ArraySpec(p, o, m=4) for p, o in placements[:n_arrays])
    scatterers = (
        ((1.0, 1.0), 8.0),
        ((13.0, 1.0), 8.0),
        ((1.0, 13.0), 8.0),
        ((6.8, 6.8), 8.0),
        ((11.0, 5.0), 8.0),
        ((5.0, 11.0), 8.0),
        ((3.0, 6.0), 8.0),
        ((6.0, 3.0), 8.0),
        ((9.0, 2.5), 8.0),
        ((2.5, 9.0), 8.0),
        ((12.5, 3.5), 8.0),
        ((3.5, 12.5), 8.0),
    )
    blockers = (((4.5, 4.5), (6.0, 6.0)),)
    return SceneSpec(arrays=arrays, bandwidth=300e6, n_sub=n_sub,
                     scatterers=scatterers, blockers=blockers,
                     noise_db=noise_db)


def default_trajectory(n_samples: int = 2000, seed: int = 0,
                       sample_interval: float = 1.0) -> TrajectorySpec:
    """Random-waypoint walk over the L-shaped area at 1 m/s with
    occasional standstills, sized to yield about n_samples points."""
    rng = np.random.default_rng(seed)
    waypoints = []
    dwell = []
    total_time = 0.0
    prev = None
    while total_time < n_samples * sample_interval:
        # rejection-sample a point inside the L shape
        while True:
            p = rng.uniform(0.8, 13.2, size=2)
            if not (p[0] > 6.8 and p[1] > 6.8):
                break
        waypoints.append(tuple(p))
        d = float(rng.uniform(0.0, 6.0)) if rng.random() < 0.25 else 0.0
        dwell.append(d)
        if prev is not None:
            total_time += float(np.linalg.norm(p - np.asarray(prev)))
        total_time += d
        prev = p
    return TrajectorySpec(tuple(waypoints), speed=1.0, dwell=tuple(dwell),
                          sample_interval=sample_interval, seed=seed)
