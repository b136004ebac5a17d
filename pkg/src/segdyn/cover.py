"""Finite ball covers of a box-shaped absorbing set and their partitions.

The cover is an ordered list of balls; the partition assigns each point to
the largest-index ball containing it, which makes the cells mutually
disjoint by construction. Radii are calibrated so that an evolved ball
stays within a target diameter over a finite horizon.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._rng import STREAM_CALIBRATION, derive_rng
from .errors import CalibrationError, CoverageError, DimensionExplosionError
from .flow import FlowModel, IntegratorConfig, sample_path

Array = np.ndarray

__all__ = [
    "BoxDomain",
    "CoverBall",
    "Cover",
    "Partition",
    "CellMeasure",
    "collocate",
    "calibrate_delta",
    "calibrate_deltas",
    "minimal_cover",
    "cell_measure",
    "metric_entropy",
    "cover_to_json",
    "cover_from_json",
    "write_points_csv",
    "read_points_csv",
]

DEFAULT_COLLOCATION_CAP = 2_000_000

_ASSIGN_CHUNK = 512


@dataclass(frozen=True, eq=False)
class BoxDomain:
    """Axis-aligned box standing in for the compact absorbing set."""

    lower: Array
    upper: Array

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError(f"bounds must be 1-d arrays of equal length, got {lo.shape} and {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("lower bound must be strictly below upper bound on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> Array:
        return self.upper - self.lower

    def contains(self, points: Array) -> Array:
        pts = np.asarray(points, dtype=float)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=-1)

    def sample(self, rng: np.random.Generator, count: int) -> Array:
        return rng.uniform(self.lower, self.upper, size=(count, self.dimension))

    def max_norm(self) -> float:
        """Largest Euclidean norm over the box (attained at a corner)."""
        return float(np.sqrt(np.sum(np.maximum(np.abs(self.lower), np.abs(self.upper)) ** 2)))


@dataclass(frozen=True, eq=False)
class CoverBall:
    index: int
    center: Array
    radius: float


@dataclass(eq=False)
class Cover:
    """Ordered ball cover; ball n is centers[n-1] with radius radii[n-1]."""

    centers: Array
    radii: Array

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        r = np.asarray(self.radii, dtype=float)
        if c.ndim != 2 or r.shape != (c.shape[0],):
            raise ValueError(f"centers/radii shapes inconsistent: {c.shape} vs {r.shape}")
        if not np.all(r > 0):
            raise ValueError("all radii must be positive")
        self.centers = c
        self.radii = r

    @property
    def n_balls(self) -> int:
        return self.centers.shape[0]

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]

    @property
    def balls(self) -> list[CoverBall]:
        return [CoverBall(index=n + 1, center=self.centers[n], radius=float(self.radii[n]))
                for n in range(self.n_balls)]


@dataclass(eq=False)
class Partition:
    """Disjoint cells induced by the cover: a point belongs to the cell of
    the largest-index ball containing it."""

    cover: Cover

    @property
    def n_cells(self) -> int:
        return self.cover.n_balls

    def assign_many(self, points: Array) -> Array:
        """Cell ids (1..N) for each point; 0 marks points outside every ball."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2:
            raise ValueError(f"expected an (M, d) array, got shape {pts.shape}")
        centers = self.cover.centers
        r2 = self.cover.radii ** 2
        ids = np.arange(1, self.n_cells + 1, dtype=np.int64)
        out = np.empty(pts.shape[0], dtype=np.int64)
        for start in range(0, pts.shape[0], _ASSIGN_CHUNK):
            chunk = pts[start:start + _ASSIGN_CHUNK]
            d2 = ((chunk[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
            inside = d2 <= r2[None, :]
            out[start:start + _ASSIGN_CHUNK] = np.where(inside, ids[None, :], 0).max(axis=1)
        return out

    def assign(self, x) -> int | None:
        """Cell id for a single point, or None when no ball contains it."""
        cell = int(self.assign_many(np.asarray(x, dtype=float)[None, :])[0])
        return cell if cell > 0 else None


@dataclass(frozen=True, eq=False)
class CellMeasure:
    """Empirical cell weights, normalized over the covered samples."""

    weights: Array

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0):
            raise ValueError("weights must be a 1-d nonnegative array")
        object.__setattr__(self, "weights", w)


def collocate(domain: BoxDomain, resolution: Sequence[int] | int,
              max_points: int = DEFAULT_COLLOCATION_CAP) -> Array:
    """Regular grid of cell centers, resolution[i] subdivisions along axis i.

    Refuses grids larger than ``max_points``: the point count grows as the
    product of the per-axis resolutions, so a 10-per-axis grid in n
    dimensions already costs 10^n points.
    """
    d = domain.dimension
    if isinstance(resolution, (int, np.integer)):
        res = np.full(d, int(resolution), dtype=np.int64)
    else:
        res = np.asarray(resolution, dtype=np.int64)
    if res.shape != (d,):
        raise ValueError(f"resolution must have length {d}, got shape {res.shape}")
    if np.any(res < 1):
        raise ValueError("resolution entries must be at least 1")
    count = int(np.prod(res))
    if count > max_points:
        raise DimensionExplosionError(
            f"collocation grid would hold {count} points (> cap {max_points}); "
            f"per-axis resolutions {res.tolist()} multiply out across {d} dimensions")
    axes = [domain.lower[i] + (np.arange(res[i]) + 0.5) * domain.widths[i] / res[i]
            for i in range(d)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=-1)


def _probe_directions(dimension: int, boundary_samples: int, rng: np.random.Generator) -> Array:
    """Zero vector (the center), the 2d axis points, and random unit vectors."""
    dirs = [np.zeros((1, dimension))]
    eye = np.eye(dimension)
    dirs.append(eye)
    dirs.append(-eye)
    if boundary_samples > 0:
        g = rng.normal(size=(boundary_samples, dimension))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        dirs.append(g)
    return np.concatenate(dirs, axis=0)


def _evolved_diameters(model: FlowModel, centers: Array, deltas: Array, dirs: Array,
                       horizon: float, time_samples: int, cfg: IntegratorConfig) -> Array:
    """Empirical sup over the time grid of the diameter of each evolved ball.

    dirs has shape (N, P, d); point cloud n is centers[n] + deltas[n]*dirs[n].
    The estimate is a lower bound on the true diameter (finitely many probe
    points and sample times).
    """
    n, p, d = dirs.shape
    clouds = centers[:, None, :] + deltas[:, None, None] * dirs
    _, states = sample_path(model, clouds.reshape(-1, d), horizon, time_samples, cfg)
    states = states.reshape(n, p, time_samples, d)
    diam = np.zeros(n)
    for k in range(time_samples):
        x = states[:, :, k, :]
        d2 = ((x[:, :, None, :] - x[:, None, :, :]) ** 2).sum(axis=-1)
        np.maximum(diam, np.sqrt(d2.max(axis=(1, 2))), out=diam)
    return diam


def calibrate_deltas(model: FlowModel, centers: Array, horizon: float, epsilon: float,
                     cfg: IntegratorConfig, boundary_samples: int = 32, *,
                     delta_max: float, delta_min: float = 1e-9,
                     time_samples: int = 17, rel_tol: float = 0.01,
                     seed: int = 0) -> Array:
    """Largest radius per center keeping the evolved-ball diameter within epsilon.

    Bisection to ``rel_tol`` relative accuracy, run on all centers at once.
    Probe clouds use the 2d axis points plus ``boundary_samples`` random unit
    directions drawn from a per-center stream of ``seed``. Radii are capped
    at ``delta_max``; if the target diameter is unreachable even at
    ``delta_min`` a CalibrationError is raised.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if not (0 < delta_min < delta_max):
        raise ValueError(f"need 0 < delta_min < delta_max, got {delta_min}, {delta_max}")
    centers = np.asarray(centers, dtype=float)
    n, d = centers.shape
    dirs = np.stack([
        _probe_directions(d, boundary_samples, derive_rng(seed, STREAM_CALIBRATION, i))
        for i in range(n)
    ])

    def feasible(deltas: Array, active: Array) -> Array:
        out = np.zeros(n, dtype=bool)
        idx = np.flatnonzero(active)
        for start in range(0, idx.size, 256):
            part = idx[start:start + 256]
            diam = _evolved_diameters(model, centers[part], deltas[part], dirs[part],
                                      horizon, time_samples, cfg)
            out[part] = diam <= epsilon
        return out

    result = np.full(n, delta_max)
    all_on = np.ones(n, dtype=bool)
    cap_ok = feasible(np.full(n, delta_max), all_on)
    todo = ~cap_ok
    if np.any(todo):
        floor_ok = feasible(np.full(n, delta_min), todo)
        bad = todo & ~floor_ok
        if np.any(bad):
            first = int(np.flatnonzero(bad)[0])
            raise CalibrationError(
                f"center {first + 1} at {centers[first].tolist()}: evolved-ball diameter "
                f"exceeds epsilon={epsilon} even at the minimum radius {delta_min}")
        lo = np.full(n, delta_min)
        hi = np.full(n, delta_max)
        active = todo.copy()
        for _ in range(200):
            if not np.any(active):
                break
            mid = np.sqrt(lo * hi)
            ok = feasible(mid, active)
            lo = np.where(active & ok, mid, lo)
            hi = np.where(active & ~ok, mid, hi)
            active &= (hi / lo) > 1.0 + rel_tol
        result[todo] = lo[todo]
    return result


def calibrate_delta(model: FlowModel, center, horizon: float, epsilon: float,
                    cfg: IntegratorConfig, boundary_samples: int = 32, *,
                    delta_max: float, delta_min: float = 1e-9,
                    time_samples: int = 17, rel_tol: float = 0.01,
                    seed: int = 0) -> float:
    """Single-center version of :func:`calibrate_deltas`."""
    center = np.asarray(center, dtype=float)
    out = calibrate_deltas(model, center[None, :], horizon, epsilon, cfg,
                           boundary_samples, delta_max=delta_max, delta_min=delta_min,
                           time_samples=time_samples, rel_tol=rel_tol, seed=seed)
    return float(out[0])


def _membership(samples: Array, centers: Array, radii: Array) -> Array:
    """Boolean (n_samples, n_balls) table of ball membership, chunked."""
    out = np.empty((samples.shape[0], centers.shape[0]), dtype=bool)
    r2 = radii ** 2
    for start in range(0, samples.shape[0], _ASSIGN_CHUNK):
        chunk = samples[start:start + _ASSIGN_CHUNK]
        d2 = ((chunk[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
        out[start:start + _ASSIGN_CHUNK] = d2 <= r2[None, :]
    return out


def minimal_cover(centers: Array, radii: Array, domain_samples: Array) -> Cover:
    """Greedily prune balls whose removal keeps every domain sample covered.

    The scan runs in descending index order, so later balls are dropped
    first; the result is inclusion-minimal with respect to the sample set.
    Every domain sample must be covered by the input balls to begin with.
    """
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    samples = np.asarray(domain_samples, dtype=float)
    member = _membership(samples, centers, radii)
    uncovered = ~member.any(axis=1)
    if np.any(uncovered):
        first = int(np.flatnonzero(uncovered)[0])
        raise CoverageError(
            f"domain sample {first} at {samples[first].tolist()} is outside every input ball")
    counts = member.sum(axis=1)
    keep = np.ones(centers.shape[0], dtype=bool)
    for ball in range(centers.shape[0] - 1, -1, -1):
        col = member[:, ball]
        if np.all(counts[col] >= 2):
            keep[ball] = False
            counts[col] -= 1
    return Cover(centers=centers[keep], radii=radii[keep])


def cell_measure(partition: Partition, samples: Array) -> CellMeasure:
    """Counting-measure weights mu(A_n) over the covered samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] == 0:
        raise ValueError("samples must be nonempty")
    assigned = partition.assign_many(samples)
    covered = assigned > 0
    total = int(covered.sum())
    if total == 0:
        raise CoverageError("no sample is covered by any cell; measure undefined")
    counts = np.bincount(assigned[covered], minlength=partition.n_cells + 1)[1:]
    return CellMeasure(weights=counts / total)


def metric_entropy(mu) -> float:
    """Entropy -sum w log w of a normalized weight vector, with 0 log 0 = 0."""
    w = mu.weights if isinstance(mu, CellMeasure) else np.asarray(mu, dtype=float)
    total = float(w.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1 (got {total})")
    pos = w[w > 0]
    return float(-(pos * np.log(pos)).sum())


def cover_to_json(cover: Cover) -> dict:
    return {"balls": [
        {"index": b.index, "center": b.center.tolist(), "radius": b.radius}
        for b in cover.balls
    ]}


def cover_from_json(doc: dict) -> Cover:
    balls = doc["balls"]
    order = sorted(range(len(balls)), key=lambda i: balls[i]["index"])
    indices = [balls[i]["index"] for i in order]
    if indices != list(range(1, len(balls) + 1)):
        raise ValueError(f"ball indices must be consecutive from 1, got {indices}")
    centers = np.asarray([balls[i]["center"] for i in order], dtype=float)
    radii = np.asarray([balls[i]["radius"] for i in order], dtype=float)
    return Cover(centers=centers, radii=radii)


def write_points_csv(path, points: Array) -> None:
    """One point per row, comma-separated coordinates."""
    np.savetxt(path, np.asarray(points, dtype=float), delimiter=",")


def read_points_csv(path) -> Array:
    pts = np.loadtxt(path, delimiter=",", ndmin=2)
    return np.asarray(pts, dtype=float)
