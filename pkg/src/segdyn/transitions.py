"""Sampled transition structure between partition cells.

Whether the time-T image of one cell meets another is undecidable exactly,
so admissibility is estimated Ulam-style: draw seeded samples in every
cell, advance them, and record the cells they land in. Higher-order
tensors reuse the same per-cell sample streams, which makes prefix closure
across orders exact.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._rng import STREAM_TRANSITIONS, derive_rng
from .cover import Partition
from .errors import SamplingError
from .flow import FlowModel, IntegratorConfig, advance_many
from .segments import SegmentLibrary

Array = np.ndarray

__all__ = [
    "TransitionMatrix",
    "MarkovMatrix",
    "TransitionTensor",
    "ExpansionVerdict",
    "estimate_transitions",
    "estimate_tensor",
    "sample_itineraries",
    "row_sensitivity",
    "expanding_to_depth",
    "ball_admissibility",
    "transitions_to_json",
    "transitions_from_json",
    "tensor_to_json",
    "tensor_from_json",
]

_DENSE_JSON_LIMIT = 512


@dataclass(eq=False)
class TransitionMatrix:
    """Sampled admissibility table: admissible[m-1, n-1] says some sample of
    cell m landed in cell n. counts holds the raw tallies; escapes counts
    samples that left the partition entirely."""

    admissible: Array
    counts: Array
    escapes: Array

    def __post_init__(self):
        self.admissible = np.asarray(self.admissible, dtype=bool)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.escapes = np.asarray(self.escapes, dtype=np.int64)
        n = self.admissible.shape[0]
        if self.admissible.shape != (n, n) or self.counts.shape != (n, n):
            raise ValueError("admissible and counts must be square and same-shaped")
        if self.escapes.shape != (n,):
            raise ValueError("escapes must have one entry per cell")
        if np.any((self.counts > 0) & ~self.admissible):
            raise ValueError("counts[m][n] > 0 requires admissible[m][n]")

    @property
    def n_cells(self) -> int:
        return self.admissible.shape[0]

    @property
    def landed(self) -> Array:
        return self.counts.sum(axis=1)

    @property
    def unsupported_rows(self) -> set[int]:
        return {int(m) + 1 for m in np.flatnonzero(self.landed == 0)}

    def escape_fractions(self) -> Array:
        total = self.landed + self.escapes
        with np.errstate(invalid="ignore"):
            frac = np.where(total > 0, self.escapes / np.maximum(total, 1), 0.0)
        return frac


@dataclass(eq=False)
class MarkovMatrix:
    """Row-stochastic landing probabilities on supported rows."""

    p: Array

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        n = self.p.shape[0]
        if self.p.shape != (n, n) or np.any(self.p < 0):
            raise ValueError("p must be a square nonnegative matrix")

    @property
    def n_cells(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True, eq=False)
class TransitionTensor:
    """Sparse set of admissible cell itineraries of a fixed length."""

    order: int
    admissible_tuples: frozenset
    n_cells: int

    def __post_init__(self):
        if self.order < 2:
            raise ValueError(f"tensor order must be at least 2, got {self.order}")
        tuples = frozenset(tuple(int(s) for s in t) for t in self.admissible_tuples)
        for t in tuples:
            if len(t) != self.order:
                raise ValueError(f"tuple {t} does not have order {self.order}")
        object.__setattr__(self, "admissible_tuples", tuples)


@dataclass
class ExpansionVerdict:
    """Finite-depth check of the expanding-tensor property.

    witness_failures holds tuples refuted with their whole extension window
    available; inconclusive holds tuples whose window runs past the deepest
    tensor, where no verdict is possible either way.
    """

    expanding_up_to_depth: bool
    witness_failures: list
    inconclusive: list
    depth: int
    m_max: int


def _neighbor_lists(partition: Partition) -> list[Array]:
    """For each ball, the indices (0-based) of balls it intersects.

    Any ball containing a point of ball n must be in this list, so cell
    assignment of points drawn inside ball n only needs these candidates.
    """
    centers = partition.cover.centers
    radii = partition.cover.radii
    out = []
    for n in range(centers.shape[0]):
        d = np.linalg.norm(centers - centers[n], axis=1)
        out.append(np.flatnonzero(d <= radii + radii[n]))
    return out


def _draw_cell_starts(partition: Partition, cell: int, count: int,
                      rng: np.random.Generator, neighbors: Array,
                      max_draw_factor: int = 200) -> Array:
    """Uniform samples in ball(cell) that the partition assigns to ``cell``."""
    center = partition.cover.centers[cell - 1]
    radius = partition.cover.radii[cell - 1]
    d = center.shape[0]
    cand_centers = partition.cover.centers[neighbors]
    cand_r2 = partition.cover.radii[neighbors] ** 2
    cand_ids = neighbors + 1
    accepted: list[Array] = []
    got = 0
    drawn = 0
    budget = max_draw_factor * count
    while got < count and drawn < budget:
        m = min(max(4 * (count - got), 64), budget - drawn)
        drawn += m
        u = rng.normal(size=(m, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        pts = center + (radius * rng.random(m) ** (1.0 / d))[:, None] * u
        d2 = ((pts[:, None, :] - cand_centers[None, :, :]) ** 2).sum(axis=-1)
        inside = d2 <= cand_r2[None, :]
        assigned = np.where(inside, cand_ids[None, :], 0).max(axis=1)
        hit = pts[assigned == cell]
        if hit.shape[0]:
            accepted.append(hit[:count - got])
            got += min(hit.shape[0], count - got)
    if got < count:
        raise SamplingError(
            f"cell {cell}: rejection sampling produced {got}/{count} points "
            f"after {drawn} draws; the cell is a vanishing fraction of its ball")
    return np.concatenate(accepted, axis=0)


def sample_itineraries(model: FlowModel, partition: Partition, horizon: float,
                       n_steps: int, samples_per_cell: int, cfg: IntegratorConfig,
                       rng_seed: int, jobs: int = 1,
                       max_draw_factor: int = 200) -> tuple[Array, Array]:
    """Seeded cell samples and their cell itineraries over ``n_steps`` hops of T.

    Returns (starts of shape (M, d), itineraries of shape (M, n_steps + 1));
    itinerary entry 0 is the source cell and 0 marks an escape. Entries after
    the first escape are zeroed: an itinerary is only trusted up to the time
    it leaves the partition. Start points depend only on (rng_seed, cell), so
    different n_steps and worker counts see identical samples.
    """
    n_cells = partition.n_cells
    neighbors = _neighbor_lists(partition)

    def draw(cell: int) -> Array:
        rng = derive_rng(rng_seed, STREAM_TRANSITIONS, cell)
        return _draw_cell_starts(partition, cell, samples_per_cell, rng,
                                 neighbors[cell - 1], max_draw_factor)

    cells = range(1, n_cells + 1)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_cell = list(pool.map(draw, cells))
    else:
        per_cell = [draw(c) for c in cells]
    starts = np.concatenate(per_cell, axis=0)
    source = np.repeat(np.arange(1, n_cells + 1), samples_per_cell)

    itins = np.zeros((starts.shape[0], n_steps + 1), dtype=np.int64)
    itins[:, 0] = source
    states = starts
    for step in range(1, n_steps + 1):
        states = advance_many(model, states, horizon, cfg)
        itins[:, step] = partition.assign_many(states)
    # zero out everything after the first escape
    escaped = itins == 0
    if np.any(escaped):
        first = np.where(escaped.any(axis=1), escaped.argmax(axis=1), n_steps + 1)
        mask = np.arange(n_steps + 1)[None, :] >= first[:, None]
        itins[mask] = 0
    return starts, itins


def estimate_transitions(model: FlowModel, partition: Partition, horizon: float,
                         samples_per_cell: int, cfg: IntegratorConfig, rng_seed: int,
                         jobs: int = 1, max_draw_factor: int = 200,
                         ) -> tuple[TransitionMatrix, MarkovMatrix]:
    """Ulam-style transition matrix and landing probabilities.

    Gamma[m][n] is set when at least one sample of cell m lands in cell n
    after time ``horizon``. Probabilities divide by the landed samples of
    each row; escapes are tallied separately and excluded from the
    denominator.
    """
    if samples_per_cell < 1:
        raise ValueError(f"samples_per_cell must be at least 1, got {samples_per_cell}")
    _, itins = sample_itineraries(model, partition, horizon, 1, samples_per_cell,
                                  cfg, rng_seed, jobs=jobs,
                                  max_draw_factor=max_draw_factor)
    n = partition.n_cells
    full = np.zeros((n + 1, n + 1), dtype=np.int64)
    np.add.at(full, (itins[:, 0], itins[:, 1]), 1)
    counts = full[1:, 1:]
    escapes = full[1:, 0]
    landed = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(landed[:, None] > 0, counts / np.maximum(landed, 1)[:, None], 0.0)
    return (
        TransitionMatrix(admissible=counts > 0, counts=counts, escapes=escapes),
        MarkovMatrix(p=p),
    )


def estimate_tensor(model: FlowModel, partition: Partition, horizon: float,
                    order: int, samples_per_cell: int, cfg: IntegratorConfig,
                    rng_seed: int, jobs: int = 1,
                    max_draw_factor: int = 200) -> TransitionTensor:
    """Order-k admissibility tensor from full k-step sample itineraries."""
    if order < 2:
        raise ValueError(f"order must be at least 2, got {order}")
    _, itins = sample_itineraries(model, partition, horizon, order - 1,
                                  samples_per_cell, cfg, rng_seed, jobs=jobs,
                                  max_draw_factor=max_draw_factor)
    alive = np.all(itins > 0, axis=1)
    tuples = frozenset(map(tuple, itins[alive].tolist()))
    return TransitionTensor(order=order, admissible_tuples=tuples,
                            n_cells=partition.n_cells)


def _admissible_rows(gamma) -> Array:
    if isinstance(gamma, TransitionMatrix):
        return gamma.admissible
    return np.asarray(gamma, dtype=bool)


def row_sensitivity(gamma) -> bool:
    """Whether every supported row of Gamma has at least two admissible
    successors, the hypothesis under which the shift map has sensitive
    dependence. Rows with no successors at all carry no information and are
    skipped."""
    rows = _admissible_rows(gamma)
    degrees = rows.sum(axis=1)
    supported = degrees > 0
    return bool(np.all(degrees[supported] >= 2))


def expanding_to_depth(tensors: Sequence[TransitionTensor], m_max: int) -> ExpansionVerdict:
    """Finite-depth version of the expanding-tensor chaos criterion.

    For every admissible tuple of order j < K (including single symbols),
    looks for some extension length m <= min(m_max, K - j) at which at least
    two different final symbols are admissible. A tuple with no certificate
    counts as a failure only when its whole search window fit inside the
    available depth (j + m_max <= K); otherwise it is inconclusive and does
    not flip the verdict. The unbounded property is never certified.
    """
    if m_max < 1:
        raise ValueError(f"m_max must be at least 1, got {m_max}")
    by_order = {t.order: t for t in tensors}
    depth = max(by_order)
    expected = list(range(2, depth + 1))
    if sorted(by_order) != expected:
        raise ValueError(f"need consecutive tensor orders 2..{depth}, got {sorted(by_order)}")

    symbols = set()
    for t in by_order[2].admissible_tuples:
        symbols.update(t)
    to_check: list[tuple] = [(s,) for s in sorted(symbols)]
    for order in range(2, depth):
        to_check.extend(sorted(by_order[order].admissible_tuples))

    failures: list[tuple] = []
    inconclusive: list[tuple] = []
    cache: dict[tuple[int, int], dict] = {}

    def finals(j: int, m: int) -> dict:
        # maps each j-prefix of the order-(j+m) tensor to its final symbols
        key = (j, m)
        if key not in cache:
            table: dict[tuple, set] = {}
            for tup in by_order[j + m].admissible_tuples:
                table.setdefault(tup[:j], set()).add(tup[-1])
            cache[key] = table
        return cache[key]

    for tup in to_check:
        j = len(tup)
        ok = False
        for m in range(1, min(m_max, depth - j) + 1):
            if len(finals(j, m).get(tup, ())) >= 2:
                ok = True
                break
        if not ok:
            if j + m_max <= depth:
                failures.append(tup)
            else:
                inconclusive.append(tup)
    return ExpansionVerdict(expanding_up_to_depth=not failures,
                            witness_failures=failures, inconclusive=inconclusive,
                            depth=depth, m_max=m_max)


def ball_admissibility(lib: SegmentLibrary, partition: Partition,
                       rho: Sequence[float], cell: int) -> set[int]:
    """Successor cells admitted by the gradient-ball rule.

    r_n is the gap from segment start n to its nearest other start; n_* is
    the start nearest to the segment's endpoint. Every cell whose start lies
    within rho_n * r_n of start n_* qualifies (n_* always does).
    """
    n_cells = lib.n_segments
    if partition.n_cells != n_cells:
        raise ValueError("partition and library disagree on the number of cells")
    if n_cells < 2:
        raise ValueError("the nearest-neighbor gap r_n needs at least two segments")
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (n_cells,):
        raise ValueError(f"rho must have one entry per cell, got shape {rho.shape}")
    if not 1 <= cell <= n_cells:
        raise ValueError(f"cell id {cell} out of range 1..{n_cells}")
    starts = lib.starts()
    gaps = np.linalg.norm(starts - starts[cell - 1], axis=1)
    gaps[cell - 1] = np.inf
    r_n = float(gaps.min())
    end = lib.ends()[cell - 1]
    dist_end = np.linalg.norm(starts - end, axis=1)
    n_star = int(dist_end.argmin())
    radius = float(rho[cell - 1]) * r_n
    near = np.linalg.norm(starts - starts[n_star], axis=1) <= radius
    near[n_star] = True
    return {int(i) + 1 for i in np.flatnonzero(near)}


def transitions_to_json(tm: TransitionMatrix, mm: MarkovMatrix, rng_seed: int,
                        samples_per_cell: int) -> dict:
    """JSON document for Gamma, counts, p and escape fractions.

    Dense tables up to 512 cells, sparse (row, col, value) triplets above.
    """
    n = tm.n_cells
    doc: dict = {
        "n_cells": n,
        "rng_seed": rng_seed,
        "samples_per_cell": samples_per_cell,
        "unsupported_rows": sorted(tm.unsupported_rows),
        "escapes": tm.escapes.tolist(),
        "escape_fractions": [round(v, 12) for v in tm.escape_fractions().tolist()],
    }
    if n <= _DENSE_JSON_LIMIT:
        doc["format"] = "dense"
        doc["admissible"] = tm.admissible.astype(int).tolist()
        doc["counts"] = tm.counts.tolist()
        doc["p"] = mm.p.tolist()
    else:
        doc["format"] = "sparse"
        rows, cols = np.nonzero(tm.counts)
        doc["counts"] = [[int(r) + 1, int(c) + 1, int(tm.counts[r, c])]
                         for r, c in zip(rows, cols)]
        doc["p"] = [[int(r) + 1, int(c) + 1, float(mm.p[r, c])]
                    for r, c in zip(rows, cols)]
    return doc


def transitions_from_json(doc: dict) -> tuple[TransitionMatrix, MarkovMatrix]:
    n = doc["n_cells"]
    escapes = np.asarray(doc["escapes"], dtype=np.int64)
    if doc["format"] == "dense":
        counts = np.asarray(doc["counts"], dtype=np.int64)
        p = np.asarray(doc["p"], dtype=float)
        admissible = np.asarray(doc["admissible"], dtype=bool)
    else:
        counts = np.zeros((n, n), dtype=np.int64)
        p = np.zeros((n, n))
        for r, c, v in doc["counts"]:
            counts[r - 1, c - 1] = v
        for r, c, v in doc["p"]:
            p[r - 1, c - 1] = v
        admissible = counts > 0
    return (TransitionMatrix(admissible=admissible, counts=counts, escapes=escapes),
            MarkovMatrix(p=p))


def tensor_to_json(tensor: TransitionTensor) -> dict:
    return {
        "order": tensor.order,
        "n_cells": tensor.n_cells,
        "tuples": sorted(list(t) for t in tensor.admissible_tuples),
    }


def tensor_from_json(doc: dict) -> TransitionTensor:
    return TransitionTensor(
        order=doc["order"],
        admissible_tuples=frozenset(tuple(t) for t in doc["tuples"]),
        n_cells=doc["n_cells"],
    )
