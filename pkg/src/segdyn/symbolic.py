"""Orbit encoding, pseudo-orbits, shadowing checks, and word enumeration.

An orbit is encoded by the cells its time-jT states fall in; concatenating
the corresponding segments gives a pseudo-orbit that should stay within the
calibrated tolerance of the true orbit. Admissible words, cylinder
measures, and the entropy of the landing probabilities live here too.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cover import Partition
from .errors import EncodingError
from .flow import FlowModel, IntegratorConfig, advance_many
from .segments import SegmentLibrary
from .transitions import MarkovMatrix, TransitionTensor, _admissible_rows

Array = np.ndarray

__all__ = [
    "SymbolSequence",
    "CylinderSet",
    "PseudoOrbit",
    "EnumerationResult",
    "KSEntropyResult",
    "encode_orbit",
    "encode_many",
    "reconstruct_pseudo_orbit",
    "shadowing_error",
    "shadowing_report",
    "enumerate_admissible",
    "reachable_symbols",
    "cylinder_measure",
    "ks_entropy",
    "commutation_check",
    "sensitivity_witness",
]


@dataclass(frozen=True)
class SymbolSequence:
    """A finite word of cell ids. ``complete`` is False when the orbit left
    the partition before the requested number of symbols."""

    word: tuple
    horizon: float | None = None
    complete: bool = True

    def __post_init__(self):
        object.__setattr__(self, "word", tuple(int(s) for s in self.word))

    def __len__(self) -> int:
        return len(self.word)


@dataclass(frozen=True)
class CylinderSet:
    """All sequences agreeing with a fixed nonempty prefix."""

    prefix: SymbolSequence

    def __post_init__(self):
        if len(self.prefix) < 1:
            raise ValueError("cylinder prefix must be nonempty")


@dataclass(eq=False)
class PseudoOrbit:
    """Concatenated segments on the global grid t in [0, mT].

    Windows abut: the junction time appears twice, once with the outgoing
    segment's final state and once with the incoming segment's start.
    """

    word: SymbolSequence
    times: Array
    states: Array


def _window_states(model: FlowModel, partition: Partition, x0s: Array, length: int,
                   horizon: float, cfg: IntegratorConfig) -> Array:
    """Cell ids at times 0, T, ..., (length-1) T for a batch of points,
    computed by one continuous integration per point."""
    states = np.asarray(x0s, dtype=float)
    cells = np.empty((states.shape[0], length), dtype=np.int64)
    cells[:, 0] = partition.assign_many(states)
    for j in range(1, length):
        states = advance_many(model, states, horizon, cfg)
        cells[:, j] = partition.assign_many(states)
    return cells


def _truncate(cells: Array, horizon: float) -> SymbolSequence:
    word = cells.tolist()
    if 0 in word:
        cut = word.index(0)
        return SymbolSequence(word=tuple(word[:cut]), horizon=horizon, complete=False)
    return SymbolSequence(word=tuple(word), horizon=horizon, complete=True)


def encode_orbit(model: FlowModel, partition: Partition, x0, length: int,
                 horizon: float, cfg: IntegratorConfig) -> SymbolSequence:
    """Word of cells visited at times jT, j = 0..length-1.

    The word truncates (complete=False) at the first window whose state is
    in no cell. A start point outside every cell cannot be encoded at all.
    """
    if length < 1:
        raise ValueError(f"length must be at least 1, got {length}")
    x0 = np.asarray(x0, dtype=float)
    cells = _window_states(model, partition, x0[None, :], length, horizon, cfg)[0]
    if cells[0] == 0:
        raise EncodingError(f"initial point {x0.tolist()} lies outside every cell")
    return _truncate(cells, horizon)


def encode_many(model: FlowModel, partition: Partition, x0s: Array, length: int,
                horizon: float, cfg: IntegratorConfig) -> list[SymbolSequence | None]:
    """Batched encoding; entries are None for points outside every cell."""
    if length < 1:
        raise ValueError(f"length must be at least 1, got {length}")
    cells = _window_states(model, partition, np.asarray(x0s, dtype=float),
                           length, horizon, cfg)
    return [None if row[0] == 0 else _truncate(row, horizon) for row in cells]


def reconstruct_pseudo_orbit(lib: SegmentLibrary, word: SymbolSequence) -> PseudoOrbit:
    """Concatenate the stored segments named by the word on the global grid."""
    if len(word) < 1:
        raise ValueError("word must be nonempty")
    for s in word.word:
        if not 1 <= s <= lib.n_segments:
            raise ValueError(f"word symbol {s} out of range 1..{lib.n_segments}")
    idx = np.asarray(word.word, dtype=np.int64) - 1
    states = lib.states[idx].reshape(-1, lib.dimension)
    offsets = np.arange(len(word))[:, None] * lib.horizon
    times = (offsets + lib.times[None, :]).ravel()
    return PseudoOrbit(word=word, times=times, states=states)


def shadowing_error(model: FlowModel, x0, pseudo: PseudoOrbit,
                    cfg: IntegratorConfig) -> float:
    """Max distance between the true orbit of x0 and the pseudo-orbit on the
    global sample grid. The true orbit is integrated once, continuously; at
    window junctions both retained pseudo-orbit values are compared."""
    x0 = np.asarray(x0, dtype=float)
    return float(_shadowing_errors(model, x0[None, :], [pseudo], cfg)[0])


def _shadowing_errors(model: FlowModel, x0s: Array, pseudos: Sequence[PseudoOrbit],
                      cfg: IntegratorConfig) -> Array:
    """Shadowing errors for a batch of orbits against same-grid pseudo-orbits."""
    grid = pseudos[0].times
    for p in pseudos[1:]:
        if p.times.shape != grid.shape or not np.array_equal(p.times, grid):
            raise ValueError("all pseudo-orbits must share one global grid")
    # The grid repeats junction times; integrate over the unique times and
    # compare each pseudo sample against the matching true state.
    unique_times, inverse = np.unique(grid, return_inverse=True)
    states = np.asarray(x0s, dtype=float)
    errors = np.zeros(states.shape[0])
    pstack = np.stack([p.states for p in pseudos])
    prev_t = 0.0
    for k, t in enumerate(unique_times):
        if t > prev_t:
            states = advance_many(model, states, t - prev_t, cfg, t_start=prev_t)
            prev_t = t
        for col in np.flatnonzero(inverse == k):
            dist = np.linalg.norm(pstack[:, col, :] - states, axis=1)
            np.maximum(errors, dist, out=errors)
    return errors


def shadowing_report(model: FlowModel, lib: SegmentLibrary, partition: Partition,
                     x0s: Array, length: int, cfg: IntegratorConfig) -> dict:
    """Encode a batch of points and verify their pseudo-orbits in one pass.

    Incomplete encodings are verified over their truncated prefix. Points
    outside every cell are reported but carry no error value.
    """
    x0s = np.asarray(x0s, dtype=float)
    words = encode_many(model, partition, x0s, length, lib.horizon, cfg)
    per_orbit = []
    by_length: dict[int, list[int]] = {}
    for i, w in enumerate(words):
        if w is None or len(w) == 0:
            per_orbit.append({"x0": x0s[i].tolist(), "word_length": 0,
                              "complete": False, "error": None})
            continue
        per_orbit.append(None)
        by_length.setdefault(len(w), []).append(i)
    for wlen, rows in by_length.items():
        pseudos = [reconstruct_pseudo_orbit(lib, words[i]) for i in rows]
        errs = _shadowing_errors(model, x0s[rows], pseudos, cfg)
        for i, e in zip(rows, errs):
            per_orbit[i] = {"x0": x0s[i].tolist(), "word_length": len(words[i]),
                            "complete": words[i].complete, "error": float(e)}
    errors = [r["error"] for r in per_orbit if r["error"] is not None]
    n_complete = sum(1 for r in per_orbit if r["complete"])
    return {
        "epsilon": None if math.isnan(lib.epsilon) else lib.epsilon,
        "max_error": max(errors) if errors else None,
        "requested_length": length,
        "orbits": len(per_orbit),
        "complete_orbits": n_complete,
        "per_orbit": per_orbit,
    }


@dataclass(eq=False)
class EnumerationResult:
    """Words found by enumeration plus the exactly-computed reachable set.

    overflowed is True when the word list was cut off at the cap; the
    reachable set is computed by layer propagation and is exact either way.
    """

    words: list
    reachable: set
    overflowed: bool


def _as_tuple_system(gamma_or_tensor) -> tuple[int, set, int]:
    """Normalize to (window order k, admissible k-tuples, n_cells)."""
    if isinstance(gamma_or_tensor, TransitionTensor):
        return (gamma_or_tensor.order, set(gamma_or_tensor.admissible_tuples),
                gamma_or_tensor.n_cells)
    rows = _admissible_rows(gamma_or_tensor)
    pairs = {(int(r) + 1, int(c) + 1) for r, c in zip(*np.nonzero(rows))}
    return 2, pairs, rows.shape[0]


def _successor_map(order: int, tuples: set) -> tuple[dict, dict]:
    """prefix-validity sets by length, and successors of each (order-1) window."""
    prefixes: dict[int, set] = {l: set() for l in range(1, order + 1)}
    succ: dict[tuple, list] = {}
    for t in tuples:
        for l in range(1, order + 1):
            prefixes[l].add(t[:l])
        succ.setdefault(t[:-1], []).append(t[-1])
    for k in succ:
        succ[k] = sorted(set(succ[k]))
    return prefixes, succ


def enumerate_admissible(gamma_or_tensor, n0: int, length: int,
                         cap: int = 100_000) -> EnumerationResult:
    """All admissible words of the given length starting at n0.

    Under a transition matrix, consecutive pairs must be admissible; under an
    order-k tensor every sliding length-k window must be an admissible tuple
    (shorter words must be prefixes of admissible tuples). Enumeration stops
    collecting past ``cap`` words and sets the overflow flag; the reachable
    symbol set is still exact.
    """
    if length < 1:
        raise ValueError(f"length must be at least 1, got {length}")
    order, tuples, n_cells = _as_tuple_system(gamma_or_tensor)
    if not 1 <= n0 <= n_cells:
        raise ValueError(f"start symbol {n0} out of range 1..{n_cells}")
    prefixes, succ = _successor_map(order, tuples)

    words: list[SymbolSequence] = []
    overflowed = False

    def extensions(word: tuple) -> list:
        if len(word) < order - 1:
            return sorted({p[len(word)] for p in prefixes[len(word) + 1]
                           if p[:len(word)] == word})
        if len(word) == order - 1:
            return succ.get(word, [])
        return succ.get(word[-(order - 1):], [])

    def dfs(word: tuple) -> bool:
        nonlocal overflowed
        if len(word) == length:
            if len(words) >= cap:
                overflowed = True
                return False
            words.append(SymbolSequence(word=word, horizon=None, complete=True))
            return True
        for s in extensions(word):
            if not dfs(word + (s,)):
                return False
        return True

    dfs((n0,))

    reachable = reachable_symbols(gamma_or_tensor, n0, length)
    return EnumerationResult(words=words, reachable=reachable, overflowed=overflowed)


def reachable_symbols(gamma_or_tensor, n0: int, length: int | None) -> set:
    """Symbols appearing in some admissible word of the given length from n0.

    Layer propagation with dead-end pruning: a symbol only counts if the
    word it sits in really extends to the full length. ``length=None`` is
    the fixpoint surrogate and returns every symbol forward-reachable from
    n0 in any number of steps.
    """
    order, tuples, n_cells = _as_tuple_system(gamma_or_tensor)
    if not 1 <= n0 <= n_cells:
        raise ValueError(f"start symbol {n0} out of range 1..{n_cells}")
    prefixes, succ = _successor_map(order, tuples)

    def state_succ(state: tuple) -> list:
        if len(state) < order - 1:
            return sorted({p[len(state)] for p in prefixes[len(state) + 1]
                           if p[:len(state)] == state})
        return succ.get(state[-(order - 1):], [])

    if length is None:
        seen_states = {(n0,)}
        frontier = [(n0,)]
        symbols = {n0}
        while frontier:
            nxt = []
            for st in frontier:
                for s in state_succ(st):
                    new = (st + (s,))[-(order - 1):] if order > 2 else (s,)
                    symbols.add(s)
                    if new not in seen_states:
                        seen_states.add(new)
                        nxt.append(new)
            frontier = nxt
        return symbols

    if length < 1:
        raise ValueError(f"length must be at least 1, got {length}")
    # forward layers of suffix states
    layers: list[set] = [{(n0,)}]
    for _ in range(length - 1):
        nxt = set()
        for st in layers[-1]:
            for s in state_succ(st):
                nxt.add((st + (s,))[-(order - 1):] if order > 2 else (s,))
        layers.append(nxt)
    # survive[r] = states from which r more steps are possible
    all_states = set().union(*layers)
    survive: list[set] = [set(all_states)]
    for _ in range(length - 1):
        prev = survive[-1]
        survive.append({st for st in all_states if any(
            ((st + (s,))[-(order - 1):] if order > 2 else (s,)) in prev
            for s in state_succ(st))})
    symbols = set()
    for j, layer in enumerate(layers):
        needed = survive[length - 1 - j]
        for st in layer:
            if st in needed:
                symbols.add(st[-1])
    return symbols


def cylinder_measure(p: MarkovMatrix, prefix: SymbolSequence) -> float:
    """Markov measure of the cylinder fixed by the prefix: the product of
    consecutive landing probabilities. A length-1 prefix has measure 1."""
    if len(prefix) < 1:
        raise ValueError("prefix must be nonempty")
    out = 1.0
    for a, b in zip(prefix.word, prefix.word[1:]):
        out *= float(p.p[a - 1, b - 1])
    return out


@dataclass(frozen=True)
class KSEntropyResult:
    """Entropy of the landing probabilities, in two conventions.

    ``unweighted`` sums -p log p over all entries; ``stationary_weighted``
    weights each row by the stationary distribution, the standard entropy
    rate of the Markov chain.
    """

    unweighted: float
    stationary_weighted: float
    stationary: Array


def _stationary_distribution(p: Array, iterations: int = 2000) -> Array:
    """Stationary row vector by power iteration with running (Cesaro)
    averaging, which also settles periodic chains such as permutations."""
    n = p.shape[0]
    x = np.full(n, 1.0 / n)
    acc = np.zeros(n)
    for _ in range(iterations):
        x = x @ p
        total = x.sum()
        if total <= 0:
            break
        x = x / total
        acc += x
    if acc.sum() == 0:
        return np.full(n, 1.0 / n)
    return acc / acc.sum()


def ks_entropy(p: MarkovMatrix) -> KSEntropyResult:
    """Both entropy readings of the landing-probability matrix."""
    mat = p.p
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(mat > 0, mat * np.log(np.where(mat > 0, mat, 1.0)), 0.0)
    row_entropy = -plogp.sum(axis=1)
    pi = _stationary_distribution(mat)
    return KSEntropyResult(
        unweighted=float(row_entropy.sum()),
        stationary_weighted=float((pi * row_entropy).sum()),
        stationary=pi,
    )


def commutation_check(model: FlowModel, partition: Partition, x0, length: int,
                      horizon: float, cfg: IntegratorConfig) -> bool:
    """Whether encoding commutes with the time-T map: the encoding of
    F^T(x0) must equal the left shift of the encoding of x0, both complete."""
    if length < 2:
        raise ValueError(f"length must be at least 2, got {length}")
    x0 = np.asarray(x0, dtype=float)
    base = encode_orbit(model, partition, x0, length, horizon, cfg)
    shifted_start = advance_many(model, x0[None, :], horizon, cfg)[0]
    if partition.assign_many(shifted_start[None, :])[0] == 0:
        raise EncodingError(
            f"time-T image {shifted_start.tolist()} lies outside every cell")
    shifted = encode_orbit(model, partition, shifted_start, length - 1, horizon, cfg)
    return base.complete and shifted.complete and shifted.word == base.word[1:]


def sensitivity_witness(gamma, prefix: Sequence[int]) -> tuple[SymbolSequence, SymbolSequence]:
    """Two admissible continuations of the prefix that differ at the next
    position, the separation mechanism behind sensitive dependence. Needs
    the prefix's last symbol to have at least two admissible successors."""
    rows = _admissible_rows(gamma)
    prefix = tuple(int(s) for s in prefix)
    if not prefix:
        raise ValueError("prefix must be nonempty")
    for a, b in zip(prefix, prefix[1:]):
        if not rows[a - 1, b - 1]:
            raise ValueError(f"prefix pair ({a}, {b}) is not admissible")
    successors = np.flatnonzero(rows[prefix[-1] - 1]) + 1
    if successors.size < 2:
        raise ValueError(
            f"symbol {prefix[-1]} has {successors.size} admissible successor(s); "
            "need at least two to separate")
    w1 = SymbolSequence(word=prefix + (int(successors[0]),), horizon=None)
    w2 = SymbolSequence(word=prefix + (int(successors[1]),), horizon=None)
    return w1, w2
