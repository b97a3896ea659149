"""Simulation of the quotient chain and its lifted group trajectory.

State on the cover is a (quotient vertex, deck element) pair: traversing an
edge multiplies the running deck element by the edge voltage, and the realized
position is deck * position(vertex).  The first-layer statistics are tracked
through the per-edge increment table of the supplied realization, so centered
sums, interpolated paths, and scaled endpoints share one source of truth.

Randomness contract: sample (or trajectory) ``i`` of a run seeded with ``s``
draws its uniforms from the counter-based stream ``Philox(key=(s, i))`` in a
single pass.  Results are therefore bitwise reproducible for any worker count
or chunk size, and batch sample 0 replays ``sample_path`` exactly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .albanese import Realization, first_layer_form
from .algebra import bch_product, dilate_group, to_limit_group
from .errors import ScalingDomain
from .graph import VoltageGraph

_SNAP_TOL = 1e-8


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based per-sample stream: Philox keyed by (seed, sample index)."""
    if seed < 0 or index < 0:
        raise ValueError("seed and sample index must be nonnegative")
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# Scaling sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingSequence:
    """Positive scaling a_n sitting between the CLT and LLN windows."""

    kind: str
    evaluate: Callable
    domain_min: int = 1
    theta: float | None = None

    def __call__(self, n):
        arr = np.asarray(n)
        if np.any(arr < self.domain_min):
            raise ScalingDomain(f"scaling '{self.kind}' requires n >= {self.domain_min}")
        out = self.evaluate(np.asarray(n, dtype=float))
        return float(out) if np.isscalar(n) or np.ndim(n) == 0 else np.asarray(out, dtype=float)


def _probe_window(scaling: ScalingSequence) -> None:
    """Numerically check monotonicity and the window conditions on a log grid."""
    n = scaling.domain_min * 2.0 ** np.arange(0, 40)
    a = scaling.evaluate(n)
    if np.any(a <= 0):
        raise ValueError(f"scaling '{scaling.kind}' is not positive on the probe grid")
    if np.any(np.diff(a) <= 0):
        raise ValueError(f"scaling '{scaling.kind}' is not monotone increasing")
    ratio_clt = a / np.sqrt(n)
    if np.any(np.diff(ratio_clt) < -1e-12 * ratio_clt[:-1]) or ratio_clt[-1] < 1.2 * ratio_clt[0]:
        raise ValueError(f"scaling '{scaling.kind}' does not outgrow sqrt(n)")
    ratio_lln = a / n
    if np.any(np.diff(ratio_lln) > 1e-12 * ratio_lln[:-1]) or ratio_lln[-1] > 0.5 * ratio_lln[0]:
        raise ValueError(f"scaling '{scaling.kind}' does not fall below n")


def power_scaling(theta: float) -> ScalingSequence:
    """a_n = n**theta with theta in the open window (1/2, 1)."""
    if not 0.5 < theta < 1.0:
        raise ValueError(f"theta must lie in (1/2, 1), got {theta}")
    s = ScalingSequence(kind="power", evaluate=lambda n: n**theta, domain_min=1, theta=theta)
    _probe_window(s)
    return s


def lil_scaling() -> ScalingSequence:
    """b_n = sqrt(n log log n), defined for n >= 16 (first n with log log n > 0)."""
    s = ScalingSequence(
        kind="lil",
        evaluate=lambda n: np.sqrt(n * np.log(np.log(n))),
        domain_min=16,
    )
    _probe_window(s)
    return s


def custom_scaling(fn: Callable, domain_min: int = 1, validate: bool = True) -> ScalingSequence:
    s = ScalingSequence(kind="custom", evaluate=fn, domain_min=domain_min)
    if validate:
        _probe_window(s)
    return s


# ---------------------------------------------------------------------------
# Edge tables and group folds
# ---------------------------------------------------------------------------

def _centered_increments(graph: VoltageGraph, phi: Realization, rho: np.ndarray) -> np.ndarray:
    return first_layer_form(graph, phi) - np.asarray(rho, dtype=float)[None, :]


def _fold_voltages(graph: VoltageGraph, gammas: np.ndarray) -> np.ndarray:
    """log of the ordered product of exp(gamma_k); vectorized for step <= 2."""
    alg = graph.algebra
    if alg.step == 1:
        return gammas.sum(axis=0)
    if alg.step == 2:
        return _fold_step2_batch(graph, gammas[None, :, :])[0]
    acc = alg.zero()
    for row in gammas:
        acc = bch_product(alg, acc, row)
    return acc


def _fold_step2_batch(graph: VoltageGraph, gammas: np.ndarray) -> np.ndarray:
    """Batched step-2 fold: (S, n, dim) -> (S, dim).

    In step 2 the accumulated product is sum(gamma) plus half the sum of
    brackets of each first-layer prefix with the next first-layer increment.
    """
    alg = graph.algebra
    if gammas.shape[1] == 0:
        return np.zeros((gammas.shape[0], alg.dim))
    d1 = alg.layer_dims[0]
    first = gammas[:, :, :d1]
    prefix = np.concatenate(
        [np.zeros((gammas.shape[0], 1, d1)), np.cumsum(first, axis=1)[:, :-1, :]], axis=1
    )
    out = gammas.sum(axis=1)
    table = alg.brackets[:d1, :d1, :]
    out = out + 0.5 * np.einsum("ska,skb,abm->sm", prefix, first, table)
    return out


def _single_vertex_edges(graph: VoltageGraph, u: np.ndarray) -> np.ndarray:
    cum = graph.out_cumprob[0]
    idx = np.searchsorted(cum, u, side="right")
    return graph.out_edges[0][np.minimum(idx, len(cum) - 1)]


def _walk_edges_sequential(graph: VoltageGraph, u: np.ndarray, start: int) -> np.ndarray:
    edges = np.empty(len(u), dtype=np.int64)
    v = start
    out_edges, out_cum = graph.out_edges, graph.out_cumprob
    terminus = graph.terminus
    for k, uk in enumerate(u):
        cum = out_cum[v]
        i = min(int(np.searchsorted(cum, uk, side="right")), len(cum) - 1)
        e = out_edges[v][i]
        edges[k] = e
        v = int(terminus[e])
    return edges


# ---------------------------------------------------------------------------
# Single paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WalkPath:
    graph: VoltageGraph
    realization: Realization
    rho: np.ndarray
    vertices: np.ndarray    # (n+1,)
    edges: np.ndarray       # (n,)
    increments: np.ndarray  # (n, d1) centered first-layer increments
    deck: np.ndarray        # (dim,) final deck element, log coordinates
    xi: np.ndarray          # (dim,) realized endpoint deck * position(v_n)

    @property
    def n(self) -> int:
        return len(self.edges)

    @cached_property
    def prefix(self) -> np.ndarray:
        """Centered partial sums with a leading zero row: prefix[k] = W-bar_1 + ... + W-bar_k."""
        d1 = self.graph.algebra.layer_dims[0]
        return np.vstack([np.zeros((1, d1)), np.cumsum(self.increments, axis=0)])

    @property
    def xi_bar(self) -> np.ndarray:
        return self.prefix[-1]


def sample_path(
    graph: VoltageGraph,
    phi: Realization,
    rho: np.ndarray,
    n: int,
    seed: int,
    start: int = 0,
) -> WalkPath:
    """Sample an n-step trajectory from the given start vertex (stream (seed, 0))."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    u = sample_stream(seed, 0).random(n)
    if graph.num_vertices == 1:
        edges = _single_vertex_edges(graph, u)
    else:
        edges = _walk_edges_sequential(graph, u, start)
    return _assemble_path(graph, phi, rho, edges, start)


def _assemble_path(graph, phi, rho, edges, start) -> WalkPath:
    alg = graph.algebra
    vertices = np.concatenate([[start], graph.terminus[edges]])
    wbar = _centered_increments(graph, phi, rho)
    deck = _fold_voltages(graph, graph.voltages[edges])
    xi = bch_product(alg, deck, phi.positions[vertices[-1]])
    return WalkPath(
        graph=graph,
        realization=phi,
        rho=np.asarray(rho, dtype=float),
        vertices=vertices,
        edges=edges,
        increments=wbar[edges],
        deck=deck,
        xi=xi,
    )


# ---------------------------------------------------------------------------
# Interpolated path process
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterpolatedPath:
    """Piecewise-linear interpolation of the centered partial sums, scaled by a_n."""

    n: int
    a_n: float
    prefix: np.ndarray      # (n+1, d1)
    increments: np.ndarray  # (n, d1)

    def values(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if np.any((ts < 0) | (ts > 1)):
            raise ValueError("query times must lie in [0, 1]")
        s = ts * self.n
        near = np.rint(s)
        snap = np.abs(s - near) <= _SNAP_TOL
        s = np.where(snap, near, s)
        k = np.floor(s).astype(np.int64)
        frac = s - k
        inc_idx = np.minimum(k, self.n - 1) if self.n > 0 else np.zeros_like(k)
        inc = self.increments[inc_idx] if self.n > 0 else np.zeros((len(k), self.prefix.shape[1]))
        return (self.prefix[k] + frac[:, None] * inc) / self.a_n

    def __call__(self, t: float) -> np.ndarray:
        return self.values([t])[0]


def interpolate(path: WalkPath, scaling: ScalingSequence) -> InterpolatedPath:
    if path.n < scaling.domain_min:
        raise ScalingDomain(f"n = {path.n} below the '{scaling.kind}' scaling domain")
    return InterpolatedPath(
        n=path.n, a_n=float(scaling(path.n)), prefix=path.prefix, increments=path.increments
    )


def _scaled_point(graph: VoltageGraph, xi: np.ndarray, xi_bar: np.ndarray, n: int, rho, a_n: float) -> np.ndarray:
    """tau_{1/a_n}(phi(xi exp(-n rho))), first layer pinned to the increment sum."""
    alg = graph.algebra
    centered = bch_product(alg, xi, alg.embed_first_layer(-float(n) * np.asarray(rho, dtype=float)))
    pt = dilate_group(alg, 1.0 / a_n, to_limit_group(alg, centered))
    d1 = alg.layer_dims[0]
    pinned = xi_bar / a_n
    # the two routes agree mathematically; pinning makes the identity with
    # the interpolated path's endpoint exact in floating point
    assert np.allclose(pt[:d1], pinned, rtol=1e-6, atol=1e-6)
    pt[:d1] = pinned
    return pt


def scaled_endpoint(path: WalkPath, scaling: ScalingSequence) -> np.ndarray:
    """Group log-coordinates of the dilated, centered endpoint."""
    if path.n < scaling.domain_min:
        raise ScalingDomain(f"n = {path.n} below the '{scaling.kind}' scaling domain")
    a_n = float(scaling(path.n))
    return _scaled_point(path.graph, path.xi, path.xi_bar, path.n, path.rho, a_n)


# ---------------------------------------------------------------------------
# Batched Monte Carlo engines
# ---------------------------------------------------------------------------

def _shards(total: int, workers: int) -> list[range]:
    workers = max(1, min(workers, total)) if total else 1
    bounds = np.linspace(0, total, workers + 1).astype(int)
    return [range(bounds[i], bounds[i + 1]) for i in range(workers) if bounds[i] < bounds[i + 1]]


def _run_sharded(total: int, workers: int, job: Callable) -> None:
    shards = _shards(total, workers)
    if len(shards) <= 1:
        for shard in shards:
            job(shard)
        return
    with ThreadPoolExecutor(max_workers=len(shards)) as pool:
        futures = [pool.submit(job, shard) for shard in shards]
        for f in futures:
            f.result()


def _edge_batches(graph: VoltageGraph, n: int, sample_ids, seed: int, start: int, chunk: int,
                  index_offset: int = 0):
    """Yield (ids, edges (B, n)) blocks with per-sample streams."""
    multi = graph.num_vertices > 1
    ids = list(sample_ids)
    for lo in range(0, len(ids), chunk):
        block = ids[lo : lo + chunk]
        u = np.empty((len(block), n))
        for row, s in enumerate(block):
            u[row] = sample_stream(seed, s + index_offset).random(n)
        if not multi:
            edges = _single_vertex_edges(graph, u.ravel()).reshape(len(block), n)
        else:
            edges = _multi_vertex_edges(graph, u, start)
        yield block, edges


def _multi_vertex_edges(graph: VoltageGraph, u: np.ndarray, start: int) -> np.ndarray:
    b, n = u.shape
    max_deg = max(len(ids) for ids in graph.out_edges)
    cum_pad = np.full((graph.num_vertices, max_deg), np.inf)
    edge_pad = np.zeros((graph.num_vertices, max_deg), dtype=np.int64)
    for v in range(graph.num_vertices):
        deg = len(graph.out_edges[v])
        cum_pad[v, :deg] = graph.out_cumprob[v]
        edge_pad[v, deg:] = graph.out_edges[v][-1]
        edge_pad[v, :deg] = graph.out_edges[v]
    edges = np.empty((b, n), dtype=np.int64)
    v = np.full(b, start, dtype=np.int64)
    for k in range(n):
        local = (u[:, k, None] >= cum_pad[v]).sum(axis=1)
        local = np.minimum(local, max_deg - 1)
        e = edge_pad[v, local]
        edges[:, k] = e
        v = graph.terminus[e]
    return edges


def batch_centered_sums(
    graph: VoltageGraph,
    phi: Realization,
    rho: np.ndarray,
    n: int,
    samples: int,
    seed: int,
    workers: int = 1,
    start: int = 0,
    chunk: int = 256,
    index_offset: int = 0,
) -> np.ndarray:
    """Centered first-layer sums for ``samples`` independent n-step walks: (S, d1)."""
    d1 = graph.algebra.layer_dims[0]
    if n == 0:
        return np.zeros((samples, d1))
    wbar = _centered_increments(graph, phi, rho)
    out = np.empty((samples, d1))

    def job(shard):
        for block, edges in _edge_batches(graph, n, shard, seed, start, chunk, index_offset):
            out[block] = np.cumsum(wbar[edges], axis=1)[:, -1, :]

    _run_sharded(samples, workers, job)
    return out


def batch_endpoints(
    graph: VoltageGraph,
    phi: Realization,
    rho: np.ndarray,
    scaling: ScalingSequence,
    n: int,
    samples: int,
    seed: int,
    workers: int = 1,
    start: int = 0,
    chunk: int = 256,
    index_offset: int = 0,
):
    """Scaled group endpoints plus raw centered sums: ((S, dim), (S, d1))."""
    alg = graph.algebra
    if n < scaling.domain_min:
        raise ScalingDomain(f"n = {n} below the '{scaling.kind}' scaling domain")
    a_n = float(scaling(n))
    d1 = alg.layer_dims[0]
    wbar = _centered_increments(graph, phi, rho)
    points = np.empty((samples, alg.dim))
    sums = np.empty((samples, d1))

    def job(shard):
        for block, edges in _edge_batches(graph, n, shard, seed, start, chunk, index_offset):
            gam = graph.voltages[edges]
            if alg.step == 1:
                decks = gam.sum(axis=1)
            elif alg.step == 2:
                decks = _fold_step2_batch(graph, gam)
            else:
                decks = np.stack([_fold_voltages(graph, g) for g in gam])
            bar = np.cumsum(wbar[edges], axis=1)[:, -1, :]
            end_vertex = graph.terminus[edges[:, -1]] if n > 0 else np.full(len(block), start)
            for row, s in enumerate(block):
                xi = bch_product(alg, decks[row], phi.positions[end_vertex[row]])
                points[s] = _scaled_point(graph, xi, bar[row], n, rho, a_n)
                sums[s] = bar[row]

    _run_sharded(samples, workers, job)
    return points, sums


def endpoints_csv_rows(points: np.ndarray, sums: np.ndarray, n: int):
    """Rows for the endpoint-batch CSV: sample_id, n, endpoint coords, raw centered sum."""
    header = (
        ["sample_id", "n"]
        + [f"endpoint_{i}" for i in range(points.shape[1])]
        + [f"xi_bar_{i}" for i in range(sums.shape[1])]
    )
    yield header
    for s in range(len(points)):
        yield [s, n] + [float(x) for x in points[s]] + [float(x) for x in sums[s]]


# ---------------------------------------------------------------------------
# Long-trajectory scan (for iterated-logarithm experiments)
# ---------------------------------------------------------------------------

def trajectory_scan(
    graph: VoltageGraph,
    phi: Realization,
    rho: np.ndarray,
    checkpoints,
    seed: int,
    stream_index: int,
    sup_scaling: ScalingSequence | None = None,
    sup_range: tuple[int, int] | None = None,
    start: int = 0,
    chunk: int = 1 << 20,
):
    """One long trajectory; centered group points at checkpoints, optional sup statistic.

    Returns ``(points, sup)`` where ``points[c]`` holds the log coordinates of
    the centered endpoint at step ``checkpoints[c]`` (not yet dilated) and
    ``sup`` is ``max over n in sup_range of ||centered first-layer sum at n|| /
    sup_scaling(n)``, evaluated at every step in range (None if not requested).
    """
    alg = graph.algebra
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    if len(checkpoints) == 0 or np.any(np.diff(checkpoints) <= 0) or checkpoints[0] <= 0:
        raise ValueError("checkpoints must be strictly increasing positive integers")
    d1 = alg.layer_dims[0]
    n_max = int(checkpoints[-1])
    wbar = _centered_increments(graph, phi, rho)
    rho = np.asarray(rho, dtype=float)

    fast = graph.num_vertices == 1 and alg.step <= 2
    stream = sample_stream(seed, stream_index)
    points = np.empty((len(checkpoints), alg.dim))
    sup = -np.inf
    lo, hi = sup_range if sup_range is not None else (0, -1)

    acc_deck = alg.zero()
    acc_bar = np.zeros(d1)
    pos = 0
    cp_next = 0
    table = alg.brackets[:d1, :d1, :]
    vertex = start

    while pos < n_max:
        m = int(min(chunk, n_max - pos))
        u = stream.random(m)
        if fast:
            edges = _single_vertex_edges(graph, u)
        else:
            edges = _walk_edges_sequential(graph, u, vertex)
            vertex = int(graph.terminus[edges[-1]])
        gam = graph.voltages[edges]
        first = gam[:, :d1]
        deck_first = acc_deck[:d1] + np.cumsum(first, axis=0)
        if alg.step == 1:
            deck_cum = deck_first
        elif alg.step == 2:
            before = np.vstack([acc_deck[None, :d1], deck_first[:-1]])
            rest_inc = gam[:, d1:] + 0.5 * np.einsum("ka,kb,abm->km", before, first, table)[:, d1:]
            deck_cum = np.hstack([deck_first, acc_deck[None, d1:] + np.cumsum(rest_inc, axis=0)])
        else:
            deck_cum = np.empty((m, alg.dim))
            acc = acc_deck
            for k in range(m):
                acc = bch_product(alg, acc, gam[k])
                deck_cum[k] = acc
        bar_cum = acc_bar + np.cumsum(wbar[edges], axis=0)

        if sup_range is not None:
            ns = np.arange(pos + 1, pos + m + 1)
            mask = (ns >= lo) & (ns <= hi)
            if mask.any():
                stats = np.linalg.norm(bar_cum[mask], axis=1) / sup_scaling(ns[mask])
                sup = max(sup, float(stats.max()))

        while cp_next < len(checkpoints) and checkpoints[cp_next] <= pos + m:
            j = int(checkpoints[cp_next] - pos - 1)
            cp_n = int(checkpoints[cp_next])
            end_v = int(graph.terminus[edges[j]])
            xi = bch_product(alg, deck_cum[j], phi.positions[end_v])
            centered = bch_product(alg, xi, alg.embed_first_layer(-float(cp_n) * rho))
            centered[:d1] = bar_cum[j]
            points[cp_next] = centered
            cp_next += 1

        acc_deck = deck_cum[-1].copy()
        acc_bar = bar_cum[-1].copy()
        pos += m

    return points, (None if sup_range is None else sup)
