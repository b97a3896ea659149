"""Exact n-step distributions of single-vertex abelian quotient walks.

Moderate-deviation tails (down to 1e-100 and beyond) cannot be sampled, so
experiments verify them against exact dynamic-programming convolution of the
integer step distribution.  Dimension 1 convolves the full support directly.
Dimension 2 materializes the full grid only at small n (the workload grows
like n * (2n+1)^2); for the uniform four-step walk the 45-degree rotation
X + Y, X - Y splits the walk into two independent one-dimensional +-1 walks,
which makes the tail exact at large n as well.  The factorized route is
validated against the naive grid at small n in the tests.
"""

from __future__ import annotations

import numpy as np

from .errors import OracleUnavailable
from .graph import VoltageGraph

_GRID_BUDGET = 4e8  # n * cells * kernel size for the naive 2-d DP


class ExactLatticeDistribution:
    """Exact distribution of a sum of i.i.d. integer lattice steps."""

    def __init__(self, steps, probs):
        steps = np.atleast_2d(np.asarray(steps, dtype=np.int64))
        probs = np.asarray(probs, dtype=float)
        if steps.ndim != 2 or steps.shape[0] != len(probs):
            raise OracleUnavailable("steps and probabilities have inconsistent shapes")
        if steps.shape[1] not in (1, 2):
            raise OracleUnavailable("exact enumeration supports lattice dimension 1 or 2 only")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise OracleUnavailable("step probabilities must be positive and sum to 1")
        self.steps = steps
        self.probs = probs
        self.dim = steps.shape[1]

    @classmethod
    def from_graph(cls, graph: VoltageGraph) -> "ExactLatticeDistribution":
        if graph.num_vertices != 1:
            raise OracleUnavailable("exact oracle requires a single-vertex quotient")
        if graph.algebra.step != 1:
            raise OracleUnavailable("exact oracle requires an abelian deck group")
        volts = graph.voltages
        rounded = np.rint(volts)
        if np.abs(volts - rounded).max() > 1e-9:
            raise OracleUnavailable("exact oracle requires integer voltages")
        return cls(rounded.astype(np.int64), graph.prob)

    @property
    def mean_step(self) -> np.ndarray:
        return self.probs @ self.steps

    # -- dimension 1 ---------------------------------------------------------

    def _kernel_1d(self):
        lo = int(self.steps[:, 0].min())
        hi = int(self.steps[:, 0].max())
        kernel = np.zeros(hi - lo + 1)
        np.add.at(kernel, self.steps[:, 0] - lo, self.probs)
        return lo, kernel

    def _distribution_1d(self, n: int):
        lo, kernel = self._kernel_1d()
        dist = np.array([1.0])
        offset = 0
        for _ in range(n):
            dist = np.convolve(dist, kernel)
            offset += lo
        return offset, dist

    # -- dimension 2 ---------------------------------------------------------

    def _kernel_2d(self):
        lo = self.steps.min(axis=0)
        hi = self.steps.max(axis=0)
        kernel = np.zeros(hi - lo + 1)
        np.add.at(kernel, (self.steps[:, 0] - lo[0], self.steps[:, 1] - lo[1]), self.probs)
        return lo, kernel

    def _distribution_2d(self, n: int):
        lo, kernel = self._kernel_2d()
        hi = self.steps.max(axis=0)
        span = (hi - lo) * n + 1
        cells = float(span[0]) * float(span[1])
        if n * cells * len(self.probs) > _GRID_BUDGET:
            raise OracleUnavailable(
                f"naive 2-d DP workload n * cells = {n * cells:.3g} exceeds the budget; "
                "only the uniform four-step walk factorizes at this size"
            )
        dist = np.zeros(span)
        start = -lo * n  # index of the origin
        dist[start[0], start[1]] = 1.0
        for _ in range(n):
            nxt = np.zeros_like(dist)
            for (sx, sy), p in zip(self.steps, self.probs):
                src = dist[
                    max(0, -sx) : span[0] - max(0, sx),
                    max(0, -sy) : span[1] - max(0, sy),
                ]
                nxt[
                    max(0, sx) : span[0] - max(0, -sx),
                    max(0, sy) : span[1] - max(0, -sy),
                ] += p * src
            dist = nxt
        return -start, dist

    def distribution(self, n: int):
        """(origin offset, probability array) over reachable sites after n steps."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        return self._distribution_1d(n) if self.dim == 1 else self._distribution_2d(n)

    # -- tails ----------------------------------------------------------------

    def _is_uniform_axes(self) -> bool:
        if self.dim != 2 or len(self.probs) != 4:
            return False
        want = {(1, 0), (-1, 0), (0, 1), (0, -1)}
        have = {tuple(s) for s in self.steps}
        return have == want and np.abs(self.probs - 0.25).max() <= 1e-12

    def _tail_uniform_axes(self, n: int, radius: float) -> float:
        """P(||(X, Y)||_2 >= radius) via two independent +-1 walks U, V.

        With U = X + Y and V = X - Y the four uniform axis steps become
        independent uniform +-1 steps in U and V, and X^2 + Y^2 =
        (U^2 + V^2) / 2, so the event is U^2 + V^2 >= 2 radius^2.
        """
        kernel = np.array([0.5, 0.0, 0.5])
        pmf = np.array([1.0])
        for _ in range(n):
            pmf = np.convolve(pmf, kernel)
        sites = np.arange(-n, n + 1)
        suffix = np.concatenate([np.cumsum(pmf[::-1])[::-1], [0.0]])  # P(V >= sites[i])
        prefix = np.concatenate([[0.0], np.cumsum(pmf)])              # P(V <= sites[i-1])

        def survival(t: np.ndarray) -> np.ndarray:
            # P(|V| >= t) with a tolerance guard; integer sites are never
            # within 1e-9 of a misrounded threshold at these magnitudes
            hi_idx = np.searchsorted(sites, t - 1e-9, side="left")
            lo_idx = np.searchsorted(sites, -t + 1e-9, side="right")
            out = suffix[hi_idx] + prefix[lo_idx]
            return np.where(t <= 1e-9, 1.0, out)

        thresholds = np.sqrt(np.clip(2.0 * radius * radius - sites.astype(float) ** 2, 0.0, None))
        tail = float(np.dot(pmf, survival(thresholds)))
        return min(tail, 1.0)

    def tail_probability(self, n: int, radius: float) -> float:
        """P(||S_n - n * mean||_2 >= radius), exact to floating-point accuracy."""
        if radius <= 0:
            return 1.0
        center = n * self.mean_step
        if self.dim == 1:
            offset, dist = self._distribution_1d(n)
            sites = offset + np.arange(len(dist)) - center[0]
            return float(dist[np.abs(sites) >= radius - 1e-9].sum())
        if self._is_uniform_axes():
            return self._tail_uniform_axes(n, radius)
        offset, dist = self._distribution_2d(n)
        xs = offset[0] + np.arange(dist.shape[0]) - center[0]
        ys = offset[1] + np.arange(dist.shape[1]) - center[1]
        rr = xs[:, None] ** 2 + ys[None, :] ** 2
        return float(dist[rr >= (radius - 1e-9) ** 2].sum())


def mdp_rate(n: int, a_n: float, tail: float) -> float:
    """Normalized log-probability (n / a_n^2) log(tail); -inf when the tail is 0."""
    if tail <= 0.0:
        return -np.inf
    return float(n / (a_n * a_n) * np.log(tail))


def gaussian_tail_exponent(sigma: np.ndarray, delta: float) -> float:
    """-inf over ||v|| >= delta of half the inverse quadratic form.

    The infimum is attained along the top eigenvector of sigma, giving
    -delta^2 / (2 lambda_max(sigma)).
    """
    lam_max = float(np.linalg.eigvalsh(np.atleast_2d(sigma)).max())
    return -delta * delta / (2.0 * lam_max)
