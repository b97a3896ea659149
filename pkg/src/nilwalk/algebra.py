"""Nilpotent Lie group arithmetic in exponential coordinates of the first kind.

A group element is identified with the coordinate vector of its logarithm,
ordered layer by layer, so ``exp`` and ``log`` are identities on coordinates
and the group law is the Baker-Campbell-Hausdorff series, which terminates
for nilpotent algebras.  Orders up to 4 of the series are implemented, which
is exact for algebras of step <= 4.

The same coordinate space carries the limit (graded) structure: the limit
bracket keeps only the layer-(a+b) component of a layer-a x layer-b bracket,
and the limit product is the BCH series evaluated with that graded table.
Dilations scale layer k by eps**k and are automorphisms of the limit group.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidAlgebra,
    NegativeEps,
    OptimizerFailure,
    UnsupportedStep,
)

Vector = np.ndarray

_TABLE_TOL = 1e-12


class StratifiedAlgebra:
    """Nilpotent Lie algebra with a basis adapted to the lower central series.

    Parameters
    ----------
    layer_dims:
        Layer dimensions ``(d_1, ..., d_r)``; ``r`` is the step number.
    brackets:
        Structure constants as ``(i, j, k, value)`` entries over the full
        basis, 0-indexed: ``[X_i, X_j] = sum_k c[i][j][k] X_k``.  Both
        orientations of each bracket must be listed (antisymmetry is
        validated, not completed).  Entries must satisfy the Jacobi identity
        and the filtration: a layer-a x layer-b bracket may only have support
        in layers >= a + b.
    """

    def __init__(self, layer_dims, brackets=()):
        self.layer_dims = tuple(int(d) for d in layer_dims)
        if not self.layer_dims or min(self.layer_dims) <= 0:
            raise InvalidAlgebra("layer dimensions must be positive integers")
        self.step = len(self.layer_dims)
        self.dim = int(sum(self.layer_dims))
        self.layer_of = np.repeat(np.arange(1, self.step + 1), self.layer_dims)
        offsets = np.concatenate([[0], np.cumsum(self.layer_dims)]).astype(int)
        self.layer_slices = tuple(
            slice(int(offsets[k]), int(offsets[k + 1])) for k in range(self.step)
        )

        table = np.zeros((self.dim, self.dim, self.dim))
        for entry in brackets:
            if len(entry) != 4:
                raise InvalidAlgebra(f"bracket entry {entry!r} is not an (i, j, k, value) quadruple")
            i, j, k, value = entry
            i, j, k = int(i), int(j), int(k)
            if not (0 <= i < self.dim and 0 <= j < self.dim and 0 <= k < self.dim):
                raise InvalidAlgebra(f"bracket entry ({i}, {j}, {k}) is out of range for dimension {self.dim}")
            table[i, j, k] += float(value)
        self._check_table(table)
        self.brackets = table

        graded = table.copy()
        weight = self.layer_of[:, None, None] + self.layer_of[None, :, None]
        graded[weight != self.layer_of[None, None, :]] = 0.0
        self.graded_brackets = graded
        self._check_jacobi(graded, "graded bracket table")
        for arr in (self.brackets, self.graded_brackets, self.layer_of):
            arr.setflags(write=False)

    # -- validation ----------------------------------------------------------

    def _check_table(self, table: np.ndarray) -> None:
        asym = table + table.transpose(1, 0, 2)
        if np.abs(asym).max() > _TABLE_TOL:
            i, j, k = np.unravel_index(np.abs(asym).argmax(), asym.shape)
            raise InvalidAlgebra(f"antisymmetry violated at c[{i}][{j}][{k}]")
        nz = np.argwhere(np.abs(table) > _TABLE_TOL)
        for i, j, k in nz:
            if self.layer_of[k] < self.layer_of[i] + self.layer_of[j]:
                raise InvalidAlgebra(
                    f"filtration violated: [layer {self.layer_of[i]}, layer {self.layer_of[j]}] "
                    f"hits layer {self.layer_of[k]} at c[{i}][{j}][{k}]"
                )
        # Nilpotency follows: any (r+1)-fold nested bracket has weight > r.
        self._check_jacobi(table, "bracket table")

    @staticmethod
    def _check_jacobi(table: np.ndarray, label: str) -> None:
        jac = (
            np.einsum("jkm,iml->ijkl", table, table)
            + np.einsum("kim,jml->ijkl", table, table)
            + np.einsum("ijm,kml->ijkl", table, table)
        )
        scale = max(1.0, float(np.abs(table).max()) ** 2)
        if np.abs(jac).max() > _TABLE_TOL * scale:
            i, j, k, _ = np.unravel_index(np.abs(jac).argmax(), jac.shape)
            raise InvalidAlgebra(f"{label} fails the Jacobi identity on basis triple ({i}, {j}, {k})")

    # -- helpers ---------------------------------------------------------------

    def zero(self) -> Vector:
        return np.zeros(self.dim)

    def check_vector(self, z) -> Vector:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise DimensionMismatch(f"expected vector of length {self.dim}, got shape {z.shape}")
        return z

    def layer(self, z: Vector, k: int) -> Vector:
        """Layer-k slice of a coordinate vector (1-based layer index)."""
        return np.asarray(z)[self.layer_slices[k - 1]]

    def first_layer(self, z: Vector) -> Vector:
        return np.asarray(z)[: self.layer_dims[0]]

    def embed_first_layer(self, v) -> Vector:
        v = np.asarray(v, dtype=float)
        d1 = self.layer_dims[0]
        if v.shape != (d1,):
            raise DimensionMismatch(f"expected first-layer vector of length {d1}, got shape {v.shape}")
        out = self.zero()
        out[:d1] = v
        return out

    def bracket(self, z1, z2) -> Vector:
        """[z1, z2] through the structure constants."""
        return np.einsum("i,j,ijk->k", self.check_vector(z1), self.check_vector(z2), self.brackets)

    def __repr__(self) -> str:
        return f"StratifiedAlgebra(layer_dims={self.layer_dims})"


def abelian_algebra(d: int) -> StratifiedAlgebra:
    """R^d with zero bracket (step 1)."""
    return StratifiedAlgebra((d,))


def heisenberg_algebra() -> StratifiedAlgebra:
    """The 3-dimensional algebra with layers (2, 1) and [X, Y] = Z."""
    return StratifiedAlgebra((2, 1), [(0, 1, 2, 1.0), (1, 0, 2, -1.0)])


# -- group operations ----------------------------------------------------------


def _bch(table: np.ndarray, step: int, a: Vector, b: Vector) -> Vector:
    """BCH series through order 4, exact for step <= 4 (caller checks step)."""
    c = a + b
    if step == 1:
        return c

    def br(x, y):
        return np.einsum("i,j,ijk->k", x, y, table)

    ab = br(a, b)
    c = c + 0.5 * ab
    if step >= 3:
        aab = br(a, ab)
        bab = br(b, ab)
        c = c + (aab - bab) / 12.0
        if step >= 4:
            c = c - br(b, aab) / 24.0
    return c


def _require_supported_step(alg: StratifiedAlgebra) -> None:
    if alg.step > 4:
        raise UnsupportedStep(f"step {alg.step} exceeds the supported BCH truncation order 4")


def bch_product(alg: StratifiedAlgebra, a, b) -> Vector:
    """Group product in log coordinates: log(exp(a) exp(b))."""
    _require_supported_step(alg)
    return _bch(alg.brackets, alg.step, alg.check_vector(a), alg.check_vector(b))


def group_inverse(alg: StratifiedAlgebra, a) -> Vector:
    """exp(a)^-1 = exp(-a), exact in exponential coordinates."""
    return -alg.check_vector(a)


def dilate_vector(alg: StratifiedAlgebra, eps: float, z) -> Vector:
    """Scale layer k by eps**k (the algebra dilation)."""
    if eps < 0:
        raise NegativeEps(f"dilation parameter must be nonnegative, got {eps}")
    return alg.check_vector(z) * float(eps) ** alg.layer_of


def dilate_group(alg: StratifiedAlgebra, eps: float, g) -> Vector:
    """Group dilation exp . (layer scaling) . log; same array op as dilate_vector here."""
    return dilate_vector(alg, eps, g)


def limit_bracket(alg: StratifiedAlgebra, z1, z2) -> Vector:
    """Graded part of the bracket: the scaling limit of rescaled brackets."""
    return np.einsum("i,j,ijk->k", alg.check_vector(z1), alg.check_vector(z2), alg.graded_brackets)


def limit_product(alg: StratifiedAlgebra, g, h) -> Vector:
    """Product of the limit group: BCH evaluated with the graded table."""
    _require_supported_step(alg)
    return _bch(alg.graded_brackets, alg.step, alg.check_vector(g), alg.check_vector(h))


def to_limit_group(alg: StratifiedAlgebra, g) -> Vector:
    """Canonical chart identification with the limit group.

    In exponential coordinates the identification is the identity on
    coordinates; it is provided as a named operation (its own inverse) so
    experiment code can mirror the scaled-point constructions literally.
    """
    return alg.check_vector(g).copy()


def algebra_norm(alg: StratifiedAlgebra, z) -> float:
    """Sum over layers of the per-layer Euclidean norms."""
    z = alg.check_vector(z)
    return float(sum(np.linalg.norm(z[sl]) for sl in alg.layer_slices))


# -- Finsler distance (optimization upper bound) --------------------------------


def _smooth_norm_terms(alg: StratifiedAlgebra, seg: np.ndarray, mu: float) -> float:
    total = 0.0
    for sl in alg.layer_slices:
        block = seg[:, sl]
        total += np.sum(np.sqrt(np.einsum("ki,ki->k", block, block) + mu * mu))
    return float(total)


def finsler_distance(
    alg: StratifiedAlgebra,
    x,
    y,
    segments: int,
    restarts: int = 8,
    seed: int = 0,
    initial_segments=None,
    maxiter: int = 200,
) -> float:
    """Upper bound on the left-invariant Finsler distance between x and y.

    Minimizes total length over paths that are products of exponentials of
    constant algebra velocities, one per segment.  The last segment is solved
    in closed form to absorb the endpoint defect, so every candidate path is
    exactly feasible and the reported length is always a valid upper bound.
    Warm starts (``initial_segments``: arrays of shape (segments, dim)) make
    the bound monotone under segment refinement.
    """
    from scipy.optimize import minimize

    if segments < 1:
        raise ValueError("segments must be >= 1")
    x = alg.check_vector(x)
    y = alg.check_vector(y)
    target = bch_product(alg, group_inverse(alg, x), y)
    if not np.any(target):
        return 0.0

    K, dim = segments, alg.dim

    def assemble(free_flat: np.ndarray) -> np.ndarray:
        free = free_flat.reshape(K - 1, dim) if K > 1 else np.zeros((0, dim))
        acc = alg.zero()
        for row in free:
            acc = bch_product(alg, acc, row)
        last = bch_product(alg, -acc, target)
        return np.vstack([free, last[None, :]])

    mu = 1e-7 * max(1.0, algebra_norm(alg, target))

    def objective(free_flat: np.ndarray) -> float:
        val = _smooth_norm_terms(alg, assemble(free_flat), mu)
        if not np.isfinite(val):
            raise OptimizerFailure("non-finite Finsler length objective")
        return val

    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    scale = algebra_norm(alg, target) / K + 1e-3
    starts = [np.zeros((K - 1) * dim)]
    for _ in range(max(0, restarts - 1)):
        starts.append(rng.normal(0.0, scale, size=(K - 1) * dim))
    if initial_segments is not None:
        for seg in initial_segments:
            seg = np.asarray(seg, dtype=float)
            if seg.shape != (K, dim):
                raise DimensionMismatch(f"warm start must have shape {(K, dim)}, got {seg.shape}")
            starts.append(seg[: K - 1].ravel())

    best = np.inf
    for x0 in starts:
        if K == 1:
            cand = x0
        else:
            res = minimize(objective, x0, method="L-BFGS-B", options={"maxiter": maxiter})
            cand = res.x
        length = float(sum(algebra_norm(alg, row) for row in assemble(cand)))
        if not np.isfinite(length):
            raise OptimizerFailure("non-finite Finsler length")
        best = min(best, length)
    return best
