"""Gadget matrices that turn {-1,1} integrality into k-sparse, k-partite structure.

G_sparse is block diagonal with k copies of H, whose 2^(d/k) columns are all
of {-1,1}^(d/k). Column j of H has +1 in row l iff bit (h-1-l) of j is 0, so
column 0 is the all-ones vector. G_partite is block diagonal with k all-ones
rows. S_{n,k} is the set of 0/1 vectors with exactly one 1 per block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadShape, NotInSnk, NotSignVector

MAX_DENSE_N = 1 << 16
DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class GadgetShape:
    d: int
    k: int

    def __post_init__(self):
        if self.d < 1 or self.k < 1:
            raise BadShape(f"d and k must be positive, got d={self.d}, k={self.k}")
        if self.d % self.k:
            raise BadShape(f"k={self.k} does not divide d={self.d}")

    @property
    def block_height(self) -> int:
        return self.d // self.k

    @property
    def block_width(self) -> int:
        return 1 << self.block_height

    @property
    def n(self) -> int:
        return self.k * self.block_width

    def as_dict(self) -> dict:
        return {"d": self.d, "k": self.k, "n": self.n}


@dataclass(frozen=True)
class PartiteSparseVector:
    shape: GadgetShape
    support_indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.support_indices)
        if len(idx) != self.shape.k or any(not 0 <= i < self.shape.block_width for i in idx):
            raise NotInSnk(f"need one index in [0, {self.shape.block_width}) per part, got {idx}")
        object.__setattr__(self, "support_indices", idx)

    def positions(self) -> np.ndarray:
        """Absolute coordinates of the ones in the dense vector."""
        w = self.shape.block_width
        return np.arange(self.shape.k) * w + np.array(self.support_indices)

    def dense(self) -> np.ndarray:
        v = np.zeros(self.shape.n)
        v[self.positions()] = 1.0
        return v

    @classmethod
    def from_dense(cls, v: np.ndarray, shape: GadgetShape, tol: float = DEFAULT_TOL) -> "PartiteSparseVector":
        v = np.asarray(v, dtype=float)
        if not is_in_snk(v, shape, tol):
            raise NotInSnk("vector is not a k-sparse k-partite binary vector")
        blocks = v.reshape(shape.k, shape.block_width)
        return cls(shape, tuple(int(np.argmax(b)) for b in blocks))


def block_h(block_height: int) -> np.ndarray:
    """H in {-1,1}^{h x 2^h}; column j is the sign pattern of j's bits, MSB on top."""
    j = np.arange(1 << block_height)
    shifts = block_height - 1 - np.arange(block_height)
    bits = (j[None, :] >> shifts[:, None]) & 1
    return 1.0 - 2.0 * bits


def build_g_sparse(shape: GadgetShape) -> np.ndarray:
    if shape.n > MAX_DENSE_N:
        raise BadShape(f"refusing to materialize G_sparse with n={shape.n}; use g_sparse_matvec")
    H = block_h(shape.block_height)
    G = np.zeros((shape.d, shape.n))
    h, w = shape.block_height, shape.block_width
    for b in range(shape.k):
        G[b * h:(b + 1) * h, b * w:(b + 1) * w] = H
    return G


def build_g_partite(shape: GadgetShape) -> np.ndarray:
    return partite_matrix(shape.n, shape.k)


def partite_matrix(n: int, k: int) -> np.ndarray:
    if n % k:
        raise BadShape(f"k={k} does not divide n={n}")
    if n > MAX_DENSE_N:
        raise BadShape(f"refusing to materialize G_partite with n={n}; use g_partite_matvec")
    G = np.zeros((k, n))
    w = n // k
    for b in range(k):
        G[b, b * w:(b + 1) * w] = 1.0
    return G


def g_sparse_matvec(shape: GadgetShape, theta: np.ndarray) -> np.ndarray:
    """G_sparse @ theta from structure; theta may be (n,) or (n, c)."""
    theta = np.asarray(theta, dtype=float)
    H = block_h(shape.block_height)
    blocks = theta.reshape((shape.k, shape.block_width) + theta.shape[1:])
    out = np.einsum("hw,kw...->kh...", H, blocks)
    return out.reshape((shape.d,) + theta.shape[1:])


def g_sparse_rmatvec(shape: GadgetShape, v: np.ndarray) -> np.ndarray:
    """G_sparse^T @ v from structure; v may be (d,) or (d, c)."""
    v = np.asarray(v, dtype=float)
    H = block_h(shape.block_height)
    blocks = v.reshape((shape.k, shape.block_height) + v.shape[1:])
    out = np.einsum("hw,kh...->kw...", H, blocks)
    return out.reshape((shape.n,) + v.shape[1:])


def g_partite_matvec(n: int, k: int, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return theta.reshape((k, n // k) + theta.shape[1:]).sum(axis=1)


def right_multiply_g_sparse(M: np.ndarray, shape: GadgetShape) -> np.ndarray:
    """M @ G_sparse for M with d columns, block by block without forming G_sparse."""
    M = np.asarray(M, dtype=float)
    H = block_h(shape.block_height)
    h = shape.block_height
    return np.hstack([M[:, b * h:(b + 1) * h] @ H for b in range(shape.k)])


def encode_sign_vector(z: np.ndarray, shape: GadgetShape) -> PartiteSparseVector:
    """The unique theta in S_{n,k} with G_sparse theta = z."""
    z = np.asarray(z)
    if z.shape != (shape.d,) or not np.all((z == 1) | (z == -1)):
        raise NotSignVector(f"expected a length-{shape.d} vector over {{-1, 1}}")
    h = shape.block_height
    bits = ((1 - z.astype(np.int64)) // 2).reshape(shape.k, h)
    weights = 1 << (h - 1 - np.arange(h))
    return PartiteSparseVector(shape, tuple(int(x) for x in bits @ weights))


def decode_partite(theta: PartiteSparseVector) -> np.ndarray:
    """G_sparse theta as an integer sign vector."""
    if not isinstance(theta, PartiteSparseVector):
        raise NotInSnk("decode_partite expects a PartiteSparseVector")
    shape = theta.shape
    h = shape.block_height
    idx = np.array(theta.support_indices, dtype=np.int64)
    shifts = h - 1 - np.arange(h)
    bits = (idx[:, None] >> shifts[None, :]) & 1
    return (1 - 2 * bits).ravel()


def is_in_snk(v: np.ndarray, shape, tol: float = DEFAULT_TOL) -> bool:
    """Membership in S_{n,k}: k-sparse, each block sums to 1, nonzeros equal 1.

    ``shape`` may be a GadgetShape or an ``(n, k)`` pair.
    """
    n, k = (shape.n, shape.k) if isinstance(shape, GadgetShape) else shape
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise BadShape(f"expected a length-{n} vector, got shape {v.shape}")
    nonzero = np.abs(v) > tol
    if np.count_nonzero(nonzero) > k:
        return False
    if np.any(np.abs(v[nonzero] - 1.0) > tol):
        return False
    sums = v.reshape(k, n // k).sum(axis=1)
    return bool(np.all(np.abs(sums - 1.0) <= tol))
