"""Lattice-side primitives: bases, binary BDD instances, exact small-dimension
minimum distances, Babai rounding, and the binary-expansion gadget that turns
bounded-coefficient BDD into {-1, 1}-coefficient BDD.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionTooLarge, NotSignVector, QNotPowerOfTwo, SingularBasis

NORM_TOL = 1e-9
LAMBDA1_BIN_MAX_DIM = 24
LAMBDA1_MAX_DIM = 8
_CHUNK = 1 << 16


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LatticeBasis:
    """Full-rank d x d basis B; the lattice is generated by the columns."""

    entries: np.ndarray
    sigma_min: float = field(init=False)
    sigma_max: float = field(init=False)

    def __post_init__(self):
        B = _frozen(np.atleast_2d(self.entries))
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError(f"basis must be square, got shape {B.shape}")
        if not np.all(np.isfinite(B)):
            raise ValueError("basis has non-finite entries")
        s = np.linalg.svd(B, compute_uv=False)
        smax, smin = float(s[0]), float(s[-1])
        if smax == 0.0 or smin <= 1e-10 * smax:
            raise SingularBasis(f"basis is rank deficient (sigma_min={smin:.3e}, sigma_max={smax:.3e})")
        object.__setattr__(self, "entries", B)
        object.__setattr__(self, "sigma_min", smin)
        object.__setattr__(self, "sigma_max", smax)

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @property
    def kappa(self) -> float:
        return self.sigma_max / self.sigma_min

    def __eq__(self, other):
        if not isinstance(other, LatticeBasis):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


@dataclass(frozen=True)
class BinaryBddInstance:
    """(B, t, alpha) with optional planted (z, e) such that t = B z + e."""

    basis: LatticeBasis
    target: np.ndarray
    alpha: float
    hidden_z: Optional[np.ndarray] = None
    hidden_e: Optional[np.ndarray] = None
    lambda1_bin: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.alpha < 0.5):
            raise ValueError(f"alpha must lie in (0, 1/2), got {self.alpha}")
        t = _frozen(np.ravel(self.target))
        if t.shape != (self.basis.d,):
            raise ValueError(f"target has length {t.size}, expected {self.basis.d}")
        object.__setattr__(self, "target", t)
        if (self.hidden_z is None) != (self.hidden_e is None):
            raise ValueError("hidden z and e must be given together")
        if self.hidden_z is not None:
            z = np.asarray(self.hidden_z)
            _check_sign_vector(z, self.basis.d)
            zf = np.array(z, dtype=np.int64)
            zf.setflags(write=False)
            object.__setattr__(self, "hidden_z", zf)
            object.__setattr__(self, "hidden_e", _frozen(np.ravel(self.hidden_e)))

    @property
    def d(self) -> int:
        return self.basis.d

    @property
    def has_hidden(self) -> bool:
        return self.hidden_z is not None

    def get_lambda1_bin(self) -> float:
        if self.lambda1_bin is None:
            object.__setattr__(self, "lambda1_bin", lambda1_bin_exact(self.basis))
        return self.lambda1_bin

    def __eq__(self, other):
        if not isinstance(other, BinaryBddInstance):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)

        return (
            self.basis == other.basis
            and np.array_equal(self.target, other.target)
            and self.alpha == other.alpha
            and same(self.hidden_z, other.hidden_z)
            and same(self.hidden_e, other.hidden_e)
        )

    __hash__ = None


@dataclass(frozen=True)
class BddSolveReport:
    solved: bool
    z_hat: Optional[np.ndarray]
    residual: float
    wall_time: float
    method: str
    slr_residual_mse: Optional[float] = None
    lambda1_hat: Optional[float] = None
    detail: str = ""
    prediction_error: Optional[float] = None


def _check_sign_vector(z: np.ndarray, d: Optional[int] = None) -> None:
    z = np.asarray(z)
    if d is not None and z.shape != (d,):
        raise NotSignVector(f"expected a length-{d} vector, got shape {z.shape}")
    if not np.all((z == 1) | (z == -1)):
        raise NotSignVector("entries must all be +1 or -1")


def sample_random_basis(d: int, kappa_target: float, rng: np.random.Generator) -> LatticeBasis:
    """B = U diag(s) V^T with Haar-distributed U, V and a geometric spectrum on [1, kappa]."""
    if d < 1:
        raise ValueError("d must be at least 1")
    if not kappa_target >= 1:
        raise ValueError(f"kappa_target must be >= 1, got {kappa_target}")
    if d == 1 and kappa_target != 1:
        raise ValueError("a 1-dimensional basis always has condition number 1")
    U = _haar_orthogonal(d, rng)
    V = _haar_orthogonal(d, rng)
    if d == 1:
        s = np.ones(1)
    else:
        s = np.exp(np.linspace(0.0, math.log(kappa_target), d))
    return LatticeBasis((U * s) @ V.T)


def _haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def _ternary_block(length: int) -> np.ndarray:
    """All vectors of {-1,0,1}^length as rows, lexicographic."""
    if length == 0:
        return np.zeros((1, 0))
    return np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=length)))


def _min_ternary_norm_vectorized(B: np.ndarray) -> float:
    # Leading-position decomposition: the first nonzero entry is +1 (antipodal dedup).
    d = B.shape[0]
    best = np.inf
    for p in range(d):
        tail = d - p - 1
        base = B[:, p]
        if tail == 0:
            best = min(best, float(base @ base))
            continue
        Bt = B[:, p + 1:]
        # split the tail so the enumerated block stays a manageable size
        head_len = max(0, tail - 10)
        head = _ternary_block(head_len)
        rest = _ternary_block(tail - head_len)
        rest_img = rest @ Bt[:, head_len:].T
        for h in head:
            shift = base + Bt[:, :head_len] @ h if head_len else base
            v = rest_img + shift
            best = min(best, float(np.min(np.einsum("ij,ij->i", v, v))))
    return math.sqrt(best)


def _min_ternary_norm_pruned(B: np.ndarray) -> float:
    """Depth-first search over {-1,0,1}^d with radius pruning on the QR factor."""
    d = B.shape[0]
    R = np.linalg.qr(B, mode="r")
    Rl = R.tolist()
    best = [min(float(B[:, j] @ B[:, j]) for j in range(d))]
    v = [0] * d

    def descend(i: int, acc: float, nonzero: bool):
        c = 0.0
        row = Rl[i]
        for j in range(i + 1, d):
            if v[j]:
                c += row[j] * v[j]
        rii = row[i]
        for vi in ((0, 1) if not nonzero else (0, 1, -1)):
            val = rii * vi + c
            nacc = acc + val * val
            if nacc >= best[0] - 1e-15:
                continue
            v[i] = vi
            nz = nonzero or vi != 0
            if i == 0:
                if nz:
                    best[0] = nacc
            else:
                descend(i - 1, nacc, nz)
            v[i] = 0

    descend(d - 1, 0.0, False)
    return math.sqrt(best[0])


def lambda1_bin_exact(basis: LatticeBasis, method: str = "auto") -> float:
    """Exact binary minimum distance 2 * min_{v in {-1,0,1}^d, v != 0} ||B v||.

    ``method="vectorized"`` enumerates all (3^d - 1)/2 antipodal classes;
    ``"pruned"`` (the default) runs a depth-first search with radius pruning.
    Both are exact.
    """
    d = basis.d
    if d > LAMBDA1_BIN_MAX_DIM:
        raise DimensionTooLarge(f"lambda1_bin enumeration supports d <= {LAMBDA1_BIN_MAX_DIM}, got {d}")
    if method == "auto":
        method = "pruned"
    if method == "vectorized":
        return 2.0 * _min_ternary_norm_vectorized(basis.entries)
    if method == "pruned":
        return 2.0 * _min_ternary_norm_pruned(basis.entries)
    raise ValueError(f"unknown method {method!r}")


def lambda1_bin_pairwise(basis: LatticeBasis) -> float:
    """Brute force over all unordered pairs z1 != z2 in {-1,1}^d. O(4^d); test oracle."""
    d = basis.d
    Z = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
    img = Z @ basis.entries.T
    best = np.inf
    for i in range(len(img) - 1):
        diff = img[i + 1:] - img[i]
        best = min(best, float(np.min(np.einsum("ij,ij->i", diff, diff))))
    return math.sqrt(best)


def lambda1_exact(basis: LatticeBasis, radius_mult: float = 1.0) -> float:
    """Shortest nonzero lattice vector by box enumeration.

    The box is ||z||_inf <= ceil(radius_mult * kappa), further clipped per
    coordinate by |z_i| <= ||row_i(B^-1)|| * min_j ||b_j||, which any
    minimizer satisfies.
    """
    d = basis.d
    if d > LAMBDA1_MAX_DIM:
        raise DimensionTooLarge(f"lambda1 enumeration supports d <= {LAMBDA1_MAX_DIM}, got {d}")
    B = basis.entries
    outer = math.ceil(radius_mult * basis.kappa - 1e-12)
    upper = float(np.min(np.linalg.norm(B, axis=0)))
    Binv = np.linalg.inv(B)
    row_norms = np.linalg.norm(Binv, axis=1)
    radii = [min(outer, int(math.floor(rn * upper * (1 + 1e-9) + 1e-9))) for rn in row_norms]
    best = upper * upper
    for p in range(d):
        if radii[p] < 1:
            continue
        tail_ranges = [np.arange(-r, r + 1, dtype=float) for r in radii[p + 1:]]
        for lead in range(1, radii[p] + 1):
            base = lead * B[:, p]
            if not tail_ranges:
                best = min(best, float(base @ base))
                continue
            grids = np.meshgrid(*tail_ranges, indexing="ij")
            W = np.stack([g.ravel() for g in grids], axis=1)
            for start in range(0, len(W), _CHUNK):
                v = W[start:start + _CHUNK] @ B[:, p + 1:].T + base
                best = min(best, float(np.min(np.einsum("ij,ij->i", v, v))))
    return math.sqrt(best)


def lambda_sandwich(basis: LatticeBasis) -> tuple[float, float]:
    """Enumeration-free bounds sigma_min(B) <= lambda1 <= lambda1_bin <= 2 sigma_max(B)."""
    return basis.sigma_min, 2.0 * basis.sigma_max


def round_half_away(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def babai_round(basis: LatticeBasis, target: np.ndarray) -> np.ndarray:
    """Babai's rounding-off: round(B^-1 t), ties away from zero."""
    try:
        coeffs = np.linalg.solve(basis.entries, np.asarray(target, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise SingularBasis(str(exc)) from exc
    if not np.all(np.isfinite(coeffs)):
        raise SingularBasis("linear solve produced non-finite coefficients")
    return round_half_away(coeffs)


def make_binary_bdd(
    basis: LatticeBasis,
    alpha: float,
    noise_ratio: float,
    rng: np.random.Generator,
    lambda1_bin: Optional[float] = None,
) -> BinaryBddInstance:
    """Plant z uniform on {-1,1}^d and e uniform on the sphere of radius noise_ratio*alpha*lambda1_bin."""
    if not (0 < alpha < 0.5):
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
    if not (0 <= noise_ratio <= 1):
        raise ValueError(f"noise_ratio must lie in [0, 1], got {noise_ratio}")
    lam = lambda1_bin_exact(basis) if lambda1_bin is None else float(lambda1_bin)
    d = basis.d
    z = rng.choice(np.array([-1, 1]), size=d)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    e = noise_ratio * alpha * lam * direction
    t = basis.entries @ z + e
    return BinaryBddInstance(basis, t, alpha, hidden_z=z, hidden_e=e, lambda1_bin=lam)


def verify_binary_bdd_solution(inst: BinaryBddInstance, z: np.ndarray) -> bool:
    z = np.asarray(z)
    _check_sign_vector(z, inst.d)
    residual = float(np.linalg.norm(inst.basis.entries @ z - inst.target))
    return residual <= inst.alpha * inst.get_lambda1_bin() + NORM_TOL


@dataclass(frozen=True)
class BinaryExpansionMap:
    """Decoding record for the gadget G = I_d (x) (1, 2, ..., q/2)."""

    d: int
    q: int

    @property
    def bits(self) -> int:
        return int(self.q).bit_length() - 1

    def gadget(self) -> np.ndarray:
        return np.kron(np.eye(self.d), 2.0 ** np.arange(self.bits)[None, :])

    def encode(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficients in {0..q-1}^d to their {-1,1} bit encoding (LSB first per coordinate)."""
        c = np.asarray(coeffs, dtype=np.int64)
        if c.shape != (self.d,) or np.any(c < 0) or np.any(c >= self.q):
            raise ValueError(f"coefficients must lie in {{0..{self.q - 1}}}^{self.d}")
        bits = (c[:, None] >> np.arange(self.bits)[None, :]) & 1
        return 2 * bits.ravel() - 1

    def decode(self, z_pm: np.ndarray) -> np.ndarray:
        z = np.asarray(z_pm)
        _check_sign_vector(z, self.d * self.bits)
        bits = ((z + 1) // 2).reshape(self.d, self.bits).astype(np.int64)
        return bits @ (1 << np.arange(self.bits))


def bdd_to_binary_gadget(
    basis: LatticeBasis, target: np.ndarray, q: int
) -> tuple[np.ndarray, np.ndarray, BinaryExpansionMap]:
    """Map t = B c + e with c in {0..q-1}^d to t'' = B' z + 2e with z in {-1,1}^{d log q}.

    B' = B G is d x (d log2 q); the {0,1} -> {-1,1} shift sends t to 2t - B' 1.
    """
    q = int(q)
    if q < 2 or q & (q - 1):
        raise QNotPowerOfTwo(f"q must be a power of two >= 2, got {q}")
    back = BinaryExpansionMap(basis.d, q)
    Bp = basis.entries @ back.gadget()
    t2 = 2.0 * np.asarray(target, dtype=float) - Bp @ np.ones(Bp.shape[1])
    return Bp, t2, back
