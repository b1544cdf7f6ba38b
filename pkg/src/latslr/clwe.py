"""Continuous LWE samples, their embedding as k-SLR, and the mod-1 test.

A sample is (A, b) with A an m x n standard Gaussian matrix and b in
[-1/2, 1/2)^n. In the planted case b = s^T A + e (mod 1) for a secret s of
norm gamma on the sphere in R^m and e ~ N(0, beta^2 I_n); in the null case b
is uniform. A k-sparse partite theta with A theta close to 0 makes
<b, theta> close to an integer only in the planted case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BadShape
from .gadgets import partite_matrix
from .lattice import round_half_away
from .reduction import SlrInstance

DISTINGUISH_THRESHOLD = 0.25


def mod1(x):
    """Representative of x modulo 1 in [-1/2, 1/2)."""
    x = np.asarray(x, dtype=float)
    r = x - np.floor(x + 0.5)
    r = np.where(r >= 0.5, r - 1.0, r)
    r = np.where(r < -0.5, r + 1.0, r)
    return float(r) if r.ndim == 0 else r


@dataclass(frozen=True)
class ClweSample:
    A: np.ndarray
    b: np.ndarray
    gamma_clwe: float
    beta: float
    provenance: str
    hidden_s: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(np.ravel(self.b), dtype=float)
        if A.ndim != 2 or b.shape != (A.shape[1],):
            raise BadShape(f"A has shape {A.shape} but b has shape {b.shape}")
        if np.any(b < -0.5) or np.any(b >= 0.5):
            raise ValueError("entries of b must lie in [-1/2, 1/2)")
        if self.provenance not in ("clwe", "null"):
            raise ValueError(f"provenance must be 'clwe' or 'null', got {self.provenance!r}")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.hidden_s is not None:
            s = np.array(self.hidden_s, dtype=float)
            s.setflags(write=False)
            object.__setattr__(self, "hidden_s", s)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def without_secret(self) -> "ClweSample":
        return ClweSample(self.A, self.b, self.gamma_clwe, self.beta, self.provenance)

    def __eq__(self, other):
        if not isinstance(other, ClweSample):
            return NotImplemented
        same_s = (self.hidden_s is None and other.hidden_s is None) or (
            self.hidden_s is not None and other.hidden_s is not None and np.array_equal(self.hidden_s, other.hidden_s)
        )
        return (
            np.array_equal(self.A, other.A)
            and np.array_equal(self.b, other.b)
            and self.gamma_clwe == other.gamma_clwe
            and self.beta == other.beta
            and self.provenance == other.provenance
            and same_s
        )

    __hash__ = None


@dataclass(frozen=True)
class ClweSlrInstance:
    slr: SlrInstance
    alpha_scale: float
    gamma_clwe: float


def sample_clwe(m: int, n: int, gamma_clwe: float, beta: float, rng) -> ClweSample:
    if m < 1 or n < 1 or not gamma_clwe > 0 or beta < 0:
        raise ValueError("need m, n >= 1, gamma_clwe > 0 and beta >= 0")
    rng = np.random.default_rng(rng)
    A = rng.standard_normal((m, n))
    s = rng.standard_normal(m)
    s *= gamma_clwe / np.linalg.norm(s)
    e = rng.standard_normal(n) * beta if beta > 0 else np.zeros(n)
    b = mod1(s @ A + e)
    return ClweSample(A, np.atleast_1d(b), float(gamma_clwe), float(beta), "clwe", s)


def sample_null(m: int, n: int, rng, gamma_clwe: float = 0.0, beta: float = 0.0) -> ClweSample:
    rng = np.random.default_rng(rng)
    A = rng.standard_normal((m, n))
    b = rng.random(n) - 0.5
    return ClweSample(A, b, float(gamma_clwe), float(beta), "null")


def clwe_delta(gamma_clwe: float, m: int, k: int) -> float:
    return 1.0 / (100.0 * gamma_clwe * math.sqrt(m + k))


def clwe_alpha(gamma_clwe: float, n: int) -> float:
    return max(math.sqrt(n), 3.0 / (100.0 * gamma_clwe))


def build_slr_from_clwe(sample: ClweSample, k: int, gamma_clwe: Optional[float] = None) -> ClweSlrInstance:
    """X = (A ; alpha G_partite), y = (0 ; alpha 1).

    ``gamma_clwe`` defaults to the value carried by the sample; null samples
    must pass the parameter of the CLWE arm they are compared against.
    """
    gamma = sample.gamma_clwe if gamma_clwe is None else float(gamma_clwe)
    if not gamma > 0:
        raise ValueError("gamma_clwe must be positive")
    m, n = sample.A.shape
    if k < 1 or n % k:
        raise BadShape(f"k={k} does not divide n={n}")
    alpha = clwe_alpha(gamma, n)
    X = np.vstack([sample.A, alpha * partite_matrix(n, k)])
    y = np.concatenate([np.zeros(m), np.full(k, alpha)])
    slr = SlrInstance(X, y, clwe_delta(gamma, m, k), k, provenance="from-clwe")
    return ClweSlrInstance(slr, alpha, gamma)


def clwe_n(m: int, k: int, c: float) -> int:
    """n = k 2^ceil(c (m/k) log2 m), the sizing that makes short partite combinations exist."""
    bits = max(1, math.ceil(c * (m / k) * math.log2(m)))
    return k << bits


def distinguish(sample: ClweSample, theta_hat: np.ndarray) -> int:
    """1 (planted) iff <b, round(theta_hat)> is within 1/4 of an integer."""
    v = round_half_away(np.asarray(theta_hat, dtype=float))
    if v.shape != (sample.n,):
        raise BadShape(f"theta_hat has length {v.size}, expected {sample.n}")
    return int(abs(mod1(float(sample.b @ v))) < DISTINGUISH_THRESHOLD)
