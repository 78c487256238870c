"""Eigenvalues, frequencies and multiplicities of the fractional Laplacian.

Two compact domains are supported: the sphere S^d, where level ``j`` is the
harmonic degree with eigenvalue ``j(j+d-1)``, and the flat torus T^d, where
level ``j`` is the ``j``-th distinct value of ``|k|^2`` over ``k in Z^d``.
In one dimension the torus levels are simply ``|k|`` and the eigenvalue is
``j**2``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class DomainKind(str, enum.Enum):
    SPHERE = "sphere"
    TORUS = "torus"


@dataclass(frozen=True)
class Domain:
    kind: DomainKind
    d: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")

    @classmethod
    def sphere(cls, d: int = 2) -> "Domain":
        return cls(DomainKind.SPHERE, d)

    @classmethod
    def torus(cls, d: int = 1) -> "Domain":
        return cls(DomainKind.TORUS, d)

    def __str__(self):
        name = "S" if self.kind is DomainKind.SPHERE else "T"
        return f"{name}^{self.d}"


def _check_level(j: int) -> int:
    if int(j) != j or j < 0:
        raise ValueError(f"level must be a non-negative integer, got {j!r}")
    return int(j)


@lru_cache(maxsize=64)
def _lattice_shells(d: int, n_max: int) -> tuple[tuple[int, int], ...]:
    """(|k|^2, number of k in Z^d with that norm) for every represented value <= n_max."""
    r1 = np.zeros(n_max + 1, dtype=np.int64)
    r1[0] = 1
    k = 1
    while k * k <= n_max:
        r1[k * k] = 2
        k += 1
    rd = r1.copy()
    for _ in range(d - 1):
        rd = np.convolve(rd, r1)[: n_max + 1]
    return tuple((n, int(c)) for n, c in enumerate(rd) if c > 0)


def _torus_shell(d: int, j: int) -> tuple[int, int]:
    if d == 1:
        return j * j, (1 if j == 0 else 2)
    n_max = max(8, 2 * j + 2)
    while True:
        shells = _lattice_shells(d, n_max)
        if len(shells) > j:
            return shells[j]
        n_max *= 2


def eigenvalue(domain: Domain, j: int) -> float:
    """Eigenvalue of -Delta at level ``j``."""
    j = _check_level(j)
    if domain.kind is DomainKind.SPHERE:
        return float(j * (j + domain.d - 1))
    return float(_torus_shell(domain.d, j)[0])


def frequency(domain: Domain, j: int, s: float) -> float:
    """omega_j = lambda_j**s, with omega_0 = 0."""
    if not s > 0:
        raise ValueError(f"fractional power must be positive, got s={s!r}")
    lam = eigenvalue(domain, j)
    if lam == 0.0:
        return 0.0
    return lam**s


def frequency_derivative(domain: Domain, j: int, s: float, k: int) -> float:
    """k-th derivative of omega_j with respect to s: (ln lambda_j)^k * lambda_j^s."""
    j = _check_level(j)
    if j == 0:
        raise ValueError("the zero mode has lambda_0 = 0; its log-derivative is undefined")
    if int(k) != k or k < 0:
        raise ValueError(f"derivative order must be a non-negative integer, got {k!r}")
    lam = eigenvalue(domain, j)
    return math.log(lam) ** int(k) * lam**s


def multiplicity(domain: Domain, j: int) -> int:
    """Dimension of the eigenspace at level ``j``."""
    j = _check_level(j)
    if j == 0:
        return 1
    if domain.kind is DomainKind.TORUS:
        return _torus_shell(domain.d, j)[1]
    d = domain.d
    return (2 * j + d - 1) * math.factorial(j + d - 2) // (math.factorial(j) * math.factorial(d - 1))


def sobolev_weight(lam: float, r: float) -> float:
    """Weight 1 + lambda^r of a mode in the squared H^r norm (0^r = 0 for r > 0)."""
    if lam < 0 or r < 0:
        raise ValueError("sobolev_weight needs lam >= 0 and r >= 0")
    if lam == 0.0:
        return 1.0 if r > 0 else 2.0
    return 1.0 + lam**r


@dataclass(frozen=True)
class FrequencyTable:
    """Immutable table of (level, lambda, omega) for levels 0..cutoff."""

    domain: Domain
    s: float
    cutoff: int
    levels: np.ndarray = field(init=False, repr=False, compare=False)
    lambdas: np.ndarray = field(init=False, repr=False, compare=False)
    omegas: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"fractional power must be positive, got s={self.s!r}")
        cutoff = _check_level(self.cutoff)
        levels = np.arange(cutoff + 1)
        lambdas = np.array([eigenvalue(self.domain, j) for j in levels])
        omegas = np.array([frequency(self.domain, j, self.s) for j in levels])
        for name, arr in (("levels", levels), ("lambdas", lambdas), ("omegas", omegas)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def omega(self, j: int) -> float:
        if j > self.cutoff:
            raise IndexError(f"level {j} beyond table cutoff {self.cutoff}")
        return float(self.omegas[j])

    def rows(self):
        for j in self.levels:
            yield int(j), float(self.lambdas[j]), float(self.omegas[j])


def spectrum_rows(domain: Domain, s: float, cutoff: int):
    """Rows (j, lambda, omega, multiplicity, d_omega_ds) used by the ``spectrum`` dump.

    ``d_omega_ds`` is 0 at the zero mode, where omega vanishes identically in s.
    """
    table = FrequencyTable(domain, s, cutoff)
    for j, lam, om in table.rows():
        dds = frequency_derivative(domain, j, s, 1) if j > 0 else 0.0
        yield j, lam, om, multiplicity(domain, j), dds
