"""Small divisors, the (K-NR) nonresonance test and the Vandermonde determinant check.

A small divisor is an integer combination ``sum_j omega_j(s) L_j`` of the
frequencies at levels ``j >= 1``.  The scanner enumerates every admissible
``L`` (bounded total mass, at most two units above a head cutoff) and looks
for values of ``s`` where some combination nearly vanishes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import mpmath
import numpy as np
import scipy.linalg

from .spectrum import Domain, FrequencyTable, eigenvalue, frequency_derivative


class MultiIndex:
    """Sparse integer vector indexed by level (or mode), stored without zeros."""

    __slots__ = ("_items", "_hash")

    def __init__(self, entries: Mapping[int, int] | Sequence[tuple[int, int]] = ()):
        items = dict(entries.items() if isinstance(entries, Mapping) else entries)
        for key, val in items.items():
            if int(val) != val:
                raise ValueError(f"non-integer entry {val!r} at {key}")
        self._items = tuple(sorted((int(k), int(v)) for k, v in items.items() if v != 0))
        self._hash = hash(self._items)

    @classmethod
    def parse(cls, text: str) -> "MultiIndex":
        """Inverse of :meth:`encode`, e.g. ``"1:1,5:-2,7:1"``."""
        text = text.strip()
        if not text:
            return cls()
        pairs = []
        for chunk in text.split(","):
            key, val = chunk.split(":")
            pairs.append((int(key), int(val)))
        return cls(pairs)

    def encode(self) -> str:
        return ",".join(f"{k}:{v}" for k, v in self._items)

    def items(self):
        return self._items

    def keys(self):
        return [k for k, _ in self._items]

    def get(self, key: int, default: int = 0) -> int:
        for k, v in self._items:
            if k == key:
                return v
        return default

    def __getitem__(self, key: int) -> int:
        return self.get(key)

    @property
    def norm1(self) -> int:
        return sum(abs(v) for _, v in self._items)

    def tail_mass(self, head: int) -> int:
        return sum(abs(v) for k, v in self._items if k > head)

    def canonical(self) -> "MultiIndex":
        """Sign representative whose lowest nonzero entry is positive."""
        if self._items and self._items[0][1] < 0:
            return -self
        return self

    def to_dict(self) -> dict[int, int]:
        return dict(self._items)

    def __neg__(self):
        return MultiIndex([(k, -v) for k, v in self._items])

    def __add__(self, other: "MultiIndex"):
        out = dict(self._items)
        for k, v in other._items:
            out[k] = out.get(k, 0) + v
        return MultiIndex(out)

    def __sub__(self, other: "MultiIndex"):
        return self + (-other)

    def __rmul__(self, a: int):
        return MultiIndex([(k, a * v) for k, v in self._items])

    def __bool__(self):
        return bool(self._items)

    def __len__(self):
        return len(self._items)

    def __eq__(self, other):
        return isinstance(other, MultiIndex) and self._items == other._items

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return "MultiIndex({" + ", ".join(f"{k}: {v:+d}" for k, v in self._items) + "})"


def _ordered_sum(terms) -> float:
    total = 0.0
    for t in sorted(terms, key=abs):
        total += t
    return total


def small_divisor(table: FrequencyTable, L: MultiIndex) -> float:
    """sum_{j>=1} omega_j L_j, accumulated in order of increasing |omega_j L_j|."""
    terms = []
    for j, c in L.items():
        if j < 0:
            raise ValueError(f"negative level {j} in {L!r}")
        if j > table.cutoff:
            raise ValueError(f"level {j} beyond frequency table cutoff {table.cutoff}")
        if j == 0:
            continue
        terms.append(table.omegas[j] * c)
    return _ordered_sum(terms)


# ---------------------------------------------------------------------------
# enumeration


def _compositions(n: int, k: int) -> Iterator[tuple[int, ...]]:
    """Ordered k-tuples of positive integers summing to n, lexicographic."""
    if k == 1:
        yield (n,)
        return
    for first in range(1, n - k + 2):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def _check_bounds(K: int, N: int, J_max: int):
    if K < 1 or N < 1 or J_max < N:
        raise ValueError(f"need K >= 1 and 1 <= N <= J_max, got K={K}, N={N}, J_max={J_max}")


def _iter_support_entries(K: int, N: int, J_max: int, canonical: bool):
    for total in range(1, K + 3):
        for k in range(1, min(total, J_max) + 1):
            for support in itertools.combinations(range(1, J_max + 1), k):
                for mags in _compositions(total, k):
                    tail = sum(m for j, m in zip(support, mags) if j > N)
                    if tail > 2:
                        continue
                    sign_sets = itertools.product((1, -1), repeat=k - 1 if canonical else k)
                    for signs in sign_sets:
                        if canonical:
                            signs = (1,) + signs
                        yield support, tuple(s * m for s, m in zip(signs, mags))


def enumerate_multiindices(K: int, N: int, J_max: int, canonical: bool = False) -> Iterator[MultiIndex]:
    """Every L with support in [1, J_max], 0 < |L| <= K+2 and at most 2 units above N.

    Order is graded by |L|, then by support (lexicographic), magnitudes and
    signs.  With ``canonical=True`` only the representative of each ``{L, -L}``
    pair with a positive lowest entry is produced.
    """
    _check_bounds(K, N, J_max)
    for support, coeffs in _iter_support_entries(K, N, J_max, canonical):
        yield MultiIndex(zip(support, coeffs))


@dataclass(frozen=True)
class IndexBank:
    """Enumerated multi-indices packed as (levels, coeffs) arrays of width K+2."""

    K: int
    N: int
    J_max: int
    levels: np.ndarray
    coeffs: np.ndarray

    def __len__(self):
        return self.levels.shape[0]

    def index(self, row: int) -> MultiIndex:
        return MultiIndex(zip(self.levels[row].tolist(), self.coeffs[row].tolist()))


def build_index_bank(K: int, N: int, J_max: int, canonical: bool = True) -> IndexBank:
    _check_bounds(K, N, J_max)
    width = K + 2
    levels, coeffs = [], []
    for support, cs in _iter_support_entries(K, N, J_max, canonical):
        pad = width - len(support)
        levels.append(support + (0,) * pad)
        coeffs.append(cs + (0,) * pad)
    return IndexBank(
        K, N, J_max,
        np.array(levels, dtype=np.int64).reshape(-1, width),
        np.array(coeffs, dtype=np.int64).reshape(-1, width),
    )


def bank_divisors(bank: IndexBank, omegas: np.ndarray) -> np.ndarray:
    """Vectorized small divisors of every row, each summed in ascending |term| order."""
    terms = omegas[bank.levels] * bank.coeffs
    terms[bank.coeffs == 0] = 0.0
    order = np.argsort(np.abs(terms), axis=1, kind="stable")
    terms = np.take_along_axis(terms, order, axis=1)
    total = np.zeros(terms.shape[0])
    for col in range(terms.shape[1]):
        total += terms[:, col]
    return total


# ---------------------------------------------------------------------------
# (K-NR) test and s-scans


@dataclass(frozen=True)
class ScanConfig:
    K: int
    N: int
    J_max: int
    gamma: float = 1e-4
    alpha: float | None = None
    s_grid: tuple[float, ...] = ()

    def __post_init__(self):
        _check_bounds(self.K, self.N, self.J_max)
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")
        grid = tuple(float(s) for s in self.s_grid)
        if any(s <= 0.5 for s in grid):
            raise ValueError("every s in the grid must exceed 1/2")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("s_grid must be strictly increasing")
        object.__setattr__(self, "s_grid", grid)

    def threshold(self, domain: Domain) -> float:
        alpha = domain.d + 1 if self.alpha is None else self.alpha
        return self.gamma / self.N**alpha


@dataclass(frozen=True)
class DivisorRecord:
    L: MultiIndex
    s: float
    value: float
    threshold: float


@dataclass(frozen=True)
class KNRResult:
    passed: bool
    worst: DivisorRecord
    # every multi-index tied with the worst value (exact resonances are rarely unique)
    minimizers: tuple[MultiIndex, ...] = ()
    n_checked: int = 0


@dataclass(frozen=True)
class ScanRow:
    s: float
    min_divisor: float
    argmin: MultiIndex
    minimizers: tuple[MultiIndex, ...] = ()


_BANKS: dict[tuple[int, int, int], IndexBank] = {}


def _bank_for(cfg: ScanConfig) -> IndexBank:
    key = (cfg.K, cfg.N, cfg.J_max)
    if key not in _BANKS:
        _BANKS[key] = build_index_bank(*key)
    return _BANKS[key]


def _minimize(bank: IndexBank, domain: Domain, s: float, tie_tol: float):
    table = FrequencyTable(domain, s, bank.J_max)
    values = np.abs(bank_divisors(bank, np.asarray(table.omegas)))
    row = int(np.argmin(values))
    best = float(values[row])
    ties = np.flatnonzero(values <= best + tie_tol)
    return table, row, best, tuple(bank.index(int(t)) for t in ties)


def check_KNR(s: float, cfg: ScanConfig, domain: Domain, tie_tol: float = 1e-12) -> KNRResult:
    """Test |sum omega_j L_j| >= gamma / N**alpha over the enumerated multi-indices."""
    if not s > 0.5:
        raise ValueError(f"s must exceed 1/2, got {s!r}")
    bank = _bank_for(cfg)
    table, row, _, ties = _minimize(bank, domain, s, tie_tol)
    L = bank.index(row)
    thr = cfg.threshold(domain)
    value = small_divisor(table, L)
    worst = DivisorRecord(L, s, value, thr)
    return KNRResult(abs(value) >= thr, worst, ties, len(bank))


def scan_s(cfg: ScanConfig, domain: Domain, tie_tol: float = 1e-12) -> list[ScanRow]:
    """Minimal |divisor| and its multi-index at every grid point, in grid order."""
    bank = _bank_for(cfg)
    rows = []
    for s in cfg.s_grid:
        _, row, best, ties = _minimize(bank, domain, s, tie_tol)
        rows.append(ScanRow(s, best, bank.index(row), ties))
    return rows


# ---------------------------------------------------------------------------
# bad intervals


@dataclass(frozen=True)
class BadInterval:
    L: MultiIndex
    s_lo: float
    s_hi: float

    @property
    def width(self) -> float:
        return self.s_hi - self.s_lo


def _divisor_function(L: MultiIndex, domain: Domain):
    lams = [(eigenvalue(domain, j), c) for j, c in L.items() if j > 0]

    def g(s: float) -> float:
        return _ordered_sum([lam**s * c for lam, c in lams])

    return g


def _bisect(fun, a: float, b: float, tol: float) -> float:
    """Root of ``fun`` between a and b (either order), given a sign change."""
    fa = fun(a)
    if fa == 0.0:
        return a
    while abs(b - a) > tol:
        m = 0.5 * (a + b)
        fm = fun(m)
        if fm == 0.0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def refine_bad_intervals(
    L: MultiIndex,
    s_range: tuple[float, float],
    threshold: float,
    domain: Domain,
    step: float = 1e-3,
    tol: float = 1e-12,
) -> list[BadInterval]:
    """Sub-intervals of ``s_range`` on which |sum lambda_j^s L_j| < threshold.

    Sign changes of the divisor on a uniform grid are bisected to width
    ``tol``; each root (and every grid node already below threshold) is then
    grown to the points where |g| crosses ``threshold``.
    """
    lo, hi = map(float, s_range)
    if not hi > lo:
        raise ValueError(f"empty s range [{lo}, {hi}]")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    g = _divisor_function(L, domain)
    n = max(1, int(math.ceil((hi - lo) / step)))
    grid = np.linspace(lo, hi, n + 1)
    vals = np.array([g(s) for s in grid])

    seeds = []
    for i in range(n):
        a, b = vals[i], vals[i + 1]
        if a == 0.0 or (a > 0) != (b > 0):
            seeds.append((_bisect(g, grid[i], grid[i + 1], tol), i))
    seeds.extend((grid[i], i) for i in np.flatnonzero(np.abs(vals) < threshold))
    excess = lambda s: abs(g(s)) - threshold  # noqa: E731

    spans = []
    for seed, i in seeds:
        if excess(seed) >= 0:
            continue
        # walk outward on the grid until |g| >= threshold, then bisect the crossing
        k = i
        while k >= 0 and (grid[k] >= seed or abs(vals[k]) < threshold):
            k -= 1
        s_lo = lo if k < 0 else _bisect(excess, seed, float(grid[k]), tol)
        k = i + 1 if grid[i] <= seed else i
        while k <= n and (grid[k] <= seed or abs(vals[k]) < threshold):
            k += 1
        s_hi = hi if k > n else _bisect(excess, seed, float(grid[k]), tol)
        spans.append((min(s_lo, seed), max(s_hi, seed)))

    spans.sort()
    merged: list[list[float]] = []
    for a, b in spans:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    out = []
    for a, b in merged:
        if b <= a:
            # root on a grid node with |g| rising faster than tol resolves
            a, b = a - 0.5 * tol, b + 0.5 * tol
        out.append(BadInterval(L, a, b))
    return out


def total_measure(intervals: Sequence[BadInterval]) -> float:
    return float(sum(iv.width for iv in intervals))


# ---------------------------------------------------------------------------
# Vandermonde determinant of frequency s-derivatives


@dataclass(frozen=True)
class Determinant:
    value: float
    degenerate: bool = False
    extended: bool = False

    def __float__(self):
        return self.value


def derivative_matrix(indices: Sequence[int], s: float, domain: Domain) -> np.ndarray:
    """kappa x kappa matrix with entry (k, m) = d^k omega_{j_m} / ds^k."""
    kappa = len(indices)
    return np.array([[frequency_derivative(domain, j, s, k) for j in indices] for k in range(kappa)])


def _check_indices(indices: Sequence[int]):
    if len(indices) < 1:
        raise ValueError("need at least one level")
    if any(j < 1 for j in indices):
        raise ValueError("levels must be >= 1 (the zero mode has no log-derivative)")


def _lu_det(mat: np.ndarray) -> float:
    lu, piv = scipy.linalg.lu_factor(mat, check_finite=True)
    swaps = int(np.count_nonzero(piv != np.arange(len(piv))))
    return float(np.prod(np.diag(lu)) * (-1) ** swaps)


def _mp_det(indices: Sequence[int], s: float, domain: Domain, dps: int = 50) -> float:
    with mpmath.workdps(dps):
        lams = [mpmath.mpf(eigenvalue(domain, j)) for j in indices]
        smp = mpmath.mpf(s)
        mat = mpmath.matrix(
            [[mpmath.log(lam) ** k * lam**smp for lam in lams] for k in range(len(indices))]
        )
        return float(mpmath.det(mat))


def vandermonde_determinant(indices: Sequence[int], s: float, domain: Domain) -> Determinant:
    """Determinant of the derivative matrix by LU with partial pivoting.

    Falls back to 50-digit arithmetic when the double-precision value is tiny
    relative to the matrix norm.  Repeated levels give an exact zero flagged
    as degenerate.
    """
    _check_indices(indices)
    if len(set(indices)) != len(indices):
        return Determinant(0.0, degenerate=True)
    mat = derivative_matrix(indices, s, domain)
    det = _lu_det(mat)
    if abs(det) < 1e-8 * np.linalg.norm(mat):
        return Determinant(_mp_det(indices, s, domain), extended=True)
    return Determinant(det)


def vandermonde_closed_form(indices: Sequence[int], s: float, domain: Domain) -> float:
    """prod_m omega_{j_m} * prod_{l<k} ln(lambda_{j_k} / lambda_{j_l})."""
    _check_indices(indices)
    if len(set(indices)) != len(indices):
        raise ValueError(f"repeated level in {list(indices)}")
    lams = [eigenvalue(domain, j) for j in indices]
    out = math.prod(lam**s for lam in lams)
    for l, k in itertools.combinations(range(len(lams)), 2):
        out *= math.log(lams[k] / lams[l])
    return out


@dataclass(frozen=True)
class LemmaBoundReport:
    K: int
    s: float
    minimum: float  # min |D| * K**(2 kappa^2), the exponent the proof produces
    argmin: tuple[int, ...]
    minimum_statement: float  # min |D| * K**(kappa^2), the exponent as stated
    argmin_statement: tuple[int, ...]
    n_tuples: int = 0
    tuples: list = field(default_factory=list, repr=False)


def lemma_bound_report(K: int, s: float, domain: Domain) -> LemmaBoundReport:
    """Scan every strictly increasing tuple in [1, K] and scale |D| by K^{2 kappa^2}.

    A positive minimum certifies |D| >= C / K^{2 kappa^2} with C the minimum.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    best = (math.inf, ())
    best_stmt = (math.inf, ())
    rows = []
    for kappa in range(1, K + 1):
        for tup in itertools.combinations(range(1, K + 1), kappa):
            D = abs(vandermonde_closed_form(tup, s, domain))
            proof = D * float(K) ** (2 * kappa * kappa)
            stmt = D * float(K) ** (kappa * kappa)
            rows.append((tup, D))
            if proof < best[0]:
                best = (proof, tup)
            if stmt < best_stmt[0]:
                best_stmt = (stmt, tup)
    return LemmaBoundReport(K, s, best[0], best[1], best_stmt[0], best_stmt[1], len(rows), rows)


def near_resonances(
    cfg: ScanConfig, domain: Domain, s: float, threshold: float, limit: int = 50
) -> list[tuple[MultiIndex, float]]:
    """Canonical multi-indices with |divisor| < threshold at ``s``, smallest first."""
    bank = _bank_for(cfg)
    table = FrequencyTable(domain, s, bank.J_max)
    values = bank_divisors(bank, np.asarray(table.omegas))
    rows = np.flatnonzero(np.abs(values) < threshold)
    rows = rows[np.argsort(np.abs(values[rows]), kind="stable")][:limit]
    return [(bank.index(int(r)), float(values[r])) for r in rows]


def union_measure(intervals: Sequence[BadInterval]) -> float:
    """Lebesgue measure of the union (intervals of different L may overlap)."""
    spans = sorted((iv.s_lo, iv.s_hi) for iv in intervals)
    total, cur_lo, cur_hi = 0.0, None, None
    for a, b in spans:
        if cur_hi is None or a > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = a, b
        else:
            cur_hi = max(cur_hi, b)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total
