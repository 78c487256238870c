"""Sparse polynomials in (xi, eta), exact Poisson brackets and Birkhoff normal form.

A polynomial lives on a fixed tuple of modes (signed torus wavenumbers).  Each
monomial ``xi^J eta^L`` is keyed by the dense exponent tuple ``J + L`` of
length ``2 * n_modes``.  With the bracket

    {F; G} = i sum_m (dF/deta_m dG/dxi_m - dF/dxi_m dG/deta_m)

one has ``{H0, xi^J eta^L} = i Omega(J, L) xi^J eta^L`` where
``Omega = sum_m omega_m (J_m - L_m)``; this is the divisor used throughout.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .galerkin import NonlinearitySpec
from .resonance import MultiIndex, small_divisor
from .spectrum import FrequencyTable

PRUNE_REL = 1e-14
TERM_CAP = 10**6


class TermCapError(RuntimeError):
    pass


def torus_modes(N: int) -> tuple[int, ...]:
    return tuple(range(-N, N + 1))


class Poly:
    """Immutable sparse polynomial on a fixed mode tuple; modes map to levels by |k|."""

    __slots__ = ("modes", "terms", "_index")

    def __init__(self, modes: Sequence[int], terms: Mapping[tuple[int, ...], complex] | None = None):
        self.modes = tuple(modes)
        self._index = {m: i for i, m in enumerate(self.modes)}
        n2 = 2 * len(self.modes)
        clean = {}
        for key, c in (terms or {}).items():
            if len(key) != n2:
                raise ValueError(f"exponent key of length {len(key)} on {len(self.modes)} modes")
            if c != 0:
                clean[tuple(key)] = complex(c)
        self.terms = clean

    # -- construction -------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.modes)

    def key(self, J: Mapping[int, int], L: Mapping[int, int]) -> tuple[int, ...]:
        exps = [0] * (2 * self.n)
        for m, e in dict(J).items():
            exps[self._index[m]] += e
        for m, e in dict(L).items():
            exps[self.n + self._index[m]] += e
        if min(exps, default=0) < 0:
            raise ValueError("negative exponent")
        return tuple(exps)

    @classmethod
    def from_monomials(cls, modes, monomials: Iterable[tuple[Mapping, Mapping, complex]]) -> "Poly":
        p = cls(modes)
        terms: dict = defaultdict(complex)
        for J, L, c in monomials:
            terms[p.key(J, L)] += c
        return cls(modes, terms)

    @classmethod
    def mode_action(cls, modes, m: int) -> "Poly":
        return cls.from_monomials(modes, [({m: 1}, {m: 1}, 1.0)])

    @classmethod
    def level_action(cls, modes, j: int) -> "Poly":
        """I_j = sum of xi_m eta_m over the modes with |m| = j."""
        return cls.from_monomials(modes, [({m: 1}, {m: 1}, 1.0) for m in modes if abs(m) == j])

    @classmethod
    def quadratic(cls, freqs: FrequencyTable, modes) -> "Poly":
        """H0 = sum_m omega_|m| xi_m eta_m."""
        return cls.from_monomials(modes, [({m: 1}, {m: 1}, freqs.omega(abs(m))) for m in modes])

    # -- views ----------------------------------------------------------------

    def split_key(self, key) -> tuple[MultiIndex, MultiIndex]:
        n = self.n
        J = MultiIndex({self.modes[i]: e for i, e in enumerate(key[:n]) if e})
        L = MultiIndex({self.modes[i]: e for i, e in enumerate(key[n:]) if e})
        return J, L

    def monomials(self):
        for key, c in self.terms.items():
            J, L = self.split_key(key)
            yield J, L, c

    def coeff(self, J: Mapping[int, int], L: Mapping[int, int]) -> complex:
        return self.terms.get(self.key(J, L), 0j)

    @staticmethod
    def degree_of(key) -> int:
        return sum(key)

    def degrees(self) -> set[int]:
        return {sum(k) for k in self.terms}

    def homogeneous(self, deg: int) -> "Poly":
        return Poly(self.modes, {k: c for k, c in self.terms.items() if sum(k) == deg})

    def truncate(self, max_deg: int) -> "Poly":
        return Poly(self.modes, {k: c for k, c in self.terms.items() if sum(k) <= max_deg})

    def degree_range(self, lo: int, hi: int) -> "Poly":
        return Poly(self.modes, {k: c for k, c in self.terms.items() if lo <= sum(k) <= hi})

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def __len__(self):
        return len(self.terms)

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        return f"Poly({len(self.terms)} terms on modes {self.modes[0]}..{self.modes[-1]})" if self.modes else "Poly()"

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: "Poly"):
        if self.modes != other.modes:
            raise ValueError("polynomials live on different mode sets")

    def __add__(self, other: "Poly") -> "Poly":
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0j) + c
        return Poly(self.modes, out)

    def __neg__(self):
        return Poly(self.modes, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def scale(self, a: complex) -> "Poly":
        return Poly(self.modes, {k: a * c for k, c in self.terms.items()})

    def __rmul__(self, a: complex):
        return self.scale(a)

    def pruned(self, rel: float = PRUNE_REL) -> "Poly":
        cut = rel * self.max_abs()
        return Poly(self.modes, {k: c for k, c in self.terms.items() if abs(c) > cut})

    def conjugate_swap(self) -> "Poly":
        """Coefficients c'(J, L) = conj(c(L, J)); equals self iff real on eta = conj(xi)."""
        n = self.n
        return Poly(self.modes, {k[n:] + k[:n]: c.conjugate() for k, c in self.terms.items()})

    def is_real(self, tol: float = 1e-12) -> bool:
        diff = self - self.conjugate_swap()
        return diff.max_abs() <= tol * max(1.0, self.max_abs())

    def evaluate(self, xi: Mapping[int, complex]) -> complex:
        """Value on the real subspace eta = conj(xi)."""
        vals = [complex(xi.get(m, 0)) for m in self.modes]
        allv = vals + [v.conjugate() for v in vals]
        total = 0j
        for key, c in self.terms.items():
            term = c
            for v, e in zip(allv, key):
                if e:
                    term *= v**e
            total += term
        return total

    # -- serialization --------------------------------------------------------

    def to_records(self) -> list[dict]:
        out = []
        for key in sorted(self.terms):
            J, L = self.split_key(key)
            c = self.terms[key]
            out.append({
                "J": {str(m): e for m, e in J.items()},
                "L": {str(m): e for m, e in L.items()},
                "re": c.real,
                "im": c.imag,
            })
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_records())

    @classmethod
    def from_records(cls, modes, records: list[dict]) -> "Poly":
        return cls.from_monomials(
            modes,
            [({int(m): e for m, e in r["J"].items()}, {int(m): e for m, e in r["L"].items()},
              complex(r["re"], r["im"])) for r in records],
        )


def poisson_bracket_poly(F: Poly, G: Poly, prune: bool = True, term_cap: int = TERM_CAP) -> Poly:
    """Exact bracket {F; G} = i sum_m (dF/deta_m dG/dxi_m - dF/dxi_m dG/deta_m).

    Both products land on the same monomial J_F + J_G - e_m, L_F + L_G - e_m,
    with weight L_F[m] J_G[m] - J_F[m] L_G[m].
    """
    F._check(G)
    n = F.n
    out: dict = defaultdict(complex)
    g_items = list(G.terms.items())
    for a, ca in F.terms.items():
        for b, cb in g_items:
            for m in range(n):
                w = a[n + m] * b[m] - a[m] * b[n + m]
                if w == 0:
                    continue
                key = list(map(int.__add__, a, b))
                key[m] -= 1
                key[n + m] -= 1
                out[tuple(key)] += 1j * w * ca * cb
        if len(out) > term_cap:
            raise TermCapError(f"bracket exceeded {term_cap} terms; reduce the mode cutoff or K")
    res = Poly(F.modes, out)
    return res.pruned() if prune else res


# ---------------------------------------------------------------------------
# the nonlinearity as a polynomial


def _multisets_by_momentum(modes: Sequence[int], size: int) -> dict[int, list[tuple[int, ...]]]:
    groups: dict[int, list] = defaultdict(list)
    for combo in itertools.combinations_with_replacement(modes, size):
        groups[sum(combo)].append(combo)
    return groups


def _multinomial(combo: tuple[int, ...]) -> int:
    out = math.factorial(len(combo))
    for c in Counter(combo).values():
        out //= math.factorial(c)
    return out


def expand_Hp(f: NonlinearitySpec, N: int, max_degree: int) -> Poly:
    """Fourier-space polynomial of int F(|psi|^2) dx over modes |k| <= N.

    The term a_m u^{m+1}/(m+1) contributes, for every pair of (m+1)-multisets
    with equal total momentum, the coefficient
    a_m / (m+1) / (2 pi)^m * multinomial(J) * multinomial(L).
    """
    if max_degree < 4:
        raise ValueError("max_degree must be >= 4 to hold the lowest nonlinear term")
    modes = torus_modes(N)
    proto = Poly(modes)
    terms: dict = {}
    for m, a in enumerate(f.taylor[: f.degree], start=1):
        if a == 0.0 or 2 * (m + 1) > max_degree:
            continue
        pref = a / (m + 1) / (2.0 * math.pi) ** m
        groups = _multisets_by_momentum(modes, m + 1)
        for combos in groups.values():
            weights = [(_multinomial(c), Counter(c)) for c in combos]
            for wj, J in weights:
                for wl, L in weights:
                    terms[proto.key(J, L)] = pref * wj * wl
    return Poly(modes, terms)


# ---------------------------------------------------------------------------
# divisors and the homological equation


def _levels(idx: MultiIndex) -> MultiIndex:
    out: dict[int, int] = defaultdict(int)
    for m, e in idx.items():
        out[abs(m)] += e
    return MultiIndex(out)


def omega_divisor(freqs: FrequencyTable, J: MultiIndex, L: MultiIndex) -> float:
    """Omega = sum_m omega_|m| (J_m - L_m), evaluated as a level-aggregated small divisor."""
    return small_divisor(freqs, _levels(J - L))


def _key_divisors(freqs: FrequencyTable, P: Poly) -> dict:
    n = P.n
    out = {}
    for key in P.terms:
        lv: dict[int, int] = defaultdict(int)
        for i in range(n):
            d = key[i] - key[n + i]
            if d:
                lv[abs(P.modes[i])] += d
        diff = MultiIndex(lv)
        out[key] = small_divisor(freqs, diff) if diff else 0.0
    return out


def homological_solve(freqs: FrequencyTable, P: Poly, threshold: float = 1e-10) -> tuple[Poly, Poly]:
    """Split P into chi and Z with {H0, chi} + Z = P.

    Monomials with |Omega| <= threshold stay in Z; the others are removed by
    chi_{JL} = p_{JL} / (i Omega).
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    chi, Z = {}, {}
    for key, om in _key_divisors(freqs, P).items():
        c = P.terms[key]
        if abs(om) <= threshold:
            Z[key] = c
        else:
            chi[key] = c / (1j * om)
    return Poly(P.modes, chi), Poly(P.modes, Z)


def homological_residual(freqs: FrequencyTable, P: Poly, chi: Poly, Z: Poly) -> float:
    """max |coeff| of {H0, chi} + Z - P (no pruning)."""
    H0 = Poly.quadratic(freqs, P.modes)
    return (poisson_bracket_poly(H0, chi, prune=False) + Z - P).max_abs()


def lie_transform(chi: Poly, H: Poly, max_degree: int, term_cap: int = TERM_CAP) -> Poly:
    """exp({chi, .}) H = sum_k ad_chi^k H / k!, dropping degrees above ``max_degree``."""
    out = H.truncate(max_degree)
    term = out
    k = 0
    while term:
        k += 1
        term = poisson_bracket_poly(chi, term, term_cap=term_cap).truncate(max_degree).scale(1.0 / k)
        out = out + term
        if len(out) > term_cap:
            raise TermCapError(f"Lie transform exceeded {term_cap} terms; reduce the mode cutoff or K")
    # cancellations such as p + {chi, H0} leave rounding residue at 1e-17
    return out.pruned()


@dataclass
class NormalizationStep:
    degree: int
    n_removed: int
    n_resonant: int
    residual: float
    scale: float  # max |coeff| of the degree part that was normalized

    @property
    def relative_residual(self) -> float:
        return self.residual / self.scale if self.scale else 0.0


@dataclass
class NormalFormResult:
    K: int
    Z: Poly
    chi_list: list[Poly]
    R: Poly
    H0: Poly
    steps: list[NormalizationStep] = field(default_factory=list)
    max_degree: int = 0


def birkhoff_normal_form(
    freqs: FrequencyTable,
    Hp: Poly,
    K: int,
    threshold: float = 1e-10,
    window: int = 2,
    term_cap: int = TERM_CAP,
) -> NormalFormResult:
    """Normalize degrees 3..K+2 of H0 + Hp one degree at a time.

    At degree n the current homogeneous part is split by
    :func:`homological_solve` and the whole Hamiltonian is replaced by
    ``exp({chi_n, .}) H``, truncated at degree K+2+window.  The residual
    identity of every split is recorded in ``steps``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if Hp and min(Hp.degrees()) < 3:
        raise ValueError("the nonlinear part must vanish to order 3")
    top = K + 2
    max_deg = top + window
    H0 = Poly.quadratic(freqs, Hp.modes)
    H = H0 + Hp.truncate(max_deg)
    chis, steps = [], []
    for deg in range(3, top + 1):
        P = H.homogeneous(deg)
        if not P:
            continue
        chi, Zn = homological_solve(freqs, P, threshold)
        steps.append(NormalizationStep(
            deg, len(chi), len(Zn), homological_residual(freqs, P, chi, Zn), P.max_abs()
        ))
        chis.append(chi)
        if chi:
            H = lie_transform(chi, H, max_deg, term_cap)
    return NormalFormResult(
        K=K,
        Z=H.degree_range(3, top),
        chi_list=chis,
        R=H.degree_range(top + 1, max_deg),
        H0=H0,
        steps=steps,
        max_degree=max_deg,
    )


# ---------------------------------------------------------------------------
# structural verification


@dataclass
class MonomialReport:
    name: str
    violations: list[tuple[MultiIndex, MultiIndex, complex]] = field(default_factory=list)
    checked: int = 0

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> dict:
        return {
            "check": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "violations": [
                {"J": J.encode(), "L": L.encode(), "re": c.real, "im": c.imag}
                for J, L, c in self.violations
            ],
        }


def verify_gauge_rule(P: Poly) -> MonomialReport:
    """Monomials with sum(L) != sum(J), i.e. not commuting with the L^2 mass."""
    rep = MonomialReport("gauge: sum(L - J) = 0")
    n = P.n
    for key, c in P.terms.items():
        rep.checked += 1
        if sum(key[n:]) != sum(key[:n]):
            J, L = P.split_key(key)
            rep.violations.append((J, L, c))
    return rep


def verify_level_balance(P: Poly) -> MonomialReport:
    """Monomials whose level sums of (L - J) do not all vanish (zero level included)."""
    rep = MonomialReport("levelwise: sum over each level of (L - J) = 0, including L_0 = J_0")
    for key, c in P.terms.items():
        rep.checked += 1
        J, L = P.split_key(key)
        if _levels(L - J):
            rep.violations.append((J, L, c))
    return rep


@dataclass
class CommutationReport:
    level: int
    max_coeff: float
    tol: float
    bracket_terms: int

    @property
    def passed(self) -> bool:
        return self.max_coeff <= self.tol


def verify_action_commutation(Z: Poly, j: int, freqs: FrequencyTable | None = None,
                              tol: float = 1e-12) -> CommutationReport:
    """Symbolic {Z, I_j}; passes when every coefficient is at most ``tol``."""
    I_j = Poly.level_action(Z.modes, j)
    br = poisson_bracket_poly(Z, I_j, prune=False)
    return CommutationReport(j, br.max_abs(), tol, len(br))


def action_frequencies(Z: Poly, freqs: FrequencyTable, mode_actions: Mapping[int, float]) -> dict[int, float]:
    """omega_m + dZ/dI_m for the action-only part of Z (monomials with J = L)."""
    n = Z.n
    shift = {m: 0.0 for m in Z.modes}
    for key, c in Z.terms.items():
        if key[:n] != key[n:]:
            continue
        for i, m in enumerate(Z.modes):
            e = key[i]
            if not e:
                continue
            val = c.real * e
            for i2, m2 in enumerate(Z.modes):
                p = key[i2] - (1 if i2 == i else 0)
                if p:
                    val *= mode_actions.get(m2, 0.0) ** p
            shift[m] += val
    return {m: freqs.omega(abs(m)) + shift[m] for m in Z.modes}
