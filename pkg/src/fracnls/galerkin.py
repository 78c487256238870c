"""Finite-mode Fourier truncation of the fractional NLS on the circle.

The field is ``psi(x) = (2 pi)^{-1/2} sum_{|k|<=N} xi_k e^{ikx}`` on
``[0, 2 pi)``, so the L^2 mass is exactly ``sum |xi_k|^2``.  The Hamiltonian
is ``sum omega_|k| |xi_k|^2 + int F(|psi|^2) dx`` with ``F' = f`` and
``F(0) = 0``; products are evaluated on a zero-padded collocation grid large
enough that every polynomial integral and projection is exact.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .spectrum import Domain, frequency

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class NonlinearitySpec:
    """Polynomial nonlinearity f(u) = sum_{m>=1} taylor[m-1] * u**m."""

    taylor: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "taylor", tuple(float(a) for a in self.taylor))

    @classmethod
    def cubic(cls, a: float = 1.0) -> "NonlinearitySpec":
        return cls((a,))

    @property
    def degree(self) -> int:
        """Degree p of f, ignoring trailing zero coefficients."""
        p = len(self.taylor)
        while p and self.taylor[p - 1] == 0.0:
            p -= 1
        return p

    @property
    def is_zero(self) -> bool:
        return self.degree == 0

    def f(self, u):
        out = np.zeros_like(u)
        for a in reversed(self.taylor[: self.degree]):
            out = (out + a) * u
        return out

    def antiderivative(self, u):
        """F(u) = sum a_m u^{m+1} / (m+1)."""
        out = np.zeros_like(u)
        for m, a in enumerate(self.taylor[: self.degree], start=1):
            out = out + a * u ** (m + 1) / (m + 1)
        return out


def grid_size(N: int, degree: int) -> int:
    """Smallest power of two >= (p+1)(2N+1), the exact-dealiasing bound.

    A power of two makes the 1/M normalisation of the FFT exact, which
    removes a systematic drift of the L^2 mass over long runs.
    """
    need = (degree + 1) * (2 * N + 1)
    return 1 << (need - 1).bit_length()


@dataclass
class ModeState:
    """Amplitudes xi_k for k = -N..N (stored in that order) at a given time."""

    N: int
    xi: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=complex)
        if self.N < 0 or self.xi.shape != (2 * self.N + 1,):
            raise ValueError(f"expected {2 * self.N + 1} amplitudes for N={self.N}, got {self.xi.shape}")
        if not np.all(np.isfinite(self.xi)):
            raise ValueError("mode amplitudes must be finite")

    @classmethod
    def zeros(cls, N: int) -> "ModeState":
        return cls(N, np.zeros(2 * N + 1, dtype=complex))

    @classmethod
    def from_modes(cls, N: int, modes: dict[int, complex], time: float = 0.0) -> "ModeState":
        xi = np.zeros(2 * N + 1, dtype=complex)
        for k, v in modes.items():
            if abs(k) > N:
                raise ValueError(f"mode {k} outside |k| <= {N}")
            xi[k + N] = v
        return cls(N, xi, time)

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def __getitem__(self, k: int) -> complex:
        return complex(self.xi[k + self.N])

    def copy(self) -> "ModeState":
        return ModeState(self.N, self.xi.copy(), self.time)

    def to_json(self) -> str:
        return json.dumps(
            {"N": self.N, "time": self.time, "xi": [[z.real, z.imag] for z in self.xi.tolist()]}
        )

    @classmethod
    def from_json(cls, text: str) -> "ModeState":
        data = json.loads(text)
        xi = np.array([complex(re, im) for re, im in data["xi"]])
        return cls(int(data["N"]), xi, float(data["time"]))


def mode_frequencies(N: int, s: float) -> np.ndarray:
    """omega_{|k|} = |k|^{2s} for k = -N..N."""
    torus = Domain.torus(1)
    return np.array([frequency(torus, abs(k), s) for k in range(-N, N + 1)])


@dataclass
class Collocation:
    """Zero-padded FFT transform between modes -N..N and M grid values of psi."""

    N: int
    M: int
    _pos: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.M < 2 * self.N + 1:
            raise ValueError(f"grid of {self.M} points cannot hold {2 * self.N + 1} modes")
        # FFT slot of each wavenumber k = -N..N
        self._pos = np.arange(-self.N, self.N + 1) % self.M

    @classmethod
    def for_nonlinearity(cls, N: int, f: NonlinearitySpec) -> "Collocation":
        return cls(N, grid_size(N, f.degree))

    @property
    def nodes(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.M) / self.M

    def synthesize(self, xi: np.ndarray) -> np.ndarray:
        """sqrt(2 pi) psi at the nodes, i.e. sum_k xi_k e^{ikx} (no rounding in the scale)."""
        padded = np.zeros(xi.shape[:-1] + (self.M,), dtype=complex)
        padded[..., self._pos] = xi
        return np.fft.ifft(padded, axis=-1, norm="forward")

    def analyze(self, phi: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`synthesize` restricted to the retained modes."""
        return np.fft.fft(phi, axis=-1, norm="forward")[..., self._pos]

    def to_grid(self, xi: np.ndarray) -> np.ndarray:
        return self.synthesize(xi) / SQRT_2PI

    def to_modes(self, psi: np.ndarray) -> np.ndarray:
        return self.analyze(psi) * SQRT_2PI

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Trapezoidal integral over [0, 2 pi); exact for trig polynomials of degree < M."""
        return values.sum(axis=-1).real * (2.0 * np.pi / self.M)


def _check_s(s: float):
    if not s > 0.5:
        raise ValueError(f"s must exceed 1/2, got {s!r}")


def hamiltonian(state: ModeState, s: float, f: NonlinearitySpec) -> float:
    _check_s(s)
    omega = mode_frequencies(state.N, s)
    h0 = float(np.sum(omega * np.abs(state.xi) ** 2))
    if f.is_zero:
        return h0
    col = Collocation.for_nonlinearity(state.N, f)
    u = np.abs(col.to_grid(state.xi)) ** 2
    return h0 + float(col.integrate(f.antiderivative(u)))


def nonlinear_term(xi: np.ndarray, f: NonlinearitySpec, col: Collocation) -> np.ndarray:
    """Retained Fourier coefficients of f(|psi|^2) psi."""
    phi = col.synthesize(xi)
    return col.analyze(f.f(np.abs(phi) ** 2 / (2.0 * np.pi)) * phi)


def vector_field(state: ModeState, s: float, f: NonlinearitySpec) -> np.ndarray:
    """d xi_k / dt = -i (omega_|k| xi_k + [f(|psi|^2) psi]_k)."""
    _check_s(s)
    rhs = mode_frequencies(state.N, s) * state.xi
    if not f.is_zero:
        rhs = rhs + nonlinear_term(state.xi, f, Collocation.for_nonlinearity(state.N, f))
    return -1j * rhs


def actions(state: ModeState) -> np.ndarray:
    """Level actions I_0 = |xi_0|^2, I_j = |xi_j|^2 + |xi_-j|^2."""
    return level_actions(state.xi, state.N)


def level_actions(xi: np.ndarray, N: int) -> np.ndarray:
    power = np.abs(xi) ** 2
    out = power[..., N:].copy()
    out[..., 1:] += power[..., :N][..., ::-1]
    return out


def gauge_invariant(state: ModeState) -> float:
    """L^2 mass Gamma = sum_k |xi_k|^2."""
    return float(np.sum(np.abs(state.xi) ** 2))


def sobolev_weights(N: int, r: float) -> np.ndarray:
    """1 + |k|^{2r} per mode, with the zero mode weighted 1 for r > 0."""
    if r < 0:
        raise ValueError("Sobolev index must be non-negative")
    k = np.abs(np.arange(-N, N + 1)).astype(float)
    return 1.0 + k ** (2.0 * r)


def sobolev_norm(state: ModeState, r: float) -> float:
    return float(np.sqrt(np.sum(sobolev_weights(state.N, r) * np.abs(state.xi) ** 2)))


@dataclass(frozen=True)
class Observables:
    time: float
    gamma: float
    actions: np.ndarray
    h_total: float
    sobolev_r: float

    def csv_row(self) -> list[float]:
        return [self.time, self.gamma, self.h_total, self.sobolev_r, *self.actions.tolist()]


def observe(state: ModeState, s: float, f: NonlinearitySpec, r: float) -> Observables:
    return Observables(
        time=state.time,
        gamma=gauge_invariant(state),
        actions=actions(state),
        h_total=hamiltonian(state, s, f),
        sobolev_r=sobolev_norm(state, r),
    )


def observables_header(N: int) -> list[str]:
    return ["time", "gamma", "H", "sobolev_r", *[f"I_{j}" for j in range(N + 1)]]


# ---------------------------------------------------------------------------
# numerical Poisson bracket


def _wirtinger(F: Callable[[ModeState], float], state: ModeState, h: float):
    """(dF/dxi_m, dF/deta_m) on the real subspace eta = conj(xi), by central differences."""
    n = state.xi.size
    d_xi = np.empty(n, dtype=complex)
    d_eta = np.empty(n, dtype=complex)
    for m in range(n):
        partial = []
        for step in (h, 1j * h):
            plus, minus = state.copy(), state.copy()
            plus.xi[m] += step
            minus.xi[m] -= step
            partial.append((F(plus) - F(minus)) / (2.0 * h))
        dx, dy = partial
        if not (np.isfinite(dx) and np.isfinite(dy)):
            raise FloatingPointError(f"non-finite derivative at mode index {m}")
        d_xi[m] = 0.5 * (dx - 1j * dy)
        d_eta[m] = 0.5 * (dx + 1j * dy)
    return d_xi, d_eta


def poisson_bracket_numeric(
    F: Callable[[ModeState], float],
    G: Callable[[ModeState], float],
    state: ModeState,
    h: float = 1e-6,
) -> float:
    """{F; G} = i sum_m (dF/deta_m dG/dxi_m - dF/dxi_m dG/deta_m) for real observables."""
    fx, _ = _wirtinger(F, state, h)
    gx, _ = _wirtinger(G, state, h)
    # for real F, G the eta-derivatives are conjugates, and the bracket reduces to
    # -2 Im sum conj(dF/dxi) dG/dxi; spelled out in real arithmetic so {F, F} is exactly 0
    value = -2.0 * float(np.sum(fx.real * gx.imag - fx.imag * gx.real))
    if not np.isfinite(value):
        raise FloatingPointError("non-finite Poisson bracket")
    return value


def random_state(N: int, eps: float, r: float, rng: np.random.Generator) -> ModeState:
    """Random datum with ||psi_0||_{H^r} = eps and amplitudes (1+|k|)^{-r-1}.

    Phases are drawn uniformly from ``rng``.
    """
    k = np.abs(np.arange(-N, N + 1))
    rho = (1.0 + k) ** (-r - 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=2 * N + 1)
    xi = rho * np.exp(1j * phi)
    state = ModeState(N, xi)
    if eps == 0.0:
        return ModeState.zeros(N)
    return ModeState(N, xi * (eps / sobolev_norm(state, r)))

