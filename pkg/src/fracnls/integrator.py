"""Split-step propagation of the Galerkin system and a Runge-Kutta reference solver.

Both splitting substeps are exact flows: the linear part is a phase rotation
of each mode, the nonlinear part a pointwise phase rotation of psi on the
collocation grid (|psi(x)| is constant along dpsi/dt = -i f(|psi|^2) psi).
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .galerkin import (
    Collocation,
    ModeState,
    NonlinearitySpec,
    hamiltonian,
    level_actions,
    mode_frequencies,
    observables_header,
    sobolev_weights,
    vector_field,
)


_INV_2PI = 1.0 / (2.0 * math.pi)


class Scheme(str, enum.Enum):
    LIE = "lie"
    STRANG = "strang"


class OracleError(RuntimeError):
    pass


def _phase_kick(xi: np.ndarray, f: NonlinearitySpec, col: Collocation, dt: float) -> np.ndarray:
    if f.is_zero:
        return xi
    # |psi|^2 = |phi|^2 / 2pi; working with phi keeps the round trip scale-exact
    phi = col.synthesize(xi)
    phi *= np.exp(-1j * dt * f.f((phi.real**2 + phi.imag**2) * _INV_2PI))
    return col.analyze(phi)


class SplitStepper:
    """Substep kernels for a fixed (N, s, f); works on arrays of shape (..., 2N+1)."""

    def __init__(self, N: int, s: float, f: NonlinearitySpec):
        if not s > 0.5:
            raise ValueError(f"s must exceed 1/2, got {s!r}")
        self.N, self.s, self.f = N, s, f
        self.omega = mode_frequencies(N, s)
        self.col = Collocation.for_nonlinearity(N, f)

    def linear(self, xi: np.ndarray, dt: float) -> np.ndarray:
        return xi * np.exp(-1j * self.omega * dt)

    def nonlinear(self, xi: np.ndarray, dt: float) -> np.ndarray:
        return _phase_kick(xi, self.f, self.col, dt)

    def step(self, xi: np.ndarray, dt: float, scheme: Scheme = Scheme.STRANG) -> np.ndarray:
        if scheme is Scheme.LIE:
            return self.linear(self.nonlinear(xi, dt), dt)
        half = self.linear(xi, 0.5 * dt)
        return self.linear(self.nonlinear(half, dt), 0.5 * dt)

    def advance(self, xi: np.ndarray, dt: float, n: int, scheme: Scheme = Scheme.STRANG) -> np.ndarray:
        """``n`` steps; for Strang, adjacent half rotations are merged into one."""
        if n <= 0:
            return xi
        if scheme is Scheme.LIE or self.f.is_zero:
            if self.f.is_zero:
                return self.linear(xi, n * dt)
            for _ in range(n):
                xi = self.step(xi, dt, scheme)
            return xi
        full = np.exp(-1j * self.omega * dt)
        xi = self.nonlinear(self.linear(xi, 0.5 * dt), dt)
        for _ in range(n - 1):
            xi = self.nonlinear(xi * full, dt)
        return self.linear(xi, 0.5 * dt)


def linear_flow(state: ModeState, s: float, dt: float) -> ModeState:
    """xi_k <- exp(-i omega_|k| dt) xi_k."""
    omega = mode_frequencies(state.N, s)
    return ModeState(state.N, state.xi * np.exp(-1j * omega * dt), state.time + dt)


def nonlinear_flow(state: ModeState, f: NonlinearitySpec, dt: float) -> ModeState:
    """psi(x) <- exp(-i f(|psi(x)|^2) dt) psi(x) on the grid, projected back to |k| <= N."""
    xi = _phase_kick(state.xi.copy(), f, Collocation.for_nonlinearity(state.N, f), dt)
    return ModeState(state.N, xi, state.time + dt)


def strang_step(state: ModeState, s: float, f: NonlinearitySpec, dt: float) -> ModeState:
    xi = SplitStepper(state.N, s, f).step(state.xi, dt, Scheme.STRANG)
    return ModeState(state.N, xi, state.time + dt)


def lie_step(state: ModeState, s: float, f: NonlinearitySpec, dt: float) -> ModeState:
    xi = SplitStepper(state.N, s, f).step(state.xi, dt, Scheme.LIE)
    return ModeState(state.N, xi, state.time + dt)


@dataclass(frozen=True)
class StepPlan:
    dt: float
    T_end: float
    observer_stride: int = 1
    scheme: Scheme = Scheme.STRANG
    r: float = 4.0
    blowup_factor: float = 1e6
    max_steps: int = 10**9

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.observer_stride < 1:
            raise ValueError("observer_stride must be >= 1")
        if self.T_end < 0:
            raise ValueError("T_end must be non-negative")
        if self.n_steps > self.max_steps:
            raise ValueError(f"{self.n_steps} steps exceed the budget of {self.max_steps}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T_end / self.dt))


@dataclass
class Trajectory:
    N: int
    times: np.ndarray
    gamma: np.ndarray
    energy: np.ndarray
    sobolev: np.ndarray
    actions: np.ndarray
    final: ModeState
    eps: float = 0.0
    abort_reason: Optional[str] = None
    steps_taken: int = 0

    @property
    def exceeded_2eps(self) -> np.ndarray:
        return self.sobolev >= 2.0 * self.eps if self.eps > 0 else np.zeros(len(self.times), bool)

    def header(self) -> list[str]:
        return ["t", *observables_header(self.N)[1:], "exceeded_2eps"]

    def rows(self):
        flags = self.exceeded_2eps
        for i, t in enumerate(self.times):
            yield [
                float(t), float(self.gamma[i]), float(self.energy[i]), float(self.sobolev[i]),
                *map(float, self.actions[i]), int(flags[i]),
            ]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for row in self.rows():
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def evolve(state: ModeState, s: float, f: NonlinearitySpec, plan: StepPlan) -> Trajectory:
    """Fixed-step splitting run with observables every ``observer_stride`` steps.

    Stops early, keeping the partial trajectory, on a non-finite state or when
    the H^r norm exceeds ``blowup_factor`` times its initial value.
    """
    stepper = SplitStepper(state.N, s, f)
    weights = sobolev_weights(state.N, plan.r)
    xi = state.xi.copy()
    t0 = state.time
    norm0 = float(np.sqrt(np.sum(weights * np.abs(xi) ** 2)))

    times, gam, ener, sob, act = [], [], [], [], []

    def record(x, t):
        p = np.abs(x) ** 2
        times.append(t)
        gam.append(p.sum())
        sob.append(math.sqrt(float(np.sum(weights * p))))
        act.append(level_actions(x, state.N))
        ener.append(hamiltonian(ModeState(state.N, x), s, f))

    record(xi, t0)
    done, abort = 0, None
    n_total = plan.n_steps
    while done < n_total:
        chunk = min(plan.observer_stride, n_total - done)
        nxt = stepper.advance(xi, plan.dt, chunk, plan.scheme)
        if not np.all(np.isfinite(nxt)):
            abort = f"non-finite amplitudes within steps {done}..{done + chunk}"
            break
        xi = nxt
        done += chunk
        record(xi, t0 + done * plan.dt)
        if norm0 > 0 and sob[-1] > plan.blowup_factor * norm0:
            abort = f"H^{plan.r} norm exceeded {plan.blowup_factor:g} x initial after {done} steps"
            break

    final = ModeState(state.N, xi, t0 + done * plan.dt)
    return Trajectory(
        N=state.N,
        times=np.array(times),
        gamma=np.array(gam),
        energy=np.array(ener),
        sobolev=np.array(sob),
        actions=np.array(act),
        final=final,
        eps=norm0,
        abort_reason=abort,
        steps_taken=done,
    )


@dataclass
class ExitTimes:
    """First sampled time each batch member reaches twice its initial H^r norm."""

    eps: np.ndarray
    exit_time: np.ndarray  # nan where censored
    t_max: float
    resolution: float
    max_ratio: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def censored(self) -> np.ndarray:
        return np.isnan(self.exit_time)


def exit_times(
    xi0: np.ndarray,
    s: float,
    f: NonlinearitySpec,
    dt: float,
    t_max: float,
    r: float,
    stride: int = 10,
    scheme: Scheme = Scheme.STRANG,
) -> ExitTimes:
    """Propagate a batch of initial data (rows of ``xi0``) and record exit times.

    All rows share one FFT per step; finished rows keep being propagated (their
    exit time is already fixed) so the batch stays rectangular.
    """
    xi = np.atleast_2d(np.asarray(xi0, dtype=complex)).copy()
    N = (xi.shape[1] - 1) // 2
    stepper = SplitStepper(N, s, f)
    weights = sobolev_weights(N, r)
    eps = np.sqrt(np.sum(weights * np.abs(xi) ** 2, axis=1))
    out = np.full(len(eps), np.nan)
    max_ratio = np.ones(len(eps))
    n_total = int(round(t_max / dt))
    done = 0
    while done < n_total and np.isnan(out).any():
        chunk = min(stride, n_total - done)
        xi = stepper.advance(xi, dt, chunk, scheme)
        done += chunk
        norm = np.sqrt(np.sum(weights * np.abs(xi) ** 2, axis=1))
        ratio = norm / np.where(eps > 0, eps, 1.0)
        max_ratio = np.maximum(max_ratio, ratio)
        hit = np.isnan(out) & (eps > 0) & ((norm >= 2.0 * eps) | ~np.isfinite(norm))
        out[hit] = done * dt
    return ExitTimes(eps, out, t_max, stride * dt, max_ratio)


def ode_oracle(
    state: ModeState, s: float, f: NonlinearitySpec, T: float, tol: float = 1e-10
) -> ModeState:
    """Adaptive 8th-order Dormand-Prince integration of the Galerkin vector field."""
    n = 2 * state.N + 1
    if n > 16:
        raise ValueError(f"oracle limited to 2N+1 <= 16 modes, got {n}")
    if not 1e-12 <= tol <= 1e-6:
        raise ValueError(f"tol must lie in [1e-12, 1e-6], got {tol!r}")
    if T == 0:
        return state.copy()
    N = state.N

    def rhs(_t, y):
        xi = y[:n] + 1j * y[n:]
        dxi = vector_field(ModeState(N, xi), s, f)
        return np.concatenate([dxi.real, dxi.imag])

    y0 = np.concatenate([state.xi.real, state.xi.imag])
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", rtol=tol, atol=tol)
    if sol.status != 0:
        raise OracleError(f"reference integration failed at t={sol.t[-1]!r}: {sol.message}")
    y = sol.y[:, -1]
    return ModeState(N, y[:n] + 1j * y[n:], state.time + T)
