import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracnls.galerkin import (
    Collocation,
    ModeState,
    NonlinearitySpec,
    actions,
    gauge_invariant,
    grid_size,
    hamiltonian,
    level_actions,
    observables_header,
    observe,
    poisson_bracket_numeric,
    random_state,
    sobolev_norm,
    vector_field,
)

CUBIC = NonlinearitySpec.cubic()
ZERO = NonlinearitySpec(())
TWO_PI = 2 * math.pi


def rand_state(N, rng, scale=0.5):
    xi = rng.normal(size=2 * N + 1) + 1j * rng.normal(size=2 * N + 1)
    return ModeState(N, scale * xi / np.linalg.norm(xi))


def fd_gradient(F, state, h=1e-6):
    """Central-difference derivatives of F in Re xi_k and Im xi_k."""
    gr, gi = np.zeros(state.xi.size), np.zeros(state.xi.size)
    for m in range(state.xi.size):
        for out, step in ((gr, h), (gi, 1j * h)):
            p, q = state.copy(), state.copy()
            p.xi[m] += step
            q.xi[m] -= step
            out[m] = (F(p) - F(q)) / (2 * h)
    return gr, gi


def test_grid_size_is_dealiasing_power_of_two():
    assert grid_size(32, 1) == 256  # 2 * 65 = 130 -> 256
    assert grid_size(2, 1) == 16
    assert grid_size(0, 0) == 1
    for N in range(0, 20):
        for p in range(0, 4):
            M = grid_size(N, p)
            assert M >= (p + 1) * (2 * N + 1) and M & (M - 1) == 0


def test_nonlinearity_spec():
    f = NonlinearitySpec((1.0, 0.5, 0.0))
    assert f.degree == 2
    u = np.array([0.0, 1.0, 2.0])
    assert np.allclose(f.f(u), u + 0.5 * u**2)
    assert np.allclose(f.antiderivative(u), u**2 / 2 + 0.5 * u**3 / 3)
    assert ZERO.is_zero


class TestHamiltonian:
    def test_zero_field(self):
        assert hamiltonian(ModeState.zeros(3), 0.75, CUBIC) == 0.0

    def test_constant_mode(self):
        c = 0.7 - 0.2j
        expected = 0.5 * abs(c) ** 4 / TWO_PI
        assert hamiltonian(ModeState.from_modes(2, {0: c}), 0.9, CUBIC) == pytest.approx(expected, rel=1e-14)

    def test_single_plane_wave(self):
        c = 1.3
        expected = c**2 + 0.5 * c**4 / TWO_PI
        assert hamiltonian(ModeState.from_modes(3, {1: c}), 1.0, CUBIC) == pytest.approx(expected, rel=1e-14)

    def test_quadrature_against_fine_grid(self):
        rng = np.random.default_rng(5)
        state = rand_state(4, rng)
        x = np.linspace(0, TWO_PI, 4000, endpoint=False)
        psi = (np.exp(1j * np.outer(x, state.wavenumbers)) @ state.xi) / math.sqrt(TWO_PI)
        quartic = 0.5 * np.sum(np.abs(psi) ** 4) * TWO_PI / len(x)
        h0 = np.sum(np.abs(state.wavenumbers) ** 1.5 * np.abs(state.xi) ** 2)
        assert hamiltonian(state, 0.75, CUBIC) == pytest.approx(h0 + quartic, rel=1e-12)


class TestVectorField:
    def test_zero(self):
        assert np.all(vector_field(ModeState.zeros(2), 0.8, CUBIC) == 0)

    def test_linear_rotation(self):
        v = vector_field(ModeState.from_modes(2, {1: 1.0}), 1.0, ZERO)
        assert v[3] == -1j and np.count_nonzero(v) == 1

    @pytest.mark.parametrize(
        "state",
        [
            ModeState.from_modes(1, {0: 1.0, 1: 1.0}),
            rand_state(3, np.random.default_rng(0), 1.0),
            rand_state(8, np.random.default_rng(1), 1.0),
        ],
    )
    def test_hamilton_equations(self, state):
        # dxi/dt = -i dH/d(conj xi) = -i (dH/dRe + i dH/dIm) / 2
        gr, gi = fd_gradient(lambda st: hamiltonian(st, 1.0, CUBIC), state)
        expected = -0.5j * (gr + 1j * gi)
        assert np.max(np.abs(vector_field(state, 1.0, CUBIC) - expected)) < 1e-8

    def test_mass_and_energy_stationary(self):
        state = rand_state(6, np.random.default_rng(2), 1.0)
        v = vector_field(state, 0.75, CUBIC)
        assert abs(2 * np.real(np.vdot(state.xi, v))) < 1e-14
        h = 1e-5
        forward = ModeState(6, state.xi + h * v)
        backward = ModeState(6, state.xi - h * v)
        dH = (hamiltonian(forward, 0.75, CUBIC) - hamiltonian(backward, 0.75, CUBIC)) / (2 * h)
        assert abs(dH) < 1e-8


class TestActionsAndNorms:
    def test_actions_examples(self):
        assert np.array_equal(actions(ModeState.from_modes(4, {3: 3j})), [0, 0, 0, 9, 0])
        assert actions(ModeState.from_modes(2, {1: 1, -1: 2}))[1] == 5

    def test_actions_sum_to_mass(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            state = rand_state(7, rng)
            assert math.fsum(actions(state)) == pytest.approx(gauge_invariant(state), rel=1e-15)

    def test_batched_level_actions(self):
        rng = np.random.default_rng(4)
        batch = np.stack([rand_state(3, rng).xi for _ in range(4)])
        assert np.allclose(level_actions(batch, 3)[2], actions(ModeState(3, batch[2])))

    def test_mass_examples(self):
        assert gauge_invariant(ModeState.zeros(3)) == 0
        assert gauge_invariant(ModeState.from_modes(1, {0: 3})) == 9

    def test_parseval(self):
        state = rand_state(5, np.random.default_rng(6))
        col = Collocation.for_nonlinearity(5, CUBIC)
        quad = col.integrate(np.abs(col.to_grid(state.xi)) ** 2)
        assert quad == pytest.approx(gauge_invariant(state), rel=1e-12)

    @pytest.mark.parametrize(
        "modes, r, expected",
        [({0: 2}, 7.0, 2.0), ({2: 1}, 1.0, math.sqrt(5)), ({1: 1, -1: 1}, 2.0, 2.0)],
    )
    def test_sobolev(self, modes, r, expected):
        assert sobolev_norm(ModeState.from_modes(3, modes), r) == pytest.approx(expected, rel=1e-15)

    @pytest.mark.parametrize("theta", [0.3, 1.0, 2.7])
    def test_phase_invariance(self, theta):
        state = rand_state(5, np.random.default_rng(7))
        rotated = ModeState(5, state.xi * np.exp(1j * theta))
        a, b = observe(state, 0.75, CUBIC, 4.0), observe(rotated, 0.75, CUBIC, 4.0)
        assert b.h_total == pytest.approx(a.h_total, rel=1e-12)
        assert b.gamma == pytest.approx(a.gamma, rel=1e-12)
        assert b.sobolev_r == pytest.approx(a.sobolev_r, rel=1e-12)
        assert np.allclose(b.actions, a.actions, rtol=1e-12, atol=0)


class TestPoissonBracket:
    def test_mass_commutes_with_energy(self):
        rng = np.random.default_rng(8)
        for _ in range(3):
            state = rand_state(3, rng, 1.0)
            assert abs(poisson_bracket_numeric(gauge_invariant, lambda st: hamiltonian(st, 0.75, CUBIC), state)) < 1e-6

    def test_antisymmetry(self):
        state = rand_state(2, np.random.default_rng(9))
        H = lambda st: hamiltonian(st, 0.75, CUBIC)  # noqa: E731
        assert poisson_bracket_numeric(H, H, state) == 0.0

    def test_action_commutes_with_quadratic_part(self):
        state = rand_state(3, np.random.default_rng(10), 1.0)
        I1 = lambda st: actions(st)[1]  # noqa: E731
        H0 = lambda st: hamiltonian(st, 0.75, ZERO)  # noqa: E731
        assert abs(poisson_bracket_numeric(I1, H0, state)) < 1e-8

    def test_bracket_generates_flow(self):
        # {F, H} = dF/dt along the Hamiltonian vector field
        state = rand_state(2, np.random.default_rng(11), 1.0)
        F = lambda st: float(np.real(st.xi[3]))  # noqa: E731
        rate = np.real(vector_field(state, 0.75, CUBIC)[3])
        assert poisson_bracket_numeric(F, lambda st: hamiltonian(st, 0.75, CUBIC), state) == pytest.approx(rate, abs=1e-8)


class TestModeState:
    def test_json_round_trip(self):
        state = rand_state(3, np.random.default_rng(12))
        state.time = 2.5
        back = ModeState.from_json(state.to_json())
        assert back.N == 3 and back.time == 2.5 and np.array_equal(back.xi, state.xi)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            ModeState(2, np.zeros(4))
        with pytest.raises(ValueError):
            ModeState(1, np.array([0, np.nan, 0]))
        with pytest.raises(ValueError):
            ModeState.from_modes(1, {2: 1.0})

    def test_header(self):
        assert observables_header(2) == ["time", "gamma", "H", "sobolev_r", "I_0", "I_1", "I_2"]


@settings(max_examples=30, deadline=None)
@given(N=st.integers(0, 12), eps=st.floats(1e-4, 2.0), r=st.floats(0.0, 5.0), seed=st.integers(0, 2**31))
def test_random_state_normalized(N, eps, r, seed):
    state = random_state(N, eps, r, np.random.default_rng(seed))
    assert sobolev_norm(state, r) == pytest.approx(eps, rel=1e-12)
    ratio = np.abs(state.xi[N:]) / np.abs(state.xi[N])
    assert np.allclose(ratio, (1.0 + np.arange(N + 1)) ** (-r - 1))
