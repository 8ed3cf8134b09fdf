import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from neuradr import (
    Activation,
    DenseKernel,
    DivergenceError,
    Field,
    GridMismatchError,
    RelaxConfig,
    assemble_adr_stencil,
    evolve,
    find_attractor,
    identity_kernel,
    liouvillean_residual,
    local_equilibrium,
    make_uniform_grid,
    norm,
    relaxation_step,
    weight_transform,
)
from neuradr.kernels import TridiagonalKernel


def zeros(g):
    return Field(g, np.zeros(g.n))


def rk4(rhs, z0, dt, n_steps):
    out = [np.array(z0, dtype=float)]
    z = out[0]
    for _ in range(n_steps):
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * dt * k1)
        k3 = rhs(z + 0.5 * dt * k2)
        k4 = rhs(z + dt * k3)
        z = z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(z)
    return np.array(out)


def test_weight_transform_examples():
    g3 = make_uniform_grid(3, 1.0)
    z = Field(g3, [1, 2, 3])
    assert weight_transform(identity_kernel(g3), z, zeros(g3)) == z
    shift = TridiagonalKernel(np.zeros(3), np.zeros(3), np.ones(3), g3)
    assert weight_transform(shift, z, zeros(g3)).values.tolist() == [2, 3, 1]
    g2 = make_uniform_grid(2, 1.0)
    one = Field(g2, [1, 1])
    assert weight_transform(identity_kernel(g2), one, one).values.tolist() == [0, 0]


def test_grid_mismatch():
    g, h = make_uniform_grid(3, 1.0), make_uniform_grid(3, 0.5)
    with pytest.raises(GridMismatchError):
        weight_transform(identity_kernel(h), zeros(g), zeros(g))
    with pytest.raises(GridMismatchError):
        weight_transform(identity_kernel(g), zeros(g), zeros(h))


def test_local_equilibrium_examples():
    g = make_uniform_grid(2, 1.0)
    assert local_equilibrium(Activation.SQUARE, Field(g, [0.5, -2])).values.tolist() == [0.25, 4]
    assert local_equilibrium(Activation.RELU, Field(g, [-3, 0.5])).values.tolist() == [0, 0.5]
    Z = Field(g, [0.1, -7])
    assert local_equilibrium(Activation.IDENTITY, Z) == Z


def test_liouvillean_examples():
    g = make_uniform_grid(2, 1.0)
    I = identity_kernel(g)
    assert not liouvillean_residual(zeros(g), I, zeros(g), "tanh").values.any()
    assert not liouvillean_residual(Field(g, [3, -1]), I, zeros(g), "identity").values.any()
    assert not liouvillean_residual(Field(g, [1, 1]), I, zeros(g), "square").values.any()


def test_relaxation_step_examples():
    g = make_uniform_grid(2, 1.0)
    I = identity_kernel(g)
    z = Field(g, [1, 2])
    assert relaxation_step(z, I, zeros(g), "identity", 0.5) == z
    out = relaxation_step(Field(g, [0.5, 0.5]), I, zeros(g), "square", 1.0)
    assert out.values.tolist() == [0.25, 0.25]


def test_relaxation_step_validates():
    g = make_uniform_grid(2, 1.0)
    with pytest.raises(ValueError):
        relaxation_step(zeros(g), identity_kernel(g), zeros(g), "tanh", 1.5)
    with pytest.raises(ValueError):
        relaxation_step(zeros(g), identity_kernel(g), zeros(g), "tanh", 0.5, norm_coupling=-1)


def test_relaxation_step_divergence_names_step():
    g = make_uniform_grid(2, 1.0)
    big = DenseKernel(np.full((2, 2), 1e200), g)
    with pytest.raises(DivergenceError) as exc:
        relaxation_step(Field(g, [1e200, 1e200]), big, zeros(g), "square", 1.0, step=7)
    assert exc.value.step == 7


def test_evolve_reports_divergence_step():
    g = make_uniform_grid(4, 1.0)
    x = Field(g, np.full(4, 10.0))
    with pytest.raises(DivergenceError) as exc:
        evolve(x, identity_kernel(g), zeros(g), "square", RelaxConfig(1.0, 20))
    # 10 ** (2 ** t) overflows a double at t = 9
    assert exc.value.step == 9


def test_relax_config_validation():
    for kw in ({"omega": 0.0}, {"omega": 1.01}, {"steps": 0}, {"norm_coupling": -0.1}):
        with pytest.raises(ValueError):
            RelaxConfig(**kw)


@pytest.mark.parametrize("f", list(Activation))
def test_omega_one_is_composed_forward_pass(rng, f):
    g = make_uniform_grid(12, 1.0)
    W = DenseKernel(rng.normal(scale=0.3, size=(12, 12)), g)
    b = Field(g, rng.normal(scale=0.1, size=12))
    x = Field(g, rng.random(12))
    traj = evolve(x, W, b, f, RelaxConfig(1.0, 5))
    z = x.values
    for t in range(5):
        z = f(W.matrix @ z - b.values)
        assert np.array_equal(traj.values[t + 1], z)


def test_time_varying_kernels(rng):
    g = make_uniform_grid(6, 1.0)
    Ws = [DenseKernel(rng.normal(scale=0.4, size=(6, 6)), g) for _ in range(3)]
    x = Field(g, rng.random(6))
    traj = evolve(x, Ws, zeros(g), "tanh", RelaxConfig(0.5, 3))
    z = x.values
    for t, W in enumerate(Ws):
        z = 0.5 * z + 0.5 * np.tanh(W.matrix @ z)
        np.testing.assert_allclose(traj.values[t + 1], z, rtol=1e-13, atol=1e-15)
    with pytest.raises(ValueError):
        evolve(x, Ws, zeros(g), "tanh", RelaxConfig(0.5, 4))


@given(arrays(float, 6, elements=st.floats(-5, 5)), st.floats(0.01, 1.0))
def test_identity_case_constant(x, omega):
    g = make_uniform_grid(6, 0.5)
    traj = evolve(Field(g, x), identity_kernel(g), zeros(g), "identity", RelaxConfig(omega, 7))
    assert np.all(traj.values == x)


@given(
    arrays(float, 8, elements=st.floats(-1, 1)),
    arrays(float, 8, elements=st.floats(-1, 1)),
    st.floats(-3, 3),
    st.floats(0.1, 1.0),
)
@settings(max_examples=50)
def test_linear_case_superposition_and_rescaling(x1, x2, lam, omega):
    g = make_uniform_grid(8, 1.0)
    W = assemble_adr_stencil(0.3, 0.2, -0.1, g)
    cfg = RelaxConfig(omega, 6)

    def run(x):
        return evolve(Field(g, x), W, zeros(g), "identity", cfg).values

    scale = 1 + np.max(np.abs(run(x1))) + np.max(np.abs(run(x2)))
    np.testing.assert_allclose(run(lam * x1), lam * run(x1), rtol=1e-12, atol=1e-12 * abs(lam) * scale)
    np.testing.assert_allclose(run(x1 + x2), run(x1) + run(x2), rtol=1e-12, atol=1e-12 * scale)


def test_local_ode_preserves_piecewise_constant():
    g = make_uniform_grid(12, 1.0)
    x = np.where(g.nodes < 6, 0.5, 0.8)
    traj = evolve(Field(g, x), identity_kernel(g), zeros(g), "square", RelaxConfig(0.1, 40))
    for row in traj.values:
        assert np.all(row[:6] == row[0]) and np.all(row[6:] == row[6])


def test_logistic_decays_monotonically_and_tracks_rk4():
    g = make_uniform_grid(4, 1.0)
    omega, steps = 0.1, 100
    traj = evolve(Field(g, np.full(4, 0.5)), identity_kernel(g), zeros(g), "square", RelaxConfig(omega, steps))
    z = traj.values[:, 0]
    assert np.all(np.diff(z) < 0) and z[-1] > 0
    # first-order Euler vs a fine RK4 reference, with gamma = 1 and dt = omega
    ref = rk4(lambda u: -(u - u * u), [0.5], omega / 10, steps * 10)[::10, 0]
    assert np.max(np.abs(z - ref)) < 0.01


def test_attractor_exact_fixed_point():
    g = make_uniform_grid(3, 1.0)
    res = find_attractor(zeros(g), identity_kernel(g), zeros(g), "tanh", tol=1e-12)
    assert res.converged and res.iterations == 0 and res.residual == 0.0


def test_attractor_linear_worked_example():
    g = make_uniform_grid(2, 1.0)
    W = DenseKernel([[0, 0.5], [0.5, 0]], g)
    b = Field(g, [-0.5, -0.5])
    res = find_attractor(zeros(g), W, b, "identity", tol=1e-13, max_iters=1000)
    assert res.converged
    np.testing.assert_allclose(res.z_star.values, [1, 1], atol=1e-12)
    np.testing.assert_allclose(np.linalg.solve(W.matrix - np.eye(2), b.values), [1, 1])


def test_attractor_logistic_goes_to_zero():
    g = make_uniform_grid(3, 1.0)
    res = find_attractor(Field(g, np.full(3, 0.5)), identity_kernel(g), zeros(g), "square", omega=0.5, tol=1e-10)
    assert res.converged
    assert np.max(np.abs(res.z_star.values)) <= 1e-9


def test_attractor_nonconvergence_vs_divergence():
    g = make_uniform_grid(2, 1.0)
    # a rotation has no attracting fixed point besides 0 when omega = 1
    rot = DenseKernel([[0, 1], [-1, 0]], g)
    res = find_attractor(Field(g, [1.0, 0.0]), rot, zeros(g), "identity", tol=1e-8, max_iters=50)
    assert not res.converged and res.iterations == 50 and res.residual > 1e-8
    with pytest.raises(DivergenceError):
        find_attractor(Field(g, [10.0, 10.0]), identity_kernel(g), zeros(g), "square", tol=1e-8, max_iters=100)


def test_attractor_result_dict():
    g = make_uniform_grid(2, 1.0)
    d = find_attractor(zeros(g), identity_kernel(g), zeros(g), "tanh").to_dict()
    assert set(d) == {"residual", "iterations", "converged", "z_star"}


def test_soft_normalization_pulls_norm_toward_one():
    g = make_uniform_grid(16, 0.5)
    W = identity_kernel(g)
    x = Field(g, np.full(16, 3.0 / np.sqrt(8.0)))  # norm 3
    damped = evolve(x, W, zeros(g), "identity", RelaxConfig(0.2, 30, norm_coupling=1.0))
    free = evolve(x, W, zeros(g), "identity", RelaxConfig(0.2, 30))
    assert norm(free.final) == pytest.approx(3.0)
    dev = [abs(norm(s) - 1) for s in damped.states]
    assert np.all(np.diff(dev) < 0)
    assert dev[-1] < 1e-3


def test_discrete_norm_option():
    g = make_uniform_grid(4, 0.25)
    x = Field(g, np.full(4, 1.0))  # discrete norm 2, integral norm 1
    out = relaxation_step(x, identity_kernel(g), zeros(g), "identity", 1.0, norm_coupling=1.0, norm_kind="discrete")
    np.testing.assert_allclose(out.values, 0.0)
    out = relaxation_step(x, identity_kernel(g), zeros(g), "identity", 1.0, norm_coupling=1.0)
    assert out == x
