import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsbridge.bridge import Gaussian
from qsbridge.mfg import (
    DivergenceError,
    Ellipse,
    Environment,
    MfgConfig,
    PlanningError,
    RRTConfig,
    TrajectoryParams,
    builtin_environment,
    collision,
    collision_fraction,
    init_trajectory,
    kinetic_energy,
    kinetic_energy_grad,
    obstacle_penalty,
    obstacle_penalty_grad,
    optimize,
    path_length,
    potential_energy,
    potential_energy_grad,
    propagate_population,
    rrt_star,
    standardized_paths,
    trajectory_derivatives,
)

EMPTY = Environment((0.0, 20.0, -10.0, 10.0), ())


def random_params(rng, T=20):
    mu = rng.normal(scale=3.0, size=(T + 1, 2))
    ls = rng.normal(scale=0.5, size=(T + 1, 2))
    return TrajectoryParams(mu, ls)


def fd_grad(f, x, h=1e-4):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def assert_grad_close(analytic, numeric, rtol=1e-5):
    scale = np.maximum(np.abs(numeric), 1e-3 * np.max(np.abs(numeric)) + 1e-12)
    assert np.max(np.abs(analytic - numeric) / scale) < rtol


# environment

def test_collision_examples():
    env, start, goal = builtin_environment("s_tunnel")
    assert collision(env, (6.0, -4.5))
    assert collision(env, (-1.0, -11.0))
    assert ((10 - 6) / 2) ** 2 + ((0 + 4.5) / 10) ** 2 == pytest.approx(4.2025)
    assert not collision(env, (10.0, 0.0))
    assert not collision(env, start) and not collision(env, goal)


def test_builtin_geometry():
    env, start, goal = builtin_environment("u_tunnel")
    np.testing.assert_array_equal(goal, [20.0, 4.0])
    assert env.bounds == (0.0, 20.0, -10.0, 10.0)
    assert [o.semi_axes for o in env.obstacles] == [(5.0, 5.0), (5.0, 5.0)]
    with pytest.raises(ValueError, match="unknown environment"):
        builtin_environment("maze")


def test_ellipse_validation_and_roundtrip():
    with pytest.raises(ValueError):
        Ellipse((0.0, 0.0), (0.0, 1.0))
    env, _, _ = builtin_environment("s_tunnel")
    assert Environment.from_dict(env.to_dict()) == env


def test_collision_vectorized_matches_scalar(rng):
    env, _, _ = builtin_environment("s_tunnel")
    P = rng.uniform([-1, -11], [21, 11], size=(500, 2))
    np.testing.assert_array_equal(env.collides(P), [collision(env, p) for p in P])


# rrt

def test_rrt_empty_near_optimal():
    lengths = [rrt_star(EMPTY, (0.0, 0.0), (10.0, 0.0), RRTConfig(max_nodes=1500), s).cost
               for s in range(20)]
    assert np.mean(lengths) <= 1.05 * 10


def test_rrt_goal_equals_start():
    r = rrt_star(EMPTY, (3.0, 3.0), (3.0, 3.0), rng=0)
    assert r.path.shape == (1, 2)


def test_rrt_s_tunnel_collision_free_and_deterministic():
    env, start, goal = builtin_environment("s_tunnel")
    a = rrt_star(env, start, goal, rng=5)
    b = rrt_star(env, start, goal, rng=5)
    np.testing.assert_array_equal(a.path, b.path)
    np.testing.assert_array_equal(a.path[0], start)
    np.testing.assert_array_equal(a.path[-1], goal)
    assert not env.collides(a.path).any()
    # dense segment check
    for p, q in zip(a.path[:-1], a.path[1:]):
        s = np.linspace(0, 1, 200)[:, None]
        assert not env.in_obstacle(p + s * (q - p)).any()
    assert a.cost == pytest.approx(path_length(a.path))


def test_rrt_errors():
    env, start, goal = builtin_environment("s_tunnel")
    with pytest.raises(PlanningError, match="start"):
        rrt_star(env, (6.0, -4.5), goal, rng=0)
    wall = Environment((0.0, 20.0, -10.0, 10.0), (Ellipse((10.0, 0.0), (1.0, 30.0)),))
    with pytest.raises(PlanningError, match="tree of 200"):
        rrt_star(wall, start, goal, RRTConfig(max_nodes=200), rng=0)


# trajectory

def test_init_trajectory_examples():
    p = init_trajectory([[0.0, 0.0], [10.0, 0.0]], 10, 0.5)
    np.testing.assert_allclose(p.mu, np.column_stack([np.arange(11.0), np.zeros(11)]), atol=1e-12)
    np.testing.assert_allclose(p.variances, 0.5)
    e = init_trajectory([[0.0, 0.0], [1.0, 2.0], [5.0, 2.0]], 1, 1.0)
    np.testing.assert_array_equal(e.mu, [[0.0, 0.0], [5.0, 2.0]])
    z = init_trajectory([[1.0, 1.0], [1.0, 1.0]], 4, 1.0)
    np.testing.assert_array_equal(z.mu, np.ones((5, 2)))


def test_init_trajectory_equal_arc_gaps():
    t = np.linspace(0, np.pi, 400)
    curve = np.column_stack([5 * np.cos(t), 3 * np.sin(t)])
    p = init_trajectory(curve, 30, 1.0)
    # gaps measured along the polyline itself
    seg = np.linalg.norm(np.diff(curve, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    idx = [np.argmin(np.abs(np.linalg.norm(curve - m, axis=1))) for m in p.mu]
    arc = []
    for m, i in zip(p.mu, idx):
        j = min(max(i, 1), len(curve) - 1)
        cands = []
        for k in (j - 1, j):
            a, b = curve[k], curve[k + 1] if k + 1 < len(curve) else curve[k]
            d = b - a
            lam = 0.0 if not d.any() else np.clip(np.dot(m - a, d) / np.dot(d, d), 0, 1)
            cands.append((np.linalg.norm(a + lam * d - m), s[k] + lam * seg[k] if k < len(seg) else s[k]))
        arc.append(min(cands)[1])
    gaps = np.diff(arc)
    assert np.max(np.abs(gaps - gaps.mean())) < 1e-9


def test_derivatives(rng):
    const = TrajectoryParams(np.ones((6, 2)), np.zeros((6, 2)))
    md, sd = trajectory_derivatives(const)
    assert md.shape == (5, 2) and not md.any() and not sd.any()
    lin = init_trajectory([[0.0, 0.0], [4.0, 2.0]], 8, 1.0)
    md, _ = trajectory_derivatives(lin)
    np.testing.assert_allclose(md, np.tile([4.0, 2.0], (8, 1)), atol=1e-12)
    p = random_params(rng, 7)
    md, sd = trajectory_derivatives(p, dt=0.3)
    for i in range(7):
        np.testing.assert_allclose(md[i], (p.mu[i + 1] - p.mu[i]) / 0.3)
        np.testing.assert_allclose(sd[i], (np.exp(p.log_sigma[i + 1]) - np.exp(p.log_sigma[i])) / 0.3)


def test_kinetic_examples():
    T = 10
    assert kinetic_energy(TrajectoryParams(np.ones((T + 1, 2)), np.zeros((T + 1, 2)))) == 0.0
    lin = init_trajectory([[0.0, 0.0], [3.0, 4.0]], T, 1.0)
    assert kinetic_energy(lin) == pytest.approx(T * 25.0)
    T = 100
    t = np.linspace(0, 1, T + 1)
    sig = 1 + t
    p = TrajectoryParams(np.zeros((T + 1, 1)), np.log(sig)[:, None])
    expected = 0.0
    for i in range(T):
        sdot = (sig[i + 1] - sig[i]) * T
        expected += 0.25 * sdot * sdot / sig[i]
    assert kinetic_energy(p) == pytest.approx(expected, rel=1e-12)


def test_potential_examples():
    T, beta = 12, 0.3
    p = TrajectoryParams(np.zeros((T + 1, 2)), np.zeros((T + 1, 2)))
    assert potential_energy(p, beta) == pytest.approx(beta**2 * 2 * (T + 1))
    assert potential_energy(p, 0.0) == 0.0
    doubled = p.replace(log_sigma=np.full((T + 1, 2), np.log(2.0)))
    assert potential_energy(doubled, beta) == pytest.approx(potential_energy(p, beta) / 2)


@pytest.mark.parametrize("seed", range(5))
def test_energy_gradients_match_fd(seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng)
    gm, gl = kinetic_energy_grad(p)
    assert_grad_close(gm, fd_grad(lambda m: kinetic_energy(p.replace(mu=m)), p.mu.copy()))
    assert_grad_close(gl, fd_grad(lambda ls: kinetic_energy(p.replace(log_sigma=ls)), p.log_sigma.copy()))
    _, ul = potential_energy_grad(p, 0.2)
    assert_grad_close(ul, fd_grad(lambda ls: potential_energy(p.replace(log_sigma=ls), 0.2),
                                  p.log_sigma.copy()))


def test_penalty_examples():
    env = Environment((-10.0, 10.0, -10.0, 10.0), (Ellipse((0.0, 0.0), (2.0, 1.0)),))
    p = TrajectoryParams(np.zeros((2, 2)), np.zeros((2, 2)))
    assert obstacle_penalty(p, env, np.array([[[0.0, 0.0]]])) == 1.0
    assert obstacle_penalty(p, env, np.array([[[2.0, 0.0]]])) == 0.0
    assert obstacle_penalty(p, env, np.array([[[5.0, 5.0], [0.0, 0.0]]])) == 0.5


def test_penalty_gradient_fd(rng):
    env, _, _ = builtin_environment("u_tunnel")
    p = TrajectoryParams(rng.uniform([6, -2], [14, 4], size=(9, 2)), np.log(rng.uniform(0.5, 2, (9, 2))))
    Z = standardized_paths(rng.normal(size=(40, 2)), rng.normal(size=(8, 40, 2)), 0.05)
    _, gm, gl = obstacle_penalty_grad(p, env, Z)
    fm = fd_grad(lambda m: obstacle_penalty_grad(p.replace(mu=m), env, Z)[0], p.mu.copy())
    fl = fd_grad(lambda ls: obstacle_penalty_grad(p.replace(log_sigma=ls), env, Z)[0], p.log_sigma.copy())
    assert np.max(np.abs(gm - fm)) < 1e-6 * max(1.0, np.max(np.abs(fm)))
    assert np.max(np.abs(gl - fl)) < 1e-6 * max(1.0, np.max(np.abs(fl)))


def test_propagate_moments():
    rng = np.random.default_rng(1)
    T = 20
    t = np.linspace(0, 1, T + 1)[:, None]
    p = TrajectoryParams(np.hstack([10 * t, np.sin(3 * t)]), np.hstack([np.log(0.5 + t), -t]))
    n = 100_000
    x0 = p.mu[0] + np.sqrt(p.variances[0]) * rng.normal(size=(n, 2))
    X = propagate_population(p, x0, 0.05, 2)
    for i in range(T + 1):
        sd = np.sqrt(p.variances[i])
        assert np.all(np.abs(X[i].mean(0) - p.mu[i]) < 4 * sd / np.sqrt(n))
        np.testing.assert_allclose(X[i].var(0), p.variances[i], rtol=0.03)
    np.testing.assert_array_equal(X, propagate_population(p, x0, 0.05, 2))


def test_propagate_beta_zero_and_errors(rng):
    p = TrajectoryParams(np.zeros((5, 2)), np.zeros((5, 2)))
    x0 = rng.normal(size=(10, 2))
    X = propagate_population(p, x0, 0.0, 0)
    for step in X:
        np.testing.assert_allclose(step, x0)
    with pytest.raises(ValueError):
        propagate_population(p, x0, 0.6, 0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_collision_fraction_bounds(seed):
    env, _, _ = builtin_environment("s_tunnel")
    P = np.random.default_rng(seed).uniform(-2, 22, size=(3, 50, 2))
    f_obs = collision_fraction(env, P)
    f_all = collision_fraction(env, P, obstacles_only=False)
    assert 0.0 <= f_obs <= f_all <= 1.0


# optimizer

def test_zero_iterations_returns_init():
    env, s, g = builtin_environment("u_tunnel")
    cfg = MfgConfig(iters=0, T=10, batch=20, eval_batch=20)
    r = optimize(env, Gaussian(s, 0.05 * np.eye(2)), Gaussian(g, 0.05 * np.eye(2)), cfg)
    np.testing.assert_array_equal(r.params.mu, r.initial.mu)
    np.testing.assert_array_equal(r.params.log_sigma, r.initial.log_sigma)
    assert r.history.shape == (1, 4)
    assert r.final_loss == r.initial_loss


def test_straight_line_limit():
    bent = [[0.0, 0.0], [5.0, 2.0], [10.0, 0.0]]
    cfg = MfgConfig(beta=0.0, lambda_obs=0.0, lr=1e-2, iters=2000, T=20, batch=10, eval_batch=10)
    p0 = Gaussian(np.array([0.0, 0.0]), np.eye(2))
    p1 = Gaussian(np.array([10.0, 0.0]), np.eye(2))
    r = optimize(EMPTY, p0, p1, cfg, path=bent)
    line = np.column_stack([np.linspace(0, 10, 21), np.zeros(21)])
    assert np.max(np.linalg.norm(r.params.mu - line, axis=1)) < 0.1
    assert r.final_loss < r.initial_loss


def test_endpoints_bit_exact_and_deterministic():
    env, s, g = builtin_environment("s_tunnel")
    cfg = MfgConfig(iters=30, T=10, batch=30, eval_batch=30, seed=4)
    p0, p1 = Gaussian(s, 0.05 * np.eye(2)), Gaussian(g, 0.05 * np.eye(2))
    a = optimize(env, p0, p1, cfg)
    b = optimize(env, p0, p1, cfg)
    np.testing.assert_array_equal(a.params.mu, b.params.mu)
    assert a.params.mu[0].tolist() == s.tolist()
    assert a.params.mu[-1].tolist() == g.tolist()


def test_optimize_errors():
    env, s, g = builtin_environment("s_tunnel")
    with pytest.raises(ValueError, match="diagonal"):
        optimize(env, Gaussian(s, np.array([[1.0, 0.1], [0.1, 1.0]])), Gaussian(g, np.eye(2)))
    with pytest.raises(ValueError):
        MfgConfig(beta=0.6)
    with pytest.raises(ValueError):
        MfgConfig.from_dict({"betta": 0.1})
    cfg = MfgConfig(beta=0.4, lambda_obs=0.0, lr=1e3, iters=5, T=4, batch=5, eval_batch=5)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(DivergenceError, match="iteration"):
        optimize(EMPTY, Gaussian(np.array([1.0, 0.0]), np.eye(2)), Gaussian(np.array([5.0, 0.0]), np.eye(2)),
                 cfg, path=[[1.0, 0.0], [5.0, 0.0]])
