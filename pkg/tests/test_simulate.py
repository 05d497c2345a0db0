import numpy as np
import pytest

from ratecert import (
    AlgebraicLoop,
    InsufficientDecay,
    InvariantViolated,
    QuadraticEnsemble,
    Realization,
    construct_fixed_point,
    diging_initial_state,
    diging_realization,
    empirical_rate,
    generate_sequence,
    simulate,
    trajectory_lyapunov_state,
)


def test_ensemble_spectrum_inside_sector():
    ens = QuadraticEnsemble.random(5, d=3, m=1.0, L=10.0, seed=0)
    for H in ens.hessians:
        eigs = np.linalg.eigvalsh(H)
        assert eigs[0] >= 1.0 - 1e-12
        assert eigs[-1] <= 10.0 + 1e-12
        np.testing.assert_allclose(H, H.T, atol=1e-14)


def test_optimizer_zeroes_total_gradient():
    for seed in range(4):
        ens = QuadraticEnsemble.random(4, d=2, m=1.0, L=10.0, seed=seed)
        grads = ens.gradients_at_optimum()
        assert np.abs(grads.sum(axis=0)).max() < 1e-10


def test_simulation_matches_direct_diging_recursion():
    # Oracle: the textbook two-line recursion x+ = Wx - a*y,
    # y+ = Wy + grad(x+) - grad(x), rolled out independently.
    n, d, K, alpha = 4, 2, 60, 0.04
    ens = QuadraticEnsemble.random(n, d=d, m=1.0, L=10.0, seed=3)
    seq = generate_sequence(n, 3, scheme="periodic_edge_cycle", theta=0.6)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((n, d))

    def grad(points):
        return np.einsum("nd,nde->ne", points - ens.anchors, ens.hessians)

    y = grad(x)
    xs_direct = [x.copy()]
    for k in range(K):
        W = seq.matrix_at(k)
        x_next = W @ x - alpha * y
        y = W @ y + grad(x_next) - grad(x)
        x = x_next
        xs_direct.append(x.copy())

    x0 = diging_initial_state(ens, x_init=xs_direct[0])
    traj = simulate(diging_realization(alpha), seq, ens, x0, K)
    for k in range(K + 1):
        np.testing.assert_allclose(traj.x[:, k, 0, :], xs_direct[k],
                                   atol=1e-11)
    assert traj.invariant_drift.max() < 1e-10


def test_start_at_fixed_point_stays_there():
    n = 3
    H = np.tile(np.diag([2.0, 4.0]), (n, 1, 1))
    anchors = np.tile(np.array([0.5, -1.0]), (n, 1))
    ens = QuadraticEnsemble(hessians=H, anchors=anchors, m=2.0, L=4.0)
    seq = generate_sequence(n, 1, scheme="complete")
    x0 = diging_initial_state(ens, x_init=np.tile(ens.y_star, (n, 1)))
    traj = simulate(diging_realization(0.1), seq, ens, x0, 50)
    assert traj.errors.max() < 1e-12


def test_identical_agents_stay_in_consensus():
    n = 5
    H = np.tile(np.diag([1.0, 6.0]), (n, 1, 1))
    anchors = np.tile(np.array([0.3, 0.7]), (n, 1))
    ens = QuadraticEnsemble(hessians=H, anchors=anchors, m=1.0, L=6.0)
    seq = generate_sequence(n, 4, scheme="periodic_edge_cycle", theta=0.55)
    x0 = diging_initial_state(ens, x_init=np.tile([2.0, -1.0], (n, 1)))
    traj = simulate(diging_realization(0.08), seq, ens, x0, 150)
    spread = np.abs(traj.x - traj.x[:1]).max()
    assert spread < 1e-12


def test_zero_stepsize_tracking_never_reaches_optimum():
    # Stepsize zero is rejected by the builtin constructor, so the
    # realization is written out explicitly: pure averaging of the
    # iterate, no gradient step.
    frozen = Realization(
        A=[[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 0.0, 0.0]],
        Bu=[[0.0], [1.0], [1.0]],
        Bv=[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
        Cy=[[0.0, 0.0, 0.0]], Dyu=[[0.0]], Dyv=[[1.0, 0.0]],
        Cz=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        Dzu=[[0.0], [0.0]], Dzv=[[0.0, 0.0], [0.0, 0.0]],
        Fx=[[0.0, 1.0, -1.0]], Fu=[[0.0]],
    )
    ens = QuadraticEnsemble.random(3, d=2, m=1.0, L=10.0, seed=9)
    seq = generate_sequence(3, 2, scheme="periodic_edge_cycle")
    x0 = diging_initial_state(ens, rng=np.random.default_rng(1))
    traj = simulate(frozen, seq, ens, x0, 400)
    # y outputs settle at the average initial iterate, not the optimizer
    assert traj.y_errors[:, -1].max() > 1e-3


def test_invariant_violation_rejected_at_start():
    ens = QuadraticEnsemble.random(3, d=2, m=1.0, L=10.0, seed=2)
    seq = generate_sequence(3, 1, scheme="complete")
    x0 = diging_initial_state(ens, rng=np.random.default_rng(0))
    x0[0, 1, 0] += 0.37  # break the tracker/stored-gradient balance
    with pytest.raises(InvariantViolated):
        simulate(diging_realization(0.05), seq, ens, x0, 10)


def test_feedthrough_loop_rejected():
    r = diging_realization(0.1)
    looped = Realization(A=r.A, Bu=r.Bu, Bv=r.Bv, Cy=r.Cy, Dyu=r.Dyu,
                         Dyv=r.Dyv, Cz=r.Cz, Dzu=r.Dzu,
                         Dzv=np.eye(2) * 0.5, Fx=r.Fx, Fu=r.Fu)
    ens = QuadraticEnsemble.random(3, d=1, m=1.0, L=2.0, seed=0)
    seq = generate_sequence(3, 1, scheme="complete")
    with pytest.raises(AlgebraicLoop):
        simulate(looped, seq, ens, np.zeros((3, 3, 1)), 5)


def test_empirical_rate_exact_geometric():
    e = 0.9 ** np.arange(200)
    fit = empirical_rate(e, tail_fraction=0.5)
    assert fit.rho == pytest.approx(0.9, abs=1e-6)
    assert fit.fit_residual < 1e-9


def test_empirical_rate_oscillating_envelope():
    k = np.arange(400)
    e = 3.0 * 0.9**k * (2.0 + np.sin(k))
    fit = empirical_rate(e, tail_fraction=0.5)
    assert fit.rho == pytest.approx(0.9, abs=0.01)


def test_empirical_rate_underflow_rejected():
    e = np.full(300, 1e-290)
    e[250:] = 0.0
    with pytest.raises(InsufficientDecay):
        empirical_rate(e, tail_fraction=0.5)


def test_empirical_rate_needs_enough_points():
    with pytest.raises(ValueError):
        empirical_rate(0.9 ** np.arange(30), tail_fraction=0.5)


def test_lyapunov_state_shapes_and_content():
    n, B, alpha = 3, 2, 0.03
    ens = QuadraticEnsemble.random(n, d=2, m=1.0, L=10.0, seed=8)
    seq = generate_sequence(n, B, scheme="periodic_edge_cycle")
    x0 = diging_initial_state(ens, rng=np.random.default_rng(4))
    real = diging_realization(alpha)
    witness = construct_fixed_point(real, ens.y_star,
                                    ens.gradients_at_optimum())
    traj = simulate(real, seq, ens, x0, 40, witness=witness)
    xi = trajectory_lyapunov_state(traj, B, k=0)
    a = real.s + (real.c + 1) * (B - 1)
    assert xi.shape == (n, a, 2)
    np.testing.assert_allclose(xi[:, :3], traj.x[:, 0] - witness.x_star,
                               atol=1e-14)
    np.testing.assert_allclose(xi[:, 3:4], traj.u[:, 0] - witness.u_star,
                               atol=1e-14)
