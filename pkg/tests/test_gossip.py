import numpy as np
import pytest

from ratecert import (
    GossipSequence,
    InfeasibleScheme,
    generate_sequence,
    joint_spectral_gap,
    verify_assumption2,
)

SQRT_HALF = np.sqrt(0.5)  # frozen: 3-node path edges, theta=0.5, B=2


def test_complete_scheme_single_averaging_matrix():
    seq = generate_sequence(4, 1, scheme="complete")
    assert seq.period == 1
    np.testing.assert_allclose(seq.matrices[0], np.full((4, 4), 0.25))
    assert seq.sigma_measured == 0.0


def test_edge_cycle_sigma_matches_spectral_oracle():
    # Oracle (dense 3x3 window products, computed independently before
    # the build): both 2-step windows have norm exactly 1/2, so
    # sigma = (1/2)^(1/2).
    seq = generate_sequence(3, 2, scheme="periodic_edge_cycle", theta=0.5)
    assert seq.period == 2
    assert seq.sigma_measured == pytest.approx(SQRT_HALF, abs=1e-12)
    W01 = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
    W12 = np.array([[1.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.0, 0.5, 0.5]])
    np.testing.assert_allclose(seq.matrices[0], W01)
    np.testing.assert_allclose(seq.matrices[1], W12)


def test_edge_cycle_requires_B_at_least_n_minus_1():
    with pytest.raises(InfeasibleScheme):
        generate_sequence(5, 2, scheme="periodic_edge_cycle")
    generate_sequence(5, 4, scheme="periodic_edge_cycle")


def test_random_matchings_rejects_B1_for_more_than_two_agents():
    with pytest.raises(InfeasibleScheme):
        generate_sequence(3, 1, scheme="random_matchings", seed=0)
    seq = generate_sequence(2, 1, scheme="random_matchings", seed=0)
    assert seq.sigma_measured < 1.0


def test_generator_soundness_across_schemes():
    cases = [
        (4, 1, "complete"), (3, 2, "periodic_edge_cycle"),
        (5, 4, "periodic_edge_cycle"), (5, 2, "random_matchings"),
        (5, 3, "random_matchings"), (6, 2, "random_matchings"),
    ]
    for n, B, scheme in cases:
        seq = generate_sequence(n, B, scheme=scheme, theta=0.6, seed=123)
        assert seq.sigma_measured < 1.0
        report = verify_assumption2(seq)
        assert report.all_ok
        for W in seq.matrices:
            np.testing.assert_allclose(W, W.T, atol=1e-15)
            assert np.diag(W).min() >= 0.6 - 1e-15 or scheme == "complete"


def test_identity_sequence_has_no_mixing():
    sigma, _ = joint_spectral_gap([np.eye(3)], 2)
    assert sigma >= 1.0
    seq = GossipSequence(n=3, matrices=(np.eye(3),), B_claimed=2,
                         sigma_measured=sigma)
    report = verify_assumption2(seq)
    assert report.weight_balanced and report.spectrum_ok
    assert not report.joint_ok


def test_perturbed_row_sum_detected():
    seq = generate_sequence(3, 2, scheme="periodic_edge_cycle")
    bad = np.array(seq.matrices[0])
    bad[0, 0] += 1e-3
    broken = GossipSequence(n=3, matrices=(bad, seq.matrices[1]),
                            B_claimed=2, sigma_measured=0.9)
    report = verify_assumption2(broken)
    assert report.weight_balanced is False
    assert report.max_sum_deviation == pytest.approx(1e-3, rel=1e-6)


def test_disconnected_permutation_blocks_fail_joint_property():
    # Doubly stochastic, non-symmetric, norm-preserving: two directed
    # 3-cycles.  Per-step spectrum property holds with norm exactly 1,
    # the joint property can never hold.
    cycle = np.roll(np.eye(3), 1, axis=1)
    W = np.block([[cycle, np.zeros((3, 3))], [np.zeros((3, 3)), cycle]])
    assert np.abs(W @ np.ones(6) - 1).max() < 1e-15
    assert np.abs(W.T @ np.ones(6) - 1).max() < 1e-15
    assert np.abs(W - W.T).max() == 1.0
    seq = GossipSequence(n=6, matrices=(W,), B_claimed=3, sigma_measured=1.0)
    report = verify_assumption2(seq)
    assert report.weight_balanced
    assert report.spectrum_ok
    assert report.sigma_measured >= 1.0
    assert not report.joint_ok


def test_worst_window_is_reported():
    seq = generate_sequence(4, 3, scheme="periodic_edge_cycle", theta=0.7)
    report = verify_assumption2(seq)
    assert 0 <= report.worst_window < seq.period
    sigma, worst = joint_spectral_gap(list(seq.matrices), 3)
    assert report.sigma_measured == sigma and report.worst_window == worst


def test_matrix_at_cycles_periodically():
    seq = generate_sequence(3, 2, scheme="periodic_edge_cycle")
    np.testing.assert_array_equal(seq.matrix_at(0), seq.matrix_at(2))
    np.testing.assert_array_equal(seq.matrix_at(1), seq.matrix_at(5))


def test_parameter_validation():
    with pytest.raises(ValueError):
        generate_sequence(1, 1)
    with pytest.raises(ValueError):
        generate_sequence(3, 0)
    with pytest.raises(ValueError):
        generate_sequence(3, 2, theta=0.4)
    with pytest.raises(ValueError):
        generate_sequence(3, 2, scheme="nope")
