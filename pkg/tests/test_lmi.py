import numpy as np
import pytest

from ratecert import (
    FunctionClass,
    NetworkClass,
    assemble_feasibility,
    build_basis_maps,
    build_consensus_map,
    build_disagreement_map,
    build_multipliers,
    build_psi,
    dgd_realization,
    diging_realization,
    solve_feasibility,
    verify_certificate,
)


def test_multiplier_constants_exact():
    mult = build_multipliers(1.0, 10.0, 0.5, 2)
    np.testing.assert_array_equal(mult.M0, [[-20.0, 11.0], [11.0, -2.0]])
    np.testing.assert_array_equal(mult.M1, np.diag([0.0625, -1.0]))
    np.testing.assert_array_equal(mult.M2, np.diag([1.0, -1.0]))


def test_multiplier_sigma_zero():
    mult = build_multipliers(1.0, 10.0, 0.0, 3)
    np.testing.assert_array_equal(mult.M1, np.diag([0.0, -1.0]))


def test_multiplier_input_validation():
    with pytest.raises(ValueError):
        build_multipliers(0.0, 1.0, 0.5, 1)
    with pytest.raises(ValueError):
        build_multipliers(1.0, 10.0, 1.0, 1)


def build_program(alpha=0.01, m=1.0, L=10.0, sigma=0.0, B=1, rho=0.999):
    return assemble_feasibility(
        diging_realization(alpha), FunctionClass(m, L),
        NetworkClass(sigma, B), rho,
    )


def random_vars(program, rng):
    a, c, B = program.a, program.c, program.B
    sym = lambda k: (lambda M: 0.5 * (M + M.T))(rng.standard_normal((k, k)))
    return (sym(a), sym(a), sym(c), [sym(2 * c) for _ in range(B)],
            rng.standard_normal(B))


def test_maps_zero_at_zero():
    program = build_program(B=2, sigma=0.4, rho=0.9)
    a, c, B = program.a, program.c, program.B
    X = program.X(np.zeros((a, a)), np.zeros(B))
    Y = program.Y(np.zeros((a, a)), np.zeros((c, c)),
                  [np.zeros((2 * c, 2 * c))] * B, np.zeros(B))
    assert np.abs(X).max() == 0.0
    assert np.abs(Y).max() == 0.0


def test_consensus_identity_case():
    # lam = 0, rho = 1, P = I: X must equal Psi^T (Xi+^T Xi+ - Xi^T Xi) Psi.
    realization = diging_realization(0.2)
    maps = build_basis_maps(realization, 2)
    psi = build_psi(realization, maps)
    mult = build_multipliers(1.0, 10.0, 0.3, 2)
    cmap = build_consensus_map(maps, mult, 1.0, psi)
    X = cmap(np.eye(maps.a), np.zeros(2))
    expected = psi.T @ (maps.Xi_plus.T @ maps.Xi_plus
                        - maps.Xi.T @ maps.Xi) @ psi
    np.testing.assert_allclose(X, expected, atol=1e-12)


def test_disagreement_identity_case():
    realization = diging_realization(0.2)
    maps = build_basis_maps(realization, 2)
    mult = build_multipliers(1.0, 10.0, 0.3, 2)
    dmap = build_disagreement_map(maps, mult, 1.0)
    c = maps.c
    Y = dmap(np.eye(maps.a), np.zeros((c, c)),
             [np.zeros((2 * c, 2 * c))] * 2, np.zeros(2))
    expected = maps.Xi_plus.T @ maps.Xi_plus - maps.Xi.T @ maps.Xi
    np.testing.assert_allclose(Y, expected, atol=1e-12)


def test_maps_linear_and_symmetric():
    rng = np.random.default_rng(7)
    program = build_program(B=3, sigma=0.5, rho=0.95)
    P1, Q1, R1, S1, lam1 = random_vars(program, rng)
    P2, Q2, R2, S2, lam2 = random_vars(program, rng)

    X1 = program.X(P1, lam1)
    X2 = program.X(P2, lam2)
    X12 = program.X(P1 + P2, lam1 + lam2)
    np.testing.assert_allclose(X12, X1 + X2, atol=1e-12)
    np.testing.assert_allclose(program.X(2 * P1, 2 * lam1), 2 * X1, atol=1e-12)
    assert np.abs(X1 - X1.T).max() < 1e-12

    Y1 = program.Y(Q1, R1, S1, lam1)
    Y2 = program.Y(Q2, R2, S2, lam2)
    Y12 = program.Y(Q1 + Q2, R1 + R2,
                    [a + b for a, b in zip(S1, S2)], lam1 + lam2)
    np.testing.assert_allclose(Y12, Y1 + Y2, atol=1e-12)
    assert np.abs(Y1 - Y1.T).max() < 1e-12


def test_disagreement_terms_match_kronecker_oracle():
    # Oracle: hand-expanded Kronecker products on the stacked maps.
    rng = np.random.default_rng(8)
    realization = diging_realization(0.15)
    B, sigma = 2, 0.6
    maps = build_basis_maps(realization, B)
    mult = build_multipliers(1.0, 10.0, sigma, B)
    dmap = build_disagreement_map(maps, mult, 0.9)
    c = maps.c
    Q = np.zeros((maps.a, maps.a))
    R = (lambda M: 0.5 * (M + M.T))(rng.standard_normal((c, c)))
    S = [(lambda M: 0.5 * (M + M.T))(rng.standard_normal((2 * c, 2 * c)))
         for _ in range(B)]
    lam = np.zeros(B)
    Y = dmap(Q, R, S, lam)

    w_stack = np.vstack([maps.wm[0], maps.wm[B]])
    expected = w_stack.T @ np.kron(mult.M1, R) @ w_stack
    for l in range(B):
        stack = np.vstack([maps.zm[l], maps.wm[l], maps.vm[l], maps.wm[l + 1]])
        expected += stack.T @ np.kron(mult.M2, S[l]) @ stack
    np.testing.assert_allclose(Y, expected, atol=1e-11)


def test_disagreement_B1_collapse_matches_kronecker_oracle():
    # At B=1, wm(0)=zm(0) and wm(1)=vm(0): the S-term collapses to a
    # single contraction constraint on (z, v) pairs.
    rng = np.random.default_rng(9)
    realization = diging_realization(0.15)
    maps = build_basis_maps(realization, 1)
    mult = build_multipliers(1.0, 10.0, 0.4, 1)
    dmap = build_disagreement_map(maps, mult, 0.9)
    c = maps.c
    S = [(lambda M: 0.5 * (M + M.T))(rng.standard_normal((2 * c, 2 * c)))]
    Y = dmap(np.zeros((maps.a, maps.a)), np.zeros((c, c)), S, np.zeros(1))
    stack = np.vstack([maps.zm[0], maps.zm[0], maps.vm[0], maps.vm[0]])
    expected = stack.T @ np.kron(np.diag([1.0, -1.0]), S[0]) @ stack
    np.testing.assert_allclose(Y, expected, atol=1e-12)


def test_variable_count_formula():
    for B, decouple in [(1, False), (2, False), (3, True)]:
        program = assemble_feasibility(
            diging_realization(0.01), FunctionClass(1, 10),
            NetworkClass(0.2, B), 0.99, decouple_lambda=decouple,
        )
        a, c = program.a, program.c
        expected = (a * (a + 1) + c * (c + 1) // 2
                    + B * (2 * c) * (2 * c + 1) // 2 + B)
        if decouple:
            expected += B
        assert program.variable_count() == expected


def test_feasible_at_conservative_rate():
    out = solve_feasibility(build_program(rho=0.999))
    assert out.status == "certificate"
    res = out.certificate.residuals
    assert res["lam_max_X"] <= 1e-7
    assert res["lam_max_Y"] <= 1e-7


def test_infeasible_at_absurd_rate():
    out = solve_feasibility(build_program(rho=1e-6))
    assert out.status == "infeasible"


def test_sigma_relaxation_keeps_certificate_feasible():
    # The only sigma-dependence is the PSD-weighted sigma^(2B) term, so a
    # certificate found at sigma stays feasible at any sigma' < sigma.
    realization = diging_realization(0.005)
    fc = FunctionClass(1.0, 10.0)
    out = solve_feasibility(
        assemble_feasibility(realization, fc, NetworkClass(0.6, 2), 0.9995))
    assert out.status == "certificate"
    cert = out.certificate
    for sigma_smaller in (0.3, 0.0):
        program = assemble_feasibility(realization, fc,
                                       NetworkClass(sigma_smaller, 2), 0.9995)
        values = {"P": cert.P, "Q": cert.Q, "R": cert.R,
                  "S": list(cert.S), "lam": cert.lam}
        _, ok = verify_certificate(program, values, feas_tol=1e-7)
        assert ok


def test_dgd_warns_but_assembles():
    with pytest.warns(UserWarning):
        program = assemble_feasibility(
            dgd_realization(0.05), FunctionClass(1, 10),
            NetworkClass(0.0, 1), 0.99,
        )
    assert program.p >= 1


def test_rho_positive_required():
    with pytest.raises(ValueError):
        build_program(rho=0.0)
