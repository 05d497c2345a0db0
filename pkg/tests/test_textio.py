import io

import numpy as np
import pytest

from ratecert import (
    FunctionClass,
    NetworkClass,
    ParseError,
    assemble_feasibility,
    certificate_from_text,
    certificate_to_text,
    diging_realization,
    generate_sequence,
    realization_from_text,
    realization_to_text,
    sequence_from_text,
    sequence_to_text,
    solve_feasibility,
    write_csv,
)
from ratecert.textio import export_sdpa, parse_kv_text


def test_realization_round_trip():
    original = diging_realization(0.137)
    text = realization_to_text(original, comment="round trip")
    back = realization_from_text(text)
    for block in ("A", "Bu", "Bv", "Cy", "Dyu", "Dyv", "Cz", "Dzu", "Dzv",
                  "Fx", "Fu"):
        np.testing.assert_array_equal(getattr(original, block),
                                      getattr(back, block))


def test_realization_without_invariant_round_trips():
    from ratecert import dgd_realization

    back = realization_from_text(realization_to_text(dgd_realization(0.25)))
    assert back.r == 0


def test_ragged_rows_rejected():
    text = realization_to_text(diging_realization(0.1))
    bad = text.replace("Cz = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]",
                       "Cz = [[1.0, 0.0, 0.0], [0.0, 1.0]]")
    assert bad != text
    with pytest.raises(ParseError, match="ragged"):
        realization_from_text(bad)


def test_missing_block_rejected():
    lines = [line for line in
             realization_to_text(diging_realization(0.1)).splitlines()
             if not line.startswith("Bv")]
    with pytest.raises(ParseError, match="Bv"):
        realization_from_text("\n".join(lines))


def test_declared_dims_must_match_blocks():
    text = realization_to_text(diging_realization(0.1)).replace("s = 3",
                                                                "s = 4")
    with pytest.raises(ParseError, match="declared"):
        realization_from_text(text)


def test_malformed_line_rejected():
    with pytest.raises(ParseError, match="line 1"):
        parse_kv_text("not a key value line")


def test_sequence_round_trip_recomputes_sigma():
    seq = generate_sequence(3, 2, scheme="periodic_edge_cycle", theta=0.5)
    back = sequence_from_text(sequence_to_text(seq))
    assert back.n == 3 and back.B_claimed == 2
    assert back.sigma_measured == pytest.approx(seq.sigma_measured, abs=1e-15)
    for W1, W2 in zip(seq.matrices, back.matrices):
        np.testing.assert_array_equal(W1, W2)


def _small_certificate():
    program = assemble_feasibility(diging_realization(0.01),
                                   FunctionClass(1, 10),
                                   NetworkClass(0.2, 1), 0.999)
    out = solve_feasibility(program)
    assert out.status == "certificate"
    return out.certificate


def test_certificate_round_trip_lossless():
    cert = _small_certificate()
    back = certificate_from_text(certificate_to_text(cert))
    assert back.rho == cert.rho
    np.testing.assert_array_equal(back.P, cert.P)
    np.testing.assert_array_equal(back.Q, cert.Q)
    np.testing.assert_array_equal(back.R, cert.R)
    for s1, s2 in zip(back.S, cert.S):
        np.testing.assert_array_equal(s1, s2)
    np.testing.assert_array_equal(back.lam, cert.lam)
    assert back.residuals == cert.residuals
    assert back.metadata == cert.metadata


def test_csv_rendering_is_reproducible():
    rows = [[0.1, 3, "x", 1 / 3, True], [2e-7, 1, "y", 0.9999999999999, False]]
    buf1, buf2 = io.StringIO(), io.StringIO()
    write_csv(buf1, ["a", "b", "c", "d", "e"], rows)
    write_csv(buf2, ["a", "b", "c", "d", "e"], rows)
    assert buf1.getvalue() == buf2.getvalue()
    assert buf1.getvalue().splitlines()[0] == "a,b,c,d,e"
    assert "0.3333333333333333" in buf1.getvalue()
    assert "true" in buf1.getvalue()


def _parse_sdpa(text):
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith('"')]
    n_vars = int(lines[0])
    n_blocks = int(lines[1])
    sizes = [int(tok) for tok in lines[2].split()]
    entries = []
    for ln in lines[4:]:
        k, blk, i, j, val = ln.split()
        entries.append((int(k), int(blk), int(i), int(j), float(val)))
    return n_vars, n_blocks, sizes, entries


def test_sdpa_export_reconstructs_constraint_blocks():
    # Independent check: rebuild sum_k y_k F_k - F0 from the exported
    # entries at a random assignment and compare against the program maps.
    program = assemble_feasibility(diging_realization(0.05),
                                   FunctionClass(1, 8),
                                   NetworkClass(0.3, 2), 0.97)
    buf = io.StringIO()
    n_reported = export_sdpa(program, buf)
    n_vars, n_blocks, sizes, entries = _parse_sdpa(buf.getvalue())
    assert n_vars == n_reported == program.variable_count()
    a, c, B, p, b = program.a, program.c, program.B, program.p, program.b
    assert sizes == [p, b, a, a, c] + [2 * c] * B + [-B]

    rng = np.random.default_rng(0)
    y = rng.standard_normal(n_vars)

    # rebuild blocks from entries
    blocks = [np.zeros((abs(s), abs(s))) for s in sizes]
    for k, blk, i, j, val in entries:
        coeff = y[k - 1] if k >= 1 else -1.0
        blocks[blk - 1][i - 1, j - 1] += coeff * val
        if i != j:
            blocks[blk - 1][j - 1, i - 1] += coeff * val

    # unpack y into the structured variables using the documented order
    def take_sym(offset, k):
        M = np.zeros((k, k))
        idx = offset
        for i in range(k):
            for j in range(i, k):
                M[i, j] = M[j, i] = y[idx]
                idx += 1
        return M, idx

    P, idx = take_sym(0, a)
    Q, idx = take_sym(idx, a)
    R, idx = take_sym(idx, c)
    S = []
    for _ in range(B):
        Si, idx = take_sym(idx, 2 * c)
        S.append(Si)
    lam = y[idx : idx + B]

    np.testing.assert_allclose(blocks[0], -program.X(P, lam), atol=1e-10)
    np.testing.assert_allclose(blocks[1], -program.Y(Q, R, S, lam), atol=1e-10)
    np.testing.assert_allclose(blocks[2], P - program.eps_pd * np.eye(a),
                               atol=1e-12)
    np.testing.assert_allclose(blocks[3], Q - program.eps_pd * np.eye(a),
                               atol=1e-12)
    np.testing.assert_allclose(blocks[4], R, atol=1e-12)
    for l in range(B):
        np.testing.assert_allclose(blocks[5 + l], S[l], atol=1e-12)
    np.testing.assert_allclose(np.diag(blocks[5 + B]), lam, atol=1e-12)
