"""Structured-text serialization and table output.

One line per field, `key = value`, with the value in JSON (so matrices
are row-major lists of rows and floats round-trip at full precision).
Blank lines and `#` comments are ignored.  The same format carries
realization files, gossip sequences, certificates, and sweep configs.
"""

import csv
import io
import json

import numpy as np

from .certify import Certificate
from .errors import ParseError
from .gossip import GossipSequence, joint_spectral_gap
from .realization import Realization, validate

__all__ = [
    "parse_kv_text",
    "format_kv",
    "realization_to_text",
    "realization_from_text",
    "sequence_to_text",
    "sequence_from_text",
    "certificate_to_text",
    "certificate_from_text",
    "write_csv",
    "export_sdpa",
]

REALIZATION_BLOCKS = ("A", "Bu", "Bv", "Cy", "Dyu", "Dyv", "Cz", "Dzu",
                      "Dzv", "Fx", "Fu")


def parse_kv_text(text):
    """Parse `key = value` lines with JSON values."""
    data = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ParseError(f"line {lineno}: empty key")
        try:
            data[key] = json.loads(value.strip())
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return data


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def format_kv(data):
    lines = [f"{key} = {json.dumps(value, default=_json_default)}"
             for key, value in data.items()]
    return "\n".join(lines) + "\n"


def _matrix_from_rows(name, rows):
    """Row-major list of rows -> 2-D array; ragged rows rejected."""
    if isinstance(rows, (int, float)):
        return np.array([[float(rows)]])
    if not isinstance(rows, list):
        raise ParseError(f"{name}: expected a list of rows")
    if rows and not isinstance(rows[0], list):
        rows = [rows]
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ParseError(f"{name}: ragged rows with lengths {sorted(widths)}")
    return np.array(rows, dtype=float) if rows else np.zeros((0, 0))


def realization_to_text(realization, comment=""):
    data = {"s": realization.s, "c": realization.c}
    for block in REALIZATION_BLOCKS:
        data[block] = getattr(realization, block).tolist()
    text = format_kv(data)
    if comment:
        text = f"# {comment}\n" + text
    return text


def realization_from_text(text):
    data = parse_kv_text(text)
    for key in ("s", "c"):
        if key not in data:
            raise ParseError(f"missing field {key!r}")
    kwargs = {}
    for block in REALIZATION_BLOCKS:
        if block in ("Fx", "Fu") and block not in data:
            kwargs[block] = None
            continue
        if block not in data:
            raise ParseError(f"missing block {block!r}")
        kwargs[block] = _matrix_from_rows(block, data[block])
    if kwargs["Fx"] is not None and kwargs["Fx"].size == 0:
        kwargs["Fx"] = kwargs["Fu"] = None
    realization = Realization(**kwargs)
    if realization.s != data["s"] or realization.c != data["c"]:
        raise ParseError(
            f"declared (s, c) = ({data['s']}, {data['c']}) but blocks give "
            f"({realization.s}, {realization.c})"
        )
    return validate(realization)


def sequence_to_text(sequence, comment=""):
    data = {
        "n": sequence.n,
        "B": sequence.B_claimed,
        "scheme": sequence.scheme,
        "theta": sequence.theta,
        "matrices": [W.tolist() for W in sequence.matrices],
    }
    text = format_kv(data)
    if comment:
        text = f"# {comment}\n" + text
    return text


def sequence_from_text(text):
    data = parse_kv_text(text)
    for key in ("n", "B", "matrices"):
        if key not in data:
            raise ParseError(f"missing field {key!r}")
    matrices = [_matrix_from_rows(f"matrices[{i}]", rows)
                for i, rows in enumerate(data["matrices"])]
    n = int(data["n"])
    for i, W in enumerate(matrices):
        if W.shape != (n, n):
            raise ParseError(f"matrices[{i}]: expected ({n}, {n}), got {W.shape}")
    B = int(data["B"])
    sigma, _ = joint_spectral_gap(matrices, B)
    return GossipSequence(
        n=n,
        matrices=tuple(matrices),
        B_claimed=B,
        sigma_measured=sigma,
        scheme=data.get("scheme", ""),
        theta=float(data.get("theta", 0.5)),
    )


def certificate_to_text(certificate):
    data = {
        "rho": certificate.rho,
        "P": certificate.P.tolist(),
        "Q": certificate.Q.tolist(),
        "R": certificate.R.tolist(),
        "S": [Si.tolist() for Si in certificate.S],
        "lam": certificate.lam.tolist(),
        "residuals": certificate.residuals,
        "metadata": certificate.metadata,
    }
    if certificate.lam_consensus is not None:
        data["lam_consensus"] = certificate.lam_consensus.tolist()
    return format_kv(data)


def certificate_from_text(text):
    data = parse_kv_text(text)
    lam_consensus = data.get("lam_consensus")
    return Certificate(
        rho=float(data["rho"]),
        P=np.array(data["P"], dtype=float),
        Q=np.array(data["Q"], dtype=float),
        R=np.array(data["R"], dtype=float),
        S=tuple(np.array(Si, dtype=float) for Si in data["S"]),
        lam=np.array(data["lam"], dtype=float),
        lam_consensus=(np.array(lam_consensus, dtype=float)
                       if lam_consensus is not None else None),
        residuals=data.get("residuals", {}),
        metadata=data.get("metadata", {}),
    )


def write_csv(path_or_file, header, rows):
    """RFC-4180-style CSV with a mandatory header row.

    Floats are rendered with repr (shortest round-trip), which keeps
    repeated runs byte-identical.
    """

    def render(value):
        if isinstance(value, (float, np.floating)):
            return repr(float(value))
        if isinstance(value, (bool, np.bool_)):
            return str(bool(value)).lower()
        return value

    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([render(v) for v in row])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)


def _symmetric_basis(k):
    """Unit symmetric matrices E_ij (upper triangle order)."""
    for i in range(k):
        for j in range(i, k):
            E = np.zeros((k, k))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0
            yield E


def export_sdpa(program, path_or_file):
    """Write the program as a sparse SDPA (.dat-s) feasibility problem.

    Primal form: find y with sum_k y_k F_k - F0 >= 0 (blockwise PSD) and
    zero objective.  Blocks, in order: -X (p x p), -Y (b x b), P - eps I,
    Q - eps I, R, S(0..B-1), and a diagonal block for lambda.  Variables
    are ordered P, Q, R, S(0..B-1) (upper-triangle, row-major within each
    matrix), then lambda(0..B-1).  Entries are written for the upper
    triangle only.
    """
    if program.decoupled:
        raise ValueError("SDPA export covers the shared-lambda program only")
    a, c, B, p, b = program.a, program.c, program.B, program.p, program.b
    zero_lam = np.zeros(B)
    zero_S = [np.zeros((2 * c, 2 * c)) for _ in range(B)]
    zero_a = np.zeros((a, a))
    zero_c = np.zeros((c, c))

    # (block size, builder of per-variable coefficient blocks)
    blocks = [p, b, a, a, c] + [2 * c] * B + [-B]

    entries = []  # (var_index 1-based, block 1-based, i, j, value) i<=j 1-based

    def add_block(var, blk, mat):
        rows, cols = np.nonzero(np.triu(np.abs(mat) > 0.0))
        for i, j in zip(rows, cols):
            entries.append((var, blk, int(i) + 1, int(j) + 1, float(mat[i, j])))

    var = 0
    for E in _symmetric_basis(a):  # P
        var += 1
        add_block(var, 1, -program.X(E, zero_lam))
        add_block(var, 3, E)
    for E in _symmetric_basis(a):  # Q
        var += 1
        add_block(var, 2, -program.Y(E, zero_c, zero_S, zero_lam))
        add_block(var, 4, E)
    for E in _symmetric_basis(c):  # R
        var += 1
        add_block(var, 2, -program.Y(zero_a, E, zero_S, zero_lam))
        add_block(var, 5, E)
    for l in range(B):  # S(l)
        for E in _symmetric_basis(2 * c):
            var += 1
            S = [np.zeros((2 * c, 2 * c)) for _ in range(B)]
            S[l] = E
            add_block(var, 2, -program.Y(zero_a, zero_c, S, zero_lam))
            add_block(var, 5 + 1 + l, E)
    for l in range(B):  # lambda(l)
        var += 1
        lam = np.zeros(B)
        lam[l] = 1.0
        add_block(var, 1, -program.X(np.zeros((a, a)), lam))
        add_block(var, 2, -program.Y(zero_a, zero_c, zero_S, lam))
        entries.append((var, len(blocks), l + 1, l + 1, 1.0))

    # F0: constant sides (eps I for the P and Q blocks).
    eps = program.eps_pd
    f0 = [(3, i + 1, i + 1, eps) for i in range(a)]
    f0 += [(4, i + 1, i + 1, eps) for i in range(a)]

    lines = [
        f'"ratecert feasibility program: rho={program.rho!r}, '
        f'm={program.multipliers.m!r}, L={program.multipliers.L!r}, '
        f'sigma={program.multipliers.sigma!r}, B={program.B}"',
        f"{var}",
        f"{len(blocks)}",
        " ".join(str(size) for size in blocks),
        " ".join(["0.0"] * var),
    ]
    for blk, i, j, value in f0:
        lines.append(f"0 {blk} {i} {j} {value!r}")
    for entry in entries:
        k, blk, i, j, value = entry
        lines.append(f"{k} {blk} {i} {j} {value!r}")
    text = "\n".join(lines) + "\n"

    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)
    return var
