"""Text serialization of conversion matrices.

    MWXE 1
    level=<n> lambda=<x> lambda0=<x> pmax=<int> kmax=<int> eps_a=<x> eps_r=<x>
    <p> <q> <kx> <ky> <kz> <R|I> <value>      one line per stored entry

Entries are sorted lexicographically by key; floats are written as shortest
round-trip decimals so a read reproduces the matrix bit for bit.
"""
import shutil
import tempfile
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import MatrixFileError
from .logger import matrix_logger
from .matrix import ConversionMatrix, SparseStore
from .series import WaveletIndex, oddity_zero

MAGIC = "MWXE"
VERSION = 1
_HEADER_FIELDS = ("level", "lambda", "lambda0", "pmax", "kmax", "eps_a", "eps_r")


def format_matrix(matrix: ConversionMatrix) -> str:
    lines = [
        f"{MAGIC} {VERSION}",
        (f"level={matrix.level} lambda={float(matrix.lambda_)!r} lambda0={float(matrix.lambda0)!r} "
         f"pmax={matrix.p_max} kmax={matrix.k_max} eps_a={float(matrix.eps_a)!r} eps_r={float(matrix.eps_r)!r}"),
    ]
    for (p, q, kx, ky, kz), axis, value in matrix.entries():
        lines.append(f"{p} {q} {kx} {ky} {kz} {axis.value} {value!r}")
    return "\n".join(lines) + "\n"


def write_matrix(matrix: ConversionMatrix, path: Path) -> Path:
    """Atomically write a matrix file (temporary file in the same directory, then move)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_file = None
    try:
        with tempfile.NamedTemporaryFile(
            mode='w',
            dir=path.parent,
            prefix=f".{path.name}.tmp",
            delete=False,
            encoding='utf-8',
        ) as f:
            temp_file = f.name
            f.write(format_matrix(matrix))
        shutil.move(temp_file, path)
        path.chmod(0o644)
        matrix_logger.info(f"Wrote {len(matrix.real_part) + len(matrix.imag_part)} entries to {path}")
        return path
    except Exception:
        if temp_file and Path(temp_file).exists():
            try:
                Path(temp_file).unlink()
            except OSError:
                pass
        raise


def _parse_header(line: str, path: str) -> dict:
    fields = {}
    for token in line.split():
        name, sep, value = token.partition("=")
        if not sep:
            raise MatrixFileError(f"malformed header token {token!r}", path, 2)
        fields[name] = value
    missing = [name for name in _HEADER_FIELDS if name not in fields]
    if missing:
        raise MatrixFileError(f"header missing {', '.join(missing)}", path, 2)
    try:
        return {
            "level": int(fields["level"]),
            "lambda_": float(fields["lambda"]),
            "lambda0": float(fields["lambda0"]),
            "p_max": int(fields["pmax"]),
            "k_max": int(fields["kmax"]),
            "eps_a": float(fields["eps_a"]),
            "eps_r": float(fields["eps_r"]),
        }
    except ValueError as e:
        raise MatrixFileError(f"bad header value: {e}", path, 2) from e


def parse_matrix(text: str, path: str = "<string>") -> ConversionMatrix:
    lines = text.splitlines()
    if not lines or lines[0].split() != [MAGIC, str(VERSION)]:
        raise MatrixFileError(f"expected '{MAGIC} {VERSION}' magic line", path, 1)
    if len(lines) < 2:
        raise MatrixFileError("missing header line", path, 2)
    header = _parse_header(lines[1], path)

    real: List[Tuple[Tuple[int, ...], float]] = []
    imag: List[Tuple[Tuple[int, ...], float]] = []
    previous = None
    for number, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 7:
            raise MatrixFileError(f"expected 7 fields, got {len(parts)}", path, number)
        try:
            key = tuple(int(v) for v in parts[:5])
            value = float(parts[6])
        except ValueError as e:
            raise MatrixFileError(f"bad number: {e}", path, number) from e
        p, q, kx, ky, kz = key
        if not (0 <= q <= p <= header["p_max"]) or not all(0 <= k <= header["k_max"] for k in (kx, ky, kz)):
            raise MatrixFileError(f"key {key} outside pmax={header['p_max']} kmax={header['k_max']}", path, number)
        if oddity_zero(p, q, WaveletIndex(kx, ky, kz)):
            raise MatrixFileError(f"key {key} is a structural zero", path, number)
        axis = parts[5]
        if axis not in ("R", "I"):
            raise MatrixFileError(f"axis must be R or I, got {axis!r}", path, number)
        if (axis == "I") != (ky % 2 == 1):
            raise MatrixFileError(f"key {key} on the wrong axis {axis}", path, number)
        if previous is not None and key <= previous:
            raise MatrixFileError(f"entries not strictly sorted at key {key}", path, number)
        previous = key
        (imag if axis == "I" else real).append((key, value))

    def store(items) -> SparseStore:
        if not items:
            return SparseStore()
        return SparseStore(np.array([k for k, _ in items], dtype=np.int64), np.array([v for _, v in items]))

    return ConversionMatrix(real_part=store(real), imag_part=store(imag), **header)


def read_matrix(path: Path) -> ConversionMatrix:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    matrix = parse_matrix(text, str(path))
    matrix_logger.info(f"Read {len(matrix.real_part) + len(matrix.imag_part)} entries from {path}")
    return matrix
