"""File formats: the binary/CSV signal container and the CSV reports."""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "FormatError",
    "MAGIC",
    "write_signal",
    "read_signal",
    "write_signal_csv",
    "read_signal_csv",
    "write_csv",
    "read_csv",
    "fmt",
]

MAGIC = b"WBFM"
_HEADER = struct.Struct("<4sIII")  # magic, L, two reserved words -> 16 bytes


class FormatError(ValueError):
    """Malformed input file; the message says where."""


def fmt(x) -> str:
    """Floats with 9 significant digits, integers verbatim, ``-0`` printed as ``0``."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x) + 0.0:.9g}"


def write_signal(path, x: np.ndarray) -> None:
    """Binary container: 16-byte header then ``L`` little-endian float64 ``(re, im)`` pairs."""
    x = np.asarray(x, dtype=complex)
    body = np.empty(2 * x.size, dtype="<f8")
    body[0::2] = x.real
    body[1::2] = x.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, x.size, 0, 0))
        fh.write(body.tobytes())


def read_signal(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, L, _, _ = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0 (expected {MAGIC!r})")
    expected = _HEADER.size + 16 * L
    if len(data) != expected:
        raise FormatError(f"{path}: header says L={L} ({expected} bytes) but file has {len(data)} bytes")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    return body[0::2] + 1j * body[1::2]


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


def read_csv(path, expected: list[str] | None = None) -> dict[str, np.ndarray]:
    """Columns of a headed numeric CSV as float arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if expected is not None and header != expected:
            raise FormatError(f"{path}:1: header {header} != expected {expected}")
        cols: list[list[float]] = [[] for _ in header]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for j, v in enumerate(row):
                try:
                    cols[j].append(float(v))
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: column {header[j]!r}: "
                                      f"cannot parse {v!r}") from None
    return {h: np.array(c) for h, c in zip(header, cols)}


def write_signal_csv(path, x: np.ndarray) -> None:
    x = np.asarray(x, dtype=complex)
    write_csv(path, ["t", "re", "im"], zip(range(x.size), x.real, x.imag))


def read_signal_csv(path) -> np.ndarray:
    cols = read_csv(path, ["t", "re", "im"])
    t = cols["t"]
    if not np.array_equal(t, np.arange(t.size)):
        bad = int(np.flatnonzero(t != np.arange(t.size))[0])
        raise FormatError(f"{path}:{bad + 2}: sample index {t[bad]:g} out of sequence")
    return cols["re"] + 1j * cols["im"]
