"""Persistence: diagnostics CSV, field snapshots, and checkpoints.

Numbers in CSV files are written with 17 significant digits so parsing
them back reproduces the doubles bit for bit.  Snapshots and
checkpoints use a short text header followed by a little-endian
float64 payload.
"""

from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import spectral as sp
from .diagnostics import CSV_COLUMNS, DiagnosticsRecord
from .dynamics import SimState
from .spectral import FieldCoeffs, SpectralBasis


class SnapshotFormatError(Exception):
    pass


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_diagnostics_csv(records, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for rec in records:
                row = rec.row() if isinstance(rec, DiagnosticsRecord) else rec
                writer.writerow(_fmt(x) for x in row)
    except OSError as exc:
        raise OSError(f"writing diagnostics CSV {path}: {exc}") from exc


def read_diagnostics_csv(path) -> list[tuple[float, ...]]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise SnapshotFormatError(f"unexpected CSV header in {path}")
        return [tuple(float(x) for x in row) for row in reader]


SNAPSHOT_MAGIC = "chd-snapshot 1"


def _basis_header(basis: SpectralBasis, t: float) -> bytes:
    lines = [
        SNAPSHOT_MAGIC,
        f"kind {basis.domain.kind}",
        "lengths " + " ".join(_fmt(L) for L in basis.domain.lengths),
        "modes " + " ".join(str(k) for k in basis.modes),
        f"t {_fmt(t)}",
    ]
    return ("\n".join(lines) + "\n\n").encode("ascii")


def _parse_header(fh) -> tuple[sp.Domain, tuple[int, ...], float]:
    def line():
        raw = fh.readline()
        if not raw.endswith(b"\n"):
            raise SnapshotFormatError("truncated snapshot header")
        try:
            return raw[:-1].decode("ascii")
        except UnicodeDecodeError as exc:
            raise SnapshotFormatError("corrupt snapshot header") from exc

    if line() != SNAPSHOT_MAGIC:
        raise SnapshotFormatError("bad snapshot magic")
    fields = {}
    for _ in range(4):
        key, _, rest = line().partition(" ")
        fields[key] = rest
    if line() != "":
        raise SnapshotFormatError("missing header terminator")
    try:
        domain = sp.Domain(fields["kind"],
                           tuple(float(x) for x in fields["lengths"].split()))
        modes = tuple(int(x) for x in fields["modes"].split())
        t = float(fields["t"])
    except (KeyError, ValueError, sp.InvalidDomainError) as exc:
        raise SnapshotFormatError(f"corrupt snapshot header: {exc}") from exc
    return domain, modes, t


def write_field_snapshot(state: SimState, path) -> None:
    path = Path(path)
    basis = state.basis
    payload = np.concatenate([state.alpha.data, state.gamma.data])
    try:
        with path.open("wb") as fh:
            fh.write(_basis_header(basis, state.t))
            fh.write(payload.astype("<f8").tobytes())
    except OSError as exc:
        raise OSError(f"writing snapshot {path}: {exc}") from exc


def read_field_snapshot(path, basis: SpectralBasis | None = None) -> SimState:
    path = Path(path)
    with path.open("rb") as fh:
        domain, modes, t = _parse_header(fh)
        if basis is None:
            basis = sp.build_basis(domain, modes)
        else:
            if basis.domain != domain or basis.modes != modes:
                raise SnapshotFormatError(
                    f"snapshot {path} was written for {domain.kind} "
                    f"{domain.lengths} modes {modes}, not the supplied basis"
                )
        n = basis.n_modes
        raw = fh.read(2 * n * 8)
        if len(raw) != 2 * n * 8:
            raise SnapshotFormatError(f"snapshot {path} payload truncated")
        data = np.frombuffer(raw, dtype="<f8").astype(float)
    return SimState(t, FieldCoeffs(basis, data[:n].copy()),
                    FieldCoeffs(basis, data[n:].copy()))


CHECKPOINT_MAGIC = "chd-checkpoint 1"


@dataclass
class Checkpoint:
    config_hash: str
    state: SimState
    accumulators: np.ndarray  # diagnostics integrals, 4 doubles


def write_checkpoint(ck: Checkpoint, path) -> None:
    path = Path(path)
    basis = ck.state.basis
    buf = _io.BytesIO()
    buf.write((CHECKPOINT_MAGIC + "\n").encode("ascii"))
    buf.write((f"config {ck.config_hash}\n").encode("ascii"))
    buf.write(_basis_header(basis, ck.state.t))
    payload = np.concatenate([
        ck.state.alpha.data, ck.state.gamma.data,
        np.asarray(ck.accumulators, dtype=float),
    ])
    buf.write(payload.astype("<f8").tobytes())
    try:
        path.write_bytes(buf.getvalue())
    except OSError as exc:
        raise OSError(f"writing checkpoint {path}: {exc}") from exc


def read_checkpoint(path, basis: SpectralBasis | None = None) -> Checkpoint:
    path = Path(path)
    with path.open("rb") as fh:
        first = fh.readline()
        if first != (CHECKPOINT_MAGIC + "\n").encode("ascii"):
            raise SnapshotFormatError("bad checkpoint magic")
        key, _, config_hash = fh.readline()[:-1].decode("ascii").partition(" ")
        if key != "config":
            raise SnapshotFormatError("missing config hash")
        domain, modes, t = _parse_header(fh)
        if basis is None:
            basis = sp.build_basis(domain, modes)
        elif basis.domain != domain or basis.modes != modes:
            raise SnapshotFormatError("checkpoint basis mismatch")
        n = basis.n_modes
        raw = fh.read((2 * n + 4) * 8)
        if len(raw) != (2 * n + 4) * 8:
            raise SnapshotFormatError("checkpoint payload truncated")
        data = np.frombuffer(raw, dtype="<f8").astype(float)
    state = SimState(t, FieldCoeffs(basis, data[:n].copy()),
                     FieldCoeffs(basis, data[n:2 * n].copy()))
    return Checkpoint(config_hash, state, data[2 * n:].copy())
