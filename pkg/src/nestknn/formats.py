"""Binary envelope and columnar sample interchange formats.

Envelope layout (all integers little-endian)::

    b"APDB"            magic
    u16                format version
    u16                kind code (0 samples, 1 database, 2 index, 3 grid)
    u32                section count
    section table      per section: 4-byte tag, u64 offset, u64 length
    payloads           concatenated in table order
    u64                checksum: BLAKE2b-64 of every preceding byte

Sample records are fixed-width little-endian structs (see `record_dtype`).
The text form is a comma-delimited table whose first line is
``#channels=N;order=name1,name2,...`` followed by a column-name line.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import MatchedSample, PhaseLabel, Query
from .errors import ChecksumError, FormatError, TruncatedFileError, VersionError

MAGIC = b"APDB"
FORMAT_VERSION = 1
KIND_SAMPLES, KIND_DATABASE, KIND_INDEX, KIND_GRID = 0, 1, 2, 3

_HEADER = struct.Struct("<4sHHI")
_ENTRY = struct.Struct("<4sQQ")
_CHECKSUM = struct.Struct("<Q")

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_NO_PHASE = 0


def checksum64(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def pack_envelope(kind: int, sections: Sequence[tuple[bytes, bytes]]) -> bytes:
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, kind, len(sections))
    offset = len(header) + _ENTRY.size * len(sections)
    table = []
    for tag, payload in sections:
        if len(tag) != 4:
            raise ValueError(f"section tag must be 4 bytes, got {tag!r}")
        table.append(_ENTRY.pack(tag, offset, len(payload)))
        offset += len(payload)
    body = header + b"".join(table) + b"".join(p for _, p in sections)
    return body + _CHECKSUM.pack(checksum64(body))


def unpack_envelope(data: bytes, expected_kind: int | None = None) -> dict[bytes, bytes]:
    """Verify and split an envelope; returns an ordered tag -> payload mapping."""
    if len(data) < _HEADER.size + _CHECKSUM.size:
        raise TruncatedFileError(f"file too short ({len(data)} bytes) for an APDB envelope")
    magic, version, kind, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported format version {version} (this build reads {FORMAT_VERSION})")
    table_end = _HEADER.size + _ENTRY.size * count
    if len(data) < table_end + _CHECKSUM.size:
        raise TruncatedFileError("file truncated inside the section table")
    entries = [_ENTRY.unpack_from(data, _HEADER.size + i * _ENTRY.size) for i in range(count)]
    payload_end = max((off + n for _, off, n in entries), default=table_end)
    if len(data) < payload_end + _CHECKSUM.size:
        raise TruncatedFileError(
            f"file truncated: {len(data)} bytes, sections need {payload_end + _CHECKSUM.size}"
        )
    if len(data) != payload_end + _CHECKSUM.size:
        raise FormatError("trailing bytes after checksum")
    (stored,) = _CHECKSUM.unpack_from(data, payload_end)
    if stored != checksum64(data[:payload_end]):
        raise ChecksumError("checksum mismatch: file is corrupt")
    if expected_kind is not None and kind != expected_kind:
        raise FormatError(f"envelope holds kind {kind}, expected {expected_kind}")
    return {tag: bytes(data[off:off + n]) for tag, off, n in entries}


def envelope_checksum(path) -> int:
    data = Path(path).read_bytes()
    return _CHECKSUM.unpack_from(data, len(data) - _CHECKSUM.size)[0]


def record_dtype(channel_count: int) -> np.dtype:
    return np.dtype([
        ("sample_id", "<u8"),
        ("tb", "<f8", (channel_count,)),
        ("rate", "<f8"),
        ("active_phase", "<i1"),
        ("passive_phase_prob", "<f8"),
        ("ref_phase", "<i1"),
        ("snow_fraction", "<f8"),
        ("skin_temp", "<f8"),
        ("air_temp", "<f8"),
        ("latitude", "<f8"),
        ("longitude", "<f8"),
        ("timestamp_us", "<i8"),
    ])


def _to_us(ts: datetime) -> int:
    delta = ts - _EPOCH
    return (delta.days * 86400 + delta.seconds) * 1_000_000 + delta.microseconds


def _from_us(us: int) -> datetime:
    return _EPOCH + timedelta(microseconds=int(us))


def samples_to_records(samples: Sequence[MatchedSample], channel_count: int) -> np.ndarray:
    rec = np.zeros(len(samples), dtype=record_dtype(channel_count))
    for i, s in enumerate(samples):
        rec[i] = (
            s.sample_id, s.tb, s.rate,
            _NO_PHASE if s.active_phase is None else int(s.active_phase),
            math.nan if s.passive_phase_prob is None else s.passive_phase_prob,
            _NO_PHASE if s.ref_phase is None else int(s.ref_phase),
            s.snow_fraction, s.skin_temp, s.air_temp, s.latitude, s.longitude,
            _to_us(s.timestamp),
        )
    return rec


def records_to_samples(rec: np.ndarray) -> list[MatchedSample]:
    out = []
    for r in rec.tolist():
        sid, tb, rate, act, pprob, ref, snow, skin, air, lat, lon, us = r
        out.append(MatchedSample(
            sample_id=int(sid), tb=tuple(tb), rate=rate, snow_fraction=snow,
            skin_temp=skin, air_temp=air, latitude=lat, longitude=lon,
            timestamp=_from_us(us),
            active_phase=None if act == _NO_PHASE else PhaseLabel(act),
            passive_phase_prob=None if math.isnan(pprob) else pprob,
            ref_phase=None if ref == _NO_PHASE else PhaseLabel(ref),
        ))
    return out


def _header_json(channel_order: Sequence[str]) -> bytes:
    return json.dumps({"channel_count": len(channel_order), "channel_order": list(channel_order)},
                      sort_keys=True).encode()


def write_samples_binary(path, samples: Sequence[MatchedSample], channel_order: Sequence[str]) -> None:
    rec = samples_to_records(samples, len(channel_order))
    data = pack_envelope(KIND_SAMPLES, [(b"META", _header_json(channel_order)), (b"SMPL", rec.tobytes())])
    Path(path).write_bytes(data)


# ---------------------------------------------------------------- text form

_COLUMNS_TAIL = ("rate", "active_phase", "passive_phase_prob", "ref_phase", "snow_fraction",
                 "skin_temp", "air_temp", "latitude", "longitude", "timestamp")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, PhaseLabel):
        return v.name.lower()
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, datetime):
        return v.astimezone(timezone.utc).isoformat()
    return str(v)


def write_samples_text(path, samples: Iterable[MatchedSample], channel_order: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"#channels={len(channel_order)};order={','.join(channel_order)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("sample_id", *(f"tb_{c}" for c in channel_order), *_COLUMNS_TAIL))
        for s in samples:
            w.writerow((s.sample_id, *(_fmt(float(v)) for v in s.tb), _fmt(float(s.rate)),
                        _fmt(s.active_phase), _fmt(s.passive_phase_prob), _fmt(s.ref_phase),
                        _fmt(float(s.snow_fraction)), _fmt(float(s.skin_temp)),
                        _fmt(float(s.air_temp)), _fmt(float(s.latitude)),
                        _fmt(float(s.longitude)), _fmt(s.timestamp)))


def _parse_header(line: str) -> list[str]:
    if not line.startswith("#"):
        raise FormatError("sample file must start with '#channels=N;order=...'")
    fields = dict(part.split("=", 1) for part in line[1:].strip().split(";") if "=" in part)
    try:
        n = int(fields["channels"])
        order = fields["order"].split(",") if fields.get("order") else []
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed sample-file header {line.strip()!r}") from exc
    if len(order) != n:
        raise FormatError(f"header declares {n} channels but orders {len(order)}")
    return order


def _phase(text: str):
    return PhaseLabel[text.upper()] if text else None


def _read_text_rows(path):
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first:
            raise FormatError(f"{path}: empty sample file")
        order = _parse_header(first)
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["sample_id", *(f"tb_{c}" for c in order), *_COLUMNS_TAIL]
        if header != expected:
            raise FormatError(f"{path}: column line does not match the declared channel order")
        rows = list(reader)
    return order, rows


def _row_fields(row, n, lineno, path):
    if len(row) != n + 11:
        raise FormatError(f"{path}:{lineno}: expected {n + 11} fields, found {len(row)}")
    return row[0], row[1:n + 1], row[n + 1:]


def read_samples(path) -> tuple[list[MatchedSample], list[str]]:
    """Read a text or binary sample file. Returns (samples, channel_order)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == MAGIC:
        sections = unpack_envelope(raw, KIND_SAMPLES)
        meta = json.loads(sections[b"META"])
        dt = record_dtype(meta["channel_count"])
        blob = sections[b"SMPL"]
        if len(blob) % dt.itemsize:
            raise TruncatedFileError(f"{path}: record section is not a whole number of records")
        return records_to_samples(np.frombuffer(blob, dtype=dt)), meta["channel_order"]
    order, rows = _read_text_rows(path)
    n = len(order)
    out = []
    for lineno, row in enumerate(rows, start=3):
        sid, tb, tail = _row_fields(row, n, lineno, path)
        rate, act, pprob, ref, snow, skin, air, lat, lon, ts = tail
        try:
            out.append(MatchedSample(
                sample_id=int(sid), tb=tuple(float(v) for v in tb), rate=float(rate),
                snow_fraction=float(snow), skin_temp=float(skin), air_temp=float(air),
                latitude=float(lat), longitude=float(lon),
                timestamp=datetime.fromisoformat(ts),
                active_phase=_phase(act),
                passive_phase_prob=float(pprob) if pprob else None,
                ref_phase=_phase(ref),
            ))
        except (ValueError, KeyError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out, order


def read_queries(path) -> tuple[list[Query], list[str]]:
    """Read a sample file whose truth columns may be empty.

    A zero-byte file holds no queries and returns ``([], [])``.
    """
    path = Path(path)
    raw = path.read_bytes()
    if not raw:
        return [], []
    if raw[:4] == MAGIC:
        samples, order = read_samples(path)
        return [s.as_query() for s in samples], order
    order, rows = _read_text_rows(path)
    n = len(order)
    out = []
    for lineno, row in enumerate(rows, start=3):
        sid, tb, tail = _row_fields(row, n, lineno, path)
        snow, lat, lon, ts = tail[4], tail[7], tail[8], tail[9]
        try:
            out.append(Query(int(sid), tuple(float(v) for v in tb), float(snow),
                             float(lat), float(lon), datetime.fromisoformat(ts)))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out, order
