"""Matrix-sequence file formats: the MSEQ binary container and CSV frame directories.

MSEQ layout: 9-byte magic "DFLIMSEQ1", then p1, p2, n as 32-bit unsigned
little-endian, then n*p1*p2 float64 little-endian values, frame-major then
row-major. Round trips are bit-identical.
"""

import os
import struct

import numpy as np

from .errors import InvalidInput, ParseError

MSEQ_MAGIC = b"DFLIMSEQ1"
_HEADER = struct.Struct("<III")
HEADER_LEN = len(MSEQ_MAGIC) + _HEADER.size  # 21 bytes


def write_mseq(frames, path):
    frames = list(frames)
    if not frames:
        raise InvalidInput("cannot write an empty sequence")
    first = np.asarray(frames[0], dtype=np.float64)
    p1, p2 = first.shape
    with open(path, "wb") as fh:
        fh.write(MSEQ_MAGIC)
        fh.write(_HEADER.pack(p1, p2, len(frames)))
        for i, f in enumerate(frames):
            a = np.ascontiguousarray(f, dtype=np.float64)
            if a.shape != (p1, p2):
                raise InvalidInput(f"frame {i} shape {a.shape} != ({p1}, {p2})")
            fh.write(a.astype("<f8", copy=False).tobytes())


def read_mseq(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(MSEQ_MAGIC))
        if magic != MSEQ_MAGIC:
            raise ParseError(f"{path}: bad magic at byte 0 (got {magic!r})")
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ParseError(f"{path}: truncated header at byte {len(magic) + len(header)}")
        p1, p2, n = _HEADER.unpack(header)
        expected = 8 * n * p1 * p2
        payload = fh.read()
        if len(payload) != expected:
            raise ParseError(
                f"{path}: payload length {len(payload)} != expected {expected} "
                f"bytes after offset {HEADER_LEN}"
            )
    data = np.frombuffer(payload, dtype="<f8").reshape(n, p1, p2)
    return [data[i].astype(np.float64) for i in range(n)]


def write_csv_frames(frames, directory):
    os.makedirs(directory, exist_ok=True)
    frames = list(frames)
    width = max(4, len(str(len(frames))))
    for i, f in enumerate(frames):
        a = np.asarray(f, dtype=np.float64)
        np.savetxt(
            os.path.join(directory, f"frame_{i:0{width}d}.csv"), a, delimiter=","
        )


def read_csv_frames(directory):
    names = sorted(n for n in os.listdir(directory) if n.endswith(".csv"))
    if not names:
        raise ParseError(f"{directory}: no .csv frames found")
    frames = []
    shape = None
    for name in names:
        path = os.path.join(directory, name)
        rows = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rows.append([float(v) for v in line.split(",")])
                except ValueError as exc:
                    raise ParseError(f"{path}: row {lineno}: {exc}") from exc
                if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
                    raise ParseError(
                        f"{path}: row {lineno} has {len(rows[-1])} cells, "
                        f"expected {len(rows[0])}"
                    )
        frame = np.array(rows, dtype=np.float64)
        if shape is None:
            shape = frame.shape
        elif frame.shape != shape:
            raise ParseError(f"{path}: frame shape {frame.shape} != {shape}")
        frames.append(frame)
    return frames


def read_frames(path, fmt="mseq"):
    if fmt == "mseq":
        return read_mseq(path)
    if fmt == "csvdir":
        return read_csv_frames(path)
    raise InvalidInput(f"unknown format {fmt!r}")
