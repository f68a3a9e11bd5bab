"""Binary index persistence.

Little-endian layout:

    magic "CDIT" | version u32 | kind u8 | dim u32 | count u64
    id table: count entries of (u32 byte length, utf-8 bytes)
    vector block: count * dim float32
    kind block:
        flat: empty
        ivf:  nlist u32, nprobe u32, kmeans_iters u32, seed u64,
              centroids nlist*dim float32, assignments count u32
        hnsw: M u32, ef_construction u32, ef_search u32, seed u64,
              entry_row u32, levels count u32,
              per node and per layer: neighbor count u32 + neighbor rows u32
    cut block: pair count u64, per pair (lo row u32, hi row u32)
    checksum: 8-byte blake2b digest of all preceding bytes

Any structural violation or checksum mismatch raises CorruptIndex.
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np

from ..errors import CorruptIndex, IoError, MalformedRecord
from .base import (
    KIND_FLAT,
    KIND_HNSW,
    KIND_IVF,
    CutSet,
    HnswParams,
    IndexConfig,
    IvfParams,
)
from .flat import FlatIndex
from .hnsw import HNSWIndex
from .ivf import IVFFlatIndex

MAGIC = b"CDIT"
VERSION = 1

_KIND_CODES = {KIND_FLAT: 0, KIND_IVF: 1, KIND_HNSW: 2}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def pack(self, fmt: str, *values) -> None:
        self.parts.append(struct.pack("<" + fmt, *values))

    def raw(self, data: bytes) -> None:
        self.parts.append(data)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CorruptIndex("index file ends mid-record")
        values = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return values if len(values) > 1 else values[0]

    def raw(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise CorruptIndex("index file ends mid-record")
        out = self.data[self.pos : self.pos + size]
        self.pos += size
        return out

    def done(self) -> bool:
        return self.pos == len(self.data)


def save(index, path) -> None:
    """Serialize the index with a trailing checksum."""
    w = _Writer()
    w.raw(MAGIC)
    w.pack("I", VERSION)
    w.pack("B", _KIND_CODES[index.kind])
    w.pack("I", index.config.dim)
    count = len(index.ids)
    w.pack("Q", count)
    for sid in index.ids:
        encoded = sid.encode("utf-8")
        w.pack("I", len(encoded))
        w.raw(encoded)
    w.raw(np.ascontiguousarray(index.matrix, dtype="<f4").tobytes())

    if index.kind == KIND_IVF:
        ivf = index.config.ivf
        w.pack("IIIQ", ivf.nlist, ivf.nprobe, ivf.kmeans_iters, ivf.seed)
        w.raw(np.ascontiguousarray(index.centroids, dtype="<f4").tobytes())
        w.raw(np.ascontiguousarray(index.assignments, dtype="<u4").tobytes())
    elif index.kind == KIND_HNSW:
        hp = index.config.hnsw
        w.pack("IIIQ", hp.M, hp.ef_construction, hp.ef_search, index.config.seed)
        w.pack("I", index.entry_row)
        for level in index.levels:
            w.pack("I", level)
        for row in range(count):
            for layer_list in index.adjacency[row]:
                w.pack("I", len(layer_list))
                for nb in layer_list:
                    w.pack("I", nb)

    pairs = sorted(index.cuts)
    w.pack("Q", len(pairs))
    for key in pairs:
        w.pack("II", index.row_of[key.lo], index.row_of[key.hi])

    payload = w.getvalue()
    try:
        with open(path, "wb") as fh:
            fh.write(payload + _checksum(payload))
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def load(path):
    """Read an index back; verifies the checksum before parsing."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if len(blob) < len(MAGIC) + 8:
        raise CorruptIndex("file too short to be an index")
    payload, stored = blob[:-8], blob[-8:]
    if _checksum(payload) != stored:
        raise CorruptIndex("checksum mismatch")
    r = _Reader(payload)
    if r.raw(4) != MAGIC:
        raise CorruptIndex("bad magic")
    version = r.unpack("I")
    if version != VERSION:
        raise CorruptIndex(f"unsupported version {version}")
    kind_code = r.unpack("B")
    if kind_code not in _KIND_NAMES:
        raise CorruptIndex(f"unknown kind code {kind_code}")
    kind = _KIND_NAMES[kind_code]
    dim = r.unpack("I")
    count = r.unpack("Q")
    if dim < 1 or count < 1:
        raise CorruptIndex("empty or dimensionless index")

    ids = []
    for _ in range(count):
        ln = r.unpack("I")
        try:
            ids.append(r.raw(ln).decode("utf-8"))
        except UnicodeDecodeError as e:
            raise CorruptIndex(f"bad id bytes: {e}") from e
    if len(set(ids)) != count:
        raise CorruptIndex("duplicate ids in index file")
    matrix = np.frombuffer(r.raw(4 * dim * count), dtype="<f4").reshape(count, dim)

    try:
        if kind == KIND_FLAT:
            config = IndexConfig(kind=kind, dim=dim)
        elif kind == KIND_IVF:
            nlist, nprobe, iters, seed = r.unpack("IIIQ")
            config = IndexConfig(
                kind=kind,
                dim=dim,
                ivf=IvfParams(nlist=nlist, nprobe=nprobe, kmeans_iters=iters, seed=seed),
            )
        else:
            m, efc, efs, seed = r.unpack("IIIQ")
            entry_row = r.unpack("I")
            config = IndexConfig(
                kind=kind,
                dim=dim,
                seed=seed,
                hnsw=HnswParams(M=m, ef_construction=efc, ef_search=efs),
            )
    except MalformedRecord as e:
        raise CorruptIndex(f"stored config is invalid: {e}") from e

    if kind == KIND_FLAT:
        index = FlatIndex(config, ids, matrix)
    elif kind == KIND_IVF:
        centroids = np.frombuffer(r.raw(4 * dim * config.ivf.nlist), dtype="<f4").reshape(
            config.ivf.nlist, dim
        )
        assignments = np.frombuffer(r.raw(4 * count), dtype="<u4")
        if assignments.size and int(assignments.max()) >= config.ivf.nlist:
            raise CorruptIndex("assignment points past the last centroid")
        index = IVFFlatIndex(config, ids, matrix, centroids, assignments)
    else:
        levels = [r.unpack("I") for _ in range(count)]
        if not 0 <= entry_row < count:
            raise CorruptIndex("entry row out of range")
        adjacency = []
        for row in range(count):
            layers = []
            for _ in range(levels[row] + 1):
                n_nb = r.unpack("I")
                lst = []
                for _ in range(n_nb):
                    nb = r.unpack("I")
                    if not 0 <= nb < count or nb == row:
                        raise CorruptIndex("neighbor row out of range")
                    lst.append(nb)
                layers.append(sorted(lst))
            adjacency.append(layers)
        index = HNSWIndex(config, ids, matrix, levels, adjacency, entry_row)

    n_pairs = r.unpack("Q")
    cuts = CutSet()
    for _ in range(n_pairs):
        lo, hi = r.unpack("II")
        if not (0 <= lo < count and 0 <= hi < count):
            raise CorruptIndex("cut pair row out of range")
        try:
            cuts.add(ids[lo], ids[hi])
        except Exception as e:
            raise CorruptIndex(f"bad cut pair: {e}") from e
    if not r.done():
        raise CorruptIndex("trailing bytes after cut block")
    index.cuts = cuts
    return index
