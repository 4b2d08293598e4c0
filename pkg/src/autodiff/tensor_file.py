"""
Binary container for named float64 tensors

Layout (all integers little-endian):

    magic            8 bytes      identifies the payload kind
    version          u32          FORMAT_VERSION
    n_header         u32          number of header integers
    header           i64 * n_header
    n_blocks         u32
    per block:
        name_len     u32
        name         UTF-8 bytes
        rank         u32
        dims         u64 * rank
        data         little-endian f64, row-major, prod(dims) values

Policy checkpoints, pruner checkpoints and demonstration datasets all use this
container; only the magic string and the meaning of the header differ.
"""

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from ..errors import CheckpointError

FORMAT_VERSION = 1
MAGIC_LEN = 8


@dataclass
class TensorFile:
    magic: bytes
    header: List[int]
    blocks: Dict[str, np.ndarray] = field(default_factory=dict)


def encode_tensor_file(magic: bytes, header: Sequence[int], blocks: Dict[str, np.ndarray]) -> bytes:
    if len(magic) != MAGIC_LEN:
        raise CheckpointError(f"magic must be {MAGIC_LEN} bytes, got {magic!r}")
    buf = io.BytesIO()
    buf.write(magic)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(header)))
    for value in header:
        buf.write(struct.pack("<q", int(value)))
    buf.write(struct.pack("<I", len(blocks)))
    for name, array in blocks.items():
        raw_name = name.encode("utf-8")
        arr = np.ascontiguousarray(array, dtype="<f8")
        buf.write(struct.pack("<I", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(arr.tobytes(order="C"))
    return buf.getvalue()


def decode_tensor_file(payload: bytes, source: str = "<bytes>") -> TensorFile:
    view = memoryview(payload)
    offset = 0

    def take(n: int) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise CheckpointError(f"{source}: truncated at byte {offset}")
        chunk = view[offset:offset + n]
        offset += n
        return chunk

    magic = bytes(take(MAGIC_LEN))
    version, n_header = struct.unpack("<II", take(8))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{source}: unsupported format version {version}")
    header = [struct.unpack("<q", take(8))[0] for _ in range(n_header)]
    (n_blocks,) = struct.unpack("<I", take(4))
    blocks: Dict[str, np.ndarray] = {}
    for _ in range(n_blocks):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = tuple(struct.unpack("<Q", take(8))[0] for _ in range(rank))
        count = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(bytes(take(8 * count)), dtype="<f8").astype(np.float64)
        blocks[name] = data.reshape(dims)
    if offset != len(view):
        raise CheckpointError(f"{source}: {len(view) - offset} trailing bytes")
    return TensorFile(magic=magic, header=header, blocks=blocks)


def write_tensor_file(path: Union[str, Path], magic: bytes, header: Sequence[int],
                      blocks: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor_file(magic, header, blocks))
    return path


def read_tensor_file(path: Union[str, Path], expected_magic: bytes = None) -> TensorFile:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"file not found: {path}")
    result = decode_tensor_file(path.read_bytes(), source=str(path))
    if expected_magic is not None and result.magic != expected_magic:
        raise CheckpointError(
            f"{path}: expected a {expected_magic.decode('ascii', 'replace')} file, "
            f"found {result.magic.decode('ascii', 'replace')}"
        )
    return result
