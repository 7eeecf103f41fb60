"""Binary checkpoints: magic line, 8-byte header length, JSON header, raw arrays.

Arrays are written little-endian float64 in row-major order, in the order
listed by the header's ``shapes``.
"""
import json
from pathlib import Path
from typing import List, Tuple

import numpy as np

from database.models import MlpConfig
from emulators.mlp import MlpModel
from utils.errors import ValidationError

MLP_MAGIC = b"SHIFTLAB-MLP-v1\n"
_DTYPE = np.dtype('<f8')


def encode_bundle(magic: bytes, header: dict, arrays) -> bytes:
    arrays = [np.ascontiguousarray(a, dtype=_DTYPE) for a in arrays]
    header = dict(header, shapes=[list(a.shape) for a in arrays])
    header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')
    parts = [magic, len(header_bytes).to_bytes(8, 'little'), header_bytes]
    parts.extend(a.tobytes(order='C') for a in arrays)
    return b"".join(parts)


def decode_bundle(magic: bytes, blob: bytes) -> Tuple[dict, List[np.ndarray]]:
    if not blob.startswith(magic):
        raise ValidationError(f"Not a {magic.decode().strip()} checkpoint")
    offset = len(magic)
    if len(blob) < offset + 8:
        raise ValidationError("Checkpoint truncated in header length")
    size = int.from_bytes(blob[offset:offset + 8], 'little')
    offset += 8
    try:
        header = json.loads(blob[offset:offset + size].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValidationError(f"Corrupt checkpoint header: {e}") from e
    offset += size

    arrays = []
    for shape in header.get("shapes", []):
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + count * _DTYPE.itemsize
        if end > len(blob):
            raise ValidationError("Checkpoint truncated in array data")
        arrays.append(np.frombuffer(blob[offset:end], dtype=_DTYPE).reshape(shape).copy())
        offset = end
    if offset != len(blob):
        raise ValidationError("Checkpoint has trailing bytes")
    return header, arrays


def mlp_to_bytes(model: MlpModel) -> bytes:
    return encode_bundle(MLP_MAGIC, {"config": model.config.model_dump(mode='json')}, model.parameters())


def mlp_from_bytes(blob: bytes) -> MlpModel:
    header, arrays = decode_bundle(MLP_MAGIC, blob)
    config = MlpConfig(**header["config"])
    return MlpModel(config, arrays[0::2], arrays[1::2])


def save_mlp(model: MlpModel, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(mlp_to_bytes(model))


def load_mlp(path) -> MlpModel:
    return mlp_from_bytes(Path(path).read_bytes())
