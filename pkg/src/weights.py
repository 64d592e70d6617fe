"""
Pesos de un clasificador y su formato binario FOCW.

Estructura del fichero (little-endian):
    b"FOCW" | u32 versión | u32 K | u32 número de bloques
    por bloque: u32 longitud del nombre | nombre UTF-8 | u32 rango | u32 dimensiones... | float32 valores (row-major)

Las estadísticas de la normalización por lotes se guardan como bloques normales.
"""
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .exceptions import CacheError
from .models import ModelCard

logger = logging.getLogger(__name__)

MAGIC = b"FOCW"
VERSION = 1


@dataclass
class ModelWeights:
    """Bloques de parámetros con nombre (float32) y número de clases K."""
    blocks: Dict[str, np.ndarray] = field(default_factory=dict)
    num_classes: int = 4

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"K debe ser al menos 2, recibido {self.num_classes}")
        for name, value in self.blocks.items():
            if name.endswith("running_var") and np.any(value <= 0):
                raise ValueError(f"el bloque '{name}' tiene varianzas no positivas")

    def equals(self, other: "ModelWeights") -> bool:
        """Igualdad bit a bit, incluido el orden de los bloques."""
        if self.num_classes != other.num_classes or list(self.blocks) != list(other.blocks):
            return False
        return all(self.blocks[name].shape == other.blocks[name].shape
                   and self.blocks[name].tobytes() == other.blocks[name].tobytes() for name in self.blocks)


def encode_weights(weights: ModelWeights) -> bytes:
    parts = [MAGIC, struct.pack("<III", VERSION, weights.num_classes, len(weights.blocks))]
    for name, value in weights.blocks.items():
        encoded = name.encode("utf-8")
        array = np.ascontiguousarray(value, dtype="<f4")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape))
        parts.append(array.tobytes())
    return b"".join(parts)


def decode_weights(payload: bytes, path: Optional[str] = None) -> ModelWeights:
    offset = 0

    def take(size: int) -> bytes:
        nonlocal offset
        if offset + size > len(payload):
            raise CacheError(f"fichero truncado: se esperaban {size} bytes más", path=path, offset=offset)
        chunk = payload[offset:offset + size]
        offset += size
        return chunk

    if take(4) != MAGIC:
        raise CacheError("cabecera FOCW no válida", path=path, offset=0)
    version, num_classes, count = struct.unpack("<III", take(12))
    if version != VERSION:
        raise CacheError(f"versión FOCW no soportada: {version}", path=path, offset=4)

    blocks: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_length,) = struct.unpack("<I", take(4))
        name_offset = offset
        try:
            name = take(name_length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CacheError("nombre de bloque no es UTF-8", path=path, offset=name_offset) from e
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        size = int(np.prod(shape)) if shape else 1
        blocks[name] = np.frombuffer(take(4 * size), dtype="<f4").astype(np.float32).reshape(shape)
    if offset != len(payload):
        raise CacheError(f"{len(payload) - offset} bytes sobrantes tras el último bloque", path=path, offset=offset)
    return ModelWeights(blocks=blocks, num_classes=num_classes)


def save_weights(weights: ModelWeights, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(encode_weights(weights))
    logger.info(f"✅ Pesos guardados en {path} ({len(weights.blocks)} bloques)")
    return path


def load_weights(path: str) -> ModelWeights:
    try:
        with open(path, "rb") as handle:
            payload = handle.read()
    except OSError as e:
        logger.error(f"❌ No se pudieron leer los pesos {path}: {e}")
        raise
    return decode_weights(payload, path=path)


def card_path(weights_path: str) -> str:
    """Ruta de la ficha JSON que acompaña a un fichero de pesos."""
    return os.path.splitext(weights_path)[0] + ".card.json"


def save_card(card: ModelCard, weights_path: str) -> str:
    path = card_path(weights_path)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(card.model_dump(mode="json"), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def load_card(weights_path: str) -> Optional[ModelCard]:
    path = card_path(weights_path)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as handle:
        return ModelCard.model_validate(json.load(handle))
