"""
Descriptores de parche, de fotograma y tensores de características.

El vector de un parche es la concatenación de las salidas softmax de los modelos
registrados en un ModelBank, en el orden de registro. Con el banco por defecto
(códec, calidad) el vector tiene 8 componentes: f_C = f[0:4], f_Q = f[4:8].

Caché FOCD (little-endian): b"FOCD" | u32 fotogramas | u32 P_U | u32 P_V | u32 longitud
del vector | float32 en orden fotograma, fila, columna, componente.
"""
import hashlib
import logging
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from . import config
from .exceptions import CacheError, ShapeError
from .network import FocalNet
from .patching import patch_grid
from .video import VideoSequence
from .weights import encode_weights, load_weights

logger = logging.getLogger(__name__)

FOCD_MAGIC = b"FOCD"
DESCRIPTOR_CLASSES = 4


@dataclass
class PatchDescriptor:
    f_C: np.ndarray
    f_Q: np.ndarray
    coords: Tuple[int, int] = (0, 0)

    @property
    def f(self) -> np.ndarray:
        return np.concatenate([self.f_C, self.f_Q])


@dataclass
class FrameDescriptor:
    f: np.ndarray
    n: int

    @property
    def f_C(self) -> np.ndarray:
        return self.f[:DESCRIPTOR_CLASSES]

    @property
    def f_Q(self) -> np.ndarray:
        return self.f[DESCRIPTOR_CLASSES:2 * DESCRIPTOR_CLASSES]


class ModelBank:
    """Registro ordenado de clasificadores con nombre."""

    def __init__(self, models: Optional[Dict[str, FocalNet]] = None):
        self.models: "OrderedDict[str, FocalNet]" = OrderedDict(models or {})

    @classmethod
    def from_files(cls, paths: Dict[str, str]) -> "ModelBank":
        bank = cls()
        for name, path in paths.items():
            bank.register(name, FocalNet.from_weights(load_weights(path)))
            logger.info(f"Modelo '{name}' cargado desde {path}")
        return bank

    def register(self, name: str, model: FocalNet) -> None:
        if name in self.models:
            raise ValueError(f"el modelo '{name}' ya está registrado")
        self.models[name] = model

    @property
    def depth(self) -> int:
        return sum(model.num_classes for model in self.models.values())

    def slices(self) -> Dict[str, slice]:
        """Rango de componentes de cada modelo dentro del vector concatenado, más `all`."""
        result, start = {}, 0
        for name, model in self.models.items():
            result[name] = slice(start, start + model.num_classes)
            start += model.num_classes
        result["all"] = slice(0, start)
        return result

    def subset(self, name: str) -> slice:
        slices = self.slices()
        if name not in slices:
            raise KeyError(f"subconjunto desconocido '{name}', disponibles: {list(slices)}")
        return slices[name]

    def digest(self) -> str:
        """SHA-256 de los pesos registrados, en orden."""
        sha = hashlib.sha256()
        for name, model in self.models.items():
            sha.update(name.encode("utf-8"))
            sha.update(encode_weights(model.to_weights()))
        return sha.hexdigest()


def default_bank(codec_model: FocalNet, quality_model: FocalNet) -> ModelBank:
    return ModelBank({"codec": codec_model, "quality": quality_model})


def patch_descriptor(patch: np.ndarray, codec_model: FocalNet, quality_model: FocalNet,
                     coords: Tuple[int, int] = (0, 0)) -> PatchDescriptor:
    for label, model in (("códec", codec_model), ("calidad", quality_model)):
        if model.num_classes != DESCRIPTOR_CLASSES:
            raise ShapeError(f"el modelo de {label} tiene K={model.num_classes}, se esperaba {DESCRIPTOR_CLASSES}")
    return PatchDescriptor(f_C=codec_model.forward_full(patch), f_Q=quality_model.forward_full(patch), coords=coords)


def frame_descriptor(descriptors, n: int = 0) -> FrameDescriptor:
    """Media elemento a elemento de los descriptores de parche de un fotograma."""
    if isinstance(descriptors, np.ndarray):
        vectors = descriptors.reshape(-1, descriptors.shape[-1])
    else:
        vectors = np.array([d.f if isinstance(d, PatchDescriptor) else d for d in descriptors])
    if vectors.size == 0 or len(vectors) == 0:
        raise ShapeError("no hay parches para promediar")
    return FrameDescriptor(f=vectors.mean(axis=0), n=n)


def feature_tensor(frame: np.ndarray, stride: int, bank: ModelBank) -> np.ndarray:
    """Tensor (P_U, P_V, profundidad): la celda (i, j) describe el parche con esquina (i·stride, j·stride)."""
    patch_grid(np.asarray(frame).shape, stride)
    maps = [model.dense_features(frame, stride) for model in bank.models.values()]
    return np.concatenate(maps, axis=-1).astype(np.float32)


def temporal_average(tensors: Sequence[np.ndarray]) -> np.ndarray:
    """Media elemento a elemento de W tensores con la misma rejilla."""
    if len(tensors) == 0:
        raise ShapeError("la ventana temporal está vacía")
    shape = np.shape(tensors[0])
    for tensor in tensors:
        if np.shape(tensor) != shape:
            raise ShapeError(f"rejillas distintas en la ventana: {np.shape(tensor)} frente a {shape}")
    return np.mean(np.stack(tensors), axis=0)


def sliding_average(tensors: np.ndarray, window: int) -> np.ndarray:
    """Medias de ventanas consecutivas [n, n + W) para todo n válido, forma (N - W + 1, ...)."""
    tensors = np.asarray(tensors, dtype=np.float64)
    if not 1 <= window <= len(tensors):
        raise ShapeError(f"ventana {window} inválida para {len(tensors)} fotogramas")
    cumulative = np.cumsum(np.concatenate([np.zeros_like(tensors[:1]), tensors]), axis=0)
    return (cumulative[window:] - cumulative[:-window]) / window


# --- caché FOCD ---

def write_focd(tensors: np.ndarray, path: str) -> str:
    tensors = np.ascontiguousarray(tensors, dtype="<f4")
    if tensors.ndim != 4:
        raise ShapeError(f"se esperaba (N, P_U, P_V, D), recibido {tensors.shape}")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(FOCD_MAGIC + struct.pack("<IIII", *tensors.shape))
        handle.write(tensors.tobytes())
    return path


def read_focd(path: str) -> np.ndarray:
    with open(path, "rb") as handle:
        payload = handle.read()
    if payload[:4] != FOCD_MAGIC:
        raise CacheError("cabecera FOCD no válida", path=path, offset=0)
    if len(payload) < 20:
        raise CacheError("cabecera FOCD truncada", path=path, offset=len(payload))
    shape = struct.unpack("<IIII", payload[4:20])
    expected = 20 + 4 * int(np.prod(shape))
    if len(payload) != expected:
        raise CacheError(f"tamaño {len(payload)} distinto del esperado {expected}", path=path,
                         offset=min(len(payload), expected))
    return np.frombuffer(payload, dtype="<f4", offset=20).astype(np.float32).reshape(shape)


def video_digest(video: VideoSequence) -> str:
    sha = hashlib.sha256()
    sha.update(struct.pack("<III", video.N, video.U, video.V))
    sha.update(np.ascontiguousarray(video.as_uint8()).tobytes())
    return sha.hexdigest()


def cache_key(video: VideoSequence, bank: ModelBank, stride: int) -> str:
    return hashlib.sha256(f"{video_digest(video)}:{bank.digest()}:{stride}".encode("ascii")).hexdigest()


def video_feature_tensors(video: VideoSequence, stride: int, bank: ModelBank,
                          cache_dir: Optional[str] = None) -> np.ndarray:
    """Tensores de todos los fotogramas, forma (N, P_U, P_V, profundidad), con caché FOCD opcional."""
    path = None
    if cache_dir:
        path = os.path.join(cache_dir, f"{cache_key(video, bank, stride)[:24]}.focd")
        if os.path.exists(path):
            try:
                cached = read_focd(path)
                logger.info(f"Descriptores leídos de la caché {path}")
                return cached
            except CacheError as e:
                logger.warning(f"⚠️ Caché inválida, se recalcula: {e.diagnostic()}")

    frames = tqdm(video.frames, desc=f"Descriptores (paso {stride})", unit="fot", disable=not config.PROGRESS,
                  leave=False)
    tensors = np.stack([feature_tensor(frame, stride, bank) for frame in frames])
    if path:
        write_focd(tensors, path)
    return tensors


def frame_descriptors(tensors: np.ndarray) -> np.ndarray:
    """Descriptor de cada fotograma (N, profundidad) como media de su tensor."""
    tensors = np.asarray(tensors)
    return tensors.reshape(tensors.shape[0], -1, tensors.shape[-1]).mean(axis=1, dtype=np.float64)


def describe_video(video: VideoSequence, stride: int, bank: ModelBank,
                   cache_dir: Optional[str] = None) -> List[FrameDescriptor]:
    vectors = frame_descriptors(video_feature_tensors(video, stride, bank, cache_dir))
    return [FrameDescriptor(f=vector, n=index + 1) for index, vector in enumerate(vectors)]
