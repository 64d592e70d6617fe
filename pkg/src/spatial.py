"""
Localización espacial: mapas de activación, puntuación VER, fusión y mapa de calor.
"""
import logging
import os
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from PIL import Image
from scipy.stats import entropy

from .exceptions import ShapeError, ThresholdError
from .models import PATCH_SIZE, PatchGrid

logger = logging.getLogger(__name__)

VER_EPSILON = 1e-9


@dataclass
class FusedMap:
    values: np.ndarray
    weights: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


def activation_map(feature_map: np.ndarray) -> np.ndarray:
    """H_k = (F_k - media(F_k))² elemento a elemento."""
    feature_map = np.asarray(feature_map, dtype=np.float64)
    if feature_map.size == 0:
        raise ShapeError("mapa de características vacío")
    return (feature_map - feature_map.mean()) ** 2


def map_entropy(activation: np.ndarray) -> float:
    """Entropía de Shannon (bits) del mapa normalizado a suma 1; 0 si la suma es 0."""
    mass = np.asarray(activation, dtype=np.float64).ravel()
    if mass.sum() <= 0:
        return 0.0
    return float(entropy(mass, base=2))


def ver(activation: np.ndarray) -> float:
    """Cociente varianza/entropía del mapa de activación."""
    activation = np.asarray(activation, dtype=np.float64)
    if activation.size == 0:
        raise ShapeError("mapa de activación vacío")
    variance = float(activation.var())
    if variance == 0.0:
        return 0.0
    return variance / (map_entropy(activation) + VER_EPSILON)


def fuse(activations: Sequence[np.ndarray]) -> FusedMap:
    """Media ponderada por VER de los mapas; si todos los VER son 0, media sin pesos."""
    if len(activations) == 0:
        raise ShapeError("no hay mapas que fusionar")
    shapes = {np.shape(a) for a in activations}
    if len(shapes) != 1:
        raise ShapeError(f"mapas de formas distintas: {sorted(shapes)}")
    stack = np.stack([np.asarray(a, dtype=np.float64) for a in activations])
    weights = np.array([ver(a) for a in stack])
    total = weights.sum()
    if total <= 0:
        return FusedMap(values=stack.mean(axis=0), weights=weights)
    return FusedMap(values=np.tensordot(weights, stack, axes=1) / total, weights=weights)


def localize_frame(tensor: np.ndarray, components: slice = slice(None)) -> FusedMap:
    """Tensor (P_U, P_V, D) -> mapa fusionado usando las componentes indicadas."""
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.ndim != 3:
        raise ShapeError(f"se esperaba un tensor (P_U, P_V, D), recibido {tensor.shape}")
    selected = tensor[..., components]
    return fuse([activation_map(selected[..., k]) for k in range(selected.shape[-1])])


def classify_patches(fused, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """Máscara de parches falsificados (puntuación > umbral) y las puntuaciones."""
    if threshold < 0:
        raise ThresholdError(f"el umbral debe ser >= 0, recibido {threshold}")
    scores = np.asarray(getattr(fused, "values", fused), dtype=np.float64)
    return scores > threshold, scores


def normalize_map(values: np.ndarray) -> np.ndarray:
    """Normalización min-max a [0, 255]; un mapa constante da ceros."""
    values = np.asarray(values, dtype=np.float64)
    low, high = values.min(), values.max()
    if high <= low:
        return np.zeros_like(values)
    return (values - low) / (high - low) * 255.0


def render_heatmap(values, frame_shape: Tuple[int, int], stride: int) -> np.ndarray:
    """
    Imagen en escala de grises del tamaño del fotograma: cada celda normalizada se pinta
    sobre la huella de su parche y los solapes se promedian. Los píxeles que no cubre
    ningún parche quedan a 0.
    """
    values = np.asarray(getattr(values, "values", values), dtype=np.float64)
    rows, cols = frame_shape
    p_u, p_v = values.shape
    if (p_u - 1) * stride + PATCH_SIZE > rows or (p_v - 1) * stride + PATCH_SIZE > cols:
        raise ShapeError(f"la rejilla {values.shape} con paso {stride} no cabe en {rows}x{cols}")
    normalized = normalize_map(values)
    total = np.zeros((rows, cols))
    count = np.zeros((rows, cols))
    for i in range(p_u):
        for j in range(p_v):
            top, left = i * stride, j * stride
            total[top:top + PATCH_SIZE, left:left + PATCH_SIZE] += normalized[i, j]
            count[top:top + PATCH_SIZE, left:left + PATCH_SIZE] += 1
    image = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def window_mask_to_cells(mask: np.ndarray, grid: PatchGrid, min_fraction: float = 0.5) -> np.ndarray:
    """Verdad terreno por parche: falsificado si al menos `min_fraction` de su huella está en la máscara."""
    mask = np.asarray(mask, dtype=np.float64)
    integral = np.pad(mask.cumsum(axis=0).cumsum(axis=1), ((1, 0), (1, 0)))
    tops = np.arange(grid.P_U) * grid.stride
    lefts = np.arange(grid.P_V) * grid.stride
    t, l = np.meshgrid(tops, lefts, indexing="ij")
    b, r = t + PATCH_SIZE, l + PATCH_SIZE
    covered = integral[b, r] - integral[t, r] - integral[b, l] + integral[t, l]
    return covered >= min_fraction * PATCH_SIZE * PATCH_SIZE


# --- salidas ---

def write_pgm(image: np.ndarray, path: str) -> str:
    """Guarda una imagen uint8 como PGM binario (P5)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PPM")
    return path


def write_scores_csv(fused, path: str, mask: Optional[np.ndarray] = None) -> str:
    """CSV (fila de celda, columna de celda, puntuación[, etiqueta])."""
    scores = np.asarray(getattr(fused, "values", fused), dtype=np.float64)
    rows, cols = np.meshgrid(np.arange(scores.shape[0]), np.arange(scores.shape[1]), indexing="ij")
    table = pd.DataFrame({"row": rows.ravel(), "col": cols.ravel(), "score": scores.ravel()})
    if mask is not None:
        table["forged"] = np.asarray(mask, dtype=bool).ravel()
    table.to_csv(path, index=False)
    return path
