"""
Extracción de parches de 64x64 alineados con la rejilla de codificación y filtro de varianza.
"""
import logging
from typing import List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ShapeError
from .models import BLOCK_SIZE, PATCH_SIZE, PatchGrid

logger = logging.getLogger(__name__)


def patch_grid(shape: Tuple[int, int], stride: int) -> PatchGrid:
    """Rejilla de parches de un fotograma (U, V). Los bordes sobrantes se descartan."""
    if stride <= 0 or stride % BLOCK_SIZE:
        raise ShapeError(f"el paso debe ser un múltiplo positivo de {BLOCK_SIZE}, recibido {stride}")
    rows, cols = shape
    if rows < PATCH_SIZE or cols < PATCH_SIZE:
        raise ShapeError(f"el fotograma {rows}x{cols} es menor que un parche de {PATCH_SIZE}x{PATCH_SIZE}")
    return PatchGrid(stride=stride, P_U=(rows - PATCH_SIZE) // stride + 1, P_V=(cols - PATCH_SIZE) // stride + 1)


def patch_array(frame: np.ndarray, stride: int) -> Tuple[np.ndarray, PatchGrid]:
    """Parches en orden de filas como array (P, 64, 64) (vista, sin copia) y su rejilla."""
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise ShapeError(f"se esperaba un fotograma 2-D, recibido {frame.shape}")
    grid = patch_grid(frame.shape, stride)
    windows = sliding_window_view(frame, (PATCH_SIZE, PATCH_SIZE))[::stride, ::stride][:grid.P_U, :grid.P_V]
    return windows.reshape(grid.P, PATCH_SIZE, PATCH_SIZE), grid


def extract_patches(frame: np.ndarray, stride: int) -> List[Tuple[np.ndarray, Tuple[int, int]]]:
    """Lista de (parche, (i, j)); la esquina del parche (i, j) es (i·stride, j·stride)."""
    patches, grid = patch_array(frame, stride)
    return [(patches[index], (int(i), int(j))) for index, (i, j) in enumerate(grid.coordinates())]


def patch_variances(patches: np.ndarray) -> np.ndarray:
    return np.asarray(patches, dtype=np.float64).reshape(len(patches), -1).var(axis=1)


def variance_mask(patches: np.ndarray, threshold: float = 1e3) -> np.ndarray:
    """Máscara booleana de los parches cuya varianza de luma (0-255) supera estrictamente el umbral."""
    if threshold < 0:
        raise ValueError(f"el umbral de varianza debe ser >= 0, recibido {threshold}")
    if len(patches) == 0:
        return np.zeros(0, dtype=bool)
    return patch_variances(patches) > threshold


def variance_filter(patches: np.ndarray, threshold: float = 1e3) -> np.ndarray:
    """Parches retenidos por el filtro de varianza."""
    patches = np.asarray(patches)
    return patches[variance_mask(patches, threshold)]


def retention_rate(patches: np.ndarray, threshold: float = 1e3) -> float:
    keep = variance_mask(patches, threshold)
    return float(keep.mean()) if keep.size else 0.0
