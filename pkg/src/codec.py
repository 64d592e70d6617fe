"""
Familia de códecs intra sintéticos sobre bloques de 8x8 y utilidades asociadas.

Sabores:
    A: DCT ortonormal + cuantificador plano
    B: DCT aproximada entera (round(4C)/4) + cuantificador plano
    C: DCT ortonormal + rampa perceptual 1 + (u + v)/4
    D: Hadamard ortonormal + cuantificador plano

La rejilla de bloques está anclada en el píxel (0, 0). Cada bloque se desplaza en nivel
(-128), se transforma, se cuantifica a Δ·W·round(coef / (Δ·W)), se reconstruye y se
recorta a [0, 255].
"""
import logging
import math
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.fft import dct, dctn, idctn
from scipy.linalg import hadamard
from scipy.ndimage import gaussian_filter

from .exceptions import CodecError
from .models import BLOCK_SIZE, CodecConfig, TextureParams
from .video import VideoSequence

logger = logging.getLogger(__name__)

LEVEL_SHIFT = 128.0


def dct8(block: np.ndarray) -> np.ndarray:
    """DCT-II 2-D ortonormal de un bloque de 8x8."""
    return dctn(np.asarray(block, dtype=np.float64), type=2, norm="ortho")


def idct8(coefficients: np.ndarray) -> np.ndarray:
    return idctn(np.asarray(coefficients, dtype=np.float64), type=2, norm="ortho")


@lru_cache(maxsize=None)
def transform_pair(flavor: str) -> Tuple[np.ndarray, np.ndarray]:
    """Matrices (directa, inversa) de 8x8 del sabor: coef = T X T^T, X = Ti coef Ti^T."""
    if flavor in ("A", "C"):
        forward = dct(np.eye(BLOCK_SIZE), type=2, norm="ortho", axis=0)
        inverse = forward.T
    elif flavor == "B":
        forward = np.round(4.0 * dct(np.eye(BLOCK_SIZE), type=2, norm="ortho", axis=0)) / 4.0
        inverse = np.linalg.inv(forward)
    elif flavor == "D":
        forward = hadamard(BLOCK_SIZE).astype(np.float64) / math.sqrt(BLOCK_SIZE)
        inverse = forward.T
    else:
        raise CodecError(f"sabor de códec desconocido: {flavor}")
    forward.setflags(write=False)
    inverse.setflags(write=False)
    return forward, inverse


@lru_cache(maxsize=None)
def weight_matrix(flavor: str) -> np.ndarray:
    """Matriz de pesos del cuantificador: plana, o rampa 1 + (u + v)/4 para el sabor C."""
    if flavor == "C":
        u, v = np.meshgrid(np.arange(BLOCK_SIZE), np.arange(BLOCK_SIZE), indexing="ij")
        weights = 1.0 + (u + v) / 4.0
    else:
        weights = np.ones((BLOCK_SIZE, BLOCK_SIZE))
    weights.setflags(write=False)
    return weights


def _to_blocks(frame: np.ndarray) -> np.ndarray:
    rows, cols = frame.shape
    return frame.reshape(rows // BLOCK_SIZE, BLOCK_SIZE, cols // BLOCK_SIZE, BLOCK_SIZE).transpose(0, 2, 1, 3)


def _from_blocks(blocks: np.ndarray) -> np.ndarray:
    n_u, n_v = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(n_u * BLOCK_SIZE, n_v * BLOCK_SIZE)


def _check_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2:
        raise CodecError(f"se esperaba un fotograma 2-D, recibido {frame.shape}")
    if frame.shape[0] % BLOCK_SIZE or frame.shape[1] % BLOCK_SIZE:
        raise CodecError(f"las dimensiones {frame.shape} no son múltiplos de {BLOCK_SIZE}")
    return frame


def blockwise_coefficients(frame: np.ndarray, flavor: str = "A") -> np.ndarray:
    """Coeficientes por bloque, forma (U/8, V/8, 8, 8), tras el desplazamiento de nivel."""
    forward, _ = transform_pair(flavor)
    blocks = _to_blocks(_check_frame(frame) - LEVEL_SHIFT)
    return np.einsum("ui,abij,vj->abuv", forward, blocks, forward, optimize=True)


def reconstruct_from_coefficients(coefficients: np.ndarray, flavor: str = "A") -> np.ndarray:
    _, inverse = transform_pair(flavor)
    blocks = np.einsum("iu,abuv,jv->abij", inverse, coefficients, inverse, optimize=True)
    return _from_blocks(blocks) + LEVEL_SHIFT


def quantize_coefficients(coefficients: np.ndarray, delta: float, flavor: str = "A") -> np.ndarray:
    """Cuantificación uniforme: Δ·W·round(coef / (Δ·W))."""
    if delta <= 0:
        raise CodecError(f"Δ debe ser positivo, recibido {delta}")
    step = delta * weight_matrix(flavor)
    return step * np.round(coefficients / step)


def encode_frame(frame: np.ndarray, config: CodecConfig) -> np.ndarray:
    """
    Codifica y decodifica un fotograma de luma.

    Si las dimensiones no son múltiplos de 8 se rellena por replicación del borde y se
    recorta al final. Con `round_output` la salida son enteros en [0, 255].
    """
    frame = np.asarray(frame, dtype=np.float64)
    rows, cols = frame.shape
    padded = np.pad(frame, ((0, -rows % BLOCK_SIZE), (0, -cols % BLOCK_SIZE)), mode="edge")
    coefficients = blockwise_coefficients(padded, config.flavor)
    quantized = quantize_coefficients(coefficients, config.delta, config.flavor)
    decoded = np.clip(reconstruct_from_coefficients(quantized, config.flavor), 0.0, 255.0)
    if config.round_output:
        decoded = np.rint(decoded)
    return decoded[:rows, :cols]


def encode_sequence(video: VideoSequence, config: CodecConfig, gop_period: int = 0) -> VideoSequence:
    """
    Codifica todos los fotogramas. Con `gop_period` > 0 cada fotograma cuyo índice es
    múltiplo del periodo se codifica con Δ/2 (el equivalente intra de la imagen I del GOP).
    """
    if gop_period < 0:
        raise CodecError(f"periodo de GOP negativo: {gop_period}")
    leading = config.model_copy(update={"delta": config.delta / 2.0})
    frames = [encode_frame(frame, leading if gop_period and index % gop_period == 0 else config)
              for index, frame in enumerate(video.frames)]
    encoded = np.stack(frames)
    if config.round_output:
        encoded = encoded.astype(np.uint8)
    return VideoSequence(encoded, frame_rate=video.frame_rate)


def psnr(reference: np.ndarray, test: np.ndarray, peak: float = 255.0) -> float:
    mse = float(np.mean((np.asarray(reference, dtype=np.float64) - np.asarray(test, dtype=np.float64)) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * math.log10(peak * peak / mse)


# --- mapeos Δ <-> q ---

def delta_from_q(family: str, q: float) -> float:
    """Paso de cuantificación equivalente al parámetro de calidad q."""
    if family == "h264":
        if q < 1:
            raise CodecError(f"q debe ser >= 1, recibido {q}")
        return 5.0 / 8.0 * 2.0 ** (q / 6.0)
    if family == "mpeg":
        if int(q) != q or not 1 <= q <= 31:
            raise CodecError(f"q debe ser un entero en [1, 31] para MPEG, recibido {q}")
        q = int(q)
        if q <= 4:
            return 8.0
        if q <= 8:
            return 2.0 * q
        if q <= 24:
            return q + 8.0
        return 2.0 * q - 16.0
    raise CodecError(f"familia desconocida: {family}")


def q_from_delta(family: str, delta: float) -> float:
    """Inverso aproximado: q cuyo Δ es el más cercano a `delta` (entero para MPEG)."""
    if delta <= 0:
        raise CodecError(f"Δ debe ser positivo, recibido {delta}")
    if family == "h264":
        return max(1.0, 6.0 * math.log2(delta * 8.0 / 5.0))
    if family == "mpeg":
        return float(min(range(1, 32), key=lambda q: (abs(delta_from_q("mpeg", q) - delta), q)))
    raise CodecError(f"familia desconocida: {family}")


# --- contenido sintético ---

def gen_texture(U: int, V: int, N: int, seed: int, params: Optional[TextureParams] = None) -> VideoSequence:
    """
    Secuencia de luma procedimental y determinista.

    Ruido blanco filtrado con una gaussiana (desviación unitaria) escalado por la amplitud,
    más un gradiente suave. La escena se desplaza horizontalmente `drift` píxeles por
    fotograma sobre un lienzo más ancho y cada fotograma añade un ruido temporal pequeño.
    `contrast_mix` modula la amplitud con un campo de baja frecuencia para mezclar
    parches de varianza alta y baja.
    """
    if U % BLOCK_SIZE or V % BLOCK_SIZE or U <= 0 or V <= 0:
        raise CodecError(f"las dimensiones {U}x{V} deben ser múltiplos positivos de {BLOCK_SIZE}")
    if N < 1:
        raise CodecError(f"se necesita al menos un fotograma, recibido {N}")
    params = params or TextureParams()
    rng = np.random.default_rng(seed)
    canvas_cols = V + int(math.ceil(params.drift * (N - 1))) + 1

    texture = gaussian_filter(rng.standard_normal((U, canvas_cols)), params.sigma, mode="wrap")
    texture /= texture.std() or 1.0
    amplitude = np.full((U, canvas_cols), params.amplitude)
    if params.contrast_mix > 0:
        low = gaussian_filter(rng.standard_normal((U, canvas_cols)), 24.0, mode="wrap")
        low = (low - low.min()) / (np.ptp(low) or 1.0)
        amplitude *= (1.0 - params.contrast_mix) + params.contrast_mix * 2.0 * low
    rows = np.linspace(-0.5, 0.5, U)[:, None]
    cols = np.linspace(-0.5, 0.5, canvas_cols)[None, :]
    scene = LEVEL_SHIFT + amplitude * texture + params.gradient * (rows + cols)

    frames = np.empty((N, U, V), dtype=np.uint8)
    for n in range(N):
        shift = int(round(n * params.drift))
        frame = scene[:, shift:shift + V] + params.temporal_noise * rng.standard_normal((U, V))
        frames[n] = np.clip(np.rint(frame), 0, 255).astype(np.uint8)
    return VideoSequence(frames)


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """Luma BT.601 de una imagen (..., 3) en escala 0-255."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise CodecError(f"se esperaban 3 canales, recibido {rgb.shape}")
    return rgb @ np.array([0.299, 0.587, 0.114])
