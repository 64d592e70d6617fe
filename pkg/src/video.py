"""
Secuencias de vídeo en luma y lectura/escritura YUV4MPEG2 (.y4m).

Solo se conserva el plano de luma; la crominancia se descarta al leer y se escribe
neutra (128) al guardar.
"""
import logging
import os
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .exceptions import ShapeError, Y4MError

logger = logging.getLogger(__name__)

SIGNATURE = b"YUV4MPEG2"
FRAME_TAG = b"FRAME"
# Bytes de crominancia por fotograma según el tag C, en función de (ancho, alto).
_CHROMA_SIZES = {
    "420": lambda w, h: 2 * ((w + 1) // 2) * ((h + 1) // 2),
    "422": lambda w, h: 2 * ((w + 1) // 2) * h,
    "444": lambda w, h: 2 * w * h,
    "mono": lambda w, h: 0,
}


@dataclass
class VideoSequence:
    """Fotogramas de luma con forma (N, U, V): U filas, V columnas."""
    frames: np.ndarray
    frame_rate: float = 30.0

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3 or frames.shape[0] < 1:
            raise ShapeError(f"se esperaban fotogramas (N, U, V), recibido {frames.shape}")
        self.frames = frames

    @property
    def N(self) -> int:
        return self.frames.shape[0]

    @property
    def U(self) -> int:
        return self.frames.shape[1]

    @property
    def V(self) -> int:
        return self.frames.shape[2]

    def __len__(self) -> int:
        return self.N

    def __getitem__(self, index: int) -> np.ndarray:
        return self.frames[index]

    def pad_to_block(self, block: int = 8) -> "VideoSequence":
        """Rellena por replicación del borde hasta múltiplos de `block`."""
        pad_u = -self.U % block
        pad_v = -self.V % block
        if not pad_u and not pad_v:
            return self
        return VideoSequence(np.pad(self.frames, ((0, 0), (0, pad_u), (0, pad_v)), mode="edge"), self.frame_rate)

    def as_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.frames), 0, 255).astype(np.uint8)


def _parse_header(line: bytes, path: str) -> Dict[str, str]:
    tokens = line.split()
    if not tokens or tokens[0] != SIGNATURE:
        raise Y4MError("la cabecera no empieza por YUV4MPEG2", path=path, offset=0)
    header: Dict[str, str] = {}
    offset = len(SIGNATURE) + 1
    for token in tokens[1:]:
        try:
            text = token.decode("ascii")
        except UnicodeDecodeError as e:
            raise Y4MError("cabecera con bytes no ASCII", path=path, offset=offset) from e
        header[text[0]] = text[1:]
        offset += len(token) + 1
    for required in ("W", "H"):
        if required not in header:
            raise Y4MError(f"falta el parámetro {required} en la cabecera", path=path, offset=0)
    return header


def _chroma_family(colorspace: str, path: str) -> str:
    if colorspace.startswith("420") and not colorspace.startswith("420p1"):
        return "420"
    if colorspace in ("422", "444", "mono"):
        return colorspace
    raise Y4MError(f"espacio de color no soportado: C{colorspace}", path=path, offset=0)


def _frame_rate(value: Optional[str]) -> float:
    if not value:
        return 30.0
    numerator, _, denominator = value.partition(":")
    try:
        return float(numerator) / float(denominator or 1)
    except (ValueError, ZeroDivisionError):
        return 30.0


def load_y4m(path: str) -> VideoSequence:
    """Lee un fichero YUV4MPEG2 (4:2:0, 4:2:2, 4:4:4 o mono, 8 bits) y devuelve su luma."""
    try:
        with open(path, "rb") as handle:
            payload = handle.read()
    except OSError as e:
        logger.error(f"❌ No se pudo abrir el vídeo {path}: {e}")
        raise

    end = payload.find(b"\n")
    if end < 0:
        raise Y4MError("cabecera sin fin de línea", path=path, offset=0)
    header = _parse_header(payload[:end], path)
    try:
        width, height = int(header["W"]), int(header["H"])
    except ValueError as e:
        raise Y4MError("dimensiones no numéricas en la cabecera", path=path, offset=0) from e
    if width <= 0 or height <= 0:
        raise Y4MError(f"dimensiones inválidas {width}x{height}", path=path, offset=0)
    family = _chroma_family(header.get("C", "420jpeg"), path)
    luma_size = width * height
    frame_size = luma_size + _CHROMA_SIZES[family](width, height)

    frames = []
    offset = end + 1
    while offset < len(payload):
        index = len(frames)
        line_end = payload.find(b"\n", offset)
        if line_end < 0 or not payload[offset:line_end].startswith(FRAME_TAG):
            raise Y4MError(f"marcador FRAME ausente en el fotograma {index}", path=path, offset=offset,
                           frame_index=index)
        start = line_end + 1
        if start + frame_size > len(payload):
            raise Y4MError(f"fotograma {index} truncado: {len(payload) - start} de {frame_size} bytes",
                           path=path, offset=start, frame_index=index)
        luma = np.frombuffer(payload, dtype=np.uint8, count=luma_size, offset=start)
        frames.append(luma.reshape(height, width).copy())
        offset = start + frame_size

    if not frames:
        raise Y4MError("el fichero no contiene fotogramas", path=path, offset=offset)
    logger.info(f"Vídeo {path} cargado: {len(frames)} fotogramas {width}x{height} (C{header.get('C', '420jpeg')})")
    return VideoSequence(np.stack(frames), frame_rate=_frame_rate(header.get("F")))


def write_y4m(video: VideoSequence, path: str, colorspace: str = "420jpeg") -> str:
    """Escribe la luma de `video` con crominancia neutra."""
    family = _chroma_family(colorspace, path)
    frames = video.as_uint8()
    height, width = frames.shape[1], frames.shape[2]
    rate = video.frame_rate
    numerator, denominator = (int(rate), 1) if float(rate).is_integer() else (int(round(rate * 1000)), 1000)
    header = f"YUV4MPEG2 W{width} H{height} F{numerator}:{denominator} Ip A1:1 C{colorspace}\n"
    chroma = np.full(_CHROMA_SIZES[family](width, height), 128, dtype=np.uint8).tobytes()

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(header.encode("ascii"))
        for frame in frames:
            handle.write(FRAME_TAG + b"\n")
            handle.write(np.ascontiguousarray(frame).tobytes())
            handle.write(chroma)
    logger.debug(f"Vídeo guardado: {path} ({len(frames)} fotogramas)")
    return path
