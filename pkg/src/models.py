"""
Tipos de dominio serializables (pydantic).

Los contenedores de arrays (vídeos, tensores de características, mapas) viven en sus
módulos como dataclasses; aquí solo están las estructuras que se validan, se guardan
en JSON o viajan por la configuración.
"""
from typing import Annotated, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, field_validator, model_validator

PATCH_SIZE = 64
BLOCK_SIZE = 8

# Orden de las clases. f_Q sigue el orden low -> high de los descriptores de calidad.
CODEC_CLASSES: Tuple[str, ...] = ("A", "B", "C", "D")
QUALITY_CLASSES: Tuple[str, ...] = ("low", "medium-low", "medium-high", "high")
QUALITY_DELTAS: Dict[str, float] = {"low": 40.0, "medium-low": 20.0, "medium-high": 10.0, "high": 5.0}

Flavor = Literal["A", "B", "C", "D"]


def _split_csv(value):
    """Permite escribir listas como `5,10,20,40` en el fichero de configuración."""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


FlavorList = Annotated[List[Flavor], BeforeValidator(_split_csv)]
FloatList = Annotated[List[float], BeforeValidator(_split_csv)]


# --- nn-core ---

class LayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = Field(..., description="Nombre del bloque de parámetros (conv1, fc2...)")
    kind: Literal["conv", "fc"] = Field(..., description="Tipo de capa")
    kernels: int = Field(..., ge=1, description="Número de kernels o de salidas")
    kernel_size: int = Field(1, ge=1, description="Tamaño del kernel w (píxeles)")
    stride: int = Field(1, ge=1, description="Paso s (píxeles)")
    padding: int = Field(0, ge=0, description="Relleno z (píxeles)")
    activation: Literal["bn_relu", "identity", "relu", "softmax"] = Field(..., description="Activación tras la capa")


class LayerGeom(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: int = Field(..., ge=1, description="Lado del mapa de salida (features)")
    j: int = Field(..., ge=1, description="Factor de salto (píxeles)")
    r: int = Field(..., ge=1, description="Tamaño del campo receptivo (píxeles)")
    c: float = Field(..., gt=0, description="Centro del campo receptivo de la primera feature")

    def as_tuple(self) -> Tuple[int, int, int, float]:
        return self.m, self.j, self.r, self.c


class TrainConfig(BaseModel):
    optimizer: Literal["sgdm", "adam"] = Field("sgdm", description="Optimizador")
    learning_rate: float = Field(5e-3, gt=0, description="Tasa de aprendizaje inicial")
    drop_factor: float = Field(0.5, gt=0, le=1, description="Factor de caída de la tasa")
    drop_period: int = Field(5, ge=1, description="Épocas entre caídas de la tasa")
    batch_size: int = Field(256, ge=1, description="Tamaño del lote")
    epochs: int = Field(50, ge=1, description="Presupuesto de épocas")
    momentum: float = Field(0.9, ge=0, lt=1, description="Momento de SGDM")
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_epsilon: float = Field(1e-8, gt=0)
    seed: int = Field(0, description="Semilla de inicialización y barajado")
    width: int = Field(64, ge=16, description="Anchura de canales de las capas convolucionales")
    fc1_relu: bool = Field(False, description="Aplicar ReLU tras FC-1 (por defecto identidad)")

    @classmethod
    def adam_recipe(cls, **overrides) -> "TrainConfig":
        """Receta del modelo de códec: Adam con parámetros estándar, sin caídas de tasa."""
        params = dict(optimizer="adam", learning_rate=1e-3, drop_factor=1.0, drop_period=5, batch_size=256)
        params.update(overrides)
        return cls(**params)


class ModelCard(BaseModel):
    """Ficha JSON que acompaña a cada fichero de pesos."""
    task: Literal["codec", "quality"]
    classes: List[str]
    width: int
    fc1_relu: bool = False
    weights_sha256: str = ""
    val_loss: Optional[float] = None
    test_accuracy: Optional[float] = None
    train_config: Dict = Field(default_factory=dict)
    thresholds: Dict[str, float] = Field(default_factory=dict, description="Umbrales de operación calibrados")
    calibration_dataset: Optional[str] = None


# --- codec-sim ---

class CodecConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    flavor: Flavor = Field("A", description="A: DCT + plano; B: DCT entera + plano; C: DCT + rampa; D: Hadamard + plano")
    delta: float = Field(..., gt=0, description="Paso de cuantificación Δ")
    block_size: Literal[8] = 8
    round_output: bool = Field(True, description="Redondear los píxeles reconstruidos a enteros")


class TextureParams(BaseModel):
    amplitude: float = Field(45.0, ge=0, description="Desviación típica de la textura filtrada")
    contrast_mix: float = Field(0.0, ge=0, le=1, description="Modulación espacial de la amplitud (0 = uniforme)")
    sigma: float = Field(1.2, gt=0, description="Sigma del filtro gaussiano")
    gradient: float = Field(20.0, ge=0, description="Amplitud del gradiente suave")
    drift: float = Field(1.0, ge=0, description="Desplazamiento horizontal por fotograma (píxeles)")
    temporal_noise: float = Field(1.0, ge=0, description="Ruido independiente por fotograma")


# --- patching ---

class PatchGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    stride: int = Field(..., ge=8)
    P_U: int = Field(..., ge=1)
    P_V: int = Field(..., ge=1)
    patch_size: int = PATCH_SIZE

    @field_validator("stride")
    @classmethod
    def _stride_multiple_of_block(cls, value: int) -> int:
        if value % BLOCK_SIZE:
            raise ValueError(f"el paso {value} no es múltiplo de {BLOCK_SIZE}")
        return value

    @property
    def P(self) -> int:
        return self.P_U * self.P_V

    @property
    def shape(self) -> Tuple[int, int]:
        return self.P_U, self.P_V

    def top_left(self, i: int, j: int) -> Tuple[int, int]:
        return i * self.stride, j * self.stride

    def coordinates(self) -> np.ndarray:
        """Coordenadas (i, j) de la rejilla en orden de filas, forma (P, 2)."""
        ii, jj = np.meshgrid(np.arange(self.P_U), np.arange(self.P_V), indexing="ij")
        return np.stack([ii.ravel(), jj.ravel()], axis=1)


# --- harness ---

class DatasetSpec(BaseModel):
    n_sources: int = Field(2, ge=1, description="Número de secuencias fuente")
    height: int = Field(256, ge=64, description="U: filas del fotograma")
    width: int = Field(320, ge=64, description="V: columnas del fotograma")
    frames: int = Field(96, ge=2, description="Fotogramas por vídeo (mitad y mitad en los empalmes temporales)")
    frame_rate: int = Field(30, ge=1)
    flavors: FlavorList = Field(default_factory=lambda: list(CODEC_CLASSES))
    deltas: FloatList = Field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0])
    window: Tuple[int, int] = Field((128, 160), description="Tamaño (filas, columnas) de la ventana empalmada")
    reencode_flavor: Flavor = Field("A", description="Códec de la recodificación posterior al empalme")
    reencode_delta: Optional[float] = Field(2.0, description="Δ de la recodificación posterior (None = sin recodificar)")
    gop_period: int = Field(30, ge=0, description="Periodo del GOP simulado (0 lo desactiva)")
    max_pairs_per_source: Optional[int] = Field(None, ge=1, description="Parejas de versiones empalmadas por fuente (None = todas)")
    seed: int = 0
    texture: TextureParams = Field(default_factory=TextureParams)

    @field_validator("window", mode="before")
    @classmethod
    def _parse_window(cls, value):
        if isinstance(value, str):
            value = value.lower().replace("x", ",")
            return tuple(int(v) for v in value.split(","))
        return value

    @model_validator(mode="after")
    def _check_geometry(self) -> "DatasetSpec":
        if not self.deltas:
            raise ValueError("el conjunto de Δ no puede estar vacío")
        if not self.flavors:
            raise ValueError("el conjunto de códecs no puede estar vacío")
        if self.height % BLOCK_SIZE or self.width % BLOCK_SIZE:
            raise ValueError("las dimensiones del fotograma deben ser múltiplos de 8")
        rows, cols = self.window
        if rows <= 0 or cols <= 0 or rows > self.height or cols > self.width:
            raise ValueError(f"la ventana {self.window} no cabe en {self.height}x{self.width}")
        return self

    @property
    def window_top_left(self) -> Tuple[int, int]:
        """Esquina de la ventana centrada, ajustada hacia abajo a la rejilla de 8 píxeles."""
        rows, cols = self.window
        top = (self.height - rows) // 2 // BLOCK_SIZE * BLOCK_SIZE
        left = (self.width - cols) // 2 // BLOCK_SIZE * BLOCK_SIZE
        return top, left


class CorpusSpec(BaseModel):
    n_sources: int = Field(3, ge=1)
    height: int = Field(256, ge=64)
    width: int = Field(256, ge=64)
    frames_per_video: int = Field(16, ge=1)
    flavors: FlavorList = Field(default_factory=lambda: ["A", "B", "C"],
                              description="Códecs mezclados en el corpus de calidad")
    deltas: FloatList = Field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0])
    codec_deltas: FloatList = Field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0],
                                  description="Δ mezclados en el corpus de códec")
    variance_threshold: float = Field(1e3, ge=0)
    max_patches_per_class: Optional[int] = Field(None, ge=1)
    split: Tuple[float, float, float] = (0.7, 0.2, 0.1)
    seed: int = 1
    texture: TextureParams = Field(default_factory=lambda: TextureParams(amplitude=50.0, contrast_mix=0.5))

    @field_validator("split", mode="before")
    @classmethod
    def _parse_split(cls, value):
        if isinstance(value, str):
            return tuple(float(v) for v in value.split(","))
        return value

    @model_validator(mode="after")
    def _check_split(self) -> "CorpusSpec":
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError(f"reparto inválido {self.split}")
        return self


class DetectConfig(BaseModel):
    stride: int = Field(64, ge=8, description="Paso de extracción para los descriptores de fotograma")
    threshold: Optional[float] = Field(None, ge=0, description="Umbral manual (si falta: calibrado o automático)")
    suppress: bool = Field(True, description="Suprimir falsos positivos periódicos del GOP")
    period: Optional[int] = Field(None, ge=2, description="Periodo del GOP forzado manualmente")
    min_period: int = Field(2, ge=2)
    max_period: int = Field(60, ge=2)
    relative_gate: float = Field(0.25, gt=0, le=1)


class SpatialConfig(BaseModel):
    stride: int = Field(8, ge=8, description="Paso de extracción para el tensor de características")
    window_frames: int = Field(32, ge=1, description="W: fotogramas promediados en el modo multi-fotograma")
    subset: Literal["codec", "quality", "all"] = "all"
    threshold: Optional[float] = Field(None, ge=0)
    eval_frames: int = Field(4, ge=1, description="Fotogramas por vídeo evaluados en modo de fotograma único")
    robustness_deltas: FloatList = Field(default_factory=lambda: [2.0, 10.0, 20.0, 40.0])


# --- resultados ---

class SpliceReport(BaseModel):
    n_frames: int = Field(..., ge=2)
    indices: List[int] = Field(default_factory=list, description="Puntos de empalme (primer fotograma del segundo plano)")
    peak_values: List[float] = Field(default_factory=list)
    threshold: float
    suppressed: List[int] = Field(default_factory=list, description="Índices descartados por periodicidad")
    period: Optional[int] = None
    phase: Optional[int] = None

    @model_validator(mode="after")
    def _check_indices(self) -> "SpliceReport":
        for index in self.indices + self.suppressed:
            if not 2 <= index <= self.n_frames:
                raise ValueError(f"índice {index} fuera de [2, {self.n_frames}]")
        return self


class OperatingPoint(BaseModel):
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        denominator = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denominator if denominator else 0.0


class EvalCurve(BaseModel):
    points: List[OperatingPoint]
    fpr: List[float]
    tpr: List[float]
    precision: List[float]
    recall: List[float]
    auc: float = Field(..., ge=0, le=1)
    pr_auc: float = Field(..., ge=0, le=1)
    best_f1: float
    best_threshold: float


class ClipRecord(BaseModel):
    """Procedencia de un clip generado por el banco de pruebas."""
    name: str
    kind: Literal["version", "temporal", "spatial"]
    path: str = Field(..., description="Ruta relativa al directorio del conjunto de datos")
    source: int
    flavor: Optional[Flavor] = None
    delta: Optional[float] = None
    pair: List[str] = Field(default_factory=list, description="Versiones (X, Y) empalmadas")
    splice_index: Optional[int] = Field(None, description="Primer fotograma del segundo plano (base 1)")
    window: Optional[Tuple[int, int, int, int]] = Field(None, description="(fila, columna, filas, columnas)")
    reencode_delta: Optional[float] = None
    n_frames: int
    height: int
    width: int
