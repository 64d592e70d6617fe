"""
Configuración del proyecto: variables de entorno (.env) y configuración de ejecución.

La configuración de una ejecución se construye por capas:
valores por defecto < fichero key=value < overrides `--set clave=valor` de la CLI.
"""
import hashlib
import json
import logging
import os
from typing import Dict, Iterable, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from .exceptions import ConfigError
from .models import CorpusSpec, DatasetSpec, DetectConfig, SpatialConfig, TrainConfig

# Cargar variables de entorno
load_dotenv()

logger = logging.getLogger(__name__)

RUNS_DIR = os.getenv("FOCAL_RUNS_DIR", "runs")
CATALOG_URL = os.getenv("FOCAL_CATALOG_URL", "sqlite:///data/catalog.db")
LOG_LEVEL = os.getenv("FOCAL_LOG_LEVEL", "INFO").upper()
PROGRESS = os.getenv("FOCAL_PROGRESS", "true").lower() == "true"
DEFAULT_WIDTH = int(os.getenv("FOCAL_WIDTH", "64"))


def _default_train() -> TrainConfig:
    return TrainConfig(width=DEFAULT_WIDTH)


class RunConfig(BaseModel):
    """Configuración completa de una ejecución de la CLI."""
    dataset: DatasetSpec = Field(default_factory=DatasetSpec, description="Generación de vídeos y empalmes")
    corpus: CorpusSpec = Field(default_factory=CorpusSpec, description="Corpus de parches de entrenamiento")
    train: TrainConfig = Field(default_factory=_default_train, description="Receta del modelo de calidad")
    codec_train: TrainConfig = Field(
        default_factory=lambda: TrainConfig.adam_recipe(width=DEFAULT_WIDTH),
        description="Receta del modelo de códec",
    )
    detect: DetectConfig = Field(default_factory=DetectConfig, description="Detección temporal")
    spatial: SpatialConfig = Field(default_factory=SpatialConfig, description="Localización espacial")


def parse_config_lines(lines: Iterable[str], path: Optional[str] = None) -> Dict[str, str]:
    """
    Interpreta un fichero de configuración línea a línea.

    Formato: una pareja `clave=valor` por línea, `#` inicia un comentario, las líneas
    vacías se ignoran. Las claves pueden ser anidadas con puntos (`dataset.frames`).
    """
    values: Dict[str, str] = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"se esperaba 'clave=valor', se encontró '{line}'", path=path, line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("clave vacía", path=path, line=number)
        values[key] = value
    return values


def read_config_file(path: str) -> Dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return parse_config_lines(handle, path=path)
    except UnicodeDecodeError as e:
        logger.error(f"❌ El fichero de configuración {path} no es UTF-8: {e}")
        raise ConfigError("el fichero no está codificado en UTF-8", path=path) from e


def parse_overrides(pairs: Optional[List[str]]) -> Dict[str, str]:
    """Convierte la lista de `--set clave=valor` en un diccionario."""
    if not pairs:
        return {}
    return parse_config_lines(pairs, path="--set")


def _nest(values: Dict[str, str]) -> Dict:
    nested: Dict = {}
    for dotted, value in values.items():
        node = nested
        parts = dotted.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"la clave '{dotted}' choca con un valor escalar")
            node = child
        node[parts[-1]] = None if value.lower() in ("none", "null", "") else value
    return nested


def _merge(base: Dict, extra: Dict) -> Dict:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _check_keys(model: type, nested: Dict, prefix: str = "") -> None:
    for key, value in nested.items():
        dotted = f"{prefix}{key}"
        field = model.model_fields.get(key)
        if field is None:
            raise ConfigError(f"clave de configuración desconocida: '{dotted}'")
        annotation = field.annotation
        if isinstance(value, dict):
            if not (isinstance(annotation, type) and issubclass(annotation, BaseModel)):
                raise ConfigError(f"'{dotted}' no admite subclaves")
            _check_keys(annotation, value, prefix=f"{dotted}.")


def load_run_config(config_path: Optional[str] = None, overrides: Optional[List[str]] = None) -> RunConfig:
    """Construye la RunConfig combinando valores por defecto, fichero y overrides."""
    layered: Dict = {}
    if config_path:
        layered = _merge(layered, _nest(read_config_file(config_path)))
    layered = _merge(layered, _nest(parse_overrides(overrides)))
    _check_keys(RunConfig, layered)

    defaults = RunConfig().model_dump()
    try:
        config = RunConfig.model_validate(_merge(defaults, layered))
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"valor inválido para '{location}': {first['msg']}", path=config_path) from e
    logger.info(f"Configuración cargada (digest {config_digest(config)[:12]})")
    return config


def config_digest(config: BaseModel) -> str:
    """SHA-256 del volcado JSON canónico de la configuración."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
