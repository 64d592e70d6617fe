import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Optional

from . import config

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(log_file: str, level: Optional[str] = None) -> None:
    """
    Configura el logging de un punto de entrada: fichero UTF-8 más consola.
    """
    os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, (level or config.LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            logging.StreamHandler()
        ],
        force=True,
    )


def sha256_file(path: str, chunk_size: int = 1 << 20) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(chunk_size), b""):
            sha.update(chunk)
    return sha.hexdigest()


def make_run_dir(command: str, digest: str, out: Optional[str] = None) -> str:
    """Directorio de la ejecución: `out` si se indica, si no <FOCAL_RUNS_DIR>/<comando>-<digest[:12]>."""
    run_dir = out or os.path.join(config.RUNS_DIR, f"{command}-{digest[:12]}")
    os.makedirs(run_dir, exist_ok=True)
    return run_dir


class RunManifest:
    """
    Manifiesto `manifest.jsonl` de un directorio de ejecución.

    Cada artefacto producido se anota con su tipo, ruta relativa, SHA-256 y parámetros.
    Se escribe ordenado por ruta y sin marcas de tiempo, de modo que dos ejecuciones con
    la misma semilla y configuración producen el mismo fichero.
    """

    FILE_NAME = "manifest.jsonl"

    def __init__(self, run_dir: str):
        self.run_dir = run_dir
        self.entries: Dict[str, Dict[str, Any]] = {}

    @property
    def path(self) -> str:
        return os.path.join(self.run_dir, self.FILE_NAME)

    def add(self, kind: str, path: str, params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        relative = os.path.relpath(os.path.abspath(path), os.path.abspath(self.run_dir)).replace(os.sep, "/")
        entry = {"kind": kind, "path": relative, "sha256": sha256_file(path), "params": params or {}}
        self.entries[relative] = entry
        return entry

    def write(self) -> str:
        with open(self.path, "w", encoding="utf-8") as handle:
            for relative in sorted(self.entries):
                handle.write(json.dumps(self.entries[relative], sort_keys=True) + "\n")
        logger.info(f"Manifiesto escrito: {self.path} ({len(self.entries)} artefactos)")
        return self.path

    @classmethod
    def read(cls, run_dir: str) -> List[Dict[str, Any]]:
        with open(os.path.join(run_dir, cls.FILE_NAME), "r", encoding="utf-8") as handle:
            return [json.loads(line) for line in handle if line.strip()]
