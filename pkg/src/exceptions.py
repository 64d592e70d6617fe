"""
Jerarquía de excepciones del proyecto.

Todas heredan de FocalError para que la CLI pueda distinguir los errores de datos
(salida 1) de los errores de uso (salida 2, los gestiona argparse).
"""
from typing import Optional


class FocalError(Exception):
    """Error base. `path` y `offset` localizan el problema cuando hay un fichero implicado."""

    def __init__(self, message: str, path: Optional[str] = None, offset: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.path = path
        self.offset = offset

    def diagnostic(self) -> str:
        """Mensaje de una línea con el formato `fichero:offset: mensaje`."""
        if self.path is None:
            return self.message
        if self.offset is None:
            return f"{self.path}: {self.message}"
        return f"{self.path}:{self.offset}: {self.message}"


class ShapeError(FocalError, ValueError):
    pass


class GeometryError(FocalError, ValueError):
    pass


class CodecError(FocalError, ValueError):
    pass


class Y4MError(FocalError):
    def __init__(self, message: str, path: Optional[str] = None, offset: Optional[int] = None,
                 frame_index: Optional[int] = None):
        super().__init__(message, path=path, offset=offset)
        self.frame_index = frame_index


class DatasetError(FocalError, ValueError):
    pass


class EvaluationError(FocalError, ValueError):
    pass


class ConfigError(FocalError, ValueError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message, path=path, offset=line)
        self.line = line


class CacheError(FocalError):
    pass


class ThresholdError(FocalError, ValueError):
    pass
