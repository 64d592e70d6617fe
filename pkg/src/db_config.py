import json
import logging
import os
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Dict, List, Optional

from sqlalchemy import Column, Float, Integer, String, Text, create_engine
from sqlalchemy.engine import make_url
from sqlalchemy.orm import declarative_base, sessionmaker

from . import config
from .models import ClipRecord, ModelCard

logger = logging.getLogger(__name__)

Base = declarative_base()
SessionLocal = sessionmaker(autocommit=False, autoflush=False)
engine = None


class Clip(Base):
    """
    Clip generado por el banco de pruebas (versión codificada o empalme).

    Attributes:
        id (int): Identificador único.
        dataset_dir (str): Directorio del conjunto de datos al que pertenece.
        name (str): Nombre del clip dentro del conjunto.
        kind (str): 'version', 'temporal' o 'spatial'.
        file_path (str): Ruta absoluta del fichero Y4M.
        provenance (str): ClipRecord completo en JSON.
        created_at (str): Timestamp de registro.
    """
    __tablename__ = "clips"

    id = Column(Integer, primary_key=True, index=True)
    dataset_dir = Column(String, nullable=False, index=True)
    name = Column(String, nullable=False)
    kind = Column(String, nullable=False)
    file_path = Column(String, nullable=False, unique=True)
    sha256 = Column(String, nullable=True)
    provenance = Column(Text, nullable=False)
    created_at = Column(String, default=lambda: datetime.now().isoformat())


class TrainedModel(Base):
    """Fichero de pesos entrenado con los datos de su ficha."""
    __tablename__ = "models"

    id = Column(Integer, primary_key=True, index=True)
    file_path = Column(String, nullable=False, unique=True)
    task = Column(String, nullable=False)
    classes = Column(Text, nullable=False)
    width = Column(Integer, nullable=False)
    weights_sha256 = Column(String, nullable=True)
    val_loss = Column(Float, nullable=True)
    test_accuracy = Column(Float, nullable=True)
    thresholds = Column(Text, nullable=True)
    created_at = Column(String, default=lambda: datetime.now().isoformat())


def configure_catalog(url: Optional[str] = None):
    """Crea el motor del catálogo para `url` (por defecto FOCAL_CATALOG_URL) y enlaza las sesiones."""
    global engine
    url = url or config.CATALOG_URL
    parsed = make_url(url)
    connect_args = {}
    if parsed.get_backend_name() == "sqlite":
        connect_args["check_same_thread"] = False
        if parsed.database and parsed.database != ":memory:":
            os.makedirs(os.path.dirname(os.path.abspath(parsed.database)), exist_ok=True)
    engine = create_engine(url, connect_args=connect_args)
    SessionLocal.configure(bind=engine)
    Base.metadata.create_all(bind=engine)
    logger.info(f"✅ Catálogo: {parsed.render_as_string(hide_password=True)}")
    return engine


def init_db():
    """
    Inicializa el catálogo creando todas las tablas.
    """
    if engine is None:
        configure_catalog()
    Base.metadata.create_all(bind=engine)


@contextmanager
def get_db_session():
    """
    Provee una sesión de base de datos transaccional.
    Cualquier cambio es confirmado si no hay errores, o revertido si los hay.
    """
    if engine is None:
        init_db()
    session = SessionLocal()
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()


# --- Funciones Auxiliares ---
def deserialize(json_string: Optional[str], default: Any) -> Any:
    if not json_string:
        return default
    try:
        return json.loads(json_string)
    except json.JSONDecodeError:
        return default


def model_to_dict(model_instance: Base) -> Dict[str, Any]:
    """
    Convierte una instancia de un modelo SQLAlchemy a un diccionario.
    """
    if not model_instance:
        return {}

    d = {c.name: getattr(model_instance, c.name) for c in model_instance.__table__.columns}

    if isinstance(model_instance, Clip):
        d['provenance'] = deserialize(d.get('provenance'), {})

    if isinstance(model_instance, TrainedModel):
        d['classes'] = deserialize(d.get('classes'), [])
        d['thresholds'] = deserialize(d.get('thresholds'), {})

    return d


# --- Clips ---
def register_clip(dataset_dir: str, record: ClipRecord, sha256: Optional[str] = None) -> Dict[str, Any]:
    """
    Añade un clip al catálogo. Si su fichero ya está registrado, actualiza la procedencia.
    """
    file_path = os.path.abspath(os.path.join(dataset_dir, record.path))
    with get_db_session() as session:
        clip = session.query(Clip).filter_by(file_path=file_path).first()
        if clip is None:
            clip = Clip(file_path=file_path)
            session.add(clip)
        clip.dataset_dir = os.path.abspath(dataset_dir)
        clip.name = record.name
        clip.kind = record.kind
        clip.sha256 = sha256
        clip.provenance = json.dumps(record.model_dump(mode="json"), sort_keys=True)
        session.flush()  # flush para obtener el ID asignado por la BD
        return model_to_dict(clip)


def get_clips(dataset_dir: Optional[str] = None, kind: Optional[str] = None) -> List[Dict[str, Any]]:
    with get_db_session() as session:
        query = session.query(Clip)
        if dataset_dir:
            query = query.filter(Clip.dataset_dir == os.path.abspath(dataset_dir))
        if kind:
            query = query.filter(Clip.kind == kind)
        return [model_to_dict(clip) for clip in query.order_by(Clip.id).all()]


def delete_clip(clip_id: int) -> bool:
    """
    Elimina un clip del catálogo por su ID. Pensada para el script de limpieza,
    asumiendo que el fichero físico ya no existe.
    """
    with get_db_session() as session:
        clip = session.query(Clip).filter(Clip.id == clip_id).first()
        if not clip:
            logger.warning(f"Se intentó eliminar el clip con ID {clip_id}, pero no se encontró.")
            return False
        session.delete(clip)
        return True


# --- Modelos entrenados ---
def register_model(file_path: str, card: ModelCard) -> Dict[str, Any]:
    """Registra (o actualiza) un fichero de pesos con los datos de su ficha."""
    file_path = os.path.abspath(file_path)
    with get_db_session() as session:
        model = session.query(TrainedModel).filter_by(file_path=file_path).first()
        if model is None:
            model = TrainedModel(file_path=file_path)
            session.add(model)
        model.task = card.task
        model.classes = json.dumps(card.classes)
        model.width = card.width
        model.weights_sha256 = card.weights_sha256
        model.val_loss = card.val_loss
        model.test_accuracy = card.test_accuracy
        model.thresholds = json.dumps(card.thresholds, sort_keys=True)
        session.flush()
        return model_to_dict(model)


def get_models(task: Optional[str] = None) -> List[Dict[str, Any]]:
    with get_db_session() as session:
        query = session.query(TrainedModel)
        if task:
            query = query.filter(TrainedModel.task == task)
        return [model_to_dict(model) for model in query.order_by(TrainedModel.id).all()]


def delete_model(model_id: int) -> bool:
    with get_db_session() as session:
        model = session.query(TrainedModel).filter(TrainedModel.id == model_id).first()
        if not model:
            logger.warning(f"Se intentó eliminar el modelo con ID {model_id}, pero no se encontró.")
            return False
        session.delete(model)
        return True
