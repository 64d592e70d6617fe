import numpy as np
import pytest

from src import config, db_config
from src.codec import encode_sequence, gen_texture
from src.models import CodecConfig, ModelCard, TextureParams
from src.network import FocalNet
from src.training import save_model


@pytest.fixture(autouse=True)
def _sin_barras_de_progreso(monkeypatch):
    monkeypatch.setattr(config, "PROGRESS", False)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_nets():
    """Pareja (códec, calidad) de redes de anchura mínima sin entrenar."""
    return FocalNet(num_classes=4, width=16, seed=1), FocalNet(num_classes=4, width=16, seed=2)


@pytest.fixture
def model_dir(tmp_path, tiny_nets):
    """Directorio con codec.focw y quality.focw (y sus fichas) de las redes mínimas."""
    directory = tmp_path / "models"
    for task, net in zip(("codec", "quality"), tiny_nets):
        card = ModelCard(task=task, classes=["c0", "c1", "c2", "c3"], width=16)
        save_model(net, card, str(directory / f"{task}.focw"))
    return directory


@pytest.fixture
def catalog(tmp_path):
    """Catálogo SQLite temporal; se desenlaza al terminar."""
    db_config.configure_catalog(f"sqlite:///{tmp_path / 'catalog.db'}")
    yield db_config
    db_config.engine.dispose()
    db_config.engine = None


@pytest.fixture
def static_versions():
    """Dos versiones de una textura estática de 200 fotogramas con códecs y Δ distintos."""
    texture = TextureParams(drift=0.0, temporal_noise=0.0)
    original = gen_texture(64, 64, 200, seed=3, params=texture)
    x = encode_sequence(original, CodecConfig(flavor="A", delta=5.0))
    y = encode_sequence(original, CodecConfig(flavor="D", delta=40.0))
    return x, y
