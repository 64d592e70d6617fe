import pytest

from src.config import RunConfig, config_digest, load_run_config, parse_config_lines, parse_overrides
from src.exceptions import ConfigError


def test_lineas_clave_valor_con_comentarios():
    values = parse_config_lines(["# cabecera", "", "dataset.frames = 48  # corto", "detect.threshold=0.5"])
    assert values == {"dataset.frames": "48", "detect.threshold": "0.5"}


def test_linea_sin_igual_indica_la_linea():
    with pytest.raises(ConfigError) as excinfo:
        parse_config_lines(["dataset.frames=48", "# nada", "sin_valor"], path="run.cfg")
    assert excinfo.value.line == 3
    assert excinfo.value.diagnostic().startswith("run.cfg:3:")


def test_clave_vacia():
    with pytest.raises(ConfigError):
        parse_config_lines(["=3"])


def test_fichero_y_overrides_por_capas(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("dataset.frames=48\ndataset.flavors=A,C\nspatial.stride=16\n", encoding="utf-8")
    config = load_run_config(str(path), ["spatial.stride=32", "dataset.window=64x96"])
    assert config.dataset.frames == 48
    assert config.dataset.flavors == ["A", "C"]
    assert config.spatial.stride == 32
    assert config.dataset.window == (64, 96)
    assert config.detect == RunConfig().detect


def test_valores_nulos_y_listas():
    config = load_run_config(None, ["dataset.reencode_delta=none", "spatial.robustness_deltas=2,40"])
    assert config.dataset.reencode_delta is None
    assert config.spatial.robustness_deltas == [2.0, 40.0]


def test_clave_desconocida():
    with pytest.raises(ConfigError):
        load_run_config(None, ["dataset.colour=red"])
    with pytest.raises(ConfigError):
        load_run_config(None, ["dataset.frames.extra=1"])


def test_valor_invalido():
    with pytest.raises(ConfigError) as excinfo:
        load_run_config(None, ["dataset.frames=muchos"])
    assert "dataset.frames" in excinfo.value.message
    with pytest.raises(ConfigError):
        load_run_config(None, ["dataset.window=512x512"])


def test_override_mal_formado():
    with pytest.raises(ConfigError) as excinfo:
        parse_overrides(["dataset.frames=48", "detect"])
    assert excinfo.value.path == "--set" and excinfo.value.line == 2


def test_digest_estable():
    assert config_digest(RunConfig()) == config_digest(RunConfig())
    assert config_digest(RunConfig()) != config_digest(load_run_config(None, ["dataset.seed=1"]))


def test_fichero_no_utf8(tmp_path):
    path = tmp_path / "latin1.cfg"
    path.write_bytes("dataset.frames=48 # añadido\n".encode("latin-1"))
    with pytest.raises(ConfigError):
        load_run_config(str(path))
