import struct

import numpy as np
import pytest

from src.exceptions import CacheError
from src.models import ModelCard
from src.network import FocalNet
from src.weights import (ModelWeights, card_path, decode_weights, encode_weights, load_card, load_weights,
                         save_card, save_weights)


def test_ida_y_vuelta_bit_a_bit(tmp_path):
    weights = FocalNet(width=16, seed=7).to_weights()
    path = save_weights(weights, str(tmp_path / "net.focw"))
    assert load_weights(path).equals(weights)


def test_cabecera(tmp_path):
    payload = encode_weights(ModelWeights(blocks={"a": np.zeros((2, 3), dtype=np.float32)}, num_classes=4))
    assert payload[:4] == b"FOCW"
    assert struct.unpack("<III", payload[4:16]) == (1, 4, 1)
    assert len(payload) == 16 + 4 + 1 + 4 + 8 + 24


def test_escalares_y_orden_de_bloques():
    weights = ModelWeights(blocks={"z": np.float32(3.5) * np.ones(()), "a": np.arange(3, dtype=np.float32)},
                           num_classes=2)
    decoded = decode_weights(encode_weights(weights))
    assert list(decoded.blocks) == ["z", "a"]
    assert decoded.blocks["z"].shape == () and float(decoded.blocks["z"]) == 3.5


@pytest.mark.parametrize("cut", [3, 10, 20, 40])
def test_fichero_truncado(cut):
    payload = encode_weights(FocalNet(width=16).to_weights())
    with pytest.raises(CacheError) as excinfo:
        decode_weights(payload[:cut], path="net.focw")
    assert excinfo.value.offset is not None and excinfo.value.offset <= cut
    assert excinfo.value.diagnostic().startswith("net.focw:")


def test_cabecera_invalida_y_bytes_sobrantes():
    payload = encode_weights(ModelWeights(blocks={"a": np.ones(2, dtype=np.float32)}))
    with pytest.raises(CacheError):
        decode_weights(b"XXXX" + payload[4:])
    with pytest.raises(CacheError) as excinfo:
        decode_weights(payload + b"\x00")
    assert excinfo.value.offset == len(payload)


def test_varianzas_no_positivas():
    with pytest.raises(ValueError):
        ModelWeights(blocks={"bn1.running_var": np.array([1.0, 0.0], dtype=np.float32)})


def test_ficha_junto_a_los_pesos(tmp_path):
    weights_path = str(tmp_path / "codec.focw")
    card = ModelCard(task="codec", classes=["A", "B", "C", "D"], width=16, thresholds={"temporal": 0.25})
    assert save_card(card, weights_path) == card_path(weights_path) == str(tmp_path / "codec.card.json")
    assert load_card(weights_path) == card
    assert load_card(str(tmp_path / "otro.focw")) is None
