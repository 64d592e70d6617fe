import numpy as np
import pandas as pd
import pytest

from src.dataset import PatchCorpus
from src.exceptions import DatasetError
from src.models import ModelCard, TrainConfig
from src.network import FocalNet
from src.training import (_batches, accuracy, accuracy_at_delta, evaluate_loss, fit, plot_training_log, save_model,
                          train)
from src.utils import sha256_file
from src.weights import load_card, load_weights


def two_class_patches(n_per_class, seed=0):
    """Clase 0 casi plana y clase 1 con ruido fuerte: separables por la varianza."""
    rng = np.random.default_rng(seed)
    flat = np.clip(128 + rng.normal(0, 2, size=(n_per_class, 64, 64)), 0, 255)
    noisy = np.clip(128 + rng.normal(0, 60, size=(n_per_class, 64, 64)), 0, 255)
    X = np.concatenate([flat, noisy]).astype(np.uint8)
    y = np.repeat([0, 1], n_per_class)
    return X, y


def small_corpus(n_train=8, n_test=4):
    X, y = two_class_patches(n_train // 2)
    X_test, y_test = two_class_patches(n_test // 2, seed=1)
    return PatchCorpus(task="quality", classes=["low", "high"], X_train=X, y_train=y, X_val=X_test, y_val=y_test,
                       X_test=X_test, y_test=y_test, delta_test=np.array([40.0, 5.0] * (n_test // 2)))


def test_lotes_descartan_el_resto_de_una_muestra():
    sizes = [len(batch) for batch in _batches(np.arange(9), 4)]
    assert sizes == [4, 4]
    assert [len(batch) for batch in _batches(np.arange(10), 4)] == [4, 4, 2]


def test_fit_registra_cada_epoca():
    X, y = two_class_patches(4)
    net = FocalNet(num_classes=2, width=16, seed=0)
    log = fit(net, X, y, TrainConfig(epochs=2, batch_size=4, width=16))
    assert log["epoch"].tolist() == [1, 2]
    assert log["val_loss"].isna().all()
    assert np.isfinite(log["train_loss"]).all()


def test_fit_necesita_dos_parches():
    net = FocalNet(num_classes=2, width=16)
    with pytest.raises(DatasetError):
        fit(net, np.zeros((1, 64, 64), dtype=np.uint8), np.zeros(1), TrainConfig(epochs=1, width=16))


def test_fit_se_queda_con_la_mejor_epoca():
    X, y = two_class_patches(4)
    net = FocalNet(num_classes=2, width=16, seed=0)
    log = fit(net, X, y, TrainConfig(epochs=3, batch_size=8, width=16), X, y)
    loss, _ = evaluate_loss(net, X, y)
    assert loss == pytest.approx(log["val_loss"].min(), rel=1e-5)


def test_entrenamiento_rellena_la_ficha():
    net, card, log = train("quality", small_corpus(), TrainConfig(epochs=1, batch_size=8, width=16))
    assert card.task == "quality" and card.classes == ["low", "high"] and card.width == 16
    assert 0.0 <= card.test_accuracy <= 1.0
    assert card.val_loss == pytest.approx(log["val_loss"].min())
    assert card.train_config["epochs"] == 1
    assert net.num_classes == 2


def test_entrenamiento_con_clase_vacia():
    corpus = small_corpus()
    corpus.y_train = np.zeros_like(corpus.y_train)
    with pytest.raises(DatasetError):
        train("quality", corpus, TrainConfig(epochs=1, width=16))


def test_exactitud_y_perdida():
    X, y = two_class_patches(3)
    net = FocalNet(num_classes=2, width=16, seed=4)
    loss, acc = evaluate_loss(net, X, y)
    assert loss > 0 and acc == pytest.approx(accuracy(net, X, y))
    with pytest.raises(DatasetError):
        accuracy(net, np.zeros((0, 64, 64)), np.zeros(0))


def test_exactitud_por_delta():
    corpus = small_corpus()
    net = FocalNet(num_classes=2, width=16, seed=4)
    predicted = net.predict(corpus.X_test).argmax(axis=1)
    selected = corpus.delta_test == 40.0
    assert accuracy_at_delta(net, corpus, 40.0) == pytest.approx((predicted[selected] == corpus.y_test[selected]).mean())
    with pytest.raises(DatasetError):
        accuracy_at_delta(net, corpus, 20.0)


def test_guardado_con_huella(tmp_path):
    net = FocalNet(num_classes=2, width=16, seed=5)
    path = str(tmp_path / "quality.focw")
    card = save_model(net, ModelCard(task="quality", classes=["low", "high"], width=16), path)
    assert card.weights_sha256 == sha256_file(path)
    assert load_card(path) == card
    assert load_weights(path).equals(net.to_weights())


def test_grafica_de_entrenamiento(tmp_path):
    log = pd.DataFrame({"epoch": [1, 2], "train_loss": [1.0, 0.5], "val_loss": [1.2, 0.7]})
    path = plot_training_log(log, str(tmp_path / "log.png"))
    assert open(path, "rb").read(4) == b"\x89PNG"
