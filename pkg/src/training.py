"""
Entrenamiento de los clasificadores de códec y de calidad.
"""
import logging
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import config as settings
from .dataset import PatchCorpus
from .exceptions import DatasetError
from .models import ModelCard, TrainConfig
from .network import FocalNet, softmax_xent
from .optimizers import learning_rate_at, optimizer_step
from .utils import sha256_file
from .weights import save_card, save_weights

logger = logging.getLogger(__name__)

MIN_BATCH = 2


def evaluate_loss(net: FocalNet, X: np.ndarray, y: np.ndarray, batch_size: int = 256) -> Tuple[float, float]:
    """(pérdida media, exactitud) en modo inferencia."""
    probs = net.predict(X, batch_size)
    labels = np.asarray(y, dtype=np.int64)
    picked = probs[np.arange(len(labels)), labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    return loss, float((probs.argmax(axis=1) == labels).mean())


def accuracy(net: FocalNet, X: np.ndarray, y: np.ndarray, batch_size: int = 256) -> float:
    if len(X) == 0:
        raise DatasetError("no hay parches para evaluar")
    return float((net.predict(X, batch_size).argmax(axis=1) == np.asarray(y)).mean())


def _batches(order: np.ndarray, batch_size: int):
    batches = [order[start:start + batch_size] for start in range(0, len(order), batch_size)]
    # La normalización por lotes necesita al menos dos muestras.
    if batches and len(batches[-1]) < MIN_BATCH:
        batches = batches[:-1]
    return batches


def fit(net: FocalNet, X: np.ndarray, y: np.ndarray, config: TrainConfig, X_val: Optional[np.ndarray] = None,
        y_val: Optional[np.ndarray] = None) -> pd.DataFrame:
    """
    Bucle de entrenamiento por mini-lotes.

    El orden de los lotes sale de una permutación con semilla. Al terminar, la red se queda
    con los parámetros de la época de menor pérdida de validación (o de entrenamiento si
    no hay conjunto de validación). Devuelve el registro por época.
    """
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    if len(X) < MIN_BATCH:
        raise DatasetError(f"se necesitan al menos {MIN_BATCH} parches de entrenamiento, recibidos {len(X)}")
    has_val = X_val is not None and len(X_val) > 0
    rng = np.random.default_rng(config.seed)
    state: dict = {}
    best_loss, best_params = np.inf, None
    rows = []

    epochs = tqdm(range(config.epochs), desc="Entrenamiento", unit="época", disable=not settings.PROGRESS)
    for epoch in epochs:
        total_loss, hits, seen = 0.0, 0, 0
        for batch in _batches(rng.permutation(len(X)), config.batch_size):
            logits = net.logits(X[batch], mode="train")
            loss, dlogits = softmax_xent(logits, y[batch])
            grads = net.backward(dlogits)
            optimizer_step(net.params, grads, state, config, epoch)
            total_loss += loss * len(batch)
            hits += int((logits.argmax(axis=1) == y[batch]).sum())
            seen += len(batch)

        row = {"epoch": epoch + 1, "learning_rate": learning_rate_at(config, epoch),
               "train_loss": total_loss / seen, "train_accuracy": hits / seen,
               "val_loss": np.nan, "val_accuracy": np.nan}
        if has_val:
            row["val_loss"], row["val_accuracy"] = evaluate_loss(net, X_val, y_val, config.batch_size)
        selection = row["val_loss"] if has_val else row["train_loss"]
        if selection < best_loss:
            best_loss = selection
            best_params = {name: value.copy() for name, value in net.params.items()}
        rows.append(row)
        epochs.set_postfix(loss=f"{row['train_loss']:.4f}", val=f"{row['val_loss']:.4f}")
        logger.debug(f"Época {epoch + 1}: pérdida {row['train_loss']:.4f}, validación {row['val_loss']:.4f}")

    if best_params is not None:
        net.params = best_params
    return pd.DataFrame(rows)


def train(task: str, corpus: PatchCorpus, config: TrainConfig) -> Tuple[FocalNet, ModelCard, pd.DataFrame]:
    """Entrena la red de la tarea sobre el corpus y rellena su ficha."""
    counts = np.bincount(corpus.y_train, minlength=len(corpus.classes))
    missing = [name for name, count in zip(corpus.classes, counts) if count == 0]
    if missing:
        raise DatasetError(f"clases sin parches de entrenamiento: {missing}")

    logger.info(f"Entrenando modelo de {task}: {len(corpus.y_train)} parches, clases {corpus.classes}")
    net = FocalNet(num_classes=len(corpus.classes), width=config.width, fc1_relu=config.fc1_relu, seed=config.seed)
    log = fit(net, corpus.X_train, corpus.y_train, config, corpus.X_val, corpus.y_val)

    test_accuracy = accuracy(net, corpus.X_test, corpus.y_test, config.batch_size) if len(corpus.y_test) else None
    best_val = log["val_loss"].min()
    card = ModelCard(task=task, classes=list(corpus.classes), width=config.width, fc1_relu=config.fc1_relu,
                     val_loss=None if np.isnan(best_val) else float(best_val), test_accuracy=test_accuracy,
                     train_config=config.model_dump())
    if test_accuracy is not None:
        logger.info(f"✅ Modelo de {task}: exactitud en prueba {test_accuracy:.3f}")
    return net, card, log


def accuracy_at_delta(net: FocalNet, corpus: PatchCorpus, delta: float) -> float:
    """Exactitud en el conjunto de prueba restringida a los parches codificados con Δ = `delta`."""
    selected = np.isclose(corpus.delta_test, delta)
    return accuracy(net, corpus.X_test[selected], corpus.y_test[selected])


def save_model(net: FocalNet, card: ModelCard, path: str) -> ModelCard:
    """Guarda los pesos FOCW y la ficha con el SHA-256 del fichero."""
    save_weights(net.to_weights(), path)
    card = card.model_copy(update={"weights_sha256": sha256_file(path)})
    save_card(card, path)
    return card


def plot_training_log(log: pd.DataFrame, path: str) -> str:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(log["epoch"], log["train_loss"], label="train")
    if log["val_loss"].notna().any():
        ax.plot(log["epoch"], log["val_loss"], label="val")
    ax.set_xlabel("época")
    ax.set_ylabel("pérdida")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
