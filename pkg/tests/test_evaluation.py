import numpy as np
import pandas as pd
import pytest

from src.evaluation import (curve_frame, eval_curves, plot_curves, summary_table, temporal_clip_scores,
                            write_curve_csv)
from src.exceptions import EvaluationError
from src.models import DetectConfig


def pair_auc(scores, labels):
    """P(s+ > s-) + 0.5 P(s+ = s-) sobre todas las parejas positivo/negativo."""
    positives = [s for s, l in zip(scores, labels) if l]
    negatives = [s for s, l in zip(scores, labels) if not l]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in positives for n in negatives)
    return total / (len(positives) * len(negatives))


@pytest.mark.parametrize("seed", range(10))
def test_auc_coincide_con_el_recuento_de_parejas(seed):
    rng = np.random.default_rng(seed)
    labels = rng.random(40) < 0.4
    labels[:2] = [True, False]
    scores = rng.integers(0, 5, size=40) + labels * rng.integers(0, 3, size=40)
    assert eval_curves(scores, labels).auc == pytest.approx(pair_auc(scores, labels), abs=1e-12)


def test_separacion_perfecta():
    curve = eval_curves([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert curve.auc == 1.0 and curve.pr_auc == pytest.approx(1.0)
    assert curve.best_f1 == 1.0
    assert 0.2 <= curve.best_threshold < 0.8


def test_puntuaciones_aleatorias_dan_auc_un_medio():
    rng = np.random.default_rng(0)
    curve = eval_curves(rng.random(4000), rng.random(4000) < 0.5)
    assert abs(curve.auc - 0.5) < 0.05


def test_una_sola_clase_o_longitudes_distintas():
    with pytest.raises(EvaluationError):
        eval_curves([0.1, 0.2], [1, 1])
    with pytest.raises(EvaluationError):
        eval_curves([0.1, 0.2], [0, 1, 1])


def test_puntos_de_operacion_con_regla_estricta():
    scores = np.array([0.3, 0.3, 0.5, 0.9, 0.1, 0.7])
    labels = np.array([1, 0, 1, 1, 0, 0], dtype=bool)
    curve = eval_curves(scores, labels)
    assert (curve.points[0].tp, curve.points[0].fp) == (0, 0)
    assert (curve.points[-1].tp, curve.points[-1].fp) == (3, 3)
    for point in curve.points:
        predicted = scores > point.threshold
        assert point.tp == int(np.sum(predicted & labels))
        assert point.fp == int(np.sum(predicted & ~labels))
        assert point.tn + point.fp == 3 and point.tp + point.fn == 3


def test_mejor_f1_reproducible_con_su_umbral():
    rng = np.random.default_rng(3)
    labels = rng.random(200) < 0.3
    scores = rng.normal(size=200) + 1.5 * labels
    curve = eval_curves(scores, labels)
    predicted = scores > curve.best_threshold
    tp = np.sum(predicted & labels)
    f1 = 2 * tp / (2 * tp + np.sum(predicted & ~labels) + np.sum(~predicted & labels))
    assert f1 == pytest.approx(curve.best_f1)
    assert curve.best_f1 == max(point.f1 for point in curve.points)


def test_tablas_y_graficas(tmp_path):
    curves = {"codec": eval_curves([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]),
              "all": eval_curves([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])}
    table = summary_table(curves)
    assert table["subset"].tolist() == ["codec", "all"]
    assert table.loc[1, "auc"] == 1.0 and table.loc[0, "auc"] == pytest.approx(0.75)
    frame = curve_frame(curves["all"])
    assert {"threshold", "tp", "fp", "tn", "fn", "fpr", "tpr", "precision", "f1"} <= set(frame.columns)
    written = pd.read_csv(write_curve_csv(curves["all"], str(tmp_path / "roc.csv")))
    assert len(written) == len(curves["all"].points)
    for kind in ("roc", "pr"):
        path = plot_curves(curves, str(tmp_path / f"{kind}.png"), kind, title="prueba")
        assert open(path, "rb").read(4) == b"\x89PNG"


def test_puntuaciones_temporales_de_un_clip():
    descriptors = np.zeros((10, 8))
    descriptors[5:, 0] = 1.0
    descriptors[5:, 1] = 0.5
    scores, labels = temporal_clip_scores(descriptors, 6, DetectConfig(suppress=False))
    assert labels.tolist() == [True] + [False] * 6
    assert scores[0] == pytest.approx(1.25)
    np.testing.assert_array_equal(scores[1:], np.zeros(6))


def test_empalme_fuera_de_la_serie():
    with pytest.raises(EvaluationError):
        temporal_clip_scores(np.zeros((5, 8)), 9, DetectConfig())
