"""
Evaluación: curvas ROC/PR, AUC y F1, y las evaluaciones de localización temporal
(por transición) y espacial (por parche) sobre los conjuntos del banco de pruebas.

Las curvas se calculan con `sklearn.metrics`. Los umbrales de los puntos de operación
usan la regla de decisión `puntuación > umbral`, la misma que aplican los detectores.
"""
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import auc, precision_recall_curve, roc_curve

from .dataset import load_clip, record_mask, reencode, splice_spatial
from .descriptors import ModelBank, frame_descriptors, temporal_average, video_feature_tensors
from .exceptions import EvaluationError
from .models import ClipRecord, DatasetSpec, DetectConfig, EvalCurve, OperatingPoint, SpatialConfig
from .patching import patch_grid
from .spatial import localize_frame, render_heatmap, window_mask_to_cells, write_pgm
from .temporal import COMB_TOLERANCE, distance_series, transition_scores
from .video import VideoSequence

logger = logging.getLogger(__name__)

SUBSETS = ("codec", "quality", "all")


def eval_curves(scores, labels) -> EvalCurve:
    """
    Barrido de umbrales sobre las puntuaciones únicas.

    El primer punto no predice nada positivo y el último lo predice todo. El AUC se
    integra por trapecios y el mejor F1 es el primer máximo del barrido.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).astype(bool).ravel()
    if scores.shape != labels.shape:
        raise EvaluationError(f"{len(scores)} puntuaciones frente a {len(labels)} etiquetas")
    positives = int(labels.sum())
    negatives = int(len(labels) - positives)
    if positives == 0 or negatives == 0:
        raise EvaluationError(f"se necesitan ambas clases: {positives} positivos, {negatives} negativos")

    fpr, tpr, thresholds = roc_curve(labels, scores, drop_intermediate=False)
    unique_scores = thresholds[1:]
    # El punto `>= s_k` equivale a `> s_{k+1}`; el último a `>` justo por debajo del mínimo.
    strict = np.append(unique_scores, np.nextafter(unique_scores[-1], -np.inf))
    tp = np.rint(tpr * positives).astype(int)
    fp = np.rint(fpr * negatives).astype(int)
    points = [OperatingPoint(threshold=float(t), tp=int(a), fp=int(b), tn=negatives - int(b), fn=positives - int(a))
              for t, a, b in zip(strict, tp, fp)]

    precision, recall, _ = precision_recall_curve(labels, scores)
    f1 = np.array([point.f1 for point in points])
    best = int(np.argmax(f1))
    return EvalCurve(
        points=points,
        fpr=fpr.tolist(),
        tpr=tpr.tolist(),
        precision=precision.tolist(),
        recall=recall.tolist(),
        auc=float(np.clip(auc(fpr, tpr), 0.0, 1.0)),
        pr_auc=float(np.clip(auc(recall, precision), 0.0, 1.0)),
        best_f1=float(f1[best]),
        best_threshold=points[best].threshold,
    )


# --- salidas ---

def curve_frame(curve: EvalCurve) -> pd.DataFrame:
    return pd.DataFrame([
        {"threshold": p.threshold, "tp": p.tp, "fp": p.fp, "tn": p.tn, "fn": p.fn,
         "fpr": p.fp / (p.fp + p.tn), "tpr": p.recall, "precision": p.precision, "f1": p.f1}
        for p in curve.points
    ])


def write_curve_csv(curve: EvalCurve, path: str) -> str:
    curve_frame(curve).to_csv(path, index=False)
    return path


def summary_table(curves: Dict[str, EvalCurve]) -> pd.DataFrame:
    return pd.DataFrame([
        {"subset": name, "auc": curve.auc, "pr_auc": curve.pr_auc, "best_f1": curve.best_f1,
         "best_threshold": curve.best_threshold}
        for name, curve in curves.items()
    ])


def plot_curves(curves: Dict[str, EvalCurve], path: str, kind: str = "roc", title: Optional[str] = None) -> str:
    """Curvas ROC o PR de varios subconjuntos de descriptores en una misma figura."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    for name, curve in curves.items():
        if kind == "roc":
            ax.plot(curve.fpr, curve.tpr, label=f"{name} (AUC {curve.auc:.3f})")
        else:
            ax.plot(curve.recall, curve.precision, label=f"{name} (AUC {curve.pr_auc:.3f})")
    if kind == "roc":
        ax.plot([0, 1], [0, 1], color="tab:gray", linestyle=":", linewidth=0.8)
        ax.set_xlabel("FPR")
        ax.set_ylabel("TPR")
    else:
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right" if kind == "roc" else "lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


# --- localización temporal ---

def temporal_clip_scores(descriptors: np.ndarray, splice_index: int, detect: DetectConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Puntuaciones y etiquetas por transición de un clip empalmado.

    La transición del empalme y sus vecinas a ±COMB_TOLERANCE forman un único positivo
    (su puntuación máxima); el resto son negativos.
    """
    series = distance_series(descriptors)
    scores = transition_scores(series, suppress=detect.suppress, period=detect.period,
                               min_period=detect.min_period, max_period=detect.max_period,
                               relative_gate=detect.relative_gate)
    center = splice_index - 2
    if not 0 <= center < len(scores):
        raise EvaluationError(f"punto de empalme {splice_index} fuera de la serie de {len(scores)} transiciones")
    window = np.arange(max(center - COMB_TOLERANCE, 0), min(center + COMB_TOLERANCE + 1, len(scores)))
    negatives = np.delete(scores, window)
    clip_scores = np.concatenate([[scores[window].max()], negatives])
    clip_labels = np.concatenate([[True], np.zeros(len(negatives), dtype=bool)])
    return clip_scores, clip_labels


def evaluate_temporal(dataset_dir: str, records: Sequence[ClipRecord], bank: ModelBank, detect: DetectConfig,
                      cache_dir: Optional[str] = None, subsets: Sequence[str] = SUBSETS) -> Dict[str, EvalCurve]:
    """Curvas por transición sobre D_temp para cada subconjunto de descriptores."""
    clips = [record for record in records if record.kind == "temporal"]
    if not clips:
        raise EvaluationError("el conjunto de datos no contiene empalmes temporales", path=dataset_dir)
    scores: Dict[str, List[np.ndarray]] = {subset: [] for subset in subsets}
    labels: Dict[str, List[np.ndarray]] = {subset: [] for subset in subsets}
    for record in clips:
        video = load_clip(dataset_dir, record)
        descriptors = frame_descriptors(video_feature_tensors(video, detect.stride, bank, cache_dir))
        for subset in subsets:
            clip_scores, clip_labels = temporal_clip_scores(descriptors[:, bank.subset(subset)],
                                                            record.splice_index, detect)
            scores[subset].append(clip_scores)
            labels[subset].append(clip_labels)
    logger.info(f"Evaluación temporal sobre {len(clips)} clips")
    return {subset: eval_curves(np.concatenate(scores[subset]), np.concatenate(labels[subset]))
            for subset in subsets}


# --- localización espacial ---

def _cell_truth(record: ClipRecord, stride: int) -> np.ndarray:
    grid = patch_grid((record.height, record.width), stride)
    return window_mask_to_cells(record_mask(record), grid).ravel()


def evaluate_spatial(dataset_dir: str, records: Sequence[ClipRecord], bank: ModelBank, spatial: SpatialConfig,
                     cache_dir: Optional[str] = None,
                     subsets: Sequence[str] = SUBSETS) -> Dict[str, Dict[str, EvalCurve]]:
    """
    Curvas por parche sobre D_spat, en modo de fotograma único (los primeros `eval_frames`
    fotogramas, cada uno por separado) y multi-fotograma (media de los primeros W tensores).
    Devuelve {"single": {subconjunto: curva}, "multi": {...}}.
    """
    clips = [record for record in records if record.kind == "spatial"]
    if not clips:
        raise EvaluationError("el conjunto de datos no contiene empalmes espaciales", path=dataset_dir)
    collected = {mode: {subset: ([], []) for subset in subsets} for mode in ("single", "multi")}
    for record in clips:
        video = load_clip(dataset_dir, record)
        used = min(video.N, max(spatial.eval_frames, spatial.window_frames))
        tensors = video_feature_tensors(VideoSequence(video.frames[:used], video.frame_rate), spatial.stride,
                                        bank, cache_dir)
        truth = _cell_truth(record, spatial.stride)
        averaged = temporal_average(list(tensors[:min(spatial.window_frames, used)]))
        for subset in subsets:
            components = bank.subset(subset)
            for tensor in tensors[:spatial.eval_frames]:
                collected["single"][subset][0].append(localize_frame(tensor, components).values.ravel())
                collected["single"][subset][1].append(truth)
            collected["multi"][subset][0].append(localize_frame(averaged, components).values.ravel())
            collected["multi"][subset][1].append(truth)
    logger.info(f"Evaluación espacial sobre {len(clips)} clips")
    return {mode: {subset: eval_curves(np.concatenate(parts[0]), np.concatenate(parts[1]))
                   for subset, parts in by_subset.items()}
            for mode, by_subset in collected.items()}


def robustness_sweep(x: VideoSequence, y: VideoSequence, spec: DatasetSpec, bank: ModelBank,
                     spatial: SpatialConfig, deltas: Optional[Sequence[float]] = None,
                     out_dir: Optional[str] = None) -> pd.DataFrame:
    """
    Puntuación media del mapa fusionado dentro y fuera de la ventana empalmada en función
    del Δ de la recodificación posterior. Con `out_dir` guarda además el mapa de calor de
    cada Δ.
    """
    deltas = list(deltas if deltas is not None else spatial.robustness_deltas)
    spliced, mask = splice_spatial(x, y, spec.window_top_left, spec.window)
    used = min(spliced.N, spatial.window_frames)
    clip = VideoSequence(spliced.frames[:used], spliced.frame_rate)
    grid = patch_grid((clip.U, clip.V), spatial.stride)
    truth = window_mask_to_cells(mask, grid)
    components = bank.subset(spatial.subset)

    rows = []
    for delta in deltas:
        tensors = video_feature_tensors(reencode(clip, spec.reencode_flavor, delta), spatial.stride, bank)
        fused = localize_frame(temporal_average(list(tensors)), components)
        rows.append({"delta": float(delta),
                     "mean_in_window": float(fused.values[truth].mean()),
                     "mean_out_window": float(fused.values[~truth].mean())})
        if out_dir:
            image = render_heatmap(fused, (clip.U, clip.V), spatial.stride)
            write_pgm(image, os.path.join(out_dir, f"heatmap_d{delta:g}.pgm"))
        logger.info(f"Recodificación Δ={delta:g}: media dentro de la ventana {rows[-1]['mean_in_window']:.4g}")
    return pd.DataFrame(rows)
