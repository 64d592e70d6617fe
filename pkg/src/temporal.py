"""
Localización temporal de empalmes a partir de la serie de distancias entre descriptores
de fotogramas consecutivos.

Convención de índices: la posición i (base 0) de la serie contiene Δf(n) con n = i + 1,
la distancia entre los fotogramas n y n + 1 (base 1). Un empalme detectado en la posición
i se informa como i + 2, el primer fotograma del segundo plano.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from .exceptions import ShapeError, ThresholdError
from .models import SpliceReport

logger = logging.getLogger(__name__)

COMB_SCORE_MIN = 0.6
COMB_MIN_POSITIONS = 3
PEAK_MAD_FACTOR = 6.0
COMB_TOLERANCE = 1


@dataclass
class GopEstimate:
    period: int
    phase: int
    score: float
    strength: float = 0.0

    def positions(self, length: int) -> np.ndarray:
        return np.arange(self.phase, length, self.period)


def distance_series(descriptors) -> np.ndarray:
    """Δf(n) = ||f(n) - f(n+1)||² para n = 1..N-1."""
    vectors = np.array([getattr(d, "f", d) for d in descriptors], dtype=np.float64)
    if vectors.ndim != 2 or len(vectors) < 2:
        raise ShapeError(f"se necesitan al menos 2 descriptores de fotograma, recibidos {len(vectors)}")
    return np.sum(np.diff(vectors, axis=0) ** 2, axis=1)


def report_index(position: int) -> int:
    """Posición en la serie (base 0) -> fotograma del punto de empalme (base 1)."""
    return int(position) + 2


def _significant_peaks(series: np.ndarray) -> np.ndarray:
    """Máximos locales que superan la mediana en más de PEAK_MAD_FACTOR desviaciones absolutas medianas."""
    median = np.median(series)
    mad = np.median(np.abs(series - median))
    floor = median + PEAK_MAD_FACTOR * mad
    left = np.concatenate([[-np.inf], series[:-1]])
    right = np.concatenate([series[1:], [-np.inf]])
    return np.flatnonzero((series >= left) & (series >= right) & (series > floor))


def _near_peak_mask(series: np.ndarray) -> np.ndarray:
    """Posiciones a ±COMB_TOLERANCE muestras de algún pico significativo."""
    length = len(series)
    near_peak = np.zeros(length, dtype=bool)
    peaks = _significant_peaks(series)
    for offset in range(-COMB_TOLERANCE, COMB_TOLERANCE + 1):
        shifted = peaks + offset
        near_peak[shifted[(shifted >= 0) & (shifted < length)]] = True
    return near_peak


def estimate_gop(series: np.ndarray, min_period: int = 2, max_period: int = 60) -> Optional[GopEstimate]:
    """
    Periodo y fase del patrón periódico de picos, o None.

    Para cada periodo p y fase φ el peine son las posiciones φ, φ + p, ...; una posición
    acierta si hay un pico significativo a ±1 muestra. La puntuación es la fracción de
    aciertos. Se exige un mínimo de COMB_MIN_POSITIONS posiciones y una puntuación de al
    menos COMB_SCORE_MIN; entre empates gana el periodo más pequeño y, dentro de un
    periodo, la fase cuyo peine tiene mayor valor medio en la serie.
    """
    series = np.asarray(series, dtype=np.float64)
    length = len(series)
    max_period = min(max_period, (length - 1) // (COMB_MIN_POSITIONS - 1))
    if length < 3 or max_period < min_period:
        return None
    if len(_significant_peaks(series)) < COMB_MIN_POSITIONS:
        return None
    near_peak = _near_peak_mask(series)

    best: Optional[GopEstimate] = None
    for period in range(min_period, max_period + 1):
        for phase in range(period):
            comb = near_peak[phase::period]
            if len(comb) < COMB_MIN_POSITIONS:
                continue
            score = float(comb.mean())
            strength = float(series[phase::period].mean())
            tied = best is not None and period == best.period and abs(score - best.score) <= 1e-12
            if best is None or score > best.score + 1e-12 or (tied and strength > best.strength):
                best = GopEstimate(period=period, phase=phase, score=score, strength=strength)
    if best is None or best.score < COMB_SCORE_MIN:
        return None
    return best


def estimate_period(series: np.ndarray, min_period: int = 2, max_period: int = 60) -> Optional[int]:
    estimate = estimate_gop(series, min_period, max_period)
    return estimate.period if estimate else None


def _phase_for_period(series: np.ndarray, period: int) -> GopEstimate:
    """Mejor fase para un periodo impuesto manualmente."""
    series = np.asarray(series, dtype=np.float64)
    near_peak = _near_peak_mask(series)
    candidates = [GopEstimate(period=period, phase=phase, score=float(near_peak[phase::period].mean()),
                              strength=float(series[phase::period].mean()))
                  for phase in range(min(period, len(series)))]
    return max(candidates, key=lambda estimate: (round(estimate.score, 12), estimate.strength))


def auto_threshold(series: np.ndarray) -> float:
    """Umbral de reserva: 10 veces la mediana de la serie, con un mínimo de 1e-6."""
    return max(10.0 * float(np.median(series)), 1e-6)


def detect_splices(series: np.ndarray, threshold: float, suppress: bool = True, period: Optional[int] = None,
                   min_period: int = 2, max_period: int = 60, relative_gate: float = 0.25) -> SpliceReport:
    """
    Detección por umbral sobre Δf con supresión opcional de los falsos positivos del GOP.

    Con `suppress` se descartan las detecciones a ±1 de una posición del peine periódico
    cuyo valor no llega a `relative_gate` veces el máximo de la serie.
    """
    if threshold < 0:
        raise ThresholdError(f"el umbral debe ser >= 0, recibido {threshold}")
    series = np.asarray(series, dtype=np.float64)
    candidates = np.flatnonzero(series > threshold)

    estimate = None
    suppressed: List[int] = []
    if suppress and len(series):
        estimate = _phase_for_period(series, period) if period else estimate_gop(series, min_period, max_period)
    if estimate is not None:
        comb = estimate.positions(len(series))
        gate = relative_gate * float(series.max())
        kept = []
        for position in candidates:
            periodic = np.any(np.abs(comb - position) <= COMB_TOLERANCE)
            if periodic and series[position] < gate:
                suppressed.append(int(position))
            else:
                kept.append(int(position))
        candidates = np.array(kept, dtype=int)
        logger.info(f"GOP estimado: periodo {estimate.period}, fase {estimate.phase} "
                    f"({len(suppressed)} detecciones suprimidas)")

    return SpliceReport(
        n_frames=len(series) + 1,
        indices=[report_index(p) for p in candidates],
        peak_values=[float(series[p]) for p in candidates],
        threshold=float(threshold),
        suppressed=[report_index(p) for p in suppressed],
        period=estimate.period if estimate else None,
        phase=estimate.phase if estimate else None,
    )


def transition_scores(series: np.ndarray, suppress: bool = True, period: Optional[int] = None,
                      min_period: int = 2, max_period: int = 60, relative_gate: float = 0.25) -> np.ndarray:
    """
    Puntuación por transición para barridos ROC: el propio Δf, o 0 para las transiciones
    que la supresión periódica descartaría con cualquier umbral.
    """
    report = detect_splices(series, 0.0, suppress=suppress, period=period, min_period=min_period,
                            max_period=max_period, relative_gate=relative_gate)
    scores = np.asarray(series, dtype=np.float64).copy()
    for index in report.suppressed:
        scores[index - 2] = 0.0
    return scores


# --- salidas ---

def write_splice_report_csv(report: SpliceReport, series: np.ndarray, path: str) -> str:
    """CSV con una fila por transición por encima del umbral: índice, Δf y si se suprimió."""
    rows = [(index, float(series[index - 2]), False) for index in report.indices]
    rows += [(index, float(series[index - 2]), True) for index in report.suppressed]
    frame = pd.DataFrame(sorted(rows), columns=["index", "delta_f", "suppressed"])
    frame.to_csv(path, index=False)
    return path


def write_series_plot_data(series: np.ndarray, path: str) -> str:
    """Datos (n, Δf(n)) para representar la serie externamente."""
    pd.DataFrame({"n": np.arange(1, len(series) + 1), "delta_f": series}).to_csv(path, index=False)
    return path


def plot_series(series: np.ndarray, path: str, report: Optional[SpliceReport] = None,
                ground_truth: Optional[Sequence[int]] = None) -> str:
    """Gráfica de Δf(n) en escala logarítmica con las detecciones marcadas."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = np.arange(1, len(series) + 1)
    fig, ax = plt.subplots(figsize=(10, 3.5))
    ax.semilogy(n, np.maximum(series, 1e-12), color="tab:blue", linewidth=1)
    if report is not None:
        ax.axhline(max(report.threshold, 1e-12), color="tab:gray", linestyle="--", linewidth=0.8)
        for index in report.indices:
            ax.axvline(index - 1, color="tab:red", linewidth=0.8)
        for index in report.suppressed:
            ax.axvline(index - 1, color="tab:orange", linestyle=":", linewidth=0.8)
    for index in ground_truth or []:
        ax.axvline(index - 1, color="tab:green", linestyle="-.", linewidth=0.8)
    ax.set_xlabel("n")
    ax.set_ylabel("Δf(n)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
