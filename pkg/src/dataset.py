"""
Banco de pruebas sintético: versiones codificadas, empalmes temporales y espaciales y
corpus de parches etiquetados para entrenar los clasificadores.

Estructura de un directorio de conjunto de datos:

    dataset.json       DatasetSpec usada para generarlo
    clips.jsonl        un ClipRecord por línea, en orden de generación
    versions/          s00_A_d5.y4m ...
    temporal/          s00_A_d5__B_d40.y4m ...
    spatial/           s00_A_d5__B_d40.y4m ...
"""
import json
import logging
import os
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from termcolor import colored

from .codec import encode_sequence, gen_texture
from .exceptions import DatasetError
from .models import (CODEC_CLASSES, PATCH_SIZE, QUALITY_CLASSES, ClipRecord, CodecConfig, CorpusSpec,
                     DatasetSpec)
from .patching import patch_array, variance_mask
from .video import VideoSequence, load_y4m, write_y4m

logger = logging.getLogger(__name__)

SPEC_FILE = "dataset.json"
RECORDS_FILE = "clips.jsonl"
# Desplazamientos de semilla para que el contenido del corpus no coincida con el del banco.
_SOURCE_SEED_STRIDE = 1009
_CORPUS_SEED_OFFSET = 500_000


def source_seed(seed: int, source: int) -> int:
    return seed * _SOURCE_SEED_STRIDE + source


def version_name(source: int, flavor: str, delta: float) -> str:
    return f"s{source:02d}_{flavor}_d{delta:g}"


# --- operaciones de falsificación ---

def _check_spliceable(x: VideoSequence, y: VideoSequence) -> None:
    if (x.U, x.V) != (y.U, y.V):
        raise DatasetError(f"las secuencias no son empalmables: {x.U}x{x.V} frente a {y.U}x{y.V}")


def splice_temporal(x: VideoSequence, y: VideoSequence, n_x: Optional[int] = None) -> Tuple[VideoSequence, int]:
    """
    Primeros `n_x` fotogramas de X seguidos del resto de Y (mismo número total de fotogramas).
    Devuelve el vídeo y el punto de empalme n_x + 1 (base 1).
    """
    _check_spliceable(x, y)
    total = min(x.N, y.N)
    n_x = total // 2 if n_x is None else n_x
    if not 1 <= n_x < total:
        raise DatasetError(f"punto de corte {n_x} inválido para {total} fotogramas")
    frames = np.concatenate([x.frames[:n_x], y.frames[n_x:total]])
    return VideoSequence(frames, frame_rate=x.frame_rate), n_x + 1


def splice_spatial(x: VideoSequence, y: VideoSequence, top_left: Tuple[int, int],
                   size: Tuple[int, int]) -> Tuple[VideoSequence, np.ndarray]:
    """Sustituye en todos los fotogramas de X la ventana indicada por la de Y. Devuelve vídeo y máscara (U, V)."""
    _check_spliceable(x, y)
    top, left = top_left
    rows, cols = size
    if top < 0 or left < 0 or rows <= 0 or cols <= 0 or top + rows > x.U or left + cols > x.V:
        raise DatasetError(f"la ventana {rows}x{cols} en ({top}, {left}) se sale de {x.U}x{x.V}")
    total = min(x.N, y.N)
    frames = np.array(x.frames[:total], copy=True)
    frames[:, top:top + rows, left:left + cols] = y.frames[:total, top:top + rows, left:left + cols]
    mask = np.zeros((x.U, x.V), dtype=bool)
    mask[top:top + rows, left:left + cols] = True
    return VideoSequence(frames, frame_rate=x.frame_rate), mask


def record_mask(record: ClipRecord) -> np.ndarray:
    """Máscara de verdad terreno por píxel de un empalme espacial."""
    if record.window is None:
        raise DatasetError(f"el clip {record.name} no tiene ventana empalmada")
    top, left, rows, cols = record.window
    mask = np.zeros((record.height, record.width), dtype=bool)
    mask[top:top + rows, left:left + cols] = True
    return mask


def reencode(video: VideoSequence, flavor: str, delta: Optional[float]) -> VideoSequence:
    """Recodificación posterior a la falsificación (sin GOP); `delta` None la desactiva."""
    if delta is None:
        return video
    return encode_sequence(video, CodecConfig(flavor=flavor, delta=delta), gop_period=0)


def version_pairs(names: Sequence[str], max_pairs: Optional[int] = None,
                  rng: Optional[np.random.Generator] = None) -> List[Tuple[str, str]]:
    """Parejas no ordenadas de versiones; si hay más de `max_pairs` se toma una muestra con semilla."""
    pairs = list(combinations(names, 2))
    if max_pairs is not None and len(pairs) > max_pairs:
        rng = rng or np.random.default_rng(0)
        chosen = np.sort(rng.choice(len(pairs), size=max_pairs, replace=False))
        pairs = [pairs[index] for index in chosen]
    return pairs


# --- generación del conjunto D y sus empalmes ---

def build_dataset_D(spec: DatasetSpec, out_dir: str) -> List[ClipRecord]:
    """Codifica cada fuente con todas las combinaciones (códec, Δ) y guarda las versiones en Y4M."""
    records: List[ClipRecord] = []
    for source in range(spec.n_sources):
        original = gen_texture(spec.height, spec.width, spec.frames, source_seed(spec.seed, source), spec.texture)
        original.frame_rate = float(spec.frame_rate)
        for flavor in spec.flavors:
            for delta in spec.deltas:
                name = version_name(source, flavor, delta)
                relative = os.path.join("versions", f"{name}.y4m")
                encoded = encode_sequence(original, CodecConfig(flavor=flavor, delta=delta), spec.gop_period)
                write_y4m(encoded, os.path.join(out_dir, relative))
                records.append(ClipRecord(name=name, kind="version", path=relative, source=source, flavor=flavor,
                                          delta=delta, n_frames=encoded.N, height=encoded.U, width=encoded.V))
        logger.info(f"Fuente {source}: {len(spec.flavors) * len(spec.deltas)} versiones codificadas")
    return records


def _versions_by_source(versions: Sequence[ClipRecord]) -> Dict[int, List[ClipRecord]]:
    grouped: Dict[int, List[ClipRecord]] = {}
    for record in versions:
        if record.kind == "version":
            grouped.setdefault(record.source, []).append(record)
    return grouped


def _source_pairs(spec: DatasetSpec, versions: Sequence[ClipRecord]):
    """Parejas de versiones de cada fuente, en orden determinista."""
    rng = np.random.default_rng(spec.seed)
    for source, records in sorted(_versions_by_source(versions).items()):
        by_name = {record.name: record for record in records}
        for first, second in version_pairs([record.name for record in records], spec.max_pairs_per_source, rng):
            yield source, by_name[first], by_name[second]


def _cached_clip(cache: Dict[str, VideoSequence], out_dir: str, record: ClipRecord) -> VideoSequence:
    if record.name not in cache:
        cache[record.name] = load_y4m(os.path.join(out_dir, record.path))
    return cache[record.name]


def build_temporal_splices(spec: DatasetSpec, versions: Sequence[ClipRecord], out_dir: str) -> List[ClipRecord]:
    """D_temp: mitad inicial de una versión + mitad final de otra, para cada pareja de la misma fuente."""
    records: List[ClipRecord] = []
    cache: Dict[str, VideoSequence] = {}
    for source, first, second in _source_pairs(spec, versions):
        x, y = _cached_clip(cache, out_dir, first), _cached_clip(cache, out_dir, second)
        spliced, splice_index = splice_temporal(x, y)
        spliced = reencode(spliced, spec.reencode_flavor, spec.reencode_delta)
        name = f"{first.name}__{second.name[4:]}"
        relative = os.path.join("temporal", f"{name}.y4m")
        write_y4m(spliced, os.path.join(out_dir, relative))
        records.append(ClipRecord(name=name, kind="temporal", path=relative, source=source,
                                  pair=[first.name, second.name], splice_index=splice_index,
                                  reencode_delta=spec.reencode_delta, n_frames=spliced.N,
                                  height=spliced.U, width=spliced.V))
    logger.info(f"{len(records)} empalmes temporales generados")
    return records


def build_spatial_splices(spec: DatasetSpec, versions: Sequence[ClipRecord], out_dir: str) -> List[ClipRecord]:
    """D_spat: la ventana centrada de una versión se sustituye por la de otra en todos los fotogramas."""
    records: List[ClipRecord] = []
    cache: Dict[str, VideoSequence] = {}
    top, left = spec.window_top_left
    rows, cols = spec.window
    for source, first, second in _source_pairs(spec, versions):
        x, y = _cached_clip(cache, out_dir, first), _cached_clip(cache, out_dir, second)
        spliced, _ = splice_spatial(x, y, (top, left), (rows, cols))
        spliced = reencode(spliced, spec.reencode_flavor, spec.reencode_delta)
        name = f"{first.name}__{second.name[4:]}"
        relative = os.path.join("spatial", f"{name}.y4m")
        write_y4m(spliced, os.path.join(out_dir, relative))
        records.append(ClipRecord(name=name, kind="spatial", path=relative, source=source,
                                  pair=[first.name, second.name], window=(top, left, rows, cols),
                                  reencode_delta=spec.reencode_delta, n_frames=spliced.N,
                                  height=spliced.U, width=spliced.V))
    logger.info(f"{len(records)} empalmes espaciales generados")
    return records


def build_dataset(spec: DatasetSpec, out_dir: str) -> List[ClipRecord]:
    """Genera D, D_temp y D_spat y escribe la especificación y el índice de clips."""
    os.makedirs(out_dir, exist_ok=True)
    print(colored(f"[+] Generando conjunto de datos en {out_dir}", "blue"))
    versions = build_dataset_D(spec, out_dir)
    records = versions + build_temporal_splices(spec, versions, out_dir) + build_spatial_splices(spec, versions, out_dir)
    save_dataset(spec, records, out_dir)
    print(colored(f"[+] {len(records)} clips generados", "green"))
    return records


def save_dataset(spec: DatasetSpec, records: Sequence[ClipRecord], out_dir: str) -> None:
    with open(os.path.join(out_dir, SPEC_FILE), "w", encoding="utf-8") as handle:
        handle.write(spec.model_dump_json(indent=2))
    with open(os.path.join(out_dir, RECORDS_FILE), "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.model_dump(mode="json"), sort_keys=True) + "\n")


def load_dataset(dataset_dir: str) -> Tuple[DatasetSpec, List[ClipRecord]]:
    spec_path = os.path.join(dataset_dir, SPEC_FILE)
    records_path = os.path.join(dataset_dir, RECORDS_FILE)
    if not os.path.exists(spec_path) or not os.path.exists(records_path):
        raise DatasetError("no es un directorio de conjunto de datos (faltan dataset.json o clips.jsonl)",
                           path=dataset_dir)
    with open(spec_path, "r", encoding="utf-8") as handle:
        spec = DatasetSpec.model_validate_json(handle.read())
    records = []
    with open(records_path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if line.strip():
                try:
                    records.append(ClipRecord.model_validate_json(line))
                except ValueError as e:
                    raise DatasetError(f"registro inválido en la línea {number}: {e}", path=records_path) from e
    return spec, records


def load_clip(dataset_dir: str, record: ClipRecord) -> VideoSequence:
    return load_y4m(os.path.join(dataset_dir, record.path))


# --- corpus de parches para entrenamiento ---

@dataclass
class PatchCorpus:
    """Parches etiquetados con reparto estratificado entrenamiento/validación/prueba."""
    task: str
    classes: List[str]
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    delta_test: np.ndarray

    def counts(self) -> Dict[str, np.ndarray]:
        k = len(self.classes)
        return {split: np.bincount(labels, minlength=k)
                for split, labels in (("train", self.y_train), ("val", self.y_val), ("test", self.y_test))}


def quality_classes(deltas: Sequence[float]) -> List[Tuple[str, float]]:
    """Clases de calidad de baja a alta (Δ decreciente)."""
    ordered = sorted(deltas, reverse=True)
    if len(ordered) == len(QUALITY_CLASSES):
        return list(zip(QUALITY_CLASSES, ordered))
    return [(f"d{delta:g}", delta) for delta in ordered]


def _class_recipes(task: str, spec: CorpusSpec) -> List[Tuple[str, List[Tuple[str, float]]]]:
    """Para cada clase, la lista de configuraciones (códec, Δ) que la componen."""
    if task == "quality":
        return [(name, [(flavor, delta) for flavor in spec.flavors]) for name, delta in quality_classes(spec.deltas)]
    if task == "codec":
        return [(flavor, [(flavor, delta) for delta in spec.codec_deltas]) for flavor in CODEC_CLASSES]
    raise DatasetError(f"tarea desconocida: {task}")


def _split_indices(count: int, split: Tuple[float, float, float], rng: np.random.Generator):
    order = rng.permutation(count)
    n_train = int(round(split[0] * count))
    n_val = min(int(round(split[1] * count)), count - n_train)
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def build_training_corpus(task: str, spec: CorpusSpec) -> PatchCorpus:
    """
    Corpus de parches de 64x64 sin solape para la tarea `quality` o `codec`.

    El filtro de varianza se evalúa sobre los parches de la fuente sin codificar, de modo
    que todas las clases comparten las mismas posiciones de contenido.
    """
    recipes = _class_recipes(task, spec)
    rng = np.random.default_rng(spec.seed)
    per_class: List[List[np.ndarray]] = [[] for _ in recipes]
    per_class_delta: List[List[np.ndarray]] = [[] for _ in recipes]

    for source in range(spec.n_sources):
        seed = source_seed(spec.seed, source) + _CORPUS_SEED_OFFSET
        original = gen_texture(spec.height, spec.width, spec.frames_per_video, seed, spec.texture)
        keep = [variance_mask(patch_array(frame, PATCH_SIZE)[0], spec.variance_threshold)
                for frame in original.frames]
        for label, (_, settings) in enumerate(recipes):
            for flavor, delta in settings:
                encoded = encode_sequence(original, CodecConfig(flavor=flavor, delta=delta))
                for frame, mask in zip(encoded.frames, keep):
                    patches = patch_array(frame, PATCH_SIZE)[0][mask]
                    per_class[label].append(np.array(patches, dtype=np.uint8))
                    per_class_delta[label].append(np.full(len(patches), delta))

    splits = {name: ([], [], []) for name in ("train", "val", "test")}
    for label, (name, _) in enumerate(recipes):
        patches = np.concatenate(per_class[label]) if per_class[label] else np.zeros((0, PATCH_SIZE, PATCH_SIZE))
        deltas = np.concatenate(per_class_delta[label]) if per_class_delta[label] else np.zeros(0)
        if len(patches) == 0:
            raise DatasetError(f"la clase '{name}' no tiene parches tras el filtro de varianza")
        if spec.max_patches_per_class and len(patches) > spec.max_patches_per_class:
            chosen = np.sort(rng.choice(len(patches), size=spec.max_patches_per_class, replace=False))
            patches, deltas = patches[chosen], deltas[chosen]
        for split_name, index in zip(("train", "val", "test"), _split_indices(len(patches), spec.split, rng)):
            splits[split_name][0].append(patches[index])
            splits[split_name][1].append(np.full(len(index), label, dtype=np.int64))
            splits[split_name][2].append(deltas[index])
        logger.info(f"Clase '{name}': {len(patches)} parches")

    joined = {name: tuple(np.concatenate(part) for part in parts) for name, parts in splits.items()}
    return PatchCorpus(task=task, classes=[name for name, _ in recipes],
                       X_train=joined["train"][0], y_train=joined["train"][1],
                       X_val=joined["val"][0], y_val=joined["val"][1],
                       X_test=joined["test"][0], y_test=joined["test"][1], delta_test=joined["test"][2])
