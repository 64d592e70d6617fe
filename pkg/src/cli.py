"""
Interfaz de línea de comandos.

Todas las órdenes aceptan `--config FICHERO` (key=value), `--set clave=valor`
(repetible) y `--out DIR`. Las salidas se escriben en un directorio de ejecución con
su manifiesto `manifest.jsonl` y su log `focal.log`.

Códigos de salida: 0 correcto, 1 error de datos o de E/S, 2 uso incorrecto.
"""
import argparse
import hashlib
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from termcolor import colored

from . import db_config
from .codec import delta_from_q, encode_sequence, psnr
from .config import RunConfig, config_digest, load_run_config
from .dataset import build_dataset, build_training_corpus, load_clip, load_dataset
from .descriptors import ModelBank, default_bank, frame_descriptors, temporal_average, video_feature_tensors
from .evaluation import (evaluate_spatial, evaluate_temporal, plot_curves, robustness_sweep, summary_table,
                         write_curve_csv)
from .exceptions import DatasetError, FocalError
from .models import CodecConfig
from .network import FocalNet, architecture, rf_table
from .spatial import classify_patches, localize_frame, render_heatmap, write_pgm, write_scores_csv
from .temporal import (auto_threshold, detect_splices, distance_series, plot_series, write_series_plot_data,
                       write_splice_report_csv)
from .training import accuracy_at_delta, plot_training_log, save_model, train
from .utils import RunManifest, make_run_dir, setup_logging
from .video import VideoSequence, load_y4m, write_y4m
from .weights import load_card, load_weights, save_card

logger = logging.getLogger(__name__)

# Tuplas (m, j, r, c) de la arquitectura sobre un parche de 64x64.
EXPECTED_RF = [(64, 1, 1, 0.5), (61, 1, 4, 2.0), (30, 2, 6, 3.0), (27, 2, 12, 6.0), (13, 4, 16, 8.0), (7, 8, 24, 8.0)]
RF_LAYERS = ["input", "conv1", "conv2", "conv3", "conv4", "conv5"]
CODEC_EVAL_DELTA = 20.0
SPATIAL_AUTO_FRACTION = 0.5


# --- utilidades de las órdenes ---

def _load_bank(args) -> Tuple[ModelBank, List[str]]:
    """Banco (códec, calidad) desde --codec-model/--quality-model o --models DIR."""
    codec_path = args.codec_model or (os.path.join(args.models, "codec.focw") if args.models else None)
    quality_path = args.quality_model or (os.path.join(args.models, "quality.focw") if args.models else None)
    if not codec_path or not quality_path:
        raise DatasetError("se necesitan los modelos de códec y de calidad (--models o --codec-model/--quality-model)")
    codec = FocalNet.from_weights(load_weights(codec_path))
    quality = FocalNet.from_weights(load_weights(quality_path))
    logger.info(f"Modelos cargados: {codec_path}, {quality_path}")
    return default_bank(codec, quality), [codec_path, quality_path]


def _card_threshold(model_paths: List[str], kind: str, subset: str) -> Optional[float]:
    """Umbral calibrado para el subconjunto (`temporal.codec`); si no hay, el genérico (`temporal`)."""
    for key in (f"{kind}.{subset}", kind):
        for path in model_paths:
            card = load_card(path)
            if card is not None and key in card.thresholds:
                return float(card.thresholds[key])
    return None


def _calibrated_thresholds(kind: str, curves: Dict, default_subset: str) -> Dict[str, float]:
    """Un umbral por subconjunto más el genérico, que es el del subconjunto por defecto."""
    values = {f"{kind}.{subset}": max(curve.best_threshold, 0.0) for subset, curve in curves.items()}
    values[kind] = values[f"{kind}.{default_subset}"]
    return values


def _store_thresholds(model_paths: List[str], values: Dict[str, float], dataset_dir: str, use_catalog: bool) -> None:
    """Guarda los umbrales calibrados en la ficha de cada modelo."""
    for path in model_paths:
        card = load_card(path)
        if card is None:
            logger.warning(f"⚠️ El modelo {path} no tiene ficha; no se guardan los umbrales")
            continue
        thresholds = dict(card.thresholds)
        thresholds.update({key: float(value) for key, value in values.items()})
        card = card.model_copy(update={"thresholds": thresholds, "calibration_dataset": os.path.abspath(dataset_dir)})
        save_card(card, path)
        if use_catalog:
            db_config.register_model(path, card)
    for key, value in sorted(values.items()):
        print(colored(f"[+] Umbral '{key}' calibrado: {value:.6g}", "green"))


def _resolve_threshold(flag: Optional[float], configured: Optional[float], card: Optional[float],
                       fallback: float) -> float:
    for value in (flag, configured, card):
        if value is not None:
            return float(value)
    return float(fallback)


# --- órdenes ---

def cmd_gen_data(args, run_config: RunConfig, run_dir: str, manifest: RunManifest) -> int:
    records = build_dataset(run_config.dataset, run_dir)
    for record in records:
        entry = manifest.add(f"clip:{record.kind}", os.path.join(run_dir, record.path),
                             params=record.model_dump(mode="json", exclude={"path"}))
        if not args.no_catalog:
            db_config.register_clip(run_dir, record, sha256=entry["sha256"])
    manifest.add("dataset_spec", os.path.join(run_dir, "dataset.json"))
    manifest.add("clip_index", os.path.join(run_dir, "clips.jsonl"))
    counts = pd.Series([record.kind for record in records]).value_counts()
    for kind, count in counts.items():
        print(colored(f"[+] {kind}: {count} clips", "blue"))
    return 0


def cmd_encode(args, run_config: RunConfig, run_dir: str, manifest: RunManifest) -> int:
    delta = args.delta if args.delta is not None else delta_from_q(args.family, args.q) if args.q is not None else None
    if delta is None:
        raise DatasetError("indica --delta o --q")
    video = load_y4m(args.input)
    encoded = encode_sequence(video, CodecConfig(flavor=args.flavor, delta=delta), args.gop)
    name = args.output or f"{os.path.splitext(os.path.basename(args.input))[0]}_{args.flavor}_d{delta:g}.y4m"
    path = write_y4m(encoded, os.path.join(run_dir, name))
    quality = np.mean([psnr(a, b) for a, b in zip(video.frames, encoded.frames)])
    manifest.add("clip:encoded", path, params={"flavor": args.flavor, "delta": delta, "gop": args.gop,
                                               "psnr": float(quality)})
    print(colored(f"[+] Codificado con {args.flavor}, Δ={delta:g}: PSNR medio {quality:.2f} dB", "green"))
    return 0


def cmd_train(args, run_config: RunConfig, run_dir: str, manifest: RunManifest) -> int:
    tasks = ["codec", "quality"] if args.task == "both" else [args.task]
    recipes = {"codec": run_config.codec_train, "quality": run_config.train}
    for task in tasks:
        print(colored(f"[+] Construyendo corpus de {task}...", "blue"))
        corpus = build_training_corpus(task, run_config.corpus)
        net, card, log = train(task, corpus, recipes[task])
        weights_path = os.path.join(run_dir, f"{task}.focw")
        card = save_model(net, card, weights_path)
        log_path = os.path.join(run_dir, f"{task}_training_log.csv")
        log.to_csv(log_path, index=False)
        plot_training_log(log, os.path.join(run_dir, f"{task}_training.png"))
        manifest.add("weights", weights_path, params={"task": task, "classes": card.classes, "width": card.width})
        manifest.add("model_card", os.path.join(run_dir, f"{task}.card.json"))
        manifest.add("training_log", log_path)
        if not args.no_catalog:
            db_config.register_model(weights_path, card)
        message = f"[+] Modelo de {task} guardado en {weights_path}"
        if card.test_accuracy is not None:
            message += f": exactitud en prueba {card.test_accuracy:.3f}"
        if task == "codec" and np.any(np.isclose(corpus.delta_test, CODEC_EVAL_DELTA)):
            message += f" (Δ={CODEC_EVAL_DELTA:g}: {accuracy_at_delta(net, corpus, CODEC_EVAL_DELTA):.3f})"
        print(colored(message, "green"))
    return 0


def cmd_rf_geometry(args, run_config: RunConfig, run_dir: str, manifest: RunManifest) -> int:
    specs = [spec for spec in architecture(args.width) if spec.kind == "conv"]
    table = rf_table(specs, args.input_side)
    frame = pd.DataFrame(table, columns=["m", "j", "r", "c"])
    frame.insert(0, "layer", RF_LAYERS[:len(table)])
    path = os.path.join(run_dir, "rf_geometry.csv")
    frame.to_csv(path, index=False)
    manifest.add("rf_geometry", path, params={"width": args.width, "input_side": args.input_side})
    print(frame.to_string(index=False))
    if args.input_side == 64 and [tuple(row) for row in table] != EXPECTED_RF:
        print(colored("[-] La geometría no coincide con la esperada", "red"))
        return 1
    print(colored("[+] Geometría de campos receptivos verificada", "green"))
    return 0


def cmd_detect_temporal(args, run_config: RunConfig, run_dir: str, manifest: RunManifest) -> int:
    detect = run_config.detect
    bank, model_paths = _load_bank(args)
    video = load_y4m(args.video)
    descriptors = frame_descriptors(video_feature_tensors(video, detect.stride, bank, args.cache))
    series = distance_series(descriptors[:, bank.subset(args.subset)])
    threshold = _resolve_threshold(args.threshold, detect.threshold,
                                   _card_threshold(model_paths, "temporal", args.subset),
                                   auto_threshold(series))
    report = detect_splices(series, threshold, suppress=detect.suppress and not args.no_suppress,
                            period=args.period or detect.period, min_period=detect.min_period,
                            max_period=detect.max_period, relative_gate=detect.relative_gate)

    report_path = write_splice_report_csv(report, series, os.path.join(run_dir, "splice_report.csv"))
    series_path = write_series_plot_data(series, os.path.join(run_dir, "series.csv"))
    json_path = os.path.join(run_dir, "splice_report.json")
    with open(json_path, "w", encoding="utf-8") as handle:
        handle.write(report.model_dump_json(indent=2))
    manifest.add("splice_report", report_path, params={"threshold": threshold, "subset": args.subset})
    manifest.add("distance_series", series_path)
    manifest.add("splice_report_json", json_path)
    if args.plot:
        manifest.add("plot", plot_series(series, os.path.join(run_dir, "series.png"), report))

    if report.indices:
        print(colored(f"[+] Empalmes detectados en los fotogramas: {report.indices}", "green"))
    else:
        print(colored(f"[!] Ningún empalme por encima del umbral {threshold:.6g}", "yellow"))
    return 0


def cmd_localize_spatial(args, run_config: RunConfig, run_dir: str, manifest: RunManifest) -> int:
    spatial = run_config.spatial
    bank, model_paths = _load_bank(args)
    video = load_y4m(args.video)
    frames = args.frames or spatial.window_frames
    if not 0 <= args.start < video.N:
        raise DatasetError(f"fotograma inicial {args.start} fuera de [0, {video.N})", path=args.video)
    clip = VideoSequence(video.frames[args.start:args.start + frames], video.frame_rate)
    tensors = video_feature_tensors(clip, spatial.stride, bank, args.cache)
    subset = args.subset or spatial.subset
    fused = localize_frame(temporal_average(list(tensors)), bank.subset(subset))
    threshold = _resolve_threshold(args.threshold, spatial.threshold, _card_threshold(model_paths, "spatial", subset),
                                   SPATIAL_AUTO_FRACTION * float(fused.values.max()))
    mask, _ = classify_patches(fused, threshold)

    heatmap_path = write_pgm(render_heatmap(fused, (clip.U, clip.V), spatial.stride),
                             os.path.join(run_dir, "heatmap.pgm"))
    scores_path = write_scores_csv(fused, os.path.join(run_dir, "scores.csv"), mask=mask)
    manifest.add("heatmap", heatmap_path, params={"frames": clip.N, "start": args.start, "stride": spatial.stride})
    manifest.add("patch_scores", scores_path, params={"threshold": threshold})
    print(colored(f"[+] {int(mask.sum())} de {mask.size} parches marcados como falsificados "
                  f"(umbral {threshold:.6g})", "green"))
    return 0


def _write_curves(curves: Dict, run_dir: str, manifest: RunManifest, prefix: str, title: str) -> pd.DataFrame:
    for subset, curve in curves.items():
        manifest.add("roc_points", write_curve_csv(curve, os.path.join(run_dir, f"{prefix}_{subset}.csv")),
                     params={"subset": subset})
    manifest.add("plot", plot_curves(curves, os.path.join(run_dir, f"{prefix}_roc.png"), "roc", title))
    manifest.add("plot", plot_curves(curves, os.path.join(run_dir, f"{prefix}_pr.png"), "pr", title))
    table = summary_table(curves)
    table.insert(0, "evaluation", prefix)
    return table


def _print_table(table: pd.DataFrame) -> None:
    for row in table.itertuples(index=False):
        print(colored(f"[+] {row.evaluation} {row.subset}: AUC {row.auc:.3f}, PR-AUC {row.pr_auc:.3f}, "
                      f"F1 {row.best_f1:.3f}", "blue"))


def cmd_eval_temporal(args, run_config: RunConfig, run_dir: str, manifest: RunManifest) -> int:
    _, records = load_dataset(args.dataset)
    bank, model_paths = _load_bank(args)
    curves = evaluate_temporal(args.dataset, records, bank, run_config.detect, args.cache)
    table = _write_curves(curves, run_dir, manifest, "temporal", "Localización temporal")
    metrics_path = os.path.join(run_dir, "metrics.csv")
    table.to_csv(metrics_path, index=False)
    manifest.add("metrics", metrics_path)
    _print_table(table)
    if args.calibrate:
        _store_thresholds(model_paths, _calibrated_thresholds("temporal", curves, "all"), args.dataset,
                          not args.no_catalog)
    return 0


def cmd_eval_spatial(args, run_config: RunConfig, run_dir: str, manifest: RunManifest) -> int:
    _, records = load_dataset(args.dataset)
    bank, model_paths = _load_bank(args)
    results = evaluate_spatial(args.dataset, records, bank, run_config.spatial, args.cache)
    tables = [_write_curves(curves, run_dir, manifest, f"spatial_{mode}", f"Localización espacial ({mode})")
              for mode, curves in results.items()]
    table = pd.concat(tables, ignore_index=True)
    metrics_path = os.path.join(run_dir, "metrics.csv")
    table.to_csv(metrics_path, index=False)
    manifest.add("metrics", metrics_path)
    _print_table(table)
    if args.calibrate:
        _store_thresholds(model_paths, _calibrated_thresholds("spatial", results["multi"], run_config.spatial.subset),
                          args.dataset, not args.no_catalog)
    return 0


def cmd_robustness(args, run_config: RunConfig, run_dir: str, manifest: RunManifest) -> int:
    spec, records = load_dataset(args.dataset)
    bank, _ = _load_bank(args)
    spliced = [record for record in records if record.kind == "spatial"]
    if not spliced:
        raise DatasetError("el conjunto de datos no contiene empalmes espaciales", path=args.dataset)
    versions = {record.name: record for record in records if record.kind == "version"}
    pair = spliced[min(args.clip, len(spliced) - 1)].pair
    x, y = (load_clip(args.dataset, versions[name]) for name in pair)
    table = robustness_sweep(x, y, spec, bank, run_config.spatial, out_dir=run_dir)
    path = os.path.join(run_dir, "robustness.csv")
    table.to_csv(path, index=False)
    manifest.add("robustness", path, params={"pair": pair})
    for delta in table["delta"]:
        manifest.add("heatmap", os.path.join(run_dir, f"heatmap_d{delta:g}.pgm"), params={"delta": float(delta)})
    for row in table.itertuples(index=False):
        print(colored(f"[+] Δ={row.delta:g}: dentro {row.mean_in_window:.4g}, fuera {row.mean_out_window:.4g}",
                      "blue"))
    return 0


# --- parser ---

def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--models", help="Directorio con codec.focw y quality.focw")
    parser.add_argument("--codec-model", help="Pesos FOCW del modelo de códec")
    parser.add_argument("--quality-model", help="Pesos FOCW del modelo de calidad")
    parser.add_argument("--cache", help="Directorio de caché FOCD de descriptores")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Fichero de configuración key=value")
    common.add_argument("--set", action="append", default=[], metavar="CLAVE=VALOR",
                        help="Override de configuración (repetible)")
    common.add_argument("--out", help="Directorio de ejecución (por defecto runs/<orden>-<digest>)")
    common.add_argument("--no-catalog", action="store_true", help="No registrar resultados en el catálogo")

    parser = argparse.ArgumentParser(prog="focal", description="Localización de falsificaciones en vídeo")
    commands = parser.add_subparsers(dest="command", required=True, metavar="ORDEN")

    sub = commands.add_parser("gen-data", parents=[common], help="Genera D, D_temp y D_spat")
    sub.set_defaults(handler=cmd_gen_data)

    sub = commands.add_parser("encode", parents=[common], help="Codifica un Y4M con el códec sintético")
    sub.add_argument("--input", required=True)
    sub.add_argument("--flavor", choices=["A", "B", "C", "D"], default="A")
    sub.add_argument("--delta", type=float)
    sub.add_argument("--q", type=float, help="Parámetro de calidad (alternativa a --delta)")
    sub.add_argument("--family", choices=["h264", "mpeg"], default="h264")
    sub.add_argument("--gop", type=int, default=0)
    sub.add_argument("--output")
    sub.set_defaults(handler=cmd_encode)

    sub = commands.add_parser("train", parents=[common], help="Entrena los clasificadores")
    sub.add_argument("--task", choices=["codec", "quality", "both"], default="both")
    sub.set_defaults(handler=cmd_train)

    sub = commands.add_parser("rf-geometry", parents=[common], help="Tabla de campos receptivos")
    sub.add_argument("--width", type=int, default=64)
    sub.add_argument("--input-side", type=int, default=64)
    sub.set_defaults(handler=cmd_rf_geometry)

    sub = commands.add_parser("detect-temporal", parents=[common], help="Detecta empalmes temporales")
    sub.add_argument("--video", required=True)
    _add_model_args(sub)
    sub.add_argument("--subset", choices=["codec", "quality", "all"], default="all")
    sub.add_argument("--threshold", type=float)
    sub.add_argument("--period", type=int, help="Periodo del GOP impuesto")
    sub.add_argument("--no-suppress", action="store_true")
    sub.add_argument("--plot", action="store_true")
    sub.set_defaults(handler=cmd_detect_temporal)

    sub = commands.add_parser("localize-spatial", parents=[common], help="Mapa de calor de falsificación espacial")
    sub.add_argument("--video", required=True)
    _add_model_args(sub)
    sub.add_argument("--subset", choices=["codec", "quality", "all"])
    sub.add_argument("--threshold", type=float)
    sub.add_argument("--frames", type=int, help="Fotogramas promediados (1 = fotograma único)")
    sub.add_argument("--start", type=int, default=0)
    sub.set_defaults(handler=cmd_localize_spatial)

    for name, handler, text in (("eval-temporal", cmd_eval_temporal, "Evaluación temporal sobre D_temp"),
                                ("eval-spatial", cmd_eval_spatial, "Evaluación espacial sobre D_spat")):
        sub = commands.add_parser(name, parents=[common], help=text)
        sub.add_argument("--dataset", required=True)
        _add_model_args(sub)
        sub.add_argument("--calibrate", action="store_true", help="Guardar el umbral de mejor F1 en las fichas")
        sub.set_defaults(handler=handler)

    sub = commands.add_parser("robustness", parents=[common], help="Barrido de recodificación posterior")
    sub.add_argument("--dataset", required=True)
    _add_model_args(sub)
    sub.add_argument("--clip", type=int, default=0, help="Índice del empalme espacial usado")
    sub.set_defaults(handler=cmd_robustness)
    return parser


def _run_digest(args, run_config: RunConfig) -> str:
    arguments = {key: value for key, value in vars(args).items() if key not in ("handler", "out", "set", "config")}
    payload = json.dumps({"config": config_digest(run_config), "args": arguments}, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    try:
        run_config = load_run_config(args.config, args.set)
        run_dir = make_run_dir(args.command, _run_digest(args, run_config), args.out)
        setup_logging(os.path.join(run_dir, "focal.log"))
        logger.info(f"Orden {args.command} en {run_dir}")
        manifest = RunManifest(run_dir)
        status = args.handler(args, run_config, run_dir, manifest)
        manifest.write()
        return status
    except FocalError as e:
        logger.error(f"❌ {e.diagnostic()}")
        print(f"error: {e.diagnostic()}", file=sys.stderr)
        return 1
    except OSError as e:
        logger.error(f"❌ {e}")
        location = f"{e.filename}: " if e.filename else ""
        print(f"error: {location}{e.strerror or e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
