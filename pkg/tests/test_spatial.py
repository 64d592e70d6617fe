import math

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from src.exceptions import ShapeError
from src.patching import patch_grid
from src.spatial import (activation_map, classify_patches, fuse, localize_frame, map_entropy, normalize_map,
                         render_heatmap, ver, window_mask_to_cells, write_pgm, write_scores_csv)


def oracle_ver(activation):
    values = [float(v) for v in np.ravel(activation)]
    mean = sum(values) / len(values)
    variance = sum((v - mean) ** 2 for v in values) / len(values)
    if variance == 0:
        return 0.0
    total = sum(values)
    entropy = -sum(v / total * math.log2(v / total) for v in values if v > 0)
    return variance / (entropy + 1e-9)


MAPS = [np.array([[4.0, 0.0], [0.0, 0.0]]), np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([[1.0, 2.0], [3.0, 4.0]])]


def test_mapa_de_activacion():
    np.testing.assert_allclose(activation_map(np.array([[0.0, 1.0], [0.0, 3.0]])), [[1.0, 0.0], [1.0, 4.0]])
    with pytest.raises(ShapeError):
        activation_map(np.zeros((0, 2)))


def test_entropia_en_bits():
    assert map_entropy(np.ones((2, 2))) == pytest.approx(2.0)
    assert map_entropy(np.zeros((2, 2))) == 0.0
    assert map_entropy(MAPS[0]) == 0.0


@pytest.mark.parametrize("index", range(3))
def test_ver_coincide_con_la_definicion(index):
    assert ver(MAPS[index]) == pytest.approx(oracle_ver(MAPS[index]), rel=1e-12)


def test_fusion_coincide_con_la_definicion():
    weights = [oracle_ver(m) for m in MAPS]
    expected = sum(w * m for w, m in zip(weights, MAPS)) / sum(weights)
    fused = fuse(MAPS)
    np.testing.assert_allclose(fused.values, expected, rtol=1e-12)
    np.testing.assert_allclose(fused.weights, weights, rtol=1e-12)


def test_mapa_constante_tiene_ver_cero():
    assert ver(np.full((3, 4), 7.0)) == 0.0


def test_pico_concentrado_supera_a_uno_repartido():
    concentrated = np.array([[5.0, 1.0], [1.0, 1.0]])
    spread = np.array([[7.0, 3.0], [3.0, 3.0]])
    assert concentrated.var() == spread.var() == 3.0
    assert map_entropy(concentrated) < map_entropy(spread)
    assert ver(concentrated) > ver(spread)
    rng = np.random.default_rng(1)
    flat = rng.uniform(0.9, 1.1, size=(8, 8))
    spiked = flat.copy()
    spiked[3, 4] = 30.0
    assert ver(spiked) > ver(flat)


def test_ver_escala_con_el_cuadrado():
    assert ver(3.0 * MAPS[2]) == pytest.approx(9.0 * ver(MAPS[2]), rel=1e-6)


def test_fusion_invariante_al_orden_y_lineal_en_la_escala():
    a, b, c = MAPS
    np.testing.assert_allclose(fuse([a, b, c]).values, fuse([c, a, b]).values, rtol=1e-12)
    np.testing.assert_allclose(fuse([2 * a, 2 * b, 2 * c]).values, 2 * fuse([a, b, c]).values, rtol=1e-9)


def test_fusion_sin_pesos_es_la_media():
    fused = fuse([np.full((2, 2), 1.0), np.full((2, 2), 3.0)])
    np.testing.assert_allclose(fused.values, np.full((2, 2), 2.0))
    np.testing.assert_array_equal(fused.weights, [0.0, 0.0])


def test_fusion_rechaza_entradas_invalidas():
    with pytest.raises(ShapeError):
        fuse([])
    with pytest.raises(ShapeError):
        fuse([np.zeros((2, 2)), np.zeros((2, 3))])


def test_localizacion_de_un_fotograma():
    tensor = np.full((3, 3, 8), 0.25)
    tensor[1, 1, 0] = 0.9
    tensor[1, 1, 1] = 0.0
    fused = localize_frame(tensor)
    assert fused.shape == (3, 3)
    assert np.unravel_index(np.argmax(fused.values), fused.shape) == (1, 1)
    only_quality = localize_frame(tensor, slice(4, 8))
    np.testing.assert_array_equal(only_quality.weights, np.zeros(4))
    with pytest.raises(ShapeError):
        localize_frame(np.zeros((3, 3)))


def test_clasificacion_estricta():
    mask, scores = classify_patches(np.array([[0.1, 0.5], [0.6, 0.0]]), 0.5)
    np.testing.assert_array_equal(mask, [[False, False], [True, False]])
    with pytest.raises(ValueError):
        classify_patches(scores, -0.1)


def test_normalizacion():
    np.testing.assert_allclose(normalize_map(np.array([1.0, 2.0, 3.0])), [0.0, 127.5, 255.0])
    np.testing.assert_array_equal(normalize_map(np.full((2, 2), 4.0)), np.zeros((2, 2)))


def test_mapa_de_calor_constante_es_uniforme():
    image = render_heatmap(np.full((2, 3), 0.7), (72, 80), 8)
    assert image.shape == (72, 80) and image.dtype == np.uint8
    assert np.all(image == 0)


def test_mapa_de_calor_promedia_los_solapes():
    image = render_heatmap(np.array([[0.0, 1.0]]), (70, 72), 8)
    assert np.all(image[:64, :8] == 0)
    assert np.all(image[:64, 64:] == 255)
    assert np.all(image[:64, 8:64] == 128)
    assert np.all(image[64:] == 0)


def test_mapa_de_calor_coincide_con_el_promedio_por_pixel(rng):
    values = rng.uniform(size=(3, 4))
    stride, rows, cols = 16, 100, 120
    image = render_heatmap(values, (rows, cols), stride)
    normalized = (values - values.min()) / (values.max() - values.min()) * 255.0
    expected = np.zeros((rows, cols))
    for r in range(rows):
        for c in range(cols):
            covering = [normalized[i, j] for i in range(3) for j in range(4)
                        if i * stride <= r < i * stride + 64 and j * stride <= c < j * stride + 64]
            if covering:
                expected[r, c] = sum(covering) / len(covering)
    assert np.abs(image.astype(np.float64) - expected).max() <= 0.5 + 1e-9
    assert np.all(image[96:] == 0) and np.all(image[:, 112:] == 0)


def test_mapa_de_calor_que_no_cabe():
    with pytest.raises(ShapeError):
        render_heatmap(np.zeros((2, 2)), (64, 64), 8)


def test_verdad_terreno_por_celda():
    mask = np.zeros((64, 128), dtype=bool)
    mask[:, 40:88] = True
    cells = window_mask_to_cells(mask, patch_grid((64, 128), 8))
    assert cells.tolist() == [[False, True, True, True, True, True, True, True, False]]


def test_pgm_legible(tmp_path, rng):
    image = rng.integers(0, 256, size=(10, 12)).astype(np.uint8)
    path = write_pgm(image, str(tmp_path / "out" / "heatmap.pgm"))
    assert open(path, "rb").read(2) == b"P5"
    with Image.open(path) as loaded:
        np.testing.assert_array_equal(np.asarray(loaded), image)


def test_csv_de_puntuaciones(tmp_path):
    scores = np.array([[0.1, 0.5], [0.6, 0.0]])
    table = pd.read_csv(write_scores_csv(scores, str(tmp_path / "scores.csv"), mask=scores > 0.3))
    assert list(table.columns) == ["row", "col", "score", "forged"]
    assert table["forged"].tolist() == [False, True, True, False]
