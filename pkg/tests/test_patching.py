import numpy as np
import pytest

from src.exceptions import ShapeError
from src.patching import extract_patches, patch_array, patch_grid, retention_rate, variance_filter, variance_mask


@pytest.mark.parametrize("stride, p_u, p_v", [(64, 9, 11), (8, 65, 81), (32, 17, 21)])
def test_rejilla_de_un_fotograma_cif(stride, p_u, p_v):
    grid = patch_grid((576, 704), stride)
    assert (grid.P_U, grid.P_V) == (p_u, p_v)


def test_noventa_y_nueve_parches_sin_solape():
    frame = np.zeros((576, 704), dtype=np.uint8)
    assert len(extract_patches(frame, 64)) == 99


def test_los_bordes_sobrantes_se_descartan():
    grid = patch_grid((100, 130), 64)
    assert (grid.P_U, grid.P_V) == (1, 2)


def test_posicion_de_cada_parche(rng):
    frame = rng.integers(0, 256, size=(128, 144)).astype(np.uint8)
    patches, grid = patch_array(frame, 16)
    assert patches.shape == (grid.P, 64, 64)
    for index, (i, j) in enumerate(grid.coordinates()):
        top, left = grid.top_left(i, j)
        np.testing.assert_array_equal(patches[index], frame[top:top + 64, left:left + 64])


def test_orden_por_filas():
    coords = [coords for _, coords in extract_patches(np.zeros((128, 192)), 64)]
    assert coords == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]


@pytest.mark.parametrize("stride", [0, 4, 12])
def test_paso_invalido(stride):
    with pytest.raises(ShapeError):
        patch_grid((128, 128), stride)


def test_fotograma_menor_que_un_parche():
    with pytest.raises(ShapeError):
        patch_grid((63, 128), 8)


def test_filtro_de_varianza_estricto():
    # Damero de amplitud k: la mitad de los píxeles a 100 y la otra a 100 + 2k, varianza k².
    checker = np.indices((64, 64)).sum(axis=0) % 2 * 2.0
    patches = np.stack([100 + checker * k for k in (0.0, 10.0, 20.0, 40.0)])
    threshold = float(patches[2].var())
    assert threshold == pytest.approx(400.0)
    mask = variance_mask(patches, threshold)
    np.testing.assert_array_equal(mask, [False, False, False, True])
    assert len(variance_filter(patches, threshold)) == 1
    assert retention_rate(patches, threshold) == 0.25


def test_filtro_de_varianza_vacio_y_umbral_negativo():
    assert variance_mask(np.zeros((0, 64, 64))).shape == (0,)
    assert retention_rate(np.zeros((0, 64, 64))) == 0.0
    with pytest.raises(ValueError):
        variance_mask(np.zeros((1, 64, 64)), -1.0)
