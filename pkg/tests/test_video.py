import numpy as np
import pytest

from src.exceptions import ShapeError, Y4MError
from src.video import VideoSequence, load_y4m, write_y4m


def raw_y4m(path, header, frames, chroma_bytes):
    with open(path, "wb") as handle:
        handle.write(header)
        for frame in frames:
            handle.write(b"FRAME\n")
            handle.write(frame.tobytes())
            handle.write(bytes([128]) * chroma_bytes)
    return str(path)


@pytest.mark.parametrize("colorspace", ["420jpeg", "420mpeg2", "422", "444", "mono"])
def test_ida_y_vuelta_sin_perdidas(tmp_path, rng, colorspace):
    frames = rng.integers(0, 256, size=(3, 18, 22)).astype(np.uint8)
    path = write_y4m(VideoSequence(frames, frame_rate=25.0), str(tmp_path / "clip.y4m"), colorspace)
    video = load_y4m(path)
    np.testing.assert_array_equal(video.frames, frames)
    assert video.frame_rate == 25.0
    assert (video.N, video.U, video.V) == (3, 18, 22)


def test_escritura_silenciosa_en_consola(tmp_path, rng, capsys, caplog):
    frames = rng.integers(0, 256, size=(2, 8, 8)).astype(np.uint8)
    with caplog.at_level("DEBUG", logger="src.video"):
        write_y4m(VideoSequence(frames), str(tmp_path / "clip.y4m"))
    assert capsys.readouterr().out == ""
    assert any("Vídeo guardado" in record.getMessage() for record in caplog.records)


def test_dimensiones_impares_en_420(tmp_path, rng):
    frames = rng.integers(0, 256, size=(2, 5, 7)).astype(np.uint8)
    path = raw_y4m(tmp_path / "odd.y4m", b"YUV4MPEG2 W7 H5 F30000:1001 C420jpeg\n", frames, 2 * 4 * 3)
    video = load_y4m(path)
    np.testing.assert_array_equal(video.frames, frames)
    assert video.frame_rate == pytest.approx(29.97, abs=1e-2)


def test_parametros_de_frame_y_espacio_por_defecto(tmp_path, rng):
    frames = rng.integers(0, 256, size=(1, 4, 4)).astype(np.uint8)
    path = tmp_path / "params.y4m"
    with open(path, "wb") as handle:
        handle.write(b"YUV4MPEG2 W4 H4 F25:1 Ip\n")
        handle.write(b"FRAME Ixyz\n" + frames[0].tobytes() + bytes(8))
    np.testing.assert_array_equal(load_y4m(str(path)).frames, frames)


def test_firma_invalida(tmp_path):
    path = tmp_path / "bad.y4m"
    path.write_bytes(b"YUV4MPEG W4 H4\nFRAME\n" + bytes(24))
    with pytest.raises(Y4MError) as excinfo:
        load_y4m(str(path))
    assert excinfo.value.offset == 0
    assert excinfo.value.diagnostic().startswith(f"{path}:0:")


def test_falta_anchura(tmp_path):
    path = tmp_path / "bad.y4m"
    path.write_bytes(b"YUV4MPEG2 H4\nFRAME\n" + bytes(24))
    with pytest.raises(Y4MError):
        load_y4m(str(path))


def test_espacio_de_color_no_soportado(tmp_path):
    path = tmp_path / "bad.y4m"
    path.write_bytes(b"YUV4MPEG2 W4 H4 C420p10\nFRAME\n" + bytes(48))
    with pytest.raises(Y4MError):
        load_y4m(str(path))


def test_fotograma_truncado(tmp_path, rng):
    frames = rng.integers(0, 256, size=(2, 4, 4)).astype(np.uint8)
    path = raw_y4m(tmp_path / "cut.y4m", b"YUV4MPEG2 W4 H4 C420jpeg\n", frames, 8)
    payload = open(path, "rb").read()
    with open(path, "wb") as handle:
        handle.write(payload[:-5])
    with pytest.raises(Y4MError) as excinfo:
        load_y4m(path)
    assert excinfo.value.frame_index == 1
    assert excinfo.value.offset == len(b"YUV4MPEG2 W4 H4 C420jpeg\n") + 2 * 6 + 24


def test_marcador_frame_ausente(tmp_path):
    path = tmp_path / "noframe.y4m"
    path.write_bytes(b"YUV4MPEG2 W4 H4 Cmono\nFRAMX\n" + bytes(16))
    with pytest.raises(Y4MError) as excinfo:
        load_y4m(str(path))
    assert excinfo.value.frame_index == 0


def test_sin_fotogramas(tmp_path):
    path = tmp_path / "empty.y4m"
    path.write_bytes(b"YUV4MPEG2 W4 H4\n")
    with pytest.raises(Y4MError):
        load_y4m(str(path))


def test_fichero_inexistente(tmp_path):
    with pytest.raises(OSError):
        load_y4m(str(tmp_path / "missing.y4m"))


def test_secuencia_valida_su_forma():
    assert VideoSequence(np.zeros((4, 4))).N == 1
    with pytest.raises(ShapeError):
        VideoSequence(np.zeros(4))


def test_relleno_hasta_bloque():
    video = VideoSequence(np.arange(30, dtype=np.uint8).reshape(1, 5, 6))
    padded = video.pad_to_block()
    assert (padded.U, padded.V) == (8, 8)
    np.testing.assert_array_equal(padded.frames[0, :5, :6], video.frames[0])
    np.testing.assert_array_equal(padded.frames[0, 7, :6], video.frames[0, 4])
