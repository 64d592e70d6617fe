import numpy as np
import pytest

from src.exceptions import GeometryError, ShapeError
from src.models import LayerSpec, TrainConfig
from src.network import (FocalNet, architecture, batchnorm_backward, batchnorm_forward, conv_backward, conv_forward,
                         linear_backward, linear_forward, rf_chain, rf_table, softmax, softmax_xent)
from src.patching import patch_array
from src.training import fit

EXPECTED_RF = [(64, 1, 1, 0.5), (61, 1, 4, 2.0), (30, 2, 6, 3.0), (27, 2, 12, 6.0), (13, 4, 16, 8.0), (7, 8, 24, 8.0)]


def conv_specs(width=64):
    return [spec for spec in architecture(width) if spec.kind == "conv"]


def naive_conv(x, weight, bias, stride, padding):
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, _, h, w = xp.shape
    k, _, kh, kw = weight.shape
    out_h, out_w = (h - kh) // stride + 1, (w - kw) // stride + 1
    out = np.zeros((n, k, out_h, out_w))
    for a in range(n):
        for b in range(k):
            for i in range(out_h):
                for j in range(out_w):
                    window = xp[a, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[a, b, i, j] = np.sum(window * weight[b]) + bias[b]
    return out


def numeric_grad(f, x, eps=1e-6):
    grad = np.zeros_like(x)
    flat, out = x.reshape(-1), grad.reshape(-1)
    for index in range(flat.size):
        saved = flat[index]
        flat[index] = saved + eps
        up = f()
        flat[index] = saved - eps
        down = f()
        flat[index] = saved
        out[index] = (up - down) / (2 * eps)
    return grad


def relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


# --- geometría ---

@pytest.mark.parametrize("width", [16, 64, 128])
def test_rf_table_de_la_arquitectura(width):
    assert rf_table(conv_specs(width), 64) == EXPECTED_RF


def test_rf_chain_rechaza_entradas_pequenas_y_capas_fc():
    with pytest.raises(GeometryError):
        rf_chain(conv_specs(), 3)
    with pytest.raises(GeometryError):
        rf_chain(conv_specs(), 8)
    with pytest.raises(GeometryError):
        rf_chain(architecture(16), 64)


def test_rf_chain_vacia():
    assert rf_chain([], 64) == []


def test_rf_chain_con_relleno():
    spec = LayerSpec(name="c", kind="conv", kernels=1, kernel_size=3, stride=1, padding=1, activation="bn_relu")
    assert rf_chain([spec], 10)[0].as_tuple() == (10, 1, 3, 0.5)


def test_architecture_rechaza_anchura_o_clases_invalidas():
    with pytest.raises(ShapeError):
        architecture(8)
    with pytest.raises(ShapeError):
        architecture(64, num_classes=1)


# --- capas funcionales ---

@pytest.mark.parametrize("seed", range(20))
def test_conv_forward_coincide_con_bucle_directo(seed):
    rng = np.random.default_rng(seed)
    stride, padding = 1 + seed % 2, seed % 3 // 2
    x = rng.normal(size=(2, 3, 9, 8))
    weight = rng.normal(size=(4, 3, 3, 2))
    bias = rng.normal(size=4)
    np.testing.assert_allclose(conv_forward(x, weight, bias, stride, padding),
                               naive_conv(x, weight, bias, stride, padding), atol=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_conv_backward_diferencias_finitas(seed):
    rng = np.random.default_rng(100 + seed)
    stride, padding = 1 + seed % 2, seed % 2
    x = rng.normal(size=(2, 2, 6, 7))
    weight = rng.normal(size=(3, 2, 3, 3))
    bias = rng.normal(size=3)
    upstream = rng.normal(size=conv_forward(x, weight, bias, stride, padding).shape)

    def loss():
        return float(np.sum(conv_forward(x, weight, bias, stride, padding) * upstream))

    dx, dweight, dbias = conv_backward(upstream, x, weight, stride, padding)
    assert relative_error(dx, numeric_grad(loss, x)) < 1e-6
    assert relative_error(dweight, numeric_grad(loss, weight)) < 1e-6
    assert relative_error(dbias, numeric_grad(loss, bias)) < 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_batchnorm_backward_diferencias_finitas(seed):
    rng = np.random.default_rng(200 + seed)
    x = rng.normal(size=(4, 3, 2, 2)) * 3 + 1
    gamma = rng.normal(size=3)
    beta = rng.normal(size=3)
    upstream = rng.normal(size=x.shape)

    def forward():
        return batchnorm_forward(x, gamma, beta, np.zeros(3), np.ones(3), mode="train")

    def loss():
        return float(np.sum(forward()[0] * upstream))

    dx, dgamma, dbeta = batchnorm_backward(upstream, forward()[1])
    assert relative_error(dx, numeric_grad(loss, x)) < 1e-5
    assert relative_error(dgamma, numeric_grad(loss, gamma)) < 1e-5
    assert relative_error(dbeta, numeric_grad(loss, beta)) < 1e-5


def test_batchnorm_actualiza_estadisticas_y_exige_dos_muestras(rng):
    x = rng.normal(size=(8, 2, 3, 3))
    mean, var = np.zeros(2), np.ones(2)
    batchnorm_forward(x, np.ones(2), np.zeros(2), mean, var, mode="train")
    np.testing.assert_allclose(mean, 0.1 * x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(var, 0.9 + 0.1 * x.var(axis=(0, 2, 3)))
    with pytest.raises(ShapeError):
        batchnorm_forward(x[:1], np.ones(2), np.zeros(2), mean, var, mode="train")


def test_batchnorm_en_inferencia_usa_las_estadisticas_acumuladas():
    x = np.array([1.0, 3.0, -2.0, 0.5]).reshape(2, 2, 1, 1)
    gamma, beta = np.array([2.0, 0.5]), np.array([0.1, -1.0])
    mean, var = np.array([1.0, -1.0]), np.array([4.0, 0.25])
    out, cache = batchnorm_forward(x, gamma, beta, mean.copy(), var.copy(), mode="infer")
    expected = (x - mean.reshape(1, 2, 1, 1)) / np.sqrt(var.reshape(1, 2, 1, 1) + 1e-5) \
        * gamma.reshape(1, 2, 1, 1) + beta.reshape(1, 2, 1, 1)
    np.testing.assert_allclose(out, expected, rtol=1e-12)
    assert out[0, 0, 0, 0] == pytest.approx(0.1, abs=1e-12)
    assert cache is None


def test_batchnorm_en_entrenamiento_normaliza_cada_canal(rng):
    x = rng.normal(loc=[[[[5.0]], [[-3.0]], [[0.0]]]], scale=[[[[4.0]], [[0.5]], [[10.0]]]], size=(16, 3, 5, 5))
    out, _ = batchnorm_forward(x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), mode="train")
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-9)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-3)


def test_conv_backward_con_gradiente_nulo(rng):
    x = rng.normal(size=(2, 3, 7, 7))
    weight = rng.normal(size=(4, 3, 3, 3))
    dout = np.zeros_like(conv_forward(x, weight, np.zeros(4), 2, 1))
    for gradient in conv_backward(dout, x, weight, 2, 1):
        assert not np.any(gradient)


def test_conv_backward_con_kernel_1x1(rng):
    x = rng.normal(size=(2, 1, 5, 6))
    weight = np.array([[[[1.5]]], [[[-0.5]]]])
    dout = rng.normal(size=(2, 2, 5, 6))
    dx, _, _ = conv_backward(dout, x, weight)
    np.testing.assert_allclose(dx[:, 0], 1.5 * dout[:, 0] - 0.5 * dout[:, 1], atol=1e-12)
    single = weight[:1]
    dx_single, _, _ = conv_backward(dout[:, :1], x, single)
    np.testing.assert_allclose(dx_single, dout[:, :1] * 1.5, atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_softmax_xent_diferencias_finitas(seed):
    rng = np.random.default_rng(300 + seed)
    logits = rng.normal(size=(5, 4)) * 3
    labels = rng.integers(0, 4, size=5)
    _, grad = softmax_xent(logits, labels)
    assert relative_error(grad, numeric_grad(lambda: softmax_xent(logits, labels)[0], logits)) < 1e-6


def test_softmax_xent_vector_unico():
    loss, grad = softmax_xent(np.zeros(4), 2)
    assert loss == pytest.approx(np.log(4))
    np.testing.assert_allclose(grad, [0.25, 0.25, -0.75, 0.25])
    with pytest.raises(ValueError):
        softmax_xent(np.zeros(4), 4)


def test_softmax_estable_con_logits_grandes():
    probs = softmax(np.array([[1000.0, 1000.0, -1000.0]]))
    np.testing.assert_allclose(probs, [[0.5, 0.5, 0.0]])


def test_linear_backward_diferencias_finitas(rng):
    x = rng.normal(size=(3, 5))
    weight = rng.normal(size=(2, 5))
    bias = rng.normal(size=2)
    upstream = rng.normal(size=(3, 2))

    def loss():
        return float(np.sum(linear_forward(x, weight, bias) * upstream))

    dx, dweight, dbias = linear_backward(upstream, x, weight)
    assert relative_error(dx, numeric_grad(loss, x)) < 1e-6
    assert relative_error(dweight, numeric_grad(loss, weight)) < 1e-6
    assert relative_error(dbias, numeric_grad(loss, bias)) < 1e-6


# --- red completa ---

def test_forward_full_suma_uno_y_mapa_conv5(rng):
    net = FocalNet(width=16, seed=0)
    patch = rng.integers(0, 256, size=(64, 64))
    probs = net.forward_full(patch)
    assert probs.shape == (4,)
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(probs >= 0)
    features = net.trunk(patch[None, None].astype(np.float32) / 255 - 0.5)
    assert features.shape == (1, 16, 7, 7)


def test_forward_full_es_determinista(rng):
    net = FocalNet(width=16, seed=7)
    patch = rng.integers(0, 256, size=(64, 64)).astype(np.uint8)
    first = net.forward_full(patch)
    for _ in range(3):
        np.testing.assert_array_equal(net.forward_full(patch), first)


def test_forward_full_rechaza_parches_de_otro_tamano():
    with pytest.raises(ShapeError):
        FocalNet(width=16).forward_full(np.zeros((32, 64)))


def test_backward_coincide_con_derivada_direccional(rng):
    net = FocalNet(width=16, seed=5)
    net.params = {name: value.astype(np.float64) for name, value in net.params.items()}
    patches = rng.integers(0, 256, size=(4, 64, 64))
    labels = np.array([0, 1, 2, 3])

    def loss():
        return softmax_xent(net.logits(patches, mode="train"), labels)[0]

    logits = net.logits(patches, mode="train")
    grads = net.backward(softmax_xent(logits, labels)[1])
    assert set(grads) == set(net.trainable)
    for name in ("conv1.weight", "bn3.gamma", "bn5.beta", "fc1.weight", "fc2.bias"):
        direction = grads[name].astype(np.float64)
        direction /= np.linalg.norm(direction)
        original = net.params[name].copy()
        eps = 1e-6
        net.params[name] = original + eps * direction
        up = loss()
        net.params[name] = original - eps * direction
        down = loss()
        net.params[name] = original
        numeric = (up - down) / (2 * eps)
        analytic = float(np.sum(grads[name] * direction))
        assert numeric == pytest.approx(analytic, rel=1e-2)


def test_backward_sin_pasada_previa():
    with pytest.raises(RuntimeError):
        FocalNet(width=16).backward(np.zeros((2, 4)))


@pytest.mark.parametrize("dtype, tolerance", [(np.float64, 1e-9), (np.float32, 1e-4)])
def test_dense_features_coincide_con_parches_sueltos(rng, dtype, tolerance):
    net = FocalNet(width=16, seed=3)
    net.params = {name: value.astype(dtype) for name, value in net.params.items()}
    frame = rng.integers(0, 256, size=(96, 128)).astype(np.uint8)
    dense = net.dense_features(frame, 8)
    patches, grid = patch_array(frame, 8)
    assert dense.shape == (grid.P_U, grid.P_V, 4) == (5, 9, 4)
    per_patch = net.predict(patches).reshape(grid.P_U, grid.P_V, 4)
    np.testing.assert_allclose(dense, per_patch, atol=tolerance)


def test_dense_features_con_paso_64(rng):
    net = FocalNet(width=16, seed=3)
    frame = rng.integers(0, 256, size=(128, 192)).astype(np.uint8)
    assert net.dense_features(frame, 64).shape == (2, 3, 4)
    with pytest.raises(ShapeError):
        net.dense_features(frame, 12)


def test_pesos_ida_y_vuelta_dan_las_mismas_salidas(rng):
    net = FocalNet(num_classes=3, width=16, fc1_relu=True, seed=4)
    clone = FocalNet.from_weights(net.to_weights())
    patches = rng.integers(0, 256, size=(3, 64, 64))
    assert clone.num_classes == 3 and clone.fc1_relu
    np.testing.assert_array_equal(net.predict(patches), clone.predict(patches))


@pytest.mark.slow
def test_memoriza_un_lote_pequeno(rng):
    patches = rng.integers(0, 256, size=(32, 64, 64)).astype(np.uint8)
    labels = rng.integers(0, 4, size=32)
    net = FocalNet(width=16, seed=0)
    config = TrainConfig.adam_recipe(learning_rate=5e-3, epochs=200, batch_size=32, width=16)
    log = fit(net, patches, labels, config)
    assert log["train_loss"].min() < 0.05
    assert (net.predict(patches).argmax(axis=1) == labels).mean() == 1.0
