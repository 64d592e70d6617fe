"""
Red convolucional de arquitectura fija con pasadas forward/backward explícitas en numpy.

Cinco convoluciones (BN + ReLU), dos capas totalmente conectadas y softmax. La geometría
(w, s, z) de cada capa está fijada para que el último mapa de 7x7 quede alineado con las
esquinas de los bloques de 8x8 del parche de 64x64; solo la anchura de canales es ajustable.

Convención de tensores: NCHW. Las capas funcionales trabajan en el dtype de sus entradas
(float64 en las pruebas de gradiente, float32 en entrenamiento e inferencia).
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import GeometryError, ShapeError
from .models import PATCH_SIZE, LayerGeom, LayerSpec
from .weights import ModelWeights

logger = logging.getLogger(__name__)

BN_MOMENTUM = 0.9
BN_EPSILON = 1e-5
MIN_WIDTH = 16

# Ventana de Conv-4 que ve un parche de 64x64 y salto acumulado hasta Conv-4.
_TRUNK_WINDOW = 13
_TRUNK_JUMP = 4


def architecture(width: int = 64, num_classes: int = 4) -> List[LayerSpec]:
    """Cadena de capas de la red. `width` escala kernels y FC-1; la geometría no cambia."""
    if width < MIN_WIDTH:
        raise ShapeError(f"la anchura mínima es {MIN_WIDTH}, se pidió {width}")
    if num_classes < 2:
        raise ShapeError(f"se necesitan al menos 2 clases, se pidieron {num_classes}")
    return [
        LayerSpec(name="conv1", kind="conv", kernels=width, kernel_size=4, stride=1, padding=0, activation="bn_relu"),
        LayerSpec(name="conv2", kind="conv", kernels=width, kernel_size=3, stride=2, padding=0, activation="bn_relu"),
        LayerSpec(name="conv3", kind="conv", kernels=width, kernel_size=4, stride=1, padding=0, activation="bn_relu"),
        LayerSpec(name="conv4", kind="conv", kernels=width, kernel_size=3, stride=2, padding=0, activation="bn_relu"),
        LayerSpec(name="conv5", kind="conv", kernels=width, kernel_size=3, stride=2, padding=1, activation="bn_relu"),
        LayerSpec(name="fc1", kind="fc", kernels=width, activation="identity"),
        LayerSpec(name="fc2", kind="fc", kernels=num_classes, activation="softmax"),
    ]


# --- geometría del campo receptivo ---

def rf_chain(specs: List[LayerSpec], input_side: int) -> List[LayerGeom]:
    """
    Geometría del campo receptivo capa a capa.

    Recurrencias, partiendo de m0 = input_side, j0 = 1, r0 = 1, c0 = 0.5:
        m = floor((m_in + 2z - w) / s) + 1
        j = j_in * s
        r = r_in + (w - 1) * j_in
        c = c_in + ((w - 1) / 2 - z) * j_in
    """
    conv_specs = [spec for spec in specs if spec.kind == "conv"]
    if len(conv_specs) != len(specs):
        raise GeometryError("la cadena solo puede contener capas espaciales (conv)")
    if not conv_specs:
        return []
    largest = max(spec.kernel_size for spec in conv_specs)
    if input_side < largest:
        raise GeometryError(f"la entrada ({input_side}) es menor que el kernel más grande ({largest})")

    m, j, r, c = input_side, 1, 1, 0.5
    chain = []
    for spec in conv_specs:
        w, s, z = spec.kernel_size, spec.stride, spec.padding
        m_out = (m + 2 * z - w) // s + 1
        if m_out < 1:
            raise GeometryError(f"la capa {spec.name} produce un mapa de lado {m_out}")
        m, j, r, c = m_out, j * s, r + (w - 1) * j, c + ((w - 1) / 2 - z) * j
        chain.append(LayerGeom(m=m, j=j, r=r, c=c))
    return chain


def rf_table(specs: List[LayerSpec], input_side: int = PATCH_SIZE) -> List[Tuple[int, int, int, float]]:
    """Tabla (m, j, r, c) con la fila semilla de la entrada seguida de una fila por capa."""
    rows = [(input_side, 1, 1, 0.5)]
    rows.extend(geom.as_tuple() for geom in rf_chain(specs, input_side))
    return rows


# --- capas funcionales ---

def conv_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Correlación cruzada 2-D. x: (N, C, H, W); weight: (K, C, kh, kw); bias: (K,)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"se esperaban tensores 4-D, recibidos {x.shape} y {weight.shape}")
    n, c, h, w = x.shape
    k, wc, kh, kw = weight.shape
    if c != wc:
        raise ShapeError(f"la entrada tiene {c} canales y la capa espera {wc}")
    if bias.shape != (k,):
        raise ShapeError(f"bias de forma {bias.shape}, se esperaba ({k},)")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"la entrada {h}x{w} es demasiado pequeña para un kernel {kh}x{kw}")

    out = np.zeros((n, k, out_h, out_w), dtype=np.result_type(x, weight))
    for i in range(kh):
        for j in range(kw):
            window = xp[:, :, i:i + stride * (out_h - 1) + 1:stride, j:j + stride * (out_w - 1) + 1:stride]
            out += np.einsum("kc,nchw->nkhw", weight[:, :, i, j], window, optimize=True)
    out += bias[None, :, None, None]
    return out


def conv_backward(dout: np.ndarray, x: np.ndarray, weight: np.ndarray, stride: int = 1,
                  padding: int = 0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradientes (dx, dweight, dbias) de conv_forward respecto a su entrada y parámetros."""
    n, c, h, w = x.shape
    k, _, kh, kw = weight.shape
    out_h = (h + 2 * padding - kh) // stride + 1
    out_w = (w + 2 * padding - kw) // stride + 1
    if dout.shape != (n, k, out_h, out_w):
        raise ShapeError(f"gradiente de forma {dout.shape}, se esperaba {(n, k, out_h, out_w)}")

    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    dxp = np.zeros(xp.shape, dtype=np.result_type(dout, weight))
    dweight = np.zeros(weight.shape, dtype=np.result_type(dout, x))
    for i in range(kh):
        for j in range(kw):
            rows = slice(i, i + stride * (out_h - 1) + 1, stride)
            cols = slice(j, j + stride * (out_w - 1) + 1, stride)
            dweight[:, :, i, j] = np.einsum("nkhw,nchw->kc", dout, xp[:, :, rows, cols], optimize=True)
            dxp[:, :, rows, cols] += np.einsum("kc,nkhw->nchw", weight[:, :, i, j], dout, optimize=True)
    dbias = dout.sum(axis=(0, 2, 3))
    dx = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
    return dx, dweight, dbias


def batchnorm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, running_mean: np.ndarray,
                      running_var: np.ndarray, mode: str = "infer", momentum: float = BN_MOMENTUM,
                      eps: float = BN_EPSILON) -> Tuple[np.ndarray, Optional[tuple]]:
    """
    Normalización por canal sobre (N, H, W).

    En modo `train` usa la media y la varianza (sesgada) del lote y actualiza en su sitio
    las estadísticas acumuladas: running = momentum * running + (1 - momentum) * lote.
    En modo `infer` usa las estadísticas acumuladas y no guarda caché.
    """
    axes = (0, 2, 3) if x.ndim == 4 else (0,)
    shape = (1, -1, 1, 1) if x.ndim == 4 else (1, -1)
    if mode == "train":
        if x.shape[0] < 2:
            raise ShapeError("la normalización por lotes en entrenamiento necesita al menos 2 muestras")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mean.astype(running_mean.dtype)
        running_var *= momentum
        running_var += (1 - momentum) * var.astype(running_var.dtype)
        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        return gamma.reshape(shape) * x_hat + beta.reshape(shape), (x_hat, inv_std, gamma, axes, shape)
    if mode != "infer":
        raise ValueError(f"modo desconocido: {mode}")
    inv_std = 1.0 / np.sqrt(running_var + eps)
    scale = (gamma * inv_std).reshape(shape)
    return (x - running_mean.reshape(shape)) * scale + beta.reshape(shape), None


def batchnorm_backward(dout: np.ndarray, cache: tuple) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradientes (dx, dgamma, dbeta) de batchnorm_forward en modo `train`."""
    x_hat, inv_std, gamma, axes, shape = cache
    count = dout.size // dout.shape[1]
    dgamma = (dout * x_hat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dx_hat = dout * gamma.reshape(shape)
    dx = (inv_std.reshape(shape) / count) * (
        count * dx_hat
        - dx_hat.sum(axis=axes).reshape(shape)
        - x_hat * (dx_hat * x_hat).sum(axis=axes).reshape(shape)
    )
    return dx, dgamma, dbeta


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """x: (N, D_in); weight: (D_out, D_in)."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"entrada {x.shape} incompatible con pesos {weight.shape}")
    return x @ weight.T + bias


def linear_backward(dout: np.ndarray, x: np.ndarray, weight: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return dout @ weight, dout.T @ x, dout.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax estable por filas, calculada en float64."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels) -> Tuple[float, np.ndarray]:
    """
    Entropía cruzada categórica sobre softmax.

    Con un vector de K logits devuelve (-log p_label, p - onehot). Con un lote (N, K)
    devuelve la pérdida media y su gradiente (p - onehot) / N.
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    batch = logits[None, :] if single else logits
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, k = batch.shape
    if k < 2:
        raise ShapeError(f"se necesitan al menos 2 clases, recibidas {k}")
    if labels.shape != (n,):
        raise ShapeError(f"{labels.shape[0]} etiquetas para {n} muestras")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"etiqueta fuera de rango [0, {k})")

    probs = softmax(batch)
    picked = probs[np.arange(n), labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad[0] if single else grad


# --- red completa ---

def _he_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class FocalNet:
    """
    Clasificador de parches de 64x64 (luma) con K salidas.

    Los parámetros viven en `self.params` (float32, nombres estables) y se exportan a
    ModelWeights para el formato FOCW.
    """

    def __init__(self, num_classes: int = 4, width: int = 64, fc1_relu: bool = False, seed: int = 0,
                 params: Optional[Dict[str, np.ndarray]] = None):
        self.specs = architecture(width, num_classes)
        self.num_classes = num_classes
        self.width = width
        self.fc1_relu = fc1_relu
        self.conv_specs = [spec for spec in self.specs if spec.kind == "conv"]
        self._cache: List = []
        self.params = params if params is not None else self._init_params(seed)
        self.input_scale = np.float32(1.0 / 255.0)
        self.input_shift = np.float32(-0.5)

    def _init_params(self, seed: int) -> Dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        params: Dict[str, np.ndarray] = {}
        channels = 1
        for index, spec in enumerate(self.conv_specs, start=1):
            w = spec.kernel_size
            params[f"conv{index}.weight"] = _he_uniform(rng, (spec.kernels, channels, w, w), channels * w * w)
            params[f"conv{index}.bias"] = np.zeros(spec.kernels, dtype=np.float32)
            params[f"bn{index}.gamma"] = np.ones(spec.kernels, dtype=np.float32)
            params[f"bn{index}.beta"] = np.zeros(spec.kernels, dtype=np.float32)
            params[f"bn{index}.running_mean"] = np.zeros(spec.kernels, dtype=np.float32)
            params[f"bn{index}.running_var"] = np.ones(spec.kernels, dtype=np.float32)
            channels = spec.kernels
        side = rf_chain(self.conv_specs, PATCH_SIZE)[-1].m
        fan_in = channels * side * side
        fc1, fc2 = self.specs[-2], self.specs[-1]
        params["fc1.weight"] = _he_uniform(rng, (fc1.kernels, fan_in), fan_in)
        params["fc1.bias"] = np.zeros(fc1.kernels, dtype=np.float32)
        params["fc2.weight"] = _he_uniform(rng, (fc2.kernels, fc1.kernels), fc1.kernels)
        params["fc2.bias"] = np.zeros(fc2.kernels, dtype=np.float32)
        return params

    @property
    def trainable(self) -> List[str]:
        return [name for name in self.params if not name.endswith(("running_mean", "running_var"))]

    # --- conversión de pesos ---

    def to_weights(self) -> ModelWeights:
        blocks = {
            "input.norm": np.array([self.input_scale, self.input_shift], dtype=np.float32),
            "meta.fc1_relu": np.array([1.0 if self.fc1_relu else 0.0], dtype=np.float32),
        }
        blocks.update({name: value.astype(np.float32, copy=True) for name, value in self.params.items()})
        return ModelWeights(blocks=blocks, num_classes=self.num_classes)

    @classmethod
    def from_weights(cls, weights: ModelWeights) -> "FocalNet":
        blocks = dict(weights.blocks)
        width = int(blocks["conv1.weight"].shape[0])
        fc1_relu = bool(blocks.get("meta.fc1_relu", np.zeros(1))[0])
        norm = blocks.get("input.norm")
        params = {name: value.astype(np.float32, copy=True) for name, value in blocks.items()
                  if not name.startswith(("input.", "meta."))}
        net = cls(num_classes=weights.num_classes, width=width, fc1_relu=fc1_relu, params=params)
        expected = cls(num_classes=weights.num_classes, width=width, fc1_relu=fc1_relu)
        for name, value in expected.params.items():
            if name not in params:
                raise ShapeError(f"falta el bloque '{name}' en los pesos")
            if params[name].shape != value.shape:
                raise ShapeError(f"el bloque '{name}' tiene forma {params[name].shape}, se esperaba {value.shape}")
        if norm is not None:
            net.input_scale, net.input_shift = np.float32(norm[0]), np.float32(norm[1])
        return net

    # --- forward / backward ---

    def _normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None]
        return x * self.input_scale + self.input_shift

    def _conv_block(self, x: np.ndarray, index: int, mode: str, keep: bool) -> np.ndarray:
        spec = self.conv_specs[index - 1]
        p = self.params
        z = conv_forward(x, p[f"conv{index}.weight"], p[f"conv{index}.bias"], spec.stride, spec.padding)
        bn, bn_cache = batchnorm_forward(z, p[f"bn{index}.gamma"], p[f"bn{index}.beta"],
                                         p[f"bn{index}.running_mean"], p[f"bn{index}.running_var"], mode)
        if keep:
            self._cache.append((x, bn_cache, bn))
        return relu_forward(bn)

    def trunk(self, x: np.ndarray, mode: str = "infer", keep: bool = False, stop: int = 5,
              start: int = 1) -> np.ndarray:
        """Convoluciones `start`..`stop` con BN + ReLU. La entrada a Conv-1 ya va normalizada."""
        for index in range(start, stop + 1):
            x = self._conv_block(x, index, mode, keep)
        return x

    def head(self, features: np.ndarray, keep: bool = False) -> np.ndarray:
        """FC-1 y FC-2 sobre la salida aplanada de Conv-5. Devuelve logits."""
        p = self.params
        flat = features.reshape(features.shape[0], -1)
        hidden = linear_forward(flat, p["fc1.weight"], p["fc1.bias"])
        activated = relu_forward(hidden) if self.fc1_relu else hidden
        logits = linear_forward(activated, p["fc2.weight"], p["fc2.bias"])
        if keep:
            self._cache.append((features.shape, flat, hidden, activated))
        return logits

    def logits(self, patches: np.ndarray, mode: str = "infer") -> np.ndarray:
        """Logits de un lote de parches (N, 64, 64) en escala 0-255."""
        x = self._normalize(patches)
        if x.shape[-2:] != (PATCH_SIZE, PATCH_SIZE):
            raise ShapeError(f"los parches deben ser de {PATCH_SIZE}x{PATCH_SIZE}, recibido {x.shape[-2:]}")
        keep = mode == "train"
        self._cache = []
        return self.head(self.trunk(x, mode=mode, keep=keep), keep=keep)

    def backward(self, dlogits: np.ndarray) -> Dict[str, np.ndarray]:
        """Retropropaga el gradiente de los logits por la última pasada en modo `train`."""
        if not self._cache:
            raise RuntimeError("no hay caché de una pasada de entrenamiento previa")
        p = self.params
        grads: Dict[str, np.ndarray] = {}
        dlogits = np.asarray(dlogits, dtype=np.float32)
        features_shape, flat, hidden, activated = self._cache[-1]
        dact, grads["fc2.weight"], grads["fc2.bias"] = linear_backward(dlogits, activated, p["fc2.weight"])
        dhidden = relu_backward(dact, hidden) if self.fc1_relu else dact
        dflat, grads["fc1.weight"], grads["fc1.bias"] = linear_backward(dhidden, flat, p["fc1.weight"])
        dx = dflat.reshape(features_shape)
        for index in range(len(self.conv_specs), 0, -1):
            spec = self.conv_specs[index - 1]
            x_in, bn_cache, bn_out = self._cache[index - 1]
            dbn = relu_backward(dx, bn_out)
            dz, grads[f"bn{index}.gamma"], grads[f"bn{index}.beta"] = batchnorm_backward(dbn, bn_cache)
            dx, grads[f"conv{index}.weight"], grads[f"conv{index}.bias"] = conv_backward(
                dz, x_in, p[f"conv{index}.weight"], spec.stride, spec.padding)
        self._cache = []
        return {name: grads[name].astype(np.float32, copy=False) for name in self.trainable}

    def predict(self, patches: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Probabilidades (N, K) en modo inferencia."""
        patches = np.asarray(patches)
        if patches.ndim == 2:
            patches = patches[None]
        outputs = [softmax(self.logits(patches[start:start + batch_size], mode="infer"))
                   for start in range(0, len(patches), batch_size)]
        if not outputs:
            return np.zeros((0, self.num_classes))
        return np.concatenate(outputs, axis=0)

    def forward_full(self, patch: np.ndarray, mode: str = "infer") -> np.ndarray:
        """Vector de K probabilidades para un único parche de 64x64."""
        patch = np.asarray(patch)
        if patch.shape != (PATCH_SIZE, PATCH_SIZE):
            raise ShapeError(f"el parche debe ser de {PATCH_SIZE}x{PATCH_SIZE}, recibido {patch.shape}")
        return softmax(self.logits(patch[None], mode=mode))[0]

    def dense_features(self, frame: np.ndarray, stride: int, chunk_rows: int = 8) -> np.ndarray:
        """
        Probabilidades para toda la rejilla de parches de un fotograma, forma (P_U, P_V, K).

        Conv-1..Conv-4 no tienen relleno y su salto acumulado es 4, así que se evalúan una
        sola vez sobre el fotograma entero: el parche con esquina (o_u, o_v) corresponde a la
        ventana de 13x13 de Conv-4 que empieza en (o_u/4, o_v/4). Conv-5 y la cabeza se
        aplican después por ventana.
        """
        frame = np.asarray(frame)
        if frame.ndim != 2:
            raise ShapeError(f"se esperaba un fotograma 2-D, recibido {frame.shape}")
        if stride % 8:
            raise ShapeError(f"el paso {stride} no es múltiplo de 8")
        rows, cols = frame.shape
        if rows < PATCH_SIZE or cols < PATCH_SIZE:
            raise ShapeError(f"el fotograma {rows}x{cols} es menor que un parche")
        p_u = (rows - PATCH_SIZE) // stride + 1
        p_v = (cols - PATCH_SIZE) // stride + 1
        step = stride // _TRUNK_JUMP

        conv4 = self.trunk(self._normalize(frame), mode="infer", stop=4)[0]
        windows = sliding_window_view(conv4, (_TRUNK_WINDOW, _TRUNK_WINDOW), axis=(1, 2))
        windows = windows[:, ::step, ::step][:, :p_u, :p_v]

        out = np.empty((p_u, p_v, self.num_classes), dtype=np.float64)
        for start in range(0, p_u, chunk_rows):
            block = windows[:, start:start + chunk_rows]
            n_rows = block.shape[1]
            batch = np.ascontiguousarray(block.transpose(1, 2, 0, 3, 4)).reshape(
                n_rows * p_v, conv4.shape[0], _TRUNK_WINDOW, _TRUNK_WINDOW)
            logits = self.head(self.trunk(batch, mode="infer", start=5, stop=5))
            out[start:start + n_rows] = softmax(logits).reshape(n_rows, p_v, self.num_classes)
        return out
