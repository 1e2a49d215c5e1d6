"""Layers, the cnn1/cnn2/cnn3 architectures, forward/backward and checkpoints."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels, tensor
from .rng import mix_seed, uniform01
from .errors import CheckpointFormatError, CheckpointValidationError, ShapeError

LAYER_KINDS = ("conv2d", "maxpool2x2", "flatten", "dense", "relu", "sigmoid")
INPUT_SHAPE = (3, 64, 64)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out: int = 0  # conv2d out_channels / dense out_features

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv2d", "dense") and self.out < 1:
            raise ValueError(f"{self.kind} needs a positive output size")


def conv(k):
    return LayerSpec("conv2d", k)


def dense(k):
    return LayerSpec("dense", k)


RELU, POOL, FLATTEN, SIGMOID = (LayerSpec("relu"), LayerSpec("maxpool2x2"),
                                LayerSpec("flatten"), LayerSpec("sigmoid"))


def _conv_stack(widths, head_width):
    layers = []
    for k in widths:
        layers += [conv(k), RELU, POOL]
    layers.append(FLATTEN)
    if head_width:
        layers += [dense(head_width), RELU]
    layers += [dense(1), SIGMOID]
    return tuple(layers)


ARCHITECTURES = {
    "cnn1": _conv_stack([32], None),
    "cnn2": _conv_stack([32, 64], 128),
    "cnn3": _conv_stack([32, 64, 128], 128),
}
ARCH_CODES = {"cnn1": 1, "cnn2": 2, "cnn3": 3}


@dataclass(frozen=True)
class ModelSpec:
    arch_id: str
    input_shape: tuple
    layers: tuple

    def __post_init__(self):
        if not self.layers or self.layers[-1].kind != "sigmoid":
            raise ValueError("model must end in a sigmoid layer")
        # validates shape consistency
        shapes = self.layer_shapes()
        if shapes[-1] != (1,):
            raise ValueError(f"final layer must produce a single score, got shape {shapes[-1]}")

    def layer_shapes(self):
        """Per-sample output shape of every layer, in order."""
        shape = tuple(self.input_shape)
        out = []
        for i, layer in enumerate(self.layers):
            kind = layer.kind
            if kind == "conv2d":
                if len(shape) != 3:
                    raise ShapeError(f"layer {i}: conv2d needs (c, h, w) input, got {shape}")
                shape = (layer.out,) + shape[1:]
            elif kind == "maxpool2x2":
                if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
                    raise ShapeError(f"layer {i}: maxpool2x2 needs even spatial extent, got {shape}")
                shape = (shape[0], shape[1] // 2, shape[2] // 2)
            elif kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif kind == "dense":
                if len(shape) != 1:
                    raise ShapeError(f"layer {i}: dense needs flat input, got {shape}")
                shape = (layer.out,)
            out.append(shape)
        return out

    def param_shapes(self):
        """``{layer_index: (weight_shape, bias_shape)}`` for parametrised layers."""
        shapes = {}
        prev = tuple(self.input_shape)
        for i, (layer, shape) in enumerate(zip(self.layers, self.layer_shapes())):
            if layer.kind == "conv2d":
                shapes[i] = ((layer.out, prev[0], 3, 3), (layer.out,))
            elif layer.kind == "dense":
                shapes[i] = ((prev[0], layer.out), (layer.out,))
            prev = shape
        return shapes

    def conv_indices(self):
        return [i for i, l in enumerate(self.layers) if l.kind == "conv2d"]


def model_spec(arch_id, input_shape=INPUT_SHAPE) -> ModelSpec:
    if arch_id not in ARCHITECTURES:
        raise ValueError(f"unknown arch_id {arch_id!r}; expected one of {sorted(ARCHITECTURES)}")
    return ModelSpec(arch_id, tuple(input_shape), ARCHITECTURES[arch_id])


@dataclass
class Model:
    spec: ModelSpec
    params: dict  # layer index -> {"w": array, "b": array}
    rng_seed: int

    @property
    def dtype(self):
        return next(iter(self.params.values()))["w"].dtype

    def astype(self, dtype) -> "Model":
        """Copy with parameters cast to ``dtype`` (float64 for gradient checks)."""
        return Model(self.spec, {i: {k: v.astype(dtype) for k, v in p.items()}
                                 for i, p in self.params.items()}, self.rng_seed)

    def copy(self) -> "Model":
        return self.astype(self.dtype)

    def n_params(self) -> int:
        return sum(v.size for p in self.params.values() for v in p.values())


# ---------------------------------------------------------------------- init

def init_params(spec: ModelSpec, seed: int, dtype=tensor.DTYPE):
    params = {}
    for i, (wshape, bshape) in spec.param_shapes().items():
        fan_in = int(np.prod(wshape[1:])) if spec.layers[i].kind == "conv2d" else wshape[0]
        limit = np.sqrt(6.0 / fan_in)
        u = uniform01(mix_seed(seed, i), int(np.prod(wshape)))
        params[i] = {"w": ((2.0 * u - 1.0) * limit).astype(dtype).reshape(wshape),
                     "b": np.zeros(bshape, dtype=dtype)}
    return params


def build_model(arch_id, seed: int, input_shape=INPUT_SHAPE) -> Model:
    spec = model_spec(arch_id, input_shape)
    return Model(spec, init_params(spec, seed), int(seed))


def build_custom(layers, input_shape, seed=0, dtype=tensor.DTYPE) -> Model:
    """Model from an explicit layer list (toy variants, constructed oracles)."""
    spec = ModelSpec("custom", tuple(input_shape), tuple(layers))
    return Model(spec, init_params(spec, seed, dtype), int(seed))


# -------------------------------------------------------------------- layers

def conv2d_forward(x, w, b, cols=None):
    """3x3 stride-1 convolution with zero 'same' padding.

    Returns ``(out, cols)``; ``cols`` is the im2col matrix reused by backward.
    """
    n, c, h, wd = x.shape
    if w.shape[1] != c or w.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d: input {x.shape} does not match kernels {w.shape}")
    if cols is None:
        cols = kernels.im2col(np.ascontiguousarray(x))
    k = w.shape[0]
    out = np.dot(w.reshape(k, -1), cols)  # (k, n*h*w)
    out += b.reshape(k, 1)
    return np.ascontiguousarray(out.reshape(k, n, h, wd).transpose(1, 0, 2, 3)), cols


def conv2d_backward(x, w, grad_out, cols=None, need_input=True):
    """Returns ``(grad_input, grad_kernels, grad_bias)``; grad_input is None if not needed."""
    n, c, h, wd = x.shape
    k = w.shape[0]
    if grad_out.shape != (n, k, h, wd):
        raise ShapeError(f"conv2d_backward: grad_out {grad_out.shape} != expected {(n, k, h, wd)}")
    if cols is None:
        cols = kernels.im2col(np.ascontiguousarray(x))
    g = np.ascontiguousarray(grad_out.transpose(1, 0, 2, 3)).reshape(k, -1)
    gw = np.dot(g, cols.T).reshape(w.shape)
    gb = g.sum(axis=1)
    if not need_input:
        return None, gw, gb
    gcols = np.dot(w.reshape(k, -1).T, g)
    return kernels.col2im(gcols, n, c, h, wd), gw, gb


def maxpool2x2_forward(x):
    """Returns ``(out, argmax)``; argmax holds flat in-plane indices (lowest wins ties)."""
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial extent, got {x.shape}")
    return kernels.maxpool(np.ascontiguousarray(x))


def maxpool2x2_backward(argmax, grad_out, input_hw=None):
    if argmax.shape != grad_out.shape:
        raise ShapeError(f"maxpool2x2_backward: argmax {argmax.shape} vs grad {grad_out.shape}")
    h, w = input_hw if input_hw is not None else (2 * grad_out.shape[2], 2 * grad_out.shape[3])
    return kernels.maxpool_backward(argmax, np.ascontiguousarray(grad_out), h, w)


def dense_forward(x, w, b):
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense: input {x.shape} does not match weights {w.shape}")
    return tensor.matmul(x, w) + b


def dense_backward(x, w, grad_out):
    """Returns ``(grad_input, grad_weights, grad_bias)``."""
    if grad_out.shape != (x.shape[0], w.shape[1]):
        raise ShapeError(f"dense_backward: grad_out {grad_out.shape} vs expected {(x.shape[0], w.shape[1])}")
    gx = tensor.matmul(grad_out, w.T)
    gw = tensor.matmul(x.T, grad_out)
    return gx, gw, grad_out.sum(axis=0)


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    # derivative at exactly 0 is 0
    if x.shape != grad_out.shape:
        raise ShapeError(f"relu_backward: {x.shape} vs {grad_out.shape}")
    return grad_out * (x > 0)


def sigmoid_forward(z):
    return tensor.sigmoid(z)


def sigmoid_backward(s, grad_out):
    if s.shape != grad_out.shape:
        raise ShapeError(f"sigmoid_backward: {s.shape} vs {grad_out.shape}")
    return grad_out * s * (1 - s)


# ---------------------------------------------------------- forward/backward

@dataclass
class Cache:
    inputs: list = field(default_factory=list)  # input to each layer
    aux: list = field(default_factory=list)     # im2col / argmax per layer
    logits: np.ndarray = None
    scores: np.ndarray = None


def forward(model: Model, batch):
    """Scores in (0, 1) for every batch item plus the activation cache."""
    spec = model.spec
    batch = np.asarray(batch)
    if batch.ndim != 4 or batch.shape[1:] != tuple(spec.input_shape):
        raise ShapeError(f"forward expects (n, {', '.join(map(str, spec.input_shape))}), got {batch.shape}")
    x = np.ascontiguousarray(batch, dtype=model.dtype)
    cache = Cache()
    for i, layer in enumerate(spec.layers):
        cache.inputs.append(x)
        aux = None
        kind = layer.kind
        if kind == "conv2d":
            p = model.params[i]
            x, aux = conv2d_forward(x, p["w"], p["b"])
        elif kind == "relu":
            x = relu_forward(x)
        elif kind == "maxpool2x2":
            x, aux = maxpool2x2_forward(x)
        elif kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif kind == "dense":
            p = model.params[i]
            x = dense_forward(x, p["w"], p["b"])
        elif kind == "sigmoid":
            cache.logits = x[:, 0]
            # float64 keeps scores off the 0/1 boundary for |logit| < ~36
            x = sigmoid_forward(x.astype(np.float64))
        cache.aux.append(aux)
    cache.scores = x[:, 0]
    return cache.scores, cache


def backprop(model: Model, cache: Cache, grad_logits, stop_after=None, input_grad=True):
    """Push d(objective)/d(logit) down through the network.

    Returns ``(param_grads, grad)`` where ``grad`` is the gradient w.r.t. the
    output of layer ``stop_after`` (or w.r.t. the input batch when None).
    The sigmoid layer is skipped: the caller supplies logit gradients.
    ``input_grad=False`` skips the (unused during training) batch gradient.
    """
    spec = model.spec
    g = np.asarray(grad_logits, dtype=model.dtype).reshape(-1, 1)
    grads = {}
    last = len(spec.layers) - 2  # layer feeding the sigmoid
    lowest = -1 if stop_after is None else stop_after
    for i in range(last, lowest, -1):
        layer = spec.layers[i]
        x = cache.inputs[i]
        kind = layer.kind
        if kind == "dense":
            p = model.params[i]
            g, gw, gb = dense_backward(x, p["w"], g)
            grads[i] = {"w": gw, "b": gb}
        elif kind == "flatten":
            g = g.reshape(x.shape)
        elif kind == "relu":
            g = relu_backward(x, g)
        elif kind == "maxpool2x2":
            g = maxpool2x2_backward(cache.aux[i], g, x.shape[2:])
        elif kind == "conv2d":
            p = model.params[i]
            g, gw, gb = conv2d_backward(x, p["w"], g, cache.aux[i], need_input=input_grad or i > 0)
            grads[i] = {"w": gw, "b": gb}
    return grads, g


def backward(model: Model, cache: Cache, labels):
    """Gradients of the mean binary cross-entropy over the batch."""
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if labels.shape[0] != cache.scores.shape[0]:
        raise ShapeError(f"labels length {labels.shape[0]} != batch size {cache.scores.shape[0]}")
    grad_logits = (cache.scores - labels) / labels.shape[0]
    grads, _ = backprop(model, cache, grad_logits, input_grad=False)
    return grads


# --------------------------------------------------------------- checkpoints

MAGIC = b"SNET"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBQ")
_RECORD = struct.Struct("<H4I")


def _pad4(shape):
    return tuple(shape) + (1,) * (4 - len(shape))


def save_model(model: Model, path):
    if model.spec.arch_id not in ARCH_CODES:
        raise ValueError(f"only {sorted(ARCH_CODES)} models can be checkpointed")
    if tuple(model.spec.input_shape) != INPUT_SHAPE:
        raise ValueError(f"checkpoints require input shape {INPUT_SHAPE}")
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, ARCH_CODES[model.spec.arch_id], model.rng_seed)]
    for i in sorted(model.params):
        for key in ("w", "b"):
            arr = model.params[i][key]
            chunks.append(_RECORD.pack(i, *_pad4(arr.shape)))
            chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise CheckpointFormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, code, seed = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported format version {version}")
    codes = {v: k for k, v in ARCH_CODES.items()}
    if code not in codes:
        raise CheckpointFormatError(f"{path}: unknown arch code {code}")
    records = []
    off = _HEADER.size
    while off < len(blob):
        if off + _RECORD.size > len(blob):
            raise CheckpointFormatError(f"{path}: truncated record header at byte {off}")
        idx, *shape = _RECORD.unpack_from(blob, off)
        off += _RECORD.size
        nbytes = 4 * int(np.prod(shape))
        if off + nbytes > len(blob):
            raise CheckpointFormatError(f"{path}: truncated data for layer {idx} at byte {off}")
        data = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=off)
        records.append((idx, tuple(shape), data.astype(np.float32)))
        off += nbytes

    spec = model_spec(codes[code])
    expected = [(i, key, s) for i, (ws, bs) in sorted(spec.param_shapes().items())
                for key, s in (("w", ws), ("b", bs))]
    if len(records) != len(expected):
        raise CheckpointValidationError(
            f"{path}: {len(records)} parameter records but {spec.arch_id} needs {len(expected)}")
    params = {}
    for (idx, shape, data), (ei, key, es) in zip(records, expected):
        if idx != ei or shape != _pad4(es):
            raise CheckpointValidationError(
                f"{path}: record (layer {idx}, shape {shape}) inconsistent with {spec.arch_id} "
                f"(layer {ei}, shape {_pad4(es)})")
        params.setdefault(idx, {})[key] = data.reshape(es)
    return Model(spec, params, int(seed))
