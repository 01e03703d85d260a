"""A small dilated conv net in numpy, float64 end to end.

Stride-1 same-padded convolutions only. The default shape: a shared
trunk of 3x3 convs with dilations 1, 2, 4 and ReLU, a 1x1 + sigmoid
boundary head and a 3x3 + ReLU then 1x1 identity orientation head. The
trunk's receptive field is 1 + sum(2 * dilation) per 3x3 layer, 15 for
the default.

Training is plain SGD with momentum on the two-stream loss; everything
is seeded and single-threaded, so repeat runs are bit-identical.
"""

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .losses import BoundaryLossConfig, OrientationLossConfig, boundary_loss, orient_loss
from .raster import atomic_write_bytes

MODEL_MAGIC = b"DOCM"
MODEL_VERSION = 1

ACTIVATIONS = ("relu", "sigmoid", "identity")
_HEADS = ("trunk", "boundary", "orientation")


@dataclass
class ConvLayer:
    """3x3 or 1x1 convolution, stride 1, same padding, with activation."""

    weight: np.ndarray  # (out_c, in_c, kh, kw), float64
    bias: np.ndarray  # (out_c,), float64
    dilation: int = 1
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 4:
            raise ValueError("weight must be (out, in, kh, kw)")
        if self.weight.shape[2] % 2 == 0 or self.weight.shape[3] % 2 == 0:
            raise ValueError("kernel dims must be odd for same padding")
        if self.dilation < 1:
            raise ValueError("dilation must be >= 1")


@dataclass
class ModelParams:
    trunk: list
    boundary_head: list
    orientation_head: list

    def groups(self):
        return (
            ("trunk", self.trunk),
            ("boundary", self.boundary_head),
            ("orientation", self.orientation_head),
        )

    def layers(self):
        return self.trunk + self.boundary_head + self.orientation_head

    @property
    def in_channels(self):
        return self.trunk[0].weight.shape[1]


@dataclass
class TrainConfig:
    lr: float = 1e-4  # losses sum over pixels, so steps are size-coupled
    momentum: float = 0.9
    epochs: int = 20
    batch_size: int = 4
    seed: int = 0
    widths: tuple = (16, 16, 32)
    orient_width: int = 16
    boundary: BoundaryLossConfig = field(default_factory=BoundaryLossConfig)
    orientation: OrientationLossConfig = field(default_factory=OrientationLossConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if len(self.widths) != 3 or any(int(w) < 1 for w in self.widths):
            raise ValueError("widths must be three positive ints")
        if self.orient_width < 1:
            raise ValueError("orient_width must be >= 1")


class TrainingDiverged(RuntimeError):
    pass


def he_init(rng, out_c, in_c, kh, kw):
    std = np.sqrt(2.0 / (in_c * kh * kw))
    return rng.normal(0.0, std, size=(out_c, in_c, kh, kw)).astype(np.float64)


def default_params(seed=0, in_channels=1, widths=(16, 16, 32), orient_width=16):
    """Fresh model with He-initialized weights and zero biases."""
    rng = np.random.default_rng(seed)
    w1, w2, w3 = widths
    trunk = [
        ConvLayer(he_init(rng, w1, in_channels, 3, 3), np.zeros(w1), 1, "relu"),
        ConvLayer(he_init(rng, w2, w1, 3, 3), np.zeros(w2), 2, "relu"),
        ConvLayer(he_init(rng, w3, w2, 3, 3), np.zeros(w3), 4, "relu"),
    ]
    boundary = [ConvLayer(he_init(rng, 1, w3, 1, 1), np.zeros(1), 1, "sigmoid")]
    orientation = [
        ConvLayer(he_init(rng, orient_width, w3, 3, 3), np.zeros(orient_width), 1, "relu"),
        ConvLayer(he_init(rng, 1, orient_width, 1, 1), np.zeros(1), 1, "identity"),
    ]
    return ModelParams(trunk=trunk, boundary_head=boundary, orientation_head=orientation)


def receptive_field(layers):
    """Receptive field of a stack of stride-1 dilated convs."""
    rf = 1
    for layer in layers:
        kh = layer.weight.shape[2]
        rf += 2 * layer.dilation * (kh // 2)
    return rf


def _im2col(x, kh, kw, dilation):
    """(c, h, w) -> (c*kh*kw, h*w) patch matrix, same padding."""
    c, h, w = x.shape
    ph = dilation * (kh // 2)
    pw = dilation * (kw // 2)
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((c, kh * kw, h, w), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, i * kw + j] = xp[
                :, i * dilation : i * dilation + h, j * dilation : j * dilation + w
            ]
    return cols.reshape(c * kh * kw, h * w)


def _col2im(dcols, c, h, w, kh, kw, dilation):
    """Adjoint of _im2col: scatter patch gradients back to (c, h, w)."""
    ph = dilation * (kh // 2)
    pw = dilation * (kw // 2)
    dxp = np.zeros((c, h + 2 * ph, w + 2 * pw), dtype=np.float64)
    dc = dcols.reshape(c, kh * kw, h, w)
    for i in range(kh):
        for j in range(kw):
            dxp[
                :, i * dilation : i * dilation + h, j * dilation : j * dilation + w
            ] += dc[:, i * kw + j]
    if ph == 0 and pw == 0:
        return dxp
    return dxp[:, ph : ph + h, pw : pw + w]


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        from .losses import sigmoid

        return sigmoid(z)
    return z


def _conv_forward(layer, x):
    out_c, in_c, kh, kw = layer.weight.shape
    if x.shape[0] != in_c:
        raise ValueError(f"layer expects {in_c} channels, got {x.shape[0]}")
    h, w = x.shape[1:]
    cols = _im2col(x, kh, kw, layer.dilation)
    z = layer.weight.reshape(out_c, -1) @ cols + layer.bias[:, None]
    z = z.reshape(out_c, h, w)
    return _activate(z, layer.activation), z, cols


def _run_stack(layers, x, cache=None):
    for layer in layers:
        a, z, cols = _conv_forward(layer, x)
        if cache is not None:
            cache.append((x, z, cols))
        x = a
    return x


def _image_to_planes(image):
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        return arr[None]
    if arr.ndim == 3:
        return np.moveaxis(arr, 2, 0)
    raise ValueError(f"image must be (h, w) or (h, w, c), got {arr.shape}")


def forward(params, image):
    """Run the two-stream net.

    Args:
        params: ModelParams.
        image: (h, w) or (h, w, c) float image; channel count must match
            the first trunk layer.

    Returns:
        (edge_prob, orient): two (h, w) float64 maps. edge_prob passed
        through sigmoid, orient raw (unbounded regression).
    """
    x = _image_to_planes(image)
    if x.shape[0] != params.in_channels:
        raise ValueError(
            f"model expects {params.in_channels} input channels, got {x.shape[0]}"
        )
    t = _run_stack(params.trunk, x)
    e = _run_stack(params.boundary_head, t)
    o = _run_stack(params.orientation_head, t)
    return e[0], o[0]


def _backprop_stack(layers, caches, dout, skip_last_activation):
    """Backprop dout through a layer stack.

    dout is w.r.t. the last layer's pre-activation when
    skip_last_activation is set (the losses differentiate through the
    final sigmoid / identity themselves).

    Returns:
        (grads, dx): per-layer (dW, db) list and the gradient w.r.t. the
        stack input.
    """
    grads = [None] * len(layers)
    d = dout
    for li in range(len(layers) - 1, -1, -1):
        layer = layers[li]
        x, z, cols = caches[li]
        if not (skip_last_activation and li == len(layers) - 1):
            if layer.activation == "relu":
                d = d * (z > 0)
            elif layer.activation == "sigmoid":
                from .losses import sigmoid

                s = sigmoid(z)
                d = d * s * (1.0 - s)
        out_c = layer.weight.shape[0]
        dflat = d.reshape(out_c, -1)
        dw = (dflat @ cols.T).reshape(layer.weight.shape)
        db = dflat.sum(axis=1)
        dcols = layer.weight.reshape(out_c, -1).T @ dflat
        in_c, h, w = x.shape
        kh, kw = layer.weight.shape[2:]
        d = _col2im(dcols, in_c, h, w, kh, kw, layer.dilation)
        grads[li] = (dw, db)
    return grads, d


def loss_and_grads(params, image, gt, bcfg=None, ocfg=None):
    """Full forward/backward pass for one image.

    Returns:
        (loss, grads) where grads maps group name to a list of (dW, db)
        tuples mirroring the layer lists.
    """
    x = _image_to_planes(image)
    tc, bc, oc = [], [], []
    t = _run_stack(params.trunk, x, tc)
    e = _run_stack(params.boundary_head, t, bc)
    o = _run_stack(params.orientation_head, t, oc)
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(o))):
        raise TrainingDiverged("non-finite network output")
    bl, dlogit = boundary_loss(e[0], gt.edge, bcfg)
    ol, dtheta = orient_loss(o[0], gt, ocfg)
    bgrads, dt_b = _backprop_stack(
        params.boundary_head, bc, dlogit[None], skip_last_activation=True
    )
    ograds, dt_o = _backprop_stack(
        params.orientation_head, oc, dtheta[None], skip_last_activation=True
    )
    tgrads, _ = _backprop_stack(params.trunk, tc, dt_b + dt_o, skip_last_activation=False)
    return bl + ol, {"trunk": tgrads, "boundary": bgrads, "orientation": ograds}


def train(config, dataset):
    """SGD with momentum over (image, gt_map) pairs.

    Args:
        config: TrainConfig (None for defaults); seeds both init and the
            epoch shuffles.
        dataset: sequence of (image, OrientedBoundaryMap).

    Returns:
        (params, history): trained ModelParams and per-epoch mean loss.

    Raises:
        TrainingDiverged: on a non-finite loss, naming the epoch.
    """
    cfg = config or TrainConfig()
    if not dataset:
        raise ValueError("train: empty dataset")
    in_channels = _image_to_planes(dataset[0][0]).shape[0]
    params = default_params(
        seed=cfg.seed,
        in_channels=in_channels,
        widths=cfg.widths,
        orient_width=cfg.orient_width,
    )
    rng = np.random.default_rng(cfg.seed + 1)
    velocity = {
        name: [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in layers]
        for name, layers in params.groups()
    }
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            acc = None
            for idx in batch:
                image, gt = dataset[idx]
                try:
                    loss, grads = loss_and_grads(
                        params, image, gt, cfg.boundary, cfg.orientation
                    )
                except TrainingDiverged as exc:
                    raise TrainingDiverged(
                        f"{exc} at epoch {epoch + 1}"
                    ) from None
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch + 1}"
                    )
                total += loss
                if acc is None:
                    acc = grads
                else:
                    for name, glist in grads.items():
                        for li, (dw, db) in enumerate(glist):
                            acc[name][li] = (
                                acc[name][li][0] + dw,
                                acc[name][li][1] + db,
                            )
            scale = 1.0 / len(batch)
            for name, layers in params.groups():
                for li, layer in enumerate(layers):
                    vw, vb = velocity[name][li]
                    dw, db = acc[name][li]
                    vw = cfg.momentum * vw + dw * scale
                    vb = cfg.momentum * vb + db * scale
                    velocity[name][li] = (vw, vb)
                    layer.weight -= cfg.lr * vw
                    layer.bias -= cfg.lr * vb
        history.append(total / len(dataset))
    return params, history


_ACT_CODE = {"relu": 0, "sigmoid": 1, "identity": 2}
_ACT_NAME = {v: k for k, v in _ACT_CODE.items()}
_HEAD_CODE = {"trunk": 0, "boundary": 1, "orientation": 2}
_HEAD_NAME = {v: k for k, v in _HEAD_CODE.items()}


def save_model(path, params):
    """Serialize to the binary model format.

    Layout: magic "DOCM", u16 version, u16 layer count, then per layer a
    header (u8 head tag, u8 activation, u16 dilation, four u16 weight
    dims) followed by float32 LE weights then biases.
    """
    chunks = [MODEL_MAGIC, struct.pack("<HH", MODEL_VERSION, len(params.layers()))]
    for name, layers in params.groups():
        for layer in layers:
            out_c, in_c, kh, kw = layer.weight.shape
            chunks.append(
                struct.pack(
                    "<BBHHHHH",
                    _HEAD_CODE[name],
                    _ACT_CODE[layer.activation],
                    layer.dilation,
                    out_c,
                    in_c,
                    kh,
                    kw,
                )
            )
            chunks.append(layer.weight.astype("<f4").tobytes())
            chunks.append(layer.bias.astype("<f4").tobytes())
    atomic_write_bytes(path, b"".join(chunks))


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file")
    version, count = struct.unpack_from("<HH", blob, 4)
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    off = 8
    groups = {"trunk": [], "boundary": [], "orientation": []}
    for _ in range(count):
        head, act, dilation, out_c, in_c, kh, kw = struct.unpack_from("<BBHHHHH", blob, off)
        off += 12
        wn = out_c * in_c * kh * kw
        weight = (
            np.frombuffer(blob, dtype="<f4", count=wn, offset=off)
            .astype(np.float64)
            .reshape(out_c, in_c, kh, kw)
        )
        off += wn * 4
        bias = np.frombuffer(blob, dtype="<f4", count=out_c, offset=off).astype(
            np.float64
        )
        off += out_c * 4
        groups[_HEAD_NAME[head]].append(
            ConvLayer(weight.copy(), bias.copy(), dilation, _ACT_NAME[act])
        )
    if off != len(blob):
        raise ValueError(f"{path}: {len(blob) - off} trailing bytes")
    return ModelParams(
        trunk=groups["trunk"],
        boundary_head=groups["boundary"],
        orientation_head=groups["orientation"],
    )
