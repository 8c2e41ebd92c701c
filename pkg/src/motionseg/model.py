"""Encoder-decoder motion labeling network.

The encoder halves resolution per stage (conv+batchnorm+relu blocks, then
2x2 max pooling); each decoder unit doubles resolution, concatenates the
matching encoder feature map and applies two conv blocks. A 1x1 classifier
produces 2-channel logits at the last decoder resolution, which a final
bilinear interpolation brings back to the input resolution.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from motionseg.encoding import MODALITY_CHANNELS, NetworkInput, mirror_input_channels
from motionseg.ops import (
    BatchNormParams,
    ConvParams,
    NumericsError,
    OptimizerState,
    batchnorm_backward,
    batchnorm_forward,
    concat_channels_backward,
    concat_channels_forward,
    conv2d_backward,
    conv2d_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    relu_backward,
    relu_forward,
    sgd_step,
    softmax_xent,
    upsample_bilinear_backward,
    upsample_bilinear_forward,
)
from motionseg.tensor import ShapeError, Tensor


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; the model has been restored to the last
    finite epoch checkpoint."""


@dataclass
class MpNetConfig:
    input_channels: int
    num_encoder_stages: int = 5
    num_decoder_units: int = 2
    channels_per_stage: tuple[int, ...] = (32, 64, 128, 256, 256)
    convs_per_stage: int = 2
    kernel_size: int = 3

    def __post_init__(self):
        self.channels_per_stage = tuple(self.channels_per_stage)
        if self.input_channels < 1:
            raise ValueError("input_channels must be >= 1")
        if not (1 <= self.num_decoder_units <= self.num_encoder_stages - 1):
            raise ValueError(
                f"num_decoder_units must be in [1, {self.num_encoder_stages - 1}], "
                f"got {self.num_decoder_units}"
            )
        if len(self.channels_per_stage) != self.num_encoder_stages:
            raise ValueError(
                f"channels_per_stage has {len(self.channels_per_stage)} entries "
                f"for {self.num_encoder_stages} stages"
            )
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")


@dataclass
class TrainConfig:
    batch_size: int = 13
    learning_rate: float = 0.003
    momentum: float = 0.9
    weight_decay: float = 0.005
    epochs: int = 27
    step_every: int = 9
    step_factor: float = 0.1
    crop_size: int | None = None
    mirror_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.epochs, self.step_every) < 1:
            raise ValueError("batch_size, epochs and step_every must be >= 1")
        if not (0.0 < self.step_factor < 1.0):
            raise ValueError("step_factor must be in (0, 1)")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("bad learning rate / weight decay")

    def rate_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch index."""
        return self.learning_rate * self.step_factor ** ((epoch - 1) // self.step_every)

    def decay_at(self, epoch: int) -> float:
        return self.weight_decay * self.step_factor ** ((epoch - 1) // self.step_every)


def desk_train_config(**overrides) -> TrainConfig:
    """Scaled-down schedule that trains in minutes on one CPU core."""
    base = dict(batch_size=8, learning_rate=0.003, momentum=0.9, weight_decay=0.005,
                epochs=27, step_every=9, step_factor=0.1, crop_size=None,
                mirror_probability=0.5, seed=0)
    base.update(overrides)
    return TrainConfig(**base)


class _ConvBNRelu:
    """conv -> batchnorm -> relu with cached state for one backward pass."""

    def __init__(self, conv: ConvParams, bn: BatchNormParams, pad: int):
        self.conv = conv
        self.bn = bn
        self.pad = pad
        self.d_weights = None
        self.d_bias = None
        self.d_gamma = None
        self.d_beta = None

    def forward(self, x: Tensor, mode: str) -> Tensor:
        y, self._conv_cache = conv2d_forward(x, self.conv, stride=1, pad=self.pad)
        y, self._bn_cache = batchnorm_forward(y, self.bn, mode)
        if mode == "train":
            _, _, _, new_mean, new_var = self._bn_cache
            self.bn.running_mean = new_mean
            self.bn.running_var = new_var
            self.bn.initialized = True
        y, self._relu_mask = relu_forward(y)
        return y

    def backward(self, dy: Tensor) -> Tensor:
        dy = relu_backward(dy, self._relu_mask)
        dy, self.d_gamma, self.d_beta = batchnorm_backward(dy, self.bn, self._bn_cache)
        dx, self.d_weights, self.d_bias = conv2d_backward(dy, self.conv, self._conv_cache)
        return dx

    def param_pairs(self):
        return [
            (self.conv.weights, lambda: self.d_weights),
            (self.conv.bias, lambda: self.d_bias),
            (self.bn.gamma, lambda: self.d_gamma),
            (self.bn.beta, lambda: self.d_beta),
        ]


class MpNetModel:
    """Holds all layer parameters plus the transient per-pass caches."""

    def __init__(self, config: MpNetConfig, encoder, decoder, classifier: ConvParams):
        self.config = config
        self.encoder = encoder  # list of stages; stage = list of _ConvBNRelu
        self.decoder = decoder  # list of units; unit = list of _ConvBNRelu
        self.classifier = classifier
        self._cls_grads = (None, None)

    # -- parameter access ----------------------------------------------

    def _blocks(self):
        for stage in self.encoder:
            yield from stage
        for unit in self.decoder:
            yield from unit

    def parameters(self) -> list[np.ndarray]:
        out = []
        for block in self._blocks():
            out.extend(p for p, _ in block.param_pairs())
        out.extend([self.classifier.weights, self.classifier.bias])
        return out

    def gradients(self) -> list[np.ndarray]:
        out = []
        for block in self._blocks():
            out.extend(g() for _, g in block.param_pairs())
        out.extend(self._cls_grads)
        return out

    def state_arrays(self) -> list[np.ndarray]:
        """Everything serialized: parameters plus batch-norm running stats."""
        out = []
        for block in self._blocks():
            out.extend([block.conv.weights, block.conv.bias, block.bn.gamma,
                        block.bn.beta, block.bn.running_mean, block.bn.running_var])
        out.extend([self.classifier.weights, self.classifier.bias])
        return out

    def bn_initialized(self) -> bool:
        return all(block.bn.initialized for block in self._blocks())

    def set_bn_initialized(self, value: bool):
        for block in self._blocks():
            block.bn.initialized = value

    def snapshot(self) -> list[np.ndarray]:
        return [a.copy() for a in self.state_arrays()]

    def restore(self, snap: list[np.ndarray]):
        for dst, src in zip(self.state_arrays(), snap):
            dst[...] = src

    # -- passes ----------------------------------------------------------

    def forward(self, x, mode: str = "eval"):
        """Returns (full-resolution 2-channel logits, moving probability map)."""
        if isinstance(x, NetworkInput):
            x = x.tensor
        cfg = self.config
        if x.c != cfg.input_channels:
            raise ShapeError(
                f"model expects {cfg.input_channels} input channels, got {x.c}"
            )
        factor = 2 ** cfg.num_encoder_stages
        if x.h % factor or x.w % factor:
            raise ShapeError(
                f"input {x.h}x{x.w} is not divisible by {factor}; pad before calling"
            )
        self._in_hw = (x.h, x.w)
        skips = []
        self._pool_caches = []
        h = x
        for stage in self.encoder:
            for block in stage:
                h = block.forward(h, mode)
            skips.append(h)
            h, argmax = maxpool2x2_forward(h)
            self._pool_caches.append((argmax, skips[-1].shape))
        self._skip_count = len(skips)
        self._up_caches = []
        self._concat_splits = []
        self._skip_indices = []
        for k, unit in enumerate(self.decoder):
            h, up_cache = upsample_bilinear_forward(h, h.h * 2, h.w * 2)
            self._up_caches.append(up_cache)
            skip_idx = cfg.num_encoder_stages - 1 - k
            self._skip_indices.append(skip_idx)
            h, split = concat_channels_forward(h, skips[skip_idx])
            self._concat_splits.append(split)
            for block in unit:
                h = block.forward(h, mode)
        logits_small, self._cls_cache = conv2d_forward(h, self.classifier, stride=1, pad=0)
        self.pre_classifier_hw = (logits_small.h, logits_small.w)
        logits, self._final_up_cache = upsample_bilinear_forward(
            logits_small, x.h, x.w
        )
        ez = np.exp(logits.data - logits.data.max(axis=1, keepdims=True))
        m = (ez[:, 1] / ez.sum(axis=1)).astype(np.float32)
        return logits, m

    def backward(self, dlogits: Tensor) -> list[np.ndarray]:
        d = upsample_bilinear_backward(dlogits, self._final_up_cache)
        d, dw, db = conv2d_backward(d, self.classifier, self._cls_cache)
        self._cls_grads = (dw, db)
        skip_grads: dict[int, Tensor] = {}
        for k in range(len(self.decoder) - 1, -1, -1):
            for block in reversed(self.decoder[k]):
                d = block.backward(d)
            d_up, d_skip = concat_channels_backward(d, self._concat_splits[k])
            idx = self._skip_indices[k]
            skip_grads[idx] = d_skip
            d = upsample_bilinear_backward(d_up, self._up_caches[k])
        for i in range(len(self.encoder) - 1, -1, -1):
            argmax, pre_pool_shape = self._pool_caches[i]
            d = maxpool2x2_backward(d, argmax, pre_pool_shape)
            if i in skip_grads:
                d = Tensor(d.data + skip_grads[i].data)
            for block in reversed(self.encoder[i]):
                d = block.backward(d)
        return self.gradients()


def clone_as_float64(model: MpNetModel) -> MpNetModel:
    """Same weights at float64, for finite-difference reference runs."""
    twin = build_network(model.config, seed=0)
    for blk in twin._blocks():
        blk.conv.weights = blk.conv.weights.astype(np.float64)
        blk.conv.bias = blk.conv.bias.astype(np.float64)
        blk.bn.gamma = blk.bn.gamma.astype(np.float64)
        blk.bn.beta = blk.bn.beta.astype(np.float64)
        blk.bn.running_mean = blk.bn.running_mean.astype(np.float64)
        blk.bn.running_var = blk.bn.running_var.astype(np.float64)
        blk.bn.initialized = True
    twin.classifier.weights = twin.classifier.weights.astype(np.float64)
    twin.classifier.bias = twin.classifier.bias.astype(np.float64)
    for dst, src in zip(twin.state_arrays(), model.state_arrays()):
        dst[...] = src
    twin.set_bn_initialized(model.bn_initialized())
    return twin


def _init_conv(rng: np.random.Generator, out_c: int, in_c: int, k: int) -> ConvParams:
    fan_in = in_c * k * k
    fan_out = out_c * k * k
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    weights = rng.uniform(-limit, limit, size=(out_c, in_c, k, k)).astype(np.float32)
    return ConvParams(weights=weights, bias=np.zeros(out_c, dtype=np.float32))


def build_network(cfg: MpNetConfig, seed: int) -> MpNetModel:
    rng = np.random.default_rng(np.random.PCG64(seed))
    k = cfg.kernel_size
    pad = k // 2
    encoder = []
    in_c = cfg.input_channels
    for stage_channels in cfg.channels_per_stage:
        stage = []
        for _ in range(cfg.convs_per_stage):
            stage.append(
                _ConvBNRelu(_init_conv(rng, stage_channels, in_c, k),
                            BatchNormParams.identity(stage_channels), pad)
            )
            in_c = stage_channels
        encoder.append(stage)
    decoder = []
    prev = cfg.channels_per_stage[-1]
    for kdec in range(cfg.num_decoder_units):
        skip_c = cfg.channels_per_stage[cfg.num_encoder_stages - 1 - kdec]
        unit_in = prev + skip_c
        unit = [
            _ConvBNRelu(_init_conv(rng, skip_c, unit_in, k),
                        BatchNormParams.identity(skip_c), pad),
            _ConvBNRelu(_init_conv(rng, skip_c, skip_c, k),
                        BatchNormParams.identity(skip_c), pad),
        ]
        decoder.append(unit)
        prev = skip_c
    classifier = _init_conv(rng, 2, prev, 1)
    return MpNetModel(cfg, encoder, decoder, classifier)


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------


def augment(
    inp: np.ndarray,
    target: np.ndarray,
    crop_size: int | None,
    mirror_probability: float,
    rng: np.random.Generator,
    modality: str,
):
    """Random crop (same window for input and target) and mirroring with
    modality-aware channel corrections."""
    c, h, w = inp.shape
    if crop_size is not None:
        if crop_size > min(h, w):
            raise ValueError(f"crop {crop_size} exceeds input {h}x{w}")
        if crop_size < h or crop_size < w:
            top = int(rng.integers(0, h - crop_size + 1))
            left = int(rng.integers(0, w - crop_size + 1))
            inp = inp[:, top : top + crop_size, left : left + crop_size]
            target = target[top : top + crop_size, left : left + crop_size]
    if rng.random() < mirror_probability:
        inp = mirror_input_channels(inp, modality)
        target = target[:, ::-1]
    return np.ascontiguousarray(inp), np.ascontiguousarray(target)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    learning_rate: float
    loss: float
    train_iou: float
    val_iou: float = float("nan")


def format_epoch_log(rows: list[EpochStats]) -> str:
    lines = ["epoch,lr,loss,train_iou,val_iou"]
    for r in rows:
        lines.append(
            f"{r.epoch},{r.learning_rate:.8g},{r.loss:.6g},{r.train_iou:.6g},{r.val_iou:.6g}"
        )
    return "\n".join(lines) + "\n"


def _batch_iou_counts(m: np.ndarray, targets: np.ndarray, tau: float = 0.5):
    pred = m > tau
    gt = targets.astype(bool)
    return int((pred & gt).sum()), int((pred | gt).sum())


def evaluate_mean_iou(model: MpNetModel, samples, tau: float = 0.5) -> float:
    """Mean per-sample IoU of the binarized output (empty-vs-empty counts
    as a full match)."""
    scores = []
    for inp, target in samples:
        _, m = model.forward(Tensor(inp[None]), mode="eval")
        pred = m[0] > tau
        gt = target.astype(bool)
        union = int((pred | gt).sum())
        scores.append(1.0 if union == 0 else float((pred & gt).sum()) / union)
    return float(np.mean(scores))


def train(
    samples: list[tuple[np.ndarray, np.ndarray]],
    model: MpNetModel,
    tc: TrainConfig,
    modality: str,
    val_samples: list[tuple[np.ndarray, np.ndarray]] | None = None,
    progress=None,
) -> list[EpochStats]:
    """Mini-batch SGD with the stepped learning-rate/weight-decay schedule.

    samples are (input chw float32, target hw {0,1}) pairs. Deterministic
    for a fixed TrainConfig.seed. On a non-finite loss the model is rolled
    back to the previous epoch and TrainingDiverged is raised.
    """
    if not samples:
        raise ValueError("training dataset is empty")
    if modality not in MODALITY_CHANNELS:
        raise ValueError(f"unknown modality {modality!r}")
    if MODALITY_CHANNELS[modality] != model.config.input_channels:
        raise ValueError(
            f"modality {modality!r} has {MODALITY_CHANNELS[modality]} channels, "
            f"model expects {model.config.input_channels}"
        )
    rng = np.random.default_rng(np.random.PCG64(tc.seed))
    state = OptimizerState(learning_rate=tc.learning_rate, momentum=tc.momentum,
                           weight_decay=tc.weight_decay)
    log: list[EpochStats] = []
    checkpoint = model.snapshot()
    bn_was_initialized = model.bn_initialized()
    params = model.parameters()
    for epoch in range(1, tc.epochs + 1):
        state.learning_rate = tc.rate_at(epoch)
        state.weight_decay = tc.decay_at(epoch)
        order = rng.permutation(len(samples))
        losses = []
        inter = union = 0
        for start in range(0, len(order), tc.batch_size):
            idx = order[start : start + tc.batch_size]
            xs, ts = [], []
            for i in idx:
                x, t = augment(samples[i][0], samples[i][1], tc.crop_size,
                               tc.mirror_probability, rng, modality)
                xs.append(x)
                ts.append(t)
            batch = Tensor(np.stack(xs))
            targets = np.stack(ts)
            logits, m = model.forward(batch, mode="train")
            loss, dlogits = softmax_xent(logits, targets)
            if not np.isfinite(loss):
                model.restore(checkpoint)
                model.set_bn_initialized(bn_was_initialized)
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; restored last checkpoint"
                )
            grads = model.backward(dlogits)
            try:
                sgd_step(params, grads, state)
            except NumericsError as err:
                model.restore(checkpoint)
                model.set_bn_initialized(bn_was_initialized)
                raise TrainingDiverged(
                    f"non-finite gradient at epoch {epoch}: {err}; restored last checkpoint"
                ) from err
            losses.append(loss)
            bi, bu = _batch_iou_counts(m, targets)
            inter += bi
            union += bu
        val = float("nan")
        if val_samples:
            val = evaluate_mean_iou(model, val_samples)
        stats = EpochStats(
            epoch=epoch,
            learning_rate=state.learning_rate,
            loss=float(np.mean(losses)),
            train_iou=(inter / union) if union else 1.0,
            val_iou=val,
        )
        log.append(stats)
        if progress:
            progress(stats)
        checkpoint = model.snapshot()
        bn_was_initialized = True
    return log


# ---------------------------------------------------------------------------
# weight serialization
# ---------------------------------------------------------------------------

WEIGHTS_MAGIC = b"MPNETW1\x00"


def save_weights(model: MpNetModel) -> bytes:
    cfg = model.config
    parts = [WEIGHTS_MAGIC]
    header = [cfg.input_channels, cfg.num_encoder_stages, cfg.num_decoder_units,
              cfg.convs_per_stage, cfg.kernel_size, int(model.bn_initialized())]
    parts.append(struct.pack("<6i", *header))
    parts.append(struct.pack(f"<{len(cfg.channels_per_stage)}i", *cfg.channels_per_stage))
    for arr in model.state_arrays():
        parts.append(struct.pack("<i", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}i", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class WeightFormatError(ValueError):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightFormatError(
                f"unexpected end of weight file at byte {self.pos} (needed {n} more)"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def ints(self, n: int):
        return struct.unpack(f"<{n}i", self.take(4 * n))


def load_weights(data: bytes, cfg: MpNetConfig | None = None) -> MpNetModel:
    r = _Reader(data)
    if r.take(len(WEIGHTS_MAGIC)) != WEIGHTS_MAGIC:
        raise WeightFormatError("bad magic, not an MPNETW1 weight file")
    in_c, stages, decoders, convs, ksize, bn_init = r.ints(6)
    channels = tuple(r.ints(stages))
    file_cfg = MpNetConfig(
        input_channels=in_c, num_encoder_stages=stages, num_decoder_units=decoders,
        channels_per_stage=channels, convs_per_stage=convs, kernel_size=ksize,
    )
    if cfg is not None and cfg != file_cfg:
        raise WeightFormatError(
            f"config mismatch: file has {file_cfg}, caller expects {cfg}"
        )
    model = build_network(file_cfg, seed=0)
    for i, arr in enumerate(model.state_arrays()):
        (ndim,) = r.ints(1)
        shape = tuple(r.ints(ndim))
        if shape != arr.shape:
            raise WeightFormatError(
                f"tensor {i}: file shape {shape} does not match model shape {arr.shape}"
            )
        count = int(np.prod(shape))
        arr[...] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
    if r.pos != len(data):
        raise WeightFormatError(f"{len(data) - r.pos} trailing bytes after tensors")
    model.set_bn_initialized(bool(bn_init))
    return model
