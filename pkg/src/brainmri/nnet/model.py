"""Sequential model: small conv backbone followed by GAP -> dropout -> dense -> softmax."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError
from ..imgcore import NETWORK_SIZE, as_image, resize_bilinear
from .layers import (
    BatchNorm2D,
    BNReLUPool,
    Conv2D,
    Dense,
    Dropout,
    GlobalAveragePool,
    Layer,
    MaxPool2D,
    ReLU,
    softmax,
)


@dataclass(frozen=True)
class MiniBackbone:
    channels: tuple[int, ...] = (16, 32, 64)
    input_size: int = NETWORK_SIZE
    in_channels: int = 1
    kernel_size: int = 3
    fused: bool = True

    def spatial_after(self) -> int:
        size = self.input_size
        for _ in self.channels:
            size //= 2
        return size


class Model:
    def __init__(self, layers: list[Layer], backbone_len: int, arch: dict):
        self.layers = layers
        self.backbone_len = backbone_len
        self.arch = arch

    @property
    def backbone(self) -> list[Layer]:
        return self.layers[: self.backbone_len]

    @property
    def head(self) -> list[Layer]:
        return self.layers[self.backbone_len :]

    @property
    def num_classes(self) -> int:
        return self.arch["num_classes"]

    def forward(self, x, training=False, rng=None, start: int = 0) -> np.ndarray:
        """Logits for a batch ``x`` of shape (N, C, H, W).

        With ``start > 0``, ``x`` is instead the output of layer ``start - 1``
        (as returned by ``features``).
        """
        if start == 0:
            out = np.ascontiguousarray(np.asarray(x, dtype=np.float64).transpose(0, 2, 3, 1))
        else:
            out = x
        for layer in self.layers[start:]:
            out = layer.forward(out, training=training, rng=rng)
        return out

    def backward(self, grad_logits, input_grad: bool = True):
        """Backpropagate; returns the (N, C, H, W) input gradient unless ``input_grad`` is False.

        Without ``input_grad`` the pass stops at the first trainable layer, so
        frozen layers below it get no gradients.
        """
        stop = 0 if input_grad else self.first_trainable()
        grad = grad_logits
        for layer in reversed(self.layers[stop + 1 :]):
            grad = layer.backward(grad)
        first = self.layers[stop]
        if not input_grad:
            if isinstance(first, Conv2D):
                first.backward(grad, need_input_grad=False)
            else:
                first.backward(grad)
            return None
        return first.backward(grad).transpose(0, 3, 1, 2)

    def first_trainable(self) -> int:
        for i, layer in enumerate(self.layers):
            if layer.params and not layer.frozen:
                return i
        return len(self.layers) - 1

    def frozen_prefix(self) -> int:
        """Number of leading layers whose output is fixed: frozen or parameter-free and not random."""
        k = 0
        for layer in self.layers[:-1]:
            if layer.kind == "dropout" or (layer.params and not layer.frozen):
                break
            k += 1
        return k

    def features(self, x, end: int, batch_size: int = 64) -> np.ndarray:
        """Inference-mode output of ``layers[:end]`` for an (N, C, H, W) batch."""
        x = np.asarray(x, dtype=np.float64)
        chunks = []
        for i in range(0, len(x), batch_size):
            out = np.ascontiguousarray(x[i : i + batch_size].transpose(0, 2, 3, 1))
            for layer in self.layers[:end]:
                out = layer.forward(out, training=False)
            chunks.append(out)
        return np.concatenate(chunks)

    def predict_proba(self, x, batch_size: int = 64, start: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3 and start == 0:
            x = x[:, None]
        chunks = [softmax(self.forward(x[i : i + batch_size], start=start)) for i in range(0, len(x), batch_size)]
        return np.concatenate(chunks) if chunks else np.zeros((0, self.num_classes))

    def named_parameters(self):
        for i, layer in enumerate(self.layers):
            for key in sorted(layer.params):
                yield f"{i}.{layer.kind}.{key}", layer, key

    def trainable(self):
        return [(name, layer, key) for name, layer, key in self.named_parameters() if not layer.frozen]

    def num_parameters(self) -> int:
        return sum(layer.params[key].size for _, layer, key in self.named_parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {}
        for i, layer in enumerate(self.layers):
            for key, val in layer.params.items():
                state[f"{i}.{layer.kind}.{key}"] = val
            for key, val in layer.buffers.items():
                state[f"{i}.{layer.kind}.{key}"] = val
        return state

    def copy(self) -> "Model":
        return copy.deepcopy(self)


def build_model(arch: MiniBackbone = MiniBackbone(), num_classes: int = 4, dropout_rate: float = 0.2, seed: int = 0) -> Model:
    """He-uniform initialized MiniBackbone plus the classification head."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    c_in = arch.in_channels
    for c_out in arch.channels:
        conv = Conv2D(c_in, c_out, arch.kernel_size, stride=1, pad=arch.kernel_size // 2, rng=rng)
        if arch.fused:
            layers += [conv, BNReLUPool(c_out, 2)]
        else:
            layers += [conv, BatchNorm2D(c_out), ReLU(), MaxPool2D(2)]
        c_in = c_out
    backbone_len = len(layers)
    layers += [GlobalAveragePool(), Dropout(dropout_rate), Dense(c_in, num_classes, rng=rng)]
    tag = {
        "name": "minibackbone",
        "channels": list(arch.channels),
        "input_size": arch.input_size,
        "in_channels": arch.in_channels,
        "kernel_size": arch.kernel_size,
        "fused": arch.fused,
        "num_classes": num_classes,
        "dropout_rate": dropout_rate,
    }
    return Model(layers, backbone_len, tag)


def model_from_arch(tag: dict) -> Model:
    arch = MiniBackbone(
        channels=tuple(tag["channels"]),
        input_size=tag["input_size"],
        in_channels=tag["in_channels"],
        kernel_size=tag["kernel_size"],
        fused=tag.get("fused", True),
    )
    return build_model(arch, tag["num_classes"], tag["dropout_rate"], seed=0)


def freeze_backbone(model: Model, frozen: bool = True) -> Model:
    """Flag backbone layers frozen: no updates, BN uses its running statistics."""
    for layer in model.backbone:
        layer.frozen = frozen
    return model


def unfreeze(model: Model) -> Model:
    for layer in model.layers:
        layer.frozen = False
    return model


def replace_head(model: Model, num_classes: int = 4, seed: int = 0) -> Model:
    """Copy of ``model`` keeping the backbone and attaching a freshly initialized head."""
    new = model.copy()
    rng = np.random.default_rng(seed)
    features = new.head[-1].params["w"].shape[0]
    new.layers = new.backbone + [GlobalAveragePool(), Dropout(new.arch["dropout_rate"]), Dense(features, num_classes, rng=rng)]
    new.arch = dict(new.arch, num_classes=num_classes)
    return new


def prepare_input(image, size: int = NETWORK_SIZE, allow_resize: bool = True) -> np.ndarray:
    img = as_image(image)
    if img.shape != (size, size):
        if not allow_resize:
            raise ArgumentError(f"expected a {size}x{size} image, got {img.shape[1]}x{img.shape[0]}")
        img = resize_bilinear(img, size, size)
    return img[None, None]


def predict(model: Model, image, allow_resize: bool = True) -> tuple[np.ndarray, int]:
    """Class probabilities and argmax label for one image, in inference mode."""
    x = prepare_input(image, model.arch["input_size"], allow_resize)
    probs = softmax(model.forward(x, training=False))[0]
    return probs, int(np.argmax(probs))
