"""Parameterized layers composing the tensor primitives.

All layers take an ``np.random.Generator`` at construction and draw their
initial weights from it, so a fixed seed and construction order give
bit-identical parameters.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Tensor


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Draw weights from Normal(0, sqrt(2/fan_in))."""
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Linear:
    """Affine map with weight (out, in) and bias (out,), He-initialized."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor(he_normal(rng, (out_features, in_features), in_features),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_features), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(
                f"linear expects {self.in_features} input features, got shape {x.shape}")
        return T.add(T.matmul(x, T.transpose(self.weight)), self.bias)

    def params(self) -> list[tuple[str, Tensor]]:
        return [("weight", self.weight), ("bias", self.bias)]


class Mlp2:
    """Two fully-connected layers with a ReLU between, channel bottleneck
    c -> max(1, floor(c/r)) -> c.  No output nonlinearity: the caller applies
    its own gate (sigmoid) where needed."""

    def __init__(self, channels: int, reduction: int, rng: np.random.Generator):
        self.channels = channels
        self.hidden = max(1, channels // reduction)
        self.fc1 = Linear(channels, self.hidden, rng)
        self.fc2 = Linear(self.hidden, channels, rng)

    def forward(self, f: Tensor) -> Tensor:
        """f: (N, C, 1, 1) -> (N, C, 1, 1)."""
        if f.ndim != 4 or f.shape[1] != self.channels:
            raise DimensionError(
                f"mlp expects (N, {self.channels}, 1, 1) input, got {f.shape}")
        n = f.shape[0]
        h = T.reshape(f, (n, self.channels))
        h = self.fc2.forward(T.relu(self.fc1.forward(h)))
        return T.reshape(h, (n, self.channels, 1, 1))

    def params(self) -> list[tuple[str, Tensor]]:
        return ([("fc1." + k, v) for k, v in self.fc1.params()]
                + [("fc2." + k, v) for k, v in self.fc2.params()])


class Conv2d:
    """Convolution layer; fan_in for He init is C*kh*kw."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0,
                 bias: bool = True):
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel * kernel
        self.weight = Tensor(
            he_normal(rng, (out_channels, in_channels, kernel, kernel), fan_in),
            requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def zero_(self) -> "Conv2d":
        """Zero all parameters in place (pre-training initialization tweak)."""
        self.weight.data[...] = 0.0
        if self.bias is not None:
            self.bias.data[...] = 0.0
        return self

    def params(self) -> list[tuple[str, Tensor]]:
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out


class BatchNorm2d:
    """Per-channel batch normalization with running statistics.

    Train mode normalizes with batch statistics and updates the running mean
    and variance (exponential moving average, unbiased variance); eval mode is
    a fixed affine map from the running statistics.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.scale = Tensor(np.ones(channels), requires_grad=True)
        self.shift = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        if x.shape[1] != self.channels:
            raise DimensionError(
                f"batchnorm expects {self.channels} channels, got shape {x.shape}")
        if not training:
            return T.batch_norm_eval(x, self.scale, self.shift,
                                     self.running_mean, self.running_var, self.eps)
        out, mu, var = T.batch_norm_train(x, self.scale, self.shift, self.eps)
        m = x.size // self.channels
        var_unbiased = var * (m / (m - 1)) if m > 1 else var
        self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mu
        self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var_unbiased
        return out

    def params(self) -> list[tuple[str, Tensor]]:
        return [("scale", self.scale), ("shift", self.shift)]

    def state(self) -> list[tuple[str, np.ndarray]]:
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def load_state(self, name: str, value: np.ndarray) -> None:
        if name == "running_mean":
            self.running_mean = value.copy()
        elif name == "running_var":
            self.running_var = value.copy()
        else:
            raise KeyError(name)


# ---------------------------------------------------------------------------
# checkpoint format: a zip archive with manifest.json (metadata + name->shape)
# and one <name>.bin raw little-endian float64 entry per array.


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray],
                    meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "attnbench-checkpoint/1",
        "meta": meta or {},
        "arrays": {name: list(arr.shape) for name, arr in arrays.items()},
    }
    buf = io.BytesIO()
    # fixed timestamps keep the archive byte-stable for identical contents
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("manifest.json", date_time=(1980, 1, 1, 0, 0, 0))
        zf.writestr(info, json.dumps(manifest, indent=2, sort_keys=True))
        for name in sorted(arrays):
            info = zipfile.ZipInfo(name + ".bin", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
    path.write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json"))
        arrays = {}
        for name, shape in manifest["arrays"].items():
            raw = np.frombuffer(zf.read(name + ".bin"), dtype="<f8")
            arrays[name] = raw.reshape(shape).astype(np.float64)
    return manifest.get("meta", {}), arrays
