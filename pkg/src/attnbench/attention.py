"""Self-contained feature-map attention: squeeze-excite (SE), channel+spatial
gating (CBAM), and global-context aggregation (GC).

Each module maps an (N, C, H, W) feature tensor to a tensor of the same shape,
so it can be dropped anywhere inside a CNN without touching its neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .layers import Conv2d, Mlp2, Tensor

KINDS = ("none", "se", "cbam", "gc")


@dataclass(frozen=True)
class AttentionSpec:
    """Which mechanism to insert and its channel-bottleneck ratio."""
    kind: str = "none"
    reduction: int = 16
    channels: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown attention kind {self.kind!r}; expected one of {KINDS}")
        if self.reduction < 1:
            raise ConfigurationError(f"reduction ratio must be >= 1, got {self.reduction}")

    def with_channels(self, channels: int) -> "AttentionSpec":
        return replace(self, channels=channels)


class IdentityAttention:
    kind = "none"

    def forward(self, f: Tensor) -> Tensor:
        return f

    def params(self) -> list[tuple[str, Tensor]]:
        return []


class SeModule:
    """Channel recalibration: gate each channel by a sigmoid of a bottleneck
    MLP applied to the globally average-pooled channel statistics."""

    kind = "se"

    def __init__(self, channels: int, reduction: int, rng: np.random.Generator):
        self.channels = channels
        self.mlp = Mlp2(channels, reduction, rng)

    def forward(self, f: Tensor) -> Tensor:
        self._check(f)
        gate = T.sigmoid(self.mlp.forward(T.global_pool(f, "avg")))
        return T.mul(f, gate)

    def _check(self, f: Tensor) -> None:
        if f.ndim != 4 or f.shape[1] != self.channels:
            raise DimensionError(f"se expects (N, {self.channels}, H, W), got {f.shape}")

    def params(self) -> list[tuple[str, Tensor]]:
        return self.mlp.params()


class CbamModule:
    """Sequential channel then spatial gating.

    The channel gate is sigmoid(MLP(avg-pooled) + MLP(max-pooled)) with one
    MLP shared between the two pooled paths (a switch allows separate MLPs).
    The spatial gate is a sigmoid of a 7x7 convolution over the concatenated
    [channel-avg, channel-max] maps, padding 3 so H and W are preserved.
    """

    kind = "cbam"

    def __init__(self, channels: int, reduction: int, rng: np.random.Generator,
                 shared_mlp: bool = True, spatial_kernel: int = 7):
        self.channels = channels
        self.mlp = Mlp2(channels, reduction, rng)
        self.mlp_max = self.mlp if shared_mlp else Mlp2(channels, reduction, rng)
        self.shared_mlp = shared_mlp
        self.spatial = Conv2d(2, 1, spatial_kernel, rng, padding=(spatial_kernel - 1) // 2)
        self.bypass = False  # test hook: skip both gates (multiply by 1)

    def channel_forward(self, f: Tensor) -> Tensor:
        self._check(f)
        if self.bypass:
            return f
        gate = T.sigmoid(T.add(self.mlp.forward(T.global_pool(f, "avg")),
                               self.mlp_max.forward(T.global_pool(f, "max"))))
        return T.mul(f, gate)

    def spatial_forward(self, f_ch: Tensor) -> Tensor:
        if self.bypass:
            return f_ch
        pooled = T.concat([T.spatial_pool(f_ch, "avg"), T.spatial_pool(f_ch, "max")], axis=1)
        gate = T.sigmoid(self.spatial.forward(pooled))
        return T.mul(f_ch, gate)

    def forward(self, f: Tensor) -> Tensor:
        return self.spatial_forward(self.channel_forward(f))

    def _check(self, f: Tensor) -> None:
        if f.ndim != 4 or f.shape[1] != self.channels:
            raise DimensionError(f"cbam expects (N, {self.channels}, H, W), got {f.shape}")

    def params(self) -> list[tuple[str, Tensor]]:
        out = [("mlp." + k, v) for k, v in self.mlp.params()]
        if not self.shared_mlp:
            out += [("mlp_max." + k, v) for k, v in self.mlp_max.params()]
        out += [("spatial." + k, v) for k, v in self.spatial.params()]
        return out


class GcModule:
    """Global context: softmax-weighted aggregation of all spatial positions
    into one context vector, a bottleneck transform (1x1 conv, layer norm,
    ReLU, 1x1 conv), and the transformed context added back everywhere.

    The final expansion convolution starts at zero, so a fresh module is the
    exact identity until training moves it.
    """

    kind = "gc"

    def __init__(self, channels: int, reduction: int, rng: np.random.Generator):
        self.channels = channels
        self.hidden = max(1, channels // reduction)
        self.mask = Conv2d(channels, 1, 1, rng)
        self.tfm1 = Conv2d(channels, self.hidden, 1, rng)
        self.ln_scale = Tensor(np.ones(self.hidden), requires_grad=True)
        self.ln_shift = Tensor(np.zeros(self.hidden), requires_grad=True)
        self.tfm2 = Conv2d(self.hidden, channels, 1, rng).zero_()

    def forward(self, f: Tensor) -> Tensor:
        self._check(f)
        n, c, h, w = f.shape
        logits = T.reshape(self.mask.forward(f), (n, 1, h * w))
        weights = T.softmax(logits, axis=2)
        ctx = T.tsum(T.mul(T.reshape(f, (n, c, h * w)), weights), axis=2)
        ctx = T.reshape(ctx, (n, c, 1, 1))
        t = self.tfm1.forward(ctx)
        t = T.reshape(T.layer_norm(T.reshape(t, (n, self.hidden)),
                                   self.ln_scale, self.ln_shift),
                      (n, self.hidden, 1, 1))
        t = self.tfm2.forward(T.relu(t))
        return T.add(f, t)

    def aggregation_weights(self, f: Tensor) -> np.ndarray:
        """Softmax position weights (N, H*W); sums to 1 per sample."""
        n, _, h, w = f.shape
        logits = T.reshape(self.mask.forward(f), (n, 1, h * w))
        return T.softmax(logits, axis=2).data.reshape(n, h * w)

    def _check(self, f: Tensor) -> None:
        if f.ndim != 4 or f.shape[1] != self.channels:
            raise DimensionError(f"gc expects (N, {self.channels}, H, W), got {f.shape}")

    def params(self) -> list[tuple[str, Tensor]]:
        return ([("mask." + k, v) for k, v in self.mask.params()]
                + [("tfm1." + k, v) for k, v in self.tfm1.params()]
                + [("ln.scale", self.ln_scale), ("ln.shift", self.ln_shift)]
                + [("tfm2." + k, v) for k, v in self.tfm2.params()])


def make_attention(spec: AttentionSpec, rng: np.random.Generator | int):
    """Build an initialized attention module for ``spec.channels`` channels."""
    spec.validate()
    if spec.kind == "none":
        return IdentityAttention()
    if spec.channels < 1:
        raise ConfigurationError(f"attention spec needs positive channels, got {spec.channels}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    if spec.kind == "se":
        return SeModule(spec.channels, spec.reduction, rng)
    if spec.kind == "cbam":
        return CbamModule(spec.channels, spec.reduction, rng)
    return GcModule(spec.channels, spec.reduction, rng)
