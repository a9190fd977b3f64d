"""18-layer residual network with an attention module in every basic block.

The attention module sits after the second batch norm and before the residual
addition, identically in all eight blocks; with kind "none" the network is the
plain reference architecture.  The head is a global average pool feeding a
2-logit linear classifier, so any input of at least 32x32 works.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import tensor as T
from .attention import AttentionSpec, make_attention
from .errors import DimensionError
from .layers import BatchNorm2d, Conv2d, Linear, Tensor, load_checkpoint, save_checkpoint

STAGE_WIDTHS = (64, 128, 256, 512)
BLOCKS_PER_STAGE = 2
NUM_CLASSES = 2
MIN_INPUT = 32


class BasicBlock:
    """conv-bn-relu-conv-bn, attention, residual add, relu."""

    def __init__(self, in_ch: int, out_ch: int, stride: int,
                 attn_spec: AttentionSpec, rng: np.random.Generator,
                 attn_rng: np.random.Generator):
        self.conv1 = Conv2d(in_ch, out_ch, 3, rng, stride=stride, padding=1, bias=False)
        self.bn1 = BatchNorm2d(out_ch)
        self.conv2 = Conv2d(out_ch, out_ch, 3, rng, stride=1, padding=1, bias=False)
        self.bn2 = BatchNorm2d(out_ch)
        self.attn = make_attention(attn_spec.with_channels(out_ch), attn_rng)
        if stride != 1 or in_ch != out_ch:
            self.shortcut_conv = Conv2d(in_ch, out_ch, 1, rng, stride=stride, bias=False)
            self.shortcut_bn = BatchNorm2d(out_ch)
        else:
            self.shortcut_conv = None
            self.shortcut_bn = None

    def forward(self, x: Tensor, training: bool) -> Tensor:
        h = T.relu(self.bn1.forward(self.conv1.forward(x), training))
        h = self.bn2.forward(self.conv2.forward(h), training)
        h = self.attn.forward(h)
        if self.shortcut_conv is not None:
            x = self.shortcut_bn.forward(self.shortcut_conv.forward(x), training)
        return T.relu(T.add(h, x))

    def params(self) -> list[tuple[str, Tensor]]:
        out = [("conv1.weight", self.conv1.weight)]
        out += [("bn1." + k, v) for k, v in self.bn1.params()]
        out += [("conv2.weight", self.conv2.weight)]
        out += [("bn2." + k, v) for k, v in self.bn2.params()]
        out += [("attn." + k, v) for k, v in self.attn.params()]
        if self.shortcut_conv is not None:
            out += [("shortcut.conv.weight", self.shortcut_conv.weight)]
            out += [("shortcut.bn." + k, v) for k, v in self.shortcut_bn.params()]
        return out

    def state(self) -> list[tuple[str, np.ndarray]]:
        out = [("bn1." + k, v) for k, v in self.bn1.state()]
        out += [("bn2." + k, v) for k, v in self.bn2.state()]
        if self.shortcut_bn is not None:
            out += [("shortcut.bn." + k, v) for k, v in self.shortcut_bn.state()]
        return out


class ResNet18:
    def __init__(self, attention: AttentionSpec, rng_seed: int,
                 width_divisor: int = 1):
        attention.validate()
        if width_divisor < 1:
            raise DimensionError(f"width_divisor must be >= 1, got {width_divisor}")
        self.attention_spec = attention
        self.width_divisor = width_divisor
        widths = [max(1, w // width_divisor) for w in STAGE_WIDTHS]
        self.widths = widths
        # separate streams so adding attention leaves backbone init untouched
        rng = np.random.default_rng([int(rng_seed), 0])
        attn_rng = np.random.default_rng([int(rng_seed), 1])

        self.stem_conv = Conv2d(3, widths[0], 7, rng, stride=2, padding=3, bias=False)
        self.stem_bn = BatchNorm2d(widths[0])
        self.stages: list[list[BasicBlock]] = []
        in_ch = widths[0]
        for stage_idx, out_ch in enumerate(widths):
            stride = 1 if stage_idx == 0 else 2
            blocks = []
            for b in range(BLOCKS_PER_STAGE):
                blocks.append(BasicBlock(in_ch, out_ch, stride if b == 0 else 1,
                                         attention, rng, attn_rng))
                in_ch = out_ch
            self.stages.append(blocks)
        self.fc = Linear(widths[-1], NUM_CLASSES, rng)

    # ------------------------------------------------------------------
    def _check_input(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != 3:
            raise DimensionError(f"expected (N, 3, H, W) input, got {x.shape}")
        if x.shape[2] < MIN_INPUT or x.shape[3] < MIN_INPUT:
            raise DimensionError(
                f"input spatial extents must be >= {MIN_INPUT}, got {x.shape[2]}x{x.shape[3]}")

    def stem(self, x: Tensor, training: bool) -> Tensor:
        h = T.relu(self.stem_bn.forward(self.stem_conv.forward(x), training))
        return T.pool2d(h, "max", window=3, stride=2, padding=1)

    def features(self, x: Tensor, training: bool = False) -> Tensor:
        """Output of the last basic block (post-attention, post-add, post-relu)."""
        self._check_input(x)
        h = self.stem(x, training)
        for blocks in self.stages:
            for block in blocks:
                h = block.forward(h, training)
        return h

    def head(self, feats: Tensor) -> Tensor:
        pooled = T.global_pool(feats, "avg")
        return self.fc.forward(T.reshape(pooled, (feats.shape[0], self.widths[-1])))

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        return self.head(self.features(x, training))

    def forward_with_features(self, x: Tensor, training: bool = False) -> tuple[Tensor, Tensor]:
        """Forward pass that also returns the last conv feature map with its
        gradient retained, for activation-map attribution."""
        feats = self.features(x, training)
        feats.retain_grad()
        return self.head(feats), feats

    # ------------------------------------------------------------------
    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        out["stem.conv.weight"] = self.stem_conv.weight
        for k, v in self.stem_bn.params():
            out["stem.bn." + k] = v
        for s, blocks in enumerate(self.stages, start=1):
            for b, block in enumerate(blocks, start=1):
                for k, v in block.params():
                    out[f"layer{s}.block{b}.{k}"] = v
        for k, v in self.fc.params():
            out["head.fc." + k] = v
        return out

    def named_state(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for k, v in self.stem_bn.state():
            out["stem.bn." + k] = v
        for s, blocks in enumerate(self.stages, start=1):
            for b, block in enumerate(blocks, start=1):
                for k, v in block.state():
                    out[f"layer{s}.block{b}.{k}"] = v
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_params().values())

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.grad = None

    def all_batchnorms(self) -> list[BatchNorm2d]:
        bns = [self.stem_bn]
        for blocks in self.stages:
            for block in blocks:
                bns.append(block.bn1)
                bns.append(block.bn2)
                if block.shortcut_bn is not None:
                    bns.append(block.shortcut_bn)
        return bns

    # ------------------------------------------------------------------
    def meta(self) -> dict:
        return {
            "arch": "resnet18",
            "attention": self.attention_spec.kind,
            "reduction": self.attention_spec.reduction,
            "width_divisor": self.width_divisor,
        }

    def save(self, path: str | Path) -> None:
        arrays = {k: v.data for k, v in self.named_params().items()}
        arrays.update(self.named_state())
        save_checkpoint(path, arrays, meta=self.meta())

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.named_params()
        state = self.named_state()
        expected = set(params) | set(state)
        got = set(arrays)
        if expected != got:
            missing = sorted(expected - got)[:5]
            extra = sorted(got - expected)[:5]
            raise DimensionError(f"checkpoint mismatch: missing {missing}, unexpected {extra}")
        for name, tensor in params.items():
            if arrays[name].shape != tensor.data.shape:
                raise DimensionError(
                    f"checkpoint {name}: shape {arrays[name].shape} != {tensor.data.shape}")
            tensor.data = arrays[name].copy()
        # running stats live next to their batchnorm layers
        self.stem_bn.load_state("running_mean", arrays["stem.bn.running_mean"])
        self.stem_bn.load_state("running_var", arrays["stem.bn.running_var"])
        for s, blocks in enumerate(self.stages, start=1):
            for b, block in enumerate(blocks, start=1):
                prefix = f"layer{s}.block{b}."
                for bn_name, bn in (("bn1", block.bn1), ("bn2", block.bn2),
                                    ("shortcut.bn", block.shortcut_bn)):
                    if bn is None:
                        continue
                    bn.load_state("running_mean", arrays[prefix + bn_name + ".running_mean"])
                    bn.load_state("running_var", arrays[prefix + bn_name + ".running_var"])


def build_resnet18(attention: AttentionSpec, rng_seed: int,
                   width_divisor: int = 1) -> ResNet18:
    """Fully initialized model; identical seeds give identical parameters."""
    return ResNet18(attention, rng_seed, width_divisor=width_divisor)


def load_model(path: str | Path) -> ResNet18:
    meta, arrays = load_checkpoint(path)
    spec = AttentionSpec(kind=meta["attention"], reduction=int(meta["reduction"]))
    model = build_resnet18(spec, rng_seed=0, width_divisor=int(meta["width_divisor"]))
    model.load_arrays(arrays)
    return model
