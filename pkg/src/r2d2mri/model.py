"""Toy U-Net regressor with hand-rolled reverse-mode gradients and Adam.

Everything runs batched in f64 on (B, C, H, W) arrays. Layers cache what
their backward pass needs, so one network instance serves one trainer at a
time. Downsampling is 2x2 average pooling, upsampling nearest-neighbor
followed by a convolution, and the final convolution starts at zero so a
freshly initialized network is the identity correction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import DataError, NumericalError, rng_stream

CKPT_MAGIC = "R2D2CKPT1"
ALPHA_RECIPE = "mean-of-previous-estimate"


class Conv2d:
    """3x3 same-padding convolution with bias."""

    def __init__(self, name: str, c_in: int, c_out: int,
                 rng: Optional[np.random.Generator] = None, zero_init: bool = False):
        self.name = name
        self.c_in = c_in
        self.c_out = c_out
        if zero_init or rng is None:
            self.weight = np.zeros((c_out, c_in, 3, 3))
        else:
            std = math.sqrt(2.0 / (c_in * 9))
            self.weight = std * rng.standard_normal((c_out, c_in, 3, 3))
        self.bias = np.zeros(c_out)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._cols = None
        self._in_shape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, h, w = x.shape
        pad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        win = sliding_window_view(pad, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
        cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(
            b, c * 9, h * w
        )
        self._cols = cols
        self._in_shape = x.shape
        wmat = self.weight.reshape(self.c_out, c * 9)
        out = wmat @ cols + self.bias[None, :, None]
        return out.reshape(b, self.c_out, h, w)

    def backward(self, g: np.ndarray) -> np.ndarray:
        if self._cols is None:
            raise NumericalError("backward called before forward")
        b, c, h, w = self._in_shape
        gmat = np.ascontiguousarray(g.reshape(b, self.c_out, h * w))
        self.grad_weight += (
            (gmat @ self._cols.transpose(0, 2, 1)).sum(axis=0).reshape(self.weight.shape)
        )
        self.grad_bias += gmat.sum(axis=(0, 2))
        wmat = self.weight.reshape(self.c_out, c * 9)
        dcols = (wmat.T @ gmat).reshape(b, c, 3, 3, h, w)
        dpad = np.zeros((b, c, h + 2, w + 2))
        for di in range(3):
            for dj in range(3):
                dpad[:, :, di : di + h, dj : dj + w] += dcols[:, :, di, dj]
        return dpad[:, :, 1 : h + 1, 1 : w + 1]

    def params(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]

    def grads(self):
        return [self.grad_weight, self.grad_bias]

    def set_params(self, weight: np.ndarray, bias: np.ndarray) -> None:
        if weight.shape != self.weight.shape or bias.shape != self.bias.shape:
            raise DataError(f"{self.name}: checkpoint tensor shape mismatch")
        self.weight = weight
        self.bias = bias


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0  # subgradient 0 at the kink
        return np.where(self._mask, x, 0.0)

    def backward(self, g: np.ndarray) -> np.ndarray:
        return np.where(self._mask, g, 0.0)


class AvgPool2:
    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, h, w = x.shape
        return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(self, g: np.ndarray) -> np.ndarray:
        return np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0


class UpsampleNearest2:
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)

    def backward(self, g: np.ndarray) -> np.ndarray:
        b, c, h, w = g.shape
        return g.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


class _Block:
    """conv-relu-conv-relu."""

    def __init__(self, name, c_in, c_out, rng):
        self.conv1 = Conv2d(f"{name}.conv1", c_in, c_out, rng)
        self.conv2 = Conv2d(f"{name}.conv2", c_out, c_out, rng)
        self.act1 = ReLU()
        self.act2 = ReLU()

    def forward(self, x):
        return self.act2.forward(self.conv2.forward(self.act1.forward(self.conv1.forward(x))))

    def backward(self, g):
        return self.conv1.backward(self.act1.backward(self.conv2.backward(self.act2.backward(g))))

    def convs(self):
        return [self.conv1, self.conv2]


@dataclass(frozen=True)
class UNetArch:
    in_channels: int = 2
    out_channels: int = 1
    base_channels: int = 8
    depth: int = 2

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "base_channels": self.base_channels,
            "depth": self.depth,
        }

    @staticmethod
    def from_dict(d: dict) -> "UNetArch":
        return UNetArch(
            in_channels=int(d["in_channels"]),
            out_channels=int(d["out_channels"]),
            base_channels=int(d["base_channels"]),
            depth=int(d["depth"]),
        )


def expected_param_count(arch: UNetArch) -> int:
    """Closed-form parameter count: each 3x3 conv a->b holds (9a + 1)b values.

    The network stacks, for channel widths c_l = base * 2^l: encoder blocks
    (two convs each), a bottleneck block, and per decoder level one up-conv
    plus a block on the concatenated channels, then a final conv to the
    output channels.
    """
    conv = lambda a, b: (9 * a + 1) * b
    c = [arch.base_channels * 2**l for l in range(arch.depth + 1)]
    total = conv(arch.in_channels, c[0]) + conv(c[0], c[0])
    for l in range(1, arch.depth):
        total += conv(c[l - 1], c[l]) + conv(c[l], c[l])
    total += conv(c[arch.depth - 1], c[arch.depth]) + conv(c[arch.depth], c[arch.depth])
    for l in range(arch.depth - 1, -1, -1):
        total += conv(c[l + 1], c[l])  # up-conv
        total += conv(2 * c[l], c[l]) + conv(c[l], c[l])
    total += conv(c[0], arch.out_channels)
    return total


class UNet:
    """Contracting/expanding convolutional net with skip concatenations."""

    def __init__(self, arch: UNetArch = UNetArch(), seed: int = 0):
        if arch.depth < 1:
            raise DataError(f"depth must be >= 1, got {arch.depth}")
        self.arch = arch
        rng = rng_stream(seed, 0)
        c = [arch.base_channels * 2**l for l in range(arch.depth + 1)]
        self.enc = [_Block("enc0", arch.in_channels, c[0], rng)]
        for l in range(1, arch.depth):
            self.enc.append(_Block(f"enc{l}", c[l - 1], c[l], rng))
        self.pools = [AvgPool2() for _ in range(arch.depth)]
        self.bottleneck = _Block("bottleneck", c[arch.depth - 1], c[arch.depth], rng)
        self.ups = []
        self.upconvs = []
        self.dec = []
        for l in range(arch.depth - 1, -1, -1):
            self.ups.append(UpsampleNearest2())
            self.upconvs.append(Conv2d(f"up{l}", c[l + 1], c[l], rng))
            self.dec.append(_Block(f"dec{l}", 2 * c[l], c[l], rng))
        self.final = Conv2d("final", c[0], arch.out_channels, zero_init=True)

    # --- plumbing ----------------------------------------------------------

    def _convs(self) -> List[Conv2d]:
        convs: List[Conv2d] = []
        for block in self.enc:
            convs.extend(block.convs())
        convs.extend(self.bottleneck.convs())
        for upconv, block in zip(self.upconvs, self.dec):
            convs.append(upconv)
            convs.extend(block.convs())
        convs.append(self.final)
        return convs

    def named_params(self):
        pairs = []
        for conv in self._convs():
            pairs.extend(conv.params())
        return pairs

    def param_arrays(self) -> List[np.ndarray]:
        return [arr for _, arr in self.named_params()]

    def grad_arrays(self) -> List[np.ndarray]:
        grads = []
        for conv in self._convs():
            grads.extend(conv.grads())
        return grads

    def zero_grad(self) -> None:
        for conv in self._convs():
            conv.grad_weight[:] = 0.0
            conv.grad_bias[:] = 0.0

    def param_count(self) -> int:
        return sum(arr.size for arr in self.param_arrays())

    # --- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        """(B, in_channels, H, W) -> (B, out_channels, H, W)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.arch.in_channels:
            raise DataError(f"expected (B, {self.arch.in_channels}, H, W), got {x.shape}")
        div = 2**self.arch.depth
        if x.shape[2] % div or x.shape[3] % div:
            raise DataError(f"H and W must be divisible by {div}, got {x.shape[2:]}" )
        skips = []
        for block, pool in zip(self.enc, self.pools):
            x = block.forward(x)
            skips.append(x)
            x = pool.forward(x)
        x = self.bottleneck.forward(x)
        for up, upconv, block, skip in zip(self.ups, self.upconvs, self.dec, reversed(skips)):
            x = upconv.forward(up.forward(x))
            x = np.concatenate([skip, x], axis=1)
            x = block.forward(x)
        return self.final.forward(x)

    def backward(self, g: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns the input gradient."""
        g = self.final.backward(np.asarray(g, dtype=np.float64))
        skip_grads = []
        for up, upconv, block in zip(
            reversed(self.ups), reversed(self.upconvs), reversed(self.dec)
        ):
            g = block.backward(g)
            c_skip = g.shape[1] // 2
            skip_grads.append(g[:, :c_skip])
            g = up.backward(upconv.backward(g[:, c_skip:]))
        g = self.bottleneck.backward(g)
        for block, pool, skip_g in zip(
            reversed(self.enc), reversed(self.pools), reversed(skip_grads)
        ):
            g = block.backward(pool.backward(g) + skip_g)
        return g

    def apply(self, r: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Single-sample two-channel application: (r, x) -> correction image."""
        inp = np.stack([r, x])[None]
        return self.forward(inp)[0, 0]


class GradientStepModel:
    """Network-free oracle G(r, x) = gamma * r, a classical gradient step."""

    def __init__(self, gamma: float):
        if not 0.0 <= gamma < 2.0:
            raise DataError(f"gamma must be in [0, 2), got {gamma}")
        self.gamma = gamma

    def apply(self, r: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.gamma * np.asarray(r, dtype=np.float64)


class Adam:
    """Standard bias-corrected Adam over a fixed list of parameter arrays."""

    def __init__(self, shapes: Sequence[tuple], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise DataError("parameter/gradient list length mismatch")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NumericalError("non-finite gradient")
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def l1_loss(pred: np.ndarray, target: np.ndarray):
    """Sum of absolute errors and its subgradient (0 at ties)."""
    diff = pred - target
    return float(np.abs(diff).sum()), np.sign(diff)


# --- checkpoint container ---------------------------------------------------


def save_checkpoint(path, net: UNet, stage: int, loss_history: Sequence[float]) -> None:
    """JSON header line + concatenated f32 tensors in declared order."""
    named = net.named_params()
    header = {
        "magic": CKPT_MAGIC,
        "arch": net.arch.to_dict(),
        "stage": int(stage),
        "alpha_recipe": ALPHA_RECIPE,
        "loss_history": [float(v) for v in loss_history],
        "dtype": "f32le",
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in named],
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header, separators=(",", ":")) + "\n").encode("utf-8"))
        for _, arr in named:
            f.write(arr.astype("<f4").tobytes())


def load_checkpoint(path):
    """Returns (net, stage, loss_history); parameters are the stored f32 values."""
    with open(path, "rb") as f:
        line = f.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: unreadable checkpoint header") from exc
        if header.get("magic") != CKPT_MAGIC:
            raise DataError(f"{path}: magic mismatch (expected {CKPT_MAGIC})")
        payload = f.read()
    arch = UNetArch.from_dict(header["arch"])
    net = UNet(arch)
    named = net.named_params()
    declared = header["tensors"]
    if [d["name"] for d in declared] != [n for n, _ in named]:
        raise DataError(f"{path}: tensor list does not match architecture")
    offset = 0
    by_name = {}
    for decl in declared:
        shape = tuple(decl["shape"])
        count = int(np.prod(shape)) if shape else 1
        chunk = payload[offset : offset + 4 * count]
        if len(chunk) != 4 * count:
            raise DataError(f"{path}: truncated payload")
        by_name[decl["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(np.float64)
        offset += 4 * count
    if offset != len(payload):
        raise DataError(f"{path}: trailing bytes in payload")
    for conv in net._convs():
        conv.set_params(by_name[f"{conv.name}.weight"], by_name[f"{conv.name}.bias"])
    return net, int(header["stage"]), [float(v) for v in header.get("loss_history", [])]
