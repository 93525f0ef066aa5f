"""Tiny differentiable per-pixel segmentation model.

Two 3x3 convolutions with same-padding (ReLU between, sigmoid head), trained
with smoothed Dice loss. Parameters live in a single flat float64 vector so the
federated layer can treat models as plain vectors. The backward pass is written
out by hand and checked against finite differences in the test suite.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.special import expit

from .masks import ShapeMismatchError, validate_mask
from .rng import INIT_STREAM, substream

DICE_SMOOTHING = 1.0


@dataclass(frozen=True)
class ArchDescriptor:
    """Shape of the model: in_channels -> hidden_channels -> 1, 3x3 kernels."""

    in_channels: int = 1
    hidden_channels: int = 4

    def __post_init__(self) -> None:
        if self.in_channels != 1:
            raise ValueError("only single-channel images are supported")
        if self.hidden_channels < 1:
            raise ValueError("hidden_channels must be >= 1")

    @property
    def param_count(self) -> int:
        c = self.hidden_channels
        return (9 * c + c) + (9 * c + 1)

    def unpack(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        """Split a flat vector into (k1 (C,3,3), b1 (C,), k2 (C,3,3), b2)."""
        c = self.hidden_channels
        if params.shape != (self.param_count,):
            raise ValueError(f"expected {self.param_count} parameters, got shape {params.shape}")
        k1 = params[: 9 * c].reshape(c, 3, 3)
        b1 = params[9 * c : 10 * c]
        k2 = params[10 * c : 19 * c].reshape(c, 3, 3)
        b2 = float(params[19 * c])
        return k1, b1, k2, b2


def infer_arch(params: np.ndarray) -> ArchDescriptor:
    """Recover the architecture from a flat vector's length (19*C + 1 entries)."""
    n = params.size
    c = (n - 1) // 19
    if c < 1 or 19 * c + 1 != n:
        raise ValueError(f"no architecture has {n} parameters")
    return ArchDescriptor(hidden_channels=c)


def init_params(arch: ArchDescriptor, seed: int) -> np.ndarray:
    """Deterministic init: kernels uniform in +-1/sqrt(fan_in), biases zero."""
    rng = substream(seed, INIT_STREAM)
    c = arch.hidden_channels
    bound1 = 1.0 / np.sqrt(9.0 * arch.in_channels)
    bound2 = 1.0 / np.sqrt(9.0 * c)
    params = np.zeros(arch.param_count, dtype=np.float64)
    params[: 9 * c] = rng.uniform(-bound1, bound1, size=9 * c)
    params[10 * c : 19 * c] = rng.uniform(-bound2, bound2, size=9 * c)
    return params


def _conv3x3(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Same-padded 3x3 cross-correlation.

    x: (C_in, H, W); kernels: (C_out, C_in, 3, 3) -> (C_out, H, W).
    """
    c_in, height, width = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.zeros((kernels.shape[0], height, width))
    for di in range(3):
        for dj in range(3):
            window = xp[:, di : di + height, dj : dj + width]
            out += np.einsum("oc,chw->ohw", kernels[:, :, di, dj], window)
    return out


def _forward_full(params: np.ndarray, image: np.ndarray, arch: ArchDescriptor):
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3 or x.shape[1] < 3:
        raise ValueError(f"image must be 2D and at least 3x3, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("image contains non-finite values")
    k1, b1, k2, b2 = arch.unpack(params)
    z1 = _conv3x3(x[None], k1[:, None]) + b1[:, None, None]
    a1 = np.maximum(z1, 0.0)
    z2 = _conv3x3(a1, k2[None])[0] + b2
    prob = expit(z2)
    return prob, (x, z1, a1, z2)


def forward(params: np.ndarray, image: np.ndarray, arch: ArchDescriptor | None = None) -> np.ndarray:
    """Per-pixel foreground probabilities, same H x W as the input image."""
    arch = arch or infer_arch(params)
    prob, _ = _forward_full(params, image, arch)
    return prob


def dice_loss(pred: np.ndarray, mask: np.ndarray) -> float:
    """Smoothed Dice loss 1 - (2*sum(p*m) + eps) / (sum(p) + sum(m) + eps).

    The smoothing term (eps = 1) keeps the loss and its gradient defined for
    empty masks. Values lie in [0, 1).
    """
    p = np.asarray(pred, dtype=np.float64)
    m = validate_mask(mask).astype(np.float64)
    if p.shape != m.shape:
        raise ShapeMismatchError(f"pred shape {p.shape} != mask shape {m.shape}")
    intersection = float((p * m).sum())
    total = float(p.sum() + m.sum())
    return 1.0 - (2.0 * intersection + DICE_SMOOTHING) / (total + DICE_SMOOTHING)


def backward(params: np.ndarray, image: np.ndarray, mask: np.ndarray, arch: ArchDescriptor | None = None) -> np.ndarray:
    """Analytic gradient of dice_loss(forward(params, image), mask) w.r.t. params."""
    arch = arch or infer_arch(params)
    prob, (x, z1, a1, _) = _forward_full(params, image, arch)
    m = validate_mask(mask).astype(np.float64)
    if prob.shape != m.shape:
        raise ShapeMismatchError(f"image shape {prob.shape} != mask shape {m.shape}")
    height, width = prob.shape
    c = arch.hidden_channels

    intersection = float((prob * m).sum())
    total = float(prob.sum() + m.sum())
    denom = total + DICE_SMOOTHING
    # d(dice_loss)/dp: quotient rule on (2I + eps)/(sums + eps)
    dl_dp = (2.0 * intersection + DICE_SMOOTHING) / denom**2 - 2.0 * m / denom
    g2 = dl_dp * prob * (1.0 - prob)

    _, _, k2, _ = arch.unpack(params)
    a1p = np.pad(a1, ((0, 0), (1, 1), (1, 1)))
    gk2 = np.zeros((c, 3, 3))
    da1p = np.zeros_like(a1p)
    for di in range(3):
        for dj in range(3):
            window = a1p[:, di : di + height, dj : dj + width]
            gk2[:, di, dj] = np.einsum("chw,hw->c", window, g2)
            da1p[:, di : di + height, dj : dj + width] += k2[:, di, dj, None, None] * g2
    gb2 = float(g2.sum())

    dz1 = da1p[:, 1 : height + 1, 1 : width + 1] * (z1 > 0.0)
    gb1 = dz1.sum(axis=(1, 2))
    xp = np.pad(x, 1)
    gk1 = np.zeros((c, 3, 3))
    for di in range(3):
        for dj in range(3):
            window = xp[di : di + height, dj : dj + width]
            gk1[:, di, dj] = np.einsum("chw,hw->c", dz1, window)

    grad = np.empty_like(params)
    grad[: 9 * c] = gk1.ravel()
    grad[9 * c : 10 * c] = gb1
    grad[10 * c : 19 * c] = gk2.ravel()
    grad[19 * c] = gb2
    return grad


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyperparameters only; per-round state is built via init_optimizer_state."""

    kind: Literal["sgd", "adamw"] = "adamw"
    learning_rate: float = 0.0001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "adamw"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")


@dataclass(frozen=True)
class OptimizerState:
    """Optimizer with per-parameter state; moments are present only for AdamW."""

    config: OptimizerConfig
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def init_optimizer_state(config: OptimizerConfig, n_params: int) -> OptimizerState:
    if config.kind == "sgd":
        return OptimizerState(config=config)
    zeros = np.zeros(n_params, dtype=np.float64)
    return OptimizerState(config=config, m=zeros, v=zeros.copy())


def optimizer_step(state: OptimizerState, params: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, OptimizerState]:
    """One optimizer update; returns (new params, new state).

    SGD: params - lr * grad. AdamW: bias-corrected Adam moments with decoupled
    weight decay applied directly to the parameters.
    """
    if params.shape != grad.shape:
        raise ShapeMismatchError(f"params shape {params.shape} != grad shape {grad.shape}")
    cfg = state.config
    if cfg.kind == "sgd":
        return params - cfg.learning_rate * grad, state

    t = state.step + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    update = m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * params
    new_params = params - cfg.learning_rate * update
    return new_params, replace(state, step=t, m=m, v=v)


def save_params(path: str | Path, params: np.ndarray) -> None:
    """Dump a flat float64 vector: uint64 little-endian length, then LE values."""
    vec = np.ascontiguousarray(params, dtype="<f8")
    if vec.ndim != 1:
        raise ValueError("params must be a flat vector")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", vec.size))
        fh.write(vec.tobytes())


def load_params(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ValueError("truncated checkpoint: missing length header")
    (n,) = struct.unpack("<Q", data[:8])
    if len(data) != 8 + 8 * n:
        raise ValueError(f"checkpoint length mismatch: header says {n} values")
    return np.frombuffer(data[8:], dtype="<f8").astype(np.float64)
