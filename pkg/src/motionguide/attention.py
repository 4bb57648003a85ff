"""Attention modulation: gradient-based latent updates and biased scores.

Two mechanisms over the same guidance mask:
  - gradient mode ("unet"): L = 1 - (beta/P) * sum(A . G) with A the
    row-softmax attention map; latents step down the analytic gradient;
  - score mode ("dit"): logits are scaled elementwise by (1 + beta * G)
    before the softmax.

The desk-scale backend maps latents to (Q, K) through fixed seeded
linear projections, so gradients are exact and finite-difference
checkable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NonFiniteGradient, ShapeMismatch
from .features import FeatureVolume
from .guidance import DEFAULT_ALPHA, build_guidance
from .layout import SceneLayout
from .masks import TokenGrid


@dataclass(frozen=True)
class AttentionContext:
    q: np.ndarray  # (T, d)
    k: np.ndarray  # (T, d)
    grid: TokenGrid | None = None

    def __post_init__(self) -> None:
        if self.q.ndim != 2 or self.q.shape != self.k.shape:
            raise ShapeMismatch(f"Q {self.q.shape} and K {self.k.shape} must match")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.k))):
            raise ValueError("Q/K contain non-finite values")

    @property
    def tokens(self) -> int:
        return self.q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True)
class GuidanceConfig:
    beta: float = 10.0
    step_range: tuple[int, int] = (1, 25)
    mode: str = "unet"          # unet | dit
    eta: float = 0.1
    pixel_normalizer: int | None = None  # P; defaults to total token count

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.mode not in ("unet", "dit"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.step_range[0] < 1 or self.step_range[1] < self.step_range[0]:
            raise ValueError(f"bad step range {self.step_range}")


UNET_DEFAULTS = GuidanceConfig(beta=10.0, step_range=(1, 25), mode="unet")
DIT_DEFAULTS = GuidanceConfig(beta=0.15, step_range=(1, 10), mode="dit")


@dataclass(frozen=True)
class ToyBackend:
    """Fixed seeded linear token -> (Q, K) projection."""

    w_q: np.ndarray  # (C, d)
    w_k: np.ndarray  # (C, d)

    @classmethod
    def seeded(cls, channels: int, head_dim: int, seed: int = 0) -> "ToyBackend":
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(channels)
        return cls(w_q=rng.standard_normal((channels, head_dim)) * scale,
                   w_k=rng.standard_normal((channels, head_dim)) * scale)

    def project(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = z.reshape(-1, z.shape[-1])
        return x @ self.w_q, x @ self.w_k


@dataclass(frozen=True)
class LatentState:
    z: np.ndarray  # (F, H, W, C) float64
    backend: ToyBackend

    def context(self, grid: TokenGrid | None = None) -> AttentionContext:
        q, k = self.backend.project(self.z)
        return AttentionContext(q=q, k=k, grid=grid)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def attention_map(ctx: AttentionContext) -> np.ndarray:
    """Row-stochastic softmax(Q K^T / sqrt(d))."""
    logits = (ctx.q @ ctx.k.T) / np.sqrt(ctx.head_dim)
    return _softmax_rows(logits)


def unet_loss(attn: np.ndarray, mask: np.ndarray, beta: float,
              pixel_normalizer: int | None = None) -> float:
    """L = 1 - (beta / P) * sum(A . G)."""
    if attn.shape != mask.shape:
        raise ShapeMismatch(f"A {attn.shape} vs G {mask.shape}")
    p = attn.shape[0] if pixel_normalizer is None else pixel_normalizer
    return float(1.0 - (beta / p) * np.sum(attn * mask))


def guidance_schedule(step: int, config: GuidanceConfig) -> bool:
    """True iff guidance applies at this (1-based) denoising step."""
    if step < 1:
        raise ValueError("step must be >= 1")
    lo, hi = config.step_range
    return lo <= step <= hi


def unet_loss_gradient(state: LatentState, mask: np.ndarray, beta: float,
                       pixel_normalizer: int | None = None
                       ) -> tuple[float, np.ndarray]:
    """Analytic (loss, dL/dz) through the softmax and the linear backend."""
    q, k = state.backend.project(state.z)
    d = q.shape[1]
    attn = _softmax_rows((q @ k.T) / np.sqrt(d))
    if attn.shape != mask.shape:
        raise ShapeMismatch(f"A {attn.shape} vs G {mask.shape}")
    p = attn.shape[0] if pixel_normalizer is None else pixel_normalizer
    loss = float(1.0 - (beta / p) * np.sum(attn * mask))
    d_attn = -(beta / p) * mask
    # Softmax rows: dS = A . (dA - rowsum(dA . A)).
    d_logits = attn * (d_attn - np.sum(d_attn * attn, axis=1, keepdims=True))
    d_logits /= np.sqrt(d)
    d_q = d_logits @ k
    d_k = d_logits.T @ q
    d_x = d_q @ state.backend.w_q.T + d_k @ state.backend.w_k.T
    grad = d_x.reshape(state.z.shape)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient contains non-finite values")
    return loss, grad


def unet_guidance_step(state: LatentState, mask: np.ndarray,
                       config: GuidanceConfig, step: int) -> LatentState:
    """z <- z - eta * dL/dz inside the step range; identity outside it."""
    if config.mode != "unet":
        raise ValueError("unet_guidance_step requires unet mode")
    if not guidance_schedule(step, config):
        return state
    _, grad = unet_loss_gradient(state, mask, config.beta, config.pixel_normalizer)
    return replace(state, z=state.z - config.eta * grad)


def dit_biased_attention(ctx: AttentionContext, mask: np.ndarray,
                         beta: float) -> np.ndarray:
    """softmax(Q K^T (1 + beta * G) / sqrt(d)) row-wise.

    The bias multiplies raw logits, so a positive beta * G lowers scores
    with negative logits; this is deliberate (the bias is a scale, not an
    additive term).
    """
    logits = ctx.q @ ctx.k.T
    if logits.shape != mask.shape:
        raise ShapeMismatch(f"logits {logits.shape} vs G {mask.shape}")
    return _softmax_rows(logits * (1.0 + beta * mask) / np.sqrt(ctx.head_dim))


@dataclass
class TraceRow:
    step: int
    loss: float
    fg_mass: float
    wall_ms: float


@dataclass
class DenoiseTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["step,loss,fg_mass,wall_ms"]
        lines += [f"{r.step},{r.loss:.9g},{r.fg_mass:.9g},{r.wall_ms:.3f}"
                  for r in self.rows]
        return "\n".join(lines) + "\n"


def run_toy_denoise(layout: SceneLayout, features: FeatureVolume,
                    config: GuidanceConfig, steps: int,
                    alpha: float = DEFAULT_ALPHA, head_dim: int = 8,
                    seed: int = 0) -> DenoiseTrace:
    """Iterate guided steps on the synthetic backend, tracing loss and the
    attention mass collected on the mask's support."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    trace = DenoiseTrace()
    if steps == 0:
        return trace
    bundle = build_guidance(layout, features, alpha)
    mask = bundle.composed.to_dense()
    support = mask > 0
    backend = ToyBackend.seeded(features.channels, head_dim, seed)
    state = LatentState(z=features.data.astype(np.float64), backend=backend)
    for step in range(1, steps + 1):
        start = time.perf_counter()
        if config.mode == "unet":
            state = unet_guidance_step(state, mask, config, step)
            ctx = state.context(bundle.grid)
            attn = attention_map(ctx)
        else:
            ctx = state.context(bundle.grid)
            beta = config.beta if guidance_schedule(step, config) else 0.0
            attn = dit_biased_attention(ctx, mask, beta)
        loss = unet_loss(attn, mask, config.beta, config.pixel_normalizer)
        fg_mass = float(attn[support].sum())
        trace.rows.append(TraceRow(step=step, loss=loss, fg_mass=fg_mass,
                                   wall_ms=(time.perf_counter() - start) * 1e3))
    return trace
