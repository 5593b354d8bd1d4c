"""Gaussian prior/recognition networks, reparameterized sampling, KL, and
the two variance regularizers that shape the prior distributions.

All functions accept either a single example (1-D mu/log-variance) or a
batch (2-D, one row per example); batched scalars are averaged over the
batch so loss scale is independent of batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ContractError, Tensor

LOG_VAR_CLAMP = 20.0
PRECISION_CLAMP = 1e-3

NETWORK_KINDS = (
    "persona_prior",
    "response_prior",
    "persona_recognition",
    "response_recognition",
)


@dataclass
class GaussianParams:
    """Mean and log-variance of a diagonal Gaussian (possibly batched)."""

    mu: Tensor
    log_var: Tensor

    def __post_init__(self):
        if self.mu.shape != self.log_var.shape:
            raise ContractError(
                f"GaussianParams: mu {self.mu.shape} vs log_var {self.log_var.shape}"
            )

    @property
    def dim(self):
        return self.mu.shape[-1]


class LatentNetwork:
    """Single-layer MLP emitting (mu, log sigma^2) for one latent distribution."""

    def __init__(self, kind: str, in_dim: int, latent_dim: int, rng: np.random.Generator):
        if kind not in NETWORK_KINDS:
            raise ContractError(f"unknown latent network kind {kind!r}")
        self.kind = kind
        self.in_dim = in_dim
        self.latent_dim = latent_dim
        scale = 1.0 / np.sqrt(in_dim)
        self.weight = Tensor(rng.normal(0.0, scale, size=(2 * latent_dim, in_dim)), requires_grad=True)
        self.bias = Tensor(np.zeros(2 * latent_dim), requires_grad=True)

    def parameters(self):
        return {f"{self.kind}.weight": self.weight, f"{self.kind}.bias": self.bias}


def gaussian_from_net(net: LatentNetwork, inp: Tensor) -> GaussianParams:
    """Affine map to (mu, log sigma^2); log-variance clamped to +-20."""
    inp = inp if isinstance(inp, Tensor) else Tensor(inp)
    if inp.shape[-1] != net.in_dim:
        raise ContractError(
            f"{net.kind}: input length {inp.shape[-1]} != expected {net.in_dim}"
        )
    batched = inp.ndim == 2
    x = inp if batched else T.reshape(inp, (1, net.in_dim))
    out = T.matmul(x, T.swapaxes(net.weight, 0, 1)) + net.bias
    d = net.latent_dim
    mu = T.narrow(out, 1, 0, d)
    log_var = T.clamp(T.narrow(out, 1, d, d), -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
    if not batched:
        mu = T.reshape(mu, (d,))
        log_var = T.reshape(log_var, (d,))
    return GaussianParams(mu, log_var)


def reparameterize(g: GaussianParams, eps) -> Tensor:
    """z = mu + exp(log sigma^2 / 2) * eps, differentiable in mu and log_var."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != g.mu.shape:
        raise ContractError(f"reparameterize: eps {eps.shape} vs mu {g.mu.shape}")
    return g.mu + T.exp(g.log_var * 0.5) * eps


def kl_diag_gaussian(q: GaussianParams, p: GaussianParams) -> Tensor:
    """Closed-form KL(q || p) for diagonal Gaussians; batch mean if batched."""
    if q.mu.shape != p.mu.shape:
        raise ContractError(f"kl_diag_gaussian: dims {q.mu.shape} vs {p.mu.shape}")
    var_p = T.exp(p.log_var)
    diff = q.mu - p.mu
    # variance ratio via exp of the log-var difference so KL(q||q) is exactly 0
    ratio = T.exp(q.log_var - p.log_var)
    per_dim = (p.log_var - q.log_var + ratio + diff * diff * T.reciprocal(var_p) - 1.0) * 0.5
    per_example = per_dim.sum(axis=-1)
    return per_example.mean() if per_example.ndim >= 1 else per_example


def _batch_norm_mean(x: Tensor) -> Tensor:
    """Euclidean norm over the last axis, arithmetic mean over any batch axis."""
    sq = (x * x).sum(axis=-1)
    # tiny offset keeps the gradient finite at the origin
    norms = T.sqrt(sq + 1e-24)
    return norms.mean() if norms.ndim >= 1 else norms


def variance_reg_r(log_var_r: Tensor, lam_r: float) -> Tensor:
    """Penalty pushing the response prior's log-variance norm toward zero."""
    return _batch_norm_mean(log_var_r) * lam_r


def variance_reg_p(
    log_var_p: Tensor, lam_p: float, clamp: float = PRECISION_CLAMP, elementwise: bool = True
) -> Tensor:
    """Precision penalty rewarding a wide persona prior.

    Default form: Euclidean norm of the elementwise reciprocal of the
    log-variance, with a sign-preserving magnitude clamp at ``clamp`` so
    entries near zero saturate instead of diverging. ``elementwise=False``
    switches to the reciprocal of the norm itself.
    """
    safe = T.signed_clamp_min(log_var_p, clamp)
    if elementwise:
        return _batch_norm_mean(T.reciprocal(safe)) * lam_p
    return T.reciprocal(_batch_norm_mean(safe)) * lam_p
