# -*- coding: utf-8 -*-
"""
Bayesian mismatch model g(x, u) = h(x) [rho(x); u]

h is produced by a deterministic two-layer ELU body (2 -> 8 -> 8) followed by
one variational dense head (8 -> 8, no activation) whose output is read as a
2 x 4 matrix in row-major order.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .. import autodiff as ad
from ..errors import ContractViolation
from .priors import FrozenPosterior, GaussianPrior, MixturePrior

logger = logging.getLogger(__name__)

HIDDEN = 8
HEAD_OUT = 8
HEAD_SHAPES = {"w": (HIDDEN, HEAD_OUT), "b": (1, HEAD_OUT)}
# Flattening order of the head posterior parameters (144 values)
HEAD_PARAM_ORDER = ("mu_w", "mu_b", "rho_w", "rho_b")
HEAD_PARAM_COUNT = 2 * (HIDDEN * HEAD_OUT + HEAD_OUT)

Prior = Union[MixturePrior, GaussianPrior, FrozenPosterior]
BodyParams = List[Tuple[np.ndarray, np.ndarray]]


def softplus(values: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, values)


def inverse_softplus(sigma: float) -> float:
    return float(np.log(np.expm1(sigma)))


@dataclass(frozen=True, eq=False)
class VariationalPosterior:
    """Mean-field Gaussian posterior of the head: sigma = softplus(rho)"""

    mu_w: np.ndarray
    rho_w: np.ndarray
    mu_b: np.ndarray
    rho_b: np.ndarray

    def __post_init__(self):
        for name in HEAD_PARAM_ORDER:
            kind = name.split("_")[1]
            value = np.array(getattr(self, name), dtype=np.float64).reshape(HEAD_SHAPES[kind])
            if not np.all(np.isfinite(value)):
                raise ContractViolation(f"Posterior parameter '{name}' is not finite")
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    @property
    def sigma_w(self) -> np.ndarray:
        return softplus(self.rho_w)

    @property
    def sigma_b(self) -> np.ndarray:
        return softplus(self.rho_b)

    @property
    def mu(self) -> Dict[str, np.ndarray]:
        return {"w": self.mu_w, "b": self.mu_b}

    @property
    def rho(self) -> Dict[str, np.ndarray]:
        return {"w": self.rho_w, "b": self.rho_b}

    def to_vector(self) -> np.ndarray:
        return np.concatenate([getattr(self, name).reshape(-1) for name in HEAD_PARAM_ORDER])

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "VariationalPosterior":
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vector.size != HEAD_PARAM_COUNT:
            raise ContractViolation(f"Posterior vector must have {HEAD_PARAM_COUNT} entries, got {vector.size}")
        parts = split_head_vector(vector)
        return cls(**parts)

    def freeze(self) -> FrozenPosterior:
        return FrozenPosterior(mu=self.mu, rho=self.rho)

    def to_dict(self):
        return {name: getattr(self, name).tolist() for name in HEAD_PARAM_ORDER}

    @classmethod
    def from_dict(cls, data) -> "VariationalPosterior":
        return cls(**{name: np.asarray(data[name]) for name in HEAD_PARAM_ORDER})


def split_head_vector(vector):
    """Split a flat 144-vector (array or 1-row Tensor) into the four head parameters"""
    sizes = [HIDDEN * HEAD_OUT, HEAD_OUT, HIDDEN * HEAD_OUT, HEAD_OUT]
    bounds = np.cumsum([0] + sizes)
    shapes = [HEAD_SHAPES["w"], HEAD_SHAPES["b"], HEAD_SHAPES["w"], HEAD_SHAPES["b"]]
    parts = {}
    for name, lo, hi, shape in zip(HEAD_PARAM_ORDER, bounds[:-1], bounds[1:], shapes):
        if isinstance(vector, ad.Tensor):
            parts[name] = ad.reshape(ad.take(ad.reshape(vector, (1, -1)), list(range(lo, hi)), axis=1), shape)
        else:
            parts[name] = np.asarray(vector[lo:hi]).reshape(shape)
    return parts


@dataclass(frozen=True, eq=False)
class AnnModel:
    """Deterministic network with the BNN's architecture (used for weight transfer)"""

    body: BodyParams
    head_w: np.ndarray
    head_b: np.ndarray

    def parameters(self) -> Dict[str, np.ndarray]:
        params = body_parameters(self.body)
        params["head.w"] = self.head_w
        params["head.b"] = self.head_b
        return params

    def with_parameters(self, params: Dict[str, np.ndarray]) -> "AnnModel":
        return AnnModel(body=body_from_parameters(params, len(self.body)),
                        head_w=np.array(params["head.w"]), head_b=np.array(params["head.b"]))

    def predict(self, x, u) -> np.ndarray:
        return forward_numpy(self.body, self.head_w, self.head_b, x, u)


@dataclass(frozen=True, eq=False)
class BnnModel:
    """Deterministic body, variational head posterior and its prior"""

    body: BodyParams
    head: VariationalPosterior
    prior: Prior = field(default_factory=MixturePrior)

    def parameters(self) -> Dict[str, np.ndarray]:
        params = body_parameters(self.body)
        for name in HEAD_PARAM_ORDER:
            params[f"head.{name}"] = getattr(self.head, name)
        return params

    def with_parameters(self, params: Dict[str, np.ndarray]) -> "BnnModel":
        head = VariationalPosterior(**{name: params[f"head.{name}"] for name in HEAD_PARAM_ORDER})
        return BnnModel(body=body_from_parameters(params, len(self.body)), head=head, prior=self.prior)

    def with_head(self, head: VariationalPosterior) -> "BnnModel":
        return BnnModel(body=self.body, head=head, prior=self.prior)

    def with_prior(self, prior: Prior) -> "BnnModel":
        return BnnModel(body=self.body, head=self.head, prior=prior)

    @classmethod
    def from_ann(cls, ann: AnnModel, rho_init: float = -5.0, prior: Optional[Prior] = None) -> "BnnModel":
        """Transfer body weights and head means from a pretrained ANN"""
        head = VariationalPosterior(
            mu_w=ann.head_w, rho_w=np.full(HEAD_SHAPES["w"], rho_init),
            mu_b=ann.head_b, rho_b=np.full(HEAD_SHAPES["b"], rho_init),
        )
        return cls(body=[(w.copy(), b.copy()) for w, b in ann.body], head=head,
                   prior=prior if prior is not None else MixturePrior())

    def mean_predict(self, x, u) -> np.ndarray:
        """Prediction with every head weight at its posterior mean"""
        return forward_numpy(self.body, self.head.mu_w, self.head.mu_b, x, u)


def body_parameters(body: BodyParams) -> Dict[str, np.ndarray]:
    params = {}
    for i, (w, b) in enumerate(body):
        params[f"body.{i}.w"] = w
        params[f"body.{i}.b"] = b
    return params


def body_from_parameters(params: Dict[str, np.ndarray], layers: int) -> BodyParams:
    return [(np.array(params[f"body.{i}.w"]), np.array(params[f"body.{i}.b"])) for i in range(layers)]


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_ann(seed: int, hidden: int = HIDDEN) -> AnnModel:
    """Glorot-uniform weights, zero biases"""
    rng = np.random.default_rng(seed)
    body = [
        (glorot_uniform(rng, 2, hidden), np.zeros((1, hidden))),
        (glorot_uniform(rng, hidden, hidden), np.zeros((1, hidden))),
    ]
    return AnnModel(body=body, head_w=glorot_uniform(rng, hidden, HEAD_OUT), head_b=np.zeros((1, HEAD_OUT)))


def regressor_matrix(x, u) -> np.ndarray:
    """Rows [rho1, rho2, u1, u2] = [x1, x1*x2, u1, u2]"""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    u = np.asarray(u, dtype=np.float64).reshape(-1, 2)
    return np.column_stack([x[:, 0], x[:, 0] * x[:, 1], u[:, 0], u[:, 1]])


def _elu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def body_features(body: BodyParams, x) -> np.ndarray:
    h = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    for w, b in body:
        h = _elu(h @ w + b)
    return h


def forward_numpy(body: BodyParams, head_w: np.ndarray, head_b: np.ndarray, x, u) -> np.ndarray:
    """g predictions, one row per (x, u) pair"""
    out = body_features(body, x) @ head_w + head_b
    h = out.reshape(-1, 2, 4)
    return np.einsum("nij,nj->ni", h, regressor_matrix(x, u))


def forward_tensor(body, head_w: ad.Tensor, head_b: ad.Tensor, x, u, features: Optional[ad.Tensor] = None) -> ad.Tensor:
    """
    Differentiable g predictions

    Args:
        body: List of (w, b) pairs as tensors or arrays
        head_w: (8, 8) head weights
        head_b: (1, 8) head bias
        x: (n, 2) states
        u: (n, 2) inputs
        features: Precomputed body output; skips the body when given

    Returns:
        (n, 2) tensor
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    n = len(x)
    if features is None:
        h = ad.Tensor(x)
        for w, b in body:
            h = ad.elu(ad.add(ad.matmul(h, w), ad.matmul(np.ones((n, 1)), b)))
        features = h
    out = ad.add(ad.matmul(features, head_w), ad.matmul(np.ones((n, 1)), head_b))
    reg = ad.Tensor(regressor_matrix(x, u))
    g1 = ad.sum(ad.mul(ad.take(out, [0, 1, 2, 3], axis=1), reg), axis=1)
    g2 = ad.sum(ad.mul(ad.take(out, [4, 5, 6, 7], axis=1), reg), axis=1)
    return ad.concat([g1, g2], axis=1)


def sample_weights(mu: Dict, rho: Dict, rng: Optional[np.random.Generator] = None,
                   noise: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, ad.Tensor]:
    """
    Reparameterised draw W = mu + softplus(rho) * eps, eps ~ N(0, I)

    mu and rho entries may be tracked tensors; the draw is then differentiable
    with respect to them. Pass `noise` to reuse a fixed eps.
    """
    weights = {}
    for name in mu:
        mu_t, rho_t = ad.as_tensor(mu[name]), ad.as_tensor(rho[name])
        if noise is not None:
            eps = np.asarray(noise[name], dtype=np.float64)
        else:
            if rng is None:
                raise ContractViolation("sample_weights needs an rng when no noise is given")
            eps = rng.standard_normal(mu_t.shape)
        weights[name] = ad.add(mu_t, ad.mul(ad.softplus(rho_t), ad.Tensor(eps)))
    return weights


def forward(m: BnnModel, x, u, weights: Optional[Dict[str, np.ndarray]] = None) -> np.ndarray:
    """g prediction with explicit head weights (posterior mean when omitted)"""
    if weights is None:
        return m.mean_predict(x, u)
    w = weights["w"].values if isinstance(weights["w"], ad.Tensor) else weights["w"]
    b = weights["b"].values if isinstance(weights["b"], ad.Tensor) else weights["b"]
    if np.shape(w) != HEAD_SHAPES["w"] or np.shape(b) != HEAD_SHAPES["b"]:
        raise ContractViolation(f"Head weights must have shapes {HEAD_SHAPES}")
    return forward_numpy(m.body, w, b, x, u)


def draw_head_weights(head: VariationalPosterior, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Plain numpy reparameterised draw for Monte-Carlo prediction"""
    w = head.mu_w + head.sigma_w * rng.standard_normal(HEAD_SHAPES["w"])
    b = head.mu_b + head.sigma_b * rng.standard_normal(HEAD_SHAPES["b"])
    return w, b

