# -*- coding: utf-8 -*-
"""
Prior densities over the variational head weights
"""

import math
from dataclasses import dataclass
from typing import Dict, Union

import numpy as np

from .. import autodiff as ad
from ..errors import ContractViolation

LOG_2PI = math.log(2.0 * math.pi)

TensorLike = Union[ad.Tensor, np.ndarray, float]


def gaussian_log_density(w: ad.Tensor, mu: TensorLike, sigma: TensorLike) -> ad.Tensor:
    """Sum over entries of log N(w; mu, sigma^2); mu and sigma may be tracked"""
    mu = ad.as_tensor(mu)
    sigma = ad.as_tensor(sigma)
    z = ad.div(ad.sub(w, mu), sigma)
    per_entry = ad.sub(ad.mul(-0.5, ad.square(z)), ad.log(sigma))
    return ad.sub(ad.sum(per_entry), 0.5 * LOG_2PI * w.values.size)


def _total(terms) -> ad.Tensor:
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return total


@dataclass(frozen=True)
class GaussianPrior:
    """Zero-mean isotropic Gaussian prior"""

    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ContractViolation(f"Prior sigma must be positive, got {self.sigma}")

    def log_prob(self, weights: Dict[str, ad.Tensor]) -> ad.Tensor:
        terms = [gaussian_log_density(w, 0.0, float(self.sigma)) for w in weights.values()]
        return _total(terms)

    def to_dict(self):
        return {"kind": "gaussian", "sigma": self.sigma}


@dataclass(frozen=True)
class MixturePrior:
    """Scale mixture pi*N(0, sigma1^2) + (1 - pi)*N(0, sigma2^2)"""

    pi: float = 0.5
    sigma1: float = 1.5
    sigma2: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise ContractViolation(f"Mixture weight must lie in [0, 1], got {self.pi}")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ContractViolation("Mixture sigmas must be positive")

    def _entry_log_density(self, w: ad.Tensor) -> ad.Tensor:
        def component(sigma: float) -> ad.Tensor:
            return ad.sub(ad.mul(-0.5 / sigma ** 2, ad.square(w)), 0.5 * LOG_2PI + math.log(sigma))

        if self.pi == 1.0:
            return component(self.sigma1)
        if self.pi == 0.0:
            return component(self.sigma2)
        return ad.logaddexp(ad.add(component(self.sigma1), math.log(self.pi)),
                            ad.add(component(self.sigma2), math.log(1.0 - self.pi)))

    def log_prob(self, weights: Dict[str, ad.Tensor]) -> ad.Tensor:
        terms = [ad.sum(self._entry_log_density(w)) for w in weights.values()]
        return _total(terms)

    def to_dict(self):
        return {"kind": "mixture", "pi": self.pi, "sigma1": self.sigma1, "sigma2": self.sigma2}


class FrozenPosterior:
    """A trained head posterior reused as prior density; read-only after creation"""

    def __init__(self, mu: Dict[str, np.ndarray], rho: Dict[str, np.ndarray]):
        if set(mu) != set(rho):
            raise ContractViolation("Frozen posterior needs matching mu/rho entries")
        self._mu = {}
        self._sigma = {}
        self._rho = {}
        for name in mu:
            m = np.array(mu[name], dtype=np.float64)
            r = np.array(rho[name], dtype=np.float64)
            if m.shape != r.shape:
                raise ContractViolation(f"Frozen posterior entry '{name}': mu/rho shapes differ")
            s = np.logaddexp(0.0, r)
            for array in (m, r, s):
                array.flags.writeable = False
            self._mu[name], self._rho[name], self._sigma[name] = m, r, s

    @property
    def mu(self) -> Dict[str, np.ndarray]:
        return dict(self._mu)

    @property
    def rho(self) -> Dict[str, np.ndarray]:
        return dict(self._rho)

    @property
    def sigma(self) -> Dict[str, np.ndarray]:
        return dict(self._sigma)

    def log_prob(self, weights: Dict[str, ad.Tensor]) -> ad.Tensor:
        terms = []
        for name, w in weights.items():
            if name not in self._mu:
                raise ContractViolation(f"Frozen posterior has no entry '{name}'")
            terms.append(gaussian_log_density(w, self._mu[name], self._sigma[name]))
        return _total(terms)

    def to_dict(self):
        return {
            "kind": "frozen",
            "mu": {k: v.tolist() for k, v in self._mu.items()},
            "rho": {k: v.tolist() for k, v in self._rho.items()},
        }


def prior_from_dict(data: Dict):
    kind = data.get("kind")
    if kind == "mixture":
        return MixturePrior(pi=data["pi"], sigma1=data["sigma1"], sigma2=data["sigma2"])
    if kind == "gaussian":
        return GaussianPrior(sigma=data["sigma"])
    if kind == "frozen":
        return FrozenPosterior(mu=data["mu"], rho=data["rho"])
    raise ContractViolation(f"Unknown prior kind '{kind}'")
