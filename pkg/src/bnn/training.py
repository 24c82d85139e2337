# -*- coding: utf-8 -*-
"""
Bayes-by-Backprop training and Monte-Carlo prediction for the mismatch BNN
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .. import autodiff as ad
from ..errors import ContractViolation, NonFiniteError, TrainingDivergedError
from ..plant.dataset import TransitionDataset
from .model import (
    HEAD_PARAM_ORDER,
    AnnModel,
    BnnModel,
    body_parameters,
    draw_head_weights,
    forward_numpy,
    forward_tensor,
    sample_weights,
)
from .priors import LOG_2PI, gaussian_log_density

logger = logging.getLogger(__name__)

DEFAULT_SIGMA_OBS = 0.05

# Only the variational head is trained; the body keeps its transferred weights
HEAD_NAMES = tuple(f"head.{name}" for name in HEAD_PARAM_ORDER)

Seed = Union[int, Sequence[int]]


@dataclass
class TrainingResult:
    """Trained model plus its per-epoch mean training loss"""

    model: object
    losses: List[float] = field(default_factory=list)
    best_epoch: int = 0
    best_validation_nll: Optional[float] = None


def gaussian_nll(prediction: ad.Tensor, target: np.ndarray, sigma_obs: float) -> ad.Tensor:
    """Negative log-likelihood of targets under N(prediction, sigma_obs^2), summed over entries"""
    target = np.asarray(target, dtype=np.float64)
    z = ad.mul(1.0 / sigma_obs, ad.sub(prediction, target))
    const = target.size * (0.5 * LOG_2PI + math.log(sigma_obs))
    return ad.add(ad.mul(0.5, ad.sum(ad.square(z))), const)


def gaussian_nll_numpy(prediction: np.ndarray, target: np.ndarray, sigma_obs: float) -> float:
    z = (np.asarray(prediction) - np.asarray(target)) / sigma_obs
    return float(0.5 * np.sum(z * z) + z.size * (0.5 * LOG_2PI + math.log(sigma_obs)))


def _require_targets(batch: TransitionDataset) -> None:
    if len(batch) == 0:
        raise ContractViolation("Loss needs a non-empty batch")
    if not batch.has_targets:
        raise ContractViolation("Batch has no mismatch targets; build the mismatch dataset first")


def _parameter_tensors(params: Dict[str, np.ndarray], tape: Optional[ad.Tape]) -> Dict[str, ad.Tensor]:
    if tape is None:
        return {name: ad.Tensor(value) for name, value in params.items()}
    return {name: tape.watch(value, name=name) for name, value in params.items()}


def _body_of(tensors: Dict[str, ad.Tensor]):
    layers = sorted({int(name.split(".")[1]) for name in tensors if name.startswith("body.")})
    return [(tensors[f"body.{i}.w"], tensors[f"body.{i}.b"]) for i in layers]


def elbo_loss(
    m: BnnModel,
    batch: TransitionDataset,
    n_samples: int,
    kl_weight: float,
    rng: Optional[np.random.Generator] = None,
    sigma_obs: float = DEFAULT_SIGMA_OBS,
    tensors: Optional[Dict[str, ad.Tensor]] = None,
    noise: Optional[List[Dict[str, np.ndarray]]] = None,
) -> ad.Tensor:
    """
    Monte-Carlo variational free energy of one minibatch

    kl_weight * (log q(W) - log p(W)) + NLL(g | W), averaged over n_samples
    reparameterised draws of the head weights.

    Args:
        m: Model; its prior supplies log p
        batch: Records with populated g targets
        n_samples: Number of weight draws
        kl_weight: Scale of the complexity term
        rng: Noise source when `noise` is not given
        sigma_obs: Fixed observation noise of the likelihood
        tensors: Parameter tensors (tracked for training); built untracked from m when omitted
        noise: One {"w", "b"} eps dict per draw, overriding rng

    Returns:
        Scalar loss tensor
    """
    if n_samples < 1:
        raise ContractViolation(f"elbo_loss needs n_samples >= 1, got {n_samples}")
    _require_targets(batch)
    if noise is not None and len(noise) != n_samples:
        raise ContractViolation("elbo_loss got a noise list of the wrong length")
    if tensors is None:
        tensors = _parameter_tensors(m.parameters(), None)

    mu = {"w": tensors["head.mu_w"], "b": tensors["head.mu_b"]}
    rho = {"w": tensors["head.rho_w"], "b": tensors["head.rho_b"]}
    sigma = {name: ad.softplus(value) for name, value in rho.items()}

    x = batch.x
    h = ad.Tensor(x)
    for w, b in _body_of(tensors):
        h = ad.elu(ad.add(ad.matmul(h, w), ad.matmul(np.ones((len(x), 1)), b)))

    total = None
    for i in range(n_samples):
        weights = sample_weights(mu, rho, rng=rng, noise=None if noise is None else noise[i])
        log_q = ad.add(gaussian_log_density(weights["w"], mu["w"], sigma["w"]),
                       gaussian_log_density(weights["b"], mu["b"], sigma["b"]))
        log_p = m.prior.log_prob(weights)
        prediction = forward_tensor(None, weights["w"], weights["b"], x, batch.u, features=h)
        term = ad.add(ad.mul(kl_weight, ad.sub(log_q, log_p)), gaussian_nll(prediction, batch.g, sigma_obs))
        total = term if total is None else ad.add(total, term)
    return ad.mul(1.0 / n_samples, total)


def elbo_gradients(m: BnnModel, batch: TransitionDataset, n_samples: int, kl_weight: float,
                   rng: Optional[np.random.Generator] = None, sigma_obs: float = DEFAULT_SIGMA_OBS,
                   noise: Optional[List[Dict[str, np.ndarray]]] = None,
                   trainable: Optional[Sequence[str]] = None) -> Tuple[float, Dict[str, np.ndarray]]:
    """Loss value and its gradient for each trainable parameter (all of them by default)"""
    params = m.parameters()
    names = list(params) if trainable is None else list(trainable)
    unknown = [name for name in names if name not in params]
    if unknown:
        raise ContractViolation(f"Unknown trainable parameters: {unknown}")
    tape = ad.Tape()
    watched = _parameter_tensors({name: params[name] for name in names}, tape)
    tensors = _parameter_tensors({name: v for name, v in params.items() if name not in watched}, None)
    tensors.update(watched)
    loss = elbo_loss(m, batch, n_samples, kl_weight, rng=rng, sigma_obs=sigma_obs, tensors=tensors, noise=noise)
    grads = tape.backward(loss)
    return loss.item(), {name: grads[t] for name, t in watched.items()}


def _minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield np.sort(order[start:start + batch_size])


def _check_training_args(train: TransitionDataset, epochs: int, batch_size: int) -> None:
    _require_targets(train)
    if epochs < 1:
        raise ContractViolation(f"epochs must be >= 1, got {epochs}")
    if batch_size < 1:
        raise ContractViolation(f"batch_size must be >= 1, got {batch_size}")


def pretrain_ann(ann: AnnModel, train: TransitionDataset, epochs: int, batch_size: int = 32,
                 lr: float = 1e-3, seed: int = 0) -> TrainingResult:
    """
    Deterministic MSE pretraining of the BNN architecture

    The trained weights seed BnnModel.from_ann (body weights and head means).
    """
    _check_training_args(train, epochs, batch_size)
    rng = np.random.default_rng(seed)
    optimizer = ad.Adam(dict(ann.parameters()), lr=lr)
    losses = []
    logger.info(f"Pretraining ANN: {epochs} epochs on {len(train)} records")
    for epoch in range(1, epochs + 1):
        epoch_loss = 0.0
        batches = 0
        for idx in _minibatches(len(train), batch_size, rng):
            batch = train.subset(idx)
            tape = ad.Tape()
            tensors = _parameter_tensors(optimizer.params, tape)
            try:
                prediction = forward_tensor(_body_of(tensors), tensors["head.w"], tensors["head.b"],
                                            batch.x, batch.u)
                loss = ad.mean(ad.square(ad.sub(prediction, batch.g)))
            except NonFiniteError as e:
                raise TrainingDivergedError(f"ANN pretraining diverged in epoch {epoch}: {e}",
                                            last_finite_epoch=epoch - 1) from e
            grads = tape.backward(loss)
            optimizer.step({name: grads[t] for name, t in tensors.items()})
            epoch_loss += loss.item()
            batches += 1
        losses.append(epoch_loss / batches)
        if epoch % max(1, epochs // 10) == 0:
            logger.debug(f"ANN epoch {epoch}: mse={losses[-1]:.6g}")
    trained = ann.with_parameters(optimizer.params)
    logger.info(f"ANN pretraining done: final mse={losses[-1]:.6g}")
    return TrainingResult(model=trained, losses=losses, best_epoch=epochs)


def validation_nll(m: BnnModel, data: TransitionDataset, sigma_obs: float = DEFAULT_SIGMA_OBS) -> float:
    """Held-out NLL per record using the posterior-mean weights"""
    _require_targets(data)
    return gaussian_nll_numpy(m.mean_predict(data.x, data.u), data.g, sigma_obs) / len(data)


def train_bnn(
    m: BnnModel,
    train: TransitionDataset,
    epochs: int,
    batch_size: int = 32,
    lr: float = 1e-3,
    seed: int = 0,
    validation: Optional[TransitionDataset] = None,
    n_samples: int = 1,
    sigma_obs: float = DEFAULT_SIGMA_OBS,
    eval_every: int = 1,
) -> TrainingResult:
    """
    Bayes-by-Backprop with Adam on the head posterior; body weights stay fixed

    Args:
        m: Initial model (typically BnnModel.from_ann of a pretrained network)
        train: Training records with g targets
        epochs: Passes over the training records
        batch_size: Minibatch size
        lr: Adam learning rate
        seed: Seeds shuffling and weight noise
        validation: Held-out records for early-keep; the last model is kept when omitted
        n_samples: Weight draws per step
        sigma_obs: Likelihood noise
        eval_every: Epoch interval of the held-out evaluation

    Returns:
        TrainingResult with the kept model and the per-epoch mean loss
    """
    _check_training_args(train, epochs, batch_size)
    rng = np.random.default_rng(seed)
    n_batches = math.ceil(len(train) / batch_size)
    kl_weight = 1.0 / n_batches
    body = body_parameters(m.body)
    optimizer = ad.Adam({name: value for name, value in m.parameters().items() if name in HEAD_NAMES}, lr=lr)

    best_model = m
    best_nll = None
    best_epoch = 0
    losses: List[float] = []
    logger.info(f"Training BNN: {epochs} epochs, {n_batches} batches/epoch, kl_weight={kl_weight:.4g}")

    for epoch in range(1, epochs + 1):
        epoch_loss = 0.0
        for idx in _minibatches(len(train), batch_size, rng):
            current = m.with_parameters({**body, **optimizer.params})
            try:
                loss, grads = elbo_gradients(current, train.subset(idx), n_samples, kl_weight,
                                             rng=rng, sigma_obs=sigma_obs, trainable=HEAD_NAMES)
            except NonFiniteError as e:
                raise TrainingDivergedError(f"BNN training diverged in epoch {epoch}: {e}",
                                            last_finite_epoch=epoch - 1) from e
            optimizer.step(grads)
            epoch_loss += loss
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"BNN loss is not finite in epoch {epoch}", last_finite_epoch=epoch - 1)
        losses.append(epoch_loss / n_batches)

        if validation is not None and (epoch % eval_every == 0 or epoch == epochs):
            candidate = m.with_parameters({**body, **optimizer.params})
            nll = validation_nll(candidate, validation, sigma_obs)
            if best_nll is None or nll < best_nll:
                best_model, best_nll, best_epoch = candidate, nll, epoch
            logger.debug(f"BNN epoch {epoch}: loss={losses[-1]:.6g} held-out nll={nll:.6g}")

    if validation is None:
        best_model, best_epoch = m.with_parameters({**body, **optimizer.params}), epochs
    logger.info(f"BNN training done: kept epoch {best_epoch}, final loss={losses[-1]:.6g}")
    return TrainingResult(model=best_model, losses=losses, best_epoch=best_epoch, best_validation_nll=best_nll)


def summarize_draws(draws) -> Tuple[np.ndarray, np.ndarray]:
    """Sample mean and population (1/N) standard deviation along the first axis"""
    draws = np.asarray(draws, dtype=np.float64)
    if draws.shape[0] < 2:
        raise ContractViolation(f"Need at least 2 draws, got {draws.shape[0]}")
    return draws.mean(axis=0), draws.std(axis=0)


def mc_draws(m: BnnModel, x, u, n_mc: int, seed: Seed, workers: int = 1) -> np.ndarray:
    """
    n_mc forward passes with independently drawn head weights

    Draw i uses child i of SeedSequence(seed), so the stack is the same for any
    worker count.

    Returns:
        (n_mc, n, 2) array
    """
    if n_mc < 1:
        raise ContractViolation(f"n_mc must be >= 1, got {n_mc}")
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    u = np.asarray(u, dtype=np.float64).reshape(-1, 2)
    children = np.random.SeedSequence(seed).spawn(n_mc)

    def one_draw(child):
        w, b = draw_head_weights(m.head, np.random.default_rng(child))
        return forward_numpy(m.body, w, b, x, u)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.stack(list(pool.map(one_draw, children)))
    return np.stack([one_draw(child) for child in children])


def mc_stats(m: BnnModel, x, u, n_mc: int, seed: Seed, workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Monte-Carlo mean and std of the mismatch prediction

    A single (x, u) pair gives 2-vectors; batched inputs give (n, 2) arrays.
    """
    if n_mc < 2:
        raise ContractViolation(f"mc_stats needs n_mc >= 2, got {n_mc}")
    single = np.asarray(x).ndim == 1
    mean, std = summarize_draws(mc_draws(m, x, u, n_mc, seed, workers))
    if single:
        return mean[0], std[0]
    return mean, std


def predict_interval(m: BnnModel, x, u, n_mc: int, seed: Seed, c: float = 2.0,
                     workers: int = 1) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean with the band mean -/+ c * std"""
    if c < 0:
        raise ContractViolation(f"Interval width factor must be non-negative, got {c}")
    mean, std = mc_stats(m, x, u, n_mc, seed, workers)
    return mean, mean - c * std, mean + c * std

