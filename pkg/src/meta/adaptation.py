# -*- coding: utf-8 -*-
"""
Meta-learned online adaptation of the head posterior

The meta-knowledge is a global head posterior w plus an affine update law psi
mapping the last M (x, u) pairs to an additive correction of all 144 head
parameters: theta(k) = w + [tau(k-M..k-1)] @ psi_w + psi_b.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import autodiff as ad
from ..bnn.model import (
    HEAD_PARAM_COUNT,
    HEAD_SHAPES,
    BnnModel,
    BodyParams,
    VariationalPosterior,
    body_features,
    forward_tensor,
    sample_weights,
    split_head_vector,
)
from ..bnn.priors import FrozenPosterior, gaussian_log_density
from ..errors import ContractViolation, NonFiniteError, TrainingDivergedError, WindowError
from ..plant.dataset import TransitionDataset

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 5
DEFAULT_HORIZON = 5
KL_MODES = ("mc", "analytic")


@dataclass(frozen=True, eq=False)
class TrajectoryWindow:
    """M consecutive (x, u) pairs, oldest first"""

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=np.float64)
        inputs = np.array(self.inputs, dtype=np.float64)
        if states.ndim != 2 or states.shape[1] != 2 or inputs.shape != states.shape:
            raise WindowError(f"Window needs matching (M, 2) states and inputs, got {states.shape} and {inputs.shape}")
        if len(states) == 0:
            raise WindowError("Window must hold at least one pair")
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(inputs))):
            raise WindowError("Window entries must be finite")
        for array in (states, inputs):
            array.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)

    def __len__(self):
        return len(self.states)

    def vector(self) -> np.ndarray:
        """Flattened 4M-vector [x1, x2, u1, u2] per step"""
        return np.hstack([self.states, self.inputs]).reshape(-1)

    def push(self, x, u) -> "TrajectoryWindow":
        """Drop the oldest pair and append (x, u)"""
        states = np.vstack([self.states[1:], np.asarray(x, dtype=np.float64).reshape(1, 2)])
        inputs = np.vstack([self.inputs[1:], np.asarray(u, dtype=np.float64).reshape(1, 2)])
        return TrajectoryWindow(states, inputs)

    @classmethod
    def constant(cls, x, u, length: int = DEFAULT_WINDOW) -> "TrajectoryWindow":
        """Window of `length` copies of one pair (closed-loop start-up)"""
        x = np.asarray(x, dtype=np.float64).reshape(1, 2)
        u = np.asarray(u, dtype=np.float64).reshape(1, 2)
        return cls(np.repeat(x, length, axis=0), np.repeat(u, length, axis=0))

    @classmethod
    def from_dataset(cls, d: TransitionDataset, end: int, length: int) -> "TrajectoryWindow":
        """Records end-length .. end-1"""
        if end - length < 0 or end > len(d):
            raise WindowError(f"Window [{end - length}, {end}) out of range for {len(d)} records")
        return cls(d.x[end - length:end], d.u[end - length:end])


@dataclass(frozen=True, eq=False)
class UpdateLaw:
    """Affine map from a flattened window to head-parameter corrections"""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        bias = np.array(self.bias, dtype=np.float64).reshape(1, -1)
        if weights.ndim != 2 or weights.shape[1] != HEAD_PARAM_COUNT or bias.shape[1] != HEAD_PARAM_COUNT:
            raise ContractViolation(f"Update law must map to {HEAD_PARAM_COUNT} parameters")
        if weights.shape[0] % 4 != 0:
            raise ContractViolation(f"Update law input size {weights.shape[0]} is not 4*M")
        for array in (weights, bias):
            array.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @property
    def window_length(self) -> int:
        return self.weights.shape[0] // 4

    @classmethod
    def zeros(cls, window_length: int = DEFAULT_WINDOW) -> "UpdateLaw":
        return cls(np.zeros((4 * window_length, HEAD_PARAM_COUNT)), np.zeros((1, HEAD_PARAM_COUNT)))

    def __call__(self, window: TrajectoryWindow) -> np.ndarray:
        return (window.vector().reshape(1, -1) @ self.weights + self.bias).reshape(-1)

    def is_null(self) -> bool:
        return not (np.any(self.weights) or np.any(self.bias))


@dataclass(frozen=True, eq=False)
class MetaKnowledge:
    """Global head posterior, update law, frozen body and frozen prior"""

    w: VariationalPosterior
    psi: UpdateLaw
    body: BodyParams
    prior: FrozenPosterior

    @property
    def window_length(self) -> int:
        return self.psi.window_length

    @classmethod
    def from_bnn(cls, m: BnnModel, window_length: int = DEFAULT_WINDOW) -> "MetaKnowledge":
        """w starts at the trained posterior, which is also frozen as prior; psi starts at zero"""
        return cls(w=m.head, psi=UpdateLaw.zeros(window_length),
                   body=[(w.copy(), b.copy()) for w, b in m.body], prior=m.head.freeze())

    def global_model(self) -> BnnModel:
        return BnnModel(body=self.body, head=self.w, prior=self.prior)

    def adapted_model(self, window: TrajectoryWindow) -> BnnModel:
        return BnnModel(body=self.body, head=adapt(self, window), prior=self.prior)

    def with_updates(self, w_vector: np.ndarray, psi_weights: np.ndarray, psi_bias: np.ndarray) -> "MetaKnowledge":
        return MetaKnowledge(w=VariationalPosterior.from_vector(w_vector),
                             psi=UpdateLaw(psi_weights, psi_bias), body=self.body, prior=self.prior)


@dataclass(frozen=True)
class MetaOptions:
    """Variants of the task loss"""

    readapt_each_step: bool = False
    rollout_mode: bool = False
    sample_predictions: bool = False
    kl_mode: str = "mc"
    kl_weight: float = 1e-4
    n_samples: int = 1

    def __post_init__(self):
        if self.kl_mode not in KL_MODES:
            raise ContractViolation(f"kl_mode must be one of {KL_MODES}, got '{self.kl_mode}'")
        if self.kl_weight < 0:
            raise ContractViolation(f"kl_weight must be non-negative, got {self.kl_weight}")
        if self.n_samples < 1:
            raise ContractViolation(f"n_samples must be >= 1, got {self.n_samples}")


def _check_window(mk: MetaKnowledge, window: TrajectoryWindow) -> None:
    if len(window) != mk.window_length:
        raise WindowError(f"Window has {len(window)} pairs, update law expects {mk.window_length}")


def adapt(mk: MetaKnowledge, window: TrajectoryWindow) -> VariationalPosterior:
    """theta(k) = w + psi(window)"""
    _check_window(mk, window)
    return VariationalPosterior.from_vector(mk.w.to_vector() + mk.psi(window))


def adapt_tensor(w: ad.Tensor, psi_weights: ad.Tensor, psi_bias: ad.Tensor, window: TrajectoryWindow) -> ad.Tensor:
    """Differentiable form of adapt on a (1, 144) parameter row"""
    row = ad.Tensor(window.vector().reshape(1, -1))
    return ad.add(ad.add(w, ad.matmul(row, psi_weights)), psi_bias)


def kl_to_prior(theta: ad.Tensor, prior: FrozenPosterior, mode: str = "mc",
                noise: Optional[Dict[str, np.ndarray]] = None,
                rng: Optional[np.random.Generator] = None) -> ad.Tensor:
    """
    KL(q(theta) || prior) as a tensor

    "mc" evaluates log q - log p at one reparameterised draw; "analytic" uses the
    closed form between diagonal Gaussians.
    """
    parts = split_head_vector(theta)
    mu = {"w": parts["mu_w"], "b": parts["mu_b"]}
    rho = {"w": parts["rho_w"], "b": parts["rho_b"]}
    if mode == "analytic":
        total = None
        for name in mu:
            sigma = ad.softplus(rho[name])
            sigma0 = prior.sigma[name]
            ratio = ad.div(ad.add(ad.square(sigma), ad.square(ad.sub(mu[name], prior.mu[name]))),
                           2.0 * sigma0 ** 2)
            term = ad.sum(ad.sub(ad.add(ad.sub(np.log(sigma0), ad.log(sigma)), ratio), 0.5))
            total = term if total is None else ad.add(total, term)
        return total
    weights = sample_weights(mu, rho, rng=rng, noise=noise)
    log_q = None
    for name in mu:
        term = gaussian_log_density(weights[name], mu[name], ad.softplus(rho[name]))
        log_q = term if log_q is None else ad.add(log_q, term)
    return ad.sub(log_q, prior.log_prob(weights))


def _draw_noise(rng: np.random.Generator) -> Dict[str, np.ndarray]:
    return {name: rng.standard_normal(shape) for name, shape in HEAD_SHAPES.items()}


def _predict_mismatch(mk: MetaKnowledge, theta: ad.Tensor, x: np.ndarray, u: np.ndarray,
                      options: MetaOptions, rng) -> ad.Tensor:
    parts = split_head_vector(theta)
    features = ad.Tensor(body_features(mk.body, x))
    if not options.sample_predictions:
        return forward_tensor(None, parts["mu_w"], parts["mu_b"], x, u, features=features)
    total = None
    for _ in range(options.n_samples):
        weights = sample_weights({"w": parts["mu_w"], "b": parts["mu_b"]},
                                 {"w": parts["rho_w"], "b": parts["rho_b"]}, rng=rng)
        g = forward_tensor(None, weights["w"], weights["b"], x, u, features=features)
        total = g if total is None else ad.add(total, g)
    return ad.mul(1.0 / options.n_samples, total)


def task_loss(
    mk: MetaKnowledge,
    dataset: TransitionDataset,
    i: int,
    K: int = DEFAULT_HORIZON,
    options: MetaOptions = MetaOptions(),
    rng: Optional[np.random.Generator] = None,
    nominal=None,
    tensors: Optional[Dict[str, ad.Tensor]] = None,
) -> ad.Tensor:
    """
    Adapted K-step prediction loss at anchor i plus the KL anchor to the frozen prior

    The squared error is (1/K) * sum_k ||x(i+k) - x_hat(i+k)||^2. In teacher-forced
    mode x_hat(i+k) = f(x(i+k-1), u(i+k-1)) + g_hat with recorded states, where f is
    recovered as x_next - g. In rollout mode the nominal model is fed the previous
    prediction; the mismatch regressor then sees the prediction's values.

    Args:
        mk: Meta-knowledge
        dataset: Time-ordered records with g targets
        i: Anchor; the window is records i-M .. i-1, predictions cover records i .. i+K-1
        K: Prediction horizon
        options: Loss variants
        rng: Noise for sampled predictions and the Monte-Carlo KL
        nominal: LPV model, needed in rollout mode
        tensors: {"w", "psi_w", "psi_b"} tensors (tracked for training); untracked when omitted

    Returns:
        Scalar loss tensor
    """
    M = mk.window_length
    if K < 1:
        raise ContractViolation(f"Horizon K must be >= 1, got {K}")
    if i - M < 0 or i + K > len(dataset):
        raise WindowError(f"Anchor {i} needs records [{i - M}, {i + K}) of {len(dataset)}")
    if not dataset.has_targets:
        raise ContractViolation("Task loss needs mismatch targets")
    if options.rollout_mode and nominal is None:
        raise ContractViolation("Rollout mode needs the nominal model")
    if rng is None:
        rng = np.random.default_rng(0)
    if tensors is None:
        tensors = {
            "w": ad.Tensor(mk.w.to_vector().reshape(1, -1)),
            "psi_w": ad.Tensor(mk.psi.weights),
            "psi_b": ad.Tensor(mk.psi.bias),
        }

    def theta_at(end: int) -> ad.Tensor:
        window = TrajectoryWindow.from_dataset(dataset, end, M)
        return adapt_tensor(tensors["w"], tensors["psi_w"], tensors["psi_b"], window)

    thetas = [theta_at(i)]
    squared = None
    x_pred = None
    for k in range(K):
        rec = i + k
        if options.readapt_each_step and k > 0:
            thetas.append(theta_at(rec))
        theta = thetas[-1]
        u = dataset.u[rec].reshape(1, 2)
        target = dataset.x_next[rec].reshape(1, 2)
        if options.rollout_mode:
            x_in = ad.Tensor(dataset.x[rec].reshape(1, 2)) if x_pred is None else x_pred
            g_hat = _predict_mismatch(mk, theta, x_in.values, u, options, rng)
            x_pred = ad.add(nominal.forward_tensor(x_in, ad.Tensor(u)), g_hat)
        else:
            g_hat = _predict_mismatch(mk, theta, dataset.x[rec].reshape(1, 2), u, options, rng)
            x_pred = ad.add(g_hat, (dataset.x_next[rec] - dataset.g[rec]).reshape(1, 2))
        step = ad.sum(ad.square(ad.sub(x_pred, target)))
        squared = step if squared is None else ad.add(squared, step)
    loss = ad.mul(1.0 / K, squared)

    if options.kl_weight > 0:
        kl_total = None
        for theta in thetas:
            noise = _draw_noise(rng) if options.kl_mode == "mc" else None
            kl = kl_to_prior(theta, mk.prior, mode=options.kl_mode, noise=noise)
            kl_total = kl if kl_total is None else ad.add(kl_total, kl)
        loss = ad.add(loss, ad.mul(options.kl_weight / len(thetas), kl_total))
    return loss


def task_gradients(mk: MetaKnowledge, dataset: TransitionDataset, i: int, K: int,
                   options: MetaOptions, rng: np.random.Generator, nominal=None,
                   w_vector: Optional[np.ndarray] = None) -> Tuple[float, Dict[str, np.ndarray]]:
    """Task loss and its gradients with respect to w, psi_w and psi_b"""
    tape = ad.Tape()
    w_values = mk.w.to_vector() if w_vector is None else w_vector
    tensors = {
        "w": tape.watch(w_values.reshape(1, -1), name="w"),
        "psi_w": tape.watch(mk.psi.weights, name="psi_w"),
        "psi_b": tape.watch(mk.psi.bias, name="psi_b"),
    }
    loss = task_loss(mk, dataset, i, K, options, rng=rng, nominal=nominal, tensors=tensors)
    grads = tape.backward(loss)
    return loss.item(), {name: grads[t] for name, t in tensors.items()}


def valid_anchors(dataset: TransitionDataset, window_length: int, K: int) -> np.ndarray:
    """Anchors whose window and prediction records lie on one trajectory piece"""
    return dataset.contiguous_windows(window_length, K)


@dataclass
class MetaTrainingResult:
    knowledge: MetaKnowledge
    losses: List[float] = field(default_factory=list)


def meta_train(
    mk0: MetaKnowledge,
    dataset: TransitionDataset,
    n_tasks_per_iter: int = 10,
    K: int = DEFAULT_HORIZON,
    epochs: int = 100,
    lr_psi: float = 1e-5,
    lr_w: float = 1e-5,
    seed: int = 0,
    options: MetaOptions = MetaOptions(),
    nominal=None,
) -> MetaTrainingResult:
    """
    Learn the meta-knowledge over time-shifted windows of one dataset

    Each iteration draws n_tasks_per_iter anchors uniformly (with replacement)
    from the valid anchors. psi takes an Adam(lr_psi) step after every task; the
    w-gradients of the iteration are averaged into one Adam(lr_w) step. psi
    persists across iterations and epochs.

    Args:
        mk0: Initial meta-knowledge (w from the trained BNN, psi zero)
        dataset: Time-ordered records with g targets
        n_tasks_per_iter: Tasks per meta-iteration; 0 returns mk0 unchanged
        K: Prediction horizon of every task
        epochs: Each epoch is ceil(valid anchors / n_tasks_per_iter) iterations
        lr_psi: Update-law learning rate
        lr_w: Meta-update learning rate
        seed: Seeds anchor draws and weight noise
        options: Task-loss variants
        nominal: LPV model for rollout mode

    Returns:
        MetaTrainingResult with the final knowledge and the mean task loss per epoch
    """
    M = mk0.window_length
    if len(dataset) < M + K + 1:
        raise ContractViolation(f"Dataset of {len(dataset)} records is shorter than M+K+1={M + K + 1}")
    if n_tasks_per_iter < 0:
        raise ContractViolation(f"n_tasks_per_iter must be >= 0, got {n_tasks_per_iter}")
    if n_tasks_per_iter == 0 or epochs == 0:
        logger.info("Meta training skipped: no tasks to run")
        return MetaTrainingResult(knowledge=mk0, losses=[])
    anchors = valid_anchors(dataset, M, K)
    if len(anchors) == 0:
        raise WindowError(f"No contiguous window of {M}+{K} records in the dataset")

    rng = np.random.default_rng(seed)
    iterations = math.ceil(len(anchors) / n_tasks_per_iter)
    psi_opt = ad.Adam({"psi_w": np.array(mk0.psi.weights), "psi_b": np.array(mk0.psi.bias)}, lr=lr_psi)
    w_opt = ad.Adam({"w": mk0.w.to_vector().reshape(1, -1)}, lr=lr_w)
    mk = mk0
    losses: List[float] = []
    logger.info(f"Meta training: {epochs} epochs x {iterations} iterations x {n_tasks_per_iter} tasks "
                f"over {len(anchors)} anchors (M={M}, K={K})")

    for epoch in range(1, epochs + 1):
        epoch_total = 0.0
        for _ in range(iterations):
            w_grad = np.zeros((1, HEAD_PARAM_COUNT))
            for i in rng.choice(anchors, size=n_tasks_per_iter, replace=True):
                try:
                    loss, grads = task_gradients(mk, dataset, int(i), K, options, rng, nominal=nominal)
                except NonFiniteError as e:
                    raise TrainingDivergedError(f"Meta training diverged in epoch {epoch}: {e}",
                                                last_finite_epoch=epoch - 1) from e
                psi_opt.step({"psi_w": grads["psi_w"], "psi_b": grads["psi_b"]})
                mk = mk.with_updates(w_opt.params["w"], psi_opt.params["psi_w"], psi_opt.params["psi_b"])
                w_grad = w_grad + grads["w"]
                epoch_total += loss
            w_opt.step({"w": w_grad / n_tasks_per_iter})
            mk = mk.with_updates(w_opt.params["w"], psi_opt.params["psi_w"], psi_opt.params["psi_b"])
        losses.append(epoch_total / (iterations * n_tasks_per_iter))
        logger.debug(f"Meta epoch {epoch}: mean task loss={losses[-1]:.6g}")

    logger.info(f"Meta training done: loss {losses[0]:.6g} -> {losses[-1]:.6g}")
    return MetaTrainingResult(knowledge=mk, losses=losses)


def one_step_errors(mk: MetaKnowledge, dataset: TransitionDataset, adapted: bool = True,
                    anchors: Optional[np.ndarray] = None) -> np.ndarray:
    """Squared one-step mismatch error per anchor, posterior-mean weights"""
    if not dataset.has_targets:
        raise ContractViolation("Evaluation needs mismatch targets")
    M = mk.window_length
    if anchors is None:
        anchors = valid_anchors(dataset, M, 1)
    errors = np.empty(len(anchors))
    global_model = mk.global_model()
    for n, i in enumerate(anchors):
        i = int(i)
        m = mk.adapted_model(TrajectoryWindow.from_dataset(dataset, i, M)) if adapted else global_model
        g_hat = m.mean_predict(dataset.x[i], dataset.u[i])[0]
        errors[n] = float(np.sum((dataset.g[i] - g_hat) ** 2))
    return errors


def adaptation_gain(mk: MetaKnowledge, dataset: TransitionDataset) -> Tuple[float, float]:
    """(mean adapted one-step MSE, mean global one-step MSE) over all valid anchors"""
    anchors = valid_anchors(dataset, mk.window_length, 1)
    if len(anchors) == 0:
        raise WindowError("No valid anchors for evaluation")
    adapted = float(np.mean(one_step_errors(mk, dataset, True, anchors)))
    global_mse = float(np.mean(one_step_errors(mk, dataset, False, anchors)))
    logger.info(f"One-step MSE over {len(anchors)} anchors: adapted={adapted:.6g}, global={global_mse:.6g}")
    return adapted, global_mse
