"""Losses, kernel ridge regression, circuit gradients, ADAM training and the parity learner."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import ExplicitModel, ImplicitModel, ReuploadingModel, _params, parity_model
from .simulator import (
    Circuit,
    Gate,
    Observable,
    SimulatorError,
    apply_gate_batch,
    apply_observable,
    bind_angles,
    chunk_rows,
    expectation_batch,
    generator_times,
    run_batch,
)

# grids for the classical kernel baselines
C_GRID = (0.006, 0.015, 0.03, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0)
GAMMA_GRID = (0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 20.0)


class TrainingError(RuntimeError):
    """Training diverged or was configured inconsistently."""


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} labels")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    lr_params: float = 0.01
    lr_weight: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    reg: float = 0.0
    init_std: float = 0.05
    gradient: str = "adjoint"
    divergence_limit: float = 1e6

    def __post_init__(self):
        if self.lr_params <= 0 or self.lr_weight <= 0:
            raise ValueError("learning rates must be positive")
        if self.reg < 0:
            raise ValueError("regularization must be non-negative")
        if self.steps < 0:
            raise ValueError("step count must be non-negative")
        if self.gradient not in ("adjoint", "shift"):
            raise ValueError(f"unknown gradient method {self.gradient!r}")


# --------------------------------------------------------------------------
# losses


def mse(predictions, labels) -> float:
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if labels.size == 0:
        raise ValueError("loss of an empty dataset is undefined")
    return float(np.mean((predictions - labels) ** 2))


def observable_weight_norm(obs: Observable) -> float:
    """sum_k |scale * w_k|^2, the stand-in for the Frobenius norm of a Pauli-sum observable."""
    return float(sum((obs.scale * w) ** 2 for w, _ in obs.terms))


def mse_loss(model, data: Dataset, theta=None, weight: float | None = None, reg: float = 0.0, gram=None) -> float:
    """Mean squared error, plus lambda * ||f||^2 for the model family when ``reg`` > 0.

    Implicit models use alpha^T K alpha over their support; explicit models
    use w^2 sum_k |w_k|^2 over the observable's Pauli weights.
    """
    if len(data) == 0:
        raise ValueError("loss of an empty dataset is undefined")
    if isinstance(model, ImplicitModel):
        loss = mse(model.evaluate(data.inputs), data.labels)
        if reg:
            K = gram if gram is not None else _support_gram(model)
            loss += reg * float(model.alpha @ K @ model.alpha)
        return loss
    if isinstance(model, ExplicitModel):
        w = model.weight if weight is None else weight
        loss = mse(model.evaluate(theta, data.inputs, weight=w), data.labels)
        if reg:
            loss += reg * w**2 * observable_weight_norm(model.observable)
        return loss
    if isinstance(model, ReuploadingModel):
        return mse(model.evaluate(theta, data.inputs), data.labels)
    if callable(model):
        return mse(model(data.inputs), data.labels)
    raise TypeError(f"cannot evaluate a loss for {type(model).__name__}")


def _support_gram(model: ImplicitModel) -> np.ndarray:
    from .encodings import gram_matrix

    return gram_matrix(model.encoding, model.support)


# --------------------------------------------------------------------------
# kernel ridge regression


def krr_fit(gram, labels, reg: float = 0.0, rcond: float = 1e-10) -> np.ndarray:
    """Solve (K + reg * M * I) alpha = y; reg = 0 falls back to the pseudo-inverse."""
    K = np.asarray(gram, dtype=float)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"gram matrix must be square, got shape {K.shape}")
    if K.shape[0] != y.shape[0]:
        raise ValueError(f"gram matrix of size {K.shape[0]} but {y.shape[0]} labels")
    if reg < 0:
        raise ValueError("regularization must be non-negative")
    M = K.shape[0]
    if reg == 0:
        return np.linalg.pinv(K, rcond=rcond, hermitian=True) @ y
    return np.linalg.solve(K + reg * M * np.eye(M), y)


def fit_implicit(encoding, data: Dataset, reg: float = 0.0, gram=None) -> ImplicitModel:
    from .encodings import gram_matrix

    K = gram if gram is not None else gram_matrix(encoding, data.inputs)
    return ImplicitModel(encoding, data.inputs, krr_fit(K, data.labels, reg))


# --------------------------------------------------------------------------
# gradients


def _circuit_parts(model):
    if isinstance(model, ExplicitModel):
        return model.circuit, model.observable, model.weight
    if isinstance(model, ReuploadingModel):
        return model.circuit, model.observable, 1.0
    raise TypeError(f"{type(model).__name__} has no circuit parameters")


def _check_differentiable(circuit: Circuit, shift: bool):
    for pos, g in enumerate(circuit.gates):
        if not g.is_parametric:
            continue
        if g.angle.bit is not None:
            raise SimulatorError(f"gate {pos}: bit-valued parameter angles are not differentiable")
        if shift and g.controls:
            raise SimulatorError(
                f"gate {pos}: controlled {g.kind} has three generator eigenvalues; the two-term shift rule does not apply"
            )


def shift_jacobian(circuit: Circuit, obs: Observable, theta, X) -> np.ndarray:
    """d<O>/d theta for each row of X via the two-term parameter-shift rule.

    Every parametric gate is shifted separately by +-pi/2 in its own angle;
    the chain rule through the angle's scale accumulates slots that are
    shared between gates.
    """
    _check_differentiable(circuit, shift=True)
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    jac = np.zeros((X.shape[0], circuit.num_params))
    n = circuit.num_qubits
    for sl in chunk_rows(X.shape[0], n):
        angles = bind_angles(circuit, theta, X[sl])
        for pos, g in enumerate(circuit.gates):
            if not g.is_parametric:
                continue
            vals = []
            for sign in (1.0, -1.0):
                psi = run_batch(circuit, theta, X[sl], overrides={pos: angles[pos] + sign * math.pi / 2})
                vals.append(expectation_batch(psi, n, obs))
            jac[sl, g.angle.index[0]] += g.angle.scale * (vals[0] - vals[1]) / 2
    return jac


def _inverse_step(psi, n, gate: Gate, angle):
    if gate.angle is None:
        apply_gate_batch(psi, n, gate)
    else:
        apply_gate_batch(psi, n, gate, -np.asarray(angle))


def adjoint_jacobian(circuit: Circuit, obs: Observable, theta, X) -> np.ndarray:
    """d<O>/d theta for each row of X by one backward sweep.

    With the rotation written as exp(-i a G) the derivative of <O> with
    respect to a is 2 Im <lambda| G |psi>, where psi is the state just after
    the gate and lambda is O psi_final propagated back to the same point.
    """
    return _adjoint(circuit, obs, theta, X)[1]


def _adjoint(circuit: Circuit, obs: Observable, theta, X):
    _check_differentiable(circuit, shift=False)
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    n = circuit.num_qubits
    values = np.zeros(X.shape[0])
    jac = np.zeros((X.shape[0], circuit.num_params))
    for sl in chunk_rows(X.shape[0], n, budget=1 << 21):
        angles = bind_angles(circuit, theta, X[sl])
        psi = run_batch(circuit, theta, X[sl])
        values[sl] = expectation_batch(psi, n, obs)
        lam = apply_observable(psi, n, obs)
        # gates before the first parametric one never need to be undone
        start = next((i for i, g in enumerate(circuit.gates) if g.is_parametric), len(circuit.gates))
        for g, a in zip(reversed(circuit.gates[start:]), reversed(angles[start:])):
            if g.is_parametric:
                gpsi = generator_times(psi, n, g)
                d = 2 * np.einsum("bi,bi->b", lam.conj(), gpsi).imag
                jac[sl, g.angle.index[0]] += g.angle.scale * d
            _inverse_step(psi, n, g, a)
            _inverse_step(lam, n, g, a)
    return values, jac


def model_jacobian(model, theta, X, method: str = "adjoint") -> np.ndarray:
    """d f / d theta per row, including the observable weight for explicit models."""
    circuit, obs, w = _circuit_parts(model)
    theta = _params(theta, circuit.num_params)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if method == "adjoint":
        jac = adjoint_jacobian(circuit, obs, theta, X)
    elif method in ("shift", "parameter_shift"):
        jac = shift_jacobian(circuit, obs, theta, X)
    else:
        raise ValueError(f"unknown gradient method {method!r}")
    return w * jac


def parameter_shift_gradient(model, theta, data: Dataset, weight: float | None = None):
    """Gradient of the mean squared error by the parameter-shift rule.

    Returns (d loss / d theta, d loss / d w); the weight derivative is zero
    for re-uploading models, which carry no trainable weight.
    """
    return loss_gradient(model, theta, data, weight, method="shift")


def loss_gradient(model, theta, data: Dataset, weight: float | None = None, reg: float = 0.0, method="adjoint"):
    """(d loss / d theta, d loss / d w, loss) for the mean squared error plus the weight penalty."""
    circuit, obs, w0 = _circuit_parts(model)
    w = w0 if weight is None else weight
    theta = _params(theta, circuit.num_params)
    if method == "adjoint":
        e, jac = _adjoint(circuit, obs, theta, data.inputs)
    elif method in ("shift", "parameter_shift"):
        e = expectation_batch(run_batch(circuit, theta, data.inputs), circuit.num_qubits, obs)
        jac = shift_jacobian(circuit, obs, theta, data.inputs)
    else:
        raise ValueError(f"unknown gradient method {method!r}")
    resid = w * e - data.labels
    M = len(data)
    g_theta = (2.0 / M) * w * (resid @ jac)
    g_w = 0.0
    if isinstance(model, ExplicitModel):
        g_w = float((2.0 / M) * (resid @ e) + 2 * reg * w * observable_weight_norm(obs))
    loss = float(np.mean(resid**2))
    if isinstance(model, ExplicitModel) and reg:
        loss += reg * w**2 * observable_weight_norm(obs)
    return g_theta, g_w, loss


# --------------------------------------------------------------------------
# optimizer and training loop


class Adam:
    """ADAM with bias-corrected moment estimates."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params, grads):
        params = np.asarray(params, dtype=float)
        grads = np.asarray(grads, dtype=float)
        if self.m is None:
            self.m = np.zeros_like(grads)
            self.v = np.zeros_like(grads)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * grads**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    theta: np.ndarray
    weight: float
    trace: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.trace[-1]


def train_explicit(model, data: Dataset, cfg: TrainConfig, theta0=None, weight0: float | None = None) -> TrainResult:
    """Full-batch ADAM on (theta, w); the loss is recorded before every step and once after the last."""
    circuit, _, _ = _circuit_parts(model)
    rng = np.random.default_rng(cfg.seed)
    if theta0 is None:
        theta = rng.normal(0.0, cfg.init_std, size=circuit.num_params)
    else:
        theta = _params(theta0, circuit.num_params).copy()
    w = 1.0 if weight0 is None else float(weight0)
    trainable_w = isinstance(model, ExplicitModel)
    opt_theta = Adam(cfg.lr_params, cfg.beta1, cfg.beta2, cfg.eps)
    opt_w = Adam(cfg.lr_weight, cfg.beta1, cfg.beta2, cfg.eps)
    trace: list[float] = []
    for step in range(cfg.steps + 1):
        g_theta, g_w, loss = loss_gradient(model, theta, data, w, cfg.reg, cfg.gradient)
        if not math.isfinite(loss) or loss > cfg.divergence_limit:
            raise TrainingError(f"training diverged at step {step}: loss {loss:.3e} exceeds {cfg.divergence_limit:.1e}")
        trace.append(loss)
        if step == cfg.steps:
            break
        theta = opt_theta.step(theta, g_theta)
        if trainable_w:
            w = float(opt_w.step(np.array([w]), np.array([g_w]))[0])
    return TrainResult(theta, w, trace)


# --------------------------------------------------------------------------
# parity learner


def parity_sample_size(d: int, delta: float) -> int:
    """M = ceil(32 ln(2d / delta)), enough for every per-bit loss estimate to be within 1/2."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return math.ceil(32 * math.log(2 * d / delta))


@dataclass(frozen=True)
class ParityLearnResult:
    support: tuple[int, ...]
    success: bool
    samples_used: int
    losses: np.ndarray


def parity_learn(dist, delta: float, rng: np.random.Generator, threshold: float = 1.5) -> ParityLearnResult:
    """Recover the parity support by testing one active rotation at a time.

    ``dist`` provides ``d``, ``sample(M, rng) -> (X, y)`` and the true support
    (used only to report success). For each bit i the single-qubit circuit with
    theta = (pi/2) e_i outputs x_i; its empirical loss against the labels
    averages near 1 for bits in the support and near 2 otherwise.
    """
    d = dist.d
    M = parity_sample_size(d, delta)
    X, y = dist.sample(M, rng)
    model = parity_model(d)
    theta = np.repeat((math.pi / 2) * np.eye(d), M, axis=0)
    preds = model.evaluate(theta, np.tile(X, (d, 1))).reshape(d, M)
    losses = np.mean((preds - y[None, :]) ** 2, axis=1)
    support = tuple(int(i) for i in np.flatnonzero(losses <= threshold))
    return ParityLearnResult(support, support == tuple(sorted(dist.support)), M, losses)


# --------------------------------------------------------------------------
# classical baselines


def linear_kernel(X, Y) -> np.ndarray:
    return np.asarray(X) @ np.asarray(Y).T


def gaussian_kernel(X, Y, gamma: float) -> np.ndarray:
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    sq = (X**2).sum(1)[:, None] + (Y**2).sum(1)[None, :] - 2 * X @ Y.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def ridge_from_c(C: float, M: int) -> float:
    """Regularization lambda = 1/(2C) added directly to K, expressed in krr_fit's lambda * M convention."""
    return 1.0 / (2.0 * C * M)


@dataclass
class BaselineResult:
    kind: str
    best: dict
    table: list[dict]
    alpha: np.ndarray
    support: np.ndarray
    gamma: float | None = None

    def predict(self, X) -> np.ndarray:
        if self.kind == "linear":
            return linear_kernel(X, self.support) @ self.alpha
        return gaussian_kernel(X, self.support, self.gamma) @ self.alpha


def baseline_grid_search(kind: str, train: Dataset, validation: Dataset, c_grid=C_GRID, gamma_grid=GAMMA_GRID):
    """Classical KRR over the C grid (and the gamma grid for the Gaussian kernel), picked by validation MSE."""
    if kind not in ("linear", "gaussian"):
        raise ValueError(f"unknown baseline kind {kind!r}")
    if not c_grid or (kind == "gaussian" and not gamma_grid):
        raise ValueError("empty hyperparameter grid")
    X, y = train.inputs, train.labels
    M, n = X.shape
    var = float(X.var())
    gammas = [None] if kind == "linear" else [g / (n * var) for g in gamma_grid]
    table = []
    best = None
    for gamma in gammas:
        K = linear_kernel(X, X) if gamma is None else gaussian_kernel(X, X, gamma)
        Kv = linear_kernel(validation.inputs, X) if gamma is None else gaussian_kernel(validation.inputs, X, gamma)
        for C in c_grid:
            alpha = krr_fit(K, y, ridge_from_c(C, M))
            row = {
                "C": C,
                "gamma": gamma,
                "train_loss": mse(K @ alpha, y),
                "val_loss": mse(Kv @ alpha, validation.labels),
            }
            table.append(row)
            if best is None or row["val_loss"] < best[0]["val_loss"]:
                best = (row, alpha, gamma)
    row, alpha, gamma = best
    return BaselineResult(kind, dict(row), table, alpha, X.copy(), gamma)
