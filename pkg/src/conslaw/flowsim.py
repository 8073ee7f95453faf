"""Numerical gradient flows for linear and ReLU networks.

The flow theta' = -grad E(theta) is integrated with fixed-step RK4 (or
explicit Euler). Gradients are computed in closed form by backpropagation
through the layer structure of :mod:`conslaw.models`, so the only error
source is time discretization.

Rows of ``X`` are inputs; a network computes ``x^T U1 ... Uq`` (with ReLU
between layers for the ReLU kinds), matching the parameter layout used by
the symbolic code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .models import ModelSpec, layout
from .poly import Poly

LOSSES = ("quadratic", "logistic")
INTEGRATORS = ("rk4", "euler")

__all__ = [
    "FlowConfig",
    "Trajectory",
    "forward",
    "loss_and_grad",
    "simulate",
    "compile_poly",
    "conservation_drift",
    "riemannian_metric",
    "riemannian_residual",
    "random_config",
]


@dataclass
class FlowConfig:
    spec: ModelSpec
    X: np.ndarray
    Y: np.ndarray
    theta_init: np.ndarray
    loss: str = "quadratic"
    T: float = 1.0
    steps: int = 1000
    integrator: str = "rk4"

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.asarray(self.Y, dtype=float)
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        self.theta_init = np.asarray(self.theta_init, dtype=float)
        self.validate()

    def validate(self) -> None:
        spec = self.spec
        if spec.kind == "custom":
            raise ValueError("flows are only defined for network kinds")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if len(self.X) == 0:
            raise ValueError("dataset must be nonempty")
        if self.X.shape[1] != spec.widths[0]:
            raise ValueError(f"inputs have width {self.X.shape[1]}, model expects {spec.widths[0]}")
        if self.Y.shape != (len(self.X), spec.widths[-1]):
            raise ValueError(f"targets have shape {self.Y.shape}, expected {(len(self.X), spec.widths[-1])}")
        D = sum(b.size for b in layout(spec))
        if self.theta_init.shape != (D,):
            raise ValueError(f"theta_init has shape {self.theta_init.shape}, expected ({D},)")
        if self.loss == "logistic":
            if spec.widths[-1] != 1:
                raise ValueError("logistic loss needs a scalar output")
            if not np.all(np.isin(self.Y, (-1.0, 1.0))):
                raise ValueError("logistic labels must be -1 or +1")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "loss": self.loss,
            "X": self.X.tolist(),
            "Y": self.Y.tolist(),
            "theta_init": self.theta_init.tolist(),
            "T": self.T,
            "steps": self.steps,
            "integrator": self.integrator,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlowConfig":
        return cls(
            spec=ModelSpec.from_dict(d["spec"]),
            X=d["X"],
            Y=d["Y"],
            theta_init=d["theta_init"],
            loss=d.get("loss", "quadratic"),
            T=float(d.get("T", 1.0)),
            steps=int(d.get("steps", 1000)),
            integrator=d.get("integrator", "rk4"),
        )


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    relu_activation_flips: int = 0
    truncated: bool = False
    diagnostic: str = ""

    def summary(self) -> dict:
        return {
            "steps_taken": len(self.times) - 1,
            "t_final": float(self.times[-1]),
            "energy_initial": float(self.energies[0]),
            "energy_final": float(self.energies[-1]),
            "relu_activation_flips": self.relu_activation_flips,
            "truncated": self.truncated,
            "diagnostic": self.diagnostic,
        }

    def to_csv(self) -> str:
        D = self.states.shape[1]
        lines = ["t," + ",".join(f"theta_{i + 1}" for i in range(D))]
        for t, s in zip(self.times, self.states):
            lines.append(repr(float(t)) + "," + ",".join(repr(float(v)) for v in s))
        return "\n".join(lines) + "\n"


# -- model evaluation -----------------------------------------------------


def _unpack(spec: ModelSpec, theta: np.ndarray):
    weights, biases = [], []
    for b in layout(spec):
        chunk = theta[b.offset:b.offset + b.size]
        if b.name.startswith("U"):
            weights.append(chunk.reshape(b.shape))
            biases.append(None)
        else:
            biases[-1] = chunk
    return weights, biases


def _is_relu(spec: ModelSpec) -> bool:
    return spec.kind != "linear"


def _forward_batch(spec: ModelSpec, theta: np.ndarray, X: np.ndarray):
    weights, biases = _unpack(spec, theta)
    acts = [X]
    pre = []
    a = X
    q = len(weights)
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W
        if b is not None:
            z = z + b
        pre.append(z)
        # ReLU convention: inputs exactly on a hyperplane are inactive
        a = np.where(z > 0, z, 0.0) if (_is_relu(spec) and i < q - 1) else z
        acts.append(a)
    return acts, pre, weights, biases


def forward(spec: ModelSpec, theta: Sequence[float], x: Sequence[float]) -> np.ndarray:
    """Network output at a single input ``x``."""
    acts, _, _, _ = _forward_batch(spec, np.asarray(theta, float), np.atleast_2d(np.asarray(x, float)))
    return acts[-1][0]


def activation_pattern(spec: ModelSpec, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Boolean activity of every hidden neuron on every sample."""
    if not _is_relu(spec):
        return np.zeros(0, dtype=bool)
    _, pre, _, _ = _forward_batch(spec, theta, X)
    return np.concatenate([z > 0 for z in pre[:-1]], axis=1)


def _loss(loss: str, out: np.ndarray, Y: np.ndarray):
    if loss == "quadratic":
        r = out - Y
        return 0.5 * float(np.sum(r * r)), r
    m = Y * out
    # log(1 + exp(-m)), derivative -y / (1 + exp(m))
    value = float(np.sum(np.logaddexp(0.0, -m)))
    return value, -Y * np.exp(-np.logaddexp(0.0, m))


def loss_and_grad(config: FlowConfig, theta: np.ndarray) -> tuple[float, np.ndarray]:
    spec = config.spec
    acts, pre, weights, biases = _forward_batch(spec, theta, config.X)
    value, delta = _loss(config.loss, acts[-1], config.Y)
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        if biases[i] is not None:
            grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ weights[i].T
            if _is_relu(spec):
                delta = delta * (pre[i - 1] > 0)
    grad = np.empty_like(theta)
    for b in layout(spec):
        i = int(b.name[1:]) - 1
        g = grads_w[i] if b.name.startswith("U") else grads_b[i]
        grad[b.offset:b.offset + b.size] = g.ravel()
    return value, grad


def simulate(config: FlowConfig) -> Trajectory:
    """Fixed-step integration of theta' = -grad E(theta) on [0, T]."""
    h = config.T / config.steps
    theta = config.theta_init.copy()
    D = theta.size
    states = np.empty((config.steps + 1, D))
    times = np.empty(config.steps + 1)
    energies = np.empty(config.steps + 1)
    states[0] = theta
    times[0] = 0.0
    e0, _ = loss_and_grad(config, theta)
    energies[0] = e0
    relu = _is_relu(config.spec)
    pattern = activation_pattern(config.spec, theta, config.X) if relu else None
    flips = 0

    def field(th):
        nonlocal flips
        if relu:
            # stages on the far side of a hyperplane break smoothness too
            flips += int(np.count_nonzero(activation_pattern(config.spec, th, config.X) != pattern))
        return -loss_and_grad(config, th)[1]

    n = config.steps
    diagnostic = ""
    truncated = False
    # a blow-up is reported through ``truncated`` rather than warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(config.steps):
            if config.integrator == "rk4":
                k1 = field(theta)
                k2 = field(theta + 0.5 * h * k1)
                k3 = field(theta + 0.5 * h * k2)
                k4 = field(theta + h * k3)
                theta = theta + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            else:
                theta = theta + h * field(theta)
            if not np.all(np.isfinite(theta)):
                n = k
                truncated = True
                diagnostic = f"non-finite state at step {k + 1} (t={(k + 1) * h:g}); trajectory truncated"
                break
            states[k + 1] = theta
            times[k + 1] = (k + 1) * h
            energies[k + 1] = loss_and_grad(config, theta)[0]
            if relu:
                new = activation_pattern(config.spec, theta, config.X)
                flips += int(np.count_nonzero(new != pattern))
                pattern = new
    return Trajectory(
        times=times[:n + 1],
        states=states[:n + 1],
        energies=energies[:n + 1],
        relu_activation_flips=flips,
        truncated=truncated,
        diagnostic=diagnostic,
    )


# -- conservation diagnostics ---------------------------------------------


def compile_poly(p: Poly) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (float) and exponent matrix for vectorized evaluation."""
    if not p.terms:
        return np.zeros(0), np.zeros((0, p.ambient_dim), dtype=int)
    monos, coeffs = zip(*p.sorted_terms())
    return np.array([float(c) for c in coeffs]), np.array(monos, dtype=int)


def _eval_many(compiled, states: np.ndarray) -> np.ndarray:
    coeffs, exps = compiled
    if coeffs.size == 0:
        return np.zeros(len(states))
    powers = np.prod(states[:, None, :] ** exps[None, :, :], axis=2)
    return powers @ coeffs


def conservation_drift(traj: Trajectory, laws: Sequence[Poly]) -> list[dict]:
    """Maximum drift of each law along a trajectory.

    Relative drift divides by the magnitude ``sum_a |c_a| |theta_0^a|`` of
    the law at the initial point (its terms added without cancellation), so
    laws whose value happens to be near zero are not penalized.
    """
    D = traj.states.shape[1]
    out = []
    for h in laws:
        if h.ambient_dim != D:
            raise ValueError(f"law dimension {h.ambient_dim} != trajectory dimension {D}")
        comp = compile_poly(h)
        vals = _eval_many(comp, traj.states)
        absd = float(np.max(np.abs(vals - vals[0]))) if len(vals) else 0.0
        scale = float(np.abs(_eval_many((np.abs(comp[0]), comp[1]), traj.states[:1]))[0])
        rel = absd / scale if scale > 0 else absd
        out.append({"law": str(h), "abs_drift": absd, "rel_drift": rel})
    return out


def _scalar_u_blocks(spec: ModelSpec):
    if spec.kind != "linear" or len(spec.widths) != 3 or spec.widths[1] != 1:
        raise ValueError("the metric check needs a linear [a, 1, b] model")
    if spec.widths[0] != 1 and spec.widths[2] != 1:
        raise ValueError("one of the two layers must be a scalar")
    blocks = layout(spec)
    U1, U2 = blocks
    # the scalar layer is u, the other is v
    return (U1, U2) if U1.size == 1 else (U2, U1)


def riemannian_metric(z: np.ndarray, delta: float) -> np.ndarray:
    """|z|_delta I + |z|_delta^{-1} z z^T with |z|_delta = delta + sqrt(delta^2 + |z|^2)."""
    zz = float(z @ z)
    root = np.sqrt(delta * delta + zz)
    # for delta < 0 the direct sum cancels when |z| is small
    nz = delta + root if delta >= 0 else (zz / (root - delta) if zz > 0 else 0.0)
    if nz == 0.0:
        return np.zeros((len(z), len(z)))
    return nz * np.eye(len(z)) + np.outer(z, z) / nz


def riemannian_residual(config: FlowConfig, traj: Trajectory | None = None) -> float:
    """Max relative mismatch between dz/dt and -M(z) grad f(z) along a run.

    ``z = u v`` is the product of the scalar layer and the vector layer;
    dz/dt is estimated by centered differences on the simulated path.
    """
    if config.loss != "quadratic":
        raise ValueError("the metric check uses the quadratic loss")
    ublk, vblk = _scalar_u_blocks(config.spec)
    if traj is None:
        traj = simulate(config)
    th0 = config.theta_init
    u0 = th0[ublk.offset]
    v0 = th0[vblk.offset:vblk.offset + vblk.size]
    delta = 0.5 * (u0 * u0 - float(v0 @ v0))
    S = traj.states
    u = S[:, ublk.offset]
    V = S[:, vblk.offset:vblk.offset + vblk.size]
    Z = u[:, None] * V
    h = traj.times[1] - traj.times[0]
    w = config.spec.widths
    worst = 0.0
    for k in range(1, len(S) - 1):
        zdot = (Z[k + 1] - Z[k - 1]) / (2 * h)
        phi = Z[k].reshape(w[0], w[2])
        resid = config.X @ phi - config.Y
        grad_f = (config.X.T @ resid).ravel()
        rhs = -riemannian_metric(Z[k], delta) @ grad_f
        denom = float(np.linalg.norm(rhs))
        err = float(np.linalg.norm(zdot - rhs))
        if denom == 0.0:
            if err == 0.0:
                continue
            return float("inf")
        worst = max(worst, err / denom)
    return worst


def random_config(
    spec: ModelSpec,
    seed: int,
    n_samples: int = 5,
    loss: str = "quadratic",
    T: float = 1.0,
    steps: int = 2000,
    integrator: str = "rk4",
) -> FlowConfig:
    """Dataset and initialization drawn uniformly in [-1, 1]."""
    rng = np.random.default_rng(seed)
    D = sum(b.size for b in layout(spec))
    X = rng.uniform(-1, 1, size=(n_samples, spec.widths[0]))
    if loss == "logistic":
        Y = rng.choice([-1.0, 1.0], size=(n_samples, 1))
    else:
        Y = rng.uniform(-1, 1, size=(n_samples, spec.widths[-1]))
    theta = rng.uniform(-1, 1, size=D)
    return FlowConfig(spec, X, Y, theta, loss=loss, T=T, steps=steps, integrator=integrator)
