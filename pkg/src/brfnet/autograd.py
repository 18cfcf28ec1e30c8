"""Reverse-mode BPTT over a cached trajectory, Adam, and feasibility projection.

The backward sweep is written by hand against the exact forward recurrences:
the within-neuron adjoint is carried through the transpose of the 2x2 state
Jacobian (a scaled rotation), spike nonlinearities contribute through the
double-Gaussian surrogate derivative, and every parameter gradient is
accumulated per timestep and averaged over the batch by the incoming loss
gradient. No general-purpose autodiff is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .dynamics import divergence_boundary, divergence_boundary_slope
from .network import (
    NetworkConfig,
    Trajectory,
    WeightSet,
    alif_params_of,
    forward,
    resonator_params_of,
    sigmoid,
)

SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class SurrogateSpec:
    """Double-Gaussian pseudo-derivative: a sharp positive Gaussian minus a
    wide shallow one, so distant-from-threshold neurons still receive
    (slightly negative) gradient."""

    h: float = 0.15
    sigma: float = 0.5
    scale: float = 6.0

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        if not self.scale > 1.0:
            raise ValueError("scale must exceed 1")
        if not 0.0 <= self.h < 1.0:
            raise ValueError("h must lie in [0, 1)")


def _gauss(v, sigma):
    return np.exp(-(v * v) / (2.0 * sigma * sigma)) / (sigma * SQRT_2PI)


def surrogate_derivative(v, spec: SurrogateSpec = SurrogateSpec()):
    """(1+h) N(v; 0, sigma) - h N(v; 0, scale*sigma); even, positive at 0."""
    v = np.asarray(v, dtype=np.float64)
    return ((1.0 + spec.h) * _gauss(v, spec.sigma)
            - spec.h * _gauss(v, spec.scale * spec.sigma))


def surrogate_antiderivative(v, spec: SurrogateSpec = SurrogateSpec()):
    """Smooth spike relaxation whose exact derivative is the surrogate.

    Runs from 0 at -inf to 1 at +inf. Swapping it in for the Heaviside gives
    the only forward pass against which finite differences of the loss are a
    valid oracle for the surrogate-based backward sweep.
    """
    v = np.asarray(v, dtype=np.float64)
    return ((1.0 + spec.h) * ndtr(v / spec.sigma)
            - spec.h * ndtr(v / (spec.scale * spec.sigma)))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient on the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    B = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(B), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(B), labels] -= 1.0
    return loss, grad / B


def backward(config: NetworkConfig, weights: WeightSet, traj: Trajectory,
             loss_grad: np.ndarray,
             surrogate: SurrogateSpec = SurrogateSpec(),
             backprop_through_q: bool = True,
             final_state_adjoint=None,
             collect_adjoint_norms: bool = False):
    """Reverse sweep t = T..1 over a cached trajectory.

    ``loss_grad`` is dLoss/dlogits of shape (B, n_out); gradients come out
    summed over the batch, so a batch-mean loss yields batch-mean gradients.
    ``final_state_adjoint`` injects an extra adjoint (per neuron) on the
    hidden state at the last timestep, which the gradient-flow probes use.
    With ``collect_adjoint_norms`` the full-state adjoint norm is recorded at
    every timestep and returned alongside the gradients.
    """
    if config.is_resonator:
        return _backward_resonator(config, weights, traj, loss_grad, surrogate,
                                   backprop_through_q, final_state_adjoint,
                                   collect_adjoint_norms)
    return _backward_alif(config, weights, traj, loss_grad, surrogate,
                          final_state_adjoint, collect_adjoint_norms)


def _readout_time_weights(config: NetworkConfig, T: int) -> np.ndarray:
    w = np.zeros(T)
    if config.readout == "mean":
        w[:] = 1.0 / T
    else:
        w[-1] = 1.0
    return w


def _backward_resonator(config, weights, traj, loss_grad, surrogate,
                        backprop_through_q, final_state_adjoint,
                        collect_adjoint_norms):
    B, T, H = traj.z.shape
    flags = config.flags
    delta = config.delta
    omega = weights.omega
    alpha_out = weights.alpha_out
    params = resonator_params_of(config, weights)
    q_active = flags.uses_refractory_state
    time_w = _readout_time_weights(config, T)

    if flags.divergence_boundary:
        p_slope = divergence_boundary_slope(omega, delta)
        b_base = divergence_boundary(omega, delta) - weights.b_offset
    else:
        p_slope = None
        b_base = -weights.b_offset

    g = {name: np.zeros_like(arr) for name, arr in weights.arrays().items()}
    g_alpha_out = np.zeros_like(alpha_out)

    gu = np.zeros((B, H))
    gv = np.zeros((B, H))
    gq = np.zeros((B, H))
    gz_carry = np.zeros((B, H))
    gy_carry = np.zeros((B, config.n_out))
    if final_state_adjoint is not None:
        seed_u, seed_v = final_state_adjoint
        gu = gu + np.asarray(seed_u, dtype=np.float64)
        gv = gv + np.asarray(seed_v, dtype=np.float64)
    norms = np.zeros(T) if collect_adjoint_norms else None

    for t in range(T - 1, -1, -1):
        z_t = traj.z[:, t]
        if t > 0:
            u_prev, v_prev = traj.u_re[:, t - 1], traj.u_im[:, t - 1]
            q_prev, z_prev = traj.q[:, t - 1], traj.z[:, t - 1]
            y_prev = traj.y[:, t - 1]
        else:
            u_prev = np.zeros((B, H)); v_prev = np.zeros((B, H))
            q_prev = np.zeros((B, H)); z_prev = np.zeros((B, H))
            y_prev = np.zeros((B, config.n_out))

        # readout chain: y_t = a*y_{t-1} + (1-a)*(w_out z_t)
        gy_t = loss_grad * time_w[t] + alpha_out * gy_carry
        yhat_t = z_t @ weights.w_out.T
        g_alpha_out += (gy_t * (y_prev - yhat_t)).sum(axis=0)
        g_yhat = gy_t * (1.0 - alpha_out)
        g["w_out"] += g_yhat.T @ z_t
        gz = g_yhat @ weights.w_out + gz_carry
        if q_active and backprop_through_q:
            gz = gz + gq  # q_t = gamma*q_{t-1} + z_t

        # spike site (argument uses the pre-reset membrane)
        if flags.hard_reset:
            pre_re, pre_im = traj.pre_u_re[:, t], traj.pre_u_im[:, t]
            gz = gz + gu * (-pre_re) + gv * (1.0 - pre_im)
            gu = gu * (1.0 - z_t)
            gv = gv * (1.0 - z_t)
            s_re = pre_re
        else:
            s_re = traj.u_re[:, t]
        theta_t = config.theta_c + (q_prev if flags.refractory_period else 0.0)
        g_s = gz * surrogate_derivative(s_re - theta_t, surrogate)
        gu = gu + g_s

        if collect_adjoint_norms:
            norms[t] = np.sqrt((gu * gu + gv * gv).sum())

        # membrane update backward; b_t recomputed from the cached q_{t-1}
        b_t = b_base - q_prev if flags.smooth_reset else b_base
        gb = delta * (u_prev * gu + v_prev * gv)
        gc = delta * gu
        g["omega"] += delta * (u_prev * gv - v_prev * gu).sum(axis=0)
        gu_next = (1.0 + delta * b_t) * gu + delta * omega * gv
        gv_next = (1.0 + delta * b_t) * gv - delta * omega * gu

        # dampening chain: b_t = base(omega, b') [- q_{t-1}]
        gb_total = gb.sum(axis=0)
        g["b_offset"] -= gb_total
        if flags.divergence_boundary:
            g["omega"] += gb_total * p_slope

        # refractory chain into q_{t-1}
        gq_next = np.zeros((B, H))
        if q_active and backprop_through_q:
            gq_next = config.gamma * gq
            if flags.refractory_period:
                gq_next -= g_s
            if flags.smooth_reset:
                gq_next -= gb

        # synaptic input chain: c_t = w_in inp_t + w_rec z_{t-1}
        g["w_in"] += gc.T @ traj.inputs[:, t]
        g["w_rec"] += gc.T @ z_prev
        gz_carry = gc @ weights.w_rec

        gu, gv, gq = gu_next, gv_next, gq_next
        gy_carry = gy_t

    g["alpha_out_raw"] = g_alpha_out * alpha_out * (1.0 - alpha_out)
    if collect_adjoint_norms:
        return g, norms
    return g


def _backward_alif(config, weights, traj, loss_grad, surrogate,
                   final_state_adjoint, collect_adjoint_norms):
    B, T, H = traj.z.shape
    params = alif_params_of(config, weights)
    alpha, rho, beta = params.alpha, params.rho, params.beta
    alpha_out = weights.alpha_out
    time_w = _readout_time_weights(config, T)

    g = {name: np.zeros_like(arr) for name, arr in weights.arrays().items()}
    g_alpha_out = np.zeros_like(alpha_out)
    g_alpha = np.zeros(H)
    g_rho = np.zeros(H)

    gu_carry = np.zeros((B, H))
    geta_carry = np.zeros((B, H))
    gtheta_carry = np.zeros((B, H))
    gz_carry = np.zeros((B, H))
    gy_carry = np.zeros((B, config.n_out))
    if final_state_adjoint is not None:
        seed_u, seed_eta = final_state_adjoint
        gu_carry = gu_carry + np.asarray(seed_u, dtype=np.float64)
        geta_carry = geta_carry + np.asarray(seed_eta, dtype=np.float64)
    norms = np.zeros(T) if collect_adjoint_norms else None

    for t in range(T - 1, -1, -1):
        z_t = traj.z[:, t]
        u_t, eta_t = traj.mem[:, t], traj.eta[:, t]
        if t > 0:
            u_prev, eta_prev = traj.mem[:, t - 1], traj.eta[:, t - 1]
            z_prev, y_prev = traj.z[:, t - 1], traj.y[:, t - 1]
        else:
            u_prev = np.zeros((B, H)); eta_prev = np.zeros((B, H))
            z_prev = np.zeros((B, H)); y_prev = np.zeros((B, config.n_out))
        theta_prev = params.b0 + beta * eta_prev

        gy_t = loss_grad * time_w[t] + alpha_out * gy_carry
        yhat_t = z_t @ weights.w_out.T
        g_alpha_out += (gy_t * (y_prev - yhat_t)).sum(axis=0)
        g_yhat = gy_t * (1.0 - alpha_out)
        g["w_out"] += g_yhat.T @ z_t
        gz = g_yhat @ weights.w_out + gz_carry

        g_s = gz * surrogate_derivative(u_t - (params.b0 + beta * eta_t),
                                        surrogate)
        gu_t = gu_carry + g_s
        gtheta_t = gtheta_carry - g_s
        geta_t = geta_carry + beta * gtheta_t
        g["beta_adapt"] += (eta_t * gtheta_t).sum(axis=0)

        if collect_adjoint_norms:
            norms[t] = np.sqrt((gu_t * gu_t + geta_t * geta_t).sum())

        # u_t = alpha u_{t-1} + (1-alpha) c_t - z_{t-1} theta_{t-1}
        c_t = traj.inputs[:, t] @ weights.w_in.T + z_prev @ weights.w_rec.T
        g_alpha += (gu_t * (u_prev - c_t)).sum(axis=0)
        gc = (1.0 - alpha) * gu_t
        # eta_t = rho eta_{t-1} + (1-rho) z_{t-1}
        g_rho += (geta_t * (eta_prev - z_prev)).sum(axis=0)

        g["w_in"] += gc.T @ traj.inputs[:, t]
        g["w_rec"] += gc.T @ z_prev

        gz_carry = gc @ weights.w_rec + (1.0 - rho) * geta_t - theta_prev * gu_t
        gtheta_carry = -z_prev * gu_t
        gu_carry = alpha * gu_t
        geta_carry = rho * geta_t
        gy_carry = gy_t

    g["alpha_raw"] = g_alpha * alpha * (1.0 - alpha)
    g["rho_raw"] = g_rho * rho * (1.0 - rho)
    g["alpha_out_raw"] = g_alpha_out * alpha_out * (1.0 - alpha_out)
    if collect_adjoint_norms:
        return g, norms
    return g


@dataclass
class AdamState:
    """Adam moments and hyperparameters; step counts completed updates."""

    lr: float = 0.075
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    param_lr: dict = field(default_factory=dict)   # per-parameter lr override

    @classmethod
    def init(cls, arrays: dict, lr: float = 0.075, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8,
             param_lr: dict | None = None) -> "AdamState":
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                   m={k: np.zeros_like(a) for k, a in arrays.items()},
                   v={k: np.zeros_like(a) for k, a in arrays.items()},
                   param_lr=dict(param_lr or {}))


def adam_step(arrays: dict, grads: dict, state: AdamState):
    """One bias-corrected Adam update; purely functional in all inputs."""
    step = state.step + 1
    bc1 = 1.0 - state.beta1 ** step
    bc2 = 1.0 - state.beta2 ** step
    new_arrays, new_m, new_v = {}, {}, {}
    for name, w in arrays.items():
        gr = grads[name]
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * gr
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * gr * gr
        lr = state.param_lr.get(name, state.lr)
        new_arrays[name] = w - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_m[name], new_v[name] = m, v
    return new_arrays, AdamState(lr=state.lr, beta1=state.beta1,
                                 beta2=state.beta2, eps=state.eps, step=step,
                                 m=new_m, v=new_v, param_lr=state.param_lr)


def project_params(weights: WeightSet, delta: float,
                   omega_floor: float = 0.1, margin: float = 0.01) -> WeightSet:
    """Clamp neuron parameters back into their feasible region.

    b' >= 0 and omega in [omega_floor, (1-margin)/delta]; ALIF adaptation
    strength >= 0. Idempotent; all other parameters pass through untouched.
    """
    updates = {}
    if weights.b_offset is not None:
        updates["b_offset"] = np.maximum(weights.b_offset, 0.0)
    if weights.omega is not None:
        updates["omega"] = np.clip(weights.omega, omega_floor,
                                   (1.0 - margin) / delta)
    if weights.beta_adapt is not None:
        updates["beta_adapt"] = np.maximum(weights.beta_adapt, 0.0)
    return weights.replace_arrays(updates) if updates else weights


def clip_gradients(grads: dict, max_norm: float) -> dict:
    """Global-norm gradient clipping; no-op when max_norm <= 0."""
    if max_norm <= 0.0:
        return grads
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total <= max_norm:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


def relaxed_forward(config: NetworkConfig, weights: WeightSet, batch,
                    surrogate: SurrogateSpec = SurrogateSpec()):
    """Forward pass with the Heaviside replaced by the surrogate's
    antiderivative; the only forward whose true gradient is what backward
    computes, hence the oracle used by all finite-difference checks."""
    return forward(config, weights, batch,
                   spike_fn=lambda v: surrogate_antiderivative(v, surrogate))


def finite_difference_check(config: NetworkConfig, weights: WeightSet,
                            batch, labels,
                            surrogate: SurrogateSpec = SurrogateSpec(),
                            step: float = 1e-5):
    """Compare backward's gradients with central differences of the
    surrogate-relaxed loss. Returns (max relative error, per-parameter dict).

    Relative error per entry is |a - n| / max(|a|, |n|, 1e-6); the floor keeps
    near-zero gradient pairs from registering as spurious mismatches.
    """
    batch = np.asarray(batch, dtype=np.float64)
    labels = np.asarray(labels)
    arrays = {k: v.copy() for k, v in weights.arrays().items()}
    base = weights.replace_arrays(arrays)

    def loss_of():
        _, logits = relaxed_forward(config, base, batch, surrogate)
        return softmax_cross_entropy(logits, labels)[0]

    traj, logits = relaxed_forward(config, base, batch, surrogate)
    _, gl = softmax_cross_entropy(logits, labels)
    analytic = backward(config, base, traj, gl, surrogate)

    errors = {}
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_of()
            flat[i] = orig - step
            lm = loss_of()
            flat[i] = orig
            numeric[i] = (lp - lm) / (2.0 * step)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-6)
        errors[name] = float((np.abs(a - numeric) / denom).max())
    return max(errors.values()), errors


def gradcheck_suite(step: float = 1e-5, seed: int = 1):
    """Finite-difference suite over the four resonator ablations plus ALIF.

    Uses 2-hidden-neuron networks unrolled for 4 steps on random inputs.
    Returns an ordered dict variant name -> max relative error.
    """
    from .dynamics import ResonatorFlags
    from .network import InitSpec, init_network

    variants = {
        "rf": ResonatorFlags(),
        "rf+rp": ResonatorFlags(refractory_period=True),
        "rf+rp+sr": ResonatorFlags(refractory_period=True, smooth_reset=True),
        "brf": ResonatorFlags(refractory_period=True, smooth_reset=True,
                              divergence_boundary=True),
    }
    rng = np.random.default_rng(seed)
    results = {}
    for name, flags in variants.items():
        config = NetworkConfig(n_in=2, n_hidden=2, n_out=2, neuron_kind="brf",
                               flags=flags, seed=seed)
        weights = init_network(config, InitSpec(omega_range=(5.0, 10.0),
                                                b_offset_range=(0.2, 0.8)))
        batch = rng.normal(0.0, 2.0, (3, 4, 2))
        labels = rng.integers(0, 2, 3)
        results[name], _ = finite_difference_check(config, weights, batch,
                                                   labels, step=step)
    config = NetworkConfig(n_in=2, n_hidden=2, n_out=2, neuron_kind="alif",
                           seed=seed)
    weights = init_network(config)
    batch = rng.normal(0.0, 2.0, (3, 4, 2))
    labels = rng.integers(0, 2, 3)
    results["alif"], _ = finite_difference_check(config, weights, batch,
                                                 labels, step=step)
    return results
