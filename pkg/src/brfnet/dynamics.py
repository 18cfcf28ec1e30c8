"""Neuron dynamics: resonator, ALIF, and leaky-integrator step functions.

Everything here is a pure function operating elementwise on numpy arrays,
so a "neuron" argument may be a scalar, a hidden-layer vector of shape (H,),
or a batched (B, H) array. State containers are plain dataclasses holding
arrays; nothing in this module owns mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_DELTA = 0.01
DEFAULT_GAMMA = 0.9
DEFAULT_THETA_C = 1.0


def heaviside(v):
    """Spike nonlinearity. Returns 1.0 at exactly 0 (threshold touch spikes)."""
    return (np.asarray(v) >= 0.0).astype(np.float64)


@dataclass(frozen=True)
class ResonatorFlags:
    """Which of the three resonator extensions are active.

    The balanced variant is (True, True, True); the vanilla resonator is all
    False. ``hard_reset`` restores the original reset (real part to rest,
    imaginary part to 1 on spike); it is off in every headline variant and
    kept only for completeness.
    """

    refractory_period: bool = False
    smooth_reset: bool = False
    divergence_boundary: bool = False
    hard_reset: bool = False

    @property
    def uses_refractory_state(self) -> bool:
        return self.refractory_period or self.smooth_reset


BRF_FLAGS = ResonatorFlags(refractory_period=True, smooth_reset=True,
                           divergence_boundary=True)
RF_FLAGS = ResonatorFlags()


@dataclass
class ResonatorParams:
    """Per-neuron resonator parameters sharing one Euler step ``delta``."""

    omega: np.ndarray      # angular frequency, rad per unit time, > 0
    b_offset: np.ndarray   # dampening offset b' >= 0
    delta: float

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.float64)
        self.b_offset = np.asarray(self.b_offset, dtype=np.float64)
        self.delta = float(self.delta)
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if np.any(self.omega <= 0.0):
            raise ValueError("omega must be positive for every neuron")
        if np.any(self.delta * self.omega >= 1.0):
            raise ValueError(
                "delta*omega must stay below 1 (dampening boundary undefined)")
        if np.any(self.b_offset < 0.0):
            raise ValueError("b_offset must be non-negative")


@dataclass
class NeuronState:
    """Resonator state carried across time: complex membrane plus refractory."""

    u_re: np.ndarray
    u_im: np.ndarray
    q: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "NeuronState":
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))


def divergence_boundary(omega, delta):
    """Dampening value at which the discrete resonator sits on radius 1.

    p(w) = (-1 + sqrt(1 - (delta*w)^2)) / delta. Always negative for w > 0
    and monotonically decreasing in w. Only defined for delta*w < 1.
    """
    omega = np.asarray(omega, dtype=np.float64)
    delta = float(delta)
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if np.any(omega <= 0.0):
        raise ValueError("omega must be positive")
    dw = delta * omega
    if np.any(dw >= 1.0):
        raise ValueError("delta*omega must stay below 1")
    return (-1.0 + np.sqrt(1.0 - dw * dw)) / delta


def divergence_boundary_slope(omega, delta):
    """d/dw of the divergence boundary; used when backpropagating through it."""
    omega = np.asarray(omega, dtype=np.float64)
    dw = float(delta) * omega
    return -dw / np.sqrt(1.0 - dw * dw)


def effective_dampening(params: ResonatorParams, q, flags: ResonatorFlags):
    """Per-step dampening b(t) given the previous refractory value.

    With the divergence boundary on, the base dampening is p(w) - b'; off, the
    offset b' is read directly as the dampening magnitude, b = -b'. The smooth
    reset subtracts q on top of either base.
    """
    if flags.divergence_boundary:
        base = divergence_boundary(params.omega, params.delta) - params.b_offset
    else:
        base = -params.b_offset
    if flags.smooth_reset:
        return base - q
    return base


def resonator_step_full(state: NeuronState, params: ResonatorParams,
                        flags: ResonatorFlags, x,
                        theta_c=DEFAULT_THETA_C, gamma=DEFAULT_GAMMA,
                        spike_fn=heaviside):
    """One Euler step; additionally returns the pre-reset membrane.

    The pre-reset values equal the carried state except under ``hard_reset``;
    the backward sweep needs them because the spike argument is evaluated
    before the reset.
    """
    delta, omega = params.delta, params.omega
    b = effective_dampening(params, state.q, flags)
    u_re_pre = state.u_re + delta * (b * state.u_re - omega * state.u_im + x)
    u_im_pre = state.u_im + delta * (omega * state.u_re + b * state.u_im)
    if flags.refractory_period:
        theta = theta_c + state.q
    else:
        theta = theta_c + np.zeros_like(state.q)
    z = spike_fn(u_re_pre - theta)
    if flags.hard_reset:
        u_re = (1.0 - z) * u_re_pre
        u_im = (1.0 - z) * u_im_pre + z
    else:
        u_re, u_im = u_re_pre, u_im_pre
    if flags.uses_refractory_state:
        q = gamma * state.q + z
    else:
        q = np.zeros_like(state.q)
    return NeuronState(u_re, u_im, q), z, u_re_pre, u_im_pre


def resonator_step(state: NeuronState, params: ResonatorParams,
                   flags: ResonatorFlags, x,
                   theta_c=DEFAULT_THETA_C, gamma=DEFAULT_GAMMA,
                   spike_fn=heaviside):
    """One Euler step of the (balanced) resonator.

    Order of operations: dampening from the previous q, membrane update,
    threshold from the previous q, spike, refractory update with the
    same-step spike. ``spike_fn`` exists so tests can swap in a smooth
    relaxation; production callers leave the hard nonlinearity in place.
    """
    nxt, z, _, _ = resonator_step_full(state, params, flags, x,
                                       theta_c=theta_c, gamma=gamma,
                                       spike_fn=spike_fn)
    return nxt, z


@dataclass
class ALIFParams:
    """Adaptive leaky integrate-and-fire parameters, per neuron."""

    alpha: np.ndarray   # membrane decay in (0, 1)
    rho: np.ndarray     # adaptation decay in (0, 1)
    beta: np.ndarray    # adaptation strength >= 0
    b0: float = 1.0     # base threshold > 0

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.b0 = float(self.b0)
        if np.any(self.alpha <= 0.0) or np.any(self.alpha >= 1.0):
            raise ValueError("alpha must lie strictly inside (0, 1)")
        if np.any(self.rho <= 0.0) or np.any(self.rho >= 1.0):
            raise ValueError("rho must lie strictly inside (0, 1)")
        if np.any(self.beta < 0.0):
            raise ValueError("beta must be non-negative")
        if self.b0 <= 0.0:
            raise ValueError("b0 must be positive")


@dataclass
class ALIFState:
    """ALIF state: membrane potential and adaptation variable."""

    u: np.ndarray
    eta: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "ALIFState":
        return cls(np.zeros(shape), np.zeros(shape))


def alif_threshold(params: ALIFParams, eta):
    return params.b0 + params.beta * eta


def alif_step(state: ALIFState, params: ALIFParams, x, z_prev,
              spike_fn=heaviside):
    """One ALIF step with soft reset and adaptive threshold.

    u(t) = a*u(t-1) + (1-a)*x - z(t-1)*theta(t-1)
    eta(t) = r*eta(t-1) + (1-r)*z(t-1),  theta(t) = b0 + beta*eta(t)
    """
    theta_prev = alif_threshold(params, state.eta)
    eta = params.rho * state.eta + (1.0 - params.rho) * z_prev
    u = params.alpha * state.u + (1.0 - params.alpha) * x - z_prev * theta_prev
    z = spike_fn(u - alif_threshold(params, eta))
    return ALIFState(u, eta), z


def li_step(y, decay, x):
    """Leaky-integrator readout: y(t) = a*y(t-1) + (1-a)*x. No spiking."""
    return decay * y + (1.0 - decay) * x


def state_jacobian(b, omega, delta):
    """Jacobian of the resonator state map, d s(t) / d s(t-1).

    Returns [[1+delta*b, -delta*omega], [delta*omega, 1+delta*b]], stacked in
    the trailing two axes when b/omega are arrays. This matrix is a scaled
    rotation: it multiplies every vector's norm by exactly the spectral
    radius.
    """
    b, omega = np.broadcast_arrays(np.asarray(b, dtype=np.float64),
                                   np.asarray(omega, dtype=np.float64))
    diag = 1.0 + delta * b
    off = delta * omega
    return np.stack([np.stack([diag, -off], axis=-1),
                     np.stack([off, diag], axis=-1)], axis=-2)


def spectral_radius(b, omega, delta):
    """Largest absolute eigenvalue of the state Jacobian.

    The eigenvalues are 1 + delta*b +/- i*delta*omega, so the radius is
    hypot(1 + delta*b, delta*omega). Radius 1 is reached exactly when b sits
    on the divergence boundary.
    """
    b = np.asarray(b, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    return np.hypot(1.0 + delta * b, delta * omega)
