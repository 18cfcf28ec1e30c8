"""Single-layer recurrent spiking network: init, forward unroll, checkpoints.

The architecture is one recurrent hidden layer of spiking neurons (resonator
family or ALIF) feeding leaky-integrator readout neurons. The forward pass
caches every per-timestep quantity the backward sweep needs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import SCHEMA_VERSION
from .dynamics import (
    ALIFParams,
    ALIFState,
    BRF_FLAGS,
    NeuronState,
    ResonatorFlags,
    ResonatorParams,
    alif_step,
    heaviside,
    li_step,
    resonator_step_full,
)

CHECKPOINT_FORMAT_VERSION = 1

RESONATOR_KINDS = ("brf", "rf")


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))


@dataclass
class NetworkConfig:
    """Structural description of one network; the seed fixes initialization."""

    n_in: int
    n_hidden: int
    n_out: int
    neuron_kind: str = "brf"            # "brf", "rf" (resonator family) or "alif"
    flags: ResonatorFlags = field(default_factory=lambda: BRF_FLAGS)
    delta: float = 0.01
    seed: int = 0
    gamma: float = 0.9
    theta_c: float = 1.0
    alif_b0: float = 1.0
    readout: str = "mean"               # "mean" over time or "last" timestep

    def __post_init__(self):
        if min(self.n_in, self.n_hidden, self.n_out) < 1:
            raise ValueError("all dimensions must be >= 1")
        if self.neuron_kind not in RESONATOR_KINDS + ("alif",):
            raise ValueError(f"unknown neuron_kind {self.neuron_kind!r}")
        if self.readout not in ("mean", "last"):
            raise ValueError(f"unknown readout {self.readout!r}")
        if self.neuron_kind == "rf":
            # plain resonator: no refractory machinery unless flags say so
            pass

    @property
    def is_resonator(self) -> bool:
        return self.neuron_kind in RESONATOR_KINDS

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["flags"] = dataclasses.asdict(self.flags)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        d["flags"] = ResonatorFlags(**d["flags"])
        return cls(**d)


@dataclass
class InitSpec:
    """Parameter ranges for initialization; all draws are uniform."""

    omega_range: tuple = (5.0, 10.0)
    b_offset_range: tuple = (0.1, 1.0)
    alif_alpha_range: tuple = (0.9, 0.99)
    alif_rho_range: tuple = (0.95, 0.999)
    alif_beta_init: float = 1.8
    alpha_out_init: float = 0.99


@dataclass
class WeightSet:
    """All trainable arrays of one network.

    Decay-type parameters (readout decay, ALIF decays) are stored as raw
    logits and squashed through a sigmoid wherever they are used, so any
    optimizer update keeps them inside (0, 1). Resonator omega/b_offset are
    stored directly and kept feasible by projection after each update.
    """

    w_in: np.ndarray                      # (H, n_in)
    w_rec: np.ndarray                     # (H, H)
    w_out: np.ndarray                     # (n_out, H)
    alpha_out_raw: np.ndarray             # (n_out,)
    omega: np.ndarray | None = None       # (H,) resonator family
    b_offset: np.ndarray | None = None    # (H,)
    alpha_raw: np.ndarray | None = None   # (H,) ALIF membrane decay logit
    rho_raw: np.ndarray | None = None     # (H,) ALIF adaptation decay logit
    beta_adapt: np.ndarray | None = None  # (H,) ALIF adaptation strength

    def arrays(self) -> dict:
        """Ordered name -> array view of every present parameter."""
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is not None:
                out[f.name] = v
        return out

    def replace_arrays(self, arrays: dict) -> "WeightSet":
        return dataclasses.replace(self, **arrays)

    def copy(self) -> "WeightSet":
        return self.replace_arrays({k: v.copy() for k, v in self.arrays().items()})

    @property
    def alpha_out(self) -> np.ndarray:
        return sigmoid(self.alpha_out_raw)


def init_network(config: NetworkConfig, init: InitSpec | None = None) -> WeightSet:
    """Draw a fresh WeightSet; bitwise deterministic given config.seed."""
    init = init or InitSpec()
    rng = np.random.default_rng(config.seed)

    def xavier(shape, fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, shape)

    H, n_in, n_out = config.n_hidden, config.n_in, config.n_out
    w_in = xavier((H, n_in), n_in, H)
    w_rec = xavier((H, H), H, H)
    w_out = xavier((n_out, H), H, n_out)
    alpha_out_raw = np.full(n_out, logit(init.alpha_out_init))

    if config.is_resonator:
        lo, hi = init.omega_range
        if not (0.0 < lo <= hi):
            raise ValueError("omega_range must be positive")
        if config.delta * hi >= 1.0:
            raise ValueError(
                f"omega_range {init.omega_range} violates delta*omega < 1 "
                f"at delta={config.delta}")
        blo, bhi = init.b_offset_range
        if blo < 0.0:
            raise ValueError("b_offset_range must be non-negative")
        omega = rng.uniform(lo, hi, H)
        b_offset = rng.uniform(blo, bhi, H)
        return WeightSet(w_in=w_in, w_rec=w_rec, w_out=w_out,
                         alpha_out_raw=alpha_out_raw,
                         omega=omega, b_offset=b_offset)

    alpha_raw = logit(rng.uniform(*init.alif_alpha_range, H))
    rho_raw = logit(rng.uniform(*init.alif_rho_range, H))
    beta_adapt = np.full(H, float(init.alif_beta_init))
    return WeightSet(w_in=w_in, w_rec=w_rec, w_out=w_out,
                     alpha_out_raw=alpha_out_raw,
                     alpha_raw=alpha_raw, rho_raw=rho_raw,
                     beta_adapt=beta_adapt)


def resonator_params_of(config: NetworkConfig, weights: WeightSet) -> ResonatorParams:
    return ResonatorParams(omega=weights.omega, b_offset=weights.b_offset,
                           delta=config.delta)


def alif_params_of(config: NetworkConfig, weights: WeightSet) -> ALIFParams:
    return ALIFParams(alpha=sigmoid(weights.alpha_raw),
                      rho=sigmoid(weights.rho_raw),
                      beta=weights.beta_adapt, b0=config.alif_b0)


@dataclass
class Trajectory:
    """All per-timestep quantities cached by one forward unroll.

    Arrays are (B, T, ...); index t holds the state *after* step t+1 of the
    unroll, with the all-zero initial state implicit at t = -1.
    """

    inputs: np.ndarray                    # (B, T, n_in)
    z: np.ndarray                         # (B, T, H) spikes
    y: np.ndarray                         # (B, T, n_out) readout membrane
    u_re: np.ndarray | None = None        # (B, T, H) resonator family
    u_im: np.ndarray | None = None
    q: np.ndarray | None = None
    pre_u_re: np.ndarray | None = None    # pre-reset membrane, hard_reset only
    pre_u_im: np.ndarray | None = None
    mem: np.ndarray | None = None         # (B, T, H) ALIF membrane
    eta: np.ndarray | None = None         # (B, T, H) ALIF adaptation

    @property
    def n_steps(self) -> int:
        return self.z.shape[1]


def forward(config: NetworkConfig, weights: WeightSet, batch: np.ndarray,
            spike_fn=heaviside):
    """Unroll the network over a (B, T, n_in) batch.

    Returns (Trajectory, logits) with logits of shape (B, n_out). Pure in
    (weights, batch): repeated calls agree bitwise. ``spike_fn`` swaps the
    spike nonlinearity (used by the smooth-relaxation gradient checks). A
    subthreshold run (config.theta_c = np.inf) silences spiking entirely.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[2] != config.n_in:
        raise ValueError(
            f"batch must be (B, T, {config.n_in}), got {batch.shape}")
    B, T, _ = batch.shape
    H, n_out = config.n_hidden, config.n_out
    theta_c = config.theta_c

    z = np.zeros((B, T, H))
    y = np.zeros((B, T, n_out))
    alpha_out = weights.alpha_out
    z_prev = np.zeros((B, H))
    y_prev = np.zeros((B, n_out))

    if config.is_resonator:
        params = resonator_params_of(config, weights)
        state = NeuronState.zeros((B, H))
        u_re = np.zeros((B, T, H))
        u_im = np.zeros((B, T, H))
        q = np.zeros((B, T, H))
        hard = config.flags.hard_reset
        pre_re = np.zeros((B, T, H)) if hard else None
        pre_im = np.zeros((B, T, H)) if hard else None
        for t in range(T):
            x = batch[:, t] @ weights.w_in.T + z_prev @ weights.w_rec.T
            state, z_t, u_re_pre, u_im_pre = resonator_step_full(
                state, params, config.flags, x, theta_c=theta_c,
                gamma=config.gamma, spike_fn=spike_fn)
            if hard:
                pre_re[:, t], pre_im[:, t] = u_re_pre, u_im_pre
            u_re[:, t], u_im[:, t], q[:, t] = state.u_re, state.u_im, state.q
            z[:, t] = z_t
            y_prev = li_step(y_prev, alpha_out, z_t @ weights.w_out.T)
            y[:, t] = y_prev
            z_prev = z_t
        traj = Trajectory(inputs=batch, z=z, y=y, u_re=u_re, u_im=u_im, q=q,
                          pre_u_re=pre_re, pre_u_im=pre_im)
    else:
        params = alif_params_of(config, weights)
        state = ALIFState.zeros((B, H))
        mem = np.zeros((B, T, H))
        eta = np.zeros((B, T, H))
        for t in range(T):
            x = batch[:, t] @ weights.w_in.T + z_prev @ weights.w_rec.T
            state, z_t = alif_step(state, params, x, z_prev, spike_fn=spike_fn)
            mem[:, t], eta[:, t] = state.u, state.eta
            z[:, t] = z_t
            y_prev = li_step(y_prev, alpha_out, z_t @ weights.w_out.T)
            y[:, t] = y_prev
            z_prev = z_t
        traj = Trajectory(inputs=batch, z=z, y=y, mem=mem, eta=eta)

    if config.readout == "mean":
        logits = y.mean(axis=1)
    else:
        logits = y[:, -1].copy()
    return traj, logits


@dataclass
class SpikeCount:
    total: int
    per_neuron: np.ndarray


def count_spikes(trajectory: Trajectory) -> SpikeCount:
    """Exact spike counts; the per-neuron counts sum to the total."""
    per_neuron = trajectory.z.sum(axis=(0, 1))
    return SpikeCount(total=int(round(per_neuron.sum())),
                      per_neuron=np.rint(per_neuron).astype(np.int64))


def save_checkpoint(path, config: NetworkConfig, weights: WeightSet,
                    adam_state=None, extra: dict | None = None) -> None:
    """Write a single self-describing .npz checkpoint with a format tag."""
    payload = {
        "format_version": np.array(CHECKPOINT_FORMAT_VERSION),
        "schema_version": np.array(SCHEMA_VERSION),
        "config_json": np.array(json.dumps(config.to_dict())),
        "extra_json": np.array(json.dumps(extra or {})),
    }
    for name, arr in weights.arrays().items():
        payload[f"weights/{name}"] = arr
    if adam_state is not None:
        payload["adam/hyper_json"] = np.array(json.dumps({
            "lr": adam_state.lr, "beta1": adam_state.beta1,
            "beta2": adam_state.beta2, "eps": adam_state.eps,
            "step": adam_state.step, "param_lr": adam_state.param_lr,
        }))
        for name, arr in adam_state.m.items():
            payload[f"adam/m/{name}"] = arr
        for name, arr in adam_state.v.items():
            payload[f"adam/v/{name}"] = arr
    with open(path, "wb") as f:
        np.savez(f, **payload)


@dataclass
class Checkpoint:
    config: NetworkConfig
    weights: WeightSet
    adam_state: object | None
    extra: dict


def load_checkpoint(path) -> Checkpoint:
    from .autograd import AdamState  # cycle-free: autograd does not import network

    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(
                f"checkpoint format {version} not supported "
                f"(expected {CHECKPOINT_FORMAT_VERSION})")
        config = NetworkConfig.from_dict(json.loads(str(data["config_json"])))
        extra = json.loads(str(data["extra_json"]))
        warrays = {k.split("/", 1)[1]: data[k] for k in data.files
                   if k.startswith("weights/")}
        weights = WeightSet(**warrays)
        adam = None
        if "adam/hyper_json" in data.files:
            hyper = json.loads(str(data["adam/hyper_json"]))
            m = {k.split("/", 2)[2]: data[k] for k in data.files
                 if k.startswith("adam/m/")}
            v = {k.split("/", 2)[2]: data[k] for k in data.files
                 if k.startswith("adam/v/")}
            adam = AdamState(lr=hyper["lr"], beta1=hyper["beta1"],
                             beta2=hyper["beta2"], eps=hyper["eps"],
                             step=hyper["step"], m=m, v=v,
                             param_lr=hyper.get("param_lr", {}))
    return Checkpoint(config=config, weights=weights, adam_state=adam, extra=extra)
