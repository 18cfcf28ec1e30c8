"""Analysis instruments: error-landscape scans with filter-wise normalized
directions, divergence-regime phase maps, and gradient-norm-through-time
probes. Each artifact has a CSV writer with a documented header plus a JSON
metadata sidecar.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import SCHEMA_VERSION, __version__
from .autograd import SurrogateSpec, backward, softmax_cross_entropy
from .data import SequenceDataset
from .dynamics import divergence_boundary, spectral_radius
from .network import NetworkConfig, WeightSet, forward


# ---------------------------------------------------------------------------
# filter-normalized directions and the landscape scan


@dataclass
class GridSpec:
    """Symmetric (alpha, beta) grid; defaults to 51 points over [-1, 1]."""

    n_alpha: int = 51
    n_beta: int = 51
    extent: float = 1.0

    def alphas(self) -> np.ndarray:
        return self._axis(self.n_alpha)

    def betas(self) -> np.ndarray:
        return self._axis(self.n_beta)

    def _axis(self, n: int) -> np.ndarray:
        # exact endpoints and (for odd n) an exact 0 at the center cell
        return (2 * np.arange(n) - (n - 1)) * self.extent / (n - 1)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class LandscapeGrid:
    alphas: np.ndarray
    betas: np.ndarray
    losses: np.ndarray          # (n_alpha, n_beta); +inf marks failed cells
    eta: dict                   # direction one: {"w_in": ..., "w_rec": ...}
    xi: dict                    # direction two
    center_loss: float
    direction_seed: int = 0


def filter_normalized_directions(weights: WeightSet, seed: int):
    """Two independent random directions over (w_in, w_rec), row-normalized.

    Each direction is drawn i.i.d. standard normal; then every row (one
    output neuron's incoming weights, the dense-layer reading of a "filter")
    is rescaled to the norm of the matching row of the reference weights.
    Zero-norm reference rows zero the direction row.
    """
    rng = np.random.default_rng(seed)

    def one_direction():
        direction = {}
        for name in ("w_in", "w_rec"):
            ref = getattr(weights, name)
            d = rng.standard_normal(ref.shape)
            d_norm = np.linalg.norm(d, axis=1, keepdims=True)
            ref_norm = np.linalg.norm(ref, axis=1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                scaled = d * (ref_norm / d_norm)
            scaled[np.broadcast_to(ref_norm == 0.0, scaled.shape)] = 0.0
            direction[name] = scaled
        return direction

    return one_direction(), one_direction()


def dataset_loss(config: NetworkConfig, weights: WeightSet,
                 dataset: SequenceDataset, batch_size: int = 256) -> float:
    """Mean cross-entropy of the network over a dataset, batched."""
    total = 0.0
    for start in range(0, len(dataset), batch_size):
        seqs = dataset.sequences[start:start + batch_size]
        labels = dataset.labels[start:start + batch_size]
        _, logits = forward(config, weights, seqs)
        loss, _ = softmax_cross_entropy(logits, labels)
        total += loss * len(seqs)
    return total / len(dataset)


def scan_landscape_grid(loss_fn, weights: WeightSet, eta: dict, xi: dict,
                        grid: GridSpec, workers: int = 1):
    """Evaluate loss_fn(perturbed weights) on every grid cell.

    loss_fn takes a WeightSet; non-finite results (or numerical errors)
    become +inf sentinels. The output is identical regardless of worker
    count because cells are assembled by index.
    """
    alphas, betas = grid.alphas(), grid.betas()
    losses = np.full((len(alphas), len(betas)), np.inf)
    base_in, base_rec = weights.w_in, weights.w_rec

    def cell(idx):
        i, j = idx
        a, b = alphas[i], betas[j]
        if a == 0.0 and b == 0.0:
            perturbed = weights
        else:
            perturbed = weights.replace_arrays({
                "w_in": base_in + a * eta["w_in"] + b * xi["w_in"],
                "w_rec": base_rec + a * eta["w_rec"] + b * xi["w_rec"],
            })
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                value = float(loss_fn(perturbed))
        except FloatingPointError:
            return i, j, np.inf
        return i, j, value if np.isfinite(value) else np.inf

    indices = [(i, j) for i in range(len(alphas)) for j in range(len(betas))]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = pool.map(cell, indices)
    else:
        results = map(cell, indices)
    for i, j, value in results:
        losses[i, j] = value
    return alphas, betas, losses


def scan_landscape(config: NetworkConfig, weights: WeightSet,
                   dataset: SequenceDataset, grid: GridSpec | None = None,
                   direction_seed: int = 0, batch_size: int = 256,
                   workers: int = 1) -> LandscapeGrid:
    """Loss surface over theta* + alpha*eta + beta*xi, perturbing only the
    input and recurrent connections; every other parameter stays fixed."""
    grid = grid or GridSpec()
    eta, xi = filter_normalized_directions(weights, direction_seed)
    alphas, betas, losses = scan_landscape_grid(
        lambda w: dataset_loss(config, w, dataset, batch_size),
        weights, eta, xi, grid, workers=workers)
    center = losses[np.argmin(np.abs(alphas)), np.argmin(np.abs(betas))]
    return LandscapeGrid(alphas=alphas, betas=betas, losses=losses,
                         eta=eta, xi=xi, center_loss=float(center),
                         direction_seed=direction_seed)


# ---------------------------------------------------------------------------
# roughness summaries


@dataclass
class RoughnessMetrics:
    total_variation: float        # mean |difference| between 4-neighbors
    basin_width: float            # largest radius staying within 2x center
    convexity_violation: float    # fraction of interior cells with saddle sign
    coverage: float               # fraction of finite cells


def roughness_metrics(losses: np.ndarray, alphas=None, betas=None,
                      center_loss: float | None = None) -> RoughnessMetrics:
    """Scalar roughness summaries of one landscape grid.

    Grids containing +inf cells are summarized over their finite subgrid;
    ``coverage`` reports how much of the grid that is.
    """
    losses = np.asarray(losses, dtype=np.float64)
    n_a, n_b = losses.shape
    if alphas is None:
        alphas = GridSpec(n_alpha=n_a, n_beta=n_b).alphas()
    if betas is None:
        betas = GridSpec(n_alpha=n_a, n_beta=n_b).betas()
    finite = np.isfinite(losses)
    coverage = float(finite.mean())

    diffs = []
    horiz_ok = finite[:, :-1] & finite[:, 1:]
    if horiz_ok.any():
        diffs.append(np.abs(losses[:, 1:] - losses[:, :-1])[horiz_ok])
    vert_ok = finite[:-1, :] & finite[1:, :]
    if vert_ok.any():
        diffs.append(np.abs(losses[1:, :] - losses[:-1, :])[vert_ok])
    total_variation = float(np.concatenate(diffs).mean()) if diffs else np.nan

    ci, cj = int(np.argmin(np.abs(alphas))), int(np.argmin(np.abs(betas)))
    if center_loss is None:
        center_loss = losses[ci, cj]
    radius = np.hypot(alphas[:, None] - alphas[ci],
                      betas[None, :] - betas[cj])
    threshold = 2.0 * center_loss
    good = finite & (losses <= threshold)
    basin_width = 0.0
    for r in np.unique(np.sort(radius.ravel())):
        ring = radius <= r
        if np.all(good[ring]):
            basin_width = float(r)
        else:
            break

    violations = 0
    evaluated = 0
    for i in range(1, n_a - 1):
        for j in range(1, n_b - 1):
            stencil = losses[i - 1:i + 2, j - 1:j + 2]
            if not np.isfinite(stencil).all():
                continue
            f_xx = losses[i + 1, j] - 2 * losses[i, j] + losses[i - 1, j]
            f_yy = losses[i, j + 1] - 2 * losses[i, j] + losses[i, j - 1]
            f_xy = (losses[i + 1, j + 1] - losses[i + 1, j - 1]
                    - losses[i - 1, j + 1] + losses[i - 1, j - 1]) / 4.0
            evaluated += 1
            if f_xx * f_yy - f_xy * f_xy < 0.0:
                violations += 1
    convexity_violation = violations / evaluated if evaluated else np.nan

    return RoughnessMetrics(total_variation=total_variation,
                            basin_width=basin_width,
                            convexity_violation=float(convexity_violation),
                            coverage=coverage)


# ---------------------------------------------------------------------------
# phase map of the (omega, b) parameter plane


@dataclass
class PhaseMap:
    omegas: np.ndarray        # (n_omega,) cell centers
    bs: np.ndarray            # (n_b,) cell centers
    radius: np.ndarray        # (n_omega, n_b) spectral radius
    divergent: np.ndarray     # (n_omega, n_b) bool, radius > 1
    boundary: np.ndarray      # (n_omega,) p(omega); NaN where undefined
    delta: float


def phase_scan(delta: float, omega_range=(0.0, 100.0), b_range=(-3.0, 1.0),
               resolution=(200, 200)) -> PhaseMap:
    """Spectral-radius map over the (omega, b) plane with the analytic
    boundary curve. Cells are sampled at centers, so open range endpoints
    are never evaluated."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    n_omega, n_b = resolution
    olo, ohi = omega_range
    blo, bhi = b_range
    omegas = olo + (np.arange(n_omega) + 0.5) * (ohi - olo) / n_omega
    bs = blo + (np.arange(n_b) + 0.5) * (bhi - blo) / n_b
    radius = spectral_radius(bs[None, :], omegas[:, None], delta)
    feasible = delta * omegas < 1.0
    boundary = np.full(n_omega, np.nan)
    if feasible.any():
        boundary[feasible] = divergence_boundary(omegas[feasible], delta)
    return PhaseMap(omegas=omegas, bs=bs, radius=radius,
                    divergent=radius > 1.0, boundary=boundary, delta=delta)


# ---------------------------------------------------------------------------
# gradient-norm probe


def gradient_norm_probe(config: NetworkConfig, weights: WeightSet,
                        sequence: np.ndarray, mode: str = "subthreshold",
                        surrogate: SurrogateSpec = SurrogateSpec()) -> np.ndarray:
    """Per-timestep hidden-state adjoint norm during one backward pass.

    ``subthreshold`` silences spiking (theta_c = +inf) and injects a unit
    adjoint at the last state, exposing the bare within-neuron transport;
    ``spiking`` runs the production forward and seeds a uniform covector on
    the logits. Returns a non-negative array of length T.
    """
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim == 2:
        sequence = sequence[None]
    if mode not in ("subthreshold", "spiking"):
        raise ValueError(f"unknown probe mode {mode!r}")
    H = config.n_hidden
    if mode == "subthreshold":
        probe_config = dataclasses.replace(config, theta_c=np.inf)
        traj, _ = forward(probe_config, weights, sequence)
        seed = (np.full(H, 1.0 / np.sqrt(2.0 * H)),
                np.full(H, 1.0 / np.sqrt(2.0 * H)))
        _, norms = backward(probe_config, weights, traj,
                            np.zeros((1, config.n_out)), surrogate,
                            final_state_adjoint=seed,
                            collect_adjoint_norms=True)
    else:
        traj, logits = forward(config, weights, sequence)
        loss_grad = np.full((1, config.n_out), 1.0 / config.n_out)
        _, norms = backward(config, weights, traj, loss_grad, surrogate,
                            collect_adjoint_norms=True)
    return norms


# ---------------------------------------------------------------------------
# artifact emission: CSV + JSON metadata sidecar


def _sidecar(path) -> str:
    return str(path) + ".meta.json"


def _write_meta(path, kind: str, meta: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, "artifact": kind,
               "version": __version__}
    payload.update(meta)
    with open(_sidecar(path), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _fmt(x) -> str:
    return repr(float(x))


def write_landscape_csv(grid: LandscapeGrid, path, meta: dict | None = None):
    """Long-format landscape: header alpha,beta,loss; +inf cells as 'inf'."""
    with open(path, "w") as f:
        f.write("alpha,beta,loss\n")
        for i, a in enumerate(grid.alphas):
            for j, b in enumerate(grid.betas):
                f.write(f"{_fmt(a)},{_fmt(b)},{_fmt(grid.losses[i, j])}\n")
    _write_meta(path, "landscape", {
        "grid": {"n_alpha": len(grid.alphas), "n_beta": len(grid.betas),
                 "extent": float(max(grid.alphas.max(), grid.betas.max()))},
        "center_loss": grid.center_loss,
        "direction_seed": grid.direction_seed,
        **(meta or {})})


def write_phase_csv(pmap: PhaseMap, path, meta: dict | None = None):
    """Header omega,b,radius,divergent,p_boundary (boundary repeats per omega)."""
    with open(path, "w") as f:
        f.write("omega,b,radius,divergent,p_boundary\n")
        for i, omega in enumerate(pmap.omegas):
            pb = pmap.boundary[i]
            pb_txt = _fmt(pb) if np.isfinite(pb) else "nan"
            for j, b in enumerate(pmap.bs):
                f.write(f"{_fmt(omega)},{_fmt(b)},{_fmt(pmap.radius[i, j])},"
                        f"{int(pmap.divergent[i, j])},{pb_txt}\n")
    _write_meta(path, "phase", {"delta": pmap.delta, **(meta or {})})


def write_trace_csv(norms: np.ndarray, path, meta: dict | None = None):
    """Header t,adjoint_norm; one row per timestep."""
    with open(path, "w") as f:
        f.write("t,adjoint_norm\n")
        for t, v in enumerate(norms):
            f.write(f"{t},{_fmt(v)}\n")
    _write_meta(path, "gradflow", meta or {})
