"""Operator-facing command line: train models, simulate single neurons, and
emit every CSV/JSON artifact the figure renderer consumes.

Subcommands: train, simulate, landscape, phase, gradflow, gradcheck.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Run directories are self-describing: resolved config, seeds, version and
schema tags are always written alongside the metrics.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import SCHEMA_VERSION, __version__
from .analysis import (
    GridSpec,
    dataset_loss,
    file_sha256,
    gradient_norm_probe,
    phase_scan,
    scan_landscape,
    write_landscape_csv,
    write_phase_csv,
    write_trace_csv,
)
from .autograd import (
    AdamState,
    SurrogateSpec,
    adam_step,
    backward,
    clip_gradients,
    gradcheck_suite,
    project_params,
    softmax_cross_entropy,
)
from .data import (
    DataFormatError,
    PermutationSpec,
    SequenceDataset,
    load_mnist,
    permute,
    synthetic_resonance_task,
    to_sequential,
)
from .dynamics import (
    NeuronState,
    ResonatorFlags,
    ResonatorParams,
    divergence_boundary,
    resonator_step,
)
from .network import (
    InitSpec,
    NetworkConfig,
    count_spikes,
    forward,
    init_network,
    load_checkpoint,
    save_checkpoint,
)

DATA_ROOT_ENV = "BRFNET_DATA"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

METRIC_COLUMNS = ("train_loss", "train_acc", "val_acc", "test_acc",
                  "spikes_per_neuron_per_step")

MODEL_DEFAULT_FLAGS = {"brf": "rp,sr,db", "rf": "none"}
FLAG_TOKENS = {"rp": "refractory_period", "sr": "smooth_reset",
               "db": "divergence_boundary", "hard": "hard_reset"}


class NumericalFailure(RuntimeError):
    """Raised when training hits a non-finite loss; carries the location."""

    def __init__(self, epoch, batch, message):
        super().__init__(f"aborting at epoch {epoch}, batch {batch}: {message}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class RunConfig:
    """Flat, TOML-serializable description of one training run."""

    task: str = "synthetic"        # synthetic | smnist | psmnist
    model: str = "brf"             # brf | rf | alif
    flags: str = ""                # "" -> model default; tokens rp,sr,db,hard
    hidden: int = 256
    batch_size: int = 0            # 0 -> task default (64 synthetic, 256 mnist)
    epochs: int = 0                # 0 -> task default (10 synthetic, 20 mnist)
    lr: float = 0.075
    lr_neuron: float = -1.0        # negative -> same as lr
    delta: float = 0.01
    gamma: float = 0.9
    theta_c: float = 1.0
    readout: str = "mean"
    surrogate_h: float = 0.15
    surrogate_sigma: float = 0.5
    surrogate_scale: float = 6.0
    omega_init_lo: float = 0.0     # 0 -> task default
    omega_init_hi: float = 0.0
    b_offset_init_lo: float = 0.1
    b_offset_init_hi: float = 1.0
    alpha_out_init: float = 0.99
    alif_alpha_lo: float = 0.9
    alif_alpha_hi: float = 0.99
    alif_rho_lo: float = 0.95
    alif_rho_hi: float = 0.999
    alif_beta: float = 1.8
    alif_b0: float = 1.0
    seed: int = 0
    runs: int = 1
    data_seed: int = 1000          # dataset generation / subset selection
    data_root: str = ""            # falls back to $BRFNET_DATA
    train_subset: int = 0          # 0 -> full split
    test_subset: int = 0
    permutation_seed: int = 42
    synth_classes: int = 4
    synth_steps: int = 200
    synth_noise: float = 0.05
    synth_train: int = 2000
    synth_val: int = 400
    synth_test: int = 400
    backprop_through_q: bool = True
    grad_clip: float = 0.0
    val_checkpoint_acc: float = 0.5
    omega_floor: float = 0.1
    omega_margin: float = 0.01
    landscape_subset: int = 2048
    workers: int = 1

    def resolved(self) -> "RunConfig":
        """Fill task-dependent defaults; idempotent."""
        cfg = dataclasses.replace(self)
        if cfg.epochs == 0:
            cfg.epochs = 10 if cfg.task == "synthetic" else 20
        if cfg.batch_size == 0:
            cfg.batch_size = 64 if cfg.task == "synthetic" else 256
        if cfg.omega_init_lo == 0.0 and cfg.omega_init_hi == 0.0:
            if cfg.task == "synthetic":
                cfg.omega_init_lo, cfg.omega_init_hi = 5.0, 10.0
            else:
                cfg.omega_init_lo, cfg.omega_init_hi = 15.0, 50.0
        if cfg.flags == "":
            if cfg.model in MODEL_DEFAULT_FLAGS:
                cfg.flags = MODEL_DEFAULT_FLAGS[cfg.model]
            else:
                cfg.flags = "none"
        if cfg.task not in ("synthetic", "smnist", "psmnist"):
            raise ValueError(f"unknown task {cfg.task!r}")
        if cfg.model not in ("brf", "rf", "alif"):
            raise ValueError(f"unknown model {cfg.model!r}")
        return cfg

    def resonator_flags(self) -> ResonatorFlags:
        tokens = [t.strip() for t in self.flags.split(",") if t.strip()]
        if tokens == ["none"]:
            return ResonatorFlags()
        kwargs = {}
        for tok in tokens:
            if tok not in FLAG_TOKENS:
                raise ValueError(f"unknown flag token {tok!r} "
                                 f"(expected rp, sr, db, hard or none)")
            kwargs[FLAG_TOKENS[tok]] = True
        return ResonatorFlags(**kwargs)

    def surrogate(self) -> SurrogateSpec:
        return SurrogateSpec(h=self.surrogate_h, sigma=self.surrogate_sigma,
                             scale=self.surrogate_scale)

    def resolve_data_root(self) -> str:
        return self.data_root or os.environ.get(DATA_ROOT_ENV, "")


def write_toml(cfg: RunConfig, path) -> None:
    """Flat key-value TOML; human-editable run record."""
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            lines.append(f"{f.name} = {'true' if v else 'false'}")
        elif isinstance(v, (int, np.integer)):
            lines.append(f"{f.name} = {v}")
        elif isinstance(v, float):
            lines.append(f"{f.name} = {v!r}")
        else:
            lines.append(f"{f.name} = {json.dumps(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_toml(path) -> RunConfig:
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**raw)


# ---------------------------------------------------------------------------
# dataset assembly


def build_datasets(cfg: RunConfig) -> dict:
    """Train/val/test splits for the configured task, deterministically."""
    if cfg.task == "synthetic":
        common = dict(n_classes=cfg.synth_classes, n_steps=cfg.synth_steps,
                      noise_level=cfg.synth_noise,
                      omega_range=(cfg.omega_init_lo, cfg.omega_init_hi),
                      delta=cfg.delta)
        return {
            "train": synthetic_resonance_task(cfg.data_seed,
                                              n_samples=cfg.synth_train,
                                              split="train", **common),
            "val": synthetic_resonance_task(cfg.data_seed + 1,
                                            n_samples=cfg.synth_val,
                                            split="val", **common),
            "test": synthetic_resonance_task(cfg.data_seed + 2,
                                             n_samples=cfg.synth_test,
                                             split="test", **common),
        }

    root = cfg.resolve_data_root()
    if not root:
        raise FileNotFoundError(
            f"no dataset root configured; pass --data-root or set "
            f"${DATA_ROOT_ENV}")
    images, labels = load_mnist(root, "train")
    test_images, test_labels = load_mnist(root, "test")
    train = to_sequential(images[:-6000], labels[:-6000], split="train")
    val = to_sequential(images[-6000:], labels[-6000:], split="val")
    test = to_sequential(test_images, test_labels, split="test")
    if cfg.task == "psmnist":
        spec = PermutationSpec.from_seed(cfg.permutation_seed, length=784)
        train, val, test = (permute(d, spec) for d in (train, val, test))
    rng = np.random.default_rng(cfg.data_seed)
    if cfg.train_subset and cfg.train_subset < len(train):
        idx = rng.permutation(len(train))[:cfg.train_subset]
        train = train.subset(np.sort(idx))
    if cfg.test_subset and cfg.test_subset < len(test):
        idx = rng.permutation(len(test))[:cfg.test_subset]
        test = test.subset(np.sort(idx))
    return {"train": train, "val": val, "test": test}


def network_config(cfg: RunConfig, n_in: int, n_out: int,
                   seed: int) -> NetworkConfig:
    kind = "alif" if cfg.model == "alif" else cfg.model
    return NetworkConfig(
        n_in=n_in, n_hidden=cfg.hidden, n_out=n_out, neuron_kind=kind,
        flags=cfg.resonator_flags(), delta=cfg.delta, seed=seed,
        gamma=cfg.gamma, theta_c=cfg.theta_c, alif_b0=cfg.alif_b0,
        readout=cfg.readout)


def init_spec(cfg: RunConfig) -> InitSpec:
    return InitSpec(omega_range=(cfg.omega_init_lo, cfg.omega_init_hi),
                    b_offset_range=(cfg.b_offset_init_lo, cfg.b_offset_init_hi),
                    alif_alpha_range=(cfg.alif_alpha_lo, cfg.alif_alpha_hi),
                    alif_rho_range=(cfg.alif_rho_lo, cfg.alif_rho_hi),
                    alif_beta_init=cfg.alif_beta,
                    alpha_out_init=cfg.alpha_out_init)


# ---------------------------------------------------------------------------
# training


def evaluate(config: NetworkConfig, weights, dataset: SequenceDataset,
             batch_size: int):
    """(mean loss, accuracy) over a dataset, batched, deterministic order."""
    total_loss = 0.0
    correct = 0
    for start in range(0, len(dataset), batch_size):
        seqs = dataset.sequences[start:start + batch_size]
        labels = dataset.labels[start:start + batch_size]
        _, logits = forward(config, weights, seqs)
        loss, _ = softmax_cross_entropy(logits, labels)
        total_loss += loss * len(seqs)
        correct += int((logits.argmax(axis=1) == labels).sum())
    return total_loss / len(dataset), correct / len(dataset)


def train_single(cfg: RunConfig, seed: int, out_dir: Path,
                 datasets: dict | None = None) -> dict:
    """One training run; writes metrics.csv + checkpoints + summary.json.

    The metrics CSV is a pure function of (config, seed): wall-clock timing
    goes to summary.json only, keeping the CSV bitwise reproducible.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    datasets = datasets or build_datasets(cfg)
    train, val, test = datasets["train"], datasets["val"], datasets["test"]

    config = network_config(cfg, train.n_in, train.n_classes, seed)
    weights = init_network(config, init_spec(cfg))
    neuron_lr = cfg.lr if cfg.lr_neuron < 0 else cfg.lr_neuron
    param_lr = {name: neuron_lr for name in
                ("omega", "b_offset", "alpha_raw", "rho_raw", "beta_adapt",
                 "alpha_out_raw") if name in weights.arrays()}
    adam = AdamState.init(weights.arrays(), lr=cfg.lr, param_lr=param_lr)
    surrogate = cfg.surrogate()
    # distinct stream from init_network's: tagged with a fixed salt
    shuffle_rng = np.random.default_rng([seed, 0x51])

    rows = []
    val50_path = None
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train))
        epoch_loss = 0.0
        epoch_correct = 0
        spike_total = 0.0
        spike_cells = 0
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            seqs = train.sequences[idx]
            labels = train.labels[idx]
            traj, logits = forward(config, weights, seqs)
            loss, gl = softmax_cross_entropy(logits, labels)
            if not np.isfinite(loss):
                raise NumericalFailure(epoch, bi, f"loss={loss}")
            grads = backward(config, weights, traj, gl, surrogate,
                             backprop_through_q=cfg.backprop_through_q)
            grads = clip_gradients(grads, cfg.grad_clip)
            arrays, adam = adam_step(weights.arrays(), grads, adam)
            weights = project_params(weights.replace_arrays(arrays),
                                     cfg.delta, omega_floor=cfg.omega_floor,
                                     margin=cfg.omega_margin)
            bad = [k for k, a in weights.arrays().items()
                   if not np.isfinite(a).all()]
            if bad:
                raise NumericalFailure(
                    epoch, bi, f"non-finite parameters after update: {bad}")
            epoch_loss += loss * len(idx)
            epoch_correct += int((logits.argmax(axis=1) == labels).sum())
            spike_total += float(traj.z.sum())
            spike_cells += traj.z.size
        _, val_acc = evaluate(config, weights, val, cfg.batch_size)
        _, test_acc = evaluate(config, weights, test, cfg.batch_size)
        row = {
            "epoch": epoch,
            "train_loss": epoch_loss / len(train),
            "train_acc": epoch_correct / len(train),
            "val_acc": val_acc,
            "test_acc": test_acc,
            "spikes_per_neuron_per_step": spike_total / spike_cells,
        }
        rows.append(row)
        extra = {"epoch": epoch, "val_acc": val_acc, "seed": seed,
                 "run_config": dataclasses.asdict(cfg)}
        save_checkpoint(out_dir / "checkpoint_latest.npz", config, weights,
                        adam, extra=extra)
        if val50_path is None and val_acc >= cfg.val_checkpoint_acc:
            val50_path = out_dir / "checkpoint_val50.npz"
            save_checkpoint(val50_path, config, weights, adam, extra=extra)

    write_metrics_csv(out_dir / "metrics.csv", rows)
    summary = {
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "epochs": cfg.epochs,
        "final": rows[-1],
        "wall_time_s": time.perf_counter() - t_start,
        "val50_checkpoint": val50_path.name if val50_path else None,
    }
    with open(out_dir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return summary


def write_metrics_csv(path, rows) -> None:
    with open(path, "w") as f:
        f.write("epoch," + ",".join(METRIC_COLUMNS) + "\n")
        for row in rows:
            cells = [str(row["epoch"])]
            cells += [repr(float(row[c])) for c in METRIC_COLUMNS]
            f.write(",".join(cells) + "\n")


def read_metrics_csv(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        rows.append({k: float(v) for k, v in zip(header, line.split(","))})
    return rows


def write_aggregate_csv(path, per_run_rows) -> None:
    """Mean/std (ddof=0) per epoch across runs, one column pair per metric."""
    epochs = [int(r["epoch"]) for r in per_run_rows[0]]
    header = ["epoch"]
    for c in METRIC_COLUMNS:
        header += [f"{c}_mean", f"{c}_std"]
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for i, epoch in enumerate(epochs):
            cells = [str(epoch)]
            for c in METRIC_COLUMNS:
                vals = np.array([rows[i][c] for rows in per_run_rows])
                cells += [repr(float(vals.mean())), repr(float(vals.std()))]
            f.write(",".join(cells) + "\n")


def cmd_train(args) -> int:
    cfg = read_toml(args.config) if args.config else RunConfig()
    cfg = apply_overrides(cfg, args)
    cfg = cfg.resolved()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_toml(cfg, out_dir / "config.toml")
    datasets = build_datasets(cfg)

    if cfg.runs == 1:
        summary = train_single(cfg, cfg.seed, out_dir, datasets)
        print(f"run complete: test_acc={summary['final']['test_acc']:.4f} "
              f"({out_dir / 'metrics.csv'})")
        return EXIT_OK

    per_run_rows = []
    summaries = []
    for i in range(cfg.runs):
        run_dir = out_dir / f"run{i:02d}"
        summary = train_single(cfg, cfg.seed + i, run_dir, datasets)
        summaries.append(summary)
        per_run_rows.append(read_metrics_csv(run_dir / "metrics.csv"))
        print(f"run {i}: seed={cfg.seed + i} "
              f"test_acc={summary['final']['test_acc']:.4f}")
    write_aggregate_csv(out_dir / "metrics_agg.csv", per_run_rows)
    with open(out_dir / "summary.json", "w") as f:
        json.dump({"version": __version__, "schema_version": SCHEMA_VERSION,
                   "seeds": [cfg.seed + i for i in range(cfg.runs)],
                   "runs": summaries}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"aggregate written: {out_dir / 'metrics_agg.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def simulate_trace(omega: float, b_offset: float, flags: ResonatorFlags,
                   delta: float, gamma: float, theta_c: float, steps: int,
                   stimulus: np.ndarray):
    """Single-neuron trace; returns dict of per-step arrays."""
    try:
        params = ResonatorParams(omega=np.array([omega]),
                                 b_offset=np.array([b_offset]), delta=delta)
    except ValueError as e:
        hint = ""
        if omega > 0 and delta * omega < 1:
            p = float(divergence_boundary(omega, delta))
            hint = f" (divergence boundary at omega={omega}: p={p:.6f})"
        raise ValueError(str(e) + hint) from e
    state = NeuronState.zeros(1)
    out = {k: np.zeros(steps) for k in
           ("x", "u_re", "u_im", "u_abs", "theta", "z")}
    for t in range(steps):
        theta = theta_c + (state.q[0] if flags.refractory_period else 0.0)
        state, z = resonator_step(state, params, flags,
                                  np.array([stimulus[t]]), theta_c=theta_c,
                                  gamma=gamma)
        out["x"][t] = stimulus[t]
        out["u_re"][t] = state.u_re[0]
        out["u_im"][t] = state.u_im[0]
        out["u_abs"][t] = np.hypot(state.u_re[0], state.u_im[0])
        out["theta"][t] = theta
        out["z"][t] = z[0]
    return out


def build_stimulus(kind: str, steps: int, amp: float, t0: int,
                   freq: float, delta: float) -> np.ndarray:
    stim = np.zeros(steps)
    if kind == "pulse":
        stim[t0] = amp
    elif kind == "constant":
        stim[t0:] = amp
    elif kind == "sine":
        t = np.arange(steps) * delta
        stim = amp * np.sin(freq * t)
    elif kind != "none":
        raise ValueError(f"unknown stimulus {kind!r}")
    return stim


def cmd_simulate(args) -> int:
    if args.b is not None:
        if args.b_offset is not None:
            raise ValueError("pass either --b or --b-offset, not both")
        if args.b > 0:
            raise ValueError("--b is a dampening and must be <= 0")
        b_offset = -args.b
        flags = RunConfig(flags=args.flags or "none").resonator_flags()
        if flags.divergence_boundary:
            raise ValueError("--b sets the dampening directly; use "
                             "--b-offset with the db flag instead")
    else:
        b_offset = args.b_offset if args.b_offset is not None else 0.1
        flags = RunConfig(flags=args.flags or "rp,sr,db").resonator_flags()
    theta_c = float(args.theta_c)
    stim = build_stimulus(args.stim, args.steps, args.amp, args.stim_t0,
                          args.stim_freq, args.delta)
    trace = simulate_trace(args.omega, b_offset, flags, args.delta,
                           args.gamma, theta_c, args.steps, stim)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("t,x,u_re,u_im,u_abs,theta,z\n")
        for t in range(args.steps):
            f.write(",".join([str(t)] + [repr(float(trace[k][t])) for k in
                                         ("x", "u_re", "u_im", "u_abs",
                                          "theta", "z")]) + "\n")
    meta = {"schema_version": SCHEMA_VERSION, "artifact": "trace",
            "version": __version__, "omega": args.omega,
            "b_offset": b_offset, "delta": args.delta, "gamma": args.gamma,
            "theta_c": theta_c, "flags": dataclasses.asdict(flags),
            "stimulus": args.stim, "amp": args.amp}
    with open(str(path) + ".meta.json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"trace written: {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analysis commands


def landscape_subset_for(cfg: RunConfig, datasets: dict) -> SequenceDataset:
    train = datasets["train"]
    n = min(cfg.landscape_subset, len(train))
    rng = np.random.default_rng([cfg.data_seed, 0x1A])
    idx = np.sort(rng.permutation(len(train))[:n])
    return train.subset(idx, split="train")


def cmd_landscape(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    run_cfg = RunConfig(**ck.extra["run_config"])
    if args.data_root:
        run_cfg = dataclasses.replace(run_cfg, data_root=args.data_root)
    if args.subset:
        run_cfg = dataclasses.replace(run_cfg, landscape_subset=args.subset)
    datasets = build_datasets(run_cfg)
    subset = landscape_subset_for(run_cfg, datasets)
    grid_spec = GridSpec(n_alpha=args.grid_n, n_beta=args.grid_n,
                         extent=args.extent)
    grid = scan_landscape(ck.config, ck.weights, subset, grid_spec,
                          direction_seed=args.direction_seed,
                          batch_size=run_cfg.batch_size,
                          workers=args.workers)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_landscape_csv(grid, path, meta={
        "checkpoint": str(args.checkpoint),
        "checkpoint_sha256": file_sha256(args.checkpoint),
        "subset_size": len(subset), "split": "train",
        "data_seed": run_cfg.data_seed,
        "checkpoint_epoch": ck.extra.get("epoch"),
        "checkpoint_val_acc": ck.extra.get("val_acc")})
    print(f"landscape written: {path} (center loss {grid.center_loss:.6f})")
    return EXIT_OK


def cmd_phase(args) -> int:
    pmap = phase_scan(args.delta, omega_range=(args.omega_lo, args.omega_hi),
                      b_range=(args.b_lo, args.b_hi),
                      resolution=(args.res_omega, args.res_b))
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_phase_csv(pmap, path)
    print(f"phase map written: {path}")
    return EXIT_OK


def cmd_gradflow(args) -> int:
    if args.checkpoint:
        ck = load_checkpoint(args.checkpoint)
        config, weights = ck.config, ck.weights
        meta_src = {"checkpoint": str(args.checkpoint),
                    "checkpoint_sha256": file_sha256(args.checkpoint)}
    else:
        config = NetworkConfig(n_in=1, n_hidden=args.hidden, n_out=2,
                               neuron_kind="brf", seed=args.seed,
                               flags=RunConfig(flags=args.flags or "rp,sr,db"
                                               ).resonator_flags())
        weights = init_network(config, InitSpec(
            omega_range=(args.omega, args.omega),
            b_offset_range=(args.b_offset, args.b_offset)))
        meta_src = {"omega": args.omega, "b_offset": args.b_offset,
                    "hidden": args.hidden, "seed": args.seed}
    sequence = np.zeros((args.steps, config.n_in))
    sequence[0, :] = args.amp
    trace = gradient_norm_probe(config, weights, sequence, mode=args.mode)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, path, meta={"mode": args.mode,
                                       "steps": args.steps, **meta_src})
    print(f"gradient-flow trace written: {path}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck_suite(step=args.step)
    worst = max(results.values())
    for name, err in results.items():
        print(f"{name:10s} max relative error {err:.3e}")
    print(f"{'overall':10s} max relative error {worst:.3e} "
          f"(tolerance {args.tol:.1e})")
    if worst >= args.tol:
        print("gradcheck FAILED", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    updates = {}
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            updates[f.name] = value
    return dataclasses.replace(cfg, **updates)


def build_parser() -> Parser:
    parser = Parser(prog="brfnet",
                    description="Balanced resonate-and-fire networks: "
                                "training, simulation, and analysis")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model, emit metrics CSV")
    train.add_argument("--config", help="TOML run config (flags override it)")
    train.add_argument("--out", required=True, help="run directory")
    for name, kind in (("task", str), ("model", str), ("flags", str),
                       ("hidden", int), ("batch-size", int), ("epochs", int),
                       ("lr", float), ("lr-neuron", float), ("delta", float),
                       ("gamma", float), ("theta-c", float), ("readout", str),
                       ("seed", int), ("runs", int), ("data-seed", int),
                       ("data-root", str), ("train-subset", int),
                       ("test-subset", int), ("grad-clip", float),
                       ("synth-classes", int), ("synth-steps", int),
                       ("synth-noise", float), ("synth-train", int),
                       ("synth-val", int), ("synth-test", int),
                       ("omega-init-lo", float), ("omega-init-hi", float),
                       ("b-offset-init-lo", float),
                       ("b-offset-init-hi", float),
                       ("landscape-subset", int), ("workers", int)):
        train.add_argument(f"--{name}", type=kind, default=None,
                           dest=name.replace("-", "_"))
    train.set_defaults(func=cmd_train)

    sim = sub.add_parser("simulate", help="single-neuron trace CSV")
    sim.add_argument("--omega", type=float, required=True)
    sim.add_argument("--b", type=float, default=None,
                     help="raw dampening (<= 0); implies flags without db")
    sim.add_argument("--b-offset", type=float, default=None, dest="b_offset")
    sim.add_argument("--flags", type=str, default=None)
    sim.add_argument("--delta", type=float, default=0.01)
    sim.add_argument("--gamma", type=float, default=0.9)
    sim.add_argument("--theta-c", type=str, default="1.0", dest="theta_c",
                     help="spike threshold; 'inf' disables spiking")
    sim.add_argument("--steps", type=int, default=1000)
    sim.add_argument("--stim", choices=("pulse", "constant", "sine", "none"),
                     default="pulse")
    sim.add_argument("--amp", type=float, default=100.0)
    sim.add_argument("--stim-t0", type=int, default=0, dest="stim_t0")
    sim.add_argument("--stim-freq", type=float, default=10.0,
                     dest="stim_freq")
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    land = sub.add_parser("landscape", help="filter-normalized loss surface")
    land.add_argument("--checkpoint", required=True)
    land.add_argument("--out", required=True)
    land.add_argument("--grid-n", type=int, default=51, dest="grid_n")
    land.add_argument("--extent", type=float, default=1.0)
    land.add_argument("--subset", type=int, default=0)
    land.add_argument("--direction-seed", type=int, default=0,
                      dest="direction_seed")
    land.add_argument("--workers", type=int, default=1)
    land.add_argument("--data-root", type=str, default="", dest="data_root")
    land.set_defaults(func=cmd_landscape)

    phase = sub.add_parser("phase", help="(omega, b) stability phase map")
    phase.add_argument("--delta", type=float, default=0.01)
    phase.add_argument("--omega-lo", type=float, default=0.0, dest="omega_lo")
    phase.add_argument("--omega-hi", type=float, default=100.0,
                       dest="omega_hi")
    phase.add_argument("--b-lo", type=float, default=-3.0, dest="b_lo")
    phase.add_argument("--b-hi", type=float, default=1.0, dest="b_hi")
    phase.add_argument("--res-omega", type=int, default=200,
                       dest="res_omega")
    phase.add_argument("--res-b", type=int, default=200, dest="res_b")
    phase.add_argument("--out", required=True)
    phase.set_defaults(func=cmd_phase)

    flow = sub.add_parser("gradflow", help="gradient-norm-through-time probe")
    flow.add_argument("--checkpoint", default=None)
    flow.add_argument("--mode", choices=("subthreshold", "spiking"),
                      default="subthreshold")
    flow.add_argument("--steps", type=int, default=500)
    flow.add_argument("--amp", type=float, default=1.0)
    flow.add_argument("--hidden", type=int, default=1)
    flow.add_argument("--omega", type=float, default=10.0)
    flow.add_argument("--b-offset", type=float, default=0.0, dest="b_offset")
    flow.add_argument("--flags", type=str, default=None)
    flow.add_argument("--seed", type=int, default=0)
    flow.add_argument("--out", required=True)
    flow.set_defaults(func=cmd_gradflow)

    check = sub.add_parser("gradcheck",
                           help="finite-difference gradient suite")
    check.add_argument("--step", type=float, default=1e-5)
    check.add_argument("--tol", type=float, default=1e-4)
    check.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (FileNotFoundError, DataFormatError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
