"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 divergence during training,
4 verification failure.
"""

import csv
import json
import os
import sys

import click
import numpy as np

from .. import memory, theory
from ..errors import ConfigError, DivergenceError, InvalidInputError, StabilityError
from . import runner, verify as verify_mod
from .config import load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_VERIFY = 4


def _fail_config(msg):
    click.echo(f"config error: {msg}", err=True)
    sys.exit(EXIT_CONFIG)


def _apply_overrides(cfg, seed, out_dir, log_every):
    kw = {}
    if seed is not None:
        kw["seed"] = seed
    if out_dir is not None:
        kw["out_dir"] = out_dir
    if log_every is not None:
        kw["log_every"] = log_every
    return cfg.replace(**kw) if kw else cfg


@click.group()
def main():
    """Low-rank projected-gradient training toolkit."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--log-every", type=int, default=None)
def train(config_path, seed, out_dir, log_every):
    """Run one training configuration; write metrics and a summary."""
    try:
        cfg = _apply_overrides(load_config(config_path), seed, out_dir, log_every)
    except ConfigError as e:
        _fail_config(e)
    try:
        result = runner.run_train(cfg)
    except DivergenceError as e:
        click.echo(f"divergence: {e} (last valid step {e.last_valid_step})",
                   err=True)
        sys.exit(EXIT_DIVERGENCE)
    click.echo(f"final_loss {result.final_loss:.6e} after {result.steps} steps "
               f"({result.wall_time:.2f}s)")
    if result.metrics_path:
        click.echo(f"metrics: {result.metrics_path}")
        click.echo(f"summary: {result.summary_path}")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", type=click.Path(), default="ablation-out")
def ablate(config_path, seed, out_dir):
    """Sweep rank / switch frequency / seed and tabulate final losses."""
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        _fail_config(e)
    try:
        base, ranks, freqs, seeds = runner.parse_ablation_config(raw)
    except ConfigError as e:
        _fail_config(e)
    if seed is not None:
        seeds = [seed]
    csv_path = os.path.join(out_dir, "ablation.csv")
    rows = runner.run_ablation(base, ranks, freqs, seeds, csv_path=csv_path)
    for row in rows:
        loss = ("-" if row["final_loss"] is None
                else f"{row['final_loss']:.6e}")
        click.echo(f"r={row['rank']:<5} T={row['switch_freq']:<6} "
                   f"seed={row['seed']:<4} loss={loss} {row['status']}")
    click.echo(f"table: {csv_path}")
    sys.exit(EXIT_OK)


def _dynamics_spec_from_json(raw):
    if not isinstance(raw, dict):
        raise ConfigError("spec: expected a JSON object")
    if "A" in raw or "B" in raw or "C" in raw:
        for key in ("A", "B", "C", "W0"):
            if key not in raw:
                raise ConfigError(f"{key}: required for an explicit dynamics spec")
        return theory.DynamicsSpec(
            A=[np.asarray(a, dtype=float) for a in raw["A"]],
            B=[np.asarray(b, dtype=float) for b in raw["B"]],
            C=[np.asarray(c, dtype=float) for c in raw["C"]],
            W0=np.asarray(raw["W0"], dtype=float),
            eta=float(raw.get("eta", 0.05)),
            steps=int(raw.get("steps", 200)),
            t0=int(raw.get("t0", 0)),
        )
    kind = raw.get("kind")
    rng = runner.make_rng(int(raw.get("seed", 0)))
    eta = float(raw.get("eta", 0.05))
    steps = int(raw.get("steps", 300))
    if kind == "symmetric-pair":
        return theory.make_symmetric_pair_spec(
            rng, int(raw.get("dim", 4)), eta=eta, steps=steps)
    if kind == "low-rank-batch":
        return theory.make_low_rank_batch_spec(
            rng, m=int(raw.get("m", 4)), n=int(raw.get("n", 5)),
            N=int(raw.get("N", 2)), n_prime=int(raw.get("n_prime", 2)),
            eta=eta, steps=steps)
    raise ConfigError(
        "kind: expected 'symmetric-pair' or 'low-rank-batch' (or explicit A/B/C/W0)"
    )


@main.command(name="theory")
@click.option("--spec", "spec_path", required=True, type=click.Path())
@click.option("--out-dir", type=click.Path(), default="theory-out")
def theory_cmd(spec_path, out_dir):
    """Simulate gradient dynamics for a spec; export the trace as CSV."""
    try:
        with open(spec_path) as fh:
            raw = json.load(fh)
        spec = _dynamics_spec_from_json(raw)
        trace = theory.simulate_dynamics(spec)
    except (OSError, json.JSONDecodeError, ConfigError,
            InvalidInputError, StabilityError) as e:
        _fail_config(e)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "trace.csv")
    theory.write_trace_csv(trace, csv_path)
    click.echo(f"lambda1={trace.lambda1:.6e} "
               + (f"lambda2={trace.lambda2:.6e} decay_ratio={trace.decay_ratio:.6f}"
                  if trace.lambda2_defined else "lambda2 undefined (flat spectrum)"))
    if trace.g_par_zero:
        click.echo("minimal-eigenspace component is zero; bound undefined")
    finite = trace.stable_ranks[np.isfinite(trace.stable_ranks)]
    if finite.size:
        click.echo(f"stable rank: start {finite[0]:.4f} end {finite[-1]:.4f}")
    click.echo(f"trace: {csv_path}")
    sys.exit(EXIT_OK)


def _model_config_from_json(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    if "preset" in raw:
        return memory.llama_config(raw["preset"], rank=raw.get("rank"))
    if "layers" not in raw:
        raise ConfigError("layers: required when no preset is given")
    try:
        layers = tuple(
            memory.LayerDims.of(int(d["m"]), int(d["n"]), int(d["r"]))
            for d in raw["layers"]
        )
    except (KeyError, TypeError) as e:
        raise ConfigError(f"layers: each entry needs integer m, n, r ({e})")
    return memory.ModelConfig(
        layers=layers,
        non_projected_params=int(raw.get("non_projected_params", 0)),
        name=raw.get("name", ""),
    )


@main.command(name="memory")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out-dir", type=click.Path(), default="memory-out")
@click.option("--bytes-per-entry", type=int, default=2, show_default=True)
@click.option("--eight-bit", is_flag=True,
              help="Price optimizer states at 1 byte/entry plus block scales.")
def memory_cmd(config_path, out_dir, bytes_per_entry, eight_bit):
    """Estimate weight/optimizer bytes for a model config, per method."""
    import warnings

    try:
        with open(config_path) as fh:
            raw = json.load(fh)
        config = _model_config_from_json(raw)
    except (OSError, json.JSONDecodeError, ConfigError, InvalidInputError) as e:
        _fail_config(e)

    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for method in memory.METHODS:
            rep = memory.estimate_model(config, method,
                                        bytes_per_entry=bytes_per_entry,
                                        eight_bit_states=eight_bit)
            rows.append(rep)
    header = f"{'method':<8} {'weights':>12} {'optimizer':>12} {'total':>12}"
    click.echo(header)
    for rep in rows:
        click.echo(f"{rep.method:<8} {memory.gib(rep.weight_bytes):>11.4f}G "
                   f"{memory.gib(rep.optimizer_bytes):>11.4f}G "
                   f"{memory.gib(rep.total_bytes):>11.4f}G")

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "memory.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "weight_params", "optimizer_params",
                    "weight_bytes", "optimizer_bytes", "total_bytes"])
        for rep in rows:
            w.writerow([rep.method, rep.weight_params, rep.optimizer_params,
                        rep.weight_bytes, rep.optimizer_bytes, rep.total_bytes])
    click.echo(f"table: {csv_path}")
    sys.exit(EXIT_OK)


@main.command()
@click.option("--seed", type=int, default=verify_mod.DEFAULT_SEED,
              show_default=True)
def verify(seed):
    """Run the full invariant suite; nonzero exit on any failure."""
    results = verify_mod.run_verify(seed=seed)
    click.echo(verify_mod.format_report(results))
    sys.exit(EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY)


if __name__ == "__main__":
    main()
