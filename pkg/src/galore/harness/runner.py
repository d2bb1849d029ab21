"""Deterministic experiment runner: one sequential training loop per run,
JSONL metrics, JSON summary, and an ablation driver over (rank, switch
frequency, seed) grids.
"""

import csv
import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .. import linalg, models, optim
from ..errors import DivergenceError, UndefinedQuantityError
from .config import RunConfig, validate_config
from .tasks import build_task

PRNG_NAME = "PCG64"
METRICS_FILE = "metrics.jsonl"
SUMMARY_FILE = "summary.json"

# switch_freq None means "never refresh after initialization"; internally a
# refresh still has to happen at step 0, so use a period no run can reach.
_NEVER = 2 ** 62


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class RunResult:
    config: RunConfig
    final_loss: float
    steps: int
    wall_time: float
    metrics_rows: list
    metrics_path: str = None
    summary_path: str = None
    loss_history: list = None
    weight_history: list = None


class _PerLayerOptimizer:
    """Per-layer optimizer states for one net; layer l is updated from its
    own state only, so per-layer and batched application coincide."""

    def __init__(self, config, net, rng):
        self.kind = config.optimizer
        self.states = []
        for W in net.layers:
            m, n = W.shape
            rank = min(config.rank, m, n)
            sf = _NEVER if config.switch_freq is None else config.switch_freq
            if self.kind == "sgd":
                self.states.append(None)
            elif self.kind == "adam":
                self.states.append(optim.AdamState.zeros((m, n)))
            elif self.kind == "galore-adam":
                self.states.append(optim.GaLoreOptimState.adam(
                    (m, n), rank, switch_freq=sf, alpha=config.alpha,
                    rho=config.rho, switch_policy=config.switch_policy))
            elif self.kind == "galore-adam-8bit":
                self.states.append(optim.GaLoreOptimState.adam(
                    (m, n), rank, switch_freq=sf, alpha=config.alpha,
                    rho=config.rho, switch_policy=config.switch_policy,
                    storage=optim.STORAGE_INT8))
            elif self.kind == "galore-adafactor":
                self.states.append(optim.GaLoreOptimState.adafactor(
                    (m, n), rank, switch_freq=sf, alpha=config.alpha,
                    switch_policy=config.switch_policy))
            elif self.kind == "lora-adam":
                self.states.append(optim.LoraState.create(
                    W, rank, rng, lora_alpha=config.lora_alpha))
            else:
                raise AssertionError(self.kind)
        if self.kind == "lora-adam":
            for l, st in enumerate(self.states):
                net.layers[l] = st.effective_weight()

    def apply(self, net, l, G_l, eta, step):
        st = self.states[l]
        if self.kind == "sgd":
            net.layers[l] = net.layers[l] + eta * G_l
        elif self.kind == "adam":
            net.layers[l] = net.layers[l] + optim.adam_step(st, G_l, eta)
        elif self.kind == "lora-adam":
            optim.lora_adam_step(st, G_l, eta)
            net.layers[l] = st.effective_weight()
        else:
            net.layers[l] = optim.galore_adam_step(net.layers[l], G_l, st, eta, step)

    def state_entries(self):
        total = 0
        for st in self.states:
            if st is not None:
                total += st.entry_count()
        return total

    def refresh_count(self):
        counts = [st.projector.refresh_count for st in self.states
                  if isinstance(st, optim.GaLoreOptimState)]
        return max(counts) if counts else 0


def _eta_at(config, step):
    if config.lr_schedule == "constant":
        return config.eta
    warm = max(1, int(round(0.1 * config.steps)))
    if step < warm:
        return config.eta * (step + 1) / warm
    span = max(1, config.steps - warm)
    progress = (step - warm) / span
    return config.eta * (0.1 + 0.9 * 0.5 * (1.0 + math.cos(math.pi * progress)))


def _metrics_row(step, loss, grads, config, optimizer):
    sq = sum(float(np.sum(g * g)) for g in grads)
    tracked = grads[config.track_layer]
    try:
        sr = linalg.stable_rank(tracked)
    except UndefinedQuantityError:
        sr = None
    if config.per_layer_updates:
        buffer_entries = max(g.size for g in grads)
    else:
        buffer_entries = sum(g.size for g in grads)
    return {
        "step": step,
        "loss": loss,
        "grad_fro_norm": math.sqrt(sq),
        "stable_rank": sr,
        "refresh_count": optimizer.refresh_count(),
        "optimizer_state_entries": optimizer.state_entries(),
        "grad_buffer_entries": buffer_entries,
    }


def run_train(config, keep_loss_history=False, keep_weight_history=False):
    """Train per the config; deterministic in (config, seed).

    Writes metrics.jsonl and summary.json under config.out_dir when set.
    Raises DivergenceError on a non-finite loss.
    """
    if isinstance(config, dict):
        config = validate_config(config)
    t_start = time.perf_counter()
    rng = make_rng(config.seed)
    task = build_task(config, rng)
    net = task.net
    opt = _PerLayerOptimizer(config, net, rng)

    rows = []
    loss_history = [] if keep_loss_history else None
    weight_history = [] if keep_weight_history else None
    last_valid = -1
    full_batch = config.batch_size >= task.X.shape[0]

    for step in range(config.steps):
        if full_batch:
            xs, ys = task.X, task.Y
        else:
            idx = rng.choice(task.X.shape[0], size=config.batch_size,
                             replace=False)
            xs, ys = task.X[idx], task.Y[idx]

        eta = _eta_at(config, step)
        sweep = models.BackwardSweep(net, xs, ys)
        if not math.isfinite(sweep.loss):
            raise DivergenceError(
                f"non-finite loss at step {step}", last_valid_step=last_valid
            )
        last_valid = step

        grads = [None] * net.depth
        if config.per_layer_updates:
            for l, G_l in sweep:
                grads[l] = G_l
                opt.apply(net, l, G_l, eta, step)
        else:
            for l, G_l in sweep:
                grads[l] = G_l
            for l in range(net.depth):
                opt.apply(net, l, grads[l], eta, step)

        if step % config.log_every == 0 or step == config.steps - 1:
            data_loss = models.loss_value(net, task.X, task.Y)
            rows.append(_metrics_row(step, data_loss, grads, config, opt))
        if keep_loss_history:
            loss_history.append(sweep.loss)
        if keep_weight_history:
            weight_history.append([W.copy() for W in net.layers])

    final_loss = models.loss_value(net, task.X, task.Y)
    wall = time.perf_counter() - t_start
    result = RunResult(
        config=config, final_loss=final_loss, steps=config.steps,
        wall_time=wall, metrics_rows=rows, loss_history=loss_history,
        weight_history=weight_history,
    )
    if config.out_dir:
        result.metrics_path, result.summary_path = _write_outputs(result)
    return result


def _json_line(row):
    safe = {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
            for k, v in row.items()}
    return json.dumps(safe, sort_keys=True)


def _write_outputs(result):
    os.makedirs(result.config.out_dir, exist_ok=True)
    metrics_path = os.path.join(result.config.out_dir, METRICS_FILE)
    with open(metrics_path, "w") as fh:
        for row in result.metrics_rows:
            fh.write(_json_line(row) + "\n")
    summary_path = os.path.join(result.config.out_dir, SUMMARY_FILE)
    summary = {
        "final_loss": result.final_loss,
        "steps": result.steps,
        "wall_time": result.wall_time,
        "seed": result.config.seed,
        "prng": PRNG_NAME,
    }
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return metrics_path, summary_path


# ---------------------------------------------------------------------------
# Ablation grids
# ---------------------------------------------------------------------------

def parse_ablation_config(raw):
    """Split an ablation JSON object into (base RunConfig, grid dict).

    Expected shape: {"base": {...run config...},
                     "grid": {"rank": [...], "switch_freq": [...],
                              "seed": [...]}}
    Grid keys are optional; missing ones fall back to the base value.
    """
    from ..errors import ConfigError

    if not isinstance(raw, dict) or "base" not in raw:
        raise ConfigError("base: ablation config needs a 'base' run config")
    base = validate_config(raw["base"])
    grid = raw.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("grid: expected an object")
    for key in grid:
        if key not in ("rank", "switch_freq", "seed"):
            raise ConfigError(f"grid.{key}: unsupported grid axis")
        if not isinstance(grid[key], list) or not grid[key]:
            raise ConfigError(f"grid.{key}: expected a non-empty list")
    ranks = grid.get("rank", [base.rank])
    freqs = grid.get("switch_freq", [base.switch_freq])
    freqs = [None if f in (None, "inf") else f for f in freqs]
    seeds = grid.get("seed", [base.seed])
    return base, ranks, freqs, seeds


def run_ablation(base, ranks, freqs, seeds, csv_path=None):
    """One run per grid point; failed cells are recorded and skipped.

    Returns the list of row dicts (rank, switch_freq, seed, final_loss,
    status) and optionally writes them as CSV.
    """
    rows = []
    for r in ranks:
        for f in freqs:
            for s in seeds:
                cfg = base.replace(rank=r, switch_freq=f, seed=s, out_dir=None)
                try:
                    cell = run_train(cfg)
                    rows.append({
                        "rank": r,
                        "switch_freq": "inf" if f is None else f,
                        "seed": s,
                        "final_loss": cell.final_loss,
                        "status": "ok",
                    })
                except Exception as e:  # record, continue with the grid
                    rows.append({
                        "rank": r,
                        "switch_freq": "inf" if f is None else f,
                        "seed": s,
                        "final_loss": None,
                        "status": f"failed: {e}",
                    })
    if csv_path:
        os.makedirs(os.path.dirname(csv_path) or ".", exist_ok=True)
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(
                fh, fieldnames=["rank", "switch_freq", "seed",
                                "final_loss", "status"])
            w.writeheader()
            for row in rows:
                w.writerow(row)
    return rows
