#!/usr/bin/env python3
# Blockwise absmax int8 round-trips bound every entry's error by
# scale/127 per 256-entry block; storing the optimizer moments that way
# barely moves the training curve.

import numpy as np

from galore import optim
from galore.harness import make_rng, run_train, validate_config

rng = make_rng(0)

# 1. the raw code round-trip and its error bound
x = rng.uniform(-2.0, 2.0, size=(4, 256))
blocks, dq = optim.q8_roundtrip(x, block_size=256)
err = np.abs(x - dq)
print("per-block: scale, worst error, bound scale/127")
for i, blk in enumerate(blocks):
    worst = err.reshape(-1)[i * 256:(i + 1) * 256].max()
    print(f"  block {i}: {blk.scale:.4f} {worst:.6f} {blk.scale / 127:.6f}")

# 2. float64 vs int8 moment storage on the toy task
BASE = {
    "task": "mlp-classification", "steps": 6000, "eta": 0.04, "seed": 5,
    "dims": [16, 16, 4], "rank": 4, "switch_freq": 200, "alpha": 0.25,
    "batch_size": 128, "dataset_size": 4096, "log_every": 1000,
    "lr_schedule": "warmup-cosine",
}
float_run = run_train(validate_config(dict(BASE, optimizer="galore-adam")))
int8_run = run_train(validate_config(dict(BASE, optimizer="galore-adam-8bit")))
print(f"\nfloat-state final loss: {float_run.final_loss:.4f}")
print(f"int8-state final loss:  {int8_run.final_loss:.4f} "
      f"({int8_run.final_loss / float_run.final_loss - 1:+.1%})")
