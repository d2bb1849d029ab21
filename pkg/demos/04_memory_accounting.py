#!/usr/bin/env python3
"""Tabulate estimated training memory per method across the decoder presets.

Weights and optimizer states are priced at 2 bytes per entry; the
projected-state method pays mr + 2nr entries per layer (short-side
projector plus two compact moments) instead of full Adam's 2mn, while the
adaptor method adds trainable factors on top of the frozen base weight.
"""

import warnings

from galore import memory

METHODS = ["full", "galore", "lora", "lowrank"]

for preset in ["llama-60m", "llama-130m", "llama-350m", "llama-1b"]:
    config = memory.llama_config(preset)
    rank = config.layers[0].r
    print(f"\n{preset} (rank {rank}):")
    print(f"  {'method':<8} {'weights':>9} {'optim':>9} {'total':>9}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for method in METHODS:
            rep = memory.estimate_model(config, method)
            print(f"  {method:<8} "
                  f"{memory.gib(rep.weight_bytes):>8.3f}G "
                  f"{memory.gib(rep.optimizer_bytes):>8.3f}G "
                  f"{memory.gib(rep.total_bytes):>8.3f}G")

    rep16 = memory.estimate_model(config, "galore")
    rep8 = memory.estimate_model(config, "galore", eight_bit_states=True)
    saved = 1 - rep8.optimizer_bytes / rep16.optimizer_bytes
    print(f"  8-bit states cut the projected optimizer bytes by {saved:.0%}")
