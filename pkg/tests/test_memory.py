import warnings

import pytest

from galore import memory
from galore.errors import InvalidInputError


class TestLayerDims:
    def test_orientation_normalized(self):
        d = memory.LayerDims.of(1376, 512, 128)
        assert (d.m, d.n) == (512, 1376)

    def test_rank_bounds(self):
        with pytest.raises(InvalidInputError):
            memory.LayerDims(m=4, n=8, r=5)
        with pytest.raises(InvalidInputError):
            memory.LayerDims(m=4, n=8, r=0)


class TestEstimateLayer:
    def test_full_rank_square_warning_and_counts(self):
        d = memory.LayerDims(m=8, n=8, r=8)
        with pytest.warns(UserWarning):
            rep = memory.estimate_layer(d, "galore")
        full = memory.estimate_layer(d, "full")
        assert rep.optimizer_params == 3 * 64      # 3 r^2
        assert full.optimizer_params == 2 * 64     # 2 r^2

    def test_ffn_layer_fixture(self):
        d = memory.LayerDims.of(512, 1376, 128)
        rep = memory.estimate_layer(d, "galore")
        assert rep.optimizer_params == 512 * 128 + 2 * 1376 * 128
        assert rep.optimizer_params == 417_792

    def test_galore_total_always_below_lora(self):
        for m, n, r in [(1, 1, 1), (4, 1024, 2), (512, 512, 511),
                        (100, 4096, 100)]:
            d = memory.LayerDims.of(m, n, r)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                g = memory.estimate_layer(d, "galore")
                lo = memory.estimate_layer(d, "lora")
            assert g.total_bytes < lo.total_bytes

    def test_method_formulas(self):
        d = memory.LayerDims(m=6, n=10, r=2)
        assert memory.layer_entry_counts(d, "full") == (60, 120)
        assert memory.layer_entry_counts(d, "galore") == (60, 6 * 2 + 2 * 10 * 2)
        assert memory.layer_entry_counts(d, "lora") == (60 + 12 + 20, 2 * 12 + 2 * 20)
        assert memory.layer_entry_counts(d, "relora") == memory.layer_entry_counts(d, "lora")
        assert memory.layer_entry_counts(d, "lowrank") == (32, 64)
        with pytest.raises(InvalidInputError):
            memory.layer_entry_counts(d, "unknown")

    def test_bytes_scale_linearly(self):
        d = memory.LayerDims(m=16, n=32, r=4)
        b2 = memory.estimate_layer(d, "full", bytes_per_entry=2)
        b4 = memory.estimate_layer(d, "full", bytes_per_entry=4)
        assert b4.weight_bytes == 2 * b2.weight_bytes
        assert b4.total_bytes == 2 * b2.total_bytes

    def test_eight_bit_accounting(self):
        d = memory.LayerDims(m=16, n=32, r=4)
        rep = memory.estimate_layer(d, "full", eight_bit_states=True)
        entries = rep.optimizer_params
        blocks = -(-entries // 256)
        assert rep.optimizer_bytes == entries + 4 * blocks
        assert rep.weight_bytes == 2 * rep.weight_params

    def test_eight_bit_keeps_projector_full_width(self):
        d = memory.LayerDims(m=16, n=32, r=4)
        rep = memory.estimate_layer(d, "galore", eight_bit_states=True)
        moments = 2 * 32 * 4
        projector = 16 * 4
        blocks = -(-moments // 256)
        assert rep.optimizer_bytes == moments + 4 * blocks + 2 * projector


class TestEstimateModel:
    def test_single_layer_degenerate_config(self):
        d = memory.LayerDims(m=8, n=16, r=4)
        config = memory.ModelConfig(layers=(d,), non_projected_params=0)
        for method in memory.METHODS:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                whole = memory.estimate_model(config, method)
                single = memory.estimate_layer(d, method)
            assert whole.weight_params == single.weight_params
            assert whole.optimizer_params == single.optimizer_params
            assert whole.total_bytes == single.total_bytes

    def test_non_projected_always_full_adam(self):
        d = memory.LayerDims(m=8, n=8, r=2)
        config = memory.ModelConfig(layers=(d,), non_projected_params=1000)
        rep = memory.estimate_model(config, "galore")
        base = memory.estimate_layer(d, "galore")
        assert rep.weight_params == base.weight_params + 1000
        assert rep.optimizer_params == base.optimizer_params + 2000

    def test_empty_config_rejected(self):
        with pytest.raises(InvalidInputError):
            memory.ModelConfig(layers=(), non_projected_params=0)

    def test_preset_structure_60m(self):
        cfg = memory.llama_config("llama-60m")
        # 7 projected matrices per block, 8 blocks, plus the output head
        assert len(cfg.layers) == 7 * 8 + 1
        # attn 4*512^2 + gated FFN 3*512*1376 per block, head 512*32000,
        # embedding + norm scales unprojected
        assert cfg.non_projected_params == 32000 * 512 + 17 * 512
        rep = memory.estimate_model(cfg, "full")
        assert rep.weight_params == 25_296_896 + 16_384_000 + cfg.non_projected_params

    def test_unknown_preset(self):
        with pytest.raises(InvalidInputError):
            memory.llama_config("llama-9t")

    def test_grid_dominance_and_threshold(self):
        sizes = [1, 3, 16, 64, 257, 1024, 4096]
        for m in sizes:
            for n in sizes:
                if n < m:
                    continue
                for r in {1, m // 2, m}:
                    if not 1 <= r <= m:
                        continue
                    d = memory.LayerDims(m=m, n=n, r=r)
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        g = memory.estimate_layer(d, "galore")
                        lo = memory.estimate_layer(d, "lora")
                        fu = memory.estimate_layer(d, "full")
                    assert g.total_bytes < lo.total_bytes
                    if r < m * n / (m / 2 + n):
                        assert g.optimizer_params < fu.optimizer_params
