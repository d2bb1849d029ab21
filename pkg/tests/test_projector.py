import numpy as np
import pytest

from galore import linalg
from galore.errors import (
    DegenerateRefreshWarning,
    InvalidInputError,
    RankClampWarning,
    UninitializedProjectorError,
)
from galore.projector import Projector


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


class TestRefreshSchedule:
    def test_refresh_at_step_zero(self):
        proj = Projector((3, 3), rank=2, switch_freq=200)
        assert proj.maybe_refresh(np.eye(3), 0)
        assert proj.last_refresh_step == 0
        assert proj.refresh_count == 1

    def test_no_refresh_between_multiples(self):
        g = rng(1)
        proj = Projector((3, 4), rank=2, switch_freq=200)
        proj.maybe_refresh(g.standard_normal((3, 4)), 0)
        frozen = proj.P.tobytes()
        for step in range(1, 200):
            assert not proj.maybe_refresh(g.standard_normal((3, 4)), step)
            assert proj.P.tobytes() == frozen
        assert proj.maybe_refresh(g.standard_normal((3, 4)), 200)
        assert proj.refresh_count == 2

    def test_left_factor_from_svd(self):
        proj = Projector((3, 3), rank=1, switch_freq=1, side="left")
        proj.maybe_refresh(np.diag([3.0, 2.0, 1.0]), 0)
        assert np.allclose(proj.P, np.eye(3)[:, :1])

    def test_refresh_is_deterministic(self):
        G = rng(5).standard_normal((4, 6))
        factors = []
        for _ in range(2):
            proj = Projector((4, 6), rank=2)
            proj.maybe_refresh(G.copy(), 0)
            factors.append(proj.P.tobytes())
        assert factors[0] == factors[1]

    def test_zero_gradient_keeps_factors_and_warns(self):
        g = rng(2)
        proj = Projector((3, 3), rank=2, switch_freq=1)
        proj.maybe_refresh(g.standard_normal((3, 3)), 0)
        kept = proj.P.copy()
        with pytest.warns(DegenerateRefreshWarning):
            proj.maybe_refresh(np.zeros((3, 3)), 1)
        assert np.array_equal(proj.P, kept)
        assert proj.last_refresh_step == 1

    def test_zero_gradient_never_refreshed_canonical_basis(self):
        proj = Projector((4, 3), rank=2, switch_freq=1, side="left")
        with pytest.warns(DegenerateRefreshWarning):
            proj.maybe_refresh(np.zeros((4, 3)), 0)
        assert np.allclose(proj.P, np.eye(4, 2))

    def test_shape_mismatch(self):
        proj = Projector((3, 3), rank=1)
        with pytest.raises(InvalidInputError):
            proj.maybe_refresh(np.ones((2, 3)), 0)

    def test_orthonormal_after_every_refresh(self):
        g = rng(3)
        proj = Projector((5, 7), rank=3, switch_freq=1)
        for step in range(20):
            proj.maybe_refresh(g.standard_normal((5, 7)), step)
            assert linalg.is_column_orthonormal(proj.P, tol=1e-8)


class TestModesAndDefaults:
    def test_rank_clamped_with_warning(self):
        with pytest.warns(RankClampWarning):
            proj = Projector((3, 5), rank=9)
        assert proj.rank == 3

    def test_default_side_short_dimension(self):
        assert Projector((3, 8), rank=2).side == "left"
        assert Projector((8, 3), rank=2).side == "right"
        assert Projector((4, 4), rank=2).side == "left"

    def test_compact_shapes(self):
        assert Projector((4, 6), rank=2).compact_shape() == (2, 6)
        assert Projector((6, 4), rank=2).compact_shape() == (6, 2)
        assert Projector((6, 4), rank=2, mode="two-sided").compact_shape() == (2, 2)

    def test_compact_moment_accounting_short_side(self):
        # Projecting the short side leaves moments of r x max(m, n) entries.
        for shape in [(4, 9), (9, 4)]:
            proj = Projector(shape, rank=3)
            assert np.prod(proj.compact_shape()) == 3 * max(shape)
            assert proj.state_entry_count() == 3 * min(shape)


class TestProjectAndBack:
    def test_uninitialized_error(self):
        proj = Projector((3, 3), rank=2)
        with pytest.raises(UninitializedProjectorError):
            proj.project(np.eye(3))
        with pytest.raises(UninitializedProjectorError):
            proj.project_back(np.zeros((2, 3)))

    def test_full_rank_preserves_frobenius(self):
        g = rng(6)
        G = g.standard_normal((4, 4))
        proj = Projector((4, 4), rank=4, side="left")
        proj.maybe_refresh(G, 0)
        R = proj.project(G)
        assert abs(linalg.fro_norm(R) - linalg.fro_norm(G)) <= 1e-10

    def test_zero_gradient_projects_to_zero(self):
        proj = Projector((3, 5), rank=2)
        proj.maybe_refresh(rng(7).standard_normal((3, 5)), 0)
        assert np.allclose(proj.project(np.zeros((3, 5))), 0.0)

    def test_matches_direct_product_oracle(self):
        g = rng(8)
        G = g.standard_normal((4, 6))
        for mode, side in [("one-sided", "left"), ("one-sided", "right"),
                           ("two-sided", None)]:
            proj = Projector((4, 6), rank=2, mode=mode, side=side)
            proj.maybe_refresh(G, 0)
            R = proj.project(G)
            if mode == "two-sided":
                want = proj.P.T @ G @ proj.Q
            elif side == "left":
                want = proj.P.T @ G
            else:
                want = G @ proj.Q
            assert np.abs(R - want).max() <= 1e-12

    def test_project_back_alpha_zero(self):
        proj = Projector((3, 4), rank=2)
        proj.maybe_refresh(rng(9).standard_normal((3, 4)), 0)
        out = proj.project_back(np.ones(proj.compact_shape()), alpha=0.0)
        assert np.allclose(out, 0.0)

    def test_full_rank_roundtrip_identity(self):
        g = rng(10)
        G = g.standard_normal((4, 7))
        proj = Projector((4, 7), rank=4, side="left")
        proj.maybe_refresh(G, 0)
        back = proj.project_back(proj.project(G), alpha=1.0)
        assert np.abs(back - G).max() <= 1e-10

    def test_rank_one_truncation_of_diag(self):
        G = np.diag([3.0, 2.0, 1.0])
        proj = Projector((3, 3), rank=1, side="left")
        proj.maybe_refresh(G, 0)
        back = proj.project_back(proj.project(G), alpha=1.0)
        assert np.allclose(back, np.diag([3.0, 0.0, 0.0]))
        assert abs(linalg.fro_norm(G - back) - np.sqrt(5.0)) <= 1e-12

    def test_roundtrip_equals_truncated_svd_after_refresh(self):
        g = rng(11)
        for mode, side in [("one-sided", "left"), ("one-sided", "right"),
                           ("two-sided", None)]:
            G = g.standard_normal((5, 8))
            proj = Projector((5, 8), rank=3, mode=mode, side=side)
            proj.maybe_refresh(G, 0)
            back = proj.project_back(proj.project(G), alpha=1.0)
            best = linalg.svd_thin(G).truncate(3)
            assert linalg.fro_norm(back - best) <= 1e-9

    def test_project_back_shape_mismatch(self):
        proj = Projector((3, 4), rank=2)
        proj.maybe_refresh(rng(12).standard_normal((3, 4)), 0)
        with pytest.raises(InvalidInputError):
            proj.project_back(np.ones((3, 3)))
