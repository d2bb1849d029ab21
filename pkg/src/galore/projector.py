"""Low-rank projection subspace: refresh-from-SVD, project, project back.

A Projector owns the orthonormal factor(s) spanning the current gradient
subspace for one weight matrix. It supports the practical one-sided form
(single factor on the short side by default) and the two-sided form
(P and Q together). Refreshes happen on a fixed step schedule: whenever
``step % switch_freq == 0`` the factors are recomputed from the SVD of the
gradient passed in; in between, the previous factors are reused untouched.
"""

import warnings

import numpy as np

from . import linalg
from .errors import (
    DegenerateRefreshWarning,
    InvalidInputError,
    RankClampWarning,
    UninitializedProjectorError,
)

ONE_SIDED = "one-sided"
TWO_SIDED = "two-sided"
LEFT = "left"
RIGHT = "right"

DEFAULT_SWITCH_FREQ = 200


class Projector:
    """Subspace state for one m x n gradient.

    Parameters
    ----------
    shape : (m, n) of the gradients this projector will see.
    rank : target rank r; clamped to min(m, n) with a warning if larger.
    switch_freq : refresh every this many steps (default 200).
    mode : "one-sided" (default) or "two-sided".
    side : for one-sided mode, "left" or "right"; default picks "left"
        iff m <= n, so the stored factor sits on the short side.
    """

    def __init__(self, shape, rank, switch_freq=DEFAULT_SWITCH_FREQ,
                 mode=ONE_SIDED, side=None):
        m, n = int(shape[0]), int(shape[1])
        if m < 1 or n < 1:
            raise InvalidInputError(f"invalid projector shape {shape}")
        if mode not in (ONE_SIDED, TWO_SIDED):
            raise InvalidInputError(f"unknown projector mode {mode!r}")
        if int(switch_freq) < 1:
            raise InvalidInputError("switch_freq must be a positive integer")
        rank = int(rank)
        if rank < 1:
            raise InvalidInputError("rank must be a positive integer")
        if rank > min(m, n):
            warnings.warn(
                f"rank {rank} exceeds min(m, n) = {min(m, n)}; clamping",
                RankClampWarning,
            )
            rank = min(m, n)
        if mode == TWO_SIDED:
            side = None
        elif side is None:
            side = LEFT if m <= n else RIGHT
        elif side not in (LEFT, RIGHT):
            raise InvalidInputError(f"unknown projector side {side!r}")

        self.shape = (m, n)
        self.rank = rank
        self.switch_freq = int(switch_freq)
        self.mode = mode
        self.side = side
        self.P = None  # m x r left factor
        self.Q = None  # n x r right factor
        self.last_refresh_step = -1
        self.refresh_count = 0

    # -- bookkeeping -------------------------------------------------------

    @property
    def initialized(self):
        return self.last_refresh_step >= 0

    def _needs_left(self):
        return self.mode == TWO_SIDED or self.side == LEFT

    def _needs_right(self):
        return self.mode == TWO_SIDED or self.side == RIGHT

    def compact_shape(self):
        """Shape of project(G) under the current mode/side."""
        m, n = self.shape
        r = self.rank
        if self.mode == TWO_SIDED:
            return (r, r)
        return (r, n) if self.side == LEFT else (m, r)

    def state_entry_count(self):
        """Float entries held by the projector factors themselves."""
        m, n = self.shape
        total = 0
        if self._needs_left():
            total += m * self.rank
        if self._needs_right():
            total += n * self.rank
        return total

    # -- refresh / project -------------------------------------------------

    def maybe_refresh(self, G, step):
        """Refresh factors from the SVD of G when the schedule says so.

        Returns True when a refresh happened at this step, False when the
        previous factors were reused. A zero gradient at a refresh step
        keeps the old factors (canonical basis columns if never refreshed)
        and emits a DegenerateRefreshWarning.
        """
        G = linalg.as_matrix(G, "G")
        if G.shape != self.shape:
            raise InvalidInputError(
                f"gradient shape {G.shape} does not match projector {self.shape}"
            )
        if step < 0:
            raise InvalidInputError("step must be >= 0")
        if step % self.switch_freq != 0:
            return False

        m, n = self.shape
        r = self.rank
        if not np.any(G):
            warnings.warn(
                "projector refresh saw a zero gradient; keeping previous factors",
                DegenerateRefreshWarning,
            )
            if self.P is None and self._needs_left():
                self.P = np.eye(m, r)
            if self.Q is None and self._needs_right():
                self.Q = np.eye(n, r)
        else:
            res = linalg.svd_thin(G)
            if self._needs_left():
                self.P = np.ascontiguousarray(res.U[:, :r])
            if self._needs_right():
                self.Q = np.ascontiguousarray(res.V[:, :r])
        self.last_refresh_step = step
        self.refresh_count += 1
        return True

    def project(self, G):
        """Map a full gradient to its compact form.

        left: P.T @ G (r x n); right: G @ Q (m x r); two-sided: P.T @ G @ Q.
        """
        if not self.initialized:
            raise UninitializedProjectorError(
                "project() called before the first refresh"
            )
        G = linalg.as_matrix(G, "G")
        if G.shape != self.shape:
            raise InvalidInputError(
                f"gradient shape {G.shape} does not match projector {self.shape}"
            )
        if self.mode == TWO_SIDED:
            return self.P.T @ G @ self.Q
        if self.side == LEFT:
            return self.P.T @ G
        return G @ self.Q

    def project_back(self, N, alpha=1.0):
        """Map a compact update back to full shape, scaled by alpha."""
        if not self.initialized:
            raise UninitializedProjectorError(
                "project_back() called before the first refresh"
            )
        N = linalg.as_matrix(N, "N")
        if N.shape != self.compact_shape():
            raise InvalidInputError(
                f"compact shape {N.shape} does not match expected {self.compact_shape()}"
            )
        if self.mode == TWO_SIDED:
            return alpha * (self.P @ N @ self.Q.T)
        if self.side == LEFT:
            return alpha * (self.P @ N)
        return alpha * (N @ self.Q.T)
