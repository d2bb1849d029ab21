"""Optimizer steps.

All update rules share one sign convention: ``G`` is the NEGATIVE gradient
of the loss, so a step ADDS ``eta`` times the processed gradient to the
weights and the loss goes down.

Contents:

* plain entrywise Adam (``AdamState`` / ``adam_step``),
* the low-rank projected wrapper (``GaLoreOptimState`` / ``galore_adam_step``)
  which keeps its Adam (or factored) moments in the compact space produced by
  a :class:`~galore.projector.Projector`,
* a first-order factored-second-moment variant (``AdafactorState`` /
  ``adafactor_step``) whose row/column accumulators replace the full V,
* a LoRA baseline (``LoraState`` / ``lora_adam_step``) training additive
  low-rank adaptors against a frozen base weight,
* blockwise absmax int8 round-tripping for optimizer state storage
  (``Quantized8Block`` / ``q8_roundtrip``).
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import InvalidInputError
from .projector import Projector

DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8
DEFAULT_ALPHA = 0.25
DEFAULT_LORA_ALPHA = 32.0

CARRY = "carry"
RESET = "reset"
ROTATE = "rotate"

STORAGE_FLOAT64 = "float64"
STORAGE_INT8 = "int8-blockwise"

RHO_ADAM = "adam"
RHO_IDENTITY = "identity"


def _check_shape(G, like, what="gradient"):
    if G.shape != like.shape:
        raise InvalidInputError(
            f"{what} shape {G.shape} does not match state shape {like.shape}"
        )


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Entrywise Adam moments. M and V hold the raw exponential moving
    averages; bias correction is applied when the update is formed."""

    M: np.ndarray
    V: np.ndarray
    t: int = 0
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    eps: float = DEFAULT_EPS

    @classmethod
    def zeros(cls, shape, beta1=DEFAULT_BETA1, beta2=DEFAULT_BETA2, eps=DEFAULT_EPS):
        return cls(
            M=np.zeros(shape), V=np.zeros(shape),
            t=0, beta1=beta1, beta2=beta2, eps=eps,
        )

    def entry_count(self):
        return self.M.size + self.V.size


def adam_step(state, G, eta):
    """One Adam step; mutates ``state`` and returns the weight delta.

    The step is ``eta * Mhat / (sqrt(Vhat) + eps)`` with the bias-corrected
    moments; add the returned delta to the weights.
    """
    G = linalg.as_matrix(G, "G")
    _check_shape(G, state.M)
    state.t += 1
    state.M = state.beta1 * state.M + (1.0 - state.beta1) * G
    state.V = state.beta2 * state.V + (1.0 - state.beta2) * G * G
    m_hat = state.M / (1.0 - state.beta1 ** state.t)
    v_hat = state.V / (1.0 - state.beta2 ** state.t)
    return eta * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# Factored-second-moment first-order variant
# ---------------------------------------------------------------------------

@dataclass
class AdafactorState:
    """First moment as in Adam; the second moment is factored into one
    row accumulator and one column accumulator of squared-gradient means."""

    M: np.ndarray
    row_acc: np.ndarray
    col_acc: np.ndarray
    t: int = 0
    beta1: float = DEFAULT_BETA1
    beta2f: float = DEFAULT_BETA2
    eps: float = DEFAULT_EPS

    @classmethod
    def zeros(cls, shape, beta1=DEFAULT_BETA1, beta2f=DEFAULT_BETA2, eps=DEFAULT_EPS):
        rows, cols = shape
        return cls(
            M=np.zeros(shape), row_acc=np.zeros(rows), col_acc=np.zeros(cols),
            t=0, beta1=beta1, beta2f=beta2f, eps=eps,
        )

    def entry_count(self):
        return self.M.size + self.row_acc.size + self.col_acc.size


def adafactor_step(state, G, eta):
    """One factored step; mutates ``state`` and returns the weight delta.

    V is reconstructed as outer(row, col) / mean(row) from the
    bias-corrected accumulators; exact whenever G^2 is rank one.
    """
    G = linalg.as_matrix(G, "G")
    _check_shape(G, state.M)
    G2 = G * G
    state.t += 1
    state.M = state.beta1 * state.M + (1.0 - state.beta1) * G
    state.row_acc = state.beta2f * state.row_acc + (1.0 - state.beta2f) * G2.mean(axis=1)
    state.col_acc = state.beta2f * state.col_acc + (1.0 - state.beta2f) * G2.mean(axis=0)
    m_hat = state.M / (1.0 - state.beta1 ** state.t)
    row_hat = state.row_acc / (1.0 - state.beta2f ** state.t)
    col_hat = state.col_acc / (1.0 - state.beta2f ** state.t)
    denom = row_hat.mean()
    if denom > 0.0:
        v_hat = np.outer(row_hat, col_hat) / denom
    else:
        v_hat = np.zeros_like(state.M)
    return eta * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# Blockwise int8 storage
# ---------------------------------------------------------------------------

DEFAULT_BLOCK_SIZE = 256


@dataclass
class Quantized8Block:
    """One block of absmax-scaled signed int8 codes.

    Dequantized entry = code * scale / 127; the per-entry round-trip error
    is at most scale / 127.
    """

    scale: float
    codes: np.ndarray  # int8, length <= block_size


def quantize_blockwise(x, block_size=DEFAULT_BLOCK_SIZE):
    """Quantize a matrix (flattened row-major) into int8 blocks."""
    if block_size < 1:
        raise InvalidInputError("block_size must be >= 1")
    flat = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    blocks = []
    for start in range(0, flat.size, block_size):
        chunk = flat[start:start + block_size]
        scale = float(np.abs(chunk).max()) if chunk.size else 0.0
        if scale == 0.0:
            codes = np.zeros(chunk.size, dtype=np.int8)
        else:
            codes = np.clip(np.rint(chunk * (127.0 / scale)), -127, 127).astype(np.int8)
        blocks.append(Quantized8Block(scale=scale, codes=codes))
    return blocks


def dequantize_blockwise(blocks, shape):
    """Rebuild a matrix from int8 blocks produced by quantize_blockwise."""
    parts = [b.codes.astype(np.float64) * (b.scale / 127.0) for b in blocks]
    flat = np.concatenate(parts) if parts else np.zeros(0)
    return flat.reshape(shape)


def q8_roundtrip(x, block_size=DEFAULT_BLOCK_SIZE):
    """Quantize-then-dequantize; returns (blocks, dequantized matrix)."""
    x = np.asarray(x, dtype=np.float64)
    blocks = quantize_blockwise(x, block_size)
    return blocks, dequantize_blockwise(blocks, x.shape)


# ---------------------------------------------------------------------------
# Low-rank projected optimizer state
# ---------------------------------------------------------------------------

@dataclass
class GaLoreOptimState:
    """Projector plus compact-space moments plus the back-projection scale.

    ``inner`` is an AdamState or AdafactorState shaped like the projector's
    compact gradient. ``rho`` selects the compact regularizer: "adam" runs
    the inner rule, "identity" passes the compact gradient straight through
    (the pure-projection update). ``switch_policy`` says what happens to the
    moments when a refresh replaces the subspace: "carry" keeps them in
    place, "reset" zeroes them (and restarts the inner step count),
    "rotate" re-expresses them in the new basis. With
    storage="int8-blockwise" the moments are squeezed through blockwise
    int8 after every step, so the persisted information is codes + scales.
    """

    projector: Projector
    inner: object
    alpha: float = DEFAULT_ALPHA
    rho: str = RHO_ADAM
    switch_policy: str = CARRY
    storage: str = STORAGE_FLOAT64
    q8_block_size: int = DEFAULT_BLOCK_SIZE

    def __post_init__(self):
        if self.alpha <= 0:
            raise InvalidInputError("alpha must be positive")
        if self.rho not in (RHO_ADAM, RHO_IDENTITY):
            raise InvalidInputError(f"unknown rho {self.rho!r}")
        if self.switch_policy not in (CARRY, RESET, ROTATE):
            raise InvalidInputError(f"unknown switch_policy {self.switch_policy!r}")
        if self.storage not in (STORAGE_FLOAT64, STORAGE_INT8):
            raise InvalidInputError(f"unknown storage {self.storage!r}")

    @classmethod
    def adam(cls, shape, rank, switch_freq=200, alpha=DEFAULT_ALPHA,
             rho=RHO_ADAM, switch_policy=CARRY, storage=STORAGE_FLOAT64,
             beta1=DEFAULT_BETA1, beta2=DEFAULT_BETA2, eps=DEFAULT_EPS,
             mode="one-sided", side=None):
        proj = Projector(shape, rank, switch_freq=switch_freq, mode=mode, side=side)
        inner = AdamState.zeros(proj.compact_shape(), beta1=beta1, beta2=beta2, eps=eps)
        return cls(projector=proj, inner=inner, alpha=alpha, rho=rho,
                   switch_policy=switch_policy, storage=storage)

    @classmethod
    def adafactor(cls, shape, rank, switch_freq=200, alpha=DEFAULT_ALPHA,
                  switch_policy=CARRY, beta1=DEFAULT_BETA1,
                  beta2f=DEFAULT_BETA2, eps=DEFAULT_EPS, mode="one-sided",
                  side=None):
        proj = Projector(shape, rank, switch_freq=switch_freq, mode=mode, side=side)
        inner = AdafactorState.zeros(proj.compact_shape(), beta1=beta1,
                                     beta2f=beta2f, eps=eps)
        return cls(projector=proj, inner=inner, alpha=alpha, rho=RHO_ADAM,
                   switch_policy=switch_policy)

    def entry_count(self):
        """Moment entries plus projector factor entries."""
        return self.inner.entry_count() + self.projector.state_entry_count()


def _rotate_moments(gstate, P_old, Q_old):
    """Re-express compact moments in the refreshed basis.

    First moment maps linearly; the second moment has no exact linear
    transport, so sqrt(V) is rotated and re-squared (heuristic).
    """
    proj = gstate.projector
    inner = gstate.inner

    def left_rot():
        return proj.P.T @ P_old

    def right_rot():
        return Q_old.T @ proj.Q

    def transport(X):
        if proj.mode == "two-sided":
            return left_rot() @ X @ right_rot()
        if proj.side == "left":
            return left_rot() @ X
        return X @ right_rot()

    inner.M = transport(inner.M)
    if isinstance(inner, AdamState):
        inner.V = transport(np.sqrt(inner.V)) ** 2
    else:
        # Factored accumulators have no basis-aligned transport; the row/col
        # means are recomputed implicitly as new gradients arrive.
        rotated_sq = transport(np.sqrt(np.outer(inner.row_acc, inner.col_acc))) ** 2
        inner.row_acc = rotated_sq.mean(axis=1)
        inner.col_acc = rotated_sq.mean(axis=0)


def _apply_switch_policy(gstate, P_old, Q_old):
    if gstate.switch_policy == CARRY:
        return
    if gstate.switch_policy == RESET:
        inner = gstate.inner
        inner.M = np.zeros_like(inner.M)
        if isinstance(inner, AdamState):
            inner.V = np.zeros_like(inner.V)
        else:
            inner.row_acc = np.zeros_like(inner.row_acc)
            inner.col_acc = np.zeros_like(inner.col_acc)
        inner.t = 0
        return
    _rotate_moments(gstate, P_old, Q_old)


def _squeeze_through_int8(gstate):
    """Round-trip the moments through blockwise int8.

    The second moment is stored in the sqrt domain: raw V spans the squared
    dynamic range of the gradients, so linear absmax codes flush small
    entries to zero and the 1/(sqrt(V)+eps) update amplifies them by 1/eps.
    Coordinates whose stored sqrt-variance still underflows to code zero
    have their first moment zeroed too, so they skip the step instead of
    exploding.
    """
    inner = gstate.inner
    bs = gstate.q8_block_size
    _, M = q8_roundtrip(inner.M, bs)
    if isinstance(inner, AdamState):
        _, s = q8_roundtrip(np.sqrt(inner.V), bs)
        inner.V = s * s
        inner.M = np.where(s > 0.0, M, 0.0)
    else:
        inner.M = M
        _, row = q8_roundtrip(np.sqrt(inner.row_acc).reshape(1, -1), bs)
        _, col = q8_roundtrip(np.sqrt(inner.col_acc).reshape(1, -1), bs)
        inner.row_acc = (row * row).reshape(-1)
        inner.col_acc = (col * col).reshape(-1)


def galore_adam_step(W, G, gstate, eta, step):
    """One projected-optimizer step; returns the new weights, mutating gstate.

    Sequence: refresh the projector on schedule, project the gradient to
    compact form, run the inner stateful rule there (or pass through when
    rho is "identity"), project the result back scaled by alpha, and add
    eta times that to the weights.
    """
    W = linalg.as_matrix(W, "W")
    G = linalg.as_matrix(G, "G")
    if W.shape != G.shape:
        raise InvalidInputError(f"W shape {W.shape} != G shape {G.shape}")

    proj = gstate.projector
    P_old = None if proj.P is None else proj.P.copy()
    Q_old = None if proj.Q is None else proj.Q.copy()
    was_initialized = proj.initialized

    refreshed = proj.maybe_refresh(G, step)
    if refreshed and was_initialized:
        _apply_switch_policy(gstate, P_old, Q_old)

    R = proj.project(G)
    if gstate.rho == RHO_IDENTITY:
        N = R
    elif isinstance(gstate.inner, AdamState):
        N = adam_step(gstate.inner, R, eta=1.0)
    else:
        N = adafactor_step(gstate.inner, R, eta=1.0)
    if gstate.storage == STORAGE_INT8 and gstate.rho != RHO_IDENTITY:
        _squeeze_through_int8(gstate)

    G_tilde = proj.project_back(N, alpha=gstate.alpha)
    return W + eta * G_tilde


# ---------------------------------------------------------------------------
# LoRA baseline
# ---------------------------------------------------------------------------

@dataclass
class LoraState:
    """Frozen base weight plus trainable low-rank adaptors B (m x r) and
    A (r x n); the effective weight is W0 + scaling * B @ A."""

    W0: np.ndarray
    B: np.ndarray
    A: np.ndarray
    scaling: float
    adamB: AdamState = field(repr=False)
    adamA: AdamState = field(repr=False)

    @classmethod
    def create(cls, W0, rank, rng, lora_alpha=DEFAULT_LORA_ALPHA,
               init_std=0.02, beta1=DEFAULT_BETA1, beta2=DEFAULT_BETA2,
               eps=DEFAULT_EPS):
        W0 = linalg.as_matrix(W0, "W0")
        m, n = W0.shape
        rank = int(rank)
        if not 1 <= rank <= min(m, n):
            raise InvalidInputError(f"rank {rank} out of range for shape {W0.shape}")
        B = np.zeros((m, rank))
        A = rng.normal(0.0, init_std, size=(rank, n))
        return cls(
            W0=W0.copy(), B=B, A=A, scaling=lora_alpha / rank,
            adamB=AdamState.zeros((m, rank), beta1=beta1, beta2=beta2, eps=eps),
            adamA=AdamState.zeros((rank, n), beta1=beta1, beta2=beta2, eps=eps),
        )

    def effective_weight(self):
        return self.W0 + self.scaling * (self.B @ self.A)

    def entry_count(self):
        return self.adamB.entry_count() + self.adamA.entry_count()


def lora_adam_step(lstate, G_W, eta):
    """Update the adaptors from the effective-weight gradient; mutates lstate.

    G_W follows the negative-gradient convention, so the chain rule gives
    negative gradients for B and A directly and both are Adam-ascended.
    """
    G_W = linalg.as_matrix(G_W, "G_W")
    _check_shape(G_W, lstate.W0, what="effective-weight gradient")
    grad_B = lstate.scaling * (G_W @ lstate.A.T)
    grad_A = lstate.scaling * (lstate.B.T @ G_W)
    lstate.B = lstate.B + adam_step(lstate.adamB, grad_B, eta)
    lstate.A = lstate.A + adam_step(lstate.adamA, grad_A, eta)
    return lstate
