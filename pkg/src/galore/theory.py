"""Numerical study of gradient dynamics under coefficient matrices.

For gradients of the parametric form G = (1/N) * sum_i (A_i - B_i W C_i)
with PSD B_i, C_i held constant, plain gradient-ascent weight updates make
the vectorized gradient follow g_t = (I - eta*S) g_{t-1} with
S = (1/N) sum_i C_i (x) B_i. Two consequences are checked numerically:

* the stable rank of G_t is bounded by the stable rank of the component of
  G_{t0} inside the minimal eigenspace of S, plus an exponentially decaying
  excess governed by the two smallest distinct eigenvalues;
* with fixed column-orthonormal P, Q and the pure two-sided projected
  update, the compact residual R_t = P.T G_t Q contracts at least as fast
  as 1 - eta*kappa, where kappa aggregates minimal eigenvalues of the
  projected coefficients.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import InvalidInputError, StabilityError, UndefinedQuantityError

DISTINCT_EIG_TOL = 1e-9
DIM_CAP = 32


def _check_psd(M, name):
    M = linalg.as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"{name} must be square")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > 1e-10 * scale:
        raise InvalidInputError(f"{name} is not symmetric within 1e-10")
    evals = np.linalg.eigvalsh((M + M.T) / 2.0)
    if evals[0] < -1e-10 * scale:
        raise InvalidInputError(f"{name} is not PSD (min eigenvalue {evals[0]:g})")
    return (M + M.T) / 2.0


@dataclass
class DynamicsSpec:
    """Constant-coefficient gradient dynamics problem.

    A, B, C are length-N lists; W0 is the m x n starting weight. The
    coefficients are taken as constant from step t0 on (and, as built here,
    from step 0), which is the regime where the decay bound is exact.
    """

    A: list
    B: list
    C: list
    W0: np.ndarray
    eta: float
    steps: int
    t0: int = 0

    def __post_init__(self):
        if not (len(self.A) == len(self.B) == len(self.C)) or not self.A:
            raise InvalidInputError("A, B, C must be equal-length non-empty lists")
        self.W0 = linalg.as_matrix(self.W0, "W0")
        m, n = self.W0.shape
        if m > DIM_CAP or n > DIM_CAP:
            raise InvalidInputError(f"dimensions above the desk-scale cap {DIM_CAP}")
        self.A = [linalg.as_matrix(a, f"A[{i}]") for i, a in enumerate(self.A)]
        for i, a in enumerate(self.A):
            if a.shape != (m, n):
                raise InvalidInputError(f"A[{i}] shape {a.shape} != W0 shape {(m, n)}")
        self.B = [_check_psd(b, f"B[{i}]") for i, b in enumerate(self.B)]
        self.C = [_check_psd(c, f"C[{i}]") for i, c in enumerate(self.C)]
        for i in range(len(self.B)):
            if self.B[i].shape != (m, m):
                raise InvalidInputError(f"B[{i}] must be {m}x{m}")
            if self.C[i].shape != (n, n):
                raise InvalidInputError(f"C[{i}] must be {n}x{n}")
        if self.eta <= 0:
            raise InvalidInputError("eta must be positive")
        if self.steps < 1:
            raise InvalidInputError("steps must be >= 1")
        if not 0 <= self.t0 <= self.steps:
            raise InvalidInputError("t0 must lie in [0, steps]")

    @property
    def N(self):
        return len(self.A)

    @property
    def shape(self):
        return self.W0.shape

    def gradient(self, W):
        G = np.zeros(self.shape)
        for a, b, c in zip(self.A, self.B, self.C):
            G += a - b @ W @ c
        return G / self.N

    def coefficient_operator(self):
        """S = (1/N) sum_i C_i (x) B_i acting on vec(W)."""
        m, n = self.shape
        S = np.zeros((m * n, m * n))
        for b, c in zip(self.B, self.C):
            S += linalg.kron(c, b, dim_cap=DIM_CAP * DIM_CAP)
        return S / self.N


@dataclass
class DynamicsTrace:
    """Per-step gradient record plus the spectral data behind the bound."""

    t: np.ndarray
    G: list
    fro_norms: np.ndarray
    spec_norms: np.ndarray
    stable_ranks: np.ndarray
    bound_rhs: np.ndarray
    lambda1: float
    lambda2: float  # nan when every eigenvalue of S coincides with lambda1
    lambda2_defined: bool
    V1: np.ndarray  # mn x multiplicity basis of the minimal eigenspace
    G_par: np.ndarray
    sr_par: float  # nan when G_par vanishes
    g_par_zero: bool
    decay_ratio: float  # ((1 - eta*l2) / (1 - eta*l1))^2, nan if l2 undefined
    t0: int
    eta: float
    S: np.ndarray = field(repr=False)

    def excess(self):
        """sr(G_t) - sr(G_par), nan where either side is undefined."""
        return self.stable_ranks - self.sr_par


def simulate_dynamics(spec):
    """Run W_t = W_{t-1} + eta * G_{t-1}, recording the trace through step
    ``spec.steps`` (inclusive), with spectral data computed once from S."""
    S = spec.coefficient_operator()
    lam_max = float(np.linalg.eigvalsh(S)[-1])
    if spec.eta * lam_max >= 1.0:
        raise StabilityError(
            f"eta * lambda_max(S) = {spec.eta * lam_max:g} >= 1; dynamics unstable"
        )
    eig = linalg.sym_eig(S)
    lambda1 = float(eig.values[0])
    in_v1 = eig.values <= lambda1 + DISTINCT_EIG_TOL
    V1 = eig.vectors[:, in_v1]
    above = eig.values[~in_v1]
    lambda2_defined = above.size > 0
    lambda2 = float(above[0]) if lambda2_defined else float("nan")
    if lambda2_defined:
        decay_ratio = ((1.0 - spec.eta * lambda2) / (1.0 - spec.eta * lambda1)) ** 2
    else:
        decay_ratio = float("nan")

    m, n = spec.shape
    total = spec.steps + 1
    Gs = []
    W = spec.W0.copy()
    for _ in range(total):
        G = spec.gradient(W)
        Gs.append(G)
        W = W + spec.eta * G

    g_t0 = linalg.vec(Gs[spec.t0])
    g_par = V1 @ (V1.T @ g_t0)
    G_par = linalg.unvec(g_par, m, n)
    par_norm = float(np.linalg.norm(g_par))
    g_par_zero = par_norm <= 1e-14 * max(1.0, float(np.linalg.norm(g_t0)))
    sr_par = float("nan") if g_par_zero else linalg.stable_rank(G_par)
    perp_fro2 = float(np.linalg.norm(g_t0 - g_par) ** 2)
    par_spec2 = float("nan") if g_par_zero else linalg.spectral_norm(G_par) ** 2

    fro = np.empty(total)
    spec_n = np.empty(total)
    sr = np.empty(total)
    rhs = np.full(total, np.nan)
    for t, G in enumerate(Gs):
        fro[t] = linalg.fro_norm(G)
        spec_n[t] = linalg.spectral_norm(G) if fro[t] > 0 else 0.0
        sr[t] = linalg.stable_rank(G) if fro[t] > 0 else float("nan")
        if t >= spec.t0 and lambda2_defined and not g_par_zero:
            rhs[t] = sr_par + decay_ratio ** (t - spec.t0) * perp_fro2 / par_spec2

    return DynamicsTrace(
        t=np.arange(total), G=Gs, fro_norms=fro, spec_norms=spec_n,
        stable_ranks=sr, bound_rhs=rhs, lambda1=lambda1, lambda2=lambda2,
        lambda2_defined=lambda2_defined, V1=V1, G_par=G_par, sr_par=sr_par,
        g_par_zero=g_par_zero, decay_ratio=decay_ratio, t0=spec.t0,
        eta=spec.eta, S=S,
    )


def stable_rank_bound_rhs(trace, t):
    """Decay-bound right-hand side at step t, from a simulated trace."""
    if not trace.lambda2_defined:
        raise UndefinedQuantityError(
            "all eigenvalues coincide; the decay bound is degenerate"
        )
    if trace.g_par_zero:
        raise UndefinedQuantityError(
            "gradient component in the minimal eigenspace is zero; bound undefined"
        )
    if not trace.t0 <= t < trace.t.size:
        raise InvalidInputError(f"t={t} outside [{trace.t0}, {trace.t.size - 1}]")
    return float(trace.bound_rhs[t])


def fit_excess_ratio(trace, lo=1e-9, hi=1e-7, min_points=8):
    """Least-squares per-step ratio of the excess sr(G_t) - sr(G_par) over
    the tail window where the excess sits inside [lo, hi].

    Returns (fitted_ratio, points_used); fitted ratio is exp(slope) of the
    log-linear fit. Raises UndefinedQuantityError if the window is too thin.
    """
    ex = trace.excess()
    ts = trace.t
    mask = (ts >= trace.t0) & np.isfinite(ex) & (ex > lo) & (ex < hi)
    if int(mask.sum()) < min_points:
        raise UndefinedQuantityError(
            f"only {int(mask.sum())} usable excess points in [{lo:g}, {hi:g}]"
        )
    tt = ts[mask].astype(np.float64)
    yy = np.log(ex[mask])
    slope = np.polyfit(tt, yy, 1)[0]
    return float(np.exp(slope)), int(mask.sum())


# ---------------------------------------------------------------------------
# Fixed-subspace contraction
# ---------------------------------------------------------------------------

@dataclass
class ContractionTrace:
    r_norms: np.ndarray     # ||R_t||_F for t = 0..steps
    ratios: np.ndarray      # r_norms[t] / r_norms[t-1], nan where parent is 0
    kappa: float
    bound: float            # 1 - eta * kappa
    contraction_guaranteed: bool

    def steps_to(self, threshold):
        """Predicted step count for ||R|| to fall below ``threshold`` under
        the per-step bound; nan when no contraction is guaranteed."""
        r0 = self.r_norms[0]
        if not self.contraction_guaranteed or r0 <= threshold:
            return 0
        if self.bound <= 0.0:
            return 1
        return int(np.ceil(np.log(threshold / r0) / np.log(self.bound)))


def contraction_check(A, B, C, W0, P, Q, eta, steps):
    """Simulate the pure two-sided projected update with constant
    coefficients and fixed P, Q; report compact-residual norms, per-step
    ratios, kappa and the per-step bound 1 - eta*kappa.

    kappa <= 0 only flags that no contraction is guaranteed; the run still
    proceeds.
    """
    spec = DynamicsSpec(A=A, B=B, C=C, W0=W0, eta=eta, steps=steps)
    m, n = spec.shape
    P = linalg.as_matrix(P, "P")
    Q = linalg.as_matrix(Q, "Q")
    if P.shape[0] != m or Q.shape[0] != n or P.shape[1] != Q.shape[1]:
        raise InvalidInputError(
            f"P {P.shape} / Q {Q.shape} incompatible with W0 {spec.shape}"
        )
    if not linalg.is_column_orthonormal(P) or not linalg.is_column_orthonormal(Q):
        raise InvalidInputError("P and Q must be column-orthonormal")

    kappa = 0.0
    for b, c in zip(spec.B, spec.C):
        bmin = float(np.linalg.eigvalsh(P.T @ b @ P)[0])
        cmin = float(np.linalg.eigvalsh(Q.T @ c @ Q)[0])
        kappa += bmin * cmin
    kappa /= spec.N

    r_norms = np.empty(steps + 1)
    W = spec.W0.copy()
    R_prev = None
    for t in range(steps + 1):
        G = spec.gradient(W)
        R = P.T @ G @ Q
        r_norms[t] = linalg.fro_norm(R)
        W = W + eta * (P @ R @ Q.T)
        R_prev = R

    ratios = np.full(steps, np.nan)
    for t in range(1, steps + 1):
        if r_norms[t - 1] > 0.0:
            ratios[t - 1] = r_norms[t] / r_norms[t - 1]

    return ContractionTrace(
        r_norms=r_norms, ratios=ratios, kappa=kappa,
        bound=1.0 - eta * kappa, contraction_guaranteed=kappa > 0.0,
    )


# ---------------------------------------------------------------------------
# Trace export and suite builders
# ---------------------------------------------------------------------------

def write_trace_csv(trace, path):
    """Write a dynamics trace as CSV with columns
    t, fro_norm, spec_norm, stable_rank, bound_rhs, ratio.

    ratio is the per-step Frobenius-norm ratio (empty on the first row);
    undefined values are left empty.
    """

    def cell(v):
        return "" if not np.isfinite(v) else repr(float(v))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "fro_norm", "spec_norm", "stable_rank", "bound_rhs", "ratio"])
        for i, t in enumerate(trace.t):
            if i == 0 or trace.fro_norms[i - 1] == 0.0:
                ratio = float("nan")
            else:
                ratio = trace.fro_norms[i] / trace.fro_norms[i - 1]
            w.writerow([
                int(t), cell(trace.fro_norms[i]), cell(trace.spec_norms[i]),
                cell(trace.stable_ranks[i]), cell(trace.bound_rhs[i]), cell(ratio),
            ])


def random_psd(rng, dim, scale=1.0):
    """Well-conditioned random PSD matrix via M @ M.T / dim, rescaled."""
    M = rng.standard_normal((dim, dim))
    P = M @ M.T / dim
    return P * (scale / max(np.linalg.eigvalsh(P)[-1], 1e-12))


def make_symmetric_pair_spec(rng, dim, eta=0.05, steps=900):
    """N=1 spec with C = B, so the second-smallest eigenvalue of S is the
    doubly degenerate cross product and the excess stable rank decays at
    exactly the predicted squared ratio.

    The spectrum of B is pinned (random eigenbasis only) so the decay
    timescale is seed-independent: lambda1 = 0.25 is simple, lambda2 = 0.6,
    and the third mode dies fast enough not to contaminate a tail fit.
    """
    if dim < 3:
        raise InvalidInputError("need dim >= 3")
    beta = np.concatenate([[0.5, 1.2], np.linspace(2.2, 3.5, dim - 2)])
    basis = np.linalg.qr(rng.standard_normal((dim, dim)))[0]
    B = (basis * beta) @ basis.T
    B = (B + B.T) / 2.0
    A = [rng.standard_normal((dim, dim))]
    W0 = rng.standard_normal((dim, dim))
    return DynamicsSpec(A=A, B=[B], C=[B.copy()], W0=W0, eta=eta, steps=steps)


def make_rate_fit_spec(rng, eta=0.05, steps=260):
    """N=1 spec whose excess stable rank is an exactly geometric sequence
    at the predicted squared ratio, so a log-linear fit can identify the
    rate to float precision.

    Both coefficient spectra have a doubly degenerate smallest eigenvalue,
    making the minimal eigenspace a 2x2 product block; the starting
    gradient is a diagonal core in that block plus one off-block entry
    whose row and column both avoid the core's top singular pair. The
    three nonzero columns stay orthogonal for all time, so the singular
    values are exactly the column norms and no cross-mode terms enter.
    """
    m = n = 3
    beta = np.array([0.5, 0.5, 2.2])
    gamma = np.array([0.5, 0.5, 2.4])
    Z = np.linalg.qr(rng.standard_normal((m, m)))[0]
    Y = np.linalg.qr(rng.standard_normal((n, n)))[0]
    B = (Z * beta) @ Z.T
    C = (Y * gamma) @ Y.T
    K = np.zeros((m, n))
    K[0, 0] = rng.uniform(1.0, 1.4)   # top of the minimal-eigenspace core
    K[1, 1] = rng.uniform(0.6, 0.9)   # second core direction
    K[2, 1] = rng.uniform(0.05, 0.15)  # decaying mode, off the top pair
    A = Z @ K @ Y.T
    W0 = np.zeros((m, n))
    return DynamicsSpec(A=[A], B=[(B + B.T) / 2], C=[(C + C.T) / 2],
                        W0=W0, eta=eta, steps=steps)


def make_rank1_coeff_spec(rng, m, n, N, n_prime, eta=0.05, steps=200):
    """Rank-1 C_i = f_i f_i.T (f_i from an n_prime-dim subspace), full-rank
    B_i, and UNSTRUCTURED A_i. The minimal eigenspace of S is the product of
    the f-null-space with the full column space, and the generic A_i give
    the gradient a nonzero component there, so the decay bound is exercised
    with N > 1."""
    if not 1 <= n_prime < n:
        raise InvalidInputError("need 1 <= n_prime < n")
    basis = np.linalg.qr(rng.standard_normal((n, n_prime)))[0]
    A, B, C = [], [], []
    for _ in range(N):
        f = basis @ rng.standard_normal(n_prime)
        A.append(rng.standard_normal((m, n)))
        B.append(random_psd(rng, m) + 0.3 * np.eye(m))
        C.append(np.outer(f, f))
    W0 = rng.standard_normal((m, n))
    return DynamicsSpec(A=A, B=B, C=C, W0=W0, eta=eta, steps=steps)


def make_low_rank_batch_spec(rng, m, n, N, n_prime, eta=0.05, steps=200):
    """Rank-structured spec: C_i = f_i f_i.T with the f_i drawn from an
    n_prime-dimensional subspace and full-rank PSD B_i, so the minimal
    eigenspace of S is the product of the f-null-space with the full row
    space and the gradient rank stays at most n_prime."""
    if not 1 <= n_prime < n:
        raise InvalidInputError("need 1 <= n_prime < n")
    basis = np.linalg.qr(rng.standard_normal((n, n_prime)))[0]
    A, B, C = [], [], []
    for _ in range(N):
        f = basis @ rng.standard_normal(n_prime)
        a = rng.standard_normal(m)
        A.append(np.outer(a, f))
        B.append(random_psd(rng, m) + 0.3 * np.eye(m))
        C.append(np.outer(f, f))
    W0 = rng.standard_normal((m, n))
    return DynamicsSpec(A=A, B=B, C=C, W0=W0, eta=eta, steps=steps)
