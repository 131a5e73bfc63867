"""Exact first- and second-moment dynamics of the co-training workflow.

Conditional on the initial data, the stacked estimates evolve as a discrete
linear dynamical system: the conditional mean is a matrix m_t applied to the
per-dataset OLS estimates, and the conditional covariance c_t obeys

    m_t = p_t + q_t m_{t-1}          m_0 = p_0
    c_t = q_t (sigma2 s_t^+ + c_{t-1}) q_t'          c_0 = 0

Unconditionally (initial responses drawn from the shared-truth Gaussian
model), the mean and covariance follow in closed form, including their t->inf
limits when the feedback map q has spectral radius below one. The covariance
limit solves the discrete Lyapunov fixed point c = q (c + sigma2 s^+) q'.

Note: the covariance recursion is implemented with the transposed right
factor q', which is what makes c_t a covariance and matches the vectorized
limit formula; the un-transposed variant would not stay symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import matcore
from .errors import (
    ConditioningError,
    DivergenceError,
    InvalidInputError,
    PreconditionError,
    ShapeError,
)
from .matcore import block_diag, kron, pinv, spectral_radius
from .workflow import GramSet, GroundTruth, InitialData, LiftedOperators, MixWeights, build_operators

STATE_SYMMETRY_TOL = 1e-10
STATE_PSD_TOL = 1e-10
PROPORTIONALITY_TOL = 1e-8
LYAPUNOV_DIRECT_MAX_DIM = 60
LYAPUNOV_FIXED_POINT_TOL = 1e-12


@dataclass(frozen=True)
class MomentState:
    """Conditional moments at one generation: mean map m and covariance c."""

    m: np.ndarray
    c: np.ndarray
    generation: int

    def __post_init__(self):
        m = matcore.as_matrix(self.m, "m")
        c = matcore.as_matrix(self.c, "c")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "c", c)
        kd = m.shape[0]
        if c.shape != (kd, kd):
            raise ShapeError(f"c must be {kd}x{kd}, got {c.shape}")
        scale = max(1.0, float(np.max(np.abs(c)))) if c.size else 1.0
        if float(np.max(np.abs(c - c.T))) > STATE_SYMMETRY_TOL * scale:
            raise InvalidInputError(f"covariance not symmetric at generation {self.generation}")
        min_eig = float(np.linalg.eigvalsh(0.5 * (c + c.T))[0])
        if min_eig < -STATE_PSD_TOL * max(float(np.trace(c)), 1.0):
            raise InvalidInputError(
                f"covariance not PSD at generation {self.generation} (min eig {min_eig:g})"
            )

    @property
    def kd(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True)
class UnconditionalMoments:
    """Mean vector and covariance of the stacked estimates over all noise."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", matcore.as_vector(self.mean, "mean"))
        object.__setattr__(self, "cov", matcore.as_matrix(self.cov, "cov"))
        kd = self.mean.shape[0]
        if self.cov.shape != (kd, kd):
            raise ShapeError(f"cov must be {kd}x{kd}, got {self.cov.shape}")


@dataclass(frozen=True)
class AsymptoticMoments:
    """Limits of the moment recursion under a stable feedback map.

    m and c are the limiting mean map and conditional covariance; mean/cov
    are the limiting unconditional moments. lyapunov_residual records
    ||c - q (c + sigma2 s^+) q'||_F as a solve-quality diagnostic.
    """

    m: np.ndarray
    c: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    rho: float
    lyapunov_residual: float


@dataclass(frozen=True)
class ConvergenceCertificate:
    """Result of the proportional-mixture stability check.

    ``proportional`` is True when the stationary synthetic Gram decomposes as
    scale * (mix_lambda * private + (1 - mix_lambda) * public) within
    tolerance; ``guaranteed`` additionally requires alpha < 1 and
    0 < beta <= mix_lambda, and certifies rho < 1.
    """

    proportional: bool
    mix_lambda: float | None
    scale: float | None
    rho: float
    guaranteed: bool
    fit_residual: float

    def __post_init__(self):
        if self.guaranteed and not self.rho < 1.0:
            raise InvalidInputError(
                f"certificate claims convergence but measured rho={self.rho}"
            )


def step_moments(
    state: MomentState, ops: LiftedOperators, s_t: np.ndarray, sigma2: float
) -> MomentState:
    """Advance (m, c) by one generation using that generation's operators."""
    s_t = matcore.as_matrix(s_t, "s_t")
    kd = state.kd
    if ops.q.shape != (kd, kd) or s_t.shape != (kd, kd):
        raise ShapeError(
            f"operators of shape {ops.q.shape} / {s_t.shape} do not match state dim {kd}"
        )
    if sigma2 < 0:
        raise InvalidInputError(f"sigma2 must be nonnegative, got {sigma2}")
    m_next = ops.p + ops.q @ state.m
    c_next = ops.q @ (sigma2 * pinv(s_t) + state.c) @ ops.q.T
    c_next = 0.5 * (c_next + c_next.T)
    return MomentState(m=m_next, c=c_next, generation=state.generation + 1)


def _synthetic_gram_tuple(entry, k: int, d: int) -> tuple[np.ndarray, ...]:
    """Accept a GramSet or a bare per-entity tuple of synthetic Grams."""
    syn = getattr(entry, "synthetic", entry)
    syn = tuple(matcore.as_matrix(s, "synthetic gram") for s in syn)
    if len(syn) != k:
        raise ShapeError(f"expected {k} synthetic grams, got {len(syn)}")
    for s in syn:
        if s.shape != (d, d):
            raise ShapeError(f"synthetic gram has shape {s.shape}, expected {(d, d)}")
    return syn


def operator_chain(
    initial: InitialData,
    weights: MixWeights,
    synthetic_grams: Sequence,
    horizon: int,
) -> list[LiftedOperators]:
    """Per-generation lifted operators for t = 0..horizon.

    Generation 0 uses alpha = 0 (no synthetic data exists yet); generation
    t >= 1 uses synthetic_grams[t-1].
    """
    if horizon < 0:
        raise InvalidInputError(f"horizon must be >= 0, got {horizon}")
    if weights.horizon < horizon:
        raise InvalidInputError(
            f"weight schedules cover {weights.horizon} generations, need {horizon}"
        )
    if len(synthetic_grams) < horizon:
        raise InvalidInputError(
            f"got synthetic grams for {len(synthetic_grams)} generations, need {horizon}"
        )
    k, d = initial.k_entities, initial.dim
    base = GramSet.from_features(
        [ds.features for ds in initial.private], initial.public.features
    )
    chain = [build_operators(base, alpha=weights.alpha[0], beta=weights.beta[0])]
    for t in range(1, horizon + 1):
        grams_t = GramSet(
            private=base.private,
            public=base.public,
            synthetic=_synthetic_gram_tuple(synthetic_grams[t - 1], k, d),
        )
        chain.append(build_operators(grams_t, alpha=weights.alpha[t], beta=weights.beta[t]))
    return chain


def run_conditional(
    initial: InitialData,
    weights: MixWeights,
    synthetic_grams: Sequence,
    sigma2: float,
    horizon: int,
) -> list[MomentState]:
    """Moment states for t = 0..horizon via the conditional recursion."""
    chain = operator_chain(initial, weights, synthetic_grams, horizon)
    kd = chain[0].kd
    states = [MomentState(m=chain[0].p, c=np.zeros((kd, kd)), generation=0)]
    k, d = initial.k_entities, initial.dim
    for t in range(1, horizon + 1):
        s_t = block_diag(_synthetic_gram_tuple(synthetic_grams[t - 1], k, d))
        states.append(step_moments(states[-1], chain[t], s_t, sigma2))
    return states


def closed_form_states(
    ops0: LiftedOperators,
    ops: LiftedOperators,
    s_stationary: np.ndarray,
    sigma2: float,
    horizon: int,
) -> list[MomentState]:
    """Stationary-weight moment states evaluated directly from matrix powers:

        m_t = q^t p_0 + (sum_{s<t} q^s) p
        c_t = sigma2 sum_{1<=s<=t} q^s s^+ (q^s)'

    Equivalent to the recursion when weights and synthetic Grams are constant
    for t >= 1; used as an independent cross-check of ``run_conditional``.
    """
    s_plus = pinv(matcore.as_matrix(s_stationary, "s_stationary"))
    kd = ops0.kd
    states = [MomentState(m=ops0.p, c=np.zeros((kd, kd)), generation=0)]
    q_power = np.eye(kd)  # q^s starting at s=0
    geo_sum = np.zeros((kd, kd))  # sum_{s<t} q^s
    c_sum = np.zeros((kd, kd))
    for t in range(1, horizon + 1):
        geo_sum = geo_sum + q_power
        q_power = ops.q @ q_power
        c_sum = c_sum + q_power @ s_plus @ q_power.T
        m_t = q_power @ ops0.p + geo_sum @ ops.p
        c_t = sigma2 * 0.5 * (c_sum + c_sum.T)
        states.append(MomentState(m=m_t, c=c_t, generation=t))
    return states


def _ols_mean_projection(grams: GramSet) -> np.ndarray:
    """(K+1)d x (K+1)d block diagonal of the row-space projections of each
    initial dataset; applied to stacked copies of theta it gives the mean of
    the stacked OLS estimates."""
    blocks = [pinv(s) @ s for s in grams.private] + [pinv(grams.public) @ grams.public]
    return block_diag(blocks)


def _ols_cov_diag(grams: GramSet) -> np.ndarray:
    """(K+1)d x (K+1)d block diagonal of pseudo-inverted initial Grams."""
    blocks = [pinv(s) for s in grams.private] + [pinv(grams.public)]
    return block_diag(blocks)


def unconditional_moments_general(
    state: MomentState, truth: GroundTruth, grams: GramSet
) -> UnconditionalMoments:
    """Exact unconditional moments with no rank assumptions.

    mean = m_t E[stacked OLS estimates], cov = sigma2 m_t D m_t' + c_t with
    D the block diagonal of pseudo-inverted initial Grams. Valid for any rank
    profile; reduces to the closed-form bias expression when the per-
    generation aggregates are full rank.
    """
    k, d = grams.k_entities, grams.dim
    theta_stack = np.tile(truth.theta, k + 1)
    mean = state.m @ (_ols_mean_projection(grams) @ theta_stack)
    cov = truth.sigma2 * state.m @ _ols_cov_diag(grams) @ state.m.T + state.c
    return UnconditionalMoments(mean=mean, cov=0.5 * (cov + cov.T))


def unconditional_moments(
    states: Sequence[MomentState],
    ops_chain: Sequence[LiftedOperators],
    g0: np.ndarray,
    truth: GroundTruth,
    grams: GramSet,
) -> UnconditionalMoments:
    """Unconditional moments of the final state via the closed-form bias map.

    mean = (I - q_t ... q_1 (I - g_0 g_0^+)) (ones_K kron theta)
    cov  = sigma2 m_t D m_t' + c_t

    Requires every generation-s aggregate Gram (s >= 1) to be full rank;
    raises PreconditionError naming the first offending generation otherwise.
    """
    if not states:
        raise InvalidInputError("need at least the generation-0 state")
    final = states[-1]
    if len(ops_chain) != final.generation:
        raise ShapeError(
            f"need one operator set per generation 1..{final.generation}, "
            f"got {len(ops_chain)}"
        )
    g0 = matcore.as_matrix(g0, "g0")
    kd = final.kd
    for s, ops in enumerate(ops_chain, start=1):
        if not matcore.is_full_rank(ops.g):
            raise PreconditionError(
                f"aggregate gram at generation {s} is rank deficient; "
                "the closed-form mean requires full rank"
            )
    bias_map = np.eye(kd) - g0 @ pinv(g0)
    for ops in ops_chain:  # accumulates q_t ... q_1 (I - g0 g0^+)
        bias_map = ops.q @ bias_map
    k = grams.k_entities
    target = np.tile(truth.theta, k)
    mean = target - bias_map @ target
    cov = truth.sigma2 * final.m @ _ols_cov_diag(grams) @ final.m.T + final.c
    return UnconditionalMoments(mean=mean, cov=0.5 * (cov + cov.T))


def solve_feedback_covariance(
    q: np.ndarray, r: np.ndarray, method: str = "auto"
) -> np.ndarray:
    """Solve the discrete Lyapunov fixed point c = q (c + r) q'.

    Direct vectorized solve for dimensions up to LYAPUNOV_DIRECT_MAX_DIM
    ((Kd)^2 unknowns), fixed-point iteration above that. Callers must have
    checked rho(q) < 1; the direct path raises ConditioningError if the
    vectorized system is numerically singular anyway.
    """
    q = matcore.as_matrix(q, "q")
    r = matcore.as_matrix(r, "r")
    n = q.shape[0]
    if q.shape != (n, n) or r.shape != (n, n):
        raise ShapeError(f"q and r must both be {n}x{n}")
    if method == "auto":
        method = "direct" if n <= LYAPUNOV_DIRECT_MAX_DIM else "iterative"
    if method == "direct":
        lhs = np.eye(n * n) - kron(q, q)
        rhs = (q @ r @ q.T).reshape(-1, order="F")
        try:
            x = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(f"vectorized Lyapunov system is singular: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise ConditioningError("vectorized Lyapunov solve produced non-finite values")
        c = x.reshape((n, n), order="F")
        return 0.5 * (c + c.T)
    if method == "iterative":
        c = np.zeros((n, n))
        for _ in range(200_000):
            c_next = q @ (c + r) @ q.T
            delta = float(np.linalg.norm(c_next - c, "fro"))
            c = c_next
            if delta <= LYAPUNOV_FIXED_POINT_TOL * max(1.0, float(np.linalg.norm(c, "fro"))):
                return 0.5 * (c + c.T)
        raise ConditioningError("Lyapunov fixed-point iteration did not converge")
    raise InvalidInputError(f"unknown method {method!r}")


def asymptotic_moments(
    ops: LiftedOperators,
    s_stationary: np.ndarray,
    grams: GramSet,
    sigma2: float,
    truth: GroundTruth,
    lyapunov_method: str = "auto",
) -> AsymptoticMoments:
    """Limits of the moment recursion under stationary weights and Grams.

    m = (I - q)^{-1} p and c solves c = q (c + sigma2 s^+) q'. Requires
    rho(q) < 1 (DivergenceError otherwise) and a full-rank aggregate Gram,
    without which the limiting mean is not the stacked truth.
    """
    s_stationary = matcore.as_matrix(s_stationary, "s_stationary")
    report = spectral_radius(ops.q)
    if report.radius >= 1.0:
        raise DivergenceError(
            f"feedback map has spectral radius {report.radius:.6f} >= 1; "
            "the moment recursion does not converge",
            rho=report.radius,
        )
    if not matcore.is_full_rank(ops.g):
        raise PreconditionError(
            "stationary aggregate gram is rank deficient; the limiting mean "
            "claim requires full rank"
        )
    kd = ops.kd
    m = np.linalg.solve(np.eye(kd) - ops.q, ops.p)
    r = sigma2 * pinv(s_stationary)
    c = solve_feedback_covariance(ops.q, r, method=lyapunov_method)
    residual = float(np.linalg.norm(c - ops.q @ (c + r) @ ops.q.T, "fro"))
    k = grams.k_entities
    mean = np.tile(truth.theta, k)
    cov = sigma2 * m @ _ols_cov_diag(grams) @ m.T + c
    return AsymptoticMoments(
        m=m,
        c=c,
        mean=mean,
        cov=0.5 * (cov + cov.T),
        rho=report.radius,
        lyapunov_residual=residual,
    )


def certify_convergence(grams: GramSet, alpha: float, beta: float) -> ConvergenceCertificate:
    """Check the proportional-mixture stability condition and measure rho(q).

    Fits nonnegative (a, b) in  S_syn ~ a S_priv + b (I kron S_pub)  by least
    squares over vectorized matrices; the condition holds when the relative
    residual is below tolerance with a > 0, giving scale = a + b and
    mix_lambda = a / (a + b). The certificate always reports the measured
    spectral radius of q, whether or not the condition holds.
    """
    s_syn = grams.synthetic_lifted()
    s_priv = grams.private_lifted()
    s_pub = kron(np.eye(grams.k_entities), grams.public)

    target = s_syn.reshape(-1)
    design = np.column_stack([s_priv.reshape(-1), s_pub.reshape(-1)])
    a, b, residual = _nonnegative_two_param_fit(design, target)
    norm_target = float(np.linalg.norm(target))
    if norm_target == 0.0:
        proportional, mix_lambda, scale, rel_residual = False, None, None, 0.0
    else:
        rel_residual = residual / norm_target
        proportional = rel_residual < PROPORTIONALITY_TOL and a > 0.0 and (a + b) > 0.0
        mix_lambda = a / (a + b) if proportional else None
        scale = a + b if proportional else None

    q = build_operators(grams, alpha, beta).q
    rho = spectral_radius(q).radius
    guaranteed = bool(
        proportional
        and 0.0 <= alpha < 1.0
        and 0.0 < beta <= mix_lambda + 1e-9
    )
    return ConvergenceCertificate(
        proportional=proportional,
        mix_lambda=mix_lambda,
        scale=scale,
        rho=rho,
        guaranteed=guaranteed,
        fit_residual=rel_residual if norm_target else 0.0,
    )


def _nonnegative_two_param_fit(design: np.ndarray, target: np.ndarray):
    """Least squares over two nonnegative coefficients, by trying the
    unconstrained solution and the three boundary restrictions."""

    def residual_for(coefs):
        return float(np.linalg.norm(design @ coefs - target))

    candidates = []
    sol, *_ = np.linalg.lstsq(design, target, rcond=None)
    if sol[0] >= 0 and sol[1] >= 0:
        candidates.append((sol[0], sol[1]))
    for j in range(2):
        col = design[:, j]
        denom = float(col @ col)
        coef = float(col @ target) / denom if denom > 0 else 0.0
        if coef >= 0:
            pair = [0.0, 0.0]
            pair[j] = coef
            candidates.append(tuple(pair))
    candidates.append((0.0, 0.0))
    best = min(candidates, key=lambda c: residual_for(np.array(c)))
    return float(best[0]), float(best[1]), residual_for(np.array(best))
