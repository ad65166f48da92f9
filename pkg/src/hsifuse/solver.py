"""Blind HSI-MSI fusion by partially linearized ADMM with Moreau smoothing.

Model::

    min  1/2 |H - S x1 P1 x2 P2|^2 + lambda1/2 |M - S x3 P3|^2
         + lambda2 TTNN(S) + I_mu(Z)     s.t.  S = Z,
    P1, P2 = D F Diag(sqrt(n) F b) F^*   (b in the unit simplex)
    P3(i, :) = window i filled with simplex weights

where ``I_mu(Z) = dist(Z, R+)^2 / (2 mu)`` is the Moreau envelope of the
nonnegativity indicator. One outer iteration runs, in order: the
linearized S step (TTNN prox), the closed-form (Y, Z) step, the multiplier
step, projected-gradient steps on b1 then b2, then on every spectral weight
vector.
"""

import logging
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import transform as tr
from .degradation import SpatialOperator, SpectralResponse, spatial_adjoint, spatial_degrade
from .initialization import InitConfig, init_hrhsi, init_kernels
from .optim import LinearMap, operator_norm, project_nonneg, project_simplex
from .tensor import as_cube, frob_norm, inner, mode_n_product, unfold

__all__ = [
    "FusionConfig",
    "SolverState",
    "TraceRecord",
    "NumericalError",
    "data_terms",
    "grad_s",
    "step_alpha",
    "update_s",
    "update_z",
    "update_multiplier",
    "kernel_problem",
    "kernel_objective",
    "kernel_gradient",
    "kernel_gradient_fourier",
    "kernel_lipschitz",
    "update_b_spatial",
    "srf_objective",
    "srf_gradient",
    "update_b_spectral",
    "eval_lagrangian",
    "fuse",
    "known_operator_config",
]

log = logging.getLogger(__name__)

STEPSIZE_RULES = ("theory", "paper_literal")


class NumericalError(RuntimeError):
    """Raised when an iterate stops being finite; ``step`` names the culprit."""

    def __init__(self, step, iteration):
        super().__init__(f"non-finite values produced by {step} at iteration {iteration}")
        self.step = step
        self.iteration = iteration


@dataclass
class FusionConfig:
    lambda1: float = 1.0
    lambda2: float = 0.01
    beta: float = 1.0
    mu: float = 2.0
    max_iter: int = 100
    rel_tol: float = 1e-4
    stepsize_rule: str = "theory"
    transform_kind: str = "data_svd"
    inner_pg_steps: int = 5
    seed: int = 0
    estimate_psf: bool = True
    estimate_srf: bool = True
    certify_descent: bool = False

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "beta", "mu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_iter < 0 or self.inner_pg_steps < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be nonnegative")
        if self.stepsize_rule not in STEPSIZE_RULES:
            raise ValueError(f"stepsize_rule must be one of {STEPSIZE_RULES}")
        if self.transform_kind not in tr.KINDS:
            raise ValueError(f"transform_kind must be one of {tr.KINDS}")
        if self.beta * self.mu <= np.sqrt(2):
            if self.certify_descent:
                raise ValueError(
                    f"descent certification needs beta*mu > sqrt(2), got {self.beta * self.mu:.4g}"
                )
            warnings.warn(
                f"beta*mu = {self.beta * self.mu:.4g} <= sqrt(2); monotone decrease of the"
                " augmented Lagrangian is not guaranteed",
                stacklevel=2,
            )


@dataclass
class TraceRecord:
    iter: int
    l1: float
    l2: float
    ttnn: float
    lagrangian: float
    primal_residual: float
    rel_change: float
    wall_ms: float
    residual_sy: float = 0.0
    alpha: float = 0.0


@dataclass
class SolverState:
    s: np.ndarray
    z: np.ndarray
    y: np.ndarray
    lambda_t: np.ndarray
    op1: SpatialOperator
    op2: SpatialOperator
    sr: SpectralResponse
    iter: int = 0
    trace: list = field(default_factory=list)
    lagrangian0: float = np.nan
    stalls: list = field(default_factory=list)
    descent_violations: list = field(default_factory=list)

    @classmethod
    def start(cls, s0, op1, op2, sr):
        s0 = np.asarray(s0, dtype=np.float64).copy()
        return cls(
            s=s0,
            z=s0.copy(),
            y=project_nonneg(s0),
            lambda_t=np.zeros_like(s0),
            op1=op1,
            op2=op2,
            sr=sr,
        )


# -- data terms and the S block ---------------------------------------------


def data_terms(s, h, m, op1, op2, sr, lambda1):
    r1 = spatial_degrade(s, op1, op2) - h
    r2 = sr.apply(s) - m
    return 0.5 * inner(r1, r1), 0.5 * lambda1 * inner(r2, r2)


def grad_s(state, h, m, lambda1):
    """Gradient of ``L1 + L2`` with respect to S at the current operators."""
    s = state.s
    if h.shape[2] != s.shape[2] or m.shape[:2] != s.shape[:2]:
        raise ValueError(f"data shapes {h.shape}, {m.shape} incompatible with S {s.shape}")
    r1 = spatial_degrade(s, state.op1, state.op2) - h
    g = spatial_adjoint(r1, state.op1, state.op2)
    if lambda1 != 0:
        r2 = state.sr.apply(s) - m
        g = g + lambda1 * state.sr.adjoint(r2)
    return g


def _spatial_sq_norm(op):
    fwd = LinearMap(
        forward=lambda v: op.apply(v, axis=0),
        adjoint=lambda v: op.adjoint(v, axis=0),
        in_shape=(op.n,),
        out_shape=(op.m,),
    )
    return operator_norm(fwd).value ** 2


def step_alpha(state, lambda1, rule="theory"):
    """Prox coefficient of the linearized S step.

    ``alpha_tilde = |P1^T P1| |P2^T P2| + lambda1 |P3^T P3|`` bounds the
    Lipschitz constant of the data-term gradient. The ``theory`` rule uses
    ``max(1, alpha_tilde)``; ``paper_literal`` uses its reciprocal.
    """
    p3 = state.sr.matrix()
    n3 = np.linalg.norm(p3, 2) ** 2
    a_tilde = _spatial_sq_norm(state.op1) * _spatial_sq_norm(state.op2) + lambda1 * n3
    if rule == "theory":
        return max(1.0, a_tilde)
    if rule == "paper_literal":
        return 1.0 / max(1.0, a_tilde)
    raise ValueError(f"unknown stepsize rule {rule!r}")


def update_s(state, h, m, cfg, t, alpha=None):
    if alpha is None:
        alpha = step_alpha(state, cfg.lambda1, cfg.stepsize_rule)
    beta = cfg.beta
    g = grad_s(state, h, m, cfg.lambda1)
    s_tilde = alpha / (alpha + beta) * (state.s - g / alpha)
    z_tilde = beta / (alpha + beta) * (state.z - state.lambda_t / beta)
    return tr.prox_ttnn(s_tilde + z_tilde, cfg.lambda2 / (alpha + beta), t)


def update_z(state, cfg):
    """Closed-form minimizer of the smoothed Z subproblem, returned as ``(y, z)``."""
    beta, mu = cfg.beta, cfg.mu
    y = project_nonneg(state.s + state.lambda_t / beta)
    z = mu / (1.0 + mu * beta) * (y / mu + state.lambda_t + beta * state.s)
    return y, z


def update_multiplier(state, cfg):
    return state.lambda_t + cfg.beta * (state.s - state.y)


# -- spatial kernel subproblem -----------------------------------------------


def kernel_problem(state, h, mode):
    """Return ``(op, A, W)`` for the mode-1 or mode-2 kernel least squares.

    Mode 1 pairs ``A = unfold(S x2 P2, 1)`` with ``W = unfold(H, 1)``; mode 2
    uses the already-updated P1: ``A = unfold(S x1 P1, 2)``.
    """
    if mode == 1:
        op = state.op1
        a = unfold(state.op2.apply(state.s, axis=1), 1)
    elif mode == 2:
        op = state.op2
        a = unfold(state.op1.apply(state.s, axis=0), 2)
    else:
        raise ValueError(f"spatial mode must be 1 or 2, got {mode}")
    return op, a, unfold(h, mode)


def _jacobian(op, fa):
    """Linear map ``b -> D C(b) A`` given ``fa = fft(A, axis=0)``."""
    n, kept = op.n, op.kept

    def forward(b):
        return np.fft.ifft(np.fft.fft(b)[:, None] * fa, axis=0).real[kept]

    def adjoint(r):
        up = np.zeros((n, r.shape[1]))
        up[kept] = r
        return np.fft.ifft(np.sum(np.fft.fft(up, axis=0) * np.conj(fa), axis=1)).real

    return LinearMap(forward, adjoint, (n,), (kept.size, fa.shape[1]))


def kernel_objective(b, a, w, op):
    jac = _jacobian(op, np.fft.fft(a, axis=0))
    x = jac.forward(np.asarray(b, dtype=np.float64)) - w
    return 0.5 * float(np.sum(x**2))


def kernel_gradient(b, a, w, op):
    """Gradient of ``1/2 |D C(b) A - W|^2`` by FFT cross-correlation."""
    jac = _jacobian(op, np.fft.fft(a, axis=0))
    return jac.adjoint(jac.forward(np.asarray(b, dtype=np.float64)) - w)


def kernel_gradient_fourier(b, a, w, op):
    """Same gradient through the Fourier-diagonal route.

    ``Q = F^* D^T X(b) A^T F`` and ``grad = sqrt(n) Re(F diag(Q))`` with ``F``
    the unitary DFT. Dense in ``n``; meant for cross-checks.
    """
    n = op.n
    x = _jacobian(op, np.fft.fft(a, axis=0)).forward(np.asarray(b, dtype=np.float64)) - w
    up = np.zeros((n, a.shape[1]))
    up[op.kept] = x
    g = up @ a.T
    f = np.fft.fft(np.eye(n), axis=0, norm="ortho")
    q = f.conj().T @ g @ f
    return np.sqrt(n) * (f @ np.diag(q)).real


def kernel_lipschitz(op, a):
    """``sigma_max(J)^2`` for ``J b = D C(b) A``: the Hessian norm of the kernel loss."""
    return operator_norm(_jacobian(op, np.fft.fft(a, axis=0))).value ** 2


def update_b_spatial(state, h, mode, cfg):
    """Projected-gradient steps on one blur kernel; returns the new operator."""
    op, a, w = kernel_problem(state, h, mode)
    jac = _jacobian(op, np.fft.fft(a, axis=0))
    lip = operator_norm(jac).value ** 2
    if not lip > 0:
        state.stalls.append((state.iter, f"b{mode}"))
        log.warning("kernel %d update skipped: zero Lipschitz estimate", mode)
        return op
    b = op.b
    for _ in range(cfg.inner_pg_steps):
        grad = jac.adjoint(jac.forward(b) - w)
        b = project_simplex(b - grad / lip)
    return op.with_kernel(b)


# -- spectral response subproblem --------------------------------------------


def _window_matrix(s, lo, hi):
    return s[:, :, lo : hi + 1].reshape(-1, hi - lo + 1)


def srf_objective(b, s, m_band, window):
    lo, hi = window
    r = _window_matrix(s, lo, hi) @ b - m_band.ravel()
    return float(r @ r)


def srf_gradient(b, s, m_band, window):
    """Gradient of ``|T b - M_i|^2``: entries ``2 <T b - M_i, T(:, :, k)>``."""
    lo, hi = window
    t = _window_matrix(s, lo, hi)
    return 2.0 * t.T @ (t @ b - m_band.ravel())


def update_b_spectral(state, m, cfg):
    sr = state.sr
    new = []
    for i, (window, b) in enumerate(zip(sr.windows, sr.weights)):
        t = _window_matrix(state.s, *window)
        target = m[:, :, i].ravel()
        if b.size == 1:
            new.append(b)
            continue
        lip = 2.0 * operator_norm(LinearMap(lambda v: t @ v, lambda r: t.T @ r, (b.size,), (t.shape[0],))).value ** 2
        if not lip > 0:
            state.stalls.append((state.iter, f"b3[{i}]"))
            new.append(b)
            continue
        for _ in range(cfg.inner_pg_steps):
            b = project_simplex(b - 2.0 * t.T @ (t @ b - target) / lip)
        new.append(b)
    return sr.with_weights(new)


# -- monitoring ---------------------------------------------------------------


def eval_lagrangian(state, h, m, cfg, t):
    """Moreau-envelope augmented Lagrangian at the current state.

    Returns the total and a dict with the individual terms.
    """
    l1, l2 = data_terms(state.s, h, m, state.op1, state.op2, state.sr, cfg.lambda1)
    nuc = tr.ttnn(state.s, t)
    neg = np.minimum(state.z, 0.0)
    envelope = inner(neg, neg) / (2.0 * cfg.mu)
    gap = state.s - state.z
    coupling = inner(state.lambda_t, gap) + 0.5 * cfg.beta * inner(gap, gap)
    total = l1 + l2 + cfg.lambda2 * nuc + envelope + coupling
    return total, {"l1": l1, "l2": l2, "ttnn": nuc, "envelope": envelope, "coupling": coupling}


def _check_finite(x, step, it):
    if not np.all(np.isfinite(x)):
        raise NumericalError(step, it)


def _as_response(windows, n_bands):
    if isinstance(windows, SpectralResponse):
        return windows
    return SpectralResponse(n_bands, windows)


def fuse(h, m, windows, factor, cfg=None, init_cfg=None, offset=None,
         op1=None, op2=None, sr=None, s0=None, callback=None):
    """Run blind fusion and return ``(S, state)``.

    Parameters
    ----------
    h, m : ndarray
        LR-HSI ``(I', J', K)`` and HR-MSI ``(I, J, K')``.
    windows : sequence of (lo, hi) or SpectralResponse
        0-based inclusive band window per MSI band.
    factor : int
        Spatial resolution ratio; ``I = factor * I'``.
    op1, op2, sr : optional
        Replace the Gaussian operator seeds (e.g. with known operators).
    s0 : ndarray, optional
        Replace the regression initializer.
    callback : callable, optional
        Called as ``callback(state)`` after every iteration.
    """
    cfg = cfg or FusionConfig()
    init_cfg = init_cfg or InitConfig()
    h = as_cube(h, "hsi")
    m = as_cube(m, "msi")
    n1, n2, n_msi = m.shape
    k = h.shape[2]
    if factor < 1 or (n1, n2) != (factor * h.shape[0], factor * h.shape[1]):
        raise ValueError(
            f"MSI spatial dims ({n1}, {n2}) are not factor {factor} times"
            f" HSI spatial dims ({h.shape[0]}, {h.shape[1]})"
        )
    response = _as_response(windows, k)
    if response.n_out != n_msi or response.n_bands != k:
        raise ValueError(
            f"{response.n_out} windows over {response.n_bands} bands do not match"
            f" MSI bands {n_msi} / HSI bands {k}"
        )

    seed1, seed2, seed3 = init_kernels(n1, n2, factor, response, init_cfg, offset)
    op1 = op1 or seed1
    op2 = op2 or seed2
    sr = sr or seed3
    if s0 is None:
        s0 = init_hrhsi(h, m, factor, init_cfg, offset)
    t = tr.build_transform(cfg.transform_kind, n3=k, source=h if cfg.transform_kind == "data_svd" else None)

    state = SolverState.start(s0, op1, op2, sr)
    prev_l, _ = eval_lagrangian(state, h, m, cfg, t)
    state.lagrangian0 = prev_l

    for it in range(1, cfg.max_iter + 1):
        state.iter = it
        tic = time.perf_counter()
        s_old = state.s

        alpha = step_alpha(state, cfg.lambda1, cfg.stepsize_rule)
        state.s = update_s(state, h, m, cfg, t, alpha)
        _check_finite(state.s, "update_s", it)
        state.y, state.z = update_z(state, cfg)
        _check_finite(state.z, "update_z", it)
        state.lambda_t = update_multiplier(state, cfg)
        _check_finite(state.lambda_t, "update_multiplier", it)
        if cfg.estimate_psf:
            state.op1 = update_b_spatial(state, h, 1, cfg)
            _check_finite(state.op1.b, "update_b_spatial(mode=1)", it)
            state.op2 = update_b_spatial(state, h, 2, cfg)
            _check_finite(state.op2.b, "update_b_spatial(mode=2)", it)
        if cfg.estimate_srf:
            state.sr = update_b_spectral(state, m, cfg)
            for w in state.sr.weights:
                _check_finite(w, "update_b_spectral", it)

        total, terms = eval_lagrangian(state, h, m, cfg, t)
        old_norm = frob_norm(s_old)
        change = frob_norm(state.s - s_old) / old_norm if old_norm > 0 else np.inf
        rec = TraceRecord(
            iter=it,
            l1=terms["l1"],
            l2=terms["l2"],
            ttnn=terms["ttnn"],
            lagrangian=total,
            primal_residual=frob_norm(state.s - state.z),
            rel_change=change,
            wall_ms=1e3 * (time.perf_counter() - tic),
            residual_sy=frob_norm(state.s - state.y),
            alpha=alpha,
        )
        state.trace.append(rec)
        if total > prev_l + 1e-8 * abs(prev_l):
            state.descent_violations.append(it)
        prev_l = total
        log.debug("iter %d  L=%.6e  res=%.3e  change=%.3e", it, total, rec.primal_residual, change)
        if callback is not None:
            callback(state)
        if change <= cfg.rel_tol:
            break

    return state.s, state


def known_operator_config(cfg):
    """Copy of ``cfg`` that keeps the supplied operators fixed."""
    return replace(cfg, estimate_psf=False, estimate_srf=False)
