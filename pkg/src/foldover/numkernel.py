"""Dense matrix and special-function primitives.

Everything here is a pure function of its arguments. Matrices are small
(a few hundred rows at most) so every routine works on dense arrays.
"""

import math

import numpy as np
from scipy import special

from .exceptions import DimensionError, DomainError, SingularMatrixError

DEFAULT_TOL_FACTOR = 1e-12


def qr_rank(M, tol_factor=DEFAULT_TOL_FACTOR):
    """Numerical rank of ``M``.

    Counts singular values above ``tol_factor * max(M.shape) * s_max``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise DimensionError(f"rank needs a nonempty 2-d matrix, got shape {M.shape}")
    if tol_factor <= 0:
        raise DomainError("tol_factor must be positive")
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol_factor * max(M.shape) * s[0]))


def sym_inverse(M):
    """Inverse of a symmetric nonsingular matrix.

    Raises :class:`SingularMatrixError` (carrying the numerical rank) when
    ``M`` is rank deficient at the :func:`qr_rank` tolerance.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.size == 0:
        raise DimensionError(f"expected a nonempty square matrix, got shape {M.shape}")
    scale = max(1.0, np.abs(M).max())
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-10 * scale):
        raise DomainError("matrix is not symmetric")
    r = qr_rank(M)
    if r < M.shape[0]:
        raise SingularMatrixError(f"matrix of order {M.shape[0]} has rank {r}", rank=r)
    inv = np.linalg.inv(M)
    inv = 0.5 * (inv + inv.T)
    resid = np.abs(M @ inv - np.eye(M.shape[0])).max()
    if resid >= 1e-8:
        raise SingularMatrixError(
            f"inverse residual {resid:.3g} exceeds 1e-8; matrix is ill conditioned", rank=r
        )
    return inv


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    if not x > 0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def _t_pdf(t, df):
    logc = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(logc - (df + 1) / 2 * math.log1p(t * t / df))


def _t_sf_positive(t, df):
    # P(T > t) for t >= 0
    return 0.5 * special.betainc(df / 2, 0.5, df / (df + t * t))


def t_quantile(upper_tail_prob, df):
    """Upper-tail critical value ``t`` with ``P(T_df > t) = upper_tail_prob``.

    Starts from the inverse regularized incomplete beta function and polishes
    the root with Halley steps on the survival function.
    """
    p = float(upper_tail_prob)
    if not 0.0 < p < 1.0:
        raise DomainError(f"upper tail probability must lie in (0, 1), got {p}")
    if df < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {df}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -t_quantile(1.0 - p, df)
    nu = float(df)
    x = special.betaincinv(nu / 2, 0.5, 2.0 * p)
    t = math.sqrt(nu * (1.0 - x) / x) if x > 0 else math.inf
    if not math.isfinite(t):
        return t
    for _ in range(8):
        f = _t_sf_positive(t, nu) - p
        d1 = -_t_pdf(t, nu)
        d2 = -d1 * (nu + 1) * t / (nu + t * t)
        step = 2 * f * d1 / (2 * d1 * d1 - f * d2)
        t_new = t - step
        if t_new <= 0:
            t_new = t / 2
        if abs(t_new - t) <= 1e-15 * max(1.0, t):
            t = t_new
            break
        t = t_new
    return t


def t_two_sided_pvalue(t, df):
    """Two-sided p-value ``2 P(T_df > |t|)``."""
    if df < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {df}")
    t = abs(float(t))
    return float(min(1.0, special.betainc(df / 2, 0.5, df / (df + t * t))))
