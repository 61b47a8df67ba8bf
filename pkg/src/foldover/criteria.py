"""Design-quality functionals: ECI and the Bayesian A-criterion."""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .design import HalfDesign, alias_matrix, as_runs, full_model_matrix, model_matrix
from .dof import exact_dof, half_residual_df, residual_df
from .exceptions import DesignError, DomainError, SingularMatrixError
from .numkernel import log_gamma, qr_rank, sym_inverse, t_quantile


@dataclass(frozen=True)
class EciReport:
    eci: float
    v: tuple
    g: int
    c: float
    t: float
    alias_term: float
    alpha: float
    tau2: float = None
    diagnostic: str = ""

    @property
    def avg_se(self):
        """Mean of ``sqrt(v_j / 2)``, the foldover standard-error scale."""
        return float(np.mean(np.sqrt(np.asarray(self.v) / 2)))

    def to_dict(self):
        d = asdict(self)
        d["v"] = list(self.v)
        d["avg_sqrt_v_half"] = self.avg_se
        if math.isinf(self.eci):
            d["eci"] = None
        return d


def design_variances(H):
    """Diagonal of ``(H'H)^-1``."""
    E = H.entries if isinstance(H, HalfDesign) else as_runs(H)
    E = E.astype(float)
    if qr_rank(E) != E.shape[1]:
        raise DesignError("design variances need a full column rank half design")
    return np.diag(sym_inverse(E.T @ E))


def c_constant(g):
    """``sqrt(2/g) * Gamma((g+1)/2) / Gamma(g/2)``; below 1 and rising to 1."""
    if g < 1:
        raise DomainError(f"c(g) needs g >= 1, got {g}")
    return math.sqrt(2.0 / g) * math.exp(log_gamma((g + 1) / 2) - log_gamma(g / 2))


def critical_multiplier(alpha, g):
    """``c(g) * t_{alpha/2, g}``."""
    return c_constant(g) * t_quantile(alpha / 2, g)


def _infinite(v, g, alpha, tau2=None, alias_term=0.0):
    return EciReport(math.inf, tuple(v), g, math.nan, math.nan, alias_term, alpha, tau2,
                     "no residual degrees of freedom (g = 0)")


def eci_from_parts(v, g, alpha):
    """Foldover ECI from half-design variances ``v`` and residual df ``g``."""
    if g < 1:
        return math.inf
    return critical_multiplier(alpha, g) * float(np.mean(np.sqrt(np.asarray(v) / 2)))


def eci_foldover(H, alpha, spec):
    """ECI of the foldover of ``H`` using the exact model-based ``g``."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    E = H.entries if isinstance(H, HalfDesign) else as_runs(H)
    v = design_variances(E)
    g = half_residual_df(E, spec)
    if g < 1:
        return _infinite(v, g, alpha)
    c = c_constant(g)
    t = t_quantile(alpha / 2, g)
    eci = c * t * float(np.mean(np.sqrt(v / 2)))
    return EciReport(eci, tuple(float(x) for x in v), g, c, t, 0.0, alpha)


def eci_general(D, alpha, tau2, spec):
    """ECI of an arbitrary design, including the expected alias bias.

    The bias term for factor j is ``sqrt(2 tau2 / pi * A_j'A_j)`` where
    ``A_j`` is the alias-matrix row of main effect j (intercept excluded).
    ``v`` holds the main-effect diagonal of ``(X1'X1)^-1``.
    """
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if tau2 < 0:
        raise DomainError("tau2 must be nonnegative")
    runs = D.runs if hasattr(D, "runs") else as_runs(D)
    X1, X2 = model_matrix(runs, spec)
    info_inv = sym_inverse(X1.T @ X1)
    v = np.diag(info_inv)[1:]
    if X2.shape[1]:
        A = (info_inv @ (X1.T @ X2))[1:]
        bias = np.sqrt(2.0 * tau2 / math.pi * np.sum(A * A, axis=1))
    else:
        bias = np.zeros(len(v))
    alias_term = float(np.mean(bias))
    g = residual_df(runs, spec)
    if g < 1:
        return _infinite(v, g, alpha, tau2, alias_term)
    c = c_constant(g)
    t = t_quantile(alpha / 2, g)
    eci = float(np.mean(bias + c * t * np.sqrt(v)))
    # report v on the half-design scale so foldovers match eci_foldover
    return EciReport(eci, tuple(float(x) for x in 2 * v), g, c, t, alias_term, alpha, tau2)


def prior_precision(m, p, tau2):
    """``K / tau2``: zero on intercept and main effects, ``1/tau2`` elsewhere."""
    K = np.zeros((p, p))
    idx = np.arange(m + 1, p)
    K[idx, idx] = 1.0 / tau2 if math.isfinite(tau2) else 0.0
    return K


def bayes_a(X0_info, XA, tau2, m):
    """``tr[(XA'XA + X0'X0 + K/tau2)^-1]``.

    ``X0_info`` is the information matrix ``X0'X0`` of the base design and
    ``XA`` the model matrix of the added runs (may have zero rows).
    """
    X0_info = np.asarray(X0_info, dtype=float)
    p = X0_info.shape[0]
    if tau2 <= 0:
        raise DomainError("tau2 must be positive")
    XA = np.asarray(XA, dtype=float).reshape(-1, p)
    M = X0_info + XA.T @ XA + prior_precision(m, p, tau2)
    try:
        return float(np.trace(sym_inverse(M)))
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"Bayesian A information is singular: {exc}", rank=exc.rank) from exc


def foldover_g(H, spec):
    return exact_dof(H, spec).g
