"""Two-stage analysis of (augmented) foldover designs.

Stage 0 estimates the error variance from the residual of the full
second-order model. Stage 1 tests main effects on the zero-aliased foldover
runs only. Stage 2 enumerates every strong-heredity submodel of the
second-order terms among the active factors, fit on all runs, and ranks them
with a selection criterion.
"""

import math
import re
from dataclasses import dataclass, field
from itertools import combinations, islice

import numpy as np

from .design import MAIN, QUAD, AugmentedDesign, FoldoverDesign, HalfDesign, ModelSpec, as_runs, full_model_matrix
from .exceptions import ConfigurationError, DesignError, DomainError
from .numkernel import qr_rank, sym_inverse, t_quantile, t_two_sided_pvalue


class SelectionCriterion:
    """Scores a submodel from its RSS and parameter count ``k``.

    ``monotone`` promises the score never decreases as RSS or ``k`` grows,
    which lets best-only selection stop early.
    """

    name = "criterion"
    monotone = False

    def __call__(self, rss, n, k, sigma2):
        raise NotImplementedError

    def to_dict(self):
        return {"name": self.name}


class MBIC(SelectionCriterion):
    """``RSS / sigma2_X + k * penalty`` with ``penalty = ln(n)`` by default.

    ``sigma2_X`` is the pre-selection variance estimate, so the criterion
    does not depend on the residual of the submodel being scored.
    """

    name = "mbic"
    monotone = True

    def __init__(self, penalty=None):
        self.penalty = penalty

    def __call__(self, rss, n, k, sigma2):
        if not sigma2 > 0:
            raise DomainError("mBIC needs a positive variance estimate")
        pen = math.log(n) if self.penalty is None else self.penalty
        return rss / sigma2 + k * pen

    def to_dict(self):
        return {"name": self.name, "penalty": self.penalty}


class BIC(SelectionCriterion):
    """``n ln(RSS/n) + k ln(n)``."""

    name = "bic"
    monotone = True

    def __call__(self, rss, n, k, sigma2=None):
        return n * np.log(np.maximum(rss, 1e-300) / n) + k * math.log(n)


def parse_criterion(text):
    """``"bic"``, ``"mbic"`` or ``"mbic:penalty=2.5"``."""
    if isinstance(text, SelectionCriterion):
        return text
    text = (text or "bic").strip().lower()
    name, _, rest = text.partition(":")
    params = {}
    for item in filter(None, re.split(r"[,;]", rest)):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigurationError(f"criterion parameter {item!r} is not key=value")
        try:
            params[key.strip()] = float(val)
        except ValueError as exc:
            raise ConfigurationError(f"criterion parameter {key}={val!r} is not a number") from exc
    if name == "bic":
        if params:
            raise ConfigurationError("bic takes no parameters")
        return BIC()
    if name == "mbic":
        unknown = set(params) - {"penalty"}
        if unknown:
            raise ConfigurationError(f"unknown mbic parameters: {sorted(unknown)}")
        return MBIC(params.get("penalty"))
    raise ConfigurationError(f"unknown criterion {name!r}; use 'mbic[:penalty=x]' or 'bic'")


@dataclass(frozen=True)
class EffectRow:
    factor: int
    estimate: float
    se: float
    t: float
    p: float
    ci_low: float
    ci_high: float

    @property
    def name(self):
        return f"d{self.factor}"


@dataclass
class FitReport:
    sigma2_hat: float
    df: int
    rows: list
    alpha: float
    n_stage1: int
    t_crit: float

    @property
    def active(self):
        return tuple(r.factor for r in self.rows if r.p < self.alpha)

    @property
    def sigma_hat(self):
        return math.sqrt(self.sigma2_hat)

    def to_dict(self):
        return {
            "sigma2_hat": self.sigma2_hat,
            "sigma_hat": self.sigma_hat,
            "df": self.df,
            "alpha": self.alpha,
            "n_stage1": self.n_stage1,
            "active": list(self.active),
            "effects": [
                {"factor": r.factor, "estimate": r.estimate, "se": r.se, "t": r.t, "p": r.p,
                 "ci_low": r.ci_low, "ci_high": r.ci_high}
                for r in self.rows
            ],
        }


@dataclass
class ModelCandidate:
    terms: tuple  # names such as "d1d4", "d2^2"
    criterion: float
    r2: float
    rss: float
    n_params: int
    estimable: bool = True
    rank: int = None
    coefficients: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "terms": list(self.terms),
            "criterion": None if not math.isfinite(self.criterion) else self.criterion,
            "r2": None if not math.isfinite(self.r2) else self.r2,
            "rss": None if not math.isfinite(self.rss) else self.rss,
            "n_params": self.n_params,
            "estimable": self.estimable,
            "rank": self.rank,
            "coefficients": self.coefficients,
        }


@dataclass
class AnalysisResult:
    first_stage: FitReport
    candidates: list
    n_stage1: int
    selected: ModelCandidate = None

    @property
    def best(self):
        if self.selected is not None or not self.candidates:
            return self.selected
        return best_candidate(self.candidates)


def _design_parts(D):
    """Return (runs, foldover row indices, factors)."""
    if isinstance(D, HalfDesign):
        D = FoldoverDesign(D)
    if isinstance(D, FoldoverDesign):
        D = AugmentedDesign.from_foldover(D)
    if not isinstance(D, AugmentedDesign):
        D = AugmentedDesign.from_runs(D)
    return D.runs, D.foldover_rows, D.factors


def _default_spec(D, spec):
    if spec is not None:
        return spec
    _, _, factors = _design_parts(D)
    return ModelSpec.default_for(factors)


def _orthonormal_basis(X):
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return U[:, :0]
    keep = s > 1e-12 * max(X.shape) * s[0]
    return U[:, keep]


def preselect_sigma2(y, D, spec=None):
    """Residual variance after projecting off the full second-order model.

    Returns ``(sigma2, g)`` with ``g = n - rank(X)``.
    """
    runs, _, _ = _design_parts(D)
    spec = _default_spec(D, spec)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != runs.shape[0]:
        raise DesignError(f"{y.shape[0]} responses for {runs.shape[0]} runs")
    X = full_model_matrix(runs, spec)
    U = _orthonormal_basis(X)
    g = runs.shape[0] - U.shape[1]
    if g < 1:
        raise DesignError("no pre-selection df: the full model saturates the design")
    resid = y - U @ (U.T @ y)
    return float(resid @ resid / g), int(g)


def first_stage(y, D, alpha=0.05, spec=None, sigma2=None):
    """Main-effect t tests on the foldover runs, with the full-design variance."""
    runs, fold_rows, _ = _design_parts(D)
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not fold_rows:
        raise DesignError("design has no foldover subset for the first stage")
    y = np.asarray(y, dtype=float).ravel()
    if sigma2 is None:
        sigma2, df = preselect_sigma2(y, D, spec)
    else:
        sigma2, df = sigma2
    idx = np.asarray(fold_rows)
    F = runs[idx]
    X1 = np.column_stack([np.ones(len(idx)), F]).astype(float)
    info_inv = sym_inverse(X1.T @ X1)
    beta = info_inv @ (X1.T @ y[idx])
    se = math.sqrt(sigma2) * np.sqrt(np.diag(info_inv))
    tc = t_quantile(alpha / 2, df)
    rows = []
    for j in range(1, X1.shape[1]):
        t = beta[j] / se[j] if se[j] > 0 else math.copysign(math.inf, beta[j]) if beta[j] else 0.0
        p = t_two_sided_pvalue(t, df) if math.isfinite(t) else 0.0
        rows.append(EffectRow(j, float(beta[j]), float(se[j]), float(t), float(p),
                              float(beta[j] - tc * se[j]), float(beta[j] + tc * se[j])))
    return FitReport(float(sigma2), int(df), rows, alpha, len(idx), tc)


def candidate_terms(active, spec, factors=None):
    """Second-order terms admissible under strong heredity, as (name, (i, j))."""
    active = sorted(set(int(a) for a in active))
    terms = []
    if spec.order != MAIN:
        terms.extend((f"d{i}d{j}", (i, j)) for i, j in combinations(active, 2))
    if spec.order == QUAD:
        quad = set(spec.quad_factors)
        if factors is not None:
            quad &= {f.index for f in factors if f.kind == "quadratic-capable"}
        terms.extend((f"d{j}^2", (j, j)) for j in active if j in quad)
    return terms


def _term_column(runs, pair):
    i, j = pair
    return (runs[:, i - 1] * runs[:, j - 1]).astype(float)


class _Stage2:
    """Residualized Gram system shared by all submodels of one active set."""

    def __init__(self, y, runs, factors, active, spec):
        n = runs.shape[0]
        self.n = n
        self.active = sorted(set(int(a) for a in active))
        self.terms = candidate_terms(self.active, spec, factors)
        self.B = np.column_stack([np.ones(n)] + [runs[:, a - 1].astype(float) for a in self.active])
        self.Z = (np.column_stack([_term_column(runs, pr) for _, pr in self.terms])
                  if self.terms else np.zeros((n, 0)))
        self.y = y
        self.tss = float(np.sum((y - y.mean()) ** 2))
        self.rank_B = qr_rank(self.B)
        QB = _orthonormal_basis(self.B)
        r = y - QB @ (QB.T @ y)
        self.rss0 = float(r @ r)
        Zr = self.Z - QB @ (QB.T @ self.Z)
        self.G = Zr.T @ Zr
        self.b = Zr.T @ r
        self.tol = 1e-10 * (max(1.0, float(np.max(np.diag(self.G)))) if self.terms else 1.0)
        self.base_ok = self.rank_B == self.B.shape[1]
        self.k0 = self.B.shape[1]

    def rss_floor(self):
        """RSS with every admissible term included; no submodel goes lower."""
        Q = _orthonormal_basis(np.column_stack([self.B, self.Z]))
        r = self.y - Q @ (Q.T @ self.y)
        return float(r @ r)

    def max_estimable_size(self):
        return max(0, min(len(self.terms), self.n - self.rank_B))

    def scores(self, max_size=None, chunk=20000):
        """Yield ``(size, subsets, rss, ok, ranks)`` in enumeration order."""
        top = len(self.terms) if max_size is None else min(max_size, len(self.terms))
        yield 0, [()], np.array([self.rss0]), np.array([self.base_ok]), np.array([self.rank_B])
        for size in range(1, top + 1):
            combos = combinations(range(len(self.terms)), size)
            while True:
                subsets = list(islice(combos, chunk))
                if not subsets:
                    break
                idx = np.array(subsets)
                Gs = self.G[idx[:, :, None], idx[:, None, :]]
                bs = self.b[idx]
                sub_rank = np.sum(np.linalg.eigvalsh(Gs) > self.tol, axis=1)
                ok = (sub_rank == size) & self.base_ok
                rss = np.full(len(subsets), math.inf)
                if ok.any():
                    sol = np.linalg.solve(Gs[ok], bs[ok][..., None])[..., 0]
                    rss[ok] = np.maximum(self.rss0 - np.sum(bs[ok] * sol, axis=1), 0.0)
                yield size, subsets, rss, ok, self.rank_B + sub_rank

    def names(self, sub):
        return tuple(self.terms[i][0] for i in sub)

    def coefficients(self, sub):
        X = np.column_stack([self.B] + [self.Z[:, i] for i in sub]) if sub else self.B
        coef = np.linalg.lstsq(X, self.y, rcond=None)[0]
        labels = ["1"] + [f"d{a}" for a in self.active] + list(self.names(sub))
        return {lab: float(c) for lab, c in zip(labels, coef)}


def _stage2(y, D, active, spec):
    runs, _, factors = _design_parts(D)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != runs.shape[0]:
        raise DesignError(f"{y.shape[0]} responses for {runs.shape[0]} runs")
    return _Stage2(y, runs, factors, active, spec)


def _sigma2_value(y, D, spec, sigma2):
    if sigma2 is None:
        return preselect_sigma2(y, D, spec)[0]
    return sigma2[0] if isinstance(sigma2, tuple) else sigma2


def second_stage(y, D, active, spec=None, criterion="bic", sigma2=None, with_coefficients=True, max_size=None):
    """Score every subset of the admissible second-order terms.

    Each submodel always carries the intercept and the active main effects
    and is fit by least squares on all runs. Submodels whose columns are
    linearly dependent are returned with ``estimable=False`` and infinite
    criterion. Candidates come back in enumeration order: by size, then
    lexicographically by term position. ``max_size`` caps the number of
    second-order terms per submodel.
    """
    spec = _default_spec(D, spec)
    crit = parse_criterion(criterion)
    sigma2 = _sigma2_value(y, D, spec, sigma2)
    st = _stage2(y, D, active, spec)
    out = []
    for size, subsets, rss, ok, ranks in st.scores(max_size):
        k = st.k0 + size
        for s, sub in enumerate(subsets):
            names = st.names(sub)
            if ok[s]:
                value = crit(float(rss[s]), st.n, k, sigma2)
                r2 = 1.0 - rss[s] / st.tss if st.tss > 0 else math.nan
                cand = ModelCandidate(names, float(value), float(r2), float(rss[s]), k, True, int(ranks[s]))
                if with_coefficients:
                    cand.coefficients = st.coefficients(sub)
            else:
                cand = ModelCandidate(names, math.inf, math.nan, math.inf, k, False, int(ranks[s]))
            out.append(cand)
    return out


def _sizes_until(st, crit, sigma2, floor, incumbent):
    gen = st.scores(st.max_estimable_size())
    current = None
    for item in gen:
        size = item[0]
        if size != current:
            current = size
            best = incumbent()
            if floor is not None and best is not None and crit(floor, st.n, st.k0 + size, sigma2) >= best[0]:
                return
        yield item


def select_best(y, D, active, spec=None, criterion="bic", sigma2=None):
    """The criterion-best submodel without materializing every candidate.

    Agrees with ``best_candidate(second_stage(...))``. Submodels with more
    columns than runs are skipped since they can never be estimable. For a
    monotone criterion, sizes whose score at the RSS floor cannot beat the
    incumbent are skipped too. Returns None when no submodel is estimable.
    """
    spec = _default_spec(D, spec)
    crit = parse_criterion(criterion)
    sigma2 = _sigma2_value(y, D, spec, sigma2)
    st = _stage2(y, D, active, spec)
    floor = st.rss_floor() if crit.monotone else None
    best = None
    for size, subsets, rss, ok, ranks in _sizes_until(st, crit, sigma2, floor, lambda: best):
        if not ok.any():
            continue
        vals = np.full(len(subsets), math.inf)
        vals[ok] = crit(rss[ok], st.n, st.k0 + size, sigma2)
        i = int(np.argmin(vals))
        if best is None or vals[i] < best[0]:
            best = (float(vals[i]), size, subsets[i], float(rss[i]), int(ranks[i]))
    if best is None:
        return None
    value, size, sub, rss, rank = best
    r2 = 1.0 - rss / st.tss if st.tss > 0 else math.nan
    return ModelCandidate(st.names(sub), value, float(r2), rss, st.k0 + size, True, rank, st.coefficients(sub))


def best_candidate(candidates):
    """Lowest criterion among estimable candidates; first in order wins ties."""
    feasible = [c for c in candidates if c.estimable]
    if not feasible:
        return None
    return min(feasible, key=lambda c: c.criterion)


def augmented_analysis(y, D, alpha=0.05, spec=None, criterion="bic", enumerate_all=True):
    """Variance from all runs, main effects from the foldover subset,
    second-order selection from all runs given the active factors.

    With ``enumerate_all=False`` only the best submodel is kept.
    """
    spec = _default_spec(D, spec)
    sigma2 = preselect_sigma2(y, D, spec)
    fit = first_stage(y, D, alpha, spec, sigma2=sigma2)
    if enumerate_all:
        cands = second_stage(y, D, fit.active, spec, criterion, sigma2=sigma2[0])
        return AnalysisResult(fit, cands, fit.n_stage1)
    best = select_best(y, D, fit.active, spec, criterion, sigma2=sigma2[0])
    return AnalysisResult(fit, [], fit.n_stage1, best)
