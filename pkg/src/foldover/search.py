"""Construction of foldover half designs and augmentation runs.

``coordinate_exchange`` searches half designs that minimize the foldover
ECI while keeping a prescribed number of center runs and forced replicates.
``construct_direct`` builds two-level half designs straight from Hadamard
matrices. ``augment`` appends runs chosen by a Bayesian A-criterion.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .criteria import bayes_a, critical_multiplier, eci_foldover, prior_precision
from .design import (
    QUADRATIC,
    AugmentedDesign,
    FoldoverDesign,
    HalfDesign,
    ModelSpec,
    as_runs,
    full_model_matrix,
    make_factors,
)
from .dof import group_dof
from .exceptions import ConfigurationError, DesignError
from .hadamard import hadamard
from .numkernel import qr_rank

logger = logging.getLogger(__name__)

IMPROVE_TOL = 1e-10
MAX_INIT_TRIES = 1000


@dataclass
class SearchConfig:
    n: int
    m: int
    n0: int = 0
    R: int = 0
    alpha: float = 0.05
    model: str = "2fi"
    quad_factors: tuple = ()
    n_starts: int = 100
    seed: int = 0
    max_sweeps: int = 50
    n_jobs: int = 1

    def __post_init__(self):
        self.quad_factors = tuple(sorted(set(self.quad_factors)))
        self.spec = ModelSpec(self.model, self.quad_factors)
        self.model = self.spec.order

    @property
    def rows(self):
        return self.n // 2

    @property
    def v(self):
        return self.rows - self.m

    @property
    def factors(self):
        return make_factors(self.m, self.quad_factors)

    @property
    def zero_fixed_factors(self):
        """Factors needing a row with that coordinate pinned to 0."""
        return self.spec.active_quads(self.m)

    def validate(self):
        if self.n % 2:
            raise ConfigurationError(
                f"n = {self.n} is odd; a pure foldover needs even n. Generate a foldover with "
                "n - 1 runs and add runs with `augment`."
            )
        if self.m < 1:
            raise ConfigurationError("m must be at least 1")
        if self.v < 0:
            raise ConfigurationError(f"n/2 = {self.rows} runs cannot give rank m = {self.m}")
        if self.v == 0:
            raise ConfigurationError(
                f"n/2 = m = {self.m} leaves no residual degrees of freedom; increase n or augment"
            )
        if self.n0 < 0 or self.R < 0:
            raise ConfigurationError("n0 and R must be nonnegative")
        if self.n0 + self.R > self.v:
            raise ConfigurationError(
                f"n0 + R = {self.n0 + self.R} exceeds v = {self.v}; rank m would be impossible"
            )
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n_starts < 1 or self.max_sweeps < 1:
            raise ConfigurationError("n_starts and max_sweeps must be positive")
        bad = [j for j in self.quad_factors if not 1 <= j <= self.m]
        if bad:
            raise ConfigurationError(f"quadratic factors out of range 1..{self.m}: {bad}")
        return self


@dataclass
class SearchResult:
    half: HalfDesign
    report: object
    start: int
    start_criteria: np.ndarray = field(repr=False, default=None)

    @property
    def design(self):
        return FoldoverDesign(self.half)


class _HalfState:
    """Mutable half design with the restricted-row bookkeeping."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.m = cfg.m
        self.rows = cfg.rows
        self.n_free = cfg.rows - cfg.n0 - cfg.R
        self.rep_rows = list(range(self.n_free, self.n_free + cfg.R))
        self.center_rows = list(range(self.n_free + cfg.R, self.rows))
        self.spec = cfg.spec
        quad = set(cfg.spec.active_quads(cfg.m))
        self.levels = [np.array([-1, 0, 1]) if (j + 1) in quad else np.array([-1, 1]) for j in range(cfg.m)]
        self.zero_fixed = {(k, j - 1) for k, j in enumerate(cfg.zero_fixed_factors)}
        self.free_coords = [
            (i, j) for i in range(self.n_free) for j in range(cfg.m) if (i, j) not in self.zero_fixed
        ]
        if cfg.spec.order == "main":
            self._pi = self._pj = np.zeros(0, dtype=int)
        else:
            self._pi, self._pj = np.triu_indices(cfg.m, 1)
        self._qi = np.array([j - 1 for j in cfg.spec.active_quads(cfg.m)], dtype=int)
        self._rest = np.ones((self.rows, 1 + len(self._pi) + len(self._qi)))
        self.multiplier = {}
        self.H = np.zeros((self.rows, cfg.m), dtype=np.int64)
        self.source = {}

    def mult(self, g):
        if g not in self.multiplier:
            self.multiplier[g] = critical_multiplier(self.cfg.alpha, g) if g >= 1 else math.inf
        return self.multiplier[g]

    def randomize(self, rng):
        for j in range(self.m):
            self.H[: self.n_free, j] = rng.choice(self.levels[j], size=self.n_free)
        for i, j in self.zero_fixed:
            self.H[i, j] = 0
        replace = len(self.rep_rows) > self.n_free
        picks = rng.choice(self.n_free, size=len(self.rep_rows), replace=replace)
        self.source = {r: int(k) for r, k in zip(self.rep_rows, picks)}
        self.sync()
        self.H[self.center_rows] = 0

    def sync(self):
        for r, k in self.source.items():
            self.H[r] = self.H[k]

    def criterion(self):
        Hf = self.H.astype(float)
        info = Hf.T @ Hf
        try:
            L = np.linalg.cholesky(info)
        except np.linalg.LinAlgError:
            return math.inf
        d = np.diag(L)
        if d.min() ** 2 < 1e-9 * d.max() ** 2:
            return math.inf
        Linv = np.linalg.inv(L)
        v = np.sum(Linv * Linv, axis=0)
        # g = n - rank(H) - rank([1 | X_H2]) for a foldover
        rest = self._rest
        rest[:, 1 : 1 + len(self._pi)] = Hf[:, self._pi] * Hf[:, self._pj]
        if len(self._qi):
            rest[:, 1 + len(self._pi) :] = Hf[:, self._qi] ** 2
        s = np.linalg.svd(rest, compute_uv=False)
        rank = int(np.sum(s > 1e-12 * max(rest.shape) * s[0]))
        g = 2 * self.rows - self.m - rank
        if g < 1:
            return math.inf
        return self.mult(g) * float(np.mean(np.sqrt(v / 2)))

    def coordinate_pass(self, current):
        changed = False
        for i, j in self.free_coords:
            old = self.H[i, j]
            mirrors = [r for r, k in self.source.items() if k == i]
            best, best_level = current, old
            for level in self.levels[j]:
                if level == old:
                    continue
                self.H[i, j] = level
                for r in mirrors:
                    self.H[r, j] = level
                val = self.criterion()
                if val < best - IMPROVE_TOL:
                    best, best_level = val, level
            self.H[i, j] = best_level
            for r in mirrors:
                self.H[r, j] = best_level
            if best_level != old:
                current = best
                changed = True
        return current, changed

    def row_pass(self, current):
        changed = False
        for r in self.rep_rows:
            old = self.source[r]
            best, best_k = current, old
            for k in range(self.n_free):
                if k == old:
                    continue
                self.H[r] = self.H[k]
                val = self.criterion()
                if val < best - IMPROVE_TOL:
                    best, best_k = val, k
            self.source[r] = best_k
            self.H[r] = self.H[best_k]
            if best_k != old:
                current = best
                changed = True
        return current, changed


def _initial_state(cfg, rng):
    state = _HalfState(cfg)
    for _ in range(MAX_INIT_TRIES):
        state.randomize(rng)
        if qr_rank(state.H) == cfg.m:
            return state
    return None


def _run_start(cfg, seed_seq):
    rng = np.random.default_rng(seed_seq)
    state = _initial_state(cfg, rng)
    if state is None:
        return math.inf, None, None
    current = state.criterion()
    for _ in range(cfg.max_sweeps):
        current, c1 = state.coordinate_pass(current)
        current, c2 = state.row_pass(current)
        if not (c1 or c2):
            break
    return current, state.H.copy(), dict(state.source)


def _check_half(H, cfg, source):
    zero = {(k, j - 1) for k, j in enumerate(cfg.zero_fixed_factors)}
    n_free = cfg.rows - cfg.n0 - cfg.R
    forced = tuple(range(n_free, cfg.rows))
    half = HalfDesign(H, cfg.factors, forced, frozenset(zero))
    for r, k in source.items():
        if not np.array_equal(H[r], H[k]):
            raise DesignError(f"replicate row {r + 1} lost its source row {k + 1}")
    return half


def coordinate_exchange(cfg):
    """Best-of-``n_starts`` restricted coordinate exchange.

    Every start draws from its own stream spawned from ``cfg.seed``, and the
    winner is the lowest criterion with ties going to the lower start index,
    so the output does not depend on ``n_jobs``.
    """
    cfg.validate()
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_starts)
    if cfg.n_jobs == 1:
        results = [_run_start(cfg, s) for s in streams]
    else:
        results = Parallel(n_jobs=cfg.n_jobs)(delayed(_run_start)(cfg, s) for s in streams)
    crit = np.array([r[0] for r in results])
    if not np.isfinite(crit).any():
        raise ConfigurationError(
            f"no start produced a rank-{cfg.m} half design after {MAX_INIT_TRIES} random draws"
        )
    best = int(np.argmin(crit))  # argmin returns the first minimum
    _, H, source = results[best]
    half = _check_half(H, cfg, source)
    report = eci_foldover(half, cfg.alpha, cfg.spec)
    logger.info("start %d of %d won with ECI %.6f", best, cfg.n_starts, report.eci)
    return SearchResult(half, report, best, crit)


SCHEMES = ("C0", "C1", "C2", "C3")


@dataclass
class Construction:
    half: HalfDesign
    f: int
    p: int
    scheme: str


def _balanced_row(m):
    k = (m + 1) // 2
    return np.array([1] * k + [-1] * (m - k), dtype=np.int64)


def construct_direct(scheme, n, m, add_rows=None, keep_cols=None, delete_row=None):
    """Two-level half design of ``n/2`` runs from a normalized Hadamard matrix.

    * ``C0`` (n/2 = 0 mod 4): ``m`` columns of ``H_{n/2}``.
    * ``C1`` (n/2 = 1 mod 4): ``m`` columns of ``H_{n/2-1}`` plus one +/-1 row
      (default all +1).
    * ``C2`` (n/2 = 2 mod 4): ``m`` columns of ``H_{n/2-2}``, a row of +1 and
      a balanced row (default: leading +1s then -1s).
    * ``C3`` (n/2 = 3 mod 4): ``m`` columns of ``H_{n/2+1}`` with one row
      deleted (default the last).

    ``keep_cols`` are 0-based Hadamard columns (default the first ``m``).
    """
    scheme = scheme.upper()
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; use one of {SCHEMES}")
    if n % 2:
        raise ConfigurationError(f"n = {n} must be even")
    half_runs = n // 2
    residue = int(scheme[1])
    if half_runs % 4 != residue:
        raise ConfigurationError(
            f"{scheme} needs n/2 = {residue} (mod 4); n/2 = {half_runs} is {half_runs % 4} (mod 4)"
        )
    order = {0: half_runs, 1: half_runs - 1, 2: half_runs - 2, 3: half_runs + 1}[residue]
    if order < 1:
        raise ConfigurationError(f"{scheme} with n = {n} needs a Hadamard matrix of order {order}")
    Had = hadamard(order)
    cols = list(range(m)) if keep_cols is None else [int(c) for c in keep_cols]
    if len(cols) != m or len(set(cols)) != m or min(cols) < 0 or max(cols) >= order:
        raise ConfigurationError(f"need {m} distinct column indices in 0..{order - 1}, got {cols}")
    base = Had[:, cols]
    extra = [] if add_rows is None else [as_runs(r)[0] for r in add_rows]
    for r in extra:
        if r.shape != (m,) or np.any(r == 0):
            raise ConfigurationError(f"added rows must be +/-1 vectors of length {m}")
    if residue == 0:
        if extra:
            raise ConfigurationError("C0 takes no added rows")
        H = base
    elif residue == 1:
        if len(extra) > 1:
            raise ConfigurationError("C1 adds exactly one row")
        row = extra[0] if extra else np.ones(m, dtype=np.int64)
        H = np.vstack([base, row])
    elif residue == 2:
        if len(extra) == 2 and np.all(extra[0] == 1):
            extra = extra[1:]
        if len(extra) > 1:
            raise ConfigurationError("C2 adds a row of +1s and one balanced row")
        row = extra[0] if extra else _balanced_row(m)
        if abs(int(row.sum())) > 1:
            raise ConfigurationError("the C2 balanced row needs +1 and -1 counts within one")
        H = np.vstack([base, np.ones(m, dtype=np.int64), row])
    else:
        if extra:
            raise ConfigurationError("C3 takes no added rows")
        drop = order - 1 if delete_row is None else int(delete_row)
        if not 0 <= drop < order:
            raise ConfigurationError(f"delete_row must lie in 0..{order - 1}")
        H = np.delete(base, drop, axis=0)
    half = HalfDesign(H, make_factors(m))
    f, p = group_dof(half)
    return Construction(half, f, p, scheme)


@dataclass
class AugmentConfig:
    n_add: int
    tau2: float = 50.0
    model: str = "2fi"
    quad_factors: tuple = ()
    n_starts: int = 20
    seed: int = 0
    max_sweeps: int = 50
    n_jobs: int = 1

    def __post_init__(self):
        self.quad_factors = tuple(sorted(set(self.quad_factors)))
        self.spec = ModelSpec(self.model, self.quad_factors)
        self.model = self.spec.order

    def validate(self):
        if self.n_add < 1:
            raise ConfigurationError("n_add must be at least 1")
        if not self.tau2 > 0:
            raise ConfigurationError("tau2 must be positive")
        if self.n_starts < 1 or self.max_sweeps < 1:
            raise ConfigurationError("n_starts and max_sweeps must be positive")
        return self


@dataclass
class AugmentResult:
    design: AugmentedDesign
    criterion: float
    start: int
    start_criteria: np.ndarray = field(repr=False, default=None)


def _augment_start(M0, levels, n_add, spec, m, max_sweeps, seed_seq):
    rng = np.random.default_rng(seed_seq)
    A = np.column_stack([rng.choice(lv, size=n_add) for lv in levels]).astype(np.int64)

    def crit(block):
        XA = full_model_matrix(block, spec)
        M = M0 + XA.T @ XA
        try:
            return float(np.trace(np.linalg.inv(M)))
        except np.linalg.LinAlgError:
            return math.inf

    current = crit(A)
    for _ in range(max_sweeps):
        changed = False
        for i in range(n_add):
            for j in range(m):
                old = A[i, j]
                best, best_level = current, old
                for level in levels[j]:
                    if level == old:
                        continue
                    A[i, j] = level
                    val = crit(A)
                    if val < best - IMPROVE_TOL:
                        best, best_level = val, level
                A[i, j] = best_level
                if best_level != old:
                    current, changed = best, True
        if not changed:
            break
    return current, A


def augment(base, cfg):
    """Append ``cfg.n_add`` runs minimizing the Bayesian A-criterion.

    Base runs are never modified. Quadratic-capable factors may take level 0
    in the added runs.
    """
    cfg.validate()
    if isinstance(base, HalfDesign):
        base = FoldoverDesign(base)
    if isinstance(base, FoldoverDesign):
        design = AugmentedDesign.from_foldover(base)
    elif isinstance(base, AugmentedDesign):
        design = base
    else:
        design = AugmentedDesign.from_runs(base)
    m = design.m
    spec = cfg.spec
    X0 = full_model_matrix(design.runs, spec)
    p = X0.shape[1]
    M0 = X0.T @ X0 + prior_precision(m, p, cfg.tau2)
    quad = set(f.index for f in design.factors if f.kind == QUADRATIC)
    levels = [np.array([-1, 0, 1]) if (j + 1) in quad else np.array([-1, 1]) for j in range(m)]
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_starts)
    args = (M0, levels, cfg.n_add, spec, m, cfg.max_sweeps)
    if cfg.n_jobs == 1:
        results = [_augment_start(*args, s) for s in streams]
    else:
        results = Parallel(n_jobs=cfg.n_jobs)(delayed(_augment_start)(*args, s) for s in streams)
    crit = np.array([r[0] for r in results])
    best = int(np.argmin(crit))
    block = results[best][1]
    runs = np.vstack([design.runs, block])
    meta = dict(design.metadata)
    meta["augment"] = {"n_add": cfg.n_add, "tau2": cfg.tau2, "model": spec.order, "seed": cfg.seed,
                       "criterion": float(crit[best])}
    out = AugmentedDesign(runs, design.factors, design.foldover_rows, design.half, meta)
    value = bayes_a(X0.T @ X0, full_model_matrix(block, spec), cfg.tau2, m)
    return AugmentResult(out, value, best, crit)
