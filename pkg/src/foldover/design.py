"""Design and model-matrix representations.

Run matrices are integer arrays over {-1, 0, +1}. A half design ``H`` folds
over into ``[H; -H]``; an augmented design appends free rows after that.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .exceptions import DesignError
from .numkernel import qr_rank, sym_inverse

TWO_LEVEL = "two-level"
QUADRATIC = "quadratic-capable"
FACTOR_KINDS = (TWO_LEVEL, QUADRATIC)

MAIN = "main"
TFI = "2fi"
QUAD = "quad"
MODEL_ORDERS = (MAIN, TFI, QUAD)

_ORDER_ALIASES = {
    "main": MAIN,
    "main-effects": MAIN,
    "me": MAIN,
    "2fi": TFI,
    "tfi": TFI,
    "two-factor-interaction": TFI,
    "quad": QUAD,
    "quadratic": QUAD,
    "full-quadratic": QUAD,
}


@dataclass(frozen=True)
class FactorSpec:
    index: int
    kind: str = TWO_LEVEL

    def __post_init__(self):
        if self.kind not in FACTOR_KINDS:
            raise DesignError(f"factor {self.index}: unknown kind {self.kind!r}")
        if self.index < 1:
            raise DesignError("factor indices start at 1")

    @property
    def levels(self):
        return (-1, 0, 1) if self.kind == QUADRATIC else (-1, 1)


def make_factors(m, quad_factors=()):
    """``FactorSpec`` tuple for ``m`` factors; ``quad_factors`` are 1-based."""
    quad = set(quad_factors)
    bad = [j for j in quad if not 1 <= j <= m]
    if bad:
        raise DesignError(f"quadratic factor indices out of range 1..{m}: {bad}")
    return tuple(FactorSpec(j, QUADRATIC if j in quad else TWO_LEVEL) for j in range(1, m + 1))


@dataclass(frozen=True)
class ModelSpec:
    """Second-order model: main effects, plus 2FIs, plus squares.

    ``quad_factors`` lists the 1-based factors that receive a squared term
    when ``order == "quad"``; it is ignored for the other orders.
    """

    order: str = TFI
    quad_factors: tuple = ()

    def __post_init__(self):
        order = _ORDER_ALIASES.get(str(self.order).lower())
        if order is None:
            raise DesignError(f"unknown model order {self.order!r}; use one of {MODEL_ORDERS}")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "quad_factors", tuple(sorted(set(int(j) for j in self.quad_factors))))

    @classmethod
    def for_factors(cls, order, factors):
        quad = tuple(f.index for f in factors if f.kind == QUADRATIC)
        return cls(order, quad)

    @classmethod
    def default_for(cls, factors):
        """Full quadratic when any factor is quadratic-capable, else 2FI."""
        if any(f.kind == QUADRATIC for f in factors):
            return cls.for_factors(QUAD, factors)
        return cls(TFI)

    def active_quads(self, m):
        if self.order != QUAD:
            return ()
        return tuple(j for j in self.quad_factors if j <= m)

    def n_terms(self, m):
        k = 1 + m
        if self.order in (TFI, QUAD):
            k += m * (m - 1) // 2
        return k + len(self.active_quads(m))

    def second_order_names(self, m):
        names = [f"d{i}d{j}" for i, j in combinations(range(1, m + 1), 2)] if self.order != MAIN else []
        names += [f"d{j}^2" for j in self.active_quads(m)]
        return names

    def term_names(self, m):
        return ["1"] + [f"d{j}" for j in range(1, m + 1)] + self.second_order_names(m)


def as_runs(D):
    """Coerce to a 2-d int64 array over {-1, 0, 1}."""
    arr = np.asarray(D)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DesignError(f"run matrix must be 2-d, got shape {arr.shape}")
    if arr.size and not np.all(np.isin(arr, (-1, 0, 1))):
        bad = np.argwhere(~np.isin(arr, (-1, 0, 1)))[0]
        raise DesignError(
            f"entry at row {bad[0] + 1}, column {bad[1] + 1} is {arr[tuple(bad)]!r}; levels must be -1, 0 or 1"
        )
    return arr.astype(np.int64)


def check_levels(runs, factors):
    """Two-level factors may be 0 only inside a center run."""
    off_center = runs.any(axis=1)
    for f in factors:
        col = runs[:, f.index - 1]
        bad = (col == 0) & off_center
        if f.kind == TWO_LEVEL and np.any(bad):
            r = int(np.flatnonzero(bad)[0])
            raise DesignError(f"row {r + 1}, column {f.index}: two-level factor set to 0 outside a center run")


@dataclass(frozen=True, eq=False)
class HalfDesign:
    """Generator ``H`` of a foldover design, (m+v) x m over {-1, 0, 1}.

    ``forced_replicate_rows`` are the restricted rows that must copy some
    other row (or be a center run); ``zero_fixed`` holds (row, column)
    positions pinned to 0. Both use 0-based indices.
    """

    entries: np.ndarray
    factors: tuple = None
    forced_replicate_rows: tuple = ()
    zero_fixed: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        H = as_runs(self.entries)
        H.setflags(write=False)
        object.__setattr__(self, "entries", H)
        rows, m = H.shape
        if rows == 0 or m == 0:
            raise DesignError("half design must be nonempty")
        factors = self.factors
        if factors is None:
            quad = [j + 1 for j in range(m) if np.any(H[:, j] == 0)]
            factors = make_factors(m, quad)
        factors = tuple(factors)
        if len(factors) != m:
            raise DesignError(f"{len(factors)} factor specs for {m} columns")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "forced_replicate_rows", tuple(int(r) for r in self.forced_replicate_rows))
        object.__setattr__(self, "zero_fixed", frozenset((int(r), int(c)) for r, c in self.zero_fixed))
        check_levels(H, factors)
        r = qr_rank(H)
        if r != m:
            raise DesignError(f"half design has rank {r}, needs rank m = {m}")
        forced = set(self.forced_replicate_rows)
        for i in self.forced_replicate_rows:
            if not 0 <= i < rows:
                raise DesignError(f"forced replicate row {i} out of range")
            row = H[i]
            if not row.any():
                continue
            others = [k for k in range(rows) if k not in forced]
            if not any(np.array_equal(H[k], row) for k in others):
                raise DesignError(f"forced replicate row {i + 1} does not copy an unrestricted row")
        for i, j in self.zero_fixed:
            if not (0 <= i < rows and 0 <= j < m):
                raise DesignError(f"zero-fixed position ({i + 1}, {j + 1}) out of range")
            if H[i, j] != 0:
                raise DesignError(f"zero-fixed position ({i + 1}, {j + 1}) holds {H[i, j]}")

    @property
    def m(self):
        return self.entries.shape[1]

    @property
    def n_rows(self):
        return self.entries.shape[0]

    @property
    def v(self):
        return self.n_rows - self.m

    @property
    def n0(self):
        return int(np.sum(~self.entries.any(axis=1)))


@dataclass(frozen=True, eq=False)
class FoldoverDesign:
    half: HalfDesign

    @property
    def runs(self):
        return foldover_runs(self.half.entries)

    @property
    def n(self):
        return 2 * self.half.n_rows

    @property
    def m(self):
        return self.half.m

    @property
    def factors(self):
        return self.half.factors


@dataclass(frozen=True, eq=False)
class AugmentedDesign:
    """Runs of a (possibly augmented) foldover design in file order.

    ``foldover_rows`` indexes the runs forming the zero-aliased foldover
    subset; ``half`` is its generator when known. Rows outside
    ``foldover_rows`` are the augmentation block.
    """

    runs: np.ndarray
    factors: tuple
    foldover_rows: tuple = ()
    half: HalfDesign = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        runs = as_runs(self.runs)
        runs.setflags(write=False)
        object.__setattr__(self, "runs", runs)
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "foldover_rows", tuple(int(i) for i in self.foldover_rows))
        if len(self.factors) != runs.shape[1]:
            raise DesignError(f"{len(self.factors)} factor specs for {runs.shape[1]} columns")
        check_levels(runs, self.factors)

    @classmethod
    def from_foldover(cls, base, extra=None, metadata=None):
        if isinstance(base, HalfDesign):
            base = FoldoverDesign(base)
        fold = base.runs
        if extra is None or len(extra) == 0:
            extra = np.zeros((0, base.m), dtype=np.int64)
        extra = as_runs(extra)
        runs = np.vstack([fold, extra])
        return cls(runs, base.factors, tuple(range(len(fold))), base.half, dict(metadata or {}))

    @classmethod
    def from_runs(cls, runs, factors=None, metadata=None):
        """Wrap arbitrary runs, detecting the largest sign-paired subset."""
        runs = as_runs(runs)
        if factors is None:
            quad = [j + 1 for j in range(runs.shape[1]) if np.any(runs[:, j] == 0)]
            factors = make_factors(runs.shape[1], quad)
        pairs = sign_pairs(runs)
        rows = tuple(sorted(i for pair in pairs for i in pair))
        half = None
        if pairs:
            try:
                half = HalfDesign(runs[[a for a, _ in pairs]], factors)
            except DesignError:
                half = None
        return cls(runs, factors, rows, half, dict(metadata or {}))

    @property
    def n(self):
        return self.runs.shape[0]

    @property
    def m(self):
        return self.runs.shape[1]

    @property
    def n_augmented(self):
        return self.n - len(self.foldover_rows)

    @property
    def base(self):
        return FoldoverDesign(self.half) if self.half is not None else None

    @property
    def extra(self):
        keep = np.setdiff1d(np.arange(self.n), self.foldover_rows)
        return self.runs[keep]

    @property
    def is_pure_foldover(self):
        return len(self.foldover_rows) == self.n and self.n > 0


def foldover(H):
    """Stack ``H`` over ``-H``."""
    if not isinstance(H, HalfDesign):
        H = HalfDesign(H)
    return FoldoverDesign(H)


def foldover_runs(H):
    H = as_runs(H)
    return np.vstack([H, -H])


def sign_pairs(runs):
    """Maximal set of disjoint (i, j) with ``runs[j] == -runs[i]``.

    Center runs pair with other center runs. Pairing is per distinct row, so
    greedy matching within each sign class is already maximum.
    """
    runs = as_runs(runs)
    buckets = {}
    for i, row in enumerate(runs):
        buckets.setdefault(tuple(row), []).append(i)
    pairs = []
    seen = set()
    for key, idx in buckets.items():
        if key in seen:
            continue
        neg = tuple(-x for x in key)
        seen.add(key)
        seen.add(neg)
        if key == neg:
            pairs.extend((idx[2 * k], idx[2 * k + 1]) for k in range(len(idx) // 2))
            continue
        other = buckets.get(neg, [])
        pairs.extend(zip(idx, other))
    pairs.sort()
    return pairs


def second_order_columns(D, spec):
    """Integer second-order block: 2FIs in lexicographic order, then squares."""
    D = as_runs(D)
    n, m = D.shape
    cols = []
    if spec.order != MAIN:
        cols.extend(D[:, i] * D[:, j] for i, j in combinations(range(m), 2))
    cols.extend(D[:, j - 1] ** 2 for j in spec.active_quads(m))
    if not cols:
        return np.zeros((n, 0), dtype=np.int64)
    return np.column_stack(cols)


def model_matrix(D, spec):
    """Return ``(X1, X2)``: ``X1 = [1 | D]`` and the second-order block.

    Column order of ``X2``: ``d1d2, d1d3, ..., d(m-1)dm`` then ``dj^2`` for each
    quadratic factor in increasing ``j`` (only under the quadratic model).
    """
    D = as_runs(D)
    n = D.shape[0]
    X1 = np.column_stack([np.ones(n, dtype=np.int64), D]).astype(float)
    X2 = second_order_columns(D, spec).astype(float)
    return X1, X2


def full_model_matrix(D, spec):
    X1, X2 = model_matrix(D, spec)
    return np.hstack([X1, X2])


def alias_matrix(X1, X2):
    """``(X1'X1)^-1 X1'X2``. Inner products are exact for integer inputs."""
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    info = X1.T @ X1
    return sym_inverse(info) @ (X1.T @ X2)
