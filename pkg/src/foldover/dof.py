"""Degrees-of-freedom accounting for foldover designs.

The residual degrees of freedom ``g`` of a foldover split into pure error
``p`` (replicated runs) and lack of fit ``ell``. Part of the lack of fit is
produced by the half design alone (fake factors) and does not depend on the
second-order model; :func:`group_dof` counts it from the group structure
of ``H`` and :func:`exact_dof` recounts everything from matrix ranks.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr

from .design import AugmentedDesign, FoldoverDesign, HalfDesign, as_runs, foldover_runs, full_model_matrix
from .exceptions import DesignError, DofMismatchError
from .numkernel import qr_rank


@dataclass(frozen=True)
class GroupPartition:
    n0: int
    groups: tuple  # ((representative row tuple, multiplicity), ...)
    labels: tuple  # group number per row of H; 0 marks a center run

    @property
    def multiplicities(self):
        return tuple(n for _, n in self.groups)


@dataclass(frozen=True)
class DofSummary:
    f: int
    p: int
    ell: int
    g: int
    model: object = None
    excess_lof: int = 0  # lack-of-fit df beyond the fake factors

    def as_tuple(self):
        return (self.f, self.p, self.ell, self.g)

    def to_dict(self):
        return {
            "model": getattr(self.model, "order", None),
            "f": self.f,
            "p": self.p,
            "ell": self.ell,
            "g": self.g,
            "excess_lof": self.excess_lof,
        }


def _entries(H):
    return H.entries if isinstance(H, HalfDesign) else as_runs(H)


def canonical_row(row):
    """Flip the sign so the first nonzero entry is +1."""
    nz = np.flatnonzero(row)
    if nz.size and row[nz[0]] < 0:
        return tuple(int(x) for x in -row)
    return tuple(int(x) for x in row)


def partition_groups(H):
    """Bucket rows of ``H`` by their sign-canonical form.

    Groups are numbered 1..G in order of first appearance.
    """
    E = _entries(H)
    index = {}
    groups = []
    labels = []
    n0 = 0
    for row in E:
        if not row.any():
            n0 += 1
            labels.append(0)
            continue
        key = canonical_row(row)
        if key not in index:
            index[key] = len(groups)
            groups.append([key, 0])
        groups[index[key]][1] += 1
        labels.append(index[key] + 1)
    return GroupPartition(n0, tuple((k, c) for k, c in groups), tuple(labels))


def group_dof(H):
    """Fake-factor and pure-error df ``(f, p)`` of the foldover of ``H``."""
    E = _entries(H)
    rows, m = E.shape
    if qr_rank(E) != m:
        raise DesignError(f"half design must have rank {m}")
    part = partition_groups(E)
    reps = sum(n - 1 for n in part.multiplicities)
    f = (rows - m) - part.n0 - reps
    p = max(0, 2 * part.n0 - 1) + 2 * reps
    return f, p


def replicate_df(D):
    """Pure-error df: sum over distinct rows of (count - 1)."""
    D = as_runs(D)
    if D.shape[0] == 0:
        return 0
    _, counts = np.unique(D, axis=0, return_counts=True)
    return int(np.sum(counts - 1))


def residual_df(D, spec):
    D = as_runs(D)
    return D.shape[0] - qr_rank(full_model_matrix(D, spec))


def half_residual_df(H, spec):
    """``g`` of the foldover of ``H`` computed on the half design alone.

    Folding over block-diagonalizes the model matrix, so
    ``rank(X) = rank(H) + rank([1 | X_H2])``.
    """
    E = _entries(H)
    rows, m = E.shape
    X = full_model_matrix(E, spec)
    rest = np.hstack([X[:, :1], X[:, 1 + m:]])
    return 2 * rows - qr_rank(E) - qr_rank(rest)


def exact_dof(D, spec, check=True):
    """Rank-based ``(f, p, ell, g)`` of a design under ``spec``.

    ``D`` may be a half design (its foldover is used), a foldover, an
    augmented design, or a bare run matrix. ``f`` comes from the foldover
    base when there is one, else 0. With ``check`` set, a pure foldover whose
    ``g`` falls short of ``f + p`` raises :class:`DofMismatchError`.
    """
    half = None
    pure = False
    if isinstance(D, HalfDesign):
        half, runs, pure = D, foldover_runs(D.entries), True
    elif isinstance(D, FoldoverDesign):
        half, runs, pure = D.half, D.runs, True
    elif isinstance(D, AugmentedDesign):
        half, runs, pure = D.half, D.runs, D.is_pure_foldover
    else:
        runs = as_runs(D)
    g = residual_df(runs, spec)
    p = replicate_df(runs)
    f = group_dof(half)[0] if half is not None else 0
    ell = g - p
    excess = 0
    if half is not None and pure:
        f_thm, p_thm = group_dof(half)
        if check and (p_thm != p or g < f_thm + p_thm):
            raise DofMismatchError(
                f"group counts give f={f_thm}, p={p_thm} but ranks give p={p}, g={g}"
            )
        excess = g - f_thm - p_thm
    return DofSummary(f, p, ell, g, spec, excess)


@dataclass(frozen=True, eq=False)
class FakeFactorBasis:
    """Orthonormal null-space basis of ``H'`` split by origin.

    ``kinds[k]`` is ``"center"``, ``"pure-error"`` or ``"fake"`` for column k.
    """

    V: np.ndarray
    kinds: tuple

    def columns(self, kind):
        idx = [k for k, t in enumerate(self.kinds) if t == kind]
        return self.V[:, idx]

    @property
    def n_fake(self):
        return sum(1 for t in self.kinds if t == "fake")


def _helmert(k):
    # k x (k-1) orthonormal contrasts
    C = np.zeros((k, k - 1))
    for j in range(1, k):
        C[:j, j - 1] = 1.0
        C[j, j - 1] = -float(j)
        C[:, j - 1] /= np.sqrt(j * (j + 1))
    return C


def fake_factor_basis(H, tol=1e-10):
    E = _entries(H).astype(float)
    rows, m = E.shape
    if qr_rank(E) != m:
        raise DesignError(f"half design must have rank {m}")
    part = partition_groups(E.astype(np.int64))
    cols, kinds = [], []
    for i in np.flatnonzero(np.asarray(part.labels) == 0):
        e = np.zeros(rows)
        e[i] = 1.0
        cols.append(e)
        kinds.append("center")
    for g, (key, count) in enumerate(part.groups, start=1):
        if count < 2:
            continue
        idx = np.flatnonzero(np.asarray(part.labels) == g)
        sign = np.array([1.0 if canonical_row(E[i].astype(np.int64)) == tuple(E[i].astype(int)) else -1.0 for i in idx])
        for c in _helmert(count).T:
            v = np.zeros(rows)
            v[idx] = sign * c
            cols.append(v)
            kinds.append("pure-error")
    known = np.column_stack(cols) if cols else np.zeros((rows, 0))
    # null space of H', then remove the structured part
    U, s, _ = np.linalg.svd(E, full_matrices=True)
    null = U[:, m:]
    if known.shape[1]:
        null = null - known @ (known.T @ null)
    if null.shape[1]:
        Q, R, piv = _pivoted_qr(null)
        diag = np.abs(np.diag(R)) if R.size else np.zeros(0)
        keep = int(np.sum(diag > tol))
        fake = Q[:, :keep]
    else:
        fake = np.zeros((rows, 0))
    V = np.hstack([known, fake])
    kinds.extend(["fake"] * fake.shape[1])
    return FakeFactorBasis(V, tuple(kinds))


def _pivoted_qr(A):
    return qr(A, mode="economic", pivoting=True)
