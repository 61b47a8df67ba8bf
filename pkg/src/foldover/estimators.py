"""scikit-learn style front ends for design search and the two-stage analysis.

The functional API in ``search`` and ``analysis`` does the work; these
classes hold hyperparameters, validate array input and expose fitted state
with trailing-underscore attributes.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .analysis import augmented_analysis
from .design import AugmentedDesign, FoldoverDesign, HalfDesign, ModelSpec, as_runs
from .exceptions import DesignError
from .search import AugmentConfig, SearchConfig, augment, coordinate_exchange


def check_design(X, m=None):
    """Validate a run matrix: 2-d, finite, levels in {-1, 0, 1}.

    Design objects pass through unchanged.
    """
    if isinstance(X, (HalfDesign, FoldoverDesign, AugmentedDesign)):
        return X
    arr = check_array(X, dtype=None, ensure_min_samples=1)
    if not np.all(np.equal(np.mod(arr, 1), 0)):
        bad = np.argwhere(np.mod(arr, 1) != 0)[0]
        raise DesignError(f"entry at row {bad[0] + 1}, column {bad[1] + 1} is not an integer level")
    runs = as_runs(arr.astype(np.int64))
    if m is not None and runs.shape[1] != m:
        raise DesignError(f"expected {m} factor columns, got {runs.shape[1]}")
    return runs


def _as_augmented(X):
    X = check_design(X)
    if isinstance(X, HalfDesign):
        X = FoldoverDesign(X)
    if isinstance(X, FoldoverDesign):
        return AugmentedDesign.from_foldover(X)
    if isinstance(X, AugmentedDesign):
        return X
    return AugmentedDesign.from_runs(X)


class FoldoverDesignSearch(BaseEstimator):
    """Multi-start coordinate exchange for the ECI-optimal foldover.

    ``fit`` ignores its arguments; the design is determined by the
    hyperparameters and ``seed``.
    """

    def __init__(self, n=16, m=5, n0=0, R=0, alpha=0.05, model="2fi", quad_factors=(),
                 n_starts=100, seed=0, max_sweeps=50, n_jobs=1):
        self.n = n
        self.m = m
        self.n0 = n0
        self.R = R
        self.alpha = alpha
        self.model = model
        self.quad_factors = quad_factors
        self.n_starts = n_starts
        self.seed = seed
        self.max_sweeps = max_sweeps
        self.n_jobs = n_jobs

    def _config(self):
        return SearchConfig(self.n, self.m, self.n0, self.R, self.alpha, self.model,
                            tuple(self.quad_factors), self.n_starts, self.seed, self.max_sweeps, self.n_jobs)

    def fit(self, X=None, y=None):
        result = coordinate_exchange(self._config())
        self.result_ = result
        self.half_design_ = result.half
        self.design_ = result.design
        self.report_ = result.report
        self.eci_ = result.report.eci
        return self

    def transform(self, X=None):
        check_is_fitted(self, "design_")
        return np.array(self.design_.runs)

    def fit_transform(self, X=None, y=None):
        return self.fit(X, y).transform(X)


class BayesianAAugmenter(BaseEstimator, TransformerMixin):
    """Append runs to a base design by minimizing the Bayesian A-criterion.

    ``fit(X)`` takes the base runs (or a design object). ``transform(X)``
    returns ``X`` with the fitted block appended.
    """

    def __init__(self, n_add=2, tau2=50.0, model="2fi", quad_factors=(), n_starts=20, seed=0,
                 max_sweeps=50, n_jobs=1):
        self.n_add = n_add
        self.tau2 = tau2
        self.model = model
        self.quad_factors = quad_factors
        self.n_starts = n_starts
        self.seed = seed
        self.max_sweeps = max_sweeps
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        base = _as_augmented(X)
        cfg = AugmentConfig(self.n_add, self.tau2, self.model, tuple(self.quad_factors), self.n_starts,
                            self.seed, self.max_sweeps, self.n_jobs)
        result = augment(base, cfg)
        self.result_ = result
        self.design_ = result.design
        self.added_runs_ = np.array(result.design.runs[base.n:])
        self.criterion_ = result.criterion
        self.n_features_in_ = base.m
        return self

    def transform(self, X):
        check_is_fitted(self, "added_runs_")
        runs = check_design(X)
        if not isinstance(runs, np.ndarray):
            runs = _as_augmented(runs).runs
        if runs.shape[1] != self.n_features_in_:
            raise DesignError(f"expected {self.n_features_in_} factor columns, got {runs.shape[1]}")
        return np.vstack([runs, self.added_runs_])


class TwoStageRegressor(BaseEstimator, RegressorMixin):
    """Two-stage screening analysis as a regressor.

    Stage 1 tests main effects on the sign-paired runs of ``X``; stage 2
    selects second-order terms among the active factors using all runs.
    ``predict`` uses the selected model.
    """

    def __init__(self, alpha=0.05, model=None, quad_factors=None, criterion="bic"):
        self.alpha = alpha
        self.model = model
        self.quad_factors = quad_factors
        self.criterion = criterion

    def _spec(self, design):
        if self.model is None:
            return ModelSpec.default_for(design.factors)
        quads = self.quad_factors
        if quads is None:
            quads = [f.index for f in design.factors if f.kind == "quadratic-capable"]
        return ModelSpec(self.model, tuple(quads))

    def fit(self, X, y):
        if isinstance(X, (HalfDesign, FoldoverDesign, AugmentedDesign)):
            design = _as_augmented(X)
            y = check_array(np.asarray(y, dtype=float).reshape(-1, 1)).ravel()
            if len(y) != design.n:
                raise DesignError(f"{len(y)} responses for {design.n} runs")
        else:
            Xc, y = check_X_y(X, y, dtype=None, y_numeric=True)
            design = _as_augmented(Xc)
        spec = self._spec(design)
        result = augmented_analysis(y, design, self.alpha, spec, self.criterion)
        best = result.best
        if best is None:
            raise np.linalg.LinAlgError("no estimable second-stage model")
        self.design_ = design
        self.spec_ = spec
        self.result_ = result
        self.first_stage_ = result.first_stage
        self.sigma2_ = result.first_stage.sigma2_hat
        self.df_ = result.first_stage.df
        self.active_ = result.first_stage.active
        self.candidates_ = result.candidates
        self.best_ = best
        coef = dict(best.coefficients)
        self.intercept_ = coef.pop("1")
        self.terms_ = tuple(coef)
        self.coef_ = np.array([coef[t] for t in self.terms_])
        self.n_features_in_ = design.m
        return self

    def _columns(self, runs):
        cols = []
        for name in self.terms_:
            if "^" in name:
                j = int(name[1:name.index("^")])
                cols.append(runs[:, j - 1] ** 2)
            else:
                idx = [int(x) for x in name.split("d")[1:]]
                col = np.ones(runs.shape[0])
                for j in idx:
                    col = col * runs[:, j - 1]
                cols.append(col)
        return np.column_stack(cols) if cols else np.zeros((runs.shape[0], 0))

    def predict(self, X):
        if not hasattr(self, "coef_"):
            raise NotFittedError("TwoStageRegressor is not fitted yet; call fit first")
        runs = check_array(X, dtype=float)
        if runs.shape[1] != self.n_features_in_:
            raise DesignError(f"expected {self.n_features_in_} factor columns, got {runs.shape[1]}")
        return self.intercept_ + self._columns(runs) @ self.coef_
