"""Monte-Carlo power study for the two-stage analysis.

Each replication draws a sparse second-order truth under strong heredity,
simulates ``y = X beta + noise`` on the design, runs the augmented analysis
and scores detections per effect class. Replication ``i`` uses the ``i``-th
stream spawned from the scenario seed, so results do not depend on how the
replications are scheduled.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from joblib import Parallel, delayed

from .analysis import augmented_analysis
from .design import QUAD, AugmentedDesign, FoldoverDesign, HalfDesign, ModelSpec, full_model_matrix
from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

CLASSES = ("main", "tfi", "quad")
MODES = ("offset", "fixed")


@dataclass
class SimScenario:
    """Active-effect counts and magnitudes.

    ``sn`` gives, per class, the offset added to an Exp(1) draw (``offset``
    mode) or the fixed magnitude (``fixed`` mode), in units of
    ``effect_scale``. With ``sigma == effect_scale`` (the default) these are
    signal-to-noise ratios.
    """

    main: int = 0
    tfi: int = 0
    quad: int = 0
    mode: str = "offset"
    sn: dict = field(default_factory=dict)
    sigma: float = 1.0
    effect_scale: float = 1.0
    reps: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        for k in ("main", "tfi", "quad"):
            if getattr(self, k) < 0:
                raise ConfigurationError(f"active {k} count must be nonnegative")
        if self.reps < 1:
            raise ConfigurationError("reps must be positive")
        if not self.sigma > 0:
            raise ConfigurationError("sigma must be positive")

    @classmethod
    def from_dict(cls, d):
        active = d.get("active", {})
        return cls(
            main=int(active.get("main", 0)),
            tfi=int(active.get("tfi", 0)),
            quad=int(active.get("quad", 0)),
            mode=d.get("mode", "offset"),
            sn={k: float(v) for k, v in d.get("sn", {}).items()},
            sigma=float(d.get("sigma", 1.0)),
            effect_scale=float(d.get("effect_scale", 1.0)),
            reps=int(d.get("reps", 500)),
            seed=int(d.get("seed", 0)),
        )

    def to_dict(self):
        return {
            "mode": self.mode,
            "active": {"main": self.main, "tfi": self.tfi, "quad": self.quad},
            "sn": dict(self.sn),
            "sigma": self.sigma,
            "effect_scale": self.effect_scale,
            "reps": self.reps,
            "seed": self.seed,
        }

    def magnitude(self, cls_name, rng, size):
        base = self.sn.get(cls_name, 0.0 if self.mode == "offset" else 1.0)
        if self.mode == "fixed":
            return np.full(size, base * self.effect_scale)
        return (base + rng.exponential(1.0, size)) * self.effect_scale


@dataclass
class Truth:
    beta: np.ndarray
    main: frozenset
    tfi: frozenset  # names "d1d2"
    quad: frozenset  # names "d3^2"


def generate_truth(scenario, m, rng, spec=None):
    """Coefficient vector over ``spec.term_names(m)`` plus the active sets."""
    spec = spec or ModelSpec(QUAD if scenario.quad else "2fi", tuple(range(1, m + 1)) if scenario.quad else ())
    if scenario.main > m:
        raise ConfigurationError(f"{scenario.main} active main effects but only {m} factors")
    mains = sorted(int(j) + 1 for j in rng.choice(m, size=scenario.main, replace=False))
    pairs = list(combinations(mains, 2))
    if scenario.tfi > len(pairs) or (scenario.tfi and spec.order == "main"):
        raise ConfigurationError(
            f"{scenario.tfi} active 2FIs cannot satisfy strong heredity with {len(mains)} active factors"
        )
    tfis = [pairs[i] for i in sorted(rng.choice(len(pairs), size=scenario.tfi, replace=False))] if scenario.tfi else []
    quad_ok = [j for j in mains if j in spec.active_quads(m)]
    if scenario.quad > len(quad_ok):
        raise ConfigurationError(
            f"{scenario.quad} active quadratics but only {len(quad_ok)} active quadratic-capable factors"
        )
    quads = sorted(quad_ok[i] for i in rng.choice(len(quad_ok), size=scenario.quad, replace=False)) if scenario.quad else []
    names = spec.term_names(m)
    pos = {name: k for k, name in enumerate(names)}
    beta = np.zeros(len(names))
    for cls_name, labels in (
        ("main", [f"d{j}" for j in mains]),
        ("tfi", [f"d{i}d{j}" for i, j in tfis]),
        ("quad", [f"d{j}^2" for j in quads]),
    ):
        if not labels:
            continue
        mag = scenario.magnitude(cls_name, rng, len(labels))
        sign = rng.choice([-1.0, 1.0], size=len(labels))
        for lab, a, s in zip(labels, mag, sign):
            beta[pos[lab]] = a * s
    return Truth(
        beta,
        frozenset(mains),
        frozenset(f"d{i}d{j}" for i, j in tfis),
        frozenset(f"d{j}^2" for j in quads),
    )


@dataclass
class ClassRates:
    tpr: float
    tpr_se: float
    fpr: float
    fpr_se: float

    def to_dict(self):
        def clean(x):
            return None if x is None or not math.isfinite(x) else x

        return {k: clean(getattr(self, k)) for k in ("tpr", "tpr_se", "fpr", "fpr_se")}


@dataclass
class SimResult:
    rates: dict
    reps: int
    failed: int
    alpha: float
    scenario: SimScenario

    def to_dict(self):
        return {
            "reps": self.reps,
            "failed": self.failed,
            "alpha": self.alpha,
            "scenario": self.scenario.to_dict(),
            "rates": {k: v.to_dict() for k, v in self.rates.items()},
        }


def _as_design(design):
    if isinstance(design, HalfDesign):
        design = FoldoverDesign(design)
    if isinstance(design, FoldoverDesign):
        design = AugmentedDesign.from_foldover(design)
    if not isinstance(design, AugmentedDesign):
        design = AugmentedDesign.from_runs(design)
    return design


def _one_rep(design, X, spec, scenario, alpha, criterion, stream):
    rng = np.random.default_rng(stream)
    truth = generate_truth(scenario, design.m, rng, spec)
    y = X @ truth.beta + scenario.sigma * rng.standard_normal(X.shape[0])
    try:
        res = augmented_analysis(y, design, alpha, spec, criterion, enumerate_all=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        logger.debug("replication failed: %s", exc)
        return None
    best = res.best
    chosen = set(best.terms) if best is not None else set()
    return {
        "main": (set(res.first_stage.active), truth.main),
        "tfi": ({t for t in chosen if "^" not in t}, truth.tfi),
        "quad": ({t for t in chosen if "^" in t}, truth.quad),
    }


def _rate(values):
    vals = np.array([v for v in values if v is not None], dtype=float)
    if vals.size == 0:
        return math.nan, math.nan
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
    return float(vals.mean()), se


def run_simulation(design, scenario, alpha=0.05, criterion="bic", spec=None, n_jobs=1):
    """TPR and FPR per effect class over ``scenario.reps`` replications.

    Replications whose analysis fails are excluded from the rates and
    counted in ``failed``. Rates for a class with no true (or no false)
    effects are NaN.
    """
    design = _as_design(design)
    m = design.m
    if spec is None:
        spec = ModelSpec.default_for(design.factors)
    X = full_model_matrix(design.runs, spec)
    universe = {
        "main": set(range(1, m + 1)),
        "tfi": {f"d{i}d{j}" for i, j in combinations(range(1, m + 1), 2)} if spec.order != "main" else set(),
        "quad": {f"d{j}^2" for j in spec.active_quads(m)},
    }
    streams = np.random.SeedSequence(scenario.seed).spawn(scenario.reps)
    args = (design, X, spec, scenario, alpha, criterion)
    if n_jobs == 1:
        outcomes = [_one_rep(*args, s) for s in streams]
    else:
        outcomes = Parallel(n_jobs=n_jobs)(delayed(_one_rep)(*args, s) for s in streams)
    ok = [o for o in outcomes if o is not None]
    failed = len(outcomes) - len(ok)
    if failed:
        logger.warning("%d of %d replications failed and were excluded", failed, len(outcomes))
    rates = {}
    for cls_name in CLASSES:
        tprs, fprs = [], []
        for o in ok:
            found, true = o[cls_name]
            false = universe[cls_name] - set(true)
            tprs.append(len(found & set(true)) / len(true) if true else None)
            fprs.append(len(found & false) / len(false) if false else None)
        tpr, tpr_se = _rate(tprs)
        fpr, fpr_se = _rate(fprs)
        rates[cls_name] = ClassRates(tpr, tpr_se, fpr, fpr_se)
    return SimResult(rates, len(ok), failed, alpha, scenario)


def format_result(result, name="design"):
    """One text row in the TPR/FPR table layout."""

    def cell(x):
        return "    -" if x is None or not math.isfinite(x) else f"{x:5.3f}"

    s = result.scenario
    head = f"{'Main':>4} {'2FIs':>4} {'Quad':>4}  {'Design':<16}"
    cols = "".join(f" | {c:^11}" for c in ("Main", "2FIs", "Quad"))
    sub = " " * len(head) + "".join(" | TPR   FPR  " for _ in CLASSES)
    row = f"{s.main:>4} {s.tfi:>4} {s.quad:>4}  {name:<16}"
    for c in CLASSES:
        r = result.rates[c]
        row += f" | {cell(r.tpr)} {cell(r.fpr)}"
    return "\n".join([head + cols, sub, row])
