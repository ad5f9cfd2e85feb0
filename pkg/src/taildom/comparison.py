"""End-to-end verification of the two strong-comparison results.

* mean domination: a passing regularity certificate for X with constant K
  plus weak tail domination of Y by X forces E||Y|| <= 20 K E||X||;
* tail domination: if every n-fold product of X is K-regular and the max of
  n copies of ||X|| exceeds alpha times its mean with probability >= beta,
  then P(||Y|| >= t) <= (2/beta) P(||X|| >= alpha t / (80 K)).

Hypotheses are never assumed: the verifiers re-check them empirically
before comparing the conclusion sides, and every report is labelled
conditional to record that the inputs passed only at Monte Carlo
confidence.  Max-of-n-copies quantities are evaluated in closed form under
the empirical law of one ||X|| sample (the n-th power of its CDF), which
makes the Paley-Zygmund consequence an exact identity of the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import sampling
from .domination import (
    DOMINATED,
    VIOLATED,
    DirectionSet,
    DominationReport,
    DualBallExtreme,
    UnitSphereRandom,
    check_weak_domination,
)
from .errors import ConfigError, ContractError, ParameterError
from .regularity import (
    DEFAULT_K_GRID,
    RegularityCertificate,
    check_regularity,
    coordinate_functionals,
    smallest_passing_k,
)
from .reporting import csv_text, stable_json_dumps
from .sampling import RandomVectorModel, SupNorm, model_id, product_model
from .stats import (
    EmpiricalTail,
    dkw_epsilon,
    expect_max_of_n,
    mean_with_ci,
    survival_max_of_n,
)

PASS = "Pass"
FAIL = "Fail"
INCONCLUSIVE = "Inconclusive"

MEAN_DOMINATION_FACTOR = 20.0
TAIL_THRESHOLD_FACTOR = 80.0

_Y_NORM_STREAM = 110
_X_NORM_STREAM = 111
_COND_STREAM = 112


@dataclass(frozen=True)
class TheoremParams:
    """Constants entering the tail-domination statement.

    Either (alpha, beta) are given directly, or the moment-comparison
    constant C is given and alpha = 1/2, beta = 1/(4C) are derived from the
    Paley-Zygmund inequality.
    """

    k: float
    alpha: float | None = None
    beta: float | None = None
    c: float | None = None
    c1: float = 1.0
    c2: float = 1.0

    def resolved(self) -> tuple[float, float]:
        if self.c is not None:
            if self.c < 1:
                raise ConfigError(f"moment-comparison constant must be >= 1, got {self.c}")
            return 0.5, 1.0 / (4.0 * self.c)
        if self.alpha is None or self.beta is None:
            raise ConfigError("either (alpha, beta) or C must be supplied")
        if not (self.alpha > 0) or not (0 < self.beta <= 1):
            raise ConfigError(f"need alpha > 0 and beta in (0, 1], got {self.alpha}, {self.beta}")
        return self.alpha, self.beta


@dataclass(frozen=True)
class CheckPoint:
    t: float
    lhs: float
    lhs_band: float
    rhs: float
    rhs_band: float
    passed: bool
    inconclusive: bool
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class TheoremReport:
    claim: str
    verdict: str
    points: list[CheckPoint]
    hypotheses: dict
    intermediates: dict
    conditional: bool
    config: dict

    def to_dict(self) -> dict:
        return {
            "claim": self.claim,
            "verdict": self.verdict,
            "conditional": self.conditional,
            "hypotheses": self.hypotheses,
            "intermediates": self.intermediates,
            "config": self.config,
            "points": [
                {
                    "t": p.t,
                    "lhs": p.lhs,
                    "lhs_band": p.lhs_band,
                    "rhs": p.rhs,
                    "rhs_band": p.rhs_band,
                    "passed": p.passed,
                    "inconclusive": p.inconclusive,
                    "extras": p.extras,
                }
                for p in self.points
            ],
        }

    def to_json(self) -> str:
        return stable_json_dumps(self.to_dict())

    CSV_HEADER = ("t", "lhs", "lhs_band", "rhs", "rhs_band", "passed", "inconclusive")

    def to_csv(self) -> str:
        rows = [
            (p.t, p.lhs, p.lhs_band, p.rhs, p.rhs_band, int(p.passed), int(p.inconclusive))
            for p in self.points
        ]
        return csv_text(self.CSV_HEADER, rows)


def max_exceedance_lower_bound(n: int) -> float:
    """1 - (1 - 1/n)^n, the chance that n independent tries hit a
    probability-1/n event at least once; >= 1/2 for every n >= 1."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    return 1.0 - (1.0 - 1.0 / n) ** n


# ---------------------------------------------------------------------------
# mean domination


def verify_mean_domination(
    model_x: RandomVectorModel,
    model_y: RandomVectorModel,
    cert: RegularityCertificate | None,
    m: int,
    seed: int = 0,
    delta: float = 0.01,
    domination: DominationReport | None = None,
    domination_dirs: DirectionSet | None = None,
    workers: int = 1,
) -> TheoremReport:
    """Check E||Y|| <= 20 K E||X|| under a passing certificate for X.

    Refuses to run without a passing certificate for model_x or when the
    domination precheck comes back Violated: the conclusion is simply not
    claimed for such inputs.
    """
    if cert is None:
        raise ContractError("a regularity certificate for the dominating model is required")
    if cert.model_id != model_id(model_x):
        raise ContractError("certificate was issued for a different model")
    if not cert.passed:
        raise ContractError("certificate does not pass; the bound is not asserted")
    if domination is None:
        dirs = domination_dirs
        if dirs is None:
            dirs = (
                DualBallExtreme()
                if isinstance(model_x.norm, SupNorm)
                else UnitSphereRandom(32)
            )
        domination = check_weak_domination(
            model_y, model_x, dirs, m=m, delta=delta, seed=seed, workers=workers
        )
    if domination.verdict == VIOLATED:
        raise ContractError("weak domination precheck returned Violated")

    proj_y, norms_y = sampling.sample_projections(
        model_y, cert.functionals, m, seed, stream=_Y_NORM_STREAM, with_norms=True
    )
    norms_x = sampling.sample_norms(model_x, m, seed, stream=_X_NORM_STREAM)
    mean_y = mean_with_ci(norms_y, delta)
    mean_x = mean_with_ci(norms_x, delta)

    lhs = mean_y.mean
    rhs = MEAN_DOMINATION_FACTOR * cert.k * mean_x.mean
    lhs_band = mean_y.half_width
    rhs_band = MEAN_DOMINATION_FACTOR * cert.k * mean_x.half_width
    passed = lhs <= rhs + lhs_band + rhs_band

    # On the way to the bound, ||Y|| is controlled by the sup over the
    # certificate family; record that step on the same samples (paired).
    sup_proj = np.abs(proj_y).max(axis=0)
    gap = mean_with_ci(norms_y - sup_proj, delta)
    intermediates = {
        "sup_functional_mean": mean_with_ci(sup_proj, delta).to_dict(),
        "norm_minus_sup_mean": gap.mean,
        "norm_minus_sup_half_width": gap.half_width,
        "norm_bounded_by_sup": gap.mean <= gap.half_width,
    }
    point = CheckPoint(
        t=float("nan"),
        lhs=lhs,
        lhs_band=lhs_band,
        rhs=rhs,
        rhs_band=rhs_band,
        passed=passed,
        inconclusive=False,
        extras={"ratio": lhs / mean_x.mean if mean_x.mean else math.inf},
    )
    return TheoremReport(
        claim="mean_domination",
        verdict=PASS if passed else FAIL,
        points=[point],
        hypotheses={
            "certificate_passed": cert.passed,
            "certificate_k": cert.k,
            "domination_verdict": domination.verdict,
        },
        intermediates=intermediates,
        conditional=True,
        config={
            "m": m,
            "delta": delta,
            "seed": seed,
            "model_id_x": model_id(model_x),
            "model_id_y": model_id(model_y),
        },
    )


# ---------------------------------------------------------------------------
# hypothesis checks for the tail statement


@dataclass(frozen=True)
class MaxRatioRecord:
    n: int
    mean_max: float
    mean_max_sq: float
    ratio: float
    ratio_band: float


@dataclass(frozen=True, eq=False)
class MaxMomentRatioReport:
    records: list[MaxRatioRecord]
    m: int
    seed: int
    model_id: str

    @property
    def derived_c(self) -> float:
        return max(r.ratio for r in self.records)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "m": self.m,
            "seed": self.seed,
            "derived_c": self.derived_c,
            "records": [
                {
                    "n": r.n,
                    "mean_max": r.mean_max,
                    "mean_max_sq": r.mean_max_sq,
                    "ratio": r.ratio,
                    "ratio_band": r.ratio_band,
                }
                for r in self.records
            ],
        }

    def to_json(self) -> str:
        return stable_json_dumps(self.to_dict())


_RATIO_GROUPS = 8


def check_max_moment_ratio(
    model: RandomVectorModel,
    n_grid: Sequence[int],
    m: int,
    seed: int = 0,
) -> MaxMomentRatioReport:
    """E max_{i<=n} ||X_i||^2 / (E max_{i<=n} ||X_i||)^2 on the n grid.

    Evaluated under the empirical law of one ||X|| sample (max of n iid
    draws has CDF F-hat^n); the band is a batch-means standard error over 8
    sample groups.
    """
    n_grid = _checked_n_grid(n_grid)
    norms = sampling.sample_norms(model, m, seed, stream=_COND_STREAM)
    sorted_norms = np.sort(norms)
    groups = np.array_split(norms, _RATIO_GROUPS)
    records = []
    for n in n_grid:
        e1 = expect_max_of_n(sorted_norms, n)
        e2 = expect_max_of_n(sorted_norms, n, power=2.0)
        ratio = e2 / e1**2 if e1 > 0 else math.inf
        per_group = []
        for g in groups:
            gs = np.sort(g)
            g1 = expect_max_of_n(gs, n)
            if g1 > 0:
                per_group.append(expect_max_of_n(gs, n, power=2.0) / g1**2)
        band = (
            float(np.std(per_group, ddof=1) / math.sqrt(len(per_group)))
            if len(per_group) > 1
            else 0.0
        )
        records.append(
            MaxRatioRecord(
                n=n, mean_max=e1, mean_max_sq=e2, ratio=float(ratio), ratio_band=band
            )
        )
    return MaxMomentRatioReport(records=records, m=m, seed=seed, model_id=model_id(model))


def check_max_lower_deviation(
    model: RandomVectorModel,
    alpha: float,
    n_grid: Sequence[int],
    m: int,
    seed: int = 0,
    delta: float = 0.01,
) -> TheoremReport:
    """beta_n = P(max_{i<=n} ||X_i|| >= alpha E max_{i<=n} ||X_i||) per n.

    Same empirical-law evaluation as the moment ratios, so the
    Paley-Zygmund consequence beta_n >= 1/(4 C_n) holds exactly, not up to
    noise.  The reported band is the n-fold Lipschitz inflation of the DKW
    band on the underlying CDF.
    """
    if not (0 < alpha):
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    n_grid = _checked_n_grid(n_grid)
    norms = sampling.sample_norms(model, m, seed, stream=_COND_STREAM)
    sorted_norms = np.sort(norms)
    eps = dkw_epsilon(m, delta)
    points = []
    for n in n_grid:
        e_max = expect_max_of_n(sorted_norms, n)
        threshold = alpha * e_max
        beta_hat = survival_max_of_n(sorted_norms, n, threshold)
        e_max_sq = expect_max_of_n(sorted_norms, n, power=2.0)
        ratio = e_max_sq / e_max**2 if e_max > 0 else math.inf
        points.append(
            CheckPoint(
                t=float(n),
                lhs=beta_hat,
                lhs_band=min(n * eps, 1.0),
                rhs=0.0,
                rhs_band=0.0,
                passed=True,
                inconclusive=False,
                extras={
                    "n": n,
                    "mean_max": e_max,
                    "threshold": threshold,
                    "moment_ratio": ratio,
                    "pz_floor": 1.0 / (4.0 * ratio) if math.isfinite(ratio) else 0.0,
                },
            )
        )
    beta_min = min(p.lhs for p in points)
    return TheoremReport(
        claim="max_lower_deviation",
        verdict=PASS,
        points=points,
        hypotheses={},
        intermediates={"beta_min": beta_min, "alpha": alpha},
        conditional=True,
        config={"m": m, "seed": seed, "delta": delta, "model_id": model_id(model)},
    )


def _checked_n_grid(n_grid: Sequence[int]) -> list[int]:
    grid = [int(n) for n in n_grid]
    if not grid:
        raise ConfigError("n_grid must be nonempty")
    if any(n < 1 for n in grid):
        raise ConfigError("n_grid entries must be >= 1")
    return grid


def derive_params(
    model_x: RandomVectorModel,
    n_grid: Sequence[int],
    m: int,
    seed: int = 0,
    k_grid: Sequence[float] = DEFAULT_K_GRID,
    cert_m: int | None = None,
) -> TheoremParams:
    """Measure a passing K on the product grid and derive (alpha, beta) from
    the measured moment-comparison constant."""
    n_grid = _checked_n_grid(n_grid)
    cert_m = cert_m or m
    needed = 0.0
    for n in n_grid:
        cert = _product_certificate(model_x, n, max(k_grid), cert_m, seed)
        needed = max(needed, cert.max_moment_ratio)
    candidates = [k for k in sorted(k_grid) if k >= needed]
    if not candidates:
        raise ContractError(
            f"moment condition needs K >= {needed:.3g}, beyond the search grid"
        )
    ratio_report = check_max_moment_ratio(model_x, n_grid, m, seed)
    return TheoremParams(k=candidates[0], c=ratio_report.derived_c)


def _product_certificate(
    model_x: RandomVectorModel, n: int, k: float, m: int, seed: int
) -> RegularityCertificate:
    prod = product_model(model_x, n) if n > 1 else model_x
    if not isinstance(_base_norm(model_x), SupNorm):
        raise ContractError(
            "automatic product certificates need a sup-norm base model; "
            "supply certificates explicitly for other norms"
        )
    functionals = coordinate_functionals(prod.dim)
    return check_regularity(prod, functionals, k, DualBallExtreme(), m=m, seed=seed)


def _base_norm(model: RandomVectorModel) -> sampling.NormTag:
    norm = model.norm
    while isinstance(norm, sampling.ProductSup):
        norm = norm.inner
    return norm


# ---------------------------------------------------------------------------
# tail domination


def verify_tail_domination(
    model_x: RandomVectorModel,
    model_y: RandomVectorModel,
    params: TheoremParams,
    n_grid: Sequence[int],
    t_grid: Sequence[float] | None = None,
    m: int = 100_000,
    seed: int = 0,
    delta: float = 0.01,
    cert_m: int | None = None,
    min_exceedances: int = 10,
    workers: int = 1,
) -> TheoremReport:
    """Check P(||Y|| >= t) <= (2/beta) P(||X|| >= alpha t / (80 K)) on a grid.

    Hypotheses are re-established first: a K-regularity certificate on the
    n-fold product of X for every n in n_grid, and the lower-deviation
    property of max_{i<=n} ||X_i|| at level alpha against beta.  Failure of
    either is a contract error, mirroring the refusal semantics of
    verify_mean_domination.  Thresholds where P(||Y|| >= t) has fewer than
    `min_exceedances` sample hits are reported inconclusive rather than
    trusted.
    """
    alpha, beta = params.resolved()
    n_grid = _checked_n_grid(n_grid)
    cert_m = cert_m or min(m, 20_000)

    hypotheses: dict = {"alpha": alpha, "beta": beta, "K": params.k, "certificates": {}}
    for n in n_grid:
        cert = _product_certificate(model_x, n, params.k, cert_m, seed)
        hypotheses["certificates"][str(n)] = {
            "passed": cert.passed,
            "max_moment_ratio": cert.max_moment_ratio,
        }
        if not cert.passed:
            raise ContractError(f"K-regularity fails on the {n}-fold product at K={params.k}")
    deviation = check_max_lower_deviation(model_x, alpha, n_grid, m, seed, delta)
    beta_min = deviation.intermediates["beta_min"]
    hypotheses["beta_min"] = beta_min
    band_max = max(p.lhs_band for p in deviation.points)
    if beta_min < beta - band_max:
        raise ContractError(
            f"lower-deviation hypothesis fails: measured beta {beta_min:.4g} < {beta:.4g}"
        )

    norms_y = np.sort(sampling.sample_norms(model_y, m, seed, stream=_Y_NORM_STREAM))
    norms_x = np.sort(sampling.sample_norms(model_x, m, seed, stream=_X_NORM_STREAM))
    tail_y = EmpiricalTail(norms_y, delta)
    tail_x = EmpiricalTail(norms_x, delta)
    if t_grid is None:
        ts = np.unique(np.quantile(norms_y, (0.5, 0.75, 0.9, 0.95, 0.99)))
        ts = ts[ts > 0]
    else:
        ts = np.asarray(list(t_grid), dtype=np.float64)
        if ts.size == 0 or np.any(ts <= 0):
            raise ConfigError("t_grid must be nonempty and positive")
    eps = dkw_epsilon(m, delta / max(ts.size, 1) / 2.0)
    factor = 2.0 / beta
    points = []
    for t in ts:
        p_y = tail_y.survival(float(t)).estimate
        threshold = alpha * float(t) / (TAIL_THRESHOLD_FACTOR * params.k)
        p_x = tail_x.survival(threshold).estimate
        rhs = factor * p_x
        estimable = p_y * m >= min_exceedances
        passed = p_y <= rhs + eps + factor * eps
        n_proof = max(2, math.ceil(1.0 / p_y)) if p_y > 0 else None
        extras = {"threshold": threshold, "p_x": p_x}
        if n_proof is not None:
            e_max_y = expect_max_of_n(norms_y, n_proof)
            extras.update(
                {
                    "proof_n": n_proof,
                    "hit_chance_bound": max_exceedance_lower_bound(n_proof),
                    "mean_max_y": e_max_y,
                    "mean_max_y_above_half_t": e_max_y >= float(t) / 2.0 - eps,
                }
            )
        points.append(
            CheckPoint(
                t=float(t),
                lhs=float(p_y),
                lhs_band=eps,
                rhs=float(rhs),
                rhs_band=factor * eps,
                passed=bool(passed) if estimable else False,
                inconclusive=not estimable,
                extras=extras,
            )
        )
    estimable_points = [p for p in points if not p.inconclusive]
    if any(p.lhs - p.lhs_band > p.rhs + p.rhs_band for p in estimable_points):
        verdict = FAIL
    elif estimable_points and all(p.passed for p in estimable_points):
        verdict = PASS
    else:
        verdict = INCONCLUSIVE
    return TheoremReport(
        claim="tail_domination",
        verdict=verdict,
        points=points,
        hypotheses=hypotheses,
        intermediates={
            "beta_min": beta_min,
            "factor": factor,
            "threshold_scale": alpha / (TAIL_THRESHOLD_FACTOR * params.k),
        },
        conditional=True,
        config={
            "m": m,
            "delta": delta,
            "seed": seed,
            "n_grid": list(n_grid),
            "model_id_x": model_id(model_x),
            "model_id_y": model_id(model_y),
        },
    )
