"""A pair (Y, X) in sup-norm R^n with weakly dominated tails but divergent
mean norms.

Y has iid standard Gaussian coordinates; X is an iid uniform[-1, 1] vector
scaled by an independent factor 9(|g| + 1).  For every unit functional u,
<u, Y> is standard Gaussian while the anti-concentration of <u, X> (a
Paley-Zygmund bound away from zero, a slab bound near zero) pushes its
survival above the Gaussian one at every threshold.  Yet E||X|| stays below
18 for all n while E||Y|| grows like sqrt(ln n), so weak domination carries
no comparison of means: that is exactly what these experiments measure.

The Gaussian side of the domination check is evaluated exactly through the
complementary error function (rotation invariance), halving the Monte Carlo
noise; the scaling factor is drawn independently of the uniform block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import sampling
from .domination import (
    DOMINATED,
    VIOLATED,
    DominationReport,
    UnitSphereRandom,
    check_weak_domination,
)
from .errors import ConfigError, ParameterError
from .reporting import csv_text, parallel_map, stable_json_dumps
from .sampling import (
    IidCoords,
    MixtureScaled,
    RandomVectorModel,
    StandardGaussian,
    SupNorm,
    UniformSym,
)
from .stats import MomentReport, mean_with_ci, normal_survival

#: fixed thresholds covering the low range; the proof of domination splits at 3
LOW_T_GRID = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)

_BALL_STREAM = 120
_GAP_Y_STREAM = 130
_GAP_X_STREAM = 131


@dataclass(frozen=True)
class ExampleConfig:
    n_grid: tuple[int, ...] = (2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096)
    m: int = 200_000
    directions: int = 64
    seed: int = 0
    delta: float = 0.01

    def validated(self) -> "ExampleConfig":
        if not self.n_grid or any(n < 2 for n in self.n_grid):
            raise ConfigError("n_grid entries must be >= 2")
        if self.m < 1_000:
            raise ConfigError(f"m must be >= 1000, got {self.m}")
        if self.directions < 1:
            raise ConfigError("directions must be >= 1")
        return self


def build_example_pair(n: int) -> tuple[RandomVectorModel, RandomVectorModel]:
    """(model_y, model_x) in sup-norm R^n."""
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    model_y = RandomVectorModel(dim=n, norm=SupNorm(), spec=IidCoords(StandardGaussian()))
    base = RandomVectorModel(dim=n, norm=SupNorm(), spec=IidCoords(UniformSym(1.0)))
    model_x = RandomVectorModel(
        dim=n, norm=SupNorm(), spec=MixtureScaled(scale_fn="NinePlusGauss", base=base)
    )
    return model_y, model_x


# ---------------------------------------------------------------------------
# the domination experiment


@dataclass(frozen=True, eq=False)
class ExampleDominationReport:
    verdict: str
    per_n: dict[int, DominationReport]
    config: ExampleConfig

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "config": {
                "n_grid": list(self.config.n_grid),
                "m": self.config.m,
                "directions": self.config.directions,
                "seed": self.config.seed,
                "delta": self.config.delta,
            },
            "per_n": {str(n): rep.to_dict() for n, rep in self.per_n.items()},
        }

    def to_json(self) -> str:
        return stable_json_dumps(self.to_dict())


def verify_example_inequality(cfg: ExampleConfig, workers: int = 1) -> ExampleDominationReport:
    """Domination check per n over random unit directions.

    The Y side uses the exact Gaussian survival (valid for every unit
    functional), so only the X side is sampled; thresholds combine the fixed
    low grid on (0, 3] with the adaptive survival quantiles of |<u, X>|.
    """
    cfg = cfg.validated()

    def one_n(item: tuple[int, int]) -> tuple[int, DominationReport]:
        idx, n = item
        model_y, model_x = build_example_pair(n)
        report = check_weak_domination(
            model_y,
            model_x,
            UnitSphereRandom(cfg.directions),
            t_grid=LOW_T_GRID,
            m=cfg.m,
            delta=cfg.delta,
            seed=cfg.seed + idx,
            exact_survival_y=normal_survival,
        )
        return n, report

    results = parallel_map(one_n, list(enumerate(cfg.n_grid)), workers=workers)
    per_n = dict(results)
    if any(rep.verdict == VIOLATED for rep in per_n.values()):
        verdict = VIOLATED
    elif all(rep.verdict == DOMINATED for rep in per_n.values()):
        verdict = DOMINATED
    else:
        verdict = "Inconclusive"
    return ExampleDominationReport(verdict=verdict, per_n=per_n, config=cfg)


# ---------------------------------------------------------------------------
# analytic ingredients, each checked on its own


def uniform_sum_fourth_moment(u) -> float:
    """E (sum_i u_i eta_i)^4 for iid uniform[-1, 1] eta, in closed form.

    Equals (1/5) sum u_i^4 + (1/3) sum_{i != j} u_i^2 u_j^2; for unit u this
    is 1/3 - (2/15) sum u_i^4 <= 1/3, which is what caps the Paley-Zygmund
    ratio at 4/27.
    """
    u = np.asarray(u, dtype=np.float64)
    s2 = float((u * u).sum())
    s4 = float((u**4).sum())
    return 0.2 * s4 + (s2 * s2 - s4) / 3.0


def gaussian_tail_upper(t):
    """exp(-t^2/2) >= P(|g| >= t)."""
    t = np.asarray(t, dtype=np.float64)
    return np.exp(-t * t / 2.0)


def gaussian_tail_lower(t):
    """2 t exp(-(2t)^2/2)/sqrt(2 pi) <= P(|g| >= t)."""
    t = np.asarray(t, dtype=np.float64)
    return 2.0 * t * np.exp(-2.0 * t * t) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SandwichPoint:
    t: float
    lower: float
    exact: float
    upper: float
    ok: bool


@dataclass(frozen=True, eq=False)
class SandwichReport:
    points: list[SandwichPoint]
    rel_slack: float

    @property
    def passed(self) -> bool:
        return all(p.ok for p in self.points)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "rel_slack": self.rel_slack,
            "points": [
                {"t": p.t, "lower": p.lower, "exact": p.exact, "upper": p.upper, "ok": p.ok}
                for p in self.points
            ],
        }

    def to_json(self) -> str:
        return stable_json_dumps(self.to_dict())


def verify_gaussian_sandwich(t_grid, rel_slack: float = 1e-12) -> SandwichReport:
    """lower(t) <= P(|g| >= t) <= upper(t) pointwise, to relative slack."""
    ts = np.asarray(list(t_grid), dtype=np.float64)
    if ts.size == 0 or np.any(ts <= 0):
        raise ConfigError("t_grid must be nonempty and positive")
    lower = gaussian_tail_lower(ts)
    exact = normal_survival(ts)
    upper = gaussian_tail_upper(ts)
    oks = (lower <= exact * (1.0 + rel_slack)) & (exact <= upper * (1.0 + rel_slack))
    points = [
        SandwichPoint(float(t), float(lo), float(ex), float(up), bool(ok))
        for t, lo, ex, up, ok in zip(ts, lower, exact, upper, oks)
    ]
    return SandwichReport(points=points, rel_slack=rel_slack)


@dataclass(frozen=True)
class BallSlabPoint:
    direction_index: int
    s: float
    p_hat: float
    bound: float
    band: float
    ok: bool


@dataclass(frozen=True, eq=False)
class BallSlabReport:
    points: list[BallSlabPoint]
    m: int
    delta: float

    @property
    def passed(self) -> bool:
        return all(p.ok for p in self.points)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "m": self.m,
            "delta": self.delta,
            "points": [
                {
                    "direction": p.direction_index,
                    "s": p.s,
                    "p_hat": p.p_hat,
                    "bound": p.bound,
                    "band": p.band,
                    "ok": p.ok,
                }
                for p in self.points
            ],
        }

    def to_json(self) -> str:
        return stable_json_dumps(self.to_dict())


def verify_ball_slab_step(
    u,
    s_grid,
    m: int,
    seed: int = 0,
    delta: float = 0.01,
    direction_index: int = 0,
) -> BallSlabReport:
    """P(|sum_i u_i eta_i| <= s) <= sqrt(2) s + DKW band, for unit u.

    The slab constant sqrt(2) is the extremal central section of the cube,
    so the inequality holds for every unit direction; here it is measured.
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    if not math.isclose(float(np.linalg.norm(u)), 1.0, rel_tol=1e-9):
        raise ParameterError("u must be a Euclidean unit vector")
    s_values = np.asarray(list(s_grid), dtype=np.float64)
    if s_values.size == 0 or np.any(s_values <= 0):
        raise ConfigError("s_grid must be nonempty and positive")
    model = RandomVectorModel(dim=u.size, norm=SupNorm(), spec=IidCoords(UniformSym(1.0)))
    proj = np.abs(
        sampling.sample_projections(model, u[None, :], m, seed, stream=_BALL_STREAM)[0]
    )
    from .stats import dkw_epsilon

    eps = dkw_epsilon(m, delta)
    points = []
    for s in s_values:
        p_hat = float((proj <= s).mean())
        bound = math.sqrt(2.0) * float(s)
        points.append(
            BallSlabPoint(
                direction_index=direction_index,
                s=float(s),
                p_hat=p_hat,
                bound=bound,
                band=eps,
                ok=p_hat <= bound + eps,
            )
        )
    return BallSlabReport(points=points, m=m, delta=delta)


# ---------------------------------------------------------------------------
# the strong-parameter gap


@dataclass(frozen=True)
class GapRecord:
    n: int
    mean_y: float
    half_width_y: float
    mean_x: float
    half_width_x: float
    se_x: float
    median_y: float
    median_x: float

    @property
    def ratio(self) -> float:
        return self.mean_y / self.mean_x


@dataclass(frozen=True, eq=False)
class StrongGapReport:
    records: list[GapRecord]
    slope: float
    intercept: float
    r_squared: float
    mean_x_bounded: bool
    ratio_increasing: bool
    m: int
    seed: int

    MEAN_X_CEILING = 18.0

    @property
    def passed(self) -> bool:
        return self.mean_x_bounded and self.ratio_increasing and self.slope > 0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "mean_x_bounded": self.mean_x_bounded,
            "ratio_increasing": self.ratio_increasing,
            "m": self.m,
            "seed": self.seed,
            "records": [
                {
                    "n": r.n,
                    "mean_y": r.mean_y,
                    "half_width_y": r.half_width_y,
                    "mean_x": r.mean_x,
                    "half_width_x": r.half_width_x,
                    "se_x": r.se_x,
                    "median_y": r.median_y,
                    "median_x": r.median_x,
                    "ratio": r.ratio,
                }
                for r in self.records
            ],
        }

    def to_json(self) -> str:
        return stable_json_dumps(self.to_dict())

    CSV_HEADER = (
        "n",
        "mean_y",
        "ci_low_y",
        "ci_high_y",
        "mean_x",
        "ci_low_x",
        "ci_high_x",
        "ratio",
        "median_y",
        "median_x",
    )

    def to_csv(self) -> str:
        rows = [
            (
                r.n,
                r.mean_y,
                r.mean_y - r.half_width_y,
                r.mean_y + r.half_width_y,
                r.mean_x,
                r.mean_x - r.half_width_x,
                r.mean_x + r.half_width_x,
                r.ratio,
                r.median_y,
                r.median_x,
            )
            for r in self.records
        ]
        return csv_text(self.CSV_HEADER, rows)


def measure_strong_gap(cfg: ExampleConfig, workers: int = 1) -> StrongGapReport:
    """E||Y|| and E||X|| per n, the sqrt(ln n) regression of the Y side, and
    the boundedness / divergence checks.

    Medians ride along in the records for inspection; no threshold is
    attached to them.
    """
    cfg = cfg.validated()

    def one_n(item: tuple[int, int]) -> GapRecord:
        idx, n = item
        model_y, model_x = build_example_pair(n)
        norms_y = sampling.sample_norms(model_y, cfg.m, cfg.seed + idx, stream=_GAP_Y_STREAM)
        norms_x = sampling.sample_norms(model_x, cfg.m, cfg.seed + idx, stream=_GAP_X_STREAM)
        rep_y = mean_with_ci(norms_y, cfg.delta)
        rep_x = mean_with_ci(norms_x, cfg.delta)
        return GapRecord(
            n=n,
            mean_y=rep_y.mean,
            half_width_y=rep_y.half_width,
            mean_x=rep_x.mean,
            half_width_x=rep_x.half_width,
            se_x=rep_x.standard_error,
            median_y=float(np.median(norms_y)),
            median_x=float(np.median(norms_x)),
        )

    records = list(parallel_map(one_n, list(enumerate(cfg.n_grid)), workers=workers))
    xs = np.sqrt(np.log(np.asarray([r.n for r in records], dtype=np.float64)))
    ys = np.asarray([r.mean_y for r in records])
    slope, intercept, r_squared = _least_squares_line(xs, ys)
    ratios = [r.ratio for r in records]
    return StrongGapReport(
        records=records,
        slope=slope,
        intercept=intercept,
        r_squared=r_squared,
        mean_x_bounded=all(
            r.mean_x <= StrongGapReport.MEAN_X_CEILING + 3.0 * r.se_x for r in records
        ),
        ratio_increasing=all(b > a for a, b in zip(ratios, ratios[1:])),
        m=cfg.m,
        seed=cfg.seed,
    )


def _least_squares_line(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    if xs.size < 2:
        raise ConfigError("need at least two n values for the regression")
    design = np.vstack([xs, np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    fitted = design @ coef
    ss_res = float(((ys - fitted) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r_squared
