"""Empirical weak tail domination: Y is weakly dominated by X when every
linear functional satisfies P(|x*(Y)| >= t) <= P(|x*(X)| >= t) for all t > 0.

The infinite quantifier over functionals and thresholds is approximated by a
finite direction set (dual-ball extreme points catch coordinate-aligned
violations, random unit vectors probe mixtures) and a per-direction threshold
grid (survival quantiles of the dominating side plus any user-supplied
absolute grid).  delta is Bonferroni-split across all direction x threshold
comparisons, so a Violated verdict is a simultaneous-confidence statement.

Because confidence bands can be too wide to certify either way, reports
carry a third verdict, Inconclusive, which has no analytic counterpart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import sampling
from .errors import ConfigError, ModelError
from .reporting import csv_text, parallel_map, stable_json_dumps
from .sampling import (
    ProductSup,
    RandomVectorModel,
    SumNorm,
    SupNorm,
    Thinned,
    model_id,
    product_model,
)
from .stats import EmpiricalTail, dkw_epsilon

DOMINATED = "Dominated"
VIOLATED = "Violated"
INCONCLUSIVE = "Inconclusive"

#: Per-direction survival quantiles of the dominating side used as thresholds.
ADAPTIVE_QUANTILES = (0.5, 0.75, 0.9, 0.95, 0.99, 0.999)

_DIRECTION_STREAM = 101
_Y_STREAM = 102
_X_STREAM = 103


# ---------------------------------------------------------------------------
# direction sets


@dataclass(frozen=True)
class UnitSphereRandom:
    count: int


@dataclass(frozen=True)
class DualBallExtreme:
    pass


@dataclass(frozen=True)
class SignVectors:
    count: int


@dataclass(frozen=True, eq=False)
class Explicit:
    functionals: np.ndarray  # (n_dir, d)


DirectionSet = Union[UnitSphereRandom, DualBallExtreme, SignVectors, Explicit]

_SIGN_ENUM_LIMIT = 16


def generate_directions(
    dirs: DirectionSet, dim: int, norm: sampling.NormTag, seed: int
) -> np.ndarray:
    """Materialize a direction set as an (n_dir, dim) array of functionals."""
    if isinstance(dirs, Explicit):
        u = np.asarray(dirs.functionals, dtype=np.float64)
        if u.ndim == 1:
            u = u[None, :]
        if u.shape[1] != dim:
            raise ConfigError(f"explicit functionals have dim {u.shape[1]}, expected {dim}")
        if u.shape[0] == 0:
            raise ConfigError("empty direction set")
        return u
    if isinstance(dirs, UnitSphereRandom):
        if dirs.count < 1:
            raise ConfigError("UnitSphereRandom needs count >= 1")
        rng = sampling._block_rng(seed, _DIRECTION_STREAM, 0)
        u = rng.standard_normal((dirs.count, dim))
        return u / np.linalg.norm(u, axis=1, keepdims=True)
    if isinstance(dirs, SignVectors):
        if dirs.count < 1:
            raise ConfigError("SignVectors needs count >= 1")
        rng = sampling._block_rng(seed, _DIRECTION_STREAM, 1)
        return 2.0 * rng.integers(0, 2, size=(dirs.count, dim)).astype(np.float64) - 1.0
    if isinstance(dirs, DualBallExtreme):
        return dual_ball_extremes(norm, dim)
    raise ConfigError(f"unknown direction set {dirs!r}")


def dual_ball_extremes(norm: sampling.NormTag, dim: int) -> np.ndarray:
    """Extreme points of the dual unit ball, where that set is a small polytope."""
    if isinstance(norm, SupNorm) or (
        isinstance(norm, ProductSup) and isinstance(_innermost(norm), SupNorm)
    ):
        eye = np.eye(dim)
        return np.concatenate([eye, -eye])
    if isinstance(norm, SumNorm):
        if dim > _SIGN_ENUM_LIMIT:
            raise ModelError(
                f"dual ball of the sum norm has 2^{dim} extreme points; "
                "use SignVectors for a random subset"
            )
        grid = np.meshgrid(*([[-1.0, 1.0]] * dim), indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)
    raise ModelError(f"dual ball of {norm!r} has no finite extreme-point list")


def _innermost(norm: sampling.NormTag) -> sampling.NormTag:
    while isinstance(norm, ProductSup):
        norm = norm.inner
    return norm


def random_dual_ball_points(
    norm: sampling.NormTag, dim: int, count: int, seed: int
) -> Explicit:
    """Random points of the dual unit ball (boundary) for coverage probing."""
    rng = sampling._block_rng(seed, _DIRECTION_STREAM, 2)
    inner = _innermost(norm)
    if isinstance(inner, SupNorm):
        w = rng.dirichlet(np.ones(dim), size=count)
        signs = 2.0 * rng.integers(0, 2, size=(count, dim)).astype(np.float64) - 1.0
        return Explicit(w * signs)
    if isinstance(inner, sampling.EuclideanNorm):
        u = rng.standard_normal((count, dim))
        return Explicit(u / np.linalg.norm(u, axis=1, keepdims=True))
    raise ModelError(f"no dual-ball sampler for {norm!r}")


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class DominationRecord:
    direction_index: int
    t: float
    survival_y: float
    lower_y: float
    upper_y: float
    survival_x: float
    lower_x: float
    upper_x: float

    @property
    def margin(self) -> float:
        return self.survival_y - self.survival_x

    @property
    def violated(self) -> bool:
        return self.lower_y > self.upper_x


@dataclass(frozen=True, eq=False)
class DominationReport:
    verdict: str
    records: list[DominationRecord]
    directions: np.ndarray
    m: int
    delta: float
    delta_split: float
    epsilon_y: float
    epsilon_x: float
    seed: int
    model_id_y: str
    model_id_x: str
    t_grid: list[float] = field(default_factory=list)

    @property
    def max_margin(self) -> float:
        return max(r.margin for r in self.records)

    def worst_record(self) -> DominationRecord:
        return max(self.records, key=lambda r: r.margin)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "m": self.m,
            "delta": self.delta,
            "delta_split": self.delta_split,
            "epsilon_y": self.epsilon_y,
            "epsilon_x": self.epsilon_x,
            "seed": self.seed,
            "model_id_y": self.model_id_y,
            "model_id_x": self.model_id_x,
            "t_grid": list(self.t_grid),
            "comparisons": len(self.records),
            "max_margin": self.max_margin,
            "records": [
                {
                    "direction": r.direction_index,
                    "t": r.t,
                    "survival_y": r.survival_y,
                    "lower_y": r.lower_y,
                    "upper_y": r.upper_y,
                    "survival_x": r.survival_x,
                    "lower_x": r.lower_x,
                    "upper_x": r.upper_x,
                    "margin": r.margin,
                    "violated": r.violated,
                }
                for r in self.records
            ],
        }

    def to_json(self) -> str:
        return stable_json_dumps(self.to_dict())

    CSV_HEADER = (
        "direction",
        "t",
        "survival_y",
        "lower_y",
        "upper_y",
        "survival_x",
        "lower_x",
        "upper_x",
        "margin",
        "violated",
    )

    def to_csv(self) -> str:
        rows = [
            (
                r.direction_index,
                r.t,
                r.survival_y,
                r.lower_y,
                r.upper_y,
                r.survival_x,
                r.lower_x,
                r.upper_x,
                r.margin,
                int(r.violated),
            )
            for r in self.records
        ]
        return csv_text(self.CSV_HEADER, rows)


# ---------------------------------------------------------------------------
# the check itself


def check_weak_domination(
    model_y: RandomVectorModel,
    model_x: RandomVectorModel,
    dirs: DirectionSet,
    t_grid: Sequence[float] | None = None,
    m: int = 100_000,
    delta: float = 0.01,
    seed: int = 0,
    workers: int = 1,
    adaptive_quantiles: Sequence[float] = ADAPTIVE_QUANTILES,
    exact_survival_y: Callable[[np.ndarray], np.ndarray] | None = None,
) -> DominationReport:
    """Compare per-functional survival of |x*(Y)| against |x*(X)| on a grid.

    Thresholds per direction are the `adaptive_quantiles` of that
    direction's |x*(X)| sample, merged with the optional absolute `t_grid`.
    When `exact_survival_y` is given (e.g. a closed-form Gaussian survival
    valid for every unit functional) the Y side carries a zero-width band.

    Verdicts follow the band logic: Violated needs the Y lower band strictly
    above the X upper band somewhere; Dominated needs no violation and every
    margin within the combined band width; anything else is Inconclusive.
    """
    if model_y.dim != model_x.dim:
        raise ModelError(f"models disagree on dim: {model_y.dim} vs {model_x.dim}")
    if m < 1_000:
        raise ConfigError(f"m must be >= 1000 for banded comparisons, got {m}")
    if not (0 < delta < 1):
        raise ConfigError(f"delta must be in (0, 1), got {delta}")
    user_grid = _checked_grid(t_grid)
    quantiles = tuple(adaptive_quantiles or ())
    if not quantiles and user_grid.size == 0:
        raise ConfigError("no thresholds: empty t_grid and no adaptive quantiles")

    directions = generate_directions(dirs, model_x.dim, model_x.norm, seed)
    n_dir = directions.shape[0]
    proj_x = np.abs(
        sampling.sample_projections(model_x, directions, m, seed, stream=_X_STREAM)
    )
    if exact_survival_y is None:
        proj_y = np.abs(
            sampling.sample_projections(model_y, directions, m, seed, stream=_Y_STREAM)
        )
    else:
        proj_y = None

    n_t = len(quantiles) + user_grid.size
    comparisons = n_dir * n_t
    delta_split = delta / comparisons
    # each comparison spends half its budget per sampled side
    if exact_survival_y is None:
        eps_y = dkw_epsilon(m, delta_split / 2.0)
        eps_x = eps_y
    else:
        eps_y = 0.0
        eps_x = dkw_epsilon(m, delta_split)

    def one_direction(i: int) -> list[DominationRecord]:
        x_tail = EmpiricalTail.from_samples(proj_x[i], delta=delta)
        ts = np.asarray(
            sorted(set(np.quantile(proj_x[i], quantiles).tolist()) | set(user_grid.tolist()))
        )
        ts = ts[ts > 0]
        sx = x_tail.survival(ts).estimate
        if proj_y is not None:
            y_tail = EmpiricalTail.from_samples(proj_y[i], delta=delta)
            sy = y_tail.survival(ts).estimate
        else:
            sy = np.asarray(exact_survival_y(ts), dtype=np.float64)
        recs = []
        for j, t in enumerate(ts):
            recs.append(
                DominationRecord(
                    direction_index=i,
                    t=float(t),
                    survival_y=float(sy[j]),
                    lower_y=float(max(sy[j] - eps_y, 0.0)),
                    upper_y=float(min(sy[j] + eps_y, 1.0)),
                    survival_x=float(sx[j]),
                    lower_x=float(max(sx[j] - eps_x, 0.0)),
                    upper_x=float(min(sx[j] + eps_x, 1.0)),
                )
            )
        return recs

    per_dir = parallel_map(one_direction, range(n_dir), workers=workers)
    records = [r for recs in per_dir for r in recs]

    if any(r.violated for r in records):
        verdict = VIOLATED
    elif all(r.margin <= eps_y + eps_x for r in records):
        verdict = DOMINATED
    else:
        verdict = INCONCLUSIVE
    return DominationReport(
        verdict=verdict,
        records=records,
        directions=directions,
        m=m,
        delta=delta,
        delta_split=delta_split,
        epsilon_y=eps_y,
        epsilon_x=eps_x,
        seed=seed,
        model_id_y=model_id(model_y),
        model_id_x=model_id(model_x),
        t_grid=[float(t) for t in user_grid],
    )


def _checked_grid(t_grid: Sequence[float] | None) -> np.ndarray:
    if t_grid is None:
        return np.asarray([], dtype=np.float64)
    grid = np.asarray(list(t_grid), dtype=np.float64)
    if grid.size and (np.any(grid <= 0) or np.any(np.diff(grid) <= 0)):
        raise ConfigError("t_grid must be positive and strictly increasing")
    return grid


# ---------------------------------------------------------------------------
# derived models


def thin_and_scale(model: RandomVectorModel, c1: float, c2: float) -> RandomVectorModel:
    """The model of eta * Y / c2 with P(eta = 1) = 1/c1.

    For every functional and t > 0 the new survival is
    (1/c1) * P(|x*(Y)| >= c2 t), the reduction used to fold a
    constants-weakened domination hypothesis back into the plain one.
    """
    if c1 < 1:
        raise ConfigError(f"c1 must be >= 1, got {c1}")
    if c2 <= 0:
        raise ConfigError(f"c2 must be > 0, got {c2}")
    return RandomVectorModel(
        dim=model.dim,
        norm=model.norm,
        spec=Thinned(base=model, keep_prob=1.0 / c1, scale=1.0 / c2),
    )


def symmetrized_product(
    model: RandomVectorModel, copies: int, keep_prob: float
) -> RandomVectorModel:
    """`copies` independent copies under the product-sup norm, all multiplied
    by one shared Bernoulli(keep_prob) factor."""
    if copies < 1:
        raise ConfigError(f"copies must be >= 1, got {copies}")
    if not (0 < keep_prob <= 1):
        raise ConfigError(f"keep_prob must be in (0, 1], got {keep_prob}")
    prod = product_model(model, copies)
    return RandomVectorModel(
        dim=prod.dim, norm=prod.norm, spec=Thinned(base=prod, keep_prob=keep_prob, scale=1.0)
    )
