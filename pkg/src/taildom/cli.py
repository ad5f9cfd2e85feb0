"""Command-line driver: every experiment runs from an explicit, seeded,
machine-readable configuration.

Precedence is defaults < flags < config file (a config file pins a run
completely, so it wins over ad-hoc flags).  Report bodies are deterministic
for a fixed config, independent of --workers; wall-clock metadata goes to a
separate meta file.  Exit codes: 0 all checks pass, 1 a check failed or a
violation was found, 2 inconclusive only, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, counterexample
from .comparison import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    TheoremParams,
    check_max_lower_deviation,
    check_max_moment_ratio,
    derive_params,
    verify_mean_domination,
    verify_tail_domination,
)
from .domination import (
    DOMINATED,
    VIOLATED,
    DualBallExtreme,
    Explicit,
    UnitSphereRandom,
    check_weak_domination,
    generate_directions,
)
from .errors import ConfigError, ContractError, TaildomError
from .regularity import (
    check_regularity,
    coordinate_functionals,
    mean_domination_constant,
    smallest_passing_k,
)
from .reporting import csv_text, write_csv, write_json
from .sampling import (
    IidCoords,
    RandomVectorModel,
    StandardGaussian,
    SupNorm,
    model_from_dict,
    model_to_dict,
    scale_model,
)
from .stats import paley_zygmund_check

EXPERIMENTS = (
    "dominate",
    "regularity",
    "prop1",
    "thm1",
    "condii",
    "compmom",
    "example",
    "pz",
    "ball",
    "sandwich",
    "audit",
)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_CONFIG = 3

AUDIT_CEILING = 20.0


@dataclass
class RunConfig:
    experiment: str
    seed: int = 0
    samples: int = 100_000
    delta: float = 0.01
    out_dir: str = "reports"
    workers: int = 1
    directions: int = 64
    dim: int | None = None
    trials: int = 1000
    n_grid: list[int] | None = None
    t_grid: list[float] | None = None
    s_grid: list[float] | None = None
    theta_grid: list[float] | None = None
    k: float | None = None
    alpha: float | None = None
    beta: float | None = None
    c: float | None = None
    scale_y: float | None = None
    model_x: dict | None = None
    model_y: dict | None = None

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        return out


def _default_model(dim: int) -> RandomVectorModel:
    return RandomVectorModel(dim=dim, norm=SupNorm(), spec=IidCoords(StandardGaussian()))


def _resolve_models(cfg: RunConfig, default_dim: int) -> tuple[RandomVectorModel, RandomVectorModel]:
    dim = cfg.dim or default_dim
    model_x = model_from_dict(cfg.model_x) if cfg.model_x else _default_model(dim)
    if cfg.model_y:
        model_y = model_from_dict(cfg.model_y)
    elif cfg.scale_y is not None:
        model_y = scale_model(model_x, cfg.scale_y)
    else:
        model_y = model_x
    return model_x, model_y


def _domination_dirs(cfg: RunConfig, model: RandomVectorModel):
    """Default direction policy: dual-ball extremes plus random unit vectors."""
    if not isinstance(model.norm, SupNorm):
        return UnitSphereRandom(cfg.directions)
    extremes = generate_directions(DualBallExtreme(), model.dim, model.norm, cfg.seed)
    random_part = generate_directions(
        UnitSphereRandom(cfg.directions), model.dim, model.norm, cfg.seed
    )
    return Explicit(np.concatenate([extremes, random_part]))


# ---------------------------------------------------------------------------
# experiment runners: each returns (exit_code, report dict, csv text, summary)


def _run_dominate(cfg: RunConfig):
    model_x, model_y = _resolve_models(cfg, default_dim=16)
    report = check_weak_domination(
        model_y,
        model_x,
        _domination_dirs(cfg, model_x),
        t_grid=cfg.t_grid,
        m=cfg.samples,
        delta=cfg.delta,
        seed=cfg.seed,
        workers=cfg.workers,
    )
    code = {DOMINATED: EXIT_PASS, VIOLATED: EXIT_FAIL}.get(report.verdict, EXIT_INCONCLUSIVE)
    summary = f"dominate: {report.verdict} (max margin {report.max_margin:.4g})"
    return code, report.to_dict(), report.to_csv(), summary


def _run_regularity(cfg: RunConfig):
    model_x, _ = _resolve_models(cfg, default_dim=256)
    functionals = coordinate_functionals(model_x.dim)
    if cfg.k is not None:
        cert = check_regularity(
            model_x,
            functionals,
            cfg.k,
            DualBallExtreme(),
            m=cfg.samples,
            seed=cfg.seed,
            workers=cfg.workers,
        )
        best_k = cfg.k if cert.passed else None
    else:
        best_k, cert = smallest_passing_k(
            model_x,
            functionals,
            DualBallExtreme(),
            m=cfg.samples,
            seed=cfg.seed,
            workers=cfg.workers,
        )
    if cert.inconclusive:
        code = EXIT_INCONCLUSIVE
    else:
        code = EXIT_PASS if cert.passed else EXIT_FAIL
    doc = cert.to_dict()
    doc["smallest_passing_k"] = best_k
    rows = [
        (c.index, c.order, c.value, c.bound, int(c.passed)) for c in cert.moment_results
    ]
    csv = csv_text(("n", "order", "value", "bound", "passed"), rows)
    summary = (
        f"regularity: passed={cert.passed} K={cert.k} "
        f"max moment ratio {cert.max_moment_ratio:.4g}"
    )
    return code, doc, csv, summary


def _run_prop1(cfg: RunConfig):
    model_x, model_y = _resolve_models(cfg, default_dim=64)
    functionals = coordinate_functionals(model_x.dim)
    if cfg.k is not None:
        cert = check_regularity(
            model_x,
            functionals,
            cfg.k,
            DualBallExtreme(),
            m=cfg.samples,
            seed=cfg.seed,
            workers=cfg.workers,
        )
    else:
        _, cert = smallest_passing_k(
            model_x,
            functionals,
            DualBallExtreme(),
            m=cfg.samples,
            seed=cfg.seed,
            workers=cfg.workers,
        )
    report = verify_mean_domination(
        model_x,
        model_y,
        cert,
        m=cfg.samples,
        seed=cfg.seed,
        delta=cfg.delta,
        workers=cfg.workers,
    )
    code = {PASS: EXIT_PASS, FAIL: EXIT_FAIL}.get(report.verdict, EXIT_INCONCLUSIVE)
    point = report.points[0]
    summary = (
        f"prop1: {report.verdict} (E||Y|| {point.lhs:.4g} vs bound {point.rhs:.4g})"
    )
    return code, report.to_dict(), report.to_csv(), summary


def _run_thm1(cfg: RunConfig):
    model_x, model_y = _resolve_models(cfg, default_dim=16)
    n_grid = cfg.n_grid or [1, 2, 4, 8]
    if cfg.k is not None and (cfg.c is not None or (cfg.alpha and cfg.beta)):
        params = TheoremParams(k=cfg.k, alpha=cfg.alpha, beta=cfg.beta, c=cfg.c)
    else:
        params = derive_params(
            model_x, n_grid, m=cfg.samples, seed=cfg.seed, cert_m=min(cfg.samples, 20_000)
        )
    report = verify_tail_domination(
        model_x,
        model_y,
        params,
        n_grid,
        t_grid=cfg.t_grid,
        m=cfg.samples,
        seed=cfg.seed,
        delta=cfg.delta,
        workers=cfg.workers,
    )
    code = {PASS: EXIT_PASS, FAIL: EXIT_FAIL}.get(report.verdict, EXIT_INCONCLUSIVE)
    summary = f"thm1: {report.verdict} at {len(report.points)} thresholds"
    return code, report.to_dict(), report.to_csv(), summary


def _run_condii(cfg: RunConfig):
    model_x, _ = _resolve_models(cfg, default_dim=16)
    n_grid = cfg.n_grid or [1, 2, 4, 8, 16]
    alpha = cfg.alpha if cfg.alpha is not None else 0.5
    report = check_max_lower_deviation(
        model_x, alpha, n_grid, m=cfg.samples, seed=cfg.seed, delta=cfg.delta
    )
    beta_min = report.intermediates["beta_min"]
    summary = f"condii: beta_min {beta_min:.4g} at alpha {alpha}"
    return EXIT_PASS, report.to_dict(), report.to_csv(), summary


def _run_compmom(cfg: RunConfig):
    model_x, _ = _resolve_models(cfg, default_dim=16)
    n_grid = cfg.n_grid or [1, 2, 4, 8, 16]
    report = check_max_moment_ratio(model_x, n_grid, m=cfg.samples, seed=cfg.seed)
    rows = [
        (r.n, r.mean_max, r.mean_max_sq, r.ratio, r.ratio_band) for r in report.records
    ]
    csv = csv_text(("n", "mean_max", "mean_max_sq", "ratio", "ratio_band"), rows)
    summary = f"compmom: derived C {report.derived_c:.4g}"
    return EXIT_PASS, report.to_dict(), csv, summary


def _run_example(cfg: RunConfig):
    n_grid = tuple(cfg.n_grid or [2**i for i in range(1, 13)])
    ex_cfg = counterexample.ExampleConfig(
        n_grid=n_grid,
        m=cfg.samples if cfg.samples != 100_000 else 200_000,
        directions=cfg.directions,
        seed=cfg.seed,
        delta=cfg.delta,
    )
    dom = counterexample.verify_example_inequality(ex_cfg, workers=cfg.workers)
    gap = counterexample.measure_strong_gap(ex_cfg, workers=cfg.workers)
    doc = {"domination": dom.to_dict(), "gap": gap.to_dict()}
    if dom.verdict == VIOLATED or not gap.passed:
        code = EXIT_FAIL
    elif dom.verdict == DOMINATED:
        code = EXIT_PASS
    else:
        code = EXIT_INCONCLUSIVE
    summary = (
        f"example: domination {dom.verdict}; gap slope {gap.slope:.3f} "
        f"R^2 {gap.r_squared:.4f}; E||X|| bounded: {gap.mean_x_bounded}"
    )
    return code, doc, gap.to_csv(), summary


def _run_pz(cfg: RunConfig):
    thetas = cfg.theta_grid or [0.1, 1.0 / 3.0, 0.5, 0.9]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    violations = 0
    rows = []
    for trial in range(cfg.trials):
        size = int(rng.integers(10, 400))
        kind = trial % 3
        if kind == 0:
            z = rng.random(size)
        elif kind == 1:
            z = rng.exponential(1.0, size)
        else:
            z = np.abs(rng.standard_cauchy(size))
        for theta in thetas:
            res = paley_zygmund_check(z, theta)
            rows.append((trial, theta, res.lhs, res.rhs, int(res.holds)))
            violations += 0 if res.holds else 1
    doc = {"trials": cfg.trials, "thetas": list(thetas), "violations": violations}
    csv = csv_text(("trial", "theta", "lhs", "rhs", "holds"), rows)
    code = EXIT_PASS if violations == 0 else EXIT_FAIL
    summary = f"pz: {violations} violations over {cfg.trials} sample sets"
    return code, doc, csv, summary


def _run_ball(cfg: RunConfig):
    dim = cfg.dim or 64
    s_grid = cfg.s_grid or [0.05, 0.1, 0.2, 0.5]
    n_dir = cfg.directions if cfg.directions != 64 else 32
    dirs = generate_directions(UnitSphereRandom(n_dir), dim, SupNorm(), cfg.seed)
    all_points = []
    ok = True
    for i in range(dirs.shape[0]):
        rep = counterexample.verify_ball_slab_step(
            dirs[i], s_grid, m=cfg.samples, seed=cfg.seed + i, delta=cfg.delta,
            direction_index=i,
        )
        ok = ok and rep.passed
        all_points.extend(rep.points)
    doc = {
        "passed": ok,
        "m": cfg.samples,
        "delta": cfg.delta,
        "points": [
            {
                "direction": p.direction_index,
                "s": p.s,
                "p_hat": p.p_hat,
                "bound": p.bound,
                "band": p.band,
                "ok": p.ok,
            }
            for p in all_points
        ],
    }
    rows = [
        (p.direction_index, p.s, p.p_hat, p.bound, p.band, int(p.ok)) for p in all_points
    ]
    csv = csv_text(("direction", "s", "p_hat", "bound", "band", "ok"), rows)
    summary = f"ball: passed={ok} over {dirs.shape[0]} directions x {len(s_grid)} slabs"
    return (EXIT_PASS if ok else EXIT_FAIL), doc, csv, summary


def _run_sandwich(cfg: RunConfig):
    ts = cfg.t_grid or np.linspace(6.0 / 1000.0, 6.0, 1000).tolist()
    report = counterexample.verify_gaussian_sandwich(ts)
    rows = [(p.t, p.lower, p.exact, p.upper, int(p.ok)) for p in report.points]
    csv = csv_text(("t", "lower", "exact", "upper", "ok"), rows)
    summary = f"sandwich: passed={report.passed} at {len(report.points)} points"
    return (EXIT_PASS if report.passed else EXIT_FAIL), report.to_dict(), csv, summary


def _run_audit(cfg: RunConfig):
    value = mean_domination_constant()
    ok = value <= AUDIT_CEILING
    doc = {"constant": value, "ceiling": AUDIT_CEILING, "passed": ok}
    csv = csv_text(("constant", "ceiling", "passed"), [(value, AUDIT_CEILING, int(ok))])
    summary = f"audit: constant {value:.6f} <= {AUDIT_CEILING}: {ok}"
    return (EXIT_PASS if ok else EXIT_FAIL), doc, csv, summary


_RUNNERS = {
    "dominate": _run_dominate,
    "regularity": _run_regularity,
    "prop1": _run_prop1,
    "thm1": _run_thm1,
    "condii": _run_condii,
    "compmom": _run_compmom,
    "example": _run_example,
    "pz": _run_pz,
    "ball": _run_ball,
    "sandwich": _run_sandwich,
    "audit": _run_audit,
}


# ---------------------------------------------------------------------------
# configuration plumbing


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 3, not argparse's default 2
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="taildom", description=__doc__)
    parser.add_argument("experiment", nargs="?", choices=EXPERIMENTS)
    parser.add_argument("--experiment", dest="experiment_flag", choices=EXPERIMENTS)
    parser.add_argument("--config", type=str, help="JSON config; overrides flags")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--samples", "-m", type=int)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--out-dir", type=str)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--directions", type=int)
    parser.add_argument("--dim", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--n-grid", type=str, help="comma-separated integers")
    parser.add_argument("--t-grid", type=str, help="comma-separated floats")
    parser.add_argument("--s-grid", type=str, help="comma-separated floats")
    parser.add_argument("--theta-grid", type=str, help="comma-separated floats")
    parser.add_argument("--k", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--c", type=float)
    parser.add_argument("--scale-y", type=float, help="model Y = scale * model X")
    parser.add_argument("--model-x", type=str, help="inline JSON or @path")
    parser.add_argument("--model-y", type=str, help="inline JSON or @path")
    return parser


def _parse_model_arg(text: str) -> dict:
    raw = Path(text[1:]).read_text() if text.startswith("@") else text
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"model JSON does not parse: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("model JSON must be an object")
    return doc


def _split_numbers(text, cast):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [cast(v) for v in text]
    parts = [p for p in str(text).replace(",", " ").split() if p]
    if not parts:
        raise ConfigError("empty grid argument")
    return [cast(p) for p in parts]


_FLAG_FIELDS = {
    "seed": int,
    "samples": int,
    "delta": float,
    "out_dir": str,
    "workers": int,
    "directions": int,
    "dim": int,
    "trials": int,
    "k": float,
    "alpha": float,
    "beta": float,
    "c": float,
    "scale_y": float,
}


def resolve_config(argv) -> RunConfig:
    args = _build_parser().parse_args(argv)
    experiment = args.experiment or args.experiment_flag
    cfg = RunConfig(experiment=experiment or "")
    for name in _FLAG_FIELDS:
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    cfg.n_grid = _split_numbers(args.n_grid, int)
    cfg.t_grid = _split_numbers(args.t_grid, float)
    cfg.s_grid = _split_numbers(args.s_grid, float)
    cfg.theta_grid = _split_numbers(args.theta_grid, float)
    if args.model_x:
        cfg.model_x = _parse_model_arg(args.model_x)
    if args.model_y:
        cfg.model_y = _parse_model_arg(args.model_y)

    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config file {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        valid = {f.name for f in fields(RunConfig)}
        for key, value in doc.items():
            if key not in valid:
                raise ConfigError(f"unknown config key {key!r}")
            if key in ("n_grid",):
                value = _split_numbers(value, int)
            elif key in ("t_grid", "s_grid", "theta_grid"):
                value = _split_numbers(value, float)
            setattr(cfg, key, value)

    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(
            f"experiment must be one of {', '.join(EXPERIMENTS)}; got {cfg.experiment!r}"
        )
    if cfg.samples < 1 or cfg.workers < 1 or cfg.trials < 1:
        raise ConfigError("samples, workers and trials must be positive")
    if not (0 < cfg.delta < 1):
        raise ConfigError(f"delta must be in (0, 1), got {cfg.delta}")
    if cfg.model_x is not None and not isinstance(cfg.model_x, dict):
        raise ConfigError("model_x must be a JSON object")
    if cfg.model_y is not None and not isinstance(cfg.model_y, dict):
        raise ConfigError("model_y must be a JSON object")
    return cfg


def run(cfg: RunConfig) -> int:
    """Execute one experiment; write report, detail CSV and meta sidecar."""
    started = time.time()
    code, doc, csv, summary = _RUNNERS[cfg.experiment](cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    body = {
        "version": __version__,
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "exit_code": code,
        "report": doc,
    }
    write_json(out_dir / f"{cfg.experiment}_report.json", body)
    (out_dir / f"{cfg.experiment}_detail.csv").write_text(csv, encoding="utf-8")
    write_json(
        out_dir / f"{cfg.experiment}_meta.json",
        {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
         "runtime_seconds": time.time() - started,
         "version": __version__},
    )
    print(summary)
    return code


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv if argv is not None else sys.argv[1:])
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractError as exc:
        print(f"contract not established: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except TaildomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
