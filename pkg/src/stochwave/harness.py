"""Experiment runner: configs, replica ensembles, reports.

Each experiment is deterministic per (config, seed): replica r draws its
seed from the base seed through numpy's seed splitter, and experiments
that compare fields across smoothing levels reuse the same path per
replica (the approximations are coupled on one probability space).
Results land in output_dir as config.json (the validated snapshot),
results.csv (one row per replica or per scale; identical bytes on
repeated runs) and record.json (aggregates; carries wall time, the one
non-reproducible field).
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate, special, stats

from . import __version__
from .holder import fit_increment_exponent, holder_distance
from .kernels import (
    CovarianceSpec,
    fit_h1_gamma,
    fit_h1_gamma_prime,
    fit_small_ball_nu,
    fit_sphere_pair_exponents,
)
from .noise import (
    ALPHA_MIN,
    ControlH,
    NoiseGrid,
    NoiseModel,
    build_smoothed,
    cubic_lattice,
    derive_seed,
    ht_norm,
    localization_indicator,
    localization_probability,
    slice_ht_norm,
)
from .solver import (
    BlowUpError,
    Coefficient,
    EquationSpec,
    SolverConfig,
    coeff_affine,
    coeff_const,
    coeff_sin,
    coeff_zero,
    picard_solve,
    solve_mild,
)

__all__ = [
    "ConfigError",
    "EXPERIMENTS",
    "ExperimentConfig",
    "RunRecord",
    "estimate_exceedance",
    "emit_report",
    "load_config",
    "run",
    "spectral_variance_constant",
    "wilson_interval",
]

EXPERIMENTS = (
    "variance-oracle",
    "increment-exponent",
    "wongzakai-growth",
    "localization-prob",
    "support-probe",
    "hypotheses",
    "picard-check",
)

_COEFF_KEYS = {"kind", "a", "b", "c"}


class ConfigError(ValueError):
    """Invalid experiment config; carries every violated field."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(problems))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully-resolved description of one experiment run."""

    experiment: str
    seed: int
    replicas: int
    output_dir: Optional[str]
    kernel: dict
    grid: dict
    equation: dict
    eval: dict
    n_levels: tuple
    alpha: float
    rho: float
    lam: Optional[float]
    t0: float
    num_modes: int
    sphere_order: int
    workers: int
    betas: tuple
    extras: dict

    def as_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d.update(d.pop("extras"))
        return d

    def covariance_spec(self) -> CovarianceSpec:
        k = dict(self.kernel)
        kind = k.get("kind", "riesz")
        reg = k.get("reg_radius")
        if reg is None:
            # default: half the spatial lattice spacing of the run's grid
            reg = 0.5 * self.noise_grid().spacing
        return CovarianceSpec(
            kind=kind,
            beta=float(k.get("beta", 1.0)),
            reg_radius=float(reg),
            horizon=float(self.grid.get("T", 1.0)),
            table_r=tuple(k.get("table_r", ())),
            table_f=tuple(k.get("table_f", ())),
        )

    def noise_grid(self) -> NoiseGrid:
        g = self.grid
        sites, spacing = cubic_lattice(
            g.get("center", (0.0, 0.0, 0.0)), float(g["half_extent"]), int(g["n_per_axis"])
        )
        return NoiseGrid(
            T=float(g.get("T", 1.0)),
            num_steps=int(g.get("num_steps", 64)),
            lattice=sites,
            spacing=spacing,
        )

    def eval_points(self) -> np.ndarray:
        e = self.eval
        if "points" in e:
            return np.asarray(e["points"], dtype=float)
        if float(e.get("half_extent", 0.0)) == 0.0 or int(e.get("n_per_axis", 1)) == 1:
            return np.asarray([e.get("center", (0.0, 0.0, 0.0))], dtype=float)
        pts, _ = cubic_lattice(e.get("center", (0.0, 0.0, 0.0)),
                               float(e["half_extent"]), int(e["n_per_axis"]))
        return pts

    def equation_spec(self) -> EquationSpec:
        return EquationSpec(
            variant=self.equation.get("variant", "base"),
            A=_parse_coeff(self.equation.get("A")),
            B=_parse_coeff(self.equation.get("B")),
            D=_parse_coeff(self.equation.get("D")),
            b=_parse_coeff(self.equation.get("b")),
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(sphere_order=self.sphere_order)


def _parse_coeff(d) -> Coefficient:
    if d is None:
        return coeff_zero()
    if not isinstance(d, dict) or not set(d) <= _COEFF_KEYS:
        raise ConfigError([f"coefficient spec {d!r} has unknown keys"])
    return Coefficient(kind=d.get("kind", "zero"), a=float(d.get("a", 0.0)),
                       b=float(d.get("b", 0.0)), c=float(d.get("c", 1.0)))


_KNOWN_KEYS = {
    "experiment", "seed", "replicas", "output_dir", "kernel", "grid", "equation",
    "eval", "n_levels", "alpha", "rho", "lambda", "t0", "num_modes",
    "sphere_order", "workers", "betas", "min_scale", "p_moment", "picard_equations",
    "time_points",
}


def load_config(source) -> ExperimentConfig:
    """Parse and validate a config mapping or JSON file; every violation is listed."""
    if isinstance(source, (str, Path)):
        raw = json.loads(Path(source).read_text())
    else:
        raw = dict(source)
    problems = []
    unknown = set(raw) - _KNOWN_KEYS
    for key in sorted(unknown):
        problems.append(f"unknown key {key!r}")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        problems.append(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    replicas = int(raw.get("replicas", 1))
    if replicas < 1:
        problems.append(f"replicas must be >= 1, got {replicas}")
    n_levels = tuple(raw.get("n_levels", ()))
    if list(n_levels) != sorted(n_levels):
        problems.append(f"n_levels must be sorted ascending, got {n_levels}")
    alpha = float(raw.get("alpha", 2.0))
    if alpha <= ALPHA_MIN:
        problems.append(f"alpha must exceed sqrt(2 ln 2) ~ {ALPHA_MIN:.4f}, got {alpha}")
    rho = float(raw.get("rho", 0.25))
    if not 0.0 < rho < 1.0:
        problems.append(f"rho must lie in (0, 1), got {rho}")
    lam = raw.get("lambda")
    if lam is not None and float(lam) <= 0:
        problems.append(f"lambda must be > 0 when given, got {lam}")
    grid = raw.get("grid", {})
    if exp not in ("hypotheses",) and ("half_extent" not in grid or "n_per_axis" not in grid):
        problems.append("grid needs half_extent and n_per_axis")
    steps = int(grid.get("num_steps", 64)) if isinstance(grid, dict) else 64
    if n_levels and steps % (1 << max(n_levels)):
        problems.append(
            f"num_steps={steps} must be a multiple of 2^max(n_levels)={1 << max(n_levels)}"
        )
    if problems:
        raise ConfigError(problems)
    extras = {k: raw[k] for k in ("min_scale", "p_moment", "picard_equations", "time_points")
              if k in raw}
    return ExperimentConfig(
        experiment=exp,
        seed=int(raw.get("seed", 0)),
        replicas=replicas,
        output_dir=raw.get("output_dir"),
        kernel=dict(raw.get("kernel", {})),
        grid=dict(grid),
        equation=dict(raw.get("equation", {})),
        eval=dict(raw.get("eval", {})),
        n_levels=n_levels,
        alpha=alpha,
        rho=rho,
        lam=None if lam is None else float(lam),
        t0=float(raw.get("t0", 0.0)),
        num_modes=int(raw.get("num_modes", 16)),
        sphere_order=int(raw.get("sphere_order", 256)),
        workers=int(raw.get("workers", 1)),
        betas=tuple(raw.get("betas", (0.5, 1.0, 1.5))),
        extras=extras,
    )


@dataclass
class RunRecord:
    """Everything one run produced: config snapshot, rows, aggregates."""

    config: dict
    rows: list
    columns: tuple
    aggregates: dict
    excluded: int
    wall_time: float
    version: str = __version__

    def replica_accounting_ok(self) -> bool:
        if "replica" not in self.columns:
            return True
        n = len({r[self.columns.index("replica")] for r in self.rows})
        return n + self.excluded == self.config.get("replicas", n + self.excluded)


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson 95% score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def estimate_exceedance(samples, lam: float) -> tuple[float, tuple[float, float]]:
    """Fraction of samples above lam, with its Wilson 95% interval."""
    samples = np.asarray(list(samples), dtype=float)
    if samples.size == 0:
        raise ValueError("need at least one sample")
    if lam <= 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    k = int(np.sum(samples > lam))
    return k / samples.size, wilson_interval(k, samples.size)


def spectral_variance_constant(beta: float) -> float:
    """K_beta for the additive variance law K_beta t^(3-beta)/(3-beta).

    Computed from the spectral side: the Riesz kernel has spectral density
    c_beta |xi|^(beta-3) with c_beta = 2^(3-beta) pi^(3/2)
    Gamma((3-beta)/2) / Gamma(beta/2), and the Green function's Fourier
    transform contributes the 1D quadrature of u^(beta-3) sin^2 u.
    """
    c_beta = 2 ** (3 - beta) * math.pi ** 1.5 * special.gamma((3 - beta) / 2) / special.gamma(beta / 2)
    head, _ = integrate.quad(lambda u: u ** (beta - 3) * math.sin(u) ** 2, 0.0, 1.0,
                             points=[0.0], limit=200)
    # tail: sin^2 = (1 - cos 2u)/2; the cosine part is a Fourier integral
    tail_flat = 1.0 / (2.0 * (2.0 - beta))
    tail_osc, _ = integrate.quad(lambda u: 0.5 * u ** (beta - 3), 1.0, np.inf,
                                 weight="cos", wvar=2.0)
    i_beta = head + tail_flat - tail_osc
    return (2 * math.pi) ** -3 * 4 * math.pi * c_beta * i_beta


def _variance_ci(sample_var: float, n: int) -> tuple[float, float]:
    lo = sample_var * (n - 1) / stats.chi2.ppf(0.975, n - 1)
    hi = sample_var * (n - 1) / stats.chi2.ppf(0.025, n - 1)
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# replica scheduling: concurrent up to cfg.workers, merged in replica order

_WORKER_CTX: dict = {}


def _worker_init(cfg_dict: dict, prepare_name: str) -> None:
    cfg = load_config(cfg_dict)
    _WORKER_CTX.clear()
    _WORKER_CTX.update(_PREPARES[prepare_name](cfg))
    _WORKER_CTX["cfg"] = cfg


def _worker_call(args) -> tuple:
    prepare_name, r = args
    return r, _REPLICA_FNS[prepare_name](_WORKER_CTX, _WORKER_CTX["cfg"], r)


def _map_replicas(cfg: ExperimentConfig, name: str) -> list[tuple[int, object]]:
    """Run the per-replica function for every replica; order-stable output."""
    if cfg.workers <= 1:
        ctx = _PREPARES[name](cfg)
        ctx["cfg"] = cfg
        return [(r, _REPLICA_FNS[name](ctx, cfg, r)) for r in range(cfg.replicas)]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(
        max_workers=cfg.workers,
        initializer=_worker_init,
        initargs=(cfg.as_dict(), name),
    ) as pool:
        out = list(pool.map(_worker_call, [(name, r) for r in range(cfg.replicas)],
                            chunksize=8))
    return sorted(out, key=lambda t: t[0])


# ---------------------------------------------------------------------------
# experiments


def _prepare_variance(cfg: ExperimentConfig) -> dict:
    grid = cfg.noise_grid()
    model = NoiseModel(cfg.covariance_spec(), grid, cfg.num_modes)
    t_marks = tuple(cfg.extras.get("time_points", (0.5, 1.0)))
    return {
        "model": model,
        "eq": cfg.equation_spec(),
        "solver_cfg": cfg.solver_config(),
        "pts": cfg.eval_points(),
        "t_marks": t_marks,
        "k_marks": [int(round(t / grid.dt)) for t in t_marks],
    }


def _replica_variance(ctx: dict, cfg: ExperimentConfig, r: int):
    path = ctx["model"].sample(derive_seed(cfg.seed, r))
    try:
        s = solve_mild(ctx["eq"], path=path, config=ctx["solver_cfg"],
                       eval_points=ctx["pts"])
    except BlowUpError:
        return None
    return [float(s.values[k, 0]) for k in ctx["k_marks"]]


def _run_variance_oracle(cfg: ExperimentConfig) -> tuple[list, tuple, dict, int]:
    spec = cfg.covariance_spec()
    t_marks = tuple(cfg.extras.get("time_points", (0.5, 1.0)))
    rows, excluded = [], 0
    for r, res in _map_replicas(cfg, "variance"):
        if res is None:
            excluded += 1
        else:
            rows.append([r] + res)
    cols = ("replica",) + tuple(f"value_t{t:g}" for t in t_marks)

    beta = spec.beta
    k_beta = spectral_variance_constant(beta)
    data = np.asarray([row[1:] for row in rows])
    agg = {"spectral_constant": k_beta}
    for j, t in enumerate(t_marks):
        var = float(np.var(data[:, j], ddof=1))
        oracle = k_beta * t ** (3 - beta) / (3 - beta)
        lo, hi = _variance_ci(var, len(data))
        agg[f"var_t{t:g}"] = var
        agg[f"var_ci_t{t:g}"] = [lo, hi]
        agg[f"oracle_t{t:g}"] = oracle
        agg[f"rel_err_t{t:g}"] = (var - oracle) / oracle
    return rows, cols, agg, excluded


def _prepare_increment(cfg: ExperimentConfig) -> dict:
    grid = cfg.noise_grid()
    return {
        "model": NoiseModel(cfg.covariance_spec(), grid, cfg.num_modes),
        "eq": cfg.equation_spec(),
        "solver_cfg": cfg.solver_config(),
        "pts": cfg.eval_points(),
    }


def _replica_increment(ctx: dict, cfg: ExperimentConfig, r: int):
    path = ctx["model"].sample(derive_seed(cfg.seed, r))
    try:
        return solve_mild(ctx["eq"], path=path, config=ctx["solver_cfg"],
                          eval_points=ctx["pts"], t0=cfg.t0)
    except BlowUpError:
        return None


def _run_increment_exponent(cfg: ExperimentConfig) -> tuple[list, tuple, dict, int]:
    grid = cfg.noise_grid()
    min_scale = float(cfg.extras.get("min_scale", 2.0 * grid.spacing))
    p = float(cfg.extras.get("p_moment", 2.0))

    fields, excluded = [], 0
    for _, res in _map_replicas(cfg, "increment"):
        if res is None:
            excluded += 1
        else:
            fields.append(res)
    est = fit_increment_exponent(fields, "space", p, t0=cfg.t0, min_scale=min_scale)
    est4 = fit_increment_exponent(fields, "space", 2 * p, t0=cfg.t0, min_scale=min_scale)
    rows = [[float(s), float(v)] for s, v in est.sample_points]
    agg = {
        "rho_hat": est.exponent,
        "r_squared": est.r_squared,
        "p": p,
        "rho_hat_2p": est4.exponent,
        "min_scale": min_scale,
        "replicas_used": len(fields),
    }
    return rows, ("scale", f"moment_p{p:g}"), agg, excluded


def _prepare_wz(cfg: ExperimentConfig) -> dict:
    grid = cfg.noise_grid()
    return {"model": NoiseModel(cfg.covariance_spec(), grid, cfg.num_modes), "grid": grid}


def _replica_wz(ctx: dict, cfg: ExperimentConfig, r: int):
    grid = ctx["grid"]
    path = ctx["model"].sample(derive_seed(cfg.seed, r))
    out = []
    for n in cfg.n_levels:
        wn = build_smoothed(path, n)
        norm = ht_norm(wn)
        included = localization_indicator(path, n, grid.T, cfg.alpha)
        slice_sup = max(
            slice_ht_norm(wn, (i + 0.5) * grid.T / (1 << n)) for i in range(1 << n)
        )
        cell = grid.T / (1 << n)
        one_cell = ht_norm(wn, interval=(cell, 2 * cell))
        out.append([n, norm, int(included), slice_sup, one_cell])
    return out


def _run_wongzakai_growth(cfg: ExperimentConfig) -> tuple[list, tuple, dict, int]:
    rows = []
    for r, res in _map_replicas(cfg, "wongzakai"):
        for entry in res:
            rows.append([r] + entry)
    cols = ("replica", "n", "ht_norm", "localized", "slice_sup", "one_cell_norm")

    agg = {}
    arr = np.asarray(rows, dtype=float)
    for n in cfg.n_levels:
        sel = arr[arr[:, 1] == n]
        scale = math.sqrt(n) * 2.0 ** (n / 2.0)
        l2 = float(np.sqrt(np.mean(sel[:, 2] ** 2)))
        agg[f"l2_norm_n{n}"] = l2
        agg[f"growth_ratio_n{n}"] = l2 / scale
        loc = sel[sel[:, 3] == 1]
        if len(loc):
            agg[f"loc_slice_ratio_n{n}"] = float(np.max(loc[:, 4])) / (n ** 1.5 * 2 ** (n / 2.0))
            agg[f"loc_cell_ratio_n{n}"] = float(np.max(loc[:, 5])) / n ** 1.5
    ratios = [agg[f"growth_ratio_n{n}"] for n in cfg.n_levels]
    agg["growth_ratio_spread"] = max(ratios) / min(ratios)
    return rows, cols, agg, 0


def _prepare_loc(cfg: ExperimentConfig) -> dict:
    grid = cfg.noise_grid()
    return {"model": NoiseModel(cfg.covariance_spec(), grid, cfg.num_modes), "grid": grid}


def _replica_loc(ctx: dict, cfg: ExperimentConfig, r: int):
    path = ctx["model"].sample(derive_seed(cfg.seed, r))
    return [int(localization_indicator(path, n, ctx["grid"].T, cfg.alpha))
            for n in cfg.n_levels]


def _run_localization_prob(cfg: ExperimentConfig) -> tuple[list, tuple, dict, int]:
    grid = cfg.noise_grid()
    rows = [[r] + res for r, res in _map_replicas(cfg, "localization")]
    cols = ("replica",) + tuple(f"indicator_n{n}" for n in cfg.n_levels)
    arr = np.asarray(rows)
    agg = {}
    for j, n in enumerate(cfg.n_levels):
        k = int(arr[:, 1 + j].sum())
        lo, hi = wilson_interval(k, len(arr))
        closed = localization_probability(n, grid.T, grid.T, cfg.alpha)
        agg[f"p_hat_n{n}"] = k / len(arr)
        agg[f"wilson_n{n}"] = [lo, hi]
        agg[f"p_closed_n{n}"] = closed
        agg[f"closed_in_wilson_n{n}"] = bool(lo <= closed <= hi)
    comp = [1.0 - agg[f"p_closed_n{n}"] for n in cfg.n_levels]
    agg["complement_strictly_decreasing"] = bool(
        all(a > b for a, b in zip(comp, comp[1:]))
    )
    return rows, cols, agg, 0


def _prepare_support(cfg: ExperimentConfig) -> dict:
    grid = cfg.noise_grid()
    sigma = _parse_coeff(cfg.equation.get("B") or cfg.equation.get("A"))
    drift = _parse_coeff(cfg.equation.get("b"))
    return {
        "model": NoiseModel(cfg.covariance_spec(), grid, cfg.num_modes),
        "eq_u": EquationSpec(variant="reference", B=sigma, b=drift),
        "eq_phi": EquationSpec(variant="full", B=sigma, b=drift),
        "solver_cfg": cfg.solver_config(),
        "pts": cfg.eval_points(),
    }


def _replica_support(ctx: dict, cfg: ExperimentConfig, r: int):
    path = ctx["model"].sample(derive_seed(cfg.seed, r))
    try:
        u = solve_mild(ctx["eq_u"], path=path, config=ctx["solver_cfg"],
                       eval_points=ctx["pts"], t0=cfg.t0)
        out = []
        for n in cfg.n_levels:
            wn = build_smoothed(path, n)
            phi = solve_mild(ctx["eq_phi"], path=path, wn=wn, config=ctx["solver_cfg"],
                             eval_points=ctx["pts"], t0=cfg.t0)
            out.append([n, holder_distance(phi, u, cfg.rho, t0=cfg.t0)])
        return out
    except BlowUpError:
        return None


def _run_support_probe(cfg: ExperimentConfig) -> tuple[list, tuple, dict, int]:
    rows, excluded = [], 0
    for r, res in _map_replicas(cfg, "support"):
        if res is None:
            excluded += 1
        else:
            for entry in res:
                rows.append([r] + entry)
    cols = ("replica", "n", "holder_distance")

    arr = np.asarray(rows, dtype=float)
    agg = {"rho": cfg.rho, "t0": cfg.t0}
    medians = {}
    for n in cfg.n_levels:
        d = arr[arr[:, 1] == n][:, 2]
        medians[n] = float(np.median(d))
        agg[f"median_n{n}"] = medians[n]
        agg[f"mean_n{n}"] = float(np.mean(d))
    lam = cfg.lam if cfg.lam is not None else medians[cfg.n_levels[0]]
    agg["lambda"] = lam
    for n in cfg.n_levels:
        d = arr[arr[:, 1] == n][:, 2]
        p, (lo, hi) = estimate_exceedance(d, lam)
        agg[f"exceedance_n{n}"] = p
        agg[f"exceedance_wilson_n{n}"] = [lo, hi]
    meds = [medians[n] for n in cfg.n_levels]
    agg["medians_strictly_decreasing"] = bool(all(a > b for a, b in zip(meds, meds[1:])))
    exc = [agg[f"exceedance_n{n}"] for n in cfg.n_levels]
    agg["exceedance_nonincreasing"] = bool(all(a >= b for a, b in zip(exc, exc[1:])))
    return rows, cols, agg, excluded


def _run_hypotheses(cfg: ExperimentConfig) -> tuple[list, tuple, dict, int]:
    rows = []
    agg = {}
    for beta in cfg.betas:
        spec = CovarianceSpec(kind="riesz", beta=float(beta), reg_radius=1e-7,
                              horizon=float(cfg.grid.get("T", 1.0)))
        nu = fit_small_ball_nu(spec)
        gamma = fit_h1_gamma(spec)
        gamma_p = fit_h1_gamma_prime(spec)
        rho1, rho2 = fit_sphere_pair_exponents(spec)
        rows.append([beta, nu.exponent, gamma.exponent, gamma_p.exponent,
                     rho1.exponent, rho2.exponent])
        agg[f"nu_target_beta{beta:g}"] = min(2.0 - beta, 1.0)
        agg[f"nu_hat_beta{beta:g}"] = nu.exponent
        agg[f"gamma_hat_beta{beta:g}"] = gamma.exponent
        agg[f"gamma_prime_hat_beta{beta:g}"] = gamma_p.exponent
        agg[f"rho1_hat_beta{beta:g}"] = rho1.exponent
        agg[f"rho2_hat_beta{beta:g}"] = rho2.exponent
    return rows, ("beta", "nu_hat", "gamma_hat", "gamma_prime_hat", "rho1_hat", "rho2_hat"), agg, 0


def _random_registry_equation(rng: np.random.Generator) -> EquationSpec:
    def pick():
        kind = rng.choice(["const", "affine", "sin"])
        if kind == "const":
            return coeff_const(float(rng.uniform(-1, 1)))
        if kind == "affine":
            return coeff_affine(float(rng.uniform(-1, 1)), float(rng.uniform(-0.8, 0.8)))
        return coeff_sin(float(rng.uniform(-1, 1)), float(rng.uniform(-0.8, 0.8)),
                         float(rng.uniform(0.5, 2.0)))

    return EquationSpec(variant="full", A=pick(), B=pick(), D=pick(), b=pick())


def _run_picard_check(cfg: ExperimentConfig) -> tuple[list, tuple, dict, int]:
    grid = cfg.noise_grid()
    spec = cfg.covariance_spec()
    model = NoiseModel(spec, grid, cfg.num_modes)
    n_eq = int(cfg.extras.get("picard_equations", 5))
    rng = np.random.default_rng(cfg.seed)
    solver_cfg = SolverConfig(sphere_order=cfg.sphere_order, picard_tol=1e-9,
                              picard_max_iter=grid.num_steps + 1)
    n_wn = cfg.n_levels[0] if cfg.n_levels else 2

    rows = []
    for i in range(n_eq):
        eq = _random_registry_equation(rng)
        path = model.sample(derive_seed(cfg.seed, i))
        wn = build_smoothed(path, n_wn)
        h = ControlH(
            mode_coefficients=rng.normal(0.0, 0.5, (cfg.num_modes, grid.num_steps)),
            T=grid.T,
        )
        explicit = solve_mild(eq, path=path, wn=wn, h=h, config=solver_cfg)
        picard, iters, delta = picard_solve(eq, path=path, wn=wn, h=h, config=solver_cfg)
        sup = float(np.max(np.abs(explicit.values - picard.values)))
        rows.append([i, sup, iters, delta])
    arr = np.asarray(rows, dtype=float)
    agg = {
        "max_sup_diff": float(arr[:, 1].max()),
        "max_iterations": int(arr[:, 2].max()),
        "equations": n_eq,
    }
    return rows, ("equation", "sup_diff", "iterations", "final_delta"), agg, 0


_RUNNERS = {
    "variance-oracle": _run_variance_oracle,
    "increment-exponent": _run_increment_exponent,
    "wongzakai-growth": _run_wongzakai_growth,
    "localization-prob": _run_localization_prob,
    "support-probe": _run_support_probe,
    "hypotheses": _run_hypotheses,
    "picard-check": _run_picard_check,
}

_PREPARES = {
    "variance": _prepare_variance,
    "increment": _prepare_increment,
    "wongzakai": _prepare_wz,
    "localization": _prepare_loc,
    "support": _prepare_support,
}

_REPLICA_FNS = {
    "variance": _replica_variance,
    "increment": _replica_increment,
    "wongzakai": _replica_wz,
    "localization": _replica_loc,
    "support": _replica_support,
}


def run(cfg: ExperimentConfig) -> RunRecord:
    """Execute the configured experiment and (if output_dir is set) persist it."""
    start = time.perf_counter()
    rows, cols, agg, excluded = _RUNNERS[cfg.experiment](cfg)
    record = RunRecord(
        config=cfg.as_dict(),
        rows=rows,
        columns=cols,
        aggregates=agg,
        excluded=excluded,
        wall_time=time.perf_counter() - start,
    )
    if cfg.output_dir is not None:
        emit_report(record, Path(cfg.output_dir))
    return record


def _csv_bytes(record: RunRecord) -> bytes:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(record.columns)
    for row in record.rows:
        w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue().encode()


def emit_report(record: RunRecord, out_dir: Path) -> dict:
    """Write config.json, results.csv and record.json; returns the paths.

    results.csv and config.json are byte-reproducible for a fixed
    (config, seed, version); record.json additionally carries wall_time.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "config": out_dir / "config.json",
            "csv": out_dir / "results.csv",
            "record": out_dir / "record.json",
        }
        paths["config"].write_text(json.dumps(record.config, indent=1, sort_keys=True))
        paths["csv"].write_bytes(_csv_bytes(record))
        payload = {
            "config": record.config,
            "columns": list(record.columns),
            "aggregates": record.aggregates,
            "excluded": record.excluded,
            "rows": record.rows,
            "version": record.version,
            "wall_time": record.wall_time,
        }
        paths["record"].write_text(json.dumps(payload, indent=1, sort_keys=True))
    except OSError as exc:
        raise ConfigError([f"output_dir {out_dir} is not writable: {exc}"]) from exc
    return paths


def load_record(out_dir) -> RunRecord:
    payload = json.loads((Path(out_dir) / "record.json").read_text())
    return RunRecord(
        config=payload["config"],
        rows=payload["rows"],
        columns=tuple(payload["columns"]),
        aggregates=payload["aggregates"],
        excluded=payload["excluded"],
        wall_time=payload["wall_time"],
        version=payload["version"],
    )
