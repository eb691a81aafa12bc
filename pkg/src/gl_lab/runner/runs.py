"""Experiment dispatch: one function per subcommand, each returning a
RunResult with summary, CSV products, and pass/fail verdicts."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .. import dgff, experiments as ex, gibbs, hswalk
from ..harmonic import Beta, BondWeights, beurling_experiment, greens_function, half_line_obstacle, harmonic_extend
from ..langevin import default_dt
from ..lattice import LatticeDomain
from ..rngutil import EXPERIMENT, rng_for
from ..testfuncs import sine_product
from .config import (
    BeurlingConfig,
    BlConfig,
    CltConfig,
    CouplingConfig,
    DgffConfig,
    EntropyConfig,
    GibbsConfig,
    HsConfig,
    MeanHarmConfig,
    SampleConfig,
)
from .manifest import RunResult, Stopwatch, rows_to_csv


def center_site(domain: LatticeDomain) -> tuple[int, int]:
    pts = domain.interior_sites
    centroid = pts.mean(axis=0)
    k = int(np.argmin(((pts - centroid) ** 2).sum(axis=1)))
    return (int(pts[k, 0]), int(pts[k, 1]))


def _field_rows(domain: LatticeDomain, samples: np.ndarray, limit: int | None = None):
    rows = []
    take = samples if limit is None else samples[:limit]
    for s, vals in enumerate(take):
        for k, (i, j) in enumerate(domain.interior_sites):
            rows.append((s, int(i), int(j), float(vals[k])))
    return rows


def _rng_info(cfg, paths):
    return {
        "master_seed": cfg.seed,
        "scheme": "numpy SeedSequence(entropy=seed, spawn_key=path); replica k is a pure function of (seed, path, k)",
        "paths": paths,
    }


def run_sample(cfg: SampleConfig) -> RunResult:
    from ..langevin import sample_stationary_fields

    domain = cfg.domain.build()
    pot = cfg.potential_obj()
    boundary = cfg.boundary.values(domain)
    dt = cfg.dt if cfg.dt is not None else default_dt(pot)
    R = domain.diameter
    thin = cfg.thin_steps if cfg.thin_steps is not None else 2 * R * R
    with Stopwatch() as sw:
        fields = sample_stationary_fields(
            domain, pot, boundary,
            n_samples=cfg.n_samples, thin_steps=thin,
            burn_time=cfg.burn_multiplier * R * R, dt=dt,
            seed=cfg.seed, groups=min(4, cfg.n_samples), chains_per_group=1,
            workers=cfg.threads,
        )
    finite = bool(np.isfinite(fields).all())
    c = center_site(domain)
    ci = domain.index_of(c)
    summary = {
        "n_samples": len(fields),
        "center_site": c,
        "center_mean": float(fields[:, ci].mean()),
        "center_variance": float(fields[:, ci].var(ddof=1)) if len(fields) > 1 else 0.0,
        "dt": dt,
        "thin_steps": thin,
        "rng": _rng_info(cfg, [["CHAIN", "group"]]),
    }
    res = RunResult(
        subcommand="sample",
        config=cfg.model_dump(),
        summary=summary,
        tables={"samples.csv": rows_to_csv(["sample", "i", "j", "value"], _field_rows(domain, fields))},
        verdicts={"finite": finite},
    )
    res.wall_seconds = sw.seconds
    return res


def run_dgff(cfg: DgffConfig) -> RunResult:
    domain = cfg.domain.build()
    boundary = cfg.boundary.values(domain)
    with Stopwatch() as sw:
        sampler = dgff.build_sampler(domain, BondWeights.uniform(domain), boundary)
        draws = sampler.sample_many(cfg.n_samples, rng_for(cfg.seed, EXPERIMENT, 0))
        table = greens_function(domain, BondWeights.uniform(domain))
    c = center_site(domain)
    ci = domain.index_of(c)
    n = cfg.n_samples
    g_cc = table.matrix[ci, ci]
    var_emp = float(draws[:, ci].var(ddof=1))
    var_se = g_cc * math.sqrt(2.0 / (n - 1))
    center_ok = abs(var_emp - g_cc) <= 5.0 * var_se

    rng = rng_for(cfg.seed, EXPERIMENT, 1)
    pair_rows = []
    pairs_ok = True
    centered = draws - sampler.boundary_mean
    for _ in range(cfg.n_cov_pairs):
        a, b = rng.integers(0, domain.n_interior, size=2)
        emp = float((centered[:, a] * centered[:, b]).mean())
        th = table.matrix[a, b]
        se = math.sqrt((table.matrix[a, a] * table.matrix[b, b] + th * th) / n)
        ok = abs(emp - th) <= 5.0 * se
        pairs_ok &= ok
        pair_rows.append((int(a), int(b), emp, th, se, int(ok)))

    summary = {
        "n_samples": n,
        "center_site": c,
        "center_variance": var_emp,
        "greens_value": float(g_cc),
        "variance_stderr": var_se,
        "pairs_within_5se": pairs_ok,
        "rng": _rng_info(cfg, [["EXPERIMENT", 0], ["EXPERIMENT", 1]]),
    }
    res = RunResult(
        subcommand="dgff",
        config=cfg.model_dump(),
        summary=summary,
        tables={
            "samples.csv": rows_to_csv(["sample", "i", "j", "value"], _field_rows(domain, draws, limit=16)),
            "cov_pairs.csv": rows_to_csv(["site_a", "site_b", "empirical", "greens", "stderr", "ok"], pair_rows),
        },
        verdicts={"center_variance_within_5se": bool(center_ok), "cov_pairs_within_5se": bool(pairs_ok)},
    )
    res.wall_seconds = sw.seconds
    return res


def run_hs(cfg: HsConfig) -> RunResult:
    from ..errors import DomainError

    domain = cfg.domain.build()
    pot = cfg.potential_obj()
    boundary = cfg.boundary.values(domain)
    x = tuple(cfg.x) if cfg.x else center_site(domain)
    y = tuple(cfg.y) if cfg.y else x
    if not domain.contains(x):
        raise DomainError(f"walk start {x} is not an interior site of the domain")
    if not (domain.contains(y) or domain.is_boundary(y)):
        raise DomainError(f"occupation target {y} lies outside the domain graph")
    verdicts = {}
    with Stopwatch() as sw:
        if cfg.mode == "cov":
            envs = hswalk.harvest_environments(
                domain, pot, boundary, cfg.traj, cfg.seed,
                dt=cfg.dt, burn_time=cfg.burn_multiplier * domain.diameter**2,
            )
            est = hswalk.estimate_covariance(envs, x, y, max(1, cfg.walks // cfg.traj), cfg.seed)
            rows = [(k, v) for k, v in enumerate(est.per_batch)]
            table = {"per_batch.csv": rows_to_csv(["batch", "mean_occupation"], rows)}
            summary = {
                "mode": "cov", "x": x, "y": y,
                "estimate": est.value, "stderr": est.stderr,
                "walks": est.walks, "flagged": est.flagged,
            }
            verdicts["flagged_fraction_ok"] = est.flagged <= hswalk.MAX_FLAGGED_FRACTION * est.walks
            if pot.name == "quadratic":
                g = greens_function(domain, BondWeights.uniform(domain)).entry(x, y)
                summary["greens_value"] = g
                verdicts["matches_greens_within_4se"] = abs(est.value - g) <= 4.0 * max(est.stderr, 1e-12)
        else:
            est = hswalk.estimate_mean(
                domain, pot, boundary, x, cfg.r_nodes, cfg.walks, cfg.seed,
                n_traj=cfg.traj, dt=cfg.dt,
                burn_time=cfg.burn_multiplier * domain.diameter**2,
            )
            rows = list(zip(range(len(est.nodes)), est.nodes, est.node_means, est.node_stderrs))
            table = {"per_node.csv": rows_to_csv(["node", "r", "mean", "stderr"], rows)}
            summary = {
                "mode": "mean", "x": x,
                "estimate": est.value, "stderr": est.stderr, "flagged": est.flagged,
            }
            verdicts["flagged_fraction_ok"] = True
            if pot.name == "quadratic":
                hx = harmonic_extend(domain, boundary, BondWeights.uniform(domain))[domain.index_of(x)]
                summary["harmonic_extension_value"] = float(hx)
                verdicts["matches_harmonic_within_4se"] = abs(est.value - hx) <= 4.0 * max(est.stderr, 1e-12)
    res = RunResult(
        subcommand="hs", config=cfg.model_dump(), summary=summary, tables=table, verdicts=verdicts
    )
    res.wall_seconds = sw.seconds
    return res


def run_gibbs(cfg: GibbsConfig) -> RunResult:
    pot = cfg.potential_obj()
    with Stopwatch() as sw:
        if pot.a_lower == pot.a_upper:
            est = gibbs.estimate_a_u(cfg.n, pot, cfg.u)
            samples = None
        else:
            samples = gibbs.run_gradient_samples(
                cfg.n, pot, cfg.u, cfg.samples,
                burn_time=cfg.burn_multiplier * cfg.n * cfg.n,
                thin_steps=cfg.thin_steps, dt=cfg.dt, seed=cfg.seed,
            )
            est = gibbs.estimate_a_u_from_samples(samples, pot, cfg.u)
    summary = {"tilt_estimate": dataclasses.asdict(est)}
    verdicts = {
        "a_in_range": bool(
            pot.a_lower - 1e-9 <= est.a1 <= pot.a_upper + 1e-9
            and pot.a_lower - 1e-9 <= est.a2 <= pot.a_upper + 1e-9
        )
    }
    if tuple(cfg.u) == (0.0, 0.0) and est.n_samples > 1:
        verdicts["isotropy_within_3se"] = bool(abs(est.a1 - est.a2) <= 3.0 * est.diff_stderr)
    tables = {}
    if samples is not None:
        vh = np.asarray(pot.ddv(samples[:, 0])).reshape(len(samples), -1).mean(axis=1)
        vv = np.asarray(pot.ddv(samples[:, 1])).reshape(len(samples), -1).mean(axis=1)
        tables["samples.csv"] = rows_to_csv(
            ["sample", "a1_spatial_mean", "a2_spatial_mean"],
            [(k, float(vh[k]), float(vv[k])) for k in range(len(samples))],
        )
        if cfg.with_reflection:
            rep = gibbs.reflection_test(samples, cfg.reflection_axis, potential=pot)
            ctrl = gibbs.reflection_test(samples, cfg.reflection_axis, potential=pot, shift=0.1)
            summary["reflection"] = dataclasses.asdict(rep)
            summary["reflection_shifted_control"] = dataclasses.asdict(ctrl)
            verdicts["reflection_p_ge_0.01"] = rep.p_value >= 0.01
            verdicts["shifted_control_p_lt_0.001"] = ctrl.p_value < 0.001
    res = RunResult(
        subcommand="gibbs", config=cfg.model_dump(), summary=summary, tables=tables, verdicts=verdicts
    )
    res.wall_seconds = sw.seconds
    return res


def _clt_weights(cfg: CltConfig, pot) -> tuple[float, float]:
    if cfg.a is not None:
        return (float(cfg.a[0]), float(cfg.a[1]))
    if pot.a_lower == pot.a_upper:
        c = float(np.asarray(pot.ddv(0.0)))
        return (c, c)
    est = gibbs.estimate_a_u(
        cfg.a_torus_side, pot, cfg.u, n_samples=cfg.a_samples,
        burn_time=2.0 * cfg.a_torus_side**2, dt=pot.max_stable_dt, seed=cfg.seed,
    )
    return (est.a1, est.a2)


def run_clt(cfg: CltConfig) -> RunResult:
    from ..lattice import build_rectangle

    domain = build_rectangle(cfg.n, cfg.n)
    pot = cfg.potential_obj()
    boundary = cfg.boundary.values(domain)
    tfs = [sine_product(kx, ky) for kx, ky in cfg.functions]
    with Stopwatch() as sw:
        a = _clt_weights(cfg, pot)
        tilt_bd = cfg.u[0] * domain.boundary_sites[:, 0] + cfg.u[1] * domain.boundary_sites[:, 1]
        if pot.name == "quadratic":
            source = ex.ExactGaussianSource(domain, boundary=boundary + tilt_bd)
        else:
            source = ex.LangevinSource(
                domain, pot, boundary + tilt_bd,
                dt=cfg.dt if cfg.dt is not None else pot.max_stable_dt,
                burn_time=cfg.burn_multiplier * domain.diameter**2,
                thin_steps=cfg.thin_steps,
                groups=cfg.groups, chains_per_group=cfg.chains_per_group,
                workers=cfg.threads,
            )
        mean_check = boundary if np.any(boundary) else None
        rep = ex.clt_experiment(
            domain, source, tfs, a=a, u=cfg.u, n_samples=cfg.n_samples,
            seed=cfg.seed, keep_samples=True, mean_check_boundary=mean_check,
        )
    rows = []
    for name, xis in rep.xi_samples.items():
        rows.extend((k, name, float(v)) for k, v in enumerate(xis))
    f0 = rep.functions[0]
    verdicts = {
        "decorrelation_ok": rep.decorrelation_ok,
        "skewness_ok": abs(f0.skewness) <= cfg.skew_tol,
        "kurtosis_ok": abs(f0.excess_kurtosis) <= cfg.kurt_tol,
    }
    if len(rep.functions) >= 2:
        verdicts["cross_ratio_ok"] = rep.cross_ratio_spread <= cfg.ratio_tol
    summary = {
        "a": a,
        "functions": [dataclasses.asdict(f) for f in rep.functions],
        "fitted_constant": rep.fitted_constant,
        "cross_ratio_spread": rep.cross_ratio_spread,
        "mean_prediction": rep.mean_prediction,
    }
    res = RunResult(
        subcommand="clt", config=cfg.model_dump(), summary=summary,
        tables={"xi_samples.csv": rows_to_csv(["sample", "function", "xi"], rows)},
        verdicts=verdicts,
    )
    res.wall_seconds = sw.seconds
    return res


def run_coupling(cfg: CouplingConfig) -> RunResult:
    domain = cfg.domain.build()
    pot = cfg.potential_obj()
    psi = cfg.boundary.values(domain)
    psit = cfg.boundary_tilde.values(domain)
    side = int(domain.interior_sites[:, 0].max() - domain.interior_sites[:, 0].min()) + 1
    r = cfg.r_fraction * side
    with Stopwatch() as sw:
        rep = ex.coupling_experiment(
            domain, pot, psi, psit, r=r, eps_factor=cfg.eps_factor,
            n_snapshots=cfg.snapshots, thin_steps=cfg.thin_steps,
            burn_time=cfg.burn_multiplier * domain.diameter**2,
            dt=cfg.dt, seed=cfg.seed,
        )
    verdicts = {}
    if rep.osc == 0.0:
        verdicts["identical_boundaries_zero_deviation"] = rep.exceedance_fraction == 0.0
    summary = {
        "r": rep.r, "eps": rep.eps, "osc": rep.osc,
        "exceedance_fraction": rep.exceedance_fraction,
        "mean_deviation": rep.mean_deviation,
        "max_deviation": max(rep.deviations),
        "burn_time": rep.burn_time,
    }
    res = RunResult(
        subcommand="coupling", config=cfg.model_dump(), summary=summary,
        tables={"deviations.csv": rows_to_csv(["snapshot", "max_deviation"], list(enumerate(rep.deviations)))},
        verdicts=verdicts,
    )
    res.wall_seconds = sw.seconds
    return res


def run_mean_harm(cfg: MeanHarmConfig) -> RunResult:
    domain = cfg.domain.build()
    pot = cfg.potential_obj()
    psi = cfg.boundary.values(domain)
    tilt_bd = cfg.u[0] * domain.boundary_sites[:, 0] + cfg.u[1] * domain.boundary_sites[:, 1]
    side = int(domain.interior_sites[:, 0].max() - domain.interior_sites[:, 0].min()) + 1
    with Stopwatch() as sw:
        if pot.name == "quadratic":
            source = ex.ExactGaussianSource(domain, boundary=psi + tilt_bd)
        else:
            source = ex.LangevinSource(
                domain, pot, psi + tilt_bd,
                dt=cfg.dt if cfg.dt is not None else pot.max_stable_dt,
                burn_time=cfg.burn_multiplier * domain.diameter**2,
                thin_steps=cfg.thin_steps, groups=cfg.groups,
                chains_per_group=cfg.chains_per_group, workers=cfg.threads,
            )
        samples = source.draw(cfg.n_samples, cfg.seed)
        rep = ex.mean_harmonic_experiment(
            domain, samples, Beta(1.0, 1.0), r=cfg.r_fraction * side, n_segments=cfg.segments
        )
    summary = dataclasses.asdict(rep)
    summary["boundary_in_class"] = ex.in_boundary_class(domain, psi + tilt_bd, cfg.u)
    res = RunResult(
        subcommand="mean-harm", config=cfg.model_dump(), summary=summary,
        tables={
            "segments.csv": rows_to_csv(
                ["segment", "max_deviation"], list(enumerate(rep.segment_deviations))
            )
        },
        verdicts={
            "deviation_within_3x_budget": rep.max_deviation <= 3.0 * rep.error_budget,
        },
    )
    res.wall_seconds = sw.seconds
    return res


def run_entropy(cfg: EntropyConfig) -> RunResult:
    domain = cfg.domain.build()
    pot = cfg.potential_obj()
    with Stopwatch() as sw:
        rep = ex.entropy_estimate(
            domain, pot, cfg.boundary.values(domain), cfg.boundary_tilde.values(domain),
            n_samples=cfg.n_samples, thin_steps=cfg.thin_steps,
            burn_time=cfg.burn_multiplier * domain.diameter**2,
            dt=cfg.dt, seed=cfg.seed,
        )
    summary = dataclasses.asdict(rep)
    noise = 3.0 * (rep.main_stderr + rep.remainder_stderr) + rep.zero_tolerance
    res = RunResult(
        subcommand="entropy", config=cfg.model_dump(), summary=summary, tables={},
        verdicts={"total_nonnegative_within_noise": rep.total_bound >= -noise},
    )
    res.wall_seconds = sw.seconds
    return res


def run_bl(cfg: BlConfig) -> RunResult:
    domain = cfg.domain.build()
    pot = cfg.potential_obj()
    boundary = cfg.boundary.values(domain)
    with Stopwatch() as sw:
        if pot.name == "quadratic":
            source = ex.ExactGaussianSource(domain, boundary=boundary)
        else:
            source = ex.LangevinSource(
                domain, pot, boundary,
                dt=cfg.dt if cfg.dt is not None else pot.max_stable_dt,
                burn_time=cfg.burn_multiplier * domain.diameter**2,
                thin_steps=cfg.thin_steps, groups=cfg.groups,
                chains_per_group=cfg.chains_per_group, workers=cfg.threads,
            )
        samples = source.draw(cfg.n_samples, cfg.seed)
        rng = rng_for(cfg.seed, EXPERIMENT, 9)
        nus = [rng.standard_normal(domain.n_interior) for _ in range(cfg.n_vectors)]
        rep = ex.brascamp_lieb_check(domain, samples, nus, pot.a_lower)
    rows = [
        (k, c.var_model, c.var_stderr, c.gaussian_bound, int(c.verdict))
        for k, c in enumerate(rep.cases)
    ]
    res = RunResult(
        subcommand="bl", config=cfg.model_dump(),
        summary={"n_samples": rep.n_samples, "cases": [dataclasses.asdict(c) for c in rep.cases]},
        tables={"cases.csv": rows_to_csv(["vector", "var_model", "stderr", "gaussian_bound", "ok"], rows)},
        verdicts={"variance_dominated": rep.all_pass},
    )
    res.wall_seconds = sw.seconds
    return res


def run_beurling(cfg: BeurlingConfig) -> RunResult:
    beta = Beta(cfg.beta[0], cfg.beta[1])
    x = (0, 0)
    rows = []
    reports = []
    with Stopwatch() as sw:
        for d in cfg.d_list:
            obstacle = half_line_obstacle(x, d, int(3 * cfg.r))
            rep = beurling_experiment(
                obstacle, x, cfg.r, beta, cfg.walks, cfg.seed, convention=cfg.convention
            )
            reports.append(rep)
            rows.append(
                (d, cfg.r, rep.p_hat, rep.stderr, "" if rep.exact is None else rep.exact)
            )
    p_hats = [r.p_hat for r in reports]
    verdicts = {}
    if len(p_hats) >= 2:
        verdicts["monotone_in_distance"] = all(a < b for a, b in zip(p_hats, p_hats[1:]))
    for rep in reports:
        if rep.exact is not None:
            verdicts.setdefault("exact_within_3se", True)
            if abs(rep.p_hat - rep.exact) > 3.0 * max(rep.stderr, 1e-9):
                verdicts["exact_within_3se"] = False
    summary = {
        "convention": cfg.convention,
        "reports": [dataclasses.asdict(r) for r in reports],
    }
    res = RunResult(
        subcommand="beurling", config=cfg.model_dump(), summary=summary,
        tables={"beurling.csv": rows_to_csv(["d", "r", "p_hat", "stderr", "exact"], rows)},
        verdicts=verdicts,
    )
    res.wall_seconds = sw.seconds
    return res


RUNNERS = {
    "sample": run_sample,
    "dgff": run_dgff,
    "hs": run_hs,
    "gibbs": run_gibbs,
    "clt": run_clt,
    "coupling": run_coupling,
    "mean-harm": run_mean_harm,
    "entropy": run_entropy,
    "bl": run_bl,
    "beurling": run_beurling,
}


def run(subcommand: str, cfg) -> RunResult:
    result = RUNNERS[subcommand](cfg)
    if cfg.out:
        result.write(cfg.out)
    return result
