"""Experiment command line: demo solve, iteration tables, spectra, smoother tables.

Verbs:

* ``demo``            manufacture boundary data from a known control, solve the
                      optimality system, write sampled solution grids as CSV
* ``minres-table``    preconditioned MINRES iteration counts and condition
                      estimates over an (alpha, h) grid
* ``spectrum``        full preconditioned spectra per alpha, with containment
                      verdicts against the three-interval bound
* ``smoothers``       condition numbers of the Gauss-Seidel and V-cycle block
                      approximations
* ``abstract-verify`` randomized verification of the operator-level spectral
                      bounds plus the concrete/abstract cross-checks

Flags may also be given in a flat key=value config file (``--config``);
explicit flags win.  Exit status is zero only if every requested solve
converged and every containment check passed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import abstract
from .assembly import assemble_hierarchy, evaluate_dg, evaluate_state, moments_dg
from .export import write_csv, write_residual_history_csv
from .kkt import (
    build_exact_preconditioner,
    build_kkt,
    forward_solve,
    kkt_blocks,
    measure_saddle_stability,
)
from .mesh import build_uniform_mesh
from .solvers import (
    MultigridConfig,
    build_approx_preconditioner,
    estimate_condition_cg_normal,
    estimate_condition_pcg,
    minres,
    multigrid_vcycle,
    symmetric_gauss_seidel,
)
from .spectral import DENSE_DIM_LIMIT, check_containment, containment_intervals, generalized_spectrum

FULL_ALPHA_GRID = tuple(10.0**-k for k in range(0, 11))


def demo_true_control(x, y):
    """The known control used to manufacture the demo observation data."""
    return 4.0 * x * (1.0 - x) + y


@dataclass
class ExperimentConfig:
    alpha_grid: tuple = (1e-6,)
    h_grid: tuple = (32,)  # cells per side, powers of two
    eps: float = 1e-12
    seed: int = 0
    precond: str = "approx"  # exact | approx
    variant: str = "boundary_obs"
    out_dir: str = "results"
    gs_sweeps: int = 2
    max_iter: int = 600
    instances: int = 50

    def validate(self) -> None:
        if any(a <= 0 for a in self.alpha_grid):
            raise ValueError("every alpha must be positive")
        for n in self.h_grid:
            if n < 1 or (n & (n - 1)) != 0:
                raise ValueError(f"cells per side must be a power of two, got {n}")
            if self.precond == "approx" and n % 8 != 0:
                raise ValueError("multigrid preconditioning needs grids divisible by the 8x8 coarse level")
        if self.precond not in ("exact", "approx"):
            raise ValueError(f"unknown preconditioner {self.precond!r}")


def _hierarchy_for(n: int):
    """Mesh hierarchy ending at n cells per side, coarsened down to 8x8."""
    if n >= 16 and n % 8 == 0:
        levels = int(np.log2(n // 8))
        mesh = build_uniform_mesh(8, levels)
    else:
        mesh = build_uniform_mesh(n, 0)
    return assemble_hierarchy(mesh)


def _preconditioner(config, kkt, levels, prolongations):
    if config.precond == "exact" or len(levels) == 1 and levels[0].grid.n_cells_per_side < 8:
        return build_exact_preconditioner(kkt.blocks, kkt.alpha)
    if config.variant != "boundary_obs":
        # the multigrid hierarchy is built for the boundary-observation blocks
        return build_exact_preconditioner(kkt.blocks, kkt.alpha)
    return build_approx_preconditioner(kkt, levels, prolongations, MultigridConfig(), config.gs_sweeps)


def _random_x0(config, n):
    return np.random.default_rng(config.seed).uniform(-1.0, 1.0, size=n)


def run_demo(config: ExperimentConfig) -> dict:
    """Solve the manufactured-data problem and write solution samples."""
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)
    n = config.h_grid[0]
    alpha = config.alpha_grid[0]
    levels, prolongations = _hierarchy_for(n)
    ops = levels[-1]
    blocks = kkt_blocks(ops, config.variant)

    f_true = _demo_control_dg(ops, blocks)
    u_true = forward_solve(blocks, f_true)
    obs_rhs = blocks.obs_mass @ u_true

    kkt = build_kkt(blocks, alpha, obs_rhs=obs_rhs, h=ops.grid.h)
    precond = _preconditioner(config, kkt, levels, prolongations)
    report = minres(kkt.matrix, precond, kkt.rhs, x0=_random_x0(config, kkt.n_total),
                    eps=config.eps, max_iter=config.max_iter)
    if not report.converged:
        raise RuntimeError(
            f"demo solve did not converge in {report.iterations} iterations "
            f"(last ratio {report.residual_history[-1]:.3e}, breakdown={report.breakdown})"
        )
    f_sol, u_sol, w_sol = kkt.split(report.solution)

    diff = u_sol - u_true
    misfit = float(
        np.sqrt((diff @ (blocks.obs_mass @ diff)) / (u_true @ (blocks.obs_mass @ u_true)))
    )

    grid = ops.grid
    verts = grid.vertices
    u_vals = evaluate_state(grid, ops.bfs_map, u_sol, verts)
    write_csv(os.path.join(config.out_dir, "state_u.csv"), ["x", "y", "value"],
              np.column_stack([verts, u_vals]).tolist())
    centers = verts[grid.cells[:, 0]] + 0.5 * grid.h
    for name, coeffs in (("control_f", f_sol), ("multiplier_w", w_sol)):
        vals = evaluate_dg(grid, ops.dg_map, coeffs, centers)
        write_csv(os.path.join(config.out_dir, f"{name}.csv"), ["x", "y", "value"],
                  np.column_stack([centers, vals]).tolist())

    # observed data: trace of the forward state, sampled along the boundary
    t = np.linspace(0.0, 1.0, 4 * n + 1)
    sides = [np.column_stack([t, np.zeros_like(t)]), np.column_stack([np.ones_like(t), t]),
             np.column_stack([1.0 - t, np.ones_like(t)]), np.column_stack([np.zeros_like(t), 1.0 - t])]
    bpts = np.vstack(sides)
    arclength = np.concatenate([t, 1.0 + t, 2.0 + t, 3.0 + t])
    d_vals = evaluate_state(grid, ops.bfs_map, u_true, bpts)
    write_csv(os.path.join(config.out_dir, "observation_d.csv"), ["s", "x", "y", "value"],
              np.column_stack([arclength, bpts, d_vals]).tolist())
    write_residual_history_csv(os.path.join(config.out_dir, "residual_history.csv"),
                               report.residual_history)
    return {"iterations": report.iterations, "misfit": misfit, "converged": True,
            "h": grid.h, "alpha": alpha}


@dataclass
class TableRow:
    alpha: float
    h: float
    iterations: int
    cond_estimate: float
    wall_time_ms: float
    converged: bool = True


def run_minres_table(config: ExperimentConfig) -> list:
    """Iteration counts and condition estimates over the (alpha, h) grid."""
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)
    rows: list[TableRow] = []
    for n in config.h_grid:
        levels, prolongations = _hierarchy_for(n)
        ops = levels[-1]
        blocks = kkt_blocks(ops, config.variant)
        obs_rhs = blocks.obs_mass @ forward_solve(blocks, _demo_control_dg(ops, blocks))
        for alpha in config.alpha_grid:
            kkt = build_kkt(blocks, alpha, obs_rhs=obs_rhs, h=ops.grid.h)
            precond = _preconditioner(config, kkt, levels, prolongations)
            start = time.perf_counter()
            report = minres(kkt.matrix, precond, kkt.rhs, x0=_random_x0(config, kkt.n_total),
                            eps=config.eps, max_iter=config.max_iter)
            elapsed_ms = 1e3 * (time.perf_counter() - start)
            cond = estimate_condition_cg_normal(kkt.matrix, precond, seed=config.seed)
            rows.append(TableRow(alpha, ops.grid.h, report.iterations, cond, elapsed_ms,
                                 report.converged))
    write_csv(
        os.path.join(config.out_dir, "minres_table.csv"),
        ["alpha", "h", "iterations", "cond_estimate", "wall_time_ms"],
        [[r.alpha, r.h, r.iterations, r.cond_estimate, r.wall_time_ms] for r in rows],
    )
    return rows


def _demo_control_dg(ops, blocks):
    import scipy.sparse.linalg as spla

    moments = moments_dg(ops.grid, ops.dg_map, demo_true_control)
    return spla.spsolve(blocks.mass_dg.tocsc(), moments)


def run_spectrum_sweep(config: ExperimentConfig) -> list:
    """Full exact-preconditioned spectra per alpha, with containment verdicts."""
    replace(config, precond="exact").validate()
    os.makedirs(config.out_dir, exist_ok=True)
    intervals = containment_intervals()
    summaries = []
    n = config.h_grid[0]
    levels, _ = _hierarchy_for(n)
    ops = levels[-1]
    blocks = kkt_blocks(ops, config.variant)
    for alpha in config.alpha_grid:
        kkt = build_kkt(blocks, alpha, h=ops.grid.h)
        if kkt.n_total > DENSE_DIM_LIMIT:
            raise ValueError(
                f"spectrum sweep needs a dense solve; {kkt.n_total} unknowns exceed {DENSE_DIM_LIMIT}"
            )
        precond = build_exact_preconditioner(blocks, alpha)
        report = generalized_spectrum(kkt, precond, mode="dense")
        verdict = check_containment(report, intervals)
        write_csv(
            os.path.join(config.out_dir, f"spectrum_{alpha:.0e}.csv"),
            ["index", "eigenvalue"],
            list(enumerate(report.eigenvalues)),
        )
        summaries.append(
            {
                "alpha": alpha,
                "h": ops.grid.h,
                "n_eigenvalues": int(report.eigenvalues.size),
                "min_abs": report.min_abs,
                "max_abs": report.max_abs,
                "kappa": report.kappa,
                "contained": bool(verdict.contained),
            }
        )
    write_csv(
        os.path.join(config.out_dir, "spectrum_summary.csv"),
        ["alpha", "h", "n_eigenvalues", "min_abs", "max_abs", "kappa", "contained"],
        [[s["alpha"], s["h"], s["n_eigenvalues"], s["min_abs"], s["max_abs"], s["kappa"],
          int(s["contained"])] for s in summaries],
    )
    return summaries


def run_smoother_tables(config: ExperimentConfig) -> dict:
    """Condition numbers of the block approximations over the grids."""
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)
    gs_rows = []
    mg_rows = []
    for n in config.h_grid:
        levels, prolongations = _hierarchy_for(n)
        ops = levels[-1]
        for sweeps in (1, 2, 3):
            smoother = symmetric_gauss_seidel(ops.mass_dg, sweeps=sweeps)
            kappa = estimate_condition_pcg(ops.mass_dg, smoother, seed=config.seed)
            gs_rows.append([sweeps, ops.grid.h, kappa])
        for alpha in config.alpha_grid:
            mats = [alpha * lv.regularity + lv.boundary_mass for lv in levels]
            ids = [lv.vertex_block_ids for lv in levels]
            cycle = multigrid_vcycle(mats, prolongations, MultigridConfig(), ids)
            kappa = estimate_condition_pcg(mats[-1], cycle, seed=config.seed, max_iter=300)
            mg_rows.append([alpha, ops.grid.h, kappa])
    write_csv(os.path.join(config.out_dir, "smoother_gs.csv"), ["sweeps", "h", "kappa"], gs_rows)
    write_csv(os.path.join(config.out_dir, "smoother_mg.csv"), ["alpha", "h", "kappa"], mg_rows)
    return {"gs": gs_rows, "mg": mg_rows}


def run_abstract_verify(config: ExperimentConfig) -> dict:
    """Operator-level verification: assumptions, stability, spectra, equality case."""
    os.makedirs(config.out_dir, exist_ok=True)
    intervals = containment_intervals()
    rng = np.random.default_rng(config.seed)
    result = {
        "q_roots": list(intervals.q_roots),
        "r_roots": list(intervals.r_roots),
        "kappa_bound": intervals.kappa_bound,
        "instances": [],
        "all_contained": True,
        "equality_max_error": 0.0,
    }

    from .spectral import SpectrumReport

    for k in range(config.instances):
        n_u = int(rng.integers(3, 41))
        n_w = n_u + int(rng.integers(0, 6))
        ker = int(rng.integers(0, min(3, n_u)))
        alpha = float(rng.choice([1.0, 1e-3, 1e-6, 1e-9]))
        triple = abstract.random_instance(int(rng.integers(0, 2**31)), (n_u, n_w), ker, alpha)
        assumptions = abstract.validate_assumptions(triple)
        eigs = abstract.preconditioned_spectrum(triple)
        report = SpectrumReport(alpha=alpha, h=None, eigenvalues=eigs, mode="dense")
        verdict = check_containment(report, intervals)
        entry = {
            "dims": [n_u, n_w],
            "ker_k_dim": ker,
            "alpha": alpha,
            "assumptions_ok": bool(assumptions.ok),
            "contained": bool(verdict.contained),
            "kappa": report.kappa,
        }
        if ker >= 1:
            result["equality_max_error"] = max(
                result["equality_max_error"], abs(report.kappa - intervals.kappa_bound)
            )
        result["all_contained"] &= verdict.contained and assumptions.ok
        result["instances"].append(entry)

    # concrete/abstract cross-check on a coarse grid
    levels, _ = _hierarchy_for(8)
    ops = levels[-1]
    blocks = kkt_blocks(ops, "boundary_obs")
    alpha = 1e-4
    kkt = build_kkt(blocks, alpha, h=ops.grid.h)
    concrete = measure_saddle_stability(kkt)
    triple = abstract.OperatorTriple(
        mass=blocks.mass_dg.toarray(), obs=blocks.obs_mass.toarray(),
        state=blocks.state.toarray(), alpha=alpha,
    )
    general = abstract.measure_stability(triple)
    result["cross_check"] = {
        "inf_sup": [concrete.inf_sup, general.inf_sup],
        "coercivity": [concrete.kernel_coercivity, general.kernel_coercivity],
        "agreement": max(
            abs(concrete.inf_sup - general.inf_sup),
            abs(concrete.kernel_coercivity - general.kernel_coercivity),
        ),
    }

    with open(os.path.join(config.out_dir, "abstract_report.json"), "w") as fh:
        json.dump(result, fh, indent=2)
    return result


def _read_config_file(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line: {raw.rstrip()}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    return values


def parse_h(token: str) -> int:
    """Accept '2^-4', '1/16', '0.0625' or a cell count like '16'."""
    token = token.strip()
    if "^" in token:
        base, exponent = token.split("^")
        h = float(base) ** float(exponent)
    elif "/" in token:
        num, den = token.split("/")
        h = float(num) / float(den)
    else:
        value = float(token)
        if value > 1.0:
            return int(round(value))
        h = value
    n = int(round(1.0 / h))
    return n


def _parse_list(text: str, parse_one):
    return tuple(parse_one(tok) for tok in text.split(",") if tok.strip())


def build_config(args) -> ExperimentConfig:
    values = {}
    if args.config:
        values.update(_read_config_file(args.config))
    for key in ("alpha", "h", "eps", "seed", "precond", "variant", "out", "instances"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    config = ExperimentConfig()
    if "alpha" in values:
        text = values["alpha"]
        config.alpha_grid = _parse_list(text, float) if isinstance(text, str) else tuple(text)
    if "h" in values:
        text = values["h"]
        config.h_grid = _parse_list(text, parse_h) if isinstance(text, str) else tuple(text)
    if "eps" in values:
        config.eps = float(values["eps"])
    if "seed" in values:
        config.seed = int(values["seed"])
    if "precond" in values:
        config.precond = str(values["precond"])
    if "variant" in values:
        config.variant = str(values["variant"])
    if "out" in values:
        config.out_dir = str(values["out"])
    if "instances" in values:
        config.instances = int(values["instances"])
    return config


def _add_common(parser):
    parser.add_argument("--config", help="flat key=value config file; flags override it")
    parser.add_argument("--alpha", help="comma-separated regularization weights")
    parser.add_argument("--h", help="comma-separated mesh sizes (2^-k, 1/n, or cell counts)")
    parser.add_argument("--eps", type=float, help="MINRES tolerance on the residual-norm ratio")
    parser.add_argument("--seed", type=int, help="seed for random initial guesses")
    parser.add_argument("--precond", choices=["exact", "approx"], help="preconditioner flavor")
    parser.add_argument("--variant", choices=["boundary_obs", "full_obs", "laplace_state"])
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--instances", type=int, help="random instances for abstract-verify")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kktfem", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("demo", "minres-table", "spectrum", "smoothers", "abstract-verify"):
        _add_common(sub.add_parser(verb))
    args = parser.parse_args(argv)
    config = build_config(args)

    try:
        if args.verb == "demo":
            outcome = run_demo(config)
            print(f"demo: h={outcome['h']:g} alpha={outcome['alpha']:g} "
                  f"iterations={outcome['iterations']} boundary misfit={outcome['misfit']:.3e}")
            return 0
        if args.verb == "minres-table":
            rows = run_minres_table(config)
            for row in rows:
                status = "" if row.converged else "  [NOT CONVERGED]"
                print(f"alpha={row.alpha:8.1e} h={row.h:g} iterations={row.iterations:4d} "
                      f"cond~{row.cond_estimate:.2f} ({row.wall_time_ms:.0f} ms){status}")
            return 0 if all(r.converged for r in rows) else 1
        if args.verb == "spectrum":
            summaries = run_spectrum_sweep(config)
            for s in summaries:
                print(f"alpha={s['alpha']:8.1e}: |lambda| in [{s['min_abs']:.4f}, {s['max_abs']:.4f}] "
                      f"kappa={s['kappa']:.4f} contained={s['contained']}")
            return 0 if all(s["contained"] for s in summaries) else 1
        if args.verb == "smoothers":
            tables = run_smoother_tables(config)
            for sweeps, h, kappa in tables["gs"]:
                print(f"gauss-seidel sweeps={sweeps} h={h:g}: kappa={kappa:.3f}")
            for alpha, h, kappa in tables["mg"]:
                print(f"v-cycle alpha={alpha:8.1e} h={h:g}: kappa={kappa:.3f}")
            return 0
        if args.verb == "abstract-verify":
            result = run_abstract_verify(config)
            print(f"computed condition bound r3/r2 = {result['kappa_bound']:.6f}")
            print(f"instances contained: {result['all_contained']} "
                  f"(equality-case kappa error {result['equality_max_error']:.2e})")
            print(f"concrete/abstract stability agreement: {result['cross_check']['agreement']:.2e}")
            return 0 if result["all_contained"] else 1
    except (ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
