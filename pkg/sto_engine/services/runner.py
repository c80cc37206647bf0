"""
Run orchestrator for the STO engine.
Coordinates the solver, the probes and the finite-N simulator for one
experiment, records the run in the ledger and writes every output file.
"""
import logging
import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from sto_engine import database
from sto_engine.config import build_model
from sto_engine.dynamics.fibered import dump_binary, dump_csv
from sto_engine.errors import (
    ConfigError,
    DomainError,
    NumericError,
    ParameterError,
    ProbeError,
    ReportError,
    StoError,
)
from sto_engine.services import finite_sim, reporter
from sto_engine.services.probes import ProbeContext, run_probe
from sto_engine.services.reporter import ProbeResult
from sto_engine.utils.io import write_csv

logger = logging.getLogger(__name__)

RESIDUAL_HEADER = ["iter", "weak_residual", "sup_residual", "mass_error_max"]
SWEEP_FACTOR = 2.0
AUTO_EPS_MULTIPLES = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5)

# Most specific class first.
EXIT_CODES = (
    (ConfigError, 2),
    (ProbeError, 4),
    (ReportError, 4),
    (NumericError, 3),
    (DomainError, 3),
    (ParameterError, 2),
    (StoError, 1),
)


def exit_code_for(exc):
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


@dataclass
class RunOutcome:
    report: object
    exit_code: int
    files: dict = field(default_factory=dict)
    run_id: int = None


class _Phases:
    """Wall-clock per named phase."""

    def __init__(self):
        self.seconds = {}

    @contextmanager
    def time(self, name):
        started = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - started


def _environment(config, phases):
    return {
        "nz": config.nz,
        "nx": config.nx,
        "seed": config.seed,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "wall_seconds": dict(phases.seconds),
    }


# ─── Concentration ────────────────────────────────────────────────────

def concentration_runner(config, model, sink=None):
    """
    Build the callable the `concentration` probe delegates to: simulate the
    configured network, measure the empirical mean-field tails and fit them.
    """

    def run(ctx):
        N, R = config.concentration_N, config.concentration_R
        adjacency = model.scenario.build(N, config.seed)
        system = finite_sim.NetworkSystem(adjacency=adjacency, f=model.f, h=model.h, alpha=model.alpha)
        state = finite_sim.sample_initial(model.phi0, N, R, config.seed, ctx.threads)
        state = finite_sim.run(system, state, config.concentration_t, ctx.threads)
        eps = list(config.eps)
        if not eps:
            spread = float(np.std(finite_sim.empirical_mean_field(
                system, state, config.concentration_x, config.concentration_node)))
            eps = [m * spread for m in AUTO_EPS_MULTIPLES]
        result = finite_sim.concentration_probe(
            system, state, config.concentration_x, eps, config.concentration_node
        )
        result.pushforward_constant = finite_sim.pushforward_lipschitz_constant(model.f, model.h, model.alpha, 1.0)
        if sink is not None:
            sink["concentration"] = result
        floor = ctx.threshold("concentration", 0.9)
        values = {
            "N": N,
            "R": R,
            "t": state.t,
            "slope": result.slope,
            "r_squared": result.r_squared,
            "C1": result.C1,
            "C2": result.C2,
            "uncensored_points": sum(not c for c in result.censored),
            "degenerate": result.degenerate,
        }
        passed = result.fit_ok and result.r_squared is not None and result.r_squared >= floor
        return ProbeResult("concentration", values, floor, "pass" if passed else "fail")

    return run


# ─── Sweep ────────────────────────────────────────────────────────────

def run_sweep(config, model, threads=None, progress=None):
    """Finite-N versus mean-field sweep plus its decreasing-error verdict."""
    rows = finite_sim.convergence_sweep(
        model.phi0, model.scenario, model.h, model.f, model.alpha,
        config.N_list, config.t, config.R, config.z_stars, config.seed,
        threads=threads, progress=progress,
    )
    decreasing = finite_sim.sweep_decreasing(rows, SWEEP_FACTOR)
    values = {
        "points": [
            {"scenario": scenario, "z_star": z, "decreasing": ok}
            for (scenario, z), ok in sorted(decreasing.items())
        ],
    }
    verdict = "pass" if all(decreasing.values()) else "fail"
    return rows, ProbeResult("convergence_sweep", values, SWEEP_FACTOR, verdict)


# ─── Outputs ──────────────────────────────────────────────────────────

def emit_plot_data(report, out_dir, solution=None):
    """
    Long-format CSVs for plotting: residual history, the fixed-point heatmap,
    sweep errors against N and concentration tails. Only the parts present
    in the report are written.
    """
    out_dir = Path(out_dir)
    files = {}
    if report.solve is not None:
        files["residuals"] = write_csv(out_dir / "residuals.csv", RESIDUAL_HEADER, report.solve.residual_rows())
    if solution is not None:
        files["heatmap"] = dump_csv(solution, out_dir / "fixed_point.csv")
    sweep = report.extras.get("sweep")
    if sweep:
        rows = sorted(sweep["rows"], key=lambda r: (r["scenario"], r["N"], r["z_star"]))
        files["sweep"] = write_csv(
            out_dir / "sweep.csv",
            finite_sim.SWEEP_HEADER,
            ([r[key] for key in finite_sim.SWEEP_HEADER] for r in rows),
        )
    concentration = report.extras.get("concentration")
    if concentration:
        rows = [
            (e, t, "" if f is None else f)
            for e, t, f in zip(concentration["eps"], concentration["tails"], concentration["fit"])
        ]
        files["concentration"] = write_csv(out_dir / "concentration.csv", finite_sim.CONCENTRATION_HEADER, rows)
    logger.info(f"[Runner] wrote {len(files)} plot files to {out_dir}")
    return files


def _concentration_extra(result):
    keep = ("eps", "tails", "hits", "censored", "fit", "envelope", "slope", "intercept",
            "r_squared", "C1", "C2", "N", "R", "t", "pushforward_constant")
    return {key: getattr(result, key) for key in keep}


# ─── Ledger wrapper ───────────────────────────────────────────────────

def _ledgered(command, config, db_path, body):
    """Run `body()` between a start and a completion record; re-raise failures."""
    started = time.perf_counter()
    run_id = database.start_run(command, config.preset, config.config_hash(), config.seed, db_path=db_path)
    try:
        outcome = body()
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"[Runner] {command} failed: {e}", exc_info=True)
        database.complete_run(run_id, "error", code, wall_seconds=time.perf_counter() - started,
                              error_message=str(e), db_path=db_path)
        raise
    status = "passed" if outcome.exit_code == 0 else "failed"
    report_path = outcome.files.get("report")
    database.complete_run(run_id, status, outcome.exit_code, report_path,
                          time.perf_counter() - started, db_path=db_path)
    outcome.run_id = run_id
    return outcome


# ─── Entry points ─────────────────────────────────────────────────────

def run_scenario(config, command="fixed-point", probes=None, sweep=None, threads=None,
                 db_path=None, progress=None):
    """
    Solve for the fixed point, run the requested probes (and the sweep when
    enabled), assemble the report and write every output file.
    Exit code 0 iff no verdict failed, 4 otherwise.
    """
    requested = list(config.probes if probes is None else probes)
    with_sweep = config.sweep if sweep is None else sweep
    threads = config.threads if threads is None else threads

    def body():
        phases = _Phases()
        out_dir = Path(config.out_dir)
        with phases.time("setup"):
            model = build_model(config)
        captured = {}
        ctx = ProbeContext(
            f=model.f, h=model.h, W=model.W, alpha=model.alpha,
            nz=config.nz, nx=config.nx, phi0=model.phi0,
            tol=config.tol, max_iter=config.max_iter, p_exp=config.p_exp,
            thresholds=config.threshold_table(), params=config.param_table(),
            seed=config.seed, threads=threads, strict=config.strict,
            concentration_runner=concentration_runner(config, model, captured),
        )
        with phases.time("solve"):
            solution, solve = ctx.ensure_solution()
        solve.alpha_warning = solve.alpha_warning or config.alpha_warning
        results = []
        with phases.time("probes"):
            for name in requested:
                results.append(run_probe(name, ctx))
        extras = {}
        if with_sweep:
            with phases.time("sweep"):
                rows, verdict = run_sweep(config, model, threads, progress)
            results.append(verdict)
            extras["sweep"] = {"rows": [r.to_dict() for r in rows]}
        if "concentration" in captured:
            extras["concentration"] = _concentration_extra(captured["concentration"])

        report = reporter.assemble_report(
            config.to_dict(), solve, results, requested,
            environment=_environment(config, phases), extras=extras,
        )
        files = {"report": reporter.write_report(report, out_dir / "report.json")}
        files.update(emit_plot_data(report, out_dir, solution))
        files["density"] = dump_binary(solution, out_dir / "fixed_point.bin")
        code = 0 if report.all_passed else 4
        if code:
            logger.warning(f"[Runner] failed probes: {', '.join(report.failed_probes)}")
        return RunOutcome(report=report, exit_code=code, files=files)

    return _ledgered(command, config, db_path, body)


def run_compare(config, threads=None, db_path=None, progress=None):
    """Sweep only: finite-N marginals against the operator's fibers."""
    threads = config.threads if threads is None else threads

    def body():
        phases = _Phases()
        with phases.time("sweep"):
            model = build_model(config)
            rows, verdict = run_sweep(config, model, threads, progress)
        report = reporter.assemble_report(
            config.to_dict(), None, [verdict],
            environment=_environment(config, phases),
            extras={"sweep": {"rows": [r.to_dict() for r in rows]}},
        )
        out_dir = Path(config.out_dir)
        files = {"report": reporter.write_report(report, out_dir / "report.json")}
        files.update(emit_plot_data(report, out_dir))
        return RunOutcome(report=report, exit_code=0 if report.all_passed else 4, files=files)

    return _ledgered("compare", config, db_path, body)


def run_simulation(config, N, R, steps, threads=None, db_path=None, dump=True):
    """
    Simulate the finite network for `steps` steps from the configured initial
    law, dump the trajectory and compare the probe nodes with the operator.
    """
    threads = config.threads if threads is None else threads

    def body():
        phases = _Phases()
        model = build_model(config)
        with phases.time("simulate"):
            adjacency = model.scenario.build(N, config.seed)
            system = finite_sim.NetworkSystem(adjacency=adjacency, f=model.f, h=model.h, alpha=model.alpha)
            state = finite_sim.sample_initial(model.phi0, N, R, config.seed, threads)
            frames = [state.coords]
            state = finite_sim.run(system, state, steps, threads, frames)
        with phases.time("reference"):
            reference = finite_sim.evolve_reference(model.phi0, model.W, model.h, model.f, model.alpha, steps, threads)
        errors = []
        for z_star in config.z_stars:
            node = finite_sim.node_index(z_star, N)
            ref = reference.row(finite_sim.reference_row(z_star, reference.nz))
            errors.append({"z_star": z_star, "node": node,
                           "w1_error": finite_sim.marginal_error(state, node, ref, config.nx)})
        out_dir = Path(config.out_dir)
        files = {}
        if dump:
            files["trajectory"] = finite_sim.dump_trajectory(frames, out_dir / "trajectory.bin")
        report = reporter.assemble_report(
            config.to_dict(), None, [],
            environment=_environment(config, phases),
            extras={"simulation": {"N": N, "R": R, "steps": steps, "marginals": errors}},
        )
        files["report"] = reporter.write_report(report, out_dir / "report.json")
        return RunOutcome(report=report, exit_code=0, files=files)

    return _ledgered("simulate", config, db_path, body)


def plan(config, command, probes=None):
    """Execution plan for --dry-run; nothing is computed."""
    requested = list(config.probes if probes is None else probes)
    steps = [
        f"model: {config.map} + {config.alpha:.6g}·{config.coupling} on {config.graphon} graphon",
        f"grid: nz={config.nz} nx={config.nx}",
    ]
    if config.alpha_warning:
        steps.append("warning: alpha outside the certified regime")
    if command in ("fixed-point", "probe"):
        steps.append(f"solve: tol={config.tol:g} max_iter={config.max_iter} strict={config.strict}")
        steps.extend(f"probe: {name}" for name in requested)
    if command == "compare" or (command == "fixed-point" and config.sweep):
        steps.append(f"sweep: graph={config.graph} N={config.N_list} t={config.t} R={config.R} z*={config.z_stars}")
    if command == "simulate":
        steps.append(f"simulate: graph={config.graph} z*={config.z_stars}")
    steps.append(f"outputs: {config.out_dir}")
    return steps
