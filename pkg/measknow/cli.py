"""Command-line entry point: ``python -m measknow.cli <command>``.

Every command writes one ``RunReport`` as JSON (to ``--out`` or stdout).
Exit codes: 0 when all asserted inequalities hold or the input lies
outside a theorem's hypotheses, 1 on a violation, 2 on bad input.
"""

import functools
import json
import logging
import time
from typing import Any, Callable, Dict, List, Optional

import click
import numpy as np
from pydantic import ValidationError

from measknow.codec import load_object, model_to_dict, implementation_to_dict, save_object
from measknow.config import RunConfig
from measknow.errors import InvalidMatrix, MeasKnowError
from measknow.fock import coherent_state_with_mean, fock_state, thermal_state
from measknow.gate_audit import (
    SPIN_Y_PLUS,
    BoundReport,
    GateImplementation,
    bound_coherent,
    bound_field_state,
    bound_spin,
    conservation_residual,
    embed_ancilla_qubit,
    floor_from_spread,
    gate_fidelity,
    optimize_fidelity,
    sz_noise,
)
from measknow.instruments import (
    POVM,
    KrausInstrument,
    MeasurementModel,
    dilate_channel,
    dilate_instrument,
    instrument_distance,
    instrument_from_model,
    luders_instrument,
)
from measknow.operators import (
    DensityOperator,
    Observable,
    basis_vector,
    collective_spin,
    commutator_mean,
    decode_matrix,
    mean_stddev,
    spin_half,
    spin_matrices,
)
from measknow.reports import RunReport, load_config, write_report
from measknow.sweeps import SWEEPS, summarize, summary_to_dict, violations, way_sweep
from measknow.way_bounds import ConservationSpec, way_audit, way_bound

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2

_INPUT_ERRORS = (MeasKnowError, ValidationError, ValueError, OSError)


def common_options(func: Callable) -> Callable:
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="RunConfig JSON file.")
    @click.option("--seed", type=int, default=None, help="Override the configured seed.")
    @click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the report here instead of stdout.")
    @click.option("--format", "fmt", type=click.Choice(["json"]), default="json", show_default=True)
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        return func(*args, **kwargs)

    return wrapper


def _finish(ctx: click.Context, report: RunReport, out: Optional[str], diagnostic: bool = False) -> None:
    text = write_report(report, out)
    if out is None:
        click.echo(text)
    else:
        click.echo(f"Report written to {out}", err=True)
    for line in report.violations:
        click.echo(f"VIOLATION {line}", err=True)
    ctx.exit(EXIT_VIOLATION if report.violations and not diagnostic else EXIT_OK)


def _run_command(ctx: click.Context, command: str, config_path: Optional[str], seed: Optional[int], body: Callable):
    """Load the config, time ``body(cfg) -> (results, violations)`` and map failures to exit 2."""
    try:
        cfg = load_config(config_path, seed)
        start = time.perf_counter()
        results, found = body(cfg)
    except _INPUT_ERRORS as e:
        click.echo(f"Input error: {e}", err=True)
        ctx.exit(EXIT_INPUT)
    return RunReport(
        command=command,
        config=cfg.model_dump(),
        results=results,
        wall_time=time.perf_counter() - start,
        violations=found,
    )


def _load_matrix(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        return decode_matrix(json.load(f))


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log at DEBUG level.")
def cli(verbose: bool) -> None:
    """Quantum instrument numerics: uncertainty chains, WAY bounds and gate audits."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@cli.command("verify-relations")
@common_options
@click.option(
    "--sweep", "selected", multiple=True, type=click.Choice(sorted(SWEEPS)), help="Run only these sweeps (repeatable)."
)
@click.pass_context
def verify_relations(ctx, config_path, seed, out, fmt, selected) -> None:
    """Randomised sweeps over every inequality chain and construction."""

    def body(cfg: RunConfig):
        records: List[Dict[str, Any]] = []
        for name in selected or sorted(SWEEPS):
            click.echo(f"Running sweep {name}...", err=True)
            records.extend(SWEEPS[name](cfg))
        summary = summarize(records)
        return {"summary": summary_to_dict(summary)}, violations(summary)

    _finish(ctx, _run_command(ctx, "verify-relations", config_path, seed, body), out)


def worked_way_example() -> Dict[str, Any]:
    """``A = S_z``, ``L₁ = L₂ = S_x``, ``ρ = |S_y=+½⟩``, probe ``|0⟩``.

    The raw bound must equal the ψ-maximized floor for this ancilla, and the
    bound built from the ½-scaled commutator ``(½|⟨[A,L₁]⟩|)²`` must be a
    quarter of it.
    """
    sx, _, sz = spin_half()
    state, probe = DensityOperator.pure(SPIN_Y_PLUS), DensityOperator.pure(basis_vector(2, 0))
    spec = ConservationSpec(Observable(sx, label="L1"), Observable(sx, label="L2"))
    bound = way_bound(Observable(sz, label="S_z"), spec, state, probe)
    _, d1 = mean_stddev(sx, state)
    _, d2 = mean_stddev(sx, probe)
    half_scaled = (abs(commutator_mean(sz, sx, state)) / 2) ** 2 / (4 * d1**2 + 4 * d2**2)
    floor = floor_from_spread(d2**2)
    return {
        "bound": bound,
        "maximized_floor": floor,
        "half_scaled_value": half_scaled,
        "reconciled": abs(bound - floor) <= 1e-12 and abs(4 * half_scaled - bound) <= 1e-12,
    }


@cli.command("way-bound")
@common_options
@click.option("--model", "model_path", type=click.Path(dir_okay=False), default=None, help="MeasurementModel JSON to audit.")
@click.option("--system-charge", type=click.Path(dir_okay=False), default=None, help="L1 matrix JSON (default S_x).")
@click.option("--ancilla-charge", type=click.Path(dir_okay=False), default=None, help="L2 matrix JSON (default spin J_x).")
@click.option("--observable", type=click.Path(dir_okay=False), default=None, help="Target A matrix JSON (default S_z).")
@click.option("--state", type=click.Path(dir_okay=False), default=None, help="System state matrix JSON (default |S_y=+1/2⟩).")
@click.pass_context
def way_bound_cmd(ctx, config_path, seed, out, fmt, model_path, system_charge, ancilla_charge, observable, state) -> None:
    """Audit a supplied model, or sweep random conserving models, against the WAY bound."""
    diagnostic = False

    def body(cfg: RunConfig):
        nonlocal diagnostic
        numeric = cfg.numeric
        worked = worked_way_example()
        found = [] if worked["reconciled"] else ["worked example does not reconcile with the maximized floor"]
        if model_path is None:
            summary = summarize(way_sweep(cfg))
            found += violations(summary)
            return {"worked_example": worked, "summary": summary_to_dict(summary)}, found

        model = load_object(model_path, numeric)
        if not isinstance(model, MeasurementModel):
            raise InvalidMatrix(f"{model_path} does not hold a measurement model.")
        l1 = _load_matrix(system_charge) if system_charge else spin_matrices(model.system_dim)[0]
        l2 = _load_matrix(ancilla_charge) if ancilla_charge else spin_matrices(model.ancilla_dim)[0]
        a = _load_matrix(observable) if observable else spin_matrices(model.system_dim)[2]
        if state:
            rho = DensityOperator(_load_matrix(state), config=numeric)
        elif model.system_dim == 2:
            rho = DensityOperator.pure(SPIN_Y_PLUS, config=numeric)
        else:
            rho = DensityOperator.maximally_mixed(model.system_dim, config=numeric)
        spec = ConservationSpec(Observable(l1, label="L1", config=numeric), Observable(l2, label="L2", config=numeric))
        report = way_audit(model, Observable(a, label="A", config=numeric), spec, rho)
        conserving = report.hypotheses_hold(numeric.commutation_tol)
        diagnostic = not conserving
        if conserving and report.margin < -numeric.slack_tol:
            found.append(f"conserving model violates the WAY bound by {-report.margin:.3e}")
        return {"worked_example": worked, "audit": report.to_dict(), "conserving": conserving}, found

    report = _run_command(ctx, "way-bound", config_path, seed, body)
    _finish(ctx, report, out, diagnostic=diagnostic)


def _field_bound(cfg: RunConfig, scenario: str) -> Dict[str, Any]:
    numeric = cfg.numeric
    if scenario == "coherent":
        truncated = bound_field_state(coherent_state_with_mean(cfg.mean_photons, cfg.cutoff, numeric), cfg.cutoff)
        return {"bound": bound_coherent(cfg.mean_photons).to_dict(), "truncated": truncated.to_dict()}
    if scenario == "number":
        n = int(round(cfg.mean_photons))
        return {"bound": bound_field_state(fock_state(n, cfg.cutoff, numeric), cfg.cutoff).to_dict()}
    return {"bound": bound_field_state(thermal_state(cfg.mean_photons, cfg.cutoff, numeric), cfg.cutoff).to_dict()}


def _spin_search(cfg: RunConfig, n: int, entangled: bool, warm_start: Optional[GateImplementation] = None):
    best, report = optimize_fidelity(
        collective_spin(n, "x"),
        iterations=cfg.iterations,
        restarts=cfg.restarts,
        seed=cfg.seed,
        separable_qubits=None if entangled else n,
        warm_start=warm_start,
        n_jobs=cfg.n_jobs,
        optimizer=cfg.optimizer,
        config=cfg.numeric,
    )
    closed_form = bound_spin(n, entangled)
    report = BoundReport(closed_form.scenario, float(n), closed_form.floor, closed_form.delta_lx_sq, report.achieved_error)
    return best, report


def _floor_violation(report: BoundReport, tol: float) -> List[str]:
    if report.satisfied(tol):
        return []
    return [f"{report.scenario}: gate error {report.achieved_error:.9f} below floor {report.floor:.9f}"]


@cli.command("gate-audit")
@common_options
@click.option("--implementation", "impl_path", type=click.Path(dir_okay=False), default=None, help="Gate implementation JSON.")
@click.option(
    "--charge",
    type=click.Path(dir_okay=False),
    default=None,
    help="Ancilla charge L_x matrix JSON (default: the charge saved with the implementation, else spin J_x).",
)
@click.option(
    "--scenario",
    type=click.Choice(["coherent", "number", "thermal", "spin_entangled", "spin_separable"]),
    default=None,
    help="Evaluate a resource scenario instead of a file.",
)
@click.pass_context
def gate_audit_cmd(ctx, config_path, seed, out, fmt, impl_path, charge, scenario) -> None:
    """Fidelities of a Hadamard implementation and the applicable error floor."""
    if (impl_path is None) == (scenario is None):
        click.echo("Input error: give exactly one of --implementation or --scenario.", err=True)
        ctx.exit(EXIT_INPUT)

    def body(cfg: RunConfig):
        numeric, tol = cfg.numeric, cfg.numeric.optimizer_tol
        if scenario in ("coherent", "number", "thermal"):
            return {"scenario": scenario, **_field_bound(cfg, scenario)}, []
        if scenario is not None:
            best, report = _spin_search(cfg, cfg.n_spins, entangled=scenario == "spin_entangled")
            fidelity = gate_fidelity(best, cfg.optimizer)
            return (
                {"scenario": scenario, "fidelity": fidelity.to_dict(), "bound": report.to_dict()},
                _floor_violation(report, tol),
            )

        impl = load_object(impl_path, numeric)
        if not isinstance(impl, GateImplementation):
            raise InvalidMatrix(f"{impl_path} does not hold a gate implementation.")
        if charge:
            l_x = _load_matrix(charge)
        elif impl.charge is not None:
            l_x = impl.charge
        else:
            l_x = spin_matrices(impl.ancilla_dim)[0]
        fidelity = gate_fidelity(impl, cfg.optimizer)
        residual = conservation_residual(impl, l_x)
        results: Dict[str, Any] = {
            "fidelity": fidelity.to_dict(),
            "conservation_residual": residual,
            "sz_noise_sq_at_spin_y": sz_noise(impl, SPIN_Y_PLUS),
        }
        if residual > numeric.commutation_tol:
            results["bound"] = None
            return results, []
        values = np.linalg.eigvalsh(Observable(l_x, config=numeric).matrix)
        spread = float(values[-1] - values[0])
        _, std = mean_stddev(l_x, DensityOperator.pure(impl.ancilla_vector, config=numeric))
        report = BoundReport("spin_entangled", spread, floor_from_spread(spread**2 / 4), spread**2 / 4, fidelity.gate_error)
        results["bound"] = report.to_dict()
        results["ancilla_state_floor"] = floor_from_spread(std**2)
        return results, _floor_violation(report, tol)

    _finish(ctx, _run_command(ctx, "gate-audit", config_path, seed, body), out)


@cli.command("optimize-gate")
@common_options
@click.option("--n-spins", type=click.IntRange(min=1), default=None, help="Ancilla qubits (default from config).")
@click.option("--separable", is_flag=True, help="Restrict the ancilla vector to product states.")
@click.option("--nested", is_flag=True, help="Run n = 1..N, warm-starting each size from the previous optimum.")
@click.option("--save", "save_path", type=click.Path(dir_okay=False), default=None, help="Write the best implementation JSON.")
@click.pass_context
def optimize_gate(ctx, config_path, seed, out, fmt, n_spins, separable, nested, save_path) -> None:
    """Search conserving implementations for the best gate fidelity."""

    def body(cfg: RunConfig):
        tol = cfg.numeric.optimizer_tol
        n_max = n_spins or cfg.n_spins
        sizes = list(range(1, n_max + 1)) if nested else [n_max]
        runs, found = [], []
        best, previous = None, None
        for n in sizes:
            warm = embed_ancilla_qubit(best) if nested and best is not None and not separable else None
            best, report = _spin_search(cfg, n, entangled=not separable, warm_start=warm)
            runs.append(report.to_dict())
            found += _floor_violation(report, tol)
            if previous is not None and report.achieved_error > previous + tol:
                found.append(f"gate error rose from {previous:.9f} to {report.achieved_error:.9f} at n = {n}")
            previous = report.achieved_error
        if save_path is not None:
            save_object(best, save_path)
        return {"runs": runs, "best_implementation": implementation_to_dict(best)}, found

    _finish(ctx, _run_command(ctx, "optimize-gate", config_path, seed, body), out)


@cli.command("dilate")
@common_options
@click.option("--input", "input_path", type=click.Path(dir_okay=False), required=True, help="Instrument or POVM JSON.")
@click.option("--model-out", type=click.Path(dir_okay=False), default=None, help="Write the measurement model JSON.")
@click.pass_context
def dilate_cmd(ctx, config_path, seed, out, fmt, input_path, model_out) -> None:
    """Build a measurement model realising an instrument and check the round trip."""

    def body(cfg: RunConfig):
        obj = load_object(input_path, cfg.numeric)
        if isinstance(obj, POVM):
            obj = luders_instrument(obj)
        if not isinstance(obj, KrausInstrument):
            raise InvalidMatrix(f"{input_path} holds neither an instrument nor a POVM.")
        model = dilate_channel(obj) if len(obj.outcomes) == 1 else dilate_instrument(obj)
        residual = instrument_distance(obj, instrument_from_model(model))
        if model_out is not None:
            save_object(model, model_out)
        found = [] if residual <= 1e-9 else [f"dilation round-trip residual {residual:.3e} exceeds 1e-9"]
        return {"model": model_to_dict(model), "round_trip_residual": residual}, found

    _finish(ctx, _run_command(ctx, "dilate", config_path, seed, body), out)


if __name__ == "__main__":
    cli()
