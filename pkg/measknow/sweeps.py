"""Randomised verification sweeps.

Each sweep draws independent samples, one ``SeedSequence`` child per
sample, and returns flat records ``{sweep, check, slack, tol}``. A check
passes when ``slack >= -tol``. ``summarize`` reduces records to the
minimum slack per check with pandas; results come back in task order
whatever the worker count.
"""

import logging
from typing import Any, Callable, Dict, List, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from measknow.config import RunConfig
from measknow.error_metrics import noise_from_extension, rms_noise_sq, zero_noise_equivalence
from measknow.gate_audit import (
    SPIN_Y_PLUS,
    GateImplementation,
    basis_fidelities,
    conserving_unitary,
    e_vectors,
    floor_from_spread,
    gate_fidelity,
    sz_noise_from_moments,
    sz_noise_from_vectors,
    sz_noise_identity,
)
from measknow.instruments import (
    POVM,
    KrausInstrument,
    dilate_channel,
    dilate_instrument,
    instrument_distance,
    instrument_from_model,
    luders_instrument,
    model_channel_apply,
    naimark_extension,
    nonselective_apply,
)
from measknow.operators import DensityOperator, Observable, mean_stddev, spectral, spin_half, spin_matrices
from measknow.sampling import (
    random_channel,
    random_commuting_pair,
    random_density,
    random_instrument,
    random_joint_povm,
    random_observable,
    random_povm,
    random_pure_vector,
)
from measknow.uncertainty import heisenberg_check, instrument_chain, joint_direct_chain, joint_povm_chain
from measknow.way_bounds import random_conserving_model, way_audit

logger = logging.getLogger(__name__)

Record = Dict[str, Any]

# Residual targets for constructions that are exact up to round-off.
_RESIDUAL_TOL = 1e-9
_ZERO_NOISE_TOL = 1e-10
_NONSPECTRAL_GAP = 1e-6


def _record(sweep: str, check: str, slack: float, tol: float) -> Record:
    return {"sweep": sweep, "check": check, "slack": float(slack), "tol": float(tol)}


def _run(
    task: Callable[..., List[Record]],
    count: int,
    cfg: RunConfig,
    label: str,
    salt: int,
) -> List[Record]:
    seeds = np.random.SeedSequence([cfg.seed, salt]).spawn(count)
    jobs = (delayed(task)(i, s, cfg) for i, s in enumerate(seeds))
    results = Parallel(n_jobs=cfg.n_jobs)(tqdm(jobs, total=count, desc=label, disable=not cfg.progress))
    logger.info("Sweep %s finished %d samples.", label, count)
    return [r for chunk in results for r in chunk]


def _chain_records(sweep: str, report: Any) -> List[Record]:
    return [_record(sweep, link.name, link.slack, report.tol) for link in report.links]


def _instrument_task(index: int, seed: np.random.SeedSequence, cfg: RunConfig) -> List[Record]:
    rng = np.random.default_rng(seed)
    dim = cfg.dims[index % len(cfg.dims)]
    numeric = cfg.numeric
    a = random_observable(dim, rng, "A", numeric)
    b = random_observable(dim, rng, "B", numeric)
    state = random_density(dim, rng, rank=int(rng.integers(1, dim + 1)), config=numeric)

    # Every fourth sample uses an instrument built to meet one of the
    # Heisenberg conditions; the rest are generic.
    kind = index % 4
    if kind == 1:
        a, b = random_commuting_pair(dim, rng, numeric)
        instr = luders_instrument(a)
    elif kind == 2:
        shift = float(rng.uniform(-1.0, 1.0))
        exact = luders_instrument(a)
        instr = KrausInstrument(tuple(x + shift for x in exact.outcomes), exact.kraus_sets, config=numeric)
        b = a
    else:
        instr = random_instrument(dim, rng, config=numeric)

    records = _chain_records("instrument_chain", instrument_chain(a, b, instr, state))
    check = heisenberg_check(a, b, instr, state)
    if check.any_condition:
        records.append(_record("heisenberg", "conditional_product", check.product - check.bound, numeric.slack_tol))
    return records


def instrument_chain_sweep(cfg: RunConfig) -> List[Record]:
    return _run(_instrument_task, cfg.chain_samples, cfg, "instrument chain", 1)


def _joint_task(index: int, seed: np.random.SeedSequence, cfg: RunConfig) -> List[Record]:
    rng = np.random.default_rng(seed)
    dim = cfg.dims[index % len(cfg.dims)]
    numeric = cfg.numeric
    a = random_observable(dim, rng, "A", numeric)
    b = random_observable(dim, rng, "B", numeric)
    state = random_density(dim, rng, config=numeric)
    c, d = random_commuting_pair(dim, rng, numeric)
    joint = random_joint_povm(dim, rng, int(rng.integers(2, 4)), int(rng.integers(2, 4)), numeric)
    return _chain_records("joint_direct_chain", joint_direct_chain(a, b, c, d, state, numeric)) + _chain_records(
        "joint_povm_chain", joint_povm_chain(a, b, joint, state)
    )


def joint_chain_sweep(cfg: RunConfig) -> List[Record]:
    return _run(_joint_task, cfg.joint_samples, cfg, "joint chains", 2)


def _zero_noise_task(index: int, seed: np.random.SeedSequence, cfg: RunConfig) -> List[Record]:
    rng = np.random.default_rng(seed)
    dim = cfg.dims[index % len(cfg.dims)]
    numeric = cfg.numeric
    a = random_observable(dim, rng, "A", numeric)
    decomposition = spectral(a, numeric)
    exact = POVM(decomposition.eigenvalues, decomposition.projectors, config=numeric)
    state = random_density(dim, rng, config=numeric)
    eps = float(np.sqrt(rms_noise_sq(a, exact, state)))
    noisy = zero_noise_equivalence(a, random_povm(dim, rng, config=numeric))
    return [
        _record("zero_noise", "spectral_eps", -eps, _ZERO_NOISE_TOL),
        _record("zero_noise", "nonspectral_eps_gap", noisy.eps_on_faithful - _NONSPECTRAL_GAP, 0.0),
        _record("zero_noise", "equivalence", 0.0 if noisy.equivalent(_NONSPECTRAL_GAP) else -1.0, 0.0),
    ]


def zero_noise_sweep(cfg: RunConfig) -> List[Record]:
    return _run(_zero_noise_task, cfg.zero_noise_samples, cfg, "zero noise", 3)


def _dilation_task(index: int, seed: np.random.SeedSequence, cfg: RunConfig) -> List[Record]:
    rng = np.random.default_rng(seed)
    dim = cfg.dims[index % len(cfg.dims)]
    numeric = cfg.numeric
    instr = random_instrument(dim, rng, config=numeric)
    round_trip = instrument_distance(instr, instrument_from_model(dilate_instrument(instr)))

    channel = random_channel(dim, rng, n_kraus=int(rng.integers(1, 4)), config=numeric)
    state = random_density(dim, rng, config=numeric)
    channel_residual = float(
        np.max(np.abs(model_channel_apply(dilate_channel(channel), state) - nonselective_apply(channel, state).matrix))
    )

    povm = random_povm(dim, rng, config=numeric)
    extension = naimark_extension(povm)
    naimark_residual = max(float(np.max(np.abs(extension.effect(x) - e))) for x, e in zip(povm.outcomes, povm.effects))
    a = random_observable(dim, rng, "A", numeric)
    eps_ext, _ = noise_from_extension(a, extension, state)
    eps_direct = float(np.sqrt(rms_noise_sq(a, povm, state)))
    return [
        _record("dilation", "instrument_round_trip", -round_trip, _RESIDUAL_TOL),
        _record("dilation", "channel_round_trip", -channel_residual, _RESIDUAL_TOL),
        _record("dilation", "naimark_effects", -naimark_residual, _RESIDUAL_TOL),
        _record("dilation", "naimark_noise", -abs(eps_ext - eps_direct), _RESIDUAL_TOL),
    ]


def dilation_sweep(cfg: RunConfig) -> List[Record]:
    return _run(_dilation_task, cfg.dilation_samples, cfg, "dilations", 4)


def _way_task(index: int, seed: np.random.SeedSequence, cfg: RunConfig) -> List[Record]:
    rng = np.random.default_rng(seed)
    ancilla_dim = cfg.ancilla_dims[index % len(cfg.ancilla_dims)]
    numeric = cfg.numeric
    model, spec = random_conserving_model(ancilla_dim, rng, config=numeric)
    state = random_density(2, rng, rank=int(rng.integers(1, 3)), config=numeric)
    report = way_audit(model, Observable(spin_half()[2], label="S_z", config=numeric), spec, state)
    return [
        _record("way", "margin", report.margin, numeric.slack_tol),
        _record("way", "conservation_residual", -report.conservation_residual, _RESIDUAL_TOL),
    ]


def way_sweep(cfg: RunConfig) -> List[Record]:
    return _run(_way_task, cfg.way_samples, cfg, "WAY bound", 5)


def random_conserving_implementation(ancilla_dim: int, rng: np.random.Generator, cfg: RunConfig) -> GateImplementation:
    """Random ``(U, ξ)`` conserving ``S_x⊗I + I⊗J_x`` for a spin-j ancilla."""
    charge = spin_matrices(ancilla_dim)[0]
    u = conserving_unitary(charge, rng=rng, config=cfg.numeric)
    xi = random_pure_vector(ancilla_dim, rng)
    return GateImplementation(ancilla_dim, u, xi, config=cfg.numeric, charge=charge)


def _sign_task(index: int, seed: np.random.SeedSequence, cfg: RunConfig) -> List[Record]:
    rng = np.random.default_rng(seed)
    ancilla_dim = cfg.ancilla_dims[index % len(cfg.ancilla_dims)]
    impl = random_conserving_implementation(ancilla_dim, rng, cfg)
    psi = random_pure_vector(2, rng)
    moments = sz_noise_from_moments(impl, psi)
    vectors = sz_noise_from_vectors(impl, psi)
    identity = sz_noise_identity(impl, psi)

    e = e_vectors(impl)
    f0_sq, f1_sq = basis_fidelities(impl)
    half_sq = lambda v: 0.5 * float(np.vdot(v, v).real)  # noqa: E731
    fidelity_gap = max(
        abs(f0_sq - (1.0 - half_sq(e.e00 - e.e01))),
        abs(f1_sq - (1.0 - half_sq(e.e10 + e.e11))),
    )
    norm_gap = max(abs(s - 1.0) for s in e.norm_sums())

    xi_state = DensityOperator.pure(impl.ancilla_vector, config=cfg.numeric)
    _, spread = mean_stddev(spin_matrices(ancilla_dim)[0], xi_state)
    floor = floor_from_spread(spread**2)
    at_y = sz_noise_from_vectors(impl, SPIN_Y_PLUS)
    fidelity = gate_fidelity(impl, cfg.optimizer)
    tol = cfg.numeric.optimizer_tol
    return [
        _record("gate", "sz_paths_agree", -abs(moments - vectors), _RESIDUAL_TOL),
        _record("gate", "sz_identity_minus_minus", -abs(moments - identity), _RESIDUAL_TOL),
        _record("gate", "fidelity_identities", -fidelity_gap, 1e-10),
        _record("gate", "e_vector_norm_sums", -norm_gap, 1e-10),
        _record("gate", "sz_floor_at_spin_y", at_y - floor, _RESIDUAL_TOL),
        _record("gate", "fidelity_below_basis", np.sqrt(min(f0_sq, f1_sq)) - fidelity.gate_fidelity, tol),
        _record("gate", "error_above_sz_noise", fidelity.gate_error - at_y, tol),
    ]


def sign_sweep(cfg: RunConfig) -> List[Record]:
    return _run(_sign_task, cfg.sign_samples, cfg, "gate identities", 6)


SWEEPS: Dict[str, Callable[[RunConfig], List[Record]]] = {
    "instrument_chain": instrument_chain_sweep,
    "joint_chains": joint_chain_sweep,
    "zero_noise": zero_noise_sweep,
    "dilation": dilation_sweep,
    "way": way_sweep,
    "gate": sign_sweep,
}


def summarize(records: Sequence[Record]) -> pd.DataFrame:
    """Minimum slack, sample count and tolerance per ``(sweep, check)``."""
    frame = pd.DataFrame.from_records(list(records), columns=["sweep", "check", "slack", "tol"])
    summary = frame.groupby(["sweep", "check"], sort=True).agg(
        min_slack=("slack", "min"),
        samples=("slack", "size"),
        tol=("tol", "max"),
    )
    summary["passed"] = summary["min_slack"] >= -summary["tol"]
    return summary.reset_index()


def violations(summary: pd.DataFrame) -> List[str]:
    failed = summary[~summary["passed"]]
    return [
        f"{row.sweep}/{row.check}: min slack {row.min_slack:.3e} below -{row.tol:.1e}"
        for row in failed.itertuples(index=False)
    ]


def summary_to_dict(summary: pd.DataFrame) -> Dict[str, Dict[str, Any]]:
    out: Dict[str, Dict[str, Any]] = {}
    for row in summary.itertuples(index=False):
        out.setdefault(row.sweep, {})[row.check] = {
            "min_slack": float(row.min_slack),
            "samples": int(row.samples),
            "tol": float(row.tol),
            "passed": bool(row.passed),
        }
    return out
