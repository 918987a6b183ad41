"""Noise-disturbance and joint-measurement uncertainty chains.

Each evaluator computes every term of a three-step inequality chain and
returns the links with their slack, so a caller can see which step is
tight. The chains follow one pattern: rms terms bound spread terms, spread
terms bound commutator terms, and those bound the Robertson value
``½|⟨[A,B]⟩|``.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from measknow.config import DEFAULT_CONFIG, NumericConfig
from measknow.error_metrics import (
    assess_disturbance,
    assess_noise,
    classify_disturbance,
    classify_noise,
)
from measknow.errors import DisturbanceNotZero, NoiseNotZero, NonCommutingPair, NotUncorrelated
from measknow.instruments import JointPOVM, KrausInstrument, induced_povm, marginals, povm_mean_stddev
from measknow.operators import (
    DensityOperator,
    as_matrix,
    commutator,
    commutator_mean,
    expectation,
    max_norm,
    mean_stddev,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainLink:
    name: str
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack}


@dataclass(frozen=True, eq=False)
class ChainReport:
    links: Tuple[ChainLink, ...]
    terms: Dict[str, float]
    tol: float = DEFAULT_CONFIG.slack_tol

    @property
    def holds(self) -> bool:
        return all(link.slack >= -self.tol for link in self.links)

    @property
    def min_slack(self) -> float:
        return min(link.slack for link in self.links)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "links": [link.to_dict() for link in self.links],
            "holds": self.holds,
            "terms": dict(self.terms),
        }


@dataclass(frozen=True)
class HeisenbergReport:
    condition_i: bool
    condition_ii: bool
    condition_iii: bool
    heisenberg_holds: bool
    product: float
    bound: float

    @property
    def any_condition(self) -> bool:
        return self.condition_i or self.condition_ii or self.condition_iii

    @property
    def consistent(self) -> bool:
        """Any sufficient condition being true must come with the relation holding."""
        return self.heisenberg_holds or not self.any_condition

    def to_dict(self) -> Dict[str, Any]:
        return {
            "condition_i": self.condition_i,
            "condition_ii": self.condition_ii,
            "condition_iii": self.condition_iii,
            "heisenberg_holds": self.heisenberg_holds,
            "product": self.product,
            "bound": self.bound,
        }


@dataclass(frozen=True)
class UncorrelatedReport:
    eps_product_link: ChainLink
    delta_n_link: ChainLink
    povm_spread_link: ChainLink
    tol: float = DEFAULT_CONFIG.slack_tol

    @property
    def links(self) -> Tuple[ChainLink, ...]:
        return (self.eps_product_link, self.delta_n_link, self.povm_spread_link)

    @property
    def holds(self) -> bool:
        return all(link.slack >= -self.tol for link in self.links)

    def to_dict(self) -> Dict[str, Any]:
        return {"links": [link.to_dict() for link in self.links], "holds": self.holds}


def half_commutator(a: Any, b: Any, state: DensityOperator) -> float:
    """``½|⟨[A,B]⟩|``."""
    return 0.5 * abs(commutator_mean(a, b, state))


def _chain(
    first: float,
    second: float,
    spread_a: float,
    spread_b: float,
    noise_spread_a: float,
    noise_spread_b: float,
    comm_noise_b: float,
    comm_a_noise: float,
    robertson: float,
    tol: float,
    disturbance: bool = False,
) -> ChainReport:
    rms = first * second + first * spread_b + spread_a * second
    spreads = noise_spread_a * noise_spread_b + noise_spread_a * spread_b + spread_a * noise_spread_b
    commutators = noise_spread_a * noise_spread_b + comm_noise_b + comm_a_noise
    links = (
        ChainLink("rms_vs_spread", rms, spreads),
        ChainLink("spread_vs_commutators", spreads, commutators),
        ChainLink("commutators_vs_robertson", commutators, robertson),
    )
    second_name, spread_name, comm_name = (
        ("eta_b", "delta_d_b", "half_comm_a_d_b") if disturbance else ("eps_b", "delta_n_b", "half_comm_a_n_b")
    )
    terms = {
        "eps_a": first,
        second_name: second,
        "delta_a": spread_a,
        "delta_b": spread_b,
        "delta_n_a": noise_spread_a,
        spread_name: noise_spread_b,
        "half_comm_n_a_b": comm_noise_b,
        comm_name: comm_a_noise,
        "half_comm_a_b": robertson,
    }
    return ChainReport(links=links, terms=terms, tol=tol)


def joint_direct_chain(
    a: Any, b: Any, c: Any, d: Any, state: DensityOperator, config: NumericConfig = DEFAULT_CONFIG
) -> ChainReport:
    """Chain for a joint measurement of commuting ``C`` and ``D`` as ``A`` and ``B``.

    Noise operators are ``N_A = C - A`` and ``N_B = D - B``.
    """
    a, b, c, d = (as_matrix(x) for x in (a, b, c, d))
    defect = max_norm(commutator(c, d))
    if defect > config.commutation_tol:
        raise NonCommutingPair(f"Meter observables C and D do not commute (‖[C,D]‖_max = {defect:.3e}).")
    noise_a, noise_b = c - a, d - b
    eps_a = float(np.sqrt(max(0.0, np.real(expectation(noise_a @ noise_a, state)))))
    eps_b = float(np.sqrt(max(0.0, np.real(expectation(noise_b @ noise_b, state)))))
    return _chain(
        eps_a,
        eps_b,
        mean_stddev(a, state)[1],
        mean_stddev(b, state)[1],
        mean_stddev(noise_a, state)[1],
        mean_stddev(noise_b, state)[1],
        half_commutator(noise_a, b, state),
        half_commutator(a, noise_b, state),
        half_commutator(a, b, state),
        config.slack_tol,
    )


def joint_povm_chain(a: Any, b: Any, joint: JointPOVM, state: DensityOperator) -> ChainReport:
    """Chain for the marginals of a joint POVM measuring ``A`` and ``B``."""
    povm_a, povm_b = marginals(joint)
    noise_a = assess_noise(a, povm_a, state)
    noise_b = assess_noise(b, povm_b, state)
    return _chain(
        noise_a.rms_noise,
        noise_b.rms_noise,
        mean_stddev(a, state)[1],
        mean_stddev(b, state)[1],
        noise_a.noise_stddev,
        noise_b.noise_stddev,
        half_commutator(noise_a.mean_noise_operator, b, state),
        half_commutator(a, noise_b.mean_noise_operator, state),
        half_commutator(a, b, state),
        joint.config.slack_tol,
    )


def instrument_chain(a: Any, b: Any, instr: KrausInstrument, state: DensityOperator) -> ChainReport:
    """Universal noise-disturbance chain: noise on ``A``, disturbance on ``B``."""
    noise = assess_noise(a, induced_povm(instr), state)
    disturbance = assess_disturbance(b, instr, state)
    return _chain(
        noise.rms_noise,
        disturbance.rms_disturbance,
        mean_stddev(a, state)[1],
        mean_stddev(b, state)[1],
        noise.noise_stddev,
        disturbance.disturbance_stddev,
        half_commutator(noise.mean_noise_operator, b, state),
        half_commutator(a, disturbance.mean_disturbance_operator, state),
        half_commutator(a, b, state),
        instr.config.slack_tol,
        disturbance=True,
    )


def heisenberg_check(a: Any, b: Any, instr: KrausInstrument, state: DensityOperator) -> HeisenbergReport:
    """Test the sufficient conditions for ``ε(A)η(B) ≥ ½|⟨[A,B]⟩|``."""
    cfg = instr.config
    povm = induced_povm(instr)
    noise = assess_noise(a, povm, state)
    disturbance = assess_disturbance(b, instr, state)
    noise_class = classify_noise(a, povm)
    disturbance_class = classify_disturbance(b, instr)
    product = noise.rms_noise * disturbance.rms_disturbance
    bound = half_commutator(a, b, state)
    return HeisenbergReport(
        condition_i=(
            max_norm(commutator(noise.mean_noise_operator, b)) <= cfg.commutation_tol
            and max_norm(commutator(disturbance.mean_disturbance_operator, a)) <= cfg.commutation_tol
        ),
        condition_ii=noise_class.uncorrelated and disturbance_class.uncorrelated,
        condition_iii=noise_class.unbiased and disturbance_class.unbiased,
        heisenberg_holds=product >= bound - cfg.slack_tol,
        product=product,
        bound=bound,
    )


def nondisturbing_bound(a: Any, b: Any, instr: KrausInstrument, state: DensityOperator) -> ChainLink:
    """``ε(A)ΔB ≥ ½|Tr([A,B]ρ)|`` for an instrument that leaves ``B`` undisturbed."""
    eta = assess_disturbance(b, instr, state).rms_disturbance
    if eta > instr.config.eta_zero_tol:
        raise DisturbanceNotZero(f"η(B) = {eta:.3e} exceeds {instr.config.eta_zero_tol:.1e}.")
    eps = assess_noise(a, induced_povm(instr), state).rms_noise
    return ChainLink("nondisturbing", eps * mean_stddev(b, state)[1], half_commutator(a, b, state))


def precise_measurement_bound(a: Any, b: Any, instr: KrausInstrument, state: DensityOperator) -> ChainLink:
    """``ΔA η(B) ≥ ½|⟨[A,B]⟩|`` for an instrument measuring ``A`` without noise."""
    eps = assess_noise(a, induced_povm(instr), state).rms_noise
    if eps > instr.config.eps_zero_tol:
        raise NoiseNotZero(f"ε(A) = {eps:.3e} exceeds {instr.config.eps_zero_tol:.1e}.")
    eta = assess_disturbance(b, instr, state).rms_disturbance
    return ChainLink("precise_measurement", mean_stddev(a, state)[1] * eta, half_commutator(a, b, state))


def uncorrelated_products(a: Any, b: Any, joint: JointPOVM, state: DensityOperator) -> UncorrelatedReport:
    """Product relations for a joint POVM whose marginals have uncorrelated noise."""
    povm_a, povm_b = marginals(joint)
    class_a, class_b = classify_noise(a, povm_a), classify_noise(b, povm_b)
    if not (class_a.uncorrelated and class_b.uncorrelated):
        raise NotUncorrelated(
            f"Marginal noise is not uncorrelated (A: {class_a.uncorrelated}, B: {class_b.uncorrelated})."
        )
    noise_a = assess_noise(a, povm_a, state)
    noise_b = assess_noise(b, povm_b, state)
    robertson = half_commutator(a, b, state)
    spread_product = noise_a.noise_stddev * noise_b.noise_stddev
    return UncorrelatedReport(
        eps_product_link=ChainLink("eps_product", noise_a.rms_noise * noise_b.rms_noise, spread_product),
        delta_n_link=ChainLink("noise_spread_product", spread_product, robertson),
        povm_spread_link=ChainLink(
            "povm_spread_product",
            povm_mean_stddev(povm_a, state)[1] * povm_mean_stddev(povm_b, state)[1],
            2 * robertson,
        ),
        tol=joint.config.slack_tol,
    )
