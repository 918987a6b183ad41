from typing import List

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt


class NumericConfig(BaseModel):
    """Tolerances shared by every contract check and inequality report."""

    model_config = ConfigDict(frozen=True)

    hermiticity_tol: PositiveFloat = 1e-10
    psd_tol: PositiveFloat = 1e-10
    trace_tol: PositiveFloat = 1e-10
    degeneracy_tol: PositiveFloat = 1e-8
    state_prob_floor: PositiveFloat = 1e-12
    completeness_tol: PositiveFloat = 1e-10
    unitarity_tol: PositiveFloat = 1e-10
    commutation_tol: PositiveFloat = 1e-9
    class_tol: PositiveFloat = 1e-9
    slack_tol: PositiveFloat = 1e-8
    eta_zero_tol: PositiveFloat = 1e-8
    eps_zero_tol: PositiveFloat = 1e-8
    optimizer_tol: PositiveFloat = 1e-6
    # effect eigenvalues at or below this are round-off when taking square roots
    root_cutoff: PositiveFloat = 1e-12


DEFAULT_CONFIG = NumericConfig()


class OptimizerConfig(BaseModel):
    """Settings of the pure-state infimum search used for gate fidelities."""

    model_config = ConfigDict(frozen=True)

    grid_size: PositiveInt = 64
    refine_starts: PositiveInt = 8
    tol: PositiveFloat = 1e-6
    cb_samples: PositiveInt = 1000
    seed: int = 0


class RunConfig(BaseModel):
    """Everything a CLI run depends on; echoed verbatim into its report."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(default=20040311, ge=0)
    numeric: NumericConfig = Field(default_factory=NumericConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    dims: List[PositiveInt] = Field(default_factory=lambda: [2, 3, 4])
    ancilla_dims: List[PositiveInt] = Field(default_factory=lambda: [2, 3, 4, 5])

    # sample counts
    chain_samples: PositiveInt = 10_000
    joint_samples: PositiveInt = 1_000
    zero_noise_samples: PositiveInt = 200
    dilation_samples: PositiveInt = 200
    way_samples: PositiveInt = 500
    sign_samples: PositiveInt = 500

    # gate scenarios
    mean_photons: float = Field(default=1.0, ge=0.0)
    n_spins: PositiveInt = 1
    cutoff: PositiveInt = 16
    restarts: PositiveInt = 20
    iterations: PositiveInt = 150

    n_jobs: int = 1
    progress: bool = False
