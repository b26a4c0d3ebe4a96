"""Numerical laboratory for a finite fermionic crystal coupled to its own
electrostatic field on a periodic torus.

The package builds many-electron ground states over a lattice of smeared
ions, checks the crystal (jellium) compatibility of the ion charge
profile, assembles the second variation of the energy at the ground
state, and integrates the coupled Schroedinger-Poisson-Newton dynamics to
measure orbital stability directly.
"""

from .density import (
    IonDensityModel,
    JelliumResult,
    WienerPoint,
    WienerReport,
    box_density,
    box_profile_transform,
    fourier_density,
    grid_density,
    jellium_check,
    load_density_file,
    perturbed_box_density,
    uniform_ion_check,
    wiener_matrix,
    wiener_report,
)
from .dynamics import (
    METHODS,
    CrystalState,
    EvolutionLog,
    IonState,
    StateDerivative,
    assemble_rho,
    energy,
    evolve,
    forces,
    rhs,
)
from .errors import (
    AdmissibilityError,
    CapacityError,
    ConfigError,
    DimensionMismatchError,
    FermicrystalError,
    FrequencyDomainError,
    IntegratorError,
    InvalidDensityError,
    ModelRefusalError,
    NeutralityError,
)
from .fermions import (
    CIVector,
    DeterminantBasis,
    SubstitutionTable,
    apply_kinetic,
    apply_one_body_potential,
    check_adr,
    ci_inner,
    enumerate_basis,
    ground_occupations,
    h1_inner,
    h1_norm,
    occupation_kinetic,
    one_body_density,
    orbital_kinetic,
    transition_density,
)
from .stability import (
    DistanceResult,
    GroundState,
    HessianForm,
    LinearizedDensity,
    SpectrumResult,
    StabilityResult,
    TangentVector,
    TrajectoryRecord,
    build_ground_state,
    charge_constraint_gradient,
    distance_to_manifold,
    first_variation_residual,
    hessian_assemble,
    hessian_spectrum,
    linearized_density,
    pack_tangent,
    perturbed_state,
    quadratic_form,
    run_trajectory,
    sample_tangent_perturbation,
    stability_experiment,
    tangent_space_vectors,
    translation_perturbation,
    unpack_tangent,
)
from .torus import (
    FourierScalarField,
    FrequencyTable,
    TorusSpec,
    coulomb_energy,
    dft_forward,
    dft_inverse,
    frequency_table,
    green_apply,
    lattice_points,
)

__version__ = "1.0.0"

__all__ = [
    "AdmissibilityError",
    "CIVector",
    "CapacityError",
    "ConfigError",
    "CrystalState",
    "DeterminantBasis",
    "DimensionMismatchError",
    "DistanceResult",
    "EvolutionLog",
    "FermicrystalError",
    "FourierScalarField",
    "FrequencyDomainError",
    "FrequencyTable",
    "GroundState",
    "HessianForm",
    "IntegratorError",
    "InvalidDensityError",
    "IonDensityModel",
    "IonState",
    "JelliumResult",
    "LinearizedDensity",
    "METHODS",
    "ModelRefusalError",
    "NeutralityError",
    "SpectrumResult",
    "StabilityResult",
    "StateDerivative",
    "SubstitutionTable",
    "TangentVector",
    "TorusSpec",
    "TrajectoryRecord",
    "WienerPoint",
    "WienerReport",
    "apply_kinetic",
    "apply_one_body_potential",
    "assemble_rho",
    "box_density",
    "box_profile_transform",
    "build_ground_state",
    "charge_constraint_gradient",
    "check_adr",
    "ci_inner",
    "coulomb_energy",
    "dft_forward",
    "dft_inverse",
    "distance_to_manifold",
    "energy",
    "enumerate_basis",
    "evolve",
    "first_variation_residual",
    "forces",
    "fourier_density",
    "frequency_table",
    "green_apply",
    "grid_density",
    "ground_occupations",
    "h1_inner",
    "h1_norm",
    "hessian_assemble",
    "hessian_spectrum",
    "jellium_check",
    "lattice_points",
    "linearized_density",
    "load_density_file",
    "occupation_kinetic",
    "one_body_density",
    "orbital_kinetic",
    "pack_tangent",
    "perturbed_box_density",
    "perturbed_state",
    "quadratic_form",
    "rhs",
    "run_trajectory",
    "sample_tangent_perturbation",
    "stability_experiment",
    "tangent_space_vectors",
    "transition_density",
    "translation_perturbation",
    "uniform_ion_check",
    "unpack_tangent",
    "wiener_matrix",
    "wiener_report",
]
