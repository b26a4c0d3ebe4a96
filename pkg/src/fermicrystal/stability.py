"""Ground states, the energy Hessian, and orbital-stability experiments.

A ground state is built from a crystal-compatible ion density sigma and a
determinant basis: the CI vector is supported on occupation sets of
minimal total kinetic energy, normalized to Q = Z, placed on the lattice
with a common shift r and phase alpha.  Such states form the solitary
manifold S (orbit of phase rotations and rigid translations); on the
charge manifold Q = Z they minimize the energy with value omega0 Z.

Around S the energy expands to second order as

    (1/2) <Y, E'' Y> = sum_I E_kin(I) |C_phi(I)|^2
                       + (1/2) (rho1, G rho1)
                       + sum_n |pi(n)|^2 / (2 M),

with Y = (phi, kappa, pi) and rho1 the linearized charge density: the ion
part carries i sigma_hat(xi) (xi . kappa_hat(xi)) exp(i xi r) and the
electron part -e [P(xi) + conj(P(-xi))] with the transition amplitude
P(xi) = <sum_j exp(i xi x_j) psi, phi>.  The form is assembled as an
explicit symmetric matrix from the linear density map, and every entry can
be cross-checked against central differences of the plain energy because
both sides share one spectral truncation.

The kernel of the form on the full coordinate space is the translation
block plus the flat ion space measured independently by the Wiener report;
restricted to the normal-times-constraint subspace the form is positive
definite exactly when the flat space is trivial, and that positivity is
what the long-time perturbation runs probe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .density import IonDensityModel, jellium_check
from .dynamics import CrystalState, IonState, energy, evolve
from .errors import AdmissibilityError, DimensionMismatchError, ModelRefusalError
from .fermions import (
    CIVector,
    DeterminantBasis,
    apply_kinetic,
    check_adr,
    ground_occupations,
    h1_inner,
    h1_norm,
    transition_density,
)
from .torus import FourierScalarField, frequency_table, lattice_points


@dataclass(eq=False)
class GroundState:
    """A solitary-manifold point S = (exp(i alpha) psi0, r-bar, 0)."""

    basis: DeterminantBasis
    sigma: IonDensityModel
    psi0: CIVector
    omega0: float
    minimal_sets: list
    r: np.ndarray
    alpha: float
    mass: float

    @property
    def spec(self):
        return self.basis.spec

    @property
    def Z(self) -> float:
        return self.sigma.Z

    def psi_alpha(self) -> CIVector:
        return CIVector(self.basis, np.exp(1j * self.alpha) * self.psi0.values)

    def state(self) -> CrystalState:
        """The crystal state S as dynamical initial data."""
        spec = self.spec
        q = np.tile(self.r, (spec.n_ions, 1)).astype(float)
        p = np.zeros_like(q)
        return CrystalState(self.psi_alpha(), IonState(q, p, self.mass))


def build_ground_state(
    basis: DeterminantBasis,
    sigma: IonDensityModel,
    choice=None,
    r=None,
    alpha: float = 0.0,
    mass: float = 1.0,
    jellium_tol: float = 1e-10,
) -> GroundState:
    """Construct a ground state, refusing densities without the crystal property.

    ``choice`` selects the CI content: ``None``/"first" or an integer picks
    one minimal occupation set; a mapping {occupation: amplitude} requests a
    mixture, which must consist of minimal sets whose pairs differ in at
    least two orbitals (otherwise the charge density is not uniform and the
    state is rejected).  The amplitude vector is rescaled to Q = Z.
    """
    if sigma.spec != basis.spec:
        raise DimensionMismatchError("density model and basis live on different tori")
    verdict = jellium_check(sigma, tol=jellium_tol)
    if not verdict.passes:
        raise ModelRefusalError(
            "ion density is not crystal compatible: "
            f"|sigma_hat| = {verdict.worst_value:.3e} at h = {verdict.worst_h} "
            f"exceeds {verdict.tolerance:.3e}; the lattice sum is not uniform"
        )
    spec = basis.spec
    minimal_sets, omega0 = ground_occupations(spec)
    missing = [occ for occ in minimal_sets if occ not in basis]
    if missing:
        raise AdmissibilityError(
            f"basis cutoff {basis.cutoff:.6g} excludes {len(missing)} minimal "
            "occupation sets; enlarge the basis"
        )

    if choice is None or choice == "first":
        amplitudes = {minimal_sets[0]: 1.0}
    elif isinstance(choice, int):
        amplitudes = {minimal_sets[choice]: 1.0}
    else:
        amplitudes = {tuple(occ): amp for occ, amp in dict(choice).items()}
        outside = [occ for occ in amplitudes if occ not in minimal_sets]
        if outside:
            raise AdmissibilityError(
                f"occupation {outside[0]} is not a minimal set; "
                "mixtures must stay inside the ground eigenspace"
            )
        if not check_adr(list(amplitudes)):
            raise AdmissibilityError(
                "mixture contains occupation sets differing in exactly one "
                "orbital; its charge density would not be uniform"
            )
    psi0 = CIVector.from_occupations(basis, amplitudes)
    norm = psi0.charge()
    if norm <= 0.0:
        raise AdmissibilityError("ground amplitudes are all zero")
    psi0.values *= np.sqrt(sigma.Z / norm)
    r_vec = np.zeros(spec.dimension) if r is None else np.asarray(r, dtype=float)
    return GroundState(basis, sigma, psi0, omega0, minimal_sets, r_vec,
                       float(alpha), float(mass))


@dataclass(eq=False)
class TangentVector:
    """Perturbation coordinates Y = (phi, kappa, pi) at a ground state."""

    phi: CIVector
    kappa: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        spec = self.phi.basis.spec
        shape = (spec.n_ions, spec.dimension)
        self.kappa = np.asarray(self.kappa, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        if self.kappa.shape != shape or self.pi.shape != shape:
            raise DimensionMismatchError(f"ion blocks must have shape {shape}")

    @classmethod
    def zeros(cls, basis: DeterminantBasis) -> "TangentVector":
        spec = basis.spec
        shape = (spec.n_ions, spec.dimension)
        return cls(CIVector.zeros(basis), np.zeros(shape), np.zeros(shape))

    def v_norm(self) -> float:
        """|Y|_V = ||phi||_{H^1} + |kappa| + |pi|."""
        return (h1_norm(self.phi) + float(np.linalg.norm(self.kappa))
                + float(np.linalg.norm(self.pi)))


def pack_tangent(y: TangentVector) -> np.ndarray:
    """Flatten Y into real coordinates (Re C, Im C, kappa, pi)."""
    return np.concatenate([
        y.phi.values.real, y.phi.values.imag, y.kappa.ravel(), y.pi.ravel()
    ])


def unpack_tangent(basis: DeterminantBasis, vector: np.ndarray) -> TangentVector:
    spec = basis.spec
    b = basis.size
    shape = (spec.n_ions, spec.dimension)
    block = spec.n_ions * spec.dimension
    if vector.shape != (2 * b + 2 * block,):
        raise DimensionMismatchError(
            f"expected packed length {2 * b + 2 * block}, got {vector.shape}"
        )
    phi = CIVector(basis, vector[:b] + 1j * vector[b : 2 * b])
    kappa = vector[2 * b : 2 * b + block].reshape(shape)
    pi = vector[2 * b + block :].reshape(shape)
    return TangentVector(phi, kappa, pi)


def tangent_space_vectors(gs: GroundState) -> np.ndarray:
    """Orthogonal basis of T_S S, packed: gauge rotation and d translations."""
    psi = gs.psi_alpha()
    rows = [pack_tangent(TangentVector(
        CIVector(gs.basis, 1j * psi.values),
        np.zeros((gs.spec.n_ions, gs.spec.dimension)),
        np.zeros((gs.spec.n_ions, gs.spec.dimension)),
    ))]
    for axis in range(gs.spec.dimension):
        kappa = np.zeros((gs.spec.n_ions, gs.spec.dimension))
        kappa[:, axis] = 1.0
        rows.append(pack_tangent(TangentVector(
            CIVector.zeros(gs.basis), kappa,
            np.zeros((gs.spec.n_ions, gs.spec.dimension)),
        )))
    return np.stack(rows)


def charge_constraint_gradient(gs: GroundState) -> np.ndarray:
    """Packed gradient of Re <psi_alpha, phi>, normal to T_S M."""
    psi = gs.psi_alpha()
    return pack_tangent(TangentVector(
        psi, np.zeros((gs.spec.n_ions, gs.spec.dimension)),
        np.zeros((gs.spec.n_ions, gs.spec.dimension)),
    ))


@dataclass(eq=False)
class LinearizedDensity:
    """First-order charge density response along a perturbation."""

    ion: FourierScalarField
    electron: FourierScalarField

    @property
    def total(self) -> FourierScalarField:
        return self.ion + self.electron


def linearized_density(gs: GroundState, y: TangentVector) -> LinearizedDensity:
    """rho1 along Y: displaced-ion gradient term plus the transition term."""
    spec = gs.spec
    table = frequency_table(spec)
    ions = lattice_points(spec)
    kappa_hat = np.exp(1j * table.xi @ ions.T) @ y.kappa  # (n_freq, d)
    shift = np.exp(1j * table.xi @ gs.r)
    ion_values = 1j * gs.sigma.field.values * shift * (table.xi * kappa_hat).sum(axis=1)
    p = transition_density(gs.psi_alpha(), y.phi)
    electron_values = -gs.sigma.e * (p.values + np.conj(p.values[table.conj]))
    return LinearizedDensity(
        FourierScalarField(spec, ion_values),
        FourierScalarField(spec, electron_values),
    )


def quadratic_form(gs: GroundState, y: TangentVector) -> float:
    """(1/2) <Y, E''(S) Y> evaluated directly from the expansion terms."""
    basis = gs.basis
    table = frequency_table(gs.spec)
    kinetic = float((basis.kinetic * np.abs(y.phi.values) ** 2).sum())
    rho1 = linearized_density(gs, y).total
    mask = np.arange(table.size) != table.zero
    coulomb = float(
        (np.abs(rho1.values[mask]) ** 2 / table.xi_sq[mask]).sum()
        / (2.0 * gs.spec.volume)
    )
    momentum = float((y.pi**2).sum() / (2.0 * gs.mass))
    return kinetic + coulomb + momentum


@dataclass(eq=False)
class HessianForm:
    """Symmetric matrix H with (1/2) <Y, E'' Y> = (1/2) y^T H y in packed coordinates."""

    gs: GroundState
    matrix: np.ndarray

    def form(self, y: TangentVector) -> float:
        v = pack_tangent(y)
        return 0.5 * float(v @ self.matrix @ v)


def hessian_assemble(gs: GroundState) -> HessianForm:
    """Assemble the quadratic form by evaluating the density response columnwise.

    The Coulomb block is rho1-map^H diag(w) rho1-map with w = 1/(|xi|^2 |T|)
    and the xi = 0 weight zeroed, on top of the diagonal kinetic blocks
    2 E_kin (twice, real and imaginary parts) and 1/M on the momenta.
    """
    basis = gs.basis
    spec = gs.spec
    table = frequency_table(spec)
    b = basis.size
    block = spec.n_ions * spec.dimension
    n = 2 * b + 2 * block
    psi = gs.psi_alpha()
    sub = basis.substitutions()

    # P_all[:, I] = transition amplitudes <M_xi psi, D_I>
    p_all = np.zeros((table.size, b), dtype=complex)
    np.add.at(p_all, (sub.delta, sub.dst), psi.values[sub.src] * sub.sign)
    p_all[table.zero, :] += basis.n_electrons * psi.values

    response = np.zeros((table.size, n), dtype=complex)
    p_conj = np.conj(p_all[table.conj, :])
    response[:, :b] = -gs.sigma.e * (p_all + p_conj)
    response[:, b : 2 * b] = -gs.sigma.e * (-1j * p_all + 1j * p_conj)

    ions = lattice_points(spec)
    shift = np.exp(1j * table.xi @ gs.r)
    site_phase = np.exp(1j * table.xi @ ions.T)  # (n_freq, n_ions)
    base = 1j * gs.sigma.field.values * shift
    for site in range(spec.n_ions):
        for axis in range(spec.dimension):
            column = 2 * b + site * spec.dimension + axis
            response[:, column] = base * table.xi[:, axis] * site_phase[:, site]

    weights = np.zeros(table.size)
    mask = np.arange(table.size) != table.zero
    weights[mask] = 1.0 / (table.xi_sq[mask] * spec.volume)
    coulomb = ((np.conj(response.T) * weights) @ response).real

    diagonal = np.concatenate([
        2.0 * basis.kinetic, 2.0 * basis.kinetic,
        np.zeros(block), np.full(block, 1.0 / gs.mass),
    ])
    matrix = coulomb + np.diag(diagonal)
    return HessianForm(gs, 0.5 * (matrix + matrix.T))


@dataclass(eq=False)
class SpectrumResult:
    eigenvalues: np.ndarray
    kernel_dim: int
    lambda_min: float
    tolerance: float


def hessian_spectrum(
    form: HessianForm,
    subspace: str = "full",
    kernel_rtol: float = 1e-9,
) -> SpectrumResult:
    """Eigenvalues of the form matrix, optionally on N_S S intersect T_S M.

    The constrained subspace removes the gauge and translation directions
    and the radial direction normal to the charge constraint; on it the
    form is positive definite exactly when no flat ion space exists.
    Eigenvalues with |lambda| <= kernel_rtol * max |lambda| count as kernel.
    """
    matrix = form.matrix
    if subspace == "constrained":
        spanned = np.vstack([
            tangent_space_vectors(form.gs),
            charge_constraint_gradient(form.gs)[None, :],
        ])
        _, singular, vh = np.linalg.svd(spanned, full_matrices=True)
        rank = int((singular > 1e-12 * singular[0]).sum())
        complement = vh[rank:]
        matrix = complement @ matrix @ complement.T
    elif subspace != "full":
        raise ValueError(f"unknown subspace {subspace!r}")
    eigenvalues = np.linalg.eigvalsh(matrix)
    scale = float(np.abs(eigenvalues).max(initial=0.0))
    tolerance = kernel_rtol * max(scale, 1e-300)
    kernel_dim = int((np.abs(eigenvalues) <= tolerance).sum())
    return SpectrumResult(eigenvalues, kernel_dim, float(eigenvalues.min()), tolerance)


def first_variation_residual(gs: GroundState, y: TangentVector, h: float = 1e-5) -> float:
    """Centered directional derivative of E at S along Y.

    Vanishes on directions tangent to the charge constraint; along the
    radial direction psi_alpha itself it equals 2 omega0 Z, which is why
    criticality of S is only meaningful relative to the constraint.
    """
    plus = _displaced_state(gs, y, h)
    minus = _displaced_state(gs, y, -h)
    return (energy(plus, gs.sigma) - energy(minus, gs.sigma)) / (2.0 * h)


def _displaced_state(gs: GroundState, y: TangentVector, scale: float) -> CrystalState:
    psi = CIVector(gs.basis, gs.psi_alpha().values + scale * y.phi.values)
    q = np.tile(gs.r, (gs.spec.n_ions, 1)) + scale * y.kappa
    p = scale * y.pi
    return CrystalState(psi, IonState(q, p, gs.mass))


def perturbed_state(gs: GroundState, y: TangentVector, delta: float) -> CrystalState:
    """S + delta Y, then a one-time rescaling of psi back to the charge Q = Z."""
    state = _displaced_state(gs, y, delta)
    q_val = state.psi.charge()
    if q_val <= 0.0:
        raise AdmissibilityError("perturbed state has vanishing charge")
    state.psi.values *= np.sqrt(gs.Z / q_val)
    return state


@dataclass(eq=False)
class DistanceResult:
    distance: float
    alpha: float
    r: np.ndarray
    psi_part: float
    ion_part: float
    momentum_part: float


def distance_to_manifold(state: CrystalState, gs: GroundState) -> DistanceResult:
    """d(X, S): infimum over phase and lattice shift of the orbit metric.

    The phase minimizer is closed form, alpha = arg <psi, psi0>_{H^1}; the
    shift minimizes the wrapped quadratic per axis (the objective is
    separable), scanned on a 16-point grid and polished by fixed-point
    recentering steps r <- r + mean(wrap(q - r)), which is Newton's method
    on the smooth branches.
    """
    if state.psi.basis is not gs.basis:
        raise DimensionMismatchError("state and ground state use different bases")
    z = h1_inner(state.psi, gs.psi0)
    alpha = float(np.angle(z)) if z != 0 else 0.0
    diff = state.psi.values - np.exp(1j * alpha) * gs.psi0.values
    weight = 1.0 + gs.basis.ksq_total
    psi_part = float(np.sqrt((weight * np.abs(diff) ** 2).sum()))

    n = gs.spec.cells_per_axis
    q = state.ions.q
    r_best = np.zeros(gs.spec.dimension)
    for axis in range(gs.spec.dimension):
        column = q[:, axis]
        candidates = np.arange(16) * (n / 16.0)
        wrapped = (column[None, :] - candidates[:, None] + n / 2.0) % n - n / 2.0
        best = int(np.argmin((wrapped**2).sum(axis=1)))
        r_axis = float(candidates[best])
        for _ in range(20):
            w = (column - r_axis + n / 2.0) % n - n / 2.0
            step = float(w.mean())
            r_axis += step
            if abs(step) < 1e-15 * max(1.0, n):
                break
        r_best[axis] = r_axis % n
    wrapped = (q - r_best[None, :] + n / 2.0) % n - n / 2.0
    ion_part = float(np.linalg.norm(wrapped))
    momentum_part = float(np.linalg.norm(state.ions.p))
    return DistanceResult(
        psi_part + ion_part + momentum_part, alpha, r_best,
        psi_part, ion_part, momentum_part,
    )


def sample_tangent_perturbation(gs: GroundState, rng: np.random.Generator) -> TangentVector:
    """A random direction orthogonal to T_S S and tangent to the charge manifold,
    normalized to unit |.|_V."""
    b = gs.basis.size
    block = gs.spec.n_ions * gs.spec.dimension
    vector = rng.standard_normal(2 * b + 2 * block)
    removed = np.vstack([
        tangent_space_vectors(gs),
        charge_constraint_gradient(gs)[None, :],
    ])
    for row in removed:
        norm_sq = float(row @ row)
        if norm_sq > 0.0:
            vector -= (vector @ row) / norm_sq * row
    # repeat once; plain Gram-Schmidt against a non-orthogonal family
    for row in removed:
        norm_sq = float(row @ row)
        if norm_sq > 0.0:
            vector -= (vector @ row) / norm_sq * row
    y = unpack_tangent(gs.basis, vector)
    scale = y.v_norm()
    if scale <= 0.0:
        raise AdmissibilityError("sampled perturbation collapsed to zero")
    y.phi.values /= scale
    y.kappa /= scale
    y.pi /= scale
    return y


def translation_perturbation(gs: GroundState, axis: int) -> TangentVector:
    """Unit-|.|_V rigid translation direction along one axis."""
    kappa = np.zeros((gs.spec.n_ions, gs.spec.dimension))
    kappa[:, axis] = 1.0
    kappa /= np.linalg.norm(kappa)
    return TangentVector(CIVector.zeros(gs.basis), kappa, np.zeros_like(kappa))


@dataclass(eq=False)
class TrajectoryRecord:
    label: str
    delta: float
    t: np.ndarray
    distance: np.ndarray
    energy: np.ndarray
    charge: np.ndarray

    @property
    def sup_distance(self) -> float:
        return float(self.distance.max())

    @property
    def final_distance(self) -> float:
        return float(self.distance[-1])

    def max_energy_drift(self) -> float:
        return float(np.abs(self.energy - self.energy[0]).max())

    def max_charge_drift(self) -> float:
        return float(np.abs(self.charge - self.charge[0]).max())


def run_trajectory(
    gs: GroundState,
    perturbation: Optional[TangentVector],
    delta: float,
    duration: float,
    dt: float,
    method: str = "implicit_midpoint",
    fp_tol: float = 1e-13,
    label: str = "",
) -> TrajectoryRecord:
    """Evolve one perturbed ground state, tracking the distance to S."""
    if perturbation is None or delta == 0.0:
        initial = gs.state()
    else:
        initial = perturbed_state(gs, perturbation, delta)
    distances = []

    def observer(t, state):
        distances.append(distance_to_manifold(state, gs).distance)

    _, log = evolve(initial, gs.sigma, dt, duration, method=method,
                    fp_tol=fp_tol, observer=observer)
    return TrajectoryRecord(
        label or "trajectory", float(delta), log.t, np.array(distances),
        log.energy, log.charge,
    )


@dataclass(eq=False)
class StabilityResult:
    records: list

    def sup_distance_per_delta(self) -> dict:
        """Worst sup-distance over perturbations, keyed by delta."""
        out: dict = {}
        for record in self.records:
            if record.label.startswith("perturbation"):
                key = record.delta
                out[key] = max(out.get(key, 0.0), record.sup_distance)
        return out


def stability_experiment(
    gs: GroundState,
    deltas: Sequence[float],
    n_perturbations: int = 8,
    duration: float = 10.0,
    dt: float = 1e-3,
    seed: int = 0,
    method: str = "implicit_midpoint",
    fp_tol: float = 1e-13,
    include_controls: bool = True,
) -> StabilityResult:
    """Seeded batch of perturbation runs plus zero and translation controls.

    Perturbation directions are drawn once per index from spawned seed
    streams and reused across all deltas, so the map delta -> sup-distance
    is meaningful direction by direction.
    """
    streams = np.random.SeedSequence(seed).spawn(n_perturbations)
    directions = [
        sample_tangent_perturbation(gs, np.random.default_rng(stream))
        for stream in streams
    ]
    records = []
    if include_controls:
        records.append(run_trajectory(
            gs, None, 0.0, duration, dt, method, fp_tol, label="zero"))
        for axis in range(gs.spec.dimension):
            records.append(run_trajectory(
                gs, translation_perturbation(gs, axis), max(deltas), duration,
                dt, method, fp_tol, label=f"translation-{axis}"))
    for index, direction in enumerate(directions):
        for delta in deltas:
            records.append(run_trajectory(
                gs, direction, delta, duration, dt, method, fp_tol,
                label=f"perturbation-{index}"))
    return StabilityResult(records)
