"""Ion charge densities and their crystal-sum diagnostics.

A single ion carries the smooth density sigma with total charge
int sigma = e Z > 0.  Two structural properties of sigma control the whole
theory:

* the crystal condition sigma_hat(xi) = 0 on gamma* \\ {0}, gamma* = 2 pi Z^d,
  which makes the lattice sum sum_n sigma(x - n) identically equal to e Z
  (so a uniform electron background cancels it exactly), and

* the positivity of the matrix series

      Sigma(theta) = sum_{m in Z^d} [ (xi xi^T / |xi|^2) |sigma_hat(xi)|^2 ],
      xi = theta + 2 pi m,

  on theta in the dual cell away from 0, which decides whether the energy
  Hessian at a ground state has any flat ion directions beyond rigid
  translations.

Box products sigma_k with per-axis profile chi_k (k-fold self-convolution
of the unit box) have the closed transform e Z prod_i (2 sin(s/2)/s)^k and
satisfy the crystal condition for every k; for d >= 2 they vanish on whole
hyperplanes off gamma*, so positivity fails.  The perturbed box adds a
strictly positive bump off gamma*, restoring positivity while keeping the
crystal condition and the total charge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FrequencyDomainError, InvalidDensityError
from .torus import (
    TWO_PI,
    FourierScalarField,
    TorusSpec,
    dft_forward,
    dft_inverse,
    frequency_table,
    lattice_points,
)


def box_profile_transform(s: np.ndarray, k: int) -> np.ndarray:
    """(2 sin(s/2)/s)^k with the value 1 at s = 0."""
    return np.sinc(np.asarray(s, dtype=float) / TWO_PI) ** k


def _box_transform(xi: np.ndarray, k: int, charge: float) -> np.ndarray:
    return charge * np.prod(box_profile_transform(xi, k), axis=-1)


def _perturbed_box_transform(
    xi: np.ndarray, k: int, amplitude: float, decay: float, charge: float
) -> np.ndarray:
    # The bump sum_i sin^2(xi_i / 2) vanishes exactly on gamma* and nowhere
    # else; the per-axis algebraic decay keeps |sigma_hat| <= C / |xi|^2.
    xi = np.asarray(xi, dtype=float)
    box = np.prod(box_profile_transform(xi, k), axis=-1)
    bump = (np.sin(xi / 2.0) ** 2).sum(axis=-1)
    envelope = np.prod(1.0 / (1.0 + (xi / TWO_PI) ** 2), axis=-1) ** decay
    return charge * (box + amplitude * bump * envelope)


@dataclass(eq=False)
class IonDensityModel:
    """A single-ion charge density together with its retained transform.

    Attributes
    ----------
    spec : TorusSpec
    kind : str
        One of ``box``, ``perturbed_box``, ``grid``, ``fourier``.
    Z, e : float
        Ion charge number and unit charge; total charge is e Z.
    field : FourierScalarField
        sigma_hat on the retained frequencies.
    params : tuple
        Kind-specific parameters, kept for closed-form evaluation.
    """

    spec: TorusSpec
    kind: str
    Z: float
    e: float
    field: FourierScalarField
    params: tuple = ()

    def __post_init__(self):
        if self.e * self.Z <= 0.0:
            raise InvalidDensityError(
                f"total ion charge e Z must be positive, got {self.e * self.Z:.3e}"
            )
        if not self.field.is_real(1e-10):
            raise InvalidDensityError("sigma must be real: transform not conjugate symmetric")
        total = self.field.values[self.field.table.zero]
        if abs(total - self.e * self.Z) > 1e-10 * abs(self.e * self.Z):
            raise InvalidDensityError(
                f"total charge {total:.12g} does not match e Z = {self.e * self.Z:.12g}"
            )

    @property
    def charge(self) -> float:
        return self.e * self.Z

    def sigma_tilde(self, xi: np.ndarray) -> np.ndarray:
        """Evaluate sigma_hat at arbitrary frequency vectors.

        Closed-form kinds evaluate exactly at any xi; sampled kinds can only
        look up retained coefficients and raise beyond the cutoff.
        """
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if self.kind == "box":
            (k,) = self.params
            return _box_transform(xi, k, self.charge)
        if self.kind == "perturbed_box":
            k, amplitude, decay = self.params
            return _perturbed_box_transform(xi, k, amplitude, decay, self.charge)
        table = self.field.table
        h = xi * self.spec.cells_per_axis / TWO_PI
        h_int = np.rint(h).astype(int)
        if not np.allclose(h, h_int, atol=1e-9):
            raise FrequencyDomainError("xi is not on the frequency lattice of this torus")
        out = np.empty(len(h_int), dtype=complex)
        for i, row in enumerate(h_int):
            out[i] = self.field.values[table.position(row)]
        return out


def _field_from_transform(spec: TorusSpec, evaluate) -> FourierScalarField:
    table = frequency_table(spec)
    return FourierScalarField(spec, np.asarray(evaluate(table.xi), dtype=complex))


def box_density(spec: TorusSpec, k: int, Z: float = 1.0, e: float = 1.0) -> IonDensityModel:
    """Product box density sigma_k, centered on the ion so the transform is real."""
    if k < 1:
        raise InvalidDensityError("box order k must be a positive integer")
    field = _field_from_transform(spec, lambda xi: _box_transform(xi, k, e * Z))
    return IonDensityModel(spec, "box", Z, e, field, params=(k,))


def perturbed_box_density(
    spec: TorusSpec,
    k: int = 2,
    amplitude: float = 0.5,
    decay: float = 2.0,
    Z: float = 1.0,
    e: float = 1.0,
) -> IonDensityModel:
    """Box density of even order plus a bump that is positive off gamma*.

    For even k the box transform is nonnegative everywhere, so the sum with
    the strictly positive bump cannot vanish off gamma*: the genericity that
    the positivity of Sigma(theta) needs holds by construction.
    """
    if k % 2 != 0:
        raise InvalidDensityError("perturbed box requires even k so the sum stays nonnegative")
    if amplitude <= 0.0:
        raise InvalidDensityError("perturbation amplitude must be positive")
    field = _field_from_transform(
        spec, lambda xi: _perturbed_box_transform(xi, k, amplitude, decay, e * Z)
    )
    return IonDensityModel(spec, "perturbed_box", Z, e, field, params=(k, amplitude, decay))


def grid_density(
    spec: TorusSpec, samples: np.ndarray, Z: float, e: float
) -> IonDensityModel:
    """Density given by real-space grid samples of a single ion's charge."""
    samples = np.asarray(samples, dtype=float)
    field = dft_forward(samples, spec)
    return IonDensityModel(spec, "grid", Z, e, field)


def fourier_density(
    spec: TorusSpec, field: FourierScalarField, Z: float, e: float
) -> IonDensityModel:
    """Density given directly by retained Fourier coefficients."""
    return IonDensityModel(spec, "fourier", Z, e, field.copy())


def load_density_file(path) -> IonDensityModel:
    """Read a grid density file: header ``d N n_g Z e``, then n_g^d samples.

    Samples are whitespace separated in C order (last axis fastest).
    """
    with open(path) as handle:
        tokens = handle.read().split()
    if len(tokens) < 5:
        raise InvalidDensityError(f"density file {path}: missing header fields")
    try:
        d, n, n_g = int(tokens[0]), int(tokens[1]), int(tokens[2])
        z_val, e_val = float(tokens[3]), float(tokens[4])
        values = np.array([float(t) for t in tokens[5:]])
    except ValueError as exc:
        raise InvalidDensityError(f"density file {path}: {exc}") from None
    if values.size != n_g**d:
        raise InvalidDensityError(
            f"density file {path}: expected {n_g**d} samples, found {values.size}"
        )
    spec = TorusSpec(d, n, n_g)
    return grid_density(spec, values.reshape((n_g,) * d), z_val, e_val)


@dataclass(eq=False)
class JelliumResult:
    passes: bool
    worst_h: Optional[tuple]
    worst_value: float
    tolerance: float


def jellium_check(
    model: IonDensityModel, tol: float = 1e-10, radius: Optional[float] = None
) -> JelliumResult:
    """Verify sigma_hat = 0 on gamma* \\ {0} up to tol * e Z.

    Closed-form densities are scanned over all of gamma* within ``radius``
    (default: the retained cutoff); sampled densities over the retained set.
    Returns the worst offender so failures are actionable.
    """
    if model.charge <= 0.0:
        raise InvalidDensityError("jellium check needs positive total charge")
    spec = model.spec
    radius = spec.cutoff_radius if radius is None else float(radius)
    if model.kind in ("box", "perturbed_box"):
        m_max = int(np.floor(radius / TWO_PI + 1e-9))
        axis = np.arange(-m_max, m_max + 1)
        mesh = np.meshgrid(*([axis] * spec.dimension), indexing="ij")
        m = np.stack([g.ravel() for g in mesh], axis=1)
        m = m[np.any(m != 0, axis=1)]
        xi = TWO_PI * m.astype(float)
        keep = np.sqrt((xi**2).sum(axis=1)) <= radius + 1e-12
        m, xi = m[keep], xi[keep]
        values = np.abs(model.sigma_tilde(xi))
        h = m * spec.cells_per_axis
    else:
        table = model.field.table
        mask = table.gamma_star.copy()
        mask[table.zero] = False
        keep = np.sqrt(table.xi_sq[mask]) <= radius + 1e-12
        h = table.h[mask][keep]
        values = np.abs(model.field.values[mask][keep])
    threshold = tol * abs(model.charge)
    if values.size == 0:
        return JelliumResult(True, None, 0.0, threshold)
    worst = int(np.argmax(values))
    return JelliumResult(
        bool(values[worst] <= threshold),
        tuple(int(c) for c in h[worst]),
        float(values[worst]),
        threshold,
    )


def uniform_ion_check(model: IonDensityModel) -> float:
    """Max deviation of the undisplaced crystal sum from the constant e Z.

    Real-space oracle: synthesize sigma on the grid once and accumulate the
    lattice sum by rolling the array, one whole-cell shift per ion.  N | n_g
    makes every shift an integer number of grid steps, so no interpolation
    enters.
    """
    spec = model.spec
    sigma_grid = dft_inverse(model.field).real
    step = spec.grid_per_axis // spec.cells_per_axis
    total = np.zeros_like(sigma_grid)
    for n in lattice_points(spec):
        total += np.roll(sigma_grid, shift=tuple(int(c) * step for c in n),
                         axis=tuple(range(spec.dimension)))
    return float(np.abs(total - model.charge).max())


@dataclass(eq=False)
class WienerPoint:
    """Sigma(theta) at one dual-cell point, with its spectral summary."""

    h: tuple
    theta: np.ndarray
    matrix: np.ndarray
    eigenvalues: np.ndarray
    kernel_dim: int
    kernel_basis: np.ndarray


@dataclass(eq=False)
class WienerReport:
    points: list
    wiener_holds: bool
    degeneracy_dim: int
    truncation_radius: float
    kernel_tolerance: float
    tail_bound: float

    def point(self, h) -> WienerPoint:
        key = tuple(int(c) for c in h)
        for p in self.points:
            if p.h == key:
                return p
        raise KeyError(f"no dual-cell point {key} in report")


def _box_axis_tail(k: int, length: float) -> float:
    """sum of (2/|s|)^{2k} over a 2 pi spaced shifted 1-d lattice, |s| > length.

    The j-th nearest pair of lattice points to the origin sits at
    |s| >= pi (2j - 1) whatever the shift, so the sum is at most twice the
    tail of (2 / (pi (2j - 1)))^{2k}; 64 explicit terms plus an integral
    remainder.  Dominates the per-axis tail of |sinc(s / 2 pi)|^{2k}.
    """
    j0 = max(1, int(np.ceil((length / np.pi + 1.0) / 2.0)))
    power = 2 * k
    head = sum((2.0 / (np.pi * (2 * j - 1))) ** power for j in range(j0, j0 + 64))
    j1 = j0 + 64
    # integral test: sum_{j >= j1} f(j) <= f(j1) + int_{j1}^inf f
    remainder = (2.0 / (np.pi * (2 * j1 - 1))) ** power + (
        (2.0 / np.pi) ** power * (2 * j1 - 1) ** (1 - power) / (2 * (power - 1))
    )
    return 2.0 * (head + remainder)


def _bump_axis_tail(decay: float, length: float) -> float:
    """Same per-axis tail for the envelope (1 + (s / 2 pi)^2)^{-2 decay}."""
    j0 = max(1, int(np.ceil((length / np.pi + 1.0) / 2.0)))
    arguments = np.pi * (2.0 * np.arange(j0, j0 + 64) - 1.0)
    head = float((1.0 / (1.0 + (arguments / TWO_PI) ** 2) ** (2.0 * decay)).sum())
    j1 = j0 + 64
    power = 4.0 * decay  # (1 + u^2)^{-2 decay} <= u^{-4 decay}
    remainder = (2.0 / (2 * j1 - 1)) ** power + (
        2.0**power * (2 * j1 - 1) ** (1.0 - power) / (2.0 * (power - 1.0))
    )
    return 2.0 * (head + remainder)


def _spectral_tail_bound(model: IonDensityModel, radius: float) -> float:
    """Bound on sum_{xi in theta + 2 pi Z^d, |xi| > radius} |sigma_hat(xi)|^2.

    Each dropped term of Sigma(theta) is positive semidefinite with trace
    |sigma_hat(xi)|^2, so this sum bounds the spectral error of the
    truncation.  The ball complement is covered by the union of the d slabs
    |xi_i| > radius / sqrt(d); on each slab the closed-form transforms
    factorize per axis and every full 1-d lattice sum of |sinc|^{2k} is at
    most 1 (the k-fold box convolutions are a nonnegative partition of
    unity), leaving one explicit 1-d tail per slab.
    """
    d = model.spec.dimension
    length = radius / np.sqrt(d)
    scale = model.charge**2
    if model.kind == "box":
        (k,) = model.params
        return scale * d * _box_axis_tail(k, length)
    if model.kind == "perturbed_box":
        k, amplitude, decay = model.params
        box_part = d * _box_axis_tail(k, length)
        s_axis = 1.0 + _bump_axis_tail(decay, 0.0)
        bump_part = ((amplitude * d) ** 2 * d * _bump_axis_tail(decay, length)
                     * s_axis ** (d - 1))
        # |a + b|^2 <= 2|a|^2 + 2|b|^2 splits the box and bump contributions
        return scale * 2.0 * (box_part + bump_part)
    raise InvalidDensityError(f"no spectral tail model for kind {model.kind!r}")


def _lattice_ball_tail(radius: float, dimension: int) -> float:
    """sum of |xi|^-4 over a shifted lattice theta + 2 pi Z^d with |xi| > radius.

    Shift-independent: each lattice point is displaced by at most
    pi sqrt(d) from 2 pi m, so terms are evaluated at the pessimistic
    distance.  Enumerated out to four radii, integral bound beyond.
    """
    slack = np.pi * np.sqrt(dimension)
    m_max = int(np.ceil(4.0 * radius / TWO_PI)) + 1
    axis = np.arange(-m_max, m_max + 1)
    mesh = np.meshgrid(*([axis] * dimension), indexing="ij")
    m = np.stack([g.ravel() for g in mesh], axis=1).astype(float)
    r_grid = TWO_PI * np.sqrt((m**2).sum(axis=1))
    keep = r_grid + slack > radius
    r_low = np.maximum(r_grid[keep] - slack, np.pi)
    exact = float((r_low**-4).sum())
    surface = {1: 2.0, 2: TWO_PI, 3: 4.0 * np.pi}[dimension]
    r_out = 4.0 * radius - slack
    powers = {1: r_out**-3 / 3.0, 2: r_out**-2 / 2.0, 3: r_out**-1}
    beyond = 2.0 * surface / TWO_PI**dimension * powers[dimension]
    return exact + beyond


def wiener_matrix(
    model: IonDensityModel,
    theta_h,
    truncation_radius: float = 32.0 * TWO_PI,
) -> tuple[np.ndarray, float]:
    """Truncated series Sigma(theta) and a bound on the dropped tail.

    ``theta_h`` is the integer index of theta = (2 pi / N) h; points of
    gamma* (h = 0 mod N) are outside the domain and raise.  Closed-form
    densities get the rigorous per-axis tail bound; sampled kinds clamp the
    truncation to the retained cutoff and model the unknown continuation by
    |sigma_hat(xi)| <= C / |xi|^2 with C fitted on the outer half.
    """
    spec = model.spec
    n = spec.cells_per_axis
    h0 = np.asarray(theta_h, dtype=int)
    if h0.shape != (spec.dimension,):
        raise FrequencyDomainError(f"theta index must have {spec.dimension} components")
    if np.all(h0 % n == 0):
        raise FrequencyDomainError(
            f"theta = (2 pi / N) {tuple(h0)} lies on gamma*; Sigma is defined off it"
        )
    if model.kind not in ("box", "perturbed_box"):
        # Sampled transforms exist only on the retained set; stay inside the
        # largest ball the per-axis alias clip keeps intact.
        clip = (TWO_PI / n) * ((spec.grid_per_axis - 1) // 2)
        truncation_radius = min(truncation_radius, spec.cutoff_radius, clip)
    theta = spec.xi(h0)
    m_max = int(np.ceil((truncation_radius + np.linalg.norm(theta)) / TWO_PI)) + 1
    axis = np.arange(-m_max, m_max + 1)
    mesh = np.meshgrid(*([axis] * spec.dimension), indexing="ij")
    shifts = np.stack([g.ravel() for g in mesh], axis=1).astype(float)
    xi = theta[None, :] + TWO_PI * shifts
    r = np.sqrt((xi**2).sum(axis=1))
    keep = (r <= truncation_radius + 1e-12) & (r > 1e-12)
    xi, r = xi[keep], r[keep]
    amp2 = np.abs(model.sigma_tilde(xi)) ** 2
    units = xi / r[:, None]
    matrix = np.einsum("k,ki,kj->ij", amp2, units, units)
    matrix = 0.5 * (matrix + matrix.T)

    if model.kind in ("box", "perturbed_box"):
        tail = _spectral_tail_bound(model, truncation_radius)
    else:
        outer = r > 0.5 * truncation_radius
        if outer.any():
            c_decay = float((np.sqrt(amp2[outer]) * r[outer] ** 2).max())
        else:
            c_decay = float(abs(model.charge))
        tail = c_decay**2 * _lattice_ball_tail(truncation_radius, spec.dimension)
    return matrix, tail


def _dual_cell_points(spec: TorusSpec) -> list[tuple]:
    n = spec.cells_per_axis
    mesh = np.meshgrid(*([np.arange(n)] * spec.dimension), indexing="ij")
    points = np.stack([g.ravel() for g in mesh], axis=1)
    return [tuple(int(c) for c in row) for row in points if any(row)]


def wiener_report(
    model: IonDensityModel,
    truncation_radius: float = 32.0 * TWO_PI,
    kernel_rtol: float = 1e-9,
) -> WienerReport:
    """Scan Sigma(theta) over the dual cell and measure the flat ion space.

    For each theta = (2 pi / N) h, h in {0..N-1}^d \\ 0 (lexicographic), the
    truncated Sigma(theta) is diagonalized; eigenvalues at or below
    kernel_rtol * trace(Sigma) + tail_bound count as zero.  ``wiener_holds``
    says every point is positive definite at that tolerance.

    The flat space collects the real lattice vector fields
    v(n) = Re / Im of exp(-i theta n) v_hat with Sigma(theta) v_hat = 0;
    conjugate pairs (theta, -theta) are taken once with both quadratures,
    self-paired points (2 theta in gamma*) only with the real one.  Its
    dimension is the rank of the stacked vectors, by singular values.
    """
    spec = model.spec
    n = spec.cells_per_axis
    ions = lattice_points(spec)
    points = []
    holds = True
    tolerance = 0.0
    tail_used = 0.0
    degenerate_rows = []
    seen_pairs = set()
    for h in _dual_cell_points(spec):
        matrix, tail = wiener_matrix(model, h, truncation_radius)
        eigenvalues, vectors = np.linalg.eigh(matrix)
        ktol = kernel_rtol * float(np.trace(matrix)) + tail
        tolerance = max(tolerance, ktol)
        tail_used = max(tail_used, tail)
        kernel = eigenvalues <= ktol
        kernel_dim = int(kernel.sum())
        points.append(
            WienerPoint(h, spec.xi(np.array(h)), matrix, eigenvalues, kernel_dim,
                        vectors[:, kernel].copy())
        )
        if kernel_dim > 0:
            holds = False
        pair = tuple(int(c) for c in (-np.asarray(h)) % n)
        if pair in seen_pairs:
            continue
        seen_pairs.add(tuple(h))
        theta = spec.xi(np.array(h))
        phase = ions @ theta
        self_paired = pair == tuple(h)
        for column in range(kernel_dim):
            u = vectors[:, kernel][:, column]
            cos_part = np.cos(phase)[:, None] * u[None, :]
            degenerate_rows.append(cos_part.ravel())
            if not self_paired:
                sin_part = np.sin(phase)[:, None] * u[None, :]
                degenerate_rows.append(sin_part.ravel())
    if degenerate_rows:
        stacked = np.stack(degenerate_rows)
        singular = np.linalg.svd(stacked, compute_uv=False)
        degeneracy_dim = int((singular > 1e-9 * singular[0]).sum())
    else:
        degeneracy_dim = 0
    return WienerReport(points, holds, degeneracy_dim, truncation_radius,
                        tolerance, tail_used)
