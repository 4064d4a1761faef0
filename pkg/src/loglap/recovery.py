"""Unique-continuation diagnostics and potential recovery.

Everything here works at finite rank: the continuation statement becomes a
singular-value rank test on a stacked constraint matrix, the moment
mechanism becomes quadrature plus fitted tail bounds, and recovery divides
the observed operator image by the solution wherever the solution is safely
away from zero.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.integrate
import scipy.special

from .calculus import FieldCoefficients, apply_L, check_mass, heat_kernel_matrix, l_multiplier, random_field
from .errors import (
    AllPairingsVanishError,
    EmptyCoverageError,
    InconsistentCandidatesError,
    NoExponentialDecayError,
    PreconditionError,
    UnderdeterminedSamplingError,
)
from .models import (
    CircleReflection,
    CircleRotation,
    ObservationSet,
    SphereAxialRotation,
    SphereMeridianReflection,
    SpectralModel,
    TorusAxisReflection,
    TorusTranslation,
    apply_isometry,
    interior_points,
    isometry_preserves_set,
    project_function,
)
from .solver import (
    PotentialField,
    SourceFunction,
    band_limit_source,
    cauchy_record,
    make_source_basis,
    solve_schrodinger,
)

__all__ = [
    "GaugeReport",
    "KernelMatchReport",
    "MomentVector",
    "PairingResult",
    "RecoveredPotential",
    "UcpReport",
    "heat_kernel_equality_check",
    "isometry_gauge_check",
    "moment_vector",
    "nonvanishing_pairing_search",
    "recover_potential",
    "ucp_nullspace_test",
]


# -------------------------------------------------------------------- ucp


@dataclass(frozen=True)
class UcpReport:
    """Rank certificate for the truncated continuation statement."""

    truncation: int
    descriptor: object
    null_dimension: int
    smallest_singular: float
    passed: bool
    n_points: int
    include_image: bool


def ucp_nullspace_test(model: SpectralModel, m: float, obs: ObservationSet,
                       K: Optional[int] = None, *, node_multiplier: int = 4,
                       include_image: bool = True,
                       points=None) -> UcpReport:
    """Numerical null space of v -> (v, L v) sampled inside the window.

    A truncated field vanishing on the observation set together with its
    operator image must vanish everywhere; at finite rank that is a
    full-column-rank statement about the stacked sample matrix.  The null
    dimension counts singular values below 1e-9 of the largest.
    """
    check_mass(m)
    if K is None:
        K = model.truncation
    if not 1 <= K <= model.truncation:
        raise ValueError(f"K must lie in [1, {model.truncation}]")
    dim = int(model.block_offsets[K])
    if points is None:
        points = interior_points(model, obs.descriptor, node_multiplier * dim)
    else:
        points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] < 2 * dim:
        raise UnderdeterminedSamplingError(
            f"{points.shape[0]} sample points cannot overdetermine a "
            f"{dim}-dimensional space; need at least {2 * dim}")

    B = model.eigenfunction_values(points)[:, :dim]
    if include_image:
        mult = l_multiplier(model.flat_eigenvalues()[:dim], m)
        constraint = np.vstack([B, B * mult[None, :]])
    else:
        constraint = B
    # unit column norms: rank must not depend on how the operator scales
    # individual basis directions
    norms = np.linalg.norm(constraint, axis=0)
    constraint = constraint / np.maximum(norms, 1e-300)[None, :]
    sv = np.linalg.svd(constraint, compute_uv=False)
    null_dim = int(np.sum(sv < 1e-9 * sv[0]))
    return UcpReport(truncation=K, descriptor=obs.descriptor,
                     null_dimension=null_dim,
                     smallest_singular=float(sv[-1]),
                     passed=null_dim == 0, n_points=int(points.shape[0]),
                     include_image=include_image)


# ---------------------------------------------------------------- moments


@dataclass(frozen=True)
class MomentVector:
    """Quadrature moments of a decaying sample path with tail bounds."""

    moments: np.ndarray
    tail_bounds: np.ndarray
    decay_rate: float
    decay_scale: float


def moment_vector(s, phi, k_max: int) -> MomentVector:
    """Moments int s^k phi(s) ds for k = 0..k_max from samples on [0, S].

    The integrand beyond the grid is bounded by fitting C e^{-c s} to the
    tail of |phi|; a nonpositive fitted rate means the samples do not decay
    exponentially and the moments would be untrustworthy.
    """
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if s.ndim != 1 or s.shape != phi.shape or s.size < 8:
        raise ValueError("need matching 1-d arrays with at least 8 samples")
    if s[0] < 0 or np.any(np.diff(s) <= 0):
        raise ValueError("s must be nonnegative and strictly increasing")
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")

    ks = np.arange(k_max + 1)
    if np.max(np.abs(phi)) == 0.0:
        zero = np.zeros(k_max + 1)
        return MomentVector(moments=zero, tail_bounds=zero.copy(),
                            decay_rate=np.inf, decay_scale=0.0)

    half = s.size // 2
    tail_s, tail_phi = s[half:], np.abs(phi[half:])
    usable = tail_phi > 0
    if np.sum(usable) < 4:
        raise NoExponentialDecayError("tail has too few nonzero samples to fit")
    slope, intercept = np.polyfit(tail_s[usable], np.log(tail_phi[usable]), 1)
    rate = -float(slope)
    if rate <= 1e-8:
        raise NoExponentialDecayError(
            f"fitted tail rate {rate:.3g} is not a decay")
    scale = float(np.exp(intercept))

    moments = np.array([scipy.integrate.simpson(phi * s ** k, x=s) for k in ks])
    S = float(s[-1])
    tails = np.array([
        scale * scipy.special.gamma(k + 1)
        * scipy.special.gammaincc(k + 1, rate * S) / rate ** (k + 1)
        for k in ks])
    return MomentVector(moments=moments, tail_bounds=tails,
                        decay_rate=rate, decay_scale=scale)


# ---------------------------------------------------------------- pairing


@dataclass(frozen=True)
class PairingResult:
    """First source whose solution meets the target eigenspace."""

    source: SourceFunction
    source_index: int
    eigen_index: int
    component: int
    value: float


def nonvanishing_pairing_search(model: SpectralModel, m: float, V: PotentialField,
                                obs: ObservationSet, k: int, candidates, *,
                                threshold: float = 1e-10,
                                cond_limit: Optional[float] = None) -> PairingResult:
    """Search candidates for a solution with weight in eigenspace k.

    Returns the first candidate whose solution has an eigenbasis coefficient
    in block k above threshold (relative to the solution norm), together
    with that coefficient.  Exhausting all candidates signals numerical
    under-excitation rather than a structural obstruction.
    """
    if not 0 <= k < model.truncation:
        raise ValueError(f"eigen index {k} outside materialized range")
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate sources given")
    sl = model.block_slice(k)
    for idx, src in enumerate(candidates):
        u = solve_schrodinger(model, m, V, src, cond_limit=cond_limit)
        block = u.values[sl]
        ell = int(np.argmax(np.abs(block)))
        if np.abs(block[ell]) > threshold * max(u.norm(), 1e-300):
            return PairingResult(source=src, source_index=idx, eigen_index=k,
                                 component=ell, value=float(block[ell]))
    raise AllPairingsVanishError(
        f"no candidate source excites eigenspace {k}; refine sources")


# --------------------------------------------------------------- recovery


@dataclass
class RecoveredPotential:
    """Node table of recovered potential values with coverage mask."""

    nodes: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    disagreement: np.ndarray
    observation_indices: np.ndarray
    covered_fraction: float


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values)
    v, w = values[order], weights[order]
    cum = np.cumsum(w)
    return float(v[np.searchsorted(cum, 0.5 * cum[-1])])


def recover_potential(model: SpectralModel, m: float, obs: ObservationSet,
                      v_known: PotentialField, records, *,
                      mask_eps: float = 1e-6,
                      disagreement_tol: Optional[float] = None,
                      require_full_coverage: bool = False) -> RecoveredPotential:
    """Recover the potential outside the window from observation records.

    Off the window the sources vanish, so the equation pins the potential
    to -(L u)/u wherever a solution stays away from zero.  Candidates from
    different sources are aggregated by a weighted median with weights |u|;
    nodes with no admissible source are masked.  On the window the known
    restriction is copied verbatim.
    """
    check_mass(m)
    records = list(records)
    if not records:
        raise ValueError("no records given")
    n_nodes = model.nodes.shape[0]
    complement = np.setdiff1d(np.arange(n_nodes), obs.node_indices)

    u_tables, lu_tables, eps_table = [], [], []
    for rec in records:
        u = rec.solution
        un = u.node_values()
        u_tables.append(un)
        lu_tables.append(apply_L(u, m).node_values())
        eps_table.append(mask_eps * np.max(np.abs(un)))

    values = np.full(n_nodes, np.nan)
    mask = np.zeros(n_nodes, dtype=bool)
    disagreement = np.full(n_nodes, np.nan)
    for i in complement:
        cands, wts = [], []
        for un, lun, eps in zip(u_tables, lu_tables, eps_table):
            if np.abs(un[i]) > eps:
                cands.append(-lun[i] / un[i])
                wts.append(np.abs(un[i]))
        if not cands:
            continue
        cands = np.asarray(cands)
        chosen = _weighted_median(cands, np.asarray(wts))
        values[i] = chosen
        mask[i] = True
        disagreement[i] = float(np.max(np.abs(cands - chosen)))

    uncovered = complement[~mask[complement]]
    if require_full_coverage and uncovered.size:
        raise EmptyCoverageError(
            f"{uncovered.size} nodes outside the window have no admissible "
            "source; add sources or lower the mask threshold")
    if disagreement_tol is not None:
        worst = np.nanmax(disagreement[complement]) if complement.size else 0.0
        if worst > disagreement_tol:
            raise InconsistentCandidatesError(
                f"source candidates disagree by {worst:.3e} "
                f"(tolerance {disagreement_tol:.3e}); raise the truncation")

    values[obs.node_indices] = v_known.values_at(model, obs.nodes)
    mask[obs.node_indices] = True
    covered = float(mask[complement].mean()) if complement.size else 1.0
    return RecoveredPotential(nodes=model.nodes, values=values, mask=mask,
                              disagreement=disagreement,
                              observation_indices=obs.node_indices.copy(),
                              covered_fraction=covered)


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True)
class KernelMatchReport:
    """Pointwise heat-kernel comparison on a shared node set."""

    passed: bool
    max_deviation: float
    deviations: np.ndarray
    times: np.ndarray
    tolerance: float


def heat_kernel_equality_check(model_a: SpectralModel, model_b: SpectralModel,
                               m: float, obs_a: ObservationSet,
                               obs_b: ObservationSet, times, *,
                               tolerance: float = 1e-10) -> KernelMatchReport:
    """Compare both kernels on all window node pairs over the time grid."""
    check_mass(m)
    if obs_a.nodes.shape != obs_b.nodes.shape or \
            np.max(np.abs(obs_a.nodes - obs_b.nodes)) > 1e-12:
        raise PreconditionError("observation node sets differ")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(times <= 0):
        raise ValueError("times must be positive")
    devs = np.empty(times.size)
    for j, t in enumerate(times):
        ka = heat_kernel_matrix(model_a, m, float(t), obs_a.nodes, obs_a.nodes)
        kb = heat_kernel_matrix(model_b, m, float(t), obs_b.nodes, obs_b.nodes)
        devs[j] = np.max(np.abs(ka - kb))
    worst = float(np.max(devs))
    return KernelMatchReport(passed=worst <= tolerance, max_deviation=worst,
                             deviations=devs, times=times, tolerance=tolerance)


# ------------------------------------------------------------------ gauge


def _inverse_isometry(iso):
    if isinstance(iso, CircleRotation):
        return CircleRotation(-iso.angle)
    if isinstance(iso, TorusTranslation):
        return TorusTranslation(tuple(-x for x in iso.shift))
    if isinstance(iso, SphereAxialRotation):
        return SphereAxialRotation(-iso.angle)
    if isinstance(iso, (CircleReflection, TorusAxisReflection,
                        SphereMeridianReflection)):
        return iso
    raise ValueError(f"unknown isometry: {iso!r}")


def _pullback_field(model: SpectralModel, node_values) -> FieldCoefficients:
    """Project node samples onto the truncated basis via quadrature."""
    return FieldCoefficients(model, project_function(model, node_values))


@dataclass(frozen=True)
class GaugeReport:
    """Invariance of observation records under a catalog symmetry."""

    passed: bool
    intertwining_defect: float
    record_defect: float
    tolerance: float
    isometry: object


def isometry_gauge_check(model: SpectralModel, m: float, V: PotentialField,
                         obs: ObservationSet, isometry, *,
                         tolerance: float = 1e-10, seed: int = 0,
                         cond_limit: Optional[float] = None) -> GaugeReport:
    """Check that a window-preserving symmetry leaves the records invariant.

    Two stages: the operator must commute with composition by the symmetry
    (exact in the eigenbasis, checked on a random truncated field), and the
    record of (V, f) must match the pulled-back record of (V o Phi^{-1},
    f o Phi^{-1}) on the window nodes.
    """
    check_mass(m)
    inverse = _inverse_isometry(isometry)
    if not isometry_preserves_set(model, isometry, obs):
        raise PreconditionError(
            "isometry moves observation nodes out of the window")

    # stage 1: intertwining on a random truncated field
    u = random_field(model, seed=seed)
    mapped_nodes = apply_isometry(model, isometry, model.nodes)
    pulled = _pullback_field(model, u.evaluate(mapped_nodes))
    lhs = apply_L(pulled, m).node_values()
    rhs = apply_L(u, m).evaluate(mapped_nodes)
    scale = max(float(np.max(np.abs(rhs))), 1e-300)
    intertwining = float(np.max(np.abs(lhs - rhs))) / scale

    # stage 2: record invariance for one window-supported source.  The bump
    # is truncated to the model band first: composition by the symmetry and
    # projection onto the band only commute for band-limited data, so a raw
    # bump would leak its spectral tail into the comparison whenever the
    # symmetry does not map quadrature nodes to quadrature nodes.
    src = band_limit_source(model, make_source_basis(model, obs, 1)[0],
                            model.truncation)
    rec = cauchy_record(model, m, V, src, obs, cond_limit=cond_limit)

    v_pulled = PotentialField(
        lambda pts: V.values_at(model, apply_isometry(model, inverse, pts)),
        label=f"{V.label}~pullback")
    inv_nodes = apply_isometry(model, inverse, model.nodes)
    f_coeffs = project_function(model, src.evaluate(inv_nodes))
    src_pulled = SourceFunction(
        model=model, source_id=f"{src.source_id}~pullback", center=src.center,
        radius=src.radius, order=src.order, amplitude=src.amplitude,
        node_values=model.node_basis() @ f_coeffs, coefficients=f_coeffs,
        projection_residual=src.projection_residual, band_limited=True)
    rec2 = cauchy_record(model, m, v_pulled, src_pulled, obs,
                         cond_limit=cond_limit)

    inv_obs = apply_isometry(model, inverse, obs.nodes)
    du = np.max(np.abs(rec2.u_values - rec.solution.evaluate(inv_obs)))
    dlu = np.max(np.abs(rec2.lu_values - apply_L(rec.solution, m).evaluate(inv_obs)))
    ref = max(float(np.max(np.abs(rec.u_values))), 1e-300)
    record_defect = float(max(du, dlu)) / ref

    passed = intertwining <= tolerance and record_defect <= tolerance
    return GaugeReport(passed=passed, intertwining_defect=intertwining,
                       record_defect=record_defect, tolerance=tolerance,
                       isometry=isometry)
