"""Spectral data recovered from time-sampled observation records.

The forward side produces samples of e^{-tA} L u on the observation nodes.
Because L u expands over eigenspaces, each sample path is a finite sum of
decaying exponentials whose rates are the shifted eigenvalues and whose
coefficients carry the restricted eigenfunctions.  This module identifies
those rates and coefficients with a stacked-Hankel matrix pencil, rebuilds
the restricted eigenfamilies, and compares two such datasets block by block.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.integrate
import scipy.linalg

from .calculus import FieldCoefficients, HeatTrace, check_mass, l_multiplier
from .errors import (
    GridTooCoarseError,
    PreconditionError,
    RankAmbiguousError,
    UnderExcitedEigenspaceError,
)
from .models import ObservationSet, SpectralModel
from .solver import SourceFunction, solve_schrodinger

__all__ = [
    "ExponentialFit",
    "GelfandData",
    "MatchReport",
    "SanityReport",
    "build_gelfand_data",
    "compare_gelfand",
    "default_time_grid",
    "extract_exponents",
    "heat_trace_of_field",
    "heat_trace_of_solution",
    "laplace_transform_eval",
    "laplace_transform_via_integral",
    "supnorm_sanity_check",
    "weyl_sanity_check",
]


# -------------------------------------------------------------- forward


def default_time_grid(model: SpectralModel, m: float, samples: Optional[int] = None) -> np.ndarray:
    """Uniform sampling times bracketing every mode's decay.

    The fastest mode has barely started to decay at the first sample
    (t_min*(lambda_max+m) = 0.2) and the slowest has decayed by e^-8 at
    the last (t_max*(lambda_min+m) = 8).  Sample count defaults to 4K.
    """
    check_mass(m)
    mu = model.eigenvalues + m
    t_min = 0.2 / float(mu[-1])
    t_max = 8.0 / float(mu[0])
    count = 4 * model.truncation if samples is None else int(samples)
    return np.linspace(t_min, t_max, count)


def _coerce_field(model: SpectralModel, field) -> FieldCoefficients:
    if isinstance(field, FieldCoefficients):
        return field
    return FieldCoefficients(model, np.asarray(field, dtype=float))


def heat_trace_of_field(model: SpectralModel, m: float, solution, obs: ObservationSet,
                        times, *, source_id: Optional[str] = None) -> HeatTrace:
    """Sample e^{-tA} L u on the observation nodes for each listed time."""
    check_mass(m)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-d array")
    if np.any(times <= 0):
        raise ValueError("heat trace times must be strictly positive")
    u = _coerce_field(model, solution)
    lam = model.flat_eigenvalues()
    weighted = l_multiplier(lam, m) * u.values
    decay = np.exp(-np.outer(times, lam + m))
    B = model.node_basis()[obs.node_indices]
    values = (decay * weighted[None, :]) @ B.T
    return HeatTrace(times=times, nodes=obs.nodes, values=values,
                     node_indices=obs.node_indices, mass=m,
                     truncation=model.truncation, source_id=source_id)


def heat_trace_of_solution(model: SpectralModel, m: float, V, source, obs: ObservationSet,
                           times, *, cond_limit: Optional[float] = None) -> HeatTrace:
    """Forward solve then sample the evolved image of the solution."""
    u = solve_schrodinger(model, m, V, source, cond_limit=cond_limit)
    sid = getattr(source, "source_id", None)
    return heat_trace_of_field(model, m, u, obs, times, source_id=sid)


# -------------------------------------------------------------- laplace


def laplace_transform_eval(model: SpectralModel, m: float, solution, points, z) -> np.ndarray:
    """Rational evaluation of int_0^inf e^{-zt} (e^{-tA} L u)(x) dt.

    Closed form: sum over basis columns of mult_j u_j phi_j(x)/(mu_j+z)
    with mu_j the shifted eigenvalue.  z may be complex; evaluation too
    close to a pole -mu_j is refused.
    """
    check_mass(m)
    u = _coerce_field(model, solution)
    lam = model.flat_eigenvalues()
    mu = lam + m
    zc = complex(z)
    dist = np.abs(mu + zc)
    tol = 1e-8 * np.maximum(1.0, mu)
    if np.any(dist < tol):
        j = int(np.argmin(dist - tol))
        raise ValueError(f"evaluation point within {dist[j]:.3g} of pole at "
                         f"-{mu[j]:g}; move z away or take a residue instead")
    phi = model.eigenfunction_values(points)
    coeff = l_multiplier(lam, m) * u.values / (mu + zc)
    vals = phi @ coeff
    if zc.imag == 0.0:
        return vals.real
    return vals


def laplace_transform_via_integral(model: SpectralModel, m: float, solution, points, z,
                                   *, tol: float = 1e-10) -> np.ndarray:
    """Quadrature route for the transform, for cross-checking the rational form.

    Integrates e^{-zt} h(t,x) on (0, inf) per point with adaptive quadrature,
    real and imaginary parts separately.  Requires Re z above -min(mu).
    """
    check_mass(m)
    u = _coerce_field(model, solution)
    lam = model.flat_eigenvalues()
    mu = lam + m
    zc = complex(z)
    if zc.real <= -float(mu.min()):
        raise ValueError("transform diverges: Re z must exceed -min shifted eigenvalue")
    phi = model.eigenfunction_values(points)
    weighted = l_multiplier(lam, m) * u.values

    out = np.empty(phi.shape[0], dtype=complex)
    for i in range(phi.shape[0]):
        row = phi[i] * weighted

        def trace(t):
            return float(np.dot(row, np.exp(-t * mu)))

        re, _ = scipy.integrate.quad(
            lambda t: np.exp(-zc.real * t) * np.cos(zc.imag * t) * trace(t),
            0.0, np.inf, epsabs=tol, epsrel=tol, limit=200)
        im, _ = scipy.integrate.quad(
            lambda t: -np.exp(-zc.real * t) * np.sin(zc.imag * t) * trace(t),
            0.0, np.inf, epsabs=tol, epsrel=tol, limit=200)
        out[i] = re + 1j * im
    if zc.imag == 0.0:
        return out.real
    return out


# -------------------------------------------------------------- pencil


@dataclass
class ExponentialFit:
    """Result of identifying a finite exponential sum from trace samples."""

    exponents: np.ndarray       # (r,) ascending decay rates
    amplitudes: np.ndarray      # (n_channels, r)
    residual: float             # relative reconstruction error over all samples
    singular_values: np.ndarray
    rank: int
    dt: float


def extract_exponents(trace: HeatTrace, max_order: int, *,
                      fit_tol: float = 1e-6,
                      rank_tol: float = 1e-10,
                      discard_ratio: float = 1e-3) -> ExponentialFit:
    """Matrix-pencil identification of decay rates shared across channels.

    Builds one Hankel block per channel, stacks them vertically, and reads
    the rates off the shift structure of the common row space.  The rank
    decision must be unambiguous: a blurred singular-value gap, complex or
    nonpositive pencil eigenvalues, or more modes than the stated budget
    all abort rather than guess.
    """
    times = np.asarray(trace.times, dtype=float)
    vals = np.asarray(trace.values, dtype=float)
    J = times.size
    if vals.ndim != 2 or vals.shape[0] != J:
        raise ValueError("trace values must have one row per sample time")
    steps = np.diff(times)
    if J < 2 or np.max(np.abs(steps - steps[0])) > 1e-9 * max(abs(steps[0]), 1e-300):
        raise GridTooCoarseError("exponent extraction needs a uniform time grid")
    if J < 2 * max_order + 2:
        raise GridTooCoarseError(
            f"{J} samples cannot identify up to {max_order} exponents; "
            f"need at least {2 * max_order + 2}")
    dt = float(steps[0])
    n_ch = vals.shape[1]

    L = J // 2
    rows = J - L
    hankel = np.empty((n_ch * rows, L + 1))
    for c in range(n_ch):
        col = vals[:, c]
        hankel[c * rows:(c + 1) * rows] = scipy.linalg.hankel(col[:rows], col[rows - 1:])

    sv = scipy.linalg.svd(hankel, compute_uv=False)
    smax = sv[0]
    if smax == 0.0:
        raise RankAmbiguousError("trace is identically zero")
    rank = int(np.sum(sv > rank_tol * smax))
    if rank > max_order:
        raise RankAmbiguousError(
            f"{rank} significant singular values exceed the stated budget {max_order}")
    if rank < sv.size and sv[rank] > discard_ratio * sv[rank - 1]:
        raise RankAmbiguousError(
            "no clean singular-value gap at the detected rank "
            f"({sv[rank]:.3e} vs {sv[rank - 1]:.3e})")

    _, _, vt = scipy.linalg.svd(hankel, full_matrices=False)
    W = vt[:rank].T                      # (L+1, rank) row-space basis
    pencil = np.linalg.pinv(W[:-1]) @ W[1:]
    zs = np.linalg.eigvals(pencil)
    if np.any(np.abs(zs.imag) > 1e-8 * (1.0 + np.abs(zs))):
        raise RankAmbiguousError("pencil produced complex decay rates")
    zs = zs.real
    if np.any(zs <= 0):
        raise RankAmbiguousError("pencil produced nonpositive ratios")
    mus = np.sort(-np.log(zs) / dt)

    # merge numerically split duplicates
    keep = [mus[0]]
    for mu in mus[1:]:
        if abs(mu - keep[-1]) > 1e-6 * max(1.0, abs(mu)):
            keep.append(mu)
    mus = np.array(keep)

    powers = np.arange(J)[:, None]
    E = np.exp(-mus[None, :] * dt) ** powers     # Vandermonde in z
    shifted, *_ = np.linalg.lstsq(E, vals, rcond=None)
    resid = np.linalg.norm(E @ shifted - vals) / np.linalg.norm(vals)
    if resid > fit_tol:
        raise GridTooCoarseError(
            f"exponential model leaves relative residual {resid:.3e}")
    amplitudes = shifted.T * np.exp(mus[None, :] * times[0])
    return ExponentialFit(exponents=mus, amplitudes=amplitudes,
                          residual=float(resid), singular_values=sv,
                          rank=int(mus.size), dt=dt)


# -------------------------------------------------------------- gelfand


@dataclass
class GelfandData:
    """Spectral data as seen from the observation set.

    families[k] holds node samples of an orthonormal family spanning what
    the traces reveal of eigenspace k; in internal mode the ambient list
    carries the corresponding coefficient frames (columns orthonormal in
    the full eigenbasis).
    """

    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    families: list
    nodes: np.ndarray
    weights: np.ndarray
    node_indices: np.ndarray
    mass: float
    mode: str
    provenance: list = field(default_factory=list)
    ambient: Optional[list] = None


def _excitation_mask(model: SpectralModel, sources) -> np.ndarray:
    """mask[k] is True when some source has weight in eigenspace k."""
    mask = np.zeros(model.truncation, dtype=bool)
    for src in sources:
        c = src.coefficients
        norm = np.linalg.norm(c)
        if norm == 0:
            continue
        for k in range(model.truncation):
            if np.linalg.norm(c[model.block_slice(k)]) >= 1e-10 * norm:
                mask[k] = True
    return mask


def build_gelfand_data(model: SpectralModel, m: float, V, obs: ObservationSet,
                       sources, *, times=None, mode: str = "internal",
                       max_order: Optional[int] = None, return_fit: bool = False,
                       cond_limit: Optional[float] = None):
    """Run the forward map for each source and distill spectral data.

    mode="internal" validates against the model's own catalog (every
    materialized eigenspace must be fully excited) and lifts the restricted
    families to ambient coefficient frames.  mode="blind" reports exactly
    what the traces support: detected rates, detected ranks, observation
    spans only.
    """
    if mode not in ("internal", "blind"):
        raise ValueError(f"unknown mode {mode!r}")
    sources = list(sources)
    if not sources:
        raise ValueError("at least one source is required")
    if times is None:
        times = default_time_grid(model, m)
    if max_order is None:
        max_order = model.truncation

    traces = []
    for src in sources:
        tr = heat_trace_of_solution(model, m, V, src, obs, times,
                                    cond_limit=cond_limit)
        traces.append(tr.values)
    stacked = HeatTrace(times=np.asarray(times, dtype=float),
                        nodes=np.tile(obs.nodes, (len(sources), 1)),
                        values=np.hstack(traces), mass=m,
                        truncation=model.truncation)
    fit = extract_exponents(stacked, max_order)

    n_src = len(sources)
    n_obs = obs.size
    amps = fit.amplitudes.reshape(n_src, n_obs, fit.rank)
    sw = np.sqrt(obs.weights)

    if mode == "internal":
        data = _assemble_internal(model, m, obs, sources, fit, amps, sw)
    else:
        data = _assemble_blind(model, m, obs, sources, fit, amps, sw)
    if return_fit:
        return data, fit
    return data


def _block_rank(weighted_amps: np.ndarray) -> tuple:
    svals = scipy.linalg.svd(weighted_amps, compute_uv=False)
    if svals[0] == 0.0:
        return 0, svals
    return int(np.sum(svals > 1e-8 * svals[0])), svals


def _assemble_internal(model, m, obs, sources, fit, amps, sw):
    expected_mu = model.eigenvalues + m
    if expected_mu.size > 1:
        match_tol = 0.5 * float(np.min(np.diff(expected_mu)))
    else:
        match_tol = 0.5 * float(expected_mu[0])

    excited = None
    assignment = np.full(model.truncation, -1, dtype=int)
    for k, target in enumerate(expected_mu):
        j = int(np.argmin(np.abs(fit.exponents - target)))
        if abs(fit.exponents[j] - target) <= match_tol:
            assignment[k] = j
            continue
        if excited is None:
            excited = _excitation_mask(model, sources)
        if excited[k]:
            raise GridTooCoarseError(
                f"eigenspace {k} is excited but its decay rate {target:g} "
                "is missing from the fit; refine the time grid")
        raise UnderExcitedEigenspaceError(
            f"no source has weight in eigenspace {k}; add sources")
    spurious = set(range(fit.rank)) - set(assignment.tolist())
    if spurious:
        extras = ", ".join(f"{fit.exponents[j]:g}" for j in sorted(spurious))
        raise GridTooCoarseError(f"fit produced unexpected decay rates: {extras}")

    B = model.node_basis()[obs.node_indices]
    eigenvalues = fit.exponents[assignment] - m
    families, ambient, mults = [], [], []
    for k in range(model.truncation):
        j = assignment[k]
        d_k = int(model.multiplicities[k])
        A_k = amps[:, :, j]                       # (S, P) residue samples
        rank, _ = _block_rank(A_k * sw[None, :])
        if rank < d_k:
            raise UnderExcitedEigenspaceError(
                f"eigenspace {k} has dimension {d_k} but the sources only "
                f"reveal rank {rank}; add sources")
        if rank > d_k:
            raise RankAmbiguousError(
                f"residues at eigenspace {k} have rank {rank} > dimension {d_k}")
        mult = float(l_multiplier(np.array([model.eigenvalues[k]]), m)[0])
        Bk = B[:, model.block_slice(k)]
        coeffs, *_ = np.linalg.lstsq(sw[:, None] * Bk,
                                     (sw[None, :] * A_k / mult).T, rcond=None)
        Q, _, _ = scipy.linalg.qr(coeffs, mode="economic", pivoting=True)
        frame = Q[:, :d_k]
        ambient.append(frame)
        families.append(Bk @ frame)
        mults.append(d_k)

    return GelfandData(eigenvalues=eigenvalues,
                       multiplicities=np.array(mults, dtype=int),
                       families=families, nodes=obs.nodes, weights=obs.weights,
                       node_indices=obs.node_indices, mass=m, mode="internal",
                       provenance=[s.source_id for s in sources],
                       ambient=ambient)


def _assemble_blind(model, m, obs, sources, fit, amps, sw):
    families, mults = [], []
    for j in range(fit.rank):
        A_j = amps[:, :, j] * sw[None, :]
        rank, _ = _block_rank(A_j)
        _, _, vt = scipy.linalg.svd(A_j, full_matrices=False)
        fam = (vt[:rank].T) / sw[:, None]
        families.append(fam)
        mults.append(rank)
    return GelfandData(eigenvalues=fit.exponents - m,
                       multiplicities=np.array(mults, dtype=int),
                       families=families, nodes=obs.nodes, weights=obs.weights,
                       node_indices=obs.node_indices, mass=m, mode="blind",
                       provenance=[s.source_id for s in sources],
                       ambient=None)


# -------------------------------------------------------------- compare


@dataclass(frozen=True)
class MatchReport:
    """Blockwise comparison of two spectral datasets on shared nodes."""

    passed: bool
    eigenvalue_gaps: np.ndarray
    multiplicity_matches: np.ndarray
    max_angles: np.ndarray
    failure_index: int
    n_compared: int
    count_mismatch: bool
    eig_rtol: float
    angle_tol: float


def compare_gelfand(a: GelfandData, b: GelfandData, *,
                    eig_rtol: float = 1e-6, angle_tol: float = 1e-5) -> MatchReport:
    """Compare eigenvalues, multiplicities, and restricted eigenspace spans.

    Both datasets must live on the same observation nodes; principal angles
    are measured in the weighted node geometry of the first dataset.
    """
    if a.nodes.shape != b.nodes.shape or np.max(np.abs(a.nodes - b.nodes)) > 1e-12:
        raise PreconditionError(
            "datasets are sampled on different observation nodes")
    n = min(a.eigenvalues.size, b.eigenvalues.size)
    count_mismatch = a.eigenvalues.size != b.eigenvalues.size
    sw = np.sqrt(a.weights)

    gaps = np.empty(n)
    mult_ok = np.empty(n, dtype=bool)
    angles = np.empty(n)
    failure = -1
    for k in range(n):
        la, lb = float(a.eigenvalues[k]), float(b.eigenvalues[k])
        gaps[k] = abs(la - lb) / max(1.0, abs(la), abs(lb))
        mult_ok[k] = int(a.multiplicities[k]) == int(b.multiplicities[k])
        ang = scipy.linalg.subspace_angles(sw[:, None] * a.families[k],
                                           sw[:, None] * b.families[k])
        angles[k] = float(np.max(ang)) if ang.size else 0.0
        ok = gaps[k] <= eig_rtol and mult_ok[k] and angles[k] <= angle_tol
        if not ok and failure < 0:
            failure = k
    passed = failure < 0 and not count_mismatch
    return MatchReport(passed=passed, eigenvalue_gaps=gaps,
                       multiplicity_matches=mult_ok, max_angles=angles,
                       failure_index=failure, n_compared=n,
                       count_mismatch=count_mismatch,
                       eig_rtol=eig_rtol, angle_tol=angle_tol)


# -------------------------------------------------------------- sanity


@dataclass(frozen=True)
class SanityReport:
    constant: float
    exponent: float
    violations: int
    n_checked: int


def weyl_sanity_check(model: SpectralModel) -> SanityReport:
    """Counting-function growth: N(lambda) <= C lambda^{n/2} on positive blocks.

    The zero eigenvalue is excluded (N(0) >= 1 defeats any finite constant);
    the fitted constant should stay stable as the truncation grows.
    """
    lam = model.eigenvalues
    counts = np.cumsum(model.multiplicities).astype(float)
    mask = lam > 0
    power = lam[mask] ** (model.dimension / 2.0)
    ratios = counts[mask] / power
    C = float(np.max(ratios))
    violations = int(np.sum(counts[mask] > C * power * (1 + 1e-12)))
    return SanityReport(constant=C, exponent=model.dimension / 2.0,
                        violations=violations, n_checked=int(mask.sum()))


def supnorm_sanity_check(model: SpectralModel, m: float) -> SanityReport:
    """Eigenfunction growth: node sup |phi| <= C (lambda+m)^{(n-1)/4} per block."""
    check_mass(m)
    B = model.node_basis()
    expo = (model.dimension - 1) / 4.0
    sups = np.empty(model.truncation)
    for k in range(model.truncation):
        sups[k] = np.max(np.abs(B[:, model.block_slice(k)]))
    power = (model.eigenvalues + m) ** expo
    ratios = sups / power
    C = float(np.max(ratios))
    violations = int(np.sum(sups > C * power * (1 + 1e-12)))
    return SanityReport(constant=C, exponent=expo, violations=violations,
                        n_checked=model.truncation)
