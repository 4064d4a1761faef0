"""Truncated Schrodinger solves and Cauchy records on observation sets.

The operator acts blockwise through the multiplier (lam+m)log(lam+m); a
multiplicative potential couples blocks through its quadrature Gram matrix.
Sources are compactly supported bumps placed inside the observation set, so
smoothness and support containment hold by construction.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .calculus import FieldCoefficients, l_multiplier
from .errors import (
    IllConditionedError,
    SingularOperatorError,
    SupportViolationError,
)
from .models import (
    AngularInterval,
    ObservationSet,
    SpectralModel,
    TorusBox,
    _cap_chart_to_sphere,
    _sphere_angle,
    as_points,
    geodesic_distance,
    project_function,
)

GOLDEN_ANGLE = 2.399963229728653


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class PotentialField:
    """Multiplicative potential, given as a callable on natural coordinates.

    The callable receives angles (P,) on the circle, coordinate rows (P, n)
    on the torus, and (colatitude, longitude) rows (P, 2) on the sphere.
    `const` short-circuits to a constant and `func=None, const=None` is the
    zero potential.
    """

    func: Optional[Callable] = None
    const: Optional[float] = None
    label: str = ""

    def values_at(self, model: SpectralModel, points) -> np.ndarray:
        pts = as_points(points, model.coord_dim)
        n = pts.shape[0]
        if self.func is not None:
            coords = pts[:, 0] if model.kind == "circle" else pts
            out = np.asarray(self.func(coords), dtype=float)
            if out.shape != (n,):
                raise ValueError("potential callable returned a wrong shape")
            return out
        if self.const is not None:
            return np.full(n, float(self.const))
        return np.zeros(n)

    def node_values(self, model: SpectralModel) -> np.ndarray:
        return self.values_at(model, model.nodes)

    @property
    def is_zero(self) -> bool:
        return self.func is None and (self.const is None or self.const == 0.0)


zero_potential = PotentialField(label="zero")


def constant_potential(value: float) -> PotentialField:
    return PotentialField(const=float(value), label=f"const({value:g})")


def assemble_potential_matrix(model: SpectralModel, V: PotentialField) -> np.ndarray:
    """Gram matrix of multiplication by V in the truncated basis."""
    D = model.total_dim
    if V.is_zero:
        return np.zeros((D, D))
    v = V.node_values(model)
    B = model.node_basis()
    M = B.T @ ((model.weights * v)[:, None] * B)
    # symmetric up to roundoff by construction; make it exact
    return 0.5 * (M + M.T)


def operator_matrix(model: SpectralModel, m: float, V: PotentialField) -> np.ndarray:
    mult = l_multiplier(model.flat_eigenvalues(), m)
    return np.diag(mult) + assemble_potential_matrix(model, V)


def operator_spectrum(model: SpectralModel, m: float, V: PotentialField) -> np.ndarray:
    """Sorted real eigenvalues of the truncated operator with potential."""
    return np.linalg.eigvalsh(operator_matrix(model, m, V))


# ---------------------------------------------------------------------------
# sources


def bump_profile(s, order: int = 1):
    """Peak-normalized compact profile exp(1 - 1/(1-s^2)^order) on |s|<1."""
    if order < 1:
        raise ValueError("order must be a positive integer")
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si) ** order)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass
class SourceFunction:
    """One smooth compactly supported source together with its projection."""

    model: SpectralModel
    source_id: str
    center: np.ndarray
    radius: float
    order: int
    amplitude: float
    node_values: np.ndarray
    coefficients: np.ndarray
    projection_residual: float
    band_limited: bool = False

    def evaluate(self, points) -> np.ndarray:
        pts = as_points(points, self.model.coord_dim)
        if self.band_limited:
            return self.model.eigenfunction_values(pts) @ self.coefficients
        ctr = np.broadcast_to(self.center, pts.shape)
        d = geodesic_distance(self.model, pts, ctr)
        return self.amplitude * bump_profile(d / self.radius, self.order)


@dataclass
class SourceBasis:
    sources: list
    gram: np.ndarray
    gram_condition: float

    def __iter__(self):
        return iter(self.sources)

    def __len__(self):
        return len(self.sources)

    def __getitem__(self, i):
        return self.sources[i]


def _default_centers(descriptor, count: int, rng) -> list:
    """Evenly spread interior centers, optionally jittered by <= 20% of the
    center spacing. Returns (center point, boundary margin) pairs."""
    out = []
    if isinstance(descriptor, AngularInterval):
        length = descriptor.end - descriptor.start
        spacing = length / (count + 1)
        for i in range(count):
            c = descriptor.start + spacing * (i + 1)
            if rng is not None:
                c = c + rng.uniform(-0.2, 0.2) * spacing
            out.append(np.array([c]))
        return out
    if isinstance(descriptor, TorusBox):
        lows = np.array([ab[0] for ab in descriptor.intervals])
        highs = np.array([ab[1] for ab in descriptor.intervals])
        for i in range(count):
            frac = (i + 1.0) / (count + 1.0)
            c = lows + frac * (highs - lows)
            if rng is not None:
                c = c + rng.uniform(-0.2, 0.2, size=c.size) * (highs - lows) / (count + 1)
            out.append(c)
        return out
    # spherical cap: walk outward from the cap center along a golden spiral
    for i in range(count):
        gamma = descriptor.radius * i / max(count, 2)
        azimuth = GOLDEN_ANGLE * i
        if rng is not None and count > 1:
            gamma = abs(gamma + rng.uniform(-0.2, 0.2) * descriptor.radius / count)
            azimuth = azimuth + rng.uniform(-0.2, 0.2)
        out.append(_cap_chart_to_sphere(descriptor.center,
                                        np.array([gamma]),
                                        np.array([azimuth]))[0])
    return out


def _boundary_margin(descriptor, center) -> float:
    """Largest radius whose support ball stays inside the descriptor."""
    if isinstance(descriptor, AngularInterval):
        return float(min(center[0] - descriptor.start, descriptor.end - center[0]))
    if isinstance(descriptor, TorusBox):
        lows = np.array([ab[0] for ab in descriptor.intervals])
        highs = np.array([ab[1] for ab in descriptor.intervals])
        return float(np.min(np.minimum(center - lows, highs - center)))
    cap_ctr = as_points(np.asarray(descriptor.center, dtype=float), 2)
    gamma = float(_sphere_angle(as_points(center, 2), cap_ctr)[0])
    return float(descriptor.radius - gamma)


def make_source_basis(model: SpectralModel, obs: ObservationSet, count: int, *,
                      radius=None, order: int = 1, amplitude: float = 1.0,
                      seed: Optional[int] = None,
                      centers: Optional[Sequence] = None) -> SourceBasis:
    """Build `count` bump sources supported strictly inside the observation
    set, project them, and report their mutual Gram conditioning.

    Default centers sit at interior fractions (i+1)/(count+1); `seed` jitters
    them. Default radius is 0.9x the distance from each center to the
    boundary. Explicit centers or radii that push the support outside the
    set raise SupportViolationError.
    """
    if count < 1:
        raise ValueError("count must be positive")
    desc = obs.descriptor
    if centers is not None:
        if len(centers) != count:
            raise ValueError("need exactly one center per source")
        ctrs = [np.atleast_1d(np.asarray(c, dtype=float)) for c in centers]
    else:
        rng = np.random.default_rng(seed) if seed is not None else None
        ctrs = _default_centers(desc, count, rng)

    if radius is None:
        radii = [0.9 * _boundary_margin(desc, c) for c in ctrs]
    elif np.ndim(radius) == 0:
        radii = [float(radius)] * count
    else:
        radii = [float(r) for r in radius]
        if len(radii) != count:
            raise ValueError("need exactly one radius per source")

    sources = []
    for i, (c, rho) in enumerate(zip(ctrs, radii)):
        margin = _boundary_margin(desc, c)
        if rho <= 0 or rho >= margin:
            raise SupportViolationError(
                f"source {i}: support radius {rho:.4g} does not fit inside the "
                f"observation set (margin {margin:.4g})")
        src = SourceFunction(model=model, source_id=f"bump{i:02d}",
                             center=c, radius=rho, order=order,
                             amplitude=amplitude, node_values=None,
                             coefficients=None, projection_residual=0.0)
        vals = src.evaluate(model.nodes)
        coeffs = project_function(model, vals)
        src.node_values = vals
        src.coefficients = coeffs
        src.projection_residual = float(
            np.max(np.abs(vals - model.node_basis() @ coeffs)))
        sources.append(src)

    all_vals = np.stack([s.node_values for s in sources])
    gram = (all_vals * model.weights) @ all_vals.T
    gram = 0.5 * (gram + gram.T)
    return SourceBasis(sources, gram, float(np.linalg.cond(gram)))


def band_limit_source(model: SpectralModel, source: SourceFunction,
                      blocks: int) -> SourceFunction:
    """Truncate a source to its leading eigenvalue blocks.

    The result is a trigonometric-polynomial-type source: still smooth, but
    exactly representable at any truncation >= blocks, which makes
    refinement comparisons independent of the bump's spectral tail.
    """
    if not 0 < blocks <= model.truncation:
        raise ValueError("blocks must lie in 1..truncation")
    cut = int(model.block_offsets[blocks])
    coeffs = source.coefficients.copy()
    coeffs[cut:] = 0.0
    vals = model.node_basis() @ coeffs
    return SourceFunction(model=model,
                          source_id=f"{source.source_id}-band{blocks}",
                          center=source.center, radius=source.radius,
                          order=source.order, amplitude=source.amplitude,
                          node_values=vals, coefficients=coeffs,
                          projection_residual=0.0, band_limited=True)


# ---------------------------------------------------------------------------
# solving


def _coerce_rhs(model: SpectralModel, rhs) -> np.ndarray:
    if isinstance(rhs, SourceFunction):
        vec = rhs.coefficients
    elif isinstance(rhs, FieldCoefficients):
        vec = rhs.values
    else:
        vec = np.asarray(rhs, dtype=float)
    if vec.shape != (model.total_dim,):
        raise ValueError("right-hand side does not match the model dimension")
    return vec


def solve_schrodinger(model: SpectralModel, m: float, V: PotentialField, rhs, *,
                      cond_limit: Optional[float] = None) -> FieldCoefficients:
    """Solve (multiplier + V) u = f in the truncated basis.

    Raises SingularOperatorError when the smallest operator eigenvalue is
    below 1e-10 x the largest multiplier, and IllConditionedError when the
    spectral condition number exceeds `cond_limit` or the residual of the
    direct solve is inconsistent with the conditioning.
    """
    f = _coerce_rhs(model, rhs)
    mult = l_multiplier(model.flat_eigenvalues(), m)
    H = np.diag(mult) + assemble_potential_matrix(model, V)
    eigs = np.linalg.eigvalsh(H)
    amin = float(np.min(np.abs(eigs)))
    amax = float(np.max(np.abs(eigs)))
    threshold = 1e-10 * float(np.max(mult))
    if amin <= threshold:
        raise SingularOperatorError(
            f"operator with potential '{V.label}' is numerically singular: "
            f"min |eigenvalue| = {amin:.3e} <= {threshold:.3e}")
    cond = amax / amin
    if cond_limit is not None and cond > cond_limit:
        raise IllConditionedError(
            f"operator condition number {cond:.3e} exceeds limit {cond_limit:.3e}")
    u = scipy.linalg.solve(H, f, assume_a="sym")
    fnorm = float(np.linalg.norm(f))
    if fnorm > 0:
        rel_res = float(np.linalg.norm(H @ u - f)) / fnorm
        res_limit = max(1e-8, 100.0 * np.finfo(float).eps * cond)
        if rel_res > res_limit:
            raise IllConditionedError(
                f"solve residual {rel_res:.3e} exceeds {res_limit:.3e}; "
                "the truncated operator is too badly conditioned")
    return FieldCoefficients(model, u)


# ---------------------------------------------------------------------------
# Cauchy records


@dataclass(frozen=True)
class CauchyRecord:
    """Solution and operator samples on the observation nodes.

    `solution` keeps the full coefficient vector so downstream checks can
    evaluate off the observation set; serialized records carry only the
    observation payload.
    """

    kind: str
    truncation: int
    mass: float
    source_id: str
    potential_label: str
    descriptor: object
    node_indices: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    u_values: np.ndarray
    lu_values: np.ndarray
    solution: FieldCoefficients


def cauchy_record(model: SpectralModel, m: float, V: PotentialField,
                  source: SourceFunction, obs: ObservationSet, *,
                  cond_limit: Optional[float] = None) -> CauchyRecord:
    """Forward-solve with one source and restrict (u, L u) to the nodes."""
    u = solve_schrodinger(model, m, V, source, cond_limit=cond_limit)
    mult = l_multiplier(model.flat_eigenvalues(), m)
    B = model.node_basis()[obs.node_indices]
    return CauchyRecord(kind=model.kind, truncation=model.truncation,
                        mass=float(m), source_id=source.source_id,
                        potential_label=V.label, descriptor=obs.descriptor,
                        node_indices=obs.node_indices.copy(),
                        nodes=obs.nodes.copy(), weights=obs.weights.copy(),
                        u_values=B @ u.values,
                        lu_values=B @ (mult * u.values),
                        solution=u)
