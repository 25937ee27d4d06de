"""Transport along rays from the origin.

A fiber vector over the origin extends to a neighborhood by solving, for
each target point z, the linear ODE

    dy/dt = -(z_1 M_1(t z) + ... + z_n M_n(t z)) y,      t in [0, 1],

whose solution y(t, z) is the coordinate vector of the parallel section
along the straight segment from 0 to z.  ``radial_transport`` returns
y(1, z); sweeping z over a grid assembles the section itself, and
transporting the standard basis gives the parallel frame.

Two reformulations of the same transport are provided for cross-checking:
``polar_transport`` integrates by arc length along a unit direction, and
``pullback_transport`` runs the ODE of the connection pulled back through
(t, x) -> t*x over the (1+n)-dimensional product base.  All three must
agree up to integrator tolerance; the verification suite asserts this.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .connection import BundleSpec, ConnectionField, fiber_vector
from .integrator import DEFAULT_CONFIG, integrate_linear


class GridPointError(RuntimeError):
    """A grid sweep failed at a specific point (named in the message)."""


@dataclass(eq=False)
class RadialTransportResult:
    z: np.ndarray
    y_final: np.ndarray
    error_estimate: float
    steps: int
    samples: list | None = None  # optional [(t, y(t))] along the segment


@dataclass(eq=False)
class _RayMatrix:
    """t -> -(sum_i z_i M_i(t z)): generator of transport along the ray to z.

    Also used with a unit vector in place of z, in which case the parameter
    is arc length along the ray instead of the [0, 1] segment parameter.
    """

    field: ConnectionField
    z: np.ndarray

    def __call__(self, t):
        mats = self.field.coefficients_at(t * self.z)
        return -np.tensordot(self.z, mats, axes=(0, 0))


def rhs(field, t, y, z):
    """Right-hand side of the ray transport ODE: -(sum_i z_i M_i(t z)) y."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    return _RayMatrix(field, z)(t) @ y


def radial_transport(field, z, y0, config=None, sample_times=None):
    """Transport ``y0`` from the origin to ``z`` along the straight segment.

    The endpoint map y0 -> y(1, z) is linear.  If ``sample_times`` is given
    (increasing values in [0, 1]), the trajectory is additionally recorded
    at those times; sampling restarts the integrator at each requested
    time, so sampled and unsampled runs may differ within tolerance.
    """
    config = DEFAULT_CONFIG if config is None else config
    z = field.spec.require_inside(z, what="z")
    y0 = fiber_vector(y0, field.spec.k)
    matrix = _RayMatrix(field, z)
    if not sample_times:
        res = integrate_linear(matrix, y0, 0.0, 1.0, config)
        return RadialTransportResult(z, res.y, res.error_estimate, res.steps)
    times = [float(t) for t in sample_times]
    if any(not 0.0 <= t <= 1.0 for t in times):
        raise ValueError("sample times must lie in [0, 1]")
    if sorted(times) != times:
        raise ValueError("sample times must be increasing")
    samples = []
    y = y0
    t_prev = 0.0
    error = 0.0
    steps = 0
    for t in times:
        res = integrate_linear(matrix, y, t_prev, t, config)
        y, t_prev = res.y, t
        error += res.error_estimate
        steps += res.steps
        samples.append((t, y))
    if t_prev < 1.0:
        res = integrate_linear(matrix, y, t_prev, 1.0, config)
        y = res.y
        error += res.error_estimate
        steps += res.steps
    return RadialTransportResult(z, y, error, steps, samples)


def radial_transport_partial(field, z, y0, t, config=None):
    """y(t, z): transport along the initial fraction [0, t] of the ray to z."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t!r}")
    config = DEFAULT_CONFIG if config is None else config
    z = field.spec.require_inside(z, what="z")
    y0 = fiber_vector(y0, field.spec.k)
    res = integrate_linear(_RayMatrix(field, z), y0, 0.0, t, config)
    return res.y


def radial_frame(field, z, config=None):
    """The transported-basis matrix P(z): column j is the radial transport
    of the j-th standard basis vector.  P(0) is the identity and P(z) is
    invertible (transport is a linear isomorphism)."""
    k = field.spec.k
    cols = []
    for j in range(k):
        e = np.zeros(k)
        e[j] = 1.0
        cols.append(radial_transport(field, z, e, config).y_final)
    return np.column_stack(cols)


def _grid_value(job):
    field, y0, z, config = job
    try:
        return radial_transport(field, z, y0, config).y_final
    except Exception as exc:
        raise GridPointError(f"grid point z={z.tolist()} failed: {exc}") from exc


def radial_section_grid(field, y0, grid, config=None, workers=1):
    """Evaluate the section z -> y(1, z) over a list of points.

    Points are independent, so with ``workers > 1`` they are computed in a
    process pool; results come back in input order and are bit-identical
    for any worker count.  A failing point raises GridPointError naming it.
    """
    config = DEFAULT_CONFIG if config is None else config
    points = [field.spec.require_inside(z, what="grid point") for z in grid]
    y0 = fiber_vector(y0, field.spec.k)
    jobs = [(field, y0, z, config) for z in points]
    if workers <= 1:
        values = [_grid_value(job) for job in jobs]
    else:
        chunk = max(1, len(jobs) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(_grid_value, jobs, chunksize=chunk))
    return list(zip(points, values))


@dataclass(eq=False)
class _SegmentMatrix:
    """Transport generator along the affine segment from a to b: the path
    has constant velocity (b - a), so the coefficient of the transport ODE
    in the segment parameter s in [0, 1] is -(sum_i (b-a)_i M_i(a+s(b-a)))."""

    field: ConnectionField
    a: np.ndarray
    b: np.ndarray

    def __call__(self, s):
        point = self.a + s * (self.b - self.a)
        mats = self.field.coefficients_at(point)
        return -np.tensordot(self.b - self.a, mats, axes=(0, 0))


def curve_transport(field, curve, y0, config=None):
    """Parallel transport along a piecewise-linear path (list of vertices).

    Each segment keeps its natural constant-speed parameterization; only
    the endpoint map matters, since transport does not depend on how the
    path is parameterized.  Returns the transported fiber vector.
    """
    config = DEFAULT_CONFIG if config is None else config
    points = [field.spec.require_inside(p, what="curve vertex") for p in curve]
    if not points:
        raise ValueError("curve needs at least one vertex")
    y = fiber_vector(y0, field.spec.k).copy()
    for a, b in zip(points, points[1:]):
        res = integrate_linear(_SegmentMatrix(field, a, b), y, 0.0, 1.0, config)
        y = res.y
    return y


def polar_transport(field, direction, radius, y0, config=None):
    """Transport from the origin a distance ``radius`` along the unit vector
    ``direction``, integrating by arc length: y'(s) = -(sum_i u_i M_i(s u)) y
    on [0, radius].  This reparameterizes the ray ODE, so it must agree with
    ``radial_transport`` at z = radius * direction up to tolerance.

    Non-unit directions are rejected rather than normalized, to keep the
    reparameterization identity exact in the checks.
    """
    config = DEFAULT_CONFIG if config is None else config
    u = np.asarray(direction, dtype=float)
    if u.shape != (field.spec.n,):
        raise ValueError(f"direction must have shape ({field.spec.n},)")
    if abs(float(np.linalg.norm(u)) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector (|u| = 1 within 1e-12)")
    radius = float(radius)
    if radius < 0.0:
        raise ValueError(f"radius must be nonnegative, got {radius!r}")
    field.spec.require_inside(radius * u, what="radius*direction")
    y0 = fiber_vector(y0, field.spec.k)
    res = integrate_linear(_RayMatrix(field, u), y0, 0.0, radius, config)
    return res.y


@dataclass(eq=False)
class PullbackCoefficients:
    """Coefficients of a connection pulled back through mu(t, x) = t*x.

    Over the (1+n)-dimensional base with coordinates (t, x_1, ..., x_n) the
    chain rule weights the original matrices by the Jacobian of mu: the
    t-slot picks up sum_i x_i M_i(t x) and the x_i-slot picks up t M_i(t x).
    """

    base: ConnectionField

    def __call__(self, w):
        t, x = w[0], w[1:]
        mats = self.base.coefficients_at(t * x)
        out = np.empty((len(w), mats.shape[1], mats.shape[2]))
        out[0] = np.tensordot(x, mats, axes=(0, 0))
        out[1:] = t * mats
        return out


def pullback_connection(field):
    """The connection pulled back through (t, x) -> t*x, as a field over the
    product box [0, 1] x domain."""
    spec = field.spec
    lo = np.concatenate(([0.0], spec.lo))
    hi = np.concatenate(([1.0], spec.hi))
    pb_spec = BundleSpec(spec.n + 1, spec.k, lo, hi)
    return ConnectionField(
        pb_spec, PullbackCoefficients(field), family=f"pullback({field.family})"
    )


def pullback_transport(field, x, y0, config=None):
    """Transport in the pulled-back bundle along the segment from (0, x) to
    (1, x).  The x = const slice of the pullback base carries the ray ODE,
    so the result must match ``radial_transport`` at z = x up to tolerance;
    starting on the t = 0 slice encodes the initial condition at the origin."""
    x = field.spec.require_inside(x, what="x")
    pulled = pullback_connection(field)
    start = np.concatenate(([0.0], x))
    end = np.concatenate(([1.0], x))
    return curve_transport(pulled, [start, end], y0, config)
