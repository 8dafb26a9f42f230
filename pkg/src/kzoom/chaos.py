"""The logistic map, its deep-zoom observable, and ergodic-theory helpers.

The map is x_{t+1} = mu * x_t * (1 - x_t), always evaluated as
(mu * x) * (1 - x). The deep zoom at depth k reads out the k-th decimal
neighborhood of the state: phi_k(x) = frac(x * 10**k). At k=0 the observable
is the state itself, distributed (for mu=4) like the arcsine law; as k grows
the observable flattens toward uniform and decorrelates, which is what makes
it usable as a randomness source.

All computations honor a PrecisionSpec; see precision.py for the two modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import DegenerateOrbit, DomainError, ZoomExhausted
from .precision import PrecisionSpec, RealValue

# Largest usable zoom per mode. decimalP additionally requires k <= P - 32 so
# a full 32-bit word remains below the zoom window.
_MAX_BINARY64_ZOOM = 308


def _resolve(value, spec: PrecisionSpec, lo: float, hi: float):
    """Return a raw backend value for a RealValue, string, or number."""
    if isinstance(value, RealValue):
        if value.spec != spec:
            raise DomainError(
                f"value carries precision {value.spec.spec_string()}, "
                f"expected {spec.spec_string()}"
            )
        return value.raw
    return spec.backend().parse(value, lo, hi)


def check_zoom_depth(k: int, spec: PrecisionSpec) -> None:
    if k < 0:
        raise DomainError(f"zoom depth must be nonnegative, got {k}")
    if spec.mode == "decimalP" and k > spec.digits - 32:
        raise DomainError(
            f"zoom depth {k} leaves fewer than 32 digits below the window "
            f"(need k <= {spec.digits - 32} at {spec.digits} digits)"
        )
    if spec.mode == "binary64" and k > _MAX_BINARY64_ZOOM:
        raise DomainError(f"zoom depth {k} exceeds binary64 range")


def logistic_step(x, mu, precision: PrecisionSpec | None = None) -> RealValue:
    """One application of the map under the given precision.

    Raises DegenerateOrbit if the result is exactly 0 or 1 (absorbing).
    """
    if precision is None:
        precision = x.spec if isinstance(x, RealValue) else PrecisionSpec.binary64()
    backend = precision.backend()
    xr = _resolve(x, precision, 0.0, 1.0)
    mr = _resolve(mu, precision, 0.0, 4.0)
    out = backend.step(xr, mr)
    if backend.to_float(out) in (0.0, 1.0):
        raise DegenerateOrbit("map output is exactly 0 or 1")
    return RealValue(out, precision)


def deep_zoom(x, k: int, precision: PrecisionSpec | None = None) -> RealValue:
    """phi_k(x) = frac(x * 10**k), exact digit shift in decimalP mode.

    Raises ZoomExhausted when k > 0 and no nonzero digits remain.
    """
    if precision is None:
        precision = x.spec if isinstance(x, RealValue) else PrecisionSpec.binary64()
    check_zoom_depth(k, precision)
    backend = precision.backend()
    xr = _resolve(x, precision, 0.0, 1.0)
    top = backend.scale if precision.mode == "decimalP" else 1.0
    if not 0 < xr < top:
        raise DomainError("zoom argument must lie strictly inside (0, 1)")
    out = backend.zoom(xr, k)
    if k > 0 and backend.to_float(out) == 0.0:
        raise ZoomExhausted(f"no nonzero digits remain at zoom depth {k}")
    return RealValue(out, precision)


@dataclass(frozen=True)
class OrbitParams:
    """Everything needed to generate one orbit deterministically.

    mu and x0 are kept as the exact strings they were given as; parsing
    happens per backend so a decimalP orbit never sees a rounded float.
    """

    mu: str
    x0: str
    k: int = 0
    precision: PrecisionSpec = PrecisionSpec.binary64()

    def __post_init__(self):
        for field in ("mu", "x0"):
            v = getattr(self, field)
            if not isinstance(v, str):
                object.__setattr__(self, field, repr(float(v)) if isinstance(v, float) else str(v))
        backend = self.precision.backend()
        mu = backend.parse(self.mu, 0.0, 4.0)
        x0 = backend.parse(self.x0, 0.0, 1.0)
        f = backend.to_float
        if not (0.0 < f(x0) < 1.0):
            raise DomainError(f"x0 must lie strictly inside (0, 1), got {self.x0}")
        check_zoom_depth(self.k, self.precision)
        del mu  # parsed only to validate range

    def raw_mu(self):
        return self.precision.backend().parse(self.mu, 0.0, 4.0)

    def raw_x0(self):
        return self.precision.backend().parse(self.x0, 0.0, 1.0)


class OrbitPoint(NamedTuple):
    t: int
    x: RealValue
    y: RealValue


def orbit(params: OrbitParams, n: int, transient: int = 0) -> Iterator[OrbitPoint]:
    """Yield n points (t, x_t, y_t) with t starting after the transient.

    t counts map applications from the initial condition, so the first yield
    has t = transient + 1. Degenerate orbits (exact 0, 1, or fixed point) and
    exhausted zooms raise with the failing iteration index attached.
    """
    if n < 0 or transient < 0:
        raise DomainError("n and transient must be nonnegative")
    spec = params.precision
    backend = spec.backend()
    mu = params.raw_mu()
    x = params.raw_x0()
    k = params.k
    zero_like = 0 if spec.mode == "decimalP" else 0.0
    for t in range(1, transient + n + 1):
        nxt = backend.step(x, mu)
        if backend.to_float(nxt) in (0.0, 1.0) or nxt == x:
            raise DegenerateOrbit(
                f"orbit became degenerate at iteration {t}", iteration=t
            )
        x = nxt
        if t <= transient:
            continue
        y = backend.zoom(x, k) if k else x
        if k and y == zero_like:
            raise ZoomExhausted(
                f"zoom produced no digits at iteration {t}", iteration=t
            )
        yield OrbitPoint(t, RealValue(x, spec), RealValue(y, spec))


def orbit_values(
    params: OrbitParams, n: int, transient: int = 0, component: str = "zoomed"
) -> np.ndarray:
    """n post-transient orbit values as a float64 array.

    component selects "zoomed" (y_t, the default) or "underlying" (x_t).
    This is the bulk path for experiments; it runs on raw backend values.
    """
    if component not in ("zoomed", "underlying"):
        raise DomainError(f"unknown component {component!r}")
    spec = params.precision
    backend = spec.backend()
    mu = params.raw_mu()
    x = params.raw_x0()
    k = params.k if component == "zoomed" else 0
    out = np.empty(n, dtype=np.float64)
    if spec.mode == "binary64":
        for t in range(transient):
            x = (mu * x) * (1.0 - x)
        p10 = 10.0 ** k
        for i in range(n):
            x = (mu * x) * (1.0 - x)
            if x == 0.0 or x == 1.0:
                raise DegenerateOrbit(
                    f"orbit became degenerate at iteration {transient + i + 1}",
                    iteration=transient + i + 1,
                )
            if k:
                z = x * p10
                out[i] = z - math.floor(z)
            else:
                out[i] = x
    else:
        scale = backend.scale
        p10 = 10 ** k
        for t in range(transient):
            v = (mu * x) // scale
            x = (v * (scale - x)) // scale
        for i in range(n):
            v = (mu * x) // scale
            x = (v * (scale - x)) // scale
            if x == 0 or x == scale:
                raise DegenerateOrbit(
                    f"orbit became degenerate at iteration {transient + i + 1}",
                    iteration=transient + i + 1,
                )
            out[i] = ((x * p10) % scale) / scale if k else x / scale
    return out


def invariant_density(x):
    """Arcsine density 1 / (pi * sqrt(x * (1 - x))) of the mu=4 map.

    Accepts a scalar or an ndarray; the domain is the open interval (0, 1).
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError("density is defined on the open interval (0, 1)")
    out = 1.0 / (np.pi * np.sqrt(arr * (1.0 - arr)))
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def arcsine_cdf(x):
    """F(x) = (2/pi) * asin(sqrt(x)) on [0, 1], scalar or ndarray."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("arcsine law lives on [0, 1]")
    out = (2.0 / np.pi) * np.arcsin(np.sqrt(arr))
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def arcsine_measure(a: float, b: float) -> float:
    """Invariant measure of the interval [a, b] under the mu=4 map."""
    if not (0.0 <= a < b <= 1.0):
        raise DomainError(f"need 0 <= a < b <= 1, got a={a}, b={b}")
    return arcsine_cdf(b) - arcsine_cdf(a)


@dataclass(frozen=True)
class LyapunovEstimate:
    exponent: float
    terms: int
    skipped: int
    epsilon: float | None = None
    time: float | None = None


def lyapunov_time(lam: float, epsilon: float) -> float:
    """Iterations for a perturbation of size epsilon to grow to order one."""
    if lam <= 0.0:
        raise DomainError("lyapunov time needs a positive exponent")
    if not (0.0 < epsilon < 1.0):
        raise DomainError("epsilon must lie strictly between 0 and 1")
    return -math.log(epsilon) / lam


def lyapunov_estimate(
    mu,
    x0,
    n: int,
    transient: int = 0,
    precision: PrecisionSpec | None = None,
    epsilon: float | None = None,
) -> LyapunovEstimate:
    """Time average of ln |mu * (1 - 2 x_t)| over n post-transient points.

    Points where the derivative is exactly zero are skipped and counted in
    the report. If epsilon is given the matching divergence time is attached
    (only meaningful for a positive exponent).
    """
    if n <= 0:
        raise DomainError("need at least one term")
    precision = precision or PrecisionSpec.binary64()
    params = OrbitParams(mu=str(mu), x0=str(x0), k=0, precision=precision)
    backend = precision.backend()
    mu_f = backend.to_float(params.raw_mu())
    x = params.raw_x0()
    mu_raw = params.raw_mu()
    total = 0.0
    skipped = 0
    # The derivative is evaluated at the point the map is applied to, so the
    # first term uses the state reached after the transient.
    if precision.mode == "binary64":
        for _ in range(transient):
            x = (mu_raw * x) * (1.0 - x)
        for _ in range(n):
            d = abs(mu_f * (1.0 - 2.0 * x))
            if d == 0.0:
                skipped += 1
            else:
                total += math.log(d)
            x = (mu_raw * x) * (1.0 - x)
    else:
        scale = backend.scale
        for _ in range(transient):
            v = (mu_raw * x) // scale
            x = (v * (scale - x)) // scale
        for _ in range(n):
            d = abs(mu_f * (1.0 - 2.0 * (x / scale)))
            if d == 0.0:
                skipped += 1
            else:
                total += math.log(d)
            v = (mu_raw * x) // scale
            x = (v * (scale - x)) // scale
    terms = n - skipped
    if terms == 0:
        raise DomainError("every point had zero derivative")
    lam = total / terms
    t_eps = None
    if epsilon is not None and lam > 0.0:
        t_eps = lyapunov_time(lam, epsilon)
    return LyapunovEstimate(
        exponent=lam, terms=terms, skipped=skipped, epsilon=epsilon, time=t_eps
    )
