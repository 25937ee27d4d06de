"""Linear ODE integration: y' = A(t) y on [t0, t1].

Two deliberately independent schemes, so every transport can be
cross-checked by the other:

* fixed-step classical Runge-Kutta 4, with an error estimate from a
  half-resolution comparison pass (Richardson);
* adaptive Dormand-Prince 5(4) embedded pair (coefficients from Dormand &
  Prince 1980), accepting a step when the embedded error estimate is at
  most atol + rtol * |y|, with safety factor 0.9 and step-growth clamped
  to [0.2, 5.0].

Both are pure functions of their inputs: identical calls produce
bit-identical results, which the grid and CLI determinism contracts
rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class IntegrationError(RuntimeError):
    """Base class for integration failures."""


class MaxStepsExceeded(IntegrationError):
    """The step budget ran out (stiff or near-singular coefficients)."""


class NonFiniteState(IntegrationError):
    """The solution left the range of finite floats."""


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45"  # "rk45" (adaptive) or "rk4" (fixed step)
    rk4_steps: int = 256
    atol: float = 1e-12
    rtol: float = 1e-10
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown method {self.method!r} (use 'rk4' or 'rk45')")
        if self.rk4_steps < 1:
            raise ValueError("rk4_steps must be at least 1")
        if not (self.atol > 0.0 and self.rtol > 0.0):
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


DEFAULT_CONFIG = IntegratorConfig()


class IntegrationResult(NamedTuple):
    y: np.ndarray
    error_estimate: float
    steps: int


def integrate_linear(matrix, y0, t0, t1, config=None):
    """Integrate y' = A(t) y from t0 to t1; ``matrix`` maps t to the (k, k)
    coefficient array.  Returns (y(t1), error estimate, steps taken)."""
    config = DEFAULT_CONFIG if config is None else config
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial vector must be finite")
    t0, t1 = float(t0), float(t1)
    if t1 < t0:
        raise ValueError(f"need t0 <= t1, got [{t0}, {t1}]")
    if t1 == t0:
        return IntegrationResult(y0.copy(), 0.0, 0)
    if config.method == "rk4":
        return _rk4(matrix, y0, t0, t1, config)
    return _rk45(matrix, y0, t0, t1, config)


def _rk4_pass(matrix, y0, t0, t1, steps):
    h = (t1 - t0) / steps
    y = y0.copy()
    # overflow to inf is tolerated here and reported as NonFiniteState
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(steps):
            t = t0 + m * h
            a_start = matrix(t)
            a_mid = matrix(t + 0.5 * h)
            a_end = matrix(t + h)
            k1 = a_start @ y
            k2 = a_mid @ (y + 0.5 * h * k1)
            k3 = a_mid @ (y + 0.5 * h * k2)
            k4 = a_end @ (y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    return y


def _rk4(matrix, y0, t0, t1, config):
    n = config.rk4_steps
    y = _rk4_pass(matrix, y0, t0, t1, n)
    if not np.all(np.isfinite(y)):
        raise NonFiniteState(f"non-finite state after {n} fixed steps")
    # order-4 Richardson estimate against a half-resolution pass
    y_coarse = _rk4_pass(matrix, y0, t0, t1, max(1, n // 2))
    estimate = float(np.linalg.norm(y - y_coarse)) / 15.0
    return IntegrationResult(y, estimate, n)


# Dormand-Prince 5(4) tableau.  _DP_E are the weights of the embedded error
# estimate (difference of the 5th- and 4th-order solutions).
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)
_DP_E = tuple(b5 - b4 for b5, b4 in zip(_DP_B, _DP_B4))

_SAFETY = 0.9
_SHRINK_LIMIT = 0.2
_GROW_LIMIT = 5.0


def _rk45(matrix, y0, t0, t1, config):
    span = t1 - t0
    t = t0
    y = y0.copy()
    h = span / 64.0
    steps = 0
    attempts = 0
    total_error = 0.0
    tiny = 16.0 * np.finfo(float).eps * max(abs(t0), abs(t1), span)
    while t1 - t > 0.0:
        attempts += 1
        if attempts > config.max_steps:
            raise MaxStepsExceeded(
                f"no convergence within {config.max_steps} step attempts"
            )
        if h < tiny:
            raise IntegrationError(
                f"step size underflow at t={t!r} (singular or stiff coefficients)"
            )
        last = h >= t1 - t
        if last:
            h = t1 - t
        # transient overflow is handled by rejecting the step
        with np.errstate(over="ignore", invalid="ignore"):
            k = []
            for i in range(7):
                yi = y
                for a, kj in zip(_DP_A[i], k):
                    if a != 0.0:
                        yi = yi + (h * a) * kj
                k.append(matrix(t + _DP_C[i] * h) @ yi)
            increment = np.zeros_like(y)
            err_vec = np.zeros_like(y)
            for b, e, ki in zip(_DP_B, _DP_E, k):
                if b != 0.0:
                    increment = increment + b * ki
                if e != 0.0:
                    err_vec = err_vec + e * ki
            y_new = y + h * increment
            err = float(np.linalg.norm(h * err_vec))
        if not (np.isfinite(err) and np.all(np.isfinite(y_new))):
            # retry with a much smaller step; underflow guard above ends this
            h *= _SHRINK_LIMIT
            continue
        tol = config.atol + config.rtol * max(
            float(np.linalg.norm(y)), float(np.linalg.norm(y_new))
        )
        if err <= tol:
            t = t1 if last else t + h
            y = y_new
            steps += 1
            total_error += err
        if err == 0.0:
            factor = _GROW_LIMIT
        else:
            factor = _SAFETY * (tol / err) ** 0.2
            factor = min(_GROW_LIMIT, max(_SHRINK_LIMIT, factor))
        h *= factor
    return IntegrationResult(y, total_error, steps)
