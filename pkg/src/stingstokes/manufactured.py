"""Manufactured Stokes solutions on the unit square.

Sign convention: the weak form carries ``+(p, div v)``, so the strong form is
``-Laplace(u) - grad(p) = f``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

PI = np.pi

__all__ = ["ManufacturedCase", "manufactured_case", "cubic_pressure_case", "s_jet"]


def s_jet(t):
    """``s(t) = (t^2 - t) sin(2 pi t)`` and its first three derivatives."""
    t = np.asarray(t, dtype=float)
    a, a1, a2 = t * t - t, 2 * t - 1, 2.0
    w = 2 * PI
    b, b1, b2, b3 = np.sin(w * t), w * np.cos(w * t), -(w**2) * np.sin(w * t), -(w**3) * np.cos(w * t)
    s0 = a * b
    s1 = a1 * b + a * b1
    s2 = a2 * b + 2 * a1 * b1 + a * b2
    s3 = 3 * a2 * b1 + 3 * a1 * b2 + a * b3
    return s0, s1, s2, s3


@dataclass
class ManufacturedCase:
    """Closed-form velocity, pressure and forcing.

    All callables take arrays ``x, y`` and return stacked components:
    ``u -> (2, ...)``, ``grad_u -> (2, 2, ...)`` with ``grad_u[c, d] = du_c/dx_d``,
    ``p -> (...)``, ``grad_p -> (2, ...)``, ``f -> (2, ...)``.
    ``stream`` returns the 6-component jet of the stream function when known.
    """

    description: str
    u: Callable
    grad_u: Callable
    p: Callable
    grad_p: Callable
    f: Callable
    stream: Callable | None = None
    pressure_mean: float = 0.0


def manufactured_case() -> ManufacturedCase:
    """``u = (s(x) s'(y), -s'(x) s(y))``, ``p = sin(4 pi x) exp(pi y)``."""

    def u(x, y):
        sx, sy = s_jet(x), s_jet(y)
        return np.stack([sx[0] * sy[1], -sx[1] * sy[0]])

    def grad_u(x, y):
        sx, sy = s_jet(x), s_jet(y)
        return np.stack(
            [
                np.stack([sx[1] * sy[1], sx[0] * sy[2]]),
                np.stack([-sx[2] * sy[0], -sx[1] * sy[1]]),
            ]
        )

    def lap_u(x, y):
        sx, sy = s_jet(x), s_jet(y)
        return np.stack(
            [
                sx[2] * sy[1] + sx[0] * sy[3],
                -sx[3] * sy[0] - sx[1] * sy[2],
            ]
        )

    def p(x, y):
        return np.sin(4 * PI * np.asarray(x)) * np.exp(PI * np.asarray(y))

    def grad_p(x, y):
        x, y = np.asarray(x), np.asarray(y)
        e = np.exp(PI * y)
        return np.stack([4 * PI * np.cos(4 * PI * x) * e, PI * np.sin(4 * PI * x) * e])

    def f(x, y):
        return -lap_u(x, y) - grad_p(x, y)

    def stream(x, y):
        sx, sy = s_jet(x), s_jet(y)
        return np.stack(
            [
                sx[0] * sy[0],
                sx[1] * sy[0],
                sx[0] * sy[1],
                sx[2] * sy[0],
                sx[1] * sy[1],
                sx[0] * sy[2],
            ]
        )

    return ManufacturedCase(
        "u=(s(x)s'(y), -s'(x)s(y)), p=sin(4 pi x) exp(pi y), s(t)=(t^2-t) sin(2 pi t)",
        u, grad_u, p, grad_p, f, stream,
    )


def cubic_pressure_case(coeffs=None, seed: int = 0) -> ManufacturedCase:
    """Zero velocity with a zero-mean global cubic pressure on the unit square.

    ``coeffs`` maps ``(i, j)`` to the coefficient of ``x^i y^j`` (``i + j <= 3``);
    by default random coefficients are drawn.  The constant term is adjusted so
    that the pressure has zero mean over the unit square.
    """
    if coeffs is None:
        rng = np.random.default_rng(seed)
        coeffs = {(i, d - i): rng.normal() for d in range(4) for i in range(d + 1)}
    coeffs = dict(coeffs)
    mean = sum(c / ((i + 1) * (j + 1)) for (i, j), c in coeffs.items() if (i, j) != (0, 0))
    coeffs[(0, 0)] = -mean

    def p(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return sum(c * x**i * y**j for (i, j), c in coeffs.items()) + 0 * x

    def grad_p(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        gx = sum(c * i * x ** max(i - 1, 0) * y**j for (i, j), c in coeffs.items() if i) + 0 * x
        gy = sum(c * j * x**i * y ** max(j - 1, 0) for (i, j), c in coeffs.items() if j) + 0 * x
        return np.stack([gx, gy])

    def zero2(x, y):
        z = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return np.stack([z, z])

    def zero22(x, y):
        z = zero2(x, y)
        return np.stack([z, z])

    def stream(x, y):
        z = zero2(x, y)[0]
        return np.stack([z] * 6)

    def f(x, y):
        return -grad_p(x, y)

    return ManufacturedCase("u=0, p=zero-mean cubic", zero2, zero22, p, grad_p, f, stream)
