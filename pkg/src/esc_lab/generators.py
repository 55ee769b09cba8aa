"""Generating-function pairs ``(F1, F2)`` that shape the dithered vector fields.

The pair multiplies the sine and cosine dither channels. For the averaged
dynamics to be an exact gradient flow the pair must satisfy the Wronskian
identity ``F1 F2' - F1' F2 = 1`` on ``y > 0`` and vanish at ``y = 0`` so the
control oscillation dies out at the minimum. Built-in families:

``classic``                 ``(y, 1)``; the textbook pair, kept for contrast (not vanishing).
``power``                   ``(y**r, y**(2-r))`` with ``0 < r < 2``.
``suttner_dashkovskiy``     ``sqrt(y) * (cos ln y, sin ln y)``.
``grushkovskaya_bounded``   the bounded-update-rate pair built from ``exp``/``log``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Scalar = Callable[[np.ndarray], np.ndarray]

FAMILIES = ("classic", "power", "suttner_dashkovskiy", "grushkovskaya_bounded")


@dataclass(frozen=True)
class GeneratingPair:
    f1: Scalar
    f2: Scalar
    f1_prime: Scalar
    f2_prime: Scalar
    family_tag: str
    params: dict = field(default_factory=dict)
    bounded_update: bool = False
    # False for pairs that do not vanish at y = 0 or do not satisfy the Wronskian identity.
    c1: bool = True

    def __call__(self, y):
        return self.f1(y), self.f2(y)

    def wronskian(self, y):
        y = np.asarray(y, dtype=float)
        return self.f1(y) * self.f2_prime(y) - self.f1_prime(y) * self.f2(y)


def _classic():
    return GeneratingPair(
        f1=lambda y: np.asarray(y, dtype=float),
        f2=lambda y: np.ones_like(np.asarray(y, dtype=float)),
        f1_prime=lambda y: np.ones_like(np.asarray(y, dtype=float)),
        f2_prime=lambda y: np.zeros_like(np.asarray(y, dtype=float)),
        family_tag="classic", c1=False)


def _power(r):
    r = float(r)
    if not 0 < r < 2:
        raise ValueError(f"power family needs 0 < r < 2, got {r}")
    q = 2.0 - r
    return GeneratingPair(
        f1=lambda y: np.asarray(y, dtype=float) ** r,
        f2=lambda y: np.asarray(y, dtype=float) ** q,
        f1_prime=lambda y: r * np.asarray(y, dtype=float) ** (r - 1),
        f2_prime=lambda y: q * np.asarray(y, dtype=float) ** (q - 1),
        family_tag="power", params={"r": r}, bounded_update=True,
        # y**r y**(2-r) has Wronskian 2(1-r)y, never identically 1
        c1=False)


def _at_zero(fn, y):
    # continuous extension by 0 at y = 0, where the log/exp forms are undefined
    y = np.asarray(y, dtype=float)
    pos = y > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(pos, fn(np.where(pos, y, 1.0)), np.where(y == 0, 0.0, np.nan))


def _suttner_dashkovskiy():
    def f1(y):
        return _at_zero(lambda v: np.sqrt(v) * np.cos(np.log(v)), y)

    def f2(y):
        return _at_zero(lambda v: np.sqrt(v) * np.sin(np.log(v)), y)

    def f1_prime(y):
        y = np.asarray(y, dtype=float)
        ln = np.log(y)
        return (0.5 * np.cos(ln) - np.sin(ln)) / np.sqrt(y)

    def f2_prime(y):
        y = np.asarray(y, dtype=float)
        ln = np.log(y)
        return (0.5 * np.sin(ln) + np.cos(ln)) / np.sqrt(y)

    return GeneratingPair(f1, f2, f1_prime, f2_prime, "suttner_dashkovskiy")


def _gb_envelope(y):
    # sqrt((1 - e^-y) / (1 + e^y)), written to stay finite for large y
    em = np.exp(-y)
    return np.sqrt(-np.expm1(-y) * em / (1.0 + em))


def _gb_envelope_prime(y):
    em = np.exp(-y)
    s = _gb_envelope(y)
    # q' = (2 + e^-y - e^y) / (1 + e^y)^2, multiplied through by e^-2y
    dq = (2 * em * em + em ** 3 - em) / (1.0 + em) ** 2
    return dq / (2 * s)


def _gb_phase(y):
    return np.exp(y) + 2 * np.log(np.expm1(y))


def _gb_phase_prime(y):
    return np.exp(y) + 2 / (-np.expm1(-y))


def _grushkovskaya_bounded():
    def f1(y):
        return _at_zero(lambda v: _gb_envelope(v) * np.cos(_gb_phase(v)), y)

    def f2(y):
        return _at_zero(lambda v: _gb_envelope(v) * np.sin(_gb_phase(v)), y)

    def f1_prime(y):
        y = np.asarray(y, dtype=float)
        s, ds, ph, dph = _gb_envelope(y), _gb_envelope_prime(y), _gb_phase(y), _gb_phase_prime(y)
        return ds * np.cos(ph) - s * dph * np.sin(ph)

    def f2_prime(y):
        y = np.asarray(y, dtype=float)
        s, ds, ph, dph = _gb_envelope(y), _gb_envelope_prime(y), _gb_phase(y), _gb_phase_prime(y)
        return ds * np.sin(ph) + s * dph * np.cos(ph)

    return GeneratingPair(f1, f2, f1_prime, f2_prime, "grushkovskaya_bounded",
                          bounded_update=True)


def make_pair(family_tag: str, **params) -> GeneratingPair:
    if family_tag == "classic":
        return _classic()
    if family_tag == "power":
        return _power(params.get("r", 0.5))
    if family_tag == "suttner_dashkovskiy":
        return _suttner_dashkovskiy()
    if family_tag == "grushkovskaya_bounded":
        return _grushkovskaya_bounded()
    raise ValueError(f"unknown pair family {family_tag!r}; known: {FAMILIES}")


def default_y_grid(lo=1e-3, hi=10.0, count=2001):
    return np.logspace(np.log10(lo), np.log10(hi), count)


def fd_derivative(f: Scalar, y, rel_step=1e-6):
    y = np.asarray(y, dtype=float)
    h = rel_step * y
    return (f(y + h) - f(y - h)) / (2 * h)


def check_c1_wronskian(pair: GeneratingPair, y_grid=None, tol: float = 1e-8,
                       finite_difference: bool = False) -> tuple[float, bool]:
    """Max of ``|F1 F2' - F1' F2 - 1|`` over ``y_grid`` and whether it is within ``tol``.

    With ``finite_difference=True`` the derivatives come from central
    differences with step ``1e-6 * y`` instead of the analytic ones.
    """
    y = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    if np.any(y <= 0):
        raise ValueError("y_grid must lie in (0, inf)")
    if finite_difference:
        d1, d2 = fd_derivative(pair.f1, y), fd_derivative(pair.f2, y)
    else:
        d1, d2 = pair.f1_prime(y), pair.f2_prime(y)
    w = pair.f1(y) * d2 - d1 * pair.f2(y)
    res = float(np.max(np.abs(w - 1.0)))
    return res, bool(res <= tol)


def check_vanishing(pair: GeneratingPair, ys=(1e-2, 1e-4, 1e-6)) -> tuple[bool, np.ndarray]:
    """Both functions shrink monotonically towards 0 along a decreasing ``y`` sequence."""
    ys = np.asarray(ys, dtype=float)
    mags = np.maximum(np.abs(pair.f1(ys)), np.abs(pair.f2(ys)))
    ok = bool(np.all(np.diff(mags) < 0) and mags[-1] < 1e-2)
    return ok, mags


# Condition C2 by sampling ---------------------------------------------------

@dataclass
class C2BoundReport:
    """Sampled constants entering the critical-frequency formula, per constraint g1..g3.

    ``c1[i]`` bounds ``sqrt(omega) |R1|`` and ``c2[i]`` bounds ``sqrt(omega) |R2|`` on
    the boundary layer ``0 <= g_i <= eps``; ``b[i]`` is the inf of ``-F^{g_i}`` there.
    """

    c1: np.ndarray
    c2: np.ndarray
    b: np.ndarray
    sample_count: np.ndarray
    dither_constant: float
    valid: bool = True
    problems: list = field(default_factory=list)

    def positive(self) -> bool:
        return bool(np.all(self.b > 0))


def sample_c2_bounds(pair: GeneratingPair, cost, set_spec, bank, grid=None,
                     count: int = 400, seed: int = 0, signs=None) -> C2BoundReport:
    """Sample the Lie-derivative bounds of the remainder terms on each boundary layer.

    ``grid`` is an array of states ``(x, z)``; when omitted, ``count`` points are
    drawn per constraint from its layer ``0 <= g_i <= eps`` inside the closed
    practical set. Every Lie derivative is a nested finite difference, ``b`` uses
    the drift assembled from the same differences. Bounds assume ``omega >= 1``
    so that ``a/omega <= a/sqrt(omega)``.
    """
    from esc_lab import analysis
    from esc_lab.dynamics import (PROPOSED_SIGNS, control_fields, dither_bound_constant,
                                  drift_field)

    fields = control_fields(cost, pair, cost.dim, PROPOSED_SIGNS if signs is None else signs)
    f0 = drift_field(cost)
    a = dither_bound_constant(bank)
    rng = np.random.default_rng(seed)
    c1 = np.zeros(3)
    c2 = np.zeros(3)
    b = np.full(3, np.nan)
    counts = np.zeros(3, dtype=int)
    problems = []
    for i in range(3):
        if grid is None:
            pts = analysis.sample_boundary_layer(set_spec, cost, i + 1, count, rng)
        else:
            pts = np.asarray(grid, dtype=float)
            mem = analysis.in_delta(set_spec, cost, pts, set_spec.epsilon)
            bad = ~np.isfinite(mem.g[..., 2])
            if np.any(bad):
                problems.append(f"g{i + 1}: {np.count_nonzero(bad)} grid points off the strict epigraph")
            pts = pts[mem.member & (mem.g[..., i] >= 0)]
        counts[i] = len(pts)
        if counts[i] == 0:
            problems.append(f"g{i + 1}: no samples in boundary layer")
            continue
        g = analysis.constraint(set_spec, cost, i + 1)
        table = analysis.lie_table(g, f0, fields, pts, lambda th: analysis.fd_step(cost, th, pair=pair))
        sups = table.sups()
        bad = [k for k, v in sups.items() if not np.isfinite(v)]
        if bad:
            problems.append(f"g{i + 1}: non-finite Lie derivatives in {bad}")
        c1[i] = a * (sups["first"] + sups["second"])
        c2[i] = a * (sups["drift_first"] + sups["drift_second"] + sups["third"])
        b[i] = float(np.min(-analysis.averaged_drift(table, bank)))
    return C2BoundReport(c1=c1, c2=c2, b=b, sample_count=counts, dither_constant=a,
                         valid=not problems, problems=problems)
