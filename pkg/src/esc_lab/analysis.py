"""Practical sets, remainder decomposition along trajectories, and run summaries.

The constraints are

* ``g1 = Jt(x) - J0``
* ``g2 = z - J(x*) - z0``
* ``g3 = tanh(Jt(x)**p) / (z - J(x)) - y0``  with ``p = 2 - 1/m``

where ``Jt = J - J(x*)``. ``Delta_level`` is the strict-epigraph set where all
three are ``<= level``.

For a smooth ``g`` and the dithered system
``theta' = f0 + sum_lam f_lam u_lam(t)`` the identity

    g(t2) = g(t1) + R1(t2) - R1(t1) + int_t1^t2 (F + R2) dt

holds exactly along every solution, with ``F`` the drift of ``g`` under the
averaged dynamics and ``R1``, ``R2`` built from iterated Lie derivatives and
dither antiderivatives. :func:`lemma1_terms` evaluates the pieces with nested
finite differences; :func:`lemma1_residual` checks the identity on a computed
trajectory.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from esc_lab.cost import CostModel, eval_shifted
from esc_lab.dynamics import (PROPOSED_SIGNS, DitherBank, Trajectory, control_fields,
                              drift_field)

FD_REL_STEP = 1e-2


def y0_lower_bound(kappa: float, epsilon: float) -> float:
    """Smallest admissible ``y0`` (exclusive) for given growth constant and enlargement."""
    if kappa <= 0 or epsilon <= 0:
        raise ValueError("kappa and epsilon must be positive")
    return (1.0 + math.sqrt(1.0 + 8.0 * kappa * epsilon)) / (2.0 * kappa)


@dataclass(frozen=True)
class PracticalSetSpec:
    J0: float
    z0: float
    y0: float
    epsilon: float
    delta: float | None = None
    m: float = 1.0
    kappa: float | None = None

    def __post_init__(self):
        for name in ("J0", "z0", "y0", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.delta is None:
            object.__setattr__(self, "delta", self.epsilon / 2)
        if not 0 < self.delta < self.epsilon:
            raise ValueError(f"delta must lie in (0, epsilon), got {self.delta}")
        if self.z0 <= self.J0:
            raise ValueError(f"need z0 > J0, got z0={self.z0}, J0={self.J0}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.kappa is not None:
            lb = y0_lower_bound(self.kappa, self.epsilon)
            if self.y0 <= lb:
                raise ValueError(f"y0={self.y0} must exceed {lb:.6g} for kappa={self.kappa}")

    @classmethod
    def auto(cls, J0, z0, epsilon, kappa, m=1.0, delta=None, margin=1e-3):
        """``y0`` placed ``margin`` above its lower bound."""
        return cls(J0, z0, y0_lower_bound(kappa, epsilon) + margin, epsilon, delta, m, kappa)

    @property
    def power(self) -> float:
        return 2.0 - 1.0 / self.m


def check_level_set(spec: PracticalSetSpec, cost: CostModel, samples: int = 4000,
                    seed: int = 0) -> bool:
    """Sampled check that ``{Jt <= J0 + eps}`` does not touch the boundary of the domain box.

    Walks outwards from ``x*`` along random directions to the box boundary and
    requires ``Jt > J0 + eps`` there.
    """
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(samples, cost.dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        t_hi = np.where(d > 0, (cost.domain_hi - cost.x_star) / d,
                        np.where(d < 0, (cost.domain_lo - cost.x_star) / d, np.inf))
    reach = np.min(t_hi, axis=1)
    edge = cost.x_star + reach[:, None] * d
    return bool(np.all(eval_shifted(cost, edge) > spec.J0 + spec.epsilon))


# constraints ---------------------------------------------------------------

def _split(cost, theta):
    theta = np.asarray(theta, dtype=float)
    n = cost.dim
    return theta, theta[..., :n], theta[..., n]


def eval_g(spec: PracticalSetSpec, cost: CostModel, theta, strict: bool = False) -> np.ndarray:
    """``(g1, g2, g3)`` stacked on the last axis. ``g3`` is NaN off the strict epigraph."""
    theta, x, z = _split(cost, theta)
    jx = np.asarray(cost.eval(x))
    jt = np.maximum(jx - cost.j_star, 0.0)
    y = z - jx
    if strict and np.any(y <= 0):
        raise ValueError("g3 undefined on or below the graph of J")
    with np.errstate(divide="ignore", invalid="ignore"):
        g3 = np.where(y > 0, np.tanh(jt ** spec.power) / y - spec.y0, np.nan)
    return np.stack([jt - spec.J0, z - cost.j_star - spec.z0, g3], axis=-1)


def constraint(spec: PracticalSetSpec, cost: CostModel, which: int) -> Callable:
    def g(theta):
        return eval_g(spec, cost, theta)[..., which - 1]
    return g


@dataclass
class Membership:
    member: np.ndarray
    near_active: np.ndarray
    g: np.ndarray


def in_delta(spec: PracticalSetSpec, cost: CostModel, theta, level: float) -> Membership:
    """Membership in ``Delta_level`` and which constraints sit within ``delta`` of the level."""
    theta, x, z = _split(cost, theta)
    g = eval_g(spec, cost, theta)
    y = z - np.asarray(cost.eval(x))
    with np.errstate(invalid="ignore"):
        member = (y > 0) & np.all(g <= level, axis=-1)
        near = (g >= level - spec.delta) & (y > 0)[..., None]
    return Membership(member, near, g)


def closed_form_Fg(spec: PracticalSetSpec, cost: CostModel, theta, which: int) -> np.ndarray:
    """Drift of ``g_which`` along the averaged flow ``x' = -grad J``, ``z' = -(z - J)``."""
    theta, x, z = _split(cost, theta)
    jx = np.asarray(cost.eval(x))
    y = z - jx
    if np.any(y <= 0):
        raise ValueError("closed form is singular on or below the graph of J")
    g2 = np.sum(np.asarray(cost.grad(x)) ** 2, axis=-1)
    if which == 1:
        return -g2
    if which == 2:
        return -y
    if which == 3:
        p = spec.power
        jt = np.maximum(jx - cost.j_star, 0.0)
        eta = np.tanh(jt ** p)
        deta = 1.0 - eta ** 2
        return (eta / y - eta * g2 / y ** 2
                - p * jt ** (p - 1.0) * deta * g2 / y)
    raise ValueError("which must be 1, 2 or 3")


# nested finite-difference Lie derivatives -----------------------------------

def fd_step(cost: CostModel, theta, rel_step: float = FD_REL_STEP, pair=None) -> np.ndarray:
    """Displacement length for a directional difference at ``theta``.

    ``rel_step * min(1, y, l(y))`` with ``y = z - J(x)``. ``l`` is the local
    length scale ``(|F1| + |F2|) / (|F1'| + |F2'|)`` of the generating pair when
    one is given, so fast-phase pairs are resolved. Every stencil point stays
    well inside the strict epigraph, where ``g3`` and the pair are singular.
    """
    theta, x, z = _split(cost, theta)
    y = np.clip(z - np.asarray(cost.eval(x)), 0.0, 1.0)
    if pair is not None:
        yy = np.where(y > 0, y, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ell = ((np.abs(pair.f1(yy)) + np.abs(pair.f2(yy)))
                   / (np.abs(pair.f1_prime(yy)) + np.abs(pair.f2_prime(yy))))
        y = np.where(np.isfinite(ell), np.minimum(y, ell), y)
    return rel_step * y


def lie(h: Callable, f: Callable, step: Callable) -> Callable:
    """``theta -> grad h(theta) . f(theta)`` by a five-point central difference along ``f``."""
    def Lh(theta):
        theta = np.asarray(theta, dtype=float)
        v = f(theta)
        nrm = np.linalg.norm(v, axis=-1)
        dl = step(theta)
        safe = (nrm > 0) & (dl > 0)
        eps = np.where(safe, dl / np.where(safe, nrm, 1.0), 0.0)
        s = eps[..., None] * v
        diff = (-h(theta + 2 * s) + 8 * h(theta + s) - 8 * h(theta - s) + h(theta - 2 * s))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(safe, diff / (12 * np.where(safe, eps, 1.0)), 0.0)
    return Lh


@dataclass
class LieTable:
    """Iterated Lie derivatives of one function at a batch of points.

    ``second[(l1, l2)]`` is ``L_f_l2 L_f_l1 g`` and ``third[(l1, l2, l3)]`` is
    ``L_f_l3 L_f_l2 L_f_l1 g``; ``drift_*`` prefix an outer ``L_f0``.
    """

    g: np.ndarray
    drift: np.ndarray
    first: dict
    second: dict
    drift_first: dict
    drift_second: dict
    third: dict

    def sups(self) -> dict:
        def tot(d):
            return float(sum(np.max(np.abs(v)) for v in d.values())) if d else 0.0
        return {"first": tot(self.first), "second": tot(self.second),
                "drift_first": tot(self.drift_first), "drift_second": tot(self.drift_second),
                "third": tot(self.third)}


def lie_table(g: Callable, f0: Callable, fields: dict, pts, step: Callable,
              order: int = 3) -> LieTable:
    pts = np.asarray(pts, dtype=float)
    chans = list(fields)
    L1 = {l: lie(g, fields[l], step) for l in chans}
    L2 = {(a, b): lie(L1[a], fields[b], step) for a, b in product(chans, chans)}
    first = {l: L1[l](pts) for l in chans}
    second = {k: L2[k](pts) for k in L2}
    drift_first = {l: lie(L1[l], f0, step)(pts) for l in chans}
    drift_second, third = {}, {}
    if order >= 3:
        drift_second = {k: lie(L2[k], f0, step)(pts) for k in L2}
        third = {(a, b, c): lie(L2[(a, b)], fields[c], step)(pts)
                 for a, b, c in product(chans, chans, chans)}
    return LieTable(g(pts), lie(g, f0, step)(pts), first, second, drift_first,
                    drift_second, third)


@dataclass
class RemainderBreakdown:
    F_g: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    terms: dict = field(default_factory=dict)


def averaged_drift(table: LieTable, bank: DitherBank) -> np.ndarray:
    """``F^g = L_f0 g + sum v(l1, l2) L_f_l2 L_f_l1 g``."""
    F = table.drift.copy()
    for (a, b), val in table.second.items():
        vab = bank.v(a, b)
        if vab:
            F = F + vab * val
    return F


def _assemble(table: LieTable, bank: DitherBank, t) -> RemainderBreakdown:
    t = np.asarray(t, dtype=float)
    chans = list(table.first)
    F = averaged_drift(table, bank)
    U = {l: bank.U(*l, t) for l in chans}
    U2 = {(a, b): bank.U2(a, b, t) for a, b in product(chans, chans)}
    u = {l: bank.u(*l, t) for l in chans}
    r1_first = sum(table.first[l] * U[l] for l in chans)
    r1_second = sum(table.second[k] * U2[k] for k in U2)
    r2_a = sum(table.drift_first[l] * U[l] for l in chans)
    r2_b = sum(table.drift_second[k] * U2[k] for k in U2)
    r2_c = sum(table.third[(a, b, c)] * U2[(a, b)] * u[c] for a, b, c in table.third)
    R1 = r1_first - r1_second
    R2 = -r2_a + r2_b + r2_c
    terms = {"drift": table.drift, "bracket": F - table.drift, "R1_first": r1_first,
             "R1_second": -r1_second, "R2_drift_first": -r2_a, "R2_drift_second": r2_b,
             "R2_third": r2_c}
    return RemainderBreakdown(F, np.broadcast_to(R1, F.shape).copy(),
                             np.broadcast_to(R2, F.shape).copy(), terms)


def lemma1_terms(cost: CostModel, pair, bank: DitherBank, spec: PracticalSetSpec, theta, t,
                 which_g: int, signs=PROPOSED_SIGNS, rel_step: float = FD_REL_STEP
                 ) -> RemainderBreakdown:
    """``F^g``, ``R1^g`` and ``R2^g`` at states ``theta`` and times ``t`` (broadcast together)."""
    theta = np.asarray(theta, dtype=float)
    g = constraint(spec, cost, which_g)
    fields = control_fields(cost, pair, bank.n, signs)
    table = lie_table(g, drift_field(cost), fields, theta,
                      lambda th: fd_step(cost, th, rel_step, pair))
    out = _assemble(table, bank, t)
    bad = {k: np.argwhere(~np.isfinite(v)) for k, v in out.terms.items()
           if np.any(~np.isfinite(v))}
    if bad:
        out.terms["non_finite"] = bad
    return out


def lemma1_residual(trajectory: Trajectory, cost: CostModel, pair, bank: DitherBank,
                    spec: PracticalSetSpec, which_g: int, t1: float, t2: float,
                    signs=PROPOSED_SIGNS, rel_step: float = FD_REL_STEP) -> float:
    """``|LHS - RHS|`` of the remainder identity on ``[t1, t2]``; composite Simpson quadrature."""
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    t = trajectory.t
    i1 = int(np.argmin(np.abs(t - t1)))
    i2 = int(np.argmin(np.abs(t - t2)))
    if i2 - i1 + 1 < 8:
        raise ValueError(f"only {i2 - i1 + 1} samples in [{t1}, {t2}]; need at least 8")
    ts = t[i1:i2 + 1]
    th = trajectory.states[i1:i2 + 1]
    parts = lemma1_terms(cost, pair, bank, spec, th, ts, which_g, signs, rel_step)
    g = eval_g(spec, cost, th)[..., which_g - 1]
    integral = simpson(parts.F_g + parts.R2, x=ts)
    rhs = g[0] + parts.R1[-1] - parts.R1[0] + integral
    return float(abs(g[-1] - rhs))


def estimate_omega_star(report, delta: float) -> float:
    """``max_i max((2 c1_i / delta)**2, (c2_i / b_i)**2)``; constraints with zero bounds add 0."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not report.valid:
        raise ValueError(f"invalid bound report: {report.problems}")
    b = np.asarray(report.b, dtype=float)
    if np.any(~(b > 0)):
        raise ValueError(f"F^g is not uniformly negative on the boundary layers (b = {b}); "
                         "the frequency bound does not apply")
    c1 = np.asarray(report.c1, dtype=float)
    c2 = np.asarray(report.c2, dtype=float)
    return float(np.max(np.maximum((2 * c1 / delta) ** 2, (c2 / b) ** 2)))


# sampling ------------------------------------------------------------------

def sample_practical_set(spec: PracticalSetSpec, cost: CostModel, count: int,
                         rng: np.random.Generator, level: float = 0.0) -> np.ndarray:
    """Rejection sample of ``Delta_level``."""
    out = []
    need = count
    for _ in range(200):
        x = cost.sample(max(4 * need, 256), rng)
        jt = eval_shifted(cost, x)
        x = x[jt <= spec.J0 + level]
        if len(x) == 0:
            continue
        jx = cost.eval(x)
        top = cost.j_star + spec.z0 + level
        ok = top > jx
        x, jx = x[ok], jx[ok]
        z = jx + rng.uniform(0, 1, len(x)) * (top - jx)
        th = np.column_stack([x, z])
        th = th[in_delta(spec, cost, th, level).member]
        out.append(th[:need])
        need -= len(out[-1])
        if need <= 0:
            break
    pts = np.concatenate(out) if out else np.empty((0, cost.dim + 1))
    if len(pts) < count:
        raise RuntimeError(f"could only sample {len(pts)} of {count} points")
    return pts


def sample_boundary_layer(spec: PracticalSetSpec, cost: CostModel, which: int, count: int,
                          rng: np.random.Generator, y_floor: float = 1e-2) -> np.ndarray:
    """Points of ``Delta_eps`` with ``0 <= g_which <= eps``.

    The ``g3`` layer is parametrised directly: pick ``x`` and a target value in
    ``[0, eps]`` and solve for ``z``. Points with ``z - J(x) < y_floor`` are
    skipped; closer to the graph the nested differences lose all precision.
    """
    eps = spec.epsilon
    out = []
    need = count
    for _ in range(400):
        batch = max(8 * need, 512)
        x = cost.sample(batch, rng)
        jt = eval_shifted(cost, x)
        jx = cost.eval(x)
        if which == 1:
            keep = (jt >= spec.J0) & (jt <= spec.J0 + eps)
            x, jx = x[keep], jx[keep]
            top = cost.j_star + spec.z0 + eps
            z = jx + rng.uniform(0, 1, len(x)) * (top - jx)
        elif which == 2:
            keep = jt <= spec.J0 + eps
            x, jx = x[keep], jx[keep]
            z = cost.j_star + spec.z0 + rng.uniform(0, eps, len(x))
        elif which == 3:
            keep = jt <= spec.J0 + eps
            x, jx, jt = x[keep], jx[keep], jt[keep]
            target = rng.uniform(0, eps, len(x))
            y = np.tanh(np.maximum(jt, 0) ** spec.power) / (spec.y0 + target)
            z = jx + y
        else:
            raise ValueError("which must be 1, 2 or 3")
        th = np.column_stack([x, z])
        mem = in_delta(spec, cost, th, eps)
        gi = mem.g[..., which - 1]
        y = z - jx
        ok = mem.member & (gi >= -1e-12) & (y >= y_floor)
        out.append(th[ok][:need])
        need -= len(out[-1])
        if need <= 0:
            break
    pts = np.concatenate(out) if out else np.empty((0, cost.dim + 1))
    return pts[:count]


# trajectory summaries --------------------------------------------------------

def control_envelope(trajectory: Trajectory, window: float) -> tuple[np.ndarray, np.ndarray]:
    """Trailing-window sup of ``max_j |u_j|``: ``env[k] = sup{|u(t_i)| : t_k - window <= t_i <= t_k}``."""
    t = trajectory.t
    if len(t) < 2:
        raise ValueError("trajectory too short")
    if window < np.median(np.diff(t)):
        raise ValueError("window spans fewer than 2 samples")
    mag = np.abs(trajectory.controls).reshape(len(t), -1).max(axis=1)
    env = np.empty_like(mag)
    q: deque = deque()
    lo = 0
    for k in range(len(t)):
        while q and mag[q[-1]] <= mag[k]:
            q.pop()
        q.append(k)
        while t[lo] < t[k] - window:
            lo += 1
        while q[0] < lo:
            q.popleft()
        env[k] = mag[q[0]]
    return t.copy(), env


def envelope_at(env: tuple, time: float) -> float:
    t, e = env
    return float(e[int(np.argmin(np.abs(t - time)))])


@dataclass
class ConvergenceSummary:
    system: str
    final_time: float
    final_distance: float
    final_z_gap: float | None
    monotone_violations: int
    floor_violations: int
    delta_exits: int
    max_g: np.ndarray | None
    truncated: bool
    reason: str | None
    max_control: float
    final_control_envelope: float | None = None

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["max_g"] = None if self.max_g is None else [float(v) for v in self.max_g]
        return d


def convergence_report(trajectory: Trajectory, cost: CostModel,
                       spec: PracticalSetSpec | None = None, envelope_window: float | None = None
                       ) -> ConvergenceSummary:
    n = cost.dim
    x = trajectory.states[..., :n]
    dist = float(np.max(np.linalg.norm(x[-1] - cost.x_star, axis=-1)))
    has_z = "z" in trajectory.labels
    gap = mono = floor = exits = None
    max_g = None
    if has_z:
        z = trajectory.column("z")
        zt = z - cost.j_star
        gap = float(np.max(zt[-1]))
        mono = int(np.count_nonzero(np.diff(z, axis=0) >= 1e-10))
        tt = trajectory.t.reshape((-1,) + (1,) * (z.ndim - 1))
        floor = int(np.count_nonzero(zt < 0.999 * zt[0] * np.exp(-tt)))
        if spec is not None:
            th = trajectory.states[..., :n + 1]
            mem = in_delta(spec, cost, th, spec.epsilon)
            exits = int(np.count_nonzero(~mem.member))
            max_g = np.nanmax(mem.g.reshape(-1, 3), axis=0)
    fin_env = None
    if envelope_window is not None:
        fin_env = float(control_envelope(trajectory, envelope_window)[1][-1])
    return ConvergenceSummary(trajectory.system, float(trajectory.t[-1]), dist, gap,
                              mono or 0, floor or 0, exits or 0, max_g, trajectory.aborted,
                              trajectory.reason, float(np.max(np.abs(trajectory.controls))),
                              fin_env)
