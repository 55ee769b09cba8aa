"""Dither signals, extremum-seeking right-hand sides and a fixed-step RK4 integrator.

State layouts (all arrays may carry leading batch axes):

* epigraph systems (``proposed``, ``lie_approx``): ``theta = (x_1..x_n, z)``
* ``grushkovskaya``: ``x``
* ``suttner``: ``(x_1..x_n, z, Omega)``

Channel signs
-------------
The dithered field of channel ``(j, s)`` is ``sign_s * F_s(arg) * e_j``. With the
sine/cosine dithers below, a pair whose Wronskian ``F1 F2' - F1' F2`` equals +1
averages to gradient *descent* only when the product of the two channel signs
is ``-1`` for the epigraph argument ``z - J(x)`` and ``+1`` for the plain
argument ``J(x) - offset``. The defaults encode exactly that;
:func:`averaged_gain` reports the resulting coefficient of ``-grad J``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np

from esc_lab.cost import CostModel
from esc_lab.generators import GeneratingPair

PROPOSED_SIGNS = (-1.0, 1.0)
GRUSHKOVSKAYA_SIGNS = (-1.0, -1.0)
DEFAULT_STEPS_PER_PERIOD = 64
MIN_STEP = 1e-14


class DomainError(RuntimeError):
    """Raised by a right-hand side evaluated outside its domain."""


# dithers -------------------------------------------------------------------

@dataclass(frozen=True)
class DitherBank:
    """Sinusoidal dithers ``u_{j,1} = A_j sin(k_j t)``, ``u_{j,2} = A_j cos(k_j t)``.

    ``k_j = 2 pi w_j omega`` and ``A_j = 2 sqrt(pi w_j omega)``, so ``A_j**2 / k_j = 2``.
    Channels are ``(j, s)`` with ``j`` a 0-based coordinate index and ``s`` in {1, 2}.
    Antiderivatives ``U`` are the zero-mean (purely periodic) ones.
    """

    omega: float
    multipliers: tuple = (1,)

    def __post_init__(self):
        raw = [float(m) for m in np.atleast_1d(self.multipliers)]
        if any(m <= 0 or m != int(m) for m in raw):
            raise ValueError(f"multipliers must be positive integers, got {raw}")
        mult = tuple(int(m) for m in raw)
        object.__setattr__(self, "multipliers", mult)
        object.__setattr__(self, "omega", float(self.omega))
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if len(set(mult)) != len(mult):
            raise ValueError(f"multipliers must be pairwise distinct, got {mult}")
        w = np.asarray(mult, dtype=float)
        # cached per-coordinate frequencies and amplitudes for the integrator hot path
        object.__setattr__(self, "_k", 2 * math.pi * w * self.omega)
        object.__setattr__(self, "_a", 2 * np.sqrt(math.pi * w * self.omega))

    @property
    def n(self) -> int:
        return len(self.multipliers)

    @property
    def channels(self) -> list[tuple[int, int]]:
        return [(j, s) for j in range(self.n) for s in (1, 2)]

    @property
    def fastest_period(self) -> float:
        return 1.0 / (max(self.multipliers) * self.omega)

    def freq(self, j: int) -> float:
        return 2 * math.pi * self.multipliers[j] * self.omega

    def amp(self, j: int) -> float:
        return 2 * math.sqrt(math.pi * self.multipliers[j] * self.omega)

    def with_omega(self, omega: float) -> "DitherBank":
        return DitherBank(omega, self.multipliers)

    def u(self, j: int, s: int, t):
        ph = self.freq(j) * np.asarray(t, dtype=float)
        return self.amp(j) * (np.sin(ph) if s == 1 else np.cos(ph))

    def all_u(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Sine-channel and cosine-channel values for every coordinate at scalar ``t``."""
        ph = self._k * t
        return self._a * np.sin(ph), self._a * np.cos(ph)

    def U(self, j: int, s: int, t):
        ph = self.freq(j) * np.asarray(t, dtype=float)
        c = self.amp(j) / self.freq(j)
        return -c * np.cos(ph) if s == 1 else c * np.sin(ph)

    def U2(self, lam1, lam2, t):
        """Zero-mean antiderivative of ``v(lam1, lam2) + U_lam1(t) u_lam2(t)``."""
        (i, s1), (j, s2) = lam1, lam2
        t = np.asarray(t, dtype=float)
        ki, kj = self.freq(i), self.freq(j)
        p1 = 0.0 if s1 == 1 else math.pi / 2
        p2 = 0.0 if s2 == 1 else math.pi / 2
        coef = self.amp(i) * self.amp(j) / (2 * ki)
        out = coef * np.cos((ki + kj) * t + p1 + p2) / (ki + kj)
        if i != j:
            out = out + coef * np.cos((kj - ki) * t + p2 - p1) / (kj - ki)
        return out

    def v(self, lam1, lam2) -> int:
        (i, s1), (j, s2) = lam1, lam2
        if i != j:
            return 0
        if (s1, s2) == (1, 2):
            return 1
        if (s1, s2) == (2, 1):
            return -1
        return 0


def dither(bank: DitherBank, j: int, s: int, t):
    return bank.u(j, s, t)


def iterated_dither_integrals(bank: DitherBank, lam1, lam2, t):
    """``(U_lam1(t), U_{lam1,lam2}(t))``."""
    return bank.U(*lam1, t), bank.U2(lam1, lam2, t)


def dither_bound_constant(bank: DitherBank) -> float:
    """Closed-form ``a`` with ``|U| <= a/sqrt(w)``, ``|U2| <= a/w``, ``|U2 u| <= a/sqrt(w)``."""
    w = bank.multipliers
    first = max(1.0 / math.sqrt(math.pi * wj) for wj in w)
    second = 0.0
    for wi, wj in product(w, w):
        if wi == wj:
            c = 1.0 / (4 * math.pi * wi)
        else:
            c = math.sqrt(wj / wi) / (2 * math.pi) * (1.0 / (wi + wj) + 1.0 / abs(wj - wi))
        second = max(second, c)
    third = second * max(2 * math.sqrt(math.pi * wl) for wl in w)
    return max(first, second, third)


def beta_coefficient(bank: DitherBank, lam_i, lam_j, samples: int = 4096) -> float:
    """``(1/T) int_0^T u_j(tau) int_0^tau u_i(s) ds dtau`` by quadrature over one common period."""
    T = 1.0 / bank.omega
    tau = np.linspace(0.0, T, samples, endpoint=False)
    inner = bank.U(*lam_i, tau) - bank.U(*lam_i, 0.0)
    return float(np.mean(bank.u(*lam_j, tau) * inner))


# vector fields -------------------------------------------------------------

def control_fields(cost: CostModel, pair: GeneratingPair, n: int | None = None,
                   signs=PROPOSED_SIGNS) -> dict:
    """Dithered fields ``f_(j,s)(theta) = sign_s F_s(z - J(x)) e_j`` keyed by channel."""
    n = cost.dim if n is None else n
    fns = (pair.f1, pair.f2)
    out = {}
    for j in range(n):
        for s in (1, 2):
            def f(theta, j=j, s=s):
                theta = np.asarray(theta, dtype=float)
                y = theta[..., n] - cost.eval(theta[..., :n])
                v = np.zeros_like(theta)
                v[..., j] = signs[s - 1] * fns[s - 1](y)
                return v
            out[(j, s)] = f
    return out


def drift_field(cost: CostModel) -> Callable:
    n = cost.dim

    def f0(theta):
        theta = np.asarray(theta, dtype=float)
        v = np.zeros_like(theta)
        v[..., n] = -(theta[..., n] - cost.eval(theta[..., :n]))
        return v

    return f0


def averaged_gain(pair: GeneratingPair, y, signs=PROPOSED_SIGNS, argument: str = "epigraph"):
    """Coefficient ``c(y)`` in the averaged dynamics ``xdot_j = -c(y) dJ/dx_j``.

    Equals ``-sign1 sign2 W(y)`` for the epigraph argument ``z - J(x)`` and
    ``sign1 sign2 W(y)`` for ``J(x) - offset``, with ``W = F1 F2' - F1' F2``.
    ``c = 1`` is exact gradient descent.
    """
    w = pair.wronskian(y) * signs[0] * signs[1]
    return -w if argument == "epigraph" else w


# right-hand sides ------------------------------------------------------------

def _y(cost, theta, n):
    return theta[..., n] - cost.eval(theta[..., :n])


def rhs_proposed(cost: CostModel, pair: GeneratingPair, bank: DitherBank, theta, t,
                 signs=PROPOSED_SIGNS):
    """Epigraph ESC. Returns ``(dtheta, u)`` with ``u`` the per-coordinate input ``xdot``."""
    theta = np.asarray(theta, dtype=float)
    n = len(bank.multipliers)
    y = _y(cost, theta, n)
    if not np.all(y > 0):
        raise DomainError(f"epigraph violated: min z - J(x) = {np.min(y):.3e}")
    us, uc = bank.all_u(t)
    a1 = signs[0] * pair.f1(y)
    a2 = signs[1] * pair.f2(y)
    u = a1[..., None] * us + a2[..., None] * uc
    d = np.empty_like(theta)
    d[..., :n] = u
    d[..., n] = -y
    return d, u


def rhs_lie_approx(cost: CostModel, theta):
    theta = np.asarray(theta, dtype=float)
    n = cost.dim
    d = np.empty_like(theta)
    d[..., :n] = -np.asarray(cost.grad(theta[..., :n]))
    d[..., n] = -_y(cost, theta, n)
    return d


def rhs_grushkovskaya(cost: CostModel, pair: GeneratingPair, bank: DitherBank, offset: float,
                      x, t, signs=GRUSHKOVSKAYA_SIGNS):
    """Fixed-offset ESC ``xdot = sum_s sign_s F_s(J(x) - offset) u_{j,s}(t)``. Returns ``(xdot, u)``."""
    x = np.asarray(x, dtype=float)
    y = cost.eval(x) - offset
    if np.any(~(y > 0)):
        raise DomainError(f"J(x) - offset = {np.min(y):.3e} outside the pair domain")
    us, uc = bank.all_u(t)
    u = (signs[0] * pair.f1(y))[..., None] * us + (signs[1] * pair.f2(y))[..., None] * uc
    return u, u


def rhs_suttner(cost: CostModel, state, multipliers=(1,)):
    """Adaptive-frequency ESC; ``state = (x, z, Omega)``. Returns ``(dstate, u)``.

    ``u_j = sqrt(w_j) / y**2 * sin(w_j Omega + 1/y)``, ``zdot = -y``,
    ``Omegadot = 1/y**5`` with ``y = z - J(x)``.
    """
    state = np.asarray(state, dtype=float)
    n = cost.dim
    y = _y(cost, state, n)
    if np.any(~(y > 0)):
        raise DomainError(f"epigraph violated: min z - J(x) = {np.min(y):.3e}")
    w = np.asarray(multipliers, dtype=float)
    inv = 1.0 / y
    u = (np.sqrt(w) * (inv * inv)[..., None]
         * np.sin(w * state[..., n + 1][..., None] + inv[..., None]))
    d = np.empty_like(state)
    d[..., :n] = u
    d[..., n] = -y
    d[..., n + 1] = inv ** 5
    return d, u


# systems -------------------------------------------------------------------

@dataclass
class System:
    """A right-hand side plus the bookkeeping the integrator needs."""

    name: str
    cost: CostModel
    bank: DitherBank

    def rhs(self, t, s):
        raise NotImplementedError

    def control(self, t, s):
        return np.zeros(s.shape[:-1] + (self.cost.dim,))

    def violation(self, s) -> str | None:
        return None

    def labels(self) -> list[str]:
        raise NotImplementedError

    def step_size(self, s, steps_per_period: int) -> float:
        return self.bank.fastest_period / steps_per_period

    adaptive = False


def _epigraph_violation(cost, s, n):
    y = _y(cost, np.asarray(s), n)
    if np.any(~np.isfinite(y)):
        return "non-finite state"
    if np.any(y <= 0):
        return f"epigraph violation (min z - J(x) = {np.min(y):.3e})"
    return None


@dataclass
class ProposedSystem(System):
    pair: GeneratingPair = None
    signs: tuple = PROPOSED_SIGNS

    def __post_init__(self):
        if not self.pair.c1:
            raise ValueError(f"pair {self.pair.family_tag!r} fails the vanishing/Wronskian "
                             "conditions and cannot drive the epigraph system")

    def rhs(self, t, s):
        return rhs_proposed(self.cost, self.pair, self.bank, s, t, self.signs)[0]

    def control(self, t, s):
        return rhs_proposed(self.cost, self.pair, self.bank, s, t, self.signs)[1]

    def violation(self, s):
        return _epigraph_violation(self.cost, s, self.cost.dim)

    def labels(self):
        return [f"x_{i + 1}" for i in range(self.cost.dim)] + ["z"]


@dataclass
class LieApproxSystem(System):
    def rhs(self, t, s):
        return rhs_lie_approx(self.cost, s)

    def control(self, t, s):
        return -np.asarray(self.cost.grad(np.asarray(s)[..., :self.cost.dim]))

    def violation(self, s):
        return None if np.all(np.isfinite(s)) else "non-finite state"

    def labels(self):
        return [f"x_{i + 1}" for i in range(self.cost.dim)] + ["z"]


@dataclass
class GrushkovskayaSystem(System):
    pair: GeneratingPair = None
    offset: float = 2019.0
    signs: tuple = GRUSHKOVSKAYA_SIGNS

    def rhs(self, t, s):
        return rhs_grushkovskaya(self.cost, self.pair, self.bank, self.offset, s, t, self.signs)[0]

    def control(self, t, s):
        return rhs_grushkovskaya(self.cost, self.pair, self.bank, self.offset, s, t, self.signs)[1]

    def violation(self, s):
        y = self.cost.eval(np.asarray(s)) - self.offset
        if np.any(~np.isfinite(y)):
            return "non-finite state"
        if np.any(y <= 0):
            return f"J(x) - offset = {np.min(y):.3e} left the pair domain"
        return None

    def labels(self):
        return [f"x_{i + 1}" for i in range(self.cost.dim)]


@dataclass
class SuttnerSystem(System):
    adaptive = True

    def rhs(self, t, s):
        return rhs_suttner(self.cost, s, self.bank.multipliers)[0]

    def control(self, t, s):
        return rhs_suttner(self.cost, s, self.bank.multipliers)[1]

    def violation(self, s):
        return _epigraph_violation(self.cost, s, self.cost.dim)

    def labels(self):
        return [f"x_{i + 1}" for i in range(self.cost.dim)] + ["z", "Omega"]

    def phase_rate(self, s):
        y = _y(self.cost, np.asarray(s), self.cost.dim)
        return max(self.bank.multipliers) * float(np.max(1.0 / y ** 5))

    def step_size(self, s, steps_per_period):
        base = self.bank.fastest_period / steps_per_period
        return min(base, 2 * math.pi / steps_per_period / self.phase_rate(s))


# integration ---------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    labels: list
    system: str
    rhs_evals: int = 0
    steps: int = 0
    aborted: bool = False
    reason: str | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def x(self):
        n = self.controls.shape[-1]
        return self.states[..., :n]

    def column(self, label: str) -> np.ndarray:
        return self.states[..., self.labels.index(label)]


def rk4_step(f, t, s, h):
    k1 = f(t, s)
    k2 = f(t + h / 2, s + h / 2 * k1)
    k3 = f(t + h / 2, s + h / 2 * k2)
    k4 = f(t + h, s + h * k3)
    return s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(system: System, state0, t_end: float,
              steps_per_fastest_period: int = DEFAULT_STEPS_PER_PERIOD,
              record_every: int = 1, monitor: Callable | None = None,
              max_steps: int | None = None) -> Trajectory:
    """Classical RK4 with the step slaved to the fastest dither period.

    Fixed-step systems use ``h = T_min / steps_per_fastest_period`` (shrunk so the
    grid lands on ``t_end``); adaptive systems recompute ``h`` every step from
    :meth:`System.step_size`. The domain is checked after every step; a
    violation or a step below ``1e-14`` truncates the trajectory with a reason.
    ``monitor(t, state)`` is called at every step, recorded or not.
    ``max_steps`` caps the work for adaptive systems (truncation reason
    ``"step budget exhausted"``).
    """
    if steps_per_fastest_period < 32:
        raise ValueError("steps_per_fastest_period must be >= 32")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    s = np.array(state0, dtype=float)
    why = system.violation(s)
    if why:
        raise ValueError(f"initial state outside the domain: {why}")

    ts, xs, us = [0.0], [s.copy()], [system.control(0.0, s)]
    if monitor:
        monitor(0.0, s)
    evals = 0
    aborted, reason = False, None
    t = 0.0
    k = 0
    if not system.adaptive:
        h0 = system.step_size(s, steps_per_fastest_period)
        nsteps = int(math.ceil(t_end / h0 - 1e-9))
        h0 = t_end / nsteps
    while True:
        if system.adaptive:
            if t >= t_end * (1 - 1e-15):
                break
            h = min(system.step_size(s, steps_per_fastest_period), t_end - t)
            if h < MIN_STEP:
                aborted, reason = True, "phase-step underflow"
                break
            if max_steps is not None and k >= max_steps:
                aborted, reason = True, "step budget exhausted"
                break
        else:
            if k >= nsteps:
                break
            h = h0
        try:
            s_new = rk4_step(system.rhs, t, s, h)
        except DomainError as exc:
            aborted, reason = True, f"domain error inside step: {exc}"
            break
        evals += 4
        if not np.all(np.isfinite(s_new)):
            aborted, reason = True, "non-finite state"
            break
        why = system.violation(s_new)
        if why:
            aborted, reason = True, why
            break
        k += 1
        t = k * h0 if not system.adaptive else t + h
        s = s_new
        if monitor:
            monitor(t, s)
        if k % record_every == 0:
            ts.append(t)
            xs.append(s.copy())
            us.append(system.control(t, s))
    if ts[-1] != t:
        ts.append(t)
        xs.append(s.copy())
        us.append(system.control(t, s))
    return Trajectory(np.array(ts), np.array(xs), np.array(us), system.labels(),
                      system.name, rhs_evals=evals, steps=k, aborted=aborted, reason=reason,
                      meta={"steps_per_period": steps_per_fastest_period,
                            "omega": system.bank.omega,
                            "multipliers": system.bank.multipliers})


def make_system(kind: str, cost: CostModel, bank: DitherBank, pair: GeneratingPair | None = None,
                offset: float = 2019.0) -> System:
    if kind == "proposed":
        return ProposedSystem("proposed", cost, bank, pair=pair)
    if kind == "lie_approx":
        return LieApproxSystem("lie_approx", cost, bank)
    if kind == "grushkovskaya":
        return GrushkovskayaSystem("grushkovskaya", cost, bank, pair=pair, offset=offset)
    if kind == "suttner":
        return SuttnerSystem("suttner", cost, bank)
    raise ValueError(f"unknown system {kind!r}")
