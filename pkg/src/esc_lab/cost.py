"""Cost-function models and empirical checks of the power-like growth condition.

A :class:`CostModel` bundles a cost ``J``, its gradient, and the location and
value of its minimum. The minimum is *validation metadata*: practical-set
membership and convergence reports read it, the control laws in
:mod:`esc_lab.dynamics` never do.

All callables are vectorised over leading axes: ``eval`` maps ``(..., n)`` to
``(...)`` and ``grad`` maps ``(..., n)`` to ``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

GRAD_AT_MIN_TOL = 1e-9
DEGENERATE_RATIO = 1e-12
DEFAULT_POINTS_PER_DIM = 1000
_MAX_GRID_POINTS = 2_000_000


@dataclass(frozen=True)
class A1Certificate:
    """Sampled constants of ``kappa * Jt**(2-1/m) <= |grad J|**2 <= gamma * Jt**(2-1/m)``."""

    m: float
    kappa: float
    gamma: float
    domain_radius: float
    sample_count: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"exponent m must be >= 1, got {self.m}")
        if not 0 < self.kappa <= self.gamma:
            raise ValueError(f"need 0 < kappa <= gamma, got {self.kappa}, {self.gamma}")
        if self.domain_radius <= 0:
            raise ValueError("domain_radius must be positive")

    @property
    def power(self) -> float:
        return 2.0 - 1.0 / self.m


@dataclass(frozen=True)
class A1Infeasible:
    """Returned instead of a certificate when the ratio degenerates for this ``m``."""

    m: float
    reason: str
    kappa: float
    gamma: float
    worst_points: np.ndarray = field(repr=False, default_factory=lambda: np.empty((0,)))

    def __bool__(self):
        return False


@dataclass(frozen=True)
class CostModel:
    name: str
    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    x_star: np.ndarray
    j_star: float
    domain_lo: np.ndarray
    domain_hi: np.ndarray
    a1: A1Certificate | None = None
    params: dict = field(default_factory=dict)
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "x_star", np.atleast_1d(np.asarray(self.x_star, dtype=float)))
        object.__setattr__(self, "domain_lo", np.atleast_1d(np.asarray(self.domain_lo, dtype=float)))
        object.__setattr__(self, "domain_hi", np.atleast_1d(np.asarray(self.domain_hi, dtype=float)))
        object.__setattr__(self, "j_star", float(self.j_star))
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not self.validate:
            return
        if self.x_star.shape != (self.dim,):
            raise ValueError(f"x_star has shape {self.x_star.shape}, expected ({self.dim},)")
        g = np.asarray(self.grad(self.x_star))
        if np.linalg.norm(g) > GRAD_AT_MIN_TOL:
            raise ValueError(f"grad(x_star) = {g} is not zero within {GRAD_AT_MIN_TOL}")
        if not np.all(self.domain_lo < self.domain_hi):
            raise ValueError("empty domain box")

    def with_metadata(self, x_star, j_star) -> "CostModel":
        """Copy with replaced minimum metadata and no validation (used by the leak audit)."""
        return CostModel(self.name, self.dim, self.eval, self.grad,
                         np.full(self.dim, np.nan) if x_star is None else x_star,
                         j_star, self.domain_lo, self.domain_hi, self.a1,
                         dict(self.params), validate=False)

    def with_a1(self, cert: A1Certificate) -> "CostModel":
        return CostModel(self.name, self.dim, self.eval, self.grad, self.x_star,
                         self.j_star, self.domain_lo, self.domain_hi, cert,
                         dict(self.params), validate=self.validate)

    def in_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.domain_lo) & (x <= self.domain_hi), axis=-1)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.domain_lo, self.domain_hi, size=(count, self.dim))


def eval_shifted(model: CostModel, x) -> np.ndarray:
    """``J(x) - J(x*)``, the cost measured from its minimum value."""
    return np.asarray(model.eval(np.asarray(x, dtype=float))) - model.j_star


def finite_diff_gradient(model: CostModel, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient. Test oracle only."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    out = np.empty(np.broadcast_shapes(x.shape, (model.dim,)))
    for i in range(model.dim):
        e = np.zeros(model.dim)
        e[i] = h
        out[..., i] = (model.eval(x + e) - model.eval(x - e)) / (2 * h)
    return out


def default_grid(model: CostModel, points_per_dim: int = DEFAULT_POINTS_PER_DIM) -> np.ndarray:
    """Tensor grid on the declared domain box, thinned so it stays desk-sized."""
    per_dim = points_per_dim
    while per_dim ** model.dim > _MAX_GRID_POINTS:
        per_dim //= 2
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(model.domain_lo, model.domain_hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def a1_ratio(model: CostModel, x, m: float) -> np.ndarray:
    jt = eval_shifted(model, x)
    g2 = np.sum(np.asarray(model.grad(x)) ** 2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return g2 / jt ** (2.0 - 1.0 / m)


def _probe_directions(dim: int) -> np.ndarray:
    dirs = [np.eye(dim)[i] * s for i in range(dim) for s in (1.0, -1.0)]
    if dim > 1:
        ones = np.ones(dim) / np.sqrt(dim)
        dirs += [ones, -ones]
    return np.array(dirs)


def _radial_slopes(model: CostModel, m: float) -> np.ndarray:
    """Log-log slope of the A1 ratio over the innermost resolvable decade.

    A valid exponent gives a ratio that tends to a positive constant at the
    minimiser (slope ~ 0). Radii are limited so that ``J - J(x*)`` stays well
    above the rounding floor of ``J`` itself.
    """
    floor = 1e-7 * max(1.0, abs(model.j_star))
    reach = 0.5 * float(np.min(model.domain_hi - model.domain_lo))
    radii = reach * np.logspace(0, -8, 161)
    slopes = []
    for d in _probe_directions(model.dim):
        pts = model.x_star + radii[:, None] * d
        inside = model.in_domain(pts)
        jt = eval_shifted(model, pts)
        ok = inside & (jt > floor)
        if ok.sum() < 2:
            continue
        r_ok = radii[ok]
        inner = r_ok[-1]
        outer_idx = np.argmin(np.abs(np.log10(r_ok) - np.log10(10 * inner)))
        if r_ok[outer_idx] <= inner:
            continue
        rat = a1_ratio(model, pts[ok][[outer_idx, -1]], m)
        if np.any(~np.isfinite(rat)) or np.any(rat <= 0):
            slopes.append(np.inf)
            continue
        slopes.append(np.log(rat[0] / rat[1]) / np.log(r_ok[outer_idx] / inner))
    return np.array(slopes)


def estimate_a1_constants(model: CostModel, m: float, grid=None,
                          slope_tol: float = 0.5) -> A1Certificate | A1Infeasible:
    """Estimate kappa and gamma as the inf and sup of the A1 ratio on ``grid``.

    Grid points coinciding with the minimiser are dropped. Besides the
    ``1e-12`` ratio floor, a radial probe towards the minimiser flags an
    exponent under which the ratio drifts to zero or infinity.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    pts = default_grid(model) if grid is None else np.asarray(grid, dtype=float).reshape(-1, model.dim)
    dist = np.linalg.norm(pts - model.x_star, axis=-1)
    pts = pts[dist > 1e-9]
    jt = eval_shifted(model, pts)
    pts = pts[jt > 0]
    ratio = a1_ratio(model, pts, m)
    finite = np.isfinite(ratio)
    if not np.any(finite):
        return A1Infeasible(m, "no finite ratio on grid", 0.0, np.inf)
    kappa = float(np.min(ratio[finite]))
    gamma = float(np.max(ratio[finite]))
    if not np.all(finite):
        return A1Infeasible(m, "ratio not finite on grid", kappa, np.inf, pts[~finite][:5])
    if kappa < DEGENERATE_RATIO:
        worst = pts[np.argsort(ratio)[:5]]
        return A1Infeasible(m, f"ratio below {DEGENERATE_RATIO:g}", kappa, gamma, worst)
    slopes = _radial_slopes(model, m)
    if slopes.size and np.max(np.abs(slopes)) > slope_tol:
        s = slopes[np.argmax(np.abs(slopes))]
        trend = "vanishes" if s > 0 else "diverges"
        return A1Infeasible(m, f"ratio {trend} towards the minimiser (radial slope {s:.3g})",
                            kappa, gamma)
    radius = float(np.max(np.linalg.norm(pts - model.x_star, axis=-1)))
    return A1Certificate(m=float(m), kappa=kappa, gamma=gamma, domain_radius=radius,
                         sample_count=int(pts.shape[0]))


def check_cost_model(model: CostModel, n_samples: int = 100, seed: int = 0,
                     rel_tol: float = 1e-6) -> list[str]:
    """Sampled invariant checks; returns human-readable problems (empty if none)."""
    rng = np.random.default_rng(seed)
    x = model.sample(n_samples, rng)
    problems = []
    jt = eval_shifted(model, x)
    far = np.linalg.norm(x - model.x_star, axis=-1) > 1e-6
    if np.any(jt[far] <= 0):
        problems.append(f"J(x) <= J(x*) at {np.count_nonzero(jt[far] <= 0)} samples")
    g = np.asarray(model.grad(x))
    fd = finite_diff_gradient(model, x, h=1e-6 * max(1.0, float(np.max(np.abs(x)))))
    scale = np.maximum(np.linalg.norm(g, axis=-1), 1.0)
    err = np.linalg.norm(g - fd, axis=-1) / scale
    if np.max(err) > rel_tol:
        problems.append(f"gradient mismatch vs finite differences: {np.max(err):.3g}")
    if np.any(np.linalg.norm(g[far], axis=-1) == 0):
        problems.append("second critical point sampled")
    return problems


# built-in models -----------------------------------------------------------

def quadratic_shifted(center=1.0, curvature=1.0, offset=0.0, dim=None,
                      domain=None) -> CostModel:
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if dim is not None and c.size == 1:
        c = np.full(int(dim), c[0])
    k = float(curvature)
    if k <= 0:
        raise ValueError("curvature must be positive")
    off = float(offset)
    lo, hi = _box(domain, c, 2.0)

    def J(x):
        return 0.5 * k * np.sum((np.asarray(x) - c) ** 2, axis=-1) + off

    def dJ(x):
        return k * (np.asarray(x) - c)

    return CostModel("quadratic_shifted", c.size, J, dJ, c, off, lo, hi,
                     params={"center": c.tolist(), "curvature": k, "offset": off})


def quartic(center=0.0, scale=1.0, offset=0.0, dim=None, domain=None) -> CostModel:
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if dim is not None and c.size == 1:
        c = np.full(int(dim), c[0])
    a = float(scale)
    off = float(offset)
    lo, hi = _box(domain, c, 1.0)

    def J(x):
        return a * np.sum((np.asarray(x) - c) ** 4, axis=-1) + off

    def dJ(x):
        return 4 * a * (np.asarray(x) - c) ** 3

    return CostModel("quartic", c.size, J, dJ, c, off, lo, hi,
                     params={"center": c.tolist(), "scale": a, "offset": off})


def rosenbrock_like(a=1.0, b=10.0, offset=0.0, domain=None) -> CostModel:
    a, b, off = float(a), float(b), float(offset)
    xs = np.array([a, a * a])
    if domain is None:
        lo, hi = xs - 1.0, xs + 1.0
    else:
        lo, hi = _box(domain, xs, 1.0)

    def J(x):
        x = np.asarray(x)
        return (a - x[..., 0]) ** 2 + b * (x[..., 1] - x[..., 0] ** 2) ** 2 + off

    def dJ(x):
        x = np.asarray(x)
        r = x[..., 1] - x[..., 0] ** 2
        return np.stack([-2 * (a - x[..., 0]) - 4 * b * x[..., 0] * r, 2 * b * r], axis=-1)

    return CostModel("rosenbrock_like", 2, J, dJ, xs, off, lo, hi,
                     params={"a": a, "b": b, "offset": off})


def _box(domain, center, half):
    if domain is None:
        return center - half, center + half
    d = np.asarray(domain, dtype=float)
    if d.ndim == 1 and d.size == 2:
        return np.full(center.size, d[0]), np.full(center.size, d[1])
    return d[..., 0], d[..., 1]


BUILTIN_COSTS = {
    "quadratic_shifted": quadratic_shifted,
    "quartic": quartic,
    "rosenbrock_like": rosenbrock_like,
}


def make_cost(name: str, **params) -> CostModel:
    try:
        factory = BUILTIN_COSTS[name]
    except KeyError:
        raise ValueError(f"unknown cost model {name!r}; known: {sorted(BUILTIN_COSTS)}") from None
    return factory(**params)
