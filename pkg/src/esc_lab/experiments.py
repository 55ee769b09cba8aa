"""Batch runner: the four systems side by side, frequency sweeps and condition reports.

Every entry point takes an :class:`~esc_lab.config.ExperimentConfig`. Systems
are independent; one aborting never suppresses the others' outputs. With
``jobs > 1`` they run in worker processes rebuilt from the config, so results
do not depend on the job count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from esc_lab import analysis
from esc_lab.config import ExperimentConfig
from esc_lab.cost import estimate_a1_constants
from esc_lab.dynamics import DitherBank, Trajectory, integrate, make_system
from esc_lab.generators import check_c1_wronskian, check_vanishing, sample_c2_bounds

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 1, 2

# truncation reasons that are the expected outcome for the adaptive-frequency baseline
BASELINE_TRUNCATIONS = ("phase-step underflow", "step budget exhausted")


def resolve_spec(cfg: ExperimentConfig, cost=None) -> analysis.PracticalSetSpec:
    """Practical-set constants; ``y0 = auto`` needs a feasible growth certificate."""
    cost = cost or cfg.build_cost()
    if cfg.y0 == "auto":
        cert = estimate_a1_constants(cost, cfg.m)
        if not cert:
            raise ValueError(f"y0 = auto needs the growth condition with m = {cfg.m}: {cert.reason}")
        return analysis.PracticalSetSpec.auto(cfg.J0, cfg.z0, cfg.epsilon, cert.kappa, cfg.m,
                                              cfg.delta)
    return analysis.PracticalSetSpec(cfg.J0, cfg.z0, float(cfg.y0), cfg.epsilon, cfg.delta, cfg.m)


def initial_state(cfg: ExperimentConfig, kind: str) -> np.ndarray:
    x0 = list(cfg.x0)
    if kind == "grushkovskaya":
        return np.array(x0)
    if kind == "suttner":
        return np.array(x0 + [cfg.z0_init, cfg.omega0])
    return np.array(x0 + [cfg.z0_init])


def simulate(cfg: ExperimentConfig, kind: str, t_end: float | None = None) -> Trajectory:
    cost = cfg.build_cost()
    bank = DitherBank(cfg.omega, cfg.multipliers)
    system = make_system(kind, cost, bank, cfg.build_pair(), cfg.grushkovskaya_offset)
    return integrate(system, initial_state(cfg, kind), cfg.t_end if t_end is None else t_end,
                     cfg.steps_per_period,
                     max_steps=cfg.max_steps if system.adaptive else None)


def status_of(traj: Trajectory) -> str:
    if not traj.aborted:
        return "ok"
    if traj.system == "suttner" and traj.reason in BASELINE_TRUNCATIONS:
        return "truncated"
    return "aborted"


# CSV output ----------------------------------------------------------------

def trajectory_table(traj: Trajectory, cfg: ExperimentConfig, spec, cost=None):
    """Header and rows: ``t, x_i, [z], [Omega], u_i, [g1, g2, g3], y``.

    ``y`` is ``z - J(x)`` for the epigraph systems and ``J(x) - offset`` for the
    fixed-offset baseline, i.e. the argument fed to the generating pair.
    """
    cost = cost or cfg.build_cost()
    n = cost.dim
    x = traj.states[:, :n]
    cols = [traj.t[:, None], x]
    head = ["t"] + [f"x_{i + 1}" for i in range(n)]
    if "z" in traj.labels:
        cols.append(traj.column("z")[:, None])
        head.append("z")
    if "Omega" in traj.labels:
        cols.append(traj.column("Omega")[:, None])
        head.append("Omega")
    cols.append(traj.controls.reshape(len(traj.t), -1))
    head += [f"u_{i + 1}" for i in range(n)]
    jx = np.asarray(cost.eval(x))
    if "z" in traj.labels:
        cols.append(analysis.eval_g(spec, cost, traj.states[:, :n + 1]))
        head += ["g1", "g2", "g3"]
        y = traj.column("z") - jx
    else:
        y = jx - cfg.grushkovskaya_offset
    cols.append(y[:, None])
    head.append("y")
    return head, np.hstack(cols)


def subsample_stride(rows: int, max_rows: int) -> int:
    return max(1, math.ceil(rows / max_rows))


def write_csv(path: Path, head, data: np.ndarray, max_rows: int) -> int:
    k = subsample_stride(len(data), max_rows)
    idx = np.arange(0, len(data), k)
    if idx[-1] != len(data) - 1:
        idx = np.append(idx, len(data) - 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for row in data[idx]:
            w.writerow([f"{v:.17g}" for v in row])
    return len(idx)


# run -----------------------------------------------------------------------

@dataclass
class SystemResult:
    system: str
    status: str
    reason: str | None
    summary: dict
    csv_path: str | None = None
    rows: int = 0
    extra: dict = field(default_factory=dict)


def _run_one(cfg: ExperimentConfig, kind: str, spec, out_dir: Path | None) -> SystemResult:
    cost = cfg.build_cost()
    try:
        traj = simulate(cfg, kind)
    except (ValueError, FloatingPointError) as exc:
        return SystemResult(kind, "aborted", f"could not start: {exc}", {})
    window = 1.0 / (cfg.omega * min(cfg.multipliers))
    rep = analysis.convergence_report(traj, cost, spec if "z" in traj.labels else None,
                                      envelope_window=window)
    env = analysis.control_envelope(traj, window)
    extra = {"initial_control_envelope": analysis.envelope_at(env, window),
             "steps": traj.steps, "rhs_evals": traj.rhs_evals}
    if kind == "suttner":
        rate = 1.0 / (traj.column("z") - np.asarray(cost.eval(traj.x))) ** 5
        extra["omega_rate_initial"] = float(rate[0])
        extra["omega_rate_final"] = float(rate[-1])
    if kind == "proposed" and cfg.lemma1_t2 > 0:
        bank = DitherBank(cfg.omega, cfg.multipliers)
        extra["lemma1_residual"] = [
            analysis.lemma1_residual(traj, cost, cfg.build_pair(), bank, spec, i, 0.0,
                                     cfg.lemma1_t2) for i in (1, 2, 3)]
    csv_path, rows = None, 0
    if out_dir is not None:
        head, data = trajectory_table(traj, cfg, spec, cost)
        csv_path = out_dir / f"{cfg.name}_{kind}.csv"
        rows = write_csv(csv_path, head, data, cfg.max_rows)
        csv_path = str(csv_path)
    return SystemResult(kind, status_of(traj), traj.reason, rep.as_dict(), csv_path, rows, extra)


@dataclass
class RunOutcome:
    exit_code: int
    results: list
    summary_path: str | None = None
    problems: list = field(default_factory=list)


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunOutcome:
    """Integrate every requested system; exit code 0 ok, 1 invalid config, 2 some abort."""
    problems = cfg.problems()
    if problems:
        return RunOutcome(EXIT_INVALID, [], problems=problems)
    try:
        spec = resolve_spec(cfg)
    except ValueError as exc:
        return RunOutcome(EXIT_INVALID, [], problems=[str(exc)])
    out_dir = None
    if write:
        out_dir = cfg.output_dir()
        out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.jobs > 1 and len(cfg.systems) > 1:
        with ProcessPoolExecutor(min(cfg.jobs, len(cfg.systems))) as ex:
            futs = [ex.submit(_run_one, cfg, k, spec, out_dir) for k in cfg.systems]
            results = [f.result() for f in futs]
    else:
        results = [_run_one(cfg, k, spec, out_dir) for k in cfg.systems]
    code = EXIT_ABORT if any(r.status == "aborted" for r in results) else EXIT_OK
    summary_path = None
    if write:
        summary_path = out_dir / f"{cfg.name}_summary.json"
        doc = {"name": cfg.name, "omega": cfg.omega, "y0": spec.y0, "epsilon": spec.epsilon,
               "exit_code": code, "systems": [r.__dict__ for r in results]}
        summary_path.write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")
        summary_path = str(summary_path)
    return RunOutcome(code, results, summary_path)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serialisable: {type(v).__name__}")


# sweep ---------------------------------------------------------------------

SWEEP_COLUMNS = ("omega", "sup_deviation", "max_g1", "max_g2", "max_g3", "delta_exits",
                 "final_distance", "final_z_gap", "status")


def _sweep_traj(cfg: ExperimentConfig, omega: float, kind: str, t_end: float | None):
    return simulate(cfg.with_omega(omega), kind, t_end)


def _sweep_row(cfg: ExperimentConfig, omega: float, prop: Trajectory, ref: Trajectory,
               spec) -> dict:
    cost = cfg.build_cost()
    # both runs share the dither-slaved grid; compare x on the common prefix
    k = min(len(prop.t), len(ref.t))
    n = cost.dim
    dev = float(np.max(np.linalg.norm(prop.states[:k, :n] - ref.states[:k, :n], axis=-1)))
    rep = analysis.convergence_report(prop, cost, spec)
    return {"omega": float(omega), "sup_deviation": dev,
            "max_g1": float(rep.max_g[0]), "max_g2": float(rep.max_g[1]),
            "max_g3": float(rep.max_g[2]), "delta_exits": rep.delta_exits,
            "final_distance": rep.final_distance, "final_z_gap": rep.final_z_gap,
            "status": status_of(prop)}


def sweep_omega(cfg: ExperimentConfig, omegas, t_end: float | None = None,
                write: bool = True) -> tuple[int, list[dict]]:
    """Proposed vs averaged trajectory for each frequency; returns ``(exit code, rows)``.

    Exits of the enlarged practical set are reported in ``delta_exits``, not raised.
    """
    omegas = [float(w) for w in omegas]
    problems = cfg.problems()
    if len(omegas) < 2:
        problems.append("sweep needs at least two omegas")
    if any(not w > 0 for w in omegas):
        problems.append("omegas must be positive")
    if problems:
        return EXIT_INVALID, [{"problem": p} for p in problems]
    try:
        spec = resolve_spec(cfg)
    except ValueError as exc:
        return EXIT_INVALID, [{"problem": str(exc)}]
    tasks = [(w, kind) for w in omegas for kind in ("proposed", "lie_approx")]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(min(cfg.jobs, len(tasks))) as ex:
            # largest omegas first so the longest runs start early
            order = sorted(range(len(tasks)), key=lambda i: -tasks[i][0])
            futs = {i: ex.submit(_sweep_traj, cfg, *tasks[i], t_end) for i in order}
            trajs = [futs[i].result() for i in range(len(tasks))]
    else:
        trajs = [_sweep_traj(cfg, w, kind, t_end) for w, kind in tasks]
    rows = [_sweep_row(cfg, w, trajs[2 * i], trajs[2 * i + 1], spec)
            for i, w in enumerate(omegas)]
    if write:
        out = cfg.output_dir()
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{cfg.name}_sweep.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, SWEEP_COLUMNS)
            w.writeheader()
            for r in rows:
                w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
    code = EXIT_ABORT if any(r["status"] == "aborted" for r in rows) else EXIT_OK
    return code, rows


# condition report ------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool | None
    detail: str

    def line(self) -> str:
        tag = "SKIP" if self.passed is None else ("PASS" if self.passed else "FAIL")
        return f"[{tag}] {self.name}: {self.detail}"


@dataclass
class ConditionReport:
    checks: list
    omega_star: float | None = None
    kappa: float | None = None
    gamma: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed is None or bool(c.passed) for c in self.checks)

    def text(self) -> str:
        verdict = "ALL CONDITIONS PASS" if self.passed else "SOME CONDITIONS FAIL"
        return "\n".join([c.line() for c in self.checks] + [verdict])


def validate_conditions(cfg: ExperimentConfig) -> ConditionReport:
    """Generating pair, growth condition, set constants, remainder bounds and critical frequency."""
    checks = []
    cost = cfg.build_cost()
    pair = cfg.build_pair()
    res, ok_w = check_c1_wronskian(pair)
    ok_v, mags = check_vanishing(pair)
    tiny = float(np.abs(np.array(pair(np.array([1e-12])))).max())
    vanish = bool(ok_v and tiny < 1e-3)
    checks.append(Check("C1 Wronskian", bool(ok_w), f"max |F1 F2' - F1' F2 - 1| = {res:.3e} on [1e-3, 10]"))
    checks.append(Check("C1 vanishing at y = 0", vanish,
                        "max(|F1|, |F2|) at y = 1e-2, 1e-4, 1e-6, 1e-12: "
                        + ", ".join(f"{v:.3e}" for v in [*mags, tiny])))
    cert = estimate_a1_constants(cost, cfg.m)
    rep = ConditionReport(checks)
    if cert:
        rep.kappa, rep.gamma = cert.kappa, cert.gamma
        checks.append(Check("A1 growth", True, f"m = {cert.m:g}, kappa = {cert.kappa:.9g}, "
                                                f"gamma = {cert.gamma:.9g}"))
    else:
        checks.append(Check("A1 growth", False, f"m = {cfg.m:g}: {cert.reason}"))
    try:
        spec = resolve_spec(cfg, cost)
    except ValueError as exc:
        checks.append(Check("practical set", False, str(exc)))
        checks.append(Check("C2 bounds", None, "needs a valid practical set"))
        return rep
    if rep.kappa is not None:
        lb = analysis.y0_lower_bound(rep.kappa, spec.epsilon)
        checks.append(Check("y0 bound", spec.y0 > lb, f"y0 = {spec.y0:.9g} > {lb:.9g}"))
    checks.append(Check("level set inside domain", analysis.check_level_set(spec, cost),
                        f"J - J* <= {spec.J0 + spec.epsilon:g} stays off the domain boundary"))
    if not (ok_w and vanish):
        checks.append(Check("C2 bounds", None, "pair fails C1"))
        return rep
    bank = DitherBank(cfg.omega, cfg.multipliers)
    c2 = sample_c2_bounds(pair, cost, spec, bank, count=cfg.c2_samples, seed=cfg.seed)
    detail = (f"c1 = {np.array2string(c2.c1, precision=4)}, c2 = {np.array2string(c2.c2, precision=4)}, "
              f"b = {np.array2string(c2.b, precision=4)}, samples = {c2.sample_count.tolist()}")
    ok_c2 = c2.valid and c2.positive()
    if not ok_c2:
        detail += "; " + "; ".join(c2.problems or ["some b <= 0"])
    checks.append(Check("C2 bounds", ok_c2, detail))
    if ok_c2:
        rep.omega_star = analysis.estimate_omega_star(c2, spec.delta)
        checks.append(Check("critical frequency", bool(np.isfinite(rep.omega_star)),
                            f"omega* = {rep.omega_star:.6g} (configured omega = {cfg.omega:g}; "
                            f"guarantees need omega > omega*)"))
    return rep
