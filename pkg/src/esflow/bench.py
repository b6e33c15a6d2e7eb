"""Configuration-driven benchmark driver with structured, reproducible output.

Each run writes three artifacts into the output directory:

* ``history.csv``   - one row per physical step (schema in HISTORY_COLUMNS),
* ``summary.json``  - final error norms, conserved-total drift, positivity
                      violation count, and run metadata,
* ``final_state.bin`` - little-endian snapshot: magic ``ESFL``, u32 version,
                      u32 dim, u32 p, u32 ncomp, u32 counts per direction,
                      then the field as float64 in C order
                      (element, component, node indices).

Floating-point values in the CSV are printed with repr-faithful %.17g so
reruns with an identical config and seed are byte-identical.
"""

from __future__ import annotations

import configparser
import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import gas as gm
from . import timestepping as ts
from .cases import build_case
from .gas import GasParameters
from .mesh import PERIODIC

HISTORY_COLUMNS = [
    "step", "time", "pseudo_iterations", "eps_abs", "eps_rel", "dtau",
    "total_mass", "total_momentum_x", "total_momentum_y", "total_momentum_z",
    "total_energy", "total_entropy", "kinetic_energy", "eps_solenoidal",
    "eps_dilational", "eps_viscous", "min_density", "min_internal_energy",
    "theta_min", "theta_mean", "positivity_violations",
]

INTEGRATORS = ("fe", "ssprk3", "bdf1-dual", "bdf2-dual")


class ConfigError(ValueError):
    def __init__(self, fieldname, message):
        super().__init__(f"config field {fieldname!r}: {message}")
        self.fieldname = fieldname


@dataclass
class RunConfig:
    case: str = "density-wave"
    dim: int = 1
    n_elems: int = 16
    p: int = 4
    integrator: str = "bdf1-dual"
    t_end: float = 0.5
    gas: GasParameters = None
    time: ts.DualTimeConfig = None
    seed: int = 0
    jitter: float = 0.0
    out_dir: str = "out"
    case_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.gas is None:
            self.gas = GasParameters()
        if self.time is None:
            self.time = ts.DualTimeConfig()
        if self.integrator not in INTEGRATORS:
            raise ConfigError("integrator", f"must be one of {INTEGRATORS}")
        if self.case == "tgv" and self.dim < 2:
            raise ConfigError("dimension", "tgv requires dimension >= 2")
        if self.t_end <= 0:
            raise ConfigError("t_end", "must be positive")


def _getfloat(sec, key, default):
    return sec.getfloat(key, default) if sec is not None else default


def load_config(path, overrides=()) -> RunConfig:
    """Parse the INI-style run configuration with optional key=value overrides."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError("config", f"could not read {path}")
    for item in overrides:
        key, _, value = item.partition("=")
        if not _ or "." not in key:
            raise ConfigError("override", f"expected section.key=value, got {item!r}")
        section, name = key.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value)

    c = parser["case"] if parser.has_section("case") else None
    if c is None:
        raise ConfigError("case", "missing [case] section")
    g = parser["gas"] if parser.has_section("gas") else None
    t = parser["time"] if parser.has_section("time") else None
    o = parser["output"] if parser.has_section("output") else None

    gas = GasParameters(
        gamma=_getfloat(g, "gamma", 1.4),
        mach=_getfloat(g, "mach", 1.0),
        reynolds=_getfloat(g, "reynolds", 100.0),
        prandtl=_getfloat(g, "prandtl", 0.72),
        viscosity_law=(g.get("viscosity_law", "constant") if g else "constant"),
        viscosity_exponent=_getfloat(g, "viscosity_exponent", 0.7),
        c_rho=_getfloat(g, "c_rho", 0.9),
    )
    tcfg = ts.DualTimeConfig(
        dt_initial=_getfloat(t, "dt_initial", 1e-2),
        dt_final=(t.getfloat("dt_final") if t and "dt_final" in t else None),
        ramp_start=_getfloat(t, "ramp_start", np.inf),
        ramp_decay=_getfloat(t, "ramp_decay", 0.5),
        kappa_tau=_getfloat(t, "kappa_tau", 2.0),
        pseudo_cfl=_getfloat(t, "pseudo_cfl", 0.25),
        safety=_getfloat(t, "safety", 0.9),
        eps_abs_tol=_getfloat(t, "eps_abs_tol", 1e-8),
        eps_rel_tol=_getfloat(t, "eps_rel_tol", 1e-6),
        max_pseudo_iters=int(_getfloat(t, "max_pseudo_iters", 20000)),
        eps_rho=_getfloat(t, "eps_rho", 1e-11),
        eps_ie=_getfloat(t, "eps_ie", 1e-11),
    )
    n_raw = c.get("elements", "16")
    n_elems = tuple(int(v) for v in n_raw.split(",")) if "," in n_raw else int(n_raw)
    return RunConfig(
        case=c.get("name", "density-wave"),
        dim=c.getint("dimension", 1),
        n_elems=n_elems,
        p=c.getint("order", 4),
        integrator=c.get("integrator", "bdf1-dual"),
        t_end=c.getfloat("t_end", 0.5),
        gas=gas,
        time=tcfg,
        seed=c.getint("seed", 0),
        jitter=c.getfloat("jitter", 0.0),
        out_dir=(o.get("directory", "out") if o else "out"),
        case_options=json.loads(c.get("options", "{}")),
    )


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_history_csv(path, records, dim):
    keep = set(HISTORY_COLUMNS)
    drop = {"total_momentum_y", "total_momentum_z"} if dim == 1 else (
        {"total_momentum_z"} if dim == 2 else set())
    cols = [c for c in HISTORY_COLUMNS if c in keep - drop]
    lines = [",".join(cols)]
    for r in records:
        mom = list(r.totals[1:-1]) + [0.0, 0.0]
        row = {
            "step": r.step, "time": r.time, "pseudo_iterations": r.pseudo_iterations,
            "eps_abs": r.eps_abs, "eps_rel": r.eps_rel, "dtau": r.dtau,
            "total_mass": r.totals[0], "total_momentum_x": mom[0],
            "total_momentum_y": mom[1], "total_momentum_z": mom[2],
            "total_energy": r.totals[-1], "total_entropy": r.total_entropy,
            "kinetic_energy": r.kinetic_energy, "eps_solenoidal": r.eps_solenoidal,
            "eps_dilational": r.eps_dilational, "eps_viscous": r.eps_viscous,
            "min_density": r.min_density, "min_internal_energy": r.min_internal_energy,
            "theta_min": r.theta_min, "theta_mean": r.theta_mean,
            "positivity_violations": r.positivity_violations,
        }
        lines.append(",".join(_fmt(row[c]) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def write_final_state(path, fld, mesh):
    counts = mesh.counts
    header = struct.pack("<4sIIII", b"ESFL", 1, mesh.dim, mesh.p, fld.shape[1])
    header += struct.pack(f"<{mesh.dim}I", *counts)
    data = np.ascontiguousarray(fld, dtype="<f8").tobytes()
    Path(path).write_bytes(header + data)


def read_final_state(path):
    raw = Path(path).read_bytes()
    magic, version, dim, p, ncomp = struct.unpack_from("<4sIIII", raw, 0)
    if magic != b"ESFL":
        raise ConfigError("final_state", "bad magic")
    counts = struct.unpack_from(f"<{dim}I", raw, 20)
    offset = 20 + 4 * dim
    n = p + 1
    shape = (int(np.prod(counts)), ncomp) + (n,) * dim
    fld = np.frombuffer(raw, dtype="<f8", offset=offset).reshape(shape)
    return fld, {"dim": dim, "p": p, "ncomp": ncomp, "counts": counts, "version": version}


def _step_record(step, t, u, setup, info, dtau, floors):
    rho = u[:, 0]
    rhoe = gm.internal_energy_density(np.moveaxis(u, 1, 0), setup.gas)
    violations = int(np.sum(rho < floors[0]) + np.sum(rhoe < floors[1]))
    periodic = all(b == PERIODIC for b in setup.mesh.bc)
    if periodic and setup.mesh.dim >= 2:
        ek, eps_s, eps_d = diag.tgv_diagnostics(u, setup.mesh, setup.ops, setup.gas)
    else:
        ek = eps_s = eps_d = 0.0
    return diag.HistoryRecord(
        time=t, step=step,
        pseudo_iterations=getattr(info, "iterations", 0),
        eps_abs=getattr(info, "eps_abs", 0.0),
        eps_rel=getattr(info, "eps_rel", 0.0),
        totals=tuple(diag.total_conserved(u, setup.mesh, setup.ops)),
        total_entropy=diag.total_entropy(u, setup.mesh, setup.ops, setup.gas),
        kinetic_energy=ek, eps_solenoidal=eps_s, eps_dilational=eps_d,
        min_density=float(rho.min()), min_internal_energy=float(rhoe.min()),
        theta_min=getattr(info, "theta_min", 1.0),
        theta_mean=getattr(info, "theta_mean", 1.0),
        dtau=dtau, positivity_violations=violations,
    )


def run_case(config: RunConfig, quiet=True):
    """Execute one benchmark run; returns (exit_status, summary dict)."""
    np.random.seed(config.seed)  # legacy consumers; meshes use default_rng
    setup = build_case(config.case, config.dim, config.n_elems, config.p,
                       config.gas, config.t_end, jitter=config.jitter,
                       seed=config.seed, **config.case_options)
    problem = ts.PdeProblem(setup.mesh, setup.ops, setup.gas,
                            ghosts_fn=setup.ghosts_fn)
    cfg = config.time
    floors = cfg.floors
    u = setup.initial()
    t = 0.0
    step = 0
    dt = cfg.dt_initial
    records = [_step_record(0, 0.0, u, setup, None, 0.0, floors)]
    u_prev = None
    if config.integrator == "bdf2-dual" and setup.exact is not None \
            and not np.isfinite(cfg.ramp_start):
        u_prev = setup.exact(-cfg.dt_initial)  # exact seed avoids a BDF1 start
    nonconverged = 0
    tiny = 1e-12 * max(1.0, config.t_end)

    while t < config.t_end - tiny:
        if config.integrator == "fe":
            u_next, dt_used, _theta = ts.forward_euler_step(
                u, problem, cfg, t, dt_max=config.t_end - t)
            info = ts.PseudoInfo(iterations=1, converged=True, eps_abs=0.0, eps_rel=0.0)
            dtau = dt_used
        elif config.integrator == "ssprk3":
            u_next, dt_used = ts.ssprk3_step(u, problem, cfg, t)
            dt_used = min(dt_used, config.t_end - t)
            info = ts.PseudoInfo(iterations=3, converged=True, eps_abs=0.0, eps_rel=0.0)
            dtau = dt_used
        else:
            dt = min(cfg.dt_at(t, dt), config.t_end - t)
            scheme = "bdf2" if (config.integrator == "bdf2-dual" and u_prev is not None) \
                else "bdf1"
            u_next, info = ts.pseudo_converge(u, cfg, scheme, problem, dt, t + dt,
                                              u_nm1=u_prev)
            if not info.converged:
                nonconverged += 1
            dt_used = dt
            dtau = info.dtau_last
        u_prev, u = u, u_next
        t += dt_used
        step += 1
        records.append(_step_record(step, t, u, setup, info, dtau, floors))
        if not quiet:
            r = records[-1]
            print(f"step {step:5d} t={t:.5f} iters={r.pseudo_iterations} "
                  f"eps_abs={r.eps_abs:.2e} theta_min={r.theta_min:.3f}")

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_history_csv(out / "history.csv", records, setup.mesh.dim)
    write_final_state(out / "final_state.bin", u, setup.mesh)

    audit = diag.conservation_audit(records)
    total_violations = int(sum(r.positivity_violations for r in records))
    summary = {
        "case": config.case, "integrator": config.integrator, "dim": config.dim,
        "n_elems": (list(config.n_elems) if not np.isscalar(config.n_elems)
                    else config.n_elems),
        "p": config.p, "t_end": t, "steps": step, "seed": config.seed,
        "positivity_violations": total_violations,
        "nonconverged_steps": nonconverged,
        "conservation": audit,
        "theta_min": min(r.theta_min for r in records),
    }
    if setup.exact is not None:
        l1, l2, linf = diag.error_norms(u, setup.exact(t), setup.mesh, setup.ops)
        summary["errors"] = {"l1": l1, "l2": l2, "linf": linf}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True)
                                      + "\n")
    status = 0 if (nonconverged == 0 and total_violations == 0) else 1
    return status, summary


class SweepError(ValueError):
    pass


def fit_rates(values, errors):
    """Per-pair observed orders from a resolution sequence (values increasing)."""
    rates = [float("nan")]
    for i in range(1, len(errors)):
        ratio = values[i] / values[i - 1]
        if errors[i] <= 0 or errors[i - 1] <= 0 or ratio <= 1:
            rates.append(float("nan"))
        else:
            rates.append(float(np.log(errors[i - 1] / errors[i]) / np.log(ratio)))
    return rates


def sweep(configs, mode, out_path=None, reference: RunConfig = None):
    """Run a refinement sweep and tabulate observed convergence orders.

    mode is "temporal" (swept dt) or "spatial" (swept element count); the
    table mirrors (dt, N_elem, L1, rate, L2, rate) with a warning flag on
    non-monotone error sequences.  With a reference configuration (same mesh,
    much smaller dt) the errors are measured against the reference final
    state, isolating the temporal error from the fixed spatial floor;
    otherwise the case's exact solution is used.
    """
    if len(configs) < 3:
        raise SweepError("a sweep needs at least 3 configurations")
    if mode not in ("temporal", "spatial"):
        raise SweepError(f"unknown sweep mode {mode!r}")
    ref_state = None
    from .cases import build_case as _build
    if reference is not None:
        status, _summary = run_case(reference)
        if status != 0:
            raise SweepError("reference run failed")
        ref_state, _meta = read_final_state(Path(reference.out_dir) / "final_state.bin")
    rows = []
    for cfg in configs:
        status, summary = run_case(cfg)
        if ref_state is not None:
            fld, _meta = read_final_state(Path(cfg.out_dir) / "final_state.bin")
            setup = _build(cfg.case, cfg.dim, cfg.n_elems, cfg.p, cfg.gas,
                           cfg.t_end, jitter=cfg.jitter, seed=cfg.seed,
                           **cfg.case_options)
            l1, l2, _li = diag.error_norms(fld, ref_state, setup.mesh, setup.ops)
            summary["errors"] = {"l1": l1, "l2": l2}
        if "errors" not in summary:
            raise SweepError(f"case {cfg.case!r} has no exact solution to sweep against")
        rows.append({
            "dt": cfg.time.dt_initial,
            "n_elem": int(np.prod(cfg.n_elems)) if not np.isscalar(cfg.n_elems)
            else cfg.n_elems,
            "l1": summary["errors"]["l1"],
            "l2": summary["errors"]["l2"],
            "status": status,
        })
    key = "dt" if mode == "temporal" else "n_elem"
    sweep_vals = [r[key] for r in rows]
    scale = [1.0 / v for v in sweep_vals] if mode == "temporal" else \
        [float(v) ** (1.0 / configs[0].dim) for v in sweep_vals]
    l1 = [r["l1"] for r in rows]
    l2 = [r["l2"] for r in rows]
    r1 = fit_rates(scale, l1)
    r2 = fit_rates(scale, l2)
    monotone = all(l2[i] > l2[i + 1] for i in range(len(l2) - 1))

    lines = ["dt,n_elem,l1,l1_rate,l2,l2_rate,warning"]
    for i, row in enumerate(rows):
        warn = "" if monotone else "non-monotone"
        lines.append(",".join([
            _fmt(row["dt"]), str(row["n_elem"]), _fmt(row["l1"]), _fmt(r1[i]),
            _fmt(row["l2"]), _fmt(r2[i]), warn]))
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    return {"rows": rows, "l1_rates": r1, "l2_rates": r2, "monotone": monotone,
            "csv": text}
