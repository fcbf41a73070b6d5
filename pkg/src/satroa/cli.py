"""Command-line front end: ``satroa <command> --config FILE [--out DIR] [--format ...]``.

Exit codes: 0 success, 1 verification failed, 2 malformed input, 3 solver
budget exhausted, 4 precondition violated.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import FORMATS, ConfigError, RunConfig, load_config
from .design import DesignError, PlantFD, hurwitz, place_poles, stabilizable
from .lmi import InfeasibleWithinBudget, LmiError, verify_certificate
from .roa import (
    Certificate,
    PreconditionError,
    build_boundary,
    certify_boundary,
    certify_dynamic,
    certify_pointwise,
    certify_static,
    ellipsoid_volume,
    support,
)
from .sim import (
    Classification,
    SoundnessViolation,
    boundary_field,
    default_bounds,
    field_samples,
    simulate_boundary,
    simulate_galerkin,
    simulate_modal,
    simulate_pointwise,
    sweep,
    write_field_csv,
)
from .spectral import SpectrumError, build_modal_system, sample_inputs

log = logging.getLogger("satroa")

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_BUDGET, EXIT_PRECONDITION = 0, 1, 2, 3, 4


class Context:
    def __init__(self, cfg: RunConfig, out: Path, formats: tuple[str, ...], threads: int):
        self.cfg, self.out, self.formats, self.threads = cfg, out, formats, threads
        self.out.mkdir(parents=True, exist_ok=True)

    def wants(self, fmt: str) -> bool:
        return fmt in self.formats

    def emit(self, text: str = "") -> None:
        print(text)

    def path(self, name: str) -> Path:
        return self.out / name


def _fmt(v) -> str:
    return repr(float(v))


def _matrix_lines(name: str, M) -> list[str]:
    pad = " " * (len(name) + 3)
    return [(f"{name} = " if i == 0 else pad) + "  ".join(f"{x: .10g}" for x in row)
            for i, row in enumerate(np.atleast_2d(M))]


def _modal(cfg: RunConfig):
    numeric = {"auto": None, "analytic": False, "numeric": True}[cfg.spectrum]
    return build_modal_system(cfg.spec, cfg.truncation, numeric=numeric, grid_points=len(cfg.spec.grid),
                              decay_target=cfg.decay_target)


def _plant(cfg: RunConfig, ms) -> PlantFD:
    if ms.n == 0:
        raise PreconditionError("all modes are already stable; no feedback to design")
    p = PlantFD(ms.Amat, ms.Bn)
    if cfg.gain is not None:
        K = np.atleast_2d(cfg.gain)
        if K.shape != (p.m, p.n):
            raise ConfigError(f"gain must be {p.m} x {p.n}", str(cfg.path), cfg.lines.get(("design", "gain")))
        return p.with_gain(K)
    if cfg.poles is None:
        raise ConfigError("[design] needs poles or gain", str(cfg.path))
    return p.with_gain(place_poles(p, cfg.poles))


def _solver_kw(cfg: RunConfig) -> dict:
    kw = {"margin": cfg.margin, "objective": cfg.objective}
    if cfg.budget is not None:
        kw["budget"] = cfg.budget
    return kw


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n")


def _report_certificate(ctx: Context, cert: Certificate, plant: PlantFD) -> bool:
    ctx.emit(f"certificate kind   {cert.kind}")
    for line in _matrix_lines("K", cert.K):
        ctx.emit(line)
    for line in _matrix_lines("P", cert.P):
        ctx.emit(line)
    if cert.P_tilde is not None:
        for line in _matrix_lines("P_tilde", cert.P_tilde):
            ctx.emit(line)
    for line in _matrix_lines("C", cert.C):
        ctx.emit(line)
    ctx.emit("D = " + ", ".join(_fmt(d) for d in np.atleast_1d(cert.D)))
    ctx.emit(f"rho = {_fmt(cert.rho)}")
    ctx.emit(f"alpha = {_fmt(cert.alpha)}")
    if cert.gamma is not None:
        ctx.emit(f"gamma = {_fmt(cert.gamma)}")
    if cert.is_global:
        ctx.emit("region: global")
    else:
        P, rho = cert.plant_ellipsoid()
        axes = np.sqrt(rho / np.linalg.eigvalsh(P))
        ctx.emit("semi-axes = " + ", ".join(f"{a:.6g}" for a in axes))
        ctx.emit(f"volume = {ellipsoid_volume(P, rho):.6g}")
        ctx.emit("support along coordinates = " + ", ".join(
            f"{support(P, rho, e):.6g}" for e in np.eye(P.shape[0])))
    if cert.P_tilde is not None:
        rep = verify_certificate(cert.P_tilde, cert.C, cert.D, plant, cert.level, form="prop6")
    else:
        rep = verify_certificate(cert.P, cert.C, cert.D, plant, cert.level, form="prop3")
    for line in rep.lines():
        ctx.emit(line)
    return rep.passed


# ---------------------------------------------------------------------------
# commands


def cmd_eig(ctx: Context) -> int:
    ms = _modal(ctx.cfg)
    ctx.emit(f"spectrum source    {ms.source}")
    ctx.emit(f"{'j':>4}  {'lambda_j':>22}")
    for j, lam in enumerate(ms.eigvals, start=1):
        ctx.emit(f"{j:>4}  {lam:>22.10f}")
    ctx.emit(f"n = {ms.n}")
    ctx.emit(f"eta = {ms.eta!r}")
    if ms.already_stable:
        ctx.emit("already stable: no nonnegative eigenvalue")
    if ctx.wants("json"):
        ms.save(ctx.path("modal.json"))
    if ctx.wants("csv"):
        with open(ctx.path("spectrum.csv"), "w") as fh:
            fh.write("j,lambda\n")
            for j, lam in enumerate(ms.eigvals, start=1):
                fh.write(f"{j},{lam:.17g}\n")
    return EXIT_OK


def cmd_design(ctx: Context) -> int:
    ms = _modal(ctx.cfg)
    p = PlantFD(ms.Amat, ms.Bn)
    ok, why = stabilizable(p)
    ctx.emit(f"stabilizable = {ok} ({why})")
    if not ok:
        return EXIT_PRECONDITION
    plant = _plant(ctx.cfg, ms)
    for line in _matrix_lines("K", plant.K):
        ctx.emit(line)
    poles = np.sort_complex(np.linalg.eigvals(plant.closed_loop()))
    ctx.emit("closed-loop eigenvalues = " + ", ".join(f"{z:.10g}" for z in poles))
    ctx.emit(f"spectral abscissa = {hurwitz(plant.closed_loop())[1]:.10g}")
    if ctx.wants("json"):
        _write_json(ctx.path("gain.json"), {"K": plant.K.tolist(), "poles": [[z.real, z.imag] for z in poles]})
    return EXIT_OK


def _static(ctx: Context):
    ms = _modal(ctx.cfg)
    plant = _plant(ctx.cfg, ms)
    cert = certify_static(plant, ctx.cfg.spec.sat_level, modal=ms, **_solver_kw(ctx.cfg))
    return ms, plant, cert


def cmd_certify(ctx: Context) -> int:
    ms, plant, cert = _static(ctx)
    passed = _report_certificate(ctx, cert, plant)
    if ctx.wants("json"):
        cert.save(ctx.path("certificate.json"))
    dyn = ctx.cfg.dynamic
    if dyn is not None:
        ctx.emit("")
        dc = certify_dynamic(plant, cert.level, A1=dyn.A1, A2=dyn.A2, K2=dyn.K2, reference=cert.P,
                             margin=ctx.cfg.margin, budget=ctx.cfg.budget)
        P, rho = dc.plant_ellipsoid()
        ctx.emit(f"dynamic controller states = {dc.n - plant.n}")
        ctx.emit(f"projected volume = {ellipsoid_volume(P, rho):.6g} (static {cert.volume():.6g})")
        for k, v in dc.residuals.items():
            ctx.emit(f"{k:<10} {v:+.6e}")
        if ctx.wants("json"):
            dc.save(ctx.path("certificate_dynamic.json"))
    return EXIT_OK if passed else EXIT_FAIL


def _load_certificate_file(path: Path) -> dict:
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read certificate: {exc}", str(path)) from exc
    if not isinstance(data, dict):
        raise ConfigError("certificate must be a JSON object", str(path))
    return data


def cmd_verify(ctx: Context, cert_path: Path) -> int:
    data = _load_certificate_file(cert_path)
    ms = _modal(ctx.cfg)
    plant = _plant(ctx.cfg, ms)
    try:
        if "kind" in data:
            cert = Certificate.from_dict(data)
            plant = plant.with_gain(cert.K) if cert.K.shape == plant.K.shape else plant
            if cert.P_tilde is not None:
                args = (cert.P_tilde, cert.C, cert.D, "prop6")
            else:
                args = (cert.P, cert.C, cert.D, "prop3")
        else:
            form = data.get("form", "prop6")
            if form not in ("prop6", "prop3"):
                raise ValueError(f"unknown form {form!r}")
            if "K" in data:
                plant = plant.with_gain(np.atleast_2d(np.array(data["K"], dtype=float)))
            args = (np.array(data["P"], dtype=float), np.atleast_2d(np.array(data["C"], dtype=float)),
                    np.array(data["D"], dtype=float), form)
        if np.atleast_2d(args[0]).shape != (plant.n, plant.n):
            raise ValueError("certificate dimension does not match the plant")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed certificate: {exc}", str(cert_path)) from exc
    P, C, D, form = args
    rep = verify_certificate(P, C, D, plant, ctx.cfg.spec.sat_level, form=form)
    for line in rep.lines():
        ctx.emit(line)
    if ctx.wants("json"):
        _write_json(ctx.path("verification.json"), {"passed": rep.passed, "blocks": rep.to_dict()})
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_sweep(ctx: Context) -> int:
    ms, plant, cert = _static(ctx)
    cfg = ctx.cfg
    bounds = cfg.bounds or default_bounds(cert, 2.0)
    try:
        res = sweep(plant, cert, bounds=bounds, resolution=cfg.resolution, T=cfg.T, dt=cfg.dt,
                    threads=ctx.threads)
    except SoundnessViolation as exc:
        ctx.emit(f"SOUNDNESS VIOLATION: {exc}")
        return EXIT_FAIL
    counts = res.counts()
    ctx.emit(f"grid {res.resolution[0]} x {res.resolution[1]} on "
             f"[{bounds[0][0]:.6g}, {bounds[0][1]:.6g}] x [{bounds[1][0]:.6g}, {bounds[1][1]:.6g}], T = {cfg.T:g}")
    ctx.emit(", ".join(f"{k} {v}" for k, v in counts.items()))
    ctx.emit(f"inside certificate: {int(res.inside.sum())}, diverged inside: {len(res.violations())}")
    if ctx.wants("csv"):
        res.to_csv(ctx.path("sweep.csv"))
    if ctx.wants("json"):
        cert.save(ctx.path("certificate.json"))
    if ctx.wants("svg"):
        if plant.n != 2:
            ctx.emit(f"notice: figure needs two retained modes (n = {plant.n}); SVG skipped")
        else:
            from .plotting import sweep_figure

            sweep_figure(res, ctx.path("sweep.svg"))
    return EXIT_OK


def _initial(cfg: RunConfig, cert: Certificate, n: int) -> np.ndarray:
    if cfg.initial is not None:
        return cfg.initial
    # Default: a point halfway to the certificate boundary along the first axis.
    P = cert.P
    z = np.zeros(n)
    z[0] = 0.5 * np.sqrt(cert.rho / P[0, 0]) if not cert.is_global else 1.0
    return z


def cmd_simulate(ctx: Context) -> int:
    ms, plant, cert = _static(ctx)
    cfg = ctx.cfg
    w0 = _initial(cfg, cert, plant.n)
    if cfg.mode == "galerkin":
        traj = simulate_galerkin(ms, plant.K, w0, cfg.T, cfg.dt, certificate=cert)
    else:
        traj = simulate_modal(plant, w0[: plant.n], cfg.T, cfg.dt, certificate=cert)
    ctx.emit(f"initial state = {', '.join(f'{v:.6g}' for v in w0)}")
    ctx.emit(f"inside certificate = {cert.contains(np.asarray(w0[: plant.n]))}")
    ctx.emit(f"classification = {traj.classification.value}")
    ctx.emit(f"final |z| = {np.linalg.norm(traj.z[-1]):.6e}")
    if traj.classification is Classification.CONVERGED and np.linalg.norm(w0) > 0:
        M, a = traj.decay_fit()
        ctx.emit(f"decay fit: M = {M:.6g}, a = {a:.6g}")
    _write_traj(ctx, traj, ms if cfg.mode == "galerkin" else None)
    return EXIT_OK


def _write_traj(ctx: Context, traj, ms=None, field=None, x=None) -> None:
    if ctx.wants("csv"):
        traj.to_csv(ctx.path("trajectory.csv"))
        if ms is not None or field is not None:
            vals = field if field is not None else field_samples(ms, traj)
            grid = x if x is not None else ms.grid
            sub = max(1, len(grid) // 100)
            every = max(1, (len(traj.times) - 1) // 100)
            write_field_csv(ctx.path("field.csv"), traj.times, grid[::sub], vals[:, ::sub], every=every)
    if ctx.wants("svg"):
        from .plotting import trajectory_figure

        trajectory_figure(traj, ctx.path("trajectory.svg"), modes=8)


def cmd_boundary(ctx: Context) -> int:
    cfg = ctx.cfg
    bc = cfg.boundary
    if bc is None:
        raise ConfigError("missing [boundary] section", str(cfg.path))
    bp = build_boundary(bc.A_d, bc.B_d, bc.C_d, cfg.spec, n=bc.modes, N=cfg.truncation)
    plant = bp.plant()
    if bc.gain is not None:
        K = np.atleast_2d(bc.gain)
    elif bc.poles is not None:
        K = place_poles(plant, bc.poles)
    else:
        raise ConfigError("[boundary] needs poles or gain", str(cfg.path))
    cert = certify_boundary(bp, K, cfg.spec.sat_level, **_solver_kw(cfg))
    ctx.emit(f"augmented state = ({', '.join(plant.labels)})")
    for line in _matrix_lines("A", bp.A):
        ctx.emit(line)
    ctx.emit("B = " + ", ".join(f"{v:.10g}" for v in bp.B.ravel()))
    passed = _report_certificate(ctx, cert, plant.with_gain(K))
    if ctx.wants("json"):
        cert.save(ctx.path("certificate_boundary.json"))
    if bc.initial is not None:
        w0 = bc.initial
    else:
        w0 = np.zeros(bp.dim)
        w0[0] = 0.5 * np.sqrt(1.0 / cert.P[0, 0])
    where = "inside" if cert.contains(w0[:plant.n]) else "outside"
    traj = simulate_boundary(bp, K, w0, cfg.T, cfg.dt, level=cfg.spec.sat_level, certificate=cert)
    ctx.emit(f"simulation from ({', '.join(f'{v:.6g}' for v in w0)}), {where} the certificate: "
             f"{traj.classification.value}")
    _write_traj(ctx, traj, field=boundary_field(bp, traj), x=bp.modal.grid)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_pointwise(ctx: Context) -> int:
    ms, plant, cert = _static(ctx)
    shapes = sample_inputs(ms, ctx.cfg.spec)
    pw = certify_pointwise(cert, shapes)
    ctx.emit("sup norms of inputs = " + ", ".join(f"{v:.6g}" for v in pw.metadata["sup_norms"]))
    if pw.metadata["beta_unbounded"]:
        ctx.emit("beta unbounded (zero gain)")
    else:
        ctx.emit(f"beta = {_fmt(pw.beta)}")
        ctx.emit(f"volume = {pw.volume():.6g} (static {cert.volume():.6g})")
    if ctx.wants("json"):
        pw.save(ctx.path("certificate_pointwise.json"))
    cfg = ctx.cfg
    w0 = cfg.initial if cfg.initial is not None else _initial(cfg, pw, plant.n)
    traj = simulate_pointwise(ms, plant.K, shapes, w0, cfg.T, cfg.dt, certificate=pw)
    ctx.emit(f"simulation: {traj.classification.value}")
    if traj.lyapunov is not None:
        ctx.emit(f"max V increment = {np.max(np.diff(traj.lyapunov)):.3e}")
    _write_traj(ctx, traj, ms)
    return EXIT_OK


COMMANDS = {
    "eig": cmd_eig,
    "design": cmd_design,
    "certify": cmd_certify,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "boundary": cmd_boundary,
    "pointwise": cmd_pointwise,
}


def _formats(values: list[str] | None, cfg: RunConfig) -> tuple[str, ...]:
    if not values:
        return cfg.formats
    out = []
    for v in values:
        for f in v.split(","):
            f = f.strip().lower()
            if f not in FORMATS:
                raise ConfigError(f"unknown output format {f!r}")
            out.append(f)
    return tuple(dict.fromkeys(out))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="satroa", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name == "verify":
            sp.add_argument("certificate", type=Path, help="certificate JSON file")
        sp.add_argument("--config", type=Path, required=True)
        sp.add_argument("--out", type=Path, default=Path("."))
        sp.add_argument("--format", action="append", help="csv, svg or json (repeatable or comma-separated)")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        threads = args.threads if args.threads is not None else cfg.threads
        ctx = Context(cfg, args.out, _formats(args.format, cfg), max(1, threads))
        if args.command == "verify":
            return cmd_verify(ctx, args.certificate)
        return COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleWithinBudget as exc:
        print(f"solver: {exc}", file=sys.stderr)
        if exc.residual is not None:
            print(f"residual shift = {exc.residual:.6e}", file=sys.stderr)
        return EXIT_BUDGET
    except (PreconditionError, DesignError, SpectrumError) as exc:
        print(f"precondition: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except LmiError as exc:
        print(f"solver: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
