"""Command-line front end: config parsing, solves, and validation suites.

Run configurations are plain-text files with ``[section]`` headers and
``key = value`` lines (``#`` comments allowed).  ``solve`` writes the sampled
field as ``u.csv`` plus a ``manifest`` that is itself a valid configuration
echoing every resolved parameter, so a run can be reproduced from it
verbatim.  ``validate <case>`` runs one of the named experiments and exits
with status 2 when its thresholds fail.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import media, transmission, validation
from .media import AugmentedDataSpec, JumpData


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict:
    """Sectioned key=value parser with line numbers in errors."""
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        sections[current][key.lower()] = value
    return sections


def _parse_field(spec: str, lineno_hint: str) -> media.CoefficientField2D:
    parts = spec.split()
    family = parts[0].lower()
    try:
        if family == "constant":
            return media.constant_field(float(parts[1]))
        if family in ("bump-grid", "bump-radial"):
            base, amp, scale = (float(p) for p in parts[1:4])
            period = float(parts[4]) if len(parts) > 4 else 1.0
            return media.CoefficientField2D(family, base, amp, scale, period)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{lineno_hint}: bad coefficient spec {spec!r}: {exc}") from exc
    raise ConfigError(f"{lineno_hint}: unknown coefficient family {family!r}")


def _parse_tensor(spec: str, hint: str) -> media.MatrixField2D:
    parts = spec.split()
    if parts[0].lower() == "identity":
        return media.identity_tensor()
    if parts[0].lower() == "constant" and len(parts) == 4:
        a11, a12, a22 = (float(p) for p in parts[1:])
        return media.MatrixField2D(media.constant_field(a11), a12, media.constant_field(a22))
    if parts[0].lower() == "scalar":
        f = _parse_field(" ".join(parts[1:]), hint)
        return media.MatrixField2D(f, 0.0, f)
    raise ConfigError(f"{hint}: unknown tensor spec {spec!r}")


def build_problem(sections: dict) -> transmission.TransmissionProblem:
    prob = sections.get("problem", {})
    disc = sections.get("discretization", {})

    kind = prob.get("config", "A").strip().upper()
    if kind == "A":
        config = media.ConfigA(
            rho_plus=_parse_field(prob.get("rho_plus", "constant 1.0"), "rho_plus"),
            rho_minus=_parse_field(prob.get("rho_minus", "constant 1.0"), "rho_minus"),
            p_plus_z=float(prob.get("p_plus_z", "1.0")),
            p_minus_z=float(prob.get("p_minus_z", "1.0")),
            a_plus=_parse_tensor(prob.get("a_plus", "identity"), "a_plus"),
            a_minus=_parse_tensor(prob.get("a_minus", "identity"), "a_minus"),
        )
    elif kind == "B":
        aminus = tuple(float(v) for v in prob.get("a_minus", "1 0 1").split())
        config = media.ConfigB(
            rho_plus_cell=_parse_field(prob.get("rho_plus", "constant 1.0"), "rho_plus"),
            rho_minus=float(prob.get("rho_minus", "1.0")),
            p_plus=(float(prob.get("p_plus_x", "0.0")), float(prob.get("p_plus_z", "1.0"))),
            a_plus_cell=_parse_tensor(prob.get("a_plus", "identity"), "a_plus"),
            a_minus=aminus,
        )
    else:
        raise ConfigError(f"config must be A or B, got {kind!r}")

    omega = float(prob.get("omega_re", "1.0")) + 1j * float(prob.get("omega_im", "0.25"))
    if omega.imag <= 0:
        raise ConfigError("omega_im must be positive")
    jump = JumpData(
        amplitude=float(prob.get("jump_amplitude", "100.0")),
        scale=float(prob.get("jump_scale", "2.0")),
    )
    data = AugmentedDataSpec(ell=int(prob.get("data_ell", "0")))

    n_k = int(disc.get("n_k", "32"))
    if n_k < 4 or n_k % 2:
        raise ConfigError("n_k must be even and at least 4")
    h = float(disc.get("h", "0.1"))
    if h <= 0:
        raise ConfigError("h must be positive")
    return transmission.TransmissionProblem(
        config=config,
        omega=omega,
        jump=jump,
        data=data,
        h=h,
        n_s=int(disc.get("n_s", "0")),
        n_k=n_k,
        n_cells=int(disc.get("n_cells", "0")),
        riccati_backend=disc.get("riccati", "spectral").strip().lower(),
        use_mirror=disc.get("mirror", "off").strip().lower() in ("on", "true", "1"),
        workers=int(disc.get("threads", "0")),
    )


def _output_spec(sections: dict):
    out = sections.get("output", {})
    x0 = float(out.get("x0", "-1.0"))
    x1 = float(out.get("x1", "1.0"))
    z0 = float(out.get("z0", "-1.0"))
    z1 = float(out.get("z1", "1.0"))
    nx = int(out.get("nx", "41"))
    nz = int(out.get("nz", "41"))
    outdir = out.get("outdir", "out")
    return (np.linspace(x0, x1, nx), np.linspace(z0, z1, nz), Path(outdir))


def _field_line(f: media.CoefficientField2D) -> str:
    if f.family == "constant":
        return f"constant {f.base!r}"
    return f"{f.family} {f.base!r} {f.amplitude!r} {f.scale!r} {f.period_z!r}"


def _tensor_line(t: media.MatrixField2D) -> str:
    if (
        t.a11.family == "constant"
        and t.a22.family == "constant"
        and t.a11.base == 1.0
        and t.a22.base == 1.0
        and t.a12_amplitude == 0.0
    ):
        return "identity"
    if t.a11.family == "constant" and t.a22.family == "constant":
        return f"constant {t.a11.base!r} {t.a12_amplitude!r} {t.a22.base!r}"
    return f"scalar {_field_line(t.a11)}"


def write_manifest(path: Path, problem, sweep, xs, zs, outdir, elapsed):
    cfg = problem.config
    lines = ["# liftwave run manifest (re-runnable as a config file)", "", "[problem]"]
    if isinstance(cfg, media.ConfigA):
        lines += [
            "config = A",
            f"p_plus_z = {cfg.p_plus_z!r}",
            f"p_minus_z = {cfg.p_minus_z!r}",
            f"rho_plus = {_field_line(cfg.rho_plus)}",
            f"rho_minus = {_field_line(cfg.rho_minus)}",
            f"a_plus = {_tensor_line(cfg.a_plus)}",
            f"a_minus = {_tensor_line(cfg.a_minus)}",
        ]
    else:
        lines += [
            "config = B",
            f"p_plus_x = {cfg.p_plus[0]!r}",
            f"p_plus_z = {cfg.p_plus[1]!r}",
            f"rho_plus = {_field_line(cfg.rho_plus_cell)}",
            f"rho_minus = {cfg.rho_minus!r}",
            f"a_plus = {_tensor_line(cfg.a_plus_cell)}",
            f"a_minus = {cfg.a_minus[0]!r} {cfg.a_minus[1]!r} {cfg.a_minus[2]!r}",
        ]
    lines += [
        f"omega_re = {problem.omega.real!r}",
        f"omega_im = {problem.omega.imag!r}",
        f"data_ell = {problem.data.ell}",
        f"jump_amplitude = {problem.jump.amplitude!r}",
        f"jump_scale = {problem.jump.scale!r}",
        "",
        "[discretization]",
        f"h = {problem.h!r}",
        f"n_s = {problem.grid_s.n_s}",
        f"n_k = {problem.n_k}",
        f"n_cells = {sweep.n_cells}",
        f"riccati = {problem.riccati_backend}",
        f"mirror = {'on' if problem.use_mirror else 'off'}",
        f"threads = {sweep.timings['workers']}",
        "",
        "[output]",
        f"x0 = {float(xs[0])!r}",
        f"x1 = {float(xs[-1])!r}",
        f"z0 = {float(zs[0])!r}",
        f"z1 = {float(zs[-1])!r}",
        f"nx = {len(xs)}",
        f"nz = {len(zs)}",
        f"outdir = {outdir}",
        "",
        "[results]",
    ]
    entries = [e for e in sweep.entries if e is not None]
    lines += [
        f"rho_p_max = {float(max(max(e.rho_p_plus, e.rho_p_minus) for e in entries))!r}",
        f"riccati_residual_max = {float(max(e.riccati_residual for e in entries))!r}",
        f"interface_residual_max = {float(max(e.interface_residual for e in entries))!r}",
        f"decay_slope = {float(sweep.decay_slope)!r}",
        f"floquet_points_computed = {len(entries)}",
        f"runtime_s = {float(elapsed)!r}",
    ]
    path.write_text("\n".join(lines) + "\n")


def cmd_solve(args) -> int:
    text = Path(args.config).read_text()
    sections = parse_config(text)
    problem = build_problem(sections)
    xs, zs, outdir = _output_spec(sections)
    if args.out:
        outdir = Path(args.out)
    if args.threads:
        problem.workers = args.threads
    outdir.mkdir(parents=True, exist_ok=True)

    window_xmax = float(np.abs(xs).max())
    if problem.n_cells > 0 and window_xmax > problem.n_cells:
        raise ConfigError(
            f"sampling window |x| <= {window_xmax} exceeds n_cells = {problem.n_cells}"
        )
    t0 = time.perf_counter()
    sweep = transmission.solve_transmission(problem, window_xmax=window_xmax)
    u = transmission.sample_u(sweep, xs, zs)
    elapsed = time.perf_counter() - t0

    X, Z = np.meshgrid(xs, zs, indexing="ij")
    table = np.column_stack([X.ravel(), Z.ravel(), u.real.ravel(), u.imag.ravel()])
    np.savetxt(outdir / "u.csv", table, delimiter=",", header="x,z,re,im", comments="", fmt="%.17g")
    write_manifest(outdir / "manifest", problem, sweep, xs, zs, outdir, elapsed)
    print(f"wrote {outdir / 'u.csv'} ({u.size} samples) in {elapsed:.1f}s")
    return 0


def cmd_validate(args) -> int:
    case = args.case
    if case not in validation.CASES:
        print(f"unknown case {case!r}; choose from {sorted(validation.CASES)}", file=sys.stderr)
        return 1
    kwargs = {}
    if args.threads and case not in ("riccati-oracle", "oracle3d"):
        kwargs["workers"] = args.threads
    result = validation.CASES[case](**kwargs)
    outdir = Path(args.out) if args.out else Path("out")
    outdir.mkdir(parents=True, exist_ok=True)
    report = outdir / f"validate_{case}.csv"
    keys = sorted({k for row in result.rows for k in row})
    with report.open("w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in result.rows:
            fh.write(",".join(str(row.get(k, "")) for k in keys) + "\n")
    status = "PASS" if result.passed else "FAIL"
    print(f"{result.name}: {status} {result.summary if result.summary else ''}")
    for row in result.rows:
        print("  " + ", ".join(f"{k}={row[k]}" for k in keys if k in row))
    print(f"report: {report}")
    return 0 if result.passed else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="liftwave",
        description="Helmholtz transmission across a quasiperiodic interface",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", help="solve a run configuration")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--out", default="")
    p_solve.add_argument("--threads", type=int, default=0)
    p_solve.set_defaults(func=cmd_solve)
    p_val = sub.add_parser("validate", help="run a named validation case")
    p_val.add_argument("case")
    p_val.add_argument("--out", default="")
    p_val.add_argument("--threads", type=int, default=0)
    p_val.set_defaults(func=cmd_validate)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # propagate solver context, fail with status 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
