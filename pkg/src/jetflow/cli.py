"""Command-line front end.

Settings are resolved in the order defaults, config file, environment
(``JETFLOW_<KEY>``), command-line flags.  Exit codes: 0 success, 1 a
verification failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from jetflow import __version__
from jetflow.errors import AliasingError, ConfigError, IdentityCheckError, SupportError
from jetflow.spectral import TOL_IDENTITY, Grid, SymTensorField, lp_norm, set_fft_workers

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
ENV_PREFIX = "JETFLOW_"

DEFAULTS = {
    "gamma": "0.01",
    "p": "1.5",
    "r": "1.001",
    "sigma": "1",
    "kappa": "8",
    "nu": "8",
    "mu": "16",
    "omega": "16",
    "grid": "256",
    "interval": "0,1",
    "delta": "1e6",
    "out": "jetflow-out",
    "threads": "1",
    "seed": "0",
    "coarse": "8",
    "per_component": "8",
    "nsr_step": "1e-6",
    "nsr_extra_steps": "",
    "target_stress": "0.8",
    "baseline_kmax": "2",
    "baseline_viscosity": "2e-4",
    "alpha": "1.5",
    "viscosity": "1e-3",
    "decay": "1.2",
    "k_max": "15",
    "snapshots": "3",
    "count": "100",
    "sweep_quantity": "W",
    "sweep_axis": "mu",
    "sweep_values": "32,64,128",
    "sweep_tolerance": "0.1",
    "nu_power": "",
}

FLAG_KEYS = tuple(DEFAULTS)


class Settings(dict):
    """String settings with typed accessors that raise :class:`ConfigError`."""

    def _get(self, key, conv):
        raw = self[key]
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for {key}: {raw!r}") from exc

    def float(self, key) -> float:
        return self._get(key, float)

    def int(self, key) -> int:
        return self._get(key, lambda s: int(float(s)) if float(s).is_integer() else int(s))

    def floats(self, key) -> list[float]:
        raw = self[key].strip()
        if not raw:
            return []
        return self._get(key, lambda s: [float(x) for x in s.replace(";", ",").split(",") if x.strip()])

    def optional_float(self, key) -> Optional[float]:
        return None if not self[key].strip() else self.float(key)


def read_config(path) -> dict[str, str]:
    """Key-value file: ``key = value`` lines, ``#`` comments, optional sections ignored."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    text = path.read_text()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        for key, val in parser.items(section):
            key = key.replace("-", "_")
            if key not in DEFAULTS and key != "energy":
                raise ConfigError(f"unknown config key {key!r} in {path}")
            out[key] = val
    return out


def resolve(args: argparse.Namespace, environ=None) -> Settings:
    environ = os.environ if environ is None else environ
    s = Settings(DEFAULTS)
    s["energy"] = ""
    if getattr(args, "config", None):
        s.update(read_config(args.config))
    for key in list(s):
        env = environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            s[key] = env
    for key in FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            s[key] = str(val)
    return s


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _params(s: Settings):
    from jetflow.scheme import Knobs, SchemeParams

    iv = s.floats("interval")
    if len(iv) != 2:
        raise ConfigError("interval must be two numbers 'a,b'")
    knobs = Knobs(s.int("sigma"), s.float("kappa"), s.float("nu"), s.float("mu"), s.float("omega"))
    return SchemeParams(gamma=s.float("gamma"), p=s.float("p"), r=s.float("r"), knobs=knobs,
                        delta=s.float("delta"), interval=(iv[0], iv[1]))


def _grid(s: Settings) -> Grid:
    try:
        return Grid(s.int("grid"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _outdir(s: Settings) -> Path:
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_check_params(s: Settings) -> int:
    from jetflow.scheme import check_exponents

    rep = check_exponents(s.float("gamma"), s.float("p"), s.float("r"))
    print(rep.table())
    print("all conditions pass" if rep.passed else f"failing: {', '.join(rep.failed)}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify_ops(s: Settings) -> int:
    from jetflow.verify import geometric_suite, operator_suite

    ops = operator_suite(n=s.int("grid") if s.int("grid") <= 128 else 64, count=s.int("count"),
                         seed=s.int("seed"))
    geo = geometric_suite(seed=s.int("seed"))
    ok = all(v <= TOL_IDENTITY for v in ops.values())
    ok = ok and geo["reconstruction"] <= TOL_IDENTITY and geo["min_coefficient"] >= 0.0
    for k, v in ops.items():
        print(f"{k:<20} {v:.3e}")
    print(f"{'geometric':<20} {geo['reconstruction']:.3e} (min coefficient {geo['min_coefficient']:.3e})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_init(s: Settings) -> int:
    from jetflow.assembly import verify_nsr
    from jetflow.scheme import HeatFlow, div_free_spectrum
    from jetflow.snapshots import write_snapshot

    grid = _grid(s)
    k_max = s.int("k_max")
    if 4 * k_max >= grid.n:
        raise AliasingError(f"grid cannot resolve k_max {k_max}: need n > {4 * k_max}")
    rng = np.random.default_rng(s.int("seed"))
    u0 = div_free_spectrum(grid, k_max, rng, decay=s.float("decay"))
    try:
        flow = HeatFlow(grid, u0, s.float("alpha"), s.float("viscosity"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    times = [1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0]
    res = verify_nsr(grid, flow.velocity, flow.stress, flow.pressure, times, 1e-6, velocity_dt=flow.velocity_dt)
    energies = [flow.energy(t) for t in np.linspace(0, 1, 33)]
    l1 = flow.stress_l1_time(0.0, 1.0)
    out = _outdir(s)
    report = {
        "schema_version": 1,
        "command": "init",
        "grid": grid.to_dict(),
        "alpha": flow.alpha,
        "viscosity": flow.viscosity,
        "decay": s.float("decay"),
        "k_max": k_max,
        "nsr_relative": res.relative,
        "stress_L1_time": l1,
        "energy_monotone": bool(np.all(np.diff(energies) <= 1e-15)),
        "stress_L1_at": {repr(t): lp_norm(SymTensorField(grid, flow.stress(t)), 1.0) for t in times},
    }
    (out / "init_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    for t in np.linspace(0, 1, max(s.int("snapshots"), 1)):
        write_snapshot(out / f"u_init_t{t:.4f}.bin", flow.velocity(t), t, name="u")
    print(f"NSR relative residual {res.relative:.3e}; int ||R||_1 dt = {l1:.6g}")
    return EXIT_OK if res.relative <= 1e-8 else EXIT_FAIL


def cmd_iterate(s: Settings) -> int:
    from jetflow.scheme import StepOptions, baseline_flow, run_iteration_step
    from jetflow.snapshots import write_snapshot

    params = _params(s)
    grid = _grid(s)
    grid.require_band(params.knobs.sigma * params.knobs.mu, "sigma*mu jet bandwidth")
    flow = baseline_flow(grid, target=s.float("target_stress"), k_max=s.int("baseline_kmax"),
                         viscosity=s.float("baseline_viscosity"), seed=s.int("seed"))
    opt = StepOptions(coarse=s.int("coarse"), per_component=s.int("per_component"),
                      nsr_step=s.float("nsr_step"), nsr_extra_steps=tuple(s.floats("nsr_extra_steps")),
                      progress=lambda m: print(m, file=sys.stderr))
    out = _outdir(s)
    try:
        res = run_iteration_step(params, flow, grid, opt)
    except IdentityCheckError as exc:
        (out / "failure.json").write_text(json.dumps(
            {"component": exc.component, "residual": exc.residual, "tolerance": exc.tolerance}, indent=2))
        print(f"verification failed in component '{exc.component}': {exc}", file=sys.stderr)
        return EXIT_FAIL
    rep = res.report
    (out / "report.json").write_text(rep.to_json())
    (out / "slices.csv").write_text(rep.slices_csv())
    (out / "exceptional_set.json").write_text(res.exceptional.to_json())
    (out / "plot_slices.gp").write_text(_slices_gnuplot("slices.csv"))
    a, b = params.interval
    for t in np.linspace(a, b, max(s.int("snapshots"), 1) + 2)[1:-1]:
        write_snapshot(out / f"u1_t{t:.4f}.bin", res.velocity(float(t)), float(t), name="u1")
        write_snapshot(out / f"R1_t{t:.4f}.bin", res.stress(float(t)), float(t), name="R1",
                       meta={"entries": ["11", "12", "22"]})
    print(f"NSR relative residual {rep.residuals['nsr']:.3e}; completeness {rep.residuals['completeness']:.3e}; "
          f"||R1||_L1Lr = {rep.components['R1']['L1Lr']:.4g}")
    return EXIT_OK


def _slices_gnuplot(csv_name: str) -> str:
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set logscale y\n"
        "set xlabel 't'\n"
        f"plot for [col in 'R_osc_Lr R_cor_Lr R_lin_Lr R1_Lr'] '{csv_name}' "
        "using 't':col with lines title col\n"
    )


def cmd_sweep(s: Settings) -> int:
    from jetflow.scheme import Knobs
    from jetflow.sweeps import gnuplot_script, run_sweep, sweep_csv

    values = s.floats("sweep_values")
    if len(values) < 3:
        raise ConfigError("a sweep needs at least three points")
    base = Knobs(s.int("sigma"), s.float("kappa"), s.float("nu"), s.float("mu"), s.float("omega"))
    res = run_sweep(s["sweep_quantity"], s["sweep_axis"], values, base, s.float("p"),
                    nu_power=s.optional_float("nu_power"))
    out = _outdir(s)
    (out / "sweep.csv").write_text(sweep_csv([res]))
    (out / "sweep_fit.json").write_text(json.dumps({"schema_version": 1, **res.to_dict()}, indent=2))
    (out / "sweep.gp").write_text(gnuplot_script("sweep.csv", [res]))
    tol = s.float("sweep_tolerance")
    dev = abs(res.fit.slope - res.predicted)
    print(f"{res.quantity} vs {res.axis}: slope {res.fit.slope:.4f} (R^2 {res.fit.r2:.5f}), "
          f"predicted {res.predicted:.4f}, deviation {dev:.2e}")
    return EXIT_OK if dev <= tol else EXIT_FAIL


COMMANDS = {
    "check-params": cmd_check_params,
    "verify-ops": cmd_verify_ops,
    "init": cmd_init,
    "iterate": cmd_iterate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jetflow", description="Accelerating-jet iteration step on the 2D torus.")
    parser.add_argument("--version", action="version", version=f"jetflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--verbose", "-v", action="store_true")
        for key in FLAG_KEYS:
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        s = resolve(args)
        threads = s.int("threads")
        if threads < 1:
            raise ConfigError("threads must be at least 1")
        set_fft_workers(threads)
        return COMMANDS[args.command](s)
    except (ConfigError, AliasingError, SupportError) as exc:
        print(f"jetflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

