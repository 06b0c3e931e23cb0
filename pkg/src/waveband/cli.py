"""``waveband`` command line.

Exit codes: 0 success, 2 bad configuration, 3 numerical failure,
4 recovery rejected.
"""
import argparse
import configparser
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import io
from .core import BoundaryControl, DiscreteOperator, Grid
from .exceptions import (
    ConfigurationError,
    CoverageError,
    GridError,
    RecoveryRejected,
    WavebandError,
)

EXIT_CONFIG, EXIT_NUMERIC, EXIT_REJECTED = 2, 3, 4

DEFAULTS = {
    "grid": {"N": "128", "T": "1.0"},
    "potential": {"spec": "const:1"},
    "control": {"spec": "sin2", "channel": "0"},
    "run": {"route": "cholesky", "method": "kernel", "cross_validate": "false", "compare": "true"},
    "data": {"C": "simulate"},
}


# ---------------------------------------------------------------- config

class Config:
    """INI sections ``grid``, ``potential``, ``control``, ``run``, ``data``."""

    def __init__(self, path=None, overrides=None):
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        cp.read_dict(DEFAULTS)
        if path is not None:
            if not Path(path).exists():
                raise ConfigurationError(f"config file not found: {path}")
            try:
                cp.read(path)
            except configparser.Error as exc:
                raise ConfigurationError(f"cannot parse config: {exc}") from None
        for (sec, key), val in (overrides or {}).items():
            if val is not None:
                cp[sec][key] = str(val)
        self.cp = cp
        self.base = Path(path).parent if path else Path.cwd()

    def get(self, sec, key, fallback=None):
        return self.cp.get(sec, key, fallback=fallback)

    def number(self, sec, key, kind=float, fallback=None):
        raw = self.get(sec, key)
        if raw is None or raw == "":
            return fallback
        try:
            return kind(Fraction(raw)) if kind is float else kind(raw)
        except (ValueError, ZeroDivisionError):
            raise ConfigurationError(f"[{sec}] {key} = {raw!r} is not a number") from None

    def flag(self, sec, key):
        try:
            return self.cp.getboolean(sec, key)
        except ValueError:
            raise ConfigurationError(f"[{sec}] {key} must be a boolean") from None

    @property
    def T(self):
        return self.number("grid", "T")

    def potential_spec(self):
        spec = self.get("potential", "spec").strip()
        if spec.startswith("file:"):
            p = Path(spec[5:])
            spec = "file:" + str(p if p.is_absolute() else self.base / p)
        return spec

    def n(self):
        from .potentials import channel_count

        n = self.number("grid", "n", int)
        return channel_count(self.potential_spec()) if n is None else n

    def levels(self):
        """Step counts ``N`` for every requested ``h`` (or the single ``N``)."""
        raw = self.get("grid", "levels")
        if not raw:
            return [self.number("grid", "N", int)]
        Ns = []
        for tok in raw.split(","):
            try:
                h = Fraction(tok.strip())
            except (ValueError, ZeroDivisionError):
                raise ConfigurationError(f"bad level {tok!r}") from None
            N = Fraction(self.T).limit_denominator(10**6) / h
            if N.denominator != 1 or N <= 0:
                raise ConfigurationError(f"h = {tok} does not divide T = {self.T}")
            Ns.append(int(N))
        return sorted(set(Ns))

    def grid(self, N=None, T=None):
        N = self.number("grid", "N", int) if N is None else N
        X = self.number("grid", "X_max")
        return Grid.from_horizon(N, self.T if T is None else T, self.n(), X)

    def margin(self):
        return self.number("run", "margin")


def _control_function(spec, T):
    kind = spec.strip()
    table = {
        "sin": lambda t: np.sin(np.pi * t / T),
        "sin2": lambda t: np.sin(np.pi * t / T) ** 2,
        "tsq": lambda t: (t / T) ** 2,
        "zero": lambda t: 0.0 * t,
    }
    if kind not in table:
        raise ConfigurationError(f"unknown control {spec!r}; choose from {sorted(table)}")
    return table[kind]


def _control(cfg, grid):
    fn = _control_function(cfg.get("control", "spec"), grid.T)
    ch = cfg.number("control", "channel", int, 0)
    if not 0 <= ch < grid.n:
        raise ConfigurationError(f"control channel {ch} out of range for n={grid.n}")
    e = np.zeros(grid.n)
    e[ch] = 1.0
    return BoundaryControl.from_function(fn, grid, e), fn, e


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _route(cfg):
    route = cfg.get("run", "route")
    if route not in ("cholesky", "formula"):
        raise ConfigurationError(f"route must be cholesky or formula, got {route!r}")
    return route


def _method(cfg):
    m = cfg.get("run", "method")
    if m not in ("fd", "kernel"):
        raise ConfigurationError(f"method must be fd or kernel, got {m!r}")
    return m


def _connecting(cfg, grid):
    """``(C, W, potential, grid)`` from simulation or an operator file.

    File data carry their own grid; ``W`` and the potential are then unknown.
    """
    from .pipeline import simulate_connecting
    from .potentials import make_potential

    src = cfg.get("data", "C").strip()
    if src == "simulate":
        q = make_potential(cfg.potential_spec(), grid)
        W, C = simulate_connecting(q, grid, _method(cfg))
        return C, W, q, grid
    if src.startswith("file:"):
        p = Path(src[5:])
        p = p if p.is_absolute() else cfg.base / p
        C = io.load_operator(p)
        if C.role != "C":
            raise ConfigurationError(f"{p} holds role {C.role}, expected C")
        g = Grid.from_horizon(C.N, C.N * C.h, C.n)
        return C, None, None, g
    raise ConfigurationError(f"[data] C must be 'simulate' or 'file:<path>', got {src!r}")


# ---------------------------------------------------------------- commands

def cmd_forward(cfg, args):
    from .forward import cross_validate_solvers, solve_wave_fd
    from .potentials import make_potential

    grid = cfg.grid()
    q = make_potential(cfg.potential_spec(), grid)
    f, fn, e = _control(cfg, grid)
    u = solve_wave_fd(q, f, grid)
    out = _out(args)
    io.save_wavefield(u, out / "wave.csv", args.time_index)
    summary = {"N": grid.N, "h": grid.h, "T": grid.T, "n": grid.n, "potential": q.source,
               "control": cfg.get("control", "spec"),
               "energy_T": float(grid.h * np.sum(np.abs(u.final[: grid.N]) ** 2))}
    if args.cross_validate or cfg.flag("run", "cross_validate"):
        if not f.smooth:
            raise ConfigurationError("cross-validation needs a smooth control (f(0) = f'(0) = 0), e.g. sin2")
        spec = cfg.potential_spec()
        summary["cross_validation"] = cross_validate_solvers(
            lambda g: make_potential(spec, g), fn, grid.N, grid.T, grid.n, e)
    io.dump_json(summary, out / "forward.json")
    return 0


def cmd_kernel(cfg, args):
    from .forward import solve_goursat_kernel
    from .potentials import make_potential

    grid = cfg.grid()
    k = solve_goursat_kernel(make_potential(cfg.potential_spec(), grid), grid)
    out = _out(args)
    i, j = np.triu_indices(grid.N + 1)
    n = grid.n
    cols = [i * grid.h, j * grid.h]
    names = ["x", "s"]
    for a in range(n):
        for b in range(n):
            cols += [k.values[i, j, a, b].real, k.values[i, j, a, b].imag]
            names += [f"re{a}{b}", f"im{a}{b}"]
    io.save_table(out / "kernel.csv", names, cols)
    io.dump_json({"omega": k.omega, "max_neighbor_jump": k.max_neighbor_jump(), "N": grid.N, "h": grid.h},
                 out / "kernel.json")
    return 0


def cmd_connect(cfg, args):
    grid = cfg.grid()
    C, W, q, grid = _connecting(cfg, grid)
    out = _out(args)
    io.save_operator(C, out / "C.op")
    if W is not None:
        io.save_operator(W, out / "W.op")
    lam = np.linalg.eigvalsh(C.matrix)
    io.dump_json({"N": grid.N, "n": grid.n, "h": grid.h, "eig_min": float(lam[0]), "eig_max": float(lam[-1]),
                  "hermitian_deviation": float(np.abs(C.matrix - C.matrix.conj().T).max()),
                  "source": cfg.get("data", "C")}, out / "connect.json")
    return 0


def cmd_factorize(cfg, args):
    from .factorization import (
        compare_factors,
        factor_residual,
        factorize_cholesky_nest,
        factorize_formula,
        model_control_operator,
        nest_leakage,
    )

    C, W, q, grid = _connecting(cfg, cfg.grid())
    route = _route(cfg)
    out = _out(args)
    Vc = factorize_cholesky_nest(C)
    report = {"cholesky": {"residual": factor_residual(Vc, C), "leakage": nest_leakage(Vc, grid),
                           "ridge": Vc.meta["ridge"]}}
    V = Vc
    if route == "formula" or cfg.flag("run", "compare"):
        schedule = _schedule(cfg, grid)
        Vf, rep = factorize_formula(C, grid, schedule)
        report["formula"] = rep
        cmp = compare_factors(Vf, Vc)
        cmp.pop("U")
        report["compare"] = cmp
        if route == "formula":
            V = Vf
    Wt = model_control_operator(V, grid)
    io.save_operator(V, out / "V.op")
    io.save_operator(Wt, out / "Wt.op")
    if W is not None:
        from .factorization import orthogonalizer

        io.save_operator(orthogonalizer(Wt, W, grid), out / "Phi.op")
    report["route"] = route
    io.dump_json(report, out / "factorize.json")
    return 0


def _schedule(cfg, grid):
    raw = cfg.get("run", "schedule")
    if not raw:
        return None
    try:
        return [int(v) for v in raw.split(",")]
    except ValueError:
        raise ConfigurationError(f"bad schedule {raw!r}") from None


def _recover(cfg, grid, reject=True):
    from .pipeline import run_from_connecting

    C, W, q, grid = _connecting(cfg, grid)
    b = run_from_connecting(C, grid, _route(cfg), cfg.margin(), _schedule(cfg, grid), W=W, potential=q,
                            reject=reject)
    return b


def _recovery_report(b):
    from .wave_model import recovery_error

    rep = dict(b.report["decomposability"])
    rep.update({"N": b.grid.N, "h": b.grid.h, "n": b.grid.n, "route": _route_of(b)})
    if b.potential is not None and b.q_hat is not None:
        rep["relative_error"] = recovery_error(b.q_hat, b.potential)
    return rep


def _route_of(b):
    return b.V.meta.get("route")


def cmd_recover(cfg, args):
    out = _out(args)
    try:
        b = _recover(cfg, cfg.grid())
    except RecoveryRejected as exc:
        io.dump_json({"rejected": True, "reason": str(exc), **(exc.report or {})}, out / "recover.json")
        raise
    io.save_potential(b.q_hat, out / "qhat.csv")
    io.dump_json(_recovery_report(b), out / "recover.json")
    return 0


def cmd_roundtrip(cfg, args):
    """Simulate C, write it, read it back, recover and compare with the truth."""
    from .pipeline import run_from_connecting, simulate_connecting
    from .potentials import make_potential
    from .wave_model import recovery_error

    grid = cfg.grid()
    out = _out(args)
    q = make_potential(cfg.potential_spec(), grid)
    W, C = simulate_connecting(q, grid, _method(cfg))
    io.save_operator(C, out / "C.op")
    C2 = io.load_operator(out / "C.op")
    b = run_from_connecting(C2, grid, _route(cfg), cfg.margin(), _schedule(cfg, grid), potential=q)
    io.save_potential(b.q_hat, out / "qhat.csv")
    rep = _recovery_report(b)
    rep["relative_error"] = recovery_error(b.q_hat, q)
    rep["file_roundtrip_exact"] = bool(np.array_equal(C.matrix, C2.matrix))
    io.dump_json(rep, out / "roundtrip.json")
    return 0


def cmd_verify(cfg, args):
    from .factorization import orthogonalizer_consistency
    from .nest_diagonal import diagonal_limit, reflection_operator
    from .pipeline import eikonal_deviation, orthogonalizer_of, run_pipeline
    from .wave_model import verify_conditions

    levels = cfg.levels()
    if len(levels) < 2:
        raise ConfigurationError("verify needs two or more grid levels ([grid] levels = h1,h2 or --levels)")
    if cfg.get("data", "C").strip() != "simulate":
        raise ConfigurationError("verify runs on simulated data only")
    spec = cfg.potential_spec()
    T = cfg.T
    out = _out(args)
    route, method = _route(cfg), _method(cfg)
    bundles = [run_pipeline(spec, N, T, cfg.n(), route, method, cfg.margin()) for N in levels]
    report = {"conditions": verify_conditions(bundles), "levels": levels}
    # diagonal convergence tables and eikonal check per level
    eik, orth = [], []
    for b in bundles:
        g = b.grid
        D, rep = diagonal_limit(b.W, g, reference=reflection_operator(g).matrix)
        io.save_table(out / f"diagonal_N{g.N}.csv", ["delta", "dist_reflection", "sigma_min"],
                      [[lv["delta"] for lv in rep["levels"]], [lv["dist_reference"] for lv in rep["levels"]],
                       [lv["sigma_min"] for lv in rep["levels"]]])
        for parts in (32, 64):
            if g.N % parts == 0:
                eik.append({"N": g.N, **eikonal_deviation(b.W, g, parts)})
        if g.N % 2 == 0 and g.N // 2 >= 8:
            short = run_pipeline(spec, g.N // 2, T / 2, cfg.n(), route, method)
            orth.append({"N": g.N, **orthogonalizer_consistency(orthogonalizer_of(short), short.grid,
                                                                orthogonalizer_of(b), g)})
    report["eikonal"] = eik
    report["orthogonalizer_consistency"] = orth
    if eik:
        io.save_table(out / "eikonal.csv", ["N", "delta", "deviation"],
                      [[e["N"] for e in eik], [e["delta"] for e in eik], [e["deviation"] for e in eik]])
    io.dump_json(report, out / "verify.json")
    return 0


COMMANDS = {
    "forward": cmd_forward,
    "kernel": cmd_kernel,
    "connect": cmd_connect,
    "factorize": cmd_factorize,
    "recover": cmd_recover,
    "verify": cmd_verify,
    "roundtrip": cmd_roundtrip,
}


def build_parser():
    p = argparse.ArgumentParser(prog="waveband", description="Boundary-control wave-model pipeline")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="INI file with [grid] [potential] [control] [run] [data]")
        s.add_argument("--out", default="waveband_out", help="output directory")
        s.add_argument("--route", choices=("cholesky", "formula"))
        s.add_argument("--levels", help="comma-separated step sizes, e.g. 1/128,1/256")
        s.add_argument("--potential", help="potential spec, overrides the config")
        s.add_argument("-N", type=int, help="step count, overrides the config")
        if name == "forward":
            s.add_argument("--cross-validate", action="store_true")
            s.add_argument("--time-index", type=int, default=None, help="write only this time slice")
    return p


def _limit_threads():
    raw = os.environ.get("WAVEBAND_THREADS")
    if not raw:
        return None
    try:
        k = int(raw)
    except ValueError:
        raise ConfigurationError(f"WAVEBAND_THREADS must be an integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(k, 1))


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = Config(args.config, {
            ("run", "route"): args.route,
            ("grid", "levels"): args.levels,
            ("potential", "spec"): args.potential,
            ("grid", "N"): args.N,
        })
        limiter = _limit_threads()
        try:
            return COMMANDS[args.command](cfg, args)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except RecoveryRejected as exc:
        print(f"waveband: recovery rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except (ConfigurationError, CoverageError, GridError) as exc:
        print(f"waveband: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WavebandError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"waveband: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
