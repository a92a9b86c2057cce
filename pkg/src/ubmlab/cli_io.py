"""Command-line interface: density tables, simulation, verification, characteristics.

Every command writes its outputs plus a ``manifest.json`` recording the fully
resolved configuration and SHA-256 hashes of the outputs; ``ubmlab replay``
re-runs a manifest and compares the hashes.  Numbers are written with 17
significant digits and all files are ASCII.

Exit codes: 0 success, 2 usage error, 3 solver failure, 4 verification
threshold not met (or replay mismatch).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, biane_limit, verify
from ._fmt import dumps_json, fmt17
from .characteristics import (PATH_COLUMNS, CharacteristicPath, characteristic_path,
                              cusp_angular_decay_check)
from .errors import CollisionError, QuadratureError, SolverError
from .spectral_core import EigenAngleConfig, PolarPoint
from .ubm_sim import MODES, SimConfig, simulate_ensemble

__all__ = ["RunManifest", "main", "path_diagnostics", "read_config_file", "replay"]

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_THRESHOLD = 0, 2, 3, 4
MANIFEST = "manifest.json"
SUITES = ("local-law", "edge", "cusp", "quantile", "count", "path", "all")
# thresholds for path diagnostics
DRIFT_TOL = 1e-9
RADIAL_TOL = 1e-6


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# manifests and file output
# ---------------------------------------------------------------------------

def sha256(data):
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunManifest:
    """What ran, with which resolved configuration, and what it wrote."""

    command: str
    config: dict
    seed: int | None
    version: str = __version__
    started: float = 0.0
    finished: float = 0.0
    outputs: dict = field(default_factory=dict)  # name -> sha256
    inputs: dict = field(default_factory=dict)   # path -> sha256
    exit_code: int = 0

    def to_json(self):
        return dumps_json(asdict(self))

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(**d)


class _Writer:
    """Writes ASCII files into one directory and records their hashes."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hashes = {}

    def text(self, name, text):
        data = text.encode("ascii")
        (self.dir / name).write_bytes(data)
        self.hashes[name] = sha256(data)
        return self.dir / name

    def json(self, name, obj):
        return self.text(name, dumps_json(obj))


# ---------------------------------------------------------------------------
# config files and argument parsing
# ---------------------------------------------------------------------------

def read_config_file(path):
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{ln}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _parse_bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


def _floats(s):
    return tuple(float(v) for v in str(s).split(",") if v.strip())


def _pair(s):
    v = _floats(s)
    if len(v) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers")
    return v


def _complex(s):
    s = str(s).strip()
    try:
        if "," in s:
            re_, im = _pair(s)
            return complex(re_, im)
        return complex(s.replace(" ", ""))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a complex number: {s!r}") from e


def _default_seed():
    s = os.environ.get("UBMLAB_SEED")
    if s is None:
        return 0
    try:
        return int(s)
    except ValueError:
        raise UsageError(f"UBMLAB_SEED must be an integer, got {s!r}") from None


def _sim_flags(p, mode_default, trials_default):
    p.add_argument("--n", type=int, default=256, help="matrix size N")
    p.add_argument("--t", type=float, default=1.0, help="final time")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--mode", choices=MODES, default=mode_default)
    p.add_argument("--trials", type=int, default=trials_default)
    p.add_argument("--first-trial", type=int, default=0)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--track-spacing", type=float, default=1e-2)
    p.add_argument("--reorth-every", type=int, default=256)
    p.add_argument("--cfl", type=float, default=0.5)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="ubmlab-out", help="output directory")
    common.add_argument("--config", help="flat 'key = value' file; flags take precedence")

    ap = argparse.ArgumentParser(prog="ubmlab", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"ubmlab {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("density", parents=[common], help="limiting density and quantiles")
    p.add_argument("--t", type=float)
    p.add_argument("--n", type=int, default=2048, help="samples per half curve")
    p.add_argument("--N", type=int, help="also write quantiles for N points")
    p.add_argument("--mass-tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("simulate", parents=[common], help="simulate eigenangle trajectories")
    _sim_flags(p, "matrix", 1)
    p.add_argument("--snapshots", type=_floats, default=(), help="comma-separated times")
    p.add_argument("--no-unwrap", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="finite-N rigidity checks")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--input", nargs="+", help="trajectory CSVs (or a path CSV for 'path')")
    _sim_flags(p, "particles", 100)
    p.add_argument("--eps", type=float, default=verify.DEFAULT_EPS)
    p.add_argument("--delta", type=float, default=verify.DEFAULT_DELTA)
    p.add_argument("--c", type=float, default=verify.DEFAULT_C)
    p.add_argument("--threshold", type=float, help="required pass fraction")
    p.add_argument("--interval", type=_pair, default=(0.0, 1.0))
    p.add_argument("--cusp-t", type=float, default=3.5, help="time used by 'all' for cusp")
    p.add_argument("--quick", action="store_true", help="small smoke profile for 'all'")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("characteristics", parents=[common], help="characteristic path")
    p.add_argument("--z", type=_complex, help="endpoint, 're,im' or a complex literal")
    p.add_argument("--r", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--s-min", type=float, default=0.0)
    p.add_argument("--cusp-check", action="store_true")
    p.set_defaults(func=cmd_characteristics)

    p = sub.add_parser("replay", help="re-run a manifest and compare output hashes")
    p.add_argument("manifest")
    p.add_argument("--out", help="replay directory (default: <original>-replay)")
    p.set_defaults(func=None)
    return ap


def _subparser(ap, name):
    for a in ap._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[name]
    raise KeyError(name)


def parse_args(argv):
    """Parse with precedence flags > config file > defaults."""
    ap = build_parser()
    ns = ap.parse_args(argv)
    if ns.command is None:
        ap.print_usage(sys.stderr)
        raise UsageError("no command given")
    if getattr(ns, "config", None):
        sp = _subparser(ap, ns.command)
        acts = {a.dest: a for a in sp._actions}
        vals = read_config_file(ns.config)
        for k, v in vals.items():
            if k not in acts or k in ("help", "config", "out"):
                raise UsageError(f"unknown config key {k!r} for {ns.command}")
            if acts[k].nargs == 0:
                vals[k] = _parse_bool(v)
            elif acts[k].choices is not None and v not in acts[k].choices:
                raise UsageError(f"invalid value {v!r} for {k}")
        sp.set_defaults(**vals)  # string defaults go through the action's type
        ns = ap.parse_args(argv)
    return ns


def _resolved(ns):
    d = {k: v for k, v in vars(ns).items() if k not in ("func", "config", "out", "command")}
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_density(cfg, w):
    t = cfg["t"]
    if t is None or not t > 0:
        raise UsageError("density needs --t > 0")
    curve = biane_limit.density_curve(t, n=cfg["n"], mass_tol=cfg["mass_tol"])
    w.text("density.csv", curve.to_csv())
    meta = curve.metadata()
    meta.update({"mass": curve.trapezoid_mass(), "rho_pi": float(biane_limit.density(math.pi, t)),
                 "mass_tol": cfg["mass_tol"]})
    if cfg["N"] is not None:
        if cfg["N"] < 1:
            raise UsageError("--N must be positive")
        w.text("quantiles.csv", biane_limit.quantiles(t, cfg["N"]).to_csv())
        meta["N"] = cfg["N"]
    w.json("density.json", meta)
    print(f"t={t:.10g} Theta_t={fmt17(meta['theta_edge'])} Delta_t={fmt17(meta['gap'])} "
          f"rho(pi)={meta['rho_pi']:.6g} mass={meta['mass']:.12g}")
    return EXIT_OK


def _sim_config(cfg, t_final, snapshots=()):
    try:
        return SimConfig(N=cfg["n"], t_final=t_final, dt=cfg["dt"], beta=cfg["beta"],
                         seed=cfg["seed"], mode=cfg["mode"], snapshots=tuple(snapshots),
                         unwrap=not cfg.get("no_unwrap", False),
                         track_spacing=cfg["track_spacing"], reorth_every=cfg["reorth_every"],
                         cfl=cfg["cfl"])
    except ValueError as e:
        raise UsageError(str(e)) from None


def _run(sim, cfg):
    if cfg["trials"] < 1:
        raise UsageError("--trials must be >= 1")
    return simulate_ensemble(sim, cfg["trials"], jobs=cfg["jobs"], first_trial=cfg["first_trial"])


def _ensemble_summary(trajs):
    rows = ["trial,t,trace_w,trace_u_re,trace_u_im,defect"]
    for tr in trajs:
        d = tr.defects if tr.defects.size else np.full(tr.times.size, np.nan)
        for k, t in enumerate(tr.times):
            u = tr.trace_u[k]
            rows.append(",".join([str(tr.config.trial)] + [fmt17(v) for v in
                                  (t, tr.trace_w[k], u.real, u.imag, d[k])]))
    return "\n".join(rows) + "\n"


def cmd_simulate(cfg, w):
    sim = _sim_config(cfg, cfg["t"], cfg["snapshots"])
    trajs = _run(sim, cfg)
    for tr in trajs:
        w.text(f"trajectory_{tr.config.trial:05d}.csv", tr.to_csv())
    w.text("ensemble.csv", _ensemble_summary(trajs))
    ordered = all(np.all(np.diff(s.angles) > 0) for tr in trajs for s in tr.snapshots)
    w.json("simulate.json", {
        "config": sim.to_dict(), "trials": len(trajs), "ordered": ordered,
        "streams": [list(tr.stream) for tr in trajs],
        "steps": [tr.steps for tr in trajs], "substeps": [tr.substeps for tr in trajs],
        "max_defect": max(tr.max_defect() for tr in trajs),
        "com_discrepancy": [tr.com_discrepancy() for tr in trajs],
    })
    print(f"simulated {len(trajs)} trial(s) N={sim.N} t={sim.t_final:.10g} mode={sim.mode} "
          f"ordered={ordered}")
    return EXIT_OK


def load_trajectories(paths, t=None):
    """Eigenangle configs from trajectory CSVs, one per file, at time t (default: last)."""
    out = []
    for p in paths:
        try:
            cfgs = EigenAngleConfig.from_csv(Path(p).read_text(encoding="ascii"))
        except (ValueError, UnicodeDecodeError) as e:
            raise UsageError(f"{p}: not a trajectory CSV ({e})") from None
        if t is None:
            out.append(max(cfgs, key=lambda c: c.t))
            continue
        hit = [c for c in cfgs if c.t == t]
        if not hit:
            raise UsageError(f"{p}: no snapshot at t={t}")
        out.append(hit[0])
    return out


def _report(w, name, rep):
    w.text(f"{name}.json", rep.to_json())
    w.text(f"{name}.csv", rep.to_csv())
    fr = ", ".join(f"{k}={v:.3f}" for k, v in sorted(rep.pass_fractions.items()))
    print(f"{name}: N={rep.N} t={rep.t:.10g} trials={rep.trials} {fr} "
          f"threshold={rep.threshold} -> {'PASS' if rep.passed else 'FAIL'}")
    return rep.passed


def _thr(cfg, default):
    return default if cfg["threshold"] is None else cfg["threshold"]


def _suite(name, cfg, configs, t, w):
    eps = cfg["eps"]
    if name == "local-law":
        rep = verify.local_law_report(configs, t, eps, cfg["delta"], cfg["c"],
                                      threshold=_thr(cfg, 0.95))
    elif name == "edge":
        rep = verify.edge_rigidity_check(configs, t, eps, cfg["delta"], _thr(cfg, 0.95))
    elif name == "cusp":
        rep = verify.cusp_rigidity_check(configs, t, eps, _thr(cfg, 0.9))
    elif name == "quantile":
        rep = verify.quantile_rigidity_check(configs, t, eps, threshold=_thr(cfg, 0.95))
    elif name == "count":
        rep = verify.interval_count_report(configs, t, cfg["interval"], eps, _thr(cfg, 0.95))
        c0, p0 = rep.stats["count"][0], rep.stats["predicted"][0]
        print(f"count in ({fmt17(cfg['interval'][0])}, {fmt17(cfg['interval'][1])}]: "
              f"{int(c0)} vs N*rho = {p0:.6f} (trial 0); "
              f"max |discrepancy| = {rep.extras['max_abs_discrepancy']:.4f}")
    else:
        raise UsageError(f"unknown suite {name}")
    return _report(w, name, rep)


def path_diagnostics(columns):
    """Constancy and radial-identity diagnostics computed from path CSV columns."""
    s = columns["s"]
    f = columns["f_re"] + 1j * columns["f_im"]
    lr = columns["log_r"]
    f_end = f[-1]
    drift = float(np.max(np.abs(f - f_end)) / (1.0 + abs(f_end)))
    h = s[1] - s[0]
    res = (lr[2:] - lr[:-2]) / (2.0 * h) - f.real[1:-1] / 2.0
    radial = float(np.max(np.abs(res))) if res.size else 0.0
    mono = bool(np.all(np.diff(lr) <= 1e-13 * (1.0 + np.abs(lr[1:]))))
    return {"t": float(s[-1]), "points": int(s.size), "drift": drift, "max_radial_residual": radial,
            "radius_monotone": mono, "passed": drift <= DRIFT_TOL and radial <= RADIAL_TOL}


def _verify_path(cfg, w):
    if not cfg["input"] or len(cfg["input"]) != 1:
        raise UsageError("verify path needs exactly one --input path CSV")
    try:
        cols = CharacteristicPath.read_csv(Path(cfg["input"][0]).read_text(encoding="ascii"))
    except (ValueError, UnicodeDecodeError) as e:
        raise UsageError(f"{cfg['input'][0]}: not a path CSV ({e})") from None
    diag = path_diagnostics(cols)
    w.json("path_diagnostics.json", diag)
    print(f"path: drift={diag['drift']:.3e} radial={diag['max_radial_residual']:.3e} "
          f"-> {'PASS' if diag['passed'] else 'FAIL'}")
    return EXIT_OK if diag["passed"] else EXIT_THRESHOLD


def cmd_verify(cfg, w):
    suite = cfg["suite"]
    if suite == "path":
        return _verify_path(cfg, w)
    if suite == "all" and cfg["quick"]:
        cfg = dict(cfg, n=128, trials=40, t=1.0, cusp_t=3.5)
    t = cfg["t"]

    def ensemble(time):
        if cfg["input"]:
            return load_trajectories(cfg["input"], time)
        return [tr.final for tr in _run(_sim_config(cfg, time), cfg)]

    if suite != "all":
        try:
            return EXIT_OK if _suite(suite, cfg, ensemble(t), t, w) else EXIT_THRESHOLD
        except ValueError as e:
            raise UsageError(str(e)) from None
    ok, skipped = True, []
    configs = ensemble(t)
    for name in ("local-law", "edge", "quantile", "count"):
        try:
            ok &= _suite(name, cfg, configs, t, w)
        except ValueError as e:
            skipped.append([name, str(e)])
    try:
        cusp_cfg = dict(cfg, n=2 * cfg["n"]) if cfg["quick"] else cfg
        cc = load_trajectories(cfg["input"], cfg["cusp_t"]) if cfg["input"] else \
            [tr.final for tr in _run(_sim_config(cusp_cfg, cfg["cusp_t"]), cusp_cfg)]
        ok &= _suite("cusp", cfg, cc, cfg["cusp_t"], w)
    except ValueError as e:
        skipped.append(["cusp", str(e)])
    w.json("verify_all.json", {"passed": bool(ok), "skipped": skipped})
    for name, why in skipped:
        print(f"{name}: skipped ({why})")
    return EXIT_OK if ok else EXIT_THRESHOLD


def cmd_characteristics(cfg, w):
    if cfg["z"] is not None:
        if cfg["r"] is not None or cfg["theta"] is not None:
            raise UsageError("give either --z or --r/--theta")
        z = PolarPoint.from_complex(cfg["z"])
    elif cfg["r"] is not None and cfg["theta"] is not None:
        z = PolarPoint(cfg["r"], cfg["theta"])
    else:
        raise UsageError("endpoint needed: --z or --r and --theta")
    if not z.r > 1.0:
        raise UsageError("the CLI only follows exterior characteristics (|z| > 1)")
    t = cfg["t"]
    if t is None or not t > 0:
        raise UsageError("characteristics needs --t > 0")
    try:
        path = characteristic_path(z, t, cfg["m"], s_min=cfg["s_min"])
    except ValueError as e:
        raise UsageError(str(e)) from None
    text = path.to_csv()
    w.text("path.csv", text)
    # diagnostics come from the serialized columns so re-validation is identical
    diag = path_diagnostics(CharacteristicPath.read_csv(text))
    diag["crosses_real_axis"] = path.crosses_real_axis()
    w.json("path.json", diag)
    print(f"characteristic to z={z.r:.10g}*exp(i*{z.theta:.10g}) t={t:.10g}: "
          f"drift={diag['drift']:.3e} radial={diag['max_radial_residual']:.3e}")
    if cfg["cusp_check"]:
        try:
            rep = cusp_angular_decay_check(z, 4.0 - t)
        except ValueError as e:
            raise UsageError(str(e)) from None
        w.json("cusp_decay.json", rep.as_dict())
        print(f"cusp decay: status={rep.status} slope={rep.slope:.6g} passed={rep.passed}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def _input_hashes(cfg):
    return {p: sha256(Path(p).read_bytes()) for p in (cfg.get("input") or [])}


def run(command, cfg, out_dir):
    """Run one command from a resolved config; returns (exit code, manifest)."""
    func = {"density": cmd_density, "simulate": cmd_simulate, "verify": cmd_verify,
            "characteristics": cmd_characteristics}[command]
    w = _Writer(out_dir)
    m = RunManifest(command, dict(cfg), cfg.get("seed"), started=time.time(),
                    inputs=_input_hashes(cfg))
    code = func(dict(cfg), w)
    m.finished = time.time()
    m.outputs = dict(sorted(w.hashes.items()))
    m.exit_code = int(code)
    (w.dir / MANIFEST).write_bytes(m.to_json().encode("ascii"))
    return code, m


def replay(manifest_path, out_dir=None):
    """Re-run a manifest into ``out_dir`` and compare output hashes.

    Returns ``(identical, mismatches)`` where mismatches lists differing files.
    """
    mp = Path(manifest_path)
    m = RunManifest.from_json(mp.read_text(encoding="ascii"))
    if m.version != __version__:
        print(f"warning: manifest written by version {m.version}", file=sys.stderr)
    for p, h in m.inputs.items():
        if sha256(Path(p).read_bytes()) != h:
            raise UsageError(f"input {p} changed since the manifest was written")
    out = Path(out_dir) if out_dir else mp.parent.with_name(mp.parent.name + "-replay")
    _, m2 = run(m.command, m.config, out)
    bad = sorted(k for k in set(m.outputs) | set(m2.outputs)
                 if m.outputs.get(k) != m2.outputs.get(k))
    return not bad, bad


def main(argv=None):
    try:
        ns = parse_args(sys.argv[1:] if argv is None else argv)
        if ns.command == "replay":
            same, bad = replay(ns.manifest, ns.out)
            for k in bad:
                print(f"hash mismatch: {k}")
            print("replay: identical" if same else "replay: MISMATCH")
            return EXIT_OK if same else EXIT_THRESHOLD
        code, _ = run(ns.command, _resolved(ns), ns.out)
        return code
    except SystemExit as e:  # argparse
        return EXIT_USAGE if e.code else EXIT_OK
    except UsageError as e:
        print(f"ubmlab: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, QuadratureError, CollisionError) as e:
        print(f"ubmlab: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
