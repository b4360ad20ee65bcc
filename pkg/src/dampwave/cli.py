"""Command-line front end: ``dampwave predict|simulate|sweep|certify``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import __version__, theory
from .certify import check_chain, choose_R, eval_I_and_K, write_certificates
from .solver import HEAT, WAVE, ProblemSpec, SolutionTrace, run
from .sweep import (SweepPoint, compare_bounds, run_sweep, write_loglog, write_points,
                    write_summary)

log = logging.getLogger("dampwave")

WORKERS_ENV = "DAMPWAVE_WORKERS"

DEFAULTS = {
    "n": 1,
    "p": 2.0,
    "alpha": 0.0,
    "beta": 0.0,
    "eps": 1.0,
    "dx": 0.05,
    "cfl": 0.5,
    "tmax": 100.0,
    "domain": None,
    "margin": 2.0,
    "r0": 1.0,
    "equation": WAVE,
    "threshold": 1e4,
    "stride": 0,
    "check_resolution": False,
    "eps_grid": [1.0, 0.7, 0.5, 0.35, 0.25],
    "taus": [0.25, 0.5, 0.75],
    "R": None,
    "trace": None,
    "out": "out",
    "json": False,
    "exploratory": False,
    "literal_D": False,
    "workers": 1,
}

_FLOATS = {"p", "alpha", "beta", "eps", "dx", "cfl", "tmax", "domain", "margin", "r0",
           "threshold", "R"}
_INTS = {"n", "stride", "workers"}
_BOOLS = {"check_resolution", "json", "exploratory", "literal_D"}
_LISTS = {"eps_grid", "taus"}


class ConfigError(ValueError):
    pass


def _coerce(key: str, value):
    if value is None:
        return None
    if key in _LISTS:
        if isinstance(value, str):
            value = [v for v in value.replace(" ", "").split(",") if v]
        return [float(v) for v in value]
    if key in _BOOLS:
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if key in _INTS:
        return int(value)
    if key in _FLOATS:
        return None if value in ("", "none", "None") else float(value)
    return value


def read_config(path) -> dict:
    """Flat key=value text or JSON.  A manifest's ``config`` block is accepted."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
    else:
        data = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            data[k.strip().replace("-", "_")] = v.strip()
    unknown = set(data) - set(DEFAULTS) - {"command"}
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    return {k: _coerce(k, v) for k, v in data.items() if k != "command"}


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    env = os.environ.get(WORKERS_ENV)
    if env:
        cfg["workers"] = int(env)
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = _coerce(k, v)
    return cfg


def damping_from(cfg: dict) -> theory.DampingSpec:
    return theory.DampingSpec(cfg["alpha"], cfg["beta"], exploratory=cfg["exploratory"])


def spec_from(cfg: dict, epsilon: float | None = None) -> ProblemSpec:
    return ProblemSpec(
        n=cfg["n"], p=cfg["p"], damping=damping_from(cfg), data_params={"r0": cfg["r0"]},
        epsilon=cfg["eps"] if epsilon is None else epsilon, equation=cfg["equation"],
        domain_radius=cfg["domain"], dx=cfg["dx"], cfl=cfg["cfl"],
        blowup_threshold=cfg["threshold"], t_max=cfg["tmax"], margin=cfg["margin"],
        snapshot_stride=cfg["stride"],
    )


class Outputs:
    """Tracks files written by one command so a failure can remove them."""

    def __init__(self, root):
        self.root = Path(root)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(p)
        return p

    def cleanup(self) -> None:
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def write_json(path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(out: Outputs, command: str, cfg: dict, files: list) -> None:
    write_json(out.path("manifest.json"), {
        "command": command,
        "version": __version__,
        "config": cfg,
        "outputs": sorted(files),
    })


# ---------------------------------------------------------------------------
# commands


def cmd_predict(cfg: dict) -> dict:
    damping = damping_from(cfg)
    n, p = cfg["n"], cfg["p"]
    if not damping.theorem_mode:
        raise theory.AdmissibilityError("prediction needs alpha*beta = 0")
    table = theory.bound_table(n, damping)
    out = {"table": table}
    if p is not None:
        rep = theory.classify(n, p, damping)
        out["report"] = rep.as_dict()
        if rep.regime != theory.SUPERCRITICAL:
            b = theory.predict_lifespan_bound(n, p, damping, min(cfg["eps"], 1.0))
            out["bound"] = {"form": b.form, "value": b.value, "exponent": b.exponent,
                            "log_power": b.log_power, "constant": b.constant,
                            "epsilon": min(cfg["eps"], 1.0)}
    return out


def _format_predict(res: dict) -> str:
    t = res["table"]
    lines = [f"n={t['n']}  alpha={t['alpha']:g}  beta={t['beta']:g}",
             f"p_c = {t['p_c_text']} = {t['p_c']!r}",
             "T_eps <~"]
    for row in t["upper"]:
        lines.append(f"    {row['bound']:<36} ({row['p_range_text']})")
    lines.append(f"T_eps >~ {t['lower']}")
    lines.append(f"kappa = {t['kappa']}")
    if "report" in res:
        r = res["report"]
        lines.append("")
        lines.append(f"p = {r['p']!r}: kappa = {r['kappa']!r}, q = {r['q']!r}, regime = {r['regime']}")
        lines.append(f"p_fujita = {r['p_fujita']!r}, p_alpha = {r['p_alpha']!r}")
    if "bound" in res:
        b = res["bound"]
        lines.append(f"bound at eps={b['epsilon']!r}: {b['form']} = {b['value']!r}  [{b['constant']}]")
    return "\n".join(lines)


def cmd_simulate(cfg: dict, out: Outputs) -> dict:
    spec = spec_from(cfg)
    trace, rep = run(spec, check_resolution=cfg["check_resolution"])
    files = ["norms.csv", "report.json"]
    trace.norms_to_csv(out.path("norms.csv"))
    if cfg["stride"]:
        trace.to_csv(out.path("trace.csv"))
        files.append("trace.csv")
    report = {"blowup": rep is not None, "t_end": float(trace.norms["t"][-1])}
    if rep is not None:
        report.update(rep.as_dict())
    write_json(out.path("report.json"), report)
    write_manifest(out, "simulate", cfg, files)
    return report


def _fingerprint(cfg: dict) -> str:
    keep = {k: v for k, v in cfg.items() if k not in ("eps_grid", "workers", "out", "json", "eps")}
    return hashlib.sha256(json.dumps(keep, sort_keys=True).encode()).hexdigest()[:16]


def cmd_sweep(cfg: dict, out: Outputs) -> dict:
    base = spec_from(cfg)
    fp = _fingerprint(cfg)
    point_dir = out.root / "points"
    done = {}
    if point_dir.is_dir():
        for f in sorted(point_dir.glob("eps_*.json")):
            data = json.loads(f.read_text())
            if data.get("fingerprint") == fp and data["point"]["epsilon"] in cfg["eps_grid"]:
                done[data["point"]["epsilon"]] = SweepPoint(**data["point"])
    if done:
        log.info("resuming: %d of %d amplitudes already computed", len(done), len(cfg["eps_grid"]))

    def save(pt: SweepPoint):
        # per-point files survive failures elsewhere so the sweep can resume
        write_json(point_dir / f"eps_{pt.epsilon!r}.json",
                   {"fingerprint": fp, "point": pt.__dict__})

    point_dir.mkdir(parents=True, exist_ok=True)
    result = run_sweep(base, cfg["eps_grid"], workers=cfg["workers"], done=done, on_point=save)
    verdict = compare_bounds(result)
    write_points(out.path("sweep.csv"), result.points)
    write_loglog(out.path("loglog.dat"), result.points)
    write_summary(out.path("summary.json"), result, verdict)
    write_manifest(out, "sweep", cfg, ["sweep.csv", "loglog.dat", "summary.json"])
    s = result.summary()
    s["verdict"] = verdict.__dict__
    s["resumed"] = sorted(done)
    return s


def cmd_certify(cfg: dict, out: Outputs) -> dict:
    if not cfg["trace"]:
        raise ConfigError("certify needs --trace pointing at a trace.csv from simulate")
    tpath = Path(cfg["trace"])
    mpath = tpath.parent / "manifest.json"
    sim_cfg = read_config(mpath) if mpath.exists() else {}
    # physics comes from the run that produced the trace
    for k in ("n", "p", "alpha", "beta", "eps", "exploratory"):
        if k in sim_cfg:
            cfg[k] = sim_cfg[k]
    damping = damping_from(cfg)
    trace = SolutionTrace.from_csv(tpath, cfg["n"])
    rpath = tpath.parent / "report.json"
    T_ref = float(trace.times[-1])
    if rpath.exists():
        rep = json.loads(rpath.read_text())
        if rep.get("blowup"):
            T_ref = float(rep["T_est"])
    taus = [f * T_ref if f < 1.0 else f for f in cfg["taus"]]
    certs = []
    for tau in taus:
        R = cfg["R"] if cfg["R"] is not None else choose_R(tau, cfg["n"], cfg["p"],
                                                         damping.alpha, damping.beta)
        certs.append(eval_I_and_K(trace, tau, R, damping, cfg["p"], cfg["eps"],
                                  literal_D=cfg["literal_D"]))
    chain = check_chain(certs, cfg["eps"])
    write_certificates(out.path("certificates.csv"), certs)
    write_json(out.path("chain.json"), chain.as_dict())
    write_manifest(out, "certify", cfg, ["certificates.csv", "chain.json"])
    return {"certificates": [c.__dict__ for c in certs], "chain": chain.as_dict()}


# ---------------------------------------------------------------------------
# argument parsing


def _common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="key=value or JSON config file (flags override)")
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--json", action="store_const", const=True)
    sp.add_argument("--exploratory", action="store_const", const=True,
                    help="allow alpha*beta != 0 (outside the proven range)")


def _numerics(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--dx", type=float)
    sp.add_argument("--cfl", type=float)
    sp.add_argument("--tmax", type=float)
    sp.add_argument("--domain", type=float, help="outer radius (default support+tmax+margin)")
    sp.add_argument("--margin", type=float)
    sp.add_argument("--r0", type=float, help="radius of the bump data")
    sp.add_argument("--threshold", type=float, help="sup|u| treated as blow-up")
    sp.add_argument("--equation", choices=[WAVE, HEAT])
    sp.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dampwave",
                                 description="Lifespan experiments for damped semilinear waves")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("predict", help="kappa, critical exponents and bound table")
    _common(sp)

    sp = sub.add_parser("simulate", help="one run; writes norms/trace/report")
    _common(sp)
    _numerics(sp)
    sp.add_argument("--stride", type=int, help="steps between trace snapshots (0: norms only)")
    sp.add_argument("--check-resolution", dest="check_resolution", action="store_const",
                    const=True)

    sp = sub.add_parser("sweep", help="lifespan over an eps grid and fitted exponent")
    _common(sp)
    _numerics(sp)
    sp.add_argument("--eps-grid", dest="eps_grid", help="comma-separated amplitudes")
    sp.add_argument("--workers", type=int, help=f"process pool size (env {WORKERS_ENV})")

    sp = sub.add_parser("certify", help="test-function functionals on a saved trace")
    _common(sp)
    sp.add_argument("--trace", help="trace.csv written by simulate")
    sp.add_argument("--taus", help="comma-separated tau values; entries < 1 are fractions of T_est")
    sp.add_argument("--R", type=float, help="fixed R instead of the tau-coupled choice")
    sp.add_argument("--literal-D", dest="literal_D", action="store_const", const=True)
    sp.add_argument("--out")
    return ap


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        damping_from(cfg)  # validates ranges and the exploratory guard up front
    except (theory.AdmissibilityError, ConfigError, ValueError, OSError) as exc:
        print(f"dampwave {args.command}: {exc}", file=sys.stderr)
        return 2

    if args.command == "predict":
        try:
            res = cmd_predict(cfg)
        except (theory.AdmissibilityError, ValueError) as exc:
            print(f"dampwave predict: {exc}", file=sys.stderr)
            return 2
        print(json.dumps(res, indent=2, sort_keys=True) if cfg["json"] else _format_predict(res))
        return 0

    out = Outputs(cfg["out"])
    commands = {"simulate": cmd_simulate, "sweep": cmd_sweep, "certify": cmd_certify}
    try:
        res = commands[args.command](cfg, out)
    except OSError as exc:
        out.cleanup()
        print(f"dampwave {args.command}: I/O error at {exc.filename or out.root}: {exc.strerror}",
              file=sys.stderr)
        return 1
    except Exception as exc:
        out.cleanup()
        print(f"dampwave {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if cfg["json"]:
        print(json.dumps(_jsonable(res), indent=2, sort_keys=True))
    else:
        print(f"wrote {', '.join(str(p) for p in out.written)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
