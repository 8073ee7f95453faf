"""Command-line front end.

Commands: ``count`` (closure-based law count), ``find`` (polynomial laws),
``verify`` (check candidate laws), ``simulate`` (numerical flow and drift)
and ``reproduce`` (random-architecture comparison against known laws).

Exit codes: 0 ok, 1 verification failure, 2 sample points disagree,
3 resource cap hit, 4 reproduce mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from . import __version__
from .flowsim import (
    FlowConfig,
    conservation_drift,
    random_config,
    riemannian_residual,
    simulate,
)
from .lawfinder import (
    DEFAULT_MAX_UNKNOWNS,
    UnknownCapError,
    find_polynomial_laws,
    independence_ranks,
    verify_law,
)
from .lieclosure import DEGREE_CAP, DIM_DISAGREEMENT, MAX_ITER, STAGNATED, closure
from .models import (
    CertificateError,
    ModelSpec,
    build_phi,
    known_laws,
    sample_points,
)
from .poly import DEFAULT_DEGREE_CAP, PolySyntaxError, parse, render

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_DIM_DISAGREEMENT = 2
EXIT_RESOURCE_CAP = 3
EXIT_REPRODUCE_MISMATCH = 4

COMMANDS = ("count", "find", "verify", "simulate", "reproduce")


@dataclass
class RunConfig:
    command: str
    model: ModelSpec | None = None
    seed: int = 0
    samples: int = 5
    bound: int = 10
    max_iter: int = 10
    max_degree: int = 2
    degree_cap: int = DEFAULT_DEGREE_CAP
    max_unknowns: int = DEFAULT_MAX_UNKNOWNS
    # verify / simulate
    laws_file: str | None = None
    flow: dict | None = None
    loss: str = "quadratic"
    horizon: float = 1.0
    steps: int = 2000
    integrator: str = "rk4"
    drift_tol: float = 1e-6
    with_flow: bool = False
    riemannian: bool = False
    dump_states: str | None = None
    # reproduce
    count: int = 10
    jobs: int = 1
    families: tuple[str, ...] = ("linear", "relu")
    linear_depth: tuple[int, int] = (2, 3)
    relu_depth: tuple[int, int] = (2, 2)
    width_range: tuple[int, int] = (2, 4)

    def echo(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, ModelSpec):
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VERIFY_FAIL):
        super().__init__(message)
        self.code = code


# -- commands ---------------------------------------------------------------


def _points(cfg: RunConfig):
    try:
        return sample_points(cfg.model, cfg.samples, cfg.seed, cfg.bound)
    except CertificateError as exc:
        raise CliError(str(exc), EXIT_RESOURCE_CAP) from None


def _point_dict(p) -> dict:
    return {"coords": list(p.coords), "certificates": p.certificates(),
            "stack_ranks": list(p.stack_ranks)}


def cmd_count(cfg: RunConfig) -> tuple[dict, int]:
    phi = build_phi(cfg.model)
    pts = _points(cfg)
    rep = closure(phi, pts, max_iter=cfg.max_iter, degree_cap=cfg.degree_cap)
    payload = rep.to_dict()
    payload["sample_points"] = [_point_dict(p) for p in pts]
    payload["layout"] = phi.layout_descriptor()
    code = {
        STAGNATED: EXIT_OK,
        DIM_DISAGREEMENT: EXIT_DIM_DISAGREEMENT,
        DEGREE_CAP: EXIT_RESOURCE_CAP,
        MAX_ITER: EXIT_RESOURCE_CAP,
    }[rep.stop_reason]
    return payload, code


def cmd_find(cfg: RunConfig) -> tuple[dict, int]:
    phi = build_phi(cfg.model)
    try:
        basis = find_polynomial_laws(phi, cfg.max_degree, max_unknowns=cfg.max_unknowns)
    except UnknownCapError as exc:
        raise CliError(str(exc), EXIT_RESOURCE_CAP) from None
    pts = _points(cfg)
    basis = basis.with_independence(pts)
    per_degree: dict[str, int] = {}
    for deg in basis.degrees:
        per_degree[str(deg)] = per_degree.get(str(deg), 0) + 1
    payload = {
        "D": phi.D,
        "d": phi.d,
        "degree_bound": basis.degree_bound,
        "laws": [render(h) for h in basis.laws],
        "degrees": list(basis.degrees),
        "laws_per_degree": per_degree,
        "independence_max": basis.independence_count,
        "independence_min": basis.independence_min,
        "independence_per_point": list(basis.point_ranks),
        "unknowns": basis.unknowns,
        "constraints": basis.constraints,
        "sample_points": [_point_dict(p) for p in pts],
        "layout": phi.layout_descriptor(),
    }
    return payload, EXIT_OK


def read_laws(path: str, D: int) -> list:
    """One polynomial per line; blank lines and ``#`` comments are skipped."""
    laws = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                laws.append(parse(text, D))
            except PolySyntaxError as exc:
                raise CliError(f"{path}:{lineno}: {exc}") from None
    return laws


def _flow_config(cfg: RunConfig) -> FlowConfig:
    if cfg.flow is not None:
        d = dict(cfg.flow)
        d.setdefault("spec", cfg.model.to_dict())
        return FlowConfig.from_dict(d)
    return random_config(cfg.model, cfg.seed, loss=cfg.loss, T=cfg.horizon,
                         steps=cfg.steps, integrator=cfg.integrator)


def _drift_table(traj, laws, tol: float) -> tuple[list[dict], bool]:
    rows = conservation_drift(traj, laws)
    for r in rows:
        r["within_tolerance"] = r["rel_drift"] <= tol
    return rows, all(r["within_tolerance"] for r in rows)


def cmd_verify(cfg: RunConfig) -> tuple[dict, int]:
    phi = build_phi(cfg.model)
    if cfg.laws_file:
        laws = read_laws(cfg.laws_file, phi.D)
        source = cfg.laws_file
    else:
        laws = list(known_laws(cfg.model, phi).laws)
        source = "known_laws"
    verdicts = [{"law": render(h), "conserved": verify_law(h, phi)} for h in laws]
    ok = all(v["conserved"] for v in verdicts)
    payload = {"D": phi.D, "source": source, "symbolic": verdicts}
    if cfg.flow is not None or cfg.with_flow:
        fc = _flow_config(cfg)
        traj = simulate(fc)
        rows, drift_ok = _drift_table(traj, laws, cfg.drift_tol)
        exempt = traj.relu_activation_flips > 0 or traj.truncated
        payload["flow"] = traj.summary()
        payload["drift"] = rows
        payload["drift_exempt"] = exempt
        if not exempt:
            ok = ok and drift_ok
    return payload, EXIT_OK if ok else EXIT_VERIFY_FAIL


def cmd_simulate(cfg: RunConfig) -> tuple[dict, int]:
    fc = _flow_config(cfg)
    traj = simulate(fc)
    payload = {"flow_config": {k: v for k, v in fc.to_dict().items() if k not in ("X", "Y", "theta_init")},
               "n_samples": int(len(fc.X)), "trajectory": traj.summary()}
    ok = not traj.truncated
    energy_ok = bool(np.all(np.diff(traj.energies) <= 1e-9))
    payload["energy_non_increasing"] = energy_ok
    ok = ok and energy_ok
    if fc.spec.kind != "custom":
        phi = build_phi(fc.spec)
        laws = list(known_laws(fc.spec, phi).laws)
        rows, drift_ok = _drift_table(traj, laws, cfg.drift_tol)
        payload["drift"] = rows
        payload["drift_exempt"] = traj.relu_activation_flips > 0
        if not payload["drift_exempt"]:
            ok = ok and drift_ok
    if cfg.riemannian:
        res = riemannian_residual(fc, traj)
        payload["riemannian_residual"] = res
        ok = ok and res <= 1e-3
    if cfg.dump_states:
        with open(cfg.dump_states, "w") as fh:
            fh.write(traj.to_csv())
        payload["states_csv"] = cfg.dump_states
    return payload, EXIT_OK if ok else EXIT_VERIFY_FAIL


# -- reproduce ----------------------------------------------------------------


def sample_architectures(cfg: RunConfig) -> list[ModelSpec]:
    """Deterministic batch of random architectures, alternating families."""
    rng = np.random.default_rng([cfg.seed, 2024])
    lo_w, hi_w = cfg.width_range
    specs = []
    for i in range(cfg.count):
        family = cfg.families[i % len(cfg.families)]
        if family == "linear":
            depth = int(rng.integers(cfg.linear_depth[0], cfg.linear_depth[1] + 1))
            widths = tuple(int(w) for w in rng.integers(lo_w, hi_w + 1, size=depth + 1))
            specs.append(ModelSpec("linear", widths))
        else:
            depth = int(rng.integers(cfg.relu_depth[0], cfg.relu_depth[1] + 1))
            widths = tuple(int(w) for w in rng.integers(lo_w, hi_w + 1, size=depth + 1))
            if depth == 2:
                kind = "relu2_bias" if rng.random() < 0.5 else "relu2_nobias"
            else:
                kind = "relu_deep_nobias"
            specs.append(ModelSpec(kind, widths))
    return specs


def predicted_known_count(spec: ModelSpec, point) -> dict:
    """Independent known laws: exact gradient rank and the closed form.

    Linear: sum over interfaces of rk (2 n_i + 1 - rk) / 2 with rk the rank
    of the stacked neighbouring weights. ReLU: the number of hidden neurons.
    """
    laws = known_laws(spec)
    rank = independence_ranks(laws, [point])[0]
    if spec.kind == "linear":
        formula = sum(rk * (2 * n + 1 - rk) // 2
                      for rk, n in zip(point.stack_ranks, spec.widths[1:-1]))
    else:
        formula = sum(spec.widths[1:-1])
    return {"N_known": rank, "N_formula": formula, "known_laws": len(laws)}


def _reproduce_one(args) -> dict:
    index, spec, cfg = args
    t0 = time.perf_counter()
    sub = replace(cfg, model=spec, seed=cfg.seed + 1000 * (index + 1))
    phi = build_phi(spec)
    pts = sample_points(spec, sub.samples, sub.seed, sub.bound)
    rep = closure(phi, pts, max_iter=sub.max_iter, degree_cap=sub.degree_cap)
    pred = predicted_known_count(spec, pts[0])
    return {
        "index": index,
        "architecture": spec.key(),
        "kind": spec.kind,
        "widths": list(spec.widths),
        "D": phi.D,
        "num_laws": rep.num_laws,
        "stop_reason": rep.stop_reason,
        "stagnation_step": rep.stagnation_step,
        "frobenius_at_step0": rep.frobenius_at_step0,
        **pred,
        "match": rep.num_laws is not None and rep.num_laws == pred["N_known"],
        "_seconds": time.perf_counter() - t0,
    }


def cmd_reproduce(cfg: RunConfig) -> tuple[dict, int]:
    specs = sample_architectures(cfg)
    jobs = [(i, s, cfg) for i, s in enumerate(specs)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_reproduce_one, jobs))
    else:
        rows = [_reproduce_one(j) for j in jobs]
    rows.sort(key=lambda r: r["index"])
    timings = [r.pop("_seconds") for r in rows]
    mismatched = [r["architecture"] for r in rows if not r["match"]]
    payload = {"rows": rows, "all_match": not mismatched, "mismatches": mismatched}
    payload["_timings"] = timings
    return payload, EXIT_OK if not mismatched else EXIT_REPRODUCE_MISMATCH


HANDLERS = {
    "count": cmd_count,
    "find": cmd_find,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "reproduce": cmd_reproduce,
}


def run(cfg: RunConfig, timing: bool = False) -> tuple[dict, int]:
    """Execute a command and wrap its payload into a versioned report."""
    t0 = time.perf_counter()
    try:
        payload, code = HANDLERS[cfg.command](cfg)
        error = None
    except CliError as exc:
        payload, code, error = {}, exc.code, str(exc)
    timings = payload.pop("_timings", None)
    report = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "command": cfg.command,
        "config": cfg.echo(),
        "payload": payload,
        "exit_code": code,
        "ok": code == EXIT_OK,
    }
    if error:
        report["error"] = error
    if timing:
        report["wall_time_seconds"] = round(time.perf_counter() - t0, 3)
        if timings is not None:
            report["row_seconds"] = [round(t, 3) for t in timings]
    return report, code


# -- rendering ------------------------------------------------------------------


def render_text(report: dict) -> str:
    p = report["payload"]
    cmd = report["command"]
    model = report["config"].get("model")
    head = f"conslaw {report['version']} {cmd}"
    if model:
        head += f"  model={ModelSpec.from_dict(model).key()}"
    lines = [head]
    if "error" in report:
        lines.append(f"error: {report['error']}")
    elif cmd == "count":
        lines.append(f"D={p['D']} d={p['d']}")
        for k, row in enumerate(p["dims_per_iteration"]):
            lines.append(f"  dim W_{k}(theta) at points: {row}")
        lines.append(f"frobenius_at_step0={p['frobenius_at_step0']}  stop={p['stop_reason']}")
        if p["num_laws"] is not None:
            lines.append(f"final_dim={p['final_dim']}  num_laws={p['num_laws']}")
        if p["message"]:
            lines.append(p["message"])
    elif cmd == "find":
        lines.append(f"D={p['D']} degree<= {p['degree_bound']}: {len(p['laws'])} laws "
                     f"(independent: max {p['independence_max']}, min {p['independence_min']})")
        for law, deg in zip(p["laws"], p["degrees"]):
            lines.append(f"  [deg {deg}] {law}")
    elif cmd == "verify":
        for v in p["symbolic"]:
            lines.append(f"  {'ok  ' if v['conserved'] else 'FAIL'} {v['law']}")
        if "drift" in p:
            lines.append(f"flow: {p['flow']}")
            for r in p["drift"]:
                lines.append(f"  drift rel={r['rel_drift']:.3e} abs={r['abs_drift']:.3e}  {r['law']}")
    elif cmd == "simulate":
        lines.append(f"trajectory: {p['trajectory']}")
        for r in p.get("drift", []):
            lines.append(f"  drift rel={r['rel_drift']:.3e}  {r['law']}")
        if "riemannian_residual" in p:
            lines.append(f"riemannian residual: {p['riemannian_residual']:.3e}")
    elif cmd == "reproduce":
        lines.append(f"{'architecture':<32} {'D':>4} {'laws':>5} {'N':>4}  match")
        for r in p["rows"]:
            lines.append(f"{r['architecture']:<32} {r['D']:>4} {str(r['num_laws']):>5} "
                         f"{r['N_known']:>4}  {r['match']}")
        lines.append("all match" if p["all_match"] else f"MISMATCH: {p['mismatches']}")
    lines.append(f"exit code {report['exit_code']}")
    return "\n".join(lines)


# -- argument parsing -------------------------------------------------------------


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace(" ", "").split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _range(text: str) -> tuple[int, int]:
    vals = _int_list(text.replace("-", ","))
    if len(vals) != 2 or vals[0] > vals[1]:
        raise argparse.ArgumentTypeError(f"expected a range like 2-4, got {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--kind", choices=["linear", "relu2_nobias", "relu2_bias", "relu_deep_nobias", "custom"])
    g.add_argument("--widths", type=_int_list, help="layer widths, e.g. 2,2,2 (input first)")
    g.add_argument("--phi", action="append", help="custom polynomial component (repeatable)")
    g.add_argument("--dim", type=int, help="parameter count D for custom models")
    g = common.add_argument_group("run")
    g.add_argument("--config", help="JSON file with RunConfig fields")
    g.add_argument("--seed", type=int)
    g.add_argument("--samples", type=int, help="number of generic sample points")
    g.add_argument("--bound", type=int, help="coordinate bound for sample points")
    g.add_argument("--max-iter", type=int)
    g.add_argument("--max-degree", type=int)
    g.add_argument("--degree-cap", type=int)
    g.add_argument("--max-unknowns", type=int)
    g.add_argument("--json", action="store_true", help="emit the JSON report")
    g.add_argument("--timing", action="store_true", help="include wall time in the report")
    g.add_argument("-v", "--verbose", action="store_true")

    flow = argparse.ArgumentParser(add_help=False)
    g = flow.add_argument_group("flow")
    g.add_argument("--flow-config", help="JSON FlowConfig file (X, Y, theta_init, ...)")
    g.add_argument("--loss", choices=["quadratic", "logistic"])
    g.add_argument("--horizon", "-T", type=float)
    g.add_argument("--steps", type=int)
    g.add_argument("--integrator", choices=["rk4", "euler"])
    g.add_argument("--drift-tol", type=float)

    parser = argparse.ArgumentParser(prog="conslaw", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"conslaw {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("count", parents=[common], help="count independent conservation laws")
    sub.add_parser("find", parents=[common], help="find polynomial conservation laws")
    p = sub.add_parser("verify", parents=[common, flow], help="verify candidate laws")
    p.add_argument("--laws", dest="laws_file", help="file with one polynomial per line (default: known laws)")
    p.add_argument("--with-flow", action="store_true", help="also measure drift on a seeded random flow")
    p = sub.add_parser("simulate", parents=[common, flow], help="integrate the gradient flow")
    p.add_argument("--riemannian", action="store_true", help="check the low-dimensional metric flow")
    p.add_argument("--dump-states", help="write the full trajectory as CSV")
    p = sub.add_parser("reproduce", parents=[common], help="random architectures vs known laws")
    p.add_argument("--count", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--families", type=lambda s: tuple(s.split(",")))
    p.add_argument("--linear-depth", type=_range)
    p.add_argument("--relu-depth", type=_range)
    p.add_argument("--width-range", type=_range)
    return parser


_DIRECT = ("seed", "samples", "bound", "max_iter", "max_degree", "degree_cap", "max_unknowns",
           "laws_file", "with_flow", "loss", "horizon", "steps", "integrator", "drift_tol", "riemannian",
           "dump_states", "count", "jobs", "families", "linear_depth", "relu_depth", "width_range")


def config_from_args(ns: argparse.Namespace, environ=os.environ) -> RunConfig:
    """Merge defaults, the optional --config file, flags and CONSLAW_SEED."""
    base: dict = {}
    if ns.config:
        with open(ns.config) as fh:
            base = json.load(fh)
    values: dict = {}
    for key, val in base.items():
        if key in ("command", "model"):
            continue
        if key not in {f.name for f in fields(RunConfig)}:
            raise CliError(f"unknown config key {key!r}")
        values[key] = tuple(val) if isinstance(val, list) else val
    for key in _DIRECT:
        val = getattr(ns, key, None)
        if val is not None and val is not False:
            values[key] = val

    model = dict(base.get("model") or {})
    if ns.kind:
        model["kind"] = ns.kind
    if ns.widths:
        model["widths"] = list(ns.widths)
    if ns.phi:
        model["phi"] = ns.phi
    if ns.dim is not None:
        model["dim"] = ns.dim
    spec = None
    if model:
        try:
            spec = ModelSpec.from_dict(model)
        except (KeyError, ValueError) as exc:
            raise CliError(f"invalid model: {exc}") from None
    elif ns.command != "reproduce" and not getattr(ns, "flow_config", None):
        raise CliError("a model is required (--kind/--widths or --config)")

    flow = base.get("flow")
    if getattr(ns, "flow_config", None):
        with open(ns.flow_config) as fh:
            flow = json.load(fh)
    if flow is not None:
        values["flow"] = flow
        if spec is None and "spec" in flow:
            spec = ModelSpec.from_dict(flow["spec"])

    if "CONSLAW_SEED" in environ:
        values["seed"] = int(environ["CONSLAW_SEED"])
    return RunConfig(command=ns.command, model=spec, **values)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.verbose:
        import logging
        logging.basicConfig(level=logging.DEBUG, format="%(name)s: %(message)s")
    try:
        cfg = config_from_args(ns)
    except CliError as exc:
        print(f"conslaw: error: {exc}", file=sys.stderr)
        return exc.code
    report, code = run(cfg, timing=ns.timing)
    if ns.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(render_text(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
