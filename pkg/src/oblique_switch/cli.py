"""Command-line front end: ``oblique-switch <command> --config FILE``.

Every command writes ``report.json`` (17 significant digits, config hash and
seed embedded) plus command-specific CSV files into ``--out`` and prints a
short human summary (6 significant digits).

Exit codes: 0 success, 1 verification failed, 2 configuration, 3 geometry or
construction, 4 numerical stability, 5 capability.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import emit_config, load_config
from .domain import emit_slice_polygon, membership, nonemptiness_report, slice_vertices
from .errors import CapabilityError, ConfigError, ObliqueSwitchError
from .markov import analyze_chain, irreducible

CONSTRUCTIONS = ("markovian", "dim3", "symmetric", "controlled-dim3", "dim4-counterexample")


def _plain(obj):
    """JSON-ready copy: arrays to lists, floats kept at full precision."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    return obj


def _fmt(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in np.asarray(v, dtype=float).ravel()) + "]"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


class _Run:
    def __init__(self, args):
        self.args = args
        self.cfg = load_config(args.config)
        if args.seed is not None:
            self.cfg.run["seed"] = int(args.seed)
        self.seed = int(self.cfg.run["seed"])
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.lines = []

    def say(self, text):
        self.lines.append(text)
        print(text)

    def write_report(self, command, results, status="ok"):
        rep = {"command": command, "version": __version__, "config_sha256": self.cfg.sha256,
               "seed": self.seed, "status": status, "config": self.cfg.as_dict(), "results": results}
        text = json.dumps(_plain(rep), indent=2, sort_keys=True)
        # 17 significant digits for every float literal
        (self.out / "report.json").write_text(_reformat_floats(text) + "\n")
        (self.out / "config.canonical.json").write_text(emit_config(self.cfg))


def _reformat_floats(text):
    obj = json.loads(text)

    def enc(o, ind=0):
        pad = "  " * (ind + 1)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f'{pad}{json.dumps(k)}: {enc(v, ind + 1)}' for k, v in sorted(o.items())]
            return "{\n" + ",\n".join(items) + "\n" + "  " * ind + "}"
        if isinstance(o, list):
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(enc(v, ind) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, ind + 1) for v in o) + "\n" + "  " * ind + "]"
        if isinstance(o, float):
            return f"{o:.17g}" if "e" in f"{o:.17g}" or "." in f"{o:.17g}" else f"{o:.17g}.0"
        return json.dumps(o)

    return enc(obj)


# --------------------------------------------------------------------------
# commands


def cmd_domain(run: _Run):
    model = run.cfg.build_model()
    cert = nonemptiness_report(model)
    res = {"model": model.name, "d": model.d, "controls": list(model.controls),
           "verdict": cert.verdict, "lp_feasible": cert.lp_feasible, "lp_strict": cert.lp_strict,
           "max_slack": cert.max_slack, "mu_cbar": cert.mu_cbar, "pair_mins": cert.pair_mins,
           "chat_pair_min": cert.chat_pair_min, "mu_chat": cert.mu_chat,
           "triangle_ok": cert.triangle_ok, "agreement": cert.agreement,
           "strict_agreement": cert.strict_agreement, "notes": cert.notes}
    per = []
    for u in range(model.n_controls):
        if irreducible(model.P[u]):
            a = analyze_chain(model.P[u], model.cbar[u])
            per.append({"control": model.controls[u], "mu": a.mu, "mu_tilde": a.mu_tilde, "C": a.C,
                        "Cbar_diag": a.Cbar_diag, "mean_cost": a.mean_cost})
        else:
            per.append({"control": model.controls[u], "reducible": True})
    if model.n_controls <= 8:
        res["per_control"] = per
    Cs = [p["C"] for p in per if "C" in p]
    if len(Cs) == model.n_controls:
        res["Chat"] = np.min(np.stack(Cs), axis=0)
    if model.is_uncontrolled and cert.has_interior:
        res["slice_vertices"] = slice_vertices(model)
    run.write_report("domain", res)
    run.say(f"model {model.name}: d={model.d}, {model.n_controls} control(s)")
    run.say(f"verdict: {cert.verdict} (max uniform slack {_fmt(cert.max_slack)})")
    if cert.markov_available:
        run.say(f"mu*cbar per control: {_fmt(cert.mu_cbar)}")
        run.say(f"min pair sum C_ij + C_ji per control: {_fmt(cert.pair_mins)}")
        if cert.chat_pair_min is not None and model.n_controls > 1:
            run.say(f"min pair sum of Chat: {_fmt(cert.chat_pair_min)}")
        if cert.mu_chat is not None:
            run.say(f"mu*chat (cheapest cost per mode): {_fmt(cert.mu_chat)}")
    for note in cert.notes:
        run.say(f"note: {note}")
    if "slice_vertices" in res:
        for j, v in enumerate(res["slice_vertices"]):
            run.say(f"vertex {j + 1}: {_fmt(v)}")
    return 0


def cmd_build_h(run: _Run):
    from . import reflection as R

    construction = run.args.construction
    n = int(run.cfg.run["sample_count"])
    seed = run.seed
    res = {"construction": construction}
    if construction == "dim4-counterexample":
        w = R.dim4_counterexample()
        res.update({"P": w.P, "normals": w.normals, "H": w.H, "v": w.v, "vHv": w.vHv, "alpha": w.alpha,
                    "irreducible": w.irreducible})
        run.write_report("build-h", res)
        run.say(f"dimension-4 witness: v = {_fmt(w.v)}")
        run.say(f"v'Hv = {w.vHv:.3g} (no coercive H exists at this vertex)")
        return 0
    model = run.cfg.build_model()
    if construction == "markovian":
        field = R.build_H_markovian(model, sample_count=n, seed=seed)
    elif construction == "dim3":
        if model.d != 3 or not model.is_uncontrolled:
            raise ConfigError("model: dim3 construction needs an uncontrolled 3-mode model")
        P = model.P[0]
        field = R.build_H_dim3(P[0, 1], P[1, 0], P[2, 0], model.cbar[0], sample_count=n, seed=seed)
    elif construction == "symmetric":
        field = R.build_H_symmetric(model.d, cost=float(model.cbar[0, 0]), sample_count=n, seed=seed)
        Hd = field.vertex_matrices[-1]
        d, a = model.d, 2.0
        res["closed_form"] = {
            "det": float((a - 2 * (d - 1) / d) * (d - 1) * ((d - 1) / d) ** (d - 2)),
            "det_computed": float(np.linalg.det(Hd)),
            "trace": d * a - 2 * (d - 1) / d, "trace_computed": float(np.trace(Hd))}
        run.say(f"det H(y^d) = {_fmt(res['closed_form']['det_computed'])} "
                f"(closed form {_fmt(res['closed_form']['det'])})")
        run.say(f"trace H(y^d) = {_fmt(res['closed_form']['trace_computed'])} "
                f"(closed form {_fmt(res['closed_form']['trace'])})")
    elif construction == "controlled-dim3":
        rec = R.build_H_controlled_dim3_vertices()
        field = rec.field
        res["identity_residuals"] = rec.identity_residuals
    else:
        raise ConfigError(f"--construction: unknown {construction!r}")
    cert = field.certificate
    res["field"] = field.to_record()
    run.write_report("build-h", res, status="pass" if cert.passed else "fail")
    run.say(f"{field.construction}: {cert}")
    for f in cert.failures[:5]:
        run.say(f"  {f}")
    return 0 if cert.passed else 3


def cmd_solve(run: _Run):
    from .solver import refine_and_extrapolate, solve

    cfg = run.cfg
    model = cfg.build_model()
    lattice = cfg.build_lattice()
    driver = cfg.build_driver(model.d)
    y0 = cfg.model.get("y0")
    if y0 is None and model.c_hat <= 0:
        y0 = "lp"
    sol = solve(model, lattice, driver, y0=y0)
    meta = {"config_sha256": cfg.sha256, "seed": run.seed}
    sol.to_csv(run.out / "solution.csv", meta=meta)
    res = {"root_value": sol.root_value(), "diagnostics": sol.diagnostics, "steps": lattice.steps,
           "M": lattice.M, "mode": lattice.mode}
    run.say(f"Y(0, x0) = {_fmt(sol.root_value())}")
    run.say(f"membership defect {sol.diagnostics['membership_defect']:.3g}, "
            f"Skorokhod defect {sol.diagnostics['skorokhod_defect']:.3g}")
    k = run.args.refine
    if k:
        if k < 3:
            raise ConfigError("--refine needs at least 3 resolutions")
        from .lattice import build_lattice

        lats = []
        for j in range(k):
            lat = cfg.lattice
            lats.append(build_lattice(cfg.build_sde(), float(lat["T"]), int(lat["steps"]) * 2 ** j,
                                      mode=lat["mode"], coverage=float(lat["coverage"])))
        table = refine_and_extrapolate(model, lats, driver, y0=y0)
        res["refinement"] = {"rows": table.rows(), "monotone": table.monotone,
                             "extrapolated": table.extrapolated}
        for row in table.rows():
            run.say(f"steps {row['steps']}: {row['status']} root {_fmt(row['root_value'])} "
                    f"diff {_fmt(row['difference']) if row['difference'] is not None else '-'} "
                    f"order {_fmt(row['order']) if row['order'] is not None else '-'}")
        if not table.monotone:
            run.say("differences not monotone: no extrapolation")
    run.write_report("solve", res)
    return 0


def cmd_verify(run: _Run):
    from .oracle import dp_oracle, exhaustive_tree_value
    from .simulator import evaluate_strategy, never_switch, verify_representation
    from .solver import solve

    cfg = run.cfg
    model = cfg.build_model()
    if model.closed_form is not None:
        model = model.grid_only()
    lattice = cfg.build_lattice()
    driver = cfg.build_driver(model.d)
    if not driver.yz_free:
        raise CapabilityError("verify needs a driver without y/z terms (ky, kz must be zero)")
    y0 = cfg.model.get("y0")
    if y0 is None and model.c_hat <= 0:
        y0 = "lp"
    sol = solve(model, lattice, driver, y0=y0)
    threads = int(os.environ.get("OBLIQUE_SWITCH_THREADS", "1") or 1)
    rep = verify_representation(model, driver, lattice, sol, n_paths=int(cfg.run["paths"]), seed=run.seed,
                                n_baselines=int(cfg.run["baselines"]), threads=threads)
    V = dp_oracle(model, driver, lattice)
    dp_gap = float(np.abs(V - sol.Y).max())
    res = {"modes": rep.modes, "baselines": rep.baselines, "dp_oracle_gap": dp_gap,
           "root_value": sol.root_value()}
    passed = rep.passed and dp_gap <= 1e-8
    never = []
    for i in range(model.d):
        est = evaluate_strategy(model, never_switch(), lattice, driver, i, int(cfg.run["paths"]), run.seed)
        Yi = float(sol.root_value()[i])
        never.append({"mode": i, "estimate": est.mean, "se": est.se, "Y": Yi,
                      "below_by_se": (Yi - est.mean) / est.se if est.se > 0 else None})
    res["never_switch"] = never
    if cfg.run.get("exhaustive"):
        if lattice.M > 7 or lattice.steps > 3:
            raise CapabilityError("exhaustive tree search is limited to steps <= 3 and at most 7 grid points")
        tree = []
        for i in range(model.d):
            v, nodes = exhaustive_tree_value(model, driver, lattice, i, int(cfg.run["switch_cap"]))
            tree.append({"mode": i, "tree_value": v, "lattice_value": float(sol.root_value()[i]),
                         "gap": abs(v - float(sol.root_value()[i])), "nodes": nodes})
        res["exhaustive"] = tree
        passed = passed and all(t["gap"] <= 1e-10 for t in tree)
    run.write_report("verify", res, status="pass" if passed else "fail")
    for line in rep.lines():
        run.say(line)
    run.say(f"dp oracle sup gap {dp_gap:.3g}")
    for nv in never:
        b = nv["below_by_se"]
        run.say(f"never-switch from mode {nv['mode'] + 1}: {_fmt(nv['estimate'])} "
                f"({_fmt(b) if b is not None else '-'} SE below Y)")
    for t in res.get("exhaustive", []):
        run.say(f"tree search mode {t['mode'] + 1}: {_fmt(t['tree_value'])} vs lattice "
                f"{_fmt(t['lattice_value'])} (gap {t['gap']:.3g})")
    run.say("ALL PASS" if passed else "FAILED")
    return 0 if passed else 1


def cmd_polygon(run: _Run):
    model = run.cfg.build_model()
    res_pts = run.args.resolution or int(run.cfg.run["resolution"])
    pts = emit_slice_polygon(model, resolution=res_pts)
    slack = np.array([membership(p, model)[1] for p in pts])
    path = run.out / "polygon.csv"
    with open(path, "w") as fh:
        fh.write(f"# model: {model.name}\n# config_sha256: {run.cfg.sha256}\n")
        fh.write("index,y1,y2,y3,slack\n")
        for n, (p, s) in enumerate(zip(pts, slack)):
            fh.write(f"{n},{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},{s:.17g}\n")
    run.write_report("polygon", {"points": pts, "slack": slack, "n_points": len(pts)})
    run.say(f"{model.name}: {len(pts)} boundary points, min slack {slack.min():.3g} -> {path}")
    return 0


COMMANDS = {"domain": cmd_domain, "build-h": cmd_build_h, "solve": cmd_solve,
            "verify": cmd_verify, "polygon": cmd_polygon}


def build_parser():
    p = argparse.ArgumentParser(prog="oblique-switch", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON problem file")
    p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--construction", choices=CONSTRUCTIONS, default="markovian")
    p.add_argument("--refine", type=int, default=0, help="number of lattice resolutions (doubling steps)")
    p.add_argument("--resolution", type=int, default=None, help="polygon trace directions")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run = _Run(args)
        return COMMANDS[args.command](run)
    except ObliqueSwitchError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        if getattr(exc, "witness", None) is not None:
            print(f"witness: {_fmt(exc.witness)}", file=sys.stderr)
        if getattr(exc, "max_dt", None) is not None:
            print(f"max admissible dt: {exc.max_dt:.6g}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
