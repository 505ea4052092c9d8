"""Command-line interface: bound, verify, design, simulate, report.

Exit codes are stable across commands: 0 success, 1 verified-negative
(certificate FAIL or excessive divergence), 2 infeasible, 3 input error.
Reports are single JSON documents that embed the inputs they were computed
from, so every recorded margin and bound can be reproduced from the report
alone.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .bounds import (
    EmulationConstants,
    GainConstants,
    TwoFunctionConstants,
    check_condition_iii,
    dta_bound,
    emulation_bound_single,
    emulation_bound_two,
    htau_generic,
    single_v_curve,
    solve_qhat_star,
    two_v_curve,
)
from .design import DesignOptions, synthesize_feedback, synthesize_nonlinear_planar
from .errors import (
    DegenerateEnsemble,
    DomainError,
    FormatError,
    InfeasibleError,
    NumericalFailure,
    ToolkitError,
    ValidationError,
)
from .lmi import LmiCertificate, load_certificate, save_certificate, verify_certificate
from .models import (
    NonlinearPlanarModel,
    SamplingSchedule,
    load_model,
    model_from_dict,
    model_to_dict,
)
from .sim import (
    SimConfig,
    estimate_as_exponent,
    estimate_ms_decay,
    export_ensemble_stats_csv,
    export_trajectories_csv,
    run_ensemble,
)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with the input-error exit code."""

    def error(self, message):
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _report_skeleton(command, args_list) -> dict:
    return {
        "tool": "sdstab",
        "version": __version__,
        "command": [command] + list(args_list),
        "inputs": {},
        "results": {},
        "wall_time_s": None,
    }


def _emit_report(report: dict, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")


def _print_kv(key: str, value) -> None:
    if isinstance(value, float):
        print(f"{key} = {value:.10g}")
    else:
        print(f"{key} = {value}")


# ---------------------------------------------------------------------------
# bound
# ---------------------------------------------------------------------------

def _load_constants_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read constants file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("constants file must hold a JSON object")
    return doc


def _flag(args, doc, name, default=None):
    v = getattr(args, name, None)
    if v is None:
        v = doc.get(name, default)
    if v is None:
        raise FormatError(f"missing constant {name!r} (flag --{name.replace('_', '-')})")
    return float(v)


def cmd_bound(args, argv) -> int:
    report = _report_skeleton("bound", argv)
    doc = _load_constants_file(args.constants) if args.constants else {}
    t0 = time.perf_counter()
    if args.mode == "generic":
        g = GainConstants(
            alpha1=_flag(args, doc, "alpha1"),
            alpha2=_flag(args, doc, "alpha2", 0.0),
            alphat1=_flag(args, doc, "alphat1", 0.0),
            alphat2=_flag(args, doc, "alphat2"),
            beta1=_flag(args, doc, "beta1", 0.0),
            beta2=_flag(args, doc, "beta2", 0.0),
            beta3=_flag(args, doc, "beta3", 0.0),
        )
        if args.q is not None:
            cond = check_condition_iii(g)
            if not cond.ok:
                raise InfeasibleError(f"condition value {cond.value:.6g} >= 1")
            res_tau = htau_generic(args.q, g)
            result = {"tau_max": res_tau, "q_star": args.q, "provenance": "generic-at-q"}
        else:
            res = solve_qhat_star(g)
            result = {"tau_max": res.tau_max, "q_star": res.q_star, "provenance": res.provenance,
                      "auxiliary": _plain(res.auxiliary)}
        report["results"]["constants"] = {
            "alpha1": g.alpha1, "alpha2": g.alpha2, "alphat1": g.alphat1, "alphat2": g.alphat2,
            "beta1": g.beta1, "beta2": g.beta2, "beta3": g.beta3,
        }
    elif args.mode == "single-v":
        c = EmulationConstants(
            alpha_bar=_flag(args, doc, "alpha"),
            alpha_b=_flag(args, doc, "alpha_b"),
            alpha_f=_flag(args, doc, "alpha_f"),
        )
        res = emulation_bound_single(c)
        result = {"tau_max": res.tau_max, "q_star": res.q_star, "provenance": res.provenance,
                  "auxiliary": _plain(res.auxiliary)}
        report["results"]["constants"] = {"alpha": c.alpha_bar, "alpha_b": c.alpha_b, "alpha_f": c.alpha_f}
    elif args.mode == "two-v":
        c = TwoFunctionConstants(
            alpha_bar=_flag(args, doc, "alpha"),
            alpha_b=_flag(args, doc, "alpha_b"),
            gamma1=_flag(args, doc, "gamma1"),
            gamma2=_flag(args, doc, "gamma2"),
        )
        res = emulation_bound_two(c)
        result = {"tau_max": res.tau_max, "q_star": res.q_star, "provenance": res.provenance}
        report["results"]["constants"] = {
            "alpha": c.alpha_bar, "alpha_b": c.alpha_b, "gamma1": c.gamma1, "gamma2": c.gamma2,
        }
    else:  # dta
        res = dta_bound(
            c_bar=_flag(args, doc, "c_bar"),
            h=_flag(args, doc, "h"),
            alpha_u=_flag(args, doc, "alpha_u"),
            alpha_b=_flag(args, doc, "alpha_b"),
            alpha_f=_flag(args, doc, "alpha_f"),
        )
        result = {"tau_max": res.tau_max, "q_star": res.q_star, "provenance": res.provenance,
                  "auxiliary": _plain(res.auxiliary)}
        report["results"]["constants"] = {
            k: result["auxiliary"][k] for k in ("alpha_bar", "c_bar", "h", "alpha_u")
        }
    report["results"].update(result)
    report["results"]["mode"] = args.mode
    report["wall_time_s"] = time.perf_counter() - t0
    _print_kv("tau_max", result["tau_max"])
    _print_kv("q_star", result["q_star"])
    for key in ("b1_star", "b2_star", "r_star"):
        aux = result.get("auxiliary", {})
        if key in aux:
            _print_kv(key, aux[key])
    _emit_report(report, args.out)
    return EXIT_OK


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args, argv) -> int:
    report = _report_skeleton("verify", argv)
    model = load_model(args.model)
    cert = load_certificate(args.cert)
    report["inputs"] = {
        "model": {"path": str(args.model), "sha256": _sha256(args.model)},
        "cert": {"path": str(args.cert), "sha256": _sha256(args.cert)},
    }
    t0 = time.perf_counter()
    outcome = verify_certificate(model, cert, tol=args.tol)
    report["results"] = {
        "form": outcome.form,
        "tol": outcome.tol,
        "margins": outcome.margins,
        "scales": outcome.scales,
        "passed": outcome.passed,
        "implies_almost_sure": outcome.implies_almost_sure,
        "tau_max": outcome.tau_max,
        "q_star": outcome.q_star,
        "model": model_to_dict(model),
        "certificate": cert.to_dict(),
    }
    report["wall_time_s"] = time.perf_counter() - t0
    for name, margin in outcome.margins.items():
        print(f"margin[{name}] = {margin:.6e}  (scale {outcome.scales[name]:.3e})")
    print("PASS" if outcome.passed else "FAIL")
    if outcome.passed and outcome.tau_max is not None:
        _print_kv("tau_max", outcome.tau_max)
        print("stability: mean-square exponential; almost-sure exponential (implied)")
    _emit_report(report, args.out)
    return EXIT_OK if outcome.passed else EXIT_NEGATIVE


def reverify_report(report: dict) -> dict:
    """Recompute the margins recorded in a verify report from its own payload."""
    res = report.get("results", {})
    model = model_from_dict(res["model"])
    cert = LmiCertificate.from_dict(res["certificate"])
    outcome = verify_certificate(model, cert, tol=res.get("tol", 1e-2))
    return outcome.margins


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------

def _parse_c_tilde(text: Optional[str]):
    if text is None:
        return 1.0
    if text == "free":
        return None
    if text.startswith("sweep:"):
        return [float(v) for v in text[len("sweep:"):].split(",") if v]
    return float(text)


def cmd_design(args, argv) -> int:
    report = _report_skeleton("design", argv)
    model = load_model(args.model)
    report["inputs"] = {"model": {"path": str(args.model), "sha256": _sha256(args.model)}}
    options = DesignOptions(
        c_tilde=_parse_c_tilde(args.c_tilde),
        alpha_fraction=args.alpha_fraction,
        seed=args.seed,
    )
    t0 = time.perf_counter()
    if isinstance(model, NonlinearPlanarModel):
        result = synthesize_nonlinear_planar(options, model=model)
    else:
        result = synthesize_feedback(model, options)
    report["results"] = {
        "gain": result.gain.tolist(),
        "gain_norm": float(np.linalg.norm(result.gain)),
        "tau_max": result.bound.tau_max,
        "q_star": result.bound.q_star,
        "constants": {
            "alpha": result.constants.alpha_bar,
            "alpha_b": result.constants.alpha_b,
            "gamma1": result.constants.gamma1,
            "gamma2": result.constants.gamma2,
        },
        "trace": _plain(result.trace),
        "model": model_to_dict(model),
        "certificate": result.certificate.to_dict(),
    }
    report["wall_time_s"] = time.perf_counter() - t0
    _print_kv("tau_max", result.bound.tau_max)
    _print_kv("gain_norm", float(np.linalg.norm(result.gain)))
    print(f"K_hat = {result.gain.tolist()}")
    if "c_tilde" in result.trace:
        _print_kv("c_tilde", result.trace["c_tilde"])
    if args.cert_out:
        save_certificate(result.certificate, args.cert_out)
        print(f"certificate written to {args.cert_out}")
    _emit_report(report, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args, argv) -> int:
    report = _report_skeleton("simulate", argv)
    model = load_model(args.model)
    report["inputs"] = {"model": {"path": str(args.model), "sha256": _sha256(args.model)}}
    if args.cert:
        cert = load_certificate(args.cert)
        report["inputs"]["cert"] = {"path": str(args.cert), "sha256": _sha256(args.cert)}
        if model.design_mode:
            if cert.K_hat is not None:
                model = model.with_gain(cert.K_hat)
            elif cert.Q is not None and cert.Y is not None:
                model = model.with_gain(cert.Y @ np.linalg.inv(cert.Q))
    if model.B_bar is None:
        raise ValidationError("model gain unresolved; pass --cert with K_hat or Q/Y")
    schedule = SamplingSchedule.parse(args.schedule)
    dt_sim = args.dt_sim if args.dt_sim is not None else schedule.underline_dt / 10.0
    x0 = None if args.x0 is None else np.array([float(v) for v in args.x0.split(",")])
    cfg = SimConfig(
        schedule=schedule,
        horizon=args.horizon,
        dt_sim=dt_sim,
        n_paths=args.paths,
        seed=args.seed,
        store_stride=args.store_stride,
        x0=x0,
    )
    t0 = time.perf_counter()
    ens = run_ensemble(model, cfg, workers=args.workers)
    frac_diverged = ens.n_diverged / ens.n_paths
    terminal = float(ens.mean_sq()[-1])
    results = {
        "n_paths": ens.n_paths,
        "n_diverged": ens.n_diverged,
        "schedule": args.schedule,
        "horizon": args.horizon,
        "dt_sim": dt_sim,
        "seed": args.seed,
        "terminal_mean_sq": None if np.isnan(terminal) else terminal,
    }
    try:
        decay = estimate_ms_decay(ens)
        results["ms_decay"] = {
            "rate": decay.rate, "intercept": decay.intercept,
            "r_squared": decay.r_squared, "window": list(decay.window),
        }
        _print_kv("ms_decay_rate", decay.rate)
        _print_kv("ms_decay_r_squared", decay.r_squared)
    except DegenerateEnsemble as exc:
        results["ms_decay"] = None
        print(f"note: mean-square decay estimate unavailable ({exc})")
    try:
        expo = estimate_as_exponent(ens)
        results["as_exponent"] = {
            "median": expo.median, "max": expo.max,
            "t_used": expo.t_used, "n_zero": expo.n_zero,
        }
        _print_kv("as_exponent_median", expo.median)
    except (DegenerateEnsemble, DomainError) as exc:
        results["as_exponent"] = None
        print(f"note: pathwise exponent estimate unavailable ({exc})")
    report["results"] = results
    report["wall_time_s"] = time.perf_counter() - t0
    if args.traj_out:
        export_trajectories_csv(ens, args.traj_out)
        print(f"trajectories written to {args.traj_out}")
    if args.stats_out:
        export_ensemble_stats_csv(ens, args.stats_out)
        print(f"ensemble stats written to {args.stats_out}")
    _print_kv("diverged_fraction", frac_diverged)
    _emit_report(report, args.out)
    if frac_diverged > 0.5:
        print("FAIL: more than half of the paths diverged")
        return EXIT_NEGATIVE
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _curve_points(results: dict, n: int = 200):
    """tau(q) curve samples for a bound-style result, over the admissible interval."""
    mode = results.get("mode")
    cs = results.get("constants", {})
    qs = np.linspace(1e-4, 1.0 - 1e-4, n)
    if mode == "two-v":
        c = TwoFunctionConstants(cs["alpha"], cs["alpha_b"], cs["gamma1"], cs["gamma2"])
        return [(float(q), two_v_curve(float(q), c)) for q in qs]
    if mode == "single-v":
        c = EmulationConstants(cs["alpha"], cs["alpha_b"], cs["alpha_f"])
        q_star = results["q_star"]
        return [(float(q), single_v_curve(float(q), c, q_star)) for q in qs]
    if mode == "generic":
        g = GainConstants(
            alpha1=cs["alpha1"], alpha2=cs["alpha2"],
            alphat1=cs["alphat1"], alphat2=cs["alphat2"],
            beta1=cs.get("beta1", 0.0), beta2=cs.get("beta2", 0.0), beta3=cs.get("beta3", 0.0),
        )
        lo = max(check_condition_iii(g).value, 1e-4)
        qs = np.linspace(lo + 1e-6, 1.0 - 1e-4, n)
        return [(float(q), htau_generic(float(q), g)) for q in qs]
    return None


def cmd_report(args, argv) -> int:
    if not args.reports:
        print("error: no report files given", file=sys.stderr)
        return EXIT_INPUT
    rows = []
    curve_rows = []
    for path in args.reports:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                rep = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read report {path}: {exc}") from exc
        if rep.get("version") != __version__:
            print(f"warning: report {path} from version {rep.get('version')}", file=sys.stderr)
        res = rep.get("results", {})
        cmd = (rep.get("command") or ["?"])[0]
        name = res.get("model", {}).get("name") if isinstance(res.get("model"), dict) else None
        gain = res.get("gain")
        rows.append({
            "report": str(path),
            "command": cmd,
            "model": name or "-",
            "tau_max": res.get("tau_max"),
            "gain_norm": res.get("gain_norm"),
            "ms_decay_rate": (res.get("ms_decay") or {}).get("rate") if res.get("ms_decay") else None,
            "passed": res.get("passed"),
        })
        if cmd == "bound":
            pts = _curve_points(res)
            if pts:
                for q, tau in pts:
                    curve_rows.append((str(path), q, tau))
        _ = gain
    header = f"{'command':10s} {'model':20s} {'tau_max':>12s} {'|K|':>10s} {'decay':>10s} {'passed':>7s}"
    print(header)
    for r in rows:
        tau = "-" if r["tau_max"] is None else f"{r['tau_max']:.6g}"
        gn = "-" if r["gain_norm"] is None else f"{r['gain_norm']:.4g}"
        dr = "-" if r["ms_decay_rate"] is None else f"{r['ms_decay_rate']:.4g}"
        ps = "-" if r["passed"] is None else str(r["passed"])
        print(f"{r['command']:10s} {r['model'][:20]:20s} {tau:>12s} {gn:>10s} {dr:>10s} {ps:>7s}")
    if args.curve_out and curve_rows:
        with open(args.curve_out, "w", encoding="utf-8") as fh:
            fh.write("report,q,tau\n")
            for path, q, tau in curve_rows:
                fh.write(f"{path},{q!r},{tau!r}\n")
        print(f"curve samples written to {args.curve_out}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            if args.format == "csv":
                fh.write("report,command,model,tau_max,gain_norm,ms_decay_rate,passed\n")
                for r in rows:
                    cells = [r["report"], r["command"], r["model"]]
                    cells += ["" if r[k] is None else repr(r[k])
                              for k in ("tau_max", "gain_norm", "ms_decay_rate", "passed")]
                    fh.write(",".join(str(c) for c in cells) + "\n")
            else:
                json.dump({"rows": rows}, fh, indent=2)
                fh.write("\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sdstab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sdstab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("bound", help="compute a maximum allowable sampling interval")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--generic", dest="mode", action="store_const", const="generic")
    mode.add_argument("--single-v", dest="mode", action="store_const", const="single-v")
    mode.add_argument("--two-v", dest="mode", action="store_const", const="two-v")
    mode.add_argument("--dta", dest="mode", action="store_const", const="dta")
    p.add_argument("--constants", help="JSON file of named constants")
    for flag in ("alpha", "alpha-b", "alpha-f", "alpha1", "alpha2", "alphat1", "alphat2",
                 "beta1", "beta2", "beta3", "gamma1", "gamma2", "c-bar", "h", "alpha-u", "q"):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=float, default=None)
    p.add_argument("--out", help="write a JSON run report here")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("verify", help="verify a certificate against a model")
    p.add_argument("--model", required=True)
    p.add_argument("--cert", required=True)
    p.add_argument("--tol", type=float, default=1e-2, help="relative margin tolerance")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("design", help="synthesize a state-feedback gain")
    p.add_argument("--model", required=True)
    p.add_argument("--c-tilde", dest="c_tilde", default=None,
                   help="number, 'free', or 'sweep:v1,v2,...'")
    p.add_argument("--alpha-fraction", dest="alpha_fraction", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cert-out", dest="cert_out", help="write the certificate here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", help="Monte Carlo simulation of the closed loop")
    p.add_argument("--model", required=True)
    p.add_argument("--cert", help="certificate supplying the gain when the model lacks one")
    p.add_argument("--schedule", required=True, help="periodic:dt | uniform:lo,hi | explicit:t1,...")
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--paths", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt-sim", dest="dt_sim", type=float, default=None)
    p.add_argument("--store-stride", dest="store_stride", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--x0", help="comma-separated initial state, overrides the model")
    p.add_argument("--traj-out", dest="traj_out", help="trajectory CSV path")
    p.add_argument("--stats-out", dest="stats_out", help="ensemble stats CSV path")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="merge run reports into a summary table")
    p.add_argument("reports", nargs="*")
    p.add_argument("--curve-out", dest="curve_out", help="tau(q) curve CSV for bound reports")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="format of the merged summary written to --out")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except (FormatError, ValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalFailure, ToolkitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE


if __name__ == "__main__":
    sys.exit(main())
