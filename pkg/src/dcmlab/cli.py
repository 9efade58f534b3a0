"""``dcmlab`` command line: build, evolve, analyse, dress and plot lattices.

Every lattice-producing command prints an audit line.  Exit codes: 0 ok,
1 invalid input, 2 numeric failure; errors are reported as JSON on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import AuditFailed, DcmError, InputError, NonGeneric
from .lattice import (
    AUDIT_TOL,
    DcmLattice,
    DiscreteCurve,
    SiteStatus,
    Window,
    audit_cross_ratios,
    conformal_flow,
    vacuum_lattice,
)

DEFAULT_WINDOW = "0:9,0:9"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _complex(v, name="value") -> complex:
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", "").replace("i", "j"))
        except ValueError as exc:
            raise InputError(f"{name}: cannot parse {v!r} as a complex number") from exc
    if isinstance(v, (int, float, complex)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    raise InputError(f"{name}: expected a number, a string or [re, im]")


def _lambda_arg(text: str):
    if text.strip().lower() in ("inf", "infinity"):
        return "inf"
    parts = text.split(",")
    try:
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
        if len(parts) == 1:
            return complex(float(parts[0]))
    except ValueError:
        pass
    raise InputError(f"--lambda expects RE,IM; got {text!r}")


def _tolerance(args) -> float:
    if args.tol is not None:
        return args.tol
    env = os.environ.get("DCMLAB_TOL")
    if env:
        try:
            return float(env)
        except ValueError as exc:
            raise InputError(f"DCMLAB_TOL={env!r} is not a number") from exc
    return AUDIT_TOL


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def _params(args) -> dict:
    return _read_json(args.params) if args.params else {}


def _window(args, default=DEFAULT_WINDOW) -> Window:
    return Window.parse(args.window or default)


def _load_lattice(args) -> DcmLattice:
    if not args.input:
        raise InputError("this command needs --input LATTICE.json")
    return DcmLattice.from_json_dict(_read_json(args.input))


def _write(path, text: str):
    Path(path).write_text(text)


def _emit_lattice(L: DcmLattice, args, tol: float) -> int:
    report = audit_cross_ratios(L, tol)
    collapsed = int((L.status == SiteStatus.COLLAPSED).sum())
    print(f"{report.summary()} collapsed={collapsed}")
    if args.out:
        _write(args.out, L.to_json())
    if args.svg:
        from .plot import plot_svg
        _write(args.svg, plot_svg(L))
    if not report.passed:
        raise AuditFailed(f"max relative deviation {report.max_rel_deviation:.3e} exceeds {tol:.1e}")
    return 0


def _emit_json(obj: dict, args):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if args.out:
        _write(args.out, text)
    else:
        print(text)


# ---- commands ----------------------------------------------------------

def cmd_generate_vacuum(args, tol):
    p = _params(args)
    L = vacuum_lattice(_complex(p.get("alpha", 1.0), "alpha"), _complex(p.get("beta", 1j), "beta"),
                       _window(args))
    return _emit_lattice(L, args, tol)


def cmd_generate_soliton(args, tol):
    from .soliton import NodalParams, generate, periodicity_solver

    p = _params(args)
    if "solve" in p:
        s = p["solve"]
        eps = s.get("eps")
        sols = periodicity_solver(int(s["n"]), int(s.get("nodes", 0)),
                                  None if s.get("q") is None else _complex(s["q"], "q"),
                                  _complex(s.get("a", 1.0), "a"),
                                  None if eps in (None, "inf") else _complex(eps, "eps"),
                                  s.get("phases"))
        params = sols[int(s.get("choice", 0)) % len(sols)]
    else:
        params = NodalParams.from_json_dict(p)
    return _emit_lattice(generate(params, _window(args)), args, tol)


def _curve_from(p, args) -> DiscreteCurve:
    if "curve" in p:
        return DiscreteCurve.from_affine([_complex(z, "curve") for z in p["curve"]])
    if "n" in p:
        from .spectral import random_curve
        return random_curve(int(p["n"]), np.random.default_rng(args.seed))
    raise InputError('params need "curve": [[re, im], ...] or "n" with --seed')


def cmd_evolve(args, tol):
    p = _params(args)
    curve = _curve_from(p, args)
    q = _complex(p.get("q", -1.0), "q")
    L = conformal_flow(curve, q, int(p.get("steps_up", 8)), int(p.get("steps_down", 0)),
                       branch_policy=args.branch, initial=int(p.get("initial", 0)))
    return _emit_lattice(L, args, tol)


def cmd_spectral(args, tol):
    from .spectral import spectral_data

    p = _params(args)
    curve = _curve_from(p, args)
    q = _complex(p["q"], "q") if "q" in p else None
    z01 = _complex(p["z01"], "z01") if "z01" in p else None
    sd = spectral_data(curve, q, z01)
    _emit_json(sd.to_json_dict(), args)
    if not sd.is_generic and not p.get("allow_nongeneric", False):
        raise NonGeneric(f"curve is not generic: {sd.generic}")
    return 0


def cmd_theta(args, tol):
    from .soliton import NodalParams
    from .theta import PeriodData, dcm_from_theta, period_data_from_nodal

    p = _params(args)
    q = None
    if "schema" in p:
        pd = PeriodData.from_json_dict(p)
        q = _complex(p["q"], "q") if "q" in p else None
    else:
        nodal = NodalParams.from_json_dict(p)
        pd, q = period_data_from_nodal(nodal), nodal.q
    if q is None:
        raise InputError("theta needs the cross-ratio: add \"q\" to the period data")
    return _emit_lattice(dcm_from_theta(pd, _window(args), q), args, tol)


def _lax_params(p):
    from .dressing import LaxParams

    if "alpha" in p and "beta" in p:
        return LaxParams(_complex(p["alpha"], "alpha"), _complex(p["beta"], "beta"),
                         float(p.get("radius", 1.0)))
    if "q" in p:
        return LaxParams.for_q(_complex(p["q"], "q"), _complex(p.get("alpha", 0.3), "alpha"))
    raise InputError('params need "alpha" and "beta" (or "q")')


def cmd_dress(args, tol):
    from .dressing import Loop, based_at_zero, dress, extended_frame, family_map

    p = _params(args)
    lp = _lax_params(p)
    if args.input:
        L = based_at_zero(_load_lattice(args))
    else:
        L = vacuum_lattice(lp.alpha, lp.beta, _window(args, "-4:4,-4:4"))
    frame = extended_frame(L, lp)
    out = L
    if "g" in p:
        res = dress(frame, Loop.from_json_dict(p["g"]), method=p.get("method", "recursive"))
        out, frame = res.lattice, res.frame
        if res.failed:
            print(f"dress: {len(res.failed)} site(s) outside the big cell left unset")
    if args.lam is not None:
        if frame is None:
            raise InputError("cannot deform: the dressed lattice has unset sites")
        out = family_map(frame, args.lam)
    return _emit_lattice(out, args, tol)


def cmd_cubic(args, tol):
    from .dressing import FiniteTypeW, baker_quotient_map, cubic_lattice

    p = _params(args)
    lp = _lax_params(p) if p else _lax_params({"alpha": 1.0, "beta": 2.0})
    w = _window(args, "-5:5,-5:5")
    if p.get("method", "closed") == "baker":
        L = baker_quotient_map(FiniteTypeW.cubic(), lp, w)
    else:
        L = cubic_lattice(lp, w)
    return _emit_lattice(L, args, tol)


def cmd_audit(args, tol):
    L = _load_lattice(args)
    report = audit_cross_ratios(L, tol)
    collapsed = int((L.status == SiteStatus.COLLAPSED).sum())
    print(f"{report.summary()} collapsed={collapsed}")
    if args.out:
        _write(args.out, json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if not report.passed:
        raise AuditFailed(f"max relative deviation {report.max_rel_deviation:.3e} exceeds {tol:.1e}")
    return 0


def cmd_plot(args, tol):
    from .plot import plot_svg

    L = _load_lattice(args)
    target = args.svg or args.out
    if not target:
        raise InputError("plot needs --svg FILE (or --out FILE)")
    _write(target, plot_svg(L))
    return 0


COMMANDS = {
    "generate-vacuum": cmd_generate_vacuum,
    "generate-soliton": cmd_generate_soliton,
    "evolve": cmd_evolve,
    "spectral": cmd_spectral,
    "theta": cmd_theta,
    "dress": cmd_dress,
    "cubic": cmd_cubic,
    "audit": cmd_audit,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dcmlab", description="Discrete conformal map toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--params", metavar="FILE", help="JSON parameter file")
        sp.add_argument("--input", metavar="FILE", help="input lattice JSON")
        sp.add_argument("--out", metavar="FILE", help="output file")
        sp.add_argument("--window", metavar="K0:K1,M0:M1", help="inclusive index window")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=None, help="audit tolerance (also DCMLAB_TOL)")
        sp.add_argument("--branch", choices=("continuity", "fixed"), default="continuity")
        sp.add_argument("--lambda", dest="lam", type=_lambda_arg, default=None, metavar="RE,IM")
        sp.add_argument("--svg", metavar="FILE", help="also write an SVG plot")
    return parser


def _fail(exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        argv = list(sys.argv[1:] if argv is None else argv)
        # let "--window -4:4,-4:4" through although it looks like an option
        argv = [f"--window={argv[i + 1]}" if a == "--window" and i + 1 < len(argv) else a
                for i, a in enumerate(argv) if not (i > 0 and argv[i - 1] == "--window")]
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, _tolerance(args))
    except (InputError, KeyError, TypeError, ValueError, OSError) as exc:
        return _fail(exc, 1)
    except (DcmError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(exc, 2)

if __name__ == "__main__":
    sys.exit(main())
