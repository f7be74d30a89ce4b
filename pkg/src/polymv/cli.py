"""Command-line front end.

Every run writes its CSV artifacts plus ``manifest.json`` into ``--out``.  The
manifest records the resolved model, every option and the SHA-256 of each
output, and ``polymv replay <manifest>`` re-executes the run and checks that
the outputs match bit for bit.

Exit codes: 0 success, 1 validation FALSIFIED, 2 numerical failure,
3 usage or configuration error.  Failures print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from . import __version__
from .coeffmaps import Verdict, check_assumptions, check_pmp
from .common_noise import (CommonNoisePath, simulate_conditional_moments,
                           simulate_particles_common, write_conditional_csv)
from .dual import integrate_backward_c, integrate_forward_c, integrate_vec
from .errors import NumericalError, PolyMVError
from .magnus import (GeneratorPath, magnus_omega, transition_backward, transition_forward,
                     transition_magnus)
from .mckean_sim import simulate, write_snapshot
from .model import load_model, model_to_dict, parse_model
from .momentode import fmt, integrate_moments
from .ode import Status

EXIT_OK, EXIT_FALSIFIED, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 3

SUBCOMMANDS = ("validate", "moments", "magnus", "transition", "dual", "simulate", "common-noise")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="polymv", description="Polynomial McKean-Vlasov moment tools.")
    p.add_argument("--version", action="version", version=f"polymv {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, horizon=True):
        sp.add_argument("--model", required=True, help="model config (JSON)")
        sp.add_argument("--out", default=".", help="output directory (default: .)")
        if horizon:
            sp.add_argument("--T", "--horizon", dest="T", type=_positive(float), default=1.0,
                            help="time horizon (default 1)")
        sp.add_argument("--tol", type=_positive(float), default=1e-10,
                        help="integration tolerance (default 1e-10)")

    def particles(sp):
        sp.add_argument("--particles", type=_positive(int), default=10_000)
        sp.add_argument("--dt", type=_positive(float), default=1e-3)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--stride", type=_positive(int), default=1,
                        help="record every STRIDE steps")
        sp.add_argument("--workers", type=_positive(int), default=1)
        sp.add_argument("--antithetic", action="store_true")

    common(sub.add_parser("validate", help="check growth assumptions and the PMP"), horizon=False)
    common(sub.add_parser("moments", help="integrate the moment ODE"))
    for name, hlp in (("magnus", "Magnus transition matrix P_{s,t}"),
                      ("transition", "transition matrix P_{s,t} by a chosen method")):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--s", type=float, default=0.0)
        sp.add_argument("--t", type=float, default=None, help="end time (default: --T)")
        sp.add_argument("--order", type=int, choices=(1, 2, 3), default=3)
        if name == "transition":
            sp.add_argument("--method", choices=("backward", "forward", "magnus"),
                            default="backward")
    common(sub.add_parser("dual", help="backward and forward dual coefficient fields"))
    sp = sub.add_parser("simulate", help="particle Monte Carlo")
    common(sp)
    particles(sp)
    sp.add_argument("--mode", choices=("dec", "int"), default="int")
    sp.add_argument("--snapshot", action="store_true", help="also write final states (binary)")
    sp = sub.add_parser("common-noise", help="conditional moments along one common path")
    common(sp)
    particles(sp)
    sp.add_argument("--common-seed", type=int, default=0)
    sp.add_argument("--no-particles", action="store_true",
                    help="only the conditional-moment SDE, no particle system")
    sp = sub.add_parser("replay", help="re-run a manifest and compare outputs")
    sp.add_argument("manifest")
    sp.add_argument("--out", default=None, help="output directory (default: alongside the manifest)")
    return p


# -- subcommands ---------------------------------------------------------------------

def _out(args, name):
    return os.path.join(args.out, name)


def _cmd_validate(spec, args, outputs, summary):
    reports = [check_assumptions(spec, "A"), check_assumptions(spec, "B")]
    if spec.has_common_noise:
        reports.append(check_assumptions(spec, "C"))
    reports.append(check_pmp(spec))
    for r in reports:
        print(r.format())
    path = _out(args, "validation.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2)
        fh.write("\n")
    outputs.append("validation.json")
    v = {r.title: r.verdict for r in reports}
    falsified = (v["Assumptions A"] is Verdict.FALSIFIED and v["Assumptions B"] is Verdict.FALSIFIED) \
        or v.get("Assumptions C") is Verdict.FALSIFIED or reports[-1].verdict is Verdict.FALSIFIED
    summary["verdicts"] = {k: x.value for k, x in v.items()}
    return EXIT_FALSIFIED if falsified else EXIT_OK


def _solve(spec, args, T):
    sol = integrate_moments(spec, T, args.tol, args.tol)
    if sol.status is Status.BLOWUP:
        raise NumericalError(f"moment ODE blew up at t*={fmt(sol.t_star)} before T={fmt(T)}")
    return sol


def _cmd_moments(spec, args, outputs, summary):
    sol = integrate_moments(spec, args.T, args.tol, args.tol)
    sol.to_csv(_out(args, "moments.csv"))
    outputs.append("moments.csv")
    summary["status"] = sol.status.name
    summary["steps"] = len(sol.t) - 1
    if sol.status is Status.BLOWUP:
        summary["t_star"] = sol.t_star
        raise NumericalError(f"moment ODE blew up at t*={fmt(sol.t_star)} before T={fmt(args.T)}")
    return EXIT_OK


def _span(args):
    t = args.T if args.t is None else args.t
    if not 0 <= args.s <= t:
        raise UsageError(f"need 0 <= s <= t, got s={args.s}, t={t}")
    return args.s, t


def _cmd_transition(spec, args, outputs, summary, method=None):
    s, t = _span(args)
    path = GeneratorPath.from_solution(_solve(spec, args, max(t, args.T)))
    method = method or args.method
    if method == "magnus":
        res = magnus_omega(path, s, t, args.order)
        summary.update(norm_integral=res.norm_integral, epsilon=res.epsilon,
                       norm_integral_scaled=res.norm_integral_scaled,
                       convergent=res.convergent)
        tm = transition_magnus(path, s, t, args.order, res) if res.convergent \
            else transition_backward(path, s, t, args.tol)
        summary["fallback"] = not res.convergent
    elif method == "forward":
        tm = transition_forward(path, s, t, args.tol)
    else:
        tm = transition_backward(path, s, t, args.tol)
    tm.to_csv(_out(args, "transition.csv"))
    outputs.append("transition.csv")
    summary["provenance"] = tm.label
    return EXIT_OK


def _cmd_dual(spec, args, outputs, summary):
    vec = integrate_vec(spec, args.T, args.tol)
    if vec.status is Status.BLOWUP:
        raise NumericalError(f"moment ODE blew up at t*={fmt(vec.solution.t_star)}")
    vec.solution.to_csv(_out(args, "vec.csv"))
    integrate_backward_c(spec, vec, args.T, args.tol).to_csv(_out(args, "dual_backward.csv"))
    integrate_forward_c(spec, vec, args.T, args.tol).to_csv(_out(args, "dual_forward.csv"))
    outputs.extend(["vec.csv", "dual_backward.csv", "dual_forward.csv"])
    return EXIT_OK


def _cmd_simulate(spec, args, outputs, summary):
    moment_path = _solve(spec, args, args.T) if args.mode == "dec" else None
    run = simulate(spec, args.mode, args.particles, args.dt, args.T, args.seed, moment_path,
                   stride=args.stride, workers=args.workers, antithetic=args.antithetic)
    run.to_csv(_out(args, "simulation.csv"))
    outputs.append("simulation.csv")
    if args.snapshot:
        write_snapshot(_out(args, "states.bin"), run.states)
        outputs.append("states.bin")
    summary.update(clamp_count=run.clamp_count, worst_excursion=run.worst_excursion,
                   projection_count=run.projection_count, max_overshoot=run.max_overshoot)
    return EXIT_OK


def _cmd_common_noise(spec, args, outputs, summary):
    path = CommonNoisePath.generate(args.common_seed, args.dt, args.T)
    path.to_csv(_out(args, "common_path.csv"))
    cm = simulate_conditional_moments(spec, path)
    target = _out(args, "conditional.csv")
    cm.to_csv(target)
    outputs.extend(["common_path.csv", "conditional.csv"])
    summary.update(sde_projection_count=cm.projection_count, sde_max_overshoot=cm.max_overshoot)
    if not args.no_particles:
        pr = simulate_particles_common(spec, args.particles, args.dt, args.T, args.seed,
                                       args.common_seed, stride=args.stride, workers=args.workers,
                                       antithetic=args.antithetic, path=path)
        write_conditional_csv(target, pr.run.times, pr.run.moments, "PARTICLE", append=True)
        summary.update(clamp_count=pr.run.clamp_count, projection_count=pr.run.projection_count)
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "moments": _cmd_moments,
    "magnus": lambda *a: _cmd_transition(*a, method="magnus"),
    "transition": _cmd_transition,
    "dual": _cmd_dual,
    "simulate": _cmd_simulate,
    "common-noise": _cmd_common_noise,
}


# -- manifests ---------------------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _options(args):
    skip = {"command", "model", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _execute(command, spec, args):
    os.makedirs(args.out, exist_ok=True)
    outputs, summary = [], {}
    code = EXIT_OK
    error = None
    try:
        code = _COMMANDS[command](spec, args, outputs, summary)
    except NumericalError as exc:
        code, error = EXIT_NUMERICAL, exc
    manifest = {
        "tool": "polymv",
        "version": __version__,
        "subcommand": command,
        "model": model_to_dict(spec),
        "options": _options(args),
        "exit_code": code,
        "summary": summary,
        "outputs": [{"file": f, "sha256": _sha256(os.path.join(args.out, f))} for f in outputs],
    }
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=float)
        fh.write("\n")
    if error is not None:
        raise error
    return code, manifest


def _replay(args):
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    command = manifest.get("subcommand")
    if command not in _COMMANDS:
        raise UsageError(f"manifest names unknown subcommand {command!r}")
    spec = parse_model(manifest["model"])
    ns = argparse.Namespace(**manifest["options"])
    ns.out = args.out or os.path.dirname(os.path.abspath(args.manifest))
    expected = {o["file"]: o["sha256"] for o in manifest["outputs"]}
    code, fresh = _execute(command, spec, ns)
    got = {o["file"]: o["sha256"] for o in fresh["outputs"]}
    if got != expected:
        diff = sorted(f for f in set(got) | set(expected) if got.get(f) != expected.get(f))
        raise NumericalError(f"replay outputs differ: {', '.join(diff)}")
    print(f"replay identical: {len(got)} output(s)")
    return code


def _fail(code, exc):
    line = {"exit": code, "error": type(exc).__name__, "message": str(exc).splitlines()[0] if str(exc) else ""}
    print(json.dumps(line), file=sys.stderr)
    return code


def run(argv=None) -> int:
    """Parse ``argv`` and execute; returns the exit code (never raises)."""
    try:
        args = build_parser().parse_args(argv)
        if args.command == "replay":
            return _replay(args)
        spec = load_model(args.model)
        code, _ = _execute(args.command, spec, args)
        return code
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except (PolyMVError, OSError, ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_USAGE, exc)
    except FloatingPointError as exc:
        return _fail(EXIT_NUMERICAL, exc)


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
