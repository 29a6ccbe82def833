"""Command-line entry point: verify, search, interpret, shape."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import drlp
from .breakpoints import (EmptySpec, SearchSpec, analyze_breakpoints, breakpoints_csv,
                          find_breakpoints)
from .drlp import DrlpTemplate, ast
from .drlp.script import thaw
from .network import load_network
from .validation import validate

EXIT_STATUS = {"Proven": 0, "Falsified": 1, "Unknown": 2}
EXIT_ERROR = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _dump(obj, path=None, schema=None):
    if schema:
        validate(schema, obj)
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def ast_json(script):
    if isinstance(script, DrlpTemplate):
        free = list(script.free_parameters)
        script = script.script
    else:
        free = []
    return {"variables": [[n, thaw(v)] for n, v in script.variables],
            "precondition": ast.to_json(script.precondition),
            "postcondition": ast.to_json(script.postcondition),
            "x_size": script.x_size, "y_size": script.y_size, "free_parameters": free}


def _budget(args):
    return args.node_budget


def _verify_fn(args, net):
    from .verify import verify

    return lambda s: verify(s, net, k_max=args.k_max, method=args.method, budget=_budget(args))


# -- subcommands --------------------------------------------------------------

def cmd_verify(args):
    script = drlp.load(args.script)
    if args.emit_ast:
        _dump(ast_json(script), args.out)
        return 0
    if isinstance(script, DrlpTemplate):
        raise UsageError(f"{args.script} has free parameters {list(script.free_parameters)}; "
                         "use `search` with a search spec")
    if not args.net:
        raise UsageError("--net is required")
    net = load_network(args.net)
    from .verify import verify

    result = verify(script, net, k_max=args.k_max, method=args.method, budget=_budget(args))
    _dump(result.to_json(timing=not args.no_timing), args.out, "verify_result")
    return EXIT_STATUS[result.status]


def _load_spec(path, template):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    spec = SearchSpec.from_json(data)
    its = set(template.script.iterables)
    needed = [p for p in template.free_parameters if p not in its or p in spec.names]
    missing = [p for p in needed if p not in spec.names]
    if missing:
        raise UsageError(f"search spec is missing free variable(s): {', '.join(missing)}")
    return spec


def cmd_search(args):
    template = drlp.load(args.script)
    if not isinstance(template, DrlpTemplate):
        raise UsageError(f"{args.script} has no free parameters; use `verify`")
    spec = _load_spec(args.spec, template)
    net = load_network(args.net)

    def progress(chosen, found, aborted):
        state = "aborted" if aborted else f"{len(found)} breakpoint(s)"
        print(f"slice {json.dumps(chosen, sort_keys=True)}: {state}", file=sys.stderr)

    try:
        out = find_breakpoints(template, net, spec, _verify_fn(args, net), jobs=args.jobs,
                               on_slice=progress if args.verbose else None)
    except EmptySpec as exc:
        raise UsageError(str(exc)) from exc
    summary = analyze_breakpoints(out)
    _dump({"breakpoints": [b.to_json() for b in out], "summary": summary.to_json(),
           "aborted": out.aborted}, args.out, "search_result")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(breakpoints_csv(out, [v.name for v in spec.variables[:-1]]))
    return 0


def cmd_interpret(args):
    from . import interpreter as it

    net = load_network(args.net)
    vf = _verify_fn(args, net)
    q = args.question
    if q in ("sensitivity", "importance"):
        x0 = np.array(_floats(args.x0))
        discussed = _ints(args.discussed) if args.discussed is not None else range(len(x0))
        pq = it.PerturbationQuestion(x0, discussed, args.eps, args.distance or "Linf")
        if q == "sensitivity":
            y_range = None
            if args.y_range:
                y_range = tuple(_floats(args.y_range))
            ans = it.sensitivity(net, pq, y_range, args.precision, vf)
        else:
            if args.eps_out is None:
                raise UsageError("importance needs --eps-out")
            ans = it.importance(net, pq, _floats(args.eps_range), args.precision, args.eps_out,
                                vf)
            if ans.details.get("never_changes"):
                ans.details["report"] = "NeverChanges"
    elif q == "counterfactual":
        ans = it.counterfactual(net, _floats(args.x0), _floats(args.target),
                                _floats(args.eps_range), args.precision, args.distance or "L2",
                                args.tolerance, verify_fn=vf)
    else:
        if not (args.script and args.spec):
            raise UsageError(f"{q} needs --script and --spec")
        template = drlp.load(args.script)
        if not isinstance(template, DrlpTemplate):
            raise UsageError(f"{args.script} has no free parameters")
        spec = _load_spec(args.spec, template)
        if q == "intuitiveness":
            ans = it.intuitiveness(net, template, spec, vf)
        else:
            ans = it.decision_boundary(net, template, spec, vf)
            if args.csv:
                with open(args.csv, "w", encoding="utf-8") as fh:
                    fh.write(it.boundary_csv(ans))
    _dump(ans.to_json(), args.out, "interpret_answer")
    return 0


def _state_box(script, n):
    """Per-feature bounds on x[0] stated directly in the precondition."""
    from .verify.compile import compiler_for
    from .verify.query import dnf

    comp = compiler_for(script, max(1, script.fixed_depth() or 1))
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for node in script.precondition.children:
        cases = dnf(comp.node(node))
        if len(cases) != 1:
            continue
        for a in cases[0]:
            vs = a.vars()
            if len(vs) != 1 or vs[0] >= n:
                continue
            j = vs[0]
            b = -a.const / a.coef[j]
            if a.sense == "eq" or a.coef[j] > 0:
                hi[j] = min(hi[j], b)
            if a.sense == "eq" or a.coef[j] < 0:
                lo[j] = max(lo[j], b)
    return lo, hi


def _build_terms(args, net, cfg):
    from . import metrics

    props_cfg = cfg.get("properties", [{}] * len(args.props))
    if len(props_cfg) != len(args.props):
        raise UsageError("config lists a different number of properties than --props")
    terms = []
    n = net.input_dim
    for path, pc in zip(args.props, props_cfg):
        script = drlp.load(path)
        if isinstance(script, DrlpTemplate):
            raise UsageError(f"{path} has free parameters; shaping needs concrete properties")
        lo, hi = _state_box(script, n)
        env_lo = np.array(pc.get("env_lower", cfg.get("env_lower", lo)), dtype=float)
        env_hi = np.array(pc.get("env_upper", cfg.get("env_upper", hi)), dtype=float)
        lo = np.where(np.isfinite(lo), lo, env_lo)
        hi = np.where(np.isfinite(hi), hi, env_hi)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise UsageError(f"{path}: state bounds are not all finite; give env_lower/env_upper")
        action = pc.get("action", {})
        box = metrics.PropertyBox(lo, hi, env_lo, env_hi, action.get("lower"), action.get("upper"),
                                  frozenset(action["set"]) if "set" in action else None,
                                  pc.get("kind", "avoid"))
        eps = pc.get("eps", cfg.get("eps"))
        dens = metrics.densities(net, box, eps) if eps else None
        g = pc.get("gap", 0.0)
        if g == "auto":
            g = metrics.gap(script, net, None, None, precision=pc.get("gap_precision", 1e-2)).gap
        terms.append(metrics.ShapingTerm(box, float(pc.get("weight", 1.0)), dens, float(g),
                                         pc.get("traceback")))
    return terms


def _read_trajectory(path):
    from . import metrics

    steps, raw = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or not {"s", "a", "r"} <= obj.keys():
                raise ValueError(f"{path}:{lineno}: each step needs keys s, a and r")
            if not isinstance(obj["s"], list) or \
                    not all(isinstance(v, (int, float)) for v in obj["s"]):
                raise ValueError(f"{path}:{lineno}: s must be a list of numbers")
            if not isinstance(obj["r"], (int, float)) or isinstance(obj["r"], bool):
                raise ValueError(f"{path}:{lineno}: r must be a number")
            a = obj["a"]
            if not (isinstance(a, int) or isinstance(a, list)):
                raise ValueError(f"{path}:{lineno}: a must be an integer or a list of numbers")
            steps.append(metrics.Step(np.array(obj["s"], dtype=float), a, obj["r"]))
            raw.append(obj)
    if not steps:
        raise ValueError(f"{path}: trajectory is empty")
    return steps, raw


def cmd_shape(args):
    from . import metrics

    cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    net = load_network(args.net)
    steps, raw = _read_trajectory(args.traj)
    for i, st in enumerate(steps):
        if len(st.s) != net.input_dim:
            raise ValueError(f"{args.traj}:{i + 1}: state has {len(st.s)} features, "
                             f"network expects {net.input_dim}")
    terms = _build_terms(args, net, cfg)
    config = metrics.ShapingConfig(
        p1=cfg.get("p1", 1.0), p2=cfg.get("p2", 2.0), lam=cfg.get("lam", cfg.get("gamma", 0.99)),
        mu=cfg.get("mu", 0.0), beta=cfg.get("beta", 1.0),
        action_mode=cfg.get("action_mode", "fixed"), action_const=cfg.get("action_const", 1.0))
    shaped = metrics.shape_rewards(steps, terms, config)
    lines = []
    for obj, F, r_new, st in zip(raw, shaped.F, shaped.shaped, steps):
        out = dict(obj)
        out["F"] = F
        out["r_shaped"] = obj["r"] if r_new == st.r else r_new
        validate("shaped_step", out)
        lines.append(json.dumps(out))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.report:
        report = {"properties": []}
        for path, bad, d in zip(args.props, shaped.violations, shaped.diffs):
            report["properties"].append({
                "property": os.path.basename(path), "violations": bad,
                "diff": {"mean": float(np.mean(d)), "min": float(np.min(d)),
                         "max": float(np.max(d))}})
        _dump(report, args.report, "shape_report")
    return 0


# -- argument parsing ---------------------------------------------------------

def _common(p):
    p.add_argument("--k-max", type=int, default=5, help="maximum unrolling depth (default 5)")
    p.add_argument("--method", choices=("kind", "bmc", "interval"), default="kind",
                   help="verification method (default: k-induction)")
    p.add_argument("--node-budget", type=int, default=None,
                   help="branch-and-bound node budget (env REINVERIFY_NODE_BUDGET)")
    p.add_argument("--out", help="write JSON here instead of stdout")


def build_parser():
    p = _Parser(prog="reinverify", description=__doc__)
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for independent queries")
    p.add_argument("--no-timing", action="store_true",
                   help="report wall_ms as 0 so repeated runs are byte-identical")
    p.add_argument("-v", "--verbose", action="store_true", help="progress lines on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="verify a concrete DRLP script")
    v.add_argument("script")
    v.add_argument("--net")
    v.add_argument("--emit-ast", action="store_true", help="print the parsed AST and exit")
    _common(v)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("search", help="find breakpoints of a DRLP template")
    s.add_argument("script")
    s.add_argument("--net", required=True)
    s.add_argument("--spec", required=True, help="search spec JSON")
    s.add_argument("--csv", help="also write breakpoints as CSV")
    _common(s)
    s.set_defaults(func=cmd_search)

    i = sub.add_parser("interpret", help="answer an interpretability question")
    i.add_argument("--question", required=True,
                   choices=("sensitivity", "importance", "counterfactual", "intuitiveness",
                            "boundary"))
    i.add_argument("--net", required=True)
    i.add_argument("--x0", help="comma-separated original input")
    i.add_argument("--discussed", help="comma-separated perturbed feature indices")
    i.add_argument("--eps", type=float, default=0.0, help="perturbation radius (sensitivity)")
    i.add_argument("--eps-range", default="0,1", help="lo,hi radius search range")
    i.add_argument("--eps-out", type=float, help="output change threshold (importance)")
    i.add_argument("--y-range", help="lo,hi output sweep range (sensitivity)")
    i.add_argument("--target", help="comma-separated target output (counterfactual)")
    i.add_argument("--tolerance", type=float, default=1e-3)
    i.add_argument("--distance", choices=("L1", "L2", "Linf"), default=None)
    i.add_argument("--precision", type=float, default=1e-3)
    i.add_argument("--script", help="template for intuitiveness/boundary")
    i.add_argument("--spec", help="search spec JSON for intuitiveness/boundary")
    i.add_argument("--csv", help="boundary points as CSV")
    _common(i)
    i.set_defaults(func=cmd_interpret)

    sh = sub.add_parser("shape", help="add property-metric rewards to a trajectory")
    sh.add_argument("--props", nargs="+", required=True, help="concrete .drlp properties")
    sh.add_argument("--net", required=True)
    sh.add_argument("--traj", required=True, help="trajectory JSON lines")
    sh.add_argument("--out", help="shaped trajectory JSON lines (default stdout)")
    sh.add_argument("--config", help="shaping config JSON")
    sh.add_argument("--report", help="write violation counts and Diff statistics here")
    sh.set_defaults(func=cmd_shape)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "k_max", 1) < 1:
            parser.error("--k-max must be >= 1")
    except SystemExit as exc:  # usage errors and --help
        return exc.code
    np.random.seed(args.seed)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"reinverify: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError, drlp.DrlpError) as exc:
        print(f"reinverify: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
