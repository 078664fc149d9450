"""``risktrc`` command line.

Every command writes into an output directory (``--out``, else the
``RISKTRC_OUT`` environment variable, else ``./risktrc-out``) together with a
``manifest.json``. Exit codes: 0 success, 2 unbounded or non-transient, 1 error.

``--config FILE`` reads flat ``key = value`` lines (keys are option names,
dashes or underscores); explicit flags override it.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import (
    ChainParams,
    GamblersRuinParams,
    InitialDistribution,
    analytic_chain_erm,
    gamblers_ruin,
    random_transient_mdp,
    single_state_chain,
)
from .erm import BOUNDED, UNBOUNDED, solve_erm
from .errors import (
    BudgetExceededError,
    InvalidModelError,
    ModelFormatError,
    NotTransientError,
    RiskTrcError,
    UnboundedPolicyError,
)
from .evar import evar_solve
from .manifest import RunManifest, sha256_file, sha256_json
from .model import DecisionRule, TransientMdp, discount_to_trc, require_valid, validate_model
from .modelio import atomic_write_text, read_model, write_model
from .simulate import RolloutConfig, histogram_csv, rollout, summary
from .spectral import (
    DEFAULT_POLICY_CAP,
    check_transient_exhaustive,
    check_transient_policy,
    count_deterministic_policies,
)

OUT_ENV = "RISKTRC_OUT"
DEFAULT_OUT = "risktrc-out"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNBOUNDED = 2


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# formatting helpers


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1) + "\n"


def _csv_cell(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x) and x < 0:
        return ""  # -inf
    return repr(x)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_csv_cell(c) for c in row) for row in rows)
    return "\n".join(lines) + "\n"


def _alpha_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


class Run:
    """Output directory plus its manifest."""

    def __init__(self, args, argv):
        self.out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
        self.out.mkdir(parents=True, exist_ok=True)
        options = {k: v for k, v in vars(args).items() if k not in ("func", "out", "config")}
        self.manifest = RunManifest(
            command=args.command,
            argv=_strip_out(argv),
            options={k: (str(v) if isinstance(v, Path) else v) for k, v in options.items()},
            version=__version__,
            seed=getattr(args, "seed", None),
        )
        if args.config:
            self.manifest.config_file = str(args.config)
            self.manifest.config_digest = sha256_file(args.config)
        else:
            self.manifest.config_digest = sha256_json(self.manifest.options)

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        atomic_write_text(path, text)
        self.manifest.record_output(self.out, path)
        return path

    def finish(self, code: int) -> int:
        self.manifest.exit_code = code
        self.manifest.write(self.out)
        return code


def _strip_out(argv: list[str]) -> list[str]:
    res, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        res.append(tok)
    return res


def _load_model(run: Run, path) -> TransientMdp:
    path = Path(path)
    model = read_model(path)
    run.manifest.record_input(path)
    if path.suffix.lower() == ".csv":
        run.manifest.record_input(path.parent / "mu.csv")
    rep = validate_model(model)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not rep.ok:
        raise InvalidModelError(rep.violations)
    return model


# ---------------------------------------------------------------------------
# commands


def cmd_solve_erm(args, run: Run) -> int:
    model = _load_model(run, args.model)
    try:
        rep = solve_erm(model, args.beta, method=args.method, tol=args.tol, max_iter=args.max_iter)
    except NotTransientError as exc:
        print(f"not transient: {exc}", file=sys.stderr)
        return EXIT_UNBOUNDED
    doc = rep.to_dict()
    run.write("solve.json", _dump_json(doc))
    rows = [(s, v, int(a)) for s, (v, a) in enumerate(zip(rep.value, rep.policy.actions))]
    run.write("values.csv", _csv(["state", "value", "action"], rows))
    print(f"{rep.status}: objective {doc['objective']} ({rep.method}, beta={args.beta})")
    if rep.status == BOUNDED:
        return EXIT_OK
    if rep.status == UNBOUNDED:
        return EXIT_UNBOUNDED
    print("iteration cap reached before convergence", file=sys.stderr)
    return EXIT_ERROR


def cmd_solve_evar(args, run: Run) -> int:
    model = _load_model(run, args.model)
    try:
        sol = evar_solve(model, args.alpha, args.delta, method=args.method, beta0=args.beta0)
    except NotTransientError as exc:
        print(f"not transient: {exc}", file=sys.stderr)
        return EXIT_UNBOUNDED
    doc = sol.to_dict()
    del doc["per_beta"]
    run.write("evar.json", _dump_json(doc))
    run.write("per_beta.csv", _csv(["beta", "g_star", "h_star", "status"], sol.per_beta_rows()))
    print(f"EVaR >= {doc['evar_lower']} at beta* = {doc['beta_star']!r}; policy {doc['policy']}")
    return EXIT_OK


def cmd_check(args, run: Run) -> int:
    model = read_model(args.model)
    run.manifest.record_input(args.model)
    rep = validate_model(model)
    doc = {"validation": rep.to_dict()}
    for w in rep.warnings:
        print(f"warning: {w}")
    for v in rep.violations:
        print(f"violation: {v}")
    code = EXIT_OK
    rows = []
    if rep.ok:
        uni = check_transient_policy(model, DecisionRule.uniform(model))
        rows.append(("uniform", uni.radius, uni.transient))
        doc["uniform"] = uni.to_dict()
        count = count_deterministic_policies(model)
        try:
            ex = check_transient_exhaustive(model, cap=args.exhaustive_cap)
            doc["exhaustive"] = ex.to_dict()
            label = "worst deterministic" if ex.transient else f"violating {list(map(int, ex.policy.actions))}"
            rows.append((label, ex.radius, ex.transient))
            if not ex.transient:
                code = EXIT_UNBOUNDED
        except BudgetExceededError as exc:
            doc["exhaustive"] = {"skipped": str(exc), "count": count}
            print(f"exhaustive check skipped: {exc}")
        if not uni.transient:
            code = EXIT_UNBOUNDED
    else:
        code = EXIT_ERROR
    print(f"{'rule':<40} {'radius':>14}  transient")
    for label, radius, ok in rows:
        print(f"{label:<40} {radius:>14.10f}  {'yes' if ok else 'NO'}")
    run.write("check.json", _dump_json(doc))
    return code


def _read_policy(path, model) -> DecisionRule:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    actions = doc["policy"] if isinstance(doc, dict) else doc
    rule = DecisionRule.deterministic(actions, model.n_actions)
    rule.check_against(model)
    return rule


def cmd_simulate(args, run: Run) -> int:
    model = _load_model(run, args.model)
    rule = _read_policy(args.policy, model)
    run.manifest.record_input(args.policy)
    dist = rollout(model, RolloutConfig(args.episodes, rule, seed=args.seed, max_steps=args.max_steps))
    run.write("histogram.csv", histogram_csv(dist.returns, args.bins))
    doc = summary(dist, alphas=args.alpha_list)
    run.write("summary.json", _dump_json(doc))
    print(f"{args.episodes} episodes, mean {doc['mean']!r}, truncated {doc['truncated']}")
    if dist.truncated_count:
        print("some episodes hit --max-steps; risk estimates omitted", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_generate(args, run: Run) -> int:
    if args.kind == "chain":
        model = single_state_chain(ChainParams(epsilon=args.epsilon, r=args.r, gamma=args.discount))
    elif args.kind == "gamblers-ruin":
        model = gamblers_ruin(GamblersRuinParams(q=args.q, cap=args.cap, initial=args.initial, mode=args.mode))
    else:
        rng = np.random.default_rng(args.seed)
        model = random_transient_mdp(rng, args.states, args.actions)
    rep = validate_model(model)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    name = "model.csv" if args.format == "csv" else "model.json"
    for path in write_model(model, run.out / name):
        run.manifest.record_output(run.out, path)
    print(f"wrote {model.name or args.kind} to {run.out / name}")
    return EXIT_OK


def cmd_convert(args, run: Run) -> int:
    model = _load_model(run, args.model)
    out = discount_to_trc(model, args.gamma)
    name = "model.csv" if args.format == "csv" else "model.json"
    for path in write_model(out, run.out / name):
        run.manifest.record_output(run.out, path)
    return EXIT_OK


FIG2_EXTRA = (0.52, 0.526, 0.53, 0.6)


def fig2_betas(points: int) -> np.ndarray:
    return np.unique(np.concatenate([np.geomspace(0.01, 1.0, points), FIG2_EXTRA]))


def cmd_fig2(args, run: Run) -> int:
    chain = single_state_chain(ChainParams(epsilon=args.epsilon, r=args.r))
    discounted = require_valid(single_state_chain(ChainParams(r=args.r, gamma=args.gamma)))
    disc_trc = discount_to_trc(discounted, args.gamma)
    disc_value = solve_erm(disc_trc, 0.0).objective
    rows = []
    for b in fig2_betas(args.points):
        rep = solve_erm(chain, float(b), method=args.method)
        trc = rep.objective if rep.status == BOUNDED else -math.inf
        # a deterministic reward stream: every ERM equals the expectation
        rows.append((float(b), trc, disc_value))
    run.write("fig2.csv", _csv(["beta", "trc_value", "discounted_value"], rows))
    closed = [(float(b), analytic_chain_erm(ChainParams(args.epsilon, args.r), float(b))) for b in fig2_betas(args.points)]
    run.write("fig2_closed_form.csv", _csv(["beta", "trc_value"], closed))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--config", type=Path, default=None, help="flat key = value file; flags take precedence")

    p = argparse.ArgumentParser(prog="risktrc", description="ERM and EVaR solvers for transient MDPs")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve-erm", parents=[common], help="optimal ERM policy for one beta")
    s.add_argument("model")
    s.add_argument("--beta", type=float, default=None)
    s.add_argument("--method", choices=["vi", "pi", "lp"], default="lp")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iter", type=int, default=None)
    s.set_defaults(func=cmd_solve_erm)

    s = sub.add_parser("solve-evar", parents=[common], help="delta-optimal EVaR policy")
    s.add_argument("model")
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--delta", type=float, default=0.01)
    s.add_argument("--method", choices=["vi", "pi", "lp"], default="lp")
    s.add_argument("--beta0", type=float, default=None, help="skip the halving search")
    s.set_defaults(func=cmd_solve_evar)

    s = sub.add_parser("check", parents=[common], help="validation and transience diagnostics")
    s.add_argument("model")
    s.add_argument("--exhaustive-cap", type=int, default=DEFAULT_POLICY_CAP)
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", parents=[common], help="Monte-Carlo rollouts of a policy")
    s.add_argument("model")
    s.add_argument("--policy", required=True, help="JSON with a 'policy' list (e.g. solve.json, evar.json)")
    s.add_argument("--episodes", type=int, default=7000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-steps", type=int, default=100_000)
    s.add_argument("--alpha-list", type=_alpha_list, default=[], help="comma-separated EVaR levels")
    s.add_argument("--bins", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("generate", parents=[common], help="write a benchmark model")
    s.add_argument("kind", choices=["chain", "gamblers-ruin", "random"])
    s.add_argument("--format", choices=["json", "csv"], default="json")
    s.add_argument("--epsilon", type=float, default=0.9)
    s.add_argument("--r", type=float, default=-0.2)
    s.add_argument("--discount", type=float, default=None, help="chain only: emit the discounted variant")
    s.add_argument("--q", type=float, default=0.68)
    s.add_argument("--cap", type=int, default=7)
    s.add_argument("--initial", choices=[m.value for m in InitialDistribution], default="middle")
    s.add_argument("--mode", choices=["strict", "literal"], default="strict")
    s.add_argument("--states", type=int, default=4)
    s.add_argument("--actions", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("convert", parents=[common], help="discounted model to transient model")
    s.add_argument("model")
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--format", choices=["json", "csv"], default="json")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("fig2", parents=[common], help="chain ERM against beta, transient vs discounted")
    s.add_argument("--epsilon", type=float, default=0.9)
    s.add_argument("--gamma", type=float, default=0.9)
    s.add_argument("--r", type=float, default=-0.2)
    s.add_argument("--points", type=int, default=49)
    s.add_argument("--method", choices=["vi", "pi", "lp"], default="lp")
    s.set_defaults(func=cmd_fig2)

    s = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    s.add_argument("manifest", type=Path)
    s.add_argument("--out", type=Path, default=None)
    s.set_defaults(func=None)
    return p


def _read_config(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string("[run]\n" + text, source=str(path))
    return {k.replace("-", "_"): v for k, v in cp["run"].items()}


def _parse(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    cfg = _read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in subparser._actions}
    unknown = sorted(set(cfg) - known - {"out"})
    if unknown:
        raise CliError(f"{args.config}: unknown option(s) {', '.join(unknown)}")
    # string defaults go through each option's type, so flags still win
    subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


# options that must come from a flag or the config file
REQUIRED = {"solve-erm": ("beta",), "solve-evar": ("alpha",), "convert": ("gamma",)}


def _check_required(args) -> None:
    missing = [k for k in REQUIRED.get(args.command, ()) if getattr(args, k) is None]
    if missing:
        raise CliError(f"{args.command}: missing required option(s) " + ", ".join("--" + m for m in missing))


def _replay(args) -> int:
    man = RunManifest.load(args.manifest)
    argv = list(man.argv)
    if args.out is not None:
        argv += ["--out", str(args.out)]
    return main(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        _check_required(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    if args.command == "replay":
        return _replay(args)
    run = Run(args, argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            code = args.func(args, run)
    except (ModelFormatError, InvalidModelError, RiskTrcError, ValueError, KeyError, OSError) as exc:
        if isinstance(exc, UnboundedPolicyError):
            print(f"unbounded: {exc}", file=sys.stderr)
            code = EXIT_UNBOUNDED
        else:
            print(f"error: {exc}", file=sys.stderr)
            code = EXIT_ERROR
    return run.finish(code)


if __name__ == "__main__":
    sys.exit(main())
