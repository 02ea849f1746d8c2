"""``penaltyguard`` command line.

Exit codes: 0 success, 2 validation failure, 3 numerical contract
violation, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..analysis import (
    ToyModelParams,
    bound_F,
    compute_F,
    fidelity_bound,
    instance_norms,
    theorem_limit_check,
    toy_model,
)
from ..code import CODES, verify_detection
from ..errors import ConfigError, OutputError, PenaltyGuardError
from ..model import ModelConfig, assemble, default_config
from .output import emit_csv, fit_report
from .plans import NAMED_PLANS, load_plan, named_plan
from .runner import DEFAULT_MEMORY_BUDGET_GB, run_experiment

logger = logging.getLogger("penaltyguard")


def _json_out(obj) -> None:
    print(json.dumps(obj, indent=2, default=_json_float))


def _json_float(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(type(x))


def _finite(x: float):
    return x if math.isfinite(x) else str(x)


def _load_config(path: str | None, seed: int | None) -> ModelConfig:
    if path is None:
        cfg = default_config()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise OutputError(f"cannot read config {path}: {exc}") from exc
        try:
            cfg = ModelConfig.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return cfg


def _resolve_plan(args):
    if args.plan in NAMED_PLANS:
        plan = named_plan(args.plan, args.scale, args.full_scale)
    elif Path(args.plan).exists():
        plan = load_plan(args.plan)
    else:
        raise ConfigError(f"--plan {args.plan!r} is neither a named plan {sorted(NAMED_PLANS)} nor a file")
    if args.seed is not None:
        plan = plan.with_seed(args.seed)
    return plan


def cmd_verify_code(args) -> int:
    code = CODES[args.code]()
    report = verify_detection(code, raise_on_failure=False)
    _json_out(report.to_dict())
    return 0 if report.passed else 3


def cmd_run(args) -> int:
    plan = _resolve_plan(args)
    records = run_experiment(plan, workers=args.workers, memory_budget_gb=args.memory_budget_gb)
    paths = emit_csv(records, args.out, plan)
    failed = [r for r in records if not r.ok]
    summary = {"plan": plan.name, "plan_hash": plan.hash(), "records": len(records),
               "failed": len(failed), "files": [str(p) for p in paths]}
    if "t_prot" in plan.outputs and sum(r.ok for r in records) >= 3:
        try:
            summary["fit"] = fit_report(records).to_dict()
        except PenaltyGuardError as exc:
            summary["fit_error"] = str(exc)
    _json_out(summary)
    return 3 if failed else 0


def cmd_theorem_limit(args) -> int:
    cfg = _load_config(args.config, args.seed)
    inst = assemble(cfg)
    report = theorem_limit_check(inst, args.t, args.ep_list)
    out = report.to_dict()
    out["exponent_in_band"] = report.exponent_in()
    _json_out(out)
    return 0


def cmd_bounds(args) -> int:
    inst = assemble(_load_config(args.config, args.seed))
    norms = instance_norms(inst)
    fs = compute_F(inst, args.t)
    rows = []
    for T, measured in zip(args.t, fs.norms):
        b = bound_F(inst, T, norms)
        rows.append({"T": T, "F_norm": float(measured), "bound_F": _finite(b),
                     "fidelity_bound": fidelity_bound(inst.lam, float(measured))})
    _json_out({"e_penalty": inst.e_penalty, "lambda": inst.lam, "seed": inst.seed,
               "norm_V": norms.v, "norm_H0": norms.h0, "norm_commutator": norms.commutator,
               "rows": rows})
    return 0


def cmd_toy_model(args) -> int:
    res = toy_model(ToyModelParams(args.omega, args.lp, args.lm, args.ep))
    _json_out(res.to_dict())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="penaltyguard", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("verify-code", help="print the code's detection report as JSON")
    s.add_argument("--code", default="jfs4", choices=sorted(CODES))
    s.set_defaults(func=cmd_verify_code)

    for name, help_text in (("run", "run a named or file plan"),
                            ("sweep", "run a parameter sweep and fit t_prot against E_P/lambda^2")):
        s = sub.add_parser(name, help=help_text)
        if name == "sweep":
            s.add_argument("--plan", default="fig3")
        else:
            s.add_argument("--plan", required=True)
        s.add_argument("--scale", type=float, default=1.0, help="shrink grids in (0, 1]")
        s.add_argument("--full-scale", action="store_true",
                       help="long horizons (fig5 averaging at 1e8, fig8 T=10000)")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", default="results")
        s.add_argument("--workers", type=int)
        s.add_argument("--memory-budget-gb", type=float, default=DEFAULT_MEMORY_BUDGET_GB)
        s.set_defaults(func=cmd_run)

    s = sub.add_parser("theorem-limit", help="decay of ||(U(T)-U0(T))P|| with E_P")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--ep-list", type=float, nargs="+", required=True)
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_theorem_limit)

    s = sub.add_parser("bounds", help="measured ||F(T)|| against its norm bound")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--t", type=float, nargs="+", required=True)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("toy-model", help="three-level model energies and rates")
    s.add_argument("--omega", type=float, required=True)
    s.add_argument("--lp", type=float, required=True)
    s.add_argument("--lm", type=float, required=True)
    s.add_argument("--ep", type=float, required=True)
    s.set_defaults(func=cmd_toy_model)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PenaltyGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
