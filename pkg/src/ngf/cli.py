"""Command-line entry point: ``ngf {oracle,gen,train,eval,table1,ablate}``.

Every subcommand exits with status 1 when an invariant it checks fails.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .estimators import DirectRegressor, NeuralGreensRegressor, _SolverRegressor
from .exceptions import NgfError
from .harness import (emit_error_map, evaluate, oracle_checks, protocol_dataset, run_ablations,
                      run_table1_protocol, write_table, MetricsReport)
from .problems import canonical_family, dataset_residuals, load_dataset, save_dataset

log = logging.getLogger("ngf")
RESIDUAL_TOL = 1e-9


def _cmd_oracle(args):
    results = oracle_checks(args.grid, n_instances=args.instances, seed=args.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def _cmd_gen(args):
    ds = protocol_dataset(args.pde, args.grid, args.seed, args.n_train, args.n_test)
    worst = float(np.max(dataset_residuals(ds)))
    out = save_dataset(ds, args.out)
    print(f"wrote {len(ds)} instances to {out} (max residual {worst:.2e})")
    return 0 if worst < RESIDUAL_TOL else 1


def _cmd_train(args):
    ds = load_dataset(args.data)
    if args.pde and canonical_family(args.pde) != ds.family:
        print(f"dataset family is {ds.family}, not {canonical_family(args.pde)}", file=sys.stderr)
        return 1
    common = dict(feature_dim=args.dim, n_blocks=args.blocks, epochs=args.epochs, max_lr=args.lr,
                  accumulate=args.accum, seed=args.seed, clip_norm=args.clip or None)
    if args.baseline == "direct":
        est = DirectRegressor(**common)
    else:
        est = NeuralGreensRegressor(mass_weight=args.lam, **common)
    test = ds.subset("test")
    est.fit(ds.subset("train"), eval_set=test if len(test) else None)
    est.save(args.out)
    h = est.history_
    if h["epoch"]:
        print(f"trained {args.epochs} epochs: train rel L2 {h['train_rel_l2'][-1]:.4f}"
              + (f", test {h['test_rel_l2'][-1]:.4f}" if "test_rel_l2" in h else ""))
    print(f"saved {args.out}")
    return 0


def _cmd_eval(args):
    est = _SolverRegressor.load(args.model)
    ds = load_dataset(args.data)
    errors, max_abs = evaluate(est, ds)
    report = MetricsReport(model=type(est).__name__, family=ds.family, grid=ds.domain.shape[0],
                           seed=int(est.seed), config=est.get_params(),
                           train_errors=errors.get("train", []), test_errors=errors.get("test", []),
                           max_abs_errors=max_abs, history=est.history_)
    if args.report:
        report.write_json(args.report)
    preds = est.predict(ds)
    d = ds.domain
    ok = all(np.array_equal(p[d.boundary_idx], inst.h) for p, inst in zip(preds, ds.instances))
    ok = ok and bool(np.all(np.isfinite(preds)))
    if args.maps:
        out = Path(args.maps)
        out.mkdir(parents=True, exist_ok=True)
        counters = {}
        for p, inst in zip(preds, ds.instances):
            k = counters.get(inst.split, 0)
            counters[inst.split] = k + 1
            emit_error_map(d, inst.u, p, out / f"{inst.split}_{k:04d}")
    for split, errs in errors.items():
        print(f"{split}: mean rel L2 {np.mean(errs):.4f} over {len(errs)} instances")
    if isinstance(est, NeuralGreensRegressor) and not ok:
        print("FAIL: boundary pass-through or finiteness violated", file=sys.stderr)
        return 1
    return 0 if np.all(np.isfinite(preds)) else 1


def _config_from(args):
    return dict(feature_dim=args.dim, n_blocks=args.blocks, epochs=args.epochs, max_lr=args.lr)


def _cmd_table1(args):
    ngf, base = run_table1_protocol(args.pde, args.grid, args.seed, _config_from(args), out_dir=args.out,
                                    n_train=args.n_train, n_test=args.n_test)
    for r in (ngf, base):
        print(f"{r.model:7s} train {r.train_mean:.4f} test {r.test_mean:.4f} ratio {r.ratio:.2f}")
    return 0 if np.isfinite([ngf.test_mean, base.test_mean]).all() else 1


def _cmd_ablate(args):
    reports = run_ablations(args.kind, args.pde, args.grid, args.seed, _config_from(args), out_dir=args.out)
    for value, r in reports.items():
        state = f"diverged at epoch {r.diverged_epoch}" if r.diverged_epoch is not None else \
            f"train {r.train_mean:.4f} test {r.test_mean:.4f}"
        print(f"{args.kind}={value}: {state}")
    if args.out:
        write_table([r for r in reports.values() if r.diverged_epoch is None],
                    Path(args.out) / f"ablation_{args.kind}.csv")
    return 0


def _add_model_args(p, epochs=40):
    p.add_argument("--dim", type=int, default=64, help="feature dimension d")
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=1e-4, help="peak learning rate")


def build_parser():
    parser = argparse.ArgumentParser(prog="ngf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle", help="cross-check the exact solvers on one grid")
    p.add_argument("--grid", type=int, default=16)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("gen", help="generate a templated dataset")
    p.add_argument("--pde", choices=["poisson", "biharmonic"], required=True)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train NGF or the direct baseline on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--pde", choices=["poisson", "biharmonic"])
    _add_model_args(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="mass regularizer weight")
    p.add_argument("--accum", type=int, default=1, help="instances per optimizer step")
    p.add_argument("--clip", type=float, default=1.0, help="global gradient-norm cap (0 disables)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", choices=["none", "direct"], default="none")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report")
    p.add_argument("--maps", help="directory for per-instance error maps")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("table1", help="NGF vs direct baseline, train/test generalization")
    p.add_argument("--pde", choices=["poisson", "biharmonic"], default="poisson")
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    _add_model_args(p)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_table1)

    p = sub.add_parser("ablate", help="mass-regularizer or feature-dimension sweep")
    p.add_argument("--kind", choices=["mass_reg", "feature_dim"], required=True)
    p.add_argument("--pde", choices=["poisson", "biharmonic"], default="poisson")
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    _add_model_args(p)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (NgfError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
