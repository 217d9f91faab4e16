"""Command-line entry point.

Subcommands:
  run        benchmark a policy on an objective, writing regret CSV + summary
  oracle     Monte-Carlo ground-truth acquisition surface for a 1d pair demo
  visualize  approximate acquisition surface on the same grid, for comparison
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .acquisition import build_context, ppes_values
from .baselines import PolicyConfig
from .gp import Dataset, GpHyper, kernel, chol_with_jitter, unit_domain
from .harness import (
    ExperimentConfig,
    aggregate,
    run_many,
    write_csv,
    write_summary,
)
from .oracle import ground_truth_ppes

__all__ = ["main", "make_figure_dataset"]

_FIGURE_HYPER = GpHyper(
    signal_var=1.0,
    lengthscales=np.array([np.sqrt(0.025)]),
    noise_var=1e-4,
    mean=0.0,
)


def make_figure_dataset(seed: int = 0) -> tuple:
    """Five noisy observations of a function drawn from the demo prior.

    Returns (data, hyper). Both the oracle and visualize subcommands use
    this so their surfaces are directly comparable.
    """
    rng = np.random.default_rng(seed)
    X = unit_domain(1).uniform(rng, 5)
    K = kernel(_FIGURE_HYPER, X, X)
    L, _ = chol_with_jitter(K)
    f = L @ rng.standard_normal(5)
    y = f + np.sqrt(_FIGURE_HYPER.noise_var) * rng.standard_normal(5)
    return Dataset(X, y), _FIGURE_HYPER


def _cmd_run(args) -> int:
    cfg = ExperimentConfig(
        objective=args.objective,
        policy=PolicyConfig(method=args.policy, Q=args.q),
        T=args.iters,
        repeats=args.repeats,
        seed=args.seed,
        M=args.m_samples,
        out=args.out,
    )
    traces = run_many(cfg)
    report = aggregate(traces)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, "regret.csv"), traces)
        write_summary(os.path.join(args.out, "summary.json"), cfg, report)
    for tr in traces:
        if tr.aborted:
            print(f"aborted repeat: {tr.error}", file=sys.stderr)
    if report.get("completed", 0):
        print(
            f"{cfg.policy.method} on {cfg.objective}: "
            f"final median regret {report['final_median_regret']:.6g} "
            f"({report['completed']} completed, {report['aborted']} aborted)"
        )
    else:
        print("all repeats aborted", file=sys.stderr)
    frac = report.get("aborted", 0) / max(1, len(traces))
    return 1 if frac > 0.1 else 0


def _cmd_oracle(args) -> int:
    data, hyper = make_figure_dataset(args.seed)
    surf = ground_truth_ppes(
        data,
        hyper,
        grid_n=args.grid,
        n_paths=args.paths,
        rng=np.random.default_rng(args.seed + 1),
    )
    surf.to_csv(args.out)
    xa, xb = surf.argmax_pair
    print(
        f"wrote {args.out}; argmax pair ({xa:.4f}, {xb:.4f}), "
        f"value {np.nanmax(surf.values):.6f} nats"
    )
    return 0


def _cmd_visualize(args) -> int:
    data, hyper = make_figure_dataset(args.seed)
    domain = unit_domain(1)
    rng = np.random.default_rng(args.seed + 2)
    ctx = build_context(data, domain, 2, [hyper] * args.m_samples, rng)
    g = np.linspace(0.0, 1.0, args.grid)
    ii, jj = np.meshgrid(np.arange(args.grid), np.arange(args.grid),
                         indexing="ij")
    batches = np.stack(
        [g[ii.ravel()], g[jj.ravel()]], axis=1
    )[:, :, None]  # (G*G, 2, 1)
    vals = ppes_values(batches, ctx).reshape(args.grid, args.grid)
    with open(args.out, "w") as fh:
        fh.write("x,x_prime,value\n")
        for a in range(args.grid):
            for b in range(args.grid):
                fh.write(f"{g[a]:.8f},{g[b]:.8f},{vals[a, b]:.8f}\n")
    finite = np.isfinite(vals)
    k = int(np.argmax(np.where(finite, vals, -np.inf)))
    print(
        f"wrote {args.out}; argmax pair "
        f"({g[k // args.grid]:.4f}, {g[k % args.grid]:.4f}), "
        f"value {vals.ravel()[k]:.6f} nats"
    )
    return 0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="ppes")
    sub = p.add_subparsers(dest="cmd", required=True)

    pr = sub.add_parser("run", help="benchmark a policy on an objective")
    pr.add_argument("--objective", required=True)
    pr.add_argument(
        "--policy",
        required=True,
        choices=["RANDOM", "PPES", "EI_MCMC", "SM_UCB", "GP_BUCB", "GP_UCB_PE"],
    )
    pr.add_argument("--q", type=int, default=3)
    pr.add_argument("--iters", type=int, default=15)
    pr.add_argument("--repeats", type=int, default=1)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--m-samples", type=int, default=20)
    pr.add_argument("--out", default=None)
    pr.set_defaults(fn=_cmd_run)

    po = sub.add_parser("oracle", help="Monte-Carlo acquisition ground truth")
    po.add_argument("--seed", type=int, default=0)
    po.add_argument("--grid", type=int, default=50)
    po.add_argument("--paths", type=int, default=200_000)
    po.add_argument("--out", default="oracle_surface.csv")
    po.set_defaults(fn=_cmd_oracle)

    pv = sub.add_parser("visualize", help="approximate acquisition surface")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--grid", type=int, default=50)
    pv.add_argument("--m-samples", type=int, default=200)
    pv.add_argument("--out", default="ppes_surface.csv")
    pv.set_defaults(fn=_cmd_visualize)

    args = p.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
