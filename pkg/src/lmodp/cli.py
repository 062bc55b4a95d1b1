"""``lmodp`` command line: search, account, sample, compare, quantify, train.

Exit codes: 0 success, 2 infeasible budget, 1 anything else.  Errors are
also written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .accountant import PrivacyBudget, compose, default_orders, lmo_curve, to_dp
from .errors import InfeasibleNoise, LmoError, NoFeasibleCandidate, Unachievable
from .mgf import MixtureSpec

log = logging.getLogger("lmodp")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
DEFAULT_SEED = 42


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_json(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("LMODP_OUT", "lmodp_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, args, config: dict) -> None:
    import scipy

    blob = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "subcommand": args.command,
        "argv": sys.argv[1:] if args.argv is None else args.argv,
        "config": json.loads(blob),
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": args.seed,
        "versions": {
            "lmodp": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def _load_spec(path) -> tuple[MixtureSpec, dict]:
    """Accepts either a saved SearchResult or a bare MixtureSpec JSON."""
    d = _read_json(path)
    if "spec" in d and "version" in d:
        from .search import SearchResult

        return SearchResult.from_dict(d).spec, d
    return MixtureSpec.from_dict(d), d


def _grid_from_config(cfg: dict, args):
    from .search import SearchGrid, default_grid

    cfg = dict(cfg)
    budget = cfg.pop("budget", None)
    eps = args.eps if getattr(args, "eps", None) is not None else (budget or {}).get("eps")
    delta = args.delta if getattr(args, "delta", None) is not None else (budget or {}).get(
        "delta", 1e-10)
    if eps is None:
        raise UsageError("a budget eps is required (config 'budget' or --eps)")
    if cfg.pop("base", None) == "default":
        for key in ("uniform_pairs",):
            if key in cfg:
                cfg[key] = tuple(tuple(p) for p in cfg[key])
        for key, val in list(cfg.items()):
            if isinstance(val, list):
                cfg[key] = tuple(val)
        return default_grid(PrivacyBudget(float(eps), float(delta)), **cfg)
    cfg["budget"] = {"eps": eps, "delta": delta}
    return SearchGrid.from_dict(cfg)


# ---------------------------------------------------------------------------
# subcommands


def cmd_search(args) -> int:
    from .search import save_result, search_optimal

    cfg = _read_json(args.config)
    grid = _grid_from_config(cfg, args)
    out = _out_dir(args)
    result = search_optimal(grid, seed=args.seed, workers=args.workers)
    save_result(result, out / "search_result.json")
    _write_manifest(out, args, {"grid": grid.to_dict()})
    print(f"eps_total={result.eps_total:.6f} alpha={result.argmin_alpha:g} "
          f"usefulness={result.usefulness:.6f}")
    return EXIT_OK


def cmd_account(args) -> int:
    spec, _ = _load_spec(args.spec)
    orders = default_orders(args.alpha_max)
    curve = lmo_curve(spec, args.C, orders)
    total = compose([curve] * args.steps)
    eps, alpha = to_dp(total, args.delta)
    out = _out_dir(args)
    body = {"per_step": curve.to_dict(), "composed": total.to_dict(), "steps": args.steps,
            "sensitivity": args.C, "delta": args.delta, "eps_total": eps, "argmin_alpha": alpha}
    _write(out / "account.json", json.dumps(body, indent=1) + "\n")
    _write_manifest(out, args, {"spec": spec.to_dict(), "C": args.C, "steps": args.steps,
                                "delta": args.delta, "alpha_max": args.alpha_max})
    for a, e in zip(curve.orders, curve.eps):
        print(f"{a:g},{e!r}")
    print(f"eps_total={eps!r} alpha={alpha:g}")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .analysis import ENTROPY_BINS
    from .sampler import make_rng, sample_gaussian_noise, sample_lmo_noise

    if (args.spec is None) == (args.sigma is None):
        raise UsageError("give exactly one of --spec or --sigma")
    out = _out_dir(args)
    rng = make_rng(args.seed, args.stream)
    total = args.n * args.d
    if args.spec is not None:
        spec, _ = _load_spec(args.spec)
        draws = sample_lmo_noise(spec, total, rng)
        source = {"spec": spec.to_dict()}
    else:
        draws = sample_gaussian_noise(args.sigma, args.C, total, rng)
        source = {"sigma": args.sigma, "C": args.C}
    draws = draws.reshape(args.n, args.d)
    if args.format == "csv":
        lines = [",".join(f"w{i}" for i in range(args.d))]
        lines += [",".join(repr(float(v)) for v in row) for row in draws]
        _write(out / "samples.csv", "\n".join(lines) + "\n")
    else:
        counts, edges = np.histogram(draws, bins=args.bins or ENTROPY_BINS)
        summary = {"n": total, "mean": float(draws.mean()), "var": float(draws.var()),
                   "mean_abs": float(np.abs(draws).mean()),
                   "edges": edges.tolist(), "counts": counts.tolist()}
        _write(out / "histogram.json", json.dumps(summary) + "\n")
    _write_manifest(out, args, {**source, "n": args.n, "d": args.d, "stream": args.stream,
                                "format": args.format})
    return EXIT_OK


def _plot_comparison(report, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "lmodp"
    eps = [r.eps for r in report.rows]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, (a, b, title) in zip(axes, [("mean_abs_lmo", "mean_abs_gauss", "mean |noise|"),
                                        ("entropy_lmo", "entropy_gauss", "entropy"),
                                        ("var_lmo", "var_gauss", "variance")]):
        ax.plot(eps, [getattr(r, a) for r in report.rows], "o-", label="LMO")
        ax.plot(eps, [getattr(r, b) for r in report.rows], "s-", label="Gaussian")
        ax.set_xlabel("per-step eps")
        ax.set_title(title)
        if title != "entropy":
            ax.set_yscale("log")
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_compare(args) -> int:
    from .analysis import compare_noises
    from .search import default_grid

    cfg = {"eps_list": [0.3, 0.7, 2.0, 3.0], "delta": 1e-10, "sensitivity": 1.0,
           "n": 1_000_000, "grid": {}}
    cfg.update(_read_json(args.config))
    if args.n is not None:
        cfg["n"] = args.n
    overrides = {k: tuple(tuple(v) if isinstance(v, list) else v for v in val)
                 if isinstance(val, list) else val for k, val in cfg["grid"].items()}
    grid = default_grid(PrivacyBudget(1.0, cfg["delta"]), sensitivity=cfg["sensitivity"],
                        **overrides)
    report = compare_noises(cfg["eps_list"], cfg["delta"], cfg["sensitivity"], grid,
                            int(cfg["n"]), args.seed, workers=args.workers)
    out = _out_dir(args)
    _write(out / "comparison.csv", report.to_csv())
    if not args.no_plot:
        _plot_comparison(report, out / "comparison.svg")
    _write_manifest(out, args, cfg)
    for r in report.rows:
        print(f"eps={r.eps:g} reduction={100 * r.reduction_rate:.2f}% "
              f"sigma={r.gaussian_sigma:.4f}")
    return EXIT_OK


def cmd_quantify(args) -> int:
    from .analysis import quantify_space
    from .search import default_grid

    cfg = {"Q": [0.1, 0.01, 0.001], "K": [10, 100], "M": 100,
           "metrics": ["kl", "l2", "emd"], "grid": {}}
    cfg.update(_read_json(args.config))
    grid = default_grid(PrivacyBudget(1.0, 1e-10), **{
        k: tuple(tuple(v) if isinstance(v, list) else v for v in val)
        if isinstance(val, list) else val for k, val in cfg["grid"].items()})
    report = quantify_space(cfg["Q"], cfg["K"], int(cfg["M"]), grid,
                            tuple(cfg["metrics"]), args.seed)
    out = _out_dir(args)
    _write(out / "quantify.csv", report.to_csv())
    _write_manifest(out, args, cfg)
    print(report.to_csv(), end="")
    return EXIT_OK


def cmd_train(args) -> int:
    from .dpsgd import TrainConfig, evaluate, load_csv, make_blobs, save_ledger, train
    from .sampler import GaussianParams
    from .search import load_result

    cfg = {"data": None, "blobs": {"n": 4000, "d": 20, "separation": 5.0, "sigma": 1.0,
                                   "seed": 0},
           "steps": 300, "batch_size": 256, "lr": 0.5, "clip": 1.0, "delta": 1e-10,
           "noise": None, "sigma": None, "amplified": False}
    cfg.update(_read_json(args.config))
    for key in ("data", "steps", "batch_size", "lr", "clip", "delta", "noise", "sigma"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.amplified:
        cfg["amplified"] = True
    if cfg["noise"] is not None and cfg["sigma"] is not None:
        raise UsageError("give at most one of noise file or sigma")
    dataset = load_csv(cfg["data"]) if cfg["data"] else make_blobs(**cfg["blobs"])
    if cfg["noise"] is not None:
        noise = load_result(cfg["noise"])
    elif cfg["sigma"] is not None:
        noise = GaussianParams(float(cfg["sigma"]), float(cfg["clip"]))
    else:
        noise = None
    config = TrainConfig(steps=int(cfg["steps"]), batch_size=int(cfg["batch_size"]),
                         lr=float(cfg["lr"]), clip=float(cfg["clip"]), noise=noise,
                         delta=float(cfg["delta"]), seed=args.seed,
                         amplified=bool(cfg["amplified"]))
    params, ledger = train(dataset, config)
    out = _out_dir(args)
    save_ledger(ledger, out / "ledger.json")
    _write(out / "metrics.csv", ledger.metrics_csv())
    np.savetxt(out / "params.txt", params, fmt="%.17g")
    _write_manifest(out, args, cfg)
    m = evaluate(params, dataset)
    eps = ledger.eps_total
    print(f"accuracy={m['accuracy']:.4f} loss={m['loss']:.4f} "
          f"eps_total={'inf' if math.isinf(eps) else f'{eps:.6f}'}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lmodp", description=__doc__.splitlines()[0])
    common = _Parser(add_help=False)
    common.add_argument("--out", help="output directory (env LMODP_OUT)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("search", parents=[common], help="grid search for noise parameters")
    s.add_argument("--config", help="grid JSON")
    s.add_argument("--eps", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_search)

    a = sub.add_parser("account", parents=[common], help="RDP curve and total eps of a spec")
    a.add_argument("--spec", required=True, help="search result or mixture spec JSON")
    a.add_argument("--C", type=float, default=1.0)
    a.add_argument("--steps", type=int, default=1)
    a.add_argument("--delta", type=float, default=1e-10)
    a.add_argument("--alpha-max", type=int, default=128)
    a.set_defaults(func=cmd_account)

    m = sub.add_parser("sample", parents=[common], help="draw LMO or Gaussian noise")
    m.add_argument("--spec")
    m.add_argument("--sigma", type=float)
    m.add_argument("--C", type=float, default=1.0)
    m.add_argument("--d", type=int, default=1)
    m.add_argument("--n", type=int, default=1000)
    m.add_argument("--stream", type=int, default=0)
    m.add_argument("--format", choices=("csv", "hist"), default="csv")
    m.add_argument("--bins", type=int)
    m.set_defaults(func=cmd_sample)

    c = sub.add_parser("compare", parents=[common], help="LMO vs Gaussian noise report")
    c.add_argument("--config")
    c.add_argument("--n", type=int)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--no-plot", action="store_true")
    c.set_defaults(func=cmd_compare)

    q = sub.add_parser("quantify", parents=[common], help="search-space distance tables")
    q.add_argument("--config")
    q.set_defaults(func=cmd_quantify)

    t = sub.add_parser("train", parents=[common], help="DP-SGD on a CSV dataset or blobs")
    t.add_argument("--config")
    t.add_argument("--data")
    t.add_argument("--steps", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--clip", type=float)
    t.add_argument("--delta", type=float)
    t.add_argument("--noise", help="search result JSON")
    t.add_argument("--sigma", type=float, help="Gaussian noise multiplier")
    t.add_argument("--amplified", action="store_true")
    t.set_defaults(func=cmd_train)
    return p


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_ERROR, exc)
    args.argv = None if argv is None else list(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NoFeasibleCandidate, Unachievable, InfeasibleNoise) as exc:
        return _fail(EXIT_INFEASIBLE, exc)
    except (UsageError, LmoError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail(EXIT_ERROR, exc)


if __name__ == "__main__":
    sys.exit(main())
