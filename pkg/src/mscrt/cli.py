"""``mscrt`` command line: test, sample, simulate, group-select.

Exit status is 0 on success, 2 for configuration problems (bad flags,
malformed files, infeasible requests) and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .engine import SAMPLERS, CrtConfig, run_crt, sample_copies
from .errors import ConfigurationError, MscrtError, NumericalError
from .graph import read_edge_list
from .io import file_digest, read_table, write_table
from .multiplicity import PROCEDURES, group_select, read_groups
from .simulation import (
    ScenarioConfig,
    run_group_study,
    run_power_study,
    stderr_progress,
)
from .statistics import KINDS

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False)


def parse_columns(spec: str, names: list[str]) -> list[int]:
    """``"1-8"``, ``"1,3,x7"`` and mixtures: 1-based indices, ranges or names."""
    out: list[int] = []
    for tok in spec.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if tok in names:
            out.append(names.index(tok))
            continue
        lo, sep, hi = tok.partition("-")
        try:
            a = int(lo)
            b = int(hi) if sep else a
        except ValueError:
            raise ConfigurationError(f"unknown column {tok!r}") from None
        if a < 1 or b > len(names) or a > b:
            raise ConfigurationError(f"column range {tok!r} outside 1..{len(names)}")
        out.extend(range(a - 1, b))
    if len(set(out)) != len(out):
        raise ConfigurationError(f"duplicate column in {spec!r}")
    if not out:
        raise ConfigurationError("no columns selected")
    return out


def _load(args):
    header, data = read_table(args.data)
    if args.response is None:
        Y, X, names = None, data, header
    else:
        if args.response not in header:
            raise ConfigurationError(f"response column {args.response!r} not in header")
        r = header.index(args.response)
        Y = data[:, r]
        X = np.delete(data, r, axis=1)
        names = [h for h in header if h != args.response]
    if X.shape[1] == 0:
        raise ConfigurationError("no covariate columns")
    graph = read_edge_list(args.graph, X.shape[1]) if args.graph else None
    return Y, X, names, graph


def _config(args, tested, graph, names) -> CrtConfig:
    sampler = args.sampler or ("graph-gaussian" if graph is not None else "mvn")
    cond = None
    if getattr(args, "conditioning", None):
        cond = tuple(parse_columns(args.conditioning, names))
    return CrtConfig(
        tested=tuple(tested), conditioning=cond, sampler=sampler, graph=graph,
        statistic=getattr(args, "statistic", "LM-SST"), M=args.m, L=args.sweeps,
        seed=args.seed, alpha=args.alpha, family=getattr(args, "family", "auto"),
        trees=getattr(args, "trees", 500), n_jobs=args.threads,
    )


def _manifest(command: str, args, inputs: list) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "threads")}
    return {
        "command": command,
        "config": cfg,
        "seed": args.seed,
        "version": __version__,
        "inputs": {str(p): file_digest(p) for p in inputs if p},
    }


def cmd_test(args) -> int:
    if args.response is None:
        raise ConfigurationError("--response is required")
    Y, X, names, graph = _load(args)
    cfg = _config(args, parse_columns(args.tested, names), graph, names)
    res = run_crt(Y, X, cfg).to_dict()
    res["manifest"] = _manifest("test", args, [args.data, args.graph])
    print(_dumps(res))
    return EXIT_OK


def _gram_deviation(X, cs, T) -> float:
    n = X.shape[0]
    S = [j for j in range(X.shape[1]) if j not in set(T)]
    XS = np.hstack([np.ones((n, 1)), X[:, S]])
    XT = X[:, T]
    worst = 0.0
    for C in cs.copies:
        for a, b in ((XS.T @ XT, XS.T @ C), (XT.T @ XT, C.T @ C)):
            worst = max(worst, float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300)))
    return worst


def cmd_sample(args) -> int:
    _Y, X, names, graph = _load(args)
    tested = parse_columns(args.tested, names)
    cfg = _config(args, tested, graph, names)
    cs = sample_copies(X, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for m in range(len(cs)):
        path = out / f"copy_{m + 1:04d}.csv"
        write_table(path, names, cs.full(m, X))
        files.append(path.name)
    report = {"files": files, "sampler": cfg.sampler, "M": cfg.M, "seed": cfg.seed,
              "diagnostics": cs.diagnostics}
    if args.verify:
        if cfg.sampler != "mvn":
            raise ConfigurationError("--verify checks the Gram identities of the mvn sampler")
        report["verify"] = {"max_relative_gram_deviation": _gram_deviation(X, cs, tested)}
    report["manifest"] = _manifest("sample", args, [args.data, args.graph])
    print(_dumps(report))
    return EXIT_OK


def cmd_simulate(args) -> int:
    path = Path(args.scenario)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e.strerror}") from None
    sc = ScenarioConfig.from_json(text)
    if args.reps_override is not None:
        if args.reps_override < 1:
            raise ConfigurationError("--reps-override must be positive")
        sc = ScenarioConfig.from_dict({**sc.to_dict(), "reps": args.reps_override})
    progress = None if args.quiet else stderr_progress
    if sc.family == "group-linear":
        table = run_group_study(sc, fdr_level=args.fdr_level, progress=progress)
    else:
        table = run_power_study(sc, progress=progress, n_jobs=args.threads)
    sys.stdout.write(table.to_csv())
    return EXIT_OK


def cmd_group_select(args) -> int:
    if args.response is None:
        raise ConfigurationError("--response is required")
    Y, X, names, graph = _load(args)
    groups = read_groups(args.groups, X.shape[1])
    procs = [p.strip().lower() for p in args.procedures.split(",") if p.strip()]
    bad = [p for p in procs if p not in PROCEDURES]
    if bad or not procs:
        raise ConfigurationError(f"unknown procedure(s) {bad}; choose from {', '.join(PROCEDURES)}")
    cfg = _config(args, groups.groups[0], graph, names)
    res = group_select(Y, X, groups, cfg, procs, args.fdr_level, n_jobs=args.threads)
    report = {
        "groups": [
            {"group": j + 1, "pvalue": res.pvalues[j],
             "randomized_pvalue": res.randomized_pvalues[j], "evalue": res.evalues[j]}
            for j in range(len(groups))
        ],
        "rejected": {k: [j + 1 for j in v] for k, v in res.rejected.items()},
        "fdr_level": args.fdr_level,
        "warnings": res.warnings,
        "manifest": _manifest("group-select", args, [args.data, args.groups, args.graph]),
    }
    print(_dumps(report))
    return EXIT_OK


def _common(p: argparse.ArgumentParser, statistic: bool = True) -> None:
    p.add_argument("data", help="CSV file with a header row")
    p.add_argument("--response", help="name of the response column")
    p.add_argument("--graph", help="edge-list file over the covariate columns (1-based ids)")
    p.add_argument("--sampler", choices=SAMPLERS,
                   help="default: graph-gaussian with --graph, otherwise mvn")
    p.add_argument("--m", type=int, default=100, help="number of copies (default 100)")
    p.add_argument("--sweeps", type=int, default=1, help="sweeps L for graph samplers")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.05)
    if statistic:
        p.add_argument("--statistic", default="LM-SST",
                       help=f"one of {', '.join(KINDS)} (case-insensitive)")
        p.add_argument("--family", default="auto", choices=("auto", "gaussian", "binomial"))
        p.add_argument("--trees", type=int, default=500, help="trees for forest statistics")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mscrt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mscrt {__version__}")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (results do not depend on this)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run one conditional randomization test")
    _common(p)
    p.add_argument("--tested", required=True, help="columns: names, 1-based indices or ranges")
    p.add_argument("--conditioning", help="conditioning columns (default: all others)")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("sample", help="write copies of the data")
    _common(p, statistic=False)
    p.add_argument("--tested", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--verify", action="store_true", help="report Gram-identity deviation (mvn)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("simulate", help="run a simulation study from a scenario JSON file")
    p.add_argument("scenario")
    p.add_argument("--reps-override", type=int)
    p.add_argument("--fdr-level", type=float, default=0.1)
    p.add_argument("--quiet", action="store_true", help="suppress progress on stderr")
    p.set_defaults(func=cmd_simulate, seed=None)

    p = sub.add_parser("group-select", help="test every group and select with BH/BY/e-BH")
    _common(p)
    p.add_argument("groups", help="one group per line, comma-separated 1-based indices")
    p.add_argument("--procedures", default="bh,by,ebh")
    p.add_argument("--fdr-level", type=float, default=0.1)
    p.set_defaults(func=cmd_group_select)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be positive")
    try:
        return args.func(args)
    except ConfigurationError as e:
        print(f"mscrt: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"mscrt: numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"mscrt: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MscrtError as e:  # pragma: no cover
        print(f"mscrt: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
