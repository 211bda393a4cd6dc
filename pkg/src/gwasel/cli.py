"""Command-line front end: scan, select, simulate, impute, cluster.

Every run writes its outputs atomically (temp file + rename) together with a
manifest recording the tool version, resolved configuration, input digests
and seed.  Usage problems exit 2, runtime failures exit 1.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

import gwasel
from gwasel.backend import backend_name
from gwasel.cluster import cluster_snps
from gwasel.criteria import DEFAULT_D, CriterionConfig
from gwasel.errors import DimensionError, GwaselError, ParseError
from gwasel.genotype import Dataset, impute_missing, load_dataset
from gwasel.mtest import benjamini_hochberg, bonferroni, scan_to_tsv, single_marker_scan
from gwasel.search import SearchConfig, select_model
from gwasel.simulate import (
    MethodSpec,
    SimulationConfig,
    effect_grid,
    overall_heritability,
    run_study,
    synthetic_dataset,
)


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _digest(path: str | None) -> str | None:
    if path is None:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(command: str, args: argparse.Namespace, inputs: dict[str, str | None],
              seed: int | None = None) -> str:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    payload = {
        "tool": "gwasel",
        "version": gwasel.__version__,
        "backend": backend_name(),
        "command": command,
        "config": resolved,
        "inputs": {k: _digest(v) for k, v in inputs.items()},
        "seed": seed,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    return json.dumps(payload, indent=2, default=str)


def _require_files(parser: argparse.ArgumentParser, *paths: str | None) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            parser.error(f"input file not found: {p}")


def _load(args) -> Dataset:
    return load_dataset(
        args.genotypes,
        trait_path=getattr(args, "trait", None),
        covariate_path=getattr(args, "covariates", None),
        meta_path=getattr(args, "meta", None),
    )


def _snp_ids(dataset: Dataset) -> list[str]:
    return [m.snp_id for m in dataset.meta]


def cmd_scan(args, parser) -> int:
    dataset = _load(args)
    scan = single_marker_scan(dataset)
    p_eff = args.p_effective or dataset.n_snps
    rej_bonf = bonferroni(scan, args.alpha, p_eff)
    rej_bh = benjamini_hochberg(scan, args.alpha)
    ids = _snp_ids(dataset)
    out = Path(args.out)
    _write_atomic(out / "scan.tsv", scan_to_tsv(scan, ids))
    rejections = {
        "alpha": args.alpha,
        "p_effective": p_eff,
        "bonferroni": [ids[j] for j in rej_bonf],
        "benjamini_hochberg": [ids[j] for j in rej_bh],
    }
    _write_atomic(out / "rejections.json", json.dumps(rejections, indent=2))
    _write_atomic(out / "manifest.json", _manifest(
        "scan", args,
        {"genotypes": args.genotypes, "trait": args.trait, "covariates": args.covariates},
    ))
    return 0


def cmd_select(args, parser) -> int:
    dataset = _load(args)
    ids = _snp_ids(dataset)
    crit = CriterionConfig(
        args.criterion,
        n=dataset.n_individuals,
        p_effective=args.p_effective or dataset.n_snps,
        d=args.d,
        kappa=args.kappa,
    )
    config = SearchConfig(
        criterion=crit,
        screen_threshold=args.screen,
        max_forward_size=args.max_forward,
    )
    extras: list[int] = []
    if args.refine_extras:
        id_to_idx = {s: i for i, s in enumerate(ids)}
        for token in Path(args.refine_extras).read_text().split():
            if token in id_to_idx:
                extras.append(id_to_idx[token])
            elif token.isdigit() and int(token) < dataset.n_snps:
                extras.append(int(token))
            else:
                raise GwaselError(f"unknown SNP in --refine-extras: {token}")
    model, result, trace = select_model(dataset, config, extra_candidates=extras)
    out = Path(args.out)
    selection = {
        "criterion": args.criterion,
        "selected": [ids[j] for j in model.snp_indices],
        "selected_indices": list(model.snp_indices),
        "rss": result.rss,
        "mss": result.mss,
        "f_statistic": result.f_statistic,
        "p_value": result.p_value,
        "intercept": result.intercept,
        "coefficients": {ids[j]: float(b)
                         for j, b in zip(model.snp_indices, result.snp_coefficients)},
    }
    _write_atomic(out / "selection.json", json.dumps(selection, indent=2))
    _write_atomic(out / "trace.jsonl", trace.to_jsonl(ids))
    _write_atomic(out / "manifest.json", _manifest(
        "select", args,
        {"genotypes": args.genotypes, "trait": args.trait,
         "covariates": args.covariates, "refine_extras": args.refine_extras},
    ))
    return 0


def _study_from_config(cfg: dict, args, parser) -> tuple[Dataset, SimulationConfig]:
    if "genotypes" in cfg:
        dataset = load_dataset(cfg["genotypes"], meta_path=cfg.get("meta"))
    elif "synthetic" in cfg:
        syn = cfg["synthetic"]
        dataset = synthetic_dataset(
            int(syn["n"]), int(syn["p"]),
            maf_range=tuple(syn.get("maf_range", (0.3, 0.5))),
            seed=int(cfg.get("seed", args.seed)),
        )
    else:
        parser.error("simulation config needs either 'genotypes' or 'synthetic'")
    if "causal_indices" in cfg:
        causal = [int(j) for j in cfg["causal_indices"]]
    elif "k" in cfg:
        k = int(cfg["k"])
        causal = list(np.linspace(0, dataset.n_snps - 1, k).astype(int)) if k else []
    else:
        parser.error("simulation config needs 'causal_indices' or 'k'")
    if "effects" in cfg:
        effects = [float(b) for b in cfg["effects"]]
    else:
        lo, hi = cfg.get("effect_range", (0.27, 0.66))
        effects = list(effect_grid(len(causal), lo, hi)) if causal else []
    sim = SimulationConfig(
        causal_indices=tuple(causal),
        effects=tuple(effects),
        sigma=float(cfg.get("sigma", 1.0)),
        n_replicates=args.replicates,
        seed=args.seed,
        tp_thresholds=tuple(float(t) for t in args.thresholds.split(",")),
    )
    return dataset, sim


def cmd_simulate(args, parser) -> int:
    cfg = json.loads(Path(args.config).read_text())
    dataset, sim = _study_from_config(cfg, args, parser)
    alpha = float(cfg.get("alpha", 0.05))
    d = float(cfg.get("d", DEFAULT_D))
    p_eff = cfg.get("p_effective")
    methods = [
        MethodSpec(kind=name.strip(), alpha=alpha, d=d, p_effective=p_eff)
        for name in args.methods.split(",")
        if name.strip()
    ]
    report = run_study(dataset, sim, methods)
    ids = _snp_ids(dataset)
    out = Path(args.out)
    _write_atomic(out / "report.json", report.to_json(ids))
    for spec in methods:
        for thr in sim.tp_thresholds:
            fname = f"fp_{spec.kind}_{thr}.tsv"
            _write_atomic(out / fname, report.fp_table(spec.kind, thr, ids))
    summary = {
        "heritability": overall_heritability(dataset, sim),
        "mean_power": {m.kind: {str(t): report.mean_power(m.kind, t)
                                for t in sim.tp_thresholds} for m in methods},
        "mean_fdr": {m.kind: {str(t): report.mean_fdr(m.kind, t)
                              for t in sim.tp_thresholds} for m in methods},
    }
    _write_atomic(out / "summary.json", json.dumps(summary, indent=2))
    _write_atomic(out / "manifest.json", _manifest(
        "simulate", args, {"config": args.config}, seed=args.seed,
    ))
    return 0


def cmd_impute(args, parser) -> int:
    dataset = _load(args)
    completed = impute_missing(dataset, window=args.window, n_predictors=args.predictors)
    ids = _snp_ids(dataset)
    lines = ["\t".join(ids)]
    for row in completed.genotypes.values:
        lines.append("\t".join(str(int(v)) for v in row))
    out = Path(args.out)
    _write_atomic(out, "\n".join(lines) + "\n")
    _write_atomic(out.with_suffix(out.suffix + ".manifest.json"), _manifest(
        "impute", args, {"genotypes": args.genotypes},
    ))
    return 0


def cmd_cluster(args, parser) -> int:
    dataset = _load(args)
    assignment = cluster_snps(dataset, c_threshold=args.threshold, window=args.window)
    ids = _snp_ids(dataset)
    out = Path(args.out)
    _write_atomic(out / "clusters.tsv", assignment.to_tsv(ids))
    summary = {
        "n_snps": dataset.n_snps,
        "effective_count": assignment.effective_count,
        "threshold": args.threshold,
        "window": args.window,
    }
    _write_atomic(out / "summary.json", json.dumps(summary, indent=2))
    _write_atomic(out / "manifest.json", _manifest(
        "cluster", args, {"genotypes": args.genotypes},
    ))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwasel",
        description="Marker scans, sparse model selection and power studies",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="cap the numba thread pool (default: all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="single-marker scan with Bonferroni/BH reports")
    scan.add_argument("--genotypes", required=True)
    scan.add_argument("--trait", required=True)
    scan.add_argument("--covariates")
    scan.add_argument("--meta")
    scan.add_argument("--alpha", type=float, default=0.05)
    scan.add_argument("--p-effective", type=int, default=None, dest="p_effective")
    scan.add_argument("--out", required=True)
    scan.set_defaults(func=cmd_scan)

    select = sub.add_parser("select", help="full model-selection pipeline")
    select.add_argument("--genotypes", required=True)
    select.add_argument("--trait", required=True)
    select.add_argument("--covariates")
    select.add_argument("--meta")
    select.add_argument("--criterion", choices=("bic", "mbic", "mbic2", "ebic"),
                        default="mbic2")
    select.add_argument("--d", type=float, default=DEFAULT_D)
    select.add_argument("--kappa", type=float, default=0.0)
    select.add_argument("--p-effective", type=int, default=None, dest="p_effective")
    select.add_argument("--screen", type=float, default=0.15)
    select.add_argument("--max-forward", type=int, default=140, dest="max_forward")
    select.add_argument("--refine-extras", dest="refine_extras")
    select.add_argument("--out", required=True)
    select.set_defaults(func=cmd_select)

    simulate = sub.add_parser("simulate", help="power/FDR study over simulated traits")
    simulate.add_argument("--config", required=True, help="study definition JSON")
    simulate.add_argument("--replicates", type=int, default=100)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--methods", default="bonferroni,bh,mbic,mbic2")
    simulate.add_argument("--thresholds", default="0.7,0.9")
    simulate.add_argument("--out", required=True)
    simulate.set_defaults(func=cmd_simulate)

    impute = sub.add_parser("impute", help="fill missing genotypes")
    impute.add_argument("--genotypes", required=True)
    impute.add_argument("--meta")
    impute.add_argument("--window", type=int, default=500)
    impute.add_argument("--predictors", type=int, default=4)
    impute.add_argument("--out", required=True, help="completed genotype file")
    impute.set_defaults(func=cmd_impute)

    cluster = sub.add_parser("cluster", help="effective-marker clustering report")
    cluster.add_argument("--genotypes", required=True)
    cluster.add_argument("--meta")
    cluster.add_argument("--threshold", type=float, default=0.7)
    cluster.add_argument("--window", type=int, default=1000)
    cluster.set_defaults(func=cmd_cluster)
    cluster.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        try:
            import numba

            numba.set_num_threads(max(1, args.threads))
        except ImportError:
            pass
    _require_files(
        parser,
        getattr(args, "genotypes", None),
        getattr(args, "trait", None),
        getattr(args, "covariates", None),
        getattr(args, "meta", None),
        getattr(args, "config", None),
        getattr(args, "refine_extras", None),
    )
    try:
        return args.func(args, parser)
    except (ParseError, DimensionError, json.JSONDecodeError) as exc:
        # input files that exist but violate their schema are usage errors
        print(f"gwasel: error: {exc}", file=sys.stderr)
        return 2
    except (GwaselError, ValueError) as exc:
        print(f"gwasel: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
