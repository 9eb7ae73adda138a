"""Command-line entry point: gen, mask, train, sweep, verify.

Configuration is a flat JSON file plus flags named exactly like the config
fields; an explicit flag always wins over the file, which wins over the
defaults. Exit codes: 0 success, 1 usage error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from .encoding import DegenerateVectorError
from .fairness import UndefinedMetricError, build_report
from .graph import (
    AttributeTableError,
    EdgeListFormatError,
    SensitiveColumn,
    apply_missing_mask,
    load_attributes,
    load_edge_list,
    make_split,
    mask_file_text,
    parse_mask_file,
    to_edge_list_text,
)
from .limits import (
    DegenerateAlignmentError,
    NotEstimableError,
    RepeatedDominantError,
    build_alignment_battery,
    build_multiplicity_battery,
    estimate_decay_rate,
    limit_check,
    multiplicity_bound_check,
)
from .model import (
    TrainConfig,
    TrainingDivergedError,
    predict,
    prepare_inputs,
    save_checkpoint,
    train,
)
from .spectral import ConvergenceError, dense_eigendecomposition
from .synthetic import SyntheticSpec, attributes_to_csv_text, gen_synthetic

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_VERIFY = 3

_TRAIN_FIELD_TYPES = {f.name: f.type for f in dataclass_fields(TrainConfig)}


class _Parser(argparse.ArgumentParser):
    # the CLI contract reserves exit code 2 for numerical failures
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _atomic_write_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _json_text(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _add_train_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=str, default=None,
                        help="flat JSON config file; flags override it")
    parser.add_argument("--m", type=int, default=None)
    parser.add_argument("--k_hops", type=int, default=None)
    parser.add_argument("--layers", type=int, default=None)
    parser.add_argument("--hidden", type=int, default=None)
    parser.add_argument("--heads", type=int, default=None)
    parser.add_argument("--d_m", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--weight_decay", type=float, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--missing_rate", type=float, default=None)
    parser.add_argument("--train_size", type=int, default=None)
    parser.add_argument("--sensitive_in_features", type=int, choices=(0, 1), default=None)
    parser.add_argument("--spectral_fusion", type=int, choices=(0, 1), default=None)


_RUN_KEYS = ("edges", "attributes", "mask", "dataset", "out_dir",
             "missing_rates", "seeds")


def _merged_config(args) -> dict:
    merged: dict = {}
    if getattr(args, "config", None):
        loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a flat JSON object")
        unknown = set(loaded) - set(_TRAIN_FIELD_TYPES) - set(_RUN_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(loaded)
    for name in _TRAIN_FIELD_TYPES:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    for name in _RUN_KEYS:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    return merged


def _train_config_from(merged: dict, **overrides) -> TrainConfig:
    kwargs = {k: v for k, v in merged.items() if k in _TRAIN_FIELD_TYPES}
    kwargs.update(overrides)
    for key in ("sensitive_in_features", "spectral_fusion"):
        if key in kwargs:
            kwargs[key] = bool(kwargs[key])
    config = TrainConfig(**kwargs)
    config.validate()
    return config


def _load_dataset(merged: dict):
    edges_path = merged.get("edges")
    attrs_path = merged.get("attributes")
    if not edges_path or not attrs_path:
        raise ValueError("both an edge-list file and an attribute CSV are required")
    graph = load_edge_list(Path(edges_path).read_text(encoding="utf-8"))
    attrs, sensitive, labels = load_attributes(
        Path(attrs_path).read_text(encoding="utf-8"), expected_n=graph.n)
    dataset = merged.get("dataset") or Path(attrs_path).stem
    return graph, attrs, sensitive, labels, dataset


def _run_single_training(graph, attrs, sensitive, labels, dataset, merged: dict,
                         config: TrainConfig):
    """Train once and return (report, params). Masking follows the config."""
    if merged.get("mask"):
        run_sensitive = parse_mask_file(
            Path(merged["mask"]).read_text(encoding="utf-8"), sensitive)
        # no nominal rate when masking comes from a file; report the realised one
        report_rate = float((~run_sensitive.present).mean())
    elif config.missing_rate > 0.0:
        run_sensitive = apply_missing_mask(sensitive, config.missing_rate, config.seed)
        report_rate = config.missing_rate
    else:
        run_sensitive = sensitive
        report_rate = 0.0
    split = make_split(graph.n, config.train_size, config.seed)
    started = time.perf_counter()
    data = prepare_inputs(graph, attrs, run_sensitive, labels, split, config)
    params, _history = train(data, config)
    yhat = predict(params, data, config)
    runtime = time.perf_counter() - started
    report = build_report(
        yhat, labels, sensitive.values, split.test,
        dataset=dataset, missing_rate=report_rate, seed=config.seed,
        config=config.as_dict(), runtime_s=runtime,
    )
    return report, params


def cmd_gen(args) -> int:
    params: dict = {}
    if args.p is not None:
        params["p"] = args.p
    if args.block_sizes:
        params["block_sizes"] = _int_list(args.block_sizes)
    if args.p_in is not None:
        params["p_in"] = args.p_in
    if args.p_out is not None:
        params["p_out"] = args.p_out
    if args.sizes:
        params["sizes"] = _int_list(args.sizes)
    spec = SyntheticSpec(
        kind=args.kind, n=args.n, params=params,
        sensitive_correlation=args.sensitive_correlation,
        label_flip=args.label_flip, noise_scale=args.noise_scale,
        sensitive_classes=args.sensitive_classes, seed=args.seed,
    )
    graph, attrs, sensitive, labels = gen_synthetic(spec)
    edges_path = Path(args.out_edges)
    attrs_path = Path(args.out_attributes)
    edges_path.parent.mkdir(parents=True, exist_ok=True)
    attrs_path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(edges_path, to_edge_list_text(graph))
    _atomic_write_text(attrs_path, attributes_to_csv_text(attrs, sensitive, labels))
    print(f"wrote {edges_path} ({graph.n} nodes, {graph.edge_count} edges) and {attrs_path}")
    return EXIT_OK


def cmd_mask(args) -> int:
    _, sensitive, _ = load_attributes(Path(args.attributes).read_text(encoding="utf-8"))
    masked = apply_missing_mask(sensitive, args.rate, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(out, mask_file_text(masked))
    print(f"wrote {out} ({int((~masked.present).sum())} masked of {masked.n})")
    return EXIT_OK


def cmd_train(args) -> int:
    merged = _merged_config(args)
    config = _train_config_from(merged)
    graph, attrs, sensitive, labels, dataset = _load_dataset(merged)
    out_dir = Path(merged.get("out_dir") or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    report, params = _run_single_training(graph, attrs, sensitive, labels,
                                          dataset, merged, config)
    report_path = out_dir / "report.json"
    _atomic_write_text(report_path, _json_text(report.to_json_dict()))
    ckpt_path = out_dir / "checkpoint.npz"
    tmp = ckpt_path.with_name(ckpt_path.name + ".tmp")
    with open(tmp, "wb") as handle:
        save_checkpoint(handle, params, config)
    os.replace(tmp, ckpt_path)
    print(f"acc={report.accuracy:.4f} d_sp={report.delta_sp:.4f}% "
          f"d_eo={report.delta_eo:.4f}% -> {report_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    merged = _merged_config(args)
    if merged.get("mask"):
        raise ValueError("sweep masks by rate; a fixed mask file conflicts with the grid")
    rates = merged.get("missing_rates") or [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
    if isinstance(rates, str):
        rates = _float_list(rates)
    seeds = merged.get("seeds") or [0]
    if isinstance(seeds, str):
        seeds = _int_list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    for rate in rates:
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"missing rate {rate} outside [0, 1)")
    graph, attrs, sensitive, labels, dataset = _load_dataset(merged)
    out_dir = Path(merged.get("out_dir") or ".")
    out_dir.mkdir(parents=True, exist_ok=True)

    by_rate: dict[float, list] = {rate: [] for rate in rates}
    for rate in rates:
        for seed in seeds:
            config = _train_config_from(merged, missing_rate=rate, seed=seed)
            report, _params = _run_single_training(graph, attrs, sensitive, labels,
                                                   dataset, merged, config)
            name = f"report_r{rate:g}_s{seed}.json"
            _atomic_write_text(out_dir / name, _json_text(report.to_json_dict()))
            by_rate[rate].append(report)
            print(f"rate={rate:g} seed={seed} acc={report.accuracy:.4f} "
                  f"d_sp={report.delta_sp:.4f}%")

    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["missing_rate", "runs", "acc_mean", "acc_std",
                     "d_sp_mean", "d_sp_std", "d_eo_mean", "d_eo_std"])
    for rate in rates:
        accs = np.array([r.accuracy for r in by_rate[rate]])
        dsps = np.array([r.delta_sp for r in by_rate[rate]])
        deos = np.array([r.delta_eo for r in by_rate[rate]])
        writer.writerow([
            f"{rate:g}", len(accs),
            f"{accs.mean():.6f}", f"{accs.std():.6f}",
            f"{dsps.mean():.6f}", f"{dsps.std():.6f}",
            f"{deos.mean():.6f}", f"{deos.std():.6f}",
        ])
    _atomic_write_text(out_dir / "aggregate.csv", buffer.getvalue())
    print(f"wrote {out_dir / 'aggregate.csv'} ({len(rates)} rates x {len(seeds)} seeds)")
    return EXIT_OK


def _verify_battery(args):
    """Graphs to verify: an explicit file, or the seeded synthetic battery."""
    if args.edges:
        graph = load_edge_list(Path(args.edges).read_text(encoding="utf-8"))
        if args.attributes:
            _, sensitive, _ = load_attributes(
                Path(args.attributes).read_text(encoding="utf-8"), expected_n=graph.n)
            if args.mask:
                sensitive = parse_mask_file(
                    Path(args.mask).read_text(encoding="utf-8"), sensitive)
        else:
            rng = np.random.default_rng(args.seed)
            values = (rng.random(graph.n) < 0.5).astype(np.int64)
            if values.sum() == 0:
                values[0] = 1
            sensitive = SensitiveColumn(values=values,
                                        present=np.ones(graph.n, dtype=bool))
        oracle = dense_eigendecomposition(graph) if graph.n <= 512 else None
        return [(Path(args.edges).stem, graph, sensitive, oracle)]
    return build_alignment_battery(args.suite_size, seed=args.seed)


def cmd_verify(args) -> int:
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    battery = _verify_battery(args)
    out_dir = Path(args.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    summary: dict = {}
    for variant in variants:
        stats = {"graphs": 0, "passed": 0, "failed": 0, "skipped": 0,
                 "max_residual": 0.0}
        if variant == "thm3":
            stats["max_gap"] = 0.0
        for graph_id, graph, sensitive, oracle in battery:
            try:
                series = limit_check(variant, graph, sensitive,
                                     k_max=args.k_max, trunc=oracle)
            except (RepeatedDominantError, DegenerateAlignmentError,
                    DegenerateVectorError):
                stats["skipped"] += 1
                continue
            stats["graphs"] += 1
            for k, cos_k, residual in zip(series.hops, series.cosines, series.residuals):
                rows.append([variant, graph_id, graph.n, int(k),
                             f"{cos_k:.12e}", f"{series.limit:.12e}", f"{residual:.12e}"])
            if series.oscillating:
                stats["skipped"] += 1
                stats["graphs"] -= 1
                continue
            if variant == "thm3":
                gap = float(series.companion_gap[-1])
                stats["max_gap"] = max(stats["max_gap"], gap)
                ok = gap <= args.tol
            else:
                ok = float(series.residuals[-1]) <= args.tol
            stats["max_residual"] = max(stats["max_residual"],
                                        float(series.residuals[-1]))
            stats["passed" if ok else "failed"] += 1
        # graphs outside the premises are skipped, not failed
        stats["pass"] = stats["failed"] == 0
        summary[variant] = stats

    decay = {"checked": 0, "passed": 0, "failed": 0, "skipped": 0}
    for graph_id, graph, sensitive, oracle in battery:
        if oracle is None:
            decay["skipped"] += 1
            continue
        try:
            series = limit_check("thm1", graph, sensitive, k_max=args.k_max, trunc=oracle)
            empirical, predicted = estimate_decay_rate(series, oracle)
        except (RepeatedDominantError, DegenerateAlignmentError,
                DegenerateVectorError, NotEstimableError):
            decay["skipped"] += 1
            continue
        usable = series.residuals[series.residuals > 1e-12]
        if len(usable) == 0 or usable.max() / usable.min() < 1e4:
            decay["skipped"] += 1
            continue
        decay["checked"] += 1
        ok = abs(empirical - abs(predicted)) <= args.decay_tolerance * abs(predicted)
        decay["passed" if ok else "failed"] += 1
    decay["pass"] = decay["failed"] == 0
    summary["decay"] = decay

    if args.multiplicity_count > 0:
        mult = {"checked": 0, "passed": 0, "failed": 0, "degenerate": 0}
        for graph_id, graph, sensitive in build_multiplicity_battery(
                args.multiplicity_count, seed=args.seed):
            bound = multiplicity_bound_check(graph, sensitive)
            if bound.degenerate:
                mult["degenerate"] += 1
                continue
            mult["checked"] += 1
            mult["passed" if bound.holds else "failed"] += 1
        mult["pass"] = mult["failed"] == 0
        summary["multiplicity"] = mult

    ok = all(entry["pass"] for entry in summary.values())
    summary["ok"] = ok

    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["variant", "graph_id", "n", "k", "cos_k", "limit", "residual"])
    writer.writerows(rows)
    _atomic_write_text(out_dir / "verify_series.csv", buffer.getvalue())
    _atomic_write_text(out_dir / "verify_summary.json", _json_text(summary))

    for name, entry in summary.items():
        if isinstance(entry, dict):
            print(f"{name}: {'PASS' if entry['pass'] else 'FAIL'} {entry}")
    print(f"overall: {'PASS' if ok else 'FAIL'} -> {out_dir / 'verify_summary.json'}")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairspect",
                     description="fairness-aware spectral graph encoding pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a synthetic edge list + attribute CSV")
    # the custom kind needs an explicit edge list and only makes sense in
    # library code, so the command exposes the generative kinds
    gen.add_argument("--kind", required=True,
                     choices=("erdos_renyi", "sbm", "disjoint_cliques"))
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--p", type=float, default=None)
    gen.add_argument("--block_sizes", type=str, default=None)
    gen.add_argument("--p_in", type=float, default=None)
    gen.add_argument("--p_out", type=float, default=None)
    gen.add_argument("--sizes", type=str, default=None)
    gen.add_argument("--sensitive_correlation", type=float, default=1.0)
    gen.add_argument("--label_flip", type=float, default=0.0)
    gen.add_argument("--noise_scale", type=float, default=0.1)
    gen.add_argument("--sensitive_classes", type=int, default=2)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out_edges", required=True)
    gen.add_argument("--out_attributes", required=True)
    gen.set_defaults(func=cmd_gen)

    mask = sub.add_parser("mask", help="write a missing-node mask file")
    mask.add_argument("--attributes", required=True)
    mask.add_argument("--rate", type=float, required=True)
    mask.add_argument("--seed", type=int, default=0)
    mask.add_argument("--out", required=True)
    mask.set_defaults(func=cmd_mask)

    tr = sub.add_parser("train", help="train once, write report + checkpoint")
    tr.add_argument("--edges", type=str, default=None)
    tr.add_argument("--attributes", type=str, default=None)
    tr.add_argument("--mask", type=str, default=None)
    tr.add_argument("--dataset", type=str, default=None)
    tr.add_argument("--out_dir", type=str, default=None)
    _add_train_flags(tr)
    tr.set_defaults(func=cmd_train)

    sw = sub.add_parser("sweep", help="rate x seed grid of runs + aggregate CSV")
    sw.add_argument("--edges", type=str, default=None)
    sw.add_argument("--attributes", type=str, default=None)
    sw.add_argument("--mask", type=str, default=None)
    sw.add_argument("--dataset", type=str, default=None)
    sw.add_argument("--out_dir", type=str, default=None)
    sw.add_argument("--missing_rates", type=str, default=None)
    sw.add_argument("--seeds", type=str, default=None)
    _add_train_flags(sw)
    sw.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", help="run the alignment-limit checks")
    ver.add_argument("--edges", type=str, default=None)
    ver.add_argument("--attributes", type=str, default=None)
    ver.add_argument("--mask", type=str, default=None)
    ver.add_argument("--variants", type=str, default="lemma1,thm1,thm2,thm3")
    ver.add_argument("--k_max", type=int, default=40)
    ver.add_argument("--tol", type=float, default=1e-6)
    ver.add_argument("--decay_tolerance", type=float, default=0.10)
    ver.add_argument("--suite_size", type=int, default=20)
    ver.add_argument("--multiplicity_count", type=int, default=10)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--out_dir", type=str, default=None)
    ver.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConvergenceError, TrainingDivergedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EdgeListFormatError, AttributeTableError, UndefinedMetricError,
            DegenerateVectorError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
