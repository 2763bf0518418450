"""Command-line front end.

Exit codes: 0 success, 1 self-test failure, 2 configuration error,
3 shape error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import selftest
from .analysis import flops_attention
from .attention import (
    ProjectionSet,
    ProjectionWeights,
    dense_from_projections,
    dense_map,
    fixture_weights,
    project,
)
from .errors import ConfigError, ShapeError
from .fusion import BspfResult, run_bspf
from .numerics import fixture_tokens, load_matrix, save_matrix
from .runconfig import RunConfig, load_run_config

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_SHAPE, EXIT_IO = 0, 1, 2, 3, 4


def fmt(x: float) -> float:
    """Round to 9 significant digits for diff-stable output."""
    return float(f"{x:.9g}")


@dataclass
class Inputs:
    tokens: np.ndarray  # possibly padded
    n_valid: int
    key_valid: np.ndarray
    weights: ProjectionWeights


def prepare_inputs(run: RunConfig, shared_qk: bool | None = None) -> Inputs:
    shared = run.bspf.shared_qk if shared_qk is None else shared_qk
    if run.tokens_file:
        tokens = load_matrix(run.tokens_file)
        if run.model_dim is not None and tokens.shape[1] != run.model_dim:
            raise ShapeError(
                f"model_dim={run.model_dim} but tokens_file has {tokens.shape[1]} columns"
            )
        if run.n_tokens is not None and tokens.shape[0] != run.n_tokens:
            raise ShapeError(f"n_tokens={run.n_tokens} but tokens_file has {tokens.shape[0]} rows")
    else:
        tokens = fixture_tokens(run.seed, run.n_tokens, run.model_dim)
    n, d = tokens.shape
    if d % run.n_heads:
        raise ConfigError(f"n_heads: model_dim={d} is not divisible by n_heads={run.n_heads}")
    omega = run.bspf.chunk_size
    padded = -(-n // omega) * omega
    if padded != n:
        if not run.pad:
            raise ConfigError(
                f"chunk_size: n_tokens={n} is not divisible by chunk_size={omega}; "
                f"pad to {padded} or set pad = true"
            )
        tokens = np.vstack([tokens, np.zeros((padded - n, d))])
    key_valid = np.arange(padded) < n
    return Inputs(tokens, n, key_valid, fixture_weights(run.seed, d, shared))


@dataclass
class HeadRun:
    output: np.ndarray
    dense: np.ndarray
    results: list[BspfResult]


def run_heads(run: RunConfig, inputs: Inputs, config=None, profile=None, with_dense=True) -> HeadRun:
    """Run every head independently and concatenate the head outputs."""
    config = run.bspf if config is None else config
    proj = project(inputs.tokens, inputs.weights)
    n = inputs.n_valid
    results, outs, dense = [], [], []
    for h in range(run.n_heads):
        head = proj.head(h, run.n_heads)
        res = run_bspf(head, config, threads=run.threads, key_valid=inputs.key_valid, profile=profile)
        results.append(res)
        outs.append(res.output[:n])
        if with_dense:
            valid = ProjectionSet(head.q[:n], head.k[:n], head.v[:n])
            dense.append(dense_from_projections(valid))
    output = np.hstack(outs)
    return HeadRun(output, np.hstack(dense) if with_dense else None, results)


def stats_document(run: RunConfig, config, hr: HeadRun) -> dict:
    n_padded = hr.results[0].attention.shape[0]
    d = int(hr.output.shape[1])
    kept = sum(r.stats.kept_entries for r in hr.results)
    total = sum(r.stats.kept_entries + r.stats.pruned_entries for r in hr.results)
    report = flops_attention(n_padded, d, config, run.n_heads)
    return {
        "n_tokens": int(hr.output.shape[0]),
        "n_tokens_padded": int(n_padded),
        "model_dim": d,
        "n_heads": run.n_heads,
        "config": {
            "chunk_size": config.chunk_size,
            "keep_ratio": fmt(config.keep_ratio),
            "metric": config.metric.value,
            "shared_qk": config.shared_qk,
            "prune_diagonal": config.prune_diagonal,
            "fusion_source": config.fusion_source.value,
            "normalization": config.normalization.value,
            "kernel": [fmt(x) for x in config.kernel.w.ravel()],
        },
        "retained_fraction": fmt(kept / total),
        "kept_entries": kept,
        "pruned_entries": total - kept,
        "fusion_events": sum(r.stats.fusion_events for r in hr.results),
        "mirror_mask_disagreement": sum(r.stats.mirror_mask_disagreement for r in hr.results),
        "max_abs_diff_vs_dense": fmt(float(np.max(np.abs(hr.output - hr.dense)))),
        "flop_report": report.to_dict(),
    }


def _write_text(path: str, text: str) -> None:
    Path(path).write_text(text)


def cmd_run(args) -> int:
    run = load_run_config(args.config)
    inputs = prepare_inputs(run)
    hr = run_heads(run, inputs)
    doc = stats_document(run, run.bspf, hr)
    text = json.dumps(doc, indent=2)
    if run.output:
        save_matrix(run.output, hr.output)
    if run.support:
        n = inputs.n_valid
        save_matrix(run.support, hr.results[0].support[:n, :n].astype(float))
    if run.stats:
        _write_text(run.stats, text + "\n")
    print(text)
    return EXIT_OK


def parse_ratios(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"ratios: cannot parse {text!r}") from None


SWEEP_HEADER = [
    "keep_ratio",
    "retained_fraction",
    "flops_total",
    "ratio_vs_dense",
    "value_aggregation_flops",
    "max_abs_diff_vs_dense",
]


def sweep_rows(run: RunConfig, ratios: list[float]) -> list[list]:
    inputs = prepare_inputs(run)
    rows = []
    for r in ratios:
        config = run.bspf.with_(keep_ratio=r)
        hr = run_heads(run, inputs, config)
        doc = stats_document(run, config, hr)
        rep = doc["flop_report"]
        rows.append([
            fmt(r),
            doc["retained_fraction"],
            rep["total"],
            rep["ratio_vs_dense"],
            rep["stages"]["value_aggregation"],
            doc["max_abs_diff_vs_dense"],
        ])
    return rows


def cmd_sweep(args) -> int:
    run = load_run_config(args.config)
    ratios = parse_ratios(args.ratios)
    rows = sweep_rows(run, ratios)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    writer.writerows(rows)
    out = args.out or run.sweep_csv
    if out:
        _write_text(out, buf.getvalue())
    print(buf.getvalue(), end="")
    return EXIT_OK


def bench_document(run: RunConfig, repeats: int) -> dict:
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    variants = []
    for name, shared in (("bspf", False), ("bspf_symmetric", True)):
        inputs = prepare_inputs(run, shared_qk=shared)
        variants.append((name, inputs, run.bspf.with_(shared_qk=shared)))

    rows = []
    dense_inputs = variants[0][1]
    proj = project(dense_inputs.tokens[: dense_inputs.n_valid], dense_inputs.weights)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = np.hstack([dense_from_projections(proj.head(h, run.n_heads)) for h in range(run.n_heads)])
        times.append(time.perf_counter() - t0)
    rows.append(_bench_row("dense", times, out, None, {}))

    for name, inputs, config in variants:
        times, stage_times = [], []
        for _ in range(repeats):
            prof: dict = {}
            t0 = time.perf_counter()
            hr = run_heads(run, inputs, config, profile=prof, with_dense=False)
            times.append(time.perf_counter() - t0)
            stage_times.append(prof)
        stages = {
            k: statistics.median(p[k] for p in stage_times) for k in stage_times[0]
        }
        retained = hr.results[0].stats.retained_fraction
        rows.append(_bench_row(name, times, hr.output, retained, stages))
    return {
        "n_tokens": int(variants[0][1].n_valid),
        "chunk_size": run.bspf.chunk_size,
        "keep_ratio": fmt(run.bspf.keep_ratio),
        "repeats": repeats,
        "variants": rows,
    }


def _bench_row(name, times, output, retained, stages) -> dict:
    return {
        "variant": name,
        "median_s": statistics.median(times),
        "min_s": min(times),
        "stage_median_s": stages,
        # deterministic fields below
        "output_checksum": fmt(float(np.sum(output))),
        "retained_fraction": None if retained is None else fmt(retained),
    }


def cmd_bench(args) -> int:
    run = load_run_config(args.config)
    doc = bench_document(run, args.repeats)
    text = json.dumps(doc, indent=2)
    if args.out:
        _write_text(args.out, text + "\n")
    print(text)
    return EXIT_OK


def cmd_dump_map(args) -> int:
    run = load_run_config(args.config)
    inputs = prepare_inputs(run)
    hr = run_heads(run, inputs, with_dense=False)
    n = inputs.n_valid
    out_dir = Path(args.out_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    proj = project(inputs.tokens[:n], inputs.weights)
    written = []
    for h, res in enumerate(hr.results):
        suffix = "" if run.n_heads == 1 else f"_h{h}"
        head = proj.head(h, run.n_heads)
        for stem, mat in (
            ("dense_map", dense_map(head)),
            ("bspf_map", res.attention[:n, :n]),
            ("bspf_support", res.support[:n, :n].astype(float)),
        ):
            path = out_dir / f"{stem}{suffix}.txt"
            save_matrix(path, mat)
            written.append(str(path))
    print(json.dumps({"written": written}, indent=2))
    return EXIT_OK


def cmd_selftest(args) -> int:
    failures = selftest.run_all(verbose=True)
    return EXIT_SELFTEST if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bspf", description="Block-sparse pruned attention tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the pipeline once and report statistics")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep keep ratios and write a CSV table")
    p.add_argument("config")
    p.add_argument("--ratios", default="0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="time dense, pruned and symmetric pruned attention")
    p.add_argument("config")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("dump-map", help="write dense and pruned attention maps as matrix text")
    p.add_argument("config")
    p.add_argument("out_path")
    p.set_defaults(func=cmd_dump_map)

    p = sub.add_parser("selftest", help="run built-in oracle and invariant checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShapeError as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
