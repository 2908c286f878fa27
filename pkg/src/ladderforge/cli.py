"""ladderforge command line: synth, analyze, table, ladder, manifest, plotdata.

Exit codes: 0 success, 2 usage or input error, 3 numeric/degenerate data.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shlex
import string
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import formats
from .assembler import LadderQuery, build_multiplier_grid, generate_table, query_ladder
from .metrics import budget_sweep, comparison_report, matched_complexity_ladder
from .model import X265_PRESETS, DataError, psnr_from_mse, restrict_presets, validate_dataset
from .rdtfit import analyze_shot
from .synth import TABLE1_CRF, TABLE1_PRESETS, TABLE1_RESOLUTIONS, SynthConfig, gen_dataset
from .workers import ordered_map, worker_count

log = logging.getLogger("ladderforge")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

X265_TEMPLATE = (
    "x265 --no-progress --input-depth 10 --input-res {size} --fps {fps} --preset {preset} "
    "--tune psnr --crf {crf} --keyint 999 --min-keyint 999 --pools 1 -F 1 --no-scenecut "
    "--no-wpp {in} -o {out}"
)
TEMPLATE_FIELDS = frozenset({"size", "fps", "preset", "crf", "in", "out"})
MANIFEST_COLUMNS = ["shot_id", "preset_idx", "width", "height", "crf", "output", "cpu_file", "command"]
RESULT_COLUMNS = ["shot_id", "preset_idx", "width", "height", "crf", "output", "returncode", "cpu_user_s"]


class UsageError(DataError):
    pass


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return data


# -- synth --------------------------------------------------------------------

def cmd_synth(args) -> int:
    data = _load_json(args.config) if args.config else {}
    shots = data.pop("shots", 1)
    if args.shots is not None:
        shots = args.shots
    if not isinstance(shots, int) or shots < 1:
        raise UsageError(f"shot count must be a positive integer, got {shots!r}")
    cfg = SynthConfig.from_dict(data)
    cfg.validate()
    dataset = gen_dataset(cfg, shots, prefix=args.prefix)
    formats.write_dataset(dataset, formats.ensure_parent(args.out))
    log.info("wrote %d shots x %d points to %s", shots, cfg.grid_size, args.out)
    return EXIT_OK


# -- analyze ------------------------------------------------------------------

def cmd_analyze(args) -> int:
    shots = formats.read_dataset(args.dataset)
    if not shots:
        raise UsageError(f"{args.dataset}: no operating points")
    report = validate_dataset(shots)
    for msg in report.messages():
        log.error("%s", msg)
    if not report.ok:
        raise UsageError(f"{args.dataset}: {len(report.violations)} data problem(s)")
    if args.presets:
        shots = restrict_presets(shots, args.presets)
        empty = [s.shot_id for s in shots if not s.points]
        if empty:
            raise UsageError(f"no points left for shots {empty} after the preset filter")
    analyzed = ordered_map(analyze_shot, shots)
    formats.write_analysis(analyzed, formats.ensure_parent(args.out))
    fitted = sum(s.fit is not None for s in analyzed)
    log.info("analyzed %d shots (%d fitted)", len(analyzed), fitted)
    return EXIT_OK


# -- table --------------------------------------------------------------------

def cmd_table(args) -> int:
    shots = formats.read_analysis(args.analysis)
    if not shots:
        raise UsageError(f"{args.analysis}: analysis file has no shots")
    grid = build_multiplier_grid(shots, args.dedup_tol)
    table = generate_table(shots, grid)
    if args.compact:
        table = table.compact()
    meta = {"dedup_tol": repr(args.dedup_tol), "lambdas": grid.shape[0], "mus": grid.shape[1]}
    formats.write_table(table, formats.ensure_parent(args.out), meta)
    log.info("table: %d x %d grid, %d rows", grid.shape[0], grid.shape[1], len(table))
    return EXIT_OK


# -- ladder -------------------------------------------------------------------

def cmd_ladder(args) -> int:
    table = formats.read_table(args.table)
    reference = formats.read_ladder(args.reference) if args.reference else None
    summary = []
    scale = None
    if args.match_complexity:
        if reference is None:
            raise UsageError("--match-complexity needs --reference")
        rungs, scale, _ = matched_complexity_ladder(table, reference, args.tol)
        summary.append(f"budget_scale={scale!r}")
    else:
        targets = args.targets
        if targets is None:
            if reference is None:
                raise UsageError("give --targets or --reference")
            targets = tuple(r.target for r in reference)
        budget = args.budget
        if budget is not None and len(budget) == 1:
            budget = budget[0]
        rungs = query_ladder(table, LadderQuery(targets, args.tol, budget))
    if reference is not None and [r.target for r in reference] != [r.target for r in rungs]:
        raise UsageError("reference ladder targets differ from the query targets")
    absent = [r.target for r in rungs if r.representation is None]
    for t in absent:
        log.warning("no representation within tolerance of %g kbps", t)
    if reference is not None:
        row = comparison_report(rungs, reference, bit_depth=args.bit_depth)
        summary += [f"bd_rate_pct={row.bd_rate!r}", f"r_c_pct={row.complexity_ratio!r}",
                    f"rungs_compared={row.rungs}"]
        print(f"BD-rate {row.bd_rate:.3f}%  r_c {row.complexity_ratio:.2f}%  over {row.rungs} rungs")
    meta = {"rate_tolerance": repr(args.tol)}
    formats.write_ladder(rungs, formats.ensure_parent(args.out), meta, reference, summary, args.bit_depth)
    return EXIT_OK


# -- manifest -----------------------------------------------------------------

def check_template(template: str) -> None:
    try:
        names = {f for _, f, _, _ in string.Formatter().parse(template) if f is not None}
    except ValueError as exc:
        raise UsageError(f"malformed template: {exc}") from None
    unknown = names - TEMPLATE_FIELDS
    if unknown:
        raise UsageError(f"unknown template placeholder(s): {sorted(unknown)}")
    missing = TEMPLATE_FIELDS - names
    if missing:
        raise UsageError(f"template lacks placeholder(s): {sorted(missing)}")


def _preset_name(p) -> tuple[int, str]:
    if isinstance(p, str):
        if p not in X265_PRESETS:
            raise UsageError(f"unknown preset {p!r}")
        return X265_PRESETS.index(p), p
    if not isinstance(p, int) or not 0 <= p < len(X265_PRESETS):
        raise UsageError(f"preset number out of range: {p!r}")
    return p, X265_PRESETS[p]


def manifest_jobs(spec: dict, template: str) -> list[dict]:
    """One job per (shot, preset, resolution, crf) in that nesting order."""
    check_template(template)
    shots = spec.get("shots")
    if not shots:
        raise UsageError("dataset spec needs a non-empty 'shots' list")
    presets = [_preset_name(p) for p in spec.get("presets", TABLE1_PRESETS)]
    resolutions = [tuple(map(int, wh)) for wh in spec.get("resolutions", TABLE1_RESOLUTIONS)]
    lo, hi, step = spec.get("crf", TABLE1_CRF)
    if step <= 0 or hi < lo:
        raise UsageError(f"bad crf range {lo}..{hi} step {step}")
    in_pattern = spec.get("input_pattern", "{shot}_{width}x{height}.yuv")
    out_pattern = spec.get("output_pattern", "{shot}_p{preset}_{width}x{height}_crf{crf}.hevc")
    jobs = []
    for shot in shots:
        try:
            sid, fps = shot["id"], shot["fps"]
        except (KeyError, TypeError):
            raise UsageError(f"shot entry needs 'id' and 'fps': {shot!r}") from None
        for idx, name in presets:
            for w, h in resolutions:
                for crf in range(lo, hi + 1, step):
                    keys = {"shot": sid, "preset": idx, "width": w, "height": h, "crf": crf}
                    src = shot.get("input", in_pattern).format(**keys)
                    out = out_pattern.format(**keys)
                    cmd = template.format(size=f"{w}x{h}", fps=fps, preset=name, crf=crf,
                                          **{"in": shlex.quote(src), "out": shlex.quote(out)})
                    jobs.append({"shot_id": sid, "preset_idx": idx, "width": w, "height": h,
                                 "crf": crf, "output": out, "cpu_file": out + ".cpu", "command": cmd})
    return jobs


def _timed(command: str) -> str:
    return f"/usr/bin/time -f %U -o {{cpu}} {command}"


def run_job(job: dict) -> tuple[int, float]:
    """Run one encode, returning (exit status, child user CPU seconds)."""
    proc = subprocess.Popen(shlex.split(job["command"]), stdout=subprocess.DEVNULL)
    _, status, usage = os.wait4(proc.pid, 0)
    proc.returncode = os.waitstatus_to_exitcode(status)
    return proc.returncode, usage.ru_utime


def cmd_manifest(args) -> int:
    spec = _load_json(args.spec)
    template = args.template or X265_TEMPLATE
    jobs = manifest_jobs(spec, template)
    path = formats.ensure_parent(args.out)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# ladderforge-v1 manifest\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for job in jobs:
            wrapped = _timed(job["command"]).replace("{cpu}", shlex.quote(job["cpu_file"]))
            w.writerow([job[c] for c in MANIFEST_COLUMNS[:-1]] + [wrapped])
    log.info("wrote %d jobs to %s", len(jobs), args.out)
    if args.execute:
        with ThreadPoolExecutor(max_workers=max(1, min(worker_count(), args.jobs or worker_count()))) as pool:
            results = list(pool.map(run_job, jobs))
        with open(args.execute, "w", newline="", encoding="utf-8") as fh:
            fh.write("# ladderforge-v1 results\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULT_COLUMNS)
            for job, (code, cpu) in zip(jobs, results):
                w.writerow([job[c] for c in RESULT_COLUMNS[:6]] + [code, formats.fmt(cpu)])
        failed = sum(code != 0 for code, _ in results)
        if failed:
            log.error("%d of %d jobs failed", failed, len(jobs))
            return EXIT_USAGE
    return EXIT_OK


# -- plotdata -----------------------------------------------------------------

def _preset_lookup(path) -> dict[str, list[int]]:
    shots = formats.read_analysis(path) if formats.read_header(path)[0] == "analysis" else None
    if shots is None:
        raise UsageError(f"{path}: preset histograms need an analysis file")
    return {s.shot_id: [op.params.preset_idx for op in s.points] for s in shots}


def _histogram(shot_ids, selection, lookup, presets) -> list[int]:
    counts = dict.fromkeys(presets, 0)
    for sid, i in zip(shot_ids, selection):
        try:
            counts[lookup[sid][i]] += 1
        except (KeyError, IndexError):
            raise UsageError(f"selection {sid}={i} not found in the analysis file") from None
    return [counts[p] for p in presets]


def cmd_plotdata(args) -> int:
    kind, _ = formats.read_header(args.input)
    lookup = _preset_lookup(args.analysis) if args.analysis else None
    presets = sorted({p for v in lookup.values() for p in v}) if lookup else []
    hist_cols = [f"preset_{p}" for p in presets]
    path = formats.ensure_parent(args.out)
    fmt = formats.fmt

    if kind == "table" and args.sweep:
        if not args.targets:
            raise UsageError("--sweep needs --targets")
        series = budget_sweep(formats.read_table(args.input), args.targets, args.sweep,
                              args.tol, args.bit_depth)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("# ladderforge-v1 plotdata source=sweep\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["budget_pct", "complexity_pct", "bd_rate_pct", "rungs"])
            for p in series:
                w.writerow([fmt(100.0 * p.budget_fraction), fmt(p.complexity_ratio), fmt(p.bd_rate), p.rungs])
        return EXIT_OK

    if kind == "table":
        table = formats.read_table(args.input)
        t_ref = float(np.max(table.agg_time))
        head = ["lambda", "mu"]
        rows = [([fmt(table.lambdas[k]), fmt(table.mus[k])], table.agg_rate[k], table.agg_distortion[k],
                 100.0 * table.agg_time[k] / t_ref, table.shot_ids, table.selections[k])
                for k in range(len(table))]
    elif kind == "ladder":
        rungs = [r for r in formats.read_ladder(args.input) if r.representation is not None]
        if not rungs:
            raise UsageError(f"{args.input}: ladder has no representations")
        t_ref = max(r.representation.agg_time for r in rungs)
        head = ["target_kbps"]
        rows = [([fmt(r.target)], r.representation.agg_rate, r.representation.agg_distortion,
                  100.0 * r.representation.agg_time / t_ref, r.representation.shot_ids,
                  r.representation.selection) for r in rungs]
    else:
        raise UsageError(f"{args.input}: cannot plot a {kind} file")

    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# ladderforge-v1 plotdata source={kind}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head + ["log2_rate", "psnr_db", "complexity_pct"] + hist_cols)
        for key, rate, dist, cpct, ids, sel in rows:
            cells = key + [fmt(formats.log2_or_nan(rate)), fmt(psnr_from_mse(dist, args.bit_depth)), fmt(cpct)]
            if lookup is not None:
                cells += _histogram(ids, sel, lookup, presets)
            w.writerow(cells)
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ladderforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic operating-point dataset")
    p.add_argument("config", nargs="?", help="JSON generator config (defaults when omitted)")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("-n", "--shots", type=int, help="number of shots (overrides the config's 'shots')")
    p.add_argument("--prefix", default="shot", help="shot id prefix")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="hull filtering, model fit and multipliers per shot")
    p.add_argument("dataset")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--presets", type=_int_list, help="keep only these preset numbers, e.g. 0,8")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("table", help="build the representation table over the multiplier grid")
    p.add_argument("analysis")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--dedup-tol", type=float, default=1e-3, help="log-distance merge tolerance")
    p.add_argument("--compact", action="store_true", help="keep one row per distinct selection")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("ladder", help="query a table for a bitrate ladder")
    p.add_argument("table")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--targets", type=_float_list, help="target rates in kbps, ascending")
    p.add_argument("--tol", type=float, default=0.10, help="relative rate tolerance")
    p.add_argument("--budget", type=_float_list, help="CPU-second cap, one value or one per target")
    p.add_argument("--reference", help="ladder file to compare against")
    p.add_argument("--match-complexity", action="store_true",
                   help="scale the reference rung times into budgets matching its total CPU")
    p.add_argument("--bit-depth", type=int, default=10, choices=(8, 10, 12))
    p.set_defaults(func=cmd_ladder)

    p = sub.add_parser("manifest", help="write encoder job lines for a dataset spec")
    p.add_argument("spec", help="JSON with shots (id, fps) and optional grid overrides")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--template", help="encoder command with {size} {fps} {preset} {crf} {in} {out}")
    p.add_argument("--execute", metavar="RESULTS", help="run the jobs and write per-job user CPU here")
    p.add_argument("-j", "--jobs", type=int, help="concurrent encodes when executing")
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("plotdata", help="emit plot series from a table or ladder file")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--analysis", help="analysis file, enables preset histogram columns")
    p.add_argument("--sweep", type=_float_list, help="budget fractions for a BD-rate sweep (table input)")
    p.add_argument("--targets", type=_float_list)
    p.add_argument("--tol", type=float, default=0.10)
    p.add_argument("--bit-depth", type=int, default=10, choices=(8, 10, 12))
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ArithmeticError as exc:
        print(f"ladderforge: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"ladderforge: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
