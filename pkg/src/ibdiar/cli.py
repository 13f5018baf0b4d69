"""Command-line interface.

Subcommands: ``diarize``, ``batch``, ``score``, ``bench``, ``synth`` and
``inspect-checkpoint``.  Exit status is 0 on success, 1 when the pipeline
fails on some input and 2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .annotation import ReferenceAnnotation, read_rttm, write_rttm
from .corpus import load_input, read_manifest
from .exceptions import DiarizationError, ParameterError
from .fusion import StreamWeights
from .network import ModelCheckpoint
from .pipeline import (
    FIGURE_STAGES,
    STAGES,
    PipelineConfig,
    RunReport,
    System,
    run_ib,
    run_system,
    run_tpib,
)
from .scoring import RtfBreakdown, relative_improvement, score, summarize_runs
from .synth import SynthSpec, make_corpus, write_corpus
from .transfer import TransferState

log = logging.getLogger("ibdiar")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

_SWEEP = re.compile(r"^sweep(?:\((?P<step>[0-9.]+)\))?$")


class UsageError(Exception):
    pass


class PipelineFailure(Exception):
    pass


def _parse_weights(text: str):
    """``0.1,0.9`` -> StreamWeights; ``sweep`` / ``sweep(0.1)`` -> step."""
    m = _SWEEP.match(text.strip())
    if m:
        return None, float(m.group("step") or 0.1)
    try:
        a, b = (float(v) for v in text.split(","))
        return StreamWeights(a, b), None
    except (ValueError, ParameterError) as exc:
        raise UsageError(f"bad --weights {text!r}: {exc}") from None


def _load_config(args) -> PipelineConfig:
    base = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    cfg = PipelineConfig.from_dict(base)
    over = {}
    if getattr(args, "system", None):
        over["system"] = System(args.system)
    if getattr(args, "rng_seed", None) is not None:
        over["seed"] = args.rng_seed
    if getattr(args, "nmi_threshold", None) is not None:
        over["nmi_threshold"] = args.nmi_threshold
    if getattr(args, "collar", None) is not None:
        over["collar_s"] = args.collar
    if getattr(args, "finetune_epochs", None) is not None:
        over["finetune"] = replace(cfg.finetune, max_epochs=args.finetune_epochs)
    if getattr(args, "weights", None):
        w, step = _parse_weights(args.weights)
        if w is not None:
            over["fusion_weights"] = w
        over["sweep_step"] = step
    return replace(cfg, **over)


def _show(args, cfg: PipelineConfig | None, extra: dict | None = None) -> int:
    doc = {"ibdiar_version": __version__, "command": args.command}
    if cfg is not None:
        doc["pipeline"] = cfg.to_dict()
        doc["pipeline"]["effective_fusion_weights"] = str(cfg.weights)
    opts = {k: v for k, v in vars(args).items() if k not in ("func", "show_config", "command")}
    doc["options"] = opts
    if extra:
        doc.update(extra)
    json.dump(doc, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")
    return EXIT_OK


def _write_json(path, doc):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=str)
        fh.write("\n")


def _store_for(args, cfg: PipelineConfig) -> TransferState | None:
    if cfg.system not in (System.TPIB_ITL, System.TPIB_ITL_FROZEN):
        return None
    if not args.transfer_dir:
        raise UsageError("transfer store required: pass --transfer-dir for tpib-itl systems")
    state = TransferState.load(args.transfer_dir)
    seed_path = getattr(args, "seed_checkpoint", None)
    if seed_path:
        if not state.empty:
            raise UsageError("--seed-checkpoint given but the transfer store already has a seed")
        state.current = ModelCheckpoint.load(seed_path)
        state._archive[state.current.id] = state.current
    return state


# -- diarize ---------------------------------------------------------------

def cmd_diarize(args) -> int:
    cfg = _load_config(args)
    if args.show_config:
        return _show(args, cfg)
    if not os.path.exists(args.input):
        raise UsageError(f"no such input file: {args.input}")
    rec_id = args.id or os.path.splitext(os.path.basename(args.input))[0]
    inp = load_input(rec_id, args.input, args.reference, args.mask)
    state = _store_for(args, cfg)
    if cfg.system is System.TPIB_ITL_FROZEN:
        if state.empty:
            raise UsageError("frozen mode needs a transfer store that already holds a checkpoint")
        state.freeze()
    try:
        if cfg.system in (System.IB, System.TPIB):
            fn = run_ib if cfg.system is System.IB else run_tpib
            hyp, entry = fn(inp, cfg)
            entries, failures = [entry], []
        else:
            hyps, report = run_system([inp], replace(cfg, system=System.TPIB_ITL), state)
            if report.failures:
                raise PipelineFailure(report.failures[0][1])
            hyp, entries, failures = hyps[0], report.entries, report.failures
    except DiarizationError as exc:
        raise PipelineFailure(str(exc)) from exc
    if cfg.system is System.TPIB_ITL:
        state.save(args.transfer_dir)
    out = args.out or f"{rec_id}.rttm"
    write_rttm(out, hyp)
    report = RunReport(cfg.system.value, entries, state, failures)
    if args.report:
        _write_json(args.report, report.to_dict())
    e = entries[0]
    msg = f"{rec_id}: {hyp.num_speakers} clusters, RTF {e.total_time_s / e.duration_s:.3f}"
    if e.score is not None:
        msg += f", SER {e.score.ser_pct:.2f}%, DER {e.score.der_pct:.2f}%"
    print(msg)
    return EXIT_OK


# -- batch -----------------------------------------------------------------

def _one(job):
    inp, cfg = job
    fn = run_ib if cfg.system is System.IB else run_tpib
    try:
        return fn(inp, cfg), None
    except DiarizationError as exc:
        return None, (inp.id, str(exc))


def _run_parallel(recs, cfg, jobs):
    report = RunReport(cfg.system.value)
    hyps = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for res, failure in pool.map(_one, [(r, cfg) for r in recs]):
            if failure:
                report.failures.append(failure)
                continue
            hyps.append(res[0])
            report.entries.append(res[1])
    return hyps, report


def ser_grid(report: RunReport) -> tuple[list[str], list[list]]:
    """Rows ``[recording, ser@w0, ..., ser@wN, Avg]`` plus a corpus-mean row."""
    entries = [e for e in report.entries if e.scores_by_weight]
    if not entries:
        return [], []
    cols = list(entries[0].scores_by_weight)
    header = ["recording"] + cols + ["Avg"]
    rows = []
    for e in entries:
        vals = [e.scores_by_weight[c].ser_pct for c in cols]
        rows.append([e.recording_id] + vals + [float(np.mean(vals))])
    means = [float(np.mean([r[i] for r in rows])) for i in range(1, len(header))]
    rows.append(["mean"] + means)
    return header, rows


def rtf_summary(report: RunReport) -> dict:
    per = report.stage_rtf()
    return {"system": report.system, "rtf": report.rtf,
            "stages": {k: per[k] for k in FIGURE_STAGES},
            "feature_extraction": per["feature_extraction"],
            "latent_extraction": per["latent_extraction"]}


def cmd_batch(args) -> int:
    cfg = _load_config(args)
    if args.show_config:
        return _show(args, cfg)
    corpus = read_manifest(args.manifest)
    recs = corpus.ordered(args.order)
    state = _store_for(args, cfg)
    if cfg.system is System.TPIB_ITL_FROZEN:
        if not args.dev_manifest:
            raise UsageError("tpib-itl-frozen needs --dev-manifest")
        dev = read_manifest(args.dev_manifest).ordered(args.order)
        hyps, report = run_system(recs, cfg, state, dev_corpus=dev)
    elif cfg.system in (System.IB, System.TPIB) and args.jobs > 1:
        hyps, report = _run_parallel(recs, cfg, args.jobs)
    else:
        hyps, report = run_system(recs, cfg, state)
    if state is not None:
        state.save(args.transfer_dir)

    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    for e in report.entries:
        write_rttm(os.path.join(out, f"{e.recording_id}.rttm"), e.hypothesis)
    doc = report.to_dict()
    doc["order"] = [r.id for r in recs]
    doc["rtf_summary"] = rtf_summary(report) if report.entries else None
    header, rows = ser_grid(report)
    if rows:
        doc["ser_grid"] = {"columns": header, "rows": rows}
        with open(os.path.join(out, "ser_grid.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    _write_json(os.path.join(out, "report.json"), doc)
    with open(os.path.join(out, "report.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["recording", "phase", "n_clusters", "ser_pct", "der_pct", "rtf"] + list(STAGES))
        for e in report.entries:
            w.writerow([e.recording_id, e.phase, e.hypothesis.num_speakers,
                        "" if e.score is None else e.score.ser_pct,
                        "" if e.score is None else e.score.der_pct,
                        e.total_time_s / e.duration_s] + [e.stage_times[k] for k in STAGES])
    if report.entries:
        print(format_rtf_table([rtf_summary(report)]))
    if report.mean_ser_pct is not None:
        print(f"mean SER {report.mean_ser_pct:.2f}% over {len(report.scored())} recordings")
    for rid, err in report.failures:
        print(f"FAILED {rid}: {err}", file=sys.stderr)
    return EXIT_FAILURE if report.failures else EXIT_OK


def format_rtf_table(summaries) -> str:
    lines = [f"{'system':<16}" + "".join(f"{k:>20}" for k in FIGURE_STAGES) + f"{'total':>10}"]
    for s in summaries:
        lines.append(f"{s['system']:<16}" + "".join(f"{s['stages'][k]:>20.4f}" for k in FIGURE_STAGES)
                     + f"{s['rtf']:>10.4f}")
    return "\n".join(lines)


# -- score -----------------------------------------------------------------

def cmd_score(args) -> int:
    if args.show_config:
        return _show(args, None)
    refs = read_rttm(args.ref)
    hyps = read_rttm(args.hyp)
    results = {}
    for rid, ref in sorted(refs.items()):
        hyp = hyps.get(rid, ReferenceAnnotation(rid, []))
        results[rid] = score(hyp, ref, args.collar).to_dict()
    if not results:
        raise UsageError("reference RTTM holds no SPEAKER lines")
    if args.json:
        json.dump(results, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        print(f"{'recording':<20}{'MS%':>8}{'FA%':>8}{'SER%':>8}{'DER%':>8}{'spk err':>9}")
        for rid, r in results.items():
            print(f"{rid:<20}{r['ms_pct']:>8.2f}{r['fa_pct']:>8.2f}{r['ser_pct']:>8.2f}"
                  f"{r['der_pct']:>8.2f}{r['speaker_count_error']:>9d}")
    return EXIT_OK


# -- bench -----------------------------------------------------------------

def bench_corpus(corpus, systems, runs: int, cfg: PipelineConfig) -> dict:
    """Repeat every system ``runs`` times; corpus-level RTF per stage and in total."""
    out = {}
    for name in systems:
        system = System(name)
        if system is System.TPIB_ITL_FROZEN:
            raise UsageError("bench does not support the frozen system")
        breakdowns, ann = [], []
        for _ in range(runs):
            state = TransferState() if system is System.TPIB_ITL else None
            _, report = run_system(list(corpus), replace(cfg, system=system, sweep_step=None), state)
            if report.failures:
                raise PipelineFailure(f"{name}: {report.failures[0][0]} failed: {report.failures[0][1]}")
            dur = sum(e.duration_s for e in report.entries)
            breakdowns.append(RtfBreakdown(report.stage_rtf(), report.rtf, dur))
            ann.append(report.mean_stage_time("ann_training"))
        summ = summarize_runs(breakdowns)
        summ["mean_ann_stage_s"] = float(np.mean(ann))
        out[name] = summ
    if "tpib" in out and "tpib-itl" in out:
        out["improvement_pct"] = relative_improvement(out["tpib"]["total"]["mean"],
                                                      out["tpib-itl"]["total"]["mean"])
    return out


def format_bench(result: dict) -> str:
    lines = [f"{'system':<12}{'RTF (mean +/- std)':>24}{'ANN stage RTF':>22}"]
    for name, s in result.items():
        if not isinstance(s, dict):
            continue
        ann = s["stages"].get("ann_training", {"mean": 0.0, "std": 0.0})
        lines.append(f"{name:<12}{s['total']['mean']:>15.4f} +/- {s['total']['std']:<6.4f}"
                     f"{ann['mean']:>13.4f} +/- {ann['std']:.4f}")
    if "improvement_pct" in result:
        lines.append(f"Impr. (tpib-itl over tpib): {result['improvement_pct']:.2f}%")
    return "\n".join(lines)


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    systems = [s.strip() for s in args.systems.split(",") if s.strip()]
    for s in systems:
        try:
            System(s)
        except ValueError:
            raise UsageError(f"unknown system {s!r}") from None
    if args.show_config:
        return _show(args, cfg)
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    corpus = read_manifest(args.manifest)
    result = bench_corpus(corpus.ordered(args.order), systems, args.runs, cfg)
    result["runs"] = args.runs
    if args.out:
        _write_json(args.out, {"schema": "ibdiar.bench/1", **result})
    print(format_bench(result))
    return EXIT_OK


# -- synth -----------------------------------------------------------------

def _speaker_range(text: str):
    m = re.fullmatch(r"(\d+)(?:-(\d+))?", text)
    if not m:
        raise UsageError(f"bad --speakers {text!r}; use N or LO-HI")
    lo = int(m.group(1))
    hi = int(m.group(2) or lo)
    if lo < 1 or hi < lo:
        raise UsageError(f"bad --speakers {text!r}")
    return lo, hi


def cmd_synth(args) -> int:
    lo, hi = _speaker_range(args.speakers)
    spec = SynthSpec(num_speakers=lo, total_duration_s=args.duration, separation=args.separation,
                     kind=args.kind, rng_seed=args.seed)
    if args.show_config:
        return _show(args, None, {"synth": {k: v for k, v in vars(spec).items()}})
    corpus = make_corpus(args.recordings, spec, args.name, (lo, hi), seed=args.seed)
    path = write_corpus(args.out_dir, corpus)
    print(path)
    return EXIT_OK


# -- inspect-checkpoint ----------------------------------------------------

def cmd_inspect(args) -> int:
    if args.show_config:
        return _show(args, None)
    path = args.path
    if os.path.isdir(path):
        state = TransferState.load(path)
        doc = {
            "store": os.path.abspath(path),
            "mode": state.mode.value,
            "current": None if state.empty else _describe(state.current),
            "history": [vars(h) for h in state.history],
        }
    else:
        doc = _describe(ModelCheckpoint.load(path))
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def _describe(ck: ModelCheckpoint) -> dict:
    spec = ck.spec
    return {"id": ck.id, "architecture": [spec.input_dim, spec.hidden1, spec.hidden2, spec.output_dim],
            "meta": ck.meta}


# -- parser ----------------------------------------------------------------

def _add_pipeline_flags(p, system=True):
    if system:
        p.add_argument("--system", choices=[s.value for s in System], default=None,
                       help="diarization system (default from --config, else ib)")
    p.add_argument("--config", help="JSON file with PipelineConfig keys")
    p.add_argument("--rng-seed", type=int, default=None, help="base seed for every random draw")
    p.add_argument("--weights", help="fusion weights 'w_s,w_z' or 'sweep' / 'sweep(0.1)'")
    p.add_argument("--nmi-threshold", type=float, default=None)
    p.add_argument("--finetune-epochs", type=int, default=None)
    p.add_argument("--collar", type=float, default=None, help="scoring collar in seconds")
    p.add_argument("--show-config", action="store_true", help="print the resolved configuration and exit")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ibdiar", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"ibdiar {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diarize", help="diarize one recording")
    p.add_argument("input", help="WAV file or feature file (.feat binary or .csv)")
    p.add_argument("--id", help="recording id (default: file stem)")
    p.add_argument("--reference", help="reference RTTM; enables scoring and speech mask")
    p.add_argument("--mask", help="speech mask (RTTM or start,end CSV)")
    p.add_argument("--transfer-dir", help="transfer store directory (tpib-itl systems)")
    p.add_argument("--seed-checkpoint", help="initialise an empty transfer store from this checkpoint")
    p.add_argument("--out", help="output RTTM (default: <id>.rttm)")
    p.add_argument("--report", help="write a JSON run report here")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_diarize)

    p = sub.add_parser("batch", help="diarize every recording of a manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--order", default="sorted", help="sorted (by id) | listed | shuffle:<seed>")
    p.add_argument("--transfer-dir")
    p.add_argument("--seed-checkpoint")
    p.add_argument("--dev-manifest", help="development corpus for tpib-itl-frozen")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for ib/tpib")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("score", help="score hypothesis RTTM against reference RTTM")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--collar", type=float, default=0.25)
    p.add_argument("--json", action="store_true")
    p.add_argument("--show-config", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bench", help="compare real-time factors of several systems")
    p.add_argument("manifest")
    p.add_argument("--systems", default="ib,tpib,tpib-itl")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--order", default="sorted", help="sorted (by id) | listed | shuffle:<seed>")
    p.add_argument("--out", help="write the JSON result here")
    _add_pipeline_flags(p, system=False)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a synthetic corpus with references")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--recordings", type=int, default=10)
    p.add_argument("--speakers", default="2-4", help="N or LO-HI")
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--separation", type=float, default=SynthSpec.separation)
    p.add_argument("--kind", choices=["features", "audio"], default="features")
    p.add_argument("--name", default="synth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--show-config", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect-checkpoint", help="describe a checkpoint file or transfer store")
    p.add_argument("path")
    p.add_argument("--show-config", action="store_true")
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PipelineFailure as exc:
        print(f"ibdiar: pipeline error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (UsageError, DiarizationError, OSError, ValueError) as exc:
        # configuration, missing/corrupt inputs and invalid parameters
        print(f"ibdiar: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

if __name__ == "__main__":
    sys.exit(main())
