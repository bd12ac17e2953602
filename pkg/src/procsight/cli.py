"""``procsight`` command line: validate | train | evaluate | explain | audit.

Exit codes: 0 success, 1 critical audit finding, 2 input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import diagnostics
from .encoding import LogContext, encode
from .errors import ProcsightError, UnknownCase, UnknownFeature, ZeroVarianceLabel
from .evaluation import evaluate_pipeline
from .explainer import LocalParams, TabularExplainer, fit_global_surrogate, partial_dependence
from .learner import feature_importance
from .pipeline import Bundle, RunConfig, bucket_matrices, env_log_level, prepare, train_bundle
from .prefixing import SINGLE, bucket_for, bucket_length, prefix

log = logging.getLogger("procsight")

EXIT_OK, EXIT_CRITICAL, EXIT_INPUT = 0, 1, 2


class Outputs:
    """Collects artifacts written under ``--out`` and records them in a manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def write(self, rel: str, text: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        self.files[rel] = hashlib.sha256(text.encode()).hexdigest()
        return p

    def write_json(self, rel: str, obj) -> Path:
        return self.write(rel, json.dumps(obj, sort_keys=True, indent=1) + "\n")

    def finish(self, command: str):
        manifest_path = self.root / "manifest.json"
        existing = {}
        if manifest_path.exists():
            try:
                existing = json.loads(manifest_path.read_text()).get("commands", {})
            except json.JSONDecodeError:
                existing = {}
        existing[command] = dict(sorted(self.files.items()))
        manifest_path.write_text(json.dumps({"commands": existing}, sort_keys=True, indent=1) + "\n")


# --- commands -------------------------------------------------------------------


def cmd_validate(config: RunConfig, out: Outputs) -> int:
    prep = prepare(config)
    ev = prep.event_log
    lengths = [len(t) for t in ev.traces]
    summary = {
        "n_traces": len(ev.traces),
        "n_events": sum(lengths),
        "trace_length": {
            "min": min(lengths), "max": max(lengths), "mean": float(np.mean(lengths)),
            "histogram": {str(k): v for k, v in sorted(Counter(lengths).items())},
        },
        "attributes": {
            "numeric": list(ev.numeric_columns),
            "categorical": list(ev.categorical_columns),
            "case": list(config.log.case_attributes),
            "raw_attribute_count": ev.raw_attribute_count,
        },
        "task": prep.labeled.task,
        "n_train_cases": len(prep.train),
        "n_test_cases": len(prep.test),
        "dropped_cases": list(prep.labeled.dropped),
        "notes": list(prep.labeled.notes),
        "warnings": [],
    }
    if prep.labeled.task == "outcome":
        counts = prep.labeled.label_counts()
        summary["labels"] = {"positive": counts[1], "negative": counts[0]}
        if min(counts.values()) == 0:
            summary["warnings"].append("DegenerateTargets: every trace has the same label")
    for w in summary["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    out.write_json("validate.json", summary)
    print(json.dumps(summary, sort_keys=True, indent=1))
    return EXIT_OK


def cmd_train(config: RunConfig, out: Outputs, bundle_dir: Path) -> int:
    prep = prepare(config)
    if prep.train.task == "outcome" and len(set(prep.train.targets)) < 2:
        raise ProcsightError("DegenerateTargets: training labels are all identical")
    bundle = train_bundle(config, prep.train)
    digest = bundle.save(bundle_dir)
    summary = {
        "bundle": str(bundle_dir),
        "bundle_hash": digest,
        "buckets": {b: {"n_trees": len(m.trees), "n_features": m.n_features, "degenerate": m.degenerate}
                    for b, m in sorted(bundle.models.items())},
    }
    out.write_json("train.json", summary)
    print(json.dumps(summary, sort_keys=True, indent=1))
    return EXIT_OK


def cmd_evaluate(config: RunConfig, out: Outputs, bundle_dir: Path, earliness_threshold: float | None = None) -> int:
    bundle = Bundle.load(bundle_dir, expect=config)
    prep = prepare(config)
    result = evaluate_pipeline(bundle, prep.test)
    if earliness_threshold is not None:
        result.with_earliness(earliness_threshold)
    out.write("eval.json", result.to_json())
    out.write("eval_curve.csv", result.to_csv())
    print(result.to_json(), end="")
    return EXIT_OK


def _train_matrices(config, bundle, prep):
    specs = {b: m.spec for b, m in bundle.models.items()}
    return bucket_matrices(config, prep.train, specs)


def cmd_explain(config: RunConfig, out: Outputs, bundle_dir: Path, args) -> int:
    bundle = Bundle.load(bundle_dir, expect=config)
    prep = prepare(config)
    matrices = _train_matrices(config, bundle, prep)
    ex = config.explain

    if args.glob:
        doc, text = {}, []
        for b, (_, matrix) in sorted(matrices.items()):
            model = bundle.models[b]
            imp = feature_importance(model)
            sur = fit_global_surrogate(matrix, model, kind=ex.surrogate, max_depth=ex.surrogate_depth)
            doc[b] = {"importance": [[n, v] for n, v in imp.ranked()], "surrogate": sur.to_dict()}
            text.append(f"== bucket {b} ==")
            text += [f"  {v:.4f}  {n}" for n, v in imp.ranked()[: config.audit.top_k]]
            text.append(f"  surrogate ({sur.kind}) fidelity {sur.fidelity:.4f}")
            text += ["    " + line for line in sur.render().splitlines()]
        out.write_json("explain_global.json", doc)
        out.write("explain_global.txt", "\n".join(text) + "\n")
        print("\n".join(text))

    if args.local:
        case_id, length = args.local[0], int(args.local[1])
        trace = {t.case_id: t for t in prep.labeled.traces}.get(case_id)
        if trace is None:
            raise UnknownCase(f"case {case_id!r} not in the labeled log")
        p = prefix(trace, length)
        b = bucket_for(p, bundle.strategy, bundle.models)
        model = bundle.models[b]
        context = None
        if bundle.engineered:
            in_train = any(t.case_id == case_id for t in prep.train.traces)
            context = LogContext.from_traces((prep.train if in_train else prep.test).traces)
        row = encode(p, model.spec, context)
        explainer = TabularExplainer.from_matrix(matrices[b][1])
        params = LocalParams(ex.n_samples, ex.kernel_width, ex.k_features, config.seed)
        expl = explainer.explain(model, row, params, case_id=case_id, prefix_length=length)
        stem = f"explain_local_{case_id}_{length}"
        out.write(stem + ".json", expl.to_json() + "\n")
        out.write(stem + ".txt", expl.render_bars() + "\n")
        print(expl.render_bars())

    if args.pdp:
        curves = {}
        for b, (_, matrix) in sorted(matrices.items()):
            if args.pdp in matrix.names:
                curves[b] = partial_dependence(bundle.models[b], matrix, args.pdp, ex.grid_size).to_dict()
        if not curves:
            raise UnknownFeature(f"no bucket has feature {args.pdp!r}")
        out.write_json(f"pdp_{args.pdp}.json", curves)
        print(json.dumps(curves, sort_keys=True, indent=1))
    return EXIT_OK


def cmd_audit(config: RunConfig, out: Outputs, bundle_dir: Path) -> int:
    bundle = Bundle.load(bundle_dir, expect=config)
    prep = prepare(config)
    matrices = _train_matrices(config, bundle, prep)
    au = config.audit
    report = {"buckets": {}, "notes": list(prep.labeled.notes), "summary": {}}
    n_crit = n_warn = 0
    for b, (_, matrix) in sorted(matrices.items()):
        model = bundle.models[b]
        entry = {}
        if prep.labeled.task == "outcome":
            try:
                leak = diagnostics.leakage_scan(matrix, threshold=au.leakage_threshold, model=model, top_k=au.top_k)
                entry["leakage"] = {
                    "threshold": leak.threshold,
                    "flagged": [vars(f) for f in leak.flagged],
                    "n_features": len(leak.findings),
                }
                n_crit += len(leak.critical)
                n_warn += sum(1 for f in leak.flagged if f.severity == diagnostics.WARN)
            except ZeroVarianceLabel:
                entry["leakage"] = {"skipped": "bucket labels are constant"}
        if au.query_prefix_len is not None:
            query = au.query_prefix_len
        elif bundle.strategy.kind == SINGLE:
            query = bundle.strategy.min_len
        else:
            query = bucket_length(b)
        avail = diagnostics.availability_scan(prep.train, model, query, top_k=au.top_k)
        entry["availability"] = avail.to_dict()
        n_warn += len(avail.flags)
        entry["sparsity"] = diagnostics.sparsity_report(matrix, prep.event_log.raw_attribute_count).to_dict()
        report["buckets"][b] = entry
    report["summary"] = {"critical": n_crit, "warn": n_warn}
    out.write_json("audit.json", report)
    md = _audit_markdown(report)
    out.write("audit.md", md)
    print(md, end="")
    return EXIT_CRITICAL if n_crit else EXIT_OK


def _audit_markdown(report) -> str:
    s = report["summary"]
    lines = ["# Audit report", "", f"critical findings: {s['critical']}, warnings: {s['warn']}", ""]
    for note in report["notes"]:
        lines.append(f"> note: {note}")
    for b, e in report["buckets"].items():
        lines += ["", f"## Bucket `{b}`", ""]
        leak = e.get("leakage")
        if leak is not None:
            lines.append("### Leakage")
            if "skipped" in leak:
                lines.append(f"skipped: {leak['skipped']}")
            elif not leak["flagged"]:
                lines.append(f"no feature reaches |corr| >= {leak['threshold']}")
            else:
                lines += ["| feature | corr | importance rank | severity |", "|---|---|---|---|"]
                for f in leak["flagged"]:
                    lines.append(f"| `{f['feature']}` | {f['correlation']:.3f} | {f['importance_rank']} | {f['severity']} |")
        av = e["availability"]
        lines += ["", f"### Availability (query prefix length {av['query_prefix_len']})"]
        if not av["flags"]:
            lines.append("all important features can be observed by the query prefix length")
        for f in av["flags"]:
            lines.append(f"- {f['severity']}: `{f['feature']}` first observable at position {f['min_index']} ({f['reason']})")
        sp = e["sparsity"]
        lines += [
            "", "### Sparsity",
            f"{sp['n_raw_attributes']} raw attributes -> {sp['n_encoded_features']} encoded features "
            f"(growth {sp['growth']:.2f}), density {sp['density']:.4f}",
        ]
        for k, v in sp["block_density"].items():
            lines.append(f"- {k}: {v:.4f}")
    return "\n".join(lines) + "\n"


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="procsight", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=["validate", "train", "evaluate", "explain", "audit"])
    ap.add_argument("--config", required=True, help="run configuration (JSON)")
    ap.add_argument("--bundle", help="model bundle directory (default: <out>/bundle)")
    ap.add_argument("--out", help="output directory (default: ./out next to the config)")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--earliness", type=float, metavar="LEVEL",
                    help="evaluate: report the smallest prefix length reaching LEVEL (AUC >=, MAE <=)")
    ap.add_argument("--global", dest="glob", action="store_true", help="explain: importance + surrogate")
    ap.add_argument("--local", nargs=2, metavar=("CASE_ID", "PREFIX_LEN"), help="explain one prefix")
    ap.add_argument("--pdp", metavar="FEATURE", help="explain: partial dependence of FEATURE")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=env_log_level(), format="%(levelname)s %(name)s: %(message)s")
    try:
        config = RunConfig.load(args.config).with_seed(args.seed)
        out = Outputs(Path(args.out) if args.out else Path(config.base_dir) / "out")
        bundle_dir = Path(args.bundle) if args.bundle else out.root / "bundle"
        if args.command == "validate":
            code = cmd_validate(config, out)
        elif args.command == "train":
            code = cmd_train(config, out, bundle_dir)
        elif args.command == "evaluate":
            code = cmd_evaluate(config, out, bundle_dir, args.earliness)
        elif args.command == "explain":
            if not (args.glob or args.local or args.pdp):
                raise ProcsightError("explain needs --global, --local CASE_ID PREFIX_LEN or --pdp FEATURE")
            code = cmd_explain(config, out, bundle_dir, args)
        else:
            code = cmd_audit(config, out, bundle_dir)
        out.finish(args.command)
        return code
    except (ProcsightError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
