"""Plant a label copy in a synthetic outcome log, audit it, and retrain without it."""

import argparse
import warnings

from procsight.diagnostics import leakage_scan
from procsight.evaluation import auc, evaluate_pipeline, temporal_split
from procsight.event_log import ActivityOccurs, label_outcome, parse_csv
from procsight.learner import feature_importance, train
from procsight.pipeline import RunConfig, bucket_matrices, train_bundle
from procsight.synthetic import outcome_log


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cases", type=int, default=500)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    text, schema = outcome_log(n_cases=args.cases, seed=args.seed, leak=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        labeled = label_outcome(parse_csv(text, schema), ActivityOccurs("Z", truncate=True))
    train_log, test_log = temporal_split(labeled, 0.8)
    config = RunConfig.from_dict({
        "log": {"resource": "resource", "case_attributes": ["leak"]},
        "task": {"kind": "outcome", "rule": {"type": "activity_occurs", "activity": "Z", "truncate": True}},
        "seed": args.seed,
    })
    bundle = train_bundle(config, train_log)
    model = bundle.models["single"]
    (_, matrix), = bucket_matrices(config, train_log, {"single": model.spec}).values()

    report = leakage_scan(matrix, threshold=0.7, model=model)
    print("flagged features:")
    for f in report.flagged:
        print(f"  {f.feature:<20} corr={f.correlation:+.3f} rank={f.importance_rank} severity={f.severity}")
    print("top importance:", ", ".join(f"{n}={v:.3f}" for n, v in feature_importance(model).ranked()[:3]))
    print(f"test AUC with leak:    {evaluate_pipeline(bundle, test_log).overall['auc']:.4f}")

    reduced = matrix.drop_columns([f.feature for f in report.flagged])
    clean = train(reduced, config.train_config())
    print(f"train AUC with leak:    {auc(model.predict(matrix.X), matrix.targets):.4f}")
    print(f"train AUC without leak: {auc(clean.predict(reduced.X), reduced.targets):.4f}")


if __name__ == "__main__":
    main()
