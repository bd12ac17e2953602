"""Acceptance criteria, one test per criterion.

Each test prints a ``criterion N PASS|FAIL`` line and the run ends with a
summary section listing all of them.
"""

import json
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from procsight.cli import main
from procsight.diagnostics import availability_scan, leakage_scan
from procsight.encoding import AGGREGATION, INDEX, FeatureMatrix, LogContext, build_spec, encode
from procsight.evaluation import auc, earliness, mae, score_prefixes, temporal_split
from procsight.event_log import ActivityOccurs, label_outcome, parse_csv, remaining_time_targets
from procsight.explainer import LocalParams, TabularExplainer, fit_global_surrogate, partial_dependence
from procsight.learner import Tree, TrainConfig, feature_importance, logistic_grad_hess, sigmoid, train
from procsight.pipeline import Bundle, RunConfig, bucket_matrices, prepare, train_bundle
from procsight.prefixing import BucketingStrategy, assign_buckets, generate_prefixes
from procsight.synthetic import (
    availability_log,
    outcome_log,
    remaining_time_log,
    separable_log,
    sparsity_log,
)

from conftest import criterion, log_from_activities
from test_evaluation import brute_auc

LEAK_CONFIG = {
    "log": {"path": "log.csv", "resource": "resource", "case_attributes": ["leak"]},
    "task": {"kind": "outcome", "rule": {"type": "activity_occurs", "activity": "Z", "truncate": True}},
    "bucketing": {"kind": "single", "min_len": 1, "max_len": 40},
    "seed": 7,
}


def leak_workspace(root: Path) -> Path:
    text, _ = outcome_log(n_cases=500, seed=1, leak=True)
    (root / "log.csv").write_text(text)
    (root / "config.json").write_text(json.dumps(LEAK_CONFIG))
    return root / "config.json"


def test_criterion_01_planted_leak(tmp_path):
    with criterion(1, "planted leak is flagged, ranked first, audited critical and removal costs AUC") as c:
        cfg_path = leak_workspace(tmp_path)
        assert main(["train", "--config", str(cfg_path)]) == 0
        config = RunConfig.load(cfg_path)
        bundle = Bundle.load(tmp_path / "out" / "bundle", expect=config)
        model = bundle.models["single"]
        prep = prepare(config)
        (_, matrix), = bucket_matrices(config, prep.train, {"single": model.spec}).values()

        report = leakage_scan(matrix, threshold=0.7, model=model)
        finding = report["static__leak"]
        c.note(f"corr={finding.correlation:.15f}")
        assert finding.flagged
        assert abs(finding.correlation - 1.0) <= 1e-12
        rank = feature_importance(model).rank_of("static__leak")
        c.note(f"importance rank={rank}")
        assert rank == 1
        assert finding.severity == "critical"

        code = main(["audit", "--config", str(cfg_path)])
        c.note(f"audit exit={code}")
        assert code == 1
        audit = json.loads((tmp_path / "out" / "audit.json").read_text())
        assert audit["summary"]["critical"] >= 1

        before = auc(model.predict(matrix.X), matrix.targets)
        reduced = matrix.drop_columns(["static__leak"])
        after_model = train(reduced, config.train_config())
        after = auc(after_model.predict(reduced.X), reduced.targets)
        c.note(f"train AUC {before:.4f} -> {after:.4f}")
        assert before - after >= 0.05


def correlated_feature(y, r, rng):
    """A feature whose sample Pearson correlation with ``y`` is exactly ``r``."""
    yc = (y - y.mean()) / np.linalg.norm(y - y.mean())
    noise = rng.normal(size=len(y))
    noise -= noise.mean()
    noise -= (noise @ yc) * yc
    noise /= np.linalg.norm(noise)
    return r * yc + np.sqrt(1 - r * r) * noise


def test_criterion_02_correlation_boundary(rng):
    with criterion(2, "threshold 0.7 flags corr 0.933 and 0.733 but not 0.5") as c:
        y = (rng.random(2000) < 0.4).astype(float)
        targets = {"f_933": 0.933, "f_733": 0.733, "f_500": 0.5}
        X = np.column_stack([correlated_feature(y, r, rng) for r in targets.values()])
        report = leakage_scan(FeatureMatrix.from_arrays(X, y, tuple(targets)), threshold=0.7)
        for name, r in targets.items():
            got = report[name].correlation
            c.note(f"{name}: corr={got:.4f} flagged={report[name].flagged}")
            assert abs(got - r) <= 0.02
        assert report["f_933"].flagged and report["f_733"].flagged
        assert not report["f_500"].flagged


def test_criterion_03_availability():
    with criterion(3, "value first seen at position 14 has min index 14 and is flagged below it") as c:
        text, schema = availability_log(n_cases=200, position=14)
        log = parse_csv(text, schema)
        first = {t.activities.index("Z") + 1 for t in log.traces if "Z" in t.activities}
        assert first == {14}
        for q in range(1, 20):
            report = availability_scan(log, query_prefix_len=q)
            assert report.min_index("Z") == 14
            flagged = any(f.feature == "agg__Z" for f in report.flags)
            assert flagged == (q < 14), q
        c.note("min index 14; flagged for q=1..13, clear for q=14..19")


def test_criterion_04_auc_oracle():
    with criterion(4, "AUC equals pairwise brute force on 100 random instances") as c:
        rng = np.random.default_rng(4)
        worst, done = 0.0, 0
        while done < 100:
            n = int(rng.integers(2, 61))
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                continue
            # coarse grid forces plenty of ties
            scores = rng.integers(0, int(rng.integers(2, 12)), n) / 10.0
            worst = max(worst, abs(auc(scores, labels) - brute_auc(scores, labels)))
            done += 1
        c.note(f"max |diff|={worst:.2e}")
        assert worst <= 1e-12


def test_criterion_05_earliness_oracle():
    with criterion(5, "earliness equals brute-force minimum and is monotone in the threshold") as c:
        rng = np.random.default_rng(5)
        for _ in range(100):
            lengths = sorted(rng.choice(np.arange(1, 41), size=int(rng.integers(1, 20)), replace=False))
            curve = {int(l): float(v) for l, v in zip(lengths, rng.random(len(lengths)))}
            t = float(rng.random())
            brute = min((l for l, v in curve.items() if v >= t), default=None)
            assert earliness(curve, t).earliness == brute
            brute_mae = min((l for l, v in curve.items() if v <= t), default=None)
            assert earliness(curve, t, "<=").earliness == brute_mae
        violations = 0
        for _ in range(1000):
            lengths = rng.choice(np.arange(1, 41), size=int(rng.integers(1, 20)), replace=False)
            curve = {int(l): float(v) for l, v in zip(lengths, rng.random(len(lengths)))}
            lo, hi = sorted(rng.random(2))
            e_lo, e_hi = earliness(curve, lo).earliness, earliness(curve, hi).earliness
            if e_hi is not None and (e_lo is None or e_lo > e_hi):
                violations += 1
        c.note(f"100 curves matched; monotonicity violations={violations}/1000")
        assert violations == 0


def test_criterion_06_learner_quality():
    with criterion(6, "separable outcome AUC >= 0.95 and remaining-time MAE <= 20% of baseline") as c:
        text, schema = separable_log(n_cases=1000)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lab = label_outcome(parse_csv(text, schema), ActivityOccurs("X"))
        train_log, test_log = temporal_split(lab, 0.8)
        config = RunConfig.from_dict({
            "task": {"kind": "outcome", "rule": {"type": "activity_occurs", "activity": "X"}},
            "bucketing": {"kind": "single"},
        })
        _, preds, targets, _ = score_prefixes(train_bundle(config, train_log), test_log)
        test_auc = auc(preds, targets)
        c.note(f"test AUC={test_auc:.4f}")

        text, schema = remaining_time_log(n_cases=400, step=10)
        rt = remaining_time_targets(parse_csv(text, schema))
        train_log, test_log = temporal_split(rt, 0.8)
        config = RunConfig.from_dict({"task": {"kind": "remaining_time"}, "bucketing": {"kind": "prefix_length"}})
        _, preds, targets, _ = score_prefixes(train_bundle(config, train_log), test_log)
        baseline = np.mean([y for _, y in generate_prefixes(train_log, config.bucketing)])
        ratio = mae(preds, targets) / mae(np.full(len(targets), baseline), targets)
        c.note(f"MAE ratio={ratio:.2e}")
        assert test_auc >= 0.95
        assert ratio <= 0.20


def test_criterion_07_learner_correctness():
    with criterion(7, "training loss non-increasing and gradients match finite differences") as c:
        rng = np.random.default_rng(7)
        X = rng.normal(size=(500, 6))
        y = (X[:, 0] - X[:, 1] + rng.normal(0, 1, 500) > 0).astype(float)
        model = train((X, y), TrainConfig(n_trees=60, max_depth=3, subsample_ratio=1.0))
        steps = np.diff(model.train_loss)
        c.note(f"max loss step={steps.max():.2e}")
        assert (steps <= 0).all()

        def point_loss(m, t):
            return np.logaddexp(0.0, m) - t * m

        worst_g = worst_h = 0.0
        for _ in range(100):
            m, t = rng.uniform(-4, 4), float(rng.integers(0, 2))
            eps = 1e-5
            g, h = logistic_grad_hess(np.array([m]), np.array([t]))
            num_g = (point_loss(m + eps, t) - point_loss(m - eps, t)) / (2 * eps)
            num_h = (sigmoid(m + eps) - sigmoid(m - eps)) / (2 * eps)
            worst_g = max(worst_g, abs(num_g - g[0]) / abs(g[0]))
            worst_h = max(worst_h, abs(num_h - h[0]) / abs(h[0]))
        c.note(f"max relative error grad={worst_g:.1e} hess={worst_h:.1e}")
        assert worst_g <= 1e-6 and worst_h <= 1e-6


def depth2_blackbox() -> Tree:
    t = Tree()
    root = t._add(feature=0, threshold=0.5)
    a = t._add(feature=1, threshold=0.3)
    b = t._add(feature=2, threshold=0.7)
    t.left[root], t.right[root] = a, b
    for parent, (lo, hi) in ((a, (0.0, 1.0)), (b, (2.0, 5.0))):
        t.left[parent] = t._add(value=lo)
        t.right[parent] = t._add(value=hi)
    return t


def test_criterion_08_surrogate_fidelity():
    with criterion(8, "linear surrogate recovers 3x1-2x2; depth-3 tree reproduces a depth-2 tree") as c:
        rng = np.random.default_rng(8)
        X = rng.normal(size=(1000, 2))
        lin = fit_global_surrogate(X, lambda A: 3 * A[:, 0] - 2 * A[:, 1], kind="linear")
        err = float(np.max(np.abs(lin.coef - [3.0, -2.0])))
        c.note(f"coef err={err:.1e} R2={lin.fidelity:.12f}")
        assert err < 1e-6 and lin.fidelity > 0.999999

        black = depth2_blackbox()
        U = rng.uniform(0, 1, (2000, 4))
        tree = fit_global_surrogate(U, black.predict, kind="tree", max_depth=3)
        c.note(f"tree fidelity={tree.fidelity} depth={tree.tree.depth()}")
        assert tree.fidelity == 1.0
        assert np.array_equal(tree.predict(U), black.predict(U))


def test_criterion_09_local_soundness():
    with criterion(9, "presence of x1 is the top positive effect for sigmoid(4 x1); constant box has no weight") as c:
        rng = np.random.default_rng(9)
        n = 600
        A = np.column_stack([
            rng.integers(0, 2, n), rng.integers(0, 2, n), rng.integers(0, 2, n),
            rng.normal(size=n), rng.exponential(size=n),
        ]).astype(float)
        explainer = TabularExplainer(A)
        blackbox = lambda S: sigmoid(4 * S[:, 0])
        params = LocalParams(n_samples=2000, seed=0)
        present = A[A[:, 0] == 1][:100]
        hits = 0
        for row in present:
            effects = explainer.explain(blackbox, row, params).effects
            top = max(effects, key=lambda e: e.weight)
            hits += top.condition == "x1 > 0" and top.weight > 0
        c.note(f"top positive effect hits={hits}/100")
        assert hits >= 95

        worst = 0.0
        for row in A[:20]:
            e = explainer.explain(lambda S: np.full(len(S), 0.42), row, params)
            worst = max([worst] + [abs(x.weight) for x in e.effects])
        c.note(f"constant box max |weight|={worst:.1e}")
        assert worst < 1e-6


def test_criterion_10_encoding_properties():
    with criterion(10, "aggregation is order free, index is order aware, names round-trip, 823 features") as c:
        rng = np.random.default_rng(10)
        traces = {f"c{i}": [str(a) for a in rng.choice(list("ABCDEF"), size=int(rng.integers(2, 9)))]
                  for i in range(60)}
        resources = {k: [f"r{int(rng.integers(3))}" for _ in v] for k, v in traces.items()}
        log = log_from_activities(traces, resources=resources)
        s = BucketingStrategy("single", 1, 40)
        (bucket,) = assign_buckets(generate_prefixes(remaining_time_targets(log), s), s)
        agg, idx = build_spec(bucket, AGGREGATION), build_spec(bucket, INDEX)

        for _ in range(10_000):
            p = bucket.prefixes[int(rng.integers(len(bucket)))]
            shuffled = replace(p, events=tuple(p.events[j] for j in rng.permutation(p.length)))
            assert np.array_equal(encode(shuffled, agg), encode(p, agg))

        changed = total = 0
        while total < 1000:
            p = bucket.prefixes[int(rng.integers(len(bucket)))]
            if p.length < 2:
                continue
            k = int(rng.integers(p.length - 1))
            if p.events[k].activity == p.events[k + 1].activity:
                continue
            ev = list(p.events)
            ev[k], ev[k + 1] = ev[k + 1], ev[k]
            changed += not np.array_equal(encode(replace(p, events=tuple(ev)), idx), encode(p, idx))
            total += 1
        c.note(f"index changed on {changed}/{total} swaps")
        assert changed / total >= 0.99

        text, schema = sparsity_log()
        sparse = parse_csv(text, schema)
        (sb,) = assign_buckets(generate_prefixes(remaining_time_targets(sparse), s), s)
        sparse_spec = build_spec(sb)
        engineered = build_spec(bucket, INDEX, engineered=True, context=LogContext.from_traces(log.traces))
        for spec in (agg, idx, engineered, sparse_spec):
            for name in spec.names:
                assert spec.parse_name(name).render() == name
        width = sparse_spec.width
        growth = width / sparse.raw_attribute_count
        c.note(f"{sparse.raw_attribute_count} raw -> {width} encoded, growth={growth:.2f}")
        assert width == 823 and sparse.raw_attribute_count == 20
        assert growth == pytest.approx(41.15)


def _bundle_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_11_determinism(tmp_path):
    with criterion(11, "same seed gives byte-identical bundles and evaluation JSON") as c:
        cfg_path = leak_workspace(tmp_path)
        data = json.loads(cfg_path.read_text())
        data["train"] = {"subsample_ratio": 0.7, "n_trees": 50}
        cfg_path.write_text(json.dumps(data))
        runs = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
            assert main(["evaluate", "--config", str(cfg_path), "--out", str(out)]) == 0
            runs.append((_bundle_bytes(out / "bundle"), (out / "eval.json").read_bytes()))
        (b0, e0), (b1, e1) = runs
        c.note(f"{len(b0)} bundle files compared")
        assert b0 == b1
        assert e0 == e1


def test_criterion_12_pdp_additive():
    with criterion(12, "PDP recovers additive components and is flat for an unused feature") as c:
        rng = np.random.default_rng(12)
        X = rng.normal(size=(400, 3))
        parts = (np.sin, lambda v: v**2 - 3 * v, None)
        blackbox = lambda A: np.sin(A[:, 0]) + (A[:, 1] ** 2 - 3 * A[:, 1])
        worst = 0.0
        for j, g in enumerate(parts[:2]):
            curve = partial_dependence(blackbox, X, j, grid_size=25)
            diff = np.asarray(curve.mean_prediction) - g(np.asarray(curve.grid))
            worst = max(worst, float(np.ptp(diff)))
        flat = partial_dependence(blackbox, X, 2, grid_size=25)
        spread = float(np.ptp(flat.mean_prediction))
        c.note(f"component offset spread={worst:.1e}; unused spread={spread:.1e}")
        assert worst <= 1e-6
        assert spread <= 1e-9
