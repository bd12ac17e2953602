"""One-hot growth and density of aggregation vs index encodings on a wide categorical log."""

import argparse

from procsight.diagnostics import sparsity_report
from procsight.encoding import build_spec, encode_bucket
from procsight.event_log import parse_csv, remaining_time_targets
from procsight.prefixing import BucketingStrategy, assign_buckets, generate_prefixes
from procsight.synthetic import sparsity_log


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cases", type=int, default=120)
    args = ap.parse_args()

    text, schema = sparsity_log(n_cases=args.cases)
    log = parse_csv(text, schema)
    strategy = BucketingStrategy("single", 1, 3)
    (bucket,) = assign_buckets(generate_prefixes(remaining_time_targets(log), strategy), strategy)
    for kind in ("aggregation", "index"):
        matrix = encode_bucket(bucket, build_spec(bucket, kind))
        rep = sparsity_report(matrix, log.raw_attribute_count)
        print(f"{kind}: {rep.n_raw_attributes} raw attributes -> {rep.n_encoded_features} features "
              f"(growth {rep.growth:.2f}), density {rep.density:.4f}")
        for block, d in rep.block_density.items():
            print(f"  {block:<16} {d:.4f}")


if __name__ == "__main__":
    main()
