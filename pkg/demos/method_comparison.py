"""All six scoring methods on one benchmark instance.

The reference-candidate bank for the two-sided softmax methods is the
candidate set itself, a common choice when no separate bank exists.

Run: python3 demos/method_comparison.py
"""

from nnnorm import (
    NormalizationSpec,
    apply,
    hub_report,
    matched_counts,
    recall_at_k,
    synthetic_hub_instance,
)

inst = synthetic_hub_instance(seed=0)

specs = [
    NormalizationSpec("none"),
    NormalizationSpec("nnn", alpha=0.75, k=16),
    NormalizationSpec("dn"),
    NormalizationSpec("qbnorm", beta2=20.0),
    NormalizationSpec("dualis", beta1=20.0, beta2=20.0),
    NormalizationSpec("dualdis", beta1=20.0, beta2=20.0,
                      activation_threshold=2),
]

print(f"{'method':10s} {'R@1':>6s} {'R@5':>6s} {'max':>4s} {'kurt':>7s}")
for spec in specs:
    kwargs = {}
    if spec.method != "none":
        kwargs["ref_queries"] = inst.ref_queries
    if spec.method in ("dn", "dualis", "dualdis"):
        kwargs["ref_candidates"] = inst.candidates
    table = apply(spec, inst.test_queries, inst.candidates, depth=10,
                  **kwargs)
    rep = hub_report(matched_counts(table, inst.candidates.rows))
    print(f"{spec.method:10s} "
          f"{recall_at_k(table, inst.test_truth, 1):6.3f} "
          f"{recall_at_k(table, inst.test_truth, 5):6.3f} "
          f"{rep.max:4d} {rep.kurtosis:7.1f}")
