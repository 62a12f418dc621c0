"""
Open-set identification on synthetic second-order data
======================================================

End-to-end run on a generated dataset whose identities differ only in
their hidden channel-correlation pattern: location averages carry
almost no identity signal, so first-order descriptors fail while the
bilinear encoding separates everyone. The script reports rank-1,
rank-5 and FNIR at the standard FPIR operating points for both, and
writes CMC/DET charts.
"""

import tempfile
from pathlib import Path

import numpy as np

from bilin import encode, first_order_descriptor
from bilin.evaluate import evaluate_split, write_cmc_csv, write_det_csv
from bilin.io import load_feature_map
from bilin.protocol import SynthConfig, synth_generate
from bilin.svm import train_ovr_svm
from bilin.svg import line_chart

work = Path(tempfile.mkdtemp(prefix="bilin_demo_"))
cfg = SynthConfig(num_identities=8, templates_per_identity=20,
                  noise_sigma=0.1, seed=42)
split = synth_generate(cfg, work)[0]
print(f"dataset under {work}: {len(split.gallery)} gallery identities, "
      f"{len(split.probe)} probe templates "
      f"({len(split.impostor_probes())} impostors)")


def run(tag, descriptor_fn):
    media, labels = [], []
    for t in sorted(split.gallery, key=lambda t: t.template_id):
        for m in t.media:
            media.append(m)
            labels.append(t.subject_id)
    X = np.stack([descriptor_fn(load_feature_map(work / m.path).values)
                  for m in media])
    gallery = train_ovr_svm(X, labels)
    table = {m.media_id: descriptor_fn(load_feature_map(work / m.path).values)
             for t in split.probe for m in t.media}
    _, cmc, det, summary = evaluate_split(split, gallery, table,
                                          strategy="feature")
    print(f"{tag:>12}: rank1 {summary['rank1']:.3f}  "
          f"rank5 {summary['rank5']:.3f}  "
          f"FNIR@0.1 {summary['fnir_at_fpir_0.1']:.3f}  "
          f"FNIR@0.01 {summary['fnir_at_fpir_0.01']:.3f}")
    return cmc, det


cmc2, det2 = run("second-order", encode)
cmc1, det1 = run("first-order", first_order_descriptor)

# Persist the curves and a comparison chart.
write_cmc_csv(cmc2, work / "cmc_second_order.csv")
write_det_csv(det2, work / "det_second_order.csv")
ranks = np.arange(1, len(cmc2.recall_at_rank) + 1)
chart = line_chart(
    [("second-order", ranks, cmc2.recall_at_rank),
     ("first-order", ranks, cmc1.recall_at_rank)],
    title="CMC on the synthetic benchmark",
    x_label="rank", y_label="retrieval rate",
)
(work / "cmc_comparison.svg").write_text(chart)
print(f"curves and chart written under {work}")
