"""Open-set 1:N evaluation against a gallery model set.

A probe template holds one or more media.  Two pooling strategies
collapse it to one score per gallery identity:

* score pooling: score every medium, then take the per-identity max;
* feature pooling: elementwise max over the media descriptors first,
  then a single scoring pass (the pooled vector is deliberately not
  re-normalized, so scores stay on the scale the models were trained on).

From the per-template results the usual open-set curves follow: CMC
(recall of the true identity within the top r ranks, mated probes
only), and DET (false positive identification rate of impostors versus
false negative identification rate of mated probes as the acceptance
threshold sweeps).  FNIR here follows the literal reading "true
identity's score below threshold"; ``rank1_conditioned`` additionally
counts mated probes whose true identity is not ranked first, the
variant used by some evaluation reports.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError, ShapeError


def pool_features(descriptors):
    """Elementwise maximum of equal-length descriptors.

    Permutation-invariant and idempotent on duplicates; the result is
    not re-normalized.
    """
    if not len(descriptors):
        raise ProtocolError("cannot pool an empty descriptor list")
    arrs = [np.asarray(d) for d in descriptors]
    dim = arrs[0].shape
    for a in arrs[1:]:
        if a.shape != dim:
            raise ShapeError(f"descriptor shapes differ: {dim} vs {a.shape}")
    return np.maximum.reduce(arrs)


def pool_scores(per_media_scores):
    """Per-identity maximum across media score maps (same key sets)."""
    if not per_media_scores:
        raise ProtocolError("cannot pool an empty score list")
    keys = set(per_media_scores[0])
    for m in per_media_scores[1:]:
        if set(m) != keys:
            raise ProtocolError("score maps disagree on gallery identities")
    return {k: max(m[k] for m in per_media_scores) for k in keys}


@dataclass
class ProbeResult:
    """Scores and ranking of one probe template against the gallery."""

    template_id: str
    subject_id: str
    scores: dict
    ranked: list

    @property
    def mated(self):
        return self.subject_id in self.scores

    def rank_of_true(self):
        """1-based rank of the true identity; None for impostors."""
        if not self.mated:
            return None
        return self.ranked.index(self.subject_id) + 1

    def max_score(self):
        return max(self.scores.values())


def _rank(scores):
    return sorted(scores, key=lambda k: (-scores[k], k))


def identify(template, descriptors, gallery, strategy="score"):
    """Score one probe template against every gallery identity.

    Parameters
    ----------
    template : protocol.Template
    descriptors : list of per-medium descriptors, aligned one-to-one
        with ``template.media``
    gallery : svm.GalleryModelSet
    strategy : "score" or "feature"

    Ties in the ranking are broken by ascending identity id, so results
    are deterministic across platforms.
    """
    if not gallery.models:
        raise ProtocolError("gallery model set is empty")
    if len(descriptors) != len(template.media):
        raise ProtocolError(
            f"template {template.template_id!r} has {len(template.media)} "
            f"media but {len(descriptors)} descriptors"
        )
    if strategy == "score":
        scores = pool_scores([gallery.score_vector(d) for d in descriptors])
    elif strategy == "feature":
        scores = gallery.score_vector(pool_features(descriptors))
    else:
        raise ValueError(f"unknown pooling strategy {strategy!r}")
    return ProbeResult(
        template_id=template.template_id,
        subject_id=template.subject_id,
        scores=scores,
        ranked=_rank(scores),
    )


@dataclass
class CmcCurve:
    """recall_at_rank[r-1] = fraction of mated probes with true identity
    in the top r; non-decreasing in r."""

    recall_at_rank: np.ndarray
    mated_probe_count: int


def compute_cmc(results, max_rank=100):
    ranks = [r.rank_of_true() for r in results if r.mated]
    if not ranks:
        raise ProtocolError("CMC needs at least one mated probe")
    ranks = np.asarray(ranks)
    recall = np.array(
        [np.mean(ranks <= r) for r in range(1, max_rank + 1)]
    )
    return CmcCurve(recall_at_rank=recall, mated_probe_count=len(ranks))


@dataclass
class DetCurve:
    """FPIR/FNIR over a grid of acceptance thresholds (ascending)."""

    thresholds: np.ndarray
    fpir: np.ndarray
    fnir: np.ndarray
    impostor_count: int
    mated_count: int

    @property
    def points(self):
        return list(zip(self.thresholds, self.fpir, self.fnir))


def compute_det(results, thresholds=None, rank1_conditioned=False):
    """DET curve from probe results.

    FPIR(t) = fraction of impostor probes whose best score is >= t.
    FNIR(t) = fraction of mated probes whose true-identity score is
    below t (additionally counting true-identity-not-rank-1 probes when
    ``rank1_conditioned``).  Auto thresholds are the sorted union of
    every relevant score plus -inf/+inf sentinels, so the curve starts
    at FPIR=1 and ends at FNIR=1.
    """
    impostor_best = np.array([r.max_score() for r in results if not r.mated])
    mated = [r for r in results if r.mated]
    if impostor_best.size == 0 or not mated:
        raise ProtocolError("DET needs at least one impostor and one mated probe")
    true_scores = np.array([r.scores[r.subject_id] for r in mated])
    missed_rank1 = np.array([r.rank_of_true() > 1 for r in mated])

    if thresholds is None:
        grid = np.unique(np.concatenate([
            impostor_best, true_scores, [-np.inf, np.inf]
        ]))
    else:
        grid = np.asarray(sorted(thresholds), dtype=np.float64)

    fpir = np.array([np.mean(impostor_best >= t) for t in grid])
    below = true_scores[:, None] < grid[None, :]
    if rank1_conditioned:
        below = below | missed_rank1[:, None]
    fnir = below.mean(axis=0)
    return DetCurve(
        thresholds=grid,
        fpir=fpir,
        fnir=fnir,
        impostor_count=int(impostor_best.size),
        mated_count=len(mated),
    )


def fnir_at_fpir(curve, target_fpir):
    """FNIR at the smallest threshold whose FPIR does not exceed target.

    When the target falls strictly between two achievable FPIR steps,
    FNIR is linearly interpolated between the bracketing points.
    """
    if not 0.0 <= target_fpir <= 1.0:
        raise ValueError("target FPIR must lie in [0, 1]")
    fpir, fnir = curve.fpir, curve.fnir
    if fpir.size == 0:
        raise ProtocolError("empty DET curve")
    # fpir is non-increasing along ascending thresholds; find the first
    # point at or below the target.
    qualifying = fpir <= target_fpir
    if not qualifying.any():
        raise ProtocolError(
            f"no threshold on the curve attains FPIR <= {target_fpir}; "
            f"auto grids include a +inf sentinel that always does"
        )
    idx = int(np.argmax(qualifying))
    if fpir[idx] == target_fpir or idx == 0:
        return float(fnir[idx])
    span = fpir[idx - 1] - fpir[idx]
    frac = (fpir[idx - 1] - target_fpir) / span
    return float(fnir[idx - 1] + frac * (fnir[idx] - fnir[idx - 1]))


def evaluate_split(split, gallery, descriptors, strategy="score",
                   max_rank=100, rank1_conditioned=False):
    """Identify every probe template of a split and compute both curves.

    ``descriptors`` maps media_id to a descriptor vector.  Probes are
    processed in template-id order, so the result list is deterministic.

    Returns (results, cmc, det, summary) where summary holds rank1,
    rank5 and FNIR at the two standard FPIR operating points.
    """
    results = []
    for template in sorted(split.probe, key=lambda t: t.template_id):
        descs = [descriptors[m.media_id] for m in template.media]
        results.append(identify(template, descs, gallery, strategy))
    cmc = compute_cmc(results, max_rank=max_rank)
    det = compute_det(results, rank1_conditioned=rank1_conditioned)
    summary = {
        "rank1": float(cmc.recall_at_rank[0]),
        "rank5": float(cmc.recall_at_rank[min(4, max_rank - 1)]),
        "fnir_at_fpir_0.1": fnir_at_fpir(det, 0.1),
        "fnir_at_fpir_0.01": fnir_at_fpir(det, 0.01),
    }
    return results, cmc, det, summary


SUMMARY_KEYS = ("rank1", "rank5", "fnir_at_fpir_0.1", "fnir_at_fpir_0.01")


def aggregate_summaries(per_split):
    """Combine per-split summaries into mean and standard deviation.

    ``per_split`` maps split index to a summary dict.  The deviation is
    the population standard deviation, so a single split reports 0.
    """
    if not per_split:
        raise ProtocolError("no split summaries to aggregate")
    out = {"splits": {str(k): per_split[k] for k in sorted(per_split)}}
    out["mean"] = {
        key: float(np.mean([s[key] for s in per_split.values()]))
        for key in SUMMARY_KEYS
    }
    out["std"] = {
        key: float(np.std([s[key] for s in per_split.values()]))
        for key in SUMMARY_KEYS
    }
    return out


def write_cmc_csv(curve, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["rank", "recall"])
        for rank, recall in enumerate(curve.recall_at_rank, start=1):
            writer.writerow([rank, repr(float(recall))])


def write_det_csv(curve, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "fpir", "fnir"])
        for t, fp, fn in curve.points:
            writer.writerow([repr(float(t)), repr(float(fp)), repr(float(fn))])


def write_summary_json(summary, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
