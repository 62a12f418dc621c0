"""Per-identity linear classifiers trained on the gallery.

One binary max-margin model is trained per enrolled identity, with that
identity's media as positives and everything else as negatives; every
image or video frame counts as an individual sample.  After training,
each model's scores are affinely rescaled so the median positive
training score is +1 and the median negative is -1 (two constraints,
hence scale plus shift).  Rescaling is a positive affine map, so score
orderings are preserved.

The solver is plain deterministic subgradient descent on

    0.5 * ||v||^2 + C * sum_i c_i * max(0, 1 - y_i * (v . z_i))

where ``z_i = [x_i, 1]`` augments the bias into ``v`` (so the intercept
is lightly regularized too, which keeps the diminishing-step schedule
stable), and ``c_i`` are optional balance weights.  One full-batch step
per epoch with rate ``1 / (lambda * t)``, ``lambda = 1 / (C * n)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateModelError, ProtocolError, ShapeError


@dataclass
class LinearModel:
    """Weights, bias and affine score rescale for one gallery identity.

    Reported score = rescale_a * (w . x + b) + rescale_b, rescale_a > 0.
    """

    identity_id: str
    w: np.ndarray
    b: float
    rescale_a: float = 1.0
    rescale_b: float = 0.0


def raw_score(model, descriptor):
    """Margin score before rescaling: ``w . x + b``."""
    d = np.asarray(descriptor)
    if d.shape != model.w.shape:
        raise ShapeError(
            f"descriptor dim {d.shape} does not match model dim {model.w.shape}"
        )
    return float(model.w @ d) + float(model.b)


def score(model, descriptor):
    """Rescaled score: ``rescale_a * (w . x + b) + rescale_b``."""
    return float(model.rescale_a) * raw_score(model, descriptor) + float(
        model.rescale_b
    )


@dataclass
class GalleryModelSet:
    """One LinearModel per enrolled identity, all of equal dimension."""

    models: list = field(default_factory=list)
    descriptor_dim: int = 0

    def __post_init__(self):
        ids = [m.identity_id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ProtocolError("duplicate identity ids in gallery model set")
        for m in self.models:
            if m.w.shape != (self.descriptor_dim,):
                raise ShapeError(
                    f"model {m.identity_id!r} has dim {m.w.shape}, "
                    f"expected ({self.descriptor_dim},)"
                )

    @property
    def identity_ids(self):
        return [m.identity_id for m in self.models]

    def score_vector(self, descriptor):
        """Scores of one descriptor against every enrolled identity."""
        return {m.identity_id: score(m, descriptor) for m in self.models}


def hinge_objective(w, b, X, y, reg_c, weights=None):
    """Value of 0.5*||w||^2 + 0.5*b^2 + C * sum of weighted hinge losses."""
    margins = y * (X @ w + b)
    hinge = np.maximum(0.0, 1.0 - margins)
    if weights is not None:
        hinge = hinge * weights
    return 0.5 * (float(w @ w) + float(b) ** 2) + reg_c * float(hinge.sum())


def train_binary_svm(X, y, reg_c=1.0, epochs=100, weights=None):
    """Deterministic full-batch subgradient descent on the hinge objective.

    Returns ``(w, b, trace)`` where ``trace[t]`` is the objective at the
    start of epoch ``t`` plus a final entry for the returned iterate.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, dim = X.shape
    if weights is None:
        weights = np.ones(n)
    lam = 1.0 / (reg_c * n)
    v = np.zeros(dim + 1)
    Z = np.hstack([X, np.ones((n, 1))])
    trace = []
    for t in range(1, epochs + 1):
        trace.append(hinge_objective(v[:dim], v[dim], X, y, reg_c, weights))
        margins = y * (Z @ v)
        violating = margins < 1.0
        cw = weights * violating
        subgrad = lam * v - (cw * y) @ Z / n
        v = v - subgrad / (lam * t)
    trace.append(hinge_objective(v[:dim], v[dim], X, y, reg_c, weights))
    return v[:dim], float(v[dim]), trace


def rescale_model(model, pos_scores, neg_scores):
    """Affine rescale so median positive maps to +1 and median negative to -1.

    Solves ``a * median(pos) + b = 1`` and ``a * median(neg) + b = -1``:
    ``a = 2 / (median(pos) - median(neg))``, ``b = 1 - a * median(pos)``.
    Requires ``median(pos) > median(neg)`` so that ``a > 0`` and score
    order is preserved.
    """
    pos_scores = np.asarray(pos_scores, dtype=np.float64)
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    if pos_scores.size == 0 or neg_scores.size == 0:
        raise ValueError("both score lists must be non-empty")
    med_pos = float(np.median(pos_scores))
    med_neg = float(np.median(neg_scores))
    if med_pos <= med_neg:
        raise DegenerateModelError(
            f"median positive score {med_pos:g} does not exceed "
            f"median negative {med_neg:g} for {model.identity_id!r}"
        )
    a = 2.0 / (med_pos - med_neg)
    return LinearModel(
        identity_id=model.identity_id,
        w=model.w.copy(),
        b=model.b,
        rescale_a=a,
        rescale_b=1.0 - a * med_pos,
    )


def _train_one_identity(identity, X, label_arr, reg_c, epochs, balanced):
    y = np.where(label_arr == identity, 1.0, -1.0)
    weights = None
    if balanced:
        n_pos = int((y > 0).sum())
        n_neg = int((y < 0).sum())
        weights = np.where(y > 0, n_neg / n_pos, 1.0)
    w, b, _ = train_binary_svm(X, y, reg_c=reg_c, epochs=epochs,
                               weights=weights)
    scores = X @ w + b
    model = LinearModel(identity_id=identity, w=w, b=b)
    return rescale_model(model, scores[y > 0], scores[y < 0])


def train_ovr_svm(descriptors, labels, reg_c=1.0, epochs=100, seed=0,
                  balanced=False, workers=1):
    """Train one-vs-rest linear models on a labeled descriptor set.

    Parameters
    ----------
    descriptors : (n, dim) array
    labels : sequence of n identity-id strings (>= 2 distinct)
    reg_c : hinge penalty C
    epochs : full-batch subgradient steps per identity
    seed : reserved for subsampling solver variants; the shipped
        full-batch solver is deterministic regardless
    balanced : weight each positive by n_neg / n_pos to counter the
        one-vs-rest imbalance (off by default)
    workers : per-identity trainings are independent and run on a
        thread pool when > 1; the result is identical either way

    Returns
    -------
    GalleryModelSet with one rescaled model per identity, ordered by
    ascending identity id.
    """
    del seed
    X = np.asarray(descriptors, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"descriptors must be (n, dim), got shape {X.shape}")
    labels = [str(l) for l in labels]
    if len(labels) != X.shape[0]:
        raise ShapeError(
            f"{X.shape[0]} descriptors but {len(labels)} labels"
        )
    identities = sorted(set(labels))
    if len(identities) < 2:
        raise ProtocolError("one-vs-rest training needs at least 2 identities")

    label_arr = np.asarray(labels)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(
                lambda ident: _train_one_identity(
                    ident, X, label_arr, reg_c, epochs, balanced),
                identities,
            ))
    else:
        models = [
            _train_one_identity(ident, X, label_arr, reg_c, epochs, balanced)
            for ident in identities
        ]
    return GalleryModelSet(models=models, descriptor_dim=X.shape[1])
