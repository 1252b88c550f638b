"""Online hard-negative mining and the margin hinge loss over triplets.

For every anchor image the single hardest negative is the nearest class
embedding with a different label, recomputed from the current embeddings on
every call. The batch loss averages hinge terms
[d(img, pos) - d(img, neg) + margin]_+ over the anchors; squared distances
are used throughout, so the margin lives in squared-distance units.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MiningError, ShapeError
from .gaussian import distance_with_grads, pairwise_distance


def _class_index(labels, class_ids):
    """Map each label to its row in class_ids; -1 where the label is absent."""
    lookup = {int(c): i for i, c in enumerate(class_ids)}
    return np.array([lookup.get(int(y), -1) for y in labels], dtype=np.int64)


def mine_negatives(image_embs, labels, class_embs, class_ids, kind):
    """Hardest wrong-class id per anchor; ties break to the lowest class id.

    ``class_embs`` holds one embedding per entry of ``class_ids``. Every label
    must have an embedding present, and at least two classes are required.
    """
    class_ids = np.asarray(class_ids, dtype=np.int64)
    if len(class_embs) != len(class_ids):
        raise ShapeError(
            f"{len(class_embs)} class embeddings for {len(class_ids)} class ids"
        )
    if len(class_ids) < 2:
        raise MiningError("negative mining needs at least two candidate classes")
    pos_idx = _class_index(labels, class_ids)
    if np.any(pos_idx < 0):
        missing = sorted({int(y) for y, i in zip(labels, pos_idx) if i < 0})
        raise MiningError(f"labels without a class embedding: {missing}")

    # Scan columns in ascending class-id order so argmin's first-hit rule
    # implements the lowest-id tie break regardless of supply order.
    order = np.argsort(class_ids, kind="stable")
    dist = pairwise_distance(kind, image_embs, class_embs)[:, order]
    ordered_ids = class_ids[order]
    own_col = np.searchsorted(ordered_ids, np.asarray(labels, dtype=np.int64))
    dist[np.arange(dist.shape[0]), own_col] = np.inf
    return ordered_ids[np.argmin(dist, axis=1)]


@dataclass
class TripletLossResult:
    loss: float
    grad_image_mean: np.ndarray
    grad_image_log_var: np.ndarray
    grad_class_mean: np.ndarray
    grad_class_log_var: np.ndarray
    violated_fraction: float
    skipped_anchors: int = 0
    per_anchor: np.ndarray = field(default=None, repr=False)


def triplet_loss(image_embs, labels, class_embs, class_ids, negatives, margin, kind):
    """Mean hinge loss over the batch plus cotangents for every embedding.

    Anchors whose class has no embedding in ``class_ids`` are skipped and
    counted in ``skipped_anchors``. Class cotangents are accumulated across
    anchors sharing a class.
    """
    if margin <= 0.0:
        raise ConfigError(f"margin must be positive, got {margin}")
    class_ids = np.asarray(class_ids, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    negatives = np.asarray(negatives, dtype=np.int64)
    if len(labels) != len(image_embs) or len(negatives) != len(image_embs):
        raise ShapeError("labels/negatives must align with the image batch")

    pos_idx = _class_index(labels, class_ids)
    neg_idx = _class_index(negatives, class_ids)
    if np.any(neg_idx < 0):
        raise ShapeError("a mined negative has no class embedding")
    used = pos_idx >= 0
    skipped = int((~used).sum())
    n_used = int(used.sum())
    grad_img_mu = np.zeros_like(image_embs.mean)
    grad_img_lv = np.zeros_like(image_embs.log_var)
    grad_cls_mu = np.zeros_like(class_embs.mean)
    grad_cls_lv = np.zeros_like(class_embs.log_var)
    if n_used == 0:
        return TripletLossResult(
            0.0, grad_img_mu, grad_img_lv, grad_cls_mu, grad_cls_lv, 0.0, skipped,
            np.zeros(0),
        )

    img_mu = image_embs.mean[used]
    img_lv = image_embs.log_var[used]
    p = pos_idx[used]
    n = neg_idx[used]

    d_pos, gmu_ip, glv_ip, gmu_p, glv_p = distance_with_grads(
        kind, img_mu, img_lv, class_embs.mean[p], class_embs.log_var[p]
    )
    d_neg, gmu_in, glv_in, gmu_n, glv_n = distance_with_grads(
        kind, img_mu, img_lv, class_embs.mean[n], class_embs.log_var[n]
    )
    hinge = d_pos - d_neg + margin
    active = hinge > 0.0
    per_anchor = np.where(active, hinge, 0.0)
    loss = float(per_anchor.sum() / n_used)

    w = active.astype(np.float64)[:, None] / n_used
    rows = np.flatnonzero(used)
    np.add.at(grad_img_mu, rows, w * (gmu_ip - gmu_in))
    np.add.at(grad_img_lv, rows, w * (glv_ip - glv_in))
    np.add.at(grad_cls_mu, p, w * gmu_p)
    np.add.at(grad_cls_lv, p, w * glv_p)
    np.add.at(grad_cls_mu, n, -w * gmu_n)
    np.add.at(grad_cls_lv, n, -w * glv_n)

    return TripletLossResult(
        loss,
        grad_img_mu,
        grad_img_lv,
        grad_cls_mu,
        grad_cls_lv,
        float(active.mean()),
        skipped,
        per_anchor,
    )
