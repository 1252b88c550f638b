"""Nearest-neighbor prediction, latent-space generation, and metrics.

Prediction assigns each image the candidate class whose attribute embedding
is nearest in the latent space. The generalized setting can instead sample
synthetic latent features from every class embedding and train a linear
softmax classifier on them, which counteracts the bias towards seen classes.
Accuracies are per-class top-1; seen/unseen accuracies are combined with the
harmonic mean H = 2SU/(S+U) and reported in percent.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, MetricError, ShapeError, StateError
from .gaussian import DistanceKind, pairwise_distance, sample
from .layers import LinearLayer
from .mining import _class_index
from .optim import Adam

EVAL_MODES = ("zsl", "gzsl_nn", "gzsl_generated")


@dataclass
class EvalReport:
    mode: str
    per_class_acc: dict                 # class id -> accuracy in [0, 1]
    n_evaluated: dict                   # class id -> example count
    unseen_acc: float                   # U, percent
    seen_acc: float = None              # S, percent (GZSL only)
    harmonic: float = None              # H, percent (GZSL only)
    extra: dict = field(default_factory=dict)

    def to_key_values(self):
        lines = [f"mode={self.mode}", f"unseen_acc={self.unseen_acc:.6f}"]
        if self.seen_acc is not None:
            lines.append(f"seen_acc={self.seen_acc:.6f}")
        if self.harmonic is not None:
            lines.append(f"harmonic_mean={self.harmonic:.6f}")
        for k in sorted(self.extra):
            lines.append(f"{k}={self.extra[k]}")
        for c in sorted(self.per_class_acc):
            lines.append(
                f"class_{c}_acc={self.per_class_acc[c]:.6f}"
                f" class_{c}_n={self.n_evaluated[c]}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self):
        lines = [
            f"evaluation mode: {self.mode}",
            f"unseen per-class top-1 (U): {self.unseen_acc:.2f}%",
        ]
        if self.seen_acc is not None:
            lines.append(f"seen per-class top-1 (S): {self.seen_acc:.2f}%")
        if self.harmonic is not None:
            lines.append(f"harmonic mean (H): {self.harmonic:.2f}%")
        lines.append("")
        lines.append(f"{'class':>8} {'n':>6} {'accuracy':>9}")
        for c in sorted(self.per_class_acc):
            lines.append(
                f"{c:>8} {self.n_evaluated[c]:>6} {self.per_class_acc[c]:>9.4f}"
            )
        return "\n".join(lines) + "\n"


def harmonic_mean(seen_acc, unseen_acc):
    """2SU/(S+U); scale-invariant, 0 when both terms are 0."""
    if seen_acc + unseen_acc == 0:
        return 0.0
    return 2.0 * seen_acc * unseen_acc / (seen_acc + unseen_acc)


def per_class_top1(predictions, truths):
    """Accuracy per class and their unweighted mean.

    The mean weights every class equally regardless of how many examples it
    contributes, which is the point of the metric on imbalanced test sets.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if predictions.shape != truths.shape or predictions.ndim != 1:
        raise MetricError(
            f"predictions and truths must be equal-length 1-D arrays, got "
            f"{predictions.shape} and {truths.shape}"
        )
    if len(truths) == 0:
        raise MetricError("cannot compute per-class accuracy of an empty set")
    accs, counts = {}, {}
    for c in np.unique(truths):
        m = truths == c
        accs[int(c)] = float((predictions[m] == c).mean())
        counts[int(c)] = int(m.sum())
    return accs, float(np.mean(list(accs.values())))


def _require_inference(*encoders):
    for enc in encoders:
        if enc.training:
            raise StateError("encoders must be in inference mode for prediction")


def predict_zsl(visual, semantic, features, candidate_ids, candidate_attributes,
                kind=DistanceKind.WASSERSTEIN2):
    """Nearest-class prediction over the candidate set.

    Ties break to the lowest class id. ``candidate_attributes`` holds one
    attribute row per entry of ``candidate_ids``.
    """
    _require_inference(visual, semantic)
    candidate_ids = np.asarray(candidate_ids, dtype=np.int64)
    candidate_attributes = np.asarray(candidate_attributes, dtype=np.float64)
    if len(candidate_ids) == 0:
        raise ConfigError("candidate class set is empty")
    if candidate_attributes.shape[0] != len(candidate_ids):
        raise DataError(
            f"{candidate_attributes.shape[0]} attribute rows for "
            f"{len(candidate_ids)} candidate classes"
        )
    image_embs = visual.encode(np.asarray(features, dtype=np.float64))
    class_embs = semantic.encode(candidate_attributes)
    order = np.argsort(candidate_ids, kind="stable")
    dist = pairwise_distance(kind, image_embs, class_embs)[:, order]
    return candidate_ids[order][np.argmin(dist, axis=1)]


@dataclass
class GenerationConfig:
    samples_per_unseen_class: int = 200
    seen_to_unseen_ratio: tuple = (1, 2)
    classifier_lr: float = 1e-3
    classifier_epochs: int = 30
    classifier_batch: int = 128

    def __post_init__(self):
        self.seen_to_unseen_ratio = tuple(int(v) for v in self.seen_to_unseen_ratio)
        if self.samples_per_unseen_class < 1:
            raise ConfigError("samples_per_unseen_class must be >= 1")
        if len(self.seen_to_unseen_ratio) != 2 or min(self.seen_to_unseen_ratio) < 1:
            raise ConfigError(
                f"seen_to_unseen_ratio must be two counts >= 1, got "
                f"{self.seen_to_unseen_ratio}"
            )
        if self.classifier_lr <= 0 or self.classifier_epochs < 1 or self.classifier_batch < 1:
            raise ConfigError("invalid softmax classifier schedule")

    @property
    def samples_per_seen_class(self):
        r_seen, r_unseen = self.seen_to_unseen_ratio
        return max(1, round(self.samples_per_unseen_class * r_seen / r_unseen))


def generate_latent_dataset(semantic, attributes, class_ids, seen_ids, gen, rng):
    """Sample labeled latent vectors from every class's attribute embedding.

    Seen classes receive samples_per_seen_class draws, unseen classes
    samples_per_unseen_class, realizing the configured seen:unseen ratio.
    Returns (latents (M, K), labels (M,)).
    """
    _require_inference(semantic)
    class_ids = np.asarray(class_ids, dtype=np.int64)
    seen = set(np.asarray(seen_ids, dtype=np.int64).tolist())
    embs = semantic.encode(np.asarray(attributes, dtype=np.float64))
    blocks, labels = [], []
    for i, c in enumerate(class_ids):
        n = gen.samples_per_seen_class if int(c) in seen else gen.samples_per_unseen_class
        blocks.append(sample(embs[i], n, rng))
        labels.append(np.full(n, c, dtype=np.int64))
    return np.vstack(blocks), np.concatenate(labels)


class SoftmaxClassifier:
    """Single linear layer + softmax over a fixed class-id set."""

    def __init__(self, class_ids, input_dim, rng):
        self.class_ids = np.sort(np.asarray(class_ids, dtype=np.int64))
        self.linear = LinearLayer(input_dim, len(self.class_ids), rng)

    def logits(self, x):
        return self.linear.forward(np.asarray(x, dtype=np.float64))

    def predict(self, x):
        return self.class_ids[np.argmax(self.logits(x), axis=1)]


def softmax_cross_entropy(logits, target_idx):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    n = logits.shape[0]
    loss = -float(log_probs[np.arange(n), target_idx].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), target_idx] -= 1.0
    return loss, grad / n


def train_softmax_classifier(latent_samples, labels, gen, rng=None, class_ids=None):
    """Fit the linear softmax classifier on generated latent features."""
    latent_samples = np.asarray(latent_samples, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if class_ids is None:
        class_ids = np.unique(labels)
    class_ids = np.sort(np.asarray(class_ids, dtype=np.int64))
    present = set(np.unique(labels).tolist())
    missing = [int(c) for c in class_ids if int(c) not in present]
    if missing:
        raise ConfigError(f"classes with no training samples: {missing}")
    if rng is None:
        rng = np.random.default_rng(0)

    clf = SoftmaxClassifier(class_ids, latent_samples.shape[1], rng)
    target_idx = _class_index(labels, clf.class_ids)
    if np.any(target_idx < 0):
        raise ConfigError("labels outside the declared class-id set")
    opt = Adam(
        [(n, p, g) for n, p, g in clf.linear.parameters()], lr=gen.classifier_lr
    )
    n = latent_samples.shape[0]
    for _ in range(gen.classifier_epochs):
        order = rng.permutation(n)
        for start in range(0, n, gen.classifier_batch):
            idx = order[start:start + gen.classifier_batch]
            logits = clf.logits(latent_samples[idx])
            _, grad = softmax_cross_entropy(logits, target_idx[idx])
            clf.linear.zero_grad()
            clf.linear.backward(grad)
            opt.step()
    return clf


def evaluate(visual, semantic, dataset, mode, gen=None,
             kind=DistanceKind.WASSERSTEIN2, rng=None):
    """Run one evaluation pass and assemble an EvalReport.

    Modes: ``zsl`` restricts candidates to unseen classes and scores only the
    unseen test split; ``gzsl_nn`` scores both test splits against all
    classes with the nearest-neighbor rule; ``gzsl_generated`` trains the
    softmax classifier on generated latent features first.
    """
    if mode not in EVAL_MODES:
        raise ConfigError(f"unknown evaluation mode '{mode}'")
    _require_inference(visual, semantic)
    unseen_x, unseen_y = dataset.rows("test_unseen")
    if len(unseen_y) == 0:
        raise DataError("dataset has no test_unseen rows")

    if mode == "zsl":
        preds = predict_zsl(
            visual, semantic, unseen_x, dataset.unseen_classes,
            dataset.attributes[dataset.unseen_classes], kind,
        )
        accs, mean_acc = per_class_top1(preds, unseen_y)
        counts = {c: int((unseen_y == c).sum()) for c in accs}
        return EvalReport("zsl", accs, counts, 100.0 * mean_acc)

    seen_x, seen_y = dataset.rows("test_seen")
    if len(seen_y) == 0:
        raise DataError("GZSL evaluation needs test_seen rows")
    all_ids = np.arange(dataset.n_classes)

    if mode == "gzsl_nn":
        def classify(x):
            return predict_zsl(visual, semantic, x, all_ids, dataset.attributes, kind)
    else:
        if gen is None:
            raise ConfigError("gzsl_generated mode requires a GenerationConfig")
        if rng is None:
            rng = np.random.default_rng(0)
        latents, labels = generate_latent_dataset(
            semantic, dataset.attributes, all_ids, dataset.seen_classes, gen, rng
        )
        clf = train_softmax_classifier(latents, labels, gen, rng, class_ids=all_ids)

        def classify(x):
            # test images enter as latent means: deterministic evaluation
            return clf.predict(visual.encode(np.asarray(x, dtype=np.float64)).mean)

    preds_u = classify(unseen_x)
    preds_s = classify(seen_x)
    accs_u, mean_u = per_class_top1(preds_u, unseen_y)
    accs_s, mean_s = per_class_top1(preds_s, seen_y)
    accs = {**accs_s, **accs_u}
    counts = {c: int((unseen_y == c).sum()) for c in accs_u}
    counts.update({c: int((seen_y == c).sum()) for c in accs_s})
    u, s = 100.0 * mean_u, 100.0 * mean_s
    return EvalReport(mode, accs, counts, u, s, harmonic_mean(s, u))


def export_latent_means(visual, features, labels):
    """Delimited text: one row per example, K mean columns then the label."""
    _require_inference(visual)
    means = visual.encode(np.asarray(features, dtype=np.float64)).mean
    lines = [
        ",".join(f"{v:.10g}" for v in row) + f",{int(y)}"
        for row, y in zip(means, labels)
    ]
    return "\n".join(lines) + "\n"
