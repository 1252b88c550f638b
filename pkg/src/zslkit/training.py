"""End-to-end training loop, run logging, and checkpoint serialization.

Each iteration samples a mini-batch from an epoch-shuffled pass over the
training rows, embeds the batch and every seen-class attribute vector, mines
one hard negative per anchor, applies the margin hinge loss, and updates both
encoders jointly with Adam. Steps whose hinge is zero everywhere are skipped
entirely so that a fully satisfied batch leaves the parameters untouched.
"""

import json
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import write_bytes_atomic, write_text_atomic
from .encoder import Encoder, EncoderConfig
from .errors import CheckpointFormatError, ConfigError, NumericalError
from .gaussian import DistanceKind
from .mining import mine_negatives, triplet_loss
from .optim import Adam

CHECKPOINT_MAGIC = b"ZSLCKPT\x00"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-5
    margin: float = 1.0
    seed: int = 0
    distance: DistanceKind = DistanceKind.WASSERSTEIN2
    eval_every: int = 0
    latent_dim: int = 64
    visual_hidden: int = 512
    semantic_hidden: int = 512
    visual_dropout: float = 0.5
    semantic_dropout: float = 0.1
    use_batchnorm: bool = True

    def __post_init__(self):
        self.distance = DistanceKind(self.distance)
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.eval_every < 0:
            raise ConfigError(f"eval_every must be >= 0, got {self.eval_every}")

    def to_dict(self):
        d = asdict(self)
        d["distance"] = self.distance.value
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class RunLog:
    steps: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    violated_fractions: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    evals: list = field(default_factory=list)   # (step, EvalReport)
    skipped_anchor_total: int = 0

    def record(self, step, loss, violated, ms):
        self.steps.append(step)
        self.losses.append(loss)
        self.violated_fractions.append(violated)
        self.wall_ms.append(ms)

    def to_text(self):
        """Line-delimited records: step, loss, violated-triplet fraction.

        Wall-clock times stay out of the export so identical runs produce
        byte-identical logs.
        """
        lines = ["step loss violated_fraction"]
        for s, l, v in zip(self.steps, self.losses, self.violated_fractions):
            lines.append(f"{s} {l!r} {v!r}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        write_text_atomic(path, self.to_text())


class _EpochSampler:
    """Full-size mini-batches from a reshuffled pass over the indices; a
    trailing remainder smaller than the batch is dropped at epoch end."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch_size = min(batch_size, n)
        if self.batch_size < 2:
            raise ConfigError("need at least 2 training rows per batch")
        self.rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next_batch(self):
        if self._pos + self.batch_size > self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        batch = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return batch


def build_encoders(dataset, config, rng):
    visual = Encoder(
        EncoderConfig(
            dataset.feature_dim, config.visual_hidden, config.latent_dim,
            config.visual_dropout, config.use_batchnorm,
        ),
        rng,
    )
    semantic = Encoder(
        EncoderConfig(
            dataset.attribute_dim, config.semantic_hidden, config.latent_dim,
            config.semantic_dropout, config.use_batchnorm,
        ),
        rng,
    )
    return visual, semantic


def train(dataset, config, eval_fn=None):
    """Train both encoders; returns (visual, semantic, RunLog).

    ``eval_fn(visual, semantic, step)`` is invoked every ``eval_every`` steps
    (encoders temporarily in inference mode); by default periodic evaluation
    runs the zero-shot mode on the dataset's unseen test split.
    """
    if len(dataset.seen_classes) < 2:
        raise ConfigError("training needs at least 2 seen classes")
    train_x, train_y = dataset.rows("train_seen")
    if len(train_y) == 0:
        raise ConfigError("dataset has no train_seen rows")
    for c in dataset.seen_classes:
        if not np.any(train_y == c):
            raise ConfigError(f"seen class {int(c)} has no training examples")

    rng = np.random.default_rng(config.seed)
    visual, semantic = build_encoders(dataset, config, rng)
    params = visual.parameters() + semantic.parameters()
    opt = Adam(params, lr=config.learning_rate)
    sampler = _EpochSampler(len(train_y), config.batch_size, rng)

    seen_ids = dataset.seen_classes
    seen_attrs = dataset.attributes[seen_ids]
    log = RunLog()

    for step in range(config.iterations):
        t0 = time.perf_counter()
        batch = sampler.next_batch()
        x = train_x[batch]
        y = train_y[batch]

        image_embs = visual.encode(x, rng=rng)
        class_embs = semantic.encode(seen_attrs, rng=rng, allow_small_batch=True)
        negatives = mine_negatives(image_embs, y, class_embs, seen_ids, config.distance)
        result = triplet_loss(
            image_embs, y, class_embs, seen_ids, negatives,
            config.margin, config.distance,
        )
        if not np.isfinite(result.loss):
            worst = int(np.argmax(~np.isfinite(result.per_anchor))) if result.per_anchor is not None else -1
            raise NumericalError(
                f"non-finite loss at step {step} (anchor {worst} in batch)"
            )
        log.record(step, result.loss, result.violated_fraction,
                   1000.0 * (time.perf_counter() - t0))
        log.skipped_anchor_total += result.skipped_anchors

        if result.violated_fraction > 0.0:
            visual.zero_grad()
            semantic.zero_grad()
            visual.encode_backward(result.grad_image_mean, result.grad_image_log_var)
            semantic.encode_backward(result.grad_class_mean, result.grad_class_log_var)
            opt.step()

        if config.eval_every and (step + 1) % config.eval_every == 0:
            visual.eval()
            semantic.eval()
            if eval_fn is not None:
                log.evals.append((step + 1, eval_fn(visual, semantic, step + 1)))
            else:
                from .evaluation import evaluate
                log.evals.append(
                    (step + 1, evaluate(visual, semantic, dataset, "zsl",
                                        kind=config.distance))
                )
            visual.train()
            semantic.train()

    visual.eval()
    semantic.eval()
    return visual, semantic, log


def check_dataset_compatibility(visual, semantic, dataset):
    """Reject a checkpoint whose encoder widths do not match the dataset."""
    if visual.config.input_dim != dataset.feature_dim:
        raise CheckpointFormatError(
            f"checkpoint visual input_dim {visual.config.input_dim} does not "
            f"match dataset feature dim {dataset.feature_dim}"
        )
    if semantic.config.input_dim != dataset.attribute_dim:
        raise CheckpointFormatError(
            f"checkpoint semantic input_dim {semantic.config.input_dim} does "
            f"not match dataset attribute dim {dataset.attribute_dim}"
        )


def _encoder_manifest(name, encoder):
    return {
        "name": name,
        "config": asdict(encoder.config),
        "arrays": [
            {"name": n, "shape": list(a.shape)} for n, a in encoder.state_arrays()
        ],
    }


def save_checkpoint(visual, semantic, config, path):
    """Versioned little-endian binary: magic, manifest, raw float64 payload."""
    manifest = {
        "train_config": config.to_dict(),
        "encoders": [
            _encoder_manifest("visual", visual),
            _encoder_manifest("semantic", semantic),
        ],
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes()
        for enc in (visual, semantic)
        for _, a in enc.state_arrays()
    )
    blob = (
        CHECKPOINT_MAGIC
        + struct.pack("<II", CHECKPOINT_VERSION, len(manifest_bytes))
        + manifest_bytes
        + payload
    )
    write_bytes_atomic(path, blob)


def load_checkpoint(path):
    """Rebuild both encoders (inference mode) and the training config."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header = len(CHECKPOINT_MAGIC) + 8
    if len(blob) < header or blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic bytes)")
    version, manifest_len = struct.unpack_from("<II", blob, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    if len(blob) < header + manifest_len:
        raise CheckpointFormatError("truncated checkpoint (manifest incomplete)")
    try:
        manifest = json.loads(blob[header:header + manifest_len].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointFormatError(f"corrupt checkpoint manifest: {exc}") from exc

    config = TrainConfig.from_dict(manifest["train_config"])
    offset = header + manifest_len
    encoders = []
    rng = np.random.default_rng(0)
    for enc_manifest in manifest["encoders"]:
        enc = Encoder(EncoderConfig(**enc_manifest["config"]), rng)
        arrays = []
        for spec in enc_manifest["arrays"]:
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            nbytes = 8 * count
            if offset + nbytes > len(blob):
                raise CheckpointFormatError("truncated checkpoint (payload incomplete)")
            arrays.append(
                np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
                .reshape(spec["shape"])
            )
            offset += nbytes
        enc.load_state_arrays(arrays)
        enc.eval()
        encoders.append(enc)
    if offset != len(blob):
        raise CheckpointFormatError("trailing bytes after checkpoint payload")
    visual, semantic = encoders
    return visual, semantic, config
