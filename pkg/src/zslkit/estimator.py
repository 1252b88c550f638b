"""Scikit-learn style wrapper around the triplet distribution-embedding model.

``GaussianTripletZSL`` exposes the usual fit/predict surface so the model
composes with sklearn tooling. ``class_attributes`` carries one semantic
vector per class id (including classes absent from ``y``), which is what
makes zero-shot prediction over unseen ids possible.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import ZslDataset
from .evaluation import predict_zsl
from .gaussian import DistanceKind
from .training import TrainConfig, train


class GaussianTripletZSL(BaseEstimator, ClassifierMixin):
    """Zero-shot classifier over diagonal-Gaussian latent embeddings.

    Parameters mirror TrainConfig; ``distance`` accepts the DistanceKind
    values ("wasserstein2", "kl", "bhattacharyya", "euclidean").
    """

    def __init__(self, n_steps=2000, batch_size=64, learning_rate=1e-5,
                 margin=1.0, distance="wasserstein2", latent_dim=64,
                 visual_hidden=512, semantic_hidden=512, visual_dropout=0.5,
                 semantic_dropout=0.1, use_batchnorm=True, random_state=0):
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.margin = margin
        self.distance = distance
        self.latent_dim = latent_dim
        self.visual_hidden = visual_hidden
        self.semantic_hidden = semantic_hidden
        self.visual_dropout = visual_dropout
        self.semantic_dropout = semantic_dropout
        self.use_batchnorm = use_batchnorm
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            iterations=self.n_steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            margin=self.margin,
            seed=self.random_state,
            distance=DistanceKind(self.distance),
            latent_dim=self.latent_dim,
            visual_hidden=self.visual_hidden,
            semantic_hidden=self.semantic_hidden,
            visual_dropout=self.visual_dropout,
            semantic_dropout=self.semantic_dropout,
            use_batchnorm=self.use_batchnorm,
        )

    def fit(self, X, y, class_attributes):
        """Train on seen classes.

        ``class_attributes`` is a (n_classes, L) matrix indexed by class id;
        ids present in ``y`` are the seen classes, the remaining rows describe
        unseen classes available at prediction time.
        """
        X, y = check_X_y(X, y, dtype=np.float64)
        class_attributes = check_array(class_attributes, dtype=np.float64)
        y = y.astype(np.int64)
        seen = np.unique(y)
        n_classes = class_attributes.shape[0]
        unseen = np.setdiff1d(np.arange(n_classes), seen)
        dataset = ZslDataset(
            features=X,
            labels=y,
            attributes=class_attributes,
            split=np.array(["train_seen"] * len(y), dtype=object),
            seen_classes=seen,
            unseen_classes=unseen,
        )
        self.visual_, self.semantic_, self.run_log_ = train(
            dataset, self._train_config()
        )
        self.class_attributes_ = class_attributes
        self.classes_ = np.arange(n_classes)
        self.seen_classes_ = seen
        self.unseen_classes_ = unseen
        return self

    def predict(self, X, candidate_classes=None):
        """Nearest-class prediction; candidates default to every known class."""
        check_is_fitted(self, "visual_")
        X = check_array(X, dtype=np.float64)
        if candidate_classes is None:
            candidate_classes = self.classes_
        candidate_classes = np.asarray(candidate_classes, dtype=np.int64)
        return predict_zsl(
            self.visual_, self.semantic_, X, candidate_classes,
            self.class_attributes_[candidate_classes],
            DistanceKind(self.distance),
        )

    def transform(self, X):
        """Latent mean embedding of each row; composes with sklearn pipelines."""
        check_is_fitted(self, "visual_")
        X = check_array(X, dtype=np.float64)
        return self.visual_.encode(X).mean
