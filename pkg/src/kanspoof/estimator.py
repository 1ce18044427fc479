"""scikit-learn style wrappers around the feature stub and the detector.

Inputs are raw waveforms: a sequence of 1-D float arrays that may differ
in length, so the usual 2-D ``check_array`` does not apply; the helpers
below do the equivalent validation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.model_selection import train_test_split
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted

from .errors import InputError
from .harness.features import FRAME
from .harness.training import TrainConfig, featurize, score_features, train_arrays
from .model import BONAFIDE, ConformerConfig, ModelConfig, ProjectorConfig
from .tensor import no_grad


def check_waveforms(X, min_samples=FRAME):
    """Return ``X`` as a list of finite float64 1-D arrays of at least ``min_samples``."""
    if isinstance(X, np.ndarray) and X.ndim == 1 and X.dtype != object:
        raise InputError("expected a sequence of waveforms, got a single 1-D array; wrap it in a list")
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = list(X)
    try:
        waves = [np.asarray(w, dtype=np.float64) for w in X]
    except (TypeError, ValueError) as exc:
        raise InputError(f"waveforms must be numeric arrays: {exc}") from None
    if not waves:
        raise InputError("need at least one waveform")
    for i, w in enumerate(waves):
        if w.ndim != 1:
            raise InputError(f"waveform {i} has shape {w.shape}; expected 1-D samples")
        if len(w) < min_samples:
            raise InputError(f"waveform {i} has {len(w)} samples; need at least {min_samples}")
        if not np.all(np.isfinite(w)):
            raise InputError(f"waveform {i} contains non-finite samples")
    return waves


def check_features(X, width=None):
    """Validate a list (or 3-D array) of ``[frames, width]`` feature matrices."""
    feats = [np.asarray(f, dtype=np.float64) for f in X]
    if not feats:
        raise InputError("need at least one feature matrix")
    for i, f in enumerate(feats):
        if f.ndim != 2 or f.shape[0] < 1:
            raise InputError(f"feature matrix {i} has shape {f.shape}; expected [frames, width]")
        if width is not None and f.shape[1] != width:
            raise InputError(f"feature matrix {i} has width {f.shape[1]}; expected {width}")
        if not np.all(np.isfinite(f)):
            raise InputError(f"feature matrix {i} contains non-finite values")
    return feats


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Waveforms -> log-filterbank random-projection features.

    ``transform`` returns a 3-D array when ``target_samples`` fixes the
    length, otherwise a list of per-utterance ``[frames, width]`` arrays.
    """

    def __init__(self, width=128, target_samples=None, seed=0):
        self.width = width
        self.target_samples = target_samples
        self.seed = seed

    def fit(self, X, y=None):
        check_waveforms(X)
        self.n_features_out_ = self.width
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_out_")
        feats = featurize(check_waveforms(X), self.width, self.target_samples, self.seed)
        return np.stack(feats) if self.target_samples is not None else feats


class SpoofDetector(ClassifierMixin, BaseEstimator):
    """Conformer spoofing detector trained on raw waveforms.

    Labels may be the strings ``"bonafide"``/``"spoof"`` or integers with
    1 meaning bonafide.  A stratified ``validation_fraction`` of the
    training data drives early stopping and top-N averaging.
    ``decision_function`` returns the detection score (higher means more
    bonafide).
    """

    def __init__(
        self,
        projector="grkan",
        feature_dim=128,
        model_dim=64,
        blocks=2,
        heads=4,
        kernel_size=15,
        ff_expansion=4,
        dropout=0.1,
        groups=8,
        lr=1e-3,
        weight_decay=1e-4,
        rational_lr_scale=0.1,
        batch_size=32,
        max_epochs=30,
        patience=7,
        top_n=5,
        target_samples=64000,
        variable_length=False,
        validation_fraction=0.2,
        random_state=0,
    ):
        self.projector = projector
        self.feature_dim = feature_dim
        self.model_dim = model_dim
        self.blocks = blocks
        self.heads = heads
        self.kernel_size = kernel_size
        self.ff_expansion = ff_expansion
        self.dropout = dropout
        self.groups = groups
        self.lr = lr
        self.weight_decay = weight_decay
        self.rational_lr_scale = rational_lr_scale
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.top_n = top_n
        self.target_samples = target_samples
        self.variable_length = variable_length
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _config(self):
        model = ModelConfig(
            ProjectorConfig(kind=self.projector, in_dim=self.feature_dim, out_dim=self.model_dim, groups=self.groups),
            ConformerConfig(self.blocks, self.model_dim, self.heads, self.kernel_size, self.ff_expansion, self.dropout),
        )
        return TrainConfig(
            model=model,
            lr=self.lr,
            weight_decay=self.weight_decay,
            rational_lr_scale=self.rational_lr_scale,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            top_n=self.top_n,
            target_samples=self.target_samples,
            seed=self.random_state,
        ).validate()

    def _bonafide_mask(self, y):
        if self.classes_.dtype.kind in "OUS":
            if set(self.classes_) != {"bonafide", "spoof"}:
                raise InputError(f"string labels must be 'bonafide' and 'spoof', got {list(self.classes_)}")
            return y == "bonafide"
        return y == BONAFIDE

    def fit(self, X, y):
        waves = check_waveforms(X)
        y = np.asarray(y)
        if len(y) != len(waves):
            raise InputError(f"{len(waves)} waveforms but {len(y)} labels")
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise InputError(f"need exactly two classes, got {list(self.classes_)}")
        if self.classes_.dtype.kind not in "OUS" and set(self.classes_.tolist()) != {0, 1}:
            raise InputError(f"integer labels must be 0 (spoof) and 1 (bonafide), got {list(self.classes_)}")
        self.config_ = self._config()
        labels = np.where(self._bonafide_mask(y), BONAFIDE, 1 - BONAFIDE)
        feats = np.stack(featurize(waves, self.feature_dim, self.target_samples, self.config_.feature_seed))
        X_tr, X_dev, y_tr, y_dev = train_test_split(
            feats, labels, test_size=self.validation_fraction, stratify=labels, random_state=self.random_state
        )
        result = train_arrays(self.config_, X_tr, y_tr, X_dev, y_dev)
        self.model_ = result.model
        self.members_ = result.members
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.n_features_in_ = self.feature_dim
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        target = None if self.variable_length else self.target_samples
        feats = featurize(check_waveforms(X), self.feature_dim, target, self.config_.feature_seed)
        with no_grad():
            return score_features(self.model_, feats, self.members_ or None)

    def predict_proba(self, X):
        """Columns follow ``classes_``; P(bonafide) is the logistic of the score."""
        scores = self.decision_function(X)
        p_bona = 0.5 * (1.0 + np.tanh(0.5 * scores))
        bona_col = int(np.flatnonzero(self._bonafide_mask(self.classes_))[0])
        proba = np.empty((len(scores), 2))
        proba[:, bona_col] = p_bona
        proba[:, 1 - bona_col] = 1.0 - p_bona
        return proba

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]
