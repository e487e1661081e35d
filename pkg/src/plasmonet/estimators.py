"""Estimator front end: fit/transform/predict wrappers over the toolkit.

These follow scikit-learn conventions (constructor stores hyperparameters
verbatim, ``fit`` validates and sets trailing-underscore attributes,
``get_params``/``set_params`` work for grid search). sklearn's own
``check_array`` rejects complex input, so validation goes through this
package's helpers instead.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .beam import ArrayGeometry, FarFieldGrid, beam_excitation, train_beam_codebook
from .data import SpectralInputSpec, dft_compress_batch
from .device import build_board, build_stack
from .netcore import class_ports, detect
from .train import TrainConfig, pretrain
from .validation import ValidationError, as_complex_array


def _encode_labels(y):
    classes, encoded = np.unique(np.asarray(y), return_inverse=True)
    if len(classes) < 2:
        raise ValidationError("y: need at least two classes")
    return classes, encoded


class SpectralCompressor(TransformerMixin, BaseEstimator):
    """Images to their lowest-frequency 2-D DFT components.

    Stateless apart from the bin layout; ``fit`` exists for pipeline
    compatibility.
    """

    def __init__(self, bin_count=32, image_size=(28, 28), normalize=True):
        self.bin_count = bin_count
        self.image_size = image_size
        self.normalize = normalize

    def fit(self, X, y=None):
        self.spec_ = SpectralInputSpec(
            image_size=tuple(self.image_size), bin_count=self.bin_count
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        return dft_compress_batch(X, self.spec_, normalize=self.normalize)


class PhasedNetworkClassifier(ClassifierMixin, BaseEstimator):
    """Port-energy classifier: a board stack read out at per-class ports.

    ``fit`` expects complex input fields of shape (n, ports); the class
    decision is the detector port with the highest intensity, and training
    adjusts only phases (plus nothing else: there is no head).
    """

    def __init__(
        self,
        boards=3,
        stages=3,
        port_count=32,
        learning_rate=0.01,
        momentum=0.9,
        batch_size=64,
        epochs=50,
        seed=0,
        intensity_scale=10.0,
        val_fraction=0.2,
        quiet=True,
    ):
        self.boards = boards
        self.stages = stages
        self.port_count = port_count
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.intensity_scale = intensity_scale
        self.val_fraction = val_fraction
        self.quiet = quiet

    def _config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
        )

    def fit(self, X, y):
        X = as_complex_array(X, "X", ndim=2)
        if X.shape[1] != self.port_count:
            raise ValidationError(
                f"X: expected (n, {self.port_count}), got {X.shape}"
            )
        self.classes_, encoded = _encode_labels(y)
        ports = class_ports(self.port_count, len(self.classes_))
        self.net_ = build_stack(
            boards=self.boards,
            port_count=self.port_count,
            stages=self.stages,
            detector_ports=ports,
        )
        self.result_ = pretrain(
            self.net_,
            None,
            (X, encoded),
            self._config(),
            intensity_scale=self.intensity_scale,
            val_fraction=self.val_fraction,
            quiet=self.quiet,
        )
        self.history_ = self.result_.history
        return self

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        X = as_complex_array(X, "X", ndim=2)
        return self.intensity_scale * detect(self.net_, X[:, None, None, :])

    def predict(self, X):
        return self.classes_[self.decision_function(X).argmax(axis=1)]


class DetectorHeadClassifier(ClassifierMixin, BaseEstimator):
    """Phase network plus linear head on the detected intensity vector.

    ``fit`` expects complex fields of shape (n, freqs, slots, ports); the
    feature vector is slots x detector ports. With ``train_phases=False``
    only the head trains (the network acts as a fixed random projection).
    """

    def __init__(
        self,
        stages=3,
        boards=1,
        port_count=32,
        detector_ports=(5, 13, 21),
        input_ports=None,
        learning_rate=0.01,
        momentum=0.9,
        batch_size=64,
        epochs=100,
        seed=0,
        val_fraction=0.2,
        quiet=True,
    ):
        self.stages = stages
        self.boards = boards
        self.port_count = port_count
        self.detector_ports = detector_ports
        self.input_ports = input_ports
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.val_fraction = val_fraction
        self.quiet = quiet

    def fit(self, X, y):
        from .netcore import LinearHead

        X = as_complex_array(X, "X")
        if X.ndim == 2:
            X = X[:, None, None, :]
        if X.ndim != 4 or X.shape[-1] != self.port_count:
            raise ValidationError(
                f"X: expected (n, freqs, slots, {self.port_count}), got {X.shape}"
            )
        self.classes_, encoded = _encode_labels(y)
        self.net_ = build_stack(
            boards=self.boards,
            port_count=self.port_count,
            stages=self.stages,
            detector_ports=tuple(self.detector_ports),
            input_ports=None if self.input_ports is None else tuple(self.input_ports),
        )
        n_feat = X.shape[2] * len(self.detector_ports)
        head = LinearHead(
            np.zeros((len(self.classes_), n_feat)), np.zeros(len(self.classes_))
        )
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
        )
        self.result_ = pretrain(
            self.net_,
            head,
            (X, encoded),
            cfg,
            val_fraction=self.val_fraction,
            quiet=self.quiet,
        )
        self.head_ = self.result_.head
        self.scaler_ = self.result_.scaler
        self.history_ = self.result_.history
        return self

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        X = as_complex_array(X, "X")
        if X.ndim == 2:
            X = X[:, None, None, :]
        feats = self.scaler_.apply(detect(self.net_, X))
        return feats @ self.head_.weight.T + self.head_.bias

    def predict_proba(self, X):
        scores = self.decision_function(X)
        scores = scores - scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[self.decision_function(X).argmax(axis=1)]


class BeamCodebookPlanner(BaseEstimator):
    """Fits one phase configuration per requested steering angle.

    ``fit(angles)`` trains the codebook; ``predict(angles)`` returns the
    per-layer phase settings for angles seen during fit.
    """

    def __init__(
        self,
        stages=3,
        port_count=32,
        feed_ports=(12, 14, 16, 18),
        element_pattern="cosine",
        grid_step_deg=1.0,
        learning_rate=0.05,
        max_iters=2000,
        seed=0,
        pointing_tol_deg=2.0,
    ):
        self.stages = stages
        self.port_count = port_count
        self.feed_ports = feed_ports
        self.element_pattern = element_pattern
        self.grid_step_deg = grid_step_deg
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.seed = seed
        self.pointing_tol_deg = pointing_tol_deg

    def fit(self, X, y=None):
        angles = np.asarray(X, dtype=float).ravel()
        if len(angles) == 0:
            raise ValidationError("X: need at least one target angle")
        geometry = ArrayGeometry(
            element_count=self.port_count, element_pattern=self.element_pattern
        )
        self.grid_ = FarFieldGrid(
            np.arange(-90.0, 90.0 + self.grid_step_deg / 2, self.grid_step_deg),
            geometry,
        )
        self.net_ = build_board(port_count=self.port_count, stages=self.stages)
        self.codebook_ = train_beam_codebook(
            self.net_,
            self.grid_,
            beam_excitation(self.port_count, tuple(self.feed_ports)),
            angles_deg=angles,
            learning_rate=self.learning_rate,
            max_iters=self.max_iters,
            seed=self.seed,
            pointing_tol_deg=self.pointing_tol_deg,
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "codebook_")
        angles = np.asarray(X, dtype=float).ravel()
        return np.stack([self.codebook_.entry(a) for a in angles])

    def score(self, X, y=None):
        """Negative mean absolute pointing error over the fitted angles (deg)."""
        check_is_fitted(self, "codebook_")
        return -float(np.mean(np.abs(self.codebook_.pointing_errors_deg)))


__all__ = [
    "SpectralCompressor",
    "PhasedNetworkClassifier",
    "DetectorHeadClassifier",
    "BeamCodebookPlanner",
]
