"""scikit-learn style wrappers around the functional modules."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import gf, identify, lowrank
from .cirf import APPROX_WINDOW, EXACT_WINDOW, ShiftWindow, random_filter, transform_template
from .gf import GFParams
from .synth import zero_pad


def check_binary_images(X, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Validate a stack of binary images and return it as ``(n, h, w)`` int64."""
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"expected an (n, h, w) image stack, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty image stack")
    if shape is not None and X.shape[1:] != tuple(shape):
        raise ValueError(f"expected {shape} images, got {X.shape[1:]}")
    if not np.isin(X, (0, 1)).all():
        raise ValueError("images must be binary")
    return X.astype(np.int64)


def _params(params) -> GFParams:
    return gf.REFERENCE if params is None else params


class CIRFTransformer(TransformerMixin, BaseEstimator):
    """Protects images with one random filter drawn at ``fit`` time."""

    def __init__(self, params: GFParams | None = None, random_state: int = 0):
        self.params = params
        self.random_state = random_state

    def fit(self, X=None, y=None):
        params = _params(self.params)
        if X is not None:
            check_binary_images(X, params.shape)
        self.filter_ = random_filter(params, np.random.default_rng(self.random_state))
        return self

    def transform(self, X):
        check_is_fitted(self, "filter_")
        params = _params(self.params)
        return transform_template(check_binary_images(X, params.shape), self.filter_, params)


class BinaryFactorizer(TransformerMixin, BaseEstimator):
    """Rank-k binary factorization; ``transform`` returns the reconstructions."""

    def __init__(self, k: int = 2, restarts: int = 8, random_state: int = 0):
        self.k = k
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_binary_images(X)
        self.image_shape_ = X.shape[1:]
        return self

    def factorize(self, X) -> list[lowrank.FactorIndex]:
        check_is_fitted(self, "image_shape_")
        X = check_binary_images(X, self.image_shape_)
        return [lowrank.factorize(x, self.k, seed=self.random_state, restarts=self.restarts) for x in X]

    def transform(self, X):
        return np.stack([lowrank.reconstruct(f) for f in self.factorize(X)])


class CancelableIdentifier(BaseEstimator):
    """Two-finger identification over a protected, indexed database.

    ``fit`` takes ``X`` of shape ``(n, 2, h, w)`` (left and right finger) and
    enrollee ids ``y``. ``predict`` returns the accepted id per query, or
    ``None`` for a rejection.
    """

    def __init__(
        self,
        k: int = 2,
        scenario: str = "individual",
        threshold: float = 100.0,
        pad: tuple[int, int] = tuple(EXACT_WINDOW),
        approx_window: tuple[int, int] = tuple(APPROX_WINDOW),
        exact_window: tuple[int, int] = tuple(EXACT_WINDOW),
        params: GFParams | None = None,
        threads: int = 1,
        random_state: int = 0,
    ):
        self.k = k
        self.scenario = scenario
        self.threshold = threshold
        self.pad = pad
        self.approx_window = approx_window
        self.exact_window = exact_window
        self.params = params
        self.threads = threads
        self.random_state = random_state

    def _check_pairs(self, X) -> np.ndarray:
        params = _params(self.params)
        X = np.asarray(X)
        if X.ndim != 4 or X.shape[1] != identify.FINGERS:
            raise ValueError(f"expected (n, {identify.FINGERS}, h, w) finger pairs, got {X.shape}")
        flat = check_binary_images(X.reshape(-1, *X.shape[2:]), params.shape)
        return flat.reshape(X.shape)

    def fit(self, X, y=None):
        params = _params(self.params)
        X = self._check_pairs(X)
        ids = [str(n) for n in range(len(X))] if y is None else [str(v) for v in y]
        if len(ids) != len(X):
            raise ValueError("need one id per enrollee")
        rng = np.random.default_rng(self.random_state)
        self.db_ = identify.Database(params, self.k, self.scenario)
        self.keys_ = identify.KeyStore(params, self.k, self.scenario)
        win = ShiftWindow(*self.pad)
        for ident, pair in zip(ids, X):
            identify.enroll(self.db_, self.keys_, ident, zero_pad(pair[0], win), zero_pad(pair[1], win), rng)
        return self

    def decision_function(self, X) -> np.ndarray:
        """Fused approximate similarity of every query against every record."""
        check_is_fitted(self, "db_")
        X = self._check_pairs(X)
        return np.stack(
            [
                identify.approximate_scores(
                    self.db_, self.keys_,
                    identify.prepare_query(q[0], q[1], self.db_.params, self.k),
                    ShiftWindow(*self.approx_window), threads=self.threads,
                )
                for q in X
            ]
        )

    def identify(self, X) -> list[identify.IdentResult]:
        check_is_fitted(self, "db_")
        X = self._check_pairs(X)
        return [
            identify.identify(
                self.db_, self.keys_, q[0], q[1], self.threshold,
                ShiftWindow(*self.approx_window), ShiftWindow(*self.exact_window), threads=self.threads,
            )
            for q in X
        ]

    def predict(self, X) -> np.ndarray:
        return np.array([r.enrollee_id for r in self.identify(X)], dtype=object)
