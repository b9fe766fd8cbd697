"""Estimator front-end: classify initial phase-space points by their fate."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted

from .integrator import Fate, IntegratorConfig, integrate_batch
from .pes import VRIPotential

__all__ = ["FateClassifier"]


class FateClassifier(ClassifierMixin, BaseEstimator):
    """Predict the fate of initial states ``(x, y, p_x, p_y)``.

    Nothing is learned from data: ``fit`` validates the parameters and solves
    the potential.  ``predict`` integrates every row and returns labels from
    ``classes_`` (``"TOP"``, ``"BOTTOM"``, ``"RECROSS"``, ``"TIMEOUT"``).

    Parameters
    ----------
    potential : VRIPotential, default=None
        Surface parameters; nested params are reachable as
        ``potential__vri_x`` and so on.
    method, rtol, atol, step_size, t_max, capture_radius
        Forwarded to :class:`~vridyn.integrator.IntegratorConfig`.
    n_jobs : int, default=1
        Worker threads; ``0`` or ``None`` uses every CPU.

    Examples
    --------
    >>> clf = FateClassifier(potential=VRIPotential(vri_x=0.1)).fit()
    >>> clf.set_params(potential__vri_x=0.5).fit().pes_.spec.vri_x
    0.5
    >>> clf.predict([[0.0, 0.0, 0.2449, 0.0]]).tolist()
    ['RECROSS']
    """

    def __init__(
        self,
        potential=None,
        method="dopri5",
        rtol=1e-11,
        atol=1e-12,
        step_size=1e-3,
        t_max=200.0,
        capture_radius=0.2,
        n_jobs=1,
    ):
        self.potential = potential
        self.method = method
        self.rtol = rtol
        self.atol = atol
        self.step_size = step_size
        self.t_max = t_max
        self.capture_radius = capture_radius
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        pot = VRIPotential() if self.potential is None else self.potential
        self.potential_ = clone(pot).fit()
        self.pes_ = self.potential_.pes_
        self.config_ = IntegratorConfig(
            method=self.method,
            rtol=float(self.rtol),
            atol=float(self.atol),
            step_size=float(self.step_size),
            t_max=float(self.t_max),
            capture_radius=float(self.capture_radius),
        ).validate()
        self.classes_ = np.array([Fate(k).label for k in range(4)], dtype=object)
        return self

    def integrate(self, X):
        """Full :class:`~vridyn.integrator.BatchResult` for rows of ``X``."""
        check_is_fitted(self, "pes_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] not in (4, 5):
            raise ValueError(f"expected (n_samples, 4) states, got shape {X.shape}")
        return integrate_batch(X, self.pes_, self.config_, workers=self.n_jobs)

    def predict(self, X):
        fates = self.integrate(X).fates
        return self.classes_[fates]

    def predict_codes(self, X) -> np.ndarray:
        return self.integrate(X).fates
