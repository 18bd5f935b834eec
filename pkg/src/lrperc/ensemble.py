"""Replica ensembles at fixed ``(box, kernel, beta, seed)``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clusters import ClusterForest, build_clusters
from .errors import DomainError
from .kernel import Kernel, TorusBox
from .sampler import sample_configuration


@dataclass
class Ensemble:
    """``n_replicas`` independent configurations; replica ``r`` uses stream ``(seed, r)``.

    Forests are cached when ``store`` is set, otherwise resampled on demand
    (deterministically, so both modes see identical data).
    """

    box: TorusBox
    kernel: Kernel
    beta: float
    seed: int
    n_replicas: int
    method: str = "coupled"
    periodized: bool = False
    store: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n_replicas < 1:
            raise DomainError("an ensemble needs at least one replica")

    def configuration(self, r: int, **kw):
        return sample_configuration(self.box, self.kernel, self.beta, self.seed, r,
                                    method=self.method, periodized=self.periodized, **kw)

    def forest(self, r: int) -> ClusterForest:
        if r in self._cache:
            return self._cache[r]
        f = build_clusters(self.configuration(r))
        if self.store:
            self._cache[r] = f
        return f

    def forests(self):
        for r in range(self.n_replicas):
            yield self.forest(r)

    def replica_matrix(self, fn) -> np.ndarray:
        """Stack ``fn(forest)`` over replicas into an array of shape ``(R, ...)``."""
        return np.stack([np.asarray(fn(f), dtype=float) for f in self.forests()])

    def params(self) -> dict:
        return {"d": self.box.d, "L": self.box.L, "alpha": self.kernel.alpha,
                "beta": self.beta, "boundary": self.box.boundary}
