"""Long-range kernels, finite geometries and exponent formulas.

A kernel ``J`` assigns an intensity to every nonzero lattice displacement and
an edge ``{x, y}`` is open with probability ``1 - exp(-beta * J(y - x))``.
Finite volume is a torus (minimal-image displacements) or a free box.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import special

from .errors import DomainError, NoReferenceData

NORMS = ("L1", "L2", "Linf")
FORMS = ("power", "table")
BOUNDARIES = ("torus", "free")


@dataclass(frozen=True)
class Kernel:
    """Symmetric edge-intensity function on ``Z^d``.

    ``form="power"`` gives ``J(x) = amplitude * |x|^(-d-alpha)`` in the chosen
    norm. ``form="table"`` is a radial step function: ``weights[i]`` applies on
    ``radii[i] <= |x| < radii[i+1]`` and the last weight on ``|x| == radii[-1]``.
    """

    d: int
    alpha: float
    amplitude: float = 1.0
    norm: str = "L2"
    form: str = "power"
    radii: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.d}")
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not self.amplitude > 0:
            raise DomainError(f"amplitude must be positive, got {self.amplitude}")
        if self.norm not in NORMS:
            raise DomainError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.form not in FORMS:
            raise DomainError(f"form must be one of {FORMS}, got {self.form!r}")
        if self.form == "table":
            r = np.asarray(self.radii, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if r.ndim != 1 or r.size == 0 or r.shape != w.shape:
                raise DomainError("table kernels need equal-length nonempty radii and weights")
            if np.any(np.diff(r) <= 0) or r[0] <= 0:
                raise DomainError("table radii must be positive and strictly increasing")
            if np.any(w <= 0):
                raise DomainError("table weights must be positive")
            if np.any(np.diff(w) > 0):
                raise DomainError("table weights must be nonincreasing in the radius")
            object.__setattr__(self, "radii", tuple(float(x) for x in r))
            object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @classmethod
    def table(cls, d, radii, weights, alpha=1.0, norm="L2"):
        return cls(d=d, alpha=alpha, norm=norm, form="table",
                   radii=tuple(radii), weights=tuple(weights))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data.pop("normalize", None)
        for key in ("radii", "weights"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def scaled(self, factor):
        """Return the kernel multiplied by ``factor``."""
        if self.form == "power":
            return Kernel(self.d, self.alpha, self.amplitude * factor, self.norm)
        return Kernel(self.d, self.alpha, self.amplitude, self.norm, "table",
                      self.radii, tuple(w * factor for w in self.weights))

    def normalized(self):
        """Rescale so that the infinite-lattice sum over ``x != 0`` equals one."""
        return self.scaled(1.0 / lattice_sum(self))


def _norm(x, norm):
    x = np.abs(np.asarray(x, dtype=float))
    if norm == "L1":
        return x.sum(axis=-1)
    if norm == "L2":
        return np.sqrt((x * x).sum(axis=-1))
    return x.max(axis=-1)


def kernel_values(k: Kernel, X) -> np.ndarray:
    """Vectorised ``J`` over an ``(n, d)`` array of displacements."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X.reshape(-1, k.d) if k.d > 1 else X.reshape(-1, 1)
    if X.shape[-1] != k.d:
        raise DomainError(f"displacements must have {k.d} components")
    r = _norm(X, k.norm)
    if np.any(r == 0):
        raise DomainError("J is undefined at the zero displacement")
    if k.form == "power":
        return k.amplitude * r ** (-(k.d + k.alpha))
    radii = np.asarray(k.radii)
    if np.any(r > radii[-1] * (1 + 1e-12)) or np.any(r < radii[0] * (1 - 1e-12)):
        raise DomainError("displacement radius outside the tabulated range")
    idx = np.searchsorted(radii, r * (1 + 1e-12), side="right") - 1
    return np.asarray(k.weights)[np.clip(idx, 0, radii.size - 1)]


def kernel_eval(k: Kernel, x) -> float:
    """``J(x)`` for a single displacement (an int when ``d == 1``)."""
    x = np.atleast_1d(np.asarray(x))
    if x.shape != (k.d,):
        raise DomainError(f"expected a displacement with {k.d} components, got {x.shape}")
    return float(kernel_values(k, x.reshape(1, -1))[0])


def edge_probability(k: Kernel, beta: float, x) -> float:
    """Inclusion probability ``1 - exp(-beta J(x))``."""
    if beta < 0:
        raise DomainError(f"beta must be nonnegative, got {beta}")
    return float(-math.expm1(-beta * kernel_eval(k, x)))


def lattice_sum(k: Kernel, rmax: int | None = None) -> float:
    """``sum_{x != 0} J(x)`` over ``Z^d``.

    Exact (Riemann zeta) for power kernels in one dimension; otherwise a direct
    cube sum extrapolated with the ``R^-alpha`` tail correction.
    """
    if k.form == "table":
        R = int(math.ceil(k.radii[-1]))
        pts = _cube_points(k.d, R)
        r = _norm(pts, k.norm)
        keep = (r > 0) & (r <= k.radii[-1] * (1 + 1e-12)) & (r >= k.radii[0] * (1 - 1e-12))
        return float(kernel_values(k, pts[keep]).sum())
    if k.d == 1:
        return float(2.0 * k.amplitude * special.zeta(1.0 + k.alpha))
    if rmax is None:
        rmax = {2: 400, 3: 60}.get(k.d, 12)
    r1, r2 = rmax // 2, rmax
    s1 = _cube_sum(k, r1)
    s2 = _cube_sum(k, r2)
    c = (s2 - s1) / (r1 ** -k.alpha - r2 ** -k.alpha)
    return float(s2 + c * r2 ** -k.alpha)


def _cube_points(d, R):
    axes = [np.arange(-R, R + 1)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def _cube_sum(k, R):
    pts = _cube_points(k.d, R)
    pts = pts[np.any(pts != 0, axis=1)]
    return float(kernel_values(k, pts).sum())


@dataclass(frozen=True)
class TorusBox:
    """Side-``L`` box of ``Z^d`` with torus or free boundary."""

    d: int
    L: int
    boundary: str = "torus"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.d}")
        if int(self.L) != self.L or self.L < 2 or self.L % 2:
            raise DomainError(f"side must be a positive even integer, got {self.L}")
        if self.boundary not in BOUNDARIES:
            raise DomainError(f"boundary must be one of {BOUNDARIES}")

    @property
    def N(self) -> int:
        return self.L ** self.d

    @property
    def is_torus(self) -> bool:
        return self.boundary == "torus"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def coords(self, ids) -> np.ndarray:
        """Vertex ids to ``(n, d)`` coordinates (first axis most significant)."""
        return np.stack(np.unravel_index(np.asarray(ids), (self.L,) * self.d), axis=-1)

    def ids(self, coords) -> np.ndarray:
        c = np.asarray(coords) % self.L
        return np.ravel_multi_index(tuple(np.moveaxis(c, -1, 0)), (self.L,) * self.d)

    def minimal_image(self, disp) -> np.ndarray:
        """Map displacements to the representative with components in ``(-L/2, L/2]``."""
        u = np.asarray(disp) % self.L
        return np.where(u > self.L // 2, u - self.L, u)

    def displacement(self, x_ids, y_ids) -> np.ndarray:
        diff = self.coords(y_ids) - self.coords(x_ids)
        return self.minimal_image(diff) if self.is_torus else diff


@dataclass
class DisplacementClasses:
    """Translation classes of unordered vertex pairs.

    Class ``c`` holds the ``mult[c]`` edges ``{x, x + reps[c]}`` with
    ``x = lo[c] + unravel(j, ext[c])`` for ``0 <= j < mult[c]``.
    """

    box: TorusBox
    reps: np.ndarray
    mult: np.ndarray
    lo: np.ndarray
    ext: np.ndarray
    self_paired: np.ndarray = field(repr=False)

    def __len__(self):
        return self.mult.size

    @property
    def oriented_degree(self) -> np.ndarray:
        """Number of oriented edges at a vertex falling in each class (torus only)."""
        return 2 * self.mult // self.box.N

    def edge(self, c: int, j: int):
        """Vertex ids ``(u, v)``, ``u < v``, of edge ``j`` of class ``c``."""
        x = self.lo[c] + np.array(np.unravel_index(j, tuple(self.ext[c])))
        y = x + self.reps[c]
        a, b = int(self.box.ids(x)), int(self.box.ids(y))
        return (a, b) if a < b else (b, a)


def displacement_classes(box: TorusBox) -> DisplacementClasses:
    """Group all ``C(N, 2)`` vertex pairs by displacement up to sign."""
    d, L, N = box.d, box.L, box.N
    if box.is_torus:
        u = np.stack(np.unravel_index(np.arange(1, N), (L,) * d), axis=-1)
        neg = (-u) % L
        uid = np.ravel_multi_index(tuple(u.T), (L,) * d)
        nid = np.ravel_multi_index(tuple(neg.T), (L,) * d)
        keep = uid <= nid
        u = u[keep]
        reps = np.where(u > L // 2, u - L, u)
        self_paired = (uid == nid)[keep]
        mult = np.where(self_paired, N // 2, N).astype(np.int64)
        ext = np.full(reps.shape, L, dtype=np.int64)
        if self_paired.any():
            first_half = np.argmax(reps == L // 2, axis=1)
            rows = np.nonzero(self_paired)[0]
            ext[rows, first_half[rows]] = L // 2
        lo = np.zeros_like(ext)
    else:
        v = _cube_points(d, L - 1)
        nz = v != 0
        first = np.argmax(nz, axis=1)
        lead = v[np.arange(len(v)), first]
        reps = v[nz.any(axis=1) & (lead > 0)]
        ext = (L - np.abs(reps)).astype(np.int64)
        lo = np.maximum(0, -reps).astype(np.int64)
        mult = ext.prod(axis=1).astype(np.int64)
        self_paired = np.zeros(len(reps), dtype=bool)
    return DisplacementClasses(box, reps.astype(np.int64), mult, lo, ext, self_paired)


def class_weights(k: Kernel, classes: DisplacementClasses, periodized: bool = False) -> np.ndarray:
    """Kernel value for each class: minimal image, or the periodised sum over
    images ``v + L z`` with ``|z|_inf <= 2`` when ``periodized`` is set."""
    reps = classes.reps
    if not periodized or not classes.box.is_torus:
        return kernel_values(k, reps)
    L = classes.box.L
    total = np.zeros(len(reps))
    for z in _cube_points(k.d, 2):
        total += kernel_values(k, reps + L * z)
    return total


def class_probabilities(k: Kernel, beta: float, classes: DisplacementClasses,
                        periodized: bool = False) -> np.ndarray:
    if beta < 0:
        raise DomainError(f"beta must be nonnegative, got {beta}")
    return -np.expm1(-beta * class_weights(k, classes, periodized))


# ---------------------------------------------------------------------------
# exponents

@dataclass(frozen=True)
class ReferenceExponents:
    d: int
    alpha_star: float
    delta_sr: float
    eta_sr: float


# alpha*(d) = 2 - eta_SR(d); d=3 values are numerical estimates, stored as-is.
_REFERENCE = {
    2: ReferenceExponents(2, 43 / 24, 91 / 5, 5 / 24),
    3: ReferenceExponents(3, 2.0457, 5.2886, 2 - 2.0457),
}


def reference_table(d: int) -> ReferenceExponents:
    """Short-range reference exponents; only ``d`` in ``{2, 3}`` is tabulated."""
    try:
        return _REFERENCE[d]
    except KeyError:
        raise NoReferenceData(f"no reference data for d={d}") from None


@dataclass(frozen=True)
class ExponentBounds:
    d: int
    alpha: float | None
    theta: float | None
    delta_upper: float | None
    two_minus_eta_upper: float | None
    two_point_decay: float | None
    theta_general: float | None = None
    delta_predicted: float | None = None
    two_minus_eta_predicted: float | None = None
    crossover_known: bool = False
    flags: tuple = ()

    @property
    def inverse_delta_predicted(self):
        return None if self.delta_predicted is None else 1.0 / self.delta_predicted


def theta_general(a: float) -> float:
    """Tail exponent ``(2a - 1)/(a + 1)`` for edge-count growth exponent ``a``."""
    if not 0.5 < a < 1:
        warnings.warn(f"a={a} outside (1/2, 1); formula is only proven there", stacklevel=2)
    return (2 * a - 1) / (a + 1)


def predicted_exponents(d: int, alpha: float):
    """Conjectured ``(delta, 2 - eta, crossover_known)`` for long-range percolation."""
    try:
        ref = reference_table(d)
        a_star, delta_sr = ref.alpha_star, ref.delta_sr
    except NoReferenceData:
        a_star = delta_sr = None
    if a_star is not None and alpha > a_star:
        two_minus_eta = a_star
    else:
        two_minus_eta = alpha
    if alpha <= d / 3:
        delta = 2.0
    elif a_star is None or alpha <= a_star:
        delta = (d + alpha) / (d - alpha) if alpha < d else math.inf
    else:
        delta = delta_sr
    return delta, two_minus_eta, a_star is not None


def exponent_bounds(d: int, alpha: float | None = None, *, a: float | None = None) -> ExponentBounds:
    """Proven exponent bounds and conjectured values for ``(d, alpha)``."""
    if alpha is None:
        if a is None:
            raise DomainError("give alpha or a")
        return ExponentBounds(d, None, None, None, None, None, theta_general=theta_general(a))
    flags = []
    if not 0 < alpha < d:
        warnings.warn(f"alpha={alpha} outside (0, d={d}); bounds are not proven there", stacklevel=2)
        flags.append("alpha_outside_(0,d)")
    theta = (d - alpha) / (2 * d + alpha)
    if theta <= 0:
        flags.append("theta_nonpositive")
    delta_upper = (2 * d + alpha) / (d - alpha) if alpha < d else math.inf
    delta_pred, tme_pred, known = predicted_exponents(d, alpha)
    return ExponentBounds(
        d=d, alpha=alpha, theta=theta, delta_upper=delta_upper,
        two_minus_eta_upper=d / 3 + 2 * alpha / 3,
        two_point_decay=2 * (d - alpha) / (3 * d),
        theta_general=None if a is None else theta_general(a),
        delta_predicted=delta_pred, two_minus_eta_predicted=tme_pred,
        crossover_known=known, flags=tuple(flags),
    )
