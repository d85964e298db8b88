"""Per-node convex objective oracles and the two-piece minorant step.

Three variants are supported, all with full domain:

* zero                 f(x) = 0
* affine               f(x) = a.x + b
* rank-one quadratic   f(x) = (1/2) x^T (v v^T + r I) x + b.x + c,  r > 0

Each exposes value, subgradient, proximal and Fenchel-conjugate oracles.
``bundle_prox`` performs the cutting-plane step used by nodes that only
reveal subgradients: minimize the max of two affine minorants plus a
quadratic, and roll the result into a fresh single affine minorant.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import kernels
from .kernels import FN_AFFINE, FN_QUADRATIC, FN_ZERO


class ObjectiveError(ValueError):
    pass


class DimensionMismatchError(ObjectiveError):
    pass


class NonPositiveScaleError(ObjectiveError):
    pass


class OutsideConjugateDomainError(ObjectiveError):
    pass


def _vec(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64).reshape(-1))


@dataclass(frozen=True, eq=False)
class AffineFunction:
    """f(x) = a.x + b"""

    a: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def __call__(self, x) -> float:
        x = _vec(x)
        if x.shape[0] != self.dim:
            raise DimensionMismatchError(f"expected dim {self.dim}, got {x.shape[0]}")
        return kernels.dot(self.a, x) + self.b


@dataclass(frozen=True, eq=False)
class QuadraticFunction:
    """f(x) = (1/2) x^T (v v^T + r I) x + b.x + c with r > 0."""

    v: np.ndarray
    r: float
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "v", _vec(self.v))
        object.__setattr__(self, "b", _vec(self.b))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "c", float(self.c))
        if self.r <= 0.0:
            raise ObjectiveError(f"ridge must be positive, got {self.r}")
        if self.v.shape[0] != self.b.shape[0]:
            raise DimensionMismatchError(
                f"v has dim {self.v.shape[0]} but b has dim {self.b.shape[0]}")

    @property
    def dim(self) -> int:
        return self.v.shape[0]

    @property
    def gradient_lipschitz(self) -> float:
        """Largest Hessian eigenvalue, ||v||^2 + r."""
        return float(kernels.sqnorm(self.v) + self.r)

    def hessian(self) -> np.ndarray:
        return np.outer(self.v, self.v) + self.r * np.eye(self.dim)


PROXIMABLE = "prox"
SUBDIFFERENTIABLE = "subdiff"
TREATMENTS = (PROXIMABLE, SUBDIFFERENTIABLE)


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """A node objective: one of the variants plus its treatment tag."""

    fn: Union[QuadraticFunction, AffineFunction, None]  # None is the zero function
    treatment: str
    dim: int

    def __post_init__(self):
        if self.treatment not in TREATMENTS:
            raise ObjectiveError(f"unknown treatment {self.treatment!r}")
        if self.fn is not None and self.fn.dim != self.dim:
            raise DimensionMismatchError(
                f"objective has dim {self.fn.dim}, declared dim is {self.dim}")

    @property
    def kind(self) -> int:
        if self.fn is None:
            return FN_ZERO
        if isinstance(self.fn, AffineFunction):
            return FN_AFFINE
        return FN_QUADRATIC

    def lowered(self):
        """(kind, v, r, b, c) parameter row for the kernels."""
        zeros = np.zeros(self.dim)
        if self.fn is None:
            return FN_ZERO, zeros, 0.0, zeros, 0.0
        if isinstance(self.fn, AffineFunction):
            return FN_AFFINE, self.fn.a, 0.0, zeros, self.fn.b
        return FN_QUADRATIC, self.fn.v, self.fn.r, self.fn.b, self.fn.c


def zero_objective(dim, treatment=PROXIMABLE) -> ObjectiveSpec:
    return ObjectiveSpec(None, treatment, dim)


def affine_objective(a, b, treatment=PROXIMABLE) -> ObjectiveSpec:
    f = AffineFunction(a, b)
    return ObjectiveSpec(f, treatment, f.dim)


def quadratic_objective(v, r, b, c=0.0, treatment=PROXIMABLE) -> ObjectiveSpec:
    f = QuadraticFunction(v, r, b, c)
    return ObjectiveSpec(f, treatment, f.dim)


def _check_dim(f: ObjectiveSpec, x: np.ndarray):
    if x.shape[0] != f.dim:
        raise DimensionMismatchError(f"expected dim {f.dim}, got {x.shape[0]}")


def eval_objective(f: ObjectiveSpec, x) -> float:
    x = _vec(x)
    _check_dim(f, x)
    kind, v, r, b, c = f.lowered()
    return float(kernels.fn_value(kind, v, r, b, c, x))


def subgradient(f: ObjectiveSpec, x) -> np.ndarray:
    """A member of the subdifferential at x (= the gradient here; all
    variants are smooth)."""
    x = _vec(x)
    _check_dim(f, x)
    kind, v, r, b, c = f.lowered()
    return np.asarray(kernels.fn_subgradient(kind, v, r, b, c, x))


def prox(f: ObjectiveSpec, s, center):
    """Proximal step: x = argmin f(.) + (s/2)||. - center||^2.

    Returns ``(x, z)`` with ``z = s*(center - x)``, a subgradient of f at x.
    """
    if s <= 0.0:
        raise NonPositiveScaleError(f"scale must be positive, got {s}")
    center = _vec(center)
    _check_dim(f, center)
    kind, v, r, b, c = f.lowered()
    x = np.asarray(kernels.fn_prox(kind, v, r, b, c, float(s), center))
    z = s * (center - x)
    return x, z


def conjugate_value(f: ObjectiveSpec, z) -> float:
    """Fenchel conjugate f*(z).

    For the affine and zero variants the domain is a single point; ``z``
    must match it to within 1e-9*(1+||a||) or ``OutsideConjugateDomainError``
    is raised.
    """
    z = _vec(z)
    _check_dim(f, z)
    kind, v, r, b, c = f.lowered()
    val, status = kernels.fn_conjugate(kind, v, r, b, c, z)
    if status != kernels.OK:
        raise OutsideConjugateDomainError(
            f"z is outside the conjugate domain of the {'zero' if kind == FN_ZERO else 'affine'} variant")
    return float(val)


def tangent_minorant(f: ObjectiveSpec, x) -> AffineFunction:
    """The tangent affine minorant of f at x."""
    x = _vec(x)
    g = subgradient(f, x)
    return AffineFunction(g, eval_objective(f, x) - float(kernels.dot(g, x)))


def bundle_prox(f_prev: AffineFunction, f_tangent: AffineFunction, s, center):
    """One cutting-plane proximal step on the two-piece model.

    Minimizes ``max(f_prev, f_tangent)(.) + (s/2)||. - center||^2`` in
    closed form and returns ``(x, z, f_new)`` where ``z = s*(center - x)``
    and ``f_new(.) = z.( . - x) + max(f_prev, f_tangent)(x)``, so that x
    is also the exact proximal point of ``f_new``.
    """
    if s <= 0.0:
        raise NonPositiveScaleError(f"scale must be positive, got {s}")
    center = _vec(center)
    if f_prev.dim != f_tangent.dim or f_prev.dim != center.shape[0]:
        raise DimensionMismatchError(
            f"dims differ: pieces {f_prev.dim}/{f_tangent.dim}, center {center.shape[0]}")
    x, peak = kernels.bundle_argmin(f_prev.a, f_prev.b, f_tangent.a, f_tangent.b,
                                    float(s), center)
    x = np.asarray(x)
    z = s * (center - x)
    f_new = AffineFunction(z, float(peak) - float(kernels.dot(z, x)))
    return x, z, f_new


def make_seeded_quadratic(m, target_gradient, rng) -> QuadraticFunction:
    """Random rank-one-plus-ridge quadratic whose gradient at the all-ones
    vector equals ``target_gradient``.

    v and r are drawn uniform(0, 1) from ``rng``; the linear term is then
    forced to b = target_gradient - (v v^T + r I) @ ones, and c = 0.
    """
    tg = _vec(target_gradient)
    if tg.shape[0] != m:
        raise DimensionMismatchError(f"target gradient has dim {tg.shape[0]}, expected {m}")
    v = rng.uniform(0.0, 1.0, size=m)
    r = float(rng.uniform(0.0, 1.0))
    ones = np.ones(m)
    b = tg - (v * float(v.sum()) + r * ones)
    return QuadraticFunction(v, r, b, 0.0)
