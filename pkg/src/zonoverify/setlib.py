"""Set representations and the set arithmetic the verifier is built from.

A zonotope Z(c, G) is the image of the unit hypercube [-1, 1]^q under
beta -> c + G beta. Every propagated zonotope keeps the factors of the input
set as its first q0 generator columns, so constraints derived in output space
can be read back as constraints on the input factors.
"""
from dataclasses import dataclass

import numpy as np

from .constants import FEASIBILITY_TOL, RELATIVE_COEF_TOL
from .errors import ContractError

# Provenance layer codes: input factors, and columns added without a known source
INPUT_LAYER = -1
UNTRACKED_LAYER = -2


def as_vector(values: object, name: str) -> np.ndarray:
    """Convert to a 1-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def as_matrix(values: object, name: str, rows: int | None = None) -> np.ndarray:
    """Convert to a 2-D float64 array; empty input becomes a (rows x 0) matrix."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0 and rows is not None and not (arr.ndim == 2 and arr.shape[0] == rows):
        return np.zeros((rows, 0))
    if arr.ndim == 1 and rows == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


def positive_part(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0)


def negative_part(a: np.ndarray) -> np.ndarray:
    """Entries clipped to be <= 0 (keeps their sign)."""
    return np.minimum(a, 0.0)


def input_provenance(num_factors: int) -> np.ndarray:
    """Provenance rows (INPUT_LAYER, i) for the first `num_factors` columns."""
    return np.column_stack(
        (np.full(num_factors, INPUT_LAYER, dtype=np.int64), np.arange(num_factors, dtype=np.int64))
    )


@dataclass(frozen=True, eq=False)
class Interval:
    """Axis-aligned box [lower, upper]; any lower > upper means Empty."""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = as_vector(self.lower, "lower")
        upper = as_vector(self.upper, "upper")
        if lower.shape != upper.shape:
            raise ContractError(f"interval bounds differ in length: {lower.size} vs {upper.size}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def empty(cls, dim: int) -> "Interval":
        return cls(np.ones(dim), -np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def is_empty(self) -> bool:
        return bool(np.any(self.lower > self.upper + FEASIBILITY_TOL))

    @property
    def center(self) -> np.ndarray:
        return (self.upper + self.lower) / 2

    @property
    def radius(self) -> np.ndarray:
        return (self.upper - self.lower) / 2

    def contains(self, point: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        point = np.asarray(point, dtype=np.float64)
        return bool(np.all(point >= self.lower - tol) and np.all(point <= self.upper + tol))


@dataclass(frozen=True, eq=False)
class FactorBox:
    """Bounds on the input factors, a sub-box of [-1, 1]^q0.

    This is what the branch-and-bound queue stores instead of full constrained
    zonotopes. `FactorBox.empty(q)` is the canonical Empty value.
    """
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = as_vector(self.lower, "lower")
        upper = as_vector(self.upper, "upper")
        if lower.shape != upper.shape:
            raise ContractError(f"factor box bounds differ in length: {lower.size} vs {upper.size}")
        if np.any(lower < -1 - FEASIBILITY_TOL) or np.any(upper > 1 + FEASIBILITY_TOL):
            raise ContractError("factor box must lie inside [-1, 1]")
        object.__setattr__(self, "lower", np.maximum(lower, -1.0))
        object.__setattr__(self, "upper", np.minimum(upper, 1.0))

    @classmethod
    def full(cls, dim: int) -> "FactorBox":
        return cls(-np.ones(dim), np.ones(dim))

    @classmethod
    def empty(cls, dim: int) -> "FactorBox":
        return cls(np.ones(dim), -np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def is_empty(self) -> bool:
        return bool(np.any(self.lower > self.upper + FEASIBILITY_TOL))

    @property
    def mid(self) -> np.ndarray:
        return (self.upper + self.lower) / 2

    @property
    def rad(self) -> np.ndarray:
        return np.maximum(self.upper - self.lower, 0.0) / 2

    def radius_sum(self) -> float:
        """Sum of half-widths, the box size used for the shrink test."""
        return float(self.rad.sum())

    def compose(self, inner: "FactorBox") -> "FactorBox":
        """Map a box given in this box's rescaled [-1, 1] coordinates back to outer coordinates."""
        if inner.dim != self.dim:
            raise ContractError(f"cannot compose boxes of dimension {self.dim} and {inner.dim}")
        if inner.is_empty or self.is_empty:
            return FactorBox.empty(self.dim)
        lower = np.clip(self.mid + self.rad * inner.lower, self.lower, self.upper)
        upper = np.clip(self.mid + self.rad * inner.upper, self.lower, self.upper)
        return FactorBox(lower, np.maximum(lower, upper))

    def bisect(self, dim: int) -> tuple["FactorBox", "FactorBox"]:
        """Split factor `dim` at the midpoint of its interval."""
        middle = (self.lower[dim] + self.upper[dim]) / 2
        left_upper = self.upper.copy()
        left_upper[dim] = middle
        right_lower = self.lower.copy()
        right_lower[dim] = middle
        return FactorBox(self.lower, left_upper), FactorBox(right_lower, self.upper)

    def contains(self, beta: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        if self.is_empty:
            return False
        beta = np.asarray(beta, dtype=np.float64)
        return bool(np.all(beta >= self.lower - tol) and np.all(beta <= self.upper + tol))

    def same_as(self, other: "FactorBox", tol: float = FEASIBILITY_TOL) -> bool:
        if self.is_empty or other.is_empty:
            return self.is_empty and other.is_empty
        return bool(
            np.allclose(self.lower, other.lower, rtol=0, atol=tol)
            and np.allclose(self.upper, other.upper, rtol=0, atol=tol)
        )


@dataclass(frozen=True, eq=False)
class HPolytope:
    """Halfspace set {y | A y <= b}."""
    a_mat: np.ndarray
    b_vec: np.ndarray

    def __post_init__(self) -> None:
        b_vec = as_vector(self.b_vec, "b_vec")
        a_mat = as_matrix(self.a_mat, "a_mat", rows=b_vec.size)
        if a_mat.shape[0] != b_vec.size:
            raise ContractError(f"polytope has {a_mat.shape[0]} rows but {b_vec.size} offsets")
        object.__setattr__(self, "a_mat", a_mat)
        object.__setattr__(self, "b_vec", b_vec)

    @property
    def dim(self) -> int:
        return self.a_mat.shape[1]

    @property
    def num_constraints(self) -> int:
        return self.b_vec.size

    def contains(self, point: np.ndarray, tol: float = 0.0) -> bool:
        point = as_vector(point, "point")
        if point.size != self.dim:
            raise ContractError(f"point of dimension {point.size} tested against {self.dim}-dim polytope")
        return bool(np.all(self.a_mat @ point <= self.b_vec + tol))


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Linear constraints C beta <= d on zonotope factors."""
    c_mat: np.ndarray
    d_vec: np.ndarray

    def __post_init__(self) -> None:
        d_vec = as_vector(self.d_vec, "d_vec")
        c_mat = as_matrix(self.c_mat, "c_mat", rows=d_vec.size)
        if c_mat.shape[0] != d_vec.size:
            raise ContractError(f"constraint set has {c_mat.shape[0]} rows but {d_vec.size} offsets")
        object.__setattr__(self, "c_mat", c_mat)
        object.__setattr__(self, "d_vec", d_vec)

    @classmethod
    def none(cls, dim: int) -> "ConstraintSet":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def dim(self) -> int:
        return self.c_mat.shape[1]

    @property
    def num_constraints(self) -> int:
        return self.d_vec.size

    def satisfied_by(self, beta: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        return bool(np.all(self.c_mat @ np.asarray(beta, dtype=np.float64) <= self.d_vec + tol))


@dataclass(frozen=True, eq=False)
class Zonotope:
    """Z(c, G) with per-column provenance rows (layer, index)."""
    center: np.ndarray
    generators: np.ndarray
    provenance: np.ndarray | None = None

    def __post_init__(self) -> None:
        center = as_vector(self.center, "center")
        generators = as_matrix(self.generators, "generators", rows=center.size)
        if generators.shape[0] != center.size:
            raise ContractError(
                f"center has length {center.size} but generators have {generators.shape[0]} rows"
            )
        if not (np.all(np.isfinite(center)) and np.all(np.isfinite(generators))):
            raise ContractError("zonotope entries must be finite")
        if self.provenance is None:
            provenance = input_provenance(generators.shape[1])
        else:
            provenance = np.asarray(self.provenance, dtype=np.int64).reshape(-1, 2)
            if provenance.shape[0] != generators.shape[1]:
                raise ContractError(
                    f"{provenance.shape[0]} provenance rows for {generators.shape[1]} generators"
                )
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "generators", generators)
        object.__setattr__(self, "provenance", provenance)

    @classmethod
    def from_interval(cls, interval: Interval) -> "Zonotope":
        """One input factor per dimension, including zero-width ones."""
        if interval.is_empty:
            raise ContractError("cannot build a zonotope from an empty interval")
        return cls(interval.center, np.diag(np.maximum(interval.radius, 0.0)))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def num_generators(self) -> int:
        return self.generators.shape[1]

    def column_of(self, layer: int, index: int) -> int | None:
        """Generator column created for (layer, index), if any."""
        hits = np.flatnonzero((self.provenance[:, 0] == layer) & (self.provenance[:, 1] == index))
        return int(hits[0]) if hits.size else None

    def restrict_factors(self, box: FactorBox) -> "Zonotope":
        """Re-parameterize the input set to the factor box with fresh factors in [-1, 1].

        c' = c + G mid(box), G' = G diag(rad(box)); requires one factor per box dimension.
        """
        if box.dim != self.num_generators:
            raise ContractError(f"factor box of dimension {box.dim} for {self.num_generators} factors")
        if box.is_empty:
            raise ContractError("cannot restrict a zonotope to an empty factor box")
        return Zonotope(self.center + self.generators @ box.mid, self.generators * box.rad)

    def factor_point(self, beta: np.ndarray) -> np.ndarray:
        return self.center + self.generators @ np.asarray(beta, dtype=np.float64)


def minkowski_sum_interval(z: Zonotope, iv: Interval, layer: int = UNTRACKED_LAYER) -> Zonotope:
    """Z(c, G) + [l, u] = Z(c + (u + l)/2, [G diag((u - l)/2)]), zero columns dropped.

    Appended columns get provenance (layer, i) for dimension i.
    """
    if iv.dim != z.dim:
        raise ContractError(f"interval of dimension {iv.dim} added to {z.dim}-dim zonotope")
    radius = iv.radius
    if np.any(radius < 0):
        raise ContractError("interval lower bound exceeds upper bound")
    keep = np.flatnonzero(radius != 0)
    columns = np.zeros((z.dim, keep.size))
    columns[keep, np.arange(keep.size)] = radius[keep]
    sources = np.column_stack((np.full(keep.size, layer, dtype=np.int64), keep.astype(np.int64)))
    return Zonotope(
        z.center + iv.center,
        np.hstack((z.generators, columns)),
        np.vstack((z.provenance, sources)),
    )


def affine_map(w: np.ndarray, z: Zonotope, b: np.ndarray) -> Zonotope:
    """W Z + b = Z(W c + b, W G)."""
    w = as_matrix(w, "weights")
    b = as_vector(b, "bias")
    if w.shape[1] != z.dim:
        raise ContractError(f"weights with {w.shape[1]} columns applied to {z.dim}-dim zonotope")
    if b.size != w.shape[0]:
        raise ContractError(f"bias of length {b.size} for {w.shape[0]} outputs")
    return Zonotope(w @ z.center + b, w @ z.generators, z.provenance)


def interval_hull(z: Zonotope) -> Interval:
    radius = np.abs(z.generators).sum(axis=1)
    return Interval(z.center - radius, z.center + radius)


def support_value(z: Zonotope, a: np.ndarray) -> float:
    """max over Z of a.y = a.c + |a G| 1."""
    a = as_vector(a, "direction")
    if a.size != z.dim:
        raise ContractError(f"direction of length {a.size} for {z.dim}-dim zonotope")
    return float(a @ z.center + np.abs(a @ z.generators).sum())


def frobenius_radius(z: Zonotope) -> float:
    """F-radius: Frobenius norm of the generator matrix."""
    return float(np.linalg.norm(z.generators))


def tighten_factor_bounds(cons: ConstraintSet, box0: FactorBox, max_iters: int) -> FactorBox:
    """Enclose {beta in box0 | C beta <= d} by a box, iterating the one-sweep rule.

    Per sweep, each row i and dimension j with C_ij != 0 bounds beta_j by
    (d_i - min over the box of the rest of row i) / C_ij, using the bounds at
    sweep start. Returns FactorBox.empty when the set is provably empty.
    """
    if cons.dim != box0.dim:
        raise ContractError(f"constraints over {cons.dim} factors for a box of dimension {box0.dim}")
    if max_iters < 1:
        raise ContractError("max_iters must be at least 1")
    if box0.is_empty or cons.num_constraints == 0:
        return box0

    C, d = cons.c_mat, cons.d_vec
    scale = np.abs(C).sum(axis=1) + np.abs(d)
    usable = np.abs(C) > RELATIVE_COEF_TOL * scale[:, None]
    divisor = np.where(usable, C, 1.0)
    pos, neg = positive_part(C), negative_part(C)
    lower, upper = box0.lower, box0.upper

    for _ in range(max_iters):
        contrib = pos * lower + neg * upper
        row_min = contrib.sum(axis=1)
        if np.any(row_min > d + FEASIBILITY_TOL):
            return FactorBox.empty(box0.dim)

        candidate = (d[:, None] - (row_min[:, None] - contrib)) / divisor
        new_lower = np.maximum(
            lower, np.max(np.where(usable & (C < 0), candidate, -np.inf), axis=0)
        )
        new_upper = np.minimum(
            upper, np.min(np.where(usable & (C > 0), candidate, np.inf), axis=0)
        )
        if np.any(new_lower > new_upper + FEASIBILITY_TOL):
            return FactorBox.empty(box0.dim)
        # rounding-level crossings collapse to a point
        crossed = new_lower > new_upper
        if np.any(crossed):
            middle = (new_lower + new_upper) / 2
            new_lower = np.where(crossed, middle, new_lower)
            new_upper = np.where(crossed, middle, new_upper)

        if np.array_equal(new_lower, lower) and np.array_equal(new_upper, upper):
            break
        lower, upper = new_lower, new_upper

    return FactorBox(lower, upper)


def conzono_interval(z: Zonotope, box: FactorBox) -> Interval:
    """Interval enclosing c + G beta with beta in `box` on the first factors, [-1, 1] elsewhere."""
    if box.dim > z.num_generators:
        raise ContractError(f"factor box of dimension {box.dim} for {z.num_generators} generators")
    if box.is_empty:
        return Interval.empty(z.dim)
    prefix = z.generators[:, : box.dim]
    suffix_radius = np.abs(z.generators[:, box.dim :]).sum(axis=1)
    pos, neg = positive_part(prefix), negative_part(prefix)
    lower = z.center + pos @ box.lower + neg @ box.upper - suffix_radius
    upper = z.center + pos @ box.upper + neg @ box.lower + suffix_radius
    return Interval(lower, upper)
