"""Maximally separated speaker prototypes.

The prototype matrix packs ``n`` unit columns into ``R^(n-1)`` so that every
pair of columns meets at cosine ``-1/(n-1)``, the widest angle ``n`` directions
can share. Column ``j`` is the fixed anchor for speaker ``j``: it is never
trained, and the logit a fused embedding receives for speaker ``j`` is its dot
product with column ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ShapeError


@dataclass(frozen=True)
class SeparationMatrix:
    """Fixed ``(n_classes-1) x n_classes`` matrix whose columns are class anchors.

    Construction only checks the shape; geometric invariants are guaranteed by
    :func:`build_separation_matrix` and can be audited with
    :func:`verify_simplex`. The entries are read-only.
    """

    n_classes: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise InvalidArgumentError(
                f"need at least 2 classes, got {self.n_classes}"
            )
        arr = np.array(self.entries, dtype=np.float64, copy=True)
        if arr.shape != (self.n_classes - 1, self.n_classes):
            raise ShapeError(
                f"expected shape {(self.n_classes - 1, self.n_classes)}, "
                f"got {arr.shape}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def embed_dim(self) -> int:
        return self.n_classes - 1

    def column(self, j: int) -> np.ndarray:
        return self.entries[:, j]


@dataclass(frozen=True)
class SimplexViolation:
    """One violated invariant: which check failed, on which columns, by how much."""

    kind: str  # "column_norm" | "pairwise_dot" | "column_sum"
    columns: tuple[int, ...]
    deviation: float


def build_separation_matrix(n_classes: int) -> SeparationMatrix:
    """Build the prototype matrix for ``n_classes`` speakers.

    Grows iteratively from the 2-class row ``(1, -1)``: each step prepends a new
    axis carrying a fresh unit column and shrinks the previous matrix so all
    columns keep unit norm and pairwise dot ``-1/(k)`` after step ``k``.
    Bottom-up iteration gives the same matrix as the textbook recursion without
    deep call stacks. Deterministic: repeated calls are bit-identical.
    """
    if not isinstance(n_classes, (int, np.integer)):
        raise InvalidArgumentError(f"n_classes must be an integer, got {n_classes!r}")
    if n_classes < 2:
        raise InvalidArgumentError(f"need at least 2 classes, got {n_classes}")

    mat = np.array([[1.0, -1.0]], dtype=np.float64)
    for k in range(2, n_classes):
        grown = np.zeros((k, k + 1), dtype=np.float64)
        grown[0, 0] = 1.0
        grown[0, 1:] = -1.0 / k
        grown[1:, 1:] = np.sqrt(1.0 - 1.0 / k**2) * mat
        mat = grown
    return SeparationMatrix(n_classes=n_classes, entries=mat)


def class_logits(matrix: SeparationMatrix, fused: np.ndarray) -> np.ndarray:
    """Score a fused embedding against every class anchor.

    ``logits[j]`` is the dot product of ``fused`` with column ``j``; the result
    is linear in ``fused`` and has length ``n_classes``.
    """
    fused = np.asarray(fused, dtype=np.float64)
    if fused.shape != (matrix.n_classes - 1,):
        raise ShapeError(
            f"fused embedding must have shape {(matrix.n_classes - 1,)}, "
            f"got {fused.shape}"
        )
    return matrix.entries.T @ fused


def verify_simplex(
    matrix: SeparationMatrix, tolerance: float
) -> list[SimplexViolation]:
    """Audit the three geometric invariants, reporting every violation.

    Checks unit column norms, pairwise column dot products of
    ``-1/(n_classes-1)``, and a zero column sum. Returns an empty list when the
    matrix is valid at the given tolerance.
    """
    if not tolerance > 0:
        raise InvalidArgumentError(f"tolerance must be > 0, got {tolerance}")

    n = matrix.n_classes
    gram = matrix.entries.T @ matrix.entries
    violations: list[SimplexViolation] = []

    norm_dev = np.abs(np.diag(gram) - 1.0)
    for j in np.nonzero(norm_dev > tolerance)[0]:
        violations.append(
            SimplexViolation("column_norm", (int(j),), float(norm_dev[j]))
        )

    target = -1.0 / (n - 1)
    dot_dev = np.abs(gram - target)
    bad_i, bad_j = np.nonzero(np.triu(dot_dev > tolerance, k=1))
    for i, j in zip(bad_i, bad_j):
        violations.append(
            SimplexViolation("pairwise_dot", (int(i), int(j)), float(dot_dev[i, j]))
        )

    col_sum = matrix.entries.sum(axis=1)
    worst = float(np.max(np.abs(col_sum))) if col_sum.size else 0.0
    if worst > tolerance:
        violations.append(SimplexViolation("column_sum", (), worst))

    return violations


def export_csv(matrix: SeparationMatrix, path) -> None:
    """Write the matrix row-major to a CSV file at full float64 precision."""
    np.savetxt(path, matrix.entries, delimiter=",", fmt="%.17g")
