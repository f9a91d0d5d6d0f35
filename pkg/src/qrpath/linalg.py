"""Inverse of the elbow Gram matrix with O(|E|^2) up/down-dating."""

from __future__ import annotations

import numpy as np

from .exceptions import SingularElbowError

MAX_CONDITION = 1e12
REFRESH_EVERY = 64
DRIFT_TOL = 1e-8
_SCHUR_FLOOR = 1e-12


class ElbowGramInverse:
    """``inv = (Xt_E Xt_E^T)^{-1}`` for the ordered elbow ``elbow``.

    Instances are treated as values: :meth:`add` and :meth:`remove` return new
    objects. ``rows`` holds the augmented design rows in elbow order, which is
    what a from-scratch refresh needs.
    """

    __slots__ = ("inv", "elbow", "rows", "n_updates", "idx")

    def __init__(self, inv, elbow, rows, n_updates=0):
        self.inv = inv
        self.elbow = elbow if type(elbow) is tuple else tuple(int(i) for i in elbow)
        self.rows = rows
        self.n_updates = n_updates
        self.idx = np.array(self.elbow, dtype=np.intp)  # elbow as an index array

    def __len__(self):
        return len(self.elbow)

    @classmethod
    def empty(cls, width: int) -> "ElbowGramInverse":
        return cls(np.zeros((0, 0)), (), np.zeros((0, width)))

    @classmethod
    def init(cls, rows, elbow=None) -> "ElbowGramInverse":
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if elbow is None:
            elbow = range(rows.shape[0])
        if rows.shape[0] == 0:
            return cls.empty(rows.shape[1])
        gram = rows @ rows.T
        if np.linalg.cond(gram) > MAX_CONDITION:
            raise SingularElbowError(
                f"elbow Gram matrix is singular (condition > {MAX_CONDITION:g}); "
                "the data are not in general position", tuple(elbow))
        inv = np.linalg.inv(gram)
        return cls(0.5 * (inv + inv.T), elbow, rows)

    def gram(self) -> np.ndarray:
        return self.rows @ self.rows.T

    def residual(self) -> float:
        """Relative identity defect ``||inv @ gram - I||_F / sqrt(|E|)``."""
        k = len(self)
        if k == 0:
            return 0.0
        return float(np.linalg.norm(self.inv @ self.gram() - np.eye(k)) / np.sqrt(k))

    def refreshed(self) -> "ElbowGramInverse":
        return ElbowGramInverse.init(self.rows, self.elbow)

    def _maybe_refresh(self) -> "ElbowGramInverse":
        if self.n_updates >= REFRESH_EVERY:
            return self.refreshed()
        return self

    def add(self, new_row, index: int = -1) -> "ElbowGramInverse":
        """Append one row (case ``index``) via the bordered-inverse identity."""
        x = np.asarray(new_row, dtype=float)
        d = float(x @ x)
        if len(self) == 0:
            if d <= 0.0:
                raise SingularElbowError("zero row cannot enter the elbow", (index,))
            return ElbowGramInverse(np.array([[1.0 / d]]), (int(index),), x[None, :], 1)
        u = self.rows @ x
        w = self.inv @ u
        schur = d - u @ w
        if schur <= _SCHUR_FLOOR * d:
            raise SingularElbowError(
                "augmented elbow Gram matrix is singular (Schur complement "
                f"{schur:.3g})", self.elbow + (index,))
        k = len(self)
        inv = np.empty((k + 1, k + 1))
        inv[:k, :k] = self.inv + np.outer(w, w) / schur
        inv[:k, k] = inv[k, :k] = -w / schur
        inv[k, k] = 1.0 / schur
        out = ElbowGramInverse(inv, self.elbow + (int(index),), np.vstack([self.rows, x]),
                               self.n_updates + 1)
        return out._maybe_refresh()

    def remove(self, position: int) -> "ElbowGramInverse":
        """Drop the row at ``position`` (not case index) via the downdate identity."""
        k = len(self)
        if k < 2:
            raise SingularElbowError(
                "cannot downdate a 1x1 elbow Gram; the caller must handle the empty elbow",
                self.elbow)
        M = self.inv
        col = np.delete(M[:, position], position)
        inv = np.delete(np.delete(M, position, 0), position, 1)
        inv -= np.outer(col, col) / M[position, position]
        elbow = self.elbow[:position] + self.elbow[position + 1:]
        out = ElbowGramInverse(inv, elbow, np.delete(self.rows, position, 0), self.n_updates + 1)
        return out._maybe_refresh()

    def position(self, index: int) -> int:
        return self.elbow.index(index)


def gram_inverse_init(Xtilde_E, elbow=None) -> ElbowGramInverse:
    return ElbowGramInverse.init(Xtilde_E, elbow)


def gram_inverse_add(g: ElbowGramInverse, new_row, index: int = -1) -> ElbowGramInverse:
    return g.add(new_row, index)


def gram_inverse_remove(g: ElbowGramInverse, position: int) -> ElbowGramInverse:
    return g.remove(position)
