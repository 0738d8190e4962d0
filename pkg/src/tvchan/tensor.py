"""Dense complex tensors and the CP algebra used throughout the package.

Storage order is fixed globally: the *first* index runs fastest when a tensor
is linearised (Fortran order). Mode indices are 0-based, like numpy axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class DenseTensor:
    """Immutable wrapper around an N-way complex array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=complex)
        if arr.ndim < 1 or 0 in arr.shape:
            raise ValueError(f"tensor needs positive dimensions, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def order(self) -> int:
        return self.data.ndim

    def vec(self) -> np.ndarray:
        """Linearise with the first index fastest."""
        return self.data.ravel(order="F")

    @classmethod
    def from_vec(cls, v: np.ndarray, shape: Sequence[int]) -> "DenseTensor":
        v = np.asarray(v)
        if v.size != int(np.prod(shape)):
            raise ValueError(f"vector of length {v.size} cannot fill shape {tuple(shape)}")
        return cls(v.reshape(tuple(shape), order="F"))


@dataclass(frozen=True)
class CpModel:
    """Sum of R rank-one terms, one factor matrix per mode."""

    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        fs = tuple(np.atleast_2d(np.asarray(f, dtype=complex)) for f in self.factors)
        if len(fs) < 3:
            raise ValueError("CP model needs order >= 3")
        ranks = {f.shape[1] for f in fs}
        if len(ranks) != 1:
            raise ValueError(f"factor column counts differ: {[f.shape[1] for f in fs]}")
        object.__setattr__(self, "factors", fs)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; column r is kron(a[:, r], b[:, r])."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def khatri_rao_chain(mats: Sequence[np.ndarray]) -> np.ndarray:
    """mats[0] ⊙ mats[1] ⊙ ... (leftmost factor varies slowest)."""
    out = mats[0]
    for m in mats[1:]:
        out = khatri_rao(out, m)
    return out


def mode_n_unfold(t: DenseTensor | np.ndarray, n: int) -> np.ndarray:
    """Mode-n unfolding of shape (prod of other dims) x I_n.

    Rows enumerate the remaining modes with the lowest mode fastest, so a CP
    tensor unfolds to (A_N ⊙ ... ⊙ A_{n+1} ⊙ A_{n-1} ⊙ ... ⊙ A_1) A_n^T.
    """
    x = t.data if isinstance(t, DenseTensor) else np.asarray(t)
    if not 0 <= n < x.ndim:
        raise ValueError(f"mode {n} out of range for order-{x.ndim} tensor")
    return np.moveaxis(x, n, -1).reshape(-1, x.shape[n], order="F")


def mode_n_fold(mat: np.ndarray, n: int, shape: Sequence[int]) -> DenseTensor:
    """Inverse of :func:`mode_n_unfold`."""
    shape = tuple(shape)
    moved = [s for i, s in enumerate(shape) if i != n] + [shape[n]]
    x = np.asarray(mat).reshape(moved, order="F")
    return DenseTensor(np.moveaxis(x, -1, n))


def unfolding_operator(m: CpModel, n: int) -> np.ndarray:
    """Khatri-Rao operator of the other modes, ordered as in the mode-n unfolding."""
    others = [m.factors[i] for i in range(len(m.factors) - 1, -1, -1) if i != n]
    return khatri_rao_chain(others)


def cp_reconstruct(m: CpModel) -> DenseTensor:
    letters = "abcdefghijklmnopqrstuvwxy"[: len(m.factors)]
    spec = ",".join(f"{c}z" for c in letters) + "->" + letters
    return DenseTensor(np.einsum(spec, *m.factors))


def vectorize_mode1(m: CpModel) -> np.ndarray:
    """vec of the mode-1 unfolding of an order-4 model [[A, B, C, D]].

    Equals sum_l a_l ⊗ d_l ⊗ c_l ⊗ b_l, i.e. (A ⊙ D ⊙ C ⊙ B) 1.
    """
    if len(m.factors) != 4:
        raise ValueError(f"vectorize_mode1 needs an order-4 model, got order {len(m.factors)}")
    a, b, c, d = m.factors
    return khatri_rao_chain([a, d, c, b]).sum(axis=1)


def rel_error(x: np.ndarray, ref: np.ndarray) -> float:
    """Relative Frobenius distance ||x - ref|| / ||ref|| (absolute if ref is zero)."""
    x = np.asarray(x)
    ref = np.asarray(ref)
    den = np.linalg.norm(ref)
    num = np.linalg.norm(x - ref)
    return float(num / den) if den > 0 else float(num)
