"""
This module contains the dense linear algebra and statistics kernel used by the rest of the library.

Matrices and vectors are float64 numpy arrays (2-D and 1-D respectively).
Every public function checks its result is finite
"""
import math
import typing

import numpy as np
import numpy.typing as npt
import scipy.special

import xbar_sidechannel.errors as errors

Matrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]

# singular values below PINV_RCOND * (largest singular value) are treated as zero
PINV_RCOND = 1e-12


def as_matrix(a: npt.ArrayLike, name: str = "matrix") -> Matrix:
    """
    Converts the argument to a finite float64 matrix
    :param a: anything numpy can convert to a 2-D array
    :param name: the name used in error messages
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise errors.ShapeMismatchError("Expected a 2-D {}".format(name), arr.shape)
    _require_finite(arr, name)
    return arr


def as_vector(x: npt.ArrayLike, name: str = "vector") -> Vector:
    """
    Converts the argument to a finite float64 vector
    :param x: anything numpy can convert to a 1-D array
    :param name: the name used in error messages
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise errors.ShapeMismatchError("Expected a 1-D {}".format(name), arr.shape)
    _require_finite(arr, name)
    return arr


def _require_finite(arr: np.ndarray, name: str):
    if not np.all(np.isfinite(arr)):
        raise errors.NonFiniteError("The {} contains NaN or Inf values".format(name))


def matmul(a: npt.ArrayLike, b: npt.ArrayLike) -> Matrix:
    """
    Returns the matrix product a·b
    :param a: the left (m x n) matrix
    :param b: the right (n x k) matrix

    :raises ShapeMismatchError: if a.cols != b.rows
    """
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise errors.ShapeMismatchError("Can not multiply matrices", a.shape, b.shape)

    product = a @ b
    _require_finite(product, "product")
    return product


def pseudoinverse(a: npt.ArrayLike) -> Matrix:
    """
    Returns the Moore-Penrose pseudoinverse of a, computed from its singular value decomposition.
    Singular values below PINV_RCOND times the largest one count as zero
    :param a: a non-empty matrix
    """
    a = as_matrix(a)
    if a.size == 0:
        raise errors.EmptyInputError("Can not pseudo-invert an empty matrix {}".format(a.shape))

    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))

    rank = int(np.sum(s > PINV_RCOND * s[0]))
    return (vh[:rank].T / s[:rank]) @ u[:, :rank].T


def numerical_rank(a: npt.ArrayLike) -> int:
    """
    Returns the rank of a under the same singular value cutoff as pseudoinverse
    """
    s = np.linalg.svd(as_matrix(a), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > PINV_RCOND * s[0]))


def pearson(x: npt.ArrayLike, y: npt.ArrayLike) -> float:
    """
    Returns the Pearson correlation coefficient between x and y.
    If either vector is constant there is no linear relationship to measure and 0.0 is returned
    :param x: a vector with at least 2 entries
    :param y: a vector with the same length as x
    """
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if x.shape != y.shape:
        raise errors.ShapeMismatchError("Correlated vectors must have equal length", x.shape, y.shape)
    if x.size < 2:
        raise errors.EmptyInputError("Correlation needs at least 2 values, got {}".format(x.size))

    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        return 0.0

    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pearson_rows(rows: npt.ArrayLike, y: npt.ArrayLike) -> Vector:
    """
    Returns the Pearson correlation of every row of a matrix with a single vector,
    using the same zero-variance convention as pearson
    :param rows: a (k x n) matrix
    :param y: a vector of length n
    """
    rows = as_matrix(rows, "rows")
    y = as_vector(y, "y")
    if rows.shape[1] != y.size:
        raise errors.ShapeMismatchError("Row length must match the vector length", rows.shape, y.shape)
    if y.size < 2:
        raise errors.EmptyInputError("Correlation needs at least 2 values, got {}".format(y.size))

    rc = rows - rows.mean(axis=1, keepdims=True)
    yc = y - y.mean()
    srr = np.einsum("ij,ij->i", rc, rc)
    syy = float(yc @ yc)

    r = np.zeros(rows.shape[0])
    if syy == 0.0:
        return r

    ok = srr > 0.0
    r[ok] = (rc[ok] @ yc) / np.sqrt(srr[ok] * syy)
    return np.clip(r, -1.0, 1.0)


def two_sample_t_test(a: typing.Sequence[float], b: typing.Sequence[float]) -> typing.Tuple[float, float]:
    """
    Classic two-sided Student's t-test with pooled variance (n_a + n_b - 2 degrees of freedom).
    Returns the t statistic and the p-value.

    Two constant samples are a degenerate case: equal means give t = 0 and p = 1,
    different means give an infinite t and p = 0
    :param a: the first sample, at least 2 values
    :param b: the second sample, at least 2 values
    """
    a = as_vector(a, "first sample")
    b = as_vector(b, "second sample")
    if a.size < 2 or b.size < 2:
        raise errors.EmptyInputError(
            "Each sample needs at least 2 values (got {} and {})".format(a.size, b.size)
        )

    dof = a.size + b.size - 2
    diff = float(a.mean() - b.mean())
    pooled = (float(np.sum((a - a.mean()) ** 2)) + float(np.sum((b - b.mean()) ** 2))) / dof
    scale = math.sqrt(pooled * (1.0 / a.size + 1.0 / b.size))

    if scale == 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, diff), 0.0

    t = diff / scale
    p = float(scipy.special.betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    return t, min(1.0, max(0.0, p))


def argmax_tiebreak_low(x: npt.ArrayLike) -> int:
    """
    Returns the index of the largest entry; ties go to the lowest index
    :param x: a non-empty vector
    """
    x = as_vector(x)
    if x.size == 0:
        raise errors.EmptyInputError("Can not take the argmax of an empty vector")
    return int(np.argmax(x))


def argmax_rows(rows: npt.ArrayLike) -> npt.NDArray[np.int64]:
    """
    Row-wise argmax_tiebreak_low
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] == 0:
        raise errors.EmptyInputError("Can not take the argmax of empty rows {}".format(rows.shape))
    return np.argmax(rows, axis=1).astype(np.int64)


def one_hot(labels: npt.ArrayLike, num_classes: int) -> Matrix:
    """
    Returns a (len(labels) x num_classes) one-hot matrix
    """
    labels = np.asarray(labels, dtype=np.int64)
    encoded = np.zeros((labels.size, num_classes))
    encoded[np.arange(labels.size), labels] = 1.0
    return encoded

