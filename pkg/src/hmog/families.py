"""Categorical and multivariate normal exponential families.

Both families are handled in natural coordinates. A distribution with
density ``exp(s(x) . theta - psi(theta)) nu(x)`` is identified by a flat
parameter vector ``theta`` whose layout matches the minimal sufficient
statistic of the family:

* categorical over ``1..k``: ``theta`` has length ``k - 1`` (category 1 is
  the reference and carries a zero sufficient statistic);
* ``n``-dimensional normal: ``theta = [theta_mu, packed(Theta)]`` where the
  second-order block ``Theta`` is packed according to the covariance
  structure (lower triangle, diagonal, or a single scalar).

Packing conventions are chosen so that plain dot products recover the
correct bilinear forms: natural vectors store off-diagonal entries of
``Theta`` doubled, while sufficient statistics and mean vectors store each
product ``x_i x_j`` once. Hence ``dot(s(x), theta) = x . theta_mu +
x . Theta . x`` exactly, and the gradient of the log-partition function in
these coordinates is exactly the flat mean vector.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_solve, cholesky
from scipy.special import logsumexp

__all__ = [
    "Structure",
    "DomainError",
    "Categorical",
    "MultivariateNormal",
]

LOG_2PI = math.log(2.0 * math.pi)


class DomainError(ValueError):
    """Parameters outside the valid domain of a family or model.

    Raised when a definiteness constraint fails (e.g. a covariance loses
    positive-definiteness) or a mean vector sits on the boundary of the
    mean-parameter space. Never silently regularized.
    """


class Structure(enum.Enum):
    """Constraint on the second-order block of a normal family."""

    FULL = "full"
    DIAGONAL = "diagonal"
    ISOTROPIC = "isotropic"


@functools.lru_cache(maxsize=None)
def _tril_rows_cols(n: int) -> tuple[NDArray, NDArray]:
    rows, cols = np.tril_indices(n)
    return rows, cols


def _chol_lower(matrix: NDArray, context: str) -> NDArray:
    """Lower Cholesky factor of a symmetric positive-definite matrix."""
    try:
        return cholesky(matrix, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DomainError(f"{context}: matrix is not positive-definite") from exc


# ---------------------------------------------------------------------------
# Categorical family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Categorical:
    """Categorical distribution over the indices ``1..num_categories``.

    The natural parameter vector has length ``num_categories - 1``; the
    sufficient statistic of category 1 is the zero vector and category
    ``z > 1`` maps to the indicator vector with a one at slot ``z - 1``.
    """

    num_categories: int

    def __post_init__(self) -> None:
        if self.num_categories < 1:
            raise ValueError(f"num_categories must be >= 1, got {self.num_categories}")

    @property
    def param_dim(self) -> int:
        return self.num_categories - 1

    def sufficient_statistic(self, z: int) -> NDArray:
        k = self.num_categories
        if not 1 <= z <= k:
            raise ValueError(f"category index {z} outside 1..{k}")
        stat = np.zeros(k - 1)
        if z > 1:
            stat[z - 2] = 1.0
        return stat

    def sufficient_statistics(self, zs: NDArray) -> NDArray:
        zs = np.asarray(zs)
        if np.any(zs < 1) or np.any(zs > self.num_categories):
            raise ValueError(f"category indices outside 1..{self.num_categories}")
        stats = np.zeros((len(zs), self.param_dim))
        hot = zs > 1
        stats[np.nonzero(hot)[0], zs[hot] - 2] = 1.0
        return stats

    def log_base_measure(self, z: int) -> float:
        return 0.0

    def log_partition(self, theta: NDArray) -> float:
        """log(1 + sum_i exp(theta_i)), computed via log-sum-exp."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_dim,):
            raise ValueError(f"expected {self.param_dim} natural parameters")
        if not np.all(np.isfinite(theta)):
            raise DomainError("non-finite categorical natural parameters")
        if theta.size == 0:
            return 0.0
        return float(logsumexp(np.concatenate([[0.0], theta])))

    def log_partition_batch(self, thetas: NDArray) -> NDArray:
        thetas = np.asarray(thetas, dtype=float)
        padded = np.concatenate([np.zeros((thetas.shape[0], 1)), thetas], axis=1)
        return logsumexp(padded, axis=1)

    def to_mean(self, theta: NDArray) -> NDArray:
        """Forward mapping: eta_i = exp(theta_i) / (1 + sum_j exp(theta_j))."""
        psi = self.log_partition(theta)
        return np.exp(np.asarray(theta, dtype=float) - psi)

    def to_mean_batch(self, thetas: NDArray) -> NDArray:
        psi = self.log_partition_batch(thetas)
        return np.exp(thetas - psi[:, None])

    def to_natural(self, eta: NDArray) -> NDArray:
        """Backward mapping: theta_i = log(eta_i / (1 - sum_j eta_j))."""
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (self.param_dim,):
            raise ValueError(f"expected {self.param_dim} mean parameters")
        if eta.size == 0:
            return eta.copy()
        rest = 1.0 - float(np.sum(eta))
        if np.any(eta <= 0.0) or rest <= 0.0:
            raise DomainError(
                "categorical mean parameters on the probability boundary"
            )
        return np.log(eta) - math.log(rest)

    def probabilities(self, theta: NDArray) -> NDArray:
        """Full probability vector over all ``num_categories`` indices."""
        mean = self.to_mean(theta)
        return np.concatenate([[1.0 - float(np.sum(mean))], mean])

    def log_density(self, theta: NDArray, z: int) -> float:
        stat = self.sufficient_statistic(z)
        return float(stat @ np.asarray(theta, dtype=float)) - self.log_partition(theta)

    def sample(self, theta: NDArray, size: int, rng: np.random.Generator) -> NDArray:
        """i.i.d. category indices in ``1..num_categories``."""
        # float noise in the complement can dip a hair below zero at
        # extreme parameters; clean it up for the sampler only
        probs = np.clip(self.probabilities(theta), 0.0, None)
        probs = probs / probs.sum()
        return rng.choice(self.num_categories, size=size, p=probs) + 1


# ---------------------------------------------------------------------------
# Multivariate normal family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultivariateNormal:
    """Multivariate normal family with a structured second-order block.

    ``structure`` restricts the precision (equivalently the covariance):
    FULL allows any symmetric positive-definite matrix, DIAGONAL restricts
    to independent coordinates, and ISOTROPIC to a shared variance. The
    base measure is ``(2 pi)^(-dim/2)``.
    """

    dim: int
    structure: Structure = Structure.FULL

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    @property
    def second_dim(self) -> int:
        if self.structure is Structure.FULL:
            return self.dim * (self.dim + 1) // 2
        if self.structure is Structure.DIAGONAL:
            return self.dim
        return 1

    @property
    def param_dim(self) -> int:
        return self.dim + self.second_dim

    # -- packing -----------------------------------------------------------

    def split_natural(self, theta: NDArray) -> tuple[NDArray, NDArray]:
        """Split a flat natural vector into ``(theta_mu, Theta)``.

        ``Theta`` comes back as a dense symmetric matrix regardless of
        structure; stored off-diagonal entries are halved on the way out so
        that the matrix satisfies ``x . Theta . x = dot(s_2(x), theta_2)``.
        """
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_dim,):
            raise ValueError(
                f"expected natural vector of length {self.param_dim}, got {theta.shape}"
            )
        n = self.dim
        first = theta[:n].copy()
        packed = theta[n:]
        if self.structure is Structure.FULL:
            mat = np.zeros((n, n))
            rows, cols = _tril_rows_cols(n)
            off = rows != cols
            mat[rows, cols] = np.where(off, 0.5 * packed, packed)
            mat = mat + np.tril(mat, -1).T
        elif self.structure is Structure.DIAGONAL:
            mat = np.diag(packed)
        else:
            mat = packed[0] * np.eye(n)
        return first, mat

    def join_natural(self, first: NDArray, second: NDArray) -> NDArray:
        """Pack ``(theta_mu, Theta)`` into a flat natural vector.

        ``second`` may be the dense symmetric matrix, a diagonal vector
        (DIAGONAL), or a scalar (ISOTROPIC).
        """
        first = np.asarray(first, dtype=float)
        if first.shape != (self.dim,):
            raise ValueError(f"expected first-order block of length {self.dim}")
        second = np.asarray(second, dtype=float)
        n = self.dim
        if self.structure is Structure.FULL:
            rows, cols = _tril_rows_cols(n)
            off = rows != cols
            packed = np.where(off, 2.0 * second[rows, cols], second[rows, cols])
        elif self.structure is Structure.DIAGONAL:
            packed = np.diag(second) if second.ndim == 2 else second
        else:
            packed = np.atleast_1d(second[0, 0] if second.ndim == 2 else second)
        return np.concatenate([first, packed])

    def split_mean(self, eta: NDArray) -> tuple[NDArray, NDArray]:
        """Split a flat mean vector into ``(E[x], second moments)``.

        The second element is a dense symmetric matrix for FULL structure,
        the vector of ``E[x_i^2]`` for DIAGONAL, and the scalar
        ``E[sum_i x_i^2]`` for ISOTROPIC.
        """
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (self.param_dim,):
            raise ValueError(
                f"expected mean vector of length {self.param_dim}, got {eta.shape}"
            )
        n = self.dim
        first = eta[:n].copy()
        packed = eta[n:]
        if self.structure is Structure.FULL:
            mat = np.zeros((n, n))
            rows, cols = _tril_rows_cols(n)
            mat[rows, cols] = packed
            mat = mat + np.tril(mat, -1).T
            return first, mat
        if self.structure is Structure.DIAGONAL:
            return first, packed.copy()
        return first, packed[0]

    def join_mean(self, first: NDArray, second) -> NDArray:
        first = np.asarray(first, dtype=float)
        if self.structure is Structure.FULL:
            second = np.asarray(second, dtype=float)
            rows, cols = _tril_rows_cols(self.dim)
            return np.concatenate([first, second[rows, cols]])
        if self.structure is Structure.DIAGONAL:
            second = np.asarray(second, dtype=float)
            if second.ndim == 2:
                second = np.diag(second)
            return np.concatenate([first, second])
        scalar = float(np.trace(second)) if np.ndim(second) == 2 else float(second)
        return np.concatenate([first, [scalar]])

    # -- sufficient statistics ----------------------------------------------

    def sufficient_statistic(self, x: NDArray) -> NDArray:
        """Flat minimal sufficient statistic ``(x, packed(x (x) x))``."""
        return self.sufficient_statistics(np.asarray(x, dtype=float)[None, :])[0]

    def sufficient_statistics(self, xs: NDArray) -> NDArray:
        """Batched sufficient statistics, shape ``(len(xs), param_dim)``."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 2 or xs.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {xs.shape}")
        if self.structure is Structure.FULL:
            rows, cols = _tril_rows_cols(self.dim)
            second = xs[:, rows] * xs[:, cols]
        elif self.structure is Structure.DIAGONAL:
            second = xs**2
        else:
            second = np.sum(xs**2, axis=1, keepdims=True)
        return np.concatenate([xs, second], axis=1)

    def log_base_measure(self, x: NDArray) -> float:
        return -0.5 * self.dim * LOG_2PI

    # -- scale factorization --------------------------------------------------

    def _scale(self, theta: NDArray, context: str = "normal natural parameters"):
        """Factor the positive-definite matrix ``A = -2 Theta``.

        Returns the pieces subsequent computations need: a solver for
        ``A^{-1} v``, ``log det A``, and a covariance extractor. Raises
        DomainError when the definiteness constraint fails. Structured
        second-order blocks never materialize a dense matrix here.
        """
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_dim,):
            raise ValueError(
                f"expected natural vector of length {self.param_dim}, got {theta.shape}"
            )
        n = self.dim
        first = theta[:n]
        if self.structure is Structure.FULL:
            _, second = self.split_natural(theta)
            a_mat = -2.0 * second
            lower = _chol_lower(a_mat, context)
            logdet = 2.0 * float(np.sum(np.log(np.diag(lower))))

            def solve(v: NDArray) -> NDArray:
                return cho_solve((lower, True), v)

            def covariance() -> NDArray:
                return solve(np.eye(n))

        else:
            diag = -2.0 * theta[n:]
            if np.any(diag <= 0.0):
                raise DomainError(f"{context}: second-order block is not negative")
            if self.structure is Structure.ISOTROPIC:
                diag = np.full(n, diag[0])
            logdet = float(np.sum(np.log(diag)))

            def solve(v: NDArray) -> NDArray:
                if v.ndim == 1:
                    return v / diag
                return v / diag[:, None]

            def covariance() -> NDArray:
                return 1.0 / diag

        return first, solve, logdet, covariance

    # -- log-partition, forward, backward ------------------------------------

    def log_partition(self, theta: NDArray) -> float:
        """psi(theta) = -1/4 theta_mu . Theta^-1 . theta_mu - 1/2 log|-2 Theta|.

        Computed through a symmetric factorization of ``-2 Theta``; the
        Gaussian base measure is accounted for in ``log_density``, not here.
        """
        first, solve, logdet, _ = self._scale(theta)
        return 0.5 * float(first @ solve(first)) - 0.5 * logdet

    def log_partition_batch(self, firsts: NDArray, second: NDArray) -> NDArray:
        """Log-partition over rows of first-order parameters.

        All rows share the dense second-order block ``second``; this is the
        shape of every conjugation computation downstream, where only the
        first-order block varies across data points.
        """
        theta0 = self.join_natural(np.zeros(self.dim), second)
        _, solve, logdet, _ = self._scale(theta0)
        solved = solve(firsts.T)
        return 0.5 * np.einsum("ni,in->n", firsts, solved) - 0.5 * logdet

    def to_mean(self, theta: NDArray) -> NDArray:
        """Forward mapping to flat mean coordinates (gradient of psi)."""
        first, solve, _, covariance = self._scale(theta)
        mu = solve(first)
        cov = covariance()
        if self.structure is Structure.FULL:
            return self.join_mean(mu, cov + np.outer(mu, mu))
        if self.structure is Structure.DIAGONAL:
            return self.join_mean(mu, cov + mu**2)
        return self.join_mean(mu, float(np.sum(cov) + mu @ mu))

    def to_mean_batch(self, firsts: NDArray, second: NDArray) -> tuple[NDArray, NDArray]:
        """Posterior moments for rows sharing one second-order block.

        Returns ``(means, cov)`` where ``means`` has shape ``(N, dim)`` and
        ``cov`` is the shared dense covariance ``(-2 Theta)^{-1}``.
        """
        theta0 = self.join_natural(np.zeros(self.dim), second)
        _, solve, _, covariance = self._scale(theta0)
        means = solve(firsts.T).T
        cov = covariance()
        if self.structure is not Structure.FULL:
            cov = np.diag(cov)
        return means, cov

    def mean_flats(self, means: NDArray, cov: NDArray) -> NDArray:
        """Flat mean vectors for a batch of means sharing one covariance.

        Row ``i`` is the flat mean parameterization of a normal with mean
        ``means[i]`` and the shared dense covariance ``cov``.
        """
        means = np.asarray(means, dtype=float)
        if self.structure is Structure.FULL:
            rows, cols = _tril_rows_cols(self.dim)
            second = means[:, rows] * means[:, cols] + cov[rows, cols]
        elif self.structure is Structure.DIAGONAL:
            second = means**2 + np.diag(cov)
        else:
            second = np.sum(means**2, axis=1, keepdims=True) + np.trace(cov)
        return np.concatenate([means, second], axis=1)

    def to_natural(self, eta: NDArray) -> NDArray:
        """Backward mapping from flat mean coordinates."""
        mu, second = self.split_mean(eta)
        n = self.dim
        if self.structure is Structure.FULL:
            sigma = second - np.outer(mu, mu)
            return self.from_mean_cov(mu, sigma)
        if self.structure is Structure.DIAGONAL:
            var = second - mu**2
            return self.from_mean_cov(mu, var)
        var = (second - float(mu @ mu)) / n
        return self.from_mean_cov(mu, var)

    # -- standard-form bridges ------------------------------------------------

    def from_mean_cov(self, mu: NDArray, sigma) -> NDArray:
        """Natural parameters from ``(mu, Sigma)``.

        ``sigma`` is a dense matrix for FULL structure, a variance vector
        for DIAGONAL, and a scalar variance for ISOTROPIC. ``theta_mu =
        Sigma^-1 mu`` and ``Theta = -1/2 Sigma^-1``.
        """
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (self.dim,):
            raise ValueError(f"expected mean of length {self.dim}")
        if self.structure is Structure.FULL:
            sigma = np.asarray(sigma, dtype=float)
            lower = _chol_lower(sigma, "covariance")
            precision_mu = cho_solve((lower, True), mu)
            inv = cho_solve((lower, True), np.eye(self.dim))
            return self.join_natural(precision_mu, -0.5 * inv)
        if self.structure is Structure.DIAGONAL:
            var = np.asarray(sigma, dtype=float)
            if var.ndim == 2:
                var = np.diag(var)
            if np.any(var <= 0.0):
                raise DomainError("diagonal covariance must be positive")
            return self.join_natural(mu / var, -0.5 / var)
        var = float(sigma)
        if var <= 0.0:
            raise DomainError("isotropic variance must be positive")
        return self.join_natural(mu / var, -0.5 / var)

    def to_mean_cov(self, theta: NDArray) -> tuple[NDArray, NDArray]:
        """Standard parameters ``(mu, Sigma)`` in structure shape."""
        first, solve, _, covariance = self._scale(theta)
        mu = solve(first)
        cov = covariance()
        if self.structure is Structure.ISOTROPIC:
            return mu, float(cov[0])
        return mu, cov

    # -- densities and sampling -----------------------------------------------

    def log_density(self, theta: NDArray, x: NDArray) -> float:
        stat = self.sufficient_statistic(x)
        return (
            float(stat @ np.asarray(theta, dtype=float))
            - self.log_partition(theta)
            + self.log_base_measure(x)
        )

    def log_densities(self, theta: NDArray, xs: NDArray) -> NDArray:
        stats = self.sufficient_statistics(xs)
        psi = self.log_partition(theta)
        return stats @ np.asarray(theta, dtype=float) - psi + self.log_base_measure(xs)

    def sample(self, theta: NDArray, size: int, rng: np.random.Generator) -> NDArray:
        """i.i.d. draws, shape ``(size, dim)``; deterministic given ``rng``."""
        mu, cov = self.to_mean_cov(theta)
        noise = rng.standard_normal((size, self.dim))
        if self.structure is Structure.FULL:
            lower = _chol_lower(cov, "covariance")
            return mu + noise @ lower.T
        if self.structure is Structure.DIAGONAL:
            return mu + noise * np.sqrt(cov)
        return mu + noise * math.sqrt(cov)
