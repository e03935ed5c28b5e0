"""Decentralized objectives ``f(theta) = (1/n) sum_i f_i(theta)``.

Two families are provided:

* :class:`SigmoidClassifierProblem` -- a linear ``C``-class classifier trained
  with the (non-convex) sigmoid loss on per-agent shards of a dataset.
* :class:`QuadraticProblem` -- least-squares objectives ``1/2||A_i theta - b_i||^2``
  with optional additive Gaussian gradient noise; these satisfy the PL
  inequality and have a computable optimum.

Both expose the same oracle surface: ``value``, ``full_grad``,
``sample_batch``, ``stoch_grad`` and ``stoch_grad_pair``.  A *batch* is
whatever ``sample_batch`` returns and is opaque to callers; passing the same
batch to two gradient calls evaluates both on the same data.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

__all__ = [
    "SKEWED_PARTITION",
    "Problem",
    "SyntheticDataset",
    "SigmoidClassifierProblem",
    "QuadraticProblem",
    "generate_synthetic",
    "load_or_generate",
    "uniform_partition",
    "sigmoid_classifier_problem",
    "quadratic_pl_problem",
    "estimate_lipschitz",
    "gradient_variance",
]

# per-agent sample counts of the 25-agent synthetic benchmark
SKEWED_PARTITION = (470, 403, 91, 84, 79, 51, 51, 38, 31, 25, 24, 19, 14, 10, 9, 6, 6, 5, 5, 4, 4, 4, 4, 3, 3)


class Problem:
    """Base class for a decentralized objective over ``n`` agents in ``R^d``."""

    n: int
    d: int
    lipschitz: float | None = None
    mu: float | None = None
    f_star: float | None = None
    sigma2: float | None = None

    def value(self, i: int, theta) -> float:
        raise NotImplementedError

    def full_grad(self, i: int, theta) -> np.ndarray:
        raise NotImplementedError

    def local_size(self, i: int) -> int | None:
        """Number of local samples, or None for an infinite (noise) model."""
        return None

    def sample_batch(self, i: int, size: int | None, rng: np.random.Generator):
        raise NotImplementedError

    def stoch_grad(self, i: int, theta, batch) -> np.ndarray:
        raise NotImplementedError

    def stoch_grad_pair(self, i: int, theta_new, theta_old, batch) -> tuple[np.ndarray, np.ndarray]:
        """Gradients at ``theta_new`` and ``theta_old`` on one shared batch."""
        return self.stoch_grad(i, theta_new, batch), self.stoch_grad(i, theta_old, batch)

    def global_value(self, theta) -> float:
        return float(np.mean([self.value(i, theta) for i in range(self.n)]))

    def global_values(self, thetas) -> np.ndarray:
        """``f`` evaluated at each row of ``thetas``."""
        return np.array([self.global_value(t) for t in np.atleast_2d(thetas)])

    def global_grad(self, theta) -> np.ndarray:
        return np.mean([self.full_grad(i, theta) for i in range(self.n)], axis=0)

    def accuracy(self, theta) -> float | None:
        return None


# -- synthetic classification data -------------------------------------------


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """Samples stored contiguously by owner: agent ``i`` owns ``features[offsets[i]:offsets[i+1]]``."""

    features: np.ndarray
    labels: np.ndarray
    sizes: tuple[int, ...]
    classes: int

    def __post_init__(self):
        if any(s < 1 for s in self.sizes):
            raise ValueError("every agent needs at least one sample")
        if sum(self.sizes) != self.features.shape[0] or self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("partition sizes do not match the number of samples")

    @property
    def n(self) -> int:
        return len(self.sizes)

    @property
    def m(self) -> int:
        return int(sum(self.sizes))

    @property
    def d_feat(self) -> int:
        return self.features.shape[1]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def shard(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return self.features[lo:hi], self.labels[lo:hi]


def uniform_partition(m: int, n: int) -> list[int]:
    """Split ``m`` samples over ``n`` agents as evenly as possible."""
    if n < 1 or m < n:
        raise ValueError(f"cannot split {m} samples over {n} agents with none empty")
    q, r = divmod(m, n)
    return [q + (1 if i < r else 0) for i in range(n)]


def generate_synthetic(
    partition=SKEWED_PARTITION,
    d_feat: int = 1000,
    classes: int = 5,
    rng: np.random.Generator | int | None = 0,
    dominant_classes: int = 2,
    skew: float = 0.9,
    mean_scale: float = 0.05,
    noise_scale: float = 1.0,
) -> SyntheticDataset:
    """Class-conditional Gaussian features with class-skewed shards.

    Class means are drawn once from ``N(0, mean_scale^2 I)``.  Each agent picks
    ``dominant_classes`` favourite classes; a sample's label comes from the
    favourites with probability ``skew`` and uniformly otherwise.  Features
    are ``mean[label] + noise_scale * N(0, I)``.  The default ``mean_scale``
    makes classes overlap (a linear model reaches roughly 70% accuracy).
    """
    sizes = tuple(int(s) for s in partition)
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError("partition must be nonempty with every shard of size >= 1")
    if not 1 <= dominant_classes <= classes:
        raise ValueError("dominant_classes must be in [1, classes]")
    if not 0 <= skew <= 1:
        raise ValueError(f"skew must be in [0, 1], got {skew}")
    rng = np.random.default_rng(rng)
    means = mean_scale * rng.standard_normal((classes, d_feat))
    labels = []
    for s in sizes:
        fav = rng.choice(classes, size=dominant_classes, replace=False)
        from_fav = rng.random(s) < skew
        labels.append(np.where(from_fav, rng.choice(fav, size=s), rng.integers(0, classes, size=s)))
    labels = np.concatenate(labels).astype(np.int64)
    features = means[labels] + noise_scale * rng.standard_normal((labels.size, d_feat))
    return SyntheticDataset(features, labels, sizes, classes)


def load_or_generate(cache_dir, seed: int, **kwargs) -> SyntheticDataset:
    """:func:`generate_synthetic` memoized to ``cache_dir/<hash>.npz``.

    Regeneration is deterministic, so the cache only saves time.
    """
    kwargs.setdefault("partition", SKEWED_PARTITION)
    key = json.dumps({"seed": seed, **{k: list(v) if isinstance(v, tuple) else v for k, v in kwargs.items()}}, sort_keys=True)
    digest = hashlib.sha256(key.encode()).hexdigest()[:16]
    path = Path(cache_dir) / f"synthetic-{digest}.npz"
    if path.exists():
        with np.load(path) as z:
            return SyntheticDataset(z["features"], z["labels"], tuple(int(s) for s in z["sizes"]), int(z["classes"]))
    ds = generate_synthetic(rng=seed, **kwargs)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, features=ds.features, labels=ds.labels, sizes=np.array(ds.sizes), classes=ds.classes)
    return ds


# -- sigmoid-loss linear classifier --------------------------------------------


class SigmoidClassifierProblem(Problem):
    """``f_i(theta) = (1/m_i) sum_j sum_k phi(l_jk <x_j, theta_k>) + lam/2 ||theta||^2``.

    ``theta`` is the concatenation of ``C`` class blocks of length ``d_feat``.
    The loss pushes ``l_jk <x_j, theta_k>`` down, so, with either label
    encoding, the predicted class is the one with the *smallest* score.
    """

    def __init__(self, dataset: SyntheticDataset, lam: float = 1e-4, label_encoding: str = "plus_minus"):
        if lam < 0:
            raise ValueError(f"regularization must be >= 0, got {lam}")
        if label_encoding not in ("plus_minus", "zero_one"):
            raise ValueError(f"unknown label encoding {label_encoding!r}")
        self.dataset = dataset
        self.lam = float(lam)
        self.label_encoding = label_encoding
        self.n = dataset.n
        self.classes = dataset.classes
        self.d_feat = dataset.d_feat
        self.d = self.classes * self.d_feat
        onehot = np.eye(self.classes)[dataset.labels]
        self._ell = 2.0 * onehot - 1.0 if label_encoding == "plus_minus" else onehot
        self._offsets = dataset.offsets
        self._x = [dataset.shard(i)[0] for i in range(self.n)]
        self._l = [self._ell[self._offsets[i] : self._offsets[i + 1]] for i in range(self.n)]
        owner = np.repeat(np.arange(self.n), dataset.sizes)
        self._sample_weight = 1.0 / (self.n * np.asarray(dataset.sizes, dtype=float)[owner])

    def local_size(self, i):
        return self.dataset.sizes[i]

    def _blocks(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float).reshape(self.classes, self.d_feat)

    def _loss_grad(self, x, ell, theta, want_grad=True):
        t = self._blocks(theta)
        s = expit(ell * (x @ t.T))
        loss = s.sum() / x.shape[0]
        if not want_grad:
            return loss, None
        coef = s * (1.0 - s) * ell / x.shape[0]
        return loss, (coef.T @ x).ravel()

    def value(self, i, theta):
        theta = np.asarray(theta, dtype=float)
        loss, _ = self._loss_grad(self._x[i], self._l[i], theta, want_grad=False)
        return float(loss + 0.5 * self.lam * (theta @ theta))

    def stoch_grad(self, i, theta, batch):
        theta = np.asarray(theta, dtype=float)
        _, g = self._loss_grad(self._x[i][batch], self._l[i][batch], theta)
        return g + self.lam * theta

    def full_grad(self, i, theta):
        return self.stoch_grad(i, theta, np.arange(self.dataset.sizes[i]))

    def sample_batch(self, i, size, rng):
        m_i = self.dataset.sizes[i]
        if size is None or size >= m_i:
            return np.arange(m_i)
        return rng.choice(m_i, size=size, replace=False)

    def global_values(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        p = thetas.shape[0]
        z = self.dataset.features @ thetas.reshape(p * self.classes, self.d_feat).T
        per_sample = expit(self._ell[:, None, :] * z.reshape(-1, p, self.classes)).sum(axis=2)
        per_agent = np.add.reduceat(per_sample, self._offsets[:-1], axis=0) / np.asarray(self.dataset.sizes)[:, None]
        return per_agent.mean(axis=0) + 0.5 * self.lam * np.einsum("pd,pd->p", thetas, thetas)

    def global_value(self, theta):
        return float(self.global_values(theta)[0])

    def global_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        x = self.dataset.features
        s = expit(self._ell * (x @ self._blocks(theta).T))
        coef = s * (1.0 - s) * self._ell * self._sample_weight[:, None]
        return (coef.T @ x).ravel() + self.lam * theta

    def predict(self, theta) -> np.ndarray:
        return np.argmin(self.dataset.features @ self._blocks(theta).T, axis=1)

    def accuracy(self, theta):
        return float(np.mean(self.predict(theta) == self.dataset.labels))


def sigmoid_classifier_problem(dataset: SyntheticDataset, lam: float = 1e-4, label_encoding: str = "plus_minus"):
    return SigmoidClassifierProblem(dataset, lam, label_encoding)


# -- least squares ---------------------------------------------------------------


class QuadraticProblem(Problem):
    """``f_i(theta) = 1/2 ||A_i theta - b_i||^2`` with optional gradient noise.

    A stochastic gradient is ``A_i^T(A_i theta - b_i) + xi`` where ``xi`` is the
    mean of ``size`` draws of ``N(0, sigma^2/d I)``; the batch *is* ``xi``.
    """

    def __init__(self, A, b, sigma: float = 0.0):
        if sigma < 0:
            raise ValueError("noise level must be >= 0")
        self.A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A]
        self.b = [np.asarray(v, dtype=float).ravel() for v in b]
        if len(self.A) != len(self.b) or not self.A:
            raise ValueError("need one (A_i, b_i) pair per agent")
        self.n = len(self.A)
        self.d = self.A[0].shape[1]
        for a, v in zip(self.A, self.b):
            if a.shape[1] != self.d or a.shape[0] != v.size:
                raise ValueError("inconsistent A_i / b_i shapes")
        self.sigma = float(sigma)
        self.sigma2 = self.sigma**2
        self._H = [a.T @ a for a in self.A]
        self._c = [a.T @ v for a, v in zip(self.A, self.b)]
        self._k = [0.5 * float(v @ v) for v in self.b]
        h_bar = sum(self._H) / self.n
        c_bar = sum(self._c) / self.n
        eig = np.linalg.eigvalsh(h_bar)
        positive = eig[eig > 1e-10 * max(eig.max(), 1.0)]
        self.mu = float(positive.min()) if positive.size else None
        self.lipschitz = float(max(np.linalg.eigvalsh(h).max() for h in self._H))
        self.theta_star = np.linalg.lstsq(h_bar, c_bar, rcond=None)[0]
        self.f_star = self.global_value(self.theta_star)

    def value(self, i, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.A[i] @ theta - self.b[i]
        return 0.5 * float(r @ r)

    def full_grad(self, i, theta):
        return self._H[i] @ np.asarray(theta, dtype=float) - self._c[i]

    def sample_batch(self, i, size, rng):
        if self.sigma == 0.0 or size is None:
            return None
        draws = rng.standard_normal((size, self.d))
        return draws.mean(axis=0) * (self.sigma / np.sqrt(self.d))

    def stoch_grad(self, i, theta, batch):
        g = self.full_grad(i, theta)
        return g if batch is None else g + batch

    def global_value(self, theta):
        theta = np.asarray(theta, dtype=float)
        return float(np.mean([0.5 * theta @ h @ theta - c @ theta + k for h, c, k in zip(self._H, self._c, self._k)]))

    def global_values(self, thetas):
        return np.array([self.global_value(t) for t in np.atleast_2d(thetas)])


def quadratic_pl_problem(n: int, d: int, rng, sigma: float = 0.0, rows: int | None = None, rank: int | None = None):
    """Random least-squares instance over ``n`` agents.

    Each agent gets ``rows`` (default ``d``) Gaussian rows scaled by ``1/sqrt(rows)``.
    With ``rank < d`` the aggregate Hessian is singular, giving a PL but not
    strongly convex objective.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng(rng)
    rows = d if rows is None else rows
    basis = None if rank is None else np.linalg.qr(rng.standard_normal((d, rank)))[0]
    A, b = [], []
    for _ in range(n):
        a = rng.standard_normal((rows, d)) / np.sqrt(rows)
        if basis is not None:
            a = a @ basis @ basis.T
        A.append(a)
        b.append(rng.standard_normal(rows))
    return QuadraticProblem(A, b, sigma)


# -- diagnostics -----------------------------------------------------------------


def estimate_lipschitz(problem: Problem, trials: int = 3, rng=None, power_steps: int = 25, safety: float = 1.2) -> float:
    """Sampled gradient-Lipschitz constant, times ``safety``.

    For each agent and trial, start from a random pair ``(theta, theta + h u)``
    and refine the direction ``u`` by a few rounds of gradient-difference
    power iteration; the largest ratio ``||grad_i(theta) - grad_i(theta')|| /
    ||theta - theta'||`` observed over all pairs is returned.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    best = 0.0
    for i in range(problem.n):
        for _ in range(trials):
            theta = rng.standard_normal(problem.d) / np.sqrt(problem.d)
            h = 1e-2 * max(1.0, float(np.linalg.norm(theta)))
            g0 = problem.full_grad(i, theta)
            u = rng.standard_normal(problem.d)
            for _ in range(power_steps):
                u /= np.linalg.norm(u)
                diff = problem.full_grad(i, theta + h * u) - g0
                norm = float(np.linalg.norm(diff))
                best = max(best, norm / h)
                if norm == 0.0:
                    break
                u = diff
    return safety * best


def gradient_variance(problem: Problem, theta, rng=None, samples: int = 200) -> float:
    """Largest per-agent mean of ``||stoch_grad - full_grad||^2`` for singleton batches.

    Finite-sum problems are enumerated exactly when small; otherwise (and for
    noise models) ``samples`` draws are averaged.
    """
    rng = np.random.default_rng(rng)
    worst = 0.0
    for i in range(problem.n):
        full = problem.full_grad(i, theta)
        m_i = problem.local_size(i)
        if m_i is not None and m_i <= samples:
            batches = [np.array([j]) for j in range(m_i)]
        else:
            batches = [problem.sample_batch(i, 1, rng) for _ in range(samples)]
        dev = [np.sum((problem.stoch_grad(i, theta, bt) - full) ** 2) for bt in batches]
        worst = max(worst, float(np.mean(dev)))
    return worst
