"""Parameter space, parameter packing, and sufficient statistics.

A regime-switching conditional Markov jump process (RSCMJP) on the state
space {1, ..., p} draws an initial state from ``alpha``, then selects one of
M generator matrices Q_1, ..., Q_M with state-dependent probability
``phi[x, m]`` and evolves as an ordinary Markov jump process under the
selected generator.  The regime label is hidden; an observer sees only the
path, which is summarised without loss by the per-path statistics

* ``B`` -- 0/1 indicator of the initial state,
* ``N`` -- matrix of transition counts between states,
* ``T`` -- vector of occupation times per state.

Free parameters are the first M-1 columns of ``phi`` (the last column is the
simplex complement) and the off-diagonal entries of every Q_m (diagonals are
the negative row sums).  ``alpha`` is estimable on its own from the initial
states and is deliberately excluded from the free-parameter vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

#: Absolute tolerance on simplex row sums (alpha rows, phi rows, Q row sums).
SIMPLEX_TOL = 1e-10


class ValidationError(ValueError):
    """A parameter set or statistics record violates a model invariant."""


def _readonly(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Full RSCMJP parameter set.

    Attributes
    ----------
    p : int
        Number of states, at least 2.
    M : int
        Number of regimes, at least 1.
    alpha : (p,) ndarray
        Initial-state probabilities.
    phi : (p, M) ndarray
        Regime probabilities given the initial state; each row lies on the
        open simplex (strictly positive entries).
    q : (M, p, p) ndarray
        Intensity matrices; off-diagonal entries strictly positive,
        diagonal equals the negative off-diagonal row sum.

    Instances are immutable (arrays are marked read-only) and safe to share
    across threads.
    """

    p: int
    M: int
    alpha: np.ndarray
    phi: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _readonly(self.alpha))
        object.__setattr__(self, "phi", _readonly(self.phi))
        object.__setattr__(self, "q", _readonly(self.q))
        p, M = self.p, self.M
        if p < 2:
            raise ValidationError(f"p must be >= 2, got {p}")
        if M < 1:
            raise ValidationError(f"M must be >= 1, got {M}")
        if self.alpha.shape != (p,):
            raise ValidationError(f"alpha must have shape ({p},), got {self.alpha.shape}")
        if self.phi.shape != (p, M):
            raise ValidationError(f"phi must have shape ({p}, {M}), got {self.phi.shape}")
        if self.q.shape != (M, p, p):
            raise ValidationError(f"q must have shape ({M}, {p}, {p}), got {self.q.shape}")

    @property
    def layout(self) -> "ParamLayout":
        return ParamLayout(self.p, self.M)

    def regime_distribution(self) -> np.ndarray:
        """Marginal regime probabilities sum_x alpha[x] * phi[x, m]."""
        return self.alpha @ self.phi

    def exit_rates(self) -> np.ndarray:
        """(M, p) array of total jump rates -q[m, x, x]."""
        return -np.einsum("mxx->mx", self.q)


def validate(theta: ModelParams) -> list[str]:
    """Check all ModelParams invariants; return a list of violations.

    An empty list means the parameter set is valid.  Simplex sums are
    checked within ``SIMPLEX_TOL`` absolute; positivity constraints are
    strict because downstream formulas divide by phi and by off-diagonal
    intensities.
    """
    v: list[str] = []
    p, M = theta.p, theta.M
    if abs(theta.alpha.sum() - 1.0) > SIMPLEX_TOL:
        v.append(f"alpha must sum to 1, got {theta.alpha.sum()!r}")
    if np.any(theta.alpha < 0):
        bad = int(np.argmin(theta.alpha)) + 1
        v.append(f"alpha[{bad}] is negative")
    row_sums = theta.phi.sum(axis=1)
    for x in range(p):
        if abs(row_sums[x] - 1.0) > SIMPLEX_TOL:
            v.append(f"phi row x={x + 1} must sum to 1, got {row_sums[x]!r}")
    if np.any(theta.phi <= 0):
        xs, ms = np.nonzero(theta.phi <= 0)
        v.append(f"phi[{xs[0] + 1},{ms[0] + 1}] must be strictly positive")
    off = ~np.eye(p, dtype=bool)
    for m in range(M):
        qm = theta.q[m]
        if np.any(qm[off] <= 0):
            xs, ys = np.nonzero((qm <= 0) & off)
            v.append(f"q[{xs[0] + 1}{ys[0] + 1},{m + 1}] must be strictly positive")
        diag = np.diag(qm)
        target = -(qm * off).sum(axis=1)
        scale = np.maximum(1.0, -target)
        bad = np.abs(diag - target) > SIMPLEX_TOL * scale
        if np.any(bad):
            x = int(np.nonzero(bad)[0][0])
            v.append(
                f"q[{x + 1}{x + 1},{m + 1}] must equal the negative off-diagonal "
                f"row sum {target[x]!r}, got {diag[x]!r}"
            )
    return v


def require_valid(theta: ModelParams) -> ModelParams:
    """Raise ValidationError naming every violated invariant."""
    violations = validate(theta)
    if violations:
        raise ValidationError("; ".join(violations))
    return theta


@dataclass(frozen=True)
class ParamLayout:
    """Canonical index layout of the free-parameter vector for given (p, M).

    Ordering: first the phi entries with x = 1..p outer and m = 1..M-1
    inner, then the off-diagonal intensities grouped by regime m = 1..M and
    row-major over (x, y != x) within a regime.  The layout depends on
    (p, M) only, never on construction order.
    """

    p: int
    M: int

    @property
    def d(self) -> int:
        return self.p * (self.M - 1) + self.M * self.p * (self.p - 1)

    @property
    def n_phi(self) -> int:
        return self.p * (self.M - 1)

    def entries(self) -> list[tuple]:
        """List of ('phi', x, m) and ('q', x, y, m) tags, 1-based indices."""
        out: list[tuple] = []
        for x in range(1, self.p + 1):
            for m in range(1, self.M):
                out.append(("phi", x, m))
        for m in range(1, self.M + 1):
            for x in range(1, self.p + 1):
                for y in range(1, self.p + 1):
                    if y != x:
                        out.append(("q", x, y, m))
        return out

    def labels(self) -> list[str]:
        return [
            f"phi_{e[1]}_{e[2]}" if e[0] == "phi" else f"q_{e[1]}_{e[2]}_{e[3]}"
            for e in self.entries()
        ]

    def phi_index(self, x: int, m: int) -> int:
        """Vector index of phi[x, m] (1-based x, m; m < M)."""
        if not (1 <= x <= self.p and 1 <= m < self.M):
            raise IndexError(f"no free phi entry (x={x}, m={m})")
        return (x - 1) * (self.M - 1) + (m - 1)

    def q_index(self, x: int, y: int, m: int) -> int:
        """Vector index of q[x, y, m] (1-based; y != x)."""
        if not (1 <= x <= self.p and 1 <= y <= self.p and y != x and 1 <= m <= self.M):
            raise IndexError(f"no free q entry (x={x}, y={y}, m={m})")
        row = (y - 1) if y < x else (y - 2)
        return self.n_phi + (m - 1) * self.p * (self.p - 1) + (x - 1) * (self.p - 1) + row


@dataclass(frozen=True)
class FreeParamVector:
    """Packed vector of free parameters plus its layout descriptor."""

    values: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        if self.values.shape != (self.layout.d,):
            raise ValidationError(
                f"free-parameter vector must have length {self.layout.d}, "
                f"got shape {self.values.shape}"
            )

    def __len__(self) -> int:
        return self.layout.d

    @property
    def labels(self) -> list[str]:
        return self.layout.labels()


def pack(theta: ModelParams) -> FreeParamVector:
    """Pack a valid parameter set into the canonical free-parameter vector."""
    require_valid(theta)
    return FreeParamVector(pack_values(theta), theta.layout)


def pack_values(theta: ModelParams) -> np.ndarray:
    """Packing without validation; used inside iterative updates."""
    off = ~np.eye(theta.p, dtype=bool)
    parts = [theta.phi[:, :-1].ravel()]
    parts += [theta.q[m][off] for m in range(theta.M)]
    return np.concatenate(parts) if parts else np.empty(0)


def unpack(vector: FreeParamVector | np.ndarray, alpha: np.ndarray,
           layout: ParamLayout | None = None) -> ModelParams:
    """Rebuild ModelParams from a free-parameter vector.

    The dependent entries are reconstructed: phi[:, M] as the simplex
    complement of the free columns and each Q diagonal as the negative
    off-diagonal row sum.  No validation is performed; callers that may
    hold tentative iterates (line searches, gradient steps) validate
    explicitly.
    """
    if isinstance(vector, FreeParamVector):
        layout = vector.layout
        values = vector.values
    else:
        if layout is None:
            raise ValueError("layout is required when unpacking a bare array")
        values = np.asarray(vector, dtype=float)
    p, M = layout.p, layout.M
    phi = np.empty((p, M))
    phi[:, : M - 1] = values[: layout.n_phi].reshape(p, M - 1)
    phi[:, M - 1] = 1.0 - phi[:, : M - 1].sum(axis=1)
    off = ~np.eye(p, dtype=bool)
    q = np.zeros((M, p, p))
    stride = p * (p - 1)
    for m in range(M):
        block = values[layout.n_phi + m * stride: layout.n_phi + (m + 1) * stride]
        q[m][off] = block
        q[m][np.diag_indices(p)] = -q[m].sum(axis=1)
    return ModelParams(p, M, alpha, phi, q)


@dataclass(frozen=True)
class PathStats:
    """Sufficient statistics of one observed path.

    ``B`` is the 0/1 initial-state indicator, ``N`` the matrix of observed
    transition counts (zero diagonal), ``T`` the occupation time per state
    including the censored final sojourn, and ``horizon`` the observation
    window length, which equals ``T.sum()``.
    """

    B: np.ndarray
    N: np.ndarray
    T: np.ndarray
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "B", _readonly(self.B))
        object.__setattr__(self, "N", _readonly(self.N))
        object.__setattr__(self, "T", _readonly(self.T))

    @property
    def p(self) -> int:
        return self.B.shape[0]


def validate_path_stats(stats: PathStats) -> list[str]:
    """Check PathStats invariants; return a list of violations."""
    v: list[str] = []
    if stats.B.ndim != 1 or stats.N.shape != (stats.p, stats.p) or stats.T.shape != (stats.p,):
        return ["inconsistent array shapes"]
    ones = np.isclose(stats.B, 1.0)
    if not (np.count_nonzero(ones) == 1 and np.all(ones | np.isclose(stats.B, 0.0))):
        v.append("B must have exactly one entry equal to 1 and the rest 0")
    if np.any(stats.N < 0) or np.any(np.diag(stats.N) != 0):
        v.append("N must be nonnegative with zero diagonal")
    if np.any(stats.T < 0):
        v.append("T must be nonnegative")
    if stats.horizon <= 0:
        v.append("horizon must be positive")
    elif abs(stats.T.sum() - stats.horizon) > 1e-12 * max(1.0, stats.horizon):
        v.append(f"T must sum to the horizon, got {stats.T.sum()!r} vs {stats.horizon!r}")
    if np.any((stats.N.sum(axis=1) > 0) & (stats.T <= 0)):
        v.append("a state with outgoing transitions must have positive occupation time")
    return v


class SampleStats:
    """Column-stacked sufficient statistics of a whole sample.

    Bulk container used by the likelihood and information routines so that
    per-path quantities vectorise over the sample.  ``B`` is (n, p), ``N``
    is (n, p, p) and ``T`` is (n, p).
    """

    __slots__ = ("B", "N", "T")

    def __init__(self, B: np.ndarray, N: np.ndarray, T: np.ndarray):
        self.B = _readonly(B)
        self.N = _readonly(N)
        self.T = _readonly(T)
        if self.B.ndim != 2 or self.N.shape != self.B.shape + (self.B.shape[1],) \
                or self.T.shape != self.B.shape:
            raise ValidationError("inconsistent SampleStats shapes")

    @classmethod
    def from_path_stats(cls, sample: Iterable[PathStats]) -> "SampleStats":
        stats = list(sample)
        if not stats:
            raise ValidationError("sample must contain at least one path")
        return cls(
            np.stack([s.B for s in stats]).astype(float),
            np.stack([s.N for s in stats]).astype(float),
            np.stack([s.T for s in stats]).astype(float),
        )

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    def __len__(self) -> int:
        return self.n

    def path(self, k: int) -> PathStats:
        return PathStats(self.B[k], self.N[k], self.T[k], float(self.T[k].sum()))


def as_sample_stats(sample) -> SampleStats:
    """Coerce a SampleStats, a single PathStats, or a sequence of PathStats."""
    if isinstance(sample, SampleStats):
        return sample
    if isinstance(sample, PathStats):
        return SampleStats.from_path_stats([sample])
    return SampleStats.from_path_stats(sample)


# ---------------------------------------------------------------------------
# Parameter files: JSON tree with keys p, M, alpha, phi (rows), Q (list of M
# p-by-p matrices whose diagonal may be omitted as null).


def params_to_dict(theta: ModelParams) -> dict:
    return {
        "p": theta.p,
        "M": theta.M,
        "alpha": theta.alpha.tolist(),
        "phi": theta.phi.tolist(),
        "Q": theta.q.tolist(),
    }


def params_from_dict(tree: dict) -> ModelParams:
    """Build ModelParams from a parsed parameter file.

    Rows of ``alpha`` and ``phi`` are renormalised when they sum to one
    within ``SIMPLEX_TOL``; larger discrepancies are rejected.  Null or
    missing Q diagonals are reconstructed from the off-diagonal row sums.
    """
    try:
        p, M = int(tree["p"]), int(tree["M"])
        alpha = np.array(tree["alpha"], dtype=float).reshape(p)
        phi = np.array(tree["phi"], dtype=float).reshape(p, M)
        q_raw = tree["Q"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed parameter file: {exc}") from None
    if len(q_raw) != M:
        raise ValidationError(f"expected {M} intensity matrices, got {len(q_raw)}")

    if abs(alpha.sum() - 1.0) > SIMPLEX_TOL:
        raise ValidationError(f"alpha sums to {alpha.sum()!r}, outside tolerance")
    alpha = alpha / alpha.sum()
    sums = phi.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL):
        x = int(np.argmax(np.abs(sums - 1.0)))
        raise ValidationError(f"phi row x={x + 1} sums to {sums[x]!r}, outside tolerance")
    phi = phi / sums[:, None]

    q = np.zeros((M, p, p))
    off = ~np.eye(p, dtype=bool)
    for m, rows in enumerate(q_raw):
        qm = np.array([[0.0 if v is None else float(v) for v in row] for row in rows])
        if qm.shape != (p, p):
            raise ValidationError(f"Q[{m + 1}] must be {p}x{p}")
        q[m][off] = qm[off]
        q[m][np.diag_indices(p)] = -(qm * off).sum(axis=1)
    theta = ModelParams(p, M, alpha, phi, q)
    return require_valid(theta)


def load_params(path) -> ModelParams:
    with open(path, "r", encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))


def save_params(theta: ModelParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(theta), fh, indent=2)
        fh.write("\n")
