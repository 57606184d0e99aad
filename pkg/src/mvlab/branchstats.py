"""Branch trees over repeated measurements and exact frequency statistics.

Over N independent two-outcome measurements the state splits into all 2^N
outcome sequences, the sequence with r aligned outcomes carrying weight
p^r * q^(N-r). The closed-form side of every statistic here is computed in
exact rational arithmetic by differentiating the binomial generating
function (p+q)^N termwise with the operator p*d/dp and setting p+q = 1 at
the end; floats appear only at the boundary. The frequency f = r/N then has
mean exactly p and central moments falling at least as fast as 1/N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import CapacityError, DomainError

ENUMERATION_CAP = 20
_EXACT_COMB_LIMIT = 400  # beyond this the binomial coefficient leaves float range


def _check_probability(p: float) -> float:
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"p must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True)
class BranchSequence:
    """One outcome sequence; True marks an aligned (axis-parallel) outcome."""

    outcomes: tuple[bool, ...]

    def __post_init__(self):
        if len(self.outcomes) < 1:
            raise DomainError("a branch sequence needs at least one outcome")
        object.__setattr__(self, "outcomes", tuple(bool(o) for o in self.outcomes))

    @property
    def n(self) -> int:
        return len(self.outcomes)

    @property
    def aligned_count(self) -> int:
        return sum(self.outcomes)

    @property
    def frequency(self) -> float:
        return self.aligned_count / self.n

    @property
    def bits(self) -> str:
        """'1'/'0' string, first measurement leftmost."""
        return "".join("1" if o else "0" for o in self.outcomes)


def sequence_weight(s: BranchSequence, p: float) -> float:
    """Weight p^r * (1-p)^(N-r) of one outcome sequence."""
    p = _check_probability(p)
    r = s.aligned_count
    return p**r * (1.0 - p) ** (s.n - r)


def _popcounts(n: int) -> np.ndarray:
    """Aligned counts for all bitmasks 0 .. 2^n - 1, by doubling."""
    counts = np.zeros(1, dtype=np.int64)
    for _ in range(n):
        counts = np.concatenate([counts, counts + 1])
    return counts


@dataclass(frozen=True, eq=False)
class BranchTree:
    """All 2^N outcome sequences with their weights.

    weights[k] belongs to the sequence whose i-th outcome is bit i of k
    (so bit 0 is the first measurement). Every sequence occurs exactly once
    and the weights sum to one: the tree is the complete post-measurement
    state, not a sample from it.
    """

    N: int
    p: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != (2**self.N,):
            raise DomainError(f"need exactly 2^{self.N} weights, got shape {w.shape}")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise DomainError(f"branch weights must sum to 1, got {w.sum()}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def sequence(self, k: int) -> BranchSequence:
        return BranchSequence(tuple(bool((k >> i) & 1) for i in range(self.N)))

    def entries(self):
        for k in range(2**self.N):
            yield self.sequence(k), float(self.weights[k])

    def aligned_counts(self) -> np.ndarray:
        return _popcounts(self.N)

    def prob_aligned_count(self, r: int) -> float:
        if not (0 <= r <= self.N):
            raise DomainError(f"r must lie in [0, {self.N}], got {r}")
        return float(self.weights[self.aligned_counts() == r].sum())

    def frequency_mean(self) -> float:
        """Brute-force weighted mean of f = r/N over all branches."""
        f = self.aligned_counts() / self.N
        return float(np.sum(self.weights * f))

    def frequency_central_moment(self, m: int) -> float:
        """Brute-force weighted mean of (f - p)^m over all branches."""
        if m < 0:
            raise DomainError(f"moment order must be nonnegative, got {m}")
        f = self.aligned_counts() / self.N
        return float(np.sum(self.weights * (f - self.p) ** m))


def enumerate_branch_tree(N: int, p: float) -> BranchTree:
    """Materialize all 2^N branches; capped at N = 20."""
    p = _check_probability(p)
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if N > ENUMERATION_CAP:
        raise CapacityError(
            f"N={N} exceeds the enumeration cap {ENUMERATION_CAP}; use the closed-form "
            "operations (prob_r_given_N, expected_frequency, central_moment) instead"
        )
    r = _popcounts(N)
    weights = np.power(p, r) * np.power(1.0 - p, N - r)
    return BranchTree(N, p, weights)


def prob_r_given_N(r: int, N: int, p: float) -> float:
    """C(N,r) * p^r * q^(N-r), overflow-safe for large N via log-gamma."""
    p = _check_probability(p)
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if not (0 <= r <= N):
        raise DomainError(f"r must lie in [0, {N}], got {r}")
    if p == 0.0:
        return 1.0 if r == 0 else 0.0
    if p == 1.0:
        return 1.0 if r == N else 0.0
    q = 1.0 - p
    if N <= _EXACT_COMB_LIMIT:
        return float(math.comb(N, r)) * p**r * q ** (N - r)
    log_prob = (
        math.lgamma(N + 1)
        - math.lgamma(r + 1)
        - math.lgamma(N - r + 1)
        + r * math.log(p)
        + (N - r) * math.log(q)
    )
    return math.exp(log_prob)


def _raw_moments(m_max: int, N: int, p: Fraction) -> list[Fraction]:
    """Exact <r^j> for j = 0..m_max via the generating-function operator.

    Each term C(N,k) p^k q^(N-k) of (p+q)^N is an eigenvector of p*d/dp with
    eigenvalue k, so applying the operator j times multiplies it by k^j;
    evaluating with q = 1 - p realizes 'set p + q = 1 at the end'.
    """
    q = 1 - p
    totals = [Fraction(0) for _ in range(m_max + 1)]
    p_pow = Fraction(1)
    q_pow = q**N
    q_is_zero = q == 0
    for k in range(N + 1):
        term = math.comb(N, k) * p_pow * q_pow
        k_pow = Fraction(1)
        for j in range(m_max + 1):
            totals[j] += term * k_pow
            k_pow *= k
        p_pow *= p
        if q_is_zero:
            q_pow = Fraction(1) if k == N - 1 else Fraction(0)
        else:
            q_pow /= q
    return totals


def central_moment_exact(m: int, N: int, p) -> Fraction:
    """<(r/N - p)^m> as an exact rational number.

    Expands the centered power binomially over the exact raw moments; the
    float boundary is the caller's problem. Floats passed for p are used at
    their exact binary value.
    """
    if m < 0:
        raise DomainError(f"moment order must be nonnegative, got {m}")
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    pf = Fraction(p)
    if not (0 <= pf <= 1):
        raise DomainError(f"p must lie in [0, 1], got {p}")
    raw = _raw_moments(m, N, pf)
    total = Fraction(0)
    for j in range(m + 1):
        total += math.comb(m, j) * raw[j] / Fraction(N) ** j * (-pf) ** (m - j)
    return total


def central_moment(m: int, N: int, p: float) -> float:
    """<(r/N - p)^m>, exact rational arithmetic converted to float at the end.

    m = 1 is exactly zero and m = 2 is exactly p*q/N.
    """
    return float(central_moment_exact(m, N, p))


def expected_frequency(N: int, p: float) -> float:
    """<f> = <r>/N, which the generating-function identity collapses to p."""
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    pf = Fraction(_check_probability(p))
    return float(_raw_moments(1, N, pf)[1] / N)


@dataclass(frozen=True)
class FrequencyMoments:
    """Central moments of f = r/N, exact values held as floats."""

    N: int
    p: float
    moments: dict

    def __post_init__(self):
        if self.moments.get(0, 1.0) != 1.0:
            raise DomainError("moment of order 0 must be 1")
        if self.moments.get(1, 0.0) != 0.0:
            raise DomainError("moment of order 1 must be 0")


def frequency_moments(N: int, p: float, m_max: int) -> FrequencyMoments:
    """Bundle central moments of orders 0..m_max."""
    if m_max < 0:
        raise DomainError(f"m_max must be nonnegative, got {m_max}")
    moments = {m: central_moment(m, N, p) for m in range(m_max + 1)}
    return FrequencyMoments(N, float(p), moments)


@dataclass(frozen=True)
class MomentScalingEntry:
    order: int
    N: int
    value: float
    bound: float
    ok: bool


@dataclass(frozen=True)
class MomentScalingReport:
    """Verdict on |<(f-p)^m>| <= C_m / N with C_m fitted at the smallest N.

    The 1/N envelope is an upper bound, not an asymptotic equality: exact
    odd moments decay faster (the third goes as 1/N^2). The comparisons are
    done in exact rational arithmetic, so 'ok' carries no rounding slack.
    """

    p: float
    N_values: tuple
    m_max: int
    entries: tuple
    constants: dict

    @property
    def satisfied(self) -> bool:
        return all(e.ok for e in self.entries)


def moment_scaling_report(m_max: int, N_values, p: float) -> MomentScalingReport:
    """Check the 1/N decay bound for every moment order 2..m_max."""
    if m_max < 2:
        raise DomainError(f"m_max must be >= 2, got {m_max}")
    ns = [int(n) for n in N_values]
    if len(ns) < 2 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("N_values must be an increasing sequence of length >= 2")
    p = _check_probability(p)
    entries = []
    constants = {}
    for m in range(2, m_max + 1):
        base = abs(central_moment_exact(m, ns[0], p))
        c_m = base * ns[0]
        constants[m] = float(c_m)
        for n in ns:
            value = central_moment_exact(m, n, p)
            bound = c_m / n
            entries.append(
                MomentScalingEntry(m, n, float(value), float(bound), abs(value) <= bound)
            )
    return MomentScalingReport(p, tuple(ns), m_max, tuple(entries), constants)


def sample_observer_branch(N: int, p: float, seed: int):
    """One observer's branch: N independent draws from a counter-based generator.

    Uses numpy's Philox bit generator keyed by the seed, so identical seeds
    give identical sequences. Returns (BranchSequence, empirical frequency).
    """
    p = _check_probability(p)
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.random(N)
    outcomes = tuple(bool(d < p) for d in draws)
    seq = BranchSequence(outcomes)
    return seq, seq.aligned_count / N


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    f: float
    abs_err: float
    envelope: float
    variance: float


def convergence_demo(N_values, p: float, seed: int) -> list[ConvergenceRow]:
    """Sampled |f - p| against the exact 3*sqrt(pq/N) envelope, per N."""
    p = _check_probability(p)
    ns = [int(n) for n in N_values]
    if len(ns) < 1 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("N_values must be an increasing sequence")
    q = 1.0 - p
    rows = []
    for n in ns:
        _, f = sample_observer_branch(n, p, seed)
        variance = p * q / n
        rows.append(ConvergenceRow(n, f, abs(f - p), 3.0 * math.sqrt(variance), variance))
    return rows


def _fmt(value: float) -> str:
    return repr(float(value))


def branch_tree_to_csv(tree: BranchTree, path) -> None:
    """Write columns sequence_bits,r,weight with LF line endings."""
    counts = tree.aligned_counts()
    with open(path, "w", newline="\n") as fh:
        fh.write("sequence_bits,r,weight\n")
        for k in range(2**tree.N):
            fh.write(f"{tree.sequence(k).bits},{counts[k]},{_fmt(tree.weights[k])}\n")


def convergence_to_csv(rows: list[ConvergenceRow], path) -> None:
    """Write columns N,f,abs_err,envelope,variance with LF line endings."""
    with open(path, "w", newline="\n") as fh:
        fh.write("N,f,abs_err,envelope,variance\n")
        for row in rows:
            fh.write(
                f"{row.N},{_fmt(row.f)},{_fmt(row.abs_err)},"
                f"{_fmt(row.envelope)},{_fmt(row.variance)}\n"
            )
