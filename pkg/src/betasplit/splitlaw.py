"""Harmonic sums, the interval split law, and the random-leaf descent law.

The tree on {1,...,n} splits between i and i+1 with probability

    p(n, i) = n / (2 * theta(n-1) * i * (n-i)),        1 <= i <= n-1,

where theta(n) = 1 + 1/2 + ... + 1/n.  The sub-block containing a uniformly
random leaf after one split has size I_n with

    P(I_n = i) = 1 / ((n-i) * theta(n-1)).

Everything here is exact double-precision arithmetic on a shared harmonic
table; samplers draw from an externally supplied numpy Generator.
"""

import math
from bisect import bisect_right

import numpy as np

EULER_GAMMA = 0.5772156649015328606065120900824024

DEFAULT_N_EXACT = 10**7

# longdouble prefix sums are accumulated in blocks of this size so peak
# memory stays near one block instead of 16 bytes per table entry
_BLOCK = 1 << 20


def _exact_harmonic_values(n_exact):
    """theta(1..n_exact) as float64, each entry correctly rounded.

    Blockwise longdouble accumulation keeps the absolute error below
    ~1e-14 even at n = 1e7, where a plain float64 running sum drifts
    past 1e-12.
    """
    out = np.empty(n_exact, dtype=np.float64)
    carry = np.longdouble(0.0)
    for start in range(0, n_exact, _BLOCK):
        stop = min(start + _BLOCK, n_exact)
        block = 1.0 / np.arange(start + 1, stop + 1, dtype=np.longdouble)
        np.cumsum(block, out=block)
        block += carry
        carry = block[-1]
        out[start:stop] = block.astype(np.float64)
    return out


class HarmonicTable:
    """Exact harmonic sums theta(1..n_exact) plus an asymptotic tail.

    Beyond the exact range, theta(n) is evaluated as

        log n + gamma + 1/(2n) - 1/(12 n^2)

    whose truncation error is below 1e-28 for n > 1e6.  Instances are
    immutable after construction and safe to share across threads.
    """

    def __init__(self, n_exact=DEFAULT_N_EXACT):
        if n_exact < 1:
            raise ValueError("n_exact must be >= 1")
        self.n_exact = int(n_exact)
        self.values = _exact_harmonic_values(self.n_exact)
        self.values.flags.writeable = False

    def value(self, n):
        """theta(n) for a scalar n >= 0, with theta(0) = 0."""
        if n < 0:
            raise ValueError("harmonic sum undefined for negative n")
        if n == 0:
            return 0.0
        if n <= self.n_exact:
            return float(self.values[n - 1])
        return self.asymptotic(n)

    @staticmethod
    def asymptotic(n):
        n = float(n)
        return math.log(n) + EULER_GAMMA + 1.0 / (2.0 * n) - 1.0 / (12.0 * n * n)

    def __len__(self):
        return self.n_exact


_default_table = None


def default_table():
    """Shared lazily-built table covering n <= 1e7 (~80 MB)."""
    global _default_table
    if _default_table is None:
        _default_table = HarmonicTable(DEFAULT_N_EXACT)
    return _default_table


def _table(table):
    return table if table is not None else default_table()


def harmonic(n, table=None):
    """theta(n) = sum_{i<=n} 1/i; exact below the table cutoff, asymptotic above."""
    return _table(table).value(n)


def _check_split_args(n, i):
    n = int(n)
    if n < 2:
        raise ValueError("need n >= 2")
    i = np.asarray(i)
    if np.any(i < 1) or np.any(i > n - 1):
        raise ValueError(f"split index out of range 1..{n - 1}")
    return n, i


def split_prob(n, i, table=None):
    """p(n, i) = n / (2 theta(n-1) i (n-i)); accepts a scalar or array i."""
    n, i = _check_split_args(n, i)
    theta = harmonic(n - 1, table)
    out = n / (2.0 * theta * (i * (n - i)))
    return float(out) if out.ndim == 0 else out


def leaf_step_prob(n, i, table=None):
    """P(I_n = i) = 1 / ((n-i) theta(n-1)); accepts a scalar or array i."""
    n, i = _check_split_args(n, i)
    theta = harmonic(n - 1, table)
    out = 1.0 / ((n - i) * theta)
    return float(out) if out.ndim == 0 else out


def leaf_step_cdf(n, i, table=None):
    """P(I_n <= i) = (theta(n-1) - theta(n-1-i)) / theta(n-1), with theta(0) = 0."""
    n, i = _check_split_args(n, i)
    tab = _table(table)
    theta = tab.value(n - 1)
    if i.ndim == 0:
        return (theta - tab.value(n - 1 - int(i))) / theta
    rest = np.array([tab.value(n - 1 - int(j)) for j in i.ravel()])
    return ((theta - rest) / theta).reshape(i.shape)


def _largest_below(tab, hi, target):
    """Largest m in [0, hi] with theta(m) <= target (binary search)."""
    if hi <= tab.n_exact:
        return int(bisect_right(tab.values, target, 0, hi))
    lo, up = 0, hi
    while lo < up:
        mid = (lo + up + 1) // 2
        if tab.value(mid) <= target:
            lo = mid
        else:
            up = mid - 1
    return lo


def _smallest_at_least(tab, hi, target):
    """Smallest j in [1, hi] with theta(j) >= target."""
    if hi <= tab.n_exact:
        j = int(np.searchsorted(tab.values[:hi], target, side="left")) + 1
        return min(j, hi)
    lo, up = 1, hi
    while lo < up:
        mid = (lo + up) // 2
        if tab.value(mid) >= target:
            up = mid
        else:
            lo = mid + 1
    return lo


def sample_leaf_step(n, rng, size=None, table=None):
    """Draw from I_n by inverse CDF: the smallest i with CDF(i) >= u.

    Equivalent threshold form: i = n-1-m where m is the largest index with
    theta(m) <= (1-u) theta(n-1).  O(log n) per draw, usable at n = 1e9.
    """
    n = int(n)
    if n < 2:
        raise ValueError("need n >= 2")
    tab = _table(table)
    theta = tab.value(n - 1)
    if size is None:
        u = rng.random()
        m = _largest_below(tab, n - 2, (1.0 - u) * theta)
        return n - 1 - m
    u = rng.random(size)
    if n - 2 <= tab.n_exact:
        m = np.searchsorted(tab.values[: n - 2], (1.0 - u) * theta, side="right")
        return n - 1 - m
    return np.array([n - 1 - _largest_below(tab, n - 2, (1.0 - v) * theta) for v in (1.0 - u)])


def sample_split(n, rng, size=None, table=None):
    """Draw a split index from p(n, .).

    Uses the exact mixture p(n,i) = (1/2)(1/i)/theta(n-1) + (1/2)(1/(n-i))/theta(n-1)
    (from n/(i(n-i)) = 1/i + 1/(n-i)): flip a fair coin, draw J with
    P(J = j) proportional to 1/j by inverse CDF on harmonic values, and
    return J or n-J.
    """
    n = int(n)
    if n < 2:
        raise ValueError("need n >= 2")
    tab = _table(table)
    theta = tab.value(n - 1)
    if size is None:
        u = rng.random()
        j = _smallest_at_least(tab, n - 1, rng.random() * theta)
        return j if u < 0.5 else n - j
    coin = rng.random(size) < 0.5
    u = rng.random(size)
    if n - 1 <= tab.n_exact:
        j = np.searchsorted(tab.values[: n - 1], u * theta, side="left") + 1
        j = np.minimum(j, n - 1)
    else:
        j = np.array([_smallest_at_least(tab, n - 1, v * theta) for v in u])
    return np.where(coin, j, n - j)


class SplitLaw:
    """The split distribution p(n, .) of a size-n block."""

    def __init__(self, n, table=None):
        if n < 2:
            raise ValueError("need n >= 2")
        self.n = int(n)
        self.table = _table(table)
        self.normalizer = 1.0 / (2.0 * self.table.value(self.n - 1))

    @property
    def support(self):
        return np.arange(1, self.n)

    def prob(self, i):
        return split_prob(self.n, i, self.table)

    def sample(self, rng, size=None):
        return sample_split(self.n, rng, size, self.table)


class LeafStepLaw:
    """The descent law I_n of the sub-block holding a random leaf."""

    def __init__(self, n, table=None):
        if n < 2:
            raise ValueError("need n >= 2")
        self.n = int(n)
        self.table = _table(table)

    @property
    def support(self):
        return np.arange(1, self.n)

    def prob(self, i):
        return leaf_step_prob(self.n, i, self.table)

    def cdf(self, i):
        return leaf_step_cdf(self.n, i, self.table)

    def sample(self, rng, size=None):
        return sample_leaf_step(self.n, rng, size, self.table)
