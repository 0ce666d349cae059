"""Exact dynamic programs for the random-leaf height law and its moments.

Two independent routes are provided and cross-checked by the test suite:

* the full pmf of H_n via P(H_n = h) = sum_i P(I_n = i) P(H_i = h-1);
* moment recurrences, discrete

      mu_n     = 1 + (1/theta(n-1)) sum_k mu_k / (n-k)
      sigma2_n = -1 + (1/theta(n-1)) sum_k (sigma2_k + (mu_n - mu_k)^2) / (n-k)

  and continuous (edge times Exp(theta(size-1)))

      muh_n     = 1/theta(n-1) + sum_k w_k muh_k
      sigma2h_n = 1/theta(n-1)^2 + sum_k w_k (sigma2h_k + muh_k^2)
                  - (muh_n - 1/theta(n-1))^2

  with w_k = 1/((n-k) theta(n-1)).

The naive recurrence route accumulates in extended precision.  The fast
route solves the same recurrences by offline divide-and-conquer (CDQ)
convolution with FFT blocks, O(N log^2 N), and must agree with the naive
route to 1e-9 (enforced by tests).
"""

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import ndtr

from .errors import GuardError, NumericsError
from .splitlaw import _table

# mass below the smallest normal double is sticky rounding noise, not DP
# mass (the minimum subnormal survives division by anything < 2); flush it
_TINY = np.finfo(float).tiny

_PMF_GUARD = 20_000
_MOMENT_GUARD = 200_000
_MOMENT_GUARD_FAST = 2_000_000

# below this size the offline convolutions for the variance recurrences are
# recomputed with exact dot products so small-n table entries stay exact
_EXACT_CONV_UPTO = 1024

_CDQ_BASE = 256


def _pmf_guard():
    return int(os.environ.get("BETASPLIT_PMF_GUARD", _PMF_GUARD))


def _moment_guard(fast):
    default = _MOMENT_GUARD_FAST if fast else _MOMENT_GUARD
    return int(os.environ.get("BETASPLIT_MOMENT_GUARD", default))


@dataclass(frozen=True)
class HeightPMF:
    """Finitely supported law of H_n; probs[h] = P(H_n = h)."""

    n: int
    probs: np.ndarray

    @property
    def h_max(self):
        return len(self.probs) - 1

    def cdf(self):
        return np.cumsum(self.probs)


def _theta_values(N, table):
    tab = _table(table)
    if N > tab.n_exact:
        raise GuardError(
            f"moment/pmf recurrences need exact harmonic values up to {N}; "
            f"table covers {tab.n_exact}"
        )
    return tab.values


def height_pmf_table(N, table=None, max_n=None):
    """Exact pmfs of H_1 .. H_N.  O(N^2 h_max) via per-n BLAS matvecs."""
    N = int(N)
    if N < 1:
        raise ValueError("need N >= 1")
    guard = max_n if max_n is not None else _pmf_guard()
    if N > guard:
        raise GuardError(f"pmf table size {N} exceeds guard {guard}; "
                         "raise BETASPLIT_PMF_GUARD or pass max_n to override")
    out = [HeightPMF(1, np.array([1.0]))]
    if N == 1:
        return out
    theta = _theta_values(N, table)
    cap = 64
    P = np.zeros((N + 1, cap))
    P[1, 0] = 1.0
    width = 1  # columns 0..width-1 may be nonzero
    for n in range(2, N + 1):
        if width + 1 >= cap:
            cap *= 2
            P = np.hstack([P, np.zeros((N + 1, cap - P.shape[1]))])
        w = 1.0 / ((n - np.arange(1, n)) * theta[n - 2])
        v = w @ P[1:n, :width]
        v[v < _TINY] = 0.0
        P[n, 1:1 + width] = v
        nz = np.nonzero(P[n])[0]
        hmax = int(nz[-1])
        width = max(width, hmax + 1)
        out.append(HeightPMF(n, P[n, :hmax + 1].copy()))
    return out


def moments_from_pmf(pmf):
    """(mean, variance) of a HeightPMF."""
    h = np.arange(len(pmf.probs), dtype=float)
    m = float(np.dot(h, pmf.probs))
    v = float(np.dot(h * h, pmf.probs)) - m * m
    return m, max(v, 0.0)


def standardized_cdf_distance(pmf, mu, sigma):
    """sup over support points h of |F_n(h) - Phi((h - mu)/sigma)|."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h = np.arange(len(pmf.probs), dtype=float)
    return float(np.max(np.abs(pmf.cdf() - ndtr((h - mu) / sigma))))


# ----------------------------------------------------------------------
# naive recurrence route (extended-precision accumulation)

def _inv_rev_ld(N):
    """inv_rev such that inv_rev[N-n+1 : N] == [1/(n-1), ..., 1/1] reversed,
    i.e. element for summand k (1 <= k < n) is 1/(n-k), as a contiguous slice."""
    inv = np.zeros(N + 1, dtype=np.longdouble)
    inv[1:] = 1.0 / np.arange(1, N + 1, dtype=np.longdouble)
    return inv[::-1].copy()


def _check_variant(variant):
    if variant not in ("discrete", "continuous"):
        raise ValueError(f"unknown variant {variant!r}")


def _guard_moments(N, fast):
    N = int(N)
    if N < 1:
        raise ValueError("need N >= 1")
    guard = _moment_guard(fast)
    if N > guard:
        raise GuardError(f"moment table size {N} exceeds guard {guard}; "
                         "raise BETASPLIT_MOMENT_GUARD to override")
    return N


def _mean_naive(N, theta, continuous):
    mu = np.zeros(N + 1, dtype=np.longdouble)
    rev = _inv_rev_ld(N)
    for n in range(2, N + 1):
        s = np.dot(mu[1:n], rev[N - n + 1:N])
        th = theta[n - 2]
        mu[n] = (1.0 + s) / th if continuous else 1.0 + s / th
    return mu


def _finalize_var(values, n):
    v = values[n]
    if v < 0.0:
        if v < -1e-12:
            raise NumericsError(f"variance recurrence produced {v} at n={n}")
        values[n] = 0.0


def _variance_naive(N, mu_ld, theta, continuous):
    s2 = np.zeros(N + 1, dtype=np.longdouble)
    rev = _inv_rev_ld(N)
    for n in range(2, N + 1):
        th = np.longdouble(theta[n - 2])
        if continuous:
            s = np.dot(s2[1:n] + mu_ld[1:n] ** 2, rev[N - n + 1:N])
            s2[n] = 1.0 / th**2 + s / th - (mu_ld[n] - 1.0 / th) ** 2
        else:
            d = mu_ld[n] - mu_ld[1:n]
            s = np.dot(s2[1:n] + d * d, rev[N - n + 1:N])
            s2[n] = -1.0 + s / th
        _finalize_var(s2, n)
    return s2


# ----------------------------------------------------------------------
# fast route: online (CDQ) divide-and-conquer convolution

def _online_solve(N, g, finalize):
    """Solve a[n] = finalize(n, S[n]) with S[n] = sum_{k<n} a[k] g[n-k], a[1] = 0."""
    a = np.zeros(N + 1)
    S = np.zeros(N + 1)

    def solve(l, r):
        if r - l + 1 <= _CDQ_BASE:
            for n in range(l, r + 1):
                s = S[n]
                if n > l:
                    s += float(np.dot(a[l:n], g[n - l:0:-1]))
                if n > 1:
                    a[n] = finalize(n, s)
            return
        m = (l + r) // 2
        solve(l, m)
        seg = fftconvolve(a[l:m + 1], g[1:r - l + 1])
        S[m + 1:r + 1] += seg[m - l:r - l]
        solve(m + 1, r)

    solve(1, N)
    return a


def _offline_conv(seq_full, g, N):
    """conv[n] = sum_{k<n} seq[k] g[n-k] for n <= N, exact dots at small n."""
    out = fftconvolve(seq_full, g)[:N + 1]
    upto = min(N, _EXACT_CONV_UPTO)
    for n in range(1, upto + 1):
        out[n] = float(np.dot(seq_full[1:n], g[n - 1:0:-1]))
    return out


def _mean_fast(N, theta, continuous):
    g = np.zeros(N + 1)
    g[1:] = 1.0 / np.arange(1, N + 1)
    if continuous:
        fin = lambda n, s: (1.0 + s) / theta[n - 2]
    else:
        fin = lambda n, s: 1.0 + s / theta[n - 2]
    return _online_solve(N, g, fin), g


def _variance_fast(N, mu_full, g, theta, continuous):
    Sc = _offline_conv(mu_full, g, N)
    Tc = _offline_conv(mu_full**2, g, N)

    if continuous:
        def fin(n, v):
            th = theta[n - 2]
            return 1.0 / th**2 + (v + Tc[n]) / th - (Sc[n] / th) ** 2
    else:
        def fin(n, v):
            th = theta[n - 2]
            return -1.0 + mu_full[n] ** 2 + (v - 2.0 * mu_full[n] * Sc[n] + Tc[n]) / th

    s2 = _online_solve(N, g, fin)
    for n in range(2, N + 1):
        _finalize_var(s2, n)
    return s2


# ----------------------------------------------------------------------
# public table builders

def mean_table(N, variant="discrete", fast=False, table=None):
    """mu_1..mu_N (discrete) or muh_1..muh_N (continuous), as a length-N array."""
    _check_variant(variant)
    N = _guard_moments(N, fast)
    theta = _theta_values(N, table)
    continuous = variant == "continuous"
    if fast:
        mu, _ = _mean_fast(N, theta, continuous)
        return mu[1:].copy()
    return _mean_naive(N, theta, continuous)[1:].astype(float)


def variance_table(N, mu, variant="discrete", fast=False, table=None):
    """Variance companion to ``mean_table``; ``mu`` must be its output."""
    _check_variant(variant)
    N = _guard_moments(N, fast)
    if len(mu) < N:
        raise ValueError("mu table shorter than N")
    theta = _theta_values(N, table)
    continuous = variant == "continuous"
    mu_full = np.zeros(N + 1)
    mu_full[1:] = mu[:N]
    if fast:
        g = np.zeros(N + 1)
        g[1:] = 1.0 / np.arange(1, N + 1)
        return _variance_fast(N, mu_full, g, theta, continuous)[1:].copy()
    return _variance_naive(N, mu_full.astype(np.longdouble), theta, continuous)[1:].astype(float)


def moment_tables(N, variant="discrete", fast=False, table=None):
    """(mu, sigma2) arrays for n = 1..N in one call."""
    mu = mean_table(N, variant, fast, table)
    s2 = variance_table(N, mu, variant, fast, table)
    return mu, s2


def cont_mean_table(N, fast=False, table=None):
    return mean_table(N, "continuous", fast, table)


def cont_variance_table(N, mu_hat, fast=False, table=None):
    return variance_table(N, mu_hat, "continuous", fast, table)


# ----------------------------------------------------------------------
# CSV export

def write_moments_csv(fileobj, mu, sigma2, variant="discrete"):
    _check_variant(variant)
    w = csv.writer(fileobj, lineterminator="\n")
    if variant == "discrete":
        w.writerow(["n", "mu", "sigma2"])
    else:
        w.writerow(["n", "mu_hat", "sigma2_hat"])
    for n, (m, s) in enumerate(zip(mu, sigma2), start=1):
        w.writerow([n, repr(float(m)), repr(float(s))])


def write_pmf_csv(fileobj, pmf):
    w = csv.writer(fileobj, lineterminator="\n")
    w.writerow(["h", "prob"])
    for h, p in enumerate(pmf.probs):
        w.writerow([h, repr(float(p))])
