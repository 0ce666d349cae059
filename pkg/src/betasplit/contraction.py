"""Exact normalized contraction quantities and their decay verification.

For the discrete height recurrence, with ell_n = log n (+1 at n=1),

    b_n   = (1 - mu_n + mu_{I_n}) / (sqrt(A*) ell_n^{3/2})
    tau_n = sigma_n / (sqrt(A*) ell_n^{3/2})
    G_n   = sigma_{I_n} / (sqrt(A*) ell_n^{3/2})

the distance to normality is controlled (up to constants) by the expected
value of

    |b|^3 + |tau-1|^3 + |G-1|^3 + |b (tau-1)| + |b (G-1)| + |tau^2 - G^2|^{3/2}

which decays like log^{-5/2} n.  All six expectations are computed exactly
as finite sums over the descent law (never Monte Carlo).  The continuous
variant replaces 1 by an Exp(theta(n-1)) holding time inside b (its
absolute moments are integrated in closed form), and normalizes by
sqrt(Ah*) ell_n^{1/2}.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .asymptotics import no_growth_verdict
from .exact_engine import moment_tables
from .splitlaw import _table

CONTRACTION_GRID = tuple(2**k for k in range(8, 16))

TERM_NAMES = ("E|b|^3", "|tau-1|^3", "E|G-1|^3",
              "E|b(tau-1)|", "E|b(G-1)|", "E|tau^2-G^2|^1.5")


def ell(n):
    """log n, except ell(1) = 1 so the normalizer never vanishes."""
    return math.log(n) + (1.0 if n == 1 else 0.0)


def two_term_variance_model(N, constants):
    """sigma2 modeled with the leading term only: A* log^3 n for n = 1..N."""
    L = np.log(np.arange(1, N + 1, dtype=float))
    return constants.A_star * L**3


def _exp_abs_moment1(c, lam):
    """E|t - c| for t ~ Exp(lam), c >= 0."""
    return c - 1.0 / lam + 2.0 * np.exp(-lam * c) / lam


def _exp_abs_moment3(c, lam):
    """E|t - c|^3 for t ~ Exp(lam), c >= 0 (piecewise integration)."""
    il = 1.0 / lam
    return c**3 - 3 * c**2 * il + 6 * c * il**2 - 6 * il**3 + 12 * np.exp(-lam * c) * il**3


@dataclass(frozen=True)
class ContractionDiagnostics:
    n: int
    variant: str
    terms: np.ndarray
    total: float
    scaled: float


def diagnostics(n, mu, sigma2, constants, variant="discrete",
                table=None, subtree_sigma2=None):
    """All six expectations at a single n, summed exactly over the descent law.

    ``mu`` and ``sigma2`` are the moment tables of the matching variant and
    must cover 1..n.  ``subtree_sigma2`` optionally replaces the variance
    table used for the subtree factor G (for model-sensitivity checks);
    tau always uses the exact table.
    """
    n = int(n)
    if n < 2:
        raise ValueError("need n >= 2")
    if len(mu) < n or len(sigma2) < n:
        raise ValueError("moment tables must cover 1..n")
    sub = sigma2 if subtree_sigma2 is None else subtree_sigma2
    if len(sub) < n - 1:
        raise ValueError("subtree variance table must cover 1..n-1")

    theta = _table(table).value(n - 1)
    i = np.arange(1, n)
    w = 1.0 / ((n - i) * theta)
    if variant == "discrete":
        den = math.sqrt(constants.A_star) * ell(n)**1.5
    elif variant == "continuous":
        den = math.sqrt(constants.A_hat_star) * ell(n)**0.5
    else:
        raise ValueError(f"unknown variant {variant!r}")

    mu = np.asarray(mu, dtype=float)
    sig_n = math.sqrt(max(float(sigma2[n - 1]), 0.0))
    sig_i = np.sqrt(np.maximum(np.asarray(sub, dtype=float)[:n - 1], 0.0))
    tau = sig_n / den
    G = sig_i / den

    if variant == "discrete":
        b = (1.0 - mu[n - 1] + mu[:n - 1]) / den
        ab = np.abs(b)
        t1 = float(np.dot(w, ab**3))
        t4 = abs(tau - 1.0) * float(np.dot(w, ab))
        t5 = float(np.dot(w, ab * np.abs(G - 1.0)))
    else:
        # b = (t - c_i)/den with t ~ Exp(theta(n-1)) independent of I_n
        c = np.maximum(mu[n - 1] - mu[:n - 1], 0.0)
        e1 = _exp_abs_moment1(c, theta)
        t1 = float(np.dot(w, _exp_abs_moment3(c, theta))) / den**3
        t4 = abs(tau - 1.0) * float(np.dot(w, e1)) / den
        t5 = float(np.dot(w, e1 * np.abs(G - 1.0))) / den

    t2 = abs(tau - 1.0)**3
    t3 = float(np.dot(w, np.abs(G - 1.0)**3))
    t6 = float(np.dot(w, np.abs(tau**2 - G**2)**1.5))

    terms = np.array([t1, t2, t3, t4, t5, t6])
    total = float(terms.sum())
    return ContractionDiagnostics(n, variant, terms, total,
                                  total * math.log(n)**2.5)


@dataclass(frozen=True)
class DecayCheck:
    variant: str
    grid: np.ndarray
    diagnostics: tuple
    totals: np.ndarray
    scaled: np.ndarray
    verdict: str
    max_scaled_lower: float
    max_scaled_upper: float

    @property
    def bounded(self):
        return self.verdict == "bounded"


def decay_check(grid=CONTRACTION_GRID, variant="discrete", mu=None, sigma2=None,
                constants=None, table=None, subtree_sigma2=None):
    """Factor-2 boundedness of total * log^{5/2} n over a dyadic grid.

    Builds fast-mode moment tables up to max(grid) when none are supplied.
    """
    grid = np.asarray(sorted(int(n) for n in grid))
    if grid.size == 0:
        raise ValueError("empty grid")
    if constants is None:
        from .asymptotics import compute_constants
        constants = compute_constants()
    if mu is None or sigma2 is None:
        mu, sigma2 = moment_tables(int(grid[-1]), variant, fast=True, table=table)
    diags = tuple(diagnostics(int(n), mu, sigma2, constants, variant, table,
                              subtree_sigma2) for n in grid)
    totals = np.array([d.total for d in diags])
    scaled = np.array([d.scaled for d in diags])
    verdict, lo, hi = no_growth_verdict(scaled)
    return DecayCheck(variant, grid, diags, totals, scaled, verdict, lo, hi)


def write_diagnostics_csv(fileobj, diags):
    w = csv.writer(fileobj, lineterminator="\n")
    w.writerow(["n", "term1", "term2", "term3", "term4", "term5", "term6",
                "total", "scaled"])
    for d in diags:
        w.writerow([d.n] + [repr(float(t)) for t in d.terms]
                   + [repr(d.total), repr(d.scaled)])
