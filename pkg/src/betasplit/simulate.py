"""Monte Carlo engine: tree sampling, leaf-path sampling, streaming stats.

Reproducibility contract: every experiment derives one Philox stream per
repetition from (seed, rep index), so results are independent of worker
count and chunking.  Each descent step consumes exactly two uniforms (split
position, holding time) in every variant; the discrete height and the
continuous time-height of one repetition therefore share a single size
chain and can be read off jointly.
"""

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtr

from .errors import GuardError
from .splitlaw import _table, sample_split

DEFAULT_SEED = 1729

_CHUNK = 4096
_BUF_STEPS = 128
_KS_CAP = 10**6
_TREE_GUARD = 1_000_000


def _tree_guard():
    return int(os.environ.get("BETASPLIT_TREE_GUARD", _TREE_GUARD))


def derive_rng(seed, index):
    """Independent per-repetition stream keyed by (seed, index)."""
    key = np.array([seed, index], dtype=np.uint64)
    return Generator(Philox(key=key))


def _exp_draw(u, rate):
    """Inverse-transform exponential from a uniform u in [0, 1)."""
    return -np.log1p(-u) / rate


# ----------------------------------------------------------------------
# full-tree sampling

class TreeNode:
    """Interval node; internal nodes carry the split index and, in the
    continuous variant, the holding time paid on both child edges."""

    __slots__ = ("lo", "hi", "split", "left", "right", "hold")

    def __init__(self, lo, hi):
        self.lo = lo
        self.hi = hi
        self.split = None
        self.left = None
        self.right = None
        self.hold = None

    @property
    def size(self):
        return self.hi - self.lo + 1

    def is_leaf(self):
        return self.lo == self.hi


@dataclass
class SampledTree:
    root: TreeNode
    n: int
    variant: str

    def leaves(self):
        """Yield (node, edge_depth, time_depth) over all leaves."""
        stack = [(self.root, 0, 0.0)]
        while stack:
            node, d, t = stack.pop()
            if node.is_leaf():
                yield node, d, t
            else:
                step = node.hold if self.variant == "continuous" else 1.0
                stack.append((node.right, d + 1, t + step))
                stack.append((node.left, d + 1, t + step))

    def leaf_depths(self):
        """(labels, edge_depths, time_depths) arrays ordered by label."""
        labels, depths, times = [], [], []
        for node, d, t in self.leaves():
            labels.append(node.lo)
            depths.append(d)
            times.append(t)
        order = np.argsort(labels)
        return (np.asarray(labels)[order], np.asarray(depths)[order],
                np.asarray(times)[order])

    def validate(self):
        """Structural invariants: leaf/internal counts and interval partitions."""
        leaves = internal = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf():
                leaves += 1
                continue
            internal += 1
            l, r = node.left, node.right
            if l is None or r is None:
                raise AssertionError("internal node missing a child")
            cut = node.lo + node.split - 1
            if not (l.lo == node.lo and l.hi == cut and r.lo == cut + 1 and r.hi == node.hi):
                raise AssertionError(f"children do not partition [{node.lo},{node.hi}] at {node.split}")
            if self.variant == "continuous" and not node.hold > 0:
                raise AssertionError("internal node missing holding time")
            stack.append(l)
            stack.append(r)
        if leaves != self.n or internal != self.n - 1:
            raise AssertionError(f"counts {leaves}/{internal} != {self.n}/{self.n - 1}")
        return True

    def newick(self):
        return newick_export(self)


def sample_tree(n, variant="discrete", rng=None, table=None, max_n=None):
    """Sample the full splitting tree on {1..n}.

    Per internal node the stream is consumed as: holding time (continuous
    only), then the two split uniforms.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need n >= 1")
    guard = max_n if max_n is not None else _tree_guard()
    if n > guard:
        raise GuardError(f"tree size {n} exceeds guard {guard}; "
                         "raise BETASPLIT_TREE_GUARD or pass max_n to override")
    if rng is None:
        raise ValueError("sample_tree requires an explicit numpy Generator")
    tab = _table(table)
    root = TreeNode(1, n)
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_leaf():
            continue
        size = node.size
        if variant == "continuous":
            node.hold = float(_exp_draw(rng.random(), tab.value(size - 1)))
        i = int(sample_split(size, rng, table=tab))
        node.split = i
        cut = node.lo + i - 1
        node.left = TreeNode(node.lo, cut)
        node.right = TreeNode(cut + 1, node.hi)
        stack.append(node.right)
        stack.append(node.left)
    return SampledTree(root, n, variant)


def newick_export(tree):
    """Newick text; branch lengths are 1 (discrete) or the parent's holding
    time (continuous), root carries none."""
    continuous = tree.variant == "continuous"

    def blen(parent):
        if continuous:
            return format(parent.hold, ".12g")
        return "1"

    # iterative postorder; parts[id(node)] holds the rendered subtree
    parts = {}
    stack = [(tree.root, False)]
    while stack:
        node, done = stack.pop()
        if node.is_leaf():
            parts[id(node)] = str(node.lo)
            continue
        if not done:
            stack.append((node, True))
            stack.append((node.right, False))
            stack.append((node.left, False))
        else:
            l = parts.pop(id(node.left))
            r = parts.pop(id(node.right))
            b = blen(node)
            parts[id(node)] = f"({l}:{b},{r}:{b})"
    return parts[id(tree.root)] + ";"


# ----------------------------------------------------------------------
# leaf-path sampling

@dataclass(frozen=True)
class LeafPathSample:
    height: int
    time_height: float
    chain: list | None = None


def sample_leaf_height(n, variant="discrete", rng=None, table=None, keep_chain=False):
    """Descend the size chain n = s0 > s1 > ... > 1, counting steps and
    accumulating Exp(theta(s-1)) holding times.  O(log^2 n) steps of
    O(log n) binary-search cost each, usable at n = 1e9."""
    if variant not in ("discrete", "continuous"):
        raise ValueError(f"unknown variant {variant!r}")
    return joint_sample(n, rng, table=table, keep_chain=keep_chain)


def joint_sample(n, rng, table=None, keep_chain=False):
    """One chain, both accumulators (height, time-height)."""
    n = int(n)
    if n < 1:
        raise ValueError("need n >= 1")
    if rng is None:
        raise ValueError("sampling requires an explicit numpy Generator")
    tab = _table(table)
    s = n
    height = 0
    time_height = 0.0
    chain = [n] if keep_chain else None
    use_table = n - 1 <= tab.n_exact
    values = tab.values
    while s > 1:
        theta = values[s - 2] if use_table else tab.value(s - 1)
        u1 = rng.random()
        if use_table:
            m = int(np.searchsorted(values[: s - 2], (1.0 - u1) * theta, side="right"))
        else:
            from .splitlaw import _largest_below
            m = _largest_below(tab, s - 2, (1.0 - u1) * theta)
        i = s - 1 - m
        u2 = rng.random()
        time_height += float(_exp_draw(u2, theta))
        height += 1
        s = i
        if keep_chain:
            chain.append(s)
    return LeafPathSample(height, time_height, chain)


# ----------------------------------------------------------------------
# streaming summaries

@dataclass(frozen=True)
class SimSummary:
    """Single-pass count/mean/central-moment sums, mergeable associatively."""

    n: int
    variant: str
    seed: int | None
    count: int
    mean: float
    M2: float
    M3: float
    M4: float
    values: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_values(cls, x, n, variant, seed=None, keep_values=False):
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            raise ValueError("empty sample")
        m = float(x.mean())
        d = x - m
        return cls(n, variant, seed, int(x.size), m, float(np.sum(d**2)),
                   float(np.sum(d**3)), float(np.sum(d**4)),
                   x.copy() if keep_values else None)

    def merge(self, other):
        if (self.n, self.variant) != (other.n, other.variant):
            raise ValueError("cannot merge summaries of different experiments")
        na, nb = self.count, other.count
        n = na + nb
        d = other.mean - self.mean
        mean = self.mean + d * nb / n
        M2 = self.M2 + other.M2 + d**2 * na * nb / n
        M3 = (self.M3 + other.M3 + d**3 * na * nb * (na - nb) / n**2
              + 3.0 * d * (na * other.M2 - nb * self.M2) / n)
        M4 = (self.M4 + other.M4 + d**4 * na * nb * (na**2 - na * nb + nb**2) / n**3
              + 6.0 * d**2 * (na**2 * other.M2 + nb**2 * self.M2) / n**2
              + 4.0 * d * (na * other.M3 - nb * self.M3) / n)
        values = None
        if self.values is not None and other.values is not None:
            values = np.concatenate([self.values, other.values])
        return SimSummary(self.n, self.variant, self.seed, n, mean, M2, M3, M4, values)

    @property
    def variance(self):
        """Unbiased sample variance."""
        return self.M2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def m2(self):
        return self.M2 / self.count

    @property
    def m3(self):
        return self.M3 / self.count

    @property
    def m4(self):
        return self.M4 / self.count

    def variance_stderr(self):
        """Asymptotic standard error of the sample variance."""
        return math.sqrt(max(self.m4 - self.m2**2, 0.0) / self.count)

    def to_dict(self):
        return {
            "n": self.n,
            "reps": self.count,
            "variant": self.variant,
            "seed": self.seed,
            "mean": self.mean,
            "variance": self.variance,
            "m3": self.m3,
            "m4": self.m4,
        }


# ----------------------------------------------------------------------
# experiments

@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    reps: int
    variant: str = "discrete"
    seed: int = DEFAULT_SEED
    workers: int = 1
    keep_values: bool = False


def _descend_chunk(n, seed, start, count, values):
    """Vectorized descent for reps start..start+count-1, one Philox stream
    per rep consumed as (split u, time u) pairs."""
    gens = [derive_rng(seed, start + j) for j in range(count)]
    buf = np.empty((count, 2 * _BUF_STEPS))
    for j, g in enumerate(gens):
        buf[j] = g.random(2 * _BUF_STEPS)
    pos = np.zeros(count, dtype=np.int64)
    s = np.full(count, n, dtype=np.int64)
    h = np.zeros(count, dtype=np.int64)
    ht = np.zeros(count)
    active = np.flatnonzero(s > 1)
    while active.size:
        refill = active[pos[active] >= _BUF_STEPS]
        for j in refill:
            buf[j] = gens[j].random(2 * _BUF_STEPS)
            pos[j] = 0
        p = pos[active]
        u1 = buf[active, 2 * p]
        u2 = buf[active, 2 * p + 1]
        th = values[s[active] - 2]
        m = np.searchsorted(values, (1.0 - u1) * th, side="right")
        m = np.minimum(m, s[active] - 2)
        i = s[active] - 1 - m
        ht[active] += _exp_draw(u2, th)
        h[active] += 1
        s[active] = i
        pos[active] = p + 1
        active = active[i > 1]
    return h, ht


def _chunk_task(args):
    n, seed, start, count = args
    values = _table(None).values
    return _descend_chunk(n, seed, start, count, values)


def joint_values(n, reps, seed=DEFAULT_SEED, workers=1, table=None):
    """(heights, time_heights) for reps repetitions, rep j on stream (seed, j)."""
    n = int(n)
    reps = int(reps)
    if n < 1 or reps < 1:
        raise ValueError("need n >= 1 and reps >= 1")
    if n == 1:
        return np.zeros(reps, dtype=np.int64), np.zeros(reps)
    tab = _table(table)
    if n - 1 > tab.n_exact:
        # beyond the exact table: scalar descent per rep
        out_h = np.empty(reps, dtype=np.int64)
        out_t = np.empty(reps)
        for j in range(reps):
            smp = joint_sample(n, derive_rng(seed, j), table=tab)
            out_h[j] = smp.height
            out_t[j] = smp.time_height
        return out_h, out_t
    tasks = [(n, seed, start, min(_CHUNK, reps - start))
             for start in range(0, reps, _CHUNK)]
    if workers > 1 and table is None and len(tasks) > 1:
        _table(None)  # build the shared table before forking
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chunk_task, tasks, chunksize=4))
    else:
        values = tab.values
        results = [_descend_chunk(n, seed, start, count, values)
                   for (n, seed, start, count) in tasks]
    h = np.concatenate([r[0] for r in results])
    ht = np.concatenate([r[1] for r in results])
    return h, ht


def run_experiment(config=None, **kwargs):
    """Run a reproducible batch of leaf-path samples and summarize.

    Deterministic given (seed, n, reps, variant) regardless of worker
    count; summaries are merged in fixed chunk order.
    """
    if config is None:
        config = ExperimentConfig(**kwargs)
    if config.variant not in ("discrete", "continuous"):
        raise ValueError(f"unknown variant {config.variant!r}")
    if config.reps < 1:
        raise ValueError("need reps >= 1")
    h, ht = joint_values(config.n, config.reps, config.seed, config.workers)
    x = h.astype(float) if config.variant == "discrete" else ht
    summary = None
    for start in range(0, config.reps, _CHUNK):
        part = SimSummary.from_values(x[start:start + _CHUNK], config.n,
                                      config.variant, config.seed,
                                      config.keep_values)
        summary = part if summary is None else summary.merge(part)
    return summary


# ----------------------------------------------------------------------
# KS against the standard normal

def ks_normal(values, mu, sigma):
    """Two-sided KS statistic of (values - mu)/sigma against N(0, 1).

    Accepts a SimSummary with retained values or a plain array.  Beyond
    1e6 points the sorted sample is quantile-thinned to the cap (noted in
    the docstring rather than hidden: thinning preserves the empirical
    quantile shape).
    """
    if isinstance(values, SimSummary):
        if values.values is None:
            raise ValueError("summary was built without keep_values")
        values = values.values
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    z = np.sort((x - mu) / sigma)
    if z.size > _KS_CAP:
        idx = np.linspace(0, z.size - 1, _KS_CAP).round().astype(np.int64)
        z = z[idx]
    m = z.size
    F = ndtr(z)
    up = float(np.max(np.arange(1, m + 1) / m - F))
    lo = float(np.max(F - np.arange(0, m) / m))
    return max(up, lo)


# ----------------------------------------------------------------------
# batched full-tree leaf statistics (validation of the path-sampler route)

def tree_leaf_samples(n, reps, variant="discrete", seed=DEFAULT_SEED,
                      table=None, chunk=2000):
    """Sample ``reps`` full trees; return per-tree statistics.

    Returns (picked_height, picked_time, mean_height, mean_time): the height
    and time-height of one uniformly chosen leaf per tree, and each tree's
    average leaf depth in both metrics.  Trees within a chunk share one
    derived stream (seed, chunk index); processing is breadth-wise over
    blocks so the whole chunk is vectorized.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need n >= 1")
    if n > _tree_guard():
        raise GuardError(f"tree size {n} exceeds guard {_tree_guard()}")
    tab = _table(table)
    if n - 1 > tab.n_exact:
        raise GuardError("tree batch sampling needs the exact harmonic table")
    values = tab.values
    continuous = variant == "continuous"

    picked_h = np.empty(reps)
    picked_t = np.empty(reps)
    mean_h = np.empty(reps)
    mean_t = np.empty(reps)

    for ci, start in enumerate(range(0, reps, chunk)):
        count = min(chunk, reps - start)
        gen = derive_rng(seed, ci)
        pick = np.minimum((gen.random(count) * n).astype(np.int64), n - 1)

        tree = np.arange(count, dtype=np.int64)
        size = np.full(count, n, dtype=np.int64)
        depth = np.zeros(count, dtype=np.int64)
        time = np.zeros(count)
        leaf_tree, leaf_depth, leaf_time = [], [], []

        while tree.size:
            done = size == 1
            if np.any(done):
                leaf_tree.append(tree[done])
                leaf_depth.append(depth[done])
                leaf_time.append(time[done])
                keep = ~done
                tree, size, depth, time = tree[keep], size[keep], depth[keep], time[keep]
                if not tree.size:
                    break
            th = values[size - 2]
            coin = gen.random(tree.size) < 0.5
            u = gen.random(tree.size)
            j = np.searchsorted(values, u * th, side="left") + 1
            j = np.minimum(j, size - 1)
            i = np.where(coin, j, size - j)
            step = _exp_draw(gen.random(tree.size), th) if continuous else 1.0
            tree = np.concatenate([tree, tree])
            size = np.concatenate([i, size - i])
            depth = np.concatenate([depth + 1, depth + 1])
            time = np.concatenate([time + step, time + step])

        lt = np.concatenate(leaf_tree)
        ld = np.concatenate(leaf_depth).astype(float)
        lm = np.concatenate(leaf_time)
        order = np.argsort(lt, kind="stable")
        ld = ld[order].reshape(count, n)
        lm = lm[order].reshape(count, n)
        sl = slice(start, start + count)
        mean_h[sl] = ld.mean(axis=1)
        mean_t[sl] = lm.mean(axis=1)
        rows = np.arange(count)
        picked_h[sl] = ld[rows, pick]
        picked_t[sl] = lm[rows, pick]
    return picked_h, picked_t, mean_h, mean_t


def write_values_csv(fileobj, values, column="value"):
    w = csv.writer(fileobj, lineterminator="\n")
    w.writerow(["rep", column])
    for j, v in enumerate(values):
        w.writerow([j, repr(float(v))])
