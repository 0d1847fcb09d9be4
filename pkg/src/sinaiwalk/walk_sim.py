"""Quenched simulation of the walk and its local-time bookkeeping.

A trajectory is stored as one bit per step (1 = right).  Everything else,
the ledger of visit counts, first hitting times and the post-``t0`` counts,
is recovered by replaying the packed stream, so the second pass does not
depend on the random number generator.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import walk_steps
from .env_model import Environment, extend_environment
from .errors import UsageError

log = logging.getLogger(__name__)

CHUNK = 1 << 20
# margin added on each side whenever the walker leaves the window
GROW = 256


@dataclass(frozen=True, eq=False)
class LocalTimeLedger:
    """Visit counts ``L(k, n)`` over times 1..n on a dense site range.

    ``first_hit[j]`` is the first time >= 1 the walk stood at ``lo + j``,
    or -1 if it never did.
    """

    lo: int
    counts: np.ndarray
    first_hit: np.ndarray

    @property
    def hi(self) -> int:
        return self.lo + self.counts.size - 1

    def count(self, k: int) -> int:
        j = k - self.lo
        if 0 <= j < self.counts.size:
            return int(self.counts[j])
        return 0

    def hit(self, k: int) -> int | None:
        j = k - self.lo
        if 0 <= j < self.counts.size and self.first_hit[j] >= 0:
            return int(self.first_hit[j])
        return None

    @property
    def max_count(self) -> int:
        return int(self.counts.max())

    @property
    def argmax_sites(self) -> tuple[int, ...]:
        idx = np.flatnonzero(self.counts == self.counts.max())
        return tuple(int(i) + self.lo for i in idx)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def visited(self) -> np.ndarray:
        return np.flatnonzero(self.counts > 0) + self.lo

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["site", "count", "first_hit_time"])
            for j in np.flatnonzero(self.counts > 0):
                w.writerow([int(j) + self.lo, int(self.counts[j]), int(self.first_hit[j])])


@dataclass(frozen=True, eq=False)
class WalkRun:
    n: int
    env: Environment
    walk_seed: int | None
    steps: np.ndarray
    final_position: int
    ledger: LocalTimeLedger

    @property
    def env_ref(self) -> str:
        return self.env.identity()

    def step_bits(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Unpacked step bits for time indices ``start+1 .. stop``."""
        stop = self.n if stop is None else stop
        return np.unpackbits(self.steps, count=self.n)[start:stop]


@dataclass(frozen=True)
class Favorites:
    l_star: int
    sites: tuple[int, ...]
    k_star: int
    sign_tie: bool


def _iter_positions(steps: np.ndarray, n: int, chunk: int = CHUNK):
    """Yield ``(t_first, positions)`` blocks of X_1..X_n, ``t_first`` 1-based."""
    pos = 0
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        # chunk is a multiple of 8, so every block starts on a byte boundary
        b = np.unpackbits(steps[start >> 3:(stop + 7) >> 3], count=stop - start)
        x = pos + np.cumsum(b.astype(np.int64) * 2 - 1)
        yield start + 1, x
        pos = int(x[-1])


def _tally(steps: np.ndarray, n: int, t_from: int = 1, t_to: int | None = None,
           want_hits: bool = False):
    """Counts of visits at times t_from..t_to; optionally first-visit times."""
    t_to = n if t_to is None else t_to
    lo, counts, hits = 0, np.zeros(1, dtype=np.int64), np.full(1, -1, dtype=np.int64)
    for t_first, x in _iter_positions(steps, t_to):
        t_last = t_first + x.size - 1
        if t_last < t_from:
            continue
        if t_first < t_from:
            x = x[t_from - t_first:]
            t_first = t_from
        xmin, xmax = int(x.min()), int(x.max())
        hi = lo + counts.size - 1
        if xmin < lo or xmax > hi:
            nlo, nhi = min(lo, xmin), max(hi, xmax)
            c2 = np.zeros(nhi - nlo + 1, dtype=np.int64)
            h2 = np.full(nhi - nlo + 1, -1, dtype=np.int64)
            c2[lo - nlo:lo - nlo + counts.size] = counts
            h2[lo - nlo:lo - nlo + counts.size] = hits
            lo, counts, hits = nlo, c2, h2
        counts += np.bincount(x - lo, minlength=counts.size)
        if want_hits:
            sites, first = np.unique(x, return_index=True)
            j = sites - lo
            new = hits[j] < 0
            hits[j[new]] = t_first + first[new]
    # trim to the visited range (keep site 0 for an empty tally)
    nz = np.flatnonzero(counts)
    if nz.size:
        a, b = nz[0], nz[-1]
        lo, counts, hits = lo + a, counts[a:b + 1], hits[a:b + 1]
    return lo, counts, hits


def _ledger_from_steps(steps: np.ndarray, n: int) -> LocalTimeLedger:
    lo, counts, hits = _tally(steps, n, want_hits=True)
    counts.setflags(write=False)
    hits.setflags(write=False)
    return LocalTimeLedger(lo=int(lo), counts=counts, first_hit=hits)


def run_walk(env: Environment, n: int, walk_seed: int) -> WalkRun:
    """Simulate X_1..X_n from X_0 = 0 in the frozen environment ``env``.

    The window grows on demand; the uniform stream is consumed identically
    whatever the starting window, so the trajectory depends only on the
    environment law, ``n`` and ``walk_seed``.
    """
    n = int(n)
    if n < 1:
        raise UsageError("n must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(int(walk_seed)))
    bits = np.zeros((n + 7) >> 3, dtype=np.uint8)
    pos, t = 0, 0
    while t < n:
        u = rng.random(min(CHUNK, n - t))
        done = 0
        while done < u.size:
            used, pos = walk_steps(env.alpha, env.lo, pos, u[done:], bits, t + done)
            done += used
            if done < u.size:
                env = extend_environment(
                    env, (min(env.lo, pos - GROW), max(env.hi, pos + GROW)))
        t += u.size
    ledger = _ledger_from_steps(bits, n)
    bits.setflags(write=False)
    return WalkRun(n=n, env=env, walk_seed=int(walk_seed), steps=bits,
                   final_position=int(pos), ledger=ledger)


def run_from_steps(env: Environment, steps) -> WalkRun:
    """Build a run from an explicit step stream (+1/-1 or True/False)."""
    s = np.asarray(steps)
    if s.dtype != bool:
        if not np.all(np.isin(s, (-1, 1))):
            raise UsageError("steps must be +1/-1 or booleans")
        s = s > 0
    n = int(s.size)
    if n < 1:
        raise UsageError("need at least one step")
    bits = np.packbits(s)
    final = int(2 * s.sum() - n)
    path = np.cumsum(np.where(s, 1, -1))
    lo, hi = min(env.lo, int(path.min())), max(env.hi, int(path.max()))
    if (lo, hi) != (env.lo, env.hi) and (env.spec is not None or env.fill is not None):
        env = extend_environment(env, (lo, hi))
    ledger = _ledger_from_steps(bits, n)
    bits.setflags(write=False)
    return WalkRun(n=n, env=env, walk_seed=None, steps=bits, final_position=final,
                   ledger=ledger)


def positions(run: WalkRun) -> np.ndarray:
    """X_1..X_n as one array (for small runs and tests)."""
    return np.concatenate([x for _, x in _iter_positions(run.steps, run.n)])


def local_time(run: WalkRun, k: int, T: int) -> int:
    """Visits to ``k`` at times 1..T."""
    if T < 0 or T > run.n:
        raise UsageError(f"T = {T} outside [0, {run.n}]")
    if T == 0:
        return 0
    if T == run.n:
        return run.ledger.count(k)
    lo, counts, _ = _tally(run.steps, run.n, 1, T)
    j = k - lo
    return int(counts[j]) if 0 <= j < counts.size else 0


def favorite_sites(run: WalkRun) -> Favorites:
    """``L*(n)``, the favourite set and the favourite of least modulus.

    When both ``k`` and ``-k`` are favourites the nonnegative one is taken.
    """
    led = run.ledger
    sites = led.argmax_sites
    best = min(abs(k) for k in sites)
    tie = best > 0 and best in sites and -best in sites
    if tie:
        log.debug("k* sign tie between %d and %d; taking %d", -best, best, best)
    k_star = best if best in sites else -best
    return Favorites(l_star=led.max_count, sites=sites, k_star=k_star, sign_tie=tie)


def hitting_time(run: WalkRun, x: int) -> int | None:
    """First time >= 1 the walk sits at ``x``, or None within 1..n."""
    return run.ledger.hit(x)


def post_hit_counts(run: WalkRun, t0: int) -> tuple[int, np.ndarray]:
    """Visits during times t0..n by a second replay of the step stream.

    Returns ``(lo, counts)`` with ``counts[j]`` the count at site ``lo + j``.
    """
    if not 1 <= t0 <= run.n:
        raise UsageError(f"t0 = {t0} outside [1, {run.n}]")
    lo, counts, _ = _tally(run.steps, run.n, t0, run.n)
    return lo, counts


# --- run artifact ------------------------------------------------------------

def save_run(run: WalkRun, path) -> None:
    """Header line of JSON followed by the raw packed step bytes."""
    header = {"env": run.env_ref, "n": run.n, "walk_seed": run.walk_seed,
              "final_position": run.final_position}
    if run.env.spec is not None:
        header["env_spec"] = run.env.spec.to_dict()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(run.steps.tobytes())


def load_run(path, env: Environment | None = None) -> WalkRun:
    """Read a run artifact; the environment is rebuilt from the header spec
    when not supplied."""
    from .env_model import EnvironmentSpec, sample_environment

    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl])
    bits = np.frombuffer(raw[nl + 1:], dtype=np.uint8).copy()
    n = int(header["n"])
    if bits.size != (n + 7) >> 3:
        raise UsageError(f"{path}: step stream has {bits.size} bytes, expected {(n + 7) >> 3}")
    ledger = _ledger_from_steps(bits, n)
    if env is None:
        if "env_spec" not in header:
            raise UsageError(f"{path}: no environment spec in header; pass env")
        env = sample_environment(EnvironmentSpec.from_dict(header["env_spec"]), (0, 0))
    if env.identity() != header["env"]:
        raise UsageError(f"{path}: environment mismatch ({env.identity()} vs {header['env']})")
    lo, hi = min(env.lo, ledger.lo), max(env.hi, ledger.hi)
    if (lo, hi) != env.window and (env.spec is not None or env.fill is not None):
        env = extend_environment(env, (lo, hi))
    bits.setflags(write=False)
    return WalkRun(n=n, env=env, walk_seed=header["walk_seed"], steps=bits,
                   final_position=int(header["final_position"]), ledger=ledger)
