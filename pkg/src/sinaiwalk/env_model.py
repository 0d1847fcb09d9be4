"""Random environments for the one-dimensional nearest-neighbour walk.

An environment is a field of right-step probabilities ``alpha[i]`` indexed by
lattice sites.  Sites are generated lazily over an inclusive window
``[lo, hi]``; every site value is a pure function of
``(master_seed, half-lattice, |i|)`` so windows can be grown in any order
without disturbing sites that were already drawn.

The potential is ``S_0 = 0``, ``S_k = sum_{1<=i<=k} eps_i`` for ``k > 0`` and
``S_k = -sum_{k+1<=i<=0} eps_i`` for ``k < 0`` with
``eps_i = log((1 - alpha_i) / alpha_i)``.  Natural logarithms throughout.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from .errors import ConfigError, UsageError

TWO_POINT = "two_point"
UNIFORM_ELLIPTIC = "uniform_elliptic"
FAMILIES = (TWO_POINT, UNIFORM_ELLIPTIC)

# sites per deterministic sub-stream block
BLOCK = 4096


@dataclass(frozen=True)
class EnvironmentSpec:
    """Law of the i.i.d. environment plus the seed that realizes it.

    ``family="two_point"`` draws ``alpha`` from ``{p, 1-p}`` with equal
    weights; ``family="uniform_elliptic"`` draws it uniformly on
    ``[eta0, 1-eta0]``.  Both laws are symmetric about 1/2, so the log-ratio
    ``eps`` is centred exactly.
    """

    family: str = TWO_POINT
    param: float = 0.3
    master_seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown environment family {self.family!r}")
        p = float(self.param)
        if self.family == TWO_POINT:
            if not 0.0 < p < 1.0:
                raise ConfigError(f"two-point p must lie in (0, 1), got {p}")
            if p == 0.5:
                raise ConfigError("two-point p = 1/2 gives sigma^2 = 0")
        else:
            if not 0.0 < p < 0.5:
                raise ConfigError(f"uniform eta0 must lie in (0, 1/2), got {p}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")

    @property
    def eta0(self) -> float:
        if self.family == TWO_POINT:
            return min(self.param, 1.0 - self.param)
        return self.param

    @property
    def sigma2(self) -> float:
        return hypothesis_diagnostics(self)["sigma2"]

    def to_dict(self) -> dict:
        return {"family": self.family, "param": float(self.param),
                "master_seed": int(self.master_seed)}

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentSpec":
        return cls(family=d["family"], param=float(d["param"]),
                   master_seed=int(d["master_seed"]))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def hypothesis_diagnostics(spec: EnvironmentSpec) -> dict:
    """Exact moments of ``eps = log((1-alpha)/alpha)`` under the family.

    Returns ``mean_eps``, ``sigma2`` and ``eta0``.  The mean is zero by the
    symmetry of both laws; the uniform-family variance is a one-dimensional
    integral evaluated by adaptive quadrature.
    """
    if spec.family == TWO_POINT:
        sigma2 = math.log((1.0 - spec.param) / spec.param) ** 2
    else:
        eta = spec.param
        val, _ = integrate.quad(lambda a: math.log((1.0 - a) / a) ** 2,
                                eta, 1.0 - eta, epsabs=1e-13, epsrel=1e-12)
        sigma2 = val / (1.0 - 2.0 * eta)
    return {"mean_eps": 0.0, "sigma2": sigma2, "eta0": spec.eta0}


def _draw_block(spec: EnvironmentSpec, half: int, block: int) -> np.ndarray:
    ss = np.random.SeedSequence([int(spec.master_seed), half, block])
    u = np.random.default_rng(ss).random(BLOCK)
    if spec.family == TWO_POINT:
        p = spec.param
        return np.where(u < 0.5, p, 1.0 - p)
    eta = spec.param
    return eta + (1.0 - 2.0 * eta) * u


def _draw_sites(spec: EnvironmentSpec, lo: int, hi: int) -> np.ndarray:
    """alpha for sites lo..hi inclusive, block by block."""
    out = np.empty(hi - lo + 1)
    if hi < lo:
        return out
    cache: dict[tuple[int, int], np.ndarray] = {}
    sites = np.arange(lo, hi + 1)
    half = (sites < 0).astype(np.int64)
    idx = np.where(sites < 0, -sites - 1, sites)
    blocks = idx // BLOCK
    for h, b in sorted(set(zip(half.tolist(), blocks.tolist()))):
        cache[(h, b)] = _draw_block(spec, h, b)
        sel = (half == h) & (blocks == b)
        out[sel] = cache[(h, b)][idx[sel] % BLOCK]
    return out


def _log_ratio(alpha: np.ndarray) -> np.ndarray:
    return np.log((1.0 - alpha) / alpha)


@dataclass(frozen=True, eq=False)
class Environment:
    lo: int
    hi: int
    alpha: np.ndarray
    epsilon: np.ndarray
    spec: EnvironmentSpec | None = None
    # constant used to grow hand-built environments; None forbids growth
    fill: float | None = None

    def __post_init__(self):
        self.alpha.setflags(write=False)
        self.epsilon.setflags(write=False)

    @classmethod
    def from_alpha(cls, alpha, lo: int, fill: float | None = None) -> "Environment":
        """Hand-built environment with ``alpha[j]`` at site ``lo + j``."""
        a = np.array(alpha, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise UsageError("alpha must be a non-empty 1-d sequence")
        if np.any((a <= 0.0) | (a >= 1.0)):
            raise UsageError("alpha values must lie strictly inside (0, 1)")
        hi = lo + a.size - 1
        if not lo <= 0 <= hi:
            raise UsageError("window must contain site 0")
        return cls(lo=lo, hi=hi, alpha=a, epsilon=_log_ratio(a), fill=fill)

    @classmethod
    def constant(cls, value: float, lo: int, hi: int) -> "Environment":
        return cls.from_alpha(np.full(hi - lo + 1, float(value)), lo, fill=value)

    @property
    def window(self) -> tuple[int, int]:
        return self.lo, self.hi

    @property
    def eta0(self) -> float:
        if self.spec is not None:
            return self.spec.eta0
        return float(min(self.alpha.min(), 1.0 - self.alpha.max()))

    def identity(self) -> str:
        """Short stable identifier used in run headers."""
        if self.spec is not None:
            return "spec:" + self.spec.digest()
        h = hashlib.sha256(self.alpha.tobytes())
        h.update(f"{self.lo}:{self.fill}".encode())
        return "alpha:" + h.hexdigest()[:16]

    def contains(self, site: int) -> bool:
        return self.lo <= site <= self.hi

    def a(self, site: int) -> float:
        return float(self.alpha[site - self.lo])

    def b(self, site: int) -> float:
        return 1.0 - float(self.alpha[site - self.lo])


def sample_environment(spec: EnvironmentSpec, window: tuple[int, int]) -> Environment:
    lo, hi = int(window[0]), int(window[1])
    if not lo <= 0 <= hi:
        raise UsageError(f"window [{lo}, {hi}] must contain 0")
    alpha = _draw_sites(spec, lo, hi)
    return Environment(lo=lo, hi=hi, alpha=alpha, epsilon=_log_ratio(alpha), spec=spec)


def extend_environment(env: Environment, new_window: tuple[int, int]) -> Environment:
    lo, hi = int(new_window[0]), int(new_window[1])
    if lo > env.lo or hi < env.hi:
        raise UsageError(
            f"cannot shrink window [{env.lo}, {env.hi}] to [{lo}, {hi}]")
    if (lo, hi) == (env.lo, env.hi):
        return env
    if env.spec is not None:
        left = _draw_sites(env.spec, lo, env.lo - 1)
        right = _draw_sites(env.spec, env.hi + 1, hi)
    elif env.fill is not None:
        left = np.full(env.lo - lo, env.fill)
        right = np.full(hi - env.hi, env.fill)
    else:
        raise UsageError("hand-built environment without a fill value cannot grow")
    alpha = np.concatenate([left, env.alpha, right])
    eps = np.concatenate([_log_ratio(left), env.epsilon, _log_ratio(right)])
    return Environment(lo=lo, hi=hi, alpha=alpha, epsilon=eps, spec=env.spec, fill=env.fill)


@dataclass(frozen=True, eq=False)
class PotentialPath:
    lo: int
    hi: int
    s: np.ndarray

    def __post_init__(self):
        self.s.setflags(write=False)

    def __getitem__(self, k: int) -> float:
        if not self.lo <= k <= self.hi:
            raise IndexError(f"site {k} outside potential window [{self.lo}, {self.hi}]")
        return float(self.s[k - self.lo])

    def segment(self, a: int, b: int) -> np.ndarray:
        """S over sites a..b inclusive."""
        return self.s[a - self.lo:b - self.lo + 1]

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)


def potential(env: Environment) -> PotentialPath:
    """Cumulative log-ratio path with the two-branch convention.

    For the two-point family every increment is +/- one atom, so the path is
    stored as integer heights times the atom and equal heights compare equal
    bit for bit.
    """
    i0 = -env.lo
    eps = env.epsilon
    s = np.empty(eps.size)
    s[i0] = 0.0
    if env.spec is not None and env.spec.family == TWO_POINT:
        atom = math.log((1.0 - env.spec.param) / env.spec.param)
        steps = np.where(env.alpha == env.spec.param, 1, -1).astype(np.int64)
        h = np.zeros(eps.size, dtype=np.int64)
        h[i0 + 1:] = np.cumsum(steps[i0 + 1:])
        h[:i0] = -np.cumsum(steps[1:i0 + 1][::-1])[::-1]
        s = h * atom
    else:
        s[i0 + 1:] = np.cumsum(eps[i0 + 1:])
        s[:i0] = -np.cumsum(eps[1:i0 + 1][::-1])[::-1]
    return PotentialPath(lo=env.lo, hi=env.hi, s=s)


# --- serialization --------------------------------------------------------

def write_environment(env: Environment, path) -> None:
    """CSV of (site, alpha, epsilon, S) preceded by one ``#`` JSON header line."""
    pot = potential(env)
    header = {
        "family": env.spec.family if env.spec else None,
        "params": {"param": env.spec.param} if env.spec else {},
        "seed": env.spec.master_seed if env.spec else None,
        "window": [env.lo, env.hi],
        "fill": env.fill,
    }
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site", "alpha", "epsilon", "S"])
        for j, site in enumerate(range(env.lo, env.hi + 1)):
            w.writerow([site, f"{env.alpha[j]:.17g}", f"{env.epsilon[j]:.17g}",
                        f"{pot.s[j]:.17g}"])


def read_environment(path) -> Environment:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# "):
        raise UsageError(f"{path}: missing JSON header line")
    header = json.loads(text[0][2:])
    rows = list(csv.DictReader(text[1:]))
    alpha = np.array([float(r["alpha"]) for r in rows])
    lo = int(header["window"][0])
    if header.get("family"):
        spec = EnvironmentSpec(header["family"], header["params"]["param"], header["seed"])
        return Environment(lo=lo, hi=lo + alpha.size - 1, alpha=alpha,
                           epsilon=_log_ratio(alpha), spec=spec)
    return Environment.from_alpha(alpha, lo, fill=header.get("fill"))
