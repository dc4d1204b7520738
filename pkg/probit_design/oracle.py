"""
oracle.py
─────────
Independent checks for the analytic machinery:

  * mc_preference_probs      simulated utilities and argmax frequencies
  * fd_jacobian              central finite differences of the probabilities
  * enumerate_orbit_designs  every triple of a given comparison depth
  * enumerate_pair_orbit     every pair of a given comparison depth
"""

import logging
import math
from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence

import numpy as np

from . import config
from .choice_model import Beta, ChoiceSet, ModelKind, ModelSpec, comparison_depth, probs_from_moments, utility_moments
from .design_space import Design, OrbitTriple
from .errors import InvalidInputError

logger = logging.getLogger(__name__)

MIN_MC_SAMPLES = 10_000
MAX_ENUMERATION_K = 5


@dataclass(frozen=True)
class McEstimate:
    p_hat: np.ndarray
    std_err: np.ndarray
    n_samples: int
    seed: int


# ── 1.  MONTE CARLO ─────────────────────────────────────────────────────

def _simulate_noise(cs: ChoiceSet, spec: ModelSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """n x m random utility parts, drawn part-worth by part-worth."""
    m = cs.m
    sigma0 = math.sqrt(spec.sigma0_sq)
    if spec.kind is ModelKind.MODEL_I:
        noise = rng.normal(scale=sigma0, size=(n, m, spec.K)).sum(axis=2)
    else:
        # one draw per (attribute, level), shared by every alternative showing that level
        levels = np.array([a.levels for a in cs.alternatives]) - 1
        noise = np.zeros((n, m))
        for k in range(spec.K):
            draws = rng.normal(scale=sigma0, size=(n, spec.v))
            noise += draws[:, levels[:, k]]
    if spec.sigma_t_sq > 0:
        noise += rng.normal(scale=math.sqrt(spec.sigma_t_sq), size=(n, m))
    return noise


def mc_preference_probs(cs: ChoiceSet, beta: Beta, spec: ModelSpec, n: int = config.MC_SAMPLES,
                        seed: int = config.SEED, shard_size: int = config.MC_SHARD) -> McEstimate:
    """
    Monte-Carlo preference probabilities. Samples are drawn in shards of
    fixed size; shard i uses SeedSequence([seed, i]), so results depend on
    (n, seed, shard_size) only. Ties in the maximum are split uniformly at random.
    """
    if int(n) != n or n < MIN_MC_SAMPLES:
        raise InvalidInputError(f"n must be an integer >= {MIN_MC_SAMPLES}, got {n!r}")
    if int(shard_size) != shard_size or shard_size < 1:
        raise InvalidInputError(f"shard_size must be a positive integer, got {shard_size!r}")
    mu, _ = utility_moments(cs, beta, spec)

    counts = np.zeros(cs.m, dtype=np.int64)
    n_shards = -(-int(n) // int(shard_size))
    for shard in range(n_shards):
        size = min(shard_size, n - shard * shard_size)
        rng = np.random.default_rng(np.random.SeedSequence([seed, shard]))
        utilities = mu + _simulate_noise(cs, spec, rng, size)
        is_max = utilities == utilities.max(axis=1, keepdims=True)
        keys = np.where(is_max, rng.random(utilities.shape), -1.0)
        counts += np.bincount(keys.argmax(axis=1), minlength=cs.m)

    p_hat = counts / n
    std_err = np.sqrt(p_hat * (1.0 - p_hat) / n)
    logger.debug(f"MC estimate over {n} samples ({n_shards} shards, seed {seed}): {p_hat}")
    return McEstimate(p_hat=p_hat, std_err=std_err, n_samples=int(n), seed=seed)


# ── 2.  FINITE DIFFERENCES ──────────────────────────────────────────────

def fd_jacobian(cs: ChoiceSet, beta: Beta, spec: ModelSpec, step: float = 1e-5) -> np.ndarray:
    """Central differences of the preference probabilities in the mean utilities; J[j, i] = dp_j / dmu_i."""
    if not 1e-6 <= step <= 1e-3:
        raise InvalidInputError(f"step must lie in [1e-6, 1e-3], got {step!r}")
    mu, cov = utility_moments(cs, beta, spec)
    jac = np.zeros((cs.m, cs.m))
    for i in range(cs.m):
        shift = np.zeros(cs.m)
        shift[i] = step
        upper = probs_from_moments(mu + shift, cov).probs
        lower = probs_from_moments(mu - shift, cov).probs
        jac[:, i] = (upper - lower) / (2.0 * step)
    return jac


# ── 3.  EXPLICIT ENUMERATION ────────────────────────────────────────────

def enumerate_orbit_designs(depth: OrbitTriple, K: int, z: Optional[Sequence[float]] = None) -> Design:
    """Uniform design on every ordered triple over {1, 2}^K with the given comparison depth."""
    if int(K) != K or not 1 <= K <= MAX_ENUMERATION_K:
        raise InvalidInputError(f"explicit enumeration supports 1 <= K <= {MAX_ENUMERATION_K}, got {K!r}")
    if depth.D > K:
        raise InvalidInputError(f"depth {depth} is infeasible for K = {K}")
    target = depth.as_tuple()
    t = None if z is None else [float(z[0]), float(z[1]), 0.0]

    sets = []
    for flat in product((1, 2), repeat=3 * K):
        cs = ChoiceSet.of([flat[:K], flat[K:2 * K], flat[2 * K:]], t)
        if comparison_depth(cs) == target:
            sets.append(cs)
    logger.debug(f"Orbit {depth}, K={K}: {len(sets)} choice sets")
    return Design.uniform(sets)


def enumerate_pair_orbit(d: int, K: int, v: int = 2, t_diff: Optional[float] = None) -> Design:
    """Uniform design on every ordered pair over {1..v}^K with comparison depth d."""
    if int(d) != d or not 0 <= d <= K:
        raise InvalidInputError(f"pair depth must lie in 0..{K}, got {d!r}")
    if v ** (2 * K) > 10 ** 6:
        raise InvalidInputError(f"{v ** (2 * K)} candidate pairs are too many to enumerate")
    t = None if t_diff is None else [float(t_diff), 0.0]

    profiles = list(product(range(1, v + 1), repeat=K))
    sets = [ChoiceSet.of([x1, x2], t)
            for x1 in profiles for x2 in profiles
            if sum(a != b for a, b in zip(x1, x2)) == d]
    return Design.uniform(sets)
