"""
design_space.py
───────────────
Approximate designs, comparison-depth orbits and their information.

A triple orbit is labelled by its comparison depth d = (d12, d13, d23). The
odd counts n_j = (d_ji + d_jl - d_il) / 2 say in how many attributes
alternative j is the odd one out; d_ij = n_i + n_j. Orbit-averaged
information is obtained from one representative choice set: an attribute
whose odd alternative is j contributes 4 Lambda_jj to its diagonal entry,
attributes where all alternatives agree contribute nothing, and all
off-diagonal entries average to zero over level flips.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import block_diag

from .choice_model import (
    Beta,
    ChoiceSet,
    ModelKind,
    ModelSpec,
    information_matrix,
    intensity_matrix,
    moments_to_diff,
    preference_probs,
    utility_moments,
)
from .errors import InvalidInputError

logger = logging.getLogger(__name__)

# Orbits whose criterion lies within this relative distance of the best are all flagged best.
BEST_RTOL = 1e-9


# ── 1.  TYPES ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Design:
    """Approximate design: choice sets with nonnegative weights summing to 1."""
    points: Tuple[Tuple[ChoiceSet, float], ...]

    def __post_init__(self):
        points = tuple((cs, float(w)) for cs, w in self.points)
        if not points:
            raise InvalidInputError("a design needs at least one support point")
        weights = np.array([w for _, w in points])
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise InvalidInputError(f"design weights must be finite and >= 0, got {weights}")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"design weights sum to {weights.sum()}, not 1")
        object.__setattr__(self, 'points', points)

    @classmethod
    def uniform(cls, sets: Sequence[ChoiceSet]) -> 'Design':
        sets = list(sets)
        if not sets:
            raise InvalidInputError("a design needs at least one support point")
        return cls(tuple((cs, 1.0 / len(sets)) for cs in sets))


@dataclass(frozen=True, order=True)
class OrbitTriple:
    d12: int
    d13: int
    d23: int

    def __post_init__(self):
        d = (self.d12, self.d13, self.d23)
        if any(int(x) != x or x < 0 for x in d):
            raise InvalidInputError(f"comparison depths must be nonnegative integers, got {d}")
        if not self.d12 >= self.d13 >= self.d23:
            raise InvalidInputError(f"depth {d} is not canonical (need d12 >= d13 >= d23)")
        if sum(d) % 2 or self.d12 > self.d13 + self.d23:
            raise InvalidInputError(f"depth {d} has no integer nonnegative odd counts")

    @classmethod
    def from_odd_counts(cls, n1: int, n2: int, n3: int) -> 'OrbitTriple':
        return cls(n1 + n2, n1 + n3, n2 + n3)

    @property
    def odd_counts(self) -> Tuple[int, int, int]:
        return ((self.d12 + self.d13 - self.d23) // 2,
                (self.d12 + self.d23 - self.d13) // 2,
                (self.d13 + self.d23 - self.d12) // 2)

    @property
    def D(self) -> int:
        """Mean comparison depth (d12 + d13 + d23) / 2."""
        return (self.d12 + self.d13 + self.d23) // 2

    def as_tuple(self) -> Tuple[int, int, int]:
        return self.d12, self.d13, self.d23

    def __str__(self):
        return f"({self.d12},{self.d13},{self.d23})"


@dataclass(frozen=True)
class OrbitResult:
    """One table row."""
    K: int
    depth: OrbitTriple
    z_opt: Optional[Tuple[float, float]]
    probs: Tuple[float, float, float]
    crit: float
    eff: float = float('nan')
    best: bool = False
    duplicates: Tuple[Tuple[int, ...], ...] = ()


@dataclass(frozen=True)
class BalancedOrbitReport:
    K: int
    best: OrbitTriple
    balanced: OrbitTriple
    holds: bool


# ── 2.  ORBITS ──────────────────────────────────────────────────────────

def enumerate_orbits(K: int, m: int = 3, full_profile: bool = True) -> list:
    """
    Pairs: depths 1..K. Triples: every canonical depth with mean depth D = K
    (full profile) or 1 <= D <= K, in descending lexicographic order.
    """
    if int(K) != K or K < 1:
        raise InvalidInputError(f"K must be a positive integer, got {K!r}")
    if m == 2:
        return list(range(1, K + 1))
    if m != 3:
        raise InvalidInputError(f"m must be 2 or 3, got {m!r}")

    mean_depths = [K] if full_profile else range(K, 0, -1)
    orbits = []
    for D in mean_depths:
        for n1 in range(D, -1, -1):
            for n2 in range(min(n1, D - n1), -1, -1):
                n3 = D - n1 - n2
                if 0 <= n3 <= n2:
                    orbits.append(OrbitTriple.from_odd_counts(n1, n2, n3))
    return sorted(set(orbits), key=OrbitTriple.as_tuple, reverse=True)


def orbit_representative(depth: OrbitTriple, K: int, z: Optional[Sequence[float]] = None) -> ChoiceSet:
    """
    Representative triple: the first n1 attributes have alternative 1 odd
    (level 2 against level 1), the next n2 alternative 2, then n3 alternative 3;
    the remaining attributes are level 1 throughout. z = (z1, z2) sets
    t = (z1, z2, 0).
    """
    if depth.D > K:
        raise InvalidInputError(f"depth {depth} needs at least {depth.D} attributes, K = {K}")
    levels = [[1] * K for _ in range(3)]
    k = 0
    for j, count in enumerate(depth.odd_counts):
        for _ in range(count):
            levels[j][k] = 2
            k += 1
    t = None if z is None else (float(z[0]), float(z[1]), 0.0)
    return ChoiceSet.of(levels, t)


def pair_representative(d: int, K: int, t_diff: Optional[float] = None) -> ChoiceSet:
    """Alternatives differing (level 1 vs 2) in the first d attributes; t = (t_diff, 0)."""
    if int(d) != d or not 0 <= d <= K:
        raise InvalidInputError(f"pair depth must lie in 0..{K}, got {d!r}")
    first = [1] * K
    second = [2] * d + [1] * (K - d)
    t = None if t_diff is None else (float(t_diff), 0.0)
    return ChoiceSet.of([first, second], t)


def _require_orbit_parameter(beta: Beta, spec: ModelSpec):
    # orbit averaging needs identical intensity on every member
    if any(b != 0.0 for b in beta.beta1):
        raise InvalidInputError("orbit information is defined for beta1 = 0 only")
    beta.vector(spec)


def _orbit_intensity(depth: OrbitTriple, spec: ModelSpec, beta: Beta, z):
    if spec.v != 2:
        raise InvalidInputError("triple orbits are defined for v = 2 levels")
    _require_orbit_parameter(beta, spec)
    if spec.has_quantitative:
        z = (0.0, 0.0) if z is None else tuple(z)
        cs = orbit_representative(depth, spec.K, z)
        t = np.array([z[0], z[1], 0.0])
    else:
        cs = orbit_representative(depth, spec.K)
        t = None
    return cs, intensity_matrix(cs, beta, spec), t


def orbit_information(depth: OrbitTriple, spec: ModelSpec, beta: Beta, z=None) -> np.ndarray:
    """
    Information of the uniform design on the orbit (times delta_z when the
    model has a quantitative attribute):
        diag(4 lambda_d I_K, t' Lambda t),   lambda_d = (1/K) sum_j n_j Lambda_jj.
    """
    _, lam, t = _orbit_intensity(depth, spec, beta, z)
    lam_d = np.dot(depth.odd_counts, np.diag(lam)) / spec.K
    info = 4.0 * lam_d * np.eye(spec.K)
    if t is not None:
        info = block_diag(info, [[t @ lam @ t]])
    return info


def mean_intensity(depth: OrbitTriple, spec: ModelSpec, beta: Beta, z=None) -> float:
    """lambda_d = (1 / 2K) sum_j (d_ji + d_jl - d_il) Lambda_jj."""
    _, lam, _ = _orbit_intensity(depth, spec, beta, z)
    return float(np.dot(depth.odd_counts, np.diag(lam)) / spec.K)


def mean_intensity_closed_form(depth: OrbitTriple, spec: ModelSpec) -> float:
    """
    Model II at indifference with all d_ij > 0:
        lambda_d = (1 / (4 pi sigma_max^2)) sum_j (1 + rho_j) / p_j,  p_j = 1/4 + asin(rho_j) / (2 pi).
    """
    if spec.kind is not ModelKind.MODEL_II or spec.sigma_t_sq != 0.0:
        raise InvalidInputError("the arcsine closed form holds for Model II with sigma_t^2 = 0")
    if depth.D != spec.K or min(depth.as_tuple()) == 0:
        raise InvalidInputError(f"the arcsine closed form needs a full-profile depth with all d_ij > 0, got {depth}")
    cs = orbit_representative(depth, spec.K, (0.0, 0.0) if spec.has_quantitative else None)
    rho = moments_to_diff(*utility_moments(cs, Beta.zero(spec), spec)).rho
    probs = 0.25 + np.arcsin(rho) / (2 * np.pi)
    return float(np.sum((1 + rho) / probs) / (4 * np.pi * spec.sigma_max_sq))


def pair_orbit_information(d: int, spec: ModelSpec, beta: Beta, t_diff: Optional[float] = None) -> np.ndarray:
    """
    Uniform design on all ordered pairs of comparison depth d (times delta_t):
        lambda ((d/K) I_K (x) M*)  (+)  lambda t_diff^2,   M* = 2/(v-1) (I + 11').
    lambda is the pair intensity, constant on the orbit for beta1 = 0.
    """
    _require_orbit_parameter(beta, spec)
    if spec.has_quantitative:
        t_diff = 0.0 if t_diff is None else float(t_diff)
    elif t_diff is not None:
        raise InvalidInputError("t_diff given but the model has no quantitative attribute")
    cs = pair_representative(d, spec.K, t_diff)
    lam = intensity_matrix(cs, beta, spec)[0, 0]
    q = spec.v - 1
    level_block = 2.0 / q * (np.eye(q) + np.ones((q, q)))
    info = lam * d / spec.K * np.kron(np.eye(spec.K), level_block)
    if spec.has_quantitative:
        info = block_diag(info, [[lam * t_diff ** 2]])
    return info


# ── 3.  CRITERION AND DESIGNS ───────────────────────────────────────────

def d_criterion(info: np.ndarray, sigma_max_sq: float = 1.0) -> float:
    """Normalized D-criterion sigma_max^2 det(M)^(1/p); 0 for singular M."""
    info = np.atleast_2d(np.asarray(info, dtype=float))
    sign, logdet = np.linalg.slogdet(info)
    if sign <= 0 or not np.isfinite(logdet):
        return 0.0
    return float(sigma_max_sq * np.exp(logdet / info.shape[0]))


def design_information(xi: Design, beta: Beta, spec: ModelSpec) -> np.ndarray:
    """M(xi; beta) = sum_i w_i M(A_i; beta)."""
    info = np.zeros((spec.n_params, spec.n_params))
    for cs, weight in xi.points:
        if weight > 0:
            info += weight * information_matrix(cs, beta, spec)
    return info


def evaluate_orbit(depth: OrbitTriple, spec: ModelSpec, beta: Beta, z=None) -> OrbitResult:
    """Probabilities and normalized criterion of one orbit at fixed quantitative settings."""
    info = orbit_information(depth, spec, beta, z)
    cs, _, _ = _orbit_intensity(depth, spec, beta, z)
    choice = preference_probs(cs, beta, spec)
    return OrbitResult(
        K=spec.K,
        depth=depth,
        z_opt=None if z is None or not spec.has_quantitative else (float(z[0]), float(z[1])),
        probs=tuple(float(p) for p in choice.probs),
        crit=d_criterion(info, spec.sigma_max_sq),
        duplicates=choice.duplicates,
    )


def efficiency(results: List[OrbitResult]) -> List[OrbitResult]:
    """eff = crit / crit_best; every orbit within BEST_RTOL of the best is flagged best."""
    if not results:
        raise InvalidInputError("efficiency needs at least one orbit result")
    top = max(r.crit for r in results)
    if top <= 0:
        logger.warning("Every orbit has a singular information matrix; efficiencies set to 0.")
        return [replace(r, eff=0.0, best=False) for r in results]
    return [replace(r, eff=r.crit / top, best=r.crit >= top * (1 - BEST_RTOL)) for r in results]


def _spread(depth: OrbitTriple) -> int:
    return max(depth.as_tuple()) - min(depth.as_tuple())


def balanced_orbit_check(kmax: int) -> List[BalancedOrbitReport]:
    """
    Model II at indifference: for each K in 2..kmax, is the best full-profile
    orbit the most balanced one (smallest spread of the d_ij)?
    """
    reports = []
    for K in range(2, kmax + 1):
        spec = ModelSpec(ModelKind.MODEL_II, K)
        beta = Beta.zero(spec)
        orbits = enumerate_orbits(K)
        crits = {o: d_criterion(orbit_information(o, spec, beta), spec.sigma_max_sq) for o in orbits}
        best = max(orbits, key=lambda o: crits[o])
        balanced = min(orbits, key=_spread)
        holds = crits[balanced] >= crits[best] * (1 - BEST_RTOL)
        logger.info(f"K={K}: best orbit {best} (crit {crits[best]:.4f}), most balanced {balanced}, holds={holds}")
        reports.append(BalancedOrbitReport(K=K, best=best, balanced=balanced, holds=holds))
    return reports
