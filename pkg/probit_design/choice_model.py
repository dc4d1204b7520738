"""
choice_model.py
───────────────
Alternatives, choice sets and the multinomial probit response model for
paired comparisons (m = 2) and triples (m = 3).

Utilities are sums of normally distributed part-worths. Under Model I every
alternative draws its own part-worths; under Model II alternatives sharing a
level on an attribute share that draw. Everything downstream (probabilities,
Jacobian, intensity, information) is computed from the mean vector mu and
the utility covariance V of one choice set.

Choice sets containing alternatives whose utility difference has zero
variance are collapsed before any probability is evaluated:
  * equal means     -> duplicates, their probability is split equally
  * unequal means   -> the dominated alternative gets probability 0
"""

import logging
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import special

from .errors import DegenerateCorrelationError, InfiniteInformationError, InvalidInputError
from .special_functions import bvn_cdf, bvn_cdf_dx, intensity_lambda2, std_normal_pdf

logger = logging.getLogger(__name__)

# Difference variances below this fraction of the largest utility variance count as zero.
DEGENERATE_RTOL = 1e-12

# For alternative j of a triple, the indices (i, l) of the other two.
_OTHERS = ((1, 2), (0, 2), (0, 1))

_PAIR_PATTERN = np.array([[1.0, -1.0], [-1.0, 1.0]])


# ── 1.  MODEL AND CHOICE-SET TYPES ──────────────────────────────────────

class ModelKind(str, Enum):
    MODEL_I = 'I'     # independent part-worths
    MODEL_II = 'II'   # shared part-worths for shared levels


@dataclass(frozen=True)
class ModelSpec:
    """
    Stochastic assumptions of the choice experiment.

    sigma0_sq defaults to (1/2 - sigma_t_sq) / K, which puts sigma_max at 1.
    sigma_t_sq is the variance of the quantitative part-worth and must be 0
    when there is no quantitative attribute.
    """
    kind: ModelKind
    K: int
    v: int = 2
    sigma0_sq: Optional[float] = None
    sigma_t_sq: float = 0.0
    has_quantitative: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, 'kind', ModelKind(self.kind))
        except ValueError:
            raise InvalidInputError(f"unknown model kind {self.kind!r}; expected 'I' or 'II'") from None
        if int(self.K) != self.K or self.K < 1:
            raise InvalidInputError(f"K must be a positive integer, got {self.K!r}")
        if int(self.v) != self.v or self.v < 2:
            raise InvalidInputError(f"v must be an integer >= 2, got {self.v!r}")
        object.__setattr__(self, 'K', int(self.K))
        object.__setattr__(self, 'v', int(self.v))

        sigma_t_sq = float(self.sigma_t_sq)
        if not np.isfinite(sigma_t_sq) or sigma_t_sq < 0:
            raise InvalidInputError(f"sigma_t_sq must be >= 0, got {self.sigma_t_sq!r}")
        if sigma_t_sq > 0 and not self.has_quantitative:
            raise InvalidInputError("sigma_t_sq > 0 needs a quantitative attribute")
        object.__setattr__(self, 'sigma_t_sq', sigma_t_sq)

        if self.sigma0_sq is None:
            if sigma_t_sq >= 0.5:
                raise InvalidInputError(
                    f"sigma_t_sq must be < 1/2 when sigma_max = 1 (normalized default), got {sigma_t_sq!r}")
            sigma0_sq = (0.5 - sigma_t_sq) / self.K
        else:
            sigma0_sq = float(self.sigma0_sq)
        if not np.isfinite(sigma0_sq) or sigma0_sq <= 0:
            raise InvalidInputError(f"sigma0_sq must be > 0, got {sigma0_sq!r}")
        object.__setattr__(self, 'sigma0_sq', sigma0_sq)

    @property
    def n_qualitative(self) -> int:
        return self.K * (self.v - 1)

    @property
    def n_params(self) -> int:
        return self.n_qualitative + (1 if self.has_quantitative else 0)

    @property
    def sigma_max_sq(self) -> float:
        """Largest difference variance 2(K sigma0^2 + sigma_t^2)."""
        return 2.0 * (self.K * self.sigma0_sq + self.sigma_t_sq)


@dataclass(frozen=True)
class Alternative:
    levels: Tuple[int, ...]
    t: Optional[float] = None

    def __post_init__(self):
        levels = tuple(self.levels)
        if any(int(level) != level or level < 1 for level in levels):
            raise InvalidInputError(f"levels must be positive integers, got {levels!r}")
        object.__setattr__(self, 'levels', tuple(int(level) for level in levels))
        if self.t is not None:
            t = float(self.t)
            if not np.isfinite(t):
                raise InvalidInputError(f"quantitative value must be finite, got {self.t!r}")
            object.__setattr__(self, 't', t)


@dataclass(frozen=True)
class ChoiceSet:
    alternatives: Tuple[Alternative, ...]

    def __post_init__(self):
        alternatives = tuple(self.alternatives)
        object.__setattr__(self, 'alternatives', alternatives)
        if len(alternatives) not in (2, 3):
            raise InvalidInputError(f"choice sets hold 2 or 3 alternatives, got {len(alternatives)}")
        if len({len(a.levels) for a in alternatives}) != 1:
            raise InvalidInputError("alternatives of a choice set must share K")
        if len({a.t is None for a in alternatives}) != 1:
            raise InvalidInputError("either every alternative carries a quantitative value or none does")

    @classmethod
    def of(cls, levels: Sequence[Sequence[int]], t: Optional[Sequence[float]] = None) -> 'ChoiceSet':
        """ChoiceSet.of([(1, 1), (2, 2), (1, 2)], t=[0.5, 0.0, 0.0])"""
        if t is None:
            return cls(tuple(Alternative(tuple(row)) for row in levels))
        if len(t) != len(levels):
            raise InvalidInputError("one quantitative value per alternative is required")
        return cls(tuple(Alternative(tuple(row), value) for row, value in zip(levels, t)))

    @property
    def m(self) -> int:
        return len(self.alternatives)

    @property
    def K(self) -> int:
        return len(self.alternatives[0].levels)

    def with_t(self, t: Sequence[float]) -> 'ChoiceSet':
        return ChoiceSet.of([a.levels for a in self.alternatives], t)


@dataclass(frozen=True)
class Beta:
    beta1: Tuple[float, ...]
    beta2: Optional[float] = None

    def __post_init__(self):
        beta1 = tuple(float(b) for b in np.ravel(self.beta1))
        if not all(np.isfinite(beta1)):
            raise InvalidInputError(f"beta1 must be finite, got {self.beta1!r}")
        object.__setattr__(self, 'beta1', beta1)
        if self.beta2 is not None:
            beta2 = float(self.beta2)
            if not np.isfinite(beta2):
                raise InvalidInputError(f"beta2 must be finite, got {self.beta2!r}")
            object.__setattr__(self, 'beta2', beta2)

    @classmethod
    def zero(cls, spec: ModelSpec) -> 'Beta':
        return cls((0.0,) * spec.n_qualitative, 0.0 if spec.has_quantitative else None)

    @classmethod
    def standardized(cls, spec: ModelSpec) -> 'Beta':
        """beta1 = 0, beta2 = 1."""
        if not spec.has_quantitative:
            raise InvalidInputError("the standardized parameter needs a quantitative attribute")
        return cls((0.0,) * spec.n_qualitative, 1.0)

    def vector(self, spec: ModelSpec) -> np.ndarray:
        if len(self.beta1) != spec.n_qualitative:
            raise InvalidInputError(
                f"beta1 has {len(self.beta1)} entries, the model needs K(v-1) = {spec.n_qualitative}")
        if not spec.has_quantitative:
            return np.array(self.beta1)
        if self.beta2 is None:
            raise InvalidInputError("beta2 is required when the model has a quantitative attribute")
        return np.array(self.beta1 + (self.beta2,))


@dataclass(frozen=True)
class DiffMoments:
    """Pairwise difference moments of one choice set.

    sigma_sq[i, j] = Var(U_i - U_j); z[i, j] = (mu_i - mu_j) / sigma_ij;
    rho[j] = corr(U_i - U_j, U_l - U_j) for triples (empty for pairs).
    Zero-variance pairs are listed in `degenerate`; their z is 0 for equal
    means and +-inf otherwise.
    """
    sigma_sq: np.ndarray
    rho: np.ndarray
    z: np.ndarray
    degenerate: Tuple[Tuple[int, int], ...] = ()

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma_sq)


@dataclass(frozen=True)
class ChoiceProbabilities:
    """Preference probabilities plus the collapse that produced them."""
    probs: np.ndarray
    duplicates: Tuple[Tuple[int, ...], ...] = ()
    dominated: Tuple[int, ...] = ()

    @property
    def collapsed(self) -> bool:
        return bool(self.duplicates or self.dominated)


# ── 2.  CODING AND DEPTH ────────────────────────────────────────────────

def effect_code(level: int, v: int) -> np.ndarray:
    """Effect coding: unit vector e_level for level < v, all -1 for level v."""
    if int(v) != v or v < 2:
        raise InvalidInputError(f"v must be an integer >= 2, got {v!r}")
    if int(level) != level or not 1 <= level <= v:
        raise InvalidInputError(f"level must lie in 1..{v}, got {level!r}")
    if level == v:
        return -np.ones(v - 1)
    return np.eye(v - 1)[int(level) - 1]


def regression_vector(a: Alternative, spec: ModelSpec) -> np.ndarray:
    if len(a.levels) != spec.K:
        raise InvalidInputError(f"alternative has {len(a.levels)} levels, the model has K = {spec.K}")
    if (a.t is not None) != spec.has_quantitative:
        raise InvalidInputError("quantitative value present iff the model has a quantitative attribute")
    parts = [effect_code(level, spec.v) for level in a.levels]
    if spec.has_quantitative:
        parts.append(np.array([a.t]))
    return np.concatenate(parts)


def regression_matrix(cs: ChoiceSet, spec: ModelSpec) -> np.ndarray:
    """F(A): p x m, column j is f(a_j)."""
    return np.column_stack([regression_vector(a, spec) for a in cs.alternatives])


def comparison_depth(cs: ChoiceSet):
    """Pair -> d; triple -> (d12, d13, d23). The quantitative attribute is not counted."""
    levels = [a.levels for a in cs.alternatives]

    def differing(i, j):
        return sum(x != y for x, y in zip(levels[i], levels[j]))

    if cs.m == 2:
        return differing(0, 1)
    return differing(0, 1), differing(0, 2), differing(1, 2)


# ── 3.  UTILITY MOMENTS ─────────────────────────────────────────────────

def _check_consistent(cs: ChoiceSet, spec: ModelSpec):
    if cs.K != spec.K:
        raise InvalidInputError(f"choice set has K = {cs.K}, the model has K = {spec.K}")
    if cs.m == 3 and spec.v != 2:
        raise InvalidInputError("triples are supported for v = 2 levels only")
    for a in cs.alternatives:
        if max(a.levels) > spec.v:
            raise InvalidInputError(f"level {max(a.levels)} exceeds v = {spec.v}")


def utility_covariance(cs: ChoiceSet, spec: ModelSpec) -> np.ndarray:
    """
    Model I:  V = (K sigma0^2 + sigma_t^2) I
    Model II: V_ij = sigma0^2 #{k : a_ik = a_jk} + [i = j] sigma_t^2
    """
    _check_consistent(cs, spec)
    if spec.kind is ModelKind.MODEL_I:
        return (spec.K * spec.sigma0_sq + spec.sigma_t_sq) * np.eye(cs.m)
    levels = np.array([a.levels for a in cs.alternatives])
    shared = (levels[:, None, :] == levels[None, :, :]).sum(axis=2)
    return spec.sigma0_sq * shared + spec.sigma_t_sq * np.eye(cs.m)


def utility_moments(cs: ChoiceSet, beta: Beta, spec: ModelSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Mean utilities mu_j = f(a_j)' beta and utility covariance V."""
    cov = utility_covariance(cs, spec)
    mu = regression_matrix(cs, spec).T @ beta.vector(spec)
    return mu, cov


def _check_moments(mu, cov):
    mu = np.asarray(mu, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if mu.ndim != 1 or len(mu) not in (2, 3) or cov.shape != (len(mu), len(mu)):
        raise InvalidInputError(f"need m in (2, 3) means and an m x m covariance, got {mu.shape} and {cov.shape}")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
        raise InvalidInputError("utility moments must be finite")
    return mu, cov


def _zero_variance(mu, cov):
    diag = np.diag(cov)
    sigma_sq = np.maximum(diag[:, None] + diag[None, :] - 2.0 * cov, 0.0)
    np.fill_diagonal(sigma_sq, 0.0)
    zero = sigma_sq <= DEGENERATE_RTOL * max(float(np.max(diag)), np.finfo(float).tiny)
    np.fill_diagonal(zero, False)
    mean_tol = 1e-12 * max(1.0, float(np.max(np.abs(mu))))
    return sigma_sq, zero, mean_tol


def moments_to_diff(mu, cov) -> DiffMoments:
    mu, cov = _check_moments(mu, cov)
    sigma_sq, zero, mean_tol = _zero_variance(mu, cov)
    sigma = np.sqrt(sigma_sq)
    gap = mu[:, None] - mu[None, :]
    gap[np.abs(gap) <= mean_tol] = 0.0

    regular = ~zero
    np.fill_diagonal(regular, False)
    z = np.divide(gap, sigma, out=np.zeros_like(gap), where=regular)
    steep = zero & (gap != 0)
    z[steep] = np.copysign(np.inf, gap[steep])

    rho = np.empty(0)
    if len(mu) == 3:
        rho = np.full(3, np.nan)
        for j, (i, l) in enumerate(_OTHERS):
            den = sigma[i, j] * sigma[j, l]
            if regular[i, j] and regular[j, l]:
                rho[j] = np.clip((cov[i, l] - cov[i, j] - cov[j, l] + cov[j, j]) / den, -1.0, 1.0)

    degenerate = tuple((i, j) for i, j in combinations(range(len(mu)), 2) if zero[i, j])
    return DiffMoments(sigma_sq=sigma_sq, rho=rho, z=z, degenerate=degenerate)


def diff_moments(cs: ChoiceSet, beta: Beta, spec: ModelSpec) -> DiffMoments:
    return moments_to_diff(*utility_moments(cs, beta, spec))


# ── 4.  COLLAPSE OF DEGENERATE CHOICE SETS ──────────────────────────────

@dataclass(frozen=True)
class _Collapse:
    groups: Tuple[Tuple[int, ...], ...]
    dominated: Tuple[int, ...]

    @property
    def representatives(self):
        return [group[0] for group in self.groups]


def _collapse(mu, cov) -> _Collapse:
    _, zero, mean_tol = _zero_variance(mu, cov)
    m = len(mu)

    dominated = set()
    for i, j in combinations(range(m), 2):
        if zero[i, j] and abs(mu[i] - mu[j]) > mean_tol:
            dominated.add(j if mu[i] > mu[j] else i)
    alive = [i for i in range(m) if i not in dominated]

    parent = {i: i for i in alive}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in combinations(alive, 2):
        if zero[i, j]:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

    members = {}
    for i in alive:
        members.setdefault(find(i), []).append(i)
    groups = tuple(sorted(tuple(g) for g in members.values()))
    if len(groups) < m:
        logger.debug(f"Collapsed choice set: groups={groups}, dominated={sorted(dominated)}")
    return _Collapse(groups=groups, dominated=tuple(sorted(dominated)))


def _sub_moments(mu, cov, idx):
    return mu[idx], cov[np.ix_(idx, idx)]


# ── 5.  PROBABILITIES, JACOBIAN, INTENSITY ──────────────────────────────

def _probs_regular(dm: DiffMoments) -> np.ndarray:
    z = dm.z
    if len(z) == 2:
        return np.array([special.ndtr(z[0, 1]), special.ndtr(z[1, 0])])
    return np.array([bvn_cdf(z[j, i], z[j, l], dm.rho[j]) for j, (i, l) in enumerate(_OTHERS)])


def _jacobian_regular(dm: DiffMoments) -> np.ndarray:
    """J[j, i] = d p_j / d mu_i."""
    sigma = dm.sigma
    z = dm.z
    if len(z) == 2:
        return std_normal_pdf(z[0, 1]) / sigma[0, 1] * _PAIR_PATTERN
    jac = np.zeros((3, 3))
    for j, (i, l) in enumerate(_OTHERS):
        h_ji = bvn_cdf_dx(z[j, i], z[j, l], dm.rho[j]) / sigma[j, i]
        h_jl = bvn_cdf_dx(z[j, l], z[j, i], dm.rho[j]) / sigma[j, l]
        jac[j, j] = h_ji + h_jl
        jac[j, i] = -h_ji
        jac[j, l] = -h_jl
    return jac


def _intensity_regular(dm: DiffMoments, probs: np.ndarray, pinv: bool) -> np.ndarray:
    if len(probs) == 2 and not pinv:
        return intensity_lambda2(dm.z[0, 1]) / dm.sigma_sq[0, 1] * _PAIR_PATTERN
    if np.any(probs <= 0.0) or np.any(probs >= 1.0):
        shown = np.clip(probs, 1e-300, 1 - 1e-16)
        raise InfiniteInformationError(f"preference probabilities {shown} reach 0 or 1")
    jac = _jacobian_regular(dm)
    try:
        if pinv:
            cov = np.diag(probs) - np.outer(probs, probs)
            lam = jac.T @ np.linalg.pinv(cov, hermitian=True) @ jac
        else:
            # drop the last category; its row is minus the sum of the others
            p = probs[:-1]
            cov = np.diag(p) - np.outer(p, p)
            lam = jac[:-1].T @ np.linalg.solve(cov, jac[:-1])
    except np.linalg.LinAlgError as exc:
        raise InfiniteInformationError(f"multinomial covariance is singular: {exc}") from exc
    return 0.5 * (lam + lam.T)


def probs_from_moments(mu, cov) -> ChoiceProbabilities:
    mu, cov = _check_moments(mu, cov)
    collapse = _collapse(mu, cov)
    reps = collapse.representatives
    if len(reps) == 1:
        rep_probs = np.ones(1)
    else:
        rep_probs = _probs_regular(moments_to_diff(*_sub_moments(mu, cov, reps)))

    probs = np.zeros(len(mu))
    for group, p in zip(collapse.groups, rep_probs):
        probs[list(group)] = p / len(group)
    return ChoiceProbabilities(
        probs=probs,
        duplicates=tuple(g for g in collapse.groups if len(g) > 1),
        dominated=collapse.dominated,
    )


def jacobian_from_moments(mu, cov) -> np.ndarray:
    dm = moments_to_diff(mu, cov)
    if dm.degenerate:
        raise DegenerateCorrelationError(f"zero-variance utility differences {dm.degenerate}; collapse first")
    return _jacobian_regular(dm)


def intensity_from_moments(mu, cov, pinv: bool = False) -> np.ndarray:
    """
    m x m intensity matrix. Degenerate sets are evaluated on their collapsed
    form and embedded at the representatives, so Lambda 1 = 0 still holds.
    """
    mu, cov = _check_moments(mu, cov)
    collapse = _collapse(mu, cov)
    reps = collapse.representatives
    lam = np.zeros((len(mu), len(mu)))
    if len(reps) < 2:
        return lam
    dm = moments_to_diff(*_sub_moments(mu, cov, reps))
    lam[np.ix_(reps, reps)] = _intensity_regular(dm, _probs_regular(dm), pinv)
    return lam


def preference_probs(cs: ChoiceSet, beta: Beta, spec: ModelSpec) -> ChoiceProbabilities:
    return probs_from_moments(*utility_moments(cs, beta, spec))


def jacobian(cs: ChoiceSet, beta: Beta, spec: ModelSpec) -> np.ndarray:
    return jacobian_from_moments(*utility_moments(cs, beta, spec))


def intensity_matrix(cs: ChoiceSet, beta: Beta, spec: ModelSpec) -> np.ndarray:
    """Lambda = J' Sigma^- J, computed with the last category dropped."""
    return intensity_from_moments(*utility_moments(cs, beta, spec))


def intensity_matrix_pinv(cs: ChoiceSet, beta: Beta, spec: ModelSpec) -> np.ndarray:
    """Same matrix through the Moore-Penrose inverse of the full m x m covariance."""
    return intensity_from_moments(*utility_moments(cs, beta, spec), pinv=True)


def information_matrix(cs: ChoiceSet, beta: Beta, spec: ModelSpec) -> np.ndarray:
    """M(A; beta) = F(A) Lambda F(A)'."""
    f = regression_matrix(cs, spec)
    info = f @ intensity_matrix(cs, beta, spec) @ f.T
    return 0.5 * (info + info.T)


def linear_pair_information(xi, spec: ModelSpec) -> np.ndarray:
    """Linear-model information sum_i w_i f~ f~' of a paired design (f~ = f(a_1) - f(a_2))."""
    info = np.zeros((spec.n_params, spec.n_params))
    for cs, weight in xi.points:
        if cs.m != 2:
            raise InvalidInputError("linear paired-comparison information needs pairs")
        diff = regression_vector(cs.alternatives[0], spec) - regression_vector(cs.alternatives[1], spec)
        info += weight * np.outer(diff, diff)
    return info
