"""
optimize.py
───────────
Criterion maximization.

  * optimize_zstar               1D search for z* maximizing lambda_2(z)^p z^2
  * paired_optimal_design        optimal paired-comparison design, standardized
                                 or through the canonical transformation
  * optimize_orbit_quantitative  (z1, z2) search on one triple orbit
  * sweep_orbits                 one optimized row per orbit, with efficiencies
  * equivalence_check            equivalence-theorem certificate for z*
  * product_domination           product design that dominates a paired design
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import permutations, product
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize as so

from . import config
from .choice_model import (
    Beta,
    ChoiceSet,
    ModelKind,
    ModelSpec,
    effect_code,
    moments_to_diff,
    utility_moments,
)
from .design_space import (
    Design,
    OrbitResult,
    OrbitTriple,
    d_criterion,
    design_information,
    efficiency,
    enumerate_orbits,
    evaluate_orbit,
    orbit_information,
    pair_orbit_information,
)
from .errors import (
    DegenerateCorrelationError,
    InfiniteInformationError,
    InvalidInputError,
    NoFiniteOptimumError,
    OptimalityRefutedError,
)
from .special_functions import intensity_lambda2, inverse_intensity_h, std_normal_cdf

logger = logging.getLogger(__name__)

# Largest explicit support paired_optimal_design will list.
MAX_SUPPORT = 100_000


# ── 1.  TYPES ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ZStarResult:
    z_star: float
    p_star: float
    exponent: float


@dataclass(frozen=True)
class PairedDesign:
    """Optimal paired-comparison design: uniform on the depth-K pairs, one t-difference per pair."""
    z_star: ZStarResult
    design: Design
    t_diffs: Tuple[float, ...]


@dataclass(frozen=True)
class EquivalenceCertificate:
    z_star: float
    exponent: float
    grid_size: int
    psi_max: float
    psi_at_support: Tuple[float, float]
    g_min: float
    passed: bool


@dataclass(frozen=True)
class DominationReport:
    det_design: float
    det_product: float
    t_support: Tuple[Tuple[float, float], ...]   # (t-difference, weight) of the product marginal

    @property
    def holds(self) -> bool:
        return self.det_design <= self.det_product * (1 + 1e-9)


@dataclass(frozen=True)
class SweepConfig:
    """
    One table sweep. sigma0_sq and sigma_t_sq are rescaled so that
    sigma_max = 1; sigma0_sq = None means the normalized default.
    """
    K: int
    kind: ModelKind
    sigma0_sq: Optional[float] = None
    sigma_t_sq: float = 0.0
    quantitative: bool = True
    partial_profiles: bool = False
    workers: int = config.WORKERS
    grid: Tuple[float, ...] = config.ORBIT_GRID
    xatol: float = config.ORBIT_XATOL
    tie_rtol: float = config.ORBIT_TIE_RTOL

    def __post_init__(self):
        object.__setattr__(self, 'kind', ModelKind(self.kind))
        if int(self.K) != self.K or not 1 <= self.K <= config.KMAX_GUARD:
            raise InvalidInputError(f"K must lie in 1..{config.KMAX_GUARD}, got {self.K!r}")
        if self.xatol <= 0 or self.tie_rtol <= 0:
            raise InvalidInputError("sweep tolerances must be > 0")
        if int(self.workers) != self.workers or self.workers < 1:
            raise InvalidInputError(f"workers must be a positive integer, got {self.workers!r}")
        if self.sigma_t_sq and not self.quantitative:
            raise InvalidInputError("sigma_t_sq > 0 needs the quantitative attribute")

    def model_spec(self) -> ModelSpec:
        if self.sigma0_sq is None:
            return ModelSpec(self.kind, self.K, sigma_t_sq=self.sigma_t_sq, has_quantitative=self.quantitative)
        scale = 2.0 * (self.K * self.sigma0_sq + self.sigma_t_sq)
        return ModelSpec(self.kind, self.K, sigma0_sq=self.sigma0_sq / scale,
                         sigma_t_sq=self.sigma_t_sq / scale, has_quantitative=self.quantitative)


# ── 2.  PAIRED COMPARISONS ──────────────────────────────────────────────

def _neg_log_pair_criterion(z, p):
    return -(p * np.log(intensity_lambda2(z)) + 2.0 * np.log(z))


def optimize_zstar(p: float) -> ZStarResult:
    """Maximizer z* > 0 of lambda_2(z)^p z^2 (bounded Brent search on the log-criterion)."""
    if not np.isfinite(p) or p < 1:
        raise InvalidInputError(f"exponent must be >= 1, got {p!r}")
    res = so.minimize_scalar(_neg_log_pair_criterion, bounds=config.ZSTAR_BOUNDS, args=(p,),
                             method='bounded', options={'xatol': config.ZSTAR_XATOL})
    z_star = float(res.x)

    step = 1e-4
    here = _neg_log_pair_criterion(z_star, p)
    if not (here < _neg_log_pair_criterion(z_star - step, p) and here < _neg_log_pair_criterion(z_star + step, p)):
        logger.warning(f"z*={z_star:.8f} for p={p} is not bracketed as a strict local maximum")
    logger.debug(f"optimize_zstar: p={p}, z*={z_star:.10f}, evaluations={res.nfev}")
    return ZStarResult(z_star=z_star, p_star=std_normal_cdf(z_star), exponent=float(p))


def _profile_code(levels: Sequence[int], spec: ModelSpec) -> np.ndarray:
    if len(levels) != spec.K:
        raise InvalidInputError(f"profile has {len(levels)} levels, the model has K = {spec.K}")
    return np.concatenate([effect_code(level, spec.v) for level in levels])


def _require_beta2(beta: Beta):
    if beta.beta2 is None or beta.beta2 == 0.0:
        raise NoFiniteOptimumError("beta2 = 0: the quantitative attribute has no finite optimal setting")


def conditional_t_difference(x1: Sequence[int], x2: Sequence[int], spec: ModelSpec, beta: Beta,
                             z_star: Optional[float] = None) -> float:
    """
    Canonical transformation for the qualitative profiles (x1, x2):
        t1* - t2* = (sigma_max z* - f~1(x)' beta1) / beta2,   f~1 = f(x1) - f(x2).
    """
    if not spec.has_quantitative:
        raise InvalidInputError("the quantitative setting needs a model with a quantitative attribute")
    _require_beta2(beta)
    beta.vector(spec)
    if z_star is None:
        z_star = optimize_zstar(spec.n_params).z_star
    f_diff = _profile_code(x1, spec) - _profile_code(x2, spec)
    return float((np.sqrt(spec.sigma_max_sq) * z_star - f_diff @ np.array(beta.beta1)) / beta.beta2)


def _full_depth_pairs(K: int, v: int):
    # ordered pairs of profiles that differ in every attribute
    for combo in product(permutations(range(1, v + 1), 2), repeat=K):
        yield tuple(c[0] for c in combo), tuple(c[1] for c in combo)


def paired_optimal_design(spec: ModelSpec, beta: Beta) -> PairedDesign:
    """
    Uniform design on the pairs of comparison depth K, each with the
    quantitative difference that puts its standardized mean difference at z*.
    For beta1 = 0 every pair gets t1 - t2 = sigma_max z* / beta2.
    """
    if not spec.has_quantitative:
        raise InvalidInputError("the paired optimal design is defined with a quantitative attribute")
    _require_beta2(beta)
    support_size = (spec.v * (spec.v - 1)) ** spec.K
    if support_size > MAX_SUPPORT:
        raise InvalidInputError(f"the depth-K orbit has {support_size} pairs; at most {MAX_SUPPORT} are listed")

    zs = optimize_zstar(spec.n_params)
    sets, t_diffs = [], []
    for x1, x2 in _full_depth_pairs(spec.K, spec.v):
        t_diff = conditional_t_difference(x1, x2, spec, beta, zs.z_star)
        sets.append(ChoiceSet.of([x1, x2], [t_diff, 0.0]))
        t_diffs.append(t_diff)
    logger.info(f"Paired optimal design: K={spec.K}, v={spec.v}, z*={zs.z_star:.6f}, {len(sets)} support pairs")
    return PairedDesign(z_star=zs, design=Design.uniform(sets), t_diffs=tuple(t_diffs))


# ── 3.  EQUIVALENCE THEOREM ─────────────────────────────────────────────

def psi2(z, z_star: float, p: float):
    """psi_2(z) = lambda_2(z) (z^2 / m2* + (p - 1) / m0*) - p,  m2* = lambda_2(z*) z*^2,  m0* = lambda_2(z*)."""
    m0 = intensity_lambda2(z_star)
    m2 = m0 * z_star ** 2
    z = np.asarray(z, dtype=float)
    value = intensity_lambda2(z) * (z ** 2 / m2 + (p - 1) / m0) - p
    return float(value) if np.ndim(value) == 0 else value


def lemma3_g(z, z_star: float, p: float):
    """g(z) = h(z) - z^2 / (p m2*) - (p - 1) / (p m0*); g >= 0 exactly where psi_2 <= 0."""
    m0 = intensity_lambda2(z_star)
    m2 = m0 * z_star ** 2
    z = np.asarray(z, dtype=float)
    value = inverse_intensity_h(z) - z ** 2 / (p * m2) - (p - 1) / (p * m0)
    return float(value) if np.ndim(value) == 0 else value


def equivalence_check(z_star: float, p: float, grid: Optional[np.ndarray] = None,
                      tol: float = config.PSI_TOL) -> EquivalenceCertificate:
    """
    Certifies that the product design at +-z* is D-optimal: psi_2 <= tol on
    the grid (default 4001 points on [-10, 10]) and |psi_2(+-z*)| <= tol.
    Raises OptimalityRefutedError with the certificate attached otherwise.
    """
    if grid is None:
        grid = np.linspace(-10.0, 10.0, 4001)
    grid = np.asarray(grid, dtype=float)
    psi = psi2(grid, z_star, p)
    at_support = (psi2(z_star, z_star, p), psi2(-z_star, z_star, p))
    g_min = float(np.min(lemma3_g(grid, z_star, p)))
    psi_max = float(np.max(psi))
    passed = psi_max <= tol and max(abs(v) for v in at_support) <= tol and g_min >= -tol

    certificate = EquivalenceCertificate(
        z_star=float(z_star), exponent=float(p), grid_size=len(grid),
        psi_max=psi_max, psi_at_support=at_support, g_min=g_min, passed=passed,
    )
    if not passed:
        raise OptimalityRefutedError(
            f"equivalence check failed for z*={z_star}, p={p}: max psi_2 = {psi_max:.3e}, g_min = {g_min:.3e}",
            certificate=certificate,
        )
    logger.debug(f"Equivalence certificate for p={p}: max psi_2 = {psi_max:.3e}")
    return certificate


# ── 4.  TRIPLE ORBITS WITH A QUANTITATIVE ATTRIBUTE ─────────────────────

def _pair_depths(depth: OrbitTriple):
    return {(0, 1): depth.d12, (0, 2): depth.d13, (1, 2): depth.d23}


def symmetric_settings(depth: OrbitTriple, z: Sequence[float]) -> List[Tuple[float, float]]:
    """
    Images of (z1, z2) under the relabellings of alternatives that keep the
    comparison depth, re-standardized to z3 = 0. The identity comes first.
    """
    d = _pair_depths(depth)
    t = (float(z[0]), float(z[1]), 0.0)
    images = []
    for perm in permutations(range(3)):
        if all(d[tuple(sorted((perm[i], perm[j])))] == d[(i, j)] for i, j in d):
            moved = [t[perm[k]] for k in range(3)]
            image = (moved[0] - moved[2], moved[1] - moved[2])
            if not any(np.allclose(image, seen, atol=1e-12) for seen in images):
                images.append(image)
    return images


def _orbit_criterion(z, depth: OrbitTriple, spec: ModelSpec, beta: Beta) -> float:
    try:
        return d_criterion(orbit_information(depth, spec, beta, z), spec.sigma_max_sq)
    except (InfiniteInformationError, DegenerateCorrelationError):
        return 0.0


def _is_sharp_duplicate_orbit(depth: OrbitTriple, spec: ModelSpec) -> bool:
    # alternatives 2 and 3 share every level and the quantitative part-worth is deterministic
    return spec.kind is ModelKind.MODEL_II and spec.sigma_t_sq == 0.0 and depth.d23 == 0


def _orientation_violations(z, kind: ModelKind, eps: float = 1e-6) -> int:
    # Model I rows list utilities descending (z1 >= z2 >= 0), Model II rows ascending (z1 <= z2 <= 0)
    z1, z2 = z
    if kind is ModelKind.MODEL_I:
        return int(z1 < z2 - eps) + int(z2 < -eps)
    return int(z1 > z2 + eps) + int(z2 > eps)


def _tie_key(z, kind: ModelKind):
    return _orientation_violations(z, kind), round(abs(z[1]), 6), round(abs(z[0]), 6), z[0]


def _probabilities_out_of_order(probs, kind: ModelKind, tol: float = 1e-9) -> bool:
    p1, p2, p3 = probs
    if kind is ModelKind.MODEL_I:
        return p1 < p2 - tol or p2 < p3 - tol
    return p1 > p2 + tol or p2 > p3 + tol


def optimize_orbit_quantitative(depth: OrbitTriple, spec: ModelSpec,
                                grid: Sequence[float] = config.ORBIT_GRID,
                                xatol: float = config.ORBIT_XATOL,
                                tie_rtol: float = config.ORBIT_TIE_RTOL) -> OrbitResult:
    """
    Maximizes det M(orbit (x) delta_z) over z = (z1, z2) at beta1 = 0, beta2 = 1.

    Nelder-Mead from every point of grid x grid. Optima within tie_rtol of the
    best, and their symmetric images, resolve first to the orientation with
    z1 >= z2 >= 0 (Model I) or z1 <= z2 <= 0 (Model II), then to the smallest
    |z2|, smallest |z1|, smallest z1. Model II orbits with two
    indistinguishable alternatives under a sharp decision are searched along
    z2 = 0, z1 < 0.
    """
    if not spec.has_quantitative:
        raise InvalidInputError("the orbit search needs a model with a quantitative attribute")
    beta = Beta.standardized(spec)
    objective = lambda z: -_orbit_criterion(z, depth, spec, beta)

    if _is_sharp_duplicate_orbit(depth, spec):
        lo, hi = config.ZSTAR_BOUNDS
        res = so.minimize_scalar(lambda z1: objective((z1, 0.0)), bounds=(-hi, -lo),
                                 method='bounded', options={'xatol': config.ZSTAR_XATOL})
        z_opt = (float(res.x), 0.0)
    else:
        candidates = []
        for start in product(grid, repeat=2):
            x0 = np.array(start, dtype=float)
            simplex = np.array([x0, x0 + (0.25, 0.0), x0 + (0.0, 0.25)])
            res = so.minimize(objective, x0=x0, method='Nelder-Mead',
                              options={'xatol': xatol, 'fatol': 1e-10, 'maxiter': 4000,
                                       'initial_simplex': simplex})
            candidates.append((-float(res.fun), (float(res.x[0]), float(res.x[1]))))
            logger.debug(f"orbit {depth}: start {start} -> z={res.x}, crit={-res.fun:.8f}")

        top = max(c for c, _ in candidates)
        tied = [z for c, z in candidates if c >= top * (1 - tie_rtol)]
        images = [image for z in tied for image in symmetric_settings(depth, z)]
        z_opt = min(images, key=lambda z: _tie_key(z, spec.kind))
        distinct = {(round(a, 3), round(b, 3)) for a, b in images}
        if len(distinct) > 1:
            logger.warning(f"orbit {depth}: {len(distinct)} symmetric optima, reporting z={z_opt[0]:.4f},{z_opt[1]:.4f}")

    result = evaluate_orbit(depth, spec, beta, z_opt)
    if _probabilities_out_of_order(result.probs, spec.kind):
        expected = 'p1 >= p2 >= p3' if spec.kind is ModelKind.MODEL_I else 'p1 <= p2 <= p3'
        logger.warning(f"orbit {depth}: probabilities {tuple(round(p, 3) for p in result.probs)} "
                       f"break the usual ordering {expected}")
    logger.info(f"K={spec.K} orbit {depth}: z=({z_opt[0]:.4f}, {z_opt[1]:.4f}), crit={result.crit:.6f}")
    return result


def verify_orbit_optimum(result: OrbitResult, spec: ModelSpec, half_width: float = 0.2, n: int = 41):
    """Largest criterion on an n x n grid around the reported optimum, and whether it stays below it."""
    beta = Beta.standardized(spec)
    z1, z2 = result.z_opt
    offsets = np.linspace(-half_width, half_width, n)
    grid_max = max(_orbit_criterion((z1 + a, z2 + b), result.depth, spec, beta)
                   for a in offsets for b in offsets)
    return grid_max, grid_max <= result.crit * (1 + 1e-7)


def _sweep_task(args):
    depth, spec, cfg = args
    if cfg.quantitative:
        return optimize_orbit_quantitative(depth, spec, cfg.grid, cfg.xatol, cfg.tie_rtol)
    return evaluate_orbit(depth, spec, Beta.zero(spec))


def sweep_orbits(cfg: SweepConfig) -> List[OrbitResult]:
    """
    One row per canonical orbit (full profile unless cfg.partial_profiles),
    in canonical order whatever cfg.workers is.
    """
    spec = cfg.model_spec()
    orbits = enumerate_orbits(cfg.K, full_profile=not cfg.partial_profiles)
    tasks = [(depth, spec, cfg) for depth in orbits]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(task) for task in tasks]
    results = efficiency(results)
    best = [str(r.depth) for r in results if r.best]
    logger.info(f"Sweep K={cfg.K}, model {cfg.kind.value}: {len(results)} orbits, best {', '.join(best)}")
    return results


# ── 5.  PRODUCT-DESIGN DOMINATION ───────────────────────────────────────

def _det(info: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(info)
    return float(np.exp(logdet)) if sign > 0 else 0.0


def product_domination(xi: Design, spec: ModelSpec) -> DominationReport:
    """
    For a paired design xi at beta1 = 0, beta2 = 1: rescales each support
    point's t-difference to zeta = t_diff / sigma(A), moves it to the depth-K
    orbit at sigma_max zeta and compares det M(xi) with the determinant of
    that product design. Points with sigma(A) = 0 carry no information and
    are dropped.
    """
    if not spec.has_quantitative:
        raise InvalidInputError("product domination is defined with a quantitative attribute")
    beta = Beta.standardized(spec)
    sigma_max = np.sqrt(spec.sigma_max_sq)

    support = []
    info_product = np.zeros((spec.n_params, spec.n_params))
    for cs, weight in xi.points:
        if cs.m != 2:
            raise InvalidInputError("product domination is defined for paired designs")
        sigma_sq = moments_to_diff(*utility_moments(cs, beta, spec)).sigma_sq[0, 1]
        if sigma_sq <= 0 or weight == 0:
            continue
        t_diff = cs.alternatives[0].t - cs.alternatives[1].t
        rescaled = sigma_max * t_diff / np.sqrt(sigma_sq)
        support.append((float(rescaled), weight))
        info_product += weight * pair_orbit_information(spec.K, spec, beta, rescaled)

    return DominationReport(
        det_design=_det(design_information(xi, beta, spec)),
        det_product=_det(info_product),
        t_support=tuple(support),
    )
