"""
verification.py
───────────────
Numeric verification suites behind `probit_design verify`.

  lemmas       tail and Taylor bounds, positivity of h''' and its identity form
  equivalence  equivalence-theorem certificates for z*, p = 2..8
  mc           Monte-Carlo agreement of the preference probabilities
  identities   structural identities of probabilities, Jacobian, intensity, information
  theorems     orbit invariance, depth independence, canonical transformation, product domination

Every check records what it observed and the threshold it was held to.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy import special

from . import config
from .choice_model import (
    Beta,
    ChoiceSet,
    ModelKind,
    ModelSpec,
    diff_moments,
    information_matrix,
    intensity_matrix,
    intensity_matrix_pinv,
    jacobian,
    preference_probs,
)
from .design_space import (
    Design,
    d_criterion,
    enumerate_orbits,
    orbit_information,
    pair_orbit_information,
)
from .errors import InvalidInputError, OptimalityRefutedError
from .optimize import equivalence_check, optimize_zstar, paired_optimal_design, product_domination
from .oracle import fd_jacobian, mc_preference_probs
from .special_functions import h_third_derivative, h_third_derivative_identity, lemma1_bounds

logger = logging.getLogger(__name__)

SUITES = ('lemmas', 'equivalence', 'mc', 'identities', 'theorems')


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    observed: float
    threshold: float
    detail: str = ''


@dataclass
class VerificationReport:
    seed: int
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            'seed': self.seed,
            'passed': self.passed,
            'checks': [asdict(c) for c in self.checks],
        }


def _record(checks: List[Check], suite: str, name: str, observed: float, threshold: float,
            passed: bool, detail: str = ''):
    check = Check(suite=suite, name=name, passed=bool(passed), observed=float(observed),
                  threshold=float(threshold), detail=detail)
    if check.passed:
        logger.info(f"PASS {suite}/{name}: observed {check.observed:.3e} (threshold {check.threshold:.1e})")
    else:
        logger.error(f"FAIL {suite}/{name}: observed {check.observed:.3e} (threshold {check.threshold:.1e}) {detail}")
    checks.append(check)


# ── random instances ────────────────────────────────────────────────────

def _random_spec(rng: np.random.Generator, m: int) -> ModelSpec:
    K = int(rng.integers(1, 4))
    v = 2 if m == 3 else int(rng.integers(2, 4))
    kind = ModelKind.MODEL_I if rng.random() < 0.5 else ModelKind.MODEL_II
    quantitative = bool(rng.random() < 0.5)
    sigma_t_sq = float(rng.uniform(0.0, 0.3)) if quantitative and rng.random() < 0.5 else 0.0
    return ModelSpec(kind, K, v, sigma0_sq=float(rng.uniform(0.2, 1.0)),
                     sigma_t_sq=sigma_t_sq, has_quantitative=quantitative)


def _random_instance(rng: np.random.Generator, m: Optional[int] = None, regular: bool = True):
    """Random (choice set, beta, spec); with regular=True no utility difference is degenerate."""
    while True:
        size = int(m or rng.integers(2, 4))
        spec = _random_spec(rng, size)
        levels = rng.integers(1, spec.v + 1, size=(size, spec.K))
        t = list(rng.normal(scale=0.8, size=size)) if spec.has_quantitative else None
        cs = ChoiceSet.of(levels.tolist(), t)
        beta2 = float(rng.normal(scale=0.8)) if spec.has_quantitative else None
        beta = Beta(tuple(rng.normal(scale=0.5, size=spec.n_qualitative)), beta2)
        if not regular or not diff_moments(cs, beta, spec).degenerate:
            return cs, beta, spec


# ── 1.  LEMMAS ──────────────────────────────────────────────────────────

def _suite_lemmas(seed: int) -> List[Check]:
    checks = []
    grid = np.linspace(0.01, 10.0, 1000)
    h3 = h_third_derivative(grid)
    _record(checks, 'lemmas', 'h3_positive', np.min(h3), 0.0, np.min(h3) > 0)
    _record(checks, 'lemmas', 'h3_at_zero', abs(h_third_derivative(0.0)), 0.0, h_third_derivative(0.0) == 0.0)

    upper = np.linspace(1.0, 10.0, 1000)
    a, _ = lemma1_bounds(upper)
    margin = np.min(special.ndtr(-upper) / a) - 1.0
    _record(checks, 'lemmas', 'tail_lower_bound', margin, -1e-12, margin >= -1e-12,
            'min of (1 - Phi(z)) / a(z) - 1 on [1, 10]')

    lower = np.linspace(0.0, 1.0, 1000)
    _, b = lemma1_bounds(lower)
    excess = np.max(special.ndtr(lower) - 0.5 - b)
    _record(checks, 'lemmas', 'taylor_upper_bound', excess, 1e-15, excess <= 1e-15,
            'max of Phi(z) - 1/2 - b(z) on [0, 1]')

    identity = h_third_derivative_identity(upper)
    direct = h_third_derivative(upper)
    rel = np.max(np.abs(identity - direct) / np.abs(direct))
    _record(checks, 'lemmas', 'h3_identity_form', rel, 1e-8, rel <= 1e-8,
            'relative gap between the identity form and the closed form on [1, 10]')
    return checks


# ── 2.  EQUIVALENCE ─────────────────────────────────────────────────────

def _suite_equivalence(seed: int) -> List[Check]:
    checks = []
    z_values = []
    for p in range(2, 9):
        zs = optimize_zstar(p)
        z_values.append(zs.z_star)
        try:
            cert = equivalence_check(zs.z_star, p)
            _record(checks, 'equivalence', f'psi2_p{p}', cert.psi_max, config.PSI_TOL, cert.passed,
                    f'z*={zs.z_star:.6f}')
        except OptimalityRefutedError as exc:
            _record(checks, 'equivalence', f'psi2_p{p}', exc.certificate.psi_max, config.PSI_TOL, False, str(exc))

    steps = np.diff(z_values)
    _record(checks, 'equivalence', 'zstar_decreasing', np.max(steps), 0.0, np.all(steps < 0))

    z_star = optimize_zstar(2).z_star
    try:
        cert = equivalence_check(z_star + 0.05, 2)
        _record(checks, 'equivalence', 'perturbed_support_refuted', cert.psi_max, config.PSI_TOL, False,
                'a non-optimal support point passed the certificate')
    except OptimalityRefutedError as exc:
        _record(checks, 'equivalence', 'perturbed_support_refuted', exc.certificate.psi_max, config.PSI_TOL, True)
    return checks


# ── 3.  MONTE CARLO ─────────────────────────────────────────────────────

def _suite_mc(seed: int, n_samples: Optional[int] = None, n_cases: int = 100) -> List[Check]:
    checks = []
    n = n_samples or config.MC_SAMPLES

    spec = ModelSpec(ModelKind.MODEL_II, 2)
    cs = ChoiceSet.of([(1, 1), (2, 2), (1, 2)])
    est = mc_preference_probs(cs, Beta.zero(spec), spec, n=n, seed=seed)
    gap = np.max(np.abs(est.p_hat - np.array([0.375, 0.375, 0.25])) / np.maximum(est.std_err, 1e-300))
    _record(checks, 'mc', 'model2_indifference_211', gap, 4.0, gap <= 4.0, 'max |p_hat - p| in standard errors')

    again = mc_preference_probs(cs, Beta.zero(spec), spec, n=n, seed=seed)
    _record(checks, 'mc', 'seeded_reproducibility', np.max(np.abs(again.p_hat - est.p_hat)), 0.0,
            np.array_equal(again.p_hat, est.p_hat))

    rng = np.random.default_rng(seed)
    within = 0
    for case in range(n_cases):
        cs, beta, spec = _random_instance(rng, regular=False)
        probs = preference_probs(cs, beta, spec).probs
        est = mc_preference_probs(cs, beta, spec, n=n, seed=seed + case + 1)
        bound = 4.0 * np.sqrt(probs * (1.0 - probs) / n) + 1e-12
        within += bool(np.all(np.abs(est.p_hat - probs) <= bound))
    share = within / n_cases
    _record(checks, 'mc', 'random_suite_within_4se', share, 0.95, share >= 0.95,
            f'{within} of {n_cases} cases within 4 standard errors')
    return checks


# ── 4.  STRUCTURAL IDENTITIES ───────────────────────────────────────────

def _suite_identities(seed: int, n_cases: int = 500) -> List[Check]:
    checks = []
    rng = np.random.default_rng(seed)
    worst = dict(prob_sum=0.0, jac_rows=0.0, lam_rows=0.0, lam_triple=0.0, lam_pinv=0.0, info_eig=0.0, fd=0.0)

    for case in range(n_cases):
        cs, beta, spec = _random_instance(rng)
        probs = preference_probs(cs, beta, spec).probs
        jac = jacobian(cs, beta, spec)
        lam = intensity_matrix(cs, beta, spec)
        lam_pinv = intensity_matrix_pinv(cs, beta, spec)
        info = information_matrix(cs, beta, spec)
        scale = max(1.0, np.max(np.abs(lam)))

        worst['prob_sum'] = max(worst['prob_sum'], abs(probs.sum() - 1.0))
        worst['jac_rows'] = max(worst['jac_rows'], np.max(np.abs(jac.sum(axis=1))))
        worst['lam_rows'] = max(worst['lam_rows'], np.max(np.abs(lam.sum(axis=1))) / scale)
        worst['lam_pinv'] = max(worst['lam_pinv'], np.max(np.abs(lam - lam_pinv)) / scale)
        worst['info_eig'] = min(worst['info_eig'], np.min(np.linalg.eigvalsh(info)))
        if cs.m == 3:
            for i, j, l in ((0, 1, 2), (0, 2, 1), (1, 2, 0)):
                gap = abs(2 * lam[i, j] - (lam[l, l] - lam[i, i] - lam[j, j])) / scale
                worst['lam_triple'] = max(worst['lam_triple'], gap)
        if case < 100:
            worst['fd'] = max(worst['fd'], np.max(np.abs(fd_jacobian(cs, beta, spec) - jac)))

    _record(checks, 'identities', 'probabilities_sum_to_one', worst['prob_sum'], 1e-10, worst['prob_sum'] <= 1e-10)
    _record(checks, 'identities', 'jacobian_rows_sum_to_zero', worst['jac_rows'], 1e-12, worst['jac_rows'] <= 1e-12)
    _record(checks, 'identities', 'intensity_rows_sum_to_zero', worst['lam_rows'], 1e-10, worst['lam_rows'] <= 1e-10)
    _record(checks, 'identities', 'intensity_triple_identity', worst['lam_triple'], 1e-9, worst['lam_triple'] <= 1e-9,
            '2 L_ij = L_ll - L_ii - L_jj')
    _record(checks, 'identities', 'reduced_equals_pinv', worst['lam_pinv'], 1e-9, worst['lam_pinv'] <= 1e-9)
    _record(checks, 'identities', 'information_psd', worst['info_eig'], -1e-10, worst['info_eig'] >= -1e-10)
    _record(checks, 'identities', 'jacobian_vs_finite_differences', worst['fd'], 1e-5, worst['fd'] <= 1e-5)
    return checks


# ── 5.  THEOREMS ────────────────────────────────────────────────────────

def _suite_theorems(seed: int, n_designs: int = 200) -> List[Check]:
    checks = []

    spread = 0.0
    for K in range(2, 6):
        spec = ModelSpec(ModelKind.MODEL_I, K)
        crits = [d_criterion(orbit_information(o, spec, Beta.zero(spec)), spec.sigma_max_sq)
                 for o in enumerate_orbits(K)]
        spread = max(spread, (max(crits) - min(crits)) / max(crits))
    _record(checks, 'theorems', 'model1_orbit_invariance', spread, 1e-10, spread <= 1e-10,
            'relative spread of the criterion over full-profile orbits, K = 2..5')

    spec = ModelSpec(ModelKind.MODEL_II, 4)
    beta = Beta.zero(spec)
    infos = [pair_orbit_information(d, spec, beta) for d in range(1, 5)]
    gap = max(np.max(np.abs(m - infos[0])) for m in infos)
    _record(checks, 'theorems', 'model2_pair_depth_independence', gap, 1e-10, gap <= 1e-10)
    zero = np.max(np.abs(pair_orbit_information(0, spec, beta)))
    _record(checks, 'theorems', 'model2_pair_depth_zero', zero, 0.0, zero == 0.0)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for kind in ModelKind:
        spec = ModelSpec(kind, 2, sigma0_sq=0.4, sigma_t_sq=0.1, has_quantitative=True)
        beta = Beta(tuple(rng.normal(size=2)), float(rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)))
        paired = paired_optimal_design(spec, beta)
        target = paired.z_star.p_star
        for cs, _ in paired.design.points:
            worst = max(worst, abs(preference_probs(cs, beta, spec).probs[0] - target))
    _record(checks, 'theorems', 'canonical_transformation_retains_probability', worst, 1e-9, worst <= 1e-9)

    failures = 0
    for _ in range(n_designs):
        kind = ModelKind.MODEL_I if rng.random() < 0.5 else ModelKind.MODEL_II
        K = int(rng.integers(1, 4))
        sigma_t_sq = float(rng.uniform(0.0, 0.3)) if rng.random() < 0.5 else 0.0
        spec = ModelSpec(kind, K, sigma0_sq=float(rng.uniform(0.2, 1.0)), sigma_t_sq=sigma_t_sq,
                         has_quantitative=True)
        n_points = int(rng.integers(1, 5))
        sets = []
        for _ in range(n_points):
            levels = rng.integers(1, 3, size=(2, K)).tolist()
            sets.append(ChoiceSet.of(levels, [float(rng.normal(scale=1.5)), 0.0]))
        weights = rng.dirichlet(np.ones(n_points))
        report = product_domination(Design(tuple(zip(sets, weights))), spec)
        failures += not report.holds
    _record(checks, 'theorems', 'product_design_domination', failures, 0, failures == 0,
            f'{failures} of {n_designs} random paired designs beat their product design')
    return checks


def run_suite(suite: str, seed: int = config.SEED, mc_samples: Optional[int] = None) -> List[Check]:
    if suite == 'lemmas':
        return _suite_lemmas(seed)
    if suite == 'equivalence':
        return _suite_equivalence(seed)
    if suite == 'mc':
        return _suite_mc(seed, mc_samples)
    if suite == 'identities':
        return _suite_identities(seed)
    if suite == 'theorems':
        return _suite_theorems(seed)
    raise InvalidInputError(f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}")


def run_verification(suite: str = 'all', seed: int = config.SEED, mc_samples: Optional[int] = None) -> VerificationReport:
    report = VerificationReport(seed=seed)
    for name in (SUITES if suite == 'all' else (suite,)):
        logger.info(f"Running verification suite '{name}' (seed {seed})")
        report.checks.extend(run_suite(name, seed, mc_samples))
    logger.info(f"Verification finished: {sum(c.passed for c in report.checks)}/{len(report.checks)} checks passed")
    return report
