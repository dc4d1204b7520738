"""
cli.py
──────
Command-line front end.

  python -m probit_design table1 --kmax 7
  python -m probit_design table --id 3 --kmax 7 --workers 4
  python -m probit_design verify --suite all --seed 42
  python -m probit_design design --config design.json --K 3

CSV and JSON go to stdout (or --out); log lines go to stderr and, when
PROBIT_DESIGN_LOG_DIR is set, to a timestamped log file.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import config
from .choice_model import Beta, ModelKind, ModelSpec, preference_probs
from .design_space import OrbitResult, d_criterion, design_information
from .errors import InvalidInputError, ProbitDesignError
from .optimize import SweepConfig, optimize_zstar, paired_optimal_design, sweep_orbits
from .oracle import MAX_ENUMERATION_K, enumerate_orbit_designs, enumerate_pair_orbit
from .verification import SUITES, run_verification

logger = logging.getLogger(__name__)

TABLE1_K = (1, 2, 4, 8, 10, 50, 100)
TABLE1_HEADER = ['K', 'z_star', 'p_star']
TABLE_HEADER = ['K', 'd12', 'd13', 'd23', 'z1', 'z2', 'p1', 'p2', 'p3', 'crit', 'eff', 'best']
VERIFY_HEADER = ['suite', 'name', 'passed', 'observed', 'threshold', 'detail']
FORMATS = ('csv', 'json')


# ── 1.  RUN CONFIGURATION ───────────────────────────────────────────────

@dataclass(frozen=True)
class RunConfig:
    """Settings of one `design` run after merging flags, config file, environment and defaults."""
    m: int = 2
    K: int = 2
    v: int = 2
    model: str = 'I'
    sigma0_sq: Optional[float] = None
    sigma_t_sq: float = 0.0
    quantitative: bool = True
    beta1: Optional[Tuple[float, ...]] = None
    beta2: Optional[float] = 1.0
    workers: int = config.WORKERS

    def __post_init__(self):
        if self.m not in (2, 3):
            raise InvalidInputError(f"m must be 2 (pairs) or 3 (triples), got {self.m!r}")
        if self.beta1 is not None:
            object.__setattr__(self, 'beta1', tuple(float(b) for b in self.beta1))
        self.model_spec()
        self.beta()

    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.model, self.K, self.v, sigma0_sq=self.sigma0_sq,
                         sigma_t_sq=self.sigma_t_sq, has_quantitative=self.quantitative)

    def beta(self) -> Beta:
        spec = self.model_spec()
        beta1 = self.beta1 if self.beta1 is not None else (0.0,) * spec.n_qualitative
        beta = Beta(beta1, self.beta2 if self.quantitative else None)
        beta.vector(spec)
        return beta


_RUN_FIELDS = {f.name for f in fields(RunConfig)}


def _read_config_file(path: str) -> dict:
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise InvalidInputError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidInputError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(data) - _RUN_FIELDS)
    if unknown:
        raise InvalidInputError(f"unknown keys in {path}: {', '.join(unknown)}")
    return data


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Flags > JSON config file > environment > built-in defaults."""
    settings = {'workers': config.WORKERS}
    if args.config:
        settings.update(_read_config_file(args.config))
        logger.info(f"Loaded design settings from {args.config}")
    for name in _RUN_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    return RunConfig(**settings)


# ── 2.  FORMATTING ──────────────────────────────────────────────────────

def round_probabilities(probs: Sequence[float], decimals: int = 3) -> List[float]:
    """Largest-remainder rounding: the rounded values still sum to exactly 1."""
    scale = 10 ** decimals
    raw = np.asarray(probs, dtype=float) * scale
    units = np.floor(raw)
    short = int(round(scale - units.sum()))
    order = np.argsort(-(raw - units), kind='stable')
    units[order[:short]] += 1
    return [float(u) / scale for u in units]


def _fmt(value: float, decimals: int, full_precision: bool) -> str:
    if full_precision:
        return repr(float(value))
    return f"{round(float(value), decimals) + 0.0:.{decimals}f}"


def _to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _to_json(payload) -> str:
    return json.dumps(payload, indent=2) + '\n'


def _emit(text: str, out: Optional[str]):
    if out:
        directory = os.path.dirname(out)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(out, 'w', encoding='utf-8', newline='') as fh:
            fh.write(text)
        logger.info(f"Output written to {out}")
    else:
        sys.stdout.write(text)


def _probability_cells(result: OrbitResult, full_precision: bool) -> List[str]:
    probs = list(result.probs)
    if result.duplicates == ((1, 2),):
        shown = [probs[0], probs[1] + probs[2]]
        if not full_precision:
            shown = round_probabilities(shown)
        return [_fmt(shown[0], 3, full_precision), f"({_fmt(shown[1], 3, full_precision)})", '']
    if not full_precision:
        probs = round_probabilities(probs)
    return [_fmt(p, 3, full_precision) for p in probs]


def table_row(result: OrbitResult, full_precision: bool = False) -> List[str]:
    z_cells = ['', ''] if result.z_opt is None else [_fmt(z, 2, full_precision) for z in result.z_opt]
    return ([str(result.K)] + [str(d) for d in result.depth.as_tuple()] + z_cells
            + _probability_cells(result, full_precision)
            + [_fmt(result.crit, 3, full_precision), _fmt(result.eff, 3, full_precision),
               '1' if result.best else '0'])


def _result_dict(result: OrbitResult) -> dict:
    return {
        'K': result.K,
        'depth': list(result.depth.as_tuple()),
        'z': None if result.z_opt is None else list(result.z_opt),
        'probs': list(result.probs),
        'crit': result.crit,
        'eff': result.eff,
        'best': result.best,
        'duplicates': [list(g) for g in result.duplicates],
    }


# ── 3.  COMMANDS ────────────────────────────────────────────────────────

def cmd_table1(kmax: int) -> List[dict]:
    """z* and Phi(z*) of the optimal paired design, exponent K + 1."""
    if int(kmax) != kmax or kmax < 1:
        raise InvalidInputError(f"kmax must be a positive integer, got {kmax!r}")
    rows = []
    for K in sorted(set(TABLE1_K) | set(range(1, kmax + 1))):
        zs = optimize_zstar(K + 1)
        rows.append({'K': K, 'z_star': zs.z_star, 'p_star': zs.p_star})
        logger.info(f"K={K}: z*={zs.z_star:.4f}, Phi(z*)={zs.p_star:.4f}")
    return rows


def table_sweep_config(table_id: int, K: int, sigma_t_sq: float = 0.0, partial_profiles: bool = False,
                       workers: int = config.WORKERS) -> SweepConfig:
    if table_id == 2:
        if sigma_t_sq:
            raise InvalidInputError("table 2 has no quantitative attribute; --sigma-t-sq does not apply")
        return SweepConfig(K, ModelKind.MODEL_II, quantitative=False,
                           partial_profiles=partial_profiles, workers=workers)
    if table_id == 3:
        kind = ModelKind.MODEL_I
    elif table_id == 4:
        kind = ModelKind.MODEL_II
    else:
        raise InvalidInputError(f"table id must be 2, 3 or 4, got {table_id!r}")
    return SweepConfig(K, kind, sigma_t_sq=sigma_t_sq, quantitative=True,
                       partial_profiles=partial_profiles, workers=workers)


def cmd_table(table_id: int, kmax: int, sigma_t_sq: float = 0.0, partial_profiles: bool = False,
              workers: int = config.WORKERS) -> List[OrbitResult]:
    """One row per canonical orbit and K; table 2 starts at K = 2."""
    if int(kmax) != kmax or not 1 <= kmax <= config.KMAX_GUARD:
        raise InvalidInputError(f"kmax must lie in 1..{config.KMAX_GUARD}, got {kmax!r}")
    first = 2 if table_id == 2 else 1
    results = []
    for K in range(first, kmax + 1):
        results.extend(sweep_orbits(table_sweep_config(table_id, K, sigma_t_sq, partial_profiles, workers)))
    return results


def _support_entry(cs, weight, beta, spec) -> dict:
    return {
        'alternatives': [{'levels': list(a.levels), 't': a.t} for a in cs.alternatives],
        'weight': weight,
        'probs': [float(p) for p in preference_probs(cs, beta, spec).probs],
    }


def cmd_design(run: RunConfig) -> dict:
    """
    Pairs: the optimal paired design (canonical transformation for general
    beta) or, without a quantitative attribute, the depth-K pair orbit.
    Triples: the best orbit of the sweep for the model, in the normalized
    parametrization sigma_max = 1, beta1 = 0, beta2 = 1.
    """
    summary = {}
    if run.m == 2:
        spec, beta = run.model_spec(), run.beta()
        if spec.has_quantitative:
            paired = paired_optimal_design(spec, beta)
            xi = paired.design
            summary = {'z_star': paired.z_star.z_star, 'p_star': paired.z_star.p_star}
        else:
            xi = enumerate_pair_orbit(spec.K, spec.K, spec.v)
            summary = {'depth': spec.K}
    else:
        if run.beta1 is not None and any(run.beta1):
            raise InvalidInputError("triple designs are computed at beta1 = 0")
        if run.K > MAX_ENUMERATION_K:
            raise InvalidInputError(
                f"listing a triple orbit needs K <= {MAX_ENUMERATION_K}; use `table` for the orbit summary")
        cfg = SweepConfig(run.K, run.model, sigma0_sq=run.sigma0_sq, sigma_t_sq=run.sigma_t_sq,
                          quantitative=run.quantitative, workers=run.workers)
        spec = cfg.model_spec()
        beta = Beta.standardized(spec) if spec.has_quantitative else Beta.zero(spec)
        best = next(r for r in sweep_orbits(cfg) if r.best)
        xi = enumerate_orbit_designs(best.depth, run.K, best.z_opt)
        summary = {'depth': list(best.depth.as_tuple()), 'z': None if best.z_opt is None else list(best.z_opt)}

    info = design_information(xi, beta, spec)
    document = {
        'model': spec.kind.value,
        'spec': {
            'm': run.m, 'K': spec.K, 'v': spec.v,
            'sigma0_sq': spec.sigma0_sq, 'sigma_t_sq': spec.sigma_t_sq,
            'has_quantitative': spec.has_quantitative,
            'beta1': list(beta.beta1), 'beta2': beta.beta2,
        },
        'support': [_support_entry(cs, w, beta, spec) for cs, w in xi.points],
        'information': info.tolist(),
        'criterion': d_criterion(info, spec.sigma_max_sq),
    }
    document.update(summary)
    logger.info(f"Design with {len(xi.points)} support points, criterion {document['criterion']:.6f}")
    return document


# ── 4.  ARGUMENT PARSING ────────────────────────────────────────────────

def _float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--format', choices=FORMATS, default=None,
                        help="Output format (default: csv; design writes json only).")
    common.add_argument('--out', default=None, help="Output path (default: stdout).")
    common.add_argument('--full-precision', action='store_true', dest='full_precision',
                        help="Print unrounded values in CSV output.")
    common.add_argument('--log-level', default=None, dest='log_level',
                        help=f"Logging level (default: {config.LOG_LEVEL}).")

    parser = argparse.ArgumentParser(prog='probit_design',
                                     description="Locally D-optimal designs for multinomial probit choice experiments.")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('table1', parents=[common], help="Optimal z* and preference probability for pairs.")
    p.add_argument('--kmax', type=int, default=7, help="Include every K up to kmax (default: 7).")

    p = sub.add_parser('table', parents=[common], help="Orbit sweep tables 2 to 4.")
    p.add_argument('--id', type=int, choices=(2, 3, 4), required=True, dest='table_id')
    p.add_argument('--kmax', type=int, default=7, help="Largest K (default: 7).")
    p.add_argument('--sigma-t-sq', type=float, default=0.0, dest='sigma_t_sq',
                   help="Variance of the quantitative part-worth, tables 3 and 4 (default: 0).")
    p.add_argument('--partial-profiles', action='store_true', dest='partial_profiles',
                   help="Include orbits with mean comparison depth below K.")
    p.add_argument('--workers', type=int, default=config.WORKERS, help="Processes for the orbit sweep.")

    p = sub.add_parser('verify', parents=[common], help="Run numeric verification suites.")
    p.add_argument('--suite', choices=SUITES + ('all',), default='all')
    p.add_argument('--seed', type=int, default=config.SEED)
    p.add_argument('--mc-samples', type=int, default=None, dest='mc_samples',
                   help=f"Monte-Carlo sample size (default: {config.MC_SAMPLES}).")

    p = sub.add_parser('design', parents=[common], help="Compute one design and print it as JSON.")
    p.add_argument('--config', default=None, help="JSON file with design settings.")
    p.add_argument('--m', type=int, choices=(2, 3), default=None)
    p.add_argument('--K', type=int, default=None)
    p.add_argument('--v', type=int, default=None)
    p.add_argument('--model', choices=('I', 'II'), default=None)
    p.add_argument('--sigma0-sq', type=float, default=None, dest='sigma0_sq')
    p.add_argument('--sigma-t-sq', type=float, default=None, dest='sigma_t_sq')
    p.add_argument('--quantitative', action=argparse.BooleanOptionalAction, default=None)
    p.add_argument('--beta1', type=_float_list, default=None, help="Comma-separated qualitative effects.")
    p.add_argument('--beta2', type=float, default=None)
    p.add_argument('--workers', type=int, default=None)
    return parser


def _run(args: argparse.Namespace) -> int:
    if args.command == 'table1':
        rows = cmd_table1(args.kmax)
        if args.format == 'json':
            text = _to_json(rows)
        else:
            text = _to_csv(TABLE1_HEADER, [[r['K'], _fmt(r['z_star'], 3, args.full_precision),
                                            _fmt(r['p_star'], 3, args.full_precision)] for r in rows])
        _emit(text, args.out)
        return 0

    if args.command == 'table':
        results = cmd_table(args.table_id, args.kmax, args.sigma_t_sq, args.partial_profiles, args.workers)
        if args.format == 'json':
            text = _to_json([_result_dict(r) for r in results])
        else:
            text = _to_csv(TABLE_HEADER, [table_row(r, args.full_precision) for r in results])
        _emit(text, args.out)
        return 0

    if args.command == 'verify':
        report = run_verification(args.suite, args.seed, args.mc_samples)
        if args.format == 'json':
            text = _to_json(report.as_dict())
        else:
            text = _to_csv(VERIFY_HEADER, [[c.suite, c.name, int(c.passed), repr(c.observed), repr(c.threshold), c.detail]
                                           for c in report.checks])
        _emit(text, args.out)
        if not report.passed:
            failed = [f"{c.suite}/{c.name}" for c in report.checks if not c.passed]
            logger.error(f"Verification failed: {', '.join(failed)}")
            return 1
        return 0

    if args.format == 'csv':
        raise InvalidInputError("design writes JSON only; drop --format csv or pass --format json")
    document = cmd_design(load_run_config(args))
    _emit(_to_json(document), args.out)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    log_path = config.configure_logging(args.command, args.log_level)
    if log_path:
        logger.info(f"Logging to {log_path}")
    try:
        return _run(args)
    except ProbitDesignError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
