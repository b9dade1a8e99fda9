"""Scenario configs and the staged pipeline that runs them.

Stages run in order and share a ``PipelineState``. A ``LabError`` raised in a
stage is tagged with that stage, which fixes the exit code; any other exception
is wrapped in a ``NumericalError`` first. The failure report and the manifest
are written either way.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from spectral_lab.instrumentation import trace_stage

from . import artifacts
from .conf import lab_setting
from .errors import ConfigError, LabError, NumericalError, PreconditionError, VerificationError
from .forms import ScenarioForm
from .gallery import (
    build_periodic_example, counterexample_check, gen_condensing_spectrum, gen_hermitian_perturbation,
    gen_power_spectrum, gen_random_perturbation,
)
from .lacuna_determinant import (
    argument_variation_split, det_bounds_check, contour_for, corrected_norm_scan, natural_lacuna_check,
    plan_lacuna, riesz_rank, wa_check_nudged,
)
from .operator_model import (
    DiagonalOperator, PerturbationMatrix, assemble, compactness_tail, eigenvalues, fit_subordination, weyl_check,
)
from .resolvent_bounds import (
    ParabolaSpec, StripSpec, parabola_bound_check, strip_bound_check, strip_threshold,
)
from .spectrum_core import noncondensing_l, psi_decompose, resolve_alpha
from .theorem_verifier import comparison_scales, corollary_check, gamma_of, sweep, trusted_range

logger = logging.getLogger(__name__)

DEFAULTS = {
    'name': 'scenario',
    'generator': 'power',
    'alpha': 1.0,
    'singularity': 'log',
    'kappa': 1.0,
    'mapping': 'positive',
    'perturbation': 'random',
    'beta': 0.0,
    'b': 0.0,
    'a': 'auto',
    'h': 'auto',
    'r_start': 10.0,
    'r_stop': 60.0,
    'r_step': 0.5,
    'output_dir': '',
    'seed': 0,
    'lacuna_points': 5,
    'eta': 0.0,
    'parabola_h': 10.0,
    'riesz': False,
}

STAGES = ('generate', 'subordination', 'noncondensing', 'lacuna', 'bounds', 'determinant',
          'sweep', 'corollary', 'counterexample')
RIESZ_TIMES = (0.0, 0.25, 0.5, 0.75, 1.0)
CONTOUR_COLUMNS = ('lambda_re', 'lambda_im', 'D_re', 'D_im', 'log_abs_D', 'phase')


@dataclass(frozen=True)
class Scenario:
    name: str
    generator: str
    alpha: float
    singularity: str
    kappa: float
    mapping: str
    perturbation: str
    truncation: int
    beta: float
    b: object
    a: object
    h: object
    r_start: float
    r_stop: float
    r_step: float
    output_dir: str
    seed: int
    lacuna_points: int
    eta: float
    parabola_h: float
    riesz: bool

    @property
    def r_grid(self):
        return np.arange(self.r_start, self.r_stop + self.r_step / 2, self.r_step)

    def output_path(self):
        if self.output_dir:
            return Path(self.output_dir)
        return Path(lab_setting('OUTPUT_DIR')) / self.name

    def to_dict(self):
        return asdict(self)


def load_scenario(source, **overrides) -> Scenario:
    """Scenario from a JSON file path, JSON text or dict; ``None`` overrides are ignored."""
    if isinstance(source, dict):
        data = dict(source)
    else:
        text = str(source)
        if not text.lstrip().startswith(('{', '[')):
            try:
                text = Path(text).read_text(encoding='utf-8')
            except OSError as e:
                raise ConfigError("config not readable", path=str(source), reason=str(e)) from e
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("malformed config", line=e.lineno, column=e.colno, reason=e.msg) from e
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object", found=type(data).__name__)
    unknown = sorted((set(data) | set(overrides)) - set(DEFAULTS) - {'truncation'})
    if unknown:
        raise ConfigError("unknown config keys", keys=unknown)
    merged = {**DEFAULTS, 'truncation': lab_setting('DEFAULT_TRUNCATION'), **data}
    merged.update({key: value for key, value in overrides.items() if value is not None})
    form = ScenarioForm(data=merged)
    if not form.is_valid():
        raise ConfigError("invalid scenario", errors=form.errors.get_json_data())
    return Scenario(**{key: form.cleaned_data[key] for key in Scenario.__dataclass_fields__})


@dataclass
class PipelineState:
    scenario: Scenario
    writer: artifacts.ArtifactWriter
    threads: int = 1
    T: DiagonalOperator = None
    B: PerturbationMatrix = None
    example: object = None
    prof: object = None
    alpha: float = None
    l: int = None
    gamma: float = None
    a: float = None
    h: float = None
    eigs_A: np.ndarray = None
    radii: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    skipped: dict | None = None
    sweep_report: object = None

    def eigs(self):
        if self.eigs_A is None:
            self.eigs_A = eigenvalues(assemble(self.T, self.B))
        return self.eigs_A


@trace_stage('generate')
def stage_generate(state: PipelineState):
    sc = state.scenario
    if sc.generator == 'periodic':
        state.example = build_periodic_example(sc.truncation, sc.singularity, sc.mapping, sc.kappa)
        state.T, state.B = state.example
    else:
        if sc.generator == 'power':
            spectrum = gen_power_spectrum(sc.alpha, sc.truncation)
        else:
            spectrum = gen_condensing_spectrum(sc.truncation)
        state.T = DiagonalOperator.from_spectrum(spectrum)
        b = 0.0 if sc.b == 'fit' else sc.b
        if sc.perturbation == 'zero' or b == 0:
            state.B = PerturbationMatrix.zero(state.T.dim)
        elif sc.perturbation == 'hermitian':
            state.B = gen_hermitian_perturbation(state.T, sc.beta, b, sc.seed)
        else:
            state.B = gen_random_perturbation(state.T, sc.beta, b, sc.seed)
    state.writer.write_text('spectrum.json', state.T.spectrum.to_json() + "\n")
    state.writer.write_bytes('perturbation.pmat', artifacts.matrix_to_bytes(state.B.entries))


@trace_stage('subordination')
def stage_subordination(state: PipelineState):
    sc = state.scenario
    state.prof = fit_subordination(state.B, state.T, sc.beta)
    half = state.T.dim // 2
    tail = compactness_tail(state.T, state.prof, half, alpha=state.T.declared_alpha)
    hermitian = state.B.is_hermitian()
    weyl = weyl_check(state.T, state.B, state.eigs()) if hermitian and state.prof.b > 0 else None
    state.writer.write_json('subordination.json', {
        'beta': state.prof.beta,
        'b_fitted': state.prof.b,
        'b_config': sc.b,
        'compactness_N': half,
        'compactness_tail': tail,
        'hermitian': hermitian,
        'weyl': weyl,
    })
    if weyl is not None and not weyl['passed']:
        raise VerificationError("eigenvalue moved farther than ||B||", **weyl)


@trace_stage('noncondensing')
def stage_noncondensing(state: PipelineState):
    sc = state.scenario
    spectrum = state.T.spectrum
    state.alpha = resolve_alpha(spectrum)
    state.l = noncondensing_l(spectrum, state.alpha)
    psi = psi_decompose(spectrum, state.alpha).check()
    if not psi['passed']:
        raise VerificationError("psi decomposition exceeds the non-condensing constant", **psi)
    state.gamma, applicable = gamma_of(state.alpha, state.prof.beta)
    if not applicable:
        raise PreconditionError("theorem hypothesis violated", alpha=state.alpha, beta=state.prof.beta,
                                gamma=state.gamma)
    floor = lab_setting('MIN_WINDOW_A')
    state.a = max(96 * state.l * state.prof.b ** 2, floor) if sc.a == 'auto' else sc.a
    state.h = 16 * state.a if sc.h == 'auto' else sc.h
    state.writer.write_json('noncondensing.json', {
        'alpha': state.alpha,
        'l': state.l,
        'gamma': state.gamma,
        'a': state.a,
        'h': state.h,
        'trusted_range': trusted_range(state.T),
        'psi_check': psi,
    })


def select_radii(state: PipelineState):
    """Up to ``lacuna_points`` radii from the grid that satisfy the lacuna and strip preconditions.

    Sets ``state.skipped`` and returns no radii when the grid has none.
    """
    sc = state.scenario
    threshold = strip_threshold(state.a, state.gamma)
    limit = trusted_range(state.T)
    grid = [float(r) for r in sc.r_grid
            if r >= threshold and r <= limit and r - 2 * state.a * r ** state.gamma > 1]
    if not grid:
        state.skipped = {
            'reason': 'no admissible radius for the lacuna construction',
            'strip_threshold': threshold,
            'trusted_range': limit,
            'r_range': [float(sc.r_grid[0]), float(sc.r_grid[-1])],
        }
        logger.warning(f"lacuna construction skipped: strip threshold {threshold:.4g}, trusted range {limit:.4g}")
        return []
    picks = np.unique(np.linspace(0, len(grid) - 1, min(sc.lacuna_points, len(grid))).round().astype(int))
    return [grid[i] for i in picks]


@trace_stage('lacuna')
def stage_lacuna(state: PipelineState):
    state.radii = select_radii(state)
    reports = []
    state.plans = []
    for r in state.radii:
        plan = plan_lacuna(state.T, r, state.a, state.gamma, state.l, state.prof)
        state.plans.append(plan)
        properties = plan.properties(state.T, state.B, state.prof, state.l, state.alpha)
        natural = natural_lacuna_check(state.T, state.B, state.prof, r, state.a, state.gamma, state.l,
                                       state.h, alpha=state.alpha, eigs_A=state.eigs())
        if natural.get('applicable') and not natural['passed']:
            raise VerificationError("count changed across a natural lacuna", **natural)
        reports.append({**plan.to_dict(), 'properties': properties, 'natural_lacuna': natural})
    state.writer.write_json('lacuna.json', {'radii': reports, 'skipped': state.skipped})


def _dump_samples(state: PipelineState, report, path):
    state.writer.write_csv(path, ('lambda_re', 'lambda_im', 'value'), report.sample_rows())
    report.samples_path = path
    return report.to_dict()


def _parabola_entry(state: PipelineState):
    p = ParabolaSpec(state.scenario.parabola_h, state.prof.beta)
    if not p.fits(state.T):
        top = float(np.max(state.T.diagonal))
        logger.warning(f"parabola check inconclusive: sigma_h={p.sigma_h:.4g} beyond 0.9 mu_M={0.9 * top:.4g}")
        return {'check': 'parabola', 'status': 'inconclusive', 'reason': 'sigma_h beyond the truncated spectrum',
                'sigma_h': p.sigma_h, 'mu_M': top}, True
    report = parabola_bound_check(p, state.T, state.B, state.prof, state.l, alpha=state.alpha)
    return _dump_samples(state, report, 'parabola_samples.csv'), report.passed


@trace_stage('bounds')
def stage_bounds(state: PipelineState):
    reports = []
    summary = {'strips': reports, 'skipped': state.skipped}
    for index, plan in enumerate(state.plans):
        corrected = strip_bound_check(StripSpec(plan.r, plan.a, plan.gamma_eff), plan.shifted, state.B,
                                      state.prof, 2 * state.l, alpha=state.alpha)
        norm_scan = corrected_norm_scan(plan, state.B, state.prof, alpha=state.alpha, l=2 * state.l)
        entry = {'r': plan.r, 'corrected_strip': _dump_samples(state, corrected, f'corrected_strip_{index}.csv'),
                 'corrected_norm': norm_scan}
        strip = StripSpec(plan.r, plan.a, plan.gamma_eff)
        if strip.is_admissible(state.T):
            natural = strip_bound_check(strip, state.T, state.B, state.prof, state.l, alpha=state.alpha)
            entry['strip'] = _dump_samples(state, natural, f'strip_{index}.csv')
        reports.append(entry)
        failed = not corrected.passed or not norm_scan['passed'] or not entry.get('strip', {}).get('passed', True)
        if failed:
            state.writer.write_json('bounds.json', summary)
            raise VerificationError("resolvent bound violated", r=plan.r)
    if state.prof.beta < 0.5:
        summary['parabola'], passed = _parabola_entry(state)
        if not passed:
            state.writer.write_json('bounds.json', summary)
            raise VerificationError("parabola bound violated", max_value=summary['parabola']['max_value'])
    state.writer.write_json('bounds.json', summary)


@trace_stage('determinant')
def stage_determinant(state: PipelineState):
    sc = state.scenario
    reports = []
    for index, plan in enumerate(state.plans):
        bounds = det_bounds_check(plan, state.T, state.B, state.prof, state.h, threads=state.threads)
        traces = []
        wa = wa_check_nudged(state.T, state.B, state.prof, plan.r, state.a, state.gamma, state.l, state.h,
                             alpha=state.alpha, eigs_A=state.eigs(), threads=state.threads,
                             trace_out=traces)
        entry = {'r': plan.r, 'det_bounds': bounds.to_dict(), 'wa': wa.to_dict()}
        if traces:
            nudged = plan_lacuna(state.T, plan.r + wa.nudge, state.a, state.gamma, state.l, state.prof)
            contour = contour_for(nudged, wa.R, state.h)
            entry['argument_split'] = argument_variation_split(nudged, state.T, state.B, contour, state.h,
                                                               traced=traces[-1])
            state.writer.write_csv(f'contour_{index}.csv', CONTOUR_COLUMNS, traces[-1].rows())
            if sc.riesz:
                entry['riesz'] = {str(t): riesz_rank(nudged, state.T, state.B, t, contour, state.threads)
                                  for t in RIESZ_TIMES}
                if len(set(entry['riesz'].values())) != 1:
                    raise VerificationError("Riesz rank changed along the homotopy", ranks=entry['riesz'])
        reports.append(entry)
        if not bounds.passed or not wa.passed:
            state.writer.write_json('determinant.json', {'radii': reports, 'skipped': state.skipped})
            raise VerificationError("determinant check failed", r=plan.r, wa=wa.to_dict())
    state.writer.write_json('determinant.json', {'radii': reports, 'skipped': state.skipped})


@trace_stage('sweep')
def stage_sweep(state: PipelineState):
    sc = state.scenario
    report = sweep(state.T, state.B, state.prof, sc.r_grid, state.a, alpha=state.alpha, eigs=state.eigs())
    state.sweep_report = report
    holdout = report.holdout()
    if holdout['violations']:
        logger.warning(f"held-out radii violate the fitted inequality: {holdout['violating_r']}")
    state.writer.write_csv('sweep.csv', ('r', 'n_T', 'n_A', 'deviation', 'S_gamma', 'lacuna_found'),
                           report.rows())
    state.writer.write_csv('plot.csv', ('r', 'deviation', 'bound'), report.plot_rows())
    state.writer.write_json('sweep.json', {
        **report.to_dict(),
        'threshold_constant': report.c1_from_threshold(state.T, float(sc.r_grid[0])),
        'comparison_scales': [comparison_scales(state.T.spectrum, float(r), state.a, state.alpha, state.prof.beta)
                              for r in sc.r_grid],
    })


@trace_stage('corollary')
def stage_corollary(state: PipelineState):
    result = corollary_check(state.sweep_report, state.scenario.eta)
    state.writer.write_json('corollary.json', result)
    if result['verdict'] == 'failed':
        raise VerificationError("deviation growth exceeds the corollary exponent", **result)


@trace_stage('counterexample')
def stage_counterexample(state: PipelineState):
    if state.example is None:
        return
    state.writer.write_json('counterexample.json', counterexample_check(state.example))


STAGE_FUNCTIONS = {
    'generate': stage_generate,
    'subordination': stage_subordination,
    'noncondensing': stage_noncondensing,
    'lacuna': stage_lacuna,
    'bounds': stage_bounds,
    'determinant': stage_determinant,
    'sweep': stage_sweep,
    'corollary': stage_corollary,
    'counterexample': stage_counterexample,
}


def _stage_failed(writer, scenario: Scenario, out: Path, name: str, e: LabError) -> RunResult:
    e.stage = name
    error = e.to_dict()
    logger.error(f"stage {name} failed: {e.message}")
    writer.write_json('failure.json', error)
    manifest = writer.write_manifest(scenario=scenario.name, seed=scenario.seed, exit_code=e.exit_code, stage=name)
    return RunResult(e.exit_code, out, manifest, name, error)


@dataclass
class RunResult:
    exit_code: int
    output_dir: Path
    manifest: dict
    stage: str | None = None
    error: dict | None = None

    @property
    def passed(self):
        return self.exit_code == 0


def run_scenario(scenario: Scenario, stages=STAGES, threads=None) -> RunResult:
    """Run ``stages`` in pipeline order, writing reports and a manifest under the output dir."""
    threads = threads or lab_setting('THREADS')
    out = scenario.output_path()
    writer = artifacts.ArtifactWriter(out)
    writer.write_json('scenario.json', scenario.to_dict())
    state = PipelineState(scenario, writer, threads)
    logger.info(f"running scenario {scenario.name} into {out}")
    stage = None
    for name in STAGES:
        if name not in stages:
            continue
        stage = name
        try:
            STAGE_FUNCTIONS[name](state)
        except LabError as e:
            return _stage_failed(writer, scenario, out, name, e)
        except Exception as e:
            logger.exception(f"stage {name} raised {type(e).__name__}")
            wrapped = NumericalError("unexpected numerical failure", error=type(e).__name__, reason=str(e))
            wrapped.__cause__ = e
            return _stage_failed(writer, scenario, out, name, wrapped)
    manifest = writer.write_manifest(scenario=scenario.name, seed=scenario.seed, exit_code=0, stage=None)
    logger.info(f"scenario {scenario.name} passed")
    return RunResult(0, out, manifest, stage, None)


def run_config(path, stages=STAGES, threads=None, **overrides) -> RunResult:
    """``run_scenario`` from a config path; config errors come back as exit code 2."""
    try:
        scenario = load_scenario(path, **overrides)
    except ConfigError as e:
        logger.error(f"config rejected: {e.message} {e.details}")
        return RunResult(e.exit_code, Path(''), {}, 'config', e.to_dict())
    return run_scenario(scenario, stages, threads)
