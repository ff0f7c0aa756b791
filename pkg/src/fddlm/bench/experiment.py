"""The experiment matrix: element/multiplier cases x block shapes x variants."""
import dataclasses
import enum
import logging
import time
from dataclasses import dataclass, field

from fddlm.assembly import CouplingMode, ElementChoice, ProblemConfig, assemble_system
from fddlm.linalg import Factorization, estimate_condition_number, gmres
from fddlm.precond import (VARIANTS, MgConfig, PrecondSpec, Shape, build_preconditioner,
                           preconditioned_operator)

log = logging.getLogger(__name__)

NAN = float("nan")


class Case(enum.Enum):
    e1l2 = "e1l2"
    e1h1 = "e1h1"
    e2l2 = "e2l2"

    @property
    def element_choice(self):
        return ElementChoice.Element2 if self is Case.e2l2 else ElementChoice.Element1

    @property
    def coupling_mode(self):
        return CouplingMode.H1 if self is Case.e1h1 else CouplingMode.L2

    @property
    def label(self):
        n = 2 if self is Case.e2l2 else 1
        lam = "Λ2" if self is Case.e1h1 else "Λ1"
        return f"Element:{n}, Λ={lam}"


CASES = tuple(Case)
SHAPES = tuple(s.value for s in Shape)


@dataclass(frozen=True)
class ExperimentCase:
    case: Case
    shape: str
    variant: str
    # (background_level, disk_level); level L is a 2^L x 2^L background grid
    refinement_levels: tuple

    def __post_init__(self):
        PrecondSpec.parse(self.shape, self.variant)


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-12
    max_iter: int = 100_000
    restart: int = 200
    relative: bool = False
    smooth_steps: int = 2
    sor_omega: float = 1.0
    dense_cap: int = 6000
    estimate_condition: bool = True
    # wall-clock budget in seconds for one iterative preconditioned estimate
    cond_time_limit: float | None = None
    seed: int = 0

    def mg_config(self):
        return MgConfig(smooth_steps=self.smooth_steps, sor_omega=self.sor_omega)


CSV_FIELDS = ("case", "shape", "variant", "level", "h", "n_v", "n_v2", "n_lambda",
              "cond_initial", "cond_precond", "cond_method", "iterations",
              "solve_seconds", "setup_seconds", "converged")
TIMING_FIELDS = ("solve_seconds", "setup_seconds")


@dataclass
class ResultRow:
    case: str
    shape: str
    variant: str
    level: int
    h: float
    n_v: int
    n_v2: int
    n_lambda: int
    cond_initial: float
    cond_precond: float
    cond_method: str
    iterations: int
    solve_seconds: float
    setup_seconds: float
    converged: bool
    # not written to CSV
    final_residual: float = field(default=NAN, compare=False)


def hierarchy_level(level):
    """Bench level ``L`` (``L`` uniform refinements) as a hierarchy depth."""
    if level < 1:
        raise ValueError(f"levels start at 1, got {level}")
    return level + 1


def level_pairs(min_level, max_level, disk_level_offset=0):
    if min_level > max_level:
        raise ValueError("min_level exceeds max_level")
    pairs = tuple((L, L + disk_level_offset) for L in range(min_level, max_level + 1))
    if any(d < 1 for _, d in pairs):
        raise ValueError("disk level offset leaves a level below 1")
    return pairs


def case_config(base, case):
    return dataclasses.replace(base, element_choice=case.element_choice,
                               coupling_mode=case.coupling_mode)


class _SystemCache:
    """Assembled systems and their initial condition numbers, per case and level."""

    def __init__(self):
        self._systems = {}
        self._cond = {}

    def system(self, config, pair):
        key = (config, pair)
        if key not in self._systems:
            bg, disk = pair
            self._systems[key] = assemble_system(config, hierarchy_level(bg),
                                                 hierarchy_level(disk))
        return self._systems[key]

    def cond_initial(self, config, pair, settings):
        key = (config, pair)
        if key not in self._cond:
            A = self.system(config, pair).matrix()
            if A.shape[0] <= settings.dense_cap:
                self._cond[key] = estimate_condition_number(A.toarray(),
                                                            dense_cap=settings.dense_cap)
            else:
                self._cond[key] = estimate_condition_number(A, mode="iterative",
                                                            seed=settings.seed)
        return self._cond[key]


def preconditioned_condition(A, prec, settings):
    """Condition number of ``P^{-1} A`` and the method used."""
    n = A.shape[0]
    if n <= settings.dense_cap:
        return estimate_condition_number(prec.apply(A.toarray()),
                                         dense_cap=settings.dense_cap), "dense_svd"
    fact = Factorization(A)
    limit = settings.cond_time_limit
    deadline = None if limit is None else time.perf_counter() + limit

    def check():
        if deadline is not None and time.perf_counter() > deadline:
            raise _OutOfTime

    def solve(y):
        # (P^{-1} A)^{-1} = A^{-1} P
        check()
        return fact.solve(prec.forward(y))

    def rsolve(y):
        check()
        return prec.forward(fact.solve(y, trans=True), transpose=True)

    try:
        value = estimate_condition_number(preconditioned_operator(A, prec),
                                          mode="iterative", solve=solve, rsolve=rsolve,
                                          seed=settings.seed)
    except _OutOfTime:
        log.warning("condition estimate of %d unknowns exceeded %.0f s; not recorded",
                    n, limit)
        return NAN, "timeout"
    log.info("condition number of %d unknowns estimated iteratively", n)
    return value, "estimated"


class _OutOfTime(Exception):
    pass


def _error_row(case, shape, variant, level, h, sizes):
    return ResultRow(case.value, shape, variant, level, h, *sizes, NAN, NAN, "error",
                     0, NAN, NAN, False)


def run_case(case, config=None, settings=None, cache=None):
    """One row per refinement pair of ``case`` (an :class:`ExperimentCase`)."""
    config = case_config(config or ProblemConfig(), case.case)
    settings = settings or SolverSettings()
    cache = cache or _SystemCache()
    spec = PrecondSpec.parse(case.shape, case.variant)
    rows = []
    for pair in case.refinement_levels:
        S = cache.system(config, pair)
        level = pair[0]
        h = S.spaces[0].hierarchy.mesh_size(hierarchy_level(level))
        A, b = S.matrix(), S.rhs()

        t0 = time.perf_counter()
        prec = build_preconditioner(S, spec, settings.mg_config())
        setup = time.perf_counter() - t0

        cond0 = condp = NAN
        method = "skipped"
        if settings.estimate_condition:
            cond0 = cache.cond_initial(config, pair, settings)
            condp, method = preconditioned_condition(A, prec, settings)

        x, rep = gmres(A, b, precond=prec.as_operator(), abs_tol=settings.tol,
                       max_iter=settings.max_iter, restart=settings.restart,
                       relative=settings.relative)
        row = ResultRow(case.case.value, spec.shape.value, spec.variant, level, h,
                        *S.sizes, cond0, condp, method, rep.iterations,
                        rep.wall_time, setup, rep.converged, rep.final_residual)
        log.info("%s %s %s level %d: %d iterations%s", row.case, row.shape, row.variant,
                 level, row.iterations, "" if row.converged else " (not converged)")
        rows.append(row)
    return rows


def experiment_cases(levels, cases=None, shapes=None, variants=None):
    """Every admissible (case, shape, variant) combination passing the filters."""
    out = []
    for case in cases or CASES:
        case = Case(case)
        for shape in shapes or SHAPES:
            for variant in variants or VARIANTS:
                out.append(ExperimentCase(case, str(shape).upper(), variant.lower(),
                                          tuple(levels)))
    return out


def run_matrix(levels, config=None, settings=None, cases=None, shapes=None,
               variants=None):
    """Run the filtered experiment matrix; one failing case never stops the rest."""
    config = config or ProblemConfig()
    settings = settings or SolverSettings()
    cache = _SystemCache()
    rows = []
    for ec in experiment_cases(levels, cases, shapes, variants):
        try:
            rows.extend(run_case(ec, config, settings, cache))
        except Exception as exc:  # recorded, the matrix goes on
            log.error("%s %s %s failed: %s", ec.case.value, ec.shape, ec.variant, exc)
            for bg, _ in ec.refinement_levels:
                h = 2.0 * config.half_width / 2 ** bg
                rows.append(_error_row(ec.case, ec.shape, ec.variant, bg, h,
                                       (0, 0, 0)))
    return rows
