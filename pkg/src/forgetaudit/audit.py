"""End-to-end forgetting audit and the multi-seed experiment grid.

An audit trains two shadow models with the target's design: one on the query
set D_Q and one on a calibration set D_C drawn from the domain with no sample
in common with D_Q. All three models are evaluated on D_Q and the K-S
distances between their confidence ECDFs give

    rho = KS(query, target) / KS(query, calibration)

with rho >= 1 read as "the target has forgotten D_Q".
"""

import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data as D
from . import model as M
from . import stats
from .errors import ConfigError, ForgetAuditError, InputError
from .seeding import derive_seed

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
#: Lower bound on the default calibration-set size.
DEFAULT_CALIBRATION_FLOOR = 2000


@dataclass
class AuditInput:
    target: M.Classifier | M.ConfidenceMatrix
    query_data: D.Dataset
    domain: D.DomainSpec
    classifier_config: M.ClassifierConfig | None = None
    train_config: M.TrainConfig = field(default_factory=M.TrainConfig)
    calibration_size: int | None = None
    calibration_floor: int = DEFAULT_CALIBRATION_FLOOR
    seed: int = 0

    def design(self):
        """Shadow design: explicit config, else the target model's own."""
        if self.classifier_config is not None:
            return self.classifier_config
        if isinstance(self.target, M.Classifier):
            return self.target.config
        raise ConfigError("a classifier_config is required when the target is a matrix")

    def resolved_calibration_size(self):
        if self.calibration_size is None:
            return max(len(self.query_data), self.calibration_floor)
        if self.calibration_size < 1:
            raise ConfigError("calibration_size must be at least 1")
        return int(self.calibration_size)


@dataclass
class AuditReport:
    ks_target: float
    ks_calibration: float
    rho: float
    decision: stats.Decision
    near_threshold: bool
    ks_target_location: float
    ks_calibration_location: float
    n_query: int
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["decision"] = self.decision.value
        return {"report_version": REPORT_VERSION, **d}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        version = d.pop("report_version", None)
        if version != REPORT_VERSION:
            raise InputError(f"unsupported report_version {version!r}")
        d["decision"] = stats.Decision(d["decision"])
        return cls(**d)


def shadow_seeds(seed):
    """Seeds used by an audit with master seed ``seed``."""
    return {
        "query_model": derive_seed(seed, "shadow", "query"),
        "calibration_model": derive_seed(seed, "shadow", "calibration"),
        "calibration_sample": derive_seed(seed, "calibration-sample"),
    }


@dataclass
class Shadows:
    """Everything an audit computes before looking at the target."""

    query_data: D.Dataset
    calibration_data: D.Dataset
    query_model: M.Classifier
    calibration_model: M.Classifier
    query_ecdf: stats.Ecdf
    calibration_ecdf: stats.Ecdf
    ks_calibration: stats.KsResult
    seeds: dict
    design: M.ClassifierConfig
    train_config: M.TrainConfig
    domain: D.DomainSpec

    def provenance(self):
        d = self.design
        return {
            "seeds": dict(self.seeds),
            "classifier_config": {
                "input_dim": d.input_dim,
                "num_classes": d.num_classes,
                "hidden_dim": d.hidden_dim,
            },
            "train_config": self.train_config.to_dict(),
            "domain": self.domain.to_dict(),
            "calibration_size": len(self.calibration_data),
            "datasets": {
                "query": self.query_data.id,
                "calibration": self.calibration_data.id,
            },
            "models": {
                "query": self.query_model.id,
                "calibration": self.calibration_model.id,
            },
            "shadow_train_accuracy": {
                "query": self.query_model.train_accuracy,
                "calibration": self.calibration_model.train_accuracy,
            },
        }


def _confidence_ecdf(cm):
    return stats.build_ecdf(stats.extract_confidences(cm.t, cm.y))


def calibration_dataset(query_data, domain, size, seed):
    """``size`` domain samples sharing no feature row with D_Q."""
    return D.sample_disjoint(domain, size, query_data, shadow_seeds(seed)["calibration_sample"])


def prepare_shadows(query_data, domain, design, train_config, seed, calibration_size):
    """Train both shadows and measure KS(query shadow, calibration shadow) on D_Q."""
    if design.input_dim != query_data.feature_dim:
        raise InputError(
            f"model design expects {design.input_dim} features, "
            f"query set has {query_data.feature_dim}"
        )
    if domain.feature_dim != query_data.feature_dim:
        raise InputError("domain and query set have different feature dimensions")
    if domain.num_classes != design.num_classes:
        raise InputError("domain and model design disagree on the number of classes")
    seeds = shadow_seeds(seed)
    query_model = M.train(design.with_seed(seeds["query_model"]), query_data, train_config)
    cal_data = calibration_dataset(query_data, domain, calibration_size, seed)
    cal_model = M.train(design.with_seed(seeds["calibration_model"]), cal_data, train_config)
    q_ecdf = _confidence_ecdf(M.evaluate(query_model, query_data))
    c_ecdf = _confidence_ecdf(M.evaluate(cal_model, query_data))
    return Shadows(
        query_data=query_data,
        calibration_data=cal_data,
        query_model=query_model,
        calibration_model=cal_model,
        query_ecdf=q_ecdf,
        calibration_ecdf=c_ecdf,
        ks_calibration=stats.ks_distance(q_ecdf, c_ecdf),
        seeds=seeds,
        design=design,
        train_config=train_config,
        domain=domain,
    )


def target_matrix(target, query_data, design=None):
    """Outputs of ``target`` on D_Q, checked against the query labels."""
    if isinstance(target, M.Classifier):
        if design is not None and (
            target.config.input_dim != design.input_dim
            or target.config.num_classes != design.num_classes
            or target.config.hidden_dim != design.hidden_dim
        ):
            raise InputError("target model design differs from the shadow design")
        return M.evaluate(target, query_data)
    if isinstance(target, M.ConfidenceMatrix):
        if len(target) != len(query_data) or not np.array_equal(target.y, query_data.labels):
            raise InputError("target matrix labels do not match the query set row for row")
        if design is not None and target.num_classes != design.num_classes:
            raise InputError(
                f"target matrix has {target.num_classes} classes, design has {design.num_classes}"
            )
        return target
    raise InputError(f"unsupported target type {type(target).__name__}")


@dataclass
class AuditOutcome:
    report: AuditReport
    shadows: Shadows
    target_ecdf: stats.Ecdf


def assess(shadows, target, target_info=None):
    """Score one target against prepared shadows."""
    cm = target_matrix(target, shadows.query_data, shadows.design)
    t_ecdf = _confidence_ecdf(cm)
    ks_t = stats.ks_distance(shadows.query_ecdf, t_ecdf)
    rho = stats.forgetting_ratio(ks_t, shadows.ks_calibration)
    provenance = shadows.provenance()
    provenance["target"] = dict(target_info or {})
    provenance["target"].update(cm.provenance)
    provenance["target"]["source"] = "model" if isinstance(target, M.Classifier) else "matrix"
    report = AuditReport(
        ks_target=ks_t.distance,
        ks_calibration=shadows.ks_calibration.distance,
        rho=rho,
        decision=stats.decide(rho),
        near_threshold=stats.near_threshold(rho),
        ks_target_location=ks_t.location,
        ks_calibration_location=shadows.ks_calibration.location,
        n_query=len(shadows.query_data),
        provenance=provenance,
    )
    return AuditOutcome(report, shadows, t_ecdf)


def execute_audit(inp):
    """Full audit, keeping the shadow models and ECDFs."""
    design = inp.design()
    shadows = prepare_shadows(
        inp.query_data, inp.domain, design, inp.train_config, inp.seed,
        inp.resolved_calibration_size(),
    )
    outcome = assess(shadows, inp.target)
    outcome.report.provenance["seed"] = int(inp.seed)
    return outcome


def run_audit(inp):
    return execute_audit(inp).report


# -- experiment grid ---------------------------------------------------------

TARGET_KINDS = (
    "query",
    "calibration_subset",
    "calibration_plus_query",
    "disjoint",
    "out_of_domain",
)
_DEFAULT_SEED_FROM = {
    "query": "independent",
    "calibration_subset": "calibration",
    "calibration_plus_query": "calibration",
    "disjoint": "independent",
    "out_of_domain": "independent",
}


@dataclass(frozen=True)
class TargetSpec:
    """How to build the target's training set D* for one grid cell.

    ``kind``:

    * ``query`` -- D* = D_Q.
    * ``calibration_subset`` -- ``fraction`` of D_C (D_C's order kept).
    * ``calibration_plus_query`` -- D_C followed by ``fraction`` of D_Q
      (``fraction`` may be 0).
    * ``disjoint`` -- a fresh domain sample of ``size`` rows sharing no row
      with D_Q, plus ``fraction`` of D_Q.
    * ``out_of_domain`` -- ``size`` rows from the domain with every mean moved
      by ``shift``.

    ``seed_from`` picks the target's model seed: ``calibration`` reuses the
    calibration shadow's seed (so ``calibration_plus_query`` at 0 reproduces
    the calibration model exactly), ``query`` the query shadow's, and
    ``independent`` a fresh per-cell seed.
    """

    name: str
    kind: str
    fraction: float = 0.0
    size: int | None = None
    shift: float = 0.0
    seed_from: str | None = None

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ConfigError(f"unknown target kind {self.kind!r}; expected one of {TARGET_KINDS}")
        if not 0 <= self.fraction <= 1:
            raise ConfigError(f"cell {self.name!r}: fraction must lie in [0, 1]")
        if self.kind == "calibration_subset" and self.fraction == 0:
            raise ConfigError(f"cell {self.name!r}: calibration_subset needs fraction > 0")
        if self.size is not None and self.size < 1:
            raise ConfigError(f"cell {self.name!r}: size must be positive")
        if self.kind == "out_of_domain" and self.shift <= 0:
            raise ConfigError(f"cell {self.name!r}: out_of_domain needs shift > 0")
        if self.seed_from is None:
            object.__setattr__(self, "seed_from", _DEFAULT_SEED_FROM[self.kind])
        if self.seed_from not in ("calibration", "query", "independent"):
            raise ConfigError(f"cell {self.name!r}: bad seed_from {self.seed_from!r}")

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad grid cell {d!r}: {exc}") from None


@dataclass
class GridConfig:
    domain: D.DomainSpec
    cells: list
    design: M.ClassifierConfig
    train_config: M.TrainConfig = field(default_factory=M.TrainConfig)
    query_size: int = 500
    calibration_size: int = 2000
    #: Expected per-class mean displacement of the query provider (0 = D_Q
    #: drawn from the domain itself).
    query_offset: float = 0.0
    query_provider_seed: int = 0
    base_seed: int = 0
    repeats: int = 1

    def __post_init__(self):
        if not self.cells:
            raise ConfigError("grid has no cells")
        names = [c.name for c in self.cells]
        if len(set(names)) != len(names):
            raise ConfigError("grid cell names must be unique")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if self.query_size < 1 or self.calibration_size < 1:
            raise ConfigError("query_size and calibration_size must be positive")


@dataclass
class GridRow:
    cell: str
    repeat: int
    seed: int
    n_target: int | None = None
    ks_target: float | None = None
    ks_calibration: float | None = None
    rho: float | None = None
    decision: str | None = None
    near_threshold: bool | None = None
    error: str | None = None


@dataclass
class CellSummary:
    cell: str
    runs: int
    failures: int
    mean_rho: float | None
    median_rho: float | None
    mean_ks_target: float | None
    forgotten: int


@dataclass
class GridResult:
    rows: list
    cells: list

    def summary(self):
        out = []
        for spec in self.cells:
            rows = [r for r in self.rows if r.cell == spec.name]
            ok = [r for r in rows if r.error is None]
            rhos = [r.rho for r in ok]
            out.append(
                CellSummary(
                    cell=spec.name,
                    runs=len(rows),
                    failures=len(rows) - len(ok),
                    mean_rho=statistics.fmean(rhos) if rhos else None,
                    median_rho=statistics.median(rhos) if rhos else None,
                    mean_ks_target=statistics.fmean(r.ks_target for r in ok) if ok else None,
                    forgotten=sum(r.decision == stats.Decision.FORGOTTEN.value for r in ok),
                )
            )
        return out

    def rhos(self, cell):
        return [r.rho for r in self.rows if r.cell == cell and r.error is None]


def build_target_data(spec, query_data, shadows, domain, seed):
    cal = shadows.calibration_data
    if spec.kind == "query":
        return query_data
    if spec.kind == "calibration_subset":
        return D.subset_fraction(cal, spec.fraction, seed, keep_order=True)
    if spec.kind == "calibration_plus_query":
        if spec.fraction == 0:
            return cal
        return D.mix(cal, D.subset_fraction(query_data, spec.fraction, seed))
    size = spec.size or len(cal)
    if spec.kind == "disjoint":
        base = D.sample_disjoint(domain, size, query_data, seed)
        if spec.fraction == 0:
            return base
        return D.mix(base, D.subset_fraction(query_data, spec.fraction, seed))
    shifted = domain.shifted(spec.shift, seed=domain.seed)
    return D.sample_domain(shifted, size, seed)


def _target_seed(spec, shadows, repeat_seed):
    if spec.seed_from == "calibration":
        return shadows.seeds["calibration_model"]
    if spec.seed_from == "query":
        return shadows.seeds["query_model"]
    return derive_seed(repeat_seed, "target", spec.name)


def _run_repeat(cfg, repeat):
    repeat_seed = derive_seed(cfg.base_seed, "repeat", repeat)
    rows = []
    try:
        qdomain = cfg.domain.provider(cfg.query_offset, seed=cfg.query_provider_seed)
        query_data = D.sample_domain(qdomain, cfg.query_size, derive_seed(repeat_seed, "query-data"))
        shadows = prepare_shadows(
            query_data, cfg.domain, cfg.design, cfg.train_config,
            derive_seed(repeat_seed, "audit"), cfg.calibration_size,
        )
    except ForgetAuditError as exc:
        logger.warning("repeat %d: shadow preparation failed: %s", repeat, exc)
        return [GridRow(c.name, repeat, repeat_seed, error=str(exc)) for c in cfg.cells]

    for spec in cfg.cells:
        row = GridRow(spec.name, repeat, repeat_seed)
        try:
            dstar = build_target_data(
                spec, query_data, shadows, cfg.domain,
                derive_seed(repeat_seed, "cell-data", spec.name),
            )
            target = M.train(
                cfg.design.with_seed(_target_seed(spec, shadows, repeat_seed)),
                dstar, cfg.train_config,
            )
            rep = assess(shadows, target, {"dataset": dstar.id}).report
        except ForgetAuditError as exc:
            logger.warning("cell %s repeat %d failed: %s", spec.name, repeat, exc)
            row.error = str(exc)
        else:
            row.n_target = len(dstar)
            row.ks_target = rep.ks_target
            row.ks_calibration = rep.ks_calibration
            row.rho = rep.rho
            row.decision = rep.decision.value
            row.near_threshold = rep.near_threshold
        rows.append(row)
    return rows


def run_grid(cfg, jobs=1):
    """Run every cell for every repeat; failures are recorded, not raised."""
    repeats = range(cfg.repeats)
    if jobs is None or jobs <= 1 or cfg.repeats == 1:
        chunks = [_run_repeat(cfg, r) for r in repeats]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_repeat, [cfg] * cfg.repeats, repeats))
    rows = [row for chunk in chunks for row in chunk]
    return GridResult(rows=rows, cells=list(cfg.cells))


def table1_cells(shift=15.0):
    """Default cells: D_Q, % of D_C, D_C + % of D_Q, out-of-domain."""
    return [
        TargetSpec("D_Q", "query"),
        TargetSpec("50% D_C", "calibration_subset", fraction=0.5),
        TargetSpec("75% D_C", "calibration_subset", fraction=0.75),
        TargetSpec("100% D_C", "calibration_subset", fraction=1.0),
        TargetSpec("D_C+10% D_Q", "calibration_plus_query", fraction=0.1),
        TargetSpec("D_C+50% D_Q", "calibration_plus_query", fraction=0.5),
        TargetSpec("D_C+100% D_Q", "calibration_plus_query", fraction=1.0),
        TargetSpec("out-of-domain", "out_of_domain", shift=shift),
    ]

