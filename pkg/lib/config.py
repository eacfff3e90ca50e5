"""Experiment configuration: YAML files validated by marshmallow schemas into frozen dataclasses."""
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import yaml
from marshmallow import Schema, ValidationError, fields, post_load, validate, validates_schema, RAISE

from lib.helpers.constants import PotentialKinds, SensorKinds, Stages, SweepVariables, ThickPatterns
from lib.helpers.exceptions import ConfigError
from lib.helpers.logs import LOGGER


@dataclass(frozen=True)
class DomainConfig:
    dim: int = 1
    half_width: float = 12.0
    points_per_axis: int = 257


@dataclass(frozen=True)
class PotentialConfig:
    kind: str = PotentialKinds.POLYNOMIAL_RADIAL.value
    beta1: float = 2.0
    beta2: float = 2.0
    c1: float = 1.0
    c2: float = 3.0
    C0: float = 0.0
    R: float = 0.0
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EigenConfig:
    lambda_max: Optional[float] = 220.0
    count: Optional[int] = None


@dataclass(frozen=True)
class SensorConfig:
    kind: str = SensorKinds.THICK_PERIODIC.value
    delta: float = 0.5
    sigma: float = 0.0
    L: float = 1.0
    seed: Optional[int] = None
    pattern: str = ThickPatterns.LEFT_SLAB.value


@dataclass(frozen=True)
class SweepConfig:
    variable: str = SweepVariables.LAMBDA.value
    values: tuple = (10.0, 20.0, 40.0, 60.0, 100.0, 150.0, 200.0)
    lam: Optional[float] = None


@dataclass(frozen=True)
class LiftConfig:
    rho: float = 0.1
    s_max: float = 1.0
    s_points: int = 41
    mu: Optional[float] = None
    samples: int = 50
    validation: int = 100
    C0: float = 2.0
    radius: float = 1.0
    decay_threshold: float = 0.5


@dataclass(frozen=True)
class HeatConfig:
    T: float = 1.0
    J_intervals: tuple = ((0.0, 1.0),)
    tau: float = 0.5
    t: float = 0.5
    deltas: tuple = ()
    k: float = 0.0
    k1: float = 1.0
    alpha: float = 2.0
    m_max: int = 6
    a: float = 1.0
    d0: float = 0.0


@dataclass(frozen=True)
class ControlConfig:
    epsilon: float = 1e-8
    max_iter: int = 500
    tol: float = 1e-10
    modes: Optional[int] = 40
    initial: str = 'random'


@dataclass(frozen=True)
class OutputConfig:
    dir: str = 'output'
    formats: tuple = ('csv', 'json')


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = 'experiment'
    domain: DomainConfig = field(default_factory=DomainConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    eigen: EigenConfig = field(default_factory=EigenConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    lift: LiftConfig = field(default_factory=LiftConfig)
    heat: HeatConfig = field(default_factory=HeatConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    threads: Optional[int] = None
    cache: bool = True
    stages: tuple = (Stages.EIG.value, Stages.SWEEP.value)


def _positive(name: str):
    return validate.Range(min=0, min_inclusive=False, error=f"{name} must be positive, got {{input}}")


def _section(schema: type):
    """Nested section whose defaults apply when the whole section is omitted."""

    return fields.Nested(schema, load_default=lambda: schema().load({}))


class _Section(Schema):

    class Meta:
        unknown = RAISE


class DomainSchema(_Section):
    dim = fields.Integer(load_default=1, validate=validate.Range(min=1, max=2))
    half_width = fields.Float(load_default=12.0, validate=_positive('half_width'))
    points_per_axis = fields.Integer(load_default=257, validate=validate.Range(min=3))

    @post_load
    def make(self, data, **kwargs):
        return DomainConfig(**data)


class PotentialSchema(_Section):
    kind = fields.String(load_default=PotentialKinds.POLYNOMIAL_RADIAL.value,
                         validate=validate.OneOf([k.value for k in PotentialKinds]))
    beta1 = fields.Float(load_default=2.0, validate=_positive('beta1'))
    beta2 = fields.Float(load_default=2.0, validate=_positive('beta2'))
    c1 = fields.Float(load_default=1.0, validate=_positive('c1'))
    c2 = fields.Float(load_default=3.0, validate=_positive('c2'))
    C0 = fields.Float(load_default=0.0, validate=validate.Range(min=0))
    R = fields.Float(load_default=0.0, validate=validate.Range(min=0))
    params = fields.Dict(keys=fields.String(), load_default=dict)

    @validates_schema
    def check_exponents(self, data, **kwargs):
        if data['beta2'] < data['beta1']:
            raise ValidationError(f"beta2 must be at least beta1 ({data['beta1']})", 'beta2')

    @post_load
    def make(self, data, **kwargs):
        return PotentialConfig(**data)


class EigenSchema(_Section):
    lambda_max = fields.Float(load_default=None, allow_none=True)
    count = fields.Integer(load_default=None, allow_none=True, validate=validate.Range(min=1))

    @validates_schema
    def check_request(self, data, **kwargs):
        if data.get('lambda_max') is not None and data.get('count') is not None:
            raise ValidationError("give either lambda_max or count, not both", 'count')

    @post_load
    def make(self, data, **kwargs):
        if data['lambda_max'] is None and data['count'] is None:
            return EigenConfig()
        return EigenConfig(**data)


class SensorSchema(_Section):
    kind = fields.String(load_default=SensorKinds.THICK_PERIODIC.value,
                         validate=validate.OneOf([k.value for k in SensorKinds]))
    delta = fields.Float(load_default=0.5, validate=validate.Range(min=0, max=1, min_inclusive=False,
                                                                    max_inclusive=False,
                                                                    error="δ ∈ (0,1) required, got {input}"))
    sigma = fields.Float(load_default=0.0, validate=validate.Range(min=0, max=1, max_inclusive=False,
                                                                    error="σ ∈ [0,1) required, got {input}"))
    L = fields.Float(load_default=1.0, validate=_positive('L'))
    seed = fields.Integer(load_default=None, allow_none=True)
    pattern = fields.String(load_default=ThickPatterns.LEFT_SLAB.value,
                            validate=validate.OneOf([p.value for p in ThickPatterns]))

    @post_load
    def make(self, data, **kwargs):
        return SensorConfig(**data)


class SweepSchema(_Section):
    variable = fields.String(load_default=SweepVariables.LAMBDA.value,
                             validate=validate.OneOf([v.value for v in SweepVariables]))
    values = fields.List(fields.Float(), load_default=lambda: list(SweepConfig.values),
                         validate=validate.Length(min=4))
    lam = fields.Float(load_default=None, allow_none=True)

    @post_load
    def make(self, data, **kwargs):
        return SweepConfig(variable=data['variable'], values=tuple(data['values']), lam=data['lam'])


class LiftSchema(_Section):
    rho = fields.Float(load_default=0.1, validate=_positive('rho'))
    s_max = fields.Float(load_default=1.0, validate=_positive('s_max'))
    s_points = fields.Integer(load_default=41, validate=validate.Range(min=3))
    mu = fields.Float(load_default=None, allow_none=True)
    samples = fields.Integer(load_default=50, validate=validate.Range(min=1))
    validation = fields.Integer(load_default=100, validate=validate.Range(min=1))
    C0 = fields.Float(load_default=2.0, validate=_positive('C0'))
    radius = fields.Float(load_default=1.0, validate=_positive('radius'))
    decay_threshold = fields.Float(load_default=0.5, validate=validate.Range(min=0, max=1, min_inclusive=False,
                                                                              max_inclusive=False))

    @validates_schema
    def check_points(self, data, **kwargs):
        if data['s_points'] % 2 == 0:
            raise ValidationError("s_points must be odd so that s = 0 is a grid point", 's_points')
        if data['rho'] > data['s_max']:
            raise ValidationError("rho must not exceed s_max", 'rho')

    @post_load
    def make(self, data, **kwargs):
        return LiftConfig(**data)


class HeatSchema(_Section):
    T = fields.Float(load_default=1.0, validate=_positive('T'))
    J_intervals = fields.List(fields.List(fields.Float(), validate=validate.Length(equal=2)),
                              load_default=lambda: [[0.0, 1.0]], validate=validate.Length(min=1))
    tau = fields.Float(load_default=0.5, validate=validate.Range(min=0, max=1, min_inclusive=False,
                                                                  max_inclusive=False))
    t = fields.Float(load_default=0.5, validate=_positive('t'))
    deltas = fields.List(fields.Float(), load_default=list)
    k = fields.Float(load_default=0.0, validate=validate.Range(min=0))
    k1 = fields.Float(load_default=1.0, validate=_positive('k1'))
    alpha = fields.Float(load_default=2.0, validate=validate.Range(min=1, min_inclusive=False,
                                                                    error="alpha must exceed 1, got {input}"))
    m_max = fields.Integer(load_default=6, validate=validate.Range(min=1))
    a = fields.Float(load_default=1.0, validate=validate.Range(min=0))
    d0 = fields.Float(load_default=0.0, validate=validate.Range(min=0))

    @validates_schema
    def check_times(self, data, **kwargs):
        previous = 0.0
        for a, b in data['J_intervals']:
            if not previous <= a < b <= data['T']:
                raise ValidationError(f"intervals must be sorted, disjoint and inside [0, {data['T']}]",
                                      'J_intervals')
            previous = b
        if not data['k'] < data['k1'] <= data['T']:
            raise ValidationError("need k < k1 <= T", 'k1')

    @post_load
    def make(self, data, **kwargs):
        data['J_intervals'] = tuple(tuple(pair) for pair in data['J_intervals'])
        data['deltas'] = tuple(data['deltas'])
        return HeatConfig(**data)


class ControlSchema(_Section):
    epsilon = fields.Float(load_default=1e-8, validate=_positive('epsilon'))
    max_iter = fields.Integer(load_default=500, validate=validate.Range(min=1))
    tol = fields.Float(load_default=1e-10, validate=_positive('tol'))
    modes = fields.Integer(load_default=40, allow_none=True, validate=validate.Range(min=1))
    initial = fields.String(load_default='random', validate=validate.OneOf(['random', 'ground', 'zero']))

    @post_load
    def make(self, data, **kwargs):
        return ControlConfig(**data)


class OutputSchema(_Section):
    dir = fields.String(load_default='output')
    formats = fields.List(fields.String(validate=validate.OneOf(['csv', 'json', 'rle'])),
                          load_default=lambda: ['csv', 'json'])

    @post_load
    def make(self, data, **kwargs):
        return OutputConfig(dir=data['dir'], formats=tuple(data['formats']))


class ExperimentSchema(Schema):
    name = fields.String(load_default='experiment')
    domain = _section(DomainSchema)
    potential = _section(PotentialSchema)
    eigen = _section(EigenSchema)
    sensor = _section(SensorSchema)
    sweep = _section(SweepSchema)
    lift = _section(LiftSchema)
    heat = _section(HeatSchema)
    control = _section(ControlSchema)
    output = _section(OutputSchema)
    seed = fields.Integer(load_default=0)
    threads = fields.Integer(load_default=None, allow_none=True, validate=validate.Range(min=1))
    cache = fields.Boolean(load_default=True)
    stages = fields.List(fields.String(validate=validate.OneOf([s.value for s in Stages])),
                         load_default=lambda: list(ExperimentConfig.stages))

    @post_load
    def make(self, data, **kwargs):
        data['stages'] = tuple(data['stages'])
        return ExperimentConfig(**data)


def flatten_errors(messages, prefix: str = '') -> dict:
    """Turn marshmallow's nested error messages into {'sensor.sigma': [...]}."""

    if isinstance(messages, list):
        return {prefix or '_schema': [str(m) for m in messages]}
    flat = {}
    for key, value in messages.items():
        path = str(key) if key != '_schema' or not prefix else ''
        path = f"{prefix}.{path}" if prefix and path else (path or prefix)
        for inner, reasons in flatten_errors(value, path).items():
            flat.setdefault(inner, []).extend(reasons)
    return flat


def parse_config(raw: Optional[dict]) -> ExperimentConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError({'_schema': [f"top level must be a mapping, got {type(raw).__name__}"]})
    try:
        return ExperimentSchema().load(raw)
    except ValidationError as e:
        raise ConfigError(flatten_errors(e.messages)) from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate a YAML experiment configuration.

    Raises:
        ConfigError: The file is unreadable, not YAML, or fails validation; errors name the field path.

    """

    path = Path(path)
    LOGGER.debug(f"reading experiment configuration from {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise ConfigError({'_file': [f"cannot read {path}: {e.strerror}"]}) from e
    except yaml.YAMLError as e:
        raise ConfigError({'_file': [f"{path} is not valid YAML: {e}"]}) from e
    return parse_config(raw)


def dump_config(config: ExperimentConfig) -> dict:
    """Plain dict echo of a validated configuration."""

    return _plain(dataclasses.asdict(config))


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def apply_overrides(config: ExperimentConfig, output_dir: Optional[str] = None, threads: Optional[int] = None,
                    seed: Optional[int] = None, no_cache: bool = False) -> ExperimentConfig:
    """Apply command line overrides on top of a validated configuration."""

    changes = {}
    if output_dir:
        changes['output'] = dataclasses.replace(config.output, dir=str(output_dir))
    if threads is not None:
        if threads < 1:
            raise ConfigError({'threads': [f"must be at least 1, got {threads}"]})
        changes['threads'] = int(threads)
    if seed is not None:
        changes['seed'] = int(seed)
        if config.sensor.seed is not None:
            changes['sensor'] = dataclasses.replace(config.sensor, seed=int(seed))
    if no_cache:
        changes['cache'] = False
    return dataclasses.replace(config, **changes) if changes else config
