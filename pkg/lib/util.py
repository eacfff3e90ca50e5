import configparser
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import platformdirs
from dataclasses_json import dataclass_json
from dotenv import load_dotenv
from humanfriendly import format_timespan
from rich.progress import Progress

import lib.helpers.constants as const
from lib.config import ExperimentConfig, load_config, parse_config, apply_overrides, dump_config
from lib.domain import Grid, Potential, CubeLattice, build_grid, cube_lattice
from lib.helpers.cache import EigenCache
from lib.helpers.logs import LOGGER, LogHelper
from lib.helpers.serializers import write_table, write_record, render_table
from lib.schrodinger import EigenBasis, assemble, eigensolve
from lib.sensor import SensorSet, decaying_ball_set, density_random_set, thick_periodic_set, write_mask_rle


@dataclass_json
@dataclass
class ExperimentReport:
    """Everything an experiment emits.

    report.json holds every field except the cache counters, which go to timings.json with the
    wall-clock timings so that reruns reproduce report.json byte for byte.
    """

    name: str
    config: dict
    tables: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    cache_hits: int = 0
    cache_misses: int = 0


class Util(object):
    """Base Model for Experiment Scripts."""

    def __init__(self, config_path: str = None, settings_file: str = None, progress: Progress = None,
                 output_dir: str = None, threads: int = None, seed: int = None, no_cache: bool = False,
                 config: ExperimentConfig = None):
        """Creates an instance of Util.

        Args:
            config_path (str): Path to the YAML experiment configuration; defaults apply when omitted.
            settings_file (str): Path to the global settings file (configs/configs.ini).
            progress (Progress): Progress bar shared with the calling script.
            output_dir (str): Overrides output.dir.
            threads (int): Overrides the worker count.
            seed (int): Overrides the experiment seed.
            no_cache (bool): Skip the eigenbasis cache.
            config (ExperimentConfig): Already validated configuration; takes precedence over config_path.
        """

        if not settings_file:
            settings_file = str(Path(__file__).parent.parent) + "/configs/configs.ini"
        self.configs = None
        if Path(settings_file).is_file():
            LOGGER.debug(f"reading configuration settings from {settings_file}")
            self.configs = configparser.ConfigParser(allow_no_value=True)
            self.configs.read(settings_file)
        else:
            LOGGER.error(f"config File '{settings_file}' specified does not exist")
            sys.exit(1)

        settings = self.configs['global'] if self.configs.has_section('global') else {}
        self.FLOAT_DIGITS = int(settings.get('FLOAT_DIGITS', 17))
        self.LOG_RETENTION_DAYS = int(settings.get('LOG_RETENTION_DAYS', 7))

        if config is None:
            config = load_config(config_path) if config_path else parse_config({})
        if threads is None and config.threads is None:
            threads = int(settings.get('THREADS', 1))
        if not output_dir and config.output.dir == 'output' and settings.get('OUTPUT_DIR'):
            output_dir = settings.get('OUTPUT_DIR')
        self.config = apply_overrides(config, output_dir=output_dir, threads=threads, seed=seed, no_cache=no_cache)
        self.progress = progress

        self.OUTPUT_DIR = Path(self.config.output.dir) / self.config.name
        self.OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
        self.cache = EigenCache(self.cache_directory(settings)) if self.config.cache else None
        self.report = ExperimentReport(name=self.config.name, config=dump_config(self.config))
        self.timings = {}

        self._grid = None
        self._basis = None
        self._lattice = None
        self._sensor = None

    @staticmethod
    def cache_directory(settings=None) -> Path:
        """SPECLAB_CACHE_DIR (environment or .env), then CACHE_DIR from configs.ini, then the user cache dir."""

        load_dotenv()
        directory = os.environ.get(const.CACHE_ENV_VAR) or (settings or {}).get('CACHE_DIR')
        return Path(directory) if directory else Path(platformdirs.user_cache_dir("speclab"))

    @contextmanager
    def timed(self, stage: str):
        start = time.perf_counter()
        LOGGER.info(f"starting {stage} stage...")
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.timings[stage] = self.timings.get(stage, 0.0) + elapsed
            LOGGER.info(f"{stage} stage finished in {format_timespan(elapsed)}")

    def advance(self, amount: float):
        if self.progress is not None and self.progress.tasks:
            self.progress.update(self.progress.tasks[0].id, advance=amount)

    @property
    def grid(self) -> Grid:
        if self._grid is None:
            domain = self.config.domain
            self._grid = build_grid(domain.dim, domain.half_width, domain.points_per_axis)
        return self._grid

    def potential(self) -> Potential:
        spec = self.config.potential
        return Potential(kind=spec.kind, beta1=spec.beta1, beta2=spec.beta2, c1=spec.c1, c2=spec.c2, C0=spec.C0,
                         R=spec.R, parameters=dict(spec.params))

    def basis(self, refresh: bool = False) -> EigenBasis:
        """Eigenbasis for the configured grid, potential and request, through the cache.

        Args:
            refresh (bool): Recompute and overwrite the cached basis.

        Returns:
            EigenBasis: The basis.

        """

        if self._basis is not None and not refresh:
            return self._basis

        potential = self.potential()
        request = self.config.eigen
        kind = 'count' if request.count is not None else 'lambda_max'
        cutoff = float(request.count if request.count is not None else request.lambda_max)
        grid_digest, potential_digest = self.grid.digest(), potential.digest()

        cached = None
        if self.cache is not None and not refresh:
            cached = self.cache.load(grid_digest, potential_digest, kind, cutoff)
        if cached is not None:
            eigenvalues, residuals, eigenvectors = cached
            LOGGER.info(f"eigenbasis loaded from cache ({eigenvalues.size} modes)")
            self._basis = EigenBasis(grid=self.grid, eigenvalues=eigenvalues, eigenvectors=eigenvectors,
                                     residuals=residuals, kind=kind, cutoff=cutoff, potential_digest=potential_digest)
        else:
            LOGGER.info(f"assembling operator on {self.grid.size} grid points...")
            operator = assemble(self.grid, potential)
            LOGGER.info("solving eigenproblem...")
            if kind == 'count':
                self._basis = eigensolve(operator, count=request.count)
            else:
                self._basis = eigensolve(operator, lambda_max=request.lambda_max)
            if self.cache is not None:
                self.cache.store(grid_digest, potential_digest, kind, cutoff, self._basis.eigenvalues,
                                 self._basis.residuals, self._basis.eigenvectors)

        if self.cache is not None:
            self.report.cache_hits, self.report.cache_misses = self.cache.hits, self.cache.misses
        return self._basis

    @property
    def lattice(self) -> CubeLattice:
        if self._lattice is None:
            self._lattice = cube_lattice(self.grid, self.config.sensor.L)
        return self._lattice

    def sensor_seed(self) -> int:
        return self.config.sensor.seed if self.config.sensor.seed is not None else self.config.seed

    def sensor(self, delta: Optional[float] = None) -> SensorSet:
        """The configured sensor set, or the member `delta` of its nested family."""

        spec = self.config.sensor
        if delta is None and self._sensor is not None:
            return self._sensor
        chosen = spec.delta if delta is None else delta
        if spec.kind == const.SensorKinds.THICK_PERIODIC.value:
            sensor = thick_periodic_set(self.grid, self.lattice, chosen, spec.pattern)
        elif spec.kind == const.SensorKinds.DENSITY_RANDOM.value:
            sensor = density_random_set(self.grid, self.lattice, chosen, spec.sigma, self.sensor_seed())
        else:
            sensor = decaying_ball_set(self.grid, self.lattice, chosen, spec.sigma)
        if delta is None:
            self._sensor = sensor
        return sensor

    def rng(self, stream: int = 0) -> np.random.Generator:
        """Independent seeded generator per stage so that stages do not perturb each other."""

        return np.random.default_rng([self.config.seed, stream])

    def emit_table(self, name: str, rows: list, columns: list = None) -> Optional[Path]:
        if 'csv' not in self.config.output.formats:
            return None
        path = write_table(rows, self.OUTPUT_DIR / f"{name}.csv", columns, self.FLOAT_DIGITS)
        self.report.tables[name] = path.name
        return path

    def emit_record(self, name: str, record) -> Optional[Path]:
        payload = record.to_dict() if hasattr(record, 'to_dict') else record
        if 'json' not in self.config.output.formats:
            return None
        return write_record(payload, self.OUTPUT_DIR / f"{name}.json")

    def emit_mask(self, name: str, sensor: SensorSet) -> Optional[Path]:
        if 'rle' not in self.config.output.formats:
            return None
        return write_mask_rle(self.OUTPUT_DIR / f"{name}.rle", sensor)

    def add_fit(self, name: str, fit):
        self.report.fits[name] = fit.to_dict() if hasattr(fit, 'to_dict') else fit

    def add_check(self, name: str, summary: dict):
        self.report.checks[name] = summary

    def summarize(self, title: str, rows: list, headers: list):
        LOGGER.info(title)
        LogHelper.split_message(render_table(rows, headers))

    def finish(self) -> ExperimentReport:
        """Write report.json and timings.json and return the report."""

        if self.cache is not None:
            self.report.cache_hits, self.report.cache_misses = self.cache.hits, self.cache.misses
        record = self.report.to_dict()
        cache = {key: record.pop(key) for key in ('cache_hits', 'cache_misses')}
        write_record(record, self.OUTPUT_DIR / "report.json")
        write_record({'seconds': {stage: round(seconds, 6) for stage, seconds in self.timings.items()}, **cache},
                     self.OUTPUT_DIR / "timings.json")
        total = sum(self.timings.values())
        LOGGER.info(f"experiment '{self.config.name}' written to {self.OUTPUT_DIR} in {format_timespan(total)}")
        return self.report
