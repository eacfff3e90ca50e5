import os
import sys
sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from experiments import *
from lib.domain import negative_part_sup
from lib.heatctrl import (TimeSet, density_sequence, interpolation_check, observability_constant,
                          observability_sweep, telescoping_trace, spectral_tradeoff, energy_bound)
from lib.schrodinger import random_element
from lib.specineq import gram, worst_case_ratio

# Initialize logger
util_name = __file__.split('/')[-1].split('.')[0]
logging.config.dictConfig(LoggingConfigs.logging_configs(util_name))


class Observability(Util):

	def __init__(self, config_path: str = None, progress: Progress = None, **overrides):
		"""Creates an instance of Observability.

		Args:
			config_path (str): Path to the experiment configuration.
			progress (Progress): Progress bar.
		"""

		super().__init__(config_path, progress=progress, **overrides)

	def timeset(self) -> TimeSet:
		return TimeSet(horizon=self.config.heat.T, intervals=self.config.heat.J_intervals)

	def observability_stage(self):
		"""Observability constant, interpolation and telescoping checks, and the optional delta sweep."""

		with self.timed(const.Stages.OBSERVABILITY.value):
			heat = self.config.heat
			basis = self.basis()
			sensor = self.sensor()
			timeset = self.timeset()
			modes = self.config.control.modes
			rng = self.rng(const.SEED_STREAMS['observability'])
			mu = float(basis.eigenvalues[min(modes or basis.mode_count, basis.mode_count) - 1])

			C_obs = observability_constant(basis, sensor, timeset, heat.T, modes)
			LOGGER.info(f"observability constant C_obs = {C_obs:.6g} on |J| = {timeset.measure:.4g}")
			self.advance(15)

			initial = [random_element(basis, mu, rng) for _ in range(self.config.lift.samples)]
			beta1 = self.config.potential.beta1
			interpolation = interpolation_check(basis, sensor, initial, heat.t, heat.tau, beta1)
			self.emit_record('interpolation', interpolation)

			sequence = density_sequence(heat.k, heat.k1, heat.alpha, heat.m_max, heat.T)
			thirds = sequence.validate(timeset)
			self.emit_table('density_sequence', [c.to_dict() for c in thirds])
			if not all(c.passed for c in thirds):
				LOGGER.warning(f"time set misses the thirds condition on "
				               f"{sum(not c.passed for c in thirds)} of {len(thirds)} intervals")

			trace = telescoping_trace(basis, sensor, timeset, heat.T, initial[0], sequence, heat.a, heat.d0, beta1)
			self.emit_table('telescoping', [s.to_dict() for s in trace.steps])
			self.emit_record('telescoping', trace)

			energy = energy_bound(basis, initial[0], heat.T, negative_part_sup(self.potential(), self.grid))
			summary = {'C_obs': C_obs, 'J_measure': timeset.measure, 'modes': modes,
			           'interpolation_K': interpolation.minimal_K, 'thirds_passed': all(c.passed for c in thirds),
			           'telescoping_C': trace.fitted_C, 'telescoping_holds': trace.holds,
			           'energy_bound_holds': energy.holds}
			summary.update(self.tradeoff(basis, sensor, interpolation.sigma1))
			self.advance(15)

			if heat.deltas:
				spec = self.config.sensor
				sweep = observability_sweep(basis, self.lattice, list(heat.deltas), spec.kind, timeset, heat.T,
				                            spec.sigma, self.sensor_seed(), spec.pattern, beta1)
				self.emit_table('observability_sweep', [r.to_dict() for r in sweep.rows], ['delta', 'sigma', 'C_obs'])
				self.add_fit('observability', {'slope': sweep.slope, 'r2': sweep.r2,
				                               'predicted_slope': sweep.predicted_slope})
			self.emit_record('observability', summary)
			self.add_check('observability', summary)
			self.summarize("observability:", [[k, v] for k, v in sorted(summary.items())], ['check', 'value'])

	def tradeoff(self, basis, sensor, sigma1: float) -> dict:
		"""Spectral-inequality constant read off the worst ratio at the cutoff, and the resulting trade-off."""

		lam = basis.lambda_cutoff
		ratio = worst_case_ratio(gram(basis, sensor, lam))
		log_inv_delta = math.log(1.0 / sensor.delta)
		if not (np.isfinite(ratio) and ratio > 1 and 0 < sigma1 < 1 and lam > 0):
			return {}
		C = math.log(ratio) / (lam ** sigma1 * log_inv_delta)
		result = spectral_tradeoff(C, sigma1, self.config.heat.tau * self.config.heat.t, log_inv_delta)
		return {'tradeoff_C': C, 'tradeoff_lambda_star': result.lambda_star, 'tradeoff_log_value': result.log_value}


def main(*args, **kwargs):
	# Capture Command Line Arguments
	formatter = lambda prog: argparse.RawTextHelpFormatter(prog, max_help_position=120)
	parser = argparse.ArgumentParser(description="\n[ OBSERVABILITY ]\n\n\t• Computes the exact observability "
	                                             "constant of the truncated heat semigroup on Omega x J.\n\t• Checks "
	                                             "the interpolation inequality, the density-point sequence and the "
	                                             "telescoping series; sweeps delta when heat.deltas is set."
	                                             .expandtabs(4), formatter_class=formatter)
	parser._optionals.title = "Options"
	parser._positionals.title = "Commands"

	lab_helpers.add_common_arguments(parser)
	args = lab_helpers.parse_arguments(parser, *args, **kwargs)

	# Initialize Util
	with (Progress() as progress):
		try:
			task = progress.add_task("[dark_orange3][RUNNING]...", total=100)
			util = Observability(args.config, progress=progress, output_dir=args.output_dir, threads=args.threads,
			                     seed=args.seed, no_cache=args.no_cache)
			LogRotater.rotate_logs(retention_period=util.LOG_RETENTION_DAYS)
			progress.update(task, advance=25)
			util.observability_stage()
			util.finish()
		except Exception as e:
			LOGGER.error(e, exc_info=False)
			print(traceback.format_exc())
			sys.exit(1)
		finally:
			progress.update(task, description="[dodger_blue2 bold][COMPLETE]", advance=100)


if __name__ == '__main__':
	main()
