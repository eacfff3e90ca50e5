import os
import sys
sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from experiments import *
from lib.sensor import verify_density, effective_delta
from lib.specineq import gram, worst_case_ratio, worst_case_element, theorem_exponent, legacy_exponent

# Initialize logger
util_name = __file__.split('/')[-1].split('.')[0]
logging.config.dictConfig(LoggingConfigs.logging_configs(util_name))


class SpectralInequality(Util):

	def __init__(self, config_path: str = None, progress: Progress = None, **overrides):
		"""Creates an instance of SpectralInequality.

		Args:
			config_path (str): Path to the experiment configuration.
			progress (Progress): Progress bar.
		"""

		super().__init__(config_path, progress=progress, **overrides)

	def inequality_level(self) -> float:
		basis = self.basis()
		lam = self.config.sweep.lam
		return basis.lambda_cutoff if lam is None else min(lam, basis.lambda_cutoff)

	def specineq_stage(self):
		"""Worst-case constant of the spectral inequality for the configured sensor at one spectral level."""

		with self.timed(const.Stages.SPECINEQ.value):
			basis = self.basis()
			sensor = self.sensor()
			self.emit_mask('sensor', sensor)

			density = verify_density(sensor, self.lattice)
			self.emit_record('density', density)
			if not density.passed:
				LOGGER.warning(f"sensor misses its density requirement (worst margin {density.worst_margin:.3g})")
			self.advance(15)

			lam = self.inequality_level()
			matrix = gram(basis, sensor, lam)
			ratio = worst_case_ratio(matrix)
			vector = worst_case_element(matrix)
			rows = [{'k': k, 'lambda': float(basis.eigenvalues[k]), 'coefficient': float(c)}
			        for k, c in enumerate(vector)]
			self.emit_table('worst_case_element', rows, ['k', 'lambda', 'coefficient'])

			potential = self.config.potential
			summary = {'lambda': float(lam), 'n_modes': matrix.n_modes, 'lambda_min_gram': matrix.lambda_min,
			           'worst_ratio': ratio, 'sensor_measure': sensor.measure, 'sensor_cells': sensor.cell_count,
			           'density_passed': density.passed, 'effective_delta': effective_delta(sensor, self.lattice),
			           'theta_star': theorem_exponent(sensor.sigma, potential.beta1, potential.beta2),
			           'theta_legacy': legacy_exponent(potential.beta1, potential.beta2, sensor.sigma)}
			self.emit_record('specineq', summary)
			self.add_check('specineq', summary)
			self.summarize("spectral inequality:", [[summary['lambda'], summary['n_modes'], summary['lambda_min_gram'],
			                                         summary['worst_ratio']]],
			               ['lambda', 'modes', 'lambda_min(G)', 'worst ratio'])
			self.advance(25)


def main(*args, **kwargs):
	# Capture Command Line Arguments
	formatter = lambda prog: argparse.RawTextHelpFormatter(prog, max_help_position=120)
	parser = argparse.ArgumentParser(description="\n[ SPECTRAL INEQUALITY ]\n\n\t• Builds the configured sensor set "
	                                             "and computes the exact worst-case ratio ||phi|| / ||phi||_Omega over "
	                                             "the spectral subspace at sweep.lam (or the basis cutoff).\n\t• Writes "
	                                             "density.json, specineq.json and worst_case_element.csv."
	                                             .expandtabs(4), formatter_class=formatter)
	parser._optionals.title = "Options"
	parser._positionals.title = "Commands"

	lab_helpers.add_common_arguments(parser)
	args = lab_helpers.parse_arguments(parser, *args, **kwargs)

	# Initialize Util
	with (Progress() as progress):
		try:
			task = progress.add_task("[dark_orange3][RUNNING]...", total=100)
			util = SpectralInequality(args.config, progress=progress, output_dir=args.output_dir, threads=args.threads,
			                          seed=args.seed, no_cache=args.no_cache)
			LogRotater.rotate_logs(retention_period=util.LOG_RETENTION_DAYS)
			progress.update(task, advance=25)
			util.specineq_stage()
			util.finish()
		except Exception as e:
			LOGGER.error(e, exc_info=False)
			print(traceback.format_exc())
			sys.exit(1)
		finally:
			progress.update(task, description="[dodger_blue2 bold][COMPLETE]", advance=100)


if __name__ == '__main__':
	main()
