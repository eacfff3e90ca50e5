import os
import sys
sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from experiments import *
from lib.config import dump_config, load_config, parse_config
from lib.specineq import lambda_sweep, mu_sweep, delta_sweep

# Initialize logger
util_name = __file__.split('/')[-1].split('.')[0]
logging.config.dictConfig(LoggingConfigs.logging_configs(util_name))

SAMPLE_COLUMNS = ['sweep_var', 'n_modes', 'lambda_min_gram', 'worst_ratio', 'log_worst_ratio', 'included']


class SpectralSweep(Util):

	def __init__(self, config_path: str = None, progress: Progress = None, **overrides):
		"""Creates an instance of SpectralSweep.

		Args:
			config_path (str): Path to the experiment configuration.
			progress (Progress): Progress bar.
		"""

		super().__init__(config_path, progress=progress, **overrides)

	def sweep_stage(self):
		"""Run the configured lambda, mu or delta sweep and fit its exponent."""

		with self.timed(const.Stages.SWEEP.value):
			spec = self.config.sweep
			basis = self.basis()
			self.advance(10)
			LOGGER.info(f"sweeping {spec.variable} over {len(spec.values)} values...")

			if spec.variable == const.SweepVariables.LAMBDA.value:
				fit = lambda_sweep(basis, self.sensor(), list(spec.values), self.potential(), self.config.threads)
			elif spec.variable == const.SweepVariables.MU.value:
				fit = mu_sweep(basis, self.sensor(), list(spec.values), self.config.threads)
			else:
				sensor = self.config.sensor
				lam = basis.lambda_cutoff if spec.lam is None else spec.lam
				fit = delta_sweep(basis, lam, list(spec.values), sensor.kind, self.lattice, sensor.sigma,
				                  self.sensor_seed(), sensor.pattern, self.config.threads)
			self.advance(25)

			self.emit_table(f"sweep_{spec.variable}", [s.to_dict() for s in fit.samples], SAMPLE_COLUMNS)
			self.emit_record(f"fit_{spec.variable}", fit)
			self.add_fit(spec.variable, fit)
			self.summarize(f"{spec.variable} sweep:",
			               [[s.sweep_var, s.n_modes, s.worst_ratio, s.included] for s in fit.samples],
			               [spec.variable, 'modes', 'worst ratio', 'fitted'])
			LOGGER.info(f"fitted slope {fit.theta_hat:.4g} +/- {fit.stderr:.2g} (r2={fit.r2:.4g})"
			            + (f", predicted {fit.theta_star:.4g}" if fit.theta_star is not None else ""))


def main(*args, **kwargs):
	# Capture Command Line Arguments
	formatter = lambda prog: argparse.RawTextHelpFormatter(prog, max_help_position=120)
	parser = argparse.ArgumentParser(description="\n[ SPECTRAL SWEEP ]\n\n\t• lambda: fits ln ln K against ln lambda "
	                                             "(growing potentials).\n\t• mu: fits ln K against sqrt(mu) (bounded "
	                                             "potentials, thick sensors).\n\t• delta: fits ln K against ln(1/delta) "
	                                             "over a nested sensor family.".expandtabs(4), formatter_class=formatter)
	parser._optionals.title = "Options"
	parser._positionals.title = "Commands"

	lab_helpers.add_common_arguments(parser)
	parser.add_argument('--values', '-v', required=False, default=None, metavar='',
	                    help='Comma separated sweep values replacing sweep.values, e.g. "4, 8, 16, 32, 64"')
	args = lab_helpers.parse_arguments(parser, *args, **kwargs)

	# Initialize Util
	with (Progress() as progress):
		try:
			task = progress.add_task("[dark_orange3][RUNNING]...", total=100)
			config = load_config(args.config) if args.config else parse_config({})
			if args.values:
				raw = dump_config(config)
				raw['sweep']['values'] = lab_helpers.parse_floats(args.values)
				config = parse_config(raw)
			util = SpectralSweep(config=config, progress=progress, output_dir=args.output_dir, threads=args.threads,
			                     seed=args.seed, no_cache=args.no_cache)
			LogRotater.rotate_logs(retention_period=util.LOG_RETENTION_DAYS)
			progress.update(task, advance=25)
			util.sweep_stage()
			util.finish()
		except Exception as e:
			LOGGER.error(e, exc_info=False)
			print(traceback.format_exc())
			sys.exit(1)
		finally:
			progress.update(task, description="[dodger_blue2 bold][COMPLETE]", advance=100)


if __name__ == '__main__':
	main()
