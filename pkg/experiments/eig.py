import os
import sys
sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from experiments import *
from lib.domain import verify_assumption
from lib.helpers.exceptions import DecayRadiusError, ProjectionError
from lib.schrodinger import decay_radius
from lib.specineq import fit_line

# Initialize logger
util_name = __file__.split('/')[-1].split('.')[0]
logging.config.dictConfig(LoggingConfigs.logging_configs(util_name))


class EigenbasisBuilder(Util):

	def __init__(self, config_path: str = None, progress: Progress = None, **overrides):
		"""Creates an instance of EigenbasisBuilder.

		Args:
			config_path (str): Path to the experiment configuration.
			progress (Progress): Progress bar.
		"""

		super().__init__(config_path, progress=progress, **overrides)

	def eig_stage(self, refresh: bool = False):
		"""Populate (or refresh) the eigenbasis cache, check the potential and tabulate the spectrum."""

		with self.timed(const.Stages.EIG.value):
			basis = self.basis(refresh=refresh)
			LOGGER.info(f"{basis.mode_count} modes below {basis.lambda_cutoff:.6g}")
			self.advance(20)

			report = verify_assumption(self.potential(), self.grid)
			self.emit_record('assumption', report)
			if not report.passed:
				LOGGER.warning(f"potential fails assumption ({report.assumption}) on this grid")

			rows = [{'k': k, 'lambda': float(lam), 'residual': float(res)}
			        for k, (lam, res) in enumerate(zip(basis.eigenvalues, basis.residuals))]
			self.emit_table('eigenvalues', rows, ['k', 'lambda', 'residual'])
			self.summarize("lowest eigenvalues:", [[r['k'], r['lambda'], r['residual']] for r in rows[:10]],
			               ['k', 'lambda', 'residual'])
			self.add_check('eig', {'modes': basis.mode_count, 'lambda_cutoff': basis.lambda_cutoff,
			                       'max_residual': float(np.max(basis.residuals)) if basis.mode_count else 0.0,
			                       'assumption': report.assumption, 'assumption_passed': report.passed})
			self.advance(20)
			self.decay_radii()

	def decay_radii(self):
		"""Decay radius at every lambda of a lambda sweep and the fit of ln R against ln lambda."""

		if self.config.sweep.variable != const.SweepVariables.LAMBDA.value:
			return
		basis = self.basis()
		threshold = self.config.lift.decay_threshold
		rows = []
		for lam in sorted(self.config.sweep.values):
			try:
				rows.append({'lambda': float(lam), 'radius': decay_radius(basis, lam, threshold)})
			except (DecayRadiusError, ProjectionError) as e:
				LOGGER.warning(f"decay radius skipped at lambda={lam}: {e}")
		self.emit_table('decay_radius', rows, ['lambda', 'radius'])

		usable = [r for r in rows if r['radius'] > 0]
		if len(usable) >= const.MIN_FIT_SAMPLES:
			slope, intercept, stderr, r2 = fit_line(np.log([r['lambda'] for r in usable]),
			                                        np.log([r['radius'] for r in usable]))
			fit = {'theta_hat': slope, 'intercept': intercept, 'stderr': stderr, 'r2': r2,
			       'theta_star': 1.0 / self.config.potential.beta1, 'threshold': threshold}
			self.add_fit('decay_radius', fit)
			self.emit_record('fit_decay_radius', fit)
			LOGGER.info(f"decay radius grows like lambda^{slope:.4g} (r2={r2:.4g})")


def main(*args, **kwargs):
	# Capture Command Line Arguments
	formatter = lambda prog: argparse.RawTextHelpFormatter(prog, max_help_position=120)
	parser = argparse.ArgumentParser(description="\n[ EIGENBASIS ]\n\n\t• Solves the truncated eigenproblem of the "
	                                             "configured Schrödinger operator and stores it in the eigenbasis cache."
	                                             "\n\t• Writes eigenvalues.csv, assumption.json and, for lambda sweeps, "
	                                             "decay_radius.csv.".expandtabs(4), formatter_class=formatter)
	parser._optionals.title = "Options"
	parser._positionals.title = "Commands"

	lab_helpers.add_common_arguments(parser)
	parser.add_argument('--refresh', required=False, action='store_true',
	                    help='Recompute the eigenbasis and overwrite the cached copy')
	args = lab_helpers.parse_arguments(parser, *args, **kwargs)

	# Initialize Util
	with (Progress() as progress):
		try:
			task = progress.add_task("[dark_orange3][RUNNING]...", total=100)
			util = EigenbasisBuilder(args.config, progress=progress, output_dir=args.output_dir, threads=args.threads,
			                         seed=args.seed, no_cache=args.no_cache)
			LogRotater.rotate_logs(retention_period=util.LOG_RETENTION_DAYS)
			progress.update(task, advance=25)
			util.eig_stage(refresh=args.refresh)
			util.finish()
		except Exception as e:
			LOGGER.error(e, exc_info=False)
			print(traceback.format_exc())
			sys.exit(1)
		finally:
			progress.update(task, description="[dodger_blue2 bold][COMPLETE]", advance=100)


if __name__ == '__main__':
	main()
