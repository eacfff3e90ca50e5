import os
import sys
sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from experiments import *
from lib.heatctrl import TimeSet, hum_control, observability_constant
from lib.schrodinger import SpectralElement

# Initialize logger
util_name = __file__.split('/')[-1].split('.')[0]
logging.config.dictConfig(LoggingConfigs.logging_configs(util_name))


class NullControl(Util):

	def __init__(self, config_path: str = None, progress: Progress = None, **overrides):
		"""Creates an instance of NullControl.

		Args:
			config_path (str): Path to the experiment configuration.
			progress (Progress): Progress bar.
		"""

		super().__init__(config_path, progress=progress, **overrides)

	def initial_state(self, basis) -> SpectralElement:
		spec = self.config.control
		modes = min(spec.modes or basis.mode_count, basis.mode_count)
		coefficients = np.zeros(basis.mode_count)
		if spec.initial == 'ground':
			coefficients[0] = 1.0
		elif spec.initial == 'random':
			draw = self.rng(const.SEED_STREAMS['control']).standard_normal(modes)
			coefficients[:modes] = draw / np.linalg.norm(draw)
		return SpectralElement(basis=basis, coefficients=coefficients, mu=float(basis.eigenvalues[modes - 1]))

	def control_stage(self):
		"""Penalized HUM null control from the configured initial state, checked by forward simulation."""

		with self.timed(const.Stages.CONTROL.value):
			spec = self.config.control
			heat = self.config.heat
			basis = self.basis()
			sensor = self.sensor()
			timeset = TimeSet(horizon=heat.T, intervals=heat.J_intervals)
			u0 = self.initial_state(basis)
			C_obs = observability_constant(basis, sensor, timeset, heat.T, spec.modes)
			self.advance(10)

			LOGGER.info(f"solving penalized control problem (epsilon={spec.epsilon:g}, {spec.modes} modes)...")
			result = hum_control(basis, sensor, timeset, heat.T, u0, spec.epsilon, spec.max_iter, spec.tol,
			                     spec.modes, C_obs)
			self.advance(20)

			inside = bool(np.all(sensor.mask.ravel()[result.grid_indices]))
			self.emit_record('control', result.record)
			self.emit_table('control_samples', result.samples(), ['t', 'grid_index', 'value'])
			self.emit_table('residual_history', [{'iteration': i + 1, 'residual': r}
			                                     for i, r in enumerate(result.record.residual_history)],
			                ['iteration', 'residual'])
			summary = {'terminal_residual': result.terminal_residual, 'cost': result.cost,
			           'iterations': result.record.iterations, 'duality_ratio': result.record.duality_ratio,
			           'support_inside_sensor': inside, 'C_obs': C_obs}
			self.add_check('control', summary)
			self.summarize("null control:", [[k, v] for k, v in sorted(summary.items())], ['check', 'value'])


def main(*args, **kwargs):
	# Capture Command Line Arguments
	formatter = lambda prog: argparse.RawTextHelpFormatter(prog, max_help_position=120)
	parser = argparse.ArgumentParser(description="\n[ NULL CONTROL ]\n\n\t• Synthesizes a control supported in "
	                                             "Omega x J steering the heat equation to (nearly) zero at time T.\n\t• "
	                                             "Writes control.json, control_samples.csv and residual_history.csv."
	                                             .expandtabs(4), formatter_class=formatter)
	parser._optionals.title = "Options"
	parser._positionals.title = "Commands"

	lab_helpers.add_common_arguments(parser)
	args = lab_helpers.parse_arguments(parser, *args, **kwargs)

	# Initialize Util
	with (Progress() as progress):
		try:
			task = progress.add_task("[dark_orange3][RUNNING]...", total=100)
			util = NullControl(args.config, progress=progress, output_dir=args.output_dir, threads=args.threads,
			                   seed=args.seed, no_cache=args.no_cache)
			LogRotater.rotate_logs(retention_period=util.LOG_RETENTION_DAYS)
			progress.update(task, advance=25)
			util.control_stage()
			util.finish()
		except Exception as e:
			LOGGER.error(e, exc_info=False)
			print(traceback.format_exc())
			sys.exit(1)
		finally:
			progress.update(task, description="[dodger_blue2 bold][COMPLETE]", advance=100)


if __name__ == '__main__':
	main()
