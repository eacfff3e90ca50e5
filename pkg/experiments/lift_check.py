import os
import sys
sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from experiments import *
from lib.lifting import (lift, sandwich_check, comparability_check, doubling_checks, calibrate_doubling,
                         MultiplierRegion, positive_multiplier, sample_divergence_fields, ThreeBallGeometry,
                         e_slice_mask, calibrate_three_ball, three_ball_check)
from lib.schrodinger import assemble, random_element, lift_residual

# Initialize logger
util_name = __file__.split('/')[-1].split('.')[0]
logging.config.dictConfig(LoggingConfigs.logging_configs(util_name))

T_POINTS = 5


class LiftCheck(Util):

	def __init__(self, config_path: str = None, progress: Progress = None, **overrides):
		"""Creates an instance of LiftCheck.

		Args:
			config_path (str): Path to the experiment configuration.
			progress (Progress): Progress bar.
		"""

		super().__init__(config_path, progress=progress, **overrides)

	def lift_level(self) -> float:
		basis = self.basis()
		mu = self.config.lift.mu
		return min(basis.lambda_cutoff, 30.0) if mu is None else min(mu, basis.lambda_cutoff)

	def lift_stage(self):
		"""Norm sandwich, doubling ratios, multiplier bounds and the three-ball protocol on random elements."""

		with self.timed(const.Stages.LIFT.value):
			spec = self.config.lift
			basis = self.basis()
			mu = self.lift_level()
			rng = self.rng(const.SEED_STREAMS['lift'])
			operator = assemble(self.grid, self.potential())
			bounded = self.potential().assumption == const.Assumptions.BOUNDED

			sandwich, doubling, comparability, residuals = [], [], [], []
			for _ in range(spec.samples):
				lifted = lift(random_element(basis, mu, rng), spec.s_max, spec.s_points, spec.rho)
				sandwich.append(sandwich_check(lifted, spec.rho))
				if 4 * spec.rho <= spec.s_max:
					doubling.append(doubling_checks(lifted, spec.rho, spec.radius))
				if bounded:
					comparability.append(comparability_check(lifted, spec.rho))
				residuals.append(lift_residual(lifted, operator).relative)
			self.advance(20)

			self.emit_table('sandwich', [r.to_dict() for r in sandwich])
			passed = sum(r.passed for r in sandwich)
			summary = {'mu': mu, 'samples': spec.samples, 'sandwich_passed': passed,
			           'worst_lower_slack': min(r.lower_slack for r in sandwich),
			           'worst_upper_slack': min(r.upper_slack for r in sandwich),
			           'max_lift_residual': max(residuals)}
			if doubling:
				self.emit_table('doubling', [r.to_dict() for r in doubling])
				calibration = calibrate_doubling(doubling)
				summary['doubling_constant'] = calibration.constant
				summary['doubling_spread'] = calibration.spread
			if comparability:
				self.emit_table('comparability', [r.to_dict() for r in comparability])
				summary['comparability_lower'] = min(r.lower_constant for r in comparability)
				summary['comparability_upper'] = max(r.upper_constant for r in comparability)
			if passed < spec.samples:
				LOGGER.warning(f"norm sandwich failed on {spec.samples - passed} of {spec.samples} elements")

			summary.update(self.three_ball(basis, mu, rng))
			self.emit_record('lift', summary)
			self.add_check('lift', summary)
			self.summarize("lifting checks:", [[k, v] for k, v in sorted(summary.items())], ['check', 'value'])

	def three_ball(self, basis, mu: float, rng: np.random.Generator) -> dict:
		"""Calibrate (C1, C2) on one set of divergence-form fields, then validate on fresh ones."""

		spec = self.config.lift
		t_axis = np.linspace(-spec.s_max, spec.s_max, T_POINTS)
		s_axis = np.linspace(-spec.s_max, spec.s_max, spec.s_points)
		s_axis[spec.s_points // 2] = 0.0
		region = MultiplierRegion(x_grid=self.grid, s_axis=s_axis, t_axis=t_axis)
		LOGGER.info(f"solving positive multiplier on a {region.shape} region...")
		multiplier = positive_multiplier(region, self.potential(), spec.C0)
		self.advance(10)

		geometry = ThreeBallGeometry(center=(0.0,) * (self.grid.dim + 2), half_side=spec.s_max / 2,
		                             s_axis=self.grid.dim)
		calibration_fields = sample_divergence_fields(basis, mu, multiplier, spec.C0, spec.samples, rng,
		                                              spec.s_max, spec.s_points)
		E_mask = e_slice_mask(calibration_fields[0][1], geometry)
		calibration = calibrate_three_ball(calibration_fields, E_mask, geometry)
		del calibration_fields
		self.emit_record('three_ball_calibration', calibration)

		validation = [three_ball_check(values, axes, E_mask, calibration.C1, calibration.C2, geometry)
		              for values, axes in sample_divergence_fields(basis, mu, multiplier, spec.C0, spec.validation,
		                                                           rng, spec.s_max, spec.s_points)]
		self.emit_table('three_ball_validation', [r.to_dict() for r in validation])
		held = sum(r.holds for r in validation)
		LOGGER.info(f"three-ball inequality held on {held} of {len(validation)} validation fields")
		self.advance(10)
		return {'multiplier_log_w2': multiplier.log_w2, 'three_ball_C2': calibration.C2,
		        'three_ball_gamma': calibration.gamma, 'three_ball_held': held,
		        'three_ball_validation': len(validation)}


def main(*args, **kwargs):
	# Capture Command Line Arguments
	formatter = lambda prog: argparse.RawTextHelpFormatter(prog, max_help_position=120)
	parser = argparse.ArgumentParser(description="\n[ LIFT CHECK ]\n\n\t• Lifts random elements of the spectral "
	                                             "subspace into the extra variable and checks the norm sandwich, the "
	                                             "doubling ratios and the lifted equation residual.\n\t• Solves the "
	                                             "positive multiplier and runs the calibrate/validate three-ball "
	                                             "protocol.".expandtabs(4), formatter_class=formatter)
	parser._optionals.title = "Options"
	parser._positionals.title = "Commands"

	lab_helpers.add_common_arguments(parser)
	args = lab_helpers.parse_arguments(parser, *args, **kwargs)

	# Initialize Util
	with (Progress() as progress):
		try:
			task = progress.add_task("[dark_orange3][RUNNING]...", total=100)
			util = LiftCheck(args.config, progress=progress, output_dir=args.output_dir, threads=args.threads,
			                 seed=args.seed, no_cache=args.no_cache)
			LogRotater.rotate_logs(retention_period=util.LOG_RETENTION_DAYS)
			progress.update(task, advance=25)
			util.lift_stage()
			util.finish()
		except Exception as e:
			LOGGER.error(e, exc_info=False)
			print(traceback.format_exc())
			sys.exit(1)
		finally:
			progress.update(task, description="[dodger_blue2 bold][COMPLETE]", advance=100)


if __name__ == '__main__':
	main()
