import os
import sys
sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from experiments import *
from experiments.eig import EigenbasisBuilder
from experiments.specineq import SpectralInequality
from experiments.sweep import SpectralSweep
from experiments.lift_check import LiftCheck
from experiments.observability import Observability
from experiments.control import NullControl

# Initialize logger
util_name = __file__.split('/')[-1].split('.')[0]
logging.config.dictConfig(LoggingConfigs.logging_configs(util_name))


class ExperimentRunner(EigenbasisBuilder, SpectralInequality, SpectralSweep, LiftCheck, Observability, NullControl):
	"""Runs the stages listed in the configuration, in order, on one shared eigenbasis and output directory."""

	def __init__(self, config_path: str = None, progress: Progress = None, **overrides):
		super().__init__(config_path, progress=progress, **overrides)
		self.stages = {const.Stages.EIG.value: self.eig_stage,
		               const.Stages.SPECINEQ.value: self.specineq_stage,
		               const.Stages.SWEEP.value: self.sweep_stage,
		               const.Stages.LIFT.value: self.lift_stage,
		               const.Stages.OBSERVABILITY.value: self.observability_stage,
		               const.Stages.CONTROL.value: self.control_stage}

	def run(self):
		"""Execute every configured stage and write the experiment report.

		Returns:
			ExperimentReport: The report also written to report.json.

		"""

		LOGGER.info(f"running experiment '{self.config.name}' with stages {', '.join(self.config.stages)}")
		for stage in self.config.stages:
			try:
				self.stages[stage]()
			except Exception:
				LOGGER.error(f"stage '{stage}' of experiment '{self.config.name}' failed")
				raise
		return self.finish()


def main(*args, **kwargs):
	# Capture Command Line Arguments
	formatter = lambda prog: argparse.RawTextHelpFormatter(prog, max_help_position=120)
	parser = argparse.ArgumentParser(description="\n[ RUN EXPERIMENT ]\n\n\t• Executes the pipeline listed under "
	                                             "'stages' in the configuration (eig, specineq, sweep, lift, "
	                                             "observability, control).\n\t• Writes every stage output plus "
	                                             "report.json and timings.json.".expandtabs(4),
	                                 formatter_class=formatter)
	parser._optionals.title = "Options"
	parser._positionals.title = "Commands"

	lab_helpers.add_common_arguments(parser)
	args = lab_helpers.parse_arguments(parser, *args, **kwargs)

	# Initialize Util
	with (Progress() as progress):
		try:
			task = progress.add_task("[dark_orange3][RUNNING]...", total=100)
			util = ExperimentRunner(args.config, progress=progress, output_dir=args.output_dir, threads=args.threads,
			                        seed=args.seed, no_cache=args.no_cache)
			LogRotater.rotate_logs(retention_period=util.LOG_RETENTION_DAYS)
			progress.update(task, advance=10)
			util.run()
		except Exception as e:
			LOGGER.error(e, exc_info=False)
			print(traceback.format_exc())
			sys.exit(1)
		finally:
			progress.update(task, description="[dodger_blue2 bold][COMPLETE]", advance=100)


if __name__ == '__main__':
	main()
