import importlib
import click
import sys
from lib.helpers.logs import LogHelper
from pathlib import Path

SCRIPTS_DIR = Path(__file__).parent / 'experiments'
SCRIPT_SETTINGS = dict(help_option_names=[], ignore_unknown_options=True, allow_extra_args=True)


@click.group(help='SPECTRAL INEQUALITY AND HEAT CONTROL LAB', context_settings=dict(help_option_names=["-h", "--help"]))
@click.pass_context
def main_module(cmd):
    pass


def bind_function(name: str, submodule: str):

    @click.command(name=name, help=f"Run experiments/{submodule}.py (use '{name} -h' for its options).",
                   context_settings=SCRIPT_SETTINGS)
    @click.pass_context
    def func(ctx):
        call = importlib.import_module(f"experiments.{submodule}")
        if hasattr(call, 'main'):
            call.main(ctx.args)
        else:
            click.echo(click.style(f"The '{name}' command is not supported yet", fg='red'))

    return func


def register_commands():
    for path in sorted(SCRIPTS_DIR.glob('[!__]*.py')):
        submodule = path.stem
        main_module.add_command(bind_function(submodule.replace('_', '-'), submodule))


register_commands()

if __name__ == '__main__':

    if len(sys.argv) == 1 or sys.argv[1] in ["-h", "--help"]:
        LogHelper.banner()
    main_module(max_content_width=120)
