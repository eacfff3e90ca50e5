import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable


def dump_help(parser, func, *args):
    """Print the parser help when a script is invoked with nothing but -h/--help."""

    if len(*args) == 1 and args[0][0] in ["-h", "--help"]:
        parser.print_help(sys.stderr)
        sys.exit(0)


def parse_input(input_value: str, delimiter: str = ',') -> list:
    """Split a delimited command line value and strip surrounding blanks."""

    return [val.strip() for val in input_value.split(delimiter) if val.strip()]


def parse_floats(input_value: str, delimiter: str = ',') -> list:
    """Parse a delimited list of numbers such as '10, 20, 40'."""

    return [float(val) for val in parse_input(input_value, delimiter)]


def parallel_map(func: Callable, items: Iterable, threads: int = 1) -> list:
    """Apply func to every item, preserving input order.

    Args:
        func (Callable): Pure function of one argument.
        items (Iterable): Arguments.
        threads (int): Worker count; 1 runs inline.

    Returns:
        list: Results in the order of items.

    """

    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))


def add_common_arguments(parser):
    """Flags shared by every experiment script."""

    m = ''
    parser.add_argument('--config', '-c', required=False, default=None,
                        help='Path to the YAML experiment configuration. Defaults apply when omitted', metavar=m)
    parser.add_argument('--output-dir', '-o', required=False, default=None,
                        help='Directory receiving the experiment outputs (overrides output.dir)', metavar=m)
    parser.add_argument('--threads', '-t', required=False, default=None, type=int,
                        help='Worker threads for sweeps (overrides threads)', metavar=m)
    parser.add_argument('--seed', '-s', required=False, default=None, type=int,
                        help='Experiment seed (overrides seed)', metavar=m)
    parser.add_argument('--no-cache', required=False, action='store_true',
                        help='Do not read or write the eigenbasis cache')


def parse_arguments(parser, *args, **kwargs):
    """Parse script arguments the same way whether invoked directly or through the runner."""

    if not args:
        return parser.parse_args(**kwargs)
    if args[0]:
        dump_help(parser, None, *args)
    return parser.parse_args(args[0], **kwargs)
