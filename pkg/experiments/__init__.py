import argparse
import logging.config
import math
import traceback
import numpy as np
import lib.helpers.constants as const
from lib.util import Util
from pathlib import Path
from lib.helpers.logs import LoggingConfigs, LogRotater, LOGGER
from lib.helpers import lab_helpers
from rich.progress import Progress
from rich import print
