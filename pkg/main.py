import argparse
import importlib
import json
import logging
import os
import sys

from dotenv import load_dotenv

from mecaoi.config import resolve
from mecaoi.errors import InvalidConfig, InvalidParams, NonConvergence, SingularSystem
from mecaoi.results import write_json

logger = logging.getLogger('mecaoi.main')

MODES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'modes')

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2


class _Parser(argparse.ArgumentParser):
    """Argument errors are validation errors (exit 1), not argparse's exit 2"""

    def error(self, message):
        raise InvalidConfig(message)


def build_parser():
    parser = _Parser(prog='main.py', description='AoI analysis and mean-field offloading games for MEC networks')
    parser.add_argument('mode', help='aoi, simulate, mfe, nash or sweep')
    parser.add_argument('--config', help='JSON experiment config (built-in defaults otherwise)')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='override a dotted config path, e.g. types.0.arrival_rate=5')
    parser.add_argument('--output', help='output directory')
    parser.add_argument('--seed', type=int, help='master seed of the simulator')
    parser.add_argument('--log-level', help='DEBUG, INFO, WARNING or ERROR')
    return parser


class Harness:
    def __init__(self):
        self.modes = {}
        self.load_errors = {}

    def add_mode(self, mode):
        """Register a mode object (called from each module's setup hook)"""
        self.modes[mode.name] = mode

    def load_modes(self, modes_dir=MODES_DIR):
        """Load all modes from the modes directory"""
        if not os.path.exists(modes_dir):
            return
        for filename in sorted(os.listdir(modes_dir)):
            if filename.endswith('.py') and not filename.startswith('__'):
                mode_name = filename[:-3]
                try:
                    module = importlib.import_module(f'modes.{mode_name}')
                    module.setup(self)
                    logger.debug(f"Loaded mode: {mode_name}")
                except Exception as e:
                    self.load_errors[mode_name] = e
                    logger.error(f"Failed to load mode {mode_name}: {e}")

    def run(self, args):
        """Resolve the config, run one mode, write its artifacts"""
        if args.mode in self.load_errors:
            raise InvalidConfig(f"mode '{args.mode}' failed to load: {self.load_errors[args.mode]}")
        if args.mode not in self.modes:
            raise InvalidConfig(f"unknown mode '{args.mode}' (available: {', '.join(sorted(self.modes))})")
        exp = resolve(args.mode, args.config, args.overrides, args.output, args.seed)
        write_json(exp.output / 'resolved_config.json', exp.raw)
        logger.info(f"Running mode '{exp.mode}' into {exp.output}")
        written = self.modes[exp.mode].run(exp)
        for path in written:
            print(path)
        logger.info(f"Mode '{exp.mode}' finished: {len(written)} files written")
        return written


def _fail(error, code):
    logger.error(f"{type(error).__name__}: {error}")
    print(json.dumps({'error': type(error).__name__, 'message': str(error)}), file=sys.stderr)
    return code


def main(argv=None):
    # Load environment variables from .env
    load_dotenv()

    try:
        args = build_parser().parse_args(argv)
        level = (args.log_level or os.getenv('MECAOI_LOG_LEVEL') or 'INFO').upper()
        if not isinstance(logging.getLevelName(level), int):
            raise InvalidConfig(f"unknown log level '{level}'")
        logging.basicConfig(
            level=level,
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        harness = Harness()
        harness.load_modes()
        harness.run(args)
    except (InvalidConfig, InvalidParams) as e:
        return _fail(e, EXIT_INVALID)
    except (NonConvergence, SingularSystem) as e:
        return _fail(e, EXIT_NOT_CONVERGED)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
