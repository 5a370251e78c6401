"""Arguments and helpers shared by the management commands."""

from django.core.management.base import CommandError

from ...conf import INDEX_VARIANTS, get_setting
from ...exceptions import ChainBroken
from ...middleware.engine import Engine

VERIFICATION_FAILED = 1
USAGE_ERROR = 2

OUTPUT_FORMATS = ('table', 'jsonl', 'csv')


def add_state_dir_argument(parser):
    parser.add_argument(
        '--state-dir',
        help="Directory holding the block log and payload objects (defaults to HYBRIDQUERY['STATE_DIR']).",
    )


def add_index_arguments(parser):
    parser.add_argument('--index-variant', choices=INDEX_VARIANTS, help="Index variant; bplus-only never converts.")
    parser.add_argument('--threshold-t', type=int, help="Entry count at which the BHashTree converts (default 10).")
    parser.add_argument('--branching', type=int, help="B+Tree branching factor (default 16).")


def index_options(options):
    return {
        'index_variant': options.get('index_variant') or get_setting('INDEX_VARIANT'),
        'threshold_t': options.get('threshold_t') or get_setting('THRESHOLD_T'),
        'branching': options.get('branching') or get_setting('BRANCHING'),
    }


def state_dir(options):
    path = options.get('state_dir') or get_setting('STATE_DIR')
    if not path:
        raise CommandError("no state directory: pass --state-dir or set HYBRIDQUERY_STATE_DIR", returncode=USAGE_ERROR)
    return path


def open_engine(options, **overrides):
    """Engine persisted under the state directory, configured from settings and ``overrides``."""
    try:
        return Engine.from_settings(state_dir=state_dir(options), **overrides)
    except ChainBroken as exc:
        raise CommandError(f"stored state failed verification: {exc}", returncode=VERIFICATION_FAILED) from exc


def parse_int_list(text, name):
    try:
        values = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise CommandError(f"{name} must be a comma-separated list of integers", returncode=USAGE_ERROR) from None
    if not values:
        raise CommandError(f"{name} must not be empty", returncode=USAGE_ERROR)
    return values
