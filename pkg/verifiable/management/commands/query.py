import json

from django.core.management.base import BaseCommand, CommandError

from ...exceptions import HybridQueryError, IntegrityFailure, QueryError, VerificationFailed
from ...middleware.parser import parse
from ...middleware.results import export
from ...middleware.statements import is_select
from ._options import OUTPUT_FORMATS, USAGE_ERROR, VERIFICATION_FAILED, add_state_dir_argument, open_engine


class Command(BaseCommand):
    help = "Run one SQL statement against the persisted engine and print the verified result."

    def add_arguments(self, parser):
        parser.add_argument('sql', help="Statement text, e.g. \"SELECT * FROM entries WHERE timestamp BETWEEN 1 AND 9\".")
        parser.add_argument('--format', choices=OUTPUT_FORMATS, default='table')
        parser.add_argument('--emit-vo', action='store_true', help="Append the hex-encoded verification object.")
        parser.add_argument('--explain', action='store_true', help="Print the execution plan instead of running it.")
        add_state_dir_argument(parser)

    def handle(self, *args, **options):
        try:
            statement = parse(options['sql'])
        except QueryError as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR) from exc

        engine = open_engine(options)
        try:
            if options['explain']:
                self.stdout.write(json.dumps(engine.explain(statement).as_dict(), indent=2))
                return
            result = engine.execute(statement)
            if not is_select(statement):
                engine.save()
        except VerificationFailed as exc:
            raise CommandError(f"verification failed: {exc}", returncode=VERIFICATION_FAILED) from exc
        except IntegrityFailure as exc:
            raise CommandError(str(exc), returncode=VERIFICATION_FAILED) from exc
        except HybridQueryError as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR) from exc
        finally:
            engine.close()

        if is_select(statement):
            self.stdout.write(export(result, options['format'], emit_vo=options['emit_vo']), ending='')
        else:
            self.stdout.write(json.dumps(result.as_dict(), indent=2))
