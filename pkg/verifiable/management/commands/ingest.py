from django.core.management.base import BaseCommand, CommandError

from ...exceptions import HybridQueryError
from ...workload import read_dataset
from ._options import USAGE_ERROR, add_index_arguments, add_state_dir_argument, index_options, open_engine


class Command(BaseCommand):
    help = "Ingest a generated dataset into the persisted engine, one block per entries_per_block entries."

    def add_arguments(self, parser):
        parser.add_argument('--dataset', required=True, help="Directory written by the generate command.")
        parser.add_argument('--entries-per-block', type=int, help="Defaults to the dataset's own value.")
        add_state_dir_argument(parser)
        add_index_arguments(parser)

    def handle(self, *args, **options):
        try:
            workload = read_dataset(options['dataset'])
        except (OSError, ValueError) as exc:
            raise CommandError(f"cannot read dataset {options['dataset']}: {exc}", returncode=USAGE_ERROR) from exc
        per_block = options['entries_per_block'] or workload.spec.entries_per_block
        engine = open_engine(options, **index_options(options))
        try:
            receipts = engine.ingest(workload.insert_statements(), per_block)
            engine.save()
        except HybridQueryError as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR) from exc
        finally:
            engine.close()
        self.stdout.write(self.style.SUCCESS(
            f"Ingested {len(workload.records)} entries in {len(receipts)} blocks; "
            f"ledger height {engine.ledger.height}, converted={engine.bhash.converted}"
        ))
