from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from ...bench import MIN_REPETITIONS, run_bench
from ...conf import INDEX_VARIANTS, get_setting
from ...exceptions import InvalidWorkload
from ...workload import WorkloadSpec, read_dataset
from ._options import OUTPUT_FORMATS, USAGE_ERROR, parse_int_list


class Command(BaseCommand):
    help = "Ingest the workload at each scale, run its query mix and report latency, VO size and gas per scale."

    def add_arguments(self, parser):
        parser.add_argument('--dataset', help="Directory written by generate; a fresh workload is generated if omitted.")
        parser.add_argument('--seed', type=int, default=0, help="Seed for a generated workload.")
        parser.add_argument('--entries-per-block', type=int, default=4, help="Block size for a generated workload.")
        parser.add_argument('--scales', default='16', help="Comma-separated block counts, e.g. 16,64,256.")
        parser.add_argument('--index-variant', choices=INDEX_VARIANTS)
        parser.add_argument('--threshold-t', type=int)
        parser.add_argument('--repetitions', type=int, default=MIN_REPETITIONS)
        parser.add_argument('--format', choices=OUTPUT_FORMATS, default='csv')
        parser.add_argument('--output', help="Write the report here instead of stdout.")

    def handle(self, *args, **options):
        scales = parse_int_list(options['scales'], '--scales')
        try:
            if options['dataset']:
                workload = read_dataset(options['dataset'])
                spec = workload.spec
            else:
                workload = None
                spec = WorkloadSpec(
                    n_blocks=max(scales),
                    entries_per_block=options['entries_per_block'],
                    seed=options['seed'],
                )
            report = run_bench(
                spec,
                scales,
                index_variant=options['index_variant'] or get_setting('INDEX_VARIANT'),
                threshold_t=options['threshold_t'] or get_setting('THRESHOLD_T'),
                repetitions=options['repetitions'],
                branching=get_setting('BRANCHING'),
                workload=workload,
            )
        except (InvalidWorkload, OSError) as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR) from exc

        text = report.render(options['format'])
        if options['output']:
            Path(options['output']).write_text(text)
            self.stdout.write(self.style.SUCCESS(f"Wrote {len(report.rows)} rows to {options['output']}"))
        else:
            self.stdout.write(text, ending='')
