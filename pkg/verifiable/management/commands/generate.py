from django.core.management.base import BaseCommand, CommandError

from ...exceptions import InvalidWorkload
from ...workload import WorkloadSpec, generate
from ._options import USAGE_ERROR


class Command(BaseCommand):
    help = "Generate a seeded synthetic dataset: dataset.jsonl, workload.json and payload objects."

    def add_arguments(self, parser):
        parser.add_argument('--dataset', required=True, help="Output directory.")
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--n-blocks', type=int, default=16, help="Power of two up to 16384.")
        parser.add_argument('--entries-per-block', type=int, default=4)
        parser.add_argument('--density', type=float, default=1 / 60, help="Arrival rate in entries per second.")
        parser.add_argument('--image-fraction', type=float, default=0.25)
        parser.add_argument('--video-fraction', type=float, default=0.05)

    def handle(self, *args, **options):
        try:
            spec = WorkloadSpec(
                n_blocks=options['n_blocks'],
                entries_per_block=options['entries_per_block'],
                timestamp_density=options['density'],
                image_fraction=options['image_fraction'],
                video_fraction=options['video_fraction'],
                seed=options['seed'],
            )
        except InvalidWorkload as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR) from exc
        path = generate(spec, options['dataset'])
        self.stdout.write(self.style.SUCCESS(f"Generated {spec.n_entries} entries in {path}"))
