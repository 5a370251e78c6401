from django.core.management.base import BaseCommand, CommandError

from ...bhash import RangeVO, verify_range
from ...exceptions import ChainBroken, ContentNotFound, HybridQueryError, IntegrityFailure, MalformedProof, QueryError
from ...ledger import replay_indexes
from ...middleware.parser import parse
from ...middleware.statements import SelectFuzzy, SelectSimple, SelectTimeRange, is_select
from ...trie import PrefixVO, verify_prefix
from ._options import USAGE_ERROR, VERIFICATION_FAILED, add_state_dir_argument, open_engine, parse_int_list


class Command(BaseCommand):
    help = (
        "Check the persisted block chain, its anchored index roots and every stored payload. "
        "With --sql and --vo, check a verification object against the roots anchored at --height instead."
    )

    def add_arguments(self, parser):
        add_state_dir_argument(parser)
        parser.add_argument('--sql', help="The select the verification object answers.")
        parser.add_argument('--vo', help="Hex-encoded verification object, as printed by query --emit-vo.")
        parser.add_argument('--height', type=int, help="Anchor height (defaults to the latest block).")
        parser.add_argument('--entry-ids', help="Comma-separated result ids that must be covered by the proof.")
        parser.add_argument('--skip-payloads', action='store_true')

    def handle(self, *args, **options):
        if bool(options['sql']) != bool(options['vo']):
            raise CommandError("--sql and --vo go together", returncode=USAGE_ERROR)
        engine = open_engine(options)
        try:
            if options['vo']:
                self.verify_vo(engine, options)
            else:
                self.verify_state(engine, options)
        finally:
            engine.close()

    def verify_state(self, engine, options):
        try:
            engine.ledger.verify_chain()
        except ChainBroken as exc:
            raise CommandError(str(exc), returncode=VERIFICATION_FAILED) from exc
        bhash, trie = replay_indexes(
            engine.ledger,
            threshold_t=engine.threshold_t,
            branching=engine.branching,
            convert=engine.index_variant == 'bhash',
        )
        if (bhash.root_digest(), trie.root_digest()) != tuple(engine.ledger.latest().anchored_roots):
            raise CommandError("replayed index roots differ from the latest anchor", returncode=VERIFICATION_FAILED)
        missing = 0
        checked = 0
        if not options['skip_payloads']:
            for entry in engine.ledger.entries():
                for cid in entry.cids():
                    try:
                        engine.store.get(cid)
                        checked += 1
                    except ContentNotFound:
                        missing += 1
                        self.stderr.write(f"entry {entry.entry_id}: payload {cid.hex()} is missing")
                    except IntegrityFailure as exc:
                        raise CommandError(f"entry {entry.entry_id}: {exc}", returncode=VERIFICATION_FAILED) from exc
        self.stdout.write(self.style.SUCCESS(
            f"Chain of {len(engine.ledger)} blocks verified; anchored roots match the replayed indexes; "
            f"{checked} payloads intact, {missing} missing"
        ))

    def verify_vo(self, engine, options):
        try:
            statement = parse(options['sql'])
            data = bytes.fromhex(options['vo'])
        except (QueryError, ValueError) as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR) from exc
        if not is_select(statement):
            raise CommandError("only selects carry verification objects", returncode=USAGE_ERROR)
        height = engine.ledger.height if options['height'] is None else options['height']
        try:
            bhash_root, trie_root = engine.ledger.trusted_root(height)
            proved, ok = _check(engine, statement, data, bhash_root, trie_root)
        except HybridQueryError as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR) from exc
        if not ok:
            raise CommandError(f"verification object does not match the roots anchored at height {height}",
                               returncode=VERIFICATION_FAILED)
        if options['entry_ids']:
            claimed = set(parse_int_list(options['entry_ids'], '--entry-ids'))
            if not claimed <= set(proved):
                raise CommandError(f"entries {sorted(claimed - set(proved))} are not covered by the proof",
                                   returncode=VERIFICATION_FAILED)
        self.stdout.write(self.style.SUCCESS(f"Verified {len(proved)} entries against height {height}"))


def _check(engine, statement, data, bhash_root, trie_root):
    """Entry ids proved by ``data`` and whether it verifies for ``statement``."""
    try:
        if isinstance(statement, SelectFuzzy):
            vo = PrefixVO.from_bytes(data)
            proved = sorted({i for _, ids, _ in vo.subtree or () for i in ids})
            return proved, verify_prefix(vo, trie_root, statement.trie_prefix, proved)
        vo = RangeVO.from_bytes(data)
        proved = [entry_id for _, entry_id in vo.in_range_entries]
    except MalformedProof:
        return [], False
    if isinstance(statement, SelectTimeRange):
        start, end = statement.start_time, statement.end_time
    elif statement.timestamp is not None:
        start = end = statement.timestamp
    else:
        start = end = engine.ledger.entry(statement.entry_id).timestamp
    ok = verify_range(vo, bhash_root, start, end, proved)
    if ok and isinstance(statement, SelectSimple) and statement.entry_id is not None:
        ok = statement.entry_id in proved
    return proved, ok
