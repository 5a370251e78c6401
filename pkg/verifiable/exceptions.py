class HybridQueryError(Exception):
    """Base class for every error raised by the verifiable query middleware."""


class InvalidEntry(HybridQueryError, ValueError):
    pass


class DuplicateEntry(HybridQueryError):
    def __init__(self, entry_id):
        super().__init__(f"entry {entry_id} is already indexed")
        self.entry_id = entry_id


class InvalidCharacter(HybridQueryError, ValueError):
    def __init__(self, key, char):
        super().__init__(f"character {char!r} in {key!r} is outside the trie alphabet")
        self.key = key
        self.char = char


class KeyTooLong(HybridQueryError, ValueError):
    pass


class MalformedProof(HybridQueryError):
    """Raised when verification-object bytes cannot be decoded."""


class NonDenseEntryIds(HybridQueryError):
    pass


class UnknownHeight(HybridQueryError, LookupError):
    def __init__(self, height):
        super().__init__(f"no block at height {height}")
        self.height = height


class ChainBroken(HybridQueryError):
    def __init__(self, height, reason):
        super().__init__(f"block chain broken at height {height}: {reason}")
        self.height = height
        self.reason = reason


class PayloadTooLarge(HybridQueryError):
    pass


class ContentNotFound(HybridQueryError, LookupError):
    pass


class IntegrityFailure(HybridQueryError):
    pass


class PayloadIntegrityFailure(IntegrityFailure):
    pass


class EntryNotFound(HybridQueryError, LookupError):
    def __init__(self, entry_id):
        super().__init__(f"entry {entry_id} does not exist")
        self.entry_id = entry_id


class VerificationFailed(HybridQueryError):
    pass


class InvalidWorkload(HybridQueryError, ValueError):
    pass


class QueryError(HybridQueryError):
    pass


class QuerySyntaxError(QueryError):
    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.message = message
        self.position = position


class UnsupportedFeature(QueryError):
    pass
