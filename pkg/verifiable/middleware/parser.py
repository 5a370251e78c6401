"""
Parser for the single-table SQL subset served by the engine.

    SELECT * FROM entries [WHERE predicate] [;]
        predicate: entry_id = INT | timestamp = INT | timestamp BETWEEN INT AND INT
                 | {ts_str | timestamp_string | address} LIKE 'prefix%'
    INSERT INTO entries (column, ...) VALUES (value, ...) [;]
    UPDATE entries SET column = value [, ...] WHERE entry_id = INT [;]
    DELETE FROM entries WHERE entry_id = INT [;]

Lexing is done by sqlparse; its token stream is reduced to five classes (integer,
string, symbol, word and anything else) before parsing, so whatever the lexer
makes of stray input ends up as a positioned QuerySyntaxError.
"""

import re
from dataclasses import dataclass
from enum import Enum

from sqlparse import lexer
from sqlparse import tokens as T

from ..core import MAX_KEY, MAX_TIMESTAMP, ContentId
from ..exceptions import InvalidEntry, QuerySyntaxError, UnsupportedFeature
from ..trie import ALPHABET
from .statements import (
    ENTRY_COLUMNS,
    REQUIRED_INSERT_COLUMNS,
    Delete,
    FuzzyField,
    Insert,
    SelectFuzzy,
    SelectSimple,
    SelectTimeRange,
    Update,
)

TABLE_NAME = 'entries'
SYMBOLS = {'(', ')', ',', ';', '*', '='}
FUZZY_FIELDS = {
    'ts_str': FuzzyField.TIMESTAMP_STRING,
    'timestamp_string': FuzzyField.TIMESTAMP_STRING,
    'address': FuzzyField.ADDRESS,
}
UNSUPPORTED_CLAUSES = {
    'JOIN', 'INNER', 'LEFT', 'RIGHT', 'OUTER', 'CROSS', 'NATURAL', 'GROUP BY', 'ORDER BY',
    'LIMIT', 'OFFSET', 'HAVING', 'UNION', 'INTERSECT', 'EXCEPT',
}
UNSUPPORTED_STATEMENTS = {'CREATE', 'DROP', 'ALTER', 'TRUNCATE', 'WITH', 'REPLACE', 'MERGE', 'GRANT', 'REVOKE'}
NULLABLE_COLUMNS = {'imagecid', 'videocid', 'image', 'video'}
INTEGER_COLUMNS = {'amount', 'timestamp'}

_WORD_RE = re.compile(r'[A-Za-z_][A-Za-z0-9_]*')
_SPACED_KEYWORD_RE = re.compile(r'[A-Za-z_]+(?:\s+[A-Za-z_]+)+')


class TokenKind(Enum):
    INT = 'integer'
    STR = 'string'
    SYM = 'symbol'
    WORD = 'word'
    OTHER = 'other'
    END = 'end of input'


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    value: object
    position: int

    def is_word(self, *words):
        return self.kind == TokenKind.WORD and self.value.upper() in words

    def is_sym(self, symbol):
        return self.kind == TokenKind.SYM and self.value == symbol


def tokenize(sql):
    tokens = []
    position = 0
    for ttype, value in lexer.tokenize(sql):
        start = position
        position += len(value)
        if ttype in T.Whitespace or ttype in T.Newline or ttype in T.Comment:
            continue
        tokens.append(_classify(ttype, value, start))
    tokens.append(Token(TokenKind.END, None, position))
    return tokens


def _classify(ttype, value, position):
    if ttype in T.Literal.String.Single and len(value) >= 2 and value[0] == value[-1] == "'":
        return Token(TokenKind.STR, value[1:-1].replace("''", "'"), position)
    if ttype in T.Literal.Number.Integer and value.isascii() and value.isdigit():
        return Token(TokenKind.INT, int(value), position)
    if _WORD_RE.fullmatch(value):
        return Token(TokenKind.WORD, value, position)
    if _SPACED_KEYWORD_RE.fullmatch(value):
        return Token(TokenKind.WORD, ' '.join(value.upper().split()), position)
    if value in SYMBOLS:
        return Token(TokenKind.SYM, value, position)
    return Token(TokenKind.OTHER, value, position)


def parse(sql):
    """Parse one statement into its AST; raises QuerySyntaxError or UnsupportedFeature."""
    return _Parser(sql).statement()


class _Parser:
    def __init__(self, sql):
        self.tokens = tokenize(sql)
        self.index = 0

    def peek(self, offset=0):
        return self.tokens[min(self.index + offset, len(self.tokens) - 1)]

    def advance(self):
        token = self.peek()
        if token.kind != TokenKind.END:
            self.index += 1
        return token

    def error(self, message, token=None):
        token = token or self.peek()
        return QuerySyntaxError(message, token.position)

    def expect_word(self, *words):
        token = self.advance()
        if not token.is_word(*words):
            raise self.error(f"expected {' or '.join(words)}, found {_describe(token)}", token)
        return token

    def expect_sym(self, symbol):
        token = self.advance()
        if not token.is_sym(symbol):
            raise self.error(f"expected '{symbol}', found {_describe(token)}", token)
        return token

    def expect_int(self):
        token = self.advance()
        if token.kind != TokenKind.INT:
            raise self.error(f"expected an integer, found {_describe(token)}", token)
        if token.value > MAX_KEY:
            raise self.error("integer does not fit in 64 bits", token)
        return token.value

    def statement(self):
        token = self.peek()
        if token.is_word('SELECT'):
            result = self.select()
        elif token.is_word('INSERT'):
            result = self.insert()
        elif token.is_word('UPDATE'):
            result = self.update()
        elif token.is_word('DELETE'):
            result = self.delete()
        elif token.is_word(*UNSUPPORTED_STATEMENTS):
            raise UnsupportedFeature(f"{token.value.upper()} statements are not supported")
        else:
            raise self.error(f"expected SELECT, INSERT, UPDATE or DELETE, found {_describe(token)}", token)
        self.finish()
        return result

    def finish(self):
        if self.peek().is_sym(';'):
            self.advance()
        token = self.peek()
        if token.is_word(*UNSUPPORTED_CLAUSES):
            raise UnsupportedFeature(f"{token.value.upper()} is not supported")
        if token.is_word('AND', 'OR', 'NOT'):
            raise UnsupportedFeature("compound predicates are not supported")
        if token.kind != TokenKind.END:
            raise self.error(f"unexpected {_describe(token)}", token)

    def table(self):
        token = self.advance()
        if token.kind != TokenKind.WORD:
            raise self.error(f"expected a table name, found {_describe(token)}", token)
        if token.value.lower() != TABLE_NAME:
            raise UnsupportedFeature(f"unknown table {token.value!r}; only {TABLE_NAME!r} exists")
        if self.peek().is_sym(','):
            raise UnsupportedFeature("multi-table queries are not supported")

    def select(self):
        self.expect_word('SELECT')
        token = self.peek()
        if not token.is_sym('*'):
            if token.kind == TokenKind.WORD and self.peek(1).is_sym('('):
                raise UnsupportedFeature(f"function {token.value.upper()} is not supported")
            if token.is_word('DISTINCT'):
                raise UnsupportedFeature("DISTINCT is not supported")
            if token.kind == TokenKind.WORD and not token.is_word('FROM'):
                raise UnsupportedFeature("column projections are not supported; use SELECT *")
            raise self.error(f"expected '*', found {_describe(token)}", token)
        self.advance()
        self.expect_word('FROM')
        self.table()
        if not self.peek().is_word('WHERE'):
            return SelectTimeRange(0, MAX_TIMESTAMP)
        self.advance()
        return self.predicate()

    def predicate(self):
        column = self.advance()
        if column.is_word('ENTRY_ID'):
            self.expect_sym('=')
            return SelectSimple(entry_id=self.expect_int())
        if column.is_word('TIMESTAMP'):
            if self.peek().is_word('BETWEEN'):
                self.advance()
                start = self.expect_int()
                self.expect_word('AND')
                return SelectTimeRange(start, self.expect_int())
            self.expect_sym('=')
            return SelectSimple(timestamp=self.expect_int())
        if column.kind == TokenKind.WORD and column.value.lower() in FUZZY_FIELDS:
            self.expect_word('LIKE')
            return self.like(FUZZY_FIELDS[column.value.lower()])
        if column.kind == TokenKind.WORD and self.peek().is_sym('('):
            raise UnsupportedFeature(f"function {column.value.upper()} is not supported")
        raise self.error(f"unsupported predicate column {_describe(column)}", column)

    def like(self, field):
        token = self.advance()
        if token.kind != TokenKind.STR:
            raise self.error(f"expected a quoted pattern, found {_describe(token)}", token)
        pattern = token.value
        if not pattern.endswith('%') or '%' in pattern[:-1] or '_' in pattern:
            raise UnsupportedFeature("only prefix patterns of the form 'prefix%' are supported")
        prefix = pattern[:-1]
        if field == FuzzyField.ADDRESS:
            if prefix not in ('', '0') and not prefix.startswith('0x'):
                raise self.error("address patterns start with 0x", token)
            checked = prefix[2:] if prefix.startswith('0x') else ''
        else:
            checked = prefix
        bad = next((char for char in checked if char not in ALPHABET), None)
        if bad is not None:
            raise self.error(f"character {bad!r} cannot appear in a {field.value} pattern", token)
        return SelectFuzzy(field, prefix)

    def insert(self):
        self.expect_word('INSERT')
        self.expect_word('INTO')
        self.table()
        self.expect_sym('(')
        columns = [self.column()]
        while self.peek().is_sym(','):
            self.advance()
            columns.append(self.column())
        self.expect_sym(')')
        self.expect_word('VALUES')
        self.expect_sym('(')
        values = [self.value(columns[0])]
        for column in columns[1:]:
            self.expect_sym(',')
            values.append(self.value(column))
        if self.peek().is_sym(','):
            raise self.error("more values than columns")
        self.expect_sym(')')
        if self.peek().is_sym(','):
            raise UnsupportedFeature("multi-row INSERT is not supported")

        names = [column.value.lower() for column in columns]
        for position, column in enumerate(columns):
            if names[position] in names[:position]:
                raise self.error(f"column {column.value} is listed twice", column)
        for required in REQUIRED_INSERT_COLUMNS:
            if required not in names:
                raise self.error(f"INSERT requires the {required} column", columns[0])
        row = dict(zip(names, values))
        return Insert(
            amount=row['amount'],
            addresses=row['addresses'],
            timestamp=row['timestamp'],
            image_cid=row.get('imagecid'),
            video_cid=row.get('videocid'),
            image=row.get('image'),
            video=row.get('video'),
        )

    def column(self):
        token = self.advance()
        if token.kind != TokenKind.WORD or token.value.lower() not in ENTRY_COLUMNS:
            raise self.error(f"unknown column {_describe(token)}", token)
        return token

    def value(self, column):
        name = column.value.lower()
        token = self.advance()
        if token.is_word('NULL'):
            if name not in NULLABLE_COLUMNS:
                raise self.error(f"{name} cannot be NULL", token)
            return None
        if name in INTEGER_COLUMNS:
            if token.kind != TokenKind.INT:
                raise self.error(f"{name} expects an integer, found {_describe(token)}", token)
            if token.value > MAX_KEY:
                raise self.error(f"{name} does not fit in 64 bits", token)
            return token.value
        if token.kind != TokenKind.STR:
            raise self.error(f"{name} expects a quoted string, found {_describe(token)}", token)
        text = token.value
        try:
            if name == 'addresses':
                return tuple(part.strip() for part in text.split(','))
            if name in ('imagecid', 'videocid'):
                return ContentId.fromhex(text)
            return bytes.fromhex(text)
        except (ValueError, InvalidEntry) as exc:
            raise self.error(f"invalid {name} value: {exc}", token) from None

    def update(self):
        self.expect_word('UPDATE')
        self.table()
        self.expect_word('SET')
        changes = {}
        while True:
            column = self.column()
            if column.value.lower() in changes:
                raise self.error(f"column {column.value} is assigned twice", column)
            self.expect_sym('=')
            changes[column.value.lower()] = self.value(column)
            if not self.peek().is_sym(','):
                break
            self.advance()
        entry_id = self.where_entry_id()
        return Update(entry_id, tuple(sorted(changes.items())))

    def delete(self):
        self.expect_word('DELETE')
        self.expect_word('FROM')
        self.table()
        return Delete(self.where_entry_id())

    def where_entry_id(self):
        self.expect_word('WHERE')
        self.expect_word('ENTRY_ID')
        self.expect_sym('=')
        return self.expect_int()


def _describe(token):
    if token.kind == TokenKind.END:
        return 'end of input'
    return f"{token.kind.value} {token.value!r}"
