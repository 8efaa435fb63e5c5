"""Interaction logs: parsing, preprocessing filters and corpus statistics.

A log is stored column-wise.  Users and items carry dense indices that are
contiguous from 0 and are rebuilt after every filtering stage, keeping the
relative order of the surviving ids (first appearance in the source file).
"""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import IO, Iterator, NamedTuple, Sequence

import numpy as np

from seqstruct import kernels

log = logging.getLogger(__name__)

PIPELINE_ORDER = ("filter_event_type", "k_core_filter", "sort_by_user_time", "dedup_consecutive")


class ParseError(ValueError):
    """A malformed input row; ``line`` is 1-based and counts the header."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigError(ValueError):
    pass


class Interaction(NamedTuple):
    user: str
    item: str
    timestamp: float
    event_type: str | None = None


@dataclass
class Vocab:
    """Bidirectional map between opaque string ids and dense indices."""

    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.index = {key: i for i, key in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def lookup(self, key: str) -> int:
        return self.index[key]

    def add(self, key: str) -> int:
        idx = self.index.get(key)
        if idx is None:
            idx = len(self.ids)
            self.ids.append(key)
            self.index[key] = idx
        return idx


@dataclass
class InteractionLog:
    users: np.ndarray
    items: np.ndarray
    timestamps: np.ndarray
    user_vocab: Vocab
    item_vocab: Vocab
    event_types: np.ndarray | None = None
    skipped_rows: int = 0

    def __len__(self) -> int:
        return len(self.users)

    @property
    def n_users(self) -> int:
        return len(self.user_vocab)

    @property
    def n_items(self) -> int:
        return len(self.item_vocab)

    def interactions(self) -> Iterator[Interaction]:
        events = self.event_types if self.event_types is not None else [None] * len(self)
        for u, i, t, e in zip(self.users, self.items, self.timestamps, events):
            yield Interaction(self.user_vocab.ids[u], self.item_vocab.ids[i], float(t), e)

    def take(self, rows: np.ndarray) -> "InteractionLog":
        """Subset (by boolean mask or index array) with vocabularies rebuilt dense."""
        users = self.users[rows]
        items = self.items[rows]
        kept_users, users = np.unique(users, return_inverse=True)
        kept_items, items = np.unique(items, return_inverse=True)
        return InteractionLog(
            users=users.astype(np.int64),
            items=items.astype(np.int64),
            timestamps=self.timestamps[rows],
            user_vocab=Vocab([self.user_vocab.ids[u] for u in kept_users]),
            item_vocab=Vocab([self.item_vocab.ids[i] for i in kept_items]),
            event_types=None if self.event_types is None else self.event_types[rows],
            skipped_rows=self.skipped_rows,
        )

    def is_sorted(self) -> bool:
        if len(self) < 2:
            return True
        du = np.diff(self.users)
        dt = np.diff(self.timestamps)
        return bool(np.all((du > 0) | ((du == 0) & (dt >= 0))))

    def user_offsets(self) -> np.ndarray:
        """Segment offsets of each user's rows; requires a sorted log."""
        counts = np.bincount(self.users, minlength=self.n_users)
        return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def sequences(self) -> list[np.ndarray]:
        """Per-user item sequences in chronological order, indexed by user."""
        ordered = self if self.is_sorted() else sort_by_user_time(self)
        off = ordered.user_offsets()
        return [ordered.items[off[u]:off[u + 1]] for u in range(ordered.n_users)]


def empty_log() -> InteractionLog:
    return InteractionLog(
        users=np.zeros(0, dtype=np.int64),
        items=np.zeros(0, dtype=np.int64),
        timestamps=np.zeros(0, dtype=np.float64),
        user_vocab=Vocab(),
        item_vocab=Vocab(),
    )


@dataclass
class Schema:
    """Where to find each field in a delimiter-separated file.

    Columns are given by header name or by 0-based position.
    """

    user: str | int = 0
    item: str | int = 1
    timestamp: str | int = 2
    event_type: str | int | None = None
    delimiter: str = ","
    has_header: bool = False
    fail_fast: bool = True


CANONICAL_SCHEMA = Schema(user="user", item="item", timestamp="timestamp", delimiter="\t", has_header=True)


def _resolve(column, header: list[str] | None, what: str) -> int:
    if isinstance(column, int):
        return column
    if header is None:
        if isinstance(column, str) and column.isdigit():
            return int(column)
        raise ConfigError(f"{what} column {column!r} given by name but the file has no header")
    try:
        return header.index(column)
    except ValueError:
        raise ConfigError(f"{what} column {column!r} not in header {header}") from None


def parse_interactions(source: IO[bytes] | IO[str] | bytes | str, schema: Schema | None = None) -> InteractionLog:
    """Parse delimiter-separated text into an :class:`InteractionLog`.

    In fail-fast mode (the default) the first malformed row raises
    :class:`ParseError`; otherwise bad rows are skipped and counted in
    ``skipped_rows``.
    """
    schema = schema or Schema()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source)
    elif isinstance(source.read(0), bytes):
        source = io.TextIOWrapper(source, encoding="utf-8")

    reader = csv.reader(source, delimiter=schema.delimiter)
    header = None
    line_no = 0
    if schema.has_header:
        header = next(reader, None)
        line_no = 1
        if header is None:
            return empty_log()
        header = [h.strip() for h in header]
    cols = [
        _resolve(schema.user, header, "user"),
        _resolve(schema.item, header, "item"),
        _resolve(schema.timestamp, header, "timestamp"),
    ]
    event_col = None if schema.event_type is None else _resolve(schema.event_type, header, "event_type")
    needed = max(cols + ([event_col] if event_col is not None else []))

    user_vocab, item_vocab = Vocab(), Vocab()
    users, items, stamps, events = [], [], [], []
    skipped = 0
    for row in reader:
        line_no += 1
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        problem = None
        if len(row) <= needed:
            problem = f"expected at least {needed + 1} fields, got {len(row)}"
        else:
            user, item, raw_ts = row[cols[0]].strip(), row[cols[1]].strip(), row[cols[2]].strip()
            if not user or not item:
                problem = "empty user or item id"
            else:
                try:
                    ts = float(raw_ts)
                except ValueError:
                    problem = f"non-numeric timestamp {raw_ts!r}"
                else:
                    if not math.isfinite(ts):
                        problem = f"non-finite timestamp {raw_ts!r}"
        if problem is not None:
            if schema.fail_fast:
                raise ParseError(line_no, problem)
            skipped += 1
            continue
        users.append(user_vocab.add(user))
        items.append(item_vocab.add(item))
        stamps.append(ts)
        if event_col is not None:
            events.append(row[event_col].strip())
    if skipped:
        log.warning("skipped %d malformed rows", skipped)
    return InteractionLog(
        users=np.array(users, dtype=np.int64),
        items=np.array(items, dtype=np.int64),
        timestamps=np.array(stamps, dtype=np.float64),
        user_vocab=user_vocab,
        item_vocab=item_vocab,
        event_types=np.array(events, dtype=object) if event_col is not None else None,
        skipped_rows=skipped,
    )


def read_log(path, schema: Schema | None = None) -> InteractionLog:
    with open(path, "rb") as fh:
        return parse_interactions(fh, schema)


def filter_event_type(log_: InteractionLog, keep: str | None) -> InteractionLog:
    if keep is None:
        return log_
    if log_.event_types is None:
        log.warning("log has no event_type column; event filter %r keeps nothing", keep)
        return log_.take(np.zeros(len(log_), dtype=bool))
    mask = log_.event_types == keep
    if not mask.any():
        log.warning("event type %r absent from log; result is empty", keep)
    return log_.take(mask)


def k_core_filter(log_: InteractionLog, k: int) -> InteractionLog:
    """Maximal subset in which every user and every item has at least ``k`` interactions."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if len(log_) == 0:
        return log_
    keep = kernels.kcore_mask(log_.users, log_.items, log_.n_users, log_.n_items, k)
    if keep.all():
        return log_
    return log_.take(keep)


def min_interactions_filter(log_: InteractionLog, m: int) -> InteractionLog:
    """Drop users with fewer than ``m`` interactions; items are not filtered."""
    if m < 1:
        raise ConfigError(f"m must be >= 1, got {m}")
    counts = np.bincount(log_.users, minlength=log_.n_users)
    keep = counts[log_.users] >= m
    if keep.all():
        return log_
    return log_.take(keep)


def sort_by_user_time(log_: InteractionLog) -> InteractionLog:
    """Group rows by user and order by timestamp; ties keep file order."""
    order = np.lexsort((log_.timestamps, log_.users))
    return InteractionLog(
        users=log_.users[order],
        items=log_.items[order],
        timestamps=log_.timestamps[order],
        user_vocab=log_.user_vocab,
        item_vocab=log_.item_vocab,
        event_types=None if log_.event_types is None else log_.event_types[order],
        skipped_rows=log_.skipped_rows,
    )


def dedup_consecutive(log_: InteractionLog) -> InteractionLog:
    """Collapse runs of the same item within a user sequence to the first occurrence.

    ``(i, i, j)`` becomes ``(i, j)``; ``(i, j, i)`` is kept as is.
    """
    if not log_.is_sorted():
        log_ = sort_by_user_time(log_)
    if len(log_) < 2:
        return log_
    repeat = np.zeros(len(log_), dtype=bool)
    repeat[1:] = (log_.users[1:] == log_.users[:-1]) & (log_.items[1:] == log_.items[:-1])
    if not repeat.any():
        return log_
    return log_.take(~repeat)


@dataclass
class PreprocessConfig:
    event_type: str | None = None
    k_core: int | None = 5
    min_interactions: int | None = None
    dedup: bool = True

    def __post_init__(self):
        if self.k_core is not None and self.min_interactions is not None:
            raise ConfigError("k_core and min_interactions are alternative modes; set only one")


def preprocess(log_: InteractionLog, config: PreprocessConfig | None = None) -> InteractionLog:
    """Run the fixed pipeline: event filter, k-core (or min-interactions), sort, dedup."""
    config = config or PreprocessConfig()
    out = filter_event_type(log_, config.event_type)
    if config.k_core is not None:
        out = k_core_filter(out, config.k_core)
    elif config.min_interactions is not None:
        out = min_interactions_filter(out, config.min_interactions)
    out = sort_by_user_time(out)
    if config.dedup:
        out = dedup_consecutive(out)
    return out


@dataclass(frozen=True)
class DatasetStats:
    n_users: int
    n_items: int
    n_interactions: int
    avg_length: float
    density: float

    def to_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "n_items": self.n_items,
            "n_interactions": self.n_interactions,
            "avg_length": self.avg_length,
            "density": self.density,
        }


def compute_stats(log_: InteractionLog) -> DatasetStats:
    n = len(log_)
    if n == 0:
        return DatasetStats(0, 0, 0, 0.0, 0.0)
    nu, ni = log_.n_users, log_.n_items
    return DatasetStats(nu, ni, n, n / nu, n / (nu * ni))


def write_canonical(log_: InteractionLog, path_or_buf) -> None:
    """Write ``user<TAB>item<TAB>timestamp`` rows (dense indices), sorted by user then time."""
    ordered = log_ if log_.is_sorted() else sort_by_user_time(log_)
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        fh.write("user\titem\ttimestamp\n")
        for u, i, t in zip(ordered.users.tolist(), ordered.items.tolist(), ordered.timestamps.tolist()):
            fh.write(f"{u}\t{i}\t{_fmt_ts(t)}\n")
    finally:
        if own:
            fh.close()


def _fmt_ts(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(t)


def read_canonical(path) -> InteractionLog:
    """Read a file written by :func:`write_canonical`.

    Dense indices are restored exactly: vocabulary ``k`` maps to id ``str(k)``.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # empty file
        data = np.loadtxt(path, delimiter="\t", skiprows=1, dtype=np.float64, ndmin=2)
    if data.size == 0:
        return empty_log()
    users = data[:, 0].astype(np.int64)
    items = data[:, 1].astype(np.int64)
    return InteractionLog(
        users=users,
        items=items,
        timestamps=data[:, 2].copy(),
        user_vocab=Vocab([str(k) for k in range(int(users.max()) + 1)]),
        item_vocab=Vocab([str(k) for k in range(int(items.max()) + 1)]),
    )


def from_sequences(sequences: Sequence[Sequence], timestamps: Sequence[Sequence] | None = None) -> InteractionLog:
    """Build a sorted log from per-user item lists (unit-spaced timestamps by default)."""
    user_vocab, item_vocab = Vocab(), Vocab()
    users, items, stamps = [], [], []
    for u, seq in enumerate(sequences):
        if len(seq) == 0:
            continue
        uid = user_vocab.add(str(u))
        ts = timestamps[u] if timestamps is not None else range(len(seq))
        for it, t in zip(seq, ts):
            users.append(uid)
            items.append(item_vocab.add(str(it)))
            stamps.append(float(t))
    return InteractionLog(
        users=np.array(users, dtype=np.int64),
        items=np.array(items, dtype=np.int64),
        timestamps=np.array(stamps, dtype=np.float64),
        user_vocab=user_vocab,
        item_vocab=item_vocab,
    )
