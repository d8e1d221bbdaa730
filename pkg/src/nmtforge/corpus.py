"""Parallel corpus loading, batching, and synthetic desk-scale tasks.

Corpus files are UTF-8 plain text, one sentence per line, aligned by line
number (the distribution format of line-aligned sets such as the
IITB-CFILT Hindi-English corpus, roughly 1.49M training pairs with a
3,020-pair validation-test split).  Loading never downloads anything; any
pair of aligned files works.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bpe import BOS_ID, EOS_ID, PAD_ID, Vocabulary
from .errors import AlignmentError, ConfigError

SYNTH_KINDS = ("copy", "reverse", "increment")


@dataclass
class ParallelCorpus:
    """Aligned (source tokens, target tokens) pairs plus per-side vocabularies."""

    pairs: list[tuple[list[str], list[str]]]
    src_vocab: Vocabulary | None = None
    tgt_vocab: Vocabulary | None = None
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class Batch:
    """Padded id matrices with masks.

    Source rows are ids + EOS + padding; target rows are BOS + ids + EOS +
    padding.  Masks are True exactly at non-PAD positions.
    """

    src: np.ndarray
    tgt: np.ndarray
    src_mask: np.ndarray
    tgt_mask: np.ndarray
    src_lengths: np.ndarray
    tgt_lengths: np.ndarray

    @property
    def size(self) -> int:
        return self.src.shape[0]


def load_parallel(src_path, tgt_path, max_len: int = 50) -> ParallelCorpus:
    """Load aligned files, dropping pairs with an empty side or a side longer
    than ``max_len`` whitespace tokens.  The drop count is reported on the
    returned corpus."""
    with open(src_path, "r", encoding="utf-8") as f:
        src_lines = f.read().splitlines()
    with open(tgt_path, "r", encoding="utf-8") as f:
        tgt_lines = f.read().splitlines()
    if len(src_lines) != len(tgt_lines):
        raise AlignmentError(
            f"line counts differ: {src_path} has {len(src_lines)}, "
            f"{tgt_path} has {len(tgt_lines)}"
        )
    pairs = []
    dropped = 0
    for s_line, t_line in zip(src_lines, tgt_lines):
        s_toks = s_line.split()
        t_toks = t_line.split()
        if not s_toks or not t_toks or len(s_toks) > max_len or len(t_toks) > max_len:
            dropped += 1
            continue
        pairs.append((s_toks, t_toks))
    return ParallelCorpus(pairs, dropped=dropped)


def pad_batch(
    src_rows: list[list[int]], tgt_rows: list[list[int]]
) -> Batch:
    """Assemble one Batch from raw id sequences (no BOS/EOS/PAD yet)."""
    b = len(src_rows)
    src_lengths = np.array([len(r) + 1 for r in src_rows], dtype=np.int64)  # +EOS
    tgt_lengths = np.array([len(r) + 2 for r in tgt_rows], dtype=np.int64)  # +BOS +EOS
    s_width = int(src_lengths.max())
    t_width = int(tgt_lengths.max())
    src = np.full((b, s_width), PAD_ID, dtype=np.int64)
    tgt = np.full((b, t_width), PAD_ID, dtype=np.int64)
    for i, row in enumerate(src_rows):
        src[i, : len(row)] = row
        src[i, len(row)] = EOS_ID
    for i, row in enumerate(tgt_rows):
        tgt[i, 0] = BOS_ID
        tgt[i, 1 : 1 + len(row)] = row
        tgt[i, 1 + len(row)] = EOS_ID
    src_mask = src != PAD_ID
    tgt_mask = tgt != PAD_ID
    return Batch(src, tgt, src_mask, tgt_mask, src_lengths, tgt_lengths)


def make_batches(corpus: ParallelCorpus, batch_size: int, shuffle_seed: int) -> list[Batch]:
    """One epoch of batches: pairs sorted by source length, chunked, and the
    chunk order shuffled deterministically by ``shuffle_seed``.  The final
    short batch is retained.  Length-sorting before chunking is what keeps
    padding waste down."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if corpus.src_vocab is None or corpus.tgt_vocab is None:
        raise ConfigError("make_batches needs corpus vocabularies; attach them first")
    order = sorted(range(len(corpus.pairs)), key=lambda i: len(corpus.pairs[i][0]))
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    rng = np.random.default_rng(shuffle_seed)
    rng.shuffle(chunks)
    batches = []
    for chunk in chunks:
        src_rows = [corpus.src_vocab.encode(corpus.pairs[i][0]) for i in chunk]
        tgt_rows = [corpus.tgt_vocab.encode(corpus.pairs[i][1]) for i in chunk]
        batches.append(pad_batch(src_rows, tgt_rows))
    return batches


def synth_vocab(vocab_size: int) -> Vocabulary:
    """Identity-style vocabulary for synthetic tasks: token "w<i>" has id i."""
    if vocab_size < 5:
        raise ConfigError(f"synthetic vocab_size must be >= 5, got {vocab_size}")
    return Vocabulary.from_tokens([f"w{i}" for i in range(4, vocab_size)])


def synth_task(
    kind: str,
    vocab_size: int,
    length_range: tuple[int, int],
    n_pairs: int,
    seed: int,
) -> ParallelCorpus:
    """Generate a deterministic toy task over ids 4..vocab_size-1.

    copy: target equals source.  reverse: target is the source reversed.
    increment: each id advances by one, wrapping back to the first
    non-reserved id so reserved ids never appear as content.
    """
    if kind not in SYNTH_KINDS:
        raise ConfigError(f"unknown synthetic task {kind!r}; choose from {SYNTH_KINDS}")
    if vocab_size < 5:
        raise ConfigError(f"vocab_size must be >= 5, got {vocab_size}")
    if n_pairs < 1:
        raise ConfigError(f"n_pairs must be >= 1, got {n_pairs}")
    lo, hi = length_range
    if not 1 <= lo <= hi:
        raise ConfigError(f"bad length_range {length_range}")
    rng = np.random.default_rng(seed)
    vocab = synth_vocab(vocab_size)
    pairs = []
    for _ in range(n_pairs):
        length = int(rng.integers(lo, hi + 1))
        ids = rng.integers(4, vocab_size, size=length)
        if kind == "copy":
            out = ids
        elif kind == "reverse":
            out = ids[::-1]
        else:  # increment
            out = np.where(ids + 1 < vocab_size, ids + 1, 4)
        pairs.append(([f"w{i}" for i in ids], [f"w{i}" for i in out]))
    return ParallelCorpus(pairs, src_vocab=vocab, tgt_vocab=vocab)


@dataclass
class PaddingStats:
    total_cells: int = 0
    pad_cells: int = 0

    @property
    def fraction(self) -> float:
        return self.pad_cells / self.total_cells if self.total_cells else 0.0


def padding_stats(batches: list[Batch]) -> PaddingStats:
    stats = PaddingStats()
    for b in batches:
        stats.total_cells += b.src.size + b.tgt.size
        stats.pad_cells += int((~b.src_mask).sum() + (~b.tgt_mask).sum())
    return stats
