"""Deterministic multilingual tokenization shared by indexing and chunking.

Tokens are maximal runs of unicode letters, digits and combining marks
(marks keep scripts like Devanagari intact), case-folded, with punctuation,
symbols and emoji dropped. No stemming, no stop words, no language
detection: the same input yields the same tokens on any platform.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass

__all__ = ["Token", "tokenize", "token_count"]


@dataclass(frozen=True)
class Token:
    surface: str
    byte_span: tuple[int, int]
    char_span: tuple[int, int]


def _is_word_char(ch: str) -> bool:
    # L* letters, N* digits, M* combining marks (vowel signs, nukta, ...)
    return unicodedata.category(ch)[0] in ("L", "N", "M")


def tokenize(text: str) -> list[Token]:
    """Segment ``text`` into case-folded word tokens.

    A token is a maximal run of word characters that contains at least one
    letter or digit; runs made purely of combining marks are dropped.
    Byte spans index into the UTF-8 encoding of ``text``, char spans into
    the string itself.
    """
    tokens: list[Token] = []
    run_start = -1  # char index where the current run began
    run_byte_start = 0
    run_has_core = False  # run contains a letter/digit, not only marks
    byte_pos = 0
    for i, ch in enumerate(text):
        ch_bytes = len(ch.encode("utf-8"))
        if _is_word_char(ch):
            if run_start < 0:
                run_start = i
                run_byte_start = byte_pos
                run_has_core = False
            if unicodedata.category(ch)[0] in ("L", "N"):
                run_has_core = True
        else:
            if run_start >= 0 and run_has_core:
                tokens.append(
                    Token(
                        surface=text[run_start:i].casefold(),
                        byte_span=(run_byte_start, byte_pos),
                        char_span=(run_start, i),
                    )
                )
            run_start = -1
        byte_pos += ch_bytes
    if run_start >= 0 and run_has_core:
        tokens.append(
            Token(
                surface=text[run_start:].casefold(),
                byte_span=(run_byte_start, byte_pos),
                char_span=(run_start, len(text)),
            )
        )
    return tokens


def token_count(text: str) -> int:
    return len(tokenize(text))
