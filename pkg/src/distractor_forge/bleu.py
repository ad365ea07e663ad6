"""Sentence-level BLEU with exponential smoothing and effective n-gram order.

Two tokenizers are provided. ``intl`` splits punctuation and symbols by
Unicode class after NFC normalization; ``13a`` is the ASCII rule set of
the classic WMT scorer.

Golden tokenizations (``intl``)::

    "x = a[0]+1."       -> "x = a [ 0 ] + 1."
    "Hello, world!"     -> "Hello , world !"
    "3.14 and 1,000"    -> "3.14 and 1,000"
    "café"           -> "café"   (NFC composed)

``13a`` differs mainly at digit boundaries, e.g. "1." -> "1 .".
"""

from __future__ import annotations

import math
import re
import unicodedata
from collections import Counter
from typing import Callable

import regex

MAX_ORDER = 4

_INTL_RULES = (
    (regex.compile(r"(\P{N})(\p{P})"), r"\1 \2 "),
    (regex.compile(r"(\p{P})(\P{N})"), r" \1 \2"),
    (regex.compile(r"(\p{S})"), r" \1 "),
)

_13A_RULES = (
    (re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])"), r" \1 "),
    (re.compile(r"([^0-9])([\.,])"), r"\1 \2 "),
    (re.compile(r"([\.,])([^0-9])"), r" \1 \2"),
    (re.compile(r"([0-9])(-)"), r"\1 \2 "),
)


def tokenize_intl(line: str) -> list[str]:
    line = unicodedata.normalize("NFC", line)
    for pattern, repl in _INTL_RULES:
        line = pattern.sub(repl, line)
    return line.split()


def tokenize_13a(line: str) -> list[str]:
    line = line.replace("<skipped>", "").replace("-\n", "").replace("\n", " ")
    if "&" in line:
        for escaped, plain in (("&quot;", '"'), ("&amp;", "&"), ("&lt;", "<"), ("&gt;", ">")):
            line = line.replace(escaped, plain)
    line = f" {line} "
    for pattern, repl in _13A_RULES:
        line = pattern.sub(repl, line)
    return line.split()


TOKENIZERS: dict[str, Callable[[str], list[str]]] = {"intl": tokenize_intl, "13a": tokenize_13a}


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_bleu_smoothed(hypothesis: str, reference: str, tokenize: str = "intl") -> float:
    """Score in [0, 100].

    The r-th n-gram order with zero matches gets precision 1/(2^r * total_n).
    Orders the hypothesis is too short to contain are left out of the
    geometric mean, and a hypothesis with no unigram match scores 0.
    """
    try:
        tok = TOKENIZERS[tokenize]
    except KeyError:
        raise ValueError(f"unknown tokenizer {tokenize!r}; pick one of {sorted(TOKENIZERS)}") from None
    hyp, ref = tok(hypothesis), tok(reference)
    if not hyp or not ref:
        raise ValueError("hypothesis and reference must be non-empty after tokenization")

    hyp_len, ref_len = len(hyp), len(ref)
    bp = math.exp(1 - ref_len / hyp_len) if hyp_len < ref_len else 1.0

    matches, totals = [], []
    for n in range(1, MAX_ORDER + 1):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        matches.append(sum(min(c, r[g]) for g, c in h.items()))
        totals.append(max(hyp_len - n + 1, 0))
    if matches[0] == 0:
        return 0.0
    if matches == totals:
        # exp(log(100)) is not exactly 100 in floating point
        return 100.0 * bp

    log_sum = 0.0
    order = 0
    zero_run = 1.0
    for n in range(MAX_ORDER):
        if totals[n] == 0:
            break
        order = n + 1
        if matches[n] == 0:
            zero_run *= 2
            precision = 100.0 / (zero_run * totals[n])
        else:
            precision = 100.0 * matches[n] / totals[n]
        log_sum += math.log(precision)
    return bp * math.exp(log_sum / order)
