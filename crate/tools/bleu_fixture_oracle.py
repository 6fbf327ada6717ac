#!/usr/bin/env python3
"""Independent corpus-BLEU reference used to freeze differential fixtures.

Implements the classic corpus-level metric exactly as the widely used
evaluation script computes it: whitespace tokens, case preserved, modified
(clipped) n-gram precision up to 4-grams summed over the corpus, brevity
penalty min(1, e^(1 - r/c)), no smoothing, single reference. A zero
precision at any order gives BLEU 0; an empty candidate corpus gives
BLEU 0 with BP 0.

Run with no arguments: prints the fixture table consumed by the evaluator
tests as Rust source.
"""

from collections import Counter
from math import exp, log


def ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(cands, refs):
    assert len(cands) == len(refs)
    correct = [0] * 5
    total = [0] * 5
    c_len = 0
    r_len = 0
    for cand, ref in zip(cands, refs):
        c = cand.split()
        r = ref.split()
        c_len += len(c)
        r_len += len(r)
        for n in range(1, 5):
            cn = ngrams(c, n)
            rn = ngrams(r, n)
            total[n] += max(len(c) - n + 1, 0)
            correct[n] += sum(min(count, rn[g]) for g, count in cn.items())
    if c_len == 0:
        return 0.0, [0.0] * 4, 0.0, c_len, r_len
    precisions = [correct[n] / total[n] if total[n] > 0 else 0.0 for n in range(1, 5)]
    bp = 1.0 if c_len >= r_len else exp(1.0 - r_len / c_len)
    if any(p == 0.0 for p in precisions):
        bleu = 0.0
    else:
        bleu = bp * exp(sum(log(p) for p in precisions) / 4.0)
    return 100.0 * bleu, precisions, bp, c_len, r_len


FIXTURES = [
    (
        "perfect multi-line match",
        ["the cat sat on the mat", "a stitch in time saves nine"],
        ["the cat sat on the mat", "a stitch in time saves nine"],
    ),
    (
        "unigram clipping zeroes higher orders",
        ["the the the the"],
        ["the cat sat down"],
    ),
    (
        "pure brevity penalty",
        ["a b c d"],
        ["a b c d e"],
    ),
    (
        "long candidate pays no penalty",
        ["a b c d e f g h"],
        ["a b c d e"],
    ),
    (
        "one empty candidate line among good ones",
        ["", "the quick brown fox jumps over the lazy dog"],
        ["the cat sat", "the quick brown fox jumps over the lazy dog"],
    ),
    (
        "entirely empty candidate corpus",
        ["", ""],
        ["some reference", "another reference here"],
    ),
    (
        "single empty candidate line",
        [""],
        ["the cat sat"],
    ),
    (
        "mixed quality corpus",
        [
            "the small cat sat on the mat today",
            "he went to the market yesterday morning",
            "birds fly over the river in spring",
        ],
        [
            "the small cat sat on a mat today",
            "he walked to the market yesterday evening",
            "birds fly across the river every spring",
        ],
    ),
    (
        "single-token lines have no bigrams",
        ["yes", "no"],
        ["yes", "no"],
    ),
    (
        "repeated n-gram clipping with counts above one",
        ["a a b a a b c"],
        ["a a b c d e f"],
    ),
    (
        "partial overlap with reordering",
        [
            "on the mat the cat sat quietly today",
            "the dog barked at the mail carrier loudly",
        ],
        [
            "the cat sat quietly on the mat today",
            "the dog barked loudly at the mail carrier",
        ],
    ),
    (
        "case sensitivity splits tokens",
        ["The cat Sat on the mat"],
        ["the cat sat on the mat"],
    ),
    (
        "near miss in a long sentence",
        ["the committee approved the new budget after a long debate on tuesday"],
        ["the committee approved a new budget after long debate on tuesday"],
    ),
]


def main():
    print("    // (name, candidates, references, bleu, p1..p4, bp, c_len, r_len)")
    for name, cands, refs in FIXTURES:
        bleu, ps, bp, c_len, r_len = corpus_bleu(cands, refs)
        cl = ", ".join(f"\"{c}\"" for c in cands)
        rl = ", ".join(f"\"{r}\"" for r in refs)
        print(f"    (")
        print(f"        \"{name}\",")
        print(f"        &[{cl}],")
        print(f"        &[{rl}],")
        print(
            f"        {bleu:.6f}, [{ps[0]:.10f}, {ps[1]:.10f}, {ps[2]:.10f}, "
            f"{ps[3]:.10f}], {bp:.10f}, {c_len}, {r_len},"
        )
        print(f"    ),")


if __name__ == "__main__":
    main()
