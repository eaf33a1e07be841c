#!/usr/bin/env python3
"""Independent expected values for the fixture tests.

Writes tests/fixtures/oracle_expected.txt (key=value) and
tests/fixtures/numbers.tsv. Shares no code with the library: the
normaliser is regex based and number words come from a recursive speller.
"""
import re
import sys
from collections import Counter
from pathlib import Path

SMALL = ("zero one two three four five six seven eight nine ten eleven twelve thirteen fourteen "
         "fifteen sixteen seventeen eighteen nineteen").split()
TENS = {2: "twenty", 3: "thirty", 4: "forty", 5: "fifty", 6: "sixty", 7: "seventy", 8: "eighty", 9: "ninety"}


def spell(n):
    if n < 20:
        return [SMALL[n]]
    if n < 100:
        return [TENS[n // 10]] + ([] if n % 10 == 0 else spell(n % 10))
    if n < 1000:
        return spell(n // 100) + ["hundred"] + ([] if n % 100 == 0 else spell(n % 100))
    return spell(n // 1000) + ["thousand"] + ([] if n % 1000 == 0 else spell(n % 1000))


def normalize(line):
    line = line.encode("ascii", "ignore").decode().lower()
    out = []
    for tok in re.findall(r"[a-z']+|[0-9]+", line):
        if tok[0].isdigit():
            if len(tok) <= 4 and not (len(tok) > 1 and tok[0] == "0"):
                out += spell(int(tok))
            else:
                out += [SMALL[int(c)] for c in tok]
        else:
            word = re.sub(r"(?<![a-z])'|'(?![a-z])", "", tok)
            if word:
                out.append(word)
    return out


def main():
    fixtures = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "fixtures"
    lexicon = {}
    for line in (fixtures / "lexicon.tsv").read_text().splitlines():
        if not line or line.startswith(";;;") or line.startswith("#"):
            continue
        word, pron = line.split("\t")
        lexicon.setdefault(word, pron.split())
    symbols = {p for pron in lexicon.values() for p in pron}

    sentences = (fixtures / "corpus_10k.txt").read_text().splitlines()
    counts = Counter()
    words = oov = skipped = 0
    for s in sentences:
        toks = normalize(s)
        counts.update(toks)
        words += len(toks)
        missing = sum(1 for t in toks if t not in lexicon)
        oov += missing
        skipped += 1 if missing or not toks else 0

    expected = {
        "phoneme_symbols": len(symbols),
        "phoneme_vocab_size": len(symbols) + 3,
        "corpus10k_sentences": len(sentences),
        "corpus10k_words": words,
        "corpus10k_oov_words": oov,
        "corpus10k_skipped": skipped,
        "corpus10k_distinct_words": len(counts),
        "grapheme_vocab_size_cutoff1": 2 + len(counts),
        "grapheme_vocab_size_cutoff3": 2 + sum(1 for c in counts.values() if c >= 3),
        "grapheme_vocab_size_cutoff100": 2 + sum(1 for c in counts.values() if c >= 100),
    }
    with open(fixtures / "oracle_expected.txt", "w") as f:
        for k, v in expected.items():
            f.write(f"{k}={v}\n")
    with open(fixtures / "numbers.tsv", "w") as f:
        for n in range(10000):
            f.write(f"{n}\t{' '.join(spell(n))}\n")


if __name__ == "__main__":
    main()
