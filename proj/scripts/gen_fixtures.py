#!/usr/bin/env python3
"""Regenerate the test fixtures under tests/fixtures/.

The lexicon is hand-written (lowercase ARPAbet without stress marks). The
corpora come from a small sentence grammar with a fixed seed, so rerunning
this script reproduces the checked-in files byte for byte.
"""
import random
import sys
from pathlib import Path

LEXICON = """
a ah
after ae f t er
all ao l
and ae n d
apple ae p ah l
apples ae p ah l z
at ae t
ate ey t
baker b ey k er
bare b eh r
bear b eh r
because b ih k ah z
before b ih f ao r
behind b ih hh ay n d
big b ih g
bird b er d
birds b er d z
blew b l uw
blue b l uw
book b uh k
books b uh k s
bought b ao t
boy b oy
bread b r eh d
bridge b r ih jh
bright b r ay t
brother b r ah dh er
brought b r ao t
brown b r aw n
built b ih l t
but b ah t
buy b ay
by b ay
cake k ey k
cakes k ey k s
carried k ae r iy d
cat k ae t
cats k ae t s
chair ch eh r
child ch ay l d
chose ch ow z
church ch er ch
city s ih t iy
cold k ow l d
cooked k uh k t
could k uh d
cow k aw
dark d aa r k
dear d ih r
deer d ih r
doctor d aa k t er
dog d ao g
dogs d ao g z
door d ao r
down d aw n
drew d r uw
egg eh g
eggs eh g z
eight ey t
eighteen ey t iy n
eighty ey t iy
eleven ih l eh v ah n
enjoyed eh n jh oy d
evening iy v n ih ng
every eh v r iy
farmer f aa r m er
father f aa dh er
fifteen f ih f t iy n
fifty f ih f t iy
fish f ih sh
five f ay v
flour f l aw er
flower f l aw er
flowers f l aw er z
for f ao r
forest f ao r ah s t
forty f ao r t iy
found f aw n d
four f ao r
fourteen f ao r t iy n
from f r ah m
garage g er aa zh
garden g aa r d ah n
gave g ey v
girl g er l
good g uh d
green g r iy n
happy hh ae p iy
he hh iy
hear hh ih r
heard hh er d
her hh er
herd hh er d
here hh ih r
his hh ih z
hole hh ow l
horse hh ao r s
horses hh ao r s ah z
hour aw er
house hh aw s
hundred hh ah n d r ah d
i ay
in ih n
into ih n t uw
is ih z
it ih t
joined jh oy n d
judge jh ah jh
kept k eh p t
king k ih ng
knew n uw
knight n ay t
know n ow
left l eh f t
letter l eh t er
letters l eh t er z
liked l ay k t
long l ao ng
lost l ao s t
loud l aw d
loved l ah v d
made m ey d
maid m ey d
mail m ey l
male m ey l
man m ae n
measure m eh zh er
meat m iy t
meet m iy t
met m eh t
milk m ih l k
moon m uw n
morning m ao r n ih ng
mother m ah dh er
mountain m aw n t ah n
mouse m aw s
my m ay
near n ih r
new n uw
night n ay t
nine n ay n
nineteen n ay n t iy n
ninety n ay n t iy
no n ow
of ah v
old ow l d
on aa n
one w ah n
our aw er
out aw t
over ow v er
painted p ey n t ah d
pair p eh r
peace p iy s
pear p eh r
piece p iy s
plain p l ey n
plane p l ey n
pulled p uh l d
pushed p uh sh t
queen k w iy n
quiet k w ay ah t
rain r ey n
read r eh d
red r eh d
right r ay t
ring r ih ng
river r ih v er
road r ow d
rode r ow d
sail s ey l
sale s ey l
sang s ae ng
saw s ao
sea s iy
see s iy
seven s eh v ah n
seventeen s eh v ah n t iy n
seventy s eh v ah n t iy
she sh iy
ship sh ih p
ships sh ih p s
shoe sh uw
short sh ao r t
should sh uh d
showed sh ow d
six s ih k s
sixteen s ih k s t iy n
sixty s ih k s t iy
small s m ao l
sold s ow l d
some s ah m
son s ah n
song s ao ng
steal s t iy l
steel s t iy l
story s t ao r iy
strong s t r ao ng
sun s ah n
sweet s w iy t
table t ey b ah l
tail t ey l
tale t ey l
teacher t iy ch er
ten t eh n
that dh ae t
the dh ah
their dh eh r
then dh eh n
there dh eh r
they dh ey
thing th ih ng
thirteen th er t iy n
thirty th er t iy
this dh ih s
thousand th aw z ah n d
three th r iy
threw th r uw
through th r uw
tired t ay er d
to t uw
today t ah d ey
too t uw
took t uh k
toy t oy
toys t oy z
treasure t r eh zh er
twelve t w eh l v
twenty t w eh n t iy
two t uw
under ah n d er
usual y uw zh uw ah l
very v eh r iy
village v ih l ah jh
vision v ih zh ah n
voice v oy s
walked w ao k t
warm w ao r m
was w aa z
washed w aa sh t
watched w aa ch t
water w ao t er
we w iy
weak w iy k
week w iy k
were w er
when w eh n
white w ay t
whole hh ow l
window w ih n d ow
with w ih dh
woman w uh m ah n
won w ah n
wood w uh d
would w uh d
write r ay t
wrote r ow t
yesterday y eh s t er d ey
you y uw
young y ah ng
your y ao r
zero z ih r ow
"""

SUBJECTS = ["the boy", "the girl", "the king", "the queen", "the knight", "the maid", "the teacher",
            "the doctor", "the farmer", "the baker", "the judge", "the woman", "the man", "the child",
            "my mother", "my father", "my brother", "her son", "his son", "our teacher", "their father",
            "she", "he", "they", "we", "i", "you"]
DETS = ["the", "a", "this", "that", "my", "your", "our", "their", "his", "her", "every", "some"]
NOUNS = ["cat", "dog", "house", "book", "ship", "fish", "shoe", "chair", "table", "letter", "story",
         "apple", "egg", "cake", "horse", "bird", "cow", "mouse", "toy", "ring", "song", "thing", "bridge",
         "window", "door", "garden", "river", "forest", "mountain", "village", "city", "church", "garage",
         "treasure", "voice", "bear", "deer", "pear", "pair", "tail", "tale", "hole", "mail", "plane",
         "sail", "piece", "meat", "bread", "milk", "flower", "flour", "wood", "moon", "sun", "sea", "road"]
PLURALS = ["cats", "dogs", "apples", "books", "cakes", "eggs", "birds", "horses", "letters", "toys",
           "ships", "flowers"]
ADJS = ["big", "small", "old", "young", "happy", "quiet", "dark", "bright", "green", "white", "brown",
        "long", "short", "warm", "cold", "weak", "strong", "whole", "plain", "dear", "good", "loud",
        "sweet", "tired", "new", "red", "blue", "usual"]
VERBS = ["saw", "found", "took", "made", "read", "wrote", "bought", "sold", "gave", "liked", "loved",
         "watched", "painted", "carried", "washed", "built", "met", "left", "kept", "brought", "threw",
         "cooked", "pushed", "pulled", "drew", "showed", "chose", "lost", "won", "heard", "knew"]
PREPS = ["in", "on", "at", "with", "from", "near", "under", "over", "into", "behind", "by", "through"]
PLACES = ["house", "garden", "river", "forest", "mountain", "village", "city", "church", "garage",
          "bridge", "sea", "road"]
TIMES = ["yesterday", "today", "in the morning", "in the evening", "after the rain", "before the night",
         "every week", "at night", "by the sea", "for one hour"]
NAMES = ["Zorblat", "Quixley", "Mirabeth", "Throndle", "Vashti", "Pellinor"]


def noun_phrase(rng):
    if rng.random() < 0.5:
        return f"{rng.choice(DETS)} {rng.choice(ADJS)} {rng.choice(NOUNS)}"
    return f"{rng.choice(DETS)} {rng.choice(NOUNS)}"


def sentence(rng, allow_noise):
    subj = rng.choice(SUBJECTS)
    if allow_noise and rng.random() < 0.04:
        subj = rng.choice(NAMES)
    t = rng.randrange(10)
    if t == 0:
        s = f"{subj} {rng.choice(VERBS)} {noun_phrase(rng)} {rng.choice(PREPS)} {noun_phrase(rng)} {rng.choice(TIMES)}"
    elif t == 1:
        s = f"{noun_phrase(rng)} was very {rng.choice(ADJS)} and {rng.choice(ADJS)} {rng.choice(TIMES)}"
    elif t == 2:
        n = rng.choice(["2", "3", "4", "5", "7", "8", "9", "10", "12", "15", "20", "24", "40", "99", "100", "250", "1999"])
        if not allow_noise:
            n = rng.choice(["two", "four", "eight", "ten", "twelve", "twenty"])
        s = f"{subj} {rng.choice(VERBS)} {n} {rng.choice(PLURALS)} {rng.choice(TIMES)} for {noun_phrase(rng)}"
    elif t == 3:
        s = f"{subj} walked to the {rng.choice(PLACES)} with {noun_phrase(rng)} and {rng.choice(SUBJECTS)} was there too"
    elif t == 4:
        s = f"there was {noun_phrase(rng)} near the {rng.choice(PLACES)} and {rng.choice(['their', 'our', 'my'])} {rng.choice(NOUNS)} was {rng.choice(ADJS)}"
    elif t == 5:
        s = f"i know that {subj} would buy {noun_phrase(rng)} by the {rng.choice(PLACES)} {rng.choice(TIMES)}"
    elif t == 6:
        s = f"you could hear the {rng.choice(NOUNS)} here when {subj} {rng.choice(VERBS)} {noun_phrase(rng)}"
    elif t == 7:
        s = f"{subj} wrote a letter to {rng.choice(SUBJECTS)} of {noun_phrase(rng)} and the {rng.choice(ADJS)} {rng.choice(NOUNS)}"
    elif t == 8:
        s = f"{subj} rode {rng.choice(['one', 'a'])} {rng.choice(['horse', 'cow'])} through the {rng.choice(PLACES)} to see the {rng.choice(NOUNS)} {rng.choice(TIMES)}"
    else:
        s = f"{noun_phrase(rng)} and {noun_phrase(rng)} were {rng.choice(PREPS)} the {rng.choice(PLACES)} then {subj} {rng.choice(VERBS)} it"
    words = s.split()
    if allow_noise:
        words[0] = words[0].capitalize()
        if rng.random() < 0.15:
            i = rng.randrange(1, len(words))
            words[i] = words[i] + ","
        end = rng.choice([".", ".", ".", "!", "?"])
    else:
        end = "."
    return " ".join(words) + end


def main():
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    root.mkdir(parents=True, exist_ok=True)
    entries = [line.split(None, 1) for line in LEXICON.strip().splitlines()]
    words = {w for w, _ in entries}
    with open(root / "lexicon.tsv", "w") as f:
        f.write(";;; lowercase ARPAbet, no stress marks\n")
        for w, pron in entries:
            f.write(f"{w}\t{pron}\n")

    def check(sentences):
        for s in sentences:
            for w in s.lower().replace(",", " ").replace(".", " ").replace("!", " ").replace("?", " ").split():
                assert w in words or w.isdigit() or w.capitalize() in NAMES, (w, s)

    rng = random.Random(20241015)
    corpus = [sentence(rng, True) for _ in range(10000)]
    check(corpus)
    (root / "corpus_10k.txt").write_text("\n".join(corpus) + "\n")

    rng = random.Random(50)
    small = []
    while len(small) < 50:
        s = sentence(rng, False)
        if s not in small:
            small.append(s)
    check(small)
    (root / "corpus_50.txt").write_text("\n".join(small) + "\n")

    rng = random.Random(400)
    probe = []
    while len(probe) < 400:
        s = sentence(rng, False)
        if s not in probe:
            probe.append(s)
    check(probe)
    (root / "corpus_probe.txt").write_text("\n".join(probe) + "\n")


if __name__ == "__main__":
    main()
