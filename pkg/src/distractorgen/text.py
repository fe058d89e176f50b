"""Tokenization, sentence splitting, stop words and POS tagging."""

import re
from typing import Dict, Iterable, List, Mapping, Optional, Protocol

_TOKEN_RE = re.compile(r"_+|\d+(?:[.,]\d+)+|[^\W_]+(?:['’][^\W_]+)*|[^\w\s]")

SENTENCE_TERMINALS = frozenset({".", "!", "?"})
_CLOSERS = frozenset({")", "]", "”", "’", "»"})
_QUOTES = frozenset({'"', "'"})

ABBREVIATIONS = frozenset({
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc",
    "no", "co", "inc", "ltd", "jan", "feb", "mar", "apr", "jun", "jul",
    "aug", "sep", "sept", "oct", "nov", "dec", "a.m", "p.m", "e.g", "i.e",
    "u.s", "u.k", "fig", "approx", "dept", "est", "gov",
})

# Fixed list so that filtering is reproducible across installs.
STOPWORDS = frozenset("""
a about above after again against all am an and any are aren't as at be
because been before being below between both but by can can't cannot could
couldn't did didn't do does doesn't doing don't down during each few for
from further had hadn't has hasn't have haven't having he he'd he'll he's
her here here's hers herself him himself his how how's i i'd i'll i'm i've
if in into is isn't it it's its itself let's me more most mustn't my myself
no nor not of off on once only or other ought our ours ourselves out over
own same shan't she she'd she'll she's should shouldn't so some such than
that that's the their theirs them themselves then there there's these they
they'd they'll they're they've this those through to too under until up
very was wasn't we we'd we'll we're we've were weren't what what's when
when's where where's which while who who's whom why why's will with won't
would wouldn't you you'd you'll you're you've your yours yourself
yourselves also just now s t will shall may might must
""".split())

MEANINGFUL_TAGS = frozenset({
    "JJ", "JJR", "JJS", "NN", "NNP", "NNPS", "NNS", "RB", "RBR", "RBS",
    "VB", "VBD", "VBG", "VBN", "VBP", "VBZ",
})


def tokenize(text: str) -> List[str]:
    """Lower-case and split ``text`` into word and punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


def is_blank(token: str) -> bool:
    return len(token) > 0 and set(token) == {"_"}


def is_punctuation(token: str) -> bool:
    return not any(ch.isalnum() or ch == "_" for ch in token)


def _ends_sentence(tokens: List[str], i: int) -> bool:
    tok = tokens[i]
    if tok not in SENTENCE_TERMINALS:
        return False
    if tok == "." and i > 0:
        prev = tokens[i - 1]
        if prev in ABBREVIATIONS:
            return False
        # initials such as "j . k . rowling"
        if len(prev) == 1 and prev.isalpha() and prev not in {"a", "i"}:
            return False
    nxt = tokens[i + 1] if i + 1 < len(tokens) else None
    return nxt is None or nxt not in SENTENCE_TERMINALS


def _closes(token: str, sentence: List[str]) -> bool:
    if token in _CLOSERS:
        return True
    # a straight quote closes only when the sentence left one open
    return token in _QUOTES and sentence.count(token) % 2 == 1


def split_sentences(text: str) -> List[List[str]]:
    """Tokenize ``text`` and split it into sentences.

    Boundaries are line breaks and terminal punctuation (``. ! ?``), with
    runs of terminals and closing quotes/brackets kept on the sentence they
    end. A small abbreviation list and single-letter initials suppress
    false boundaries after a period.
    """
    sentences = []
    for line in text.splitlines():
        tokens = tokenize(line)
        current: List[str] = []
        i = 0
        while i < len(tokens):
            current.append(tokens[i])
            if _ends_sentence(tokens, i):
                while i + 1 < len(tokens) and _closes(tokens[i + 1], current):
                    i += 1
                    current.append(tokens[i])
                sentences.append(current)
                current = []
            i += 1
        if current:
            sentences.append(current)
    return [s for s in sentences if s]


class PosTagger(Protocol):
    name: str

    def tag(self, tokens: List[str]) -> List[str]:
        ...


class LexiconTagger:
    """Look tags up in a fixed token -> tag table; unknown tokens get ``default``."""

    def __init__(self, table: Mapping[str, str], default: Optional[str] = None,
                 name: str = "lexicon"):
        self.table = dict(table)
        self.default = default
        self.name = name

    @classmethod
    def from_file(cls, path) -> "LexiconTagger":
        table = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                token, tag = line.split("\t")[:2]
                table[token.lower()] = tag
        return cls(table, name=f"lexicon:{path}")

    def tag(self, tokens):
        return [self.table.get(t, self.default) for t in tokens]


_FUNCTION_TAGS = {
    "DT": "a an the this that these those some any each every no".split(),
    "IN": ("of in on at by for with from to into about as than after before "
           "over under between through during without within since until "
           "because while if though although").split(),
    "CC": "and or but nor yet so".split(),
    "PRP": ("i you he she it we they me him her us them myself yourself "
            "himself herself itself ourselves themselves").split(),
    "PRP$": "my your his its our their".split(),
    "MD": "can could will would shall should may might must".split(),
    "WP": "who whom what which whose".split(),
    "WRB": "when where why how".split(),
}
_FUNCTION_WORDS = {w: tag for tag, words in _FUNCTION_TAGS.items() for w in words}


class HeuristicTagger:
    """Dependency-free suffix tagger.

    Good enough to separate content words from function words, which is
    all the distractor filter needs. Pass a :class:`LexiconTagger` for
    anything that should match a real tagger's output.
    """

    name = "heuristic-suffix-v1"

    def tag_one(self, token: str) -> str:
        if token in _FUNCTION_WORDS:
            return _FUNCTION_WORDS[token]
        if is_punctuation(token) or is_blank(token):
            return "SYM"
        if token[0].isdigit():
            return "CD"
        if token.endswith("ly") and len(token) > 4:
            return "RB"
        if token.endswith("ing") and len(token) > 5:
            return "VBG"
        if token.endswith("ed") and len(token) > 4:
            return "VBD"
        if token.endswith(("ful", "ous", "ive", "able", "ible", "al", "less")) and len(token) > 5:
            return "JJ"
        if token.endswith("est") and len(token) > 5:
            return "JJS"
        if token.endswith("s") and not token.endswith("ss") and len(token) > 3:
            return "NNS"
        return "NN"

    def tag(self, tokens):
        return [self.tag_one(t) for t in tokens]


def tag_map(tagger: PosTagger, tokens: Iterable[str]) -> Dict[str, str]:
    """Tag ``tokens`` and return a token -> tag map (last tag wins)."""
    tokens = list(tokens)
    return dict(zip(tokens, tagger.tag(tokens)))
