"""Rule-based normalization of raw social-media text.

Special entities are replaced by bracketed tokens so that external corpora
look like the pre-tokenized training data. Casing and punctuation are kept.
"""

from __future__ import annotations

import hashlib
import random
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ConfigError

DEFAULT_TOKENS = {
    "username": "[USER]",
    "url": "[URL]",
    "email": "[EMAIL]",
    "phone": "[PHONE]",
    "currency": "[CUR]",
}
CURRENCY_SYMBOLS = "$£€¥"

# a URL may not start right after a word character or "]": the latter keeps
# the match unchanged once a neighbouring entity has become a token
_URL = re.compile(r"(?<![\w\]])(?:[A-Za-z][A-Za-z0-9+.\-]*://|www\.)\S+")
_URL_TRAILING = ".,;:!?)]}'\""
_EMAIL = re.compile(r"[\w.+\-]+@[\w\-]+(?:\.[\w\-]+)+")
_USERNAME = re.compile(r"@\w+")
_PHONE = re.compile(r"\+?\(?\d(?:[ .\-()]{0,2}\d){6,}")
_CURRENCY = re.compile(f"[{re.escape(CURRENCY_SYMBOLS)}]")


@dataclass(frozen=True)
class NormConfig:
    tokens: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_TOKENS))
    transliteration: str = "decompose-strip"
    substitutions: Mapping[str, list[str]] = field(default_factory=dict)
    substitution_seed: int = 0

    def __post_init__(self):
        tokens = {**DEFAULT_TOKENS, **dict(self.tokens)}
        unknown = set(tokens) - set(DEFAULT_TOKENS)
        if unknown:
            raise ConfigError(f"unknown token categories: {sorted(unknown)}")
        surfaces = list(tokens.values())
        if any(not s or any(ch.isspace() for ch in s) for s in surfaces):
            raise ConfigError("token surfaces must be non-empty and contain no whitespace")
        if len(set(surfaces)) != len(surfaces):
            raise ConfigError("token surfaces must be distinct")
        if self.transliteration not in ("decompose-strip", "off"):
            raise ConfigError(f"unknown transliteration mode {self.transliteration!r}")
        subs = {k: list(v) for k, v in dict(self.substitutions).items()}
        if any(not v for v in subs.values()):
            raise ConfigError("every substitution list must be non-empty")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "substitutions", subs)

    @classmethod
    def from_dict(cls, obj: Mapping | None) -> "NormConfig":
        obj = dict(obj or {})
        allowed = {"tokens", "transliteration", "substitutions", "substitution_seed"}
        extra = set(obj) - allowed - {"substitute_sources"}
        if extra:
            raise ConfigError(f"unknown normalization keys: {sorted(extra)}")
        return cls(**{k: v for k, v in obj.items() if k in allowed})

    def to_dict(self) -> dict:
        return {
            "tokens": dict(self.tokens),
            "transliteration": self.transliteration,
            "substitutions": {k: list(v) for k, v in self.substitutions.items()},
            "substitution_seed": self.substitution_seed,
        }


def transliterate(text: str) -> str:
    """Compatibility-decompose, drop combining marks, delete what is still non-ASCII.

    Currency symbols survive so that they can be tokenized afterwards.
    """
    out = []
    for ch in unicodedata.normalize("NFKD", text):
        if ord(ch) < 128 or ch in CURRENCY_SYMBOLS:
            out.append(ch)
    return "".join(out)


def _replace_url(token: str):
    def repl(m: re.Match) -> str:
        s = m.group(0)
        core = s.rstrip(_URL_TRAILING)
        if not core:
            return s
        return token + s[len(core):]
    return repl


def normalize(text: str, cfg: NormConfig | None = None) -> str:
    cfg = cfg or NormConfig()
    tok = cfg.tokens
    if cfg.transliteration == "decompose-strip":
        text = transliterate(text)
    # precedence: url > email > username > phone > currency
    text = _URL.sub(_replace_url(tok["url"]), text)
    text = _EMAIL.sub(tok["email"], text)
    text = _USERNAME.sub(tok["username"], text)
    text = _PHONE.sub(tok["phone"], text)
    text = _CURRENCY.sub(tok["currency"], text)
    return text


def _match_case(original: str, replacement: str) -> str:
    if original[:1].isupper() and replacement:
        return replacement[0].upper() + replacement[1:]
    return replacement


def substitute_lexical(text: str, cfg: NormConfig, salt: str = "") -> str:
    """Swap whole-word occurrences of mapped words for seeded random synonyms.

    ``salt`` (typically the document id) varies the draw between documents
    while keeping each document's output fixed for a given seed.
    """
    if not cfg.substitutions:
        return text
    table = {k.lower(): v for k, v in cfg.substitutions.items()}
    keys = sorted(table, key=lambda k: (-len(k), k))
    pattern = re.compile(r"\b(?:" + "|".join(re.escape(k) for k in keys) + r")\b", re.IGNORECASE)
    digest = hashlib.sha256(f"{cfg.substitution_seed}:{salt}".encode("utf-8")).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))

    def repl(m: re.Match) -> str:
        word = m.group(0)
        return _match_case(word, rng.choice(table[word.lower()]))

    return pattern.sub(repl, text)
