"""Command-line option registry: register, preset, parse.

Options are registered with a key (leading dash), help text, a kind and
the identifier of the setting they bind to.  ``preset`` queues default
tokens that user argv overrides.  List-valued options take a single
quoted token that is split on whitespace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

BOOLEAN = "boolean"
SET_TRUE = "set-true"
SET_FALSE = "set-false"
INTEGER = "integer"
REAL = "real"
INTEGER_LIST = "integer-list"
REAL_LIST = "real-list"
USER = "user-defined"

_KINDS = {BOOLEAN, SET_TRUE, SET_FALSE, INTEGER, REAL, INTEGER_LIST, REAL_LIST, USER}

_TRUE_WORDS = {"true", "on", "yes", "1"}
_FALSE_WORDS = {"false", "off", "no", "0"}


class OptionError(Exception):
    """Unknown key, duplicate registration, or malformed value token."""


class HelpRequested(Exception):
    """Raised after help text has been rendered for -h/-help."""

    def __init__(self, text):
        super().__init__("help requested")
        self.text = text


@dataclass
class OptionEntry:
    key: str
    help: str
    kind: str
    binding: str
    convert: object = None  # only for user-defined kind


@dataclass
class OptionRegistry:
    entries: dict = field(default_factory=dict)
    presets: list = field(default_factory=list)

    def register(self, key, help, kind, binding, convert=None):
        if not key.startswith("-"):
            raise OptionError(f"option key must start with '-': {key!r}")
        if key in self.entries:
            raise OptionError(f"duplicate option key: {key!r}")
        if kind not in _KINDS:
            raise OptionError(f"unknown option kind: {kind!r}")
        if kind == USER and convert is None:
            raise OptionError(f"user-defined option {key!r} needs a conversion function")
        self.entries[key] = OptionEntry(key, help, kind, binding, convert)
        return self

    def preset(self, tokens):
        """Queue tokens applied before user argv (user tokens win)."""
        self.presets.extend(tokens.split())
        return self

    # ------------------------------------------------------------------
    def parse(self, argv, values=None):
        """Parse presets then argv into a binding->value dict.

        Bindings absent from the token streams are left untouched, so a
        caller-provided ``values`` dict keeps its defaults.
        """
        values = {} if values is None else values
        for tokens in (self.presets, list(argv)):
            self._parse_tokens(tokens, values)
        return values

    def _parse_tokens(self, tokens, values):
        i = 0
        n = len(tokens)
        while i < n:
            tok = tokens[i]
            if tok in ("-h", "-help", "--help"):
                raise HelpRequested(self.help_text())
            entry = self.entries.get(tok)
            if entry is None:
                raise OptionError(f"unknown option: {tok!r}")
            if entry.kind == SET_TRUE:
                values[entry.binding] = True
                i += 1
                continue
            if entry.kind == SET_FALSE:
                values[entry.binding] = False
                i += 1
                continue
            if i + 1 >= n:
                raise OptionError(f"option {tok!r} expects a value")
            raw = tokens[i + 1]
            values[entry.binding] = self._convert(entry, raw)
            i += 2

    def _convert(self, entry, raw):
        kind = entry.kind
        if kind == BOOLEAN:
            low = raw.lower()
            if low in _TRUE_WORDS:
                return True
            if low in _FALSE_WORDS:
                return False
            raise OptionError(f"{raw!r} is not a boolean for option {entry.key!r}")
        if kind == INTEGER:
            return _to_int(raw, entry.key)
        if kind == REAL:
            return _to_real(raw, entry.key)
        if kind == INTEGER_LIST:
            return [_to_int(t, entry.key) for t in raw.split()]
        if kind == REAL_LIST:
            return [_to_real(t, entry.key) for t in raw.split()]
        if kind == USER:
            return entry.convert(raw)
        raise OptionError(f"unhandled kind {kind!r}")

    # ------------------------------------------------------------------
    def help_text(self):
        lines = ["options:"]
        width = max((len(e.key) for e in self.entries.values()), default=0)
        for e in self.entries.values():
            lines.append(f"  {e.key:<{width}}  {e.help}")
        lines.append(f"  {'-help':<{width}}  show this message")
        return "\n".join(lines)

    def render(self, values):
        """Render bindings back to an argv token list (round-trip aid)."""
        out = []
        for e in self.entries.values():
            if e.binding not in values:
                continue
            v = values[e.binding]
            if e.kind == SET_TRUE:
                if v:
                    out.append(e.key)
            elif e.kind == SET_FALSE:
                if not v:
                    out.append(e.key)
            elif e.kind in (INTEGER_LIST, REAL_LIST):
                out.extend([e.key, " ".join(repr(x) if isinstance(x, float) else str(x) for x in v)])
            elif e.kind == BOOLEAN:
                out.extend([e.key, "true" if v else "false"])
            else:
                out.extend([e.key, repr(v) if isinstance(v, float) else str(v)])
        return out


def _to_int(raw, key):
    try:
        return int(raw)
    except ValueError:
        raise OptionError(f"{raw!r} is not an integer for option {key!r}") from None


def _to_real(raw, key):
    try:
        return float(raw)
    except ValueError:
        raise OptionError(f"{raw!r} is not a real number for option {key!r}") from None
