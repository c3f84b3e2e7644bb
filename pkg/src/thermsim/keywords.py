"""Keyword deck parser.

Handles the reservoir model grammar: scalar/list keywords, tables,
sub-domain modifiers, spatial property assignments, well sections,
schedules, repeat syntax (``4*88``), ``\\`` line continuation, ``#``
comments, and bulk data files (column-formatted and free-style).

Keywords are case-insensitive; values are case-sensitive.  A section or
table ends on a ``/`` line (or a trailing ``/`` after the last item) or
on a blank line.
"""

from __future__ import annotations

import datetime
import warnings
from dataclasses import dataclass, field

import numpy as np

# keyword kinds
SET_TRUE = "set-true"
SET_FALSE = "set-false"
BOOLEAN = "boolean"
TEXT = "text"
INTEGER = "integer"
REAL = "real"
TABLE = "table"
MOD_REAL = "modifier-real"
MOD_INT = "modifier-integer"
TEXT_LIST = "text-list"
INTEGER_LIST = "integer-list"
REAL_LIST = "real-list"
TABLE_LIST = "table-list"
MOD_LIST = "modifier-list"
WELL_SECTION = "well-section"
SCHEDULE_SECTION = "schedule-section"
REACTION_SECTION = "reaction-section"

_KINDS = {
    SET_TRUE, SET_FALSE, BOOLEAN, TEXT, INTEGER, REAL, TABLE, MOD_REAL,
    MOD_INT, TEXT_LIST, INTEGER_LIST, REAL_LIST, TABLE_LIST, MOD_LIST,
    WELL_SECTION, SCHEDULE_SECTION, REACTION_SECTION,
}

_TRUE_WORDS = {"true", "on", "yes", "1"}
_FALSE_WORDS = {"false", "off", "no", "0"}


class DeckError(Exception):
    """Deck grammar or value error; message names the offending token/line."""


# ----------------------------------------------------------------------
# data containers
# ----------------------------------------------------------------------

@dataclass
class Table:
    columns: list
    rows: np.ndarray  # (nrow, ncol)

    def column(self, name):
        return self.rows[:, self.columns.index(name)]

    def validate_monotone(self, name="table"):
        x = self.rows[:, 0]
        if len(x) > 1 and not np.all(np.diff(x) > 0):
            raise DeckError(f"{name}: first column must be strictly increasing")


@dataclass
class Modifier:
    target: str
    boxes: list  # [(i0, i1, j0, j1, k0, k1, value)], 1-based inclusive

    def apply(self, array3d):
        """Apply boxes in order (later boxes win) to an (nx, ny, nz) array."""
        nx, ny, nz = array3d.shape
        for (i0, i1, j0, j1, k0, k1, v) in self.boxes:
            if not (1 <= i0 <= i1 <= nx and 1 <= j0 <= j1 <= ny and 1 <= k0 <= k1 <= nz):
                raise DeckError(
                    f"modifier {self.target!r}: box ({i0}:{i1} {j0}:{j1} {k0}:{k1}) "
                    f"outside grid {nx}x{ny}x{nz}")
            array3d[i0 - 1:i1, j0 - 1:j1, k0 - 1:k1] = v
        return array3d


@dataclass
class SpatialAssignment:
    mode: str            # constant | ivar | jvar | kvar | all | file
    values: object       # float, list of floats, or file path

    def resolve(self, dims, search_dirs=(), wanted_column=None):
        """Expand to a flat per-cell array in natural (i fastest) order."""
        nx, ny, nz = dims
        ncell = nx * ny * nz
        if self.mode == "constant":
            return np.full(ncell, float(self.values))
        if self.mode in ("ivar", "jvar", "kvar"):
            n = {"ivar": nx, "jvar": ny, "kvar": nz}[self.mode]
            vals = np.asarray(self.values, dtype=float)
            if len(vals) != n:
                raise DeckError(
                    f"{self.mode} expects {n} values, got {len(vals)}")
            full = np.empty((nx, ny, nz))
            if self.mode == "ivar":
                full[:] = vals[:, None, None]
            elif self.mode == "jvar":
                full[:] = vals[None, :, None]
            else:
                full[:] = vals[None, None, :]
            return full.reshape(-1, order="F")
        if self.mode == "all":
            vals = np.asarray(self.values, dtype=float)
            if len(vals) != ncell:
                raise DeckError(
                    f"'all' expects {ncell} values, got {len(vals)}")
            return vals.copy()
        if self.mode == "file":
            import os
            path = self.values
            tried = [path] + [os.path.join(d, path) for d in search_dirs]
            for cand in tried:
                if os.path.exists(cand):
                    data = read_data_file(cand, layout="free-style")
                    if wanted_column is not None:
                        data = data.reshape(-1, wanted_column[1])[:, wanted_column[0]]
                    if data.size < ncell:
                        raise DeckError(
                            f"data file {cand!r} holds {data.size} entries, "
                            f"need at least {ncell}")
                    return data[:ncell].copy()
            raise DeckError(f"data file not found: {path!r}")
        raise DeckError(f"unknown spatial mode {self.mode!r}")


@dataclass
class OperateLine:
    target: str              # bhp|stw|sto|stg|stl|stf|bhw|...|steam|steamtrap
    specifier: str           # min|max|equality
    value: float
    cell: tuple | None = None  # steamtrap per-perforation override


@dataclass
class PerfLine:
    i0: int
    i1: int
    j0: int
    j1: int
    k0: int
    k1: int
    value: float             # wi or ff depending on mode


@dataclass
class WellSpec:
    name: str
    kind: str = "producer"          # injector | producer
    tinjw: float | None = None
    qual: float = 0.0
    skin: float = 0.0
    rw: float = 0.25
    refdepth: float | None = None
    weight: str = "implicit"        # unweighted | explicit | implicit
    operations: list = field(default_factory=list)
    perf_mode: str = "wi"           # user/wi | geo | geoa
    perfs: list = field(default_factory=list)
    htwell: str = "off"             # off | rate | temp | dual
    htwrate: float = 0.0
    htwtemp: float | None = None
    htwell_direction: str = "unidirect"
    htwi: bool = False
    heatr: list = field(default_factory=list)    # [(box6, rate)]
    uhtr: list = field(default_factory=list)     # [(box6, coeff)]
    tmpset: list = field(default_factory=list)   # [(box6, setpoint)]

    def validate(self, dims=None):
        if not self.perfs:
            raise DeckError(f"well {self.name!r} has no perforations")
        if self.kind == "producer" and self.tinjw is not None:
            raise DeckError(f"producer {self.name!r} must not set tinjw")
        if self.kind == "injector" and self.tinjw is None:
            raise DeckError(f"injector {self.name!r} needs tinjw")
        if dims is not None:
            nx, ny, nz = dims
            for p in self.perfs:
                if not (1 <= p.i0 <= p.i1 <= nx and 1 <= p.j0 <= p.j1 <= ny
                        and 1 <= p.k0 <= p.k1 <= nz):
                    raise DeckError(
                        f"well {self.name!r}: perforation outside grid")
        return self


@dataclass
class ScheduleEntry:
    at: float                      # days from schedule start
    actions: list = field(default_factory=list)
    # actions: ("well", WellSpec) | ("numerical", dict) | ("restart",)
    #          | ("stop",)


@dataclass
class KeywordEntry:
    name: str
    kind: str
    binding: str


# ----------------------------------------------------------------------
# tokenization
# ----------------------------------------------------------------------

def _strip_comment(line):
    pos = line.find("#")
    return line if pos < 0 else line[:pos]


def logical_lines(text):
    """Yield (lineno, tokens) with comments stripped and continuations joined.

    Blank lines are emitted as empty token lists (they terminate tables),
    except inside a continuation, where they are skipped.
    """
    out = []
    pend_tokens = None
    pend_lineno = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        comment_only = bool(raw.strip()) and not _strip_comment(raw).strip()
        body = _strip_comment(raw).strip()
        cont = body.endswith("\\")
        if cont:
            body = body[:-1].strip()
        toks = body.split()
        if pend_tokens is not None:
            pend_tokens.extend(toks)
            if cont or not toks:
                continue  # comment-only/blank lines inside a continuation
            out.append((pend_lineno, pend_tokens))
            pend_tokens = None
            continue
        if cont:
            pend_tokens = toks
            pend_lineno = lineno
            continue
        if comment_only:
            continue  # comments never terminate tables or sections
        out.append((lineno, toks))
    if pend_tokens is not None:
        out.append((pend_lineno, pend_tokens))
    return out


def _norm_key(token):
    return token[:-1].lower() if token.endswith(":") else token.lower()


def parse_real(tok):
    try:
        return float(tok)
    except ValueError:
        raise DeckError(f"{tok!r} is not a real number") from None


def parse_int(tok):
    try:
        return int(tok)
    except ValueError:
        raise DeckError(f"{tok!r} is not an integer") from None


def expand_repeats(tokens):
    """Expand ``count*value`` repeat tokens into a flat list of reals."""
    out = []
    for tok in tokens:
        if "*" in tok:
            head, _, tail = tok.partition("*")
            count = parse_int(head)
            if count <= 0:
                raise DeckError(f"repeat count must be positive: {tok!r}")
            out.extend([parse_real(tail)] * count)
        else:
            out.append(parse_real(tok))
    return out


def _parse_range(tok):
    """``a`` or ``a:b`` -> (a, b), 1-based inclusive."""
    if ":" in tok:
        a, _, b = tok.partition(":")
        lo, hi = parse_int(a), parse_int(b)
    else:
        lo = hi = parse_int(tok)
    if lo > hi:
        raise DeckError(f"reversed range {tok!r}")
    return lo, hi


# ----------------------------------------------------------------------
# block parsers
# ----------------------------------------------------------------------

def parse_spatial_assignment(tokens, dims=None):
    """Classify a spatial keyword's value tokens (por, permx, sw, ...)."""
    if not tokens:
        raise DeckError("spatial assignment needs at least one value")
    head = tokens[0].lower()
    if head in ("con", "const", "constant"):
        if len(tokens) != 2:
            raise DeckError("constant assignment takes exactly one value")
        return SpatialAssignment("constant", parse_real(tokens[1]))
    if head in ("ivar", "jvar", "kvar", "xvar", "yvar", "zvar"):
        mode = {"xvar": "ivar", "yvar": "jvar", "zvar": "kvar"}.get(head, head)
        sa = SpatialAssignment(mode, expand_repeats(tokens[1:]))
    elif head == "all":
        sa = SpatialAssignment("all", expand_repeats(tokens[1:]))
    elif head == "file":
        if len(tokens) != 2:
            raise DeckError("file assignment takes exactly one path")
        return SpatialAssignment("file", tokens[1])
    else:
        if len(tokens) != 1:
            raise DeckError(
                f"bare spatial assignment takes one value, got {tokens}")
        return SpatialAssignment("constant", parse_real(tokens[0]))
    if dims is not None:
        sa.resolve(dims)  # count validation
    return sa


def parse_table(rows, columns=None, name="table", require_monotone=True,
                fill=0.0):
    """Build a Table from token rows; short rows are padded with ``fill``."""
    if not rows:
        raise DeckError(f"{name}: empty table")
    width = max(len(r) for r in rows)
    if columns is not None:
        if width > len(columns):
            raise DeckError(
                f"{name}: rows have {width} columns, expected <= {len(columns)}")
        width = len(columns)
    data = np.full((len(rows), width), fill, dtype=float)
    for i, r in enumerate(rows):
        for j, tok in enumerate(r):
            data[i, j] = parse_real(tok)
    cols = columns if columns is not None else [f"c{j}" for j in range(width)]
    tab = Table(list(cols), data)
    if require_monotone and len(rows) > 1:
        tab.validate_monotone(name)
    return tab


def parse_modifier(target, rows):
    boxes = []
    for r in rows:
        if len(r) != 4:
            raise DeckError(
                f"modifier {target!r}: expected 'i j k value', got {r}")
        i0, i1 = _parse_range(r[0])
        j0, j1 = _parse_range(r[1])
        k0, k1 = _parse_range(r[2])
        boxes.append((i0, i1, j0, j1, k0, k1, parse_real(r[3])))
    return Modifier(target, boxes)


_WELL_SCOPE = {
    "type", "tinjw", "qual", "skin", "rw", "refdepth", "weight", "operate",
    "perf", "htwell", "htwrate", "htwtemp", "htwell_direction", "htwi",
    "heatr", "uhtr", "tmpset",
}

_OPERATE_TARGETS = {
    "bhp", "stw", "sto", "stg", "stl", "stf", "bhw", "bho", "bhg", "bhl",
    "bhf", "steam", "steamtrap",
}


def _parse_cell_box_rate(toks, what):
    if len(toks) != 4:
        raise DeckError(f"{what}: expected 'i j k value', got {toks}")
    i0, i1 = _parse_range(toks[0])
    j0, j1 = _parse_range(toks[1])
    k0, k1 = _parse_range(toks[2])
    return (i0, i1, j0, j1, k0, k1), parse_real(toks[3])


def parse_well_section(name, lines, start):
    """Parse a well block beginning after ``well: name``.

    Returns (WellSpec, next_index).  The block ends on a lone ``/`` or on
    the first statement whose keyword is outside the well scope.
    """
    w = WellSpec(name=name)
    i = start
    n = len(lines)
    while i < n:
        lineno, toks = lines[i]
        if not toks:
            i += 1
            continue
        if toks == ["/"]:
            i += 1
            break
        key = _norm_key(toks[0])
        if key in ("{", "}"):
            i += 1
            continue
        if key not in _WELL_SCOPE:
            break
        args = toks[1:]
        ends_block = bool(args) and args[-1] == "/"
        if ends_block:
            args = args[:-1]
        if key == "type":
            kind = args[0].lower()
            if kind not in ("injector", "producer"):
                raise DeckError(f"line {lineno}: unknown well type {args[0]!r}")
            w.kind = kind
        elif key == "tinjw":
            w.tinjw = parse_real(args[0])
        elif key == "qual":
            w.qual = parse_real(args[0])
        elif key == "skin":
            w.skin = parse_real(args[0])
        elif key == "rw":
            w.rw = parse_real(args[0])
        elif key == "refdepth":
            w.refdepth = parse_real(args[0])
        elif key == "weight":
            mode = args[-1].lower()
            if mode not in ("unweighted", "explicit", "implicit"):
                raise DeckError(f"line {lineno}: unknown weight mode {mode!r}")
            w.weight = mode
        elif key == "operate":
            w.operations.append(_parse_operate(args, lineno))
        elif key == "perf":
            mode = args[0].lower() if args else "wi"
            if mode not in ("wi", "geo", "geoa"):
                raise DeckError(f"line {lineno}: unknown perf mode {mode!r}")
            w.perf_mode = mode
            i += 1
            while i < n:
                _, row = lines[i]
                if not row:
                    i += 1
                    continue
                if row == ["/"]:
                    break
                done = row[-1] == "/"
                if done:
                    row = row[:-1]
                if len(row) != 4:
                    raise DeckError(
                        f"perf line needs 'i j k value', got {row}")
                (i0, i1), (j0, j1), (k0, k1) = (_parse_range(t) for t in row[:3])
                w.perfs.append(PerfLine(i0, i1, j0, j1, k0, k1,
                                        parse_real(row[3])))
                if done:
                    break
                i += 1
        elif key == "htwell":
            mode = args[0].lower()
            if mode not in ("off", "rate", "temp", "dual"):
                raise DeckError(f"line {lineno}: unknown htwell mode {mode!r}")
            w.htwell = mode
        elif key == "htwrate":
            w.htwrate = parse_real(args[0])
        elif key == "htwtemp":
            w.htwtemp = parse_real(args[0])
        elif key == "htwell_direction":
            d = args[0].lower()
            if d not in ("unidirect", "bidirect"):
                raise DeckError(f"line {lineno}: unknown direction {d!r}")
            w.htwell_direction = d
        elif key == "htwi":
            w.htwi = args[0].lower() in _TRUE_WORDS
        elif key == "heatr":
            w.heatr.append(_parse_cell_box_rate(args, "heatr"))
        elif key == "uhtr":
            w.uhtr.append(_parse_cell_box_rate(args, "uhtr"))
        elif key == "tmpset":
            w.tmpset.append(_parse_cell_box_rate(args, "tmpset"))
        i += 1
        if ends_block:
            break
    return w, i


def _parse_operate(args, lineno):
    spec = "equality"
    rest = list(args)
    if rest and rest[0].lower() in ("min", "max"):
        spec = rest[0].lower()
        rest = rest[1:]
    if not rest:
        raise DeckError(f"line {lineno}: operate needs a target")
    target = rest[0].lower()
    if target not in _OPERATE_TARGETS:
        raise DeckError(f"line {lineno}: unknown operate target {rest[0]!r}")
    if len(rest) < 2:
        raise DeckError(f"line {lineno}: operate {target} needs a value")
    value = parse_real(rest[1])
    cell = None
    if len(rest) > 2:
        if target != "steamtrap" or len(rest) != 5:
            raise DeckError(f"line {lineno}: bad operate arguments {args}")
        cell = (parse_int(rest[2]), parse_int(rest[3]), parse_int(rest[4]))
    if target == "steamtrap":
        spec = "equality"
    return OperateLine(target, spec, value, cell)


# -- schedule ----------------------------------------------------------

def _parse_date(tokens, lineno):
    """Tokens after 'date': year month day[.frac] [HH:MM[:SS]] [AM|PM]."""
    if len(tokens) < 3:
        raise DeckError(f"line {lineno}: date needs year month day")
    year = parse_int(tokens[0])
    month = parse_int(tokens[1])
    dayf = parse_real(tokens[2])
    day = int(dayf)
    frac = dayf - day
    stamp = datetime.datetime(year, month, day) + datetime.timedelta(days=frac)
    rest = [t.upper() for t in tokens[3:]]
    if rest:
        clock = rest[0]
        parts = clock.split(":")
        if not 2 <= len(parts) <= 3:
            raise DeckError(f"line {lineno}: bad time {clock!r}")
        hh = parse_int(parts[0])
        mm = parse_int(parts[1])
        ss = parse_int(parts[2]) if len(parts) == 3 else 0
        if len(rest) > 1 and rest[1] in ("AM", "PM"):
            if hh == 12:
                hh = 0
            if rest[1] == "PM":
                hh += 12
        stamp = stamp.replace(hour=0, minute=0, second=0) + datetime.timedelta(
            hours=hh, minutes=mm, seconds=ss)
    return stamp


def parse_schedule(lines, start):
    """Parse a ``run`` ... ``stop`` block; returns (entries, next_index)."""
    entries = []
    origin = None
    mode = None  # "time" | "date"
    i = start
    n = len(lines)
    current = None
    saw_stop = False
    while i < n:
        lineno, toks = lines[i]
        if not toks or toks == ["/"]:
            i += 1
            continue
        key = _norm_key(toks[0])
        if key == "stop":
            if current is not None:
                current.actions.append(("stop",))
            elif entries:
                entries[-1].actions.append(("stop",))
            saw_stop = True
            i += 1
            break
        if key in ("time", "date"):
            kind = "time" if key == "time" else "date"
            if mode is None:
                mode = kind
            elif mode != kind:
                raise DeckError(
                    f"line {lineno}: cannot mix 'time' and 'Date' entries")
            if kind == "time":
                at = parse_real(toks[1])
            else:
                stamp = _parse_date(toks[1:], lineno)
                if origin is None:
                    origin = stamp
                at = (stamp - origin).total_seconds() / 86400.0
            if entries and at <= entries[-1].at:
                raise DeckError(
                    f"line {lineno}: schedule times must strictly increase")
            current = ScheduleEntry(at)
            entries.append(current)
            i += 1
            continue
        if current is None:
            raise DeckError(
                f"line {lineno}: schedule action before first time point")
        if key == "restart":
            current.actions.append(("restart",))
            i += 1
        elif key == "numerical":
            block = {}
            i += 1
            while i < n:
                _, row = lines[i]
                if not row:
                    i += 1
                    continue
                if row == ["/"]:
                    i += 1
                    break
                vals = row[1:]
                if vals and vals[-1] == "/":
                    vals = vals[:-1]
                block[_norm_key(row[0])] = vals
                if row[-1] == "/":
                    i += 1
                    break
                i += 1
            current.actions.append(("numerical", block))
        elif key == "well":
            if len(toks) < 2:
                raise DeckError(f"line {lineno}: well redefinition needs a name")
            wspec, i = parse_well_section(toks[1], lines, i + 1)
            current.actions.append(("well", wspec))
        else:
            raise DeckError(
                f"line {lineno}: unknown schedule action {toks[0]!r}")
    if not saw_stop:
        raise DeckError("schedule missing 'stop'")
    return entries, i


# ----------------------------------------------------------------------
# data files
# ----------------------------------------------------------------------

def read_data_file(path, layout="column", wanted_columns=None):
    """Read a bulk numeric data file.

    ``column`` layout requires every data line to carry the same number
    of columns and returns an (nrow, ncol) matrix (restricted to
    ``wanted_columns`` when given).  ``free-style`` treats the whole file
    as one token stream and returns a flat array.  ``#`` comments and
    blank lines are skipped; every token parses whole, exactly once.
    """
    with open(path) as fh:
        text = fh.read()
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw).strip()
        if not body:
            continue
        toks = body.split()
        try:
            vals = [float(t) for t in toks]
        except ValueError:
            bad = next(t for t in toks if not _is_number(t))
            raise DeckError(
                f"{path}:{lineno}: non-numeric token {bad!r}") from None
        rows.append(vals)
    if layout == "free-style":
        flat = [v for r in rows for v in r]
        return np.asarray(flat, dtype=float)
    if not rows:
        return np.zeros((0, 0))
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DeckError(
                f"{path}: ragged column file (row {i + 1} has {len(r)} "
                f"columns, expected {width})")
    mat = np.asarray(rows, dtype=float)
    if wanted_columns is not None:
        mat = mat[:, list(wanted_columns)]
    return mat


def _is_number(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


# ----------------------------------------------------------------------
# registry + top-level parse
# ----------------------------------------------------------------------

class KeywordRegistry:
    """Keyword registration table: one line of registration per keyword."""

    def __init__(self):
        self.entries = {}

    def register(self, name, kind, binding=None):
        key = name.lower()
        if key in self.entries:
            raise DeckError(f"duplicate keyword registration: {name!r}")
        if kind not in _KINDS:
            raise DeckError(f"unknown keyword kind: {kind!r}")
        self.entries[key] = KeywordEntry(key, kind, binding or key)
        return self

    def parse(self, text, values=None):
        """Parse deck text into a binding -> value dict."""
        values = {} if values is None else values
        lines = logical_lines(text)
        i = 0
        n = len(lines)
        while i < n:
            lineno, toks = lines[i]
            if not toks or toks == ["/"]:
                i += 1
                continue
            key = _norm_key(toks[0])
            entry = self.entries.get(key)
            if entry is None:
                raise DeckError(f"line {lineno}: key isn't found: {toks[0]!r}")
            args = toks[1:]
            trailing_slash = bool(args) and args[-1] == "/"
            if trailing_slash:
                args = args[:-1]
            kind = entry.kind
            if kind == SET_TRUE:
                values[entry.binding] = True
            elif kind == SET_FALSE:
                values[entry.binding] = False
            elif kind == BOOLEAN:
                low = args[0].lower()
                if low in _TRUE_WORDS:
                    values[entry.binding] = True
                elif low in _FALSE_WORDS:
                    values[entry.binding] = False
                else:
                    raise DeckError(
                        f"line {lineno}: {args[0]!r} is not a boolean")
            elif kind == TEXT:
                values[entry.binding] = args[0]
            elif kind == INTEGER:
                values[entry.binding] = parse_int(args[0])
            elif kind == REAL:
                values[entry.binding] = parse_real(args[0])
            elif kind == TEXT_LIST:
                values[entry.binding] = list(args)
            elif kind == INTEGER_LIST:
                values[entry.binding] = [parse_int(t) for t in args]
            elif kind == REAL_LIST:
                values[entry.binding] = expand_repeats(args)
            elif kind in (TABLE, TABLE_LIST):
                rows, i = _collect_rows(lines, i + 1)
                tab = parse_table(rows, name=key)
                if kind == TABLE:
                    values[entry.binding] = tab
                else:
                    values.setdefault(entry.binding, []).append(tab)
                continue
            elif kind in (MOD_REAL, MOD_INT, MOD_LIST):
                if not args:
                    raise DeckError(f"line {lineno}: 'mod' needs a target")
                rows, i = _collect_rows(lines, i + 1)
                m = parse_modifier(args[0].lower(), rows)
                if kind == MOD_LIST:
                    values.setdefault(entry.binding, []).append(m)
                else:
                    values[entry.binding] = m
                continue
            elif kind == WELL_SECTION:
                if not args:
                    raise DeckError(f"line {lineno}: well needs a name")
                w, i = parse_well_section(args[0], lines, i + 1)
                values.setdefault(entry.binding, []).append(w)
                continue
            elif kind == SCHEDULE_SECTION:
                sched, i = parse_schedule(lines, i + 1)
                values[entry.binding] = sched
                continue
            elif kind == REACTION_SECTION:
                rows, i = _collect_rows(lines, i + 1, slash_only=True)
                warnings.warn(
                    f"line {lineno}: reaction section parsed but ignored "
                    "(no reaction model)")
                values.setdefault(entry.binding, []).append(
                    {"name": args[0] if args else "", "lines": rows})
                continue
            i += 1
        return values


def _collect_rows(lines, start, slash_only=False):
    """Collect token rows until '/' or (unless slash_only) a blank line."""
    rows = []
    i = start
    n = len(lines)
    while i < n:
        _, toks = lines[i]
        if not toks:
            if slash_only:
                i += 1
                continue
            i += 1
            break
        if toks == ["/"]:
            i += 1
            break
        if toks[-1] == "/":
            rows.append(toks[:-1])
            i += 1
            break
        rows.append(toks)
        i += 1
    return rows, i
