import textwrap

import numpy as np
import pytest

from thermsim import keywords as kw

# the seven equivalent x-permeability spellings from the deck grammar
PERMX_SPELLINGS = [
    "permx: kvar 1 333 1e-3 1 200 1000 3000 20 666 90 88 88 88 88 88",
    "permx: zvar 1 333 1e-3 1 200 1000 3000 20 666 90 88 88 88 88 88",
    """permx: \\
    kvar \\
    1 333 1e-3 1 200 1000  \\
    3000 20 666 90 88 88 88 88 88""",
    """permx: \\
    zvar \\
    1 333 1e-3 1 200 1000  \\
    3000 20 666 90 \\
    88 88 \\
    88 88 88""",
    """permx: kvar 1 333 1e-3 1 \\
    200 1000 3000 20 666 90 5*88""",
    """permx: kvar 1 \\
    333 1e-3 \\
    1 200 \\
    1000 \\
# comment
# comment
# comment
    3000 \\
    20 \\
    666 \\
# comment \\
# comment \\
    90 88 4*88""",
    """permx: kvar 1 \\
# comment
    333 1e-3 \\
    1 200 \\
# comment again \\
    1000 \\
    3000 \\
    20 \\
# comment again
    666 \\
    90 88 2*88 2*88""",
]

PERMX_EXPECTED = [1, 333, 1e-3, 1, 200, 1000, 3000, 20, 666, 90,
                  88, 88, 88, 88, 88]


def registry():
    reg = kw.KeywordRegistry()
    reg.register("permx", kw.TEXT_LIST)
    reg.register("cpor", kw.REAL)
    reg.register("por", kw.TEXT_LIST)
    reg.register("sw", kw.TEXT_LIST)
    reg.register("swt", kw.TABLE)
    reg.register("slt", kw.TABLE)
    reg.register("mod", kw.MOD_LIST)
    reg.register("well", kw.WELL_SECTION)
    reg.register("run", kw.SCHEDULE_SECTION, "schedule")
    reg.register("reaction", kw.REACTION_SECTION)
    return reg


@pytest.mark.parametrize("deck", PERMX_SPELLINGS)
def test_permx_spellings_identical(deck):
    vals = registry().parse(deck)
    toks = vals["permx"]
    assert toks[0].lower() in ("kvar", "zvar")
    assert kw.expand_repeats(toks[1:]) == PERMX_EXPECTED


# ---------------------------------------------------------------- repeats

def test_expand_repeats_example1_dx():
    out = kw.expand_repeats(["90*29.17"])
    assert len(out) == 90 and set(out) == {29.17}


def test_expand_repeats_values():
    assert kw.expand_repeats(["5*88"]) == [88.0] * 5
    assert kw.expand_repeats(["7"]) == [7.0]


def test_expand_repeats_length_property():
    import random
    rng = random.Random(7)
    toks, total = [], 0
    for _ in range(50):
        c = rng.randint(1, 9)
        toks.append(f"{c}*{rng.random():.4f}")
        total += c
    assert len(kw.expand_repeats(toks)) == total


def test_expand_repeats_rejects_bad_counts():
    with pytest.raises(kw.DeckError):
        kw.expand_repeats(["0*5"])
    with pytest.raises(kw.DeckError):
        kw.expand_repeats(["-2*5"])
    with pytest.raises(kw.DeckError):
        kw.expand_repeats(["x*5"])
    with pytest.raises(kw.DeckError):
        kw.expand_repeats(["2*1.z"])


# ------------------------------------------------------------- spatial

def test_spatial_constant_forms():
    for line in (["0.3"], ["con", "0.3"], ["const", "0.3"]):
        sa = kw.parse_spatial_assignment(line)
        assert sa.mode == "constant" and sa.values == 0.3


def test_spatial_zvar_layers():
    toks = "zvar 0.18 20*0.2 19*0.25".split()
    sa = kw.parse_spatial_assignment(toks, dims=(9, 9, 40))
    vals = sa.resolve((9, 9, 40))
    per_layer = vals.reshape(40, 9, 9)
    assert np.allclose(per_layer[0], 0.18)
    assert np.allclose(per_layer[1:21], 0.2)
    assert np.allclose(per_layer[21:], 0.25)


def test_spatial_all_count_mismatch():
    toks = ["all"] + ["0.3"] * 10
    with pytest.raises(kw.DeckError):
        kw.parse_spatial_assignment(toks, dims=(3, 3, 3))


def test_spatial_xvar_alias():
    sa = kw.parse_spatial_assignment("xvar 1 2 3".split())
    assert sa.mode == "ivar"


def test_spatial_file(tmp_path):
    path = tmp_path / "por.dat"
    path.write_text("# porosity\n" + " ".join(["0.25"] * 30) + "\n")
    sa = kw.parse_spatial_assignment(["file", str(path)])
    vals = sa.resolve((3, 3, 3))
    assert vals.shape == (27,) and np.allclose(vals, 0.25)


def test_spatial_missing_file():
    sa = kw.parse_spatial_assignment(["file", "no_such_file.dat"])
    with pytest.raises(kw.DeckError, match="no_such_file"):
        sa.resolve((2, 2, 2))


# -------------------------------------------------------------- tables

SWT_BLOCK = """\
swt:
#   Sw        Krw        Krow         Pcw
    0.45     0.0         0.4
    0.47     0.000056    0.361
    0.50     0.000552    0.30625
    0.55     0.00312     0.225
    0.60     0.00861     0.15625
    0.65     0.01768     0.1
    0.70     0.03088     0.05625
    0.75     0.04871     0.025
    0.77     0.05724     0.016
    0.80     0.07162     0.00625
    0.82     0.08229     0.00225
    0.85     0.1         0.0
"""

SLT_BLOCK = """\
slt:
#   Sl       Krg         Krog           Pcg
    0.45     0.2         0.0
    0.55     0.14202     0.0
    0.57     0.13123     0.00079
    0.60     0.11560     0.00494
    0.62     0.10555     0.00968
    0.65     0.09106     0.01975
    0.67     0.08181     0.02844
    0.70     0.06856     0.04444
    0.72     0.06017     0.05709
    0.75     0.04829     0.07901
    0.77     0.04087     0.09560
    0.80     0.03054     0.12346
    0.83     0.02127     0.15486
    0.85     0.01574     0.17778
    0.87     0.01080     0.20227
    0.90     0.00467     0.24198
    0.92     0.00165     0.27042
    0.94     0.0         0.30044
    1.       0.0         0.4
"""


def test_swt_block_values():
    vals = registry().parse(SWT_BLOCK)
    tab = vals["swt"]
    assert tab.rows.shape[0] == 12
    assert tab.rows[0, 0] == 0.45 and tab.rows[-1, 0] == 0.85
    assert tab.rows[0, 1] == 0.0 and tab.rows[-1, 1] == 0.1
    # absent Pcw column fills zero
    assert np.all(tab.rows[:, 2] >= 0)


def test_slt_block_values():
    tab = registry().parse(SLT_BLOCK)["slt"]
    assert tab.rows.shape[0] == 19
    assert tuple(tab.rows[-1]) == (1.0, 0.0, 0.4)


def test_table_non_monotone_rejected():
    rows = [["0.5", "1"], ["0.4", "2"]]
    with pytest.raises(kw.DeckError, match="increasing"):
        kw.parse_table(rows, name="bad")


def test_table_ragged_padding():
    rows = [["0.1", "1", "2", "3"], ["0.2", "4"]]
    tab = kw.parse_table(rows)
    assert tab.rows[1, 2] == 0.0 and tab.rows[1, 3] == 0.0


# ------------------------------------------------------------ modifiers

MOD_BLOCK = """\
mod: permx
1 1 1:25         1000
8 8 4            5
9:12 8:18 4:20   5
2:22 7 5         2000 /
"""


def test_modifier_boxes():
    mods = registry().parse(MOD_BLOCK)["mod"]
    m = mods[0]
    assert m.target == "permx"
    assert m.boxes[0] == (1, 1, 1, 1, 1, 25, 1000.0)
    assert m.boxes[2] == (9, 12, 8, 18, 4, 20, 5.0)


def test_modifier_apply_matches_bruteforce():
    # oracle: sequential per-cell loop applying boxes in order
    mods = kw.parse_modifier("k", [["1:2", "1:3", "1", "5"],
                                   ["2:3", "2", "1:2", "9"],
                                   ["1", "1", "1", "3"]])
    nx, ny, nz = 3, 3, 2
    got = mods.apply(np.zeros((nx, ny, nz)))
    want = np.zeros((nx, ny, nz))
    for (i0, i1, j0, j1, k0, k1, v) in mods.boxes:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if i0 <= i + 1 <= i1 and j0 <= j + 1 <= j1 and k0 <= k + 1 <= k1:
                        want[i, j, k] = v
    assert np.array_equal(got, want)


def test_modifier_reversed_range_rejected():
    with pytest.raises(kw.DeckError, match="reversed"):
        kw.parse_modifier("k", [["3:1", "1", "1", "5"]])


def test_modifier_out_of_grid_rejected_at_bind():
    m = kw.parse_modifier("k", [["1", "1", "1:25", "7"]])
    with pytest.raises(kw.DeckError, match="outside grid"):
        m.apply(np.zeros((3, 3, 3)))


# ------------------------------------------------------------ well section

WELL_BLOCK = """\
well: Inj-No_1
type: injector
tinjw: 450
qual: 0.6
skin: 0
weight: mobweight implicit

operate: max bhp 3000
operate: max stw 100
operate: steamtrap 15 1 1 1

perf: geo
    8 8 1:40 1
/
"""


def test_well_section_example():
    w = registry().parse(WELL_BLOCK)["well"][0]
    assert w.name == "Inj-No_1"
    assert w.kind == "injector" and w.tinjw == 450 and w.qual == 0.6
    assert w.weight == "implicit"
    assert [op.target for op in w.operations] == ["bhp", "stw", "steamtrap"]
    assert w.operations[0].specifier == "max" and w.operations[0].value == 3000
    assert w.operations[2].cell == (1, 1, 1) and w.operations[2].value == 15
    assert w.perf_mode == "geo"
    assert len(w.perfs) == 1 and (w.perfs[0].k0, w.perfs[0].k1) == (1, 40)
    w.validate(dims=(9, 9, 40))


def test_well_zero_perforations_rejected():
    w = kw.WellSpec(name="w", kind="producer")
    with pytest.raises(kw.DeckError, match="no perforations"):
        w.validate()


def test_producer_with_tinjw_rejected():
    w = kw.WellSpec(name="w", kind="producer", tinjw=300.0,
                    perfs=[kw.PerfLine(1, 1, 1, 1, 1, 1, 1e4)])
    with pytest.raises(kw.DeckError, match="tinjw"):
        w.validate()


def test_perf_outside_grid_rejected():
    w = kw.WellSpec(name="w", kind="producer",
                    perfs=[kw.PerfLine(1, 1, 1, 1, 1, 40, 1e4)])
    with pytest.raises(kw.DeckError, match="outside grid"):
        w.validate(dims=(3, 3, 3))


# ------------------------------------------------------------- schedule

def test_schedule_times_and_stop():
    deck = textwrap.dedent("""\
        run
        time 30
        time 100

        time 365
        stop
    """)
    sched = registry().parse(deck)["schedule"]
    assert [e.at for e in sched] == [30.0, 100.0, 365.0]
    assert ("stop",) in sched[-1].actions


def test_schedule_date_fractional_day():
    deck = textwrap.dedent("""\
        run
        Date 2016 3 1.3
        Date 2016 3 2
        stop
    """)
    sched = registry().parse(deck)["schedule"]
    # 2016-03-01 07:12 -> 2016-03-02 00:00 is 0.7 day
    assert sched[0].at == 0.0
    assert abs(sched[1].at - 0.7) < 1e-12


def test_schedule_date_clock_formats():
    deck = textwrap.dedent("""\
        run
        Date 2017 8 1
        Date 2017 8 1 23:33:42
        Date 2017 8 2 12:24 PM
        Date 2017 8 3 8:33 AM
        stop
    """)
    sched = registry().parse(deck)["schedule"]
    secs = (23 * 3600 + 33 * 60 + 42) / 86400.0
    assert abs(sched[1].at - secs) < 1e-12
    assert abs(sched[2].at - (1 + 12.4 / 24)) < 1e-12
    assert abs(sched[3].at - (2 + (8 + 33 / 60.0) / 24)) < 1e-12


def test_schedule_non_increasing_rejected():
    deck = "run\ntime 30\ntime 30\nstop\n"
    with pytest.raises(kw.DeckError, match="increase"):
        registry().parse(deck)


def test_schedule_action_before_time_rejected():
    deck = "run\nrestart\ntime 30\nstop\n"
    with pytest.raises(kw.DeckError, match="before first time"):
        registry().parse(deck)


def test_schedule_actions_attach():
    deck = textwrap.dedent("""\
        run
        time 10
        restart
        numerical:
        solver: bicgstab
        dtmax: 100
        /
        time 200
        well: P1
        type: producer
        operate: min bhp 600
        perf: wi
        1 1 1 1e4
        /
        time 365
        stop
    """)
    sched = registry().parse(deck)["schedule"]
    kinds = [a[0] for a in sched[0].actions]
    assert kinds == ["restart", "numerical"]
    num = sched[0].actions[1][1]
    assert num["solver"] == ["bicgstab"] and num["dtmax"] == ["100"]
    assert sched[1].actions[0][0] == "well"
    assert sched[1].actions[0][1].name == "P1"


# ------------------------------------------------------------ data files

COLUMN_FILE = """\
# this is comment
1.       2       2.3
0.99     8       3e-4
0.29     3       3e-5
0.19     8       3.333333334567

# empty line following

# another comment
1e-6     22      8.776644446699999999777555

0.39     28     -9.23e-6
"""


def test_column_data_file(tmp_path):
    p = tmp_path / "cols.dat"
    p.write_text(COLUMN_FILE)
    mat = kw.read_data_file(p, layout="column")
    assert mat.shape == (6, 3)
    assert tuple(mat[0]) == (1.0, 2.0, 2.3)
    assert mat[-1, 2] == -9.23e-6


def test_column_wanted_columns(tmp_path):
    p = tmp_path / "cols.dat"
    p.write_text(COLUMN_FILE)
    mat = kw.read_data_file(p, layout="column", wanted_columns=[2])
    assert mat.shape == (6, 1) and mat[1, 0] == 3e-4


def test_free_style_tokens_parse_whole(tmp_path):
    p = tmp_path / "free.dat"
    body = "1. 2 2.3 0.99 8 3e-4\n2.55\n2.55 2\n"
    body += "0.39 28 -9.23e-6 0.39 28 -9.23e-6 0.39 28 -9.23e-6\n"
    p.write_text(body)
    flat = kw.read_data_file(p, layout="free-style")
    assert flat[-9:].reshape(3, 3).tolist() == [[0.39, 28.0, -9.23e-6]] * 3
    # token integrity: parsed stream equals the raw token stream
    raw = [float(t) for line in body.splitlines()
           for t in line.split() if t]
    assert np.allclose(flat, raw)


def test_ragged_column_file_rejected(tmp_path):
    p = tmp_path / "bad.dat"
    p.write_text("1 2 3\n4 5\n")
    with pytest.raises(kw.DeckError, match="ragged"):
        kw.read_data_file(p, layout="column")


def test_non_numeric_token_rejected(tmp_path):
    p = tmp_path / "bad.dat"
    p.write_text("1 2 fish\n")
    with pytest.raises(kw.DeckError, match="fish"):
        kw.read_data_file(p, layout="column")


def test_empty_file_gives_zero_rows(tmp_path):
    p = tmp_path / "empty.dat"
    p.write_text("# nothing here\n\n")
    assert kw.read_data_file(p, layout="column").shape[0] == 0
    assert kw.read_data_file(p, layout="free-style").size == 0


# --------------------------------------------------------------- misc

def test_unregistered_keyword_error_names_it():
    with pytest.raises(kw.DeckError, match="bogus"):
        registry().parse("bogus: 42\n")


def test_keywords_case_insensitive():
    vals = registry().parse("CPOR: 5e-5\n")
    assert vals["cpor"] == 5e-5


def test_reaction_section_warns_and_is_ignored():
    deck = "reaction: crack\nsome raw line 1 2 3\n/\n"
    with pytest.warns(UserWarning, match="reaction"):
        vals = registry().parse(deck)
    assert vals["reaction"][0]["name"] == "crack"
