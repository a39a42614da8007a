"""Case parsing, builtin catalog, serialization round-trips."""

import pytest

from gridbench import caseio
from gridbench.caseio import (
    BUILTIN_CASES,
    CaseOrigin,
    SemanticsError,
    UnknownCaseError,
    UnsupportedFeatureError,
    load_builtin,
    load_source,
    parse_case,
    serialize_case,
    text_checksum,
)

# content digests of the bundled catalog, frozen at first build
GOLDEN_CHECKSUMS = {
    "case14": "0de13369315bf8caaa9e5755fa7900260109e90e1d64d93585f4c00146e66122",
    "case30": "467d53bda256e06c9182acc3e330faaf142c54ebcc3d4d6957a1858d39abfbe3",
    "case57": "4a5aeb1f50a57d5bd93a285f6f9154c854adf71c8c5a66451884c08372901ba8",
    "case118": "ae53cb84e44961aa16e3b6363d79bf940dd21b6a849c5970955b8ce308d86c43",
    "case300": "a53768b4ffd58a47e221c825d18763352117ee74d7c89d537908ad2b0a9f2451",
}


class TestParse:
    def test_case14_structure(self, case14):
        assert case14.n_bus == 14
        assert case14.n_gen == 5
        assert sum(1 for b in case14.buses if b.pd_mw or b.qd_mvar) == 11
        assert len(case14.lines()) == 17
        assert len(case14.transformers()) == 3

    def test_case118_structure(self, case118):
        assert case118.n_bus == 118
        assert case118.n_gen == 54
        assert len(case118.lines()) == 175
        assert len(case118.transformers()) == 11

    def test_case57_structure(self, case57):
        assert case57.n_bus == 57
        assert case57.n_gen == 7
        assert len(case57.lines()) == 63
        assert len(case57.transformers()) == 17

    def test_dangling_branch_reference(self):
        text = """function mpc = bad
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t138\t1\t1.06\t0.94;
\t2\t1\t10\t5\t0\t0\t1\t1\t0\t138\t1\t1.06\t0.94;
];
mpc.gen = [
\t1\t0\t0\t100\t-100\t1\t100\t1\t200\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;
];
mpc.branch = [
\t1\t999\t0.01\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t2\t0\t0\t3\t0.01\t20\t0;
];
"""
        with pytest.raises(SemanticsError, match="999"):
            parse_case(text)

    def test_piecewise_cost_rejected(self, case14):
        text = serialize_case(case14).replace("\t2\t0\t0\t3\t", "\t1\t0\t0\t3\t", 1)
        with pytest.raises(UnsupportedFeatureError, match="piecewise"):
            parse_case(text)

    def test_missing_matrix_rejected(self):
        with pytest.raises(UnsupportedFeatureError, match="mpc.bus"):
            parse_case("mpc.baseMVA = 100;")

    def test_syntax_error_reports_position(self):
        text = "mpc.baseMVA = 100;\nmpc.bus = [\n\t1\tthree\t0\t0\t0\t0\t1\t1\t0\t0\t1\t1.06\t0.94;\n];"
        with pytest.raises(caseio.CaseSyntaxError) as err:
            parse_case(text)
        assert err.value.line == 3


class TestBuiltins:
    def test_case30(self, case30):
        assert case30.n_bus == 30
        assert case30.n_gen == 6
        assert len(case30.lines()) == 41

    def test_case300(self):
        net = load_builtin("case300")
        assert net.n_bus == 300
        # 69 machine records; the slack machine aside, 68 generators as the
        # published inventory counts them
        assert net.n_gen == 69
        nonslack = sum(1 for g in net.generators
                       if net.buses[net.bus_index(g.bus_id)].bus_type.value != "slack")
        assert nonslack == 68
        assert net.n_branch == 411
        assert len(net.lines()) == 283
        assert len(net.transformers()) == 128

    def test_unknown_case(self):
        with pytest.raises(UnknownCaseError):
            load_builtin("case999")

    def test_catalog_parses_totally(self):
        for name in BUILTIN_CASES:
            net = load_builtin(name)
            assert net.n_bus > 0

    def test_checksums_stable(self):
        for name, expected in GOLDEN_CHECKSUMS.items():
            src = load_source(name)
            assert src.checksum == expected, f"{name} content drifted"
            assert src.origin is CaseOrigin.BUILTIN
            assert src.checksum == text_checksum(src.raw_text)

    def test_case_dir_loading(self, tmp_path, case14):
        (tmp_path / "case14.m").write_text(serialize_case(case14))
        src = load_source("case14", case_dir=str(tmp_path))
        assert src.origin is CaseOrigin.FILE
        assert parse_case(src.raw_text, "case14") == case14


class TestRoundTrip:
    def test_case14_roundtrip(self, case14):
        assert parse_case(serialize_case(case14), "case14") == case14

    def test_edit_survives_roundtrip(self, case14):
        from gridbench.network import Modification, ModKind, apply_modification
        edited = apply_modification(case14, Modification(ModKind.SET_BUS_LOAD, 2,
                                                         {"p_mw": 30.0}))
        again = parse_case(serialize_case(edited), "case14")
        assert again.buses[again.bus_index(2)].pd_mw == 30.0
        assert again == edited

    def test_all_builtins_roundtrip(self):
        for name in BUILTIN_CASES:
            net = load_builtin(name)
            again = parse_case(serialize_case(net), name)
            assert again == net, f"{name} does not round-trip"
            # element order preserved, hence indices
            assert [b.id for b in again.buses] == [b.id for b in net.buses]
            assert [(b.from_bus, b.to_bus) for b in again.branches] == \
                [(b.from_bus, b.to_bus) for b in net.branches]


from hypothesis import given, settings
from hypothesis import strategies as st


class TestRoundTripProperty:
    @given(seed=st.integers(min_value=0, max_value=2**31),
           n_edits=st.integers(min_value=1, max_value=6))
    @settings(max_examples=25, deadline=None)
    def test_roundtrip_survives_random_edits(self, seed, n_edits):
        import random

        from gridbench.network import Modification, ModKind, apply_modification
        rng = random.Random(seed)
        net = load_builtin("case14")
        for _ in range(n_edits):
            kind = rng.choice([ModKind.SET_BUS_LOAD, ModKind.SCALE_BUS_LOAD,
                               ModKind.SET_GEN_LIMIT])
            if kind is ModKind.SET_BUS_LOAD:
                mod = Modification(kind, rng.choice(net.buses).id,
                                   {"p_mw": round(rng.uniform(0, 300), 6),
                                    "q_mvar": round(rng.uniform(-50, 120), 6)})
            elif kind is ModKind.SCALE_BUS_LOAD:
                mod = Modification(kind, rng.choice(net.buses).id,
                                   {"factor": round(rng.uniform(0.1, 3.0), 6)})
            else:
                mod = Modification(kind, rng.randrange(net.n_gen),
                                   {"pmax_mw": round(rng.uniform(50, 600), 6)})
            net = apply_modification(net, mod)
        assert parse_case(serialize_case(net), net.case_name) == net
