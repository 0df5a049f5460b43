from fractions import Fraction

import pytest

from hypident.catalog import load_catalog, loads
from hypident.errors import CatalogError
from hypident.exprdsl import evaluate, parse
from hypident.hyper import series_sum
from hypident.numkernel import EvalContext
from hypident.verify import (
    VerifyReport, agreement_digits, cross_check, emit_report, exit_code, verify_identity,
)

from helpers import FIXTURES, bundled, bundled_index

REQUIRED = {
    "intro_series", "borwein_chamberland", "zeta_sum", "catalan_altharmonic", "beta_family",
    "x4n1_family", "ex1", "ex2", "elliptic_series", "ex3", "thm5", "thm6", "thm7", "thm8",
    "thm9", "thm19", "thm20",
}
AUDIT = {"thm4", "eq_144", "ex8", "ex11", "ex12", "ex13", "thm17", "thm18", "thm21", "thm22", "final_6f5"}


class TestLoad:
    def test_bundled_size(self):
        recs = bundled()
        assert len(recs) >= 45
        assert len({r.id for r in recs}) == len(recs)

    def test_required_and_audit_sets(self, index):
        assert {r.id for r in bundled() if r.required} == REQUIRED
        for rid in AUDIT:
            assert index[rid].expected_status == "audit", rid

    def test_every_record_anchored(self):
        assert all(r.paper_anchor for r in bundled())

    def test_empty(self):
        assert load_catalog(FIXTURES / "empty.cat") == []
        assert loads("# only a comment\n\n") == []

    def test_duplicate_names_id(self):
        with pytest.raises(CatalogError, match="twice") as exc:
            load_catalog(FIXTURES / "duplicate.cat")
        assert exc.value.line == 5

    def test_parse_error_has_line(self):
        with pytest.raises(CatalogError) as exc:
            load_catalog(FIXTURES / "malformed.cat")
        assert exc.value.line == 6

    def test_missing_file(self):
        with pytest.raises(CatalogError):
            load_catalog(FIXTURES / "no_such.cat")

    def test_continuation_and_concatenation(self):
        text = ('[identity e]\n'
                'lhs_series = [n, 0, \\\n'
                '   "1/fact(n)"]\n'
                'rhs = "exp(1)" \\\n'
                '      " + 0"  # trailing comment\n')
        (rec,) = loads(text)
        assert rec.rhs == parse("exp(1) + 0")
        assert rec.lhs_series.start == 0

    def test_sample_range(self):
        (rec,) = loads('[identity r]\nkind = parametric\nparams = [n]\nsamples = [0..3, 7]\n'
                       'lhs_series = [k, 0, "(1/2)^k*n"]\nrhs = "2*n"\n')
        assert [b["n"] for b in rec.bindings()] == [0, 1, 2, 3, 7]


class TestInvariants:
    @pytest.mark.parametrize("text, needle", [
        ('[identity a]\nrhs = "1"\n', "no lhs"),
        ('[identity a]\nlhs_series = [n, 0, "0"]\n', "missing rhs"),
        ('[identity a]\nlhs_series = [n, 0, "0"]\nrhs = "0"\nrequired = true\nexpected_status = audit\n',
         "required"),
        ('[identity a]\nkind = parametric\nlhs_series = [n, 0, "0"]\nrhs = "0"\n', "params"),
        ('[identity a]\nlhs_series = [n, 0, "x^n"]\nrhs = "0"\n', "undeclared"),
        ('[identity a]\nbogus = 1\n', "unknown key"),
        ('[identity a]\nlhs_series = [n, 0, "0"]\nrhs = "0"\nchain = [nowhere, integrate_0x]\n', "seed"),
        ('[identity a]\nlhs_series = [n, 0, "0"]\nrhs = "0"\nchain = [a, differentiate]\n', "chain step"),
        ('[identity a]\nlhs_series = [n, 0, "1/("]\nrhs = "0"\n', "lhs_series term"),
    ])
    def test_rejected(self, text, needle):
        with pytest.raises(CatalogError, match=needle):
            loads(text)

    def test_bundled_parametric_samples_valid(self):
        for rec in bundled():
            if rec.kind == "parametric":
                assert rec.params and rec.samples, rec.id


class TestVerify:
    def test_thm5_at_60(self, index):
        rep = verify_identity(index["thm5"], "auto", EvalContext(60), index)
        assert rep.status == "match" and rep.digits_matched >= 40
        assert rep.strategy == "integral"

    def test_cos2t_named_sample(self, index):
        ctx = EvalContext(40)
        rec = index["eq_cos2t"]
        b = {"t": Fraction(1, 3), "x": Fraction(1, 2)}
        assert b in rec.bindings()
        lhs = series_sum(rec.lhs_series, b, ctx).value
        # direct 100-term partial sum; the tail is below 4^-100
        direct = sum(evaluate(rec.lhs_series.term, {**b, "n": n}, ctx) for n in range(100))
        assert agreement_digits(lhs, direct, ctx) >= 40
        assert agreement_digits(lhs, evaluate(rec.rhs, b, ctx), ctx) >= 40

    def test_eq144_literal_mismatch(self, index):
        rep = verify_identity(index["eq_144"], "auto", EvalContext(40), index)
        assert rep.status == "mismatch" and rep.digits_matched <= 2

    def test_explicit_strategy_unavailable(self, index):
        rep = verify_identity(index["zeta_sum"], "integral", EvalContext(30), index)
        assert rep.status == "error"

    def test_imaginary_residue_counts(self):
        (rec,) = loads('[identity c]\nlhs_series = [n, 0, "(1/2)^n"]\nrhs = "2 + i*10^(-12)"\n')
        rep = verify_identity(rec, "series", EvalContext(30))
        assert rep.status == "mismatch" and rep.digits_matched == 12

    def test_negative_control(self, index):
        (rec,) = loads('[identity p]\nlhs_pfq = [[1/2, 2/3, 4/3], [3/2, 2], "1"]\n'
                       'rhs = "3*sqrt(3)*(3 - ln(4))/(2*pi)*(1 + 10^(-6))"\nrequired = true\n')
        for strategy in ("pfq", "auto"):
            rep = verify_identity(rec, strategy, EvalContext(40))
            assert rep.status == "mismatch"
            assert 5 <= rep.digits_matched <= 7

    def test_negative_control_parametric(self, index):
        rec = index["beta_family"]
        bad = loads(f'[identity q]\nkind = parametric\nparams = [n]\nsamples = [0..10]\n'
                    f'lhs_integral = [x, "0", "1", "{rec.lhs_integral.integrand}"]\n'
                    f'rhs = "({rec.rhs})*(1 - 10^(-6))"\n')[0]
        rep = verify_identity(bad, "auto", EvalContext(40))
        assert rep.status == "mismatch" and 5 <= rep.digits_matched <= 7
        assert len(rep.samples) == 11


def _pairs_expected(rec):
    k = len(rec.representations())
    return k * (k - 1) // 2 * len(rec.bindings())


def test_strategy_agreement():
    ctx = EvalContext(40)
    index = bundled_index()
    checked = 0
    for rec in bundled():
        if len(rec.representations()) < 2:
            continue
        pairs = cross_check(rec, ctx, index)
        assert len(pairs) == _pairs_expected(rec), rec.id
        for a, b, bind, agreed, achieved in pairs:
            assert agreed >= achieved, (rec.id, a, b, bind, agreed, achieved)
            checked += 1
    assert checked >= 60


@pytest.mark.parametrize("rid", sorted(REQUIRED))
def test_required_stable_and_monotone(rid):
    index = bundled_index()
    prev = -1
    for digits in (30, 45, 60):
        rep = verify_identity(index[rid], "auto", EvalContext(digits), index)
        assert rep.status == "match", (rid, digits, rep.message)
        assert rep.digits_matched >= prev, (rid, digits)
        prev = rep.digits_matched


class TestReport:
    def _rep(self, rid, status, digits, strategy, ms, required=True):
        return VerifyReport(rid, status, digits, strategy, ms, required=required)

    def test_lines(self):
        reps = [self._rep("thm5", "match", 47, "integral", 312), self._rep("eq_144", "mismatch", 1, "integral", 95)]
        assert emit_report(reps, "lines") == "eq_144 mismatch 1 integral 95ms\nthm5 match 47 integral 312ms\n"

    def test_table(self):
        out = emit_report([self._rep("thm5", "match", 47, "integral", 312)], "table").splitlines()
        assert out[0].split() == ["id", "status", "digits", "strategy", "time"]
        assert out[2].split() == ["thm5", "match", "47", "integral", "312ms"]

    def test_empty(self):
        assert emit_report([], "lines") == ""
        assert len(emit_report([], "table").splitlines()) == 2

    def test_exit_precedence(self):
        ok = self._rep("a", "match", 40, "series", 1)
        bad = self._rep("b", "mismatch", 3, "series", 1)
        err = self._rep("c", "error", 0, "series", 1)
        audit = self._rep("d", "mismatch", 0, "series", 1, required=False)
        assert exit_code([ok, audit]) == 0
        assert exit_code([ok, err]) == 3
        assert exit_code([err, bad]) == 1
        assert exit_code([]) == 0
