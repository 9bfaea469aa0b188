from __future__ import annotations

import pytest

from plank import (
    NormalStatus,
    alpha_equal,
    check_script,
    contract,
    match_assoc,
    match_term,
    normalize,
    parse_script,
    parse_term,
    prepare_rules,
    render,
    rewrite_step,
    substitute,
)
from plank.rewrite import (
    Abstraction,
    AssocBinding,
    EngineError,
    Valuation,
    format_step,
)
from plank.terms import AssocPiece, Ident, MapEntry, MetaApp, NotKey, Var, free_vars


def t(text):
    return parse_term(text)


def strip_not_keys(term):
    """Replay helper: drop absence entries before contracting a pattern."""
    from plank.terms import AssocPiece, Construction, MapEntry, NotKey, ScopePiece

    def go(x):
        if isinstance(x, Construction):
            return Construction(x.head, tuple(piece(p) for p in x.args))
        return x

    def piece(p):
        if isinstance(p, ScopePiece):
            return ScopePiece(p.binders, go(p.body))
        entries = []
        for e in p.entries:
            if isinstance(e, NotKey):
                continue
            if isinstance(e, MapEntry):
                entries.append(MapEntry(e.key, go(e.value)))
            else:
                entries.append(e)
        return AssocPiece(tuple(entries))

    return go(term)


def replay(pattern, valuation, subject):
    return contract(strip_not_keys(pattern), valuation, free_vars(subject))


def normalize_assoc_order(term):
    """Sort association entries by key so comparisons ignore entry order."""
    from plank.terms import AssocPiece, CatchAll, Construction, MapEntry, ScopePiece

    def go(x):
        if not isinstance(x, Construction):
            return x
        return Construction(x.head, tuple(piece(p) for p in x.args))

    def piece(p):
        if isinstance(p, ScopePiece):
            return ScopePiece(p.binders, go(p.body))
        entries = []
        for e in p.entries:
            if isinstance(e, MapEntry):
                entries.append(MapEntry(e.key, go(e.value)))
            else:
                entries.append(e)
        entries.sort(key=lambda e: (type(e).__name__, getattr(e, "key", getattr(e, "meta", ""))))
        return AssocPiece(tuple(entries))

    return go(term)


def alpha_equal_up_to_entry_order(a, b):
    """Replay soundness holds up to association entry order: a pattern whose
    catch-all precedes a named key cannot reproduce the subject's order."""
    return alpha_equal(normalize_assoc_order(a), normalize_assoc_order(b))


class TestMatchTerm:
    def test_beta_redex(self, ex1, ex1_checked):
        beta = ex1.rules[0].lhs
        subject = t("Ap(Lam([x]x), Lam([y]y))")
        val = match_term(ex1_checked.gamma, beta, subject)
        assert val is not None
        m = val.meta_bind["#M"]
        assert len(m.params) == 1 and m.body == Var(m.params[0])
        n = val.meta_bind["#N"]
        assert n.params == () and n.body == t("Lam([y]y)")

    def test_eta_absence(self, ex1, ex1_checked):
        eta = ex1.rules[1].lhs
        # x occurs where #M() forbids it
        assert match_term(ex1_checked.gamma, eta, t("Lam([x]Ap(x, x))")) is None
        # and matches when it does not
        val = match_term(ex1_checked.gamma, eta, t("Lam([x]Ap(Lam([y]y), x))"))
        assert val is not None
        assert alpha_equal(val.meta_bind["#M"].body, t("Lam([y]y)"))

    def test_env_lookup(self, ex2, ex2_checked):
        lookup = ex2.rules[2].lhs
        subject = t("Eval(a, {a : One(), b : Two()})")
        val = match_term(ex2_checked.gamma, lookup, subject)
        assert val is not None
        assert val.var_bind == {"x": "a"}
        assert val.meta_bind["#V"].body == t("One()")
        assert val.assoc_bind["#env"].entries == ((Ident("b"), t("Two()")),)

    def test_head_mismatch(self, ex1, ex1_checked):
        beta = ex1.rules[0].lhs
        assert match_term(ex1_checked.gamma, beta, t("Lam([x]x)")) is None

    def test_bound_variable_occurrence_matches_same_binder(self, ex1, ex1_checked):
        eta = ex1.rules[1].lhs  # Lam([x]Ap(#M(), x))
        assert match_term(ex1_checked.gamma, eta, t("Lam([u]Ap(Lam([v]v), u))")) is not None
        # second argument must be exactly the binder
        assert match_term(ex1_checked.gamma, eta, t("Lam([u]Ap(Lam([v]v), w))")) is None

    def test_free_pattern_variable_must_not_capture(self, ex2, ex2_checked):
        lookup = ex2.rules[2].lhs  # Eval(x, {#env; x : #V})
        # the subject variable is bound inside the fragment: no match
        subject = t("Eval(Lam([a]a), {b : One()})")
        assert match_term(ex2_checked.gamma, lookup, subject) is None

    def test_nonlinear_meta_requires_equal_fragments(self, ex1, ex1_checked):
        gamma = ex1_checked.gamma
        pattern = t("Ap(#M(), #M())")
        assert match_term(gamma, pattern, t("Ap(Lam([x]x), Lam([y]y))")) is not None
        assert match_term(gamma, pattern, t("Ap(Lam([x]x), Ap(x, x))")) is None

    def test_match_replay_reproduces_subject(self, ex1, ex2, ex1_checked, ex2_checked):
        cases = [
            (ex1_checked.gamma, ex1.rules[0].lhs, t("Ap(Lam([x]x), Lam([y]y))")),
            (ex1_checked.gamma, ex1.rules[1].lhs, t("Lam([x]Ap(Lam([y]y), x))")),
            (ex2_checked.gamma, ex2.rules[2].lhs, t("Eval(a, {a : One(), b : Two()})")),
            (ex2_checked.gamma, ex2.rules[3].lhs, t("Apply(Lam([x]x), Lam([y]y), {c : One()})")),
        ]
        for gamma, pattern, subject in cases:
            val = match_term(gamma, pattern, subject)
            assert val is not None
            assert alpha_equal_up_to_entry_order(replay(pattern, val, subject), subject)


class TestMatchAssoc:
    def test_resolved_key(self):
        pattern = parse_term("E({#env; x : #V})").args[0].entries
        partial = Valuation(var_bind={Ident("x"): Ident("a")})
        out = match_assoc(pattern, [(Ident("a"), t("One()"))], partial)
        assert out is not None
        assert out.meta_bind["#V"].body == t("One()")
        assert out.assoc_bind["#env"].entries == ()

    def test_not_key_present_fails(self):
        pattern = parse_term("E({~x:})").args[0].entries
        partial = Valuation(var_bind={Ident("x"): Ident("a")})
        assert match_assoc(pattern, [(Ident("a"), t("One()"))], partial) is None

    def test_not_key_absent_succeeds(self):
        pattern = parse_term("E({~x:})").args[0].entries
        partial = Valuation(var_bind={Ident("x"): Ident("a")})
        assert match_assoc(pattern, [], partial) is not None
        # without a catch-all any leftover entry blocks the match
        assert match_assoc(pattern, [(Ident("b"), t("One()"))], partial) is None

    def test_empty_catchall(self):
        pattern = parse_term("E({#env})").args[0].entries
        out = match_assoc(pattern, [], Valuation())
        assert out is not None
        assert out.assoc_bind["#env"].entries == ()

    def test_no_catchall_requires_exact(self):
        pattern = parse_term("E({x : #V})").args[0].entries
        partial = Valuation(var_bind={Ident("x"): Ident("a")})
        assert match_assoc(pattern, [(Ident("a"), t("One()")), (Ident("b"), t("Two()"))],
                           partial) is None

    def test_remainder_in_subject_order(self):
        pattern = parse_term("E({#env; x : #V})").args[0].entries
        partial = Valuation(var_bind={Ident("x"): Ident("b")})
        subject = [(Ident("a"), t("One()")), (Ident("b"), t("Two()")), (Ident("c"), t("Three()"))]
        out = match_assoc(pattern, subject, partial)
        assert out is not None
        assert [k for k, _ in out.assoc_bind["#env"].entries] == ["a", "c"]

    def test_concrete_key_fallback(self):
        pattern = parse_term("E({a : #V})").args[0].entries
        out = match_assoc(pattern, [(Ident("a"), t("One()"))], Valuation())
        assert out is not None
        assert out.meta_bind["#V"].body == t("One()")


class TestSubstitute:
    def test_simple(self):
        assert substitute(t("x"), {Ident("x"): t("Lam([y]y)")}) == t("Lam([y]y)")

    def test_capture_avoided(self):
        out = substitute(t("Lam([y]x)"), {Ident("x"): t("y")})
        assert out == t("Lam([y1]y)")
        assert alpha_equal(out, t("Lam([z]y)"))

    def test_duplicate_occurrences(self):
        out = substitute(t("Ap(x, x)"), {Ident("x"): t("One()")})
        assert out == t("Ap(One(), One())")

    def test_shadowed_binder_blocks(self):
        out = substitute(t("Lam([x]x)"), {Ident("x"): t("One()")})
        assert out == t("Lam([x]x)")

    def test_key_substitution(self):
        out = substitute(t("F({x : x})"), {Ident("x"): t("w")})
        assert out == t("F({w : w})")

    def test_key_cannot_become_construction(self):
        with pytest.raises(EngineError):
            substitute(t("F({x : One()})"), {Ident("x"): t("One()")})

    def test_capture_freedom_property(self):
        body = t("Lam([y]Ap(x, y))")
        repl = t("Ap(y, z)")
        out = substitute(body, {Ident("x"): repl})
        assert free_vars(out) <= (free_vars(body) - {"x"}) | free_vars(repl)


class TestContract:
    def test_beta_identity(self):
        val = Valuation(meta_bind={
            Ident("#M"): Abstraction((Ident("p"),), t("p")),
            Ident("#N"): Abstraction((), t("Lam([y]y)")),
        })
        assert contract(t("#M(#N)"), val) == t("Lam([y]y)")

    def test_apply_rule_contraction(self, ex2):
        rhs = ex2.rules[3].rhs  # Eval(#B(z), {#env, z : #V})
        val = Valuation(
            meta_bind={
                Ident("#B"): Abstraction((Ident("p"),), t("p")),
                Ident("#V"): Abstraction((), t("Lam([y]y)")),
            },
            assoc_bind={Ident("#env"): AssocBinding((), ())},
        )
        out = contract(rhs, val)
        assert out == t("Eval(z, {z : Lam([y]y)})")

    def test_nullary_meta(self):
        val = Valuation(meta_bind={Ident("#M"): Abstraction((), t("One()"))})
        assert contract(t("#M()"), val) == t("One()")

    def test_fresh_variable_avoids_collisions(self, ex2):
        rhs = ex2.rules[3].rhs
        val = Valuation(
            meta_bind={
                Ident("#B"): Abstraction((Ident("p"),), t("p")),
                Ident("#V"): Abstraction((), t("z")),
            },
            assoc_bind={Ident("#env"): AssocBinding((), ((Ident("z1"), t("One()")),))},
        )
        out = contract(rhs, val, avoid={Ident("z")})
        # the rhs-fresh z collides with the avoid set, the valuation image,
        # and a spliced key; z2 is the first free name
        assert out == t("Eval(z2, {z1 : One(), z2 : z})")

    def test_consistent_fresh_choice_across_occurrences(self, ex2):
        rhs = ex2.rules[3].rhs
        val = Valuation(
            meta_bind={
                Ident("#B"): Abstraction((Ident("p"),), t("Ap(p, p)")),
                Ident("#V"): Abstraction((), t("One()")),
            },
            assoc_bind={Ident("#env"): AssocBinding((), ())},
        )
        out = contract(rhs, val)
        assert out == t("Eval(Ap(z, z), {z : One()})")

    def test_catchall_splice_and_override(self):
        rhs = parse_term("E({#env, z : #V})")
        val = Valuation(
            meta_bind={Ident("#V"): Abstraction((), t("New()"))},
            assoc_bind={
                Ident("#env"): AssocBinding(
                    (), ((Ident("a"), t("One()")), (Ident("b"), t("Two()")))
                )
            },
        )
        out = contract(rhs, val, avoid=set())
        assert out == t("E({a : One(), b : Two(), z : New()})")

    def test_missing_binding_raises(self):
        with pytest.raises(EngineError):
            contract(t("#M(#N)"), Valuation())

    def test_rhs_binders_freshened_against_images(self):
        val = Valuation(meta_bind={Ident("#M"): Abstraction((Ident("p"),), t("Ap(p, x)"))})
        out = contract(t("Lam([x]#M(x))"), val)
        # the binder x would capture the image's free x; it is renamed
        assert alpha_equal(out, t("Lam([w]Ap(w, x))"))
        assert out == t("Lam([x1]Ap(x1, x))")


class TestRewriteStep:
    def test_beta_at_root(self, ex1_checked, ex1_rules):
        hit = rewrite_step(ex1_checked.gamma, ex1_rules, t("Ap(Lam([x]x), Lam([y]y))"))
        assert hit is not None
        term, step = hit
        assert term == t("Lam([y]y)")
        assert step.position == () and step.rule_index == 0

    def test_eta_blocked_on_occurrence(self, ex1_checked, ex1_rules):
        assert rewrite_step(ex1_checked.gamma, ex1_rules, t("Lam([y]y)")) is None

    def test_data_head_has_no_redex(self, ex1_checked, ex1_rules):
        assert rewrite_step(ex1_checked.gamma, ex1_rules, t("One()")) is None

    def test_leftmost_outermost_order(self, ex1_checked, ex1_rules):
        # the root redex fires before the inner one
        subject = t("Ap(Lam([x]x), Ap(Lam([y]y), Lam([z]z)))")
        term, step = rewrite_step(ex1_checked.gamma, ex1_rules, subject)
        assert step.position == ()
        assert term == t("Ap(Lam([y]y), Lam([z]z))")

    def test_descends_into_assoc_values(self, ex2_checked, ex2_rules):
        subject = t("Eval(a, {b : Eval(Lam([x]x), {})})")
        hit = rewrite_step(ex2_checked.gamma, ex2_rules, subject)
        assert hit is not None
        term, step = hit
        assert step.position == (1, 0)
        assert alpha_equal(term, t("Eval(a, {b : Lam([x]x)})"))


class TestNormalize:
    def test_double_beta(self, ex1_checked, ex1_rules):
        res = normalize(ex1_checked.gamma, ex1_rules, t("Ap(Lam([x]Ap(x,x)), Lam([y]y))"), 10)
        assert res.status is NormalStatus.NORMAL_FORM
        assert len(res.steps) == 2
        assert res.term == t("Lam([y]y)")

    def test_cbv_evaluation(self, ex2_checked, ex2_rules):
        res = normalize(ex2_checked.gamma, ex2_rules,
                        t("Eval(Ap(Lam([x]x), Lam([y]y)), {})"), 50)
        assert res.status is NormalStatus.NORMAL_FORM
        assert alpha_equal(res.term, t("Lam([y]y)"))

    def test_rule_free_data_term(self, ex2_checked, ex2_rules):
        res = normalize(ex2_checked.gamma, ex2_rules, t("Lam([q]q)"), 1)
        assert res.status is NormalStatus.NORMAL_FORM
        assert res.steps == []
        assert res.term == t("Lam([q]q)")

    def test_fuel_exhaustion(self, ex1_checked, ex1_rules):
        omega = t("Ap(Lam([x]Ap(x,x)), Lam([x]Ap(x,x)))")
        res = normalize(ex1_checked.gamma, ex1_rules, omega, 5)
        assert res.status is NormalStatus.FUEL_EXHAUSTED
        assert len(res.steps) == 5

    def test_determinism(self, ex2_checked, ex2_rules):
        subject = t("Eval(Ap(Ap(Lam([x]x), Lam([y]y)), Lam([z]z)), {})")
        a = normalize(ex2_checked.gamma, ex2_rules, subject, 100)
        b = normalize(ex2_checked.gamma, ex2_rules, subject, 100)
        assert alpha_equal(a.term, b.term)
        assert len(a.steps) == len(b.steps)
        assert [s.position for s in a.steps] == [s.position for s in b.steps]

    def test_association_order_irrelevance(self, ex2_checked, ex2_rules):
        a = t("Eval(k, {k : Lam([x]x), b : One(), c : Two()})")
        b = t("Eval(k, {c : Two(), k : Lam([x]x), b : One()})")
        ra = normalize(ex2_checked.gamma, ex2_rules, a, 10)
        rb = normalize(ex2_checked.gamma, ex2_rules, b, 10)
        assert alpha_equal(ra.term, rb.term)  # the lookup result drops the env

    def test_blocked_scheme_left_in_place(self, ex2_checked, ex2_rules):
        res = normalize(ex2_checked.gamma, ex2_rules,
                        t("Ap(Eval(a, {}), Eval(Lam([x]x), {}))"), 10)
        assert res.status is NormalStatus.NORMAL_FORM
        assert alpha_equal(res.term, t("Ap(Eval(a, {}), Lam([x]x))"))


class TestPrepareRules:
    def test_multiple_catchalls_rejected(self):
        script = parse_script(
            "L data One(); L variable;"
            "L scheme F({L:L});"
            "L rule F({#e1, #e2}) -> One();"
        )
        result = check_script(script)
        assert result.ok  # the sorting discipline itself admits it
        with pytest.raises(EngineError, match="MultipleCatchAll"):
            prepare_rules(result.gamma, script.rules, result.rule_envs)

    def test_contraction_side_catchalls_fine(self):
        script = parse_script(
            "L data One(); L variable;"
            "L scheme F({L:L}, {L:L});"
            "L rule F({#e1}, {#e2}) -> F({#e1, #e2}, {});"
        )
        result = check_script(script)
        assert result.ok, [e.format() for e in result.errors]
        rules = prepare_rules(result.gamma, script.rules, result.rule_envs)
        assert len(rules) == 1

    def test_trace_format(self, ex1_checked, ex1_rules):
        term, step = rewrite_step(
            ex1_checked.gamma, ex1_rules, t("Ap(Lam([x]x), Lam([y]y))")
        )
        line = format_step(1, step, ex1_rules[step.rule_index], term)
        assert line.splitlines()[0] == (
            "step 1 at [] by rule 0 (L rule Ap(Lam([x]#M(x)), #N) -> #M(#N))"
        )
        assert line.splitlines()[1] == "Lam([y]y)"
