from __future__ import annotations

import pytest

from plank import check_script, parse_script, prepare_rules

# The two corpus scripts, verbatim (unicode arrows and all).

BETA_ETA = """\
L scheme Lam([L]L);
L scheme Ap(L,L);
L rule Ap(Lam([x]#M(x)), #N) →  #M(#N);
L rule Lam([x]Ap(#M(), x)) →  #M();
"""

CBV_EVAL = """\
L data Lam([L]L);
L data Ap(L, L);
L variable;

L scheme Eval(L, {L:L});
L rule Eval(Lam([x]#B(x)), {#env})
  → Lam([x]#B(x));
L rule Eval(Ap(#F, #A), {#env})
  → Apply(Eval(#F, {#env}),
            Eval(#A, {#env}), {#env});
L rule Eval(x, {#env; x : #V}) → #V;
L scheme Apply(L, L, {L:L});
L rule Apply(Lam([x]#B(x)), #V, {#env})
  → Eval(#B(z), {#env, z : #V});
"""


@pytest.fixture(scope="session")
def ex1():
    return parse_script(BETA_ETA, file="ex1.plank")


@pytest.fixture(scope="session")
def ex2():
    return parse_script(CBV_EVAL, file="ex2.plank")


@pytest.fixture(scope="session")
def ex1_checked(ex1):
    result = check_script(ex1)
    assert result.ok, [e.format() for e in result.errors]
    return result


@pytest.fixture(scope="session")
def ex2_checked(ex2):
    result = check_script(ex2)
    assert result.ok, [e.format() for e in result.errors]
    return result


@pytest.fixture(scope="session")
def ex1_rules(ex1, ex1_checked):
    return prepare_rules(ex1_checked.gamma, ex1.rules, ex1_checked.rule_envs)


@pytest.fixture(scope="session")
def ex2_rules(ex2, ex2_checked):
    return prepare_rules(ex2_checked.gamma, ex2.rules, ex2_checked.rule_envs)
