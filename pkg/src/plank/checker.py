"""The sorting discipline for scripts, declarations, and rule terms.

Checking a rule term happens in one of four contexts:

* ``PAT``    -- the outermost pattern position (left side of a rule);
* ``IN_PAT`` -- inside a piece of the pattern;
* ``CON``    -- a contraction position (right side of a rule);
* ``SUB``    -- a substitution argument, i.e. an immediate child of a
  meta-application in a contraction.

Every diagnostic carries the tag of the violated rule or side condition
(``SMP-Meta``, ``SA-Map``, ...) so callers can pin the exact failure.
Diagnostics serialize as ``FILE:LINE:COL: error[TAG]: MESSAGE``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .env import (
    ConSig,
    EnvError,
    GlobalEnv,
    MetaForm,
    RuleEnv,
    apply_form_subst,
    build_global_env,
    infer_rule_env,
    match_sort,
    strip,
)
from .terms import (
    AssocForm,
    AssocPiece,
    Association,
    CatchAll,
    Construction,
    DataDecl,
    Declaration,
    Form,
    Ident,
    MapEntry,
    MetaApp,
    NotKey,
    Piece,
    RuleDecl,
    SchemeDecl,
    ScopeForm,
    ScopePiece,
    Script,
    Sort,
    SortCons,
    SortVar,
    Span,
    Term,
    Var,
    VariableDecl,
    all_idents,
    fresh_var,
    non_assoc_vars,
    render,
    replace_free_var,
)

__all__ = [
    "CheckError",
    "CheckState",
    "ScriptCheck",
    "TermContext",
    "check_association",
    "check_declaration",
    "check_ground_subject",
    "check_piece",
    "check_script",
    "check_sort",
    "check_term",
]


class TermContext(Enum):
    PAT = "Pat"
    IN_PAT = "InPat"
    CON = "Con"
    SUB = "Sub"


@dataclass(frozen=True)
class CheckError:
    """A sorting diagnostic named after the violated rule or side condition."""

    rule: str
    span: Span | None
    message: str

    def format(self, default_file: str = "<input>") -> str:
        where = str(self.span) if self.span else f"{default_file}:1:1"
        return f"{where}: error[{self.rule}]: {self.message}"


@dataclass(frozen=True)
class CheckState:
    """Context threaded through term checking.

    ``v`` is the set of rule-side variables usable as association keys;
    ``bound`` is the chain of binders in scope (duplicate-free: shadowing
    binders are renamed on entry).
    """

    gamma: GlobalEnv
    delta: RuleEnv
    v: frozenset[Ident]
    tc: TermContext
    bound: tuple[Ident, ...] = ()


@dataclass
class ScriptCheck:
    """Result of checking a whole script."""

    gamma: GlobalEnv
    rule_envs: list[RuleEnv]
    errors: list[CheckError]

    @property
    def ok(self) -> bool:
        return not self.errors


def _err(rule: str, node, message: str) -> CheckError:
    return CheckError(rule, getattr(node, "span", None), message)


# ---------------------------------------------------------------------------
# Sorts


def check_sort(gamma: GlobalEnv, s: Sort) -> list[CheckError]:
    """Sorts are well-formed when every constructor is used at its rank."""
    if isinstance(s, SortVar):
        return []
    errors: list[CheckError] = []
    rank = gamma.rank.get(s.name)
    if rank is None or rank != len(s.args):
        have = "unknown" if rank is None else str(rank)
        errors.append(_err(
            "SS-Cons", s,
            f"sort {s.name} applied to {len(s.args)} argument(s) but has rank {have}",
        ))
    for a in s.args:
        errors.extend(check_sort(gamma, a))
    return errors


# ---------------------------------------------------------------------------
# Terms


def _is_sort(x) -> bool:
    return isinstance(x, (SortCons, SortVar))


def _instantiated_forms(sig: ConSig, expected: Sort) -> tuple[Form, ...] | None:
    subst = match_sort(sig.result, strip(expected))
    if subst is None:
        return None
    return tuple(apply_form_subst(f, subst) for f in sig.forms)


def _check_construction(st: CheckState, t: Construction, expected: Sort, tag: str,
                        piece_tc: TermContext) -> list[CheckError]:
    sig = st.gamma.con.get(t.head)
    if sig is None:
        return [_err(tag, t, f"constructor {t.head} is not declared")]
    forms = _instantiated_forms(sig, expected)
    if forms is None:
        return [_err(
            tag, t,
            f"construction {t.head} has sort {render(sig.result)}, which does not "
            f"match the expected sort {render(expected)}",
        )]
    if len(t.args) != len(forms):
        return [_err(
            tag, t,
            f"constructor {t.head} expects {len(forms)} argument(s), got {len(t.args)}",
        )]
    errors: list[CheckError] = []
    inner = replace(st, tc=piece_tc)
    for p, f in zip(t.args, forms):
        errors.extend(check_piece(inner, p, f))
    return errors


def check_term(st: CheckState, t: Term, expected: Sort) -> list[CheckError]:
    """Check a term at the expected sort in the state's term context."""
    tc = st.tc

    if tc is TermContext.PAT:
        # SMP-Fun: the pattern top must be a scheme construction.
        if not isinstance(t, Construction):
            return [_err("SMP-Fun", t, "a rule pattern must be a scheme construction")]
        if t.head not in st.gamma.fun:
            return [_err("SMP-Fun", t, f"pattern head {t.head} is not a scheme")]
        return _check_construction(st, t, expected, "SMP-Fun", TermContext.IN_PAT)

    if tc is TermContext.IN_PAT:
        if isinstance(t, Construction):
            # SMP-Data: inside a pattern only data constructors are allowed.
            # Exception: at a sort with no data constructors at all (a pure
            # scheme signature) a scheme head is tolerated, since no data
            # pattern could exist there.
            if t.head in st.gamma.fun:
                sort_name = expected.name if isinstance(expected, SortCons) else None
                if sort_name in st.gamma.sorts_with_data():
                    return [_err(
                        "SMP-Data", t,
                        f"scheme {t.head} cannot appear inside a pattern at sort "
                        f"{render(expected)}",
                    )]
            return _check_construction(st, t, expected, "SMP-Data", TermContext.IN_PAT)
        if isinstance(t, MetaApp):
            return _check_pattern_meta(st, t, expected, "SMP-Meta", require_distinct=True)
        return _check_variable(st, t, expected, "SMP-Var", need_hasvar=True)

    if tc is TermContext.CON:
        if isinstance(t, Construction):
            return _check_construction(st, t, expected, "SMC-Cons", TermContext.CON)
        if isinstance(t, MetaApp):
            mf = st.delta.meta.get(t.meta)
            if mf is None:
                return [_err("SMC-Meta", t, f"meta-variable {t.meta} has no meta-form")]
            if not _is_sort(mf.result):
                return [_err(
                    "SMC-Meta", t,
                    f"catch-all meta-variable {t.meta} cannot be used as a term",
                )]
            if strip(mf.result) != strip(expected):
                return [_err(
                    "SMC-Meta", t,
                    f"meta-variable {t.meta} produces {render(mf.result)}, expected "
                    f"{render(expected)}",
                )]
            if len(t.args) != len(mf.arg_sorts):
                return [_err(
                    "SMC-Meta", t,
                    f"meta-variable {t.meta} takes {len(mf.arg_sorts)} argument(s), "
                    f"got {len(t.args)}",
                )]
            errors: list[CheckError] = []
            sub = replace(st, tc=TermContext.SUB)
            for a, s in zip(t.args, mf.arg_sorts):
                errors.extend(check_term(sub, a, s))
            return errors
        return _check_variable(st, t, expected, "SMC-Var", need_hasvar=True)

    # SUB: substitution arguments of a contraction meta-application.
    if isinstance(t, Var):
        # SMS-Var places no syntactic-variable requirement on the sort.
        return _check_variable(st, t, expected, "SMS-Var", need_hasvar=False)
    tag = "SMS-Cons" if isinstance(t, Construction) else "SMS-Meta"
    if not isinstance(expected, SortCons):
        return [_err(
            tag, t,
            f"cannot substitute a non-variable at sort {render(expected)}",
        )]
    if expected.name in st.gamma.hasvar:
        return [_err(
            tag, t,
            f"cannot substitute a non-variable at sort {render(expected)}, which "
            "admits syntactic variables",
        )]
    return check_term(replace(st, tc=TermContext.CON), t, expected)


def _check_pattern_meta(st: CheckState, t: MetaApp, expected: Sort, tag: str,
                        require_distinct: bool) -> list[CheckError]:
    """Pattern meta-application: arguments are distinct bound variables."""
    mf = st.delta.meta.get(t.meta)
    if mf is None:
        return [_err(tag, t, f"meta-variable {t.meta} has no meta-form")]
    if not _is_sort(mf.result):
        return [_err(tag, t, f"catch-all meta-variable {t.meta} cannot be used as a term")]
    if strip(mf.result) != strip(expected):
        return [_err(
            tag, t,
            f"meta-variable {t.meta} produces {render(mf.result)}, expected "
            f"{render(expected)}",
        )]
    return _check_meta_binder_args(st, t.meta, t.args, mf, t, tag, require_distinct)


def _check_meta_binder_args(st: CheckState, meta: Ident, args, mf: MetaForm, node,
                            tag: str, require_distinct: bool) -> list[CheckError]:
    if len(args) != len(mf.arg_sorts):
        return [_err(
            tag, node,
            f"meta-variable {meta} takes {len(mf.arg_sorts)} argument(s), got {len(args)}",
        )]
    seen: set[Ident] = set()
    for a, s in zip(args, mf.arg_sorts):
        if not isinstance(a, Var):
            return [_err(
                tag, node,
                f"pattern arguments of {meta} must be bound variables, got {render(a)}",
            )]
        if a.name not in st.bound:
            return [_err(tag, a, f"{a.name} is not bound in the enclosing pattern")]
        have = st.delta.var.get(a.name)
        if have is None or strip(have) != strip(s):
            got = "no sort" if have is None else render(have)
            return [_err(
                tag, a,
                f"argument {a.name} of {meta} has {got}, expected {render(s)}",
            )]
        if require_distinct and a.name in seen:
            return [_err(tag, a, f"arguments of {meta} must be pairwise distinct variables")]
        seen.add(a.name)
    return []


def _check_variable(st: CheckState, t: Term, expected: Sort, tag: str,
                    need_hasvar: bool) -> list[CheckError]:
    if not isinstance(t, Var):
        return [_err(tag, t, f"expected a variable, got {render(t)}")]
    have = st.delta.var.get(t.name)
    if have is None:
        return [_err(tag, t, f"variable {t.name} has no sort in this rule")]
    if strip(have) != strip(expected):
        return [_err(
            tag, t,
            f"variable {t.name} has sort {render(have)}, expected {render(expected)}",
        )]
    if need_hasvar:
        # A bound variable of the rule itself is tolerated without a
        # 'variable' declaration at a pure scheme sort (one with no data
        # constructors), the same proviso that admits scheme heads in
        # patterns there.  Free occurrences always need the declaration.
        waived = (
            t.name in st.bound
            and isinstance(expected, SortCons)
            and expected.name not in st.gamma.sorts_with_data()
        )
        if not waived and not (
            isinstance(expected, SortCons) and expected.name in st.gamma.hasvar
        ):
            return [_err(
                tag, t,
                f"variable {t.name} occurs at sort {render(expected)}, which has no "
                "'variable' declaration",
            )]
    return []


# ---------------------------------------------------------------------------
# Pieces and associations


def check_piece(st: CheckState, p: Piece, f: Form) -> list[CheckError]:
    """Check a construction argument against its declared form."""
    if isinstance(p, ScopePiece):
        if not isinstance(f, ScopeForm):
            return [_err("SP-Bind", p, "scope argument where an association form is declared")]
        if len(p.binders) != len(f.binder_sorts):
            return [_err(
                "SP-Bind", p,
                f"scope binds {len(p.binders)} variable(s) but the form declares "
                f"{len(f.binder_sorts)} (BinderArityMismatch)",
            )]
        # Shadowing binders are renamed before extending the environment so
        # the bound chain stays duplicate-free.
        body = p.body
        binders: list[Ident] = []
        for w in p.binders:
            if w in st.bound or w in binders:
                avoid = set(st.bound) | set(binders) | all_idents(body) | set(st.delta.var)
                w2 = fresh_var(w, avoid)
                body = replace_free_var(body, w, w2)
                binders.append(w2)
            else:
                binders.append(w)
        var = dict(st.delta.var)
        for w, s in zip(binders, f.binder_sorts):
            var[w] = strip(s)
        inner = replace(
            st,
            delta=RuleEnv(var, st.delta.meta),
            bound=st.bound + tuple(binders),
        )
        return check_term(inner, body, f.body_sort)

    if not isinstance(f, AssocForm):
        return [_err("SP-Assoc", p, "association argument where a scope form is declared")]
    errors: list[CheckError] = []
    for e in p.entries:
        errors.extend(check_association(st, e, f.key_sort, f.value_sort))
    return errors


def check_association(st: CheckState, a: Association, key_sort: Sort,
                      val_sort: Sort) -> list[CheckError]:
    """Check one association entry at the given key and value sorts."""
    if isinstance(a, MapEntry):
        errors: list[CheckError] = []
        if a.key not in st.v and a.key not in st.bound:
            errors.append(_err(
                "SA-Map", a,
                f"association key {a.key} does not occur outside an association "
                "(KeyNotElsewhere)",
            ))
        errors.extend(check_term(st, Var(a.key, span=a.span), key_sort))
        extended = replace(st, v=st.v | non_assoc_vars(a.value))
        errors.extend(check_term(extended, a.value, val_sort))
        return errors

    if isinstance(a, NotKey):
        if st.tc is not TermContext.IN_PAT:
            return [_err(
                "SAP-Not", a,
                "absence entries are only allowed in patterns (NotKeyInContraction)",
            )]
        return check_term(st, Var(a.key, span=a.span), key_sort)

    # Catch-all meta-variable.
    mf = st.delta.meta.get(a.meta)
    tag = "SAP-All" if st.tc is TermContext.IN_PAT else "SAC-All"
    if mf is None:
        return [_err(tag, a, f"meta-variable {a.meta} has no meta-form")]
    if not isinstance(mf.result, AssocForm):
        return [_err(tag, a, f"meta-variable {a.meta} is not a catch-all")]
    if strip(mf.result.key_sort) != strip(key_sort) or strip(mf.result.value_sort) != strip(val_sort):
        return [_err(
            tag, a,
            f"catch-all {a.meta} covers {render(mf.result)}, expected "
            f"{{{render(key_sort)}:{render(val_sort)}}}",
        )]
    if st.tc is TermContext.IN_PAT:
        # Distinctness is not required of catch-all arguments.
        return _check_meta_binder_args(st, a.meta, a.args, mf, a, tag, require_distinct=False)
    if len(a.args) != len(mf.arg_sorts):
        return [_err(
            tag, a,
            f"meta-variable {a.meta} takes {len(mf.arg_sorts)} argument(s), got {len(a.args)}",
        )]
    errors = []
    sub = replace(st, tc=TermContext.SUB)
    for x, s in zip(a.args, mf.arg_sorts):
        errors.extend(check_term(sub, x, s))
    return errors


# ---------------------------------------------------------------------------
# Declarations and scripts


def _decl_sorts(d: Declaration) -> list[Sort]:
    if isinstance(d, (DataDecl, SchemeDecl)):
        sorts = [d.sort]
        for f in d.forms:
            if isinstance(f, ScopeForm):
                sorts.extend(f.binder_sorts)
                sorts.append(f.body_sort)
            else:
                sorts.extend([f.key_sort, f.value_sort])
        return sorts
    return [d.sort]


def check_declaration(gamma: GlobalEnv, d: Declaration) -> list[CheckError]:
    """Check one declaration against an assembled global environment."""
    errors: list[CheckError] = []
    for s in _decl_sorts(d):
        errors.extend(check_sort(gamma, s))

    if isinstance(d, DataDecl):
        sig = gamma.con.get(d.name)
        if sig is None or sig != ConSig(strip(d.sort), tuple(
            apply_form_subst(f, {}) for f in d.forms
        )):
            errors.append(_err(
                "SD-Data", d, f"data constructor {d.name} is not recorded with this signature"
            ))
        if d.name in gamma.fun:
            errors.append(_err(
                "SD-Data", d, f"constructor {d.name} is declared as data but is a scheme"
            ))
        return errors

    if isinstance(d, SchemeDecl):
        sig = gamma.con.get(d.name)
        if sig is None or sig != ConSig(strip(d.sort), tuple(
            apply_form_subst(f, {}) for f in d.forms
        )):
            errors.append(_err(
                "SD-Fun", d, f"scheme {d.name} is not recorded with this signature"
            ))
        elif d.name not in gamma.fun:
            errors.append(_err("SD-Fun", d, f"scheme {d.name} is not in the scheme set"))
        return errors

    if isinstance(d, VariableDecl):
        if not isinstance(d.sort, SortCons):
            errors.append(_err(
                "SD-Var", d, "a 'variable' declaration needs a named sort"
            ))
        elif d.sort.name not in gamma.hasvar:
            errors.append(_err(
                "SD-Var", d, f"sort {d.sort.name} is not recorded as having variables"
            ))
        return errors

    # Rule declaration.
    delta, env_errors = infer_rule_env(gamma, d)
    if env_errors:
        errors.extend(CheckError(e.code, e.span, e.message) for e in env_errors)
        return errors
    lhs_state = CheckState(gamma, delta, frozenset(non_assoc_vars(d.lhs)), TermContext.PAT)
    errors.extend(check_term(lhs_state, d.lhs, d.sort))
    rhs_state = CheckState(gamma, delta, frozenset(non_assoc_vars(d.rhs)), TermContext.CON)
    errors.extend(check_term(rhs_state, d.rhs, d.sort))
    return errors


def check_script(script: Script) -> ScriptCheck:
    """Build the global environment and check every declaration.

    All diagnostics are collected; the per-rule environments come back in
    declaration order regardless of success.
    """
    gamma, env_errors = build_global_env(script)
    errors = [CheckError(e.code, e.span, e.message) for e in env_errors]
    rule_envs: list[RuleEnv] = []
    for d in script.declarations:
        errors.extend(check_declaration(gamma, d))
        if isinstance(d, RuleDecl):
            rule_envs.append(infer_rule_env(gamma, d)[0])
    return ScriptCheck(gamma, rule_envs, errors)


# ---------------------------------------------------------------------------
# Ground subjects (inputs to normalization)


def subject_env(gamma: GlobalEnv, t: Term, sort: Sort) -> RuleEnv:
    """Assign sorts to the free variables of a ground subject by position."""
    delta = RuleEnv()

    def walk(x: Term, expected: Sort, scope: frozenset[Ident]) -> None:
        if isinstance(x, Var):
            if x.name not in scope:
                delta.var.setdefault(x.name, strip(expected))
            return
        if isinstance(x, MetaApp):
            return
        sig = gamma.con.get(x.head)
        if sig is None:
            return
        forms = _instantiated_forms(sig, expected)
        if forms is None:
            return
        for p, f in zip(x.args, forms):
            if isinstance(p, ScopePiece) and isinstance(f, ScopeForm):
                walk(p.body, f.body_sort, scope | set(p.binders))
            elif isinstance(p, AssocPiece) and isinstance(f, AssocForm):
                for e in p.entries:
                    if isinstance(e, MapEntry):
                        if e.key not in scope:
                            delta.var.setdefault(e.key, strip(f.key_sort))
                        walk(e.value, f.value_sort, scope)
                    elif isinstance(e, NotKey) and e.key not in scope:
                        delta.var.setdefault(e.key, strip(f.key_sort))

    # Binder sorts are supplied locally during checking; only free variables
    # need entries here, but recording binders too is harmless.
    walk(t, sort, frozenset())
    return delta


def _subject_delta_with_binders(gamma: GlobalEnv, t: Term, sort: Sort) -> RuleEnv:
    return subject_env(gamma, t, sort)


def check_ground_subject(gamma: GlobalEnv, t: Term) -> tuple[Sort | None, RuleEnv, list[CheckError]]:
    """Determine a ground term's sort and check it in contraction context.

    The sort is read off the head constructor's declaration; free variables
    receive the sorts their positions demand.
    """
    if not isinstance(t, Construction):
        return None, RuleEnv(), [_err(
            "SMC-Cons", t, "a subject term must be a declared construction"
        )]
    sig = gamma.con.get(t.head)
    if sig is None:
        return None, RuleEnv(), [_err("SMC-Cons", t, f"constructor {t.head} is not declared")]
    sort = strip(sig.result)
    if _has_sort_vars(sort):
        return None, RuleEnv(), [_err(
            "SMC-Cons", t,
            f"cannot determine a ground sort for {t.head}: its declared sort "
            f"{render(sort)} is polymorphic",
        )]
    delta = subject_env(gamma, t, sort)
    st = CheckState(gamma, delta, frozenset(non_assoc_vars(t)), TermContext.CON)
    return sort, delta, check_term(st, t, sort)


def _has_sort_vars(s: Sort) -> bool:
    if isinstance(s, SortVar):
        return True
    return any(_has_sort_vars(a) for a in s.args)
