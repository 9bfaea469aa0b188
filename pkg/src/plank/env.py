"""Global and per-rule sort environments.

The global environment records, for a whole script, the rank of every sort
constructor, the sorts that admit syntactic variables, each term
constructor's signature, and which constructors are schemes.  The rule
environment assigns a sort to every variable of a rule and a meta-form to
every meta-variable; it is inferred from the rule text in a single pass
directed by first occurrences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .terms import (
    AssocForm,
    AssocPiece,
    CatchAll,
    Construction,
    DataDecl,
    Form,
    Ident,
    MapEntry,
    MetaApp,
    NotKey,
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
    meta_vars,
    render,
)

__all__ = [
    "ConSig",
    "EnvError",
    "GlobalEnv",
    "MetaForm",
    "RuleEnv",
    "build_global_env",
    "infer_rule_env",
    "match_sort",
    "apply_sort_subst",
]


@dataclass(frozen=True)
class ConSig:
    """Declared signature of a term constructor: result sort and argument forms."""

    result: Sort
    forms: tuple[Form, ...]


@dataclass
class GlobalEnv:
    """Sort information assembled from a script's declarations.

    rank maps each sort constructor to its arity (fixed at the first
    occurrence in declaration order); hasvar holds the sort names declared
    ``variable``; con maps term constructors to signatures; fun is the set of
    scheme constructors.
    """

    rank: dict[Ident, int] = field(default_factory=dict)
    hasvar: set[Ident] = field(default_factory=set)
    con: dict[Ident, ConSig] = field(default_factory=dict)
    fun: set[Ident] = field(default_factory=set)

    def sorts_with_data(self) -> set[Ident]:
        """Names of sorts that have at least one data constructor."""
        out: set[Ident] = set()
        for name, sig in self.con.items():
            if name not in self.fun and isinstance(sig.result, SortCons):
                out.add(sig.result.name)
        return out


@dataclass(frozen=True)
class MetaForm:
    """A meta-variable's signature: argument sorts and a result.

    The result is a plain sort for ordinary meta-variables or an AssocForm
    for catch-all meta-variables that stand for a whole association list.
    """

    arg_sorts: tuple[Sort, ...]
    result: Sort | AssocForm

    def __str__(self) -> str:
        args = ", ".join(render(s) for s in self.arg_sorts)
        return f"({args}) => {render(self.result)}"


@dataclass
class RuleEnv:
    """Per-rule environment: variable sorts and meta-variable meta-forms."""

    var: dict[Ident, Sort] = field(default_factory=dict)
    meta: dict[Ident, MetaForm] = field(default_factory=dict)


@dataclass(frozen=True)
class EnvError:
    """Environment construction or inference diagnostic."""

    code: str  # DuplicateConstructor, NonVariableSortParameter, MetaFormConflict, ...
    span: Span | None
    message: str

    def format(self, default_file: str = "<input>") -> str:
        where = str(self.span) if self.span else f"{default_file}:1:1"
        return f"{where}: error[{self.code}]: {self.message}"


# ---------------------------------------------------------------------------
# Sort instantiation


def match_sort(declared: Sort, expected: Sort, subst: dict[Ident, Sort] | None = None
               ) -> dict[Ident, Sort] | None:
    """Match a declared sort against an expected sort.

    Sort variables on the declared side are assignable parameters; everything
    in the expected sort is rigid.  Returns the assignment or None.
    """
    out = dict(subst) if subst else {}

    def go(d: Sort, e: Sort) -> bool:
        if isinstance(d, SortVar):
            seen = out.get(d.name)
            if seen is None:
                out[d.name] = e
                return True
            return strip(seen) == strip(e)
        if isinstance(e, SortCons) and d.name == e.name and len(d.args) == len(e.args):
            return all(go(x, y) for x, y in zip(d.args, e.args))
        return False

    return out if go(declared, expected) else None


def strip(s: Sort) -> Sort:
    """Drop source spans so sorts compare structurally."""
    if isinstance(s, SortVar):
        return SortVar(s.name)
    return SortCons(s.name, tuple(strip(a) for a in s.args))


def apply_sort_subst(s: Sort, subst: dict[Ident, Sort]) -> Sort:
    if isinstance(s, SortVar):
        return subst.get(s.name, s)
    return SortCons(s.name, tuple(apply_sort_subst(a, subst) for a in s.args), span=s.span)


def apply_form_subst(f: Form, subst: dict[Ident, Sort]) -> Form:
    if isinstance(f, AssocForm):
        return AssocForm(
            apply_sort_subst(f.key_sort, subst), apply_sort_subst(f.value_sort, subst)
        )
    return ScopeForm(
        tuple(apply_sort_subst(b, subst) for b in f.binder_sorts),
        apply_sort_subst(f.body_sort, subst),
    )


# ---------------------------------------------------------------------------
# Global environment assembly


def _sorts_of_decl(d) -> list[Sort]:
    if isinstance(d, (DataDecl, SchemeDecl)):
        sorts = [d.sort]
        for f in d.forms:
            if isinstance(f, ScopeForm):
                sorts.extend(f.binder_sorts)
                sorts.append(f.body_sort)
            else:
                sorts.extend([f.key_sort, f.value_sort])
        return sorts
    if isinstance(d, (VariableDecl, RuleDecl)):
        return [d.sort]
    return []


def _record_ranks(rank: dict[Ident, int], s: Sort) -> None:
    # First occurrence fixes the rank; inconsistent later uses are reported
    # by the sort checker, not here.
    if isinstance(s, SortCons):
        rank.setdefault(s.name, len(s.args))
        for a in s.args:
            _record_ranks(rank, a)


def build_global_env(script: Script) -> tuple[GlobalEnv, list[EnvError]]:
    """Assemble the global environment from a script.

    Identical re-declarations are idempotent; conflicting ones produce
    DuplicateConstructor.  Data declarations whose result sort parameters are
    not distinct sort variables produce NonVariableSortParameter.  Rank
    consistency of sort uses is left to the sort checker.
    """
    gamma = GlobalEnv()
    errors: list[EnvError] = []

    for d in script.declarations:
        for s in _sorts_of_decl(d):
            _record_ranks(gamma.rank, s)

        if isinstance(d, (DataDecl, SchemeDecl)):
            sig = ConSig(strip(d.sort), tuple(apply_form_subst(f, {}) for f in d.forms))
            if isinstance(d, DataDecl):
                if not isinstance(d.sort, SortCons):
                    errors.append(EnvError(
                        "NonVariableSortParameter", d.span,
                        f"data constructor {d.name} needs a named result sort",
                    ))
                else:
                    params = [a for a in d.sort.args]
                    if not all(isinstance(a, SortVar) for a in params) or len(
                        {a.name for a in params if isinstance(a, SortVar)}
                    ) != len(params):
                        errors.append(EnvError(
                            "NonVariableSortParameter", d.span,
                            f"result sort parameters of data constructor {d.name} "
                            "must be distinct sort variables",
                        ))
            prev = gamma.con.get(d.name)
            if prev is None:
                gamma.con[d.name] = sig
            elif prev != sig:
                errors.append(EnvError(
                    "DuplicateConstructor", d.span,
                    f"constructor {d.name} already declared with a different signature",
                ))
            if isinstance(d, SchemeDecl):
                gamma.fun.add(d.name)
        elif isinstance(d, VariableDecl):
            if isinstance(d.sort, SortCons):
                gamma.hasvar.add(d.sort.name)
            # a sort-variable subject is rejected by the checker (SD-Var)

    return gamma, errors


# ---------------------------------------------------------------------------
# Rule environment inference


def infer_rule_env(gamma: GlobalEnv, rule: RuleDecl) -> tuple[RuleEnv, list[EnvError]]:
    """Infer the rule environment by one traversal of each side.

    Binder variables take their sorts from the enclosing constructor's
    declared form; free pattern variables take the sort demanded by their
    position; a meta-variable's meta-form is read off its first left-hand
    occurrence.  Later occurrences (either side) must demand a consistent
    meta-form or MetaFormConflict results; meta-variables used only on the
    right-hand side yield UnboundMetaOnRhs.
    """
    delta = RuleEnv()
    errors: list[EnvError] = []
    lhs_metas = meta_vars(rule.lhs)

    def note_var(name: Ident, sort: Sort, scope: dict[Ident, Sort]) -> None:
        if name in scope:
            return
        delta.var.setdefault(name, strip(sort))

    def demand_meta(m: MetaApp | CatchAll, form: MetaForm | None, in_lhs: bool,
                    result: Sort | AssocForm) -> None:
        # On the lhs the full meta-form is forced; on the rhs only the arity
        # and result are demanded (argument sorts flow from the meta-form).
        seen = delta.meta.get(m.meta)
        if seen is None:
            if in_lhs and form is not None:
                delta.meta[m.meta] = form
            return
        if in_lhs:
            # An occurrence whose argument sorts are unreadable is left to the
            # checker; only readable occurrences feed conflict detection.
            if form is not None and form != seen:
                errors.append(EnvError(
                    "MetaFormConflict", m.span,
                    f"meta-variable {m.meta} used as {form} but earlier as {seen}",
                ))
            return
        if len(m.args) != len(seen.arg_sorts) or _result_key(result) != _result_key(seen.result):
            errors.append(EnvError(
                "MetaFormConflict", m.span,
                f"meta-variable {m.meta} used with {len(m.args)} argument(s) at "
                f"{render(result)} but its meta-form is {seen}",
            ))

    def _result_key(r: Sort | AssocForm):
        if isinstance(r, AssocForm):
            return ("assoc", strip(r.key_sort), strip(r.value_sort))
        return ("sort", strip(r))

    def walk_term(t: Term, expected: Sort | None, scope: dict[Ident, Sort], in_lhs: bool) -> None:
        if expected is None:
            return
        if isinstance(t, Var):
            note_var(t.name, expected, scope)
            return
        if isinstance(t, MetaApp):
            if in_lhs:
                arg_sorts: list[Sort] = []
                readable = True
                for a in t.args:
                    if isinstance(a, Var):
                        s = scope.get(a.name) or delta.var.get(a.name)
                        if s is not None:
                            arg_sorts.append(strip(s))
                            continue
                    readable = False
                    break
                form = MetaForm(tuple(arg_sorts), strip(expected)) if readable else None
                demand_meta(t, form, True, strip(expected))
            else:
                demand_meta(t, None, False, strip(expected))
                seen = delta.meta.get(t.meta)
                if seen is not None and len(seen.arg_sorts) == len(t.args):
                    for a, s in zip(t.args, seen.arg_sorts):
                        walk_term(a, s, scope, in_lhs)
            return
        sig = gamma.con.get(t.head)
        if sig is None:
            return
        subst = match_sort(sig.result, strip(expected))
        if subst is None:
            return
        forms = [apply_form_subst(f, subst) for f in sig.forms]
        for piece, form in zip(t.args, forms):
            if isinstance(piece, ScopePiece) and isinstance(form, ScopeForm):
                inner = dict(scope)
                for b, s in zip(piece.binders, form.binder_sorts):
                    inner[b] = strip(s)
                    delta.var.setdefault(b, strip(s))
                walk_term(piece.body, form.body_sort, inner, in_lhs)
            elif isinstance(piece, AssocPiece) and isinstance(form, AssocForm):
                for e in piece.entries:
                    walk_assoc(e, form, scope, in_lhs)

    def walk_assoc(e, form: AssocForm, scope: dict[Ident, Sort], in_lhs: bool) -> None:
        if isinstance(e, MapEntry):
            note_var(e.key, form.key_sort, scope)
            walk_term(e.value, form.value_sort, scope, in_lhs)
        elif isinstance(e, NotKey):
            note_var(e.key, form.key_sort, scope)
        else:
            result = AssocForm(strip(form.key_sort), strip(form.value_sort))
            if in_lhs:
                arg_sorts: list[Sort] = []
                readable = True
                for a in e.args:
                    if isinstance(a, Var):
                        s = scope.get(a.name) or delta.var.get(a.name)
                        if s is not None:
                            arg_sorts.append(strip(s))
                            continue
                    readable = False
                    break
                mf = MetaForm(tuple(arg_sorts), result) if readable else None
                demand_meta(e, mf, True, result)
            else:
                demand_meta(e, None, False, result)
                seen = delta.meta.get(e.meta)
                if seen is not None and len(seen.arg_sorts) == len(e.args):
                    for a, s in zip(e.args, seen.arg_sorts):
                        walk_term(a, s, scope, False)

    walk_term(rule.lhs, strip(rule.sort), {}, True)
    walk_term(rule.rhs, strip(rule.sort), {}, False)

    for m in sorted(meta_vars(rule.rhs)):
        if m not in lhs_metas:
            errors.append(EnvError(
                "UnboundMetaOnRhs", rule.span,
                f"meta-variable {m} occurs in the contraction but not in the pattern",
            ))

    return delta, errors
