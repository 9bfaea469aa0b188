"""Abstract syntax for plank scripts and terms, plus binding-aware helpers.

A term is either a construction ``c(P1, ..., Pn)`` whose pieces may bind
variables or carry association lists, a variable occurrence ``v``, or a
meta-application ``#m(T1, ..., Tn)``.  Identifiers fall into three lexical
categories: constructors start with an uppercase letter, variables with a
lowercase letter, and meta-variables with ``#``.

All AST values are immutable after construction and safe to share.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Union


class Category(Enum):
    """Lexical category of an identifier."""

    CONSTRUCTOR = "constructor"
    VARIABLE = "variable"
    META = "meta-variable"


_CONSTRUCTOR_RE = re.compile(r"[A-Z][A-Za-z0-9_]*\Z")
_VARIABLE_RE = re.compile(r"[a-z][A-Za-z0-9_]*\Z")
_META_RE = re.compile(r"#[A-Za-z0-9_]*\Z")


def ident_category(text: str) -> Category:
    """Classify an identifier by spelling, raising ValueError if malformed."""
    if _CONSTRUCTOR_RE.match(text):
        return Category.CONSTRUCTOR
    if _VARIABLE_RE.match(text):
        return Category.VARIABLE
    if _META_RE.match(text):
        return Category.META
    raise ValueError(f"not a valid identifier: {text!r}")


class Ident(str):
    """An identifier; equality and hashing are plain string semantics.

    The category is determined entirely by the spelling, so two idents are
    equal exactly when their category and text agree.
    """

    __slots__ = ()

    def __new__(cls, text: str) -> "Ident":
        ident_category(text)
        return super().__new__(cls, text)

    @property
    def category(self) -> Category:
        return ident_category(self)


@dataclass(frozen=True)
class Span:
    """Source location; positions are 1-based and inclusive."""

    file: str
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.file}:{self.start_line}:{self.start_col}"


# Spans never participate in equality so that structurally identical nodes
# compare equal regardless of where they were parsed.
def _span_field():
    return field(default=None, compare=False, repr=False, kw_only=True)


# ---------------------------------------------------------------------------
# Sorts and argument forms


@dataclass(frozen=True)
class SortCons:
    """An applied sort constructor ``s<S1, ..., Sn>``; ``s<>`` prints as ``s``."""

    name: Ident
    args: tuple["Sort", ...] = ()
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class SortVar:
    """A sort variable, written with a lowercase name."""

    name: Ident
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


Sort = Union[SortCons, SortVar]


@dataclass(frozen=True)
class ScopeForm:
    """Argument form ``[S1, ..., Sn]S``; a plain argument has no binder sorts."""

    binder_sorts: tuple[Sort, ...]
    body_sort: Sort
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class AssocForm:
    """Argument form ``{S:S'}`` for association-list arguments."""

    key_sort: Sort
    value_sort: Sort
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


Form = Union[ScopeForm, AssocForm]


# ---------------------------------------------------------------------------
# Terms, pieces, associations


@dataclass(frozen=True)
class Construction:
    """``c(P1, ..., Pn)``.  Arity against the declared forms is the checker's job."""

    head: Ident
    args: tuple["Piece", ...] = ()
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class Var:
    name: Ident
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class MetaApp:
    """``#m(T1, ..., Tn)``; a bare ``#m`` is the zero-argument application."""

    meta: Ident
    args: tuple["Term", ...] = ()
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


Term = Union[Construction, Var, MetaApp]


@dataclass(frozen=True)
class ScopePiece:
    """``[v1, ..., vn]T``; binders are pairwise distinct and scope over the body."""

    binders: tuple[Ident, ...]
    body: Term
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class AssocPiece:
    """``{A1, ..., An}``: an ordered association list."""

    entries: tuple["Association", ...]
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


Piece = Union[ScopePiece, AssocPiece]


@dataclass(frozen=True)
class MapEntry:
    """``v : T`` maps a variable key to a term."""

    key: Ident
    value: Term
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class NotKey:
    """``~v:`` asserts the key is absent; only meaningful in patterns."""

    key: Ident
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class CatchAll:
    """``#m(...)`` inside an association list: the remainder of the map."""

    meta: Ident
    args: tuple[Term, ...] = ()
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


Association = Union[MapEntry, NotKey, CatchAll]


# ---------------------------------------------------------------------------
# Declarations and scripts


@dataclass(frozen=True)
class DataDecl:
    sort: Sort
    name: Ident
    forms: tuple[Form, ...]
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class SchemeDecl:
    sort: Sort
    name: Ident
    forms: tuple[Form, ...]
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class VariableDecl:
    sort: Sort
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class RuleDecl:
    sort: Sort
    lhs: Term
    rhs: Term
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)


Declaration = Union[DataDecl, SchemeDecl, VariableDecl, RuleDecl]


@dataclass(frozen=True)
class Script:
    declarations: tuple[Declaration, ...] = ()
    span: Span | None = _span_field()

    def __str__(self) -> str:
        return render(self)

    @property
    def rules(self) -> tuple[RuleDecl, ...]:
        return tuple(d for d in self.declarations if isinstance(d, RuleDecl))


Node = Union[Script, Declaration, Term, Piece, Association, Sort, Form]


# ---------------------------------------------------------------------------
# Rendering

_UNI = {"->": "→", "<": "⟨", ">": "⟩", "~": "¬"}


def render(node: Node, *, unicode: bool = False) -> str:
    """Render a node to its canonical text.

    The default spelling is pure ASCII (``->``, ``<``/``>``, ``~``); with
    ``unicode=True`` the arrow, angle-bracket, and negation glyphs are used.
    Parsing the result yields a term alpha-equal to the input.
    """
    tok = _UNI if unicode else {"->": "->", "<": "<", ">": ">", "~": "~"}

    def sort(s: Sort) -> str:
        if isinstance(s, SortVar):
            return s.name
        if not s.args:
            return s.name
        return s.name + tok["<"] + ", ".join(sort(a) for a in s.args) + tok[">"]

    def form(f: Form) -> str:
        if isinstance(f, AssocForm):
            return "{" + sort(f.key_sort) + ":" + sort(f.value_sort) + "}"
        if not f.binder_sorts:
            return sort(f.body_sort)
        return "[" + ", ".join(sort(b) for b in f.binder_sorts) + "]" + sort(f.body_sort)

    def term(t: Term) -> str:
        if isinstance(t, Var):
            return t.name
        if isinstance(t, MetaApp):
            if not t.args:
                return t.meta
            return t.meta + "(" + ", ".join(term(a) for a in t.args) + ")"
        return t.head + "(" + ", ".join(piece(p) for p in t.args) + ")"

    def piece(p: Piece) -> str:
        if isinstance(p, AssocPiece):
            return "{" + ", ".join(assoc(a) for a in p.entries) + "}"
        if not p.binders:
            return term(p.body)
        return "[" + ", ".join(p.binders) + "]" + term(p.body)

    def assoc(a: Association) -> str:
        if isinstance(a, MapEntry):
            return a.key + " : " + term(a.value)
        if isinstance(a, NotKey):
            return tok["~"] + a.key + ":"
        if not a.args:
            return a.meta
        return a.meta + "(" + ", ".join(term(x) for x in a.args) + ")"

    def decl(d: Declaration) -> str:
        if isinstance(d, DataDecl):
            return f"{sort(d.sort)} data {d.name}({', '.join(form(f) for f in d.forms)});"
        if isinstance(d, SchemeDecl):
            return f"{sort(d.sort)} scheme {d.name}({', '.join(form(f) for f in d.forms)});"
        if isinstance(d, VariableDecl):
            return f"{sort(d.sort)} variable;"
        return f"{sort(d.sort)} rule {term(d.lhs)} {tok['->']} {term(d.rhs)};"

    if isinstance(node, Script):
        return "\n".join(decl(d) for d in node.declarations)
    if isinstance(node, (DataDecl, SchemeDecl, VariableDecl, RuleDecl)):
        return decl(node)
    if isinstance(node, (SortCons, SortVar)):
        return sort(node)
    if isinstance(node, (ScopeForm, AssocForm)):
        return form(node)
    if isinstance(node, (Construction, Var, MetaApp)):
        return term(node)
    if isinstance(node, (ScopePiece, AssocPiece)):
        return piece(node)
    if isinstance(node, (MapEntry, NotKey, CatchAll)):
        return assoc(node)
    raise TypeError(f"cannot render {type(node).__name__}")


# ---------------------------------------------------------------------------
# Binding-aware utilities


def free_vars(t: Term) -> set[Ident]:
    """Variables occurring in ``t`` outside the scope of any binder.

    Association keys count as occurrences (bound keys are not free).
    """
    out: set[Ident] = set()

    def go(x: Term, bound: frozenset[Ident]) -> None:
        if isinstance(x, Var):
            if x.name not in bound:
                out.add(x.name)
        elif isinstance(x, MetaApp):
            for a in x.args:
                go(a, bound)
        else:
            for p in x.args:
                if isinstance(p, ScopePiece):
                    go(p.body, bound | set(p.binders))
                else:
                    for e in p.entries:
                        if isinstance(e, MapEntry):
                            if e.key not in bound:
                                out.add(e.key)
                            go(e.value, bound)
                        elif isinstance(e, NotKey):
                            if e.key not in bound:
                                out.add(e.key)
                        else:
                            for a in e.args:
                                go(a, bound)

    go(t, frozenset())
    return out


def non_assoc_vars(t: Term) -> set[Ident]:
    """All variable occurrences of ``t`` (free or bound, including binder
    positions) except occurrences located inside an association list."""
    out: set[Ident] = set()

    def go(x: Term) -> None:
        if isinstance(x, Var):
            out.add(x.name)
        elif isinstance(x, MetaApp):
            for a in x.args:
                go(a)
        else:
            for p in x.args:
                if isinstance(p, ScopePiece):
                    out.update(p.binders)
                    go(p.body)
                # association contents are skipped entirely

    go(t)
    return out


def all_idents(t: Term) -> set[Ident]:
    """Every variable name occurring anywhere in ``t`` (binders, keys, bodies)."""
    out: set[Ident] = set()

    def go(x: Term) -> None:
        if isinstance(x, Var):
            out.add(x.name)
        elif isinstance(x, MetaApp):
            for a in x.args:
                go(a)
        else:
            for p in x.args:
                if isinstance(p, ScopePiece):
                    out.update(p.binders)
                    go(p.body)
                else:
                    for e in p.entries:
                        if isinstance(e, MapEntry):
                            out.add(e.key)
                            go(e.value)
                        elif isinstance(e, NotKey):
                            out.add(e.key)
                        else:
                            for a in e.args:
                                go(a)

    go(t)
    return out


def bound_vars(t: Term) -> set[Ident]:
    """Every name appearing in a binder position somewhere in ``t``."""
    out: set[Ident] = set()

    def go(x: Term) -> None:
        if isinstance(x, MetaApp):
            for a in x.args:
                go(a)
        elif isinstance(x, Construction):
            for p in x.args:
                if isinstance(p, ScopePiece):
                    out.update(p.binders)
                    go(p.body)
                else:
                    for e in p.entries:
                        if isinstance(e, MapEntry):
                            go(e.value)
                        elif isinstance(e, CatchAll):
                            for a in e.args:
                                go(a)

    go(t)
    return out


def meta_vars(t: Term) -> set[Ident]:
    """Every meta-variable name occurring in ``t`` (including catch-alls)."""
    out: set[Ident] = set()

    def go(x: Term) -> None:
        if isinstance(x, MetaApp):
            out.add(x.meta)
            for a in x.args:
                go(a)
        elif isinstance(x, Construction):
            for p in x.args:
                if isinstance(p, ScopePiece):
                    go(p.body)
                else:
                    for e in p.entries:
                        if isinstance(e, MapEntry):
                            go(e.value)
                        elif isinstance(e, CatchAll):
                            out.add(e.meta)
                            for a in e.args:
                                go(a)

    go(t)
    return out


def fresh_var(hint: Ident, avoid: Iterable[Ident]) -> Ident:
    """A variable name not in ``avoid``: ``hint`` itself when available,
    otherwise ``hint`` suffixed with the smallest positive integer."""
    taken = set(avoid)
    if hint not in taken:
        return Ident(hint)
    i = 1
    while f"{hint}{i}" in taken:
        i += 1
    return Ident(f"{hint}{i}")


def replace_free_var(t: Term, old: Ident, new: Ident) -> Term:
    """Rename free occurrences of ``old`` (including key positions) to ``new``.

    The caller must pick ``new`` fresh for ``t``; no capture check is done.
    """

    def go(x: Term) -> Term:
        if isinstance(x, Var):
            return Var(new, span=x.span) if x.name == old else x
        if isinstance(x, MetaApp):
            return MetaApp(x.meta, tuple(go(a) for a in x.args), span=x.span)
        return Construction(x.head, tuple(piece(p) for p in x.args), span=x.span)

    def piece(p: Piece) -> Piece:
        if isinstance(p, ScopePiece):
            if old in p.binders:
                return p
            return ScopePiece(p.binders, go(p.body), span=p.span)
        return AssocPiece(tuple(assoc(e) for e in p.entries), span=p.span)

    def assoc(e: Association) -> Association:
        if isinstance(e, MapEntry):
            key = new if e.key == old else e.key
            return MapEntry(key, go(e.value), span=e.span)
        if isinstance(e, NotKey):
            return NotKey(new if e.key == old else e.key, span=e.span)
        return CatchAll(e.meta, tuple(go(a) for a in e.args), span=e.span)

    return go(t)


def alpha_equal(a: Term, b: Term) -> bool:
    """Structural equality up to consistent renaming of bound variables.

    Free variables and meta-variables compare by name; association lists
    compare entry by entry in order.
    """
    counter = 0

    def var_eq(x: Ident, y: Ident, ma: dict[Ident, int], mb: dict[Ident, int]) -> bool:
        ax, ay = ma.get(x), mb.get(y)
        if ax is None and ay is None:
            return x == y
        return ax is not None and ax == ay

    def go(x: Term, y: Term, ma: dict[Ident, int], mb: dict[Ident, int]) -> bool:
        nonlocal counter
        if isinstance(x, Var) and isinstance(y, Var):
            return var_eq(x.name, y.name, ma, mb)
        if isinstance(x, MetaApp) and isinstance(y, MetaApp):
            return (
                x.meta == y.meta
                and len(x.args) == len(y.args)
                and all(go(p, q, ma, mb) for p, q in zip(x.args, y.args))
            )
        if isinstance(x, Construction) and isinstance(y, Construction):
            if x.head != y.head or len(x.args) != len(y.args):
                return False
            return all(piece(p, q, ma, mb) for p, q in zip(x.args, y.args))
        return False

    def piece(p: Piece, q: Piece, ma: dict[Ident, int], mb: dict[Ident, int]) -> bool:
        nonlocal counter
        if isinstance(p, ScopePiece) and isinstance(q, ScopePiece):
            if len(p.binders) != len(q.binders):
                return False
            ma2, mb2 = dict(ma), dict(mb)
            for u, v in zip(p.binders, q.binders):
                counter += 1
                ma2[u] = counter
                mb2[v] = counter
            return go(p.body, q.body, ma2, mb2)
        if isinstance(p, AssocPiece) and isinstance(q, AssocPiece):
            if len(p.entries) != len(q.entries):
                return False
            return all(assoc(e, f, ma, mb) for e, f in zip(p.entries, q.entries))
        return False

    def assoc(e: Association, f: Association, ma, mb) -> bool:
        if isinstance(e, MapEntry) and isinstance(f, MapEntry):
            return var_eq(e.key, f.key, ma, mb) and go(e.value, f.value, ma, mb)
        if isinstance(e, NotKey) and isinstance(f, NotKey):
            return var_eq(e.key, f.key, ma, mb)
        if isinstance(e, CatchAll) and isinstance(f, CatchAll):
            return (
                e.meta == f.meta
                and len(e.args) == len(f.args)
                and all(go(p, q, ma, mb) for p, q in zip(e.args, f.args))
            )
        return False

    return go(a, b, {}, {})
