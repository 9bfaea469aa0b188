"""Higher-order matching, valuations, contraction, and normalization.

Matching follows the classic pattern discipline: a pattern meta-application
``#m(w1, ..., wn)`` matches a subject fragment only when every binder of the
enclosing scope chain that occurs in the fragment is among the ``wi``
(absence of a binder argument rules out fragments using that binder), and it
binds ``#m`` to the abstraction of the fragment over those binders.
Contraction then instantiates a rule's right side: a meta-application
substitutes its (contracted) arguments for the abstraction parameters,
variables pass through the valuation, and catch-all meta-variables splice
captured association entries back in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from .env import GlobalEnv, RuleEnv
from .terms import (
    AssocPiece,
    Association,
    CatchAll,
    Construction,
    Ident,
    MapEntry,
    MetaApp,
    NotKey,
    Piece,
    RuleDecl,
    ScopePiece,
    Term,
    Var,
    all_idents,
    alpha_equal,
    free_vars,
    fresh_var,
    render,
)

__all__ = [
    "Abstraction",
    "AssocBinding",
    "EngineError",
    "NormalizeResult",
    "NormalStatus",
    "RewriteRule",
    "RewriteStep",
    "Valuation",
    "contract",
    "format_step",
    "match_assoc",
    "match_term",
    "normalize",
    "prepare_rules",
    "rewrite_step",
    "substitute",
]


class EngineError(Exception):
    """An engine invariant was violated (typically an unchecked input)."""


@dataclass(frozen=True)
class Abstraction:
    """A fragment abstracted over the binders a pattern meta was applied to."""

    params: tuple[Ident, ...]
    body: Term

    def __str__(self) -> str:
        return "(" + ", ".join(self.params) + ") -> " + render(self.body)


@dataclass(frozen=True)
class AssocBinding:
    """Captured association entries, abstracted over catch-all parameters."""

    params: tuple[Ident, ...]
    entries: tuple[tuple[Ident, Term], ...]


@dataclass
class Valuation:
    """The result of matching a pattern against a subject."""

    meta_bind: dict[Ident, Abstraction] = field(default_factory=dict)
    assoc_bind: dict[Ident, AssocBinding] = field(default_factory=dict)
    var_bind: dict[Ident, Ident] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Substitution


def substitute(body: Term, binding: Mapping[Ident, Term]) -> Term:
    """Simultaneous capture-avoiding substitution of terms for variables.

    Binders colliding with free variables of the replacements are renamed.
    A key position can only receive a variable; anything else raises
    EngineError (the sorting discipline rules it out for checked rules).
    """
    if not binding:
        return body

    def go(t: Term, sub: dict[Ident, Term]) -> Term:
        if isinstance(t, Var):
            return sub.get(t.name, t)
        if isinstance(t, MetaApp):
            return MetaApp(t.meta, tuple(go(a, sub) for a in t.args))
        return Construction(t.head, tuple(piece(p, sub) for p in t.args))

    def piece(p: Piece, sub: dict[Ident, Term]) -> Piece:
        if isinstance(p, AssocPiece):
            return AssocPiece(tuple(assoc(e, sub) for e in p.entries))
        inner = {w: r for w, r in sub.items() if w not in p.binders}
        if not inner:
            return p
        clash = set()
        for r in inner.values():
            clash |= free_vars(r)
        binders = list(p.binders)
        body2 = p.body
        if clash & set(binders):
            avoid = clash | all_idents(body2) | set(binders) | set(inner)
            for i, b in enumerate(binders):
                if b in clash:
                    b2 = fresh_var(b, avoid)
                    avoid.add(b2)
                    body2 = go(body2, {b: Var(b2)})
                    binders[i] = b2
        return ScopePiece(tuple(binders), go(body2, inner))

    def assoc(e: Association, sub: dict[Ident, Term]) -> Association:
        if isinstance(e, MapEntry):
            return MapEntry(key(e.key, sub), go(e.value, sub))
        if isinstance(e, NotKey):
            return NotKey(key(e.key, sub))
        return CatchAll(e.meta, tuple(go(a, sub) for a in e.args))

    def key(k: Ident, sub: dict[Ident, Term]) -> Ident:
        r = sub.get(k)
        if r is None:
            return k
        if isinstance(r, Var):
            return r.name
        raise EngineError(f"cannot substitute non-variable {render(r)} for key {k}")

    return go(body, dict(binding))


# ---------------------------------------------------------------------------
# Matching


class _NoMatch(Exception):
    pass


class _Matcher:
    """One matching attempt; collects bindings and defers association pieces
    until their pattern keys are resolvable."""

    def __init__(self, gamma: GlobalEnv | None, pattern: Term, subject: Term):
        self.gamma = gamma
        self.val = Valuation()
        self.avoid = all_idents(pattern) | all_idents(subject)
        # (pattern entries, subject entries, penv, senv, bound)
        self.pending: list[tuple] = []

    def canonical(self, hint: Ident) -> Ident:
        c = fresh_var(hint, self.avoid)
        self.avoid.add(c)
        return c

    # -- structural descent ------------------------------------------------

    def term(self, p: Term, s: Term, penv: dict, senv: dict, bound: tuple) -> None:
        if isinstance(p, MetaApp):
            self.bind_meta(p, s, penv, senv, bound)
            return
        if isinstance(p, Var):
            if not isinstance(s, Var):
                raise _NoMatch
            if p.name in penv:
                if senv.get(s.name) != penv[p.name]:
                    raise _NoMatch
                return
            if s.name in senv:
                # A free pattern variable may not capture a subject binder.
                raise _NoMatch
            seen = self.val.var_bind.get(p.name)
            if seen is None:
                self.val.var_bind[p.name] = s.name
            elif seen != s.name:
                raise _NoMatch
            return
        if not isinstance(s, Construction) or p.head != s.head or len(p.args) != len(s.args):
            raise _NoMatch
        for pp, sp in zip(p.args, s.args):
            self.piece(pp, sp, penv, senv, bound)

    def piece(self, pp: Piece, sp: Piece, penv: dict, senv: dict, bound: tuple) -> None:
        if isinstance(pp, ScopePiece):
            if not isinstance(sp, ScopePiece) or len(pp.binders) != len(sp.binders):
                raise _NoMatch
            penv2, senv2 = dict(penv), dict(senv)
            fresh = []
            for w, u in zip(pp.binders, sp.binders):
                c = self.canonical(w)
                penv2[w] = c
                senv2[u] = c
                fresh.append(c)
            self.term(pp.body, sp.body, penv2, senv2, bound + tuple(fresh))
            return
        if not isinstance(sp, AssocPiece):
            raise _NoMatch
        entries = _subject_entries(sp)
        self.pending.append((pp.entries, entries, dict(penv), dict(senv), bound))

    def bind_meta(self, p: MetaApp, s: Term, penv: dict, senv: dict, bound: tuple) -> None:
        params = self._meta_params(p.meta, p.args, penv)
        fragment = self._rename(s, senv)
        if (free_vars(fragment) & set(bound)) - set(params):
            raise _NoMatch  # a forbidden binder occurs in the fragment
        self._record_meta(p.meta, Abstraction(params, fragment))

    def _meta_params(self, meta: Ident, args, penv: dict) -> tuple[Ident, ...]:
        params = []
        for a in args:
            if not isinstance(a, Var) or a.name not in penv:
                raise EngineError(
                    f"pattern argument of {meta} must be a bound variable; "
                    "was the rule checked?"
                )
            params.append(penv[a.name])
        return tuple(params)

    def _rename(self, s: Term, senv: dict) -> Term:
        if not senv:
            return s
        return substitute(s, {u: Var(c) for u, c in senv.items()})

    def _record_meta(self, meta: Ident, ab: Abstraction) -> None:
        seen = self.val.meta_bind.get(meta)
        if seen is None:
            self.val.meta_bind[meta] = ab
            return
        if len(seen.params) != len(ab.params):
            raise _NoMatch
        renamed = substitute(seen.body, {o: Var(n) for o, n in zip(seen.params, ab.params)})
        if not alpha_equal(renamed, ab.body):
            raise _NoMatch

    # -- association pieces --------------------------------------------------

    def resolve_key(self, w: Ident, penv: dict, concrete_fallback: bool) -> Ident:
        if w in penv:
            return penv[w]
        if w in self.val.var_bind:
            return self.val.var_bind[w]
        if concrete_fallback:
            return w
        raise _NoMatch

    def resolvable(self, item) -> bool:
        p_entries, _, penv, _, _ = item
        return all(
            e.key in penv or e.key in self.val.var_bind
            for e in p_entries
            if isinstance(e, (MapEntry, NotKey))
        )

    def match_assoc_entries(self, item, concrete_fallback: bool = False) -> None:
        p_entries, s_entries, penv, senv, bound = item
        subject = {k: v for k, v in s_entries}
        catchalls = [e for e in p_entries if isinstance(e, CatchAll)]
        if len(catchalls) > 1:
            raise EngineError(
                "a pattern association list has more than one catch-all meta-variable"
            )
        named: set[Ident] = set()
        for e in p_entries:
            if isinstance(e, MapEntry):
                k = self.resolve_key(e.key, penv, concrete_fallback)
                if k not in subject:
                    raise _NoMatch
                named.add(k)
                self.term(e.value, subject[k], penv, senv, bound)
            elif isinstance(e, NotKey):
                k = self.resolve_key(e.key, penv, concrete_fallback)
                if k in subject:
                    raise _NoMatch
        remainder = [(k, v) for k, v in subject.items() if k not in named]
        if not catchalls:
            if remainder:
                raise _NoMatch
            return
        ca = catchalls[0]
        params = self._meta_params(ca.meta, ca.args, penv)
        captured = []
        for k, v in remainder:
            if k in bound and k not in params:
                raise _NoMatch
            frag = self._rename(v, senv)
            if (free_vars(frag) & set(bound)) - set(params):
                raise _NoMatch
            captured.append((k, frag))
        self._record_assoc(ca.meta, AssocBinding(params, tuple(captured)))

    def _record_assoc(self, meta: Ident, binding: AssocBinding) -> None:
        seen = self.val.assoc_bind.get(meta)
        if seen is None:
            self.val.assoc_bind[meta] = binding
            return
        if len(seen.params) != len(binding.params) or len(seen.entries) != len(binding.entries):
            raise _NoMatch
        rename = {o: Var(n) for o, n in zip(seen.params, binding.params)}
        for (k1, v1), (k2, v2) in zip(seen.entries, binding.entries):
            if k1 != k2 or not alpha_equal(substitute(v1, rename), v2):
                raise _NoMatch

    def drain_pending(self) -> None:
        while self.pending:
            for i, item in enumerate(self.pending):
                if self.resolvable(item):
                    del self.pending[i]
                    self.match_assoc_entries(item)
                    break
            else:
                # Keys that never become resolvable: no deterministic match.
                raise _NoMatch


def _subject_entries(p: AssocPiece) -> list[tuple[Ident, Term]]:
    """Subject association lists as key/value pairs, later keys overriding."""
    out: dict[Ident, Term] = {}
    for e in p.entries:
        if isinstance(e, MapEntry):
            out[e.key] = e.value
        else:
            raise EngineError(
                f"subject association lists must contain only plain entries, got {render(e)}"
            )
    return list(out.items())


def match_term(gamma: GlobalEnv | None, pattern: Term, subject: Term) -> Valuation | None:
    """Match a checked rule pattern against a ground subject fragment.

    Returns the valuation, or None when the subject does not match.  The
    subject's bound variables are renamed to the pattern's view on the fly,
    so replaying the valuation into the pattern rebuilds the subject up to
    alpha-equivalence.
    """
    m = _Matcher(gamma, pattern, subject)
    try:
        m.term(pattern, subject, {}, {}, ())
        m.drain_pending()
    except _NoMatch:
        return None
    return m.val


def match_assoc(pattern: Sequence[Association], subject: Sequence[tuple[Ident, Term]],
                partial: Valuation) -> Valuation | None:
    """Match a pattern association list against subject entries.

    ``partial`` supplies variable bindings for keys resolved elsewhere; a key
    not bound there is taken concretely (it denotes itself).  The single
    optional catch-all receives the remaining entries in subject order; with
    no catch-all the remainder must be empty.
    """
    m = _Matcher(None, Construction(Ident("Match")), Construction(Ident("Match")))
    m.val = Valuation(
        dict(partial.meta_bind), dict(partial.assoc_bind), dict(partial.var_bind)
    )
    for _, v in subject:
        m.avoid |= all_idents(v)
    try:
        m.match_assoc_entries((tuple(pattern), list(subject), {}, {}, ()),
                              concrete_fallback=True)
    except _NoMatch:
        return None
    return m.val


# ---------------------------------------------------------------------------
# Contraction


def contract(rhs: Term, val: Valuation, avoid: Iterable[Ident] = ()) -> Term:
    """Instantiate a rule's right side with a valuation.

    Variables pass through the valuation's variable bindings; right-side
    variables bound by neither the valuation nor an enclosing scope are
    replaced by one consistent fresh variable each, chosen against ``avoid``,
    every name in the valuation, and all names generated so far.  Binders on
    the right side are freshened the same way, so spliced association entries
    can never collide with introduced keys.
    """
    taken = set(avoid)
    for ab in val.meta_bind.values():
        taken |= set(ab.params) | all_idents(ab.body)
    for binding in val.assoc_bind.values():
        taken |= set(binding.params)
        for k, v in binding.entries:
            taken.add(k)
            taken |= all_idents(v)
    taken |= set(val.var_bind.values())

    rho: dict[Ident, Ident] = dict(val.var_bind)
    for w in sorted(free_vars(rhs)):
        if w not in rho:
            w2 = fresh_var(w, taken)
            taken.add(w2)
            rho[w] = w2

    def go(t: Term, rho: dict[Ident, Ident]) -> Term:
        if isinstance(t, Var):
            name = rho.get(t.name)
            if name is None:
                raise EngineError(f"no binding for variable {t.name} (MissingBinding)")
            return Var(name)
        if isinstance(t, MetaApp):
            ab = val.meta_bind.get(t.meta)
            if ab is None:
                raise EngineError(f"no binding for meta-variable {t.meta} (MissingBinding)")
            if len(ab.params) != len(t.args):
                raise EngineError(f"arity mismatch instantiating {t.meta}")
            args = [go(a, rho) for a in t.args]
            return substitute(ab.body, dict(zip(ab.params, args)))
        return Construction(t.head, tuple(piece(p, rho) for p in t.args))

    def piece(p: Piece, rho: dict[Ident, Ident]) -> Piece:
        if isinstance(p, ScopePiece):
            rho2 = dict(rho)
            binders = []
            for b in p.binders:
                b2 = fresh_var(b, taken)
                taken.add(b2)
                rho2[b] = b2
                binders.append(b2)
            return ScopePiece(tuple(binders), go(p.body, rho2))
        entries: list[tuple[Ident, Term]] = []
        for e in p.entries:
            if isinstance(e, MapEntry):
                k = rho.get(e.key)
                if k is None:
                    raise EngineError(f"no binding for key {e.key} (MissingBinding)")
                entries.append((k, go(e.value, rho)))
            elif isinstance(e, NotKey):
                raise EngineError("an absence entry cannot be contracted")
            else:
                binding = val.assoc_bind.get(e.meta)
                if binding is None:
                    raise EngineError(
                        f"no binding for catch-all {e.meta} (MissingBinding)"
                    )
                if len(binding.params) != len(e.args):
                    raise EngineError(f"arity mismatch instantiating {e.meta}")
                args = [go(a, rho) for a in e.args]
                sub = dict(zip(binding.params, args))
                for k, v in binding.entries:
                    entries.append((_key_through(sub, k), substitute(v, sub)))
        # Later duplicate keys override earlier ones, keeping first position.
        merged: dict[Ident, Term] = {}
        for k, v in entries:
            merged[k] = v
        return AssocPiece(tuple(MapEntry(k, v) for k, v in merged.items()))

    return go(rhs, rho)


def _key_through(sub: Mapping[Ident, Term], k: Ident) -> Ident:
    r = sub.get(k)
    if r is None:
        return k
    if isinstance(r, Var):
        return r.name
    raise EngineError(f"cannot substitute non-variable {render(r)} for key {k}")


# ---------------------------------------------------------------------------
# Rewriting strategy


@dataclass(frozen=True)
class RewriteRule:
    """A rule ready for the engine, paired with its inferred environment."""

    decl: RuleDecl
    env: RuleEnv
    index: int


@dataclass(frozen=True)
class RewriteStep:
    """One reduction: where, by which rule, and with which valuation.

    The position path alternates construction argument indices with, for
    association arguments, the entry index within the list.
    """

    position: tuple[int, ...]
    rule_index: int
    valuation: Valuation


class NormalStatus(Enum):
    NORMAL_FORM = "NormalForm"
    FUEL_EXHAUSTED = "FuelExhausted"


@dataclass
class NormalizeResult:
    term: Term
    steps: list[RewriteStep]
    status: NormalStatus


def prepare_rules(gamma: GlobalEnv, rules: Sequence[RuleDecl],
                  envs: Sequence[RuleEnv] | None = None) -> list[RewriteRule]:
    """Pair rules with environments and validate engine preconditions.

    Rejects patterns whose association lists carry more than one catch-all:
    matching them would not be deterministic (MultipleCatchAll).
    """
    from .env import infer_rule_env  # local import to keep module load light

    out: list[RewriteRule] = []
    for i, decl in enumerate(rules):
        if not isinstance(decl.lhs, Construction):
            raise EngineError(f"rule {i} pattern is not a construction")
        _check_single_catchall(decl.lhs, i)
        env = envs[i] if envs is not None else infer_rule_env(gamma, decl)[0]
        out.append(RewriteRule(decl, env, i))
    return out


def _check_single_catchall(t: Term, index: int) -> None:
    if isinstance(t, MetaApp):
        return
    if isinstance(t, Construction):
        for p in t.args:
            if isinstance(p, ScopePiece):
                _check_single_catchall(p.body, index)
            else:
                if sum(1 for e in p.entries if isinstance(e, CatchAll)) > 1:
                    raise EngineError(
                        f"rule {index} pattern has an association list with multiple "
                        "catch-alls (MultipleCatchAll)"
                    )
                for e in p.entries:
                    if isinstance(e, MapEntry):
                        _check_single_catchall(e.value, index)


def rewrite_step(gamma: GlobalEnv, rules: Sequence[RewriteRule], t: Term
                 ) -> tuple[Term, RewriteStep] | None:
    """Contract the leftmost-outermost matching redex, or return None.

    Only scheme-headed constructions are tried, in rule declaration order;
    the search descends under binders and into association values.
    """
    avoid = all_idents(t)

    def visit(sub: Term, path: tuple[int, ...]) -> tuple[Term, RewriteStep] | None:
        if not isinstance(sub, Construction):
            return None
        if sub.head in gamma.fun:
            for rule in rules:
                val = match_term(gamma, rule.decl.lhs, sub)
                if val is not None:
                    new = contract(rule.decl.rhs, val, avoid)
                    return new, RewriteStep(path, rule.index, val)
        for i, p in enumerate(sub.args):
            if isinstance(p, ScopePiece):
                hit = visit(p.body, path + (i,))
                if hit is not None:
                    new_piece = ScopePiece(p.binders, hit[0])
                    args = sub.args[:i] + (new_piece,) + sub.args[i + 1:]
                    return Construction(sub.head, args), hit[1]
            else:
                for j, e in enumerate(p.entries):
                    if isinstance(e, MapEntry):
                        hit = visit(e.value, path + (i, j))
                        if hit is not None:
                            entry = MapEntry(e.key, hit[0])
                            entries = p.entries[:j] + (entry,) + p.entries[j + 1:]
                            args = sub.args[:i] + (AssocPiece(entries),) + sub.args[i + 1:]
                            return Construction(sub.head, args), hit[1]
        return None

    return visit(t, ())


def normalize(gamma: GlobalEnv, rules: Sequence[RewriteRule], t: Term,
              fuel: int = 10000,
              on_step: Callable[[Term, RewriteStep], None] | None = None
              ) -> NormalizeResult:
    """Rewrite until no rule matches anywhere, or until fuel runs out.

    Scheme-headed subterms with no matching rule stay in place; they are
    simply part of the normal form.
    """
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    steps: list[RewriteStep] = []
    current = t
    for _ in range(fuel):
        hit = rewrite_step(gamma, rules, current)
        if hit is None:
            return NormalizeResult(current, steps, NormalStatus.NORMAL_FORM)
        current, step = hit
        steps.append(step)
        if on_step is not None:
            on_step(current, step)
    if rewrite_step(gamma, rules, current) is None:
        return NormalizeResult(current, steps, NormalStatus.NORMAL_FORM)
    return NormalizeResult(current, steps, NormalStatus.FUEL_EXHAUSTED)


def format_step(number: int, step: RewriteStep, rule: RewriteRule, term: Term,
                *, unicode: bool = False) -> str:
    """One trace record: the step header line plus the rendered term."""
    pos = "[" + ",".join(str(i) for i in step.position) + "]"
    decl = rule.decl
    header = (
        f"step {number} at {pos} by rule {rule.index} "
        f"({render(decl.sort, unicode=unicode)} rule {render(decl.lhs, unicode=unicode)}"
        f" -> {render(decl.rhs, unicode=unicode)})"
    )
    return header + "\n" + render(term, unicode=unicode)
