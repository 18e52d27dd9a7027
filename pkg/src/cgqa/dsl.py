"""Parser and validator for the function-step query language.

A query is a short program, one atomic function call per line:

    query1 = get_information(relation='Colleges', tail_entity='Utah')
    query2 = count(set=output_of_query1)

Values are single-quoted strings, bare numerals, or references to earlier
steps spelled output_of_queryN. Function names and parameters are extracted
with regular expressions and checked against a registry of signatures; the
first violation in reading order is reported. Structural failures (nested
calls, unextractable values) are caught before any signature checks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ErrorKind, QueryError

COMPARATORS = ("<=", ">=", "=", "<", ">")

_STEP_RE = re.compile(r"^query(\d+)\s*=\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*$")
_ARG_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*(<=|>=|=|<|>)\s*(.*)$", re.S)
_REF_RE = re.compile(r"^output_of_query(\d+)$")
_CALL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*\(.*\)$", re.S)
_NUM_RE = re.compile(r"^-?\d+(\.\d+)?$")
_STR_RE = re.compile(r"^'([^']*)'$")


@dataclass(frozen=True)
class StepRef:
    """Reference to the result of an earlier step."""

    index: int


Literal = str | int | float | StepRef


@dataclass(frozen=True)
class Arg:
    name: str
    comparator: str
    value: Literal


@dataclass(frozen=True)
class QueryStep:
    index: int
    function: str
    args: tuple[Arg, ...]


@dataclass
class QueryPlan:
    steps: list[QueryStep]
    raw_text: str = ""


@dataclass(frozen=True)
class FunctionSignature:
    """What a registry function accepts.

    exclusive_assign names a parameter group that must not all be bound with
    '=' in one call; comparable lists the parameters that may carry a
    non-equality comparator.
    """

    params: tuple[str, ...]
    required: frozenset[str] = frozenset()
    comparable: frozenset[str] = frozenset()
    min_bound: int = 0
    exclusive_assign: tuple[str, ...] = ()


@dataclass
class FunctionRegistry:
    entries: dict[str, FunctionSignature]

    def names(self) -> list[str]:
        return list(self.entries)


def default_registry() -> FunctionRegistry:
    """The closed set of eleven query functions."""
    agg = FunctionSignature(params=("set",), required=frozenset({"set"}))
    two = FunctionSignature(
        params=("set1", "set2"), required=frozenset({"set1", "set2"})
    )
    return FunctionRegistry(
        entries={
            "get_information": FunctionSignature(
                params=("head_entity", "relation", "tail_entity", "key", "value"),
                comparable=frozenset({"tail_entity", "value"}),
                min_bound=1,
                exclusive_assign=("head_entity", "relation", "tail_entity"),
            ),
            "min": agg,
            "mean": agg,
            "max": agg,
            "count": agg,
            "sum": agg,
            "keep": FunctionSignature(
                params=("set", "key", "value"),
                required=frozenset({"set", "key", "value"}),
                comparable=frozenset({"value"}),
            ),
            "set_intersection": two,
            "set_union": two,
            "set_negation": FunctionSignature(
                params=("set",), required=frozenset({"set"})
            ),
            "set_difference": two,
        }
    )


DEFAULT_REGISTRY = default_registry()


def split_args(text: str) -> list[str]:
    """Split an argument list on top-level commas.

    Commas inside quotes, parentheses, or brackets do not split, so nested
    calls and bracketed lists come through as single (rejectable) tokens.
    """
    parts: list[str] = []
    depth = 0
    quoted = False
    current: list[str] = []
    for ch in text:
        if ch == "'" :
            quoted = not quoted
        elif not quoted and ch in "([":
            depth += 1
        elif not quoted and ch in ")]":
            depth -= 1
        if ch == "," and depth == 0 and not quoted:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    if current:
        parts.append("".join(current))
    return [p.strip() for p in parts if p.strip()]


def _parse_value(raw: str, function: str) -> Literal:
    m = _STR_RE.match(raw)
    if m:
        return m.group(1)
    if _NUM_RE.match(raw):
        return int(raw) if "." not in raw else float(raw)
    m = _REF_RE.match(raw)
    if m:
        return StepRef(int(m.group(1)))
    m = _CALL_RE.match(raw)
    if m:
        raise QueryError(
            ErrorKind.NON_ATOMIC_OPERATION, outer=function, inner=m.group(1)
        )
    raise QueryError(ErrorKind.NON_STANDARD_EXPRESSION, text=raw)


def parse_plan(text: str) -> QueryPlan:
    """Parse query text into steps, or raise the first structural error.

    Raises QueryError of kind NON_ATOMIC_OPERATION (nested call) or
    NON_STANDARD_EXPRESSION (anything the grammar cannot extract).
    """
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise QueryError(
            ErrorKind.NON_STANDARD_EXPRESSION, text="", what="query"
        )
    steps: list[QueryStep] = []
    for pos, line in enumerate(lines, start=1):
        m = _STEP_RE.match(line)
        if not m or int(m.group(1)) != pos:
            raise QueryError(
                ErrorKind.NON_STANDARD_EXPRESSION, text=line, what="query step"
            )
        function = m.group(2)
        args = tuple(
            _parse_arg(token, function) for token in split_args(m.group(3))
        )
        steps.append(QueryStep(index=pos, function=function, args=args))
    return QueryPlan(steps=steps, raw_text=text)


def _parse_arg(token: str, function: str) -> Arg:
    m = _ARG_RE.match(token)
    if not m:
        raise QueryError(ErrorKind.NON_STANDARD_EXPRESSION, text=token)
    name, comparator, raw = m.group(1), m.group(2), m.group(3).strip()
    return Arg(name=name, comparator=comparator,
               value=_parse_value(raw, function))


def validate_plan(
    plan: QueryPlan, registry: FunctionRegistry = DEFAULT_REGISTRY
) -> QueryPlan:
    """Check every step against the registry; raise the first violation.

    Per step, in order: function defined, parameter names legal, parameter
    combination legal, comparators legal, step references resolve backwards.
    """
    for step in plan.steps:
        sig = registry.entries.get(step.function)
        if sig is None:
            raise QueryError(
                ErrorKind.UNDEFINED_FUNCTION,
                function=step.function,
                registry=registry.names(),
            )
        for arg in step.args:
            if arg.name not in sig.params:
                raise QueryError(
                    ErrorKind.ILLEGAL_PARAMETER,
                    function=step.function,
                    parameter=arg.name,
                    allowed=list(sig.params),
                )
        _check_combination(step, sig)
        for arg in step.args:
            if arg.comparator != "=" and arg.name not in sig.comparable:
                raise QueryError(
                    ErrorKind.ILLEGAL_COMPARATOR,
                    function=step.function,
                    parameter=arg.name,
                    comparator=arg.comparator,
                )
        for arg in step.args:
            if isinstance(arg.value, StepRef) and not (
                1 <= arg.value.index < step.index
            ):
                raise QueryError(
                    ErrorKind.NON_STANDARD_EXPRESSION,
                    text=f"output_of_query{arg.value.index}",
                    what="step reference",
                )
    return plan


def _check_combination(step: QueryStep, sig: FunctionSignature) -> None:
    names = [a.name for a in step.args]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise QueryError(
            ErrorKind.INCONSISTENT_PARAMETERS,
            function=step.function,
            parameters=dupes,
            reason="duplicate",
        )
    missing = sorted(sig.required - set(names))
    if missing:
        raise QueryError(
            ErrorKind.INCONSISTENT_PARAMETERS,
            function=step.function,
            parameters=missing,
            reason="missing",
        )
    if len(names) < sig.min_bound:
        raise QueryError(
            ErrorKind.INCONSISTENT_PARAMETERS,
            function=step.function,
            parameters=[],
            reason="unbound",
        )
    if sig.exclusive_assign:
        assigned = {a.name for a in step.args if a.comparator == "="}
        if all(p in assigned for p in sig.exclusive_assign):
            raise QueryError(
                ErrorKind.INCONSISTENT_PARAMETERS,
                function=step.function,
                parameters=list(sig.exclusive_assign),
                reason="simultaneous",
            )


def render_value(value: Literal) -> str:
    if isinstance(value, StepRef):
        return f"output_of_query{value.index}"
    if isinstance(value, str):
        return f"'{value}'"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_step(step: QueryStep) -> str:
    args = ", ".join(
        f"{a.name}{a.comparator}{render_value(a.value)}" for a in step.args
    )
    return f"query{step.index} = {step.function}({args})"


def render_plan(plan: QueryPlan) -> str:
    """Canonical text: one step per line, one space after each comma."""
    return "\n".join(render_step(s) for s in plan.steps)


def canonical_plan_text(text: str) -> str:
    """Reprint plan text canonically; unparseable text comes back stripped."""
    try:
        return render_plan(parse_plan(text))
    except QueryError:
        return text.strip()
