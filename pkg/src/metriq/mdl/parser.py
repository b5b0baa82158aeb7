"""Recursive-descent parser for metric set source files.

Grammar (see README for the full reference):

    metricset   := { unit_decl | metric_def | segment_def | group_def }
    unit_decl   := "unit" IDENT "=" IDENT ";"
    metric_def  := "metric" IDENT [ "in" IDENT {"," IDENT} ] "=" expr ";"
    segment_def := "segment" IDENT "=" expr ";"
    group_def   := "group" IDENT "=" "{" IDENT {"," IDENT} "}" ";"
    expr        := agg | arith
    agg         := AGG [ "<" IDENT ">" ] "(" [ expr ] [ "," NUMBER ] [ "if" arith ] ")"
    arith       := infix over literals, columns, + - * /, comparisons,
                   and/or/not, "if" arith "then" arith "else" arith, parens

Aggregations appear only where `expr` is expected; they cannot be embedded in
arithmetic. Syntax errors fail fast; structural problems (duplicate names,
bad nesting, unknown units) are collected and reported together.
"""

from __future__ import annotations

from ..core import AggKind
from ..diagnostics import Diagnostic, DiagnosticError, error_at
from . import ast
from .lexer import Token, tokenize

_CMP_OPS = {"==", "!=", "<", "<=", ">", ">="}
_AGG_BY_NAME = {k.value: k for k in AggKind}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token helpers ----------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind == kind and (text is None or tok.text == text):
            return self.advance()
        expected = what or (text if text is not None else kind)
        self.fail(f"expected {expected}", tok)

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise DiagnosticError([error_at(f"{message}, found {found}", tok.line, tok.col)])

    @staticmethod
    def span(tok: Token) -> ast.Span:
        return ast.Span(tok.line, tok.col)

    # -- declarations ------------------------------------------------------

    def parse_metric_set(self, name: str) -> ast.MetricSet:
        units: list[ast.UnitDecl] = []
        metrics: list[ast.MetricDefinition] = []
        segments: list[ast.SegmentDefinition] = []
        groups: list[ast.MetricGroup] = []
        while not self.at("eof"):
            tok = self.peek()
            if self.at("keyword", "unit"):
                units.append(self.unit_decl())
            elif self.at("keyword", "metric"):
                metrics.append(self.metric_def())
            elif self.at("keyword", "segment"):
                segments.append(self.segment_def())
            elif self.at("keyword", "group"):
                groups.append(self.group_def())
            else:
                self.fail("expected 'unit', 'metric', 'segment' or 'group'", tok)
        return ast.MetricSet(name, tuple(units), tuple(metrics), tuple(segments), tuple(groups))

    def unit_decl(self) -> ast.UnitDecl:
        kw = self.expect("keyword", "unit")
        name = self.expect("ident", what="unit name").text
        self.expect("=")
        key = self.expect("ident", what="key column").text
        self.expect(";")
        return ast.UnitDecl(name, key, span=self.span(kw))

    def metric_def(self) -> ast.MetricDefinition:
        kw = self.expect("keyword", "metric")
        name = self.expect("ident", what="metric name").text
        groups: list[str] = []
        if self.at("keyword", "in"):
            self.advance()
            groups.append(self.expect("ident", what="group name").text)
            while self.at(","):
                self.advance()
                groups.append(self.expect("ident", what="group name").text)
        self.expect("=")
        expr = self.expr()
        self.expect(";")
        return ast.MetricDefinition(name, expr, tuple(groups), span=self.span(kw))

    def segment_def(self) -> ast.SegmentDefinition:
        kw = self.expect("keyword", "segment")
        name = self.expect("ident", what="segment name").text
        self.expect("=")
        expr = self.expr()
        self.expect(";")
        return ast.SegmentDefinition(name, expr, span=self.span(kw))

    def group_def(self) -> ast.MetricGroup:
        kw = self.expect("keyword", "group")
        name = self.expect("ident", what="group name").text
        self.expect("=")
        self.expect("{")
        members = [self.expect("ident", what="metric name").text]
        while self.at(","):
            self.advance()
            members.append(self.expect("ident", what="metric name").text)
        self.expect("}")
        self.expect(";")
        return ast.MetricGroup(name, tuple(members), span=self.span(kw))

    # -- expressions -------------------------------------------------------

    def expr(self) -> ast.Expression:
        if self.at("agg"):
            return self.aggregation()
        return self.arith()

    def aggregation(self) -> ast.Aggregation:
        tok = self.expect("agg")
        kind = _AGG_BY_NAME[tok.text]
        level = None
        if self.at("<"):
            self.advance()
            level = self.expect("ident", what="unit name").text
            self.expect(">")
        self.expect("(")
        arg: ast.Expression | None = None
        rank: float | None = None
        filt: ast.Expression | None = None
        if not self.at(")"):
            if self.at("keyword", "if"):
                # Either a filter with no argument, or a conditional argument.
                if_tok = self.advance()
                first = self.arith()
                if self.at("keyword", "then"):
                    self.advance()
                    then_expr = self.arith()
                    self.expect("keyword", "else")
                    else_expr = self.arith()
                    arg = ast.Conditional(first, then_expr, else_expr, span=self.span(if_tok))
                else:
                    filt = first
            else:
                arg = self.expr()
            if filt is None:
                if self.at(","):
                    self.advance()
                    num = self.expect("number", what="percentile rank")
                    rank = float(num.text)
                if self.at("keyword", "if"):
                    self.advance()
                    filt = self.arith()
        self.expect(")")
        return ast.Aggregation(kind, arg, level=level, rank=rank, filter=filt, span=self.span(tok))

    def arith(self) -> ast.Expression:
        if self.at("keyword", "if"):
            tok = self.advance()
            cond = self.arith()
            self.expect("keyword", "then")
            then_expr = self.arith()
            self.expect("keyword", "else")
            else_expr = self.arith()
            return ast.Conditional(cond, then_expr, else_expr, span=self.span(tok))
        return self.or_expr()

    def or_expr(self) -> ast.Expression:
        left = self.and_expr()
        while self.at("keyword", "or"):
            tok = self.advance()
            right = self.and_expr()
            left = ast.Logical("or", left, right, span=self.span(tok))
        return left

    def and_expr(self) -> ast.Expression:
        left = self.not_expr()
        while self.at("keyword", "and"):
            tok = self.advance()
            right = self.not_expr()
            left = ast.Logical("and", left, right, span=self.span(tok))
        return left

    def not_expr(self) -> ast.Expression:
        if self.at("keyword", "not"):
            tok = self.advance()
            return ast.Not(self.not_expr(), span=self.span(tok))
        return self.comparison()

    def comparison(self) -> ast.Expression:
        left = self.additive()
        if self.peek().kind in _CMP_OPS:
            tok = self.advance()
            right = self.additive()
            return ast.Comparison(tok.kind, left, right, span=self.span(tok))
        return left

    def additive(self) -> ast.Expression:
        left = self.multiplicative()
        while self.peek().kind in ("+", "-"):
            tok = self.advance()
            right = self.multiplicative()
            left = ast.Arithmetic(tok.kind, left, right, span=self.span(tok))
        return left

    def multiplicative(self) -> ast.Expression:
        left = self.unary()
        while self.peek().kind in ("*", "/"):
            tok = self.advance()
            right = self.unary()
            left = ast.Arithmetic(tok.kind, left, right, span=self.span(tok))
        return left

    def unary(self) -> ast.Expression:
        if self.at("-"):
            tok = self.advance()
            if self.at("number"):
                num = self.advance()
                return ast.Literal(-float(num.text), span=self.span(tok))
            operand = self.unary()
            return ast.Arithmetic(
                "-", ast.Literal(0.0, span=self.span(tok)), operand, span=self.span(tok)
            )
        return self.primary()

    def primary(self) -> ast.Expression:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return ast.Literal(float(tok.text), span=self.span(tok))
        if tok.kind == "string":
            self.advance()
            return ast.Literal(tok.text, span=self.span(tok))
        if tok.kind == "keyword" and tok.text in ("true", "false"):
            self.advance()
            return ast.Literal(tok.text == "true", span=self.span(tok))
        if tok.kind == "keyword" and tok.text == "null":
            self.advance()
            return ast.Literal(None, span=self.span(tok))
        if tok.kind == "ident":
            self.advance()
            return ast.ColumnRef(tok.text, span=self.span(tok))
        if tok.kind == "(":
            self.advance()
            inner = self.arith()
            self.expect(")")
            return inner
        if tok.kind == "agg":
            self.fail("aggregation not allowed inside an arithmetic expression", tok)
        self.fail("expected an expression", tok)


def parse_metric_set(source: str, name: str = "metricset") -> ast.MetricSet:
    """Parse and structurally validate metric set source.

    Raises DiagnosticError with source locations on any problem. The result
    round-trips through the pretty printer.
    """
    ms = _Parser(tokenize(source)).parse_metric_set(name)
    problems = validate_structure(ms)
    if problems:
        raise DiagnosticError(problems)
    return ms


def _loc(node) -> tuple[int, int]:
    span = getattr(node, "span", None)
    if span is None:
        return (0, 0)
    return (span.line, span.col)


def validate_structure(ms: ast.MetricSet) -> list[Diagnostic]:
    """Checks that need no schema: names, nesting levels, rank bounds."""
    problems: list[Diagnostic] = []

    def err(msg: str, node) -> None:
        line, col = _loc(node)
        problems.append(error_at(msg, line, col))

    for label, items in (
        ("unit", ms.units),
        ("metric", ms.metrics),
        ("segment", ms.segments),
        ("group", ms.groups),
    ):
        first: dict[str, object] = {}
        for item in items:
            if item.name in first:
                line, col = _loc(first[item.name])
                err(
                    f"duplicate {label} '{item.name}' (first defined at line {line}, col {col})",
                    item,
                )
            else:
                first[item.name] = item

    unit_names = {u.name for u in ms.units}
    metric_names = {m.name for m in ms.metrics}

    for g in ms.groups:
        for member in g.members:
            if member not in metric_names:
                err(f"group '{g.name}' references unknown metric '{member}'", g)

    def check_agg(node: ast.Aggregation, where: str) -> None:
        if node.level is not None and node.level not in unit_names:
            err(f"{where}: aggregation level '{node.level}' is not a declared unit", node)
        if node.kind is AggKind.PERCENTILE:
            if node.rank is None:
                err(f"{where}: Percentile requires a rank argument", node)
            elif not (0 < node.rank <= 100):
                err(f"{where}: Percentile rank must be in (0, 100]", node)
        elif node.rank is not None:
            err(f"{where}: only Percentile takes a rank argument", node)
        if node.kind is not AggKind.COUNT and node.arg is None:
            err(f"{where}: {node.kind.value} requires an argument", node)
        inner = [n for n in ast.walk(node) if isinstance(n, ast.Aggregation) and n is not node]
        if node.level is not None and inner:
            err(f"{where}: a unit-level aggregation cannot contain another aggregation", node)
        for sub in inner:
            if sub.level is None:
                err(
                    f"{where}: a population-level aggregation cannot be nested "
                    "inside another aggregation",
                    sub,
                )
            else:
                check_agg(sub, where)

    for m in ms.metrics:
        where = f"metric '{m.name}'"
        if not isinstance(m.expr, ast.Aggregation):
            err(f"{where}: a metric must be an aggregation", m)
            continue
        if m.expr.level is not None:
            err(f"{where}: the outermost aggregation must be population-level", m.expr)
        depth = ast.agg_depth(m.expr)
        if depth > 2:
            err(f"{where}: aggregation nesting depth {depth} exceeds the maximum of 2", m)
            continue
        check_agg(m.expr, where)

    for s in ms.segments:
        if any(isinstance(n, ast.Aggregation) for n in ast.walk(s.expr)):
            err(f"segment '{s.name}' must not contain an aggregation", s)

    return problems
