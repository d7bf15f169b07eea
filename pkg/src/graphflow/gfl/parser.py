"""GFL parser: indentation-structured declarations with s-expression terms.

The surface syntax mixes three layers:

  * block layer — significant indentation, `key: value` lines, `- item`
    lists, and node lines inside `model:`;
  * term layer — whitespace-insensitive s-expressions `(:head ...)`, map
    literals `{ .key: term }`, bracket lists `[:a, :b]`, paths `$.a.b`,
    keywords, strings, numbers, booleans, null;
  * literal blocks — `description: |` captures raw indented prose.

A `key:` whose inline value leaves parens/braces unbalanced pulls following
physical lines until balanced, so multi-line action payloads parse as one
term. First error wins per document: parsing raises ParseError.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from graphflow.predicates import (
    And,
    Compare,
    COMPARE_OPS,
    Keyword,
    Literal,
    Predicate,
    PROPERTY_KINDS,
    PropertyClaim,
    Term,
    Value,
    VarPath,
    WithTag,
)

from .ast import (
    ActionDecl,
    ArgValue,
    Declaration,
    DiagramDecl,
    EdgeRef,
    FieldFilter,
    Filter,
    LaneDecl,
    MetricDecl,
    NodeDecl,
    QueryDecl,
    SourceDocument,
    SwimlaneAssignment,
    TagFilter,
    TriggerDecl,
    slugify,
)

NODE_TYPES = (
    "task",
    "meeting",
    "report",
    "object",
    "decision",
    "queue",
    "wait",
    "milestone",
    "diagram",
)

EDGE_LABELS = ("to", "yes", "no", "maybe")


class ParseError(Exception):
    def __init__(self, message: str, line: int, column: int, context: str = ""):
        loc = f"line {line}, column {column}"
        super().__init__(f"{message} ({loc})" + (f" near {context!r}" if context else ""))
        self.message = message
        self.line = line
        self.column = column
        self.context = context


# ---------------------------------------------------------------------------
# Physical lines
# ---------------------------------------------------------------------------


@dataclass
class Line:
    number: int  # 1-based
    indent: int
    text: str  # comment-stripped content
    raw: str  # original line, untouched


def _strip_comment(raw: str) -> str:
    in_str = False
    i = 0
    while i < len(raw):
        ch = raw[i]
        if in_str:
            if ch == "\\":
                i += 1
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "#":
            return raw[:i]
        i += 1
    return raw


def _split_lines(text: str) -> list[Line]:
    lines: list[Line] = []
    for idx, raw in enumerate(text.replace("\r\n", "\n").split("\n"), start=1):
        stripped = _strip_comment(raw)
        content = stripped.strip()
        indent = len(stripped) - len(stripped.lstrip(" "))
        lines.append(Line(idx, indent, content, raw))
    return lines


def _bracket_delta(text: str) -> int:
    depth = 0
    in_str = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_str:
            if ch == "\\":
                i += 1
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch in "({[":
            depth += 1
        elif ch in ")}]":
            depth -= 1
        i += 1
    return depth


class Cursor:
    """Iterator over meaningful lines (blank lines skipped, not consumed blindly)."""

    def __init__(self, lines: list[Line]):
        self.lines = lines
        self.i = 0

    def peek(self) -> Line | None:
        j = self.i
        while j < len(self.lines):
            if self.lines[j].text:
                return self.lines[j]
            j += 1
        return None

    def advance(self) -> Line:
        line = self.peek()
        assert line is not None
        self.i = self.lines.index(line, self.i) + 1
        return line

    def pull_continuation(self, first: Line) -> tuple[str, Line]:
        """Join physical lines until brackets balance; returns merged text."""
        parts = [first.text]
        depth = _bracket_delta(first.text)
        while depth > 0:
            if self.i >= len(self.lines):
                raise ParseError("unbalanced brackets", first.number, first.indent + 1, first.text)
            nxt = self.lines[self.i]
            self.i += 1
            parts.append(nxt.text)
            depth += _bracket_delta(nxt.text)
        return "\n".join(parts), first


# ---------------------------------------------------------------------------
# Term tokens
# ---------------------------------------------------------------------------


@dataclass
class Tok:
    kind: str  # punct kinds are their own text: ( ) { } [ ] , :
    value: str | float | int
    line: int
    col: int


_WORD_CHARS = re.compile(r"[A-Za-z0-9_-]")
_NUM_RE = re.compile(r"-?\d+(\.\d+)?")


def tokenize(text: str, line0: int, col0: int) -> list[Tok]:
    toks: list[Tok] = []
    line, col = line0, col0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t":
            i += 1
            col += 1
            continue
        if ch in "(){}[],":
            toks.append(Tok(ch, ch, line, col))
            i += 1
            col += 1
            continue
        if ch == '"':
            j = i + 1
            buf: list[str] = []
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    esc = text[j + 1]
                    buf.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc, esc))
                    j += 2
                else:
                    buf.append(text[j])
                    j += 1
            if j >= n:
                raise ParseError("unterminated string", line, col, text[i : i + 12])
            toks.append(Tok("string", "".join(buf), line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch == "$" and text[i : i + 2] == "$.":
            j = i + 2
            while j < n and (_WORD_CHARS.match(text[j]) or text[j] == "."):
                if text[j : j + 3] == "-->":
                    break
                j += 1
            segs = text[i + 2 : j].rstrip(".")
            if not segs:
                raise ParseError("empty variable path", line, col, "$.")
            toks.append(Tok("path", segs, line, col))
            col += j - i
            i = j
            continue
        if ch == ":":
            j = i + 1
            while j < n and _WORD_CHARS.match(text[j]):
                if text[j : j + 3] == "-->":
                    break
                j += 1
            word = text[i + 1 : j]
            if word:
                toks.append(Tok("keyword", word, line, col))
            else:
                toks.append(Tok(":", ":", line, col))
            col += j - i
            i = j
            continue
        if ch == "." and i + 1 < n and _WORD_CHARS.match(text[i + 1]):
            j = i + 1
            while j < n and _WORD_CHARS.match(text[j]):
                j += 1
            toks.append(Tok("dotkey", text[i + 1 : j], line, col))
            col += j - i
            i = j
            continue
        m = _NUM_RE.match(text, i)
        if m and (ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit())):
            word = m.group(0)
            val: int | float = float(word) if "." in word else int(word)
            toks.append(Tok("number", val, line, col))
            col += len(word)
            i = m.end()
            continue
        if ch == "-" and text[i : i + 3] != "-->":
            toks.append(Tok("dash", "-", line, col))
            i += 1
            col += 1
            continue
        if text[i : i + 3] == "-->":
            toks.append(Tok("arrow", "-->", line, col))
            i += 3
            col += 3
            continue
        if _WORD_CHARS.match(ch):
            j = i
            while j < n and _WORD_CHARS.match(text[j]):
                if text[j : j + 3] == "-->":
                    break
                j += 1
            toks.append(Tok("word", text[i:j], line, col))
            col += j - i
            i = j
            continue
        raise ParseError("unexpected character", line, col, ch)
    return toks


class TokStream:
    def __init__(self, toks: list[Tok], end_line: int, end_col: int):
        self.toks = toks
        self.i = 0
        self.end = Tok("eof", "", end_line, end_col)

    def peek(self, ahead: int = 0) -> Tok:
        j = self.i + ahead
        return self.toks[j] if j < len(self.toks) else self.end

    def next(self) -> Tok:
        t = self.peek()
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, kind: str) -> Tok:
        t = self.next()
        if t.kind != kind:
            raise ParseError(f"expected {kind}, got {t.kind}", t.line, t.col, str(t.value))
        return t

    def at_end(self) -> bool:
        return self.peek().kind == "eof"


# ---------------------------------------------------------------------------
# Terms and predicates
# ---------------------------------------------------------------------------


def _parse_scalar(t: Tok) -> Value:
    if t.kind == "string":
        return str(t.value)
    if t.kind == "number":
        return t.value
    if t.kind == "keyword":
        return Keyword(str(t.value))
    if t.kind == "word":
        w = str(t.value)
        if w == "true":
            return True
        if w == "false":
            return False
        if w == "null":
            return None
        raise ParseError("unexpected bare word", t.line, t.col, w)
    raise ParseError("expected a value", t.line, t.col, str(t.value))


def parse_term(ts: TokStream) -> Term | "SExpr" | dict | list:
    t = ts.peek()
    if t.kind == "(":
        return _parse_sexpr(ts)
    if t.kind == "{":
        return _parse_map(ts)
    if t.kind == "[":
        return _parse_bracket_list(ts)
    if t.kind == "path":
        ts.next()
        return VarPath(tuple(str(t.value).split(".")))
    ts.next()
    return Literal(_parse_scalar(t))


@dataclass
class SExpr:
    head: str
    args: list  # terms / nested SExpr
    kwmap: dict | None  # parsed `{ .k: v }` payload, if any
    line: int
    col: int


def _parse_sexpr(ts: TokStream) -> SExpr:
    lp = ts.expect("(")
    head = ts.expect("keyword")
    args: list = []
    kwmap: dict | None = None
    while not ts.at_end() and ts.peek().kind != ")":
        if ts.peek().kind == "{":
            kwmap = _parse_map(ts)
        else:
            args.append(parse_term(ts))
    ts.expect(")")
    return SExpr(str(head.value), args, kwmap, lp.line, lp.col)


def _parse_map(ts: TokStream) -> dict:
    ts.expect("{")
    out: dict[str, object] = {}
    while not ts.at_end() and ts.peek().kind != "}":
        key = ts.expect("dotkey")
        ts.expect(":")
        if ts.peek().kind == "dash":
            out[str(key.value)] = _parse_inline_filters(ts)
        else:
            out[str(key.value)] = parse_term(ts)
    ts.expect("}")
    return out


def _parse_inline_filters(ts: TokStream) -> tuple[Filter, ...]:
    """`- with: :tag` items inside a map payload (single pair per item)."""
    filters: list[Filter] = []
    while ts.peek().kind == "dash":
        ts.next()
        word = ts.expect("word")
        ts.expect(":")
        mode = str(word.value)
        if mode not in ("with", "without"):
            raise ParseError("expected with/without filter", word.line, word.col, mode)
        tag = ts.expect("keyword")
        filters.append(TagFilter(mode, Keyword(str(tag.value))))
    return tuple(filters)


def _parse_bracket_list(ts: TokStream) -> list:
    ts.expect("[")
    items: list = []
    while not ts.at_end() and ts.peek().kind != "]":
        if ts.peek().kind == ",":
            ts.next()
            continue
        items.append(parse_term(ts))
    ts.expect("]")
    return items


def _as_term(v, line: int, col: int) -> Term:
    if isinstance(v, (VarPath, Literal)):
        return v
    raise ParseError("expected a term", line, col, str(v))


def to_predicate(v, line: int, col: int) -> Predicate:
    if not isinstance(v, SExpr):
        raise ParseError("expected a predicate s-expression", line, col, str(v))
    head = v.head
    if head == "and":
        items = tuple(to_predicate(a, v.line, v.col) for a in v.args)
        if not items:
            raise ParseError("empty :and", v.line, v.col)
        return And(items)
    if head in COMPARE_OPS:
        if len(v.args) != 2:
            raise ParseError(f":{head} takes two arguments", v.line, v.col)
        return Compare(head, _as_term(v.args[0], v.line, v.col), _as_term(v.args[1], v.line, v.col))
    if head == "with-tag":
        if len(v.args) != 2 or not isinstance(v.args[1], Literal) or not isinstance(v.args[1].value, Keyword):
            raise ParseError(":with-tag takes a resource and a tag keyword", v.line, v.col)
        return WithTag(_as_term(v.args[0], v.line, v.col), v.args[1].value)
    if head in PROPERTY_KINDS:
        return PropertyClaim(head, tuple(_as_term(a, v.line, v.col) for a in v.args))
    raise ParseError("unknown predicate", v.line, v.col, f":{head}")


def _to_arg_value(v, line: int, col: int) -> ArgValue:
    if isinstance(v, (VarPath, Literal)):
        return v
    if isinstance(v, tuple):  # filter list
        return v
    if isinstance(v, SExpr):
        return to_predicate(v, line, col)
    raise ParseError("unsupported action argument", line, col, str(v))


# ---------------------------------------------------------------------------
# Block parser
# ---------------------------------------------------------------------------

_KEY_RE = re.compile(r"^(?P<key>[A-Za-z][A-Za-z0-9_-]*):(?:\s+(?P<rest>.*))?$")
_VAR_RE = re.compile(r"^(?P<path>\$\.[A-Za-z0-9_.-]+):\s+(?P<rest>.*)$")
_NODE_RE = re.compile(
    r"^(?P<id>[A-Za-z0-9_-]+)\.\s+\[(?P<type>[a-z-]+)\]\s+"
    r'"(?P<label>(?:[^"\\]|\\.)*)"\s+@(?P<lane>[A-Za-z0-9_-]+)'
    r"(?P<edges>(?:\s*(?::[a-z]+)?\s*-->\s*[A-Za-z0-9_-]+)*)\s*:$"
)
_EDGE_RE = re.compile(r"(?::(?P<label>[a-z]+))?\s*-->\s*(?P<target>[A-Za-z0-9_-]+)")
_HEADER_RE = re.compile(
    r"^(?P<kind>diagram|query|metric|trigger)"
    r"(?:\s+\[(?P<role>[A-Za-z0-9_-]+)\])?"
    r"(?:\s+:(?P<slug>[A-Za-z0-9-]+))?"
    r'\s+"(?P<name>(?:[^"\\]|\\.)*)"\s*:$'
)


class Parser:
    def __init__(self, doc: SourceDocument):
        self.doc = doc
        self.cursor = Cursor(_split_lines(doc.text))

    # -- entry point --------------------------------------------------------

    def parse(self) -> list[Declaration]:
        decls: list[Declaration] = []
        seen: dict[tuple[str, str], int] = {}
        while True:
            line = self.cursor.peek()
            if line is None:
                break
            if line.indent != 0:
                raise ParseError("declarations must start at column 1", line.number, line.indent + 1, line.text)
            decl = self._parse_declaration()
            key = (decl.kind, decl.slug)
            if key in seen:
                raise ParseError(
                    f"duplicate {decl.kind} slug {decl.slug!r}", line.number, 1, decl.slug
                )
            seen[key] = line.number
            decls.append(decl)
        return decls

    def _parse_declaration(self) -> Declaration:
        line = self.cursor.advance()
        m = _HEADER_RE.match(line.text)
        if not m:
            word = line.text.split(":")[0].split()[0] if line.text else ""
            raise ParseError("unknown construct keyword", line.number, 1, word)
        kind = m.group("kind")
        name = m.group("name").replace('\\"', '"')
        slug = m.group("slug") or slugify(name)
        role = m.group("role")
        entries = self._read_entries(line.indent, model_key=(kind == "diagram"))
        if kind == "diagram":
            return self._build_diagram(name, slug, role, entries, line)
        if role is not None:
            raise ParseError(f"role tag not allowed on {kind}", line.number, 1, role)
        if kind == "query":
            return self._build_query(name, slug, entries, line)
        if kind == "metric":
            return self._build_metric(name, slug, entries, line)
        return self._build_trigger(name, slug, entries, line)

    # -- generic block reading ----------------------------------------------

    def _read_entries(self, parent_indent: int, model_key: bool = False) -> list[tuple[str, object, Line]]:
        """Read `key: value` entries of a block as (key, value, line) triples.

        Values are one of: scalar/term (already parsed), literal-block string,
        nested entry list, list of items, or node list (for `model:`).
        """
        entries: list[tuple[str, object, Line]] = []
        child_indent: int | None = None
        while True:
            line = self.cursor.peek()
            if line is None or line.indent <= parent_indent:
                break
            if child_indent is None:
                child_indent = line.indent
            if line.indent != child_indent:
                raise ParseError("inconsistent indentation", line.number, line.indent + 1, line.text)
            self.cursor.advance()
            mv = _VAR_RE.match(line.text)
            if mv:
                text, _ = self.cursor.pull_continuation(line)
                rest = text[len(mv.group("path")) + 1 :].strip()
                ts = _stream(rest, line)
                value = parse_term(ts)
                _expect_end(ts)
                entries.append((mv.group("path"), value, line))
                continue
            m = _KEY_RE.match(line.text)
            if m is None:
                raise ParseError("expected `key: value`", line.number, line.indent + 1, line.text)
            key = m.group("key")
            rest = m.group("rest")
            if rest is None or rest == "":
                if model_key and key == "model":
                    entries.append((key, self._read_nodes(line), line))
                else:
                    entries.append((key, self._read_nested(line), line))
            elif rest == "|":
                entries.append((key, self._read_literal_block(line), line))
            else:
                text, _ = self.cursor.pull_continuation(line)
                inline = text[text.index(":") + 1 :].strip()
                ts = _stream(inline, line)
                value = parse_term(ts)
                _expect_end(ts)
                entries.append((key, value, line))
        return entries

    def _read_nested(self, key_line: Line) -> object:
        nxt = self.cursor.peek()
        if nxt is None or nxt.indent <= key_line.indent:
            return []  # empty block
        if nxt.text.startswith("- ") or nxt.text == "-":
            return self._read_list(key_line.indent)
        return self._read_entries(key_line.indent)

    def _read_list(self, parent_indent: int) -> list[tuple[object, Line]]:
        items: list[tuple[object, Line]] = []
        item_indent: int | None = None
        while True:
            line = self.cursor.peek()
            if line is None or line.indent <= parent_indent:
                break
            if item_indent is None:
                item_indent = line.indent
            if line.indent != item_indent:
                raise ParseError("inconsistent list indentation", line.number, line.indent + 1, line.text)
            if not line.text.startswith("- "):
                raise ParseError("expected list item", line.number, line.indent + 1, line.text)
            self.cursor.advance()
            items.append((self._read_list_item(line, item_indent), line))
        return items

    def _read_list_item(self, line: Line, item_indent: int) -> object:
        body = line.text[2:].strip()
        m = _KEY_RE.match(body)
        if m and m.group("rest") not in (None, ""):
            # `- key: value` possibly followed by sibling pairs at deeper indent.
            pairs: list[tuple[str, object, Line]] = []
            text, _ = self.cursor.pull_continuation(
                Line(line.number, line.indent, body, line.raw)
            )
            inline = text[text.index(":") + 1 :].strip()
            ts = _stream(inline, line)
            value = parse_term(ts)
            _expect_end(ts)
            pairs.append((m.group("key"), value, line))
            pairs.extend(self._read_entries(item_indent))
            return pairs
        # Scalar item, e.g. `- "Sales"`, `- (:ne $.a null)`, or `- "System":`
        attrs_follow = body.endswith(":") and not _bracket_delta(body)
        scalar_text = body[:-1] if attrs_follow else body
        text, _ = self.cursor.pull_continuation(
            Line(line.number, line.indent, scalar_text, line.raw)
        )
        ts = _stream(text, line)
        value = parse_term(ts)
        _expect_end(ts)
        if attrs_follow:
            attrs = self._read_entries(item_indent)
            return (value, attrs)
        return value

    def _read_literal_block(self, key_line: Line) -> str:
        raw_lines: list[str] = []
        base_indent: int | None = None
        while self.cursor.i < len(self.cursor.lines):
            line = self.cursor.lines[self.cursor.i]
            stripped = line.raw.rstrip("\n")
            if stripped.strip() == "":
                raw_lines.append("")
                self.cursor.i += 1
                continue
            indent = len(stripped) - len(stripped.lstrip(" "))
            if indent <= key_line.indent:
                break
            if base_indent is None:
                base_indent = indent
            raw_lines.append(stripped[min(base_indent, indent) :])
            self.cursor.i += 1
        while raw_lines and raw_lines[-1] == "":
            raw_lines.pop()
        return "\n".join(raw_lines)

    # -- node parsing ---------------------------------------------------------

    def _read_nodes(self, model_line: Line) -> list[NodeDecl]:
        nodes: list[NodeDecl] = []
        node_indent: int | None = None
        seen_ids: set[str] = set()
        while True:
            line = self.cursor.peek()
            if line is None or line.indent <= model_line.indent:
                break
            if node_indent is None:
                node_indent = line.indent
            if line.indent != node_indent:
                raise ParseError("inconsistent node indentation", line.number, line.indent + 1, line.text)
            self.cursor.advance()
            nodes.append(self._parse_node(line, seen_ids))
        if not nodes:
            raise ParseError("model block is empty", model_line.number, model_line.indent + 1)
        return nodes

    def _parse_node(self, line: Line, seen_ids: set[str]) -> NodeDecl:
        m = _NODE_RE.match(line.text)
        if not m:
            raise ParseError("malformed node line", line.number, line.indent + 1, line.text)
        node_id = m.group("id")
        if node_id in seen_ids:
            raise ParseError("duplicate node id", line.number, line.indent + 1, node_id)
        seen_ids.add(node_id)
        ntype = m.group("type")
        if ntype not in NODE_TYPES:
            raise ParseError("unknown node type", line.number, line.indent + 1, ntype)
        edges: list[EdgeRef] = []
        for em in _EDGE_RE.finditer(m.group("edges") or ""):
            label = em.group("label") or "to"
            if label not in EDGE_LABELS:
                raise ParseError("unknown edge label", line.number, line.indent + 1, label)
            edges.append(EdgeRef(label, em.group("target")))

        fields: dict[str, object] = {}
        for key, value, kline in self._read_entries(line.indent):
            if key == "description":
                fields["description"] = _expect_text(value, kline)
            elif key == "ext-type":
                fields["ext_type"] = _expect_str(value, kline)
            elif key == "assigned":
                fields["assigned"] = _keyword_names(value, kline)
            elif key == "requires":
                fields["requires"] = _single_predicate(value, kline)
            elif key == "ensures":
                fields["ensures"] = _single_predicate(value, kline)
            elif key == "properties":
                fields["properties"] = _property_list(value, kline)
            elif key == "action":
                fields["action"] = self._build_action(value, kline)
            elif key == "layout":
                fields["layout"] = _pair_of_numbers(value, kline)
            elif key == "weight":
                fields["weight"] = _pair_of_numbers(value, kline)
            else:
                raise ParseError("unknown node key", kline.number, kline.indent + 1, key)
        return NodeDecl(
            id=node_id,
            type=ntype,
            label=m.group("label").replace('\\"', '"'),
            lane=m.group("lane").lower(),
            edges=tuple(edges),
            **fields,  # type: ignore[arg-type]
        )

    def _build_action(self, value: object, line: Line) -> ActionDecl:
        if not isinstance(value, list):
            raise ParseError("action must be a block", line.number, line.indent + 1)
        callee: str | None = None
        args: tuple[tuple[str, ArgValue], ...] = ()
        pos: tuple[Term, ...] = ()
        assigns: VarPath | None = None
        requires: Predicate | None = None
        ensures: Predicate | None = None
        for key, v, kline in value:
            if key == "calls":
                if isinstance(v, Literal) and isinstance(v.value, Keyword):
                    callee = v.value.name
                elif isinstance(v, SExpr):
                    callee = v.head
                    out: list[tuple[str, ArgValue]] = []
                    if v.kwmap:
                        for k, mv in v.kwmap.items():
                            out.append((k, _to_arg_value(mv, kline.number, kline.indent + 1)))
                    args = tuple(out)
                    pos = tuple(_as_term(a, kline.number, kline.indent + 1) for a in v.args)
                else:
                    raise ParseError("calls must be a keyword or s-expression", kline.number, kline.indent + 1)
            elif key == "assigns":
                if not isinstance(v, VarPath):
                    raise ParseError("assigns must be a variable path", kline.number, kline.indent + 1)
                assigns = v
            elif key == "requires":
                requires = _single_predicate(v, kline)
            elif key == "ensures":
                ensures = _single_predicate(v, kline)
            else:
                raise ParseError("unknown action key", kline.number, kline.indent + 1, key)
        if callee is None:
            raise ParseError("action without calls", line.number, line.indent + 1)
        return ActionDecl(callee=callee, args=args, pos=pos, assigns=assigns, requires=requires, ensures=ensures)

    # -- declaration builders -------------------------------------------------

    def _build_diagram(
        self, name: str, slug: str, role: str | None, entries: list, header: Line
    ) -> DiagramDecl:
        fields: dict[str, object] = {}
        nodes: tuple[NodeDecl, ...] = ()
        for key, value, line in entries:
            if key == "description":
                fields["description"] = _expect_text(value, line)
            elif key == "swimlanes":
                fields["lanes"] = self._lanes(value, line)
            elif key in ("inputs", "outputs"):
                fields[key] = _typed_map(value, line)
            elif key in ("requires", "ensures"):
                fields[key] = _predicate_list(value, line)
            elif key == "properties":
                fields["properties"] = _property_list(value, line)
            elif key == "variables":
                fields["variables"] = _variables(value, line)
            elif key == "model":
                nodes = tuple(value)  # type: ignore[arg-type]
            else:
                raise ParseError("unknown diagram key", line.number, line.indent + 1, key)
        return DiagramDecl(name=name, slug=slug, role=role, nodes=nodes, **fields)  # type: ignore[arg-type]

    def _lanes(self, value: object, line: Line) -> tuple[LaneDecl, ...]:
        if not isinstance(value, list):
            raise ParseError("swimlanes must be a list", line.number, line.indent + 1)
        lanes: list[LaneDecl] = []
        for item, iline in value:
            if isinstance(item, tuple) and len(item) == 2 and isinstance(item[1], list):
                scalar, attrs = item
                lane_name = _expect_str(scalar, iline)
                attr_pairs = tuple((k, _scalar_value(v, ln)) for k, v, ln in attrs)
                lanes.append(LaneDecl(lane_name, attr_pairs))
            else:
                lanes.append(LaneDecl(_expect_str(item, iline)))
        return tuple(lanes)

    def _build_query(self, name: str, slug: str, entries: list, header: Line) -> QueryDecl:
        fields: dict[str, object] = {}
        for key, value, line in entries:
            if key == "description":
                fields["description"] = _expect_text(value, line)
            elif key == "resource-type":
                fields["resource_type"] = _expect_keyword(value, line)
            elif key == "ext-type":
                fields["ext_type"] = _expect_str(value, line)
            elif key == "filters":
                fields["filters"] = _filters(value, line)
            else:
                raise ParseError("unknown query key", line.number, line.indent + 1, key)
        if "resource_type" not in fields:
            raise ParseError("query needs a resource-type", header.number, 1, slug)
        return QueryDecl(name=name, slug=slug, **fields)  # type: ignore[arg-type]

    def _build_metric(self, name: str, slug: str, entries: list, header: Line) -> MetricDecl:
        fields: dict[str, object] = {}
        for key, value, line in entries:
            if key == "description":
                fields["description"] = _expect_text(value, line)
            elif key == "query":
                fields["query"] = _expect_keyword(value, line).name
            elif key == "aggregation":
                agg = _expect_keyword(value, line).name
                if agg not in ("count", "sum", "avg"):
                    raise ParseError("unknown aggregation", line.number, line.indent + 1, agg)
                fields["aggregation"] = agg
            elif key == "field":
                fields["field"] = _expect_keyword(value, line)
            elif key == "schedule":
                fields["schedule"] = _interval(value, line)
            else:
                raise ParseError("unknown metric key", line.number, line.indent + 1, key)
        if "query" not in fields:
            raise ParseError("metric needs a query", header.number, 1, slug)
        if fields.get("aggregation") in ("sum", "avg") and "field" not in fields:
            raise ParseError("sum/avg metric needs a field", header.number, 1, slug)
        return MetricDecl(name=name, slug=slug, **fields)  # type: ignore[arg-type]

    def _build_trigger(self, name: str, slug: str, entries: list, header: Line) -> TriggerDecl:
        fields: dict[str, object] = {}
        for key, value, line in entries:
            if key == "description":
                fields["description"] = _expect_text(value, line)
            elif key == "trigger-type":
                fields["trigger_type"] = _expect_keyword(value, line)
            elif key == "active":
                fields["active"] = _expect_bool(value, line)
            elif key == "auto-start":
                fields["auto_start"] = _expect_bool(value, line)
            elif key == "schedule":
                fields["schedule"] = _interval(value, line)
            elif key == "repeat":
                fields["repeat"] = _interval(value, line)
            elif key == "source":
                fields["source_query"] = _nested_keyword(value, "query", line).name
            elif key == "calls":
                fields["calls"] = _expect_keyword(value, line).name
            elif key == "assignment":
                fields["assignments"] = _assignments(value, line)
            else:
                raise ParseError("unknown trigger key", line.number, line.indent + 1, key)
        if "source_query" not in fields or "calls" not in fields:
            raise ParseError("trigger needs source and calls", header.number, 1, slug)
        return TriggerDecl(name=name, slug=slug, **fields)  # type: ignore[arg-type]


def _stream(text: str, line: Line) -> TokStream:
    toks = tokenize(text, line.number, line.indent + 1)
    return TokStream(toks, line.number, line.indent + len(line.text) + 1)


def _expect_end(ts: TokStream) -> None:
    if not ts.at_end():
        t = ts.peek()
        raise ParseError("unexpected trailing tokens", t.line, t.col, str(t.value))


def _expect_text(value: object, line: Line) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, Literal) and isinstance(value.value, str):
        return value.value
    raise ParseError("expected text", line.number, line.indent + 1, str(value))


def _expect_str(value: object, line: Line) -> str:
    if isinstance(value, Literal) and isinstance(value.value, str):
        return value.value
    raise ParseError("expected a string", line.number, line.indent + 1, str(value))


def _scalar_value(value: object, line: Line) -> Value:
    if isinstance(value, Literal):
        return value.value
    raise ParseError("expected a scalar", line.number, line.indent + 1, str(value))


def _expect_keyword(value: object, line: Line) -> Keyword:
    if isinstance(value, Literal) and isinstance(value.value, Keyword):
        return value.value
    raise ParseError("expected a keyword", line.number, line.indent + 1, str(value))


def _expect_bool(value: object, line: Line) -> bool:
    if isinstance(value, Literal) and isinstance(value.value, bool):
        return value.value
    raise ParseError("expected true/false", line.number, line.indent + 1, str(value))


def _single_predicate(value: object, line: Line) -> Predicate:
    if isinstance(value, SExpr):
        return to_predicate(value, line.number, line.indent + 1)
    raise ParseError("expected a predicate", line.number, line.indent + 1, str(value))


def _predicate_list(value: object, line: Line) -> tuple[Predicate, ...]:
    if isinstance(value, SExpr):  # single inline predicate
        return (to_predicate(value, line.number, line.indent + 1),)
    if isinstance(value, list):
        out = []
        for item, iline in value:
            out.append(_single_predicate(item, iline))
        return tuple(out)
    raise ParseError("expected predicates", line.number, line.indent + 1, str(value))


def _property_list(value: object, line: Line) -> tuple[PropertyClaim, ...]:
    preds = _predicate_list(value, line)
    out = []
    for p in preds:
        if not isinstance(p, PropertyClaim):
            raise ParseError("expected a property claim", line.number, line.indent + 1, p.to_gfl())
        out.append(p)
    return tuple(out)


def _typed_map(value: object, line: Line) -> tuple[tuple[str, Keyword], ...]:
    if not isinstance(value, dict):
        raise ParseError("expected `{ .name: :type }`", line.number, line.indent + 1, str(value))
    out = []
    for k, v in value.items():
        if not (isinstance(v, Literal) and isinstance(v.value, Keyword)):
            raise ParseError("expected a type keyword", line.number, line.indent + 1, k)
        out.append((k, v.value))
    return tuple(out)


def _variables(value: object, line: Line) -> tuple[tuple[VarPath, Value], ...]:
    if not isinstance(value, list):
        raise ParseError("expected variable bindings", line.number, line.indent + 1)
    out = []
    for key, v, kline in value:
        if not key.startswith("$."):
            raise ParseError("variables are $.paths", kline.number, kline.indent + 1, key)
        path = VarPath(tuple(key[2:].split(".")))
        out.append((path, _scalar_value(v, kline)))
    return tuple(out)


def _keyword_names(value: object, line: Line) -> tuple[str, ...]:
    if not isinstance(value, list):
        raise ParseError("expected a keyword list", line.number, line.indent + 1)
    out = []
    for item in value:
        if not (isinstance(item, Literal) and isinstance(item.value, Keyword)):
            raise ParseError("expected keywords", line.number, line.indent + 1, str(item))
        out.append(item.value.name)
    return tuple(out)


def _pair_of_numbers(value: object, line: Line) -> tuple[float, float]:
    if isinstance(value, list) and len(value) == 2:
        a, b = value
        if isinstance(a, Literal) and isinstance(b, Literal):
            av, bv = a.value, b.value
            if isinstance(av, (int, float)) and isinstance(bv, (int, float)):
                return (float(av), float(bv))
    raise ParseError("expected [x, y]", line.number, line.indent + 1, str(value))


def _filters(value: object, line: Line) -> tuple[Filter, ...]:
    if not isinstance(value, list):
        raise ParseError("filters must be a list", line.number, line.indent + 1)
    out: list[Filter] = []
    for item, iline in value:
        if not isinstance(item, list):
            raise ParseError("malformed filter", iline.number, iline.indent + 1, str(item))
        pairs = {k: (v, ln) for k, v, ln in item}
        if "with" in pairs:
            out.append(TagFilter("with", _expect_keyword(pairs["with"][0], iline)))
        elif "without" in pairs:
            out.append(TagFilter("without", _expect_keyword(pairs["without"][0], iline)))
        elif "field" in pairs:
            missing = {"operator", "value"} - set(pairs)
            if missing:
                raise ParseError(f"field filter missing {sorted(missing)}", iline.number, iline.indent + 1)
            op = _expect_keyword(pairs["operator"][0], iline).name
            if op not in COMPARE_OPS:
                raise ParseError("unknown filter operator", iline.number, iline.indent + 1, op)
            out.append(
                FieldFilter(
                    _expect_keyword(pairs["field"][0], iline),
                    op,
                    _scalar_value(pairs["value"][0], iline),
                )
            )
        else:
            raise ParseError("filter needs with/without/field", iline.number, iline.indent + 1)
    return tuple(out)


def _interval(value: object, line: Line) -> str:
    return _nested_keyword(value, "interval", line).name


def _nested_keyword(value: object, key: str, line: Line) -> Keyword:
    if isinstance(value, list):
        for k, v, kline in value:
            if k == key:
                return _expect_keyword(v, kline)
    raise ParseError(f"expected nested `{key}:`", line.number, line.indent + 1)


def _assignments(value: object, line: Line) -> tuple[SwimlaneAssignment, ...]:
    if not isinstance(value, list):
        raise ParseError("assignment must be a list", line.number, line.indent + 1)
    out = []
    for item, iline in value:
        if not isinstance(item, SExpr) or item.kwmap is None:
            raise ParseError("expected an assignment s-expression", iline.number, iline.indent + 1)
        op = item.head
        if op not in ("assign-swimlane-contact", "assign-swimlane-contact-by-ext-id"):
            raise ParseError("unknown assignment op", iline.number, iline.indent + 1, op)
        lane = item.kwmap.get("swimlane")
        if not (isinstance(lane, Literal) and isinstance(lane.value, Keyword)):
            raise ParseError("assignment needs .swimlane", iline.number, iline.indent + 1)
        term_key = "contactId" if op == "assign-swimlane-contact" else "extId"
        term = item.kwmap.get(term_key)
        if not isinstance(term, (VarPath, Literal)):
            raise ParseError(f"assignment needs .{term_key}", iline.number, iline.indent + 1)
        out.append(SwimlaneAssignment(op, lane.value.name, term))
    return tuple(out)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def parse(doc: SourceDocument | str) -> list[Declaration]:
    """Parse a GFL document into declarations, in document order."""
    if isinstance(doc, str):
        doc = SourceDocument(doc)
    return Parser(doc).parse()


def parse_file(path: str) -> list[Declaration]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(SourceDocument(fh.read(), origin=path))
