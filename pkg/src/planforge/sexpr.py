"""Tiny s-expression reader/printer used by the schema and plan file formats."""

from __future__ import annotations


class SexprError(ValueError):
    def __init__(self, msg, line=None):
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)
        self.line = line


_ATOM_END = set('()"; \t\r\n')


def tokenize(text):
    """Yield (kind, value, line) tokens; kind in {'(', ')', 'atom', 'str'}."""
    i, n, line = 0, len(text), 1
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            i += 1
        elif c in " \t\r":
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            yield (c, c, line)
            i += 1
        elif c == '"':
            j = i + 1
            buf = []
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    buf.append(text[j + 1])
                    j += 2
                else:
                    buf.append(text[j])
                    j += 1
            if j >= n:
                raise SexprError("unterminated string literal", line)
            yield ("str", "".join(buf), line)
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in _ATOM_END:
                j += 1
            yield ("atom", text[i:j], line)
            i = j


class String(str):
    """Marks an atom that came from a double-quoted literal."""


def parse_all(text):
    """Parse every top-level form in `text` into nested lists of atoms.

    Atoms are plain strings; quoted strings come back as `String` so callers
    can tell `MAIL` apart from `"MAIL"`.
    """
    stack = [[]]
    lines = [0]
    for kind, value, line in tokenize(text):
        if kind == "(":
            stack.append([])
            lines.append(line)
        elif kind == ")":
            if len(stack) == 1:
                raise SexprError("unbalanced ')'", line)
            done = stack.pop()
            lines.pop()
            stack[-1].append(done)
        elif kind == "str":
            stack[-1].append(String(value))
        else:
            stack[-1].append(value)
    if len(stack) != 1:
        raise SexprError("unbalanced '('", lines[-1])
    return stack[0]


def dumps(form, indent=0):
    """Render a nested-list form back to text (stable, diff-friendly)."""
    if isinstance(form, String):
        escaped = form.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(form, str):
        return form
    if isinstance(form, (int, float)):
        return repr(form)
    parts = [dumps(f) for f in form]
    flat = "(" + " ".join(parts) + ")"
    if len(flat) <= 100 - indent:
        return flat
    pad = " " * (indent + 2)
    body = ("\n" + pad).join(dumps(f, indent + 2) for f in form)
    return "(" + body + ")"
