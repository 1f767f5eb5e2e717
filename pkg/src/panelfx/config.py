"""Key-value configuration files.

The same plain-text format carries column schemas, bin specifications and
synthetic-panel configs::

    # comment
    [schema]
    posts = outcome_raw
    city_id = city, cluster

Keys before the first ``[section]`` header land in the ``main`` section.
Bin names such as ``precip=0`` may appear as keys: a line splits at its first
``=`` with whitespace on both sides, or at its first ``=`` if there is none.
"""

import configparser
import re
from pathlib import Path

from .errors import InvalidConfig

MAIN = "main"
SEP = "\ue000"  # private-use char, never whitespace
_SPACED = re.compile(r"\s=\s")


def _parser():
    cp = configparser.ConfigParser(
        delimiters=(SEP,),
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=("#",),
        interpolation=None,
        default_section="__defaults__",
    )
    cp.optionxform = str
    return cp


def _split_line(line):
    body = line.strip()
    if not body or body[0] in "#;[" or line[0].isspace() or "=" not in body:
        return line
    m = _SPACED.search(line)
    i = m.start() + 1 if m else line.index("=")
    return line[:i].rstrip() + SEP + line[i + 1:].lstrip()


def parse_kv(text):
    """Parse key-value text into ``{section: {key: value}}``."""
    cp = _parser()
    text = "\n".join(_split_line(ln) for ln in text.splitlines())
    try:
        cp.read_string(f"[{MAIN}]\n" + text)
    except configparser.Error as exc:
        raise InvalidConfig(str(exc)) from exc
    return {s: dict(cp.items(s)) for s in cp.sections() if cp.items(s) or s != MAIN}


def read_kv(path):
    path = Path(path)
    if not path.exists():
        raise InvalidConfig(f"config file not found: {path}")
    return parse_kv(path.read_text(encoding="utf-8"))


def dump_kv(sections):
    """Render ``{section: {key: value}}`` back to text (``main`` first, headerless)."""
    lines = []
    main = sections.get(MAIN)
    if main:
        lines += [f"{k} = {v}" for k, v in main.items()]
        lines.append("")
    for name, body in sections.items():
        if name == MAIN:
            continue
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in body.items()]
        lines.append("")
    return "\n".join(lines)


def write_kv(path, sections):
    Path(path).write_text(dump_kv(sections), encoding="utf-8")


def split_list(value):
    return [v.strip() for v in str(value).split(",") if v.strip()]


def to_bool(value):
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise InvalidConfig(f"not a boolean: {value!r}")
