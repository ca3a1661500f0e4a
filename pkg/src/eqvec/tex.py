"""LaTeX article handling: pull display math out of prose, tokenize what remains.

A document is reduced to a stream of lowercase word tokens plus one
placeholder token per display-math region.  Placeholders carry a
document-local equation id; the corpus layer later maps those to global
equation ids after deduplication.
"""

import logging
import re
from dataclasses import dataclass

log = logging.getLogger(__name__)

# Placeholder markers survive word tokenization because they use bracket
# characters that never occur in real LaTeX prose.
PLACEHOLDER_FMT = "\u27e6eq:{}\u27e7"
PLACEHOLDER_RE = re.compile(r"\u27e6eq:(\d+)\u27e7")

# Display-math environments recognized by the extractor.  Each row of a
# multi-line environment becomes its own equation.
DISPLAY_ENVS = ("equation", "equation*", "align", "align*", "eqnarray", "displaymath")
MULTILINE_ENVS = frozenset({"align", "align*", "eqnarray"})

_ENV_BEGIN = re.compile(
    r"\\begin\{(" + "|".join(re.escape(e) for e in DISPLAY_ENVS) + r")\}"
)
_DOLLAR_PAIR = re.compile(r"\$\$(.*?)\$\$", re.DOTALL)
_BRACKET_PAIR = re.compile(r"\\\[(.*?)\\\]", re.DOTALL)

_COMMENT = re.compile(r"(?<!\\)%[^\n]*")
_LABEL = re.compile(r"\\label\{[^{}]*\}")
_WS_RUN = re.compile(r"\s+")


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    source_text: str

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.source_text:
            raise ValueError(f"document {self.doc_id!r} has empty source text")


@dataclass
class EquationRecord:
    eq_id: int
    doc_id: str
    latex: str
    occurrence_count: int


def strip_comments(text: str) -> str:
    """Drop unescaped %-comments, keeping line structure intact."""
    return _COMMENT.sub("", text)


def normalize_equation(latex: str) -> str:
    """Canonical form used for deduplication: no labels, collapsed whitespace."""
    latex = _LABEL.sub(" ", latex)
    return _WS_RUN.sub(" ", latex).strip()


def _split_rows(content: str) -> list[str]:
    """Split a multi-line environment body on top-level ``\\\\`` separators."""
    rows, depth, start, i = [], 0, 0, 0
    while i < len(content):
        ch = content[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth = max(0, depth - 1)
        elif ch == "\\" and i + 1 < len(content):
            if content[i + 1] == "\\" and depth == 0:
                rows.append(content[start:i])
                i += 2
                start = i
                continue
            i += 1  # skip escaped char so \} does not close a group
        i += 1
    rows.append(content[start:])
    return rows


def extract_display_equations(doc: RawDocument):
    """Replace every display-math region with a placeholder marker.

    Returns ``(prose, records)`` where identical normalized regions within
    the document share one record (occurrence_count incremented) and each
    region position holds a placeholder referencing that record's local id.
    Unbalanced regions are skipped with a warning; the document survives.
    """
    prose, records, skipped = _extract(doc)
    return prose, records


def _extract(doc: RawDocument):
    text = strip_comments(doc.source_text)
    out: list[str] = []
    records: list[EquationRecord] = []
    by_latex: dict[str, int] = {}
    skipped = 0
    pos = 0

    def register(raw: str) -> None:
        nonlocal skipped
        norm = normalize_equation(raw)
        if not norm:
            skipped += 1
            log.warning("%s: empty display-math region skipped", doc.doc_id)
            return
        local = by_latex.get(norm)
        if local is None:
            local = len(records)
            by_latex[norm] = local
            records.append(EquationRecord(local, doc.doc_id, norm, 0))
        records[local].occurrence_count += 1
        out.append(" " + PLACEHOLDER_FMT.format(local) + " ")

    while pos < len(text):
        matches = [
            m
            for m in (
                _ENV_BEGIN.search(text, pos),
                _DOLLAR_PAIR.search(text, pos),
                _BRACKET_PAIR.search(text, pos),
            )
            if m is not None
        ]
        if not matches:
            out.append(text[pos:])
            break
        m = min(matches, key=lambda m: m.start())
        out.append(text[pos : m.start()])
        if m.re is _ENV_BEGIN:
            env = m.group(1)
            end = re.compile(r"\\end\{" + re.escape(env) + r"\}").search(text, m.end())
            if end is None:
                skipped += 1
                log.warning("%s: unbalanced \\begin{%s} skipped", doc.doc_id, env)
                pos = m.end()
                continue
            body = text[m.end() : end.start()]
            if env in MULTILINE_ENVS:
                for row in _split_rows(body):
                    if row.strip():
                        register(row)
            else:
                register(body)
            pos = end.end()
        else:
            register(m.group(1))
            pos = m.end()

    prose = "".join(out)
    if "$$" in prose:
        skipped += 1
        log.warning("%s: unbalanced $$ delimiter left in prose", doc.doc_id)
        prose = prose.replace("$$", " ")
    return prose, records, skipped


# --- word tokenization -----------------------------------------------------

_INLINE_MATH = re.compile(r"\$[^$]*\$|\\\(.*?\\\)", re.DOTALL)
# Commands whose braced argument is reference noise, not prose.
_DROP_WITH_ARG = re.compile(
    r"\\(?:cite[pt]?\*?|ref|eqref|pageref|autoref|cref|Cref|label|url|href"
    r"|input|include|includegraphics|bibliography|bibliographystyle"
    r"|usepackage|documentclass|pagestyle|thispagestyle)"
    r"(?:\[[^\]]*\])?(?:\{[^{}]*\})+"
)
_BEGIN_END = re.compile(r"\\(?:begin|end)\{[^}]*\}")
_COMMAND = re.compile(r"\\[a-zA-Z]+\*?|\\[^a-zA-Z]")
_WORD = re.compile(r"[a-z]+(?:-[a-z]+)*")


def is_placeholder(token: str) -> bool:
    return PLACEHOLDER_RE.fullmatch(token) is not None


def placeholder_id(token: str) -> int:
    m = PLACEHOLDER_RE.fullmatch(token)
    if m is None:
        raise ValueError(f"not an equation placeholder: {token!r}")
    return int(m.group(1))


def tokenize_words(prose_text: str) -> list[str]:
    """Lowercase alphabetic tokens in document order.

    Hyphenated words stay whole ("p-value"); numerals and punctuation are
    dropped; inline math and LaTeX commands are removed; equation
    placeholders pass through untouched.
    """
    tokens: list[str] = []
    parts = PLACEHOLDER_RE.split(prose_text)
    # re.split with one capture group alternates text and captured ids
    for i, part in enumerate(parts):
        if i % 2 == 1:
            tokens.append(PLACEHOLDER_FMT.format(int(part)))
            continue
        t = _INLINE_MATH.sub(" ", part)
        t = _DROP_WITH_ARG.sub(" ", t)
        t = _BEGIN_END.sub(" ", t)
        t = _COMMAND.sub(" ", t)
        tokens.extend(_WORD.findall(t.lower()))
    return tokens
