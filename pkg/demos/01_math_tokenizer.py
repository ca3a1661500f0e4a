#!/usr/bin/env python3
"""Walk through the math tokenizer: LaTeX -> layout tree -> unit tuples.

Each display equation becomes a sequence of (symbol, symbol, relation)
tuples; the relations are n (next), a (above), u (under), o (over) and
w (within).  These tuples are the "words" an equation is made of.
"""

from eqvec import parse_math, slt_tuples, tokenize_equation
from eqvec.slt import unit_string

EXAMPLES = [
    r"x^2 + y^2 = r^2",
    r"\frac{a}{b}",
    r"\sum_{i=1}^{n} x_i",
    r"\sqrt[3]{x + y}",
    r"p(x_{i}) = \frac{\theta_{i}}{\sum_{j} \theta_{j}}",
    r"\hat{\beta} = (X^{T} X)^{-1} X^{T} y",
]


def show(latex: str) -> None:
    print(f"\n  {latex}")
    for t in tokenize_equation(latex):
        print(f"    {unit_string(t)}")


def main() -> None:
    print("equation units, symbol window 1")
    for latex in EXAMPLES:
        show(latex)

    print("\nwider symbol window links two steps along each chain:")
    tree = parse_math("a b c")
    for window in (1, 2):
        tuples = [unit_string(t) for t in slt_tuples(tree, symbol_window=window)]
        print(f"  window={window}: {' '.join(tuples)}")


if __name__ == "__main__":
    main()
