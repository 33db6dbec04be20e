"""Built-in layout corpus for checks, tests, and benchmarks.

25 deterministic layouts spanning 0-4 subject groups, 0-3 objects, with and
without background, ragged grids, missing spans, and an empty caption, plus
one deliberately large sparse layout for kernel benchmarking.
"""

from __future__ import annotations

from .layout import Entity, LayoutSpec


def make_spec(
    T: int,
    H: int,
    W: int,
    bg: int = 0,
    objs: int = 0,
    groups: tuple[int, ...] = (),
    span_len: int = 2,
    gap: int = 1,
    spanless: set[int] | None = None,
    no_spans: bool = False,
    text_len: int | None = None,
) -> LayoutSpec:
    """Build a layout with sequential non-overlapping spans.

    ``groups`` lists the attribute count of each subject group; ``spanless``
    names entity ordinals that get no caption span.
    """
    kinds: list[tuple[str, int | None]] = []
    kinds += [("background", None)] * bg
    kinds += [("object", None)] * objs
    for g, n_attrs in enumerate(groups):
        kinds.append(("face", g))
        kinds += [("attribute", g)] * n_attrs

    spanless = spanless or set()
    cursor = 0
    entities = []
    for e, (kind, group) in enumerate(kinds):
        span = None
        if not no_spans and e not in spanless:
            span = (cursor, cursor + span_len)
            cursor += span_len + gap
        entities.append(Entity(kind=kind, group=group, span=span))
    if text_len is None:
        text_len = cursor + gap if cursor else 0
    return LayoutSpec(T=T, H=H, W=W, entities=tuple(entities), text_len=text_len)


def builtin_corpus() -> list[tuple[str, LayoutSpec]]:
    """The 25-layout corpus, name first."""
    return [
        ("t2v-min", make_spec(1, 2, 2, text_len=4)),
        ("t2v-deep", make_spec(3, 4, 4, text_len=6)),
        ("bg-only", make_spec(2, 3, 3, bg=1)),
        ("obj-only", make_spec(2, 2, 3, objs=1)),
        ("obj-trio", make_spec(1, 3, 3, objs=3, spanless={1})),
        ("bg-objs", make_spec(2, 4, 4, bg=1, objs=2)),
        ("face-solo", make_spec(2, 2, 2, groups=(0,))),
        ("face-attr", make_spec(2, 4, 4, bg=1, groups=(1,))),
        ("attrs-max", make_spec(1, 3, 4, groups=(3,))),
        ("duo-groups", make_spec(2, 3, 3, groups=(1, 2))),
        ("showcase", make_spec(2, 4, 4, bg=1, objs=1, groups=(1, 1))),
        ("trio-groups", make_spec(1, 2, 2, groups=(0, 1, 2))),
        ("quad-groups", make_spec(1, 3, 3, groups=(1, 1, 1, 1))),
        ("quad-faces-bg", make_spec(2, 2, 2, bg=1, groups=(0, 0, 0, 0))),
        ("ragged", make_spec(1, 5, 7, bg=1, groups=(1,))),
        ("strip", make_spec(2, 1, 4, objs=1, groups=(1,))),
        ("no-text", make_spec(1, 2, 2, objs=1, no_spans=True)),
        ("spanless", make_spec(1, 4, 4, bg=1, objs=1, groups=(1,), no_spans=True, text_len=10)),
        ("big-sparse", make_spec(2, 6, 6, bg=1, objs=2, groups=(1, 1, 1))),
        ("deep-duo", make_spec(3, 3, 3, groups=(1, 1))),
        ("mixed", make_spec(1, 3, 3, bg=1, objs=3, groups=(0, 3))),
        ("wide", make_spec(1, 2, 6, objs=1, groups=(2,))),
        ("attrs-duo-max", make_spec(2, 3, 3, groups=(3, 3))),
        ("tall", make_spec(2, 4, 5, bg=1, objs=2, spanless={0})),
        ("grande", make_spec(2, 5, 5, bg=1, objs=1, groups=(2, 1))),
    ]


def corpus_layout(name: str) -> LayoutSpec:
    for n, spec in builtin_corpus():
        if n == name:
            return spec
    raise KeyError(f"no corpus layout named {name!r}")


def bench_layout() -> LayoutSpec:
    """Large sparse layout: many condition branches, so the block-streaming
    kernel touches well under half of the dense score matrix."""
    return make_spec(2, 12, 12, bg=1, objs=2, groups=(1, 1, 1, 1))
