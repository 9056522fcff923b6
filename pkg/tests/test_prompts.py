from __future__ import annotations

import re
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from hpss.dataset import Dataset, RatingSample
from hpss.errors import DependencyError, StructuralError
from hpss.prompts import (
    FAMILIES,
    load_pack,
    render_aux_prompt,
    render_components,
    render_evaluation_prompt,
    required_aux,
    rescale_rating,
    select_icl_examples,
)
from hpss.space import load_space

FIELDS = {
    "summarization": ("article", "summary"),
    "dialogue": ("conversation", "fact", "response"),
    "data_to_text": ("expression", "sentence"),
    "story": ("prompt", "story"),
    "pairwise": ("query", "response_a", "response_b"),
}
AUX = {k: f"<{k} text>" for k in ("reference", "autocot", "metrics", "criteria")}
PLACEHOLDER = re.compile(r"\{\w+\}")


def sample(family, sid="s0", human=3.0):
    return RatingSample(sid, {f: f"{f} of {sid}" for f in FIELDS[family]}, human, native_scale=(1, 5))


def baseline(space_name="pointwise_v1", **kw):
    space = load_space(space_name)
    return {**space.to_dict(space.baseline), **kw}


def render(choice, family="summarization", icl=(), aux=None, **kw):
    return render_evaluation_prompt(
        choice, sample(family), load_pack(family), AUX if aux is None else aux, list(icl),
        aspect="Coherence", criteria=kw.get("criteria", "Judge the flow."),
    )


def test_no_cot_td_first():
    text = render(baseline(cot="none")).text
    assert text.startswith("## Instruction")
    assert "directly output your rating" in text


def test_none_values_render_nothing():
    text = render(baseline(reference="none", autocot="none", metrics="none", examples="0"), aux={}).text
    for s in ("Reference", "Evaluation Steps:", "Questions about", "Here are some examples"):
        assert s not in text


def test_order_permutes_component_blocks():
    a = render(baseline(order="TD-ER-IC")).text
    b = render(baseline(order="IC-ER-TD")).text
    assert Counter(a.splitlines()) == Counter(b.splitlines())
    parts = render_components(baseline(), sample("summarization"), load_pack("summarization"), AUX, [],
                              aspect="Coherence", criteria="Judge the flow.")
    assert b == "\n\n".join([parts["IC"], parts["ER"], parts["TD"]])


def test_scale_substitutes_max():
    text = render(baseline(scale="100")).text
    assert "scale of 1 to 100" in text and 'Rating: [[100]]' in text


def test_missing_aux_is_dependency_error():
    with pytest.raises(DependencyError):
        render(baseline(metrics="metrics"), aux={})
    assert required_aux(baseline(reference="dialectic", metrics="metrics", autocot="autocot")) == {"metrics", "autocot"}


def test_icl_count_mismatch():
    with pytest.raises(StructuralError):
        render(baseline(examples="3"), icl=[])


def test_sample_braces_are_literal():
    s = RatingSample("b", {"article": "a {summary} b", "summary": "{max}"}, 1.0, native_scale=(1, 5))
    text = render_evaluation_prompt(baseline(), s, load_pack("summarization"), {}, [], aspect="X", criteria="").text
    assert "a {summary} b" in text and "\n{max}\n" in text


def test_rendering_is_deterministic():
    c = baseline(examples="3", metrics="metrics")
    icl = [sample("summarization", f"e{i}", i + 1) for i in range(3)]
    assert render(c, icl=icl).text == render(c, icl=icl).text


def test_rescale_rating():
    assert rescale_rating(1, (1, 5), 10) == 1
    assert rescale_rating(5, (1, 5), 10) == 10
    assert rescale_rating(3, (1, 5), 10) == 6  # 5.5 rounds half up
    assert rescale_rating(3, (1, 5), 3) == 2
    assert rescale_rating(2, (1, 3), 100) == 51


def test_aux_prompt_examples():
    pack = load_pack("summarization")
    s = sample("summarization")
    assert "Please summarize the following text" in render_aux_prompt("reference", pack, aspect="Coherence", sample=s)
    assert "generate the evaluation steps" in render_aux_prompt("autocot", pack, aspect="Coherence", scale_max=5)
    assert "at most three concise questions" in render_aux_prompt("metrics", pack, aspect="Coherence", sample=s)
    with pytest.raises(StructuralError):
        render_aux_prompt("poem", pack, aspect="Coherence")
    with pytest.raises(StructuralError):
        render_aux_prompt("metrics", pack, aspect="Coherence")


@pytest.mark.parametrize("family", [f for f in FAMILIES if f != "pairwise"])
def test_every_pointwise_pack_renders_all_aux(family):
    pack = load_pack(family)
    for kind in ("reference", "autocot", "metrics", "criteria"):
        text = render_aux_prompt(kind, pack, aspect="Fluency", criteria="c", sample=sample(family), scale_max=5)
        assert not PLACEHOLDER.search(text)


def make_dataset(ratings, family="summarization"):
    return Dataset("d", "Coherence", "", family,
                   [sample(family, f"s{i}", float(r)) for i, r in enumerate(ratings)])


def test_icl_examples():
    ds = make_dataset([1, 1, 2, 2, 3, 3])
    assert select_icl_examples(ds, 0, None, 0) == []
    got = select_icl_examples(ds, 3, None, 0)
    assert sorted(e.human for e in got) == [1.0, 2.0, 3.0]
    assert select_icl_examples(ds, 3, None, 7) == select_icl_examples(ds, 3, None, 7)
    with pytest.raises(StructuralError):
        select_icl_examples(ds, 10, None, 0)
    with pytest.raises(StructuralError):
        select_icl_examples(ds, 4, None, 0)


@given(st.lists(st.integers(1, 5), min_size=11, max_size=30), st.sampled_from([3, 5, 10]), st.integers(0, 50),
       st.data())
@settings(max_examples=60)
def test_icl_excludes_the_sample(ratings, count, seed, data):
    ds = make_dataset(ratings)
    x = data.draw(st.sampled_from([s.id for s in ds.samples]))
    got = select_icl_examples(ds, count, x, seed)
    assert len(got) == count and len({e.id for e in got}) == count
    assert x not in {e.id for e in got}


def test_icl_spreads_over_quantiles():
    ds = make_dataset(range(1, 21))
    got = sorted(e.human for e in select_icl_examples(ds, 5, None, 3))
    # one draw per block of four consecutive ratings
    assert [int((r - 1) // 4) for r in got] == [0, 1, 2, 3, 4]


def test_pairwise_pack_renders_verdict_format():
    text = render(baseline("pairwise_v1"), family="pairwise").text
    assert "[[A]]" in text and "[[B]]" in text
    assert not PLACEHOLDER.search(text)
