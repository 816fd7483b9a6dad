import json

import pytest
from hypothesis import given, strategies as st

from parcot import ByteTokenizer, TemplateError, load_template, render_cot


def _doc(fields, vocab_size=256, terminator=0, prompt=""):
    return json.dumps(
        {"vocab_size": vocab_size, "terminator": terminator, "prompt": prompt, "fields": fields}
    )


class TestLoadTemplate:
    def test_two_fields_in_document_order(self):
        doc = _doc([{"name": "weather", "max_len": 8}, {"name": "lanes", "max_len": 16}])
        template = load_template(doc)
        assert template.num_fields == 2
        assert template.field_names() == ["weather", "lanes"]
        assert template.fields[0].max_len == 8
        assert template.fields[1].max_len == 16

    def test_default_prefix_is_name_colon_space(self):
        template = load_template(_doc([{"name": "weather", "max_len": 4}]))
        assert template.fields[0].prefix_text == "weather: "
        assert template.fields[0].prefix_tokens == tuple(b"weather: ")

    def test_prefix_override(self):
        doc = _doc([{"name": "weather", "prefix": "wx=", "max_len": 4}])
        assert load_template(doc).fields[0].prefix_text == "wx="

    def test_shipped_config_has_30_fields(self, av_template):
        assert av_template.num_fields == 30
        names = av_template.field_names()
        # fixed slot allocation: 3 lane ranges and 4 critical objects, each
        # object expanded into position/type/justification sub-fields
        assert sum(1 for n in names if n.startswith("lane range")) == 3
        for j in range(1, 5):
            assert f"relative position {j}" in names
            assert f"object type {j}" in names
            assert f"justification {j}" in names

    def test_duplicate_name_rejected_and_named(self):
        doc = _doc([{"name": "weather", "max_len": 4}, {"name": "weather", "max_len": 4}])
        with pytest.raises(TemplateError) as exc:
            load_template(doc)
        assert any("weather" in e and "duplicate" in e for e in exc.value.errors)

    def test_bad_max_len_names_field(self):
        with pytest.raises(TemplateError) as exc:
            load_template(_doc([{"name": "lanes", "max_len": 0}]))
        assert any("lanes" in e and "max_len" in e for e in exc.value.errors)

    def test_prefix_token_outside_vocab_names_field(self):
        doc = _doc([{"name": "weather", "max_len": 4}], vocab_size=32, terminator=0)
        with pytest.raises(TemplateError) as exc:
            load_template(doc)
        assert any("weather" in e and "prefix" in e for e in exc.value.errors)

    def test_terminator_outside_vocab(self):
        doc = _doc([{"name": "a", "prefix": "", "max_len": 4}], vocab_size=8, terminator=9)
        with pytest.raises(TemplateError) as exc:
            load_template(doc)
        assert any("terminator" in e for e in exc.value.errors)

    def test_malformed_document(self):
        with pytest.raises(TemplateError):
            load_template("{not json")
        with pytest.raises(TemplateError):
            load_template(json.dumps([1, 2, 3]))
        with pytest.raises(TemplateError):
            load_template(json.dumps({"vocab_size": 256, "terminator": 0, "fields": []}))

    def test_all_errors_collected_in_one_raise(self):
        doc = _doc(
            [
                {"name": "a", "max_len": 0, "prefix": ""},
                {"name": "a", "max_len": 2, "prefix": ""},
            ]
        )
        with pytest.raises(TemplateError) as exc:
            load_template(doc)
        assert len(exc.value.errors) >= 2

    def test_load_is_pure(self):
        doc = _doc([{"name": "x", "max_len": 3}], prompt="hello")
        assert load_template(doc) == load_template(doc)


class TestRenderCot:
    def test_two_field_render(self):
        tok = ByteTokenizer()
        doc = _doc([{"name": "weather", "max_len": 8}, {"name": "lanes", "max_len": 8}])
        template = load_template(doc)
        out = render_cot(
            template,
            {"weather": tok.encode("sunny"), "lanes": tok.encode("2 lanes")},
            tok,
        )
        assert out == "weather: sunny\nlanes: 2 lanes"

    def test_placeholder_content_renders_verbatim(self):
        tok = ByteTokenizer()
        template = load_template(_doc([{"name": "critical object 4", "max_len": 8}]))
        out = render_cot(template, {"critical object 4": tok.encode("N/A")}, tok)
        assert out == "critical object 4: N/A"

    def test_empty_content_is_bare_prefix(self):
        template = load_template(_doc([{"name": "weather", "max_len": 8}]))
        assert render_cot(template, {"weather": []}) == "weather: "

    def test_missing_field_entry(self):
        template = load_template(
            _doc([{"name": "a", "max_len": 2}, {"name": "b", "max_len": 2}])
        )
        with pytest.raises(KeyError, match="b"):
            render_cot(template, {"a": []})

    def test_order_stable_regardless_of_contents_order(self):
        tok = ByteTokenizer()
        doc = _doc([{"name": "a", "max_len": 4}, {"name": "b", "max_len": 4}])
        template = load_template(doc)
        contents = {"b": tok.encode("2"), "a": tok.encode("1")}
        assert render_cot(template, contents, tok) == "a: 1\nb: 2"


class TestByteTokenizer:
    @given(st.text())
    def test_roundtrip_text(self, s):
        tok = ByteTokenizer()
        assert tok.decode(tok.encode(s)) == s

    @given(st.binary())
    def test_roundtrip_bytes(self, b):
        tok = ByteTokenizer()
        assert bytes(tok.encode(tok.decode(list(b)))) == b

    def test_vocab_is_byte_range(self):
        tok = ByteTokenizer()
        assert tok.vocab_size == 256
        assert all(0 <= t < 256 for t in tok.encode("caf\xe9 ☃"))
