from __future__ import annotations

import pytest

from svcforge.model_cards import ModelCardError, load_document, parse_model_card
from tests.conftest import FIXTURES

RESNET = FIXTURES / "resnet50.md"


class TestLoadDocument:
    def test_file_locator_returns_contents(self):
        text = load_document(f"file:{RESNET}")
        assert text == RESNET.read_text(encoding="utf-8")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelCardError, match="not found"):
            load_document(f"file:{tmp_path}/nope.md")

    def test_empty_file(self, tmp_path):
        empty = tmp_path / "empty.md"
        empty.write_text("")
        with pytest.raises(ModelCardError, match="empty"):
            load_document(f"file:{empty}")

    def test_unreachable_url_times_out(self):
        # RFC 5737 TEST-NET address: never routable, forces a connect timeout.
        with pytest.raises(ModelCardError):
            load_document("http://192.0.2.1/card.md", timeout_s=0.3)

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ModelCardError, match="locator"):
            load_document("ftp://example.com/card.md")


class TestParseModelCard:
    def test_reference_card_fields(self):
        card = parse_model_card(load_document(f"file:{RESNET}"))
        assert card.model_id == "microsoft/resnet-50"
        assert card.task_category == "image-classification"
        assert "1000" in card.task_detail
        assert len(card.code_samples) == 1
        assert "ResNetForImageClassification" in card.code_samples[0]

    def test_accuracy_table_parsed(self):
        card = parse_model_card(load_document(f"file:{RESNET}"))
        assert card.accuracy_rows == [
            {"benchmark_name": "imagenet-1k", "metric_name": "top-1 accuracy", "value": 0.80},
            {"benchmark_name": "imagenet-1k", "metric_name": "top-5 accuracy", "value": 0.95},
        ]

    def test_two_column_metric_table(self):
        text = "---\nmodel_id: a/b\npipeline_tag: image-classification\n---\nSome detail.\n\n|metric|value|\n|---|---|\n|top-1 accuracy|0.80|\n"
        card = parse_model_card(text)
        assert card.accuracy_rows == [
            {"benchmark_name": "", "metric_name": "top-1 accuracy", "value": 0.80}
        ]

    def test_frontmatter_only_body_is_error(self):
        text = "---\nmodel_id: a/b\npipeline_tag: image-classification\n---\n"
        with pytest.raises(ModelCardError, match="body"):
            parse_model_card(text)

    def test_missing_frontmatter_is_error(self):
        with pytest.raises(ModelCardError, match="frontmatter"):
            parse_model_card("# Just a title\n\nSome prose.\n")

    def test_missing_pipeline_tag_is_error(self):
        with pytest.raises(ModelCardError, match="pipeline_tag"):
            parse_model_card("---\nmodel_id: a/b\n---\nprose\n")

    def test_model_id_falls_back_to_locator_segments(self):
        text = "---\npipeline_tag: image-classification\n---\nDetail text.\n"
        card = parse_model_card(text, locator="https://models.example/acme/vision-7")
        assert card.model_id == "acme/vision-7"

    def test_deterministic_parse(self):
        text = load_document(f"file:{RESNET}")
        assert parse_model_card(text) == parse_model_card(text)

    def test_every_code_fence_appears_once_in_order(self):
        text = (
            "---\nmodel_id: a/b\npipeline_tag: text-classification\n---\n"
            "Prose first.\n\n```python\nfirst = 1\n```\n\nmore prose\n\n```\nsecond = 2\n```\n"
        )
        card = parse_model_card(text)
        assert card.code_samples == ["first = 1", "second = 2"]
