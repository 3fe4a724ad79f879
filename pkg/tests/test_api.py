from __future__ import annotations

import urllib.parse

import pytest
from fastapi.testclient import TestClient

from svcforge.api import create_app
from svcforge.registry import RegistryStore
from tests.conftest import make_record

URI = "my-service-repo/resnet-50:latest"


@pytest.fixture
def store(tmp_path):
    return RegistryStore(tmp_path / "registry")


@pytest.fixture
def client(store):
    return TestClient(create_app(store))


class TestApi:
    def test_healthz(self, client):
        assert client.get("/healthz").json() == {"status": "ok"}

    def test_empty_store_lists_empty(self, client):
        response = client.get("/services")
        assert response.status_code == 200
        assert response.json() == []

    def test_publish_then_get_round_trip(self, client, store):
        record = make_record()
        response = client.post("/services", json=record.model_dump(mode="json"))
        assert response.status_code == 201
        assert response.json() == {"service_uri": URI}

        fetched = client.get(f"/services/{URI}")
        assert fetched.status_code == 200
        assert fetched.json() == store.get(URI).model_dump(mode="json")

    def test_percent_encoded_uri_in_path(self, client):
        record = make_record()
        client.post("/services", json=record.model_dump(mode="json"))
        quoted = urllib.parse.quote(URI, safe="")
        assert client.get(f"/services/{quoted}").status_code == 200

    def test_invalid_record_is_422_with_report(self, client):
        bad = make_record(uri="Bad URI!").model_dump(mode="json")
        response = client.post("/services", json=bad)
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert any(v["path"] == "service_uri" for v in detail["violations"])

    def test_unknown_service_is_404(self, client):
        assert client.get("/services/ghost/none:latest").status_code == 404

    def test_search_equals_store_ranking(self, client, store):
        client.post(
            "/services",
            json=make_record(
                uri="repo/image:latest",
                task_detail="Classifies an image of animals.",
            ).model_dump(mode="json"),
        )
        client.post(
            "/services",
            json=make_record(
                uri="repo/text:latest",
                category="text-classification",
                task_detail="Scores sentiment of short text.",
            ).model_dump(mode="json"),
        )
        response = client.get("/search", params={"q": "classify an image", "k": 5})
        assert response.status_code == 200
        hits = response.json()
        expected = store.semantic_search("classify an image", 5)
        assert [(h["service_uri"], pytest.approx(h["score"])) for h in hits] == [
            (uri, pytest.approx(score)) for uri, score in expected
        ]
        assert hits[0]["service_uri"] == "repo/image:latest"

    def test_feedback_endpoint_updates_counts(self, client):
        client.post("/services", json=make_record().model_dump(mode="json"))
        response = client.post(f"/services/{URI}/feedback", json={"event": "like"})
        assert response.status_code == 200
        assert response.json()["likes"] == 1
        response = client.post(
            f"/services/{URI}/feedback",
            json={"event": "comment", "author": "bo", "text": "fast"},
        )
        assert response.json()["comments"][0]["text"] == "fast"

    def test_feedback_unknown_uri_404(self, client):
        response = client.post("/services/ghost:1/feedback", json={"event": "like"})
        assert response.status_code == 404

    def test_profile_by_node(self, client, store):
        client.post("/services", json=make_record().model_dump(mode="json"))
        response = client.get(f"/services/{URI}/profiles/edge-1")
        assert response.status_code == 200
        assert response.json() == store.get(URI).profiles["edge-1"].model_dump(mode="json")
        assert client.get(f"/services/{URI}/profiles/ghost").status_code == 404

    def test_list_filters_and_pagination(self, client):
        for i in range(4):
            client.post(
                "/services",
                json=make_record(
                    uri=f"repo/svc-{i}:latest", p50=40.0 + i * 10
                ).model_dump(mode="json"),
            )
        response = client.get("/services", params={"node_id": "edge-1", "max_p50_ms": 55.0})
        uris = [r["service_uri"] for r in response.json()]
        assert uris == ["repo/svc-0:latest", "repo/svc-1:latest"]

        paged = client.get("/services", params={"offset": 1, "limit": 2}).json()
        assert [r["service_uri"] for r in paged] == ["repo/svc-1:latest", "repo/svc-2:latest"]

    def test_bad_filter_combination_is_400(self, client):
        client.post("/services", json=make_record().model_dump(mode="json"))
        assert client.get("/services", params={"max_p50_ms": 10.0}).status_code == 400
