"""Dataset index, in-house retrieval, web clients, gallery assembly."""

import json
import logging
import os
from urllib.parse import parse_qs, urlparse

import numpy as np
import pytest

from xrayproto.acquisition import (
    API_KEY_ENV,
    DatasetIndex,
    FixtureWebClient,
    LIVE_SEARCH_PARAMS,
    LiveWebClient,
    build_gallery,
    filter_web,
    restrict_index,
    retrieve_in_house,
    union_box,
)
from xrayproto.backends import (
    ScriptedMaterialOracle,
    StubRgbFilter,
    StubSegmenter,
)
from xrayproto.errors import WebRetrievalError
from xrayproto.imageio import save_image
from xrayproto.material import fallback_material_db
from xrayproto.types import ImageTensor


def write_index(tmp_path, entries):
    path = tmp_path / "index.jsonl"
    with open(path, "w") as fh:
        for entry in entries:
            fh.write(json.dumps(entry) + "\n")
    return str(path)


def write_object_image(path, color=(0.2, 0.2, 0.6), size=16, extent=8):
    pixels = np.ones((size, size, 3))
    pixels[:extent, :extent] = color
    os.makedirs(os.path.dirname(path), exist_ok=True)
    save_image(ImageTensor(pixels), path)


class TestDatasetIndex:
    def test_parses_and_resolves_relative_paths(self, tmp_path):
        write_object_image(str(tmp_path / "img" / "a.png"))
        path = write_index(tmp_path, [
            {
                "image_path": "img/a.png",
                "split": "train",
                "objects": [
                    {"class": "Apple", "box": [0, 0, 8, 8], "visible": True}
                ],
            },
        ])
        index = DatasetIndex.from_jsonl(path)
        assert len(index.entries) == 1
        entry = index.entries[0]
        assert os.path.isabs(entry.image_path)
        assert os.path.exists(entry.image_path)
        # class names are normalized at parse time
        assert entry.objects[0].class_name == "apple"

    def test_bad_line_reports_position(self, tmp_path):
        path = tmp_path / "index.jsonl"
        path.write_text('{"image_path": "a.png", "split": "train", "objects": []}\nnot json\n')
        with pytest.raises(ValueError, match=r"index\.jsonl:2: invalid JSON"):
            DatasetIndex.from_jsonl(str(path))

    def test_vocabulary_and_visibility(self, tmp_path):
        path = write_index(tmp_path, [
            {
                "image_path": "a.png",
                "split": "train",
                "objects": [
                    {"class": "apple", "box": [0, 0, 4, 4], "visible": True},
                    {"class": "ghost", "box": [4, 4, 8, 8], "visible": False},
                ],
            },
            {
                "image_path": "b.png",
                "split": "test",
                "objects": [
                    {"class": "hammer", "box": [0, 0, 4, 4], "visible": True}
                ],
            },
        ])
        index = DatasetIndex.from_jsonl(path)
        assert index.vocabulary() == ["apple", "hammer"]
        assert index.vocabulary(visible_only=False) == ["apple", "ghost", "hammer"]
        assert index.vocabulary(split="train") == ["apple"]

    def test_restrict_index_drops_foreign_objects(self, tmp_path):
        path = write_index(tmp_path, [
            {
                "image_path": "a.png",
                "split": "train",
                "objects": [
                    {"class": "apple", "box": [0, 0, 4, 4], "visible": True},
                    {"class": "hammer", "box": [4, 4, 8, 8], "visible": True},
                ],
            },
            {
                "image_path": "b.png",
                "split": "train",
                "objects": [
                    {"class": "hammer", "box": [0, 0, 4, 4], "visible": True}
                ],
            },
        ])
        index = DatasetIndex.from_jsonl(path)
        restricted = restrict_index(index, ["apple"])
        assert len(restricted.entries) == 1
        assert [o.class_name for o in restricted.entries[0].objects] == ["apple"]


def test_union_box():
    assert union_box([(0, 0, 2, 2), (1, 1, 5, 3)]) == (0, 0, 5, 3)
    assert union_box([(1, 2, 3, 4)]) == (1, 2, 3, 4)
    with pytest.raises(ValueError):
        union_box([])


class TestRetrieveInHouse:
    def test_manifest_order_and_union_box(self, tmp_path):
        write_object_image(str(tmp_path / "a.png"))
        write_object_image(str(tmp_path / "b.png"))
        path = write_index(tmp_path, [
            {
                "image_path": "a.png",
                "split": "train",
                "objects": [
                    {"class": "apple", "box": [0, 0, 4, 4], "visible": True},
                    {"class": "apple", "box": [8, 8, 12, 12], "visible": True},
                    {"class": "hammer", "box": [0, 8, 4, 12], "visible": True},
                ],
            },
            {
                "image_path": "b.png",
                "split": "train",
                "objects": [
                    {"class": "apple", "box": [2, 2, 6, 6], "visible": True}
                ],
            },
        ])
        index = DatasetIndex.from_jsonl(path)
        samples = retrieve_in_house(index, "apple")
        assert len(samples) == 2
        assert samples[0].source_id.endswith("a.png")
        # union of the two apple boxes only; the hammer box is ignored
        assert samples[0].box == (0.0, 0.0, 12.0, 12.0)
        assert samples[0].provenance == "in_house"

    def test_max_samples_cap(self, tmp_path):
        entries = []
        for i in range(5):
            write_object_image(str(tmp_path / f"im{i}.png"))
            entries.append({
                "image_path": f"im{i}.png",
                "split": "train",
                "objects": [
                    {"class": "apple", "box": [0, 0, 4, 4], "visible": True}
                ],
            })
        index = DatasetIndex.from_jsonl(write_index(tmp_path, entries))
        assert len(retrieve_in_house(index, "apple", max_samples=3)) == 3

    def test_unreadable_image_skipped_with_warning(self, tmp_path, caplog):
        write_object_image(str(tmp_path / "good.png"))
        (tmp_path / "broken.png").write_bytes(b"not a png")
        path = write_index(tmp_path, [
            {
                "image_path": "broken.png",
                "split": "train",
                "objects": [
                    {"class": "apple", "box": [0, 0, 4, 4], "visible": True}
                ],
            },
            {
                "image_path": "good.png",
                "split": "train",
                "objects": [
                    {"class": "apple", "box": [0, 0, 4, 4], "visible": True}
                ],
            },
        ])
        index = DatasetIndex.from_jsonl(path)
        with caplog.at_level(logging.WARNING):
            samples = retrieve_in_house(index, "apple")
        assert len(samples) == 1
        assert "skipping unreadable" in caplog.text


class TestFixtureWebClient:
    def test_reads_sorted_and_caps(self, tmp_path):
        for i in (2, 0, 1):
            write_object_image(str(tmp_path / "web" / "apple" / f"w{i}.png"))
        client = FixtureWebClient(str(tmp_path / "web"))
        results = client.search("apple", 2)
        assert [os.path.basename(sid) for sid, _ in results] == ["w0.png", "w1.png"]

    def test_missing_directory_warns_empty(self, tmp_path, caplog):
        client = FixtureWebClient(str(tmp_path / "web"))
        with caplog.at_level(logging.WARNING):
            assert client.search("apple", 4) == []
        assert "no web fixtures" in caplog.text

    def test_slug_normalizes_spaces(self, tmp_path):
        write_object_image(str(tmp_path / "web" / "swiss_knife" / "w.png"))
        client = FixtureWebClient(str(tmp_path / "web"))
        assert len(client.search("  Swiss  Knife ", 5)) == 1

    def test_corrupt_file_dropped(self, tmp_path, caplog):
        write_object_image(str(tmp_path / "web" / "apple" / "good.png"))
        (tmp_path / "web" / "apple" / "bad.png").write_bytes(b"junk")
        client = FixtureWebClient(str(tmp_path / "web"))
        with caplog.at_level(logging.WARNING):
            results = client.search("apple", 5)
        assert len(results) == 1


class TestLiveWebClient:
    def test_requires_api_key(self, monkeypatch):
        monkeypatch.delenv(API_KEY_ENV, raising=False)
        client = LiveWebClient(engine_id="e", http_get=lambda url: b"{}")
        with pytest.raises(WebRetrievalError):
            client.search("apple", 3)

    def test_search_url_parameterization(self):
        client = LiveWebClient(
            engine_id="engine", api_key="secret", http_get=lambda url: b"{}"
        )
        url = client.search_url("apple", 5)
        params = {k: v[0] for k, v in parse_qs(urlparse(url).query).items()}
        for key, value in LIVE_SEARCH_PARAMS.items():
            assert params[key] == value
        assert params["q"] == "a photo of a apple"
        assert params["num"] == "5"
        assert params["cx"] == "engine"
        assert params["key"] == "secret"

    def test_fetches_and_drops_failures(self, tmp_path, caplog):
        # One fetchable image, one link whose fetch raises: the bad link is
        # dropped with a warning rather than failing the class.
        img_path = tmp_path / "photo.png"
        write_object_image(str(img_path))
        payload = json.dumps(
            {"items": [{"link": "good"}, {"link": "bad"}]}
        ).encode()

        def http_get(url):
            if url.startswith("https://"):
                return payload
            if url == "good":
                return img_path.read_bytes()
            raise OSError("connection reset")

        client = LiveWebClient(engine_id="e", api_key="k", http_get=http_get)
        with caplog.at_level(logging.WARNING):
            results = client.search("apple", 5)
        assert [sid for sid, _ in results] == ["good"]
        assert "dropping web image" in caplog.text

    def test_search_failure_is_retrieval_error(self):
        def http_get(url):
            raise OSError("no route to host")

        client = LiveWebClient(engine_id="e", api_key="k", http_get=http_get)
        with pytest.raises(WebRetrievalError):
            client.search("apple", 3)


class TestFilterWeb:
    def test_strictly_above_tau(self):
        # Half-dark image scores exactly 0.5 and must be rejected at
        # tau = 0.5; the mostly-dark one passes.
        half = np.ones((4, 4, 3))
        half[:2, :, :] = 0.0
        mostly = np.ones((4, 4, 3))
        mostly[:3, :, :] = 0.0
        candidates = [
            ("half", ImageTensor(half)),
            ("mostly", ImageTensor(mostly)),
        ]
        kept = filter_web(candidates, StubRgbFilter(), tau=0.5)
        assert [sid for sid, _ in kept] == ["mostly"]


class TestBuildGallery:
    def make_index(self, tmp_path, classes=("apple",), n=3):
        entries = []
        for name in classes:
            for i in range(n):
                rel = f"{name}/{i}.png"
                write_object_image(str(tmp_path / rel))
                entries.append({
                    "image_path": rel,
                    "split": "train",
                    "objects": [
                        {"class": name, "box": [0, 0, 8, 8], "visible": True}
                    ],
                })
        return DatasetIndex.from_jsonl(write_index(tmp_path, entries))

    def gallery_kwargs(self):
        return dict(
            segmenter=StubSegmenter(),
            rgb_filter=StubRgbFilter(),
            material_db=fallback_material_db({"apple": "organic"}),
        )

    def test_in_house_samples_first(self, tmp_path):
        index = self.make_index(tmp_path)
        gallery = build_gallery(["apple"], index, k=2, **self.gallery_kwargs())
        samples = gallery.samples_by_class["apple"]
        assert len(samples) == 2
        assert all(s.provenance == "in_house" for s in samples)
        assert gallery.missing_classes == []

    def test_web_route_fills_missing_classes(self, tmp_path):
        index = self.make_index(tmp_path, classes=("apple",))
        for i in range(3):
            # big dark squares pass the relevance filter
            write_object_image(
                str(tmp_path / "web" / "violin" / f"w{i}.png"),
                color=(0.4, 0.25, 0.1),
                size=16,
                extent=14,
            )
        oracle = ScriptedMaterialOracle({"violin": "wood"})
        gallery = build_gallery(
            ["apple", "violin"],
            index,
            web_client=FixtureWebClient(str(tmp_path / "web")),
            material_oracle=oracle,
            k=3,
            **self.gallery_kwargs(),
        )
        violins = gallery.samples_by_class["violin"]
        assert len(violins) == 3
        assert all(s.provenance == "web_synthetic" for s in violins)
        # transferred pixels are painted with a flat material color on white
        pix = violins[0].image.pixels
        corner = pix[0, 0]
        assert not np.allclose(corner, (0.4, 0.25, 0.1))
        np.testing.assert_allclose(pix[15, 15], (1.0, 1.0, 1.0))

    def test_class_with_no_source_is_missing(self, tmp_path):
        index = self.make_index(tmp_path)
        gallery = build_gallery(
            ["apple", "unicorn"], index, k=2, **self.gallery_kwargs()
        )
        assert gallery.missing_classes == ["unicorn"]
        assert "unicorn" not in gallery.samples_by_class

    def test_background_name_rejected(self, tmp_path):
        index = self.make_index(tmp_path)
        with pytest.raises(ValueError, match="background"):
            build_gallery(["background"], index, k=2, **self.gallery_kwargs())

    def test_k_must_be_positive(self, tmp_path):
        index = self.make_index(tmp_path)
        with pytest.raises(ValueError):
            build_gallery(["apple"], index, k=0, **self.gallery_kwargs())
