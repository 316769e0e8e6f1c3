import json
import threading

import httpx
import numpy as np
import pytest
from PIL import Image

from facefocal.geometry import LandmarkSet


def make_landmarks(seed: int, image_id: str = "img", span: int = 400) -> LandmarkSet:
    """68 random points inside a [40, 40+span]^2 window."""
    rng = np.random.default_rng(seed)
    pts = rng.integers(40, 40 + span, size=(68, 2))
    return LandmarkSet.from_pairs([(float(x), float(y)) for x, y in pts], image_id)


def landmarks_at(points, image_id: str = "img") -> LandmarkSet:
    """Pad an explicit point list up to 68 by repeating it; bbox unchanged."""
    pts = list(points)
    while len(pts) < 68:
        pts.append(pts[len(pts) % len(points)])
    return LandmarkSet.from_pairs(pts[:68], image_id)


def write_noise_image(path, width=64, height=64, seed=0):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    Image.fromarray(arr).save(path, format="PNG")
    return path


@pytest.fixture
def tiny_corpus(tmp_path):
    """A small on-disk corpus: images + landmarks + labels for 4 images."""
    images = tmp_path / "images"
    landmarks = tmp_path / "landmarks"
    images.mkdir()
    landmarks.mkdir()
    rows = []
    specs = [
        ("a1", "BP4D", {"aus": [1, 6, 12]}),
        ("b1", "AffWild2", {"emotion": "Happiness"}),
        ("c1", "UTKFace", {"age": 31}),
        ("d1", "RAFDB", {"emotion": "Anger", "age": 64}),
    ]
    for i, (image_id, source, labels) in enumerate(specs):
        write_noise_image(images / f"{image_id}.png", 128, 128, seed=i)
        lm = make_landmarks(seed=100 + i, image_id=image_id, span=80)
        (landmarks / f"{image_id}.json").write_text(
            json.dumps([[x, y] for x, y in lm.points])
        )
        rows.append({"id": image_id, "source": source, **labels})
    labels_path = tmp_path / "labels.jsonl"
    labels_path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return {
        "root": tmp_path,
        "images": images,
        "landmarks": landmarks,
        "labels": labels_path,
        "ids": [s[0] for s in specs],
    }


def completion_response(text: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


class CountingTransport(httpx.MockTransport):
    """Mock chat endpoint that records call count and peak concurrency."""

    def __init__(self, reply):
        self.calls = 0
        self.in_flight = 0
        self.peak_in_flight = 0
        self._lock = threading.Lock()
        self._reply = reply

        def handler(request: httpx.Request) -> httpx.Response:
            with self._lock:
                self.calls += 1
                self.in_flight += 1
                self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
            try:
                import time

                time.sleep(0.005)
                payload = json.loads(request.content)
                return self._reply(payload, request)
            finally:
                with self._lock:
                    self.in_flight -= 1

        super().__init__(handler)


def prompt_text(payload: dict) -> str:
    """Flatten the last user message of a chat payload to text."""
    content = payload["messages"][-1]["content"]
    if isinstance(content, str):
        return content
    return " ".join(p.get("text", "") for p in content if isinstance(p, dict))
