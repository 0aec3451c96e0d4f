"""Embedding providers: synthetic oracles, a remote HTTP backend, and caching.

Two synthetic backends embed pixel buffers and text segments into sparse
indicator vectors over a fixed vocabulary:

* ``synthetic_bound`` has one dimension per (attribute-tuple, noun) bound
  pair plus one per count word, so "red cube" and "blue cube" are
  orthogonal: attribute-object binding is represented.
* ``synthetic_bag`` uses one dimension per attribute word and per noun
  (plus count words), so any two segments built from the same words embed
  identically: the classic bag-of-words collapse, by construction.

Image-side features come from exact scene decoding (see synthworld).  An
object contributes when more than ``THETA_VIS`` of its pixels are visible
in the crop.  Size-bearing objects contribute an *apparent* size token
judged from their visible extent relative to the crop, so crops that
isolate an object read it as large regardless of its true class.  Count
words activate one dimension per count (not bound to the noun), mirroring
how "three" in "three cubes" can be satisfied by three of anything.

Both backends are pure functions of pixel content / segment text.  Vectors
are L2-normalized float64 and cached content-addressed on
(backend id, payload hash), where the payload is the preprocessed pixel
bytes or the exact segment string.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import threading
from collections import Counter
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import (
    ConfigError,
    DataError,
    ProtocolError,
    SimilarityError,
    TransportError,
)
from .geometry import extract_crop
from .synthworld import (
    COLORS,
    COUNT_WORDS,
    MATERIALS,
    NOUNS,
    SIZES,
    SceneIndex,
    decode_objects,
)

THETA_VIS = 0.5

# An object whose visible extent spans more than this fraction of the
# crop's short side reads as "large"; below it, "small".  The small render
# radius (18 px on a 224 canvas) sits just above the threshold, so size
# information is never recoverable from crops alone: isolating crops report
# every object as large.
APPARENT_LARGE_RATIO = 0.15

KIND_BOUND = "synthetic_bound"
KIND_BAG = "synthetic_bag"
KIND_REMOTE = "remote_http"

_STOP_CHARS = str.maketrans({c: " " for c in ".,;:!?()[]{}\"'`"})

_COLOR_SET = frozenset(COLORS)
_SIZE_SET = frozenset(SIZES)
_MATERIAL_SET = frozenset(MATERIALS)
_NOUN_SET = frozenset(NOUNS)
_COUNT_SET = frozenset(COUNT_WORDS)


@dataclass(frozen=True)
class BackendDescriptor:
    backend_id: str
    kind: str
    dim: int
    input_side: int
    version: str


def _bind_feature(attrs, noun) -> str:
    return f"bind:{'+'.join(attrs)}|{noun}"


def _build_bound_vocab() -> dict:
    names = []
    for noun in NOUNS:
        for color in (None,) + COLORS:
            for size in (None,) + SIZES:
                for material in (None,) + MATERIALS:
                    attrs = tuple(a for a in (color, size, material) if a)
                    names.append(_bind_feature(attrs, noun))
    names += [f"count:{w}" for w in COUNT_WORDS]
    names += ["blank:image", "blank:text"]
    return {name: i for i, name in enumerate(names)}


def _build_bag_vocab() -> dict:
    names = [f"tok:{t}" for t in COLORS + SIZES + MATERIALS + NOUNS]
    names += [f"count:{w}" for w in COUNT_WORDS]
    names += ["blank:image", "blank:text"]
    return {name: i for i, name in enumerate(names)}


_BOUND_VOCAB = _build_bound_vocab()
_BAG_VOCAB = _build_bag_vocab()


def normalize_tokens(text: str) -> list:
    return text.lower().translate(_STOP_CHARS).split()


def _as_noun(token: str) -> str | None:
    if token in _NOUN_SET:
        return token
    if token.endswith("s") and token[:-1] in _NOUN_SET:
        return token[:-1]
    return None


def apparent_size_token(vis_w: int, vis_h: int, crop_w: int, crop_h: int) -> str:
    ratio = max(vis_w, vis_h) / min(crop_w, crop_h)
    return "small" if ratio <= APPARENT_LARGE_RATIO else "large"


def image_features(objects, crop_w: int, crop_h: int, kind: str) -> frozenset:
    """Feature names activated by the visible objects of one crop."""
    feats = set()
    noun_counts = Counter()
    for obj in objects:
        if obj.visible_fraction <= THETA_VIS:
            continue
        klass = obj.klass
        attrs = []
        if klass.color is not None:
            attrs.append(klass.color)
        if klass.size_class in _SIZE_SET:
            attrs.append(apparent_size_token(obj.vis_w, obj.vis_h, crop_w, crop_h))
        if klass.material is not None:
            attrs.append(klass.material)
        if kind == KIND_BOUND:
            feats.add(_bind_feature(tuple(attrs), klass.noun))
        else:
            feats.update(f"tok:{a}" for a in attrs)
            feats.add(f"tok:{klass.noun}")
        noun_counts[klass.noun] += 1
    for count in noun_counts.values():
        if 2 <= count <= len(COUNT_WORDS) + 1:
            feats.add(f"count:{COUNT_WORDS[count - 2]}")
    return frozenset(feats) if feats else frozenset({"blank:image"})


def text_features(segment: str, kind: str) -> frozenset:
    """Feature names activated by one text segment.

    Attribute words accumulate until a noun binds them; any word outside
    the vocabulary clears the pending attributes, so phrases never leak
    attributes across connectives.
    """
    feats = set()
    pending = {}
    for token in normalize_tokens(segment):
        noun = _as_noun(token)
        if token in _COLOR_SET:
            pending["color"] = token
        elif token in _SIZE_SET:
            pending["size"] = token
        elif token in _MATERIAL_SET:
            pending["material"] = token
        elif token in _COUNT_SET:
            feats.add(f"count:{token}")
        elif noun is not None:
            attrs = tuple(
                pending[f] for f in ("color", "size", "material") if f in pending
            )
            if kind == KIND_BOUND:
                feats.add(_bind_feature(attrs, noun))
            else:
                feats.update(f"tok:{a}" for a in attrs)
                feats.add(f"tok:{noun}")
            pending.clear()
        else:
            pending.clear()
    return frozenset(feats) if feats else frozenset({"blank:text"})


def _features_to_vector(feats: frozenset, vocab: dict) -> np.ndarray:
    vec = np.zeros(len(vocab), dtype=np.float64)
    for name in feats:
        vec[vocab[name]] = 1.0
    return vec / np.linalg.norm(vec)


def cosine(a, b) -> float:
    """Plain cosine similarity with explicit degenerate-input errors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise SimilarityError(
            f"cosine needs equal-length 1-D vectors, got {a.shape} vs {b.shape}"
        )
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise SimilarityError("cosine undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise SimilarityError("cannot normalize a zero vector")
    return vec / norm


def _image_payload(array: np.ndarray) -> bytes:
    header = f"{array.dtype}|{array.shape}|".encode()
    return header + np.ascontiguousarray(array).tobytes()


class SyntheticBackend:
    """Exact indicator-embedding oracle over the controlled scene world."""

    def __init__(self, kind: str):
        if kind not in (KIND_BOUND, KIND_BAG):
            raise ConfigError(f"unknown synthetic backend kind {kind!r}")
        self.kind = kind
        self._vocab = _BOUND_VOCAB if kind == KIND_BOUND else _BAG_VOCAB
        self.descriptor = BackendDescriptor(
            backend_id=f"{kind}-v1",
            kind=kind,
            dim=len(self._vocab),
            input_side=224,
            version="indicator/raw-crop/no-resize",
        )

    # Synthetic oracles judge apparent size from the raw crop, so crops are
    # embedded unresized; resampling would also corrupt exact decoding.
    def prepare_image(self, crop: np.ndarray):
        return _image_payload(crop), crop

    def embed_image_batch(self, crops) -> np.ndarray:
        out = np.empty((len(crops), self.descriptor.dim), dtype=np.float64)
        for i, crop in enumerate(crops):
            h, w = crop.shape[:2]
            feats = image_features(decode_objects(crop), w, h, self.kind)
            out[i] = _features_to_vector(feats, self._vocab)
        return out

    def embed_text_batch(self, segments) -> np.ndarray:
        out = np.empty((len(segments), self.descriptor.dim), dtype=np.float64)
        for i, segment in enumerate(segments):
            out[i] = _features_to_vector(text_features(segment, self.kind), self._vocab)
        return out

    def scene_vectors(self, image: np.ndarray, boxes) -> np.ndarray:
        """Fast path: decode the image once, embed every crop box."""
        index = SceneIndex(image)
        out = np.empty((len(boxes), self.descriptor.dim), dtype=np.float64)
        for i, box in enumerate(boxes):
            objects = index.visible_objects(box.x, box.y, box.w, box.h)
            feats = image_features(objects, box.w, box.h, self.kind)
            out[i] = _features_to_vector(feats, self._vocab)
        return out


class TrueSizeSyntheticBackend(SyntheticBackend):
    """Diagnostic variant reading size classes directly instead of the
    apparent-size rule; used to attribute size failures to that rule."""

    def __init__(self, kind: str = KIND_BOUND):
        super().__init__(kind)
        self.descriptor = BackendDescriptor(
            backend_id=f"{kind}-truesize-v1",
            kind=kind,
            dim=self.descriptor.dim,
            input_side=224,
            version="indicator/true-size",
        )

    def _features(self, objects, crop_w, crop_h):
        feats = set()
        noun_counts = Counter()
        for obj in objects:
            if obj.visible_fraction <= THETA_VIS:
                continue
            klass = obj.klass
            attrs = []
            if klass.color is not None:
                attrs.append(klass.color)
            if klass.size_class in _SIZE_SET:
                attrs.append(klass.size_class)
            if klass.material is not None:
                attrs.append(klass.material)
            if self.kind == KIND_BOUND:
                feats.add(_bind_feature(tuple(attrs), klass.noun))
            else:
                feats.update(f"tok:{a}" for a in attrs)
                feats.add(f"tok:{klass.noun}")
            noun_counts[klass.noun] += 1
        for count in noun_counts.values():
            if 2 <= count <= len(COUNT_WORDS) + 1:
                feats.add(f"count:{COUNT_WORDS[count - 2]}")
        return frozenset(feats) if feats else frozenset({"blank:image"})

    def embed_image_batch(self, crops) -> np.ndarray:
        out = np.empty((len(crops), self.descriptor.dim), dtype=np.float64)
        for i, crop in enumerate(crops):
            h, w = crop.shape[:2]
            out[i] = _features_to_vector(
                self._features(decode_objects(crop), w, h), self._vocab
            )
        return out

    def scene_vectors(self, image: np.ndarray, boxes) -> np.ndarray:
        index = SceneIndex(image)
        out = np.empty((len(boxes), self.descriptor.dim), dtype=np.float64)
        for i, box in enumerate(boxes):
            objects = index.visible_objects(box.x, box.y, box.w, box.h)
            out[i] = _features_to_vector(self._features(objects, box.w, box.h), self._vocab)
        return out


class RemoteBackend:
    """Client for the embedding microservice wire protocol.

    ``GET /v1/info`` supplies the descriptor; images travel as base64 PNG
    arrays to ``POST /v1/embed/image`` and texts to ``POST /v1/embed/text``.
    Crops are resized (bicubic) to the advertised input side before upload,
    and that resized buffer is what the cache key hashes.
    """

    def __init__(self, base_url: str, session=None, timeout: float = 60.0):
        import requests

        self.base_url = base_url.rstrip("/")
        self.session = session or requests.Session()
        self.timeout = timeout
        try:
            resp = self.session.get(f"{self.base_url}/v1/info", timeout=timeout)
        except Exception as exc:
            raise TransportError(f"embedding service unreachable: {exc}") from exc
        if resp.status_code == 503:
            raise TransportError("embedding service still loading its model")
        if resp.status_code != 200:
            raise ProtocolError(f"/v1/info returned HTTP {resp.status_code}")
        info = resp.json()
        try:
            self.descriptor = BackendDescriptor(
                backend_id=f"remote:{info['model_id']}:{info['version']}",
                kind=KIND_REMOTE,
                dim=int(info["dim"]),
                input_side=int(info["input_side"]),
                version=str(info["version"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed /v1/info payload: {info!r}") from exc
        self.kind = KIND_REMOTE

    def prepare_image(self, crop: np.ndarray):
        side = self.descriptor.input_side
        if crop.shape[0] == side and crop.shape[1] == side:
            resized = crop
        else:
            pil = Image.fromarray(crop)
            resized = np.asarray(pil.resize((side, side), Image.BICUBIC))
        return _image_payload(resized), resized

    def _post(self, route: str, payload: dict) -> dict:
        try:
            resp = self.session.post(
                f"{self.base_url}{route}", json=payload, timeout=self.timeout
            )
        except Exception as exc:
            raise TransportError(f"embedding service request failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"{route} returned HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def _check(self, body: dict, expected: int) -> np.ndarray:
        vectors = np.asarray(body.get("vectors", []), dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != expected:
            raise ProtocolError(f"service returned {vectors.shape} vectors, wanted {expected}")
        if vectors.shape[1] != self.descriptor.dim:
            raise ProtocolError(
                f"service returned dim {vectors.shape[1]}, descriptor says {self.descriptor.dim}"
            )
        return vectors

    def embed_image_batch(self, crops) -> np.ndarray:
        payload = {"images": [self._to_png_b64(c) for c in crops]}
        return self._check(self._post("/v1/embed/image", payload), len(crops))

    def embed_text_batch(self, segments) -> np.ndarray:
        return self._check(
            self._post("/v1/embed/text", {"texts": list(segments)}), len(segments)
        )

    @staticmethod
    def _to_png_b64(array: np.ndarray) -> str:
        buf = io.BytesIO()
        Image.fromarray(array).save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode("ascii")


class VectorCache:
    """Content-addressed vector store: memory dict over an on-disk layout of
    .npy files named by key hash plus a JSONL index.  Concurrent readers are
    fine; writes serialize on a lock.  No eviction."""

    def __init__(self, directory=None):
        self.directory = directory
        self._memory = {}
        self._lock = threading.Lock()
        if directory is not None:
            os.makedirs(directory, exist_ok=True)
            self._index_path = os.path.join(directory, "index.jsonl")

    @staticmethod
    def key_for(backend_id: str, payload: bytes) -> str:
        digest = hashlib.sha256()
        digest.update(backend_id.encode())
        digest.update(b"\x00")
        digest.update(payload)
        return digest.hexdigest()

    def _path(self, key: str) -> str:
        return os.path.join(self.directory, f"{key}.npy")

    def get(self, key: str):
        hit = self._memory.get(key)
        if hit is not None:
            return hit
        if self.directory is None:
            return None
        path = self._path(key)
        if not os.path.exists(path):
            return None
        vec = np.load(path)
        self._memory[key] = vec
        return vec

    def put(self, key: str, vector: np.ndarray, meta: str = "") -> None:
        with self._lock:
            if key in self._memory:
                return
            self._memory[key] = vector
            if self.directory is None:
                return
            path = self._path(key)
            if not os.path.exists(path):
                np.save(path, vector)
                with open(self._index_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "meta": meta, "dim": int(vector.size)}) + "\n")

    def __len__(self):
        return len(self._memory)


class EmbeddingProvider:
    """Order-preserving, cache-backed batching front over a backend."""

    def __init__(self, backend, cache: VectorCache | None = None, batch_size: int = 64):
        self.backend = backend
        self.cache = cache if cache is not None else VectorCache()
        self.batch_size = batch_size

    @property
    def descriptor(self) -> BackendDescriptor:
        return self.backend.descriptor

    def _fill_misses(self, keys, vectors, items, embed_batch, meta):
        """Embed one representative per distinct missing key, batched."""
        unique = {}
        for i, vec in enumerate(vectors):
            if vec is None and keys[i] not in unique:
                unique[keys[i]] = i
        order = list(unique.values())
        for start in range(0, len(order), self.batch_size):
            chunk = order[start : start + self.batch_size]
            try:
                batch = embed_batch([items[i] for i in chunk])
            except TransportError as exc:
                failed = [
                    i for i, v in enumerate(vectors) if v is None and keys[i] in
                    {keys[j] for j in order[start:]}
                ]
                raise TransportError(str(exc), failed_indices=failed) from exc
            for j, i in enumerate(chunk):
                self.cache.put(keys[i], batch[j], meta=meta)
        for i, vec in enumerate(vectors):
            if vec is None:
                vectors[i] = self.cache.get(keys[i])
        return vectors

    def embed_images(self, crops) -> np.ndarray:
        if len(crops) == 0:
            raise DataError("embed_images needs at least one crop")
        prepared = [self.backend.prepare_image(np.asarray(c)) for c in crops]
        keys = [
            VectorCache.key_for(self.descriptor.backend_id, payload)
            for payload, _ in prepared
        ]
        vectors = [self.cache.get(k) for k in keys]
        items = [item for _, item in prepared]
        self._fill_misses(keys, vectors, items, self.backend.embed_image_batch, "image")
        return np.stack(vectors)

    def embed_texts(self, segments) -> np.ndarray:
        if len(segments) == 0:
            raise DataError("embed_texts needs at least one segment")
        for segment in segments:
            if not isinstance(segment, str) or not segment.strip():
                raise DataError("segments must be non-empty strings")
        keys = [
            VectorCache.key_for(self.descriptor.backend_id, s.encode("utf-8"))
            for s in segments
        ]
        vectors = [self.cache.get(k) for k in keys]
        self._fill_misses(keys, vectors, list(segments), self.backend.embed_text_batch, "text")
        return np.stack(vectors)

    def embed_crops(self, image: np.ndarray, boxes) -> np.ndarray:
        """Embed lattice crops of one image, exploiting per-image decoding
        when the backend supports it.  Equivalent to extracting each crop
        and calling :meth:`embed_images`."""
        if len(boxes) == 0:
            raise DataError("embed_crops needs at least one box")
        scene_fn = getattr(self.backend, "scene_vectors", None)
        if scene_fn is None:
            return self.embed_images([extract_crop(image, b) for b in boxes])
        keys = []
        for box in boxes:
            payload, _ = self.backend.prepare_image(extract_crop(image, box))
            keys.append(VectorCache.key_for(self.descriptor.backend_id, payload))
        vectors = [self.cache.get(k) for k in keys]
        miss = [i for i, v in enumerate(vectors) if v is None]
        if miss:
            batch = scene_fn(image, [boxes[i] for i in miss])
            for j, i in enumerate(miss):
                vectors[i] = batch[j]
                self.cache.put(keys[i], batch[j], meta="image")
        return np.stack(vectors)


def make_backend(spec: str):
    """Parse a backend spec: synthetic-bound | synthetic-bag | http(s)://URL."""
    if spec in ("synthetic-bound", "synthetic_bound"):
        return SyntheticBackend(KIND_BOUND)
    if spec in ("synthetic-bag", "synthetic_bag"):
        return SyntheticBackend(KIND_BAG)
    if spec.startswith("http:") or spec.startswith("https:"):
        url = spec
        if url.startswith("http:") and not url.startswith("http://"):
            url = "http://" + url[len("http:") :]
        return RemoteBackend(url)
    raise ConfigError(f"unknown backend spec {spec!r}")
