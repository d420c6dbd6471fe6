"""Pluggable viewpoint scoring: synthetic oracles, cached maps, and the remote
embedding-service client.

A scorer maps (query, cell, radius) to a real score.  The synthetic oracles
emulate the qualitative shapes of real image-text scoring functions (smooth,
stepped, ragged with confounding optima) so the whole benchmark runs without
any model weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import requests

from .polysphere import PolySphere

__all__ = [
    "CachedScorer",
    "DEFAULT_QUERY_TEMPLATE",
    "OracleProfile",
    "OracleScorer",
    "Query",
    "RemoteScorer",
    "ScoreMap",
    "ScorerError",
    "STEPPED_LEVELS",
    "compute_score_map",
    "cosine",
    "make_oracle",
    "make_ragged_profile",
    "resolve_scorer",
    "score_view",
]

DEFAULT_QUERY_TEMPLATE = "a picture of a {category} from the {view}"

ORACLE_KINDS = ("smooth", "stepped", "ragged")

# Per-ring plateau scores of the stepped oracle (rings 0..3; zero beyond).
STEPPED_LEVELS = (1.0, 0.7, 0.45, 0.25)

_SCOREMAP_HEADER = "viewsphere-scoremap v1"


class ScorerError(RuntimeError):
    """A view could not be scored; carries the failing cell when known."""

    def __init__(self, message: str, cell: int | None = None):
        super().__init__(message)
        self.cell = cell


@dataclass(frozen=True)
class Query:
    """A viewpoint description; text defaults to the canned template."""

    category: str
    view: str
    text: str = ""

    def __post_init__(self):
        if not self.text:
            object.__setattr__(
                self, "text", DEFAULT_QUERY_TEMPLATE.format(category=self.category, view=self.view)
            )


def cosine(u, v) -> float:
    """Cosine similarity of two embedding vectors."""
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine is undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))


@dataclass(frozen=True)
class ScoreMap:
    """Per-cell scores for one (query, scorer, radius) triple."""

    query: Query
    scorer_id: str
    radius: float
    sphere_checksum: str
    scores: np.ndarray = field(repr=False)

    def __post_init__(self):
        scores = np.ascontiguousarray(self.scores, dtype=float)
        if scores.ndim != 1:
            raise ValueError("scores must be a flat per-cell vector")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)

    @property
    def n_cells(self) -> int:
        return self.scores.shape[0]

    def argmax_cell(self) -> int:
        return int(np.argmax(self.scores))

    def save(self, path) -> None:
        lines = [
            _SCOREMAP_HEADER,
            "query " + json.dumps(
                {"category": self.query.category, "view": self.query.view, "text": self.query.text},
                sort_keys=True,
            ),
            f"scorer {self.scorer_id}",
            f"radius {self.radius!r}",
            f"sphere {self.sphere_checksum}",
            f"cells {self.n_cells}",
        ]
        lines.extend(f"{i} {float(s)!r}" for i, s in enumerate(self.scores))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ScoreMap":
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != _SCOREMAP_HEADER:
            raise ValueError("unrecognized score-map file header")
        try:
            q = json.loads(lines[1].split(" ", 1)[1])
            scorer_id = lines[2].split(" ", 1)[1]
            radius = float(lines[3].split(" ", 1)[1])
            checksum = lines[4].split(" ", 1)[1]
            n = int(lines[5].split(" ", 1)[1])
            scores = np.empty(n, dtype=float)
            for row, line in enumerate(lines[6:6 + n]):
                idx, val = line.split()
                if int(idx) != row:
                    raise ValueError(f"out-of-order cell {idx}")
                scores[row] = float(val)
        except (IndexError, KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"malformed score-map file: {exc}") from exc
        if len(lines) != 6 + n:
            raise ValueError("score-map cell count mismatch")
        query = Query(q["category"], q["view"], q["text"])
        return cls(query, scorer_id, radius, checksum, scores)


@dataclass(frozen=True)
class OracleProfile:
    """Shape of a synthetic scoring function centered on a gold cell."""

    kind: str
    gold_cell: int
    noise_seed: int = 0
    noise_amplitude: float = 0.0
    spurious_cells: tuple[int, ...] = ()
    bump_height: float = 0.5

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise ValueError(f"unknown oracle kind {self.kind!r}; expected one of {ORACLE_KINDS}")
        if self.noise_amplitude < 0:
            raise ValueError("noise amplitude must be >= 0")
        object.__setattr__(self, "spurious_cells", tuple(int(c) for c in self.spurious_cells))


class _TableScorer:
    """Scorer backed by one precomputed score vector per query text."""

    def __init__(self, scorer_id: str):
        self.scorer_id = scorer_id

    def _table(self, query: Query, radius: float | None) -> np.ndarray:
        raise NotImplementedError

    def score_cell(self, query: Query, cell: int, radius: float | None = None) -> float:
        table = self._table(query, radius)
        if not 0 <= cell < table.shape[0]:
            raise ScorerError(f"cell {cell} out of range", cell=cell)
        return float(table[cell])

    def score_cells(self, query: Query, cells, radius: float | None = None) -> np.ndarray:
        table = self._table(query, radius)
        out = np.empty(len(cells), dtype=float)
        for i, c in enumerate(cells):
            if not 0 <= c < table.shape[0]:
                raise ScorerError(f"cell {c} out of range", cell=int(c))
            out[i] = table[c]
        return out


class OracleScorer(_TableScorer):
    """Deterministic synthetic scorer; ignores query text and radius."""

    def __init__(self, profile: OracleProfile, sphere: PolySphere):
        super().__init__(f"oracle:{profile.kind}")
        if not 0 <= profile.gold_cell < sphere.n_cells:
            raise ValueError(f"gold cell {profile.gold_cell} out of range")
        if profile.gold_cell in profile.spurious_cells:
            raise ValueError("a spurious optimum may not sit on the gold cell")
        for c in profile.spurious_cells:
            if not 0 <= c < sphere.n_cells:
                raise ValueError(f"spurious cell {c} out of range")
        self.profile = profile
        self.sphere = sphere
        self.table = self._build_table(profile, sphere)
        self.table.flags.writeable = False

    @staticmethod
    def _build_table(profile: OracleProfile, sphere: PolySphere) -> np.ndarray:
        gold = profile.gold_cell
        smooth = sphere.centers @ sphere.centers[gold]
        if profile.kind == "smooth":
            return np.asarray(smooth, dtype=float)
        if profile.kind == "stepped":
            table = np.zeros(sphere.n_cells)
            for k, level in enumerate(STEPPED_LEVELS):
                for c in sphere.ring(gold, k):
                    table[c] = level
            return table
        # ragged: smooth base, seeded per-cell noise, configured confounders
        rng = np.random.default_rng(profile.noise_seed)
        table = smooth + rng.standard_normal(sphere.n_cells) * profile.noise_amplitude
        for c in profile.spurious_cells:
            table[c] += profile.bump_height
        return np.asarray(table, dtype=float)

    def _table(self, query: Query, radius: float | None) -> np.ndarray:
        return self.table


class CachedScorer(_TableScorer):
    """Replays stored score maps; a lookup miss is an error, never zero."""

    def __init__(self, maps):
        super().__init__("cache")
        self._maps: dict[tuple[str, float], ScoreMap] = {}
        ids = set()
        for m in maps:
            self._maps[(m.query.text, float(m.radius))] = m
            ids.add(m.scorer_id)
        if len(ids) == 1:
            self.scorer_id = f"cache[{ids.pop()}]"

    @classmethod
    def from_files(cls, paths) -> "CachedScorer":
        return cls([ScoreMap.load(p) for p in paths])

    def _table(self, query: Query, radius: float | None) -> np.ndarray:
        if radius is None and len(self._maps) == 1:
            return next(iter(self._maps.values())).scores
        key = (query.text, float(radius) if radius is not None else None)
        m = self._maps.get(key)
        if m is None:
            raise ScorerError(f"no cached map for query {query.text!r} at radius {radius}")
        return m.scores


class RemoteScorer:
    """Scores views through the embedding-service HTTP protocol.

    Cell views resolve to image paths through ``view_paths`` (one object's
    rendered views keyed by (cell, radius)).  Text embeddings are cached per
    query, image embeddings per path; image requests are batched.
    """

    def __init__(self, base_url: str, view_paths=None, *, max_batch: int = 64,
                 timeout: float = 30.0, session=None):
        self.base_url = base_url.rstrip("/")
        self.scorer_id = f"remote:{self.base_url}"
        self.view_paths = dict(view_paths) if view_paths else {}
        self.max_batch = max(1, int(max_batch))
        self.timeout = timeout
        self._session = session or requests.Session()
        self._text_cache: dict[str, np.ndarray] = {}
        self._image_cache: dict[str, np.ndarray] = {}
        self._dim: int | None = None

    # -- wire protocol -----------------------------------------------------

    def health(self) -> dict:
        return self._request("GET", "/health")

    def embed_texts(self, texts) -> np.ndarray:
        texts = list(texts)
        body = self._request("POST", "/embed_text", {"texts": texts})
        return self._check_vectors(body, len(texts))

    def embed_images(self, items) -> np.ndarray:
        """Embed image specs [{"id":..., "path"|"b64":...}], preserving order."""
        items = list(items)
        vectors = []
        for start in range(0, len(items), self.max_batch):
            chunk = items[start:start + self.max_batch]
            body = self._request("POST", "/embed_image", {"images": chunk})
            vectors.append(self._check_vectors(body, len(chunk)))
        return np.vstack(vectors) if vectors else np.empty((0, 0))

    # -- scoring -----------------------------------------------------------

    def score_image(self, query: Query, path: str) -> float:
        zq = self._query_vector(query)
        zv = self._image_vector(path)
        return cosine(zv, zq)

    def score_cell(self, query: Query, cell: int, radius: float | None = None) -> float:
        return self.score_image(query, self._resolve(cell, radius))

    def score_cells(self, query: Query, cells, radius: float | None = None) -> np.ndarray:
        paths = [self._resolve(c, radius) for c in cells]
        self._prefetch(paths)
        zq = self._query_vector(query)
        return np.array([cosine(self._image_cache[p], zq) for p in paths])

    # -- internals ----------------------------------------------------------

    def _resolve(self, cell: int, radius: float | None) -> str:
        key = (int(cell), float(radius)) if radius is not None else (int(cell), None)
        path = self.view_paths.get(key)
        if path is None:
            raise ScorerError(
                f"no image registered for cell {cell} at radius {radius}", cell=int(cell)
            )
        return path

    def _prefetch(self, paths) -> None:
        missing = [p for p in dict.fromkeys(paths) if p not in self._image_cache]
        if not missing:
            return
        vectors = self.embed_images([{"id": p, "path": p} for p in missing])
        for p, v in zip(missing, vectors):
            self._image_cache[p] = v

    def _query_vector(self, query: Query) -> np.ndarray:
        if query.text not in self._text_cache:
            self._text_cache[query.text] = self.embed_texts([query.text])[0]
        return self._text_cache[query.text]

    def _image_vector(self, path: str) -> np.ndarray:
        if path not in self._image_cache:
            self._prefetch([path])
        return self._image_cache[path]

    def _request(self, method: str, route: str, payload=None) -> dict:
        url = self.base_url + route
        try:
            if method == "GET":
                resp = self._session.get(url, timeout=self.timeout)
            else:
                resp = self._session.post(url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ScorerError(f"embedding service unreachable at {url}: {exc}") from exc
        if resp.status_code != 200:
            snippet = resp.text[:200]
            raise ScorerError(f"embedding service error {resp.status_code} at {route}: {snippet}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ScorerError(f"non-JSON response from {route}") from exc

    def _check_vectors(self, body: dict, expected: int) -> np.ndarray:
        try:
            dim = int(body["dim"])
            vectors = np.asarray(body["vectors"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ScorerError(f"malformed embedding response: {exc}") from exc
        if vectors.shape != (expected, dim):
            raise ScorerError(
                f"embedding response shape {vectors.shape} != ({expected}, {dim})"
            )
        if self._dim is None:
            self._dim = dim
        elif dim != self._dim:
            raise ScorerError(f"service changed dimension {self._dim} -> {dim}")
        return vectors


def score_view(scorer, query: Query, view, radius: float | None = None) -> float:
    """Score one view: a cell id or an image handle."""
    if isinstance(view, (int, np.integer)):
        return float(scorer.score_cell(query, int(view), radius))
    score_image = getattr(scorer, "score_image", None)
    if score_image is None:
        raise ScorerError(f"{scorer.scorer_id} cannot score raw images")
    return float(score_image(query, str(view)))


def compute_score_map(scorer, sphere: PolySphere, query: Query, radius: float) -> ScoreMap:
    """Score every cell of the sphere for one query at one radius."""
    scores = scorer.score_cells(query, range(sphere.n_cells), radius)
    return ScoreMap(
        query=query,
        scorer_id=scorer.scorer_id,
        radius=float(radius),
        sphere_checksum=sphere.checksum,
        scores=np.asarray(scores, dtype=float),
    )


def make_oracle(profile: OracleProfile, sphere: PolySphere) -> OracleScorer:
    return OracleScorer(profile, sphere)


def make_ragged_profile(sphere: PolySphere, gold_cell: int, *, seed: int = 1234,
                        amplitude: float = 0.25, n_bumps: int = 6,
                        bump_height: float = 0.6, min_ring: int = 5) -> OracleProfile:
    """Ragged profile with seeded confounding optima placed >= min_ring rings
    from gold (falls back to the farthest cells on small spheres)."""
    far = [c.id for c in sphere.cells
           if c.id != gold_cell and sphere.graph_distance(gold_cell, c.id) >= min_ring]
    if len(far) < n_bumps:
        by_dist = sorted(
            (c.id for c in sphere.cells if c.id != gold_cell),
            key=lambda c: -sphere.graph_distance(gold_cell, c),
        )
        far = by_dist[: max(n_bumps, 1)]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(far))
    # keep confounders mutually separated so each is its own local optimum
    picked: list[int] = []
    for i in order:
        candidate = far[i]
        if all(sphere.graph_distance(candidate, p) >= 3 for p in picked):
            picked.append(candidate)
        if len(picked) == n_bumps:
            break
    cells = tuple(sorted(picked))
    return OracleProfile(
        kind="ragged",
        gold_cell=gold_cell,
        noise_seed=seed,
        noise_amplitude=amplitude,
        spurious_cells=cells,
        bump_height=bump_height,
    )


def resolve_scorer(spec: str, sphere: PolySphere, query: Query, *, convention=None,
                   oracle_seed: int = 1234, oracle_amplitude: float = 0.25,
                   oracle_bumps: int = 6, oracle_bump_height: float = 0.6,
                   remote_view_paths=None):
    """Build a scorer from a spec string: oracle:<kind>, cache:<path>, remote:<url>.

    Oracle scorers center their profile on the query view's gold cell, so the
    same spec string works across queries.
    """
    from .camera import SHAPENET, canonical_direction

    kind, _, arg = spec.partition(":")
    if kind == "oracle":
        conv = convention or SHAPENET
        gold = sphere.nearest_cell(canonical_direction(conv, query.view))
        if arg == "ragged":
            profile = make_ragged_profile(
                sphere, gold, seed=oracle_seed, amplitude=oracle_amplitude,
                n_bumps=oracle_bumps, bump_height=oracle_bump_height,
            )
        else:
            profile = OracleProfile(kind=arg, gold_cell=gold, noise_seed=oracle_seed)
        return make_oracle(profile, sphere)
    if kind == "cache":
        if not arg:
            raise ValueError("cache scorer needs a path: cache:<path>")
        paths = sorted(str(p) for p in _expand_cache_arg(arg))
        return CachedScorer.from_files(paths)
    if kind == "remote":
        import os

        url = arg or os.environ.get("VIEWSPHERE_SCORER_URL", "")
        if not url:
            raise ValueError(
                "remote scorer needs a URL: remote:<url> or VIEWSPHERE_SCORER_URL"
            )
        return RemoteScorer(url, view_paths=remote_view_paths)
    raise ValueError(f"unknown scorer spec {spec!r}; expected oracle:|cache:|remote:")


def _expand_cache_arg(arg: str):
    from pathlib import Path

    p = Path(arg)
    if p.is_dir():
        return p.glob("*.scoremap")
    return [p]
