"""Corpus data model, file ingestion, and diagnostic-label preprocessing.

A corpus is a set of patient documents, each holding the shaded points of a
discomfort drawing (front/back body views, normalized coordinates) and the
diagnostic label strings assigned by a clinician.  Label preprocessing
normalizes the free-text labels: optional Swedish-to-English translation,
mapping of exchangeable clinical terms onto one canonical form, and splitting
of bilateral "B ..." labels into left/right pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Mapping

VIEWS = ("front", "back")

DEFAULT_LABEL_SCALE = 10


class CorpusFormatError(ValueError):
    """Raised when a corpus stream or label-map file cannot be parsed."""


@dataclass(frozen=True, slots=True)
class DrawingPoint:
    """One shaded location on the body contour.

    x is the fraction of the contour width, y the fraction of the contour
    height measured from the top of the head.  Intensity records how hard
    the area was shaded; it is carried through parsing but not used by the
    featurizer.
    """

    view: str
    x: float
    y: float
    intensity: float = 1.0

    def __post_init__(self):
        if self.view not in VIEWS:
            raise ValueError(f"view must be one of {VIEWS}, got {self.view!r}")
        if not (0.0 <= self.x <= 1.0):
            raise ValueError(f"x out of range [0,1]: {self.x}")
        if not (0.0 <= self.y <= 1.0):
            raise ValueError(f"y out of range [0,1]: {self.y}")
        if not (0.0 < self.intensity <= 1.0):
            raise ValueError(f"intensity out of range (0,1]: {self.intensity}")


@dataclass(frozen=True, slots=True)
class Document:
    """One patient case: a drawing plus its diagnostic labels.

    Labels may be empty at test time (prediction from the drawing alone).
    """

    id: str
    points: tuple[DrawingPoint, ...]
    labels: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class Corpus:
    documents: tuple[Document, ...]
    language: str = "en"

    @property
    def m(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)


def _normalize_ws(label: str) -> str:
    return " ".join(label.split())


class LabelMaps:
    """Alias-to-canonical label mappings with case-insensitive lookup.

    ``exchangeable`` maps clinically interchangeable terms onto one canonical
    label; ``translation`` maps source-language terms onto their English
    form.  Both are checked for idempotence on construction: a canonical
    label must map to itself or be absent, so applying a map twice equals
    applying it once.
    """

    _MARKERS = ("B", "L", "R")

    def __init__(self,
                 exchangeable: Mapping[str, str] | None = None,
                 translation: Mapping[str, str] | None = None,
                 singulars: Mapping[str, str] | None = None):
        self.exchangeable = self._build(exchangeable or {}, "exchangeable")
        self.translation = self._build(translation or {}, "translation")
        self.singulars = {k.casefold(): _normalize_ws(v)
                          for k, v in (singulars or {}).items()}

    @staticmethod
    def _build(raw: Mapping[str, str], name: str) -> dict[str, str]:
        table = {}
        for alias, canonical in raw.items():
            key = _normalize_ws(alias).casefold()
            value = _normalize_ws(canonical)
            table[key] = value
        for canonical in list(table.values()):
            mapped = table.get(canonical.casefold())
            if mapped is not None and mapped != canonical:
                raise CorpusFormatError(
                    f"{name} map is not idempotent: "
                    f"{canonical!r} remaps to {mapped!r}")
        return table

    def _apply(self, table: dict[str, str], label: str) -> str:
        label = _normalize_ws(label)
        hit = table.get(label.casefold())
        if hit is not None:
            return hit
        # Sided or bilateral labels carry a leading marker token; the map
        # entries themselves are unsided.
        parts = label.split(maxsplit=1)
        if len(parts) == 2 and parts[0] in self._MARKERS:
            hit = table.get(parts[1].casefold())
            if hit is not None:
                return f"{parts[0]} {hit}"
        return label

    def translate(self, label: str) -> str:
        return self._apply(self.translation, label)

    def exchange(self, label: str) -> str:
        return self._apply(self.exchangeable, label)

    def singularize(self, token: str) -> str:
        return self.singulars.get(token.casefold(), token)

    @classmethod
    def bundled(cls) -> "LabelMaps":
        """Maps shipped with the package (exchangeable terms, Swedish
        dictionary, plural forms)."""
        return _bundled_maps()


@lru_cache(maxsize=1)
def _bundled_maps() -> "LabelMaps":
    data = resources.files("ibtm.data")
    return LabelMaps(
        exchangeable=_parse_tsv((data / "exchangeable_labels.tsv").read_text("utf-8")),
        translation=_parse_tsv((data / "swedish_english.tsv").read_text("utf-8")),
        singulars=_parse_tsv((data / "plural_singular.tsv").read_text("utf-8")),
    )


def _parse_tsv(text: str) -> dict[str, str]:
    table = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        cols = stripped.split("\t")
        if len(cols) != 2:
            raise CorpusFormatError(
                f"line {lineno}: expected two tab-separated columns, got {len(cols)}")
        table[cols[0].strip()] = cols[1].strip()
    return table


def load_label_maps(exchangeable_path: str | Path | None = None,
                    translation_path: str | Path | None = None,
                    singular_path: str | Path | None = None) -> LabelMaps:
    """Load label maps from two-column TSV files ('#' comments allowed).

    Paths left as None fall back to the bundled tables.
    """
    bundled = LabelMaps.bundled()

    def read(path, fallback):
        if path is None:
            return fallback
        return _parse_tsv(Path(path).read_text("utf-8"))

    return LabelMaps(
        exchangeable=read(exchangeable_path, bundled.exchangeable),
        translation=read(translation_path, bundled.translation),
        singulars=read(singular_path, bundled.singulars),
    )


def split_bilateral(label: str, maps: LabelMaps | None = None) -> list[str]:
    """Split a bilateral label into its left and right forms.

    A label is bilateral iff its first whitespace-separated token is "B".
    The remainder is singularized token-by-token ("hands" -> "hand") and
    prefixed with "L" and "R".  Anything else passes through unchanged.
    """
    if not label:
        raise ValueError("label must be non-empty")
    if maps is None:
        maps = LabelMaps.bundled()
    label = _normalize_ws(label)
    tokens = label.split()
    if tokens[0] != "B" or len(tokens) == 1:
        return [label]
    rest = " ".join(maps.singularize(tok) for tok in tokens[1:])
    return [f"L {rest}", f"R {rest}"]


def normalize_labels(labels: Iterable[str], maps: LabelMaps,
                     translate: bool = True) -> list[str]:
    """Translate, canonicalize, and bilateral-split a label list.

    Output is deduplicated case-insensitively, keeping the first occurrence.
    The whole chain is idempotent.
    """
    out: list[str] = []
    seen: set[str] = set()
    for label in labels:
        label = _normalize_ws(label)
        if not label:
            continue
        if translate:
            label = maps.translate(label)
        label = maps.exchange(label)
        for part in split_bilateral(label, maps):
            key = part.casefold()
            if key not in seen:
                seen.add(key)
                out.append(part)
    return out


def preprocess_corpus(corpus: Corpus, maps: LabelMaps | None = None) -> Corpus:
    """Normalize every document's labels; translation only for "sv" corpora."""
    if maps is None:
        maps = LabelMaps.bundled()
    translate = corpus.language == "sv"
    docs = tuple(
        replace(doc, labels=tuple(normalize_labels(doc.labels, maps, translate)))
        for doc in corpus.documents)
    return Corpus(documents=docs, language="en")


@dataclass(frozen=True)
class LabelVocab:
    """Bijection between label strings and dense indices 0..size-1."""

    labels: tuple[str, ...]
    index: Mapping[str, int] = field(hash=False, compare=False, default=None)

    def __post_init__(self):
        if self.index is None:
            object.__setattr__(
                self, "index", {lab: i for i, lab in enumerate(self.labels)})

    @property
    def size(self) -> int:
        return len(self.labels)

    def __getitem__(self, label: str) -> int:
        return self.index[label]

    def __contains__(self, label: str) -> bool:
        return label in self.index


def build_label_vocab(corpus: Corpus) -> LabelVocab:
    """Collect all training labels into a lexicographically indexed vocabulary."""
    distinct = sorted({label for doc in corpus for label in doc.labels})
    if not distinct:
        raise ValueError("corpus has no labels; cannot build a label vocabulary")
    return LabelVocab(labels=tuple(distinct))


def scale_label_counts(counts: Mapping, factor: int) -> dict:
    """Multiply every label token count by ``factor`` (modality balancing)."""
    if factor < 1:
        raise ValueError(f"scale factor must be >= 1, got {factor}")
    return {key: value * factor for key, value in counts.items()}


# ---------------------------------------------------------------------------
# Corpus file format: UTF-8 JSON lines, one document per line, optional
# header line {"format": "ibtm-corpus", "version": 1, "language": ...}.
# ---------------------------------------------------------------------------

CORPUS_FORMAT = "ibtm-corpus"
CORPUS_VERSION = 1


def _parse_point(obj, lineno: int, idx: int) -> DrawingPoint:
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"line {lineno}: point {idx} is not an object")
    for key in ("view", "x", "y"):
        if key not in obj:
            raise CorpusFormatError(f"line {lineno}: point {idx} missing '{key}'")
    try:
        return DrawingPoint(
            view=obj["view"],
            x=float(obj["x"]),
            y=float(obj["y"]),
            intensity=float(obj.get("intensity", 1.0)),
        )
    except (TypeError, ValueError) as exc:
        raise CorpusFormatError(f"line {lineno}: point {idx}: {exc}") from exc


def _parse_record(obj, lineno: int) -> Document:
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"line {lineno}: record is not an object")
    if "id" not in obj or not isinstance(obj["id"], str) or not obj["id"]:
        raise CorpusFormatError(f"line {lineno}: missing or empty 'id'")
    points_raw = obj.get("points")
    if not isinstance(points_raw, list) or not points_raw:
        raise CorpusFormatError(f"line {lineno}: 'points' must be a non-empty list")
    labels_raw = obj.get("labels", [])
    if not isinstance(labels_raw, list) or any(not isinstance(s, str) for s in labels_raw):
        raise CorpusFormatError(f"line {lineno}: 'labels' must be a list of strings")
    points = tuple(_parse_point(p, lineno, i) for i, p in enumerate(points_raw))
    return Document(id=obj["id"], points=points, labels=tuple(labels_raw))


def parse_corpus(stream: IO[str] | IO[bytes] | str | bytes) -> Corpus:
    """Parse a newline-delimited corpus stream.

    Accepts text, bytes, or a file object.  Errors report the 1-based line
    number of the offending record.
    """
    if hasattr(stream, "read"):
        data = stream.read()
    else:
        data = stream
    if isinstance(data, bytes):
        data = data.decode("utf-8")

    language = "en"
    documents: list[Document] = []
    ids: set[str] = set()
    for lineno, line in enumerate(data.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"line {lineno}: invalid JSON: {exc.msg}") from exc
        if isinstance(obj, dict) and obj.get("format") == CORPUS_FORMAT:
            if obj.get("version") != CORPUS_VERSION:
                raise CorpusFormatError(
                    f"line {lineno}: unsupported corpus version {obj.get('version')!r}")
            language = obj.get("language", "en")
            continue
        doc = _parse_record(obj, lineno)
        if doc.id in ids:
            raise CorpusFormatError(f"line {lineno}: duplicate document id {doc.id!r}")
        ids.add(doc.id)
        documents.append(doc)
    if not documents:
        raise CorpusFormatError("empty corpus")
    return Corpus(documents=tuple(documents), language=language)


def load_corpus(path: str | Path) -> Corpus:
    return parse_corpus(Path(path).read_text("utf-8"))


def serialize_corpus(corpus: Corpus, stream: IO[str] | None = None) -> str:
    """Write a corpus back to its line-oriented file form."""
    lines = [json.dumps({"format": CORPUS_FORMAT, "version": CORPUS_VERSION,
                         "language": corpus.language})]
    for doc in corpus:
        lines.append(json.dumps({
            "id": doc.id,
            "points": [{"view": p.view, "x": p.x, "y": p.y, "intensity": p.intensity}
                       for p in doc.points],
            "labels": list(doc.labels),
        }))
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(serialize_corpus(corpus), "utf-8")
