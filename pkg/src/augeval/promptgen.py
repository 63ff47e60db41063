"""Weather/time prompt pipeline: subgroup estimation, counterfactual
target sampling, caption cleaning, and template assembly.

The caption producer (a VLM) lives outside this package; here we only
post-process its raw output and assemble the final training and
evaluation prompts from a 15-entry style dictionary.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ValidationError
from .tensorio import IGNORE_LABEL, NUM_CLASSES, TRAIN_ID_NAMES
from .textalign import cosine_similarity

WEATHER_LABELS = ("Clear", "Cloudy", "Rainy", "Snowy", "Foggy")
TIME_LABELS = ("Day", "Twilight", "Night")

# Raw words a caption must not fix; detection is a warning, never a rewrite.
FORBIDDEN_STEMS = (
    "rain", "snow", "fog", "clear", "sunny", "day", "night", "dawn",
    "dusk", "twilight",
)
_FORBIDDEN_RE = re.compile(
    r"\b(?:" + "|".join(FORBIDDEN_STEMS) + r")(?:y|ing|s|time)?\b",
    re.IGNORECASE,
)

# Lowercase prefixes stripped from VLM output, applied to fixpoint.
DEFAULT_REASONING_PREFIXES = (
    "okay,", "okay.", "alright,", "sure,", "sure!", "sure.",
    "certainly!", "certainly,", "here is the caption:",
    "here's the caption:", "here is a caption:", "the caption is:",
    "caption:", "description:",
)

_THINK_RE = re.compile(r"<think>.*?</think>", re.IGNORECASE | re.DOTALL)

CAPTION_WORD_LIMIT = 45
FALLBACK_CLASS_PHRASE = "typical urban street elements"


@dataclass(frozen=True)
class Subgroup:
    weather: str
    time: str

    def __post_init__(self):
        if self.weather not in WEATHER_LABELS:
            raise ValidationError(f"unknown weather label {self.weather!r}")
        if self.time not in TIME_LABELS:
            raise ValidationError(f"unknown time label {self.time!r}")

    def as_dict(self) -> dict:
        return {"w": self.weather, "t": self.time}


@dataclass(frozen=True)
class StyleEntry:
    adjective: str
    decorations: tuple[str, str, str]

    def __post_init__(self):
        if len(self.decorations) != 3:
            raise ValidationError("style entry needs exactly 3 decorations")


@dataclass
class CaptionResult:
    caption: str
    forbidden_words: list[str]
    word_count: int

    @property
    def too_long(self) -> bool:
        return self.word_count > CAPTION_WORD_LIMIT


def estimate_subgroup(
    image_emb: np.ndarray,
    weather_text_embs: np.ndarray,
    time_text_embs: np.ndarray,
) -> Subgroup:
    """Independent per-axis argmax of cosine similarity; ties go to the
    lower label index."""
    weather_text_embs = np.asarray(weather_text_embs, dtype=np.float64)
    time_text_embs = np.asarray(time_text_embs, dtype=np.float64)
    if len(weather_text_embs) != len(WEATHER_LABELS):
        raise ValidationError(f"need {len(WEATHER_LABELS)} weather embeddings")
    if len(time_text_embs) != len(TIME_LABELS):
        raise ValidationError(f"need {len(TIME_LABELS)} time embeddings")
    w_sims = [cosine_similarity(image_emb, e) for e in weather_text_embs]
    t_sims = [cosine_similarity(image_emb, e) for e in time_text_embs]
    return Subgroup(
        weather=WEATHER_LABELS[int(np.argmax(w_sims))],
        time=TIME_LABELS[int(np.argmax(t_sims))],
    )


def sample_target_subgroup(src: Subgroup, seed: int) -> Subgroup:
    """Uniform counterfactual target excluding the source label per axis."""
    rng = np.random.default_rng(seed)
    weather_pool = [w for w in WEATHER_LABELS if w != src.weather]
    time_pool = [t for t in TIME_LABELS if t != src.time]
    return Subgroup(
        weather=weather_pool[int(rng.integers(len(weather_pool)))],
        time=time_pool[int(rng.integers(len(time_pool)))],
    )


def scan_forbidden_words(text: str) -> list[str]:
    """Distinct weather/time words present, lowercased, in text order."""
    seen = []
    for m in _FORBIDDEN_RE.finditer(text):
        word = m.group(0).lower()
        if word not in seen:
            seen.append(word)
    return seen


def clean_caption(raw: str,
                  prefixes: tuple[str, ...] = DEFAULT_REASONING_PREFIXES) -> CaptionResult:
    """Strip think blocks and reasoning prefixes, collapse whitespace.

    Forbidden weather/time words are reported, never removed. Raises
    when nothing remains after cleaning. Idempotent.
    """
    text = _THINK_RE.sub(" ", raw)
    text = re.sub(r"\s+", " ", text).strip()
    changed = True
    while changed:
        changed = False
        lower = text.lower()
        for prefix in prefixes:
            if lower.startswith(prefix):
                text = text[len(prefix):].lstrip()
                changed = True
                break
    if not text:
        raise ValidationError("caption is empty after cleaning")
    return CaptionResult(
        caption=text,
        forbidden_words=scan_forbidden_words(text),
        word_count=len(text.split()),
    )


def build_training_prompt(caption: str, src: Subgroup) -> str:
    """Caption plus the source-condition sentence, joined by one space."""
    if not caption:
        raise ValidationError("empty caption")
    return (
        f"{caption} Image taken in {src.weather.lower()} weather "
        f"at {src.time.lower()}."
    )


def build_eval_prompt(
    caption: str,
    class_names: list[str],
    target: Subgroup,
    style: StyleEntry,
) -> str:
    """Counterfactual prompt from the target subgroup's style entry."""
    if not caption:
        raise ValidationError("empty caption")
    names = ", ".join(class_names) if class_names else FALLBACK_CLASS_PHRASE
    d1, d2, d3 = style.decorations
    return (
        f"A realistic {style.adjective} city street scene with {names}. "
        f"{caption} {d1} {d2} {d3}. "
        f"Keep the same camera angle and composition as the original image."
    )


def style_key(subgroup: Subgroup) -> str:
    return f"{subgroup.weather}-{subgroup.time}"


def load_style(path: str | None = None) -> dict[str, StyleEntry]:
    """Style dictionary: one adjective + three decorations per
    weather-time cell. Defaults ship with the package."""
    if path is None:
        text = resources.files("augeval").joinpath("data/style_default.json").read_text()
    else:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"style file is not valid JSON: {e}") from e
    entries: dict[str, StyleEntry] = {}
    for w in WEATHER_LABELS:
        for t in TIME_LABELS:
            key = f"{w}-{t}"
            if key not in doc:
                raise ValidationError(f"style dictionary missing entry {key!r}")
            rec = doc[key]
            entries[key] = StyleEntry(
                adjective=str(rec["adjective"]),
                decorations=tuple(str(d) for d in rec["decorations"]),
            )
    return entries


def classes_in_label_map(labels: np.ndarray) -> list[str]:
    """Class names present in a trainId map, ordered by id."""
    present = np.unique(labels)
    return [
        TRAIN_ID_NAMES[int(c)]
        for c in present
        if c != IGNORE_LABEL and int(c) < NUM_CLASSES
    ]
