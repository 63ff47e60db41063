import numpy as np
import pytest

from augeval.errors import ValidationError
from augeval.promptgen import (
    TIME_LABELS,
    WEATHER_LABELS,
    CaptionResult,
    StyleEntry,
    Subgroup,
    build_eval_prompt,
    build_training_prompt,
    classes_in_label_map,
    clean_caption,
    estimate_subgroup,
    load_style,
    sample_target_subgroup,
    scan_forbidden_words,
    style_key,
)


def _embs_for(labels, hot, d=8):
    """One near-orthogonal basis embedding per label; `hot` marks the
    label the image embedding will align with."""
    embs = np.eye(len(labels), d)
    return embs, embs[labels.index(hot)].copy()


def test_estimate_weather_self_similarity():
    weather_embs, image = _embs_for(list(WEATHER_LABELS), "Rainy")
    time_embs = np.eye(3, 8) + 0.01
    sub = estimate_subgroup(image, weather_embs, time_embs)
    assert sub.weather == "Rainy"


def test_estimate_time_orthogonal_except_night():
    time_embs, image = _embs_for(list(TIME_LABELS), "Night")
    weather_embs = np.eye(5, 8) + 0.01
    sub = estimate_subgroup(image, weather_embs, time_embs)
    assert sub.time == "Night"


def test_estimate_cosine_table():
    # Basis embeddings make each cosine proportional to one image
    # component: weather sims ~ (0.3, 0.9, 0.1, 0.2, 0.0) -> Cloudy,
    # time sims ~ (0.1, 0.2, 0.9) -> Night.
    weather_embs = np.eye(5)
    image = np.array([0.3, 0.9, 0.1, 0.2, 0.0])
    time_embs = np.array([[0.0, 0.0, 1.0, 0.0, 0.0],
                          [0.0, 0.0, 0.0, 1.0, 0.0],
                          [0.0, 1.0, 0.0, 0.0, 0.0]])
    sub = estimate_subgroup(image, weather_embs, time_embs)
    assert sub.weather == "Cloudy"
    assert sub.time == "Night"


def test_estimate_tie_goes_to_lower_index():
    embs = np.tile([1.0, 0.0], (5, 1))
    image = np.array([1.0, 0.0])
    sub = estimate_subgroup(image, embs, np.tile([1.0, 0.0], (3, 1)))
    assert sub.weather == "Clear"
    assert sub.time == "Day"


def test_subgroup_validates_labels():
    with pytest.raises(ValidationError):
        Subgroup(weather="Sunny", time="Day")


def test_target_excludes_source_both_axes():
    src = Subgroup("Clear", "Day")
    for seed in range(500):
        tgt = sample_target_subgroup(src, seed)
        assert tgt.weather != "Clear"
        assert tgt.time != "Day"


def test_target_deterministic_per_seed():
    src = Subgroup("Foggy", "Night")
    assert sample_target_subgroup(src, 7) == sample_target_subgroup(src, 7)


def test_target_uniform_over_admissible_cells():
    src = Subgroup("Clear", "Day")
    counts = {}
    n = 10000
    for seed in range(n):
        tgt = sample_target_subgroup(src, seed)
        counts[(tgt.weather, tgt.time)] = counts.get((tgt.weather, tgt.time), 0) + 1
    assert len(counts) == 8
    for cell, c in counts.items():
        assert abs(c / n - 1 / 8) < 0.02, (cell, c / n)


def test_clean_caption_strips_think_block():
    assert clean_caption("<think>x</think> A street.").caption == "A street."


def test_clean_caption_collapses_whitespace():
    assert clean_caption("A  street.\n\n").caption == "A street."


def test_clean_caption_forbidden_word_warned_not_removed():
    result = clean_caption("A rainy street.")
    assert result.caption == "A rainy street."
    assert result.forbidden_words == ["rainy"]


def test_clean_caption_strips_prefixes_to_fixpoint():
    got = clean_caption("Sure, here is the caption: A quiet avenue.")
    assert got.caption == "A quiet avenue."


def test_clean_caption_idempotent():
    cases = [
        "<think>reasoning</think>Sure, A street with cars.",
        "Okay, okay, A    bridge.",
        "A plain caption already.",
        "Caption: rainy day ahead.",
    ]
    for raw in cases:
        once = clean_caption(raw).caption
        assert clean_caption(once).caption == once


def test_clean_caption_empty_rejected():
    with pytest.raises(ValidationError):
        clean_caption("<think>only thoughts</think>   ")


def test_forbidden_scan_suffixes():
    assert scan_forbidden_words("Snowy roads and raining skies") == ["snowy", "raining"]
    assert scan_forbidden_words("A clearly visible daytime scene") == ["daytime"]
    assert scan_forbidden_words("Nothing to report") == []


def test_word_count_warning_threshold():
    short = clean_caption(" ".join(["word"] * 45))
    long = clean_caption(" ".join(["word"] * 46))
    assert not short.too_long
    assert long.too_long


def test_training_prompt_template():
    got = build_training_prompt("A wide road.", Subgroup("Rainy", "Night"))
    assert got == "A wide road. Image taken in rainy weather at night."


def test_training_prompt_no_added_punctuation():
    got = build_training_prompt("No period here", Subgroup("Clear", "Day"))
    assert got == "No period here Image taken in clear weather at day."


def test_training_prompt_idempotent_build():
    args = ("A road.", Subgroup("Snowy", "Twilight"))
    assert build_training_prompt(*args) == build_training_prompt(*args)


def test_eval_prompt_template():
    style = StyleEntry(adjective="rain-soaked",
                       decorations=("Wet asphalt mirrors the bright sky.",
                                    "Raindrops bead and streak on every window.",
                                    "Light drizzle softens distant edges"))
    got = build_eval_prompt("A road.", ["car", "road"],
                            Subgroup("Rainy", "Day"), style)
    assert got.startswith("A realistic rain-soaked city street scene with car, road. ")
    assert got.endswith("Keep the same camera angle and composition as the original image.")
    assert "A road. Wet asphalt mirrors the bright sky." in got
    assert "  " not in got


def test_eval_prompt_fallback_class_phrase():
    style = StyleEntry("foggy", ("a.", "b.", "c"))
    got = build_eval_prompt("X.", [], Subgroup("Foggy", "Night"), style)
    assert "with typical urban street elements." in got


def test_style_default_has_all_15_cells():
    style = load_style()
    assert len(style) == 15
    for w in WEATHER_LABELS:
        for t in TIME_LABELS:
            entry = style[f"{w}-{t}"]
            assert len(entry.decorations) == 3
    assert style["Rainy-Day"].adjective == "rain-soaked"


def test_style_key():
    assert style_key(Subgroup("Snowy", "Night")) == "Snowy-Night"


def test_classes_in_label_map():
    labels = np.array([[13, 13, 0], [255, 10, 0]], dtype=np.uint8)
    assert classes_in_label_map(labels) == ["road", "sky", "car"]
