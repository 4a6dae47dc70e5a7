"""Scoring of inference results against ground truth.

Raw answers are coerced into one of four types (boolean, trend, number,
text). Booleans and trends score by accuracy, numbers by relative error
with outlier exclusion, free text by semantic similarity and BLEU. The
trend keyword lexicon is a versioned data file, not code.
"""

from __future__ import annotations

import json
import math
import re
import statistics
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import JoinFailure
from .values import parse_number

DEFAULT_OUTLIER_PCT = 1000.0

_BOOL_MAP = {"true": True, "yes": True, "false": False, "no": False}

# numeric tokens must look like a quantity: currency/percent marked, grouped,
# decimal, or scientific -- or the whole string must be the number. A bare
# integer inside a sentence ("since 2009") stays text.
_MARKED_NUMBER = re.compile(
    r"""(?P<currency>[$€£¥])?\s*
        (?P<num>[+-]?(?:
            \d{1,3}(?:,\d{3})+(?:\.\d+)?   # grouped: 1,337 or 1,337.5
          | \d+\.\d+                        # decimal: 63.27
          | \.\d+                           # bare decimal: .75
          | \d+(?:[eE][+-]?\d+)             # scientific: 2e10
          | \d+(?=\s*%)                     # integer followed by percent
        ))
        \s*(?P<pct>%)?""",
    re.VERBOSE,
)

_WORD = re.compile(r"[a-z']+")


def _load_lexicon() -> dict[str, set[str]]:
    text = resources.files("ctg").joinpath("data/trend_lexicon.json").read_text("utf-8")
    return {trend: set(words) for trend, words in json.loads(text).items()}


_LEXICON = _load_lexicon()


@dataclass
class TypedAnswer:
    raw: str
    coerced_type: str  # boolean | trend | number | text
    bool_value: bool | None = None
    trend_value: str | None = None
    number_value: float | None = None
    unit: str | None = None

    def rendered(self) -> str:
        if self.coerced_type == "boolean":
            return "True" if self.bool_value else "False"
        if self.coerced_type == "trend":
            return self.trend_value
        if self.coerced_type == "number":
            value = self.number_value
            text = str(int(value)) if value == int(value) else repr(value)
            return f"{text} {self.unit}".strip() if self.unit else text
        return self.raw


def _detect_number(text: str) -> tuple[float, str | None] | None:
    whole = parse_number(text)
    if whole is not None:
        return whole, None
    # a bare number leading the string still reads as a quantity
    head, _, rest = text.strip().partition(" ")
    lead = parse_number(head)
    if lead is not None:
        unit_words = []
        for word in rest.split()[:3]:
            if re.fullmatch(r"[A-Za-z/%€£$¥-]+", word):
                unit_words.append(word)
            else:
                break
        return lead, " ".join(unit_words) or None
    match = _MARKED_NUMBER.search(text)
    if match is None:
        return None
    value = float(match.group("num").replace(",", ""))
    unit_bits = []
    if match.group("currency"):
        unit_bits.append(match.group("currency"))
    if match.group("pct"):
        unit_bits.append("%")
    else:
        trailing = text[match.end():].strip()
        words = trailing.split()
        unit_words = []
        for word in words[:3]:
            if re.fullmatch(r"[A-Za-z/-]+", word):
                unit_words.append(word)
            else:
                break
        unit_bits.extend(unit_words)
    unit = " ".join(unit_bits) if unit_bits else None
    return value, unit


def _detect_trend(text: str) -> str | None:
    words = _WORD.findall(text.lower())
    first: tuple[int, str] | None = None
    for idx, word in enumerate(words):
        for trend, vocab in _LEXICON.items():
            if word in vocab and (first is None or idx < first[0]):
                first = (idx, trend)
    return first[1] if first else None


def coerce(raw: object) -> TypedAnswer:
    """Total coercion of raw answer text into a typed value.

    Precedence: a leading true/false/yes/no word wins; then a quantity-like
    number (so "rose to $71.75" is numeric despite the trend verb); then a
    trend keyword; everything else stays text.
    """
    text = str(raw).strip()
    words = _WORD.findall(text.lower())
    if words and words[0] in _BOOL_MAP:
        return TypedAnswer(raw=text, coerced_type="boolean", bool_value=_BOOL_MAP[words[0]])
    number = _detect_number(text)
    if number is not None:
        value, unit = number
        return TypedAnswer(raw=text, coerced_type="number", number_value=value, unit=unit)
    trend = _detect_trend(text)
    if trend is not None:
        return TypedAnswer(raw=text, coerced_type="trend", trend_value=trend)
    return TypedAnswer(raw=text, coerced_type="text")


@dataclass(frozen=True)
class Excluded:
    reason: str  # zero-ground-truth | outlier


def relative_error(
    gt_number: float, pred_number: float, outlier_pct: float = DEFAULT_OUTLIER_PCT
) -> float | Excluded:
    """Percentage error relative to ground truth; guards zero and outliers."""
    if gt_number == 0:
        return Excluded("zero-ground-truth")
    error = 100.0 * abs(pred_number - gt_number) / abs(gt_number)
    if error > outlier_pct:
        return Excluded("outlier")
    return error


def text_similarity(gt: str, pred: str, backend) -> float:
    """Cosine similarity of unit-norm embeddings."""
    vectors = backend.embed([str(gt), str(pred)])
    a, b = vectors[0], vectors[1]
    return float(sum(x * y for x, y in zip(a, b)))


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(gt: str, pred: str, max_n: int = 4) -> float:
    """BLEU with uniform weights and brevity penalty over whitespace tokens."""
    reference = str(gt).split()
    candidate = str(pred).split()
    if not candidate or not reference:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_counts = _ngrams(candidate, n)
        ref_counts = _ngrams(reference, n)
        total = sum(cand_counts.values())
        if total == 0:
            return 0.0
        clipped = sum(
            min(count, ref_counts.get(gram, 0)) for gram, count in cand_counts.items()
        )
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)
    precision = math.exp(log_sum / max_n)
    if len(candidate) >= len(reference):
        bp = 1.0
    else:
        bp = math.exp(1.0 - len(reference) / len(candidate))
    return bp * precision


# --- report ------------------------------------------------------------------


@dataclass
class NumericSummary:
    count: int = 0
    mean_relative_error: float | None = None
    median_relative_error: float | None = None
    outlier_count: int = 0
    outlier_fraction: float = 0.0
    excluded_zero_gt: int = 0

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "excluded_zero_gt": self.excluded_zero_gt,
            "mean_relative_error": self.mean_relative_error,
            "median_relative_error": self.median_relative_error,
            "outlier_count": self.outlier_count,
            "outlier_fraction": self.outlier_fraction,
        }


@dataclass
class SplitMetrics:
    total: int = 0
    bool_total: int = 0
    bool_correct: int = 0
    trend_total: int = 0
    trend_correct: int = 0
    numeric: NumericSummary = field(default_factory=NumericSummary)
    text_total: int = 0
    mean_cosine_similarity: float | None = None
    mean_bleu: float | None = None

    @property
    def bool_accuracy(self) -> float | None:
        return self.bool_correct / self.bool_total if self.bool_total else None

    @property
    def trend_accuracy(self) -> float | None:
        return self.trend_correct / self.trend_total if self.trend_total else None

    def to_dict(self) -> dict:
        return {
            "bool_accuracy": self.bool_accuracy,
            "bool_total": self.bool_total,
            "mean_bleu": self.mean_bleu,
            "mean_cosine_similarity": self.mean_cosine_similarity,
            "numeric": self.numeric.to_dict(),
            "text_total": self.text_total,
            "total": self.total,
            "trend_accuracy": self.trend_accuracy,
            "trend_total": self.trend_total,
        }


@dataclass
class Efficiency:
    mean_steps: float = 0.0
    mean_retries: float = 0.0
    mean_input_tokens: float = 0.0
    mean_output_tokens: float = 0.0

    def to_dict(self) -> dict:
        return {
            "mean_input_tokens": self.mean_input_tokens,
            "mean_output_tokens": self.mean_output_tokens,
            "mean_retries": self.mean_retries,
            "mean_steps": self.mean_steps,
        }


@dataclass
class EvalReport:
    overall: SplitMetrics
    by_split: dict[str, SplitMetrics]
    efficiency: Efficiency
    result_count: int

    def to_dict(self) -> dict:
        return {
            "by_split": {k: v.to_dict() for k, v in sorted(self.by_split.items())},
            "efficiency": self.efficiency.to_dict(),
            "overall": self.overall.to_dict(),
            "result_count": self.result_count,
        }


def _score_line(metrics: SplitMetrics, gt_raw: str, pred_raw: str, backend, accum) -> None:
    gt = coerce(gt_raw)
    pred = coerce(pred_raw)
    metrics.total += 1
    if gt.coerced_type == "boolean":
        metrics.bool_total += 1
        if pred.coerced_type == "boolean" and pred.bool_value == gt.bool_value:
            metrics.bool_correct += 1
    elif gt.coerced_type == "trend":
        metrics.trend_total += 1
        if pred.coerced_type == "trend" and pred.trend_value == gt.trend_value:
            metrics.trend_correct += 1
    elif gt.coerced_type == "number":
        accum["numeric"].append(
            (gt.number_value, pred.number_value if pred.coerced_type == "number" else None)
        )
    else:
        metrics.text_total += 1
        if backend is not None:
            accum["cosine"].append(text_similarity(gt_raw, pred_raw, backend))
        accum["bleu"].append(bleu(gt_raw, pred_raw))


def _finalize(metrics: SplitMetrics, accum, outlier_pct: float) -> None:
    numeric = NumericSummary()
    errors = []
    for gt_value, pred_value in accum["numeric"]:
        numeric.count += 1
        if pred_value is None:
            # off-type answer counts as an outlier-style exclusion
            numeric.outlier_count += 1
            continue
        scored = relative_error(gt_value, pred_value, outlier_pct)
        if isinstance(scored, Excluded):
            if scored.reason == "outlier":
                numeric.outlier_count += 1
            else:
                numeric.excluded_zero_gt += 1
            continue
        errors.append(scored)
    if errors:
        numeric.mean_relative_error = statistics.fmean(errors)
        numeric.median_relative_error = statistics.median(errors)
    if numeric.count:
        numeric.outlier_fraction = numeric.outlier_count / numeric.count
    metrics.numeric = numeric
    if accum["cosine"]:
        metrics.mean_cosine_similarity = statistics.fmean(accum["cosine"])
    if accum["bleu"]:
        metrics.mean_bleu = statistics.fmean(accum["bleu"])


def build_report(
    results: list[dict],
    dataset: list[dict],
    backend=None,
    outlier_pct: float = DEFAULT_OUTLIER_PCT,
) -> EvalReport:
    """Join result lines to dataset lines by query_id and aggregate metrics."""
    by_id = {line["query_id"]: line for line in dataset}
    overall = SplitMetrics()
    splits = {"observation": SplitMetrics(), "counterfactual": SplitMetrics()}
    accums = {
        key: {"numeric": [], "cosine": [], "bleu": []}
        for key in ("overall", "observation", "counterfactual")
    }
    steps, retries, tokens_in, tokens_out = [], [], [], []
    for line in results:
        query = by_id.get(line.get("query_id"))
        if query is None:
            raise JoinFailure(f"result {line.get('query_id')!r} has no dataset line")
        gt = query["ground_truth"]
        pred = line.get("target_value", "")
        kind = query.get("kind", "observation")
        _score_line(overall, gt, pred, backend, accums["overall"])
        _score_line(splits[kind], gt, pred, backend, accums[kind])
        trace = line.get("trace") or {}
        trace_steps = trace.get("steps")
        steps.append(
            len(trace_steps) if isinstance(trace_steps, list) else float(trace_steps or 0)
        )
        retries.append(float(trace.get("retries") or 0))
        tokens_in.append(float(trace.get("input_tokens") or 0))
        tokens_out.append(float(trace.get("output_tokens") or 0))
    _finalize(overall, accums["overall"], outlier_pct)
    for kind, metrics in splits.items():
        _finalize(metrics, accums[kind], outlier_pct)
    efficiency = Efficiency(
        mean_steps=statistics.fmean(steps) if steps else 0.0,
        mean_retries=statistics.fmean(retries) if retries else 0.0,
        mean_input_tokens=statistics.fmean(tokens_in) if tokens_in else 0.0,
        mean_output_tokens=statistics.fmean(tokens_out) if tokens_out else 0.0,
    )
    return EvalReport(
        overall=overall,
        by_split=splits,
        efficiency=efficiency,
        result_count=len(results),
    )


def load_jsonl(path: str | Path) -> list[dict]:
    lines = []
    with open(path, encoding="utf-8") as handle:
        for raw in handle:
            raw = raw.strip()
            if raw:
                lines.append(json.loads(raw))
    return lines


def write_jsonl(records: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
            handle.write("\n")
