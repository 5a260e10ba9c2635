"""Versioned report envelopes with canonical serialization.

Every CLI command wraps its result in an :class:`AnalysisReport`:
schema version, creation timestamp, a digest of the input bytes, the
analysis payload, a full echo of the options and seeds that produced
it, and accumulated warnings. JSON rendering is canonical — sorted
keys, floats at 10 significant digits — so identical analyses are
byte-identical across runs and platforms. Markdown rendering carries
the same numbers at 4 decimals with tables for matrices; its layout is
documented but not a compatibility surface.

For reproducible pipelines the timestamp honors the ``SOURCE_DATE_EPOCH``
convention; without it ``created_at`` is null rather than a
determinism-breaking wall clock.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .exceptions import DataError

SCHEMA_VERSION = "1"
FORMATS = ("json", "markdown")

_PLOTTABLE_HINT = (
    "plottable analyses: efa/suggest-k (scree), mtmm (heat values), "
    "and any analysis carrying bootstrap samples"
)


@dataclass
class AnalysisReport:
    """One analysis result with everything needed to reproduce it."""

    analysis: dict
    options: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    input_digest: str | None = None
    created_at: str | None = None
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        if "kind" not in self.analysis:
            raise DataError("analysis payload must carry a 'kind' discriminator")

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "created_at": self.created_at,
            "input_digest": self.input_digest,
            "analysis": self.analysis,
            "options": self.options,
            "warnings": list(self.warnings),
        }


def input_digest(chunks: list[bytes]) -> str:
    """sha256 over the concatenated input byte streams, in argument order."""
    h = hashlib.sha256()
    for chunk in chunks:
        h.update(chunk)
    return f"sha256:{h.hexdigest()}"


def created_at_stamp() -> str | None:
    """ISO-8601 UTC stamp from SOURCE_DATE_EPOCH, or None when unset."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return None
    try:
        seconds = int(epoch)
    except ValueError:
        raise DataError(f"SOURCE_DATE_EPOCH must be an integer, got {epoch!r}")
    stamp = datetime.fromtimestamp(seconds, tz=timezone.utc)
    return stamp.strftime("%Y-%m-%dT%H:%M:%SZ")


def build_report(analysis: dict, options: dict, warnings: list[str],
                 input_chunks: list[bytes] | None = None) -> AnalysisReport:
    """Assemble an envelope; inputs may be absent (pure simulation)."""
    return AnalysisReport(
        analysis=jsonable(analysis),
        options=jsonable(options),
        warnings=[str(w) for w in warnings],
        input_digest=input_digest(input_chunks) if input_chunks else None,
        created_at=created_at_stamp(),
    )


def jsonable(value):
    """Recursively coerce numpy scalars/arrays into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if value is None or isinstance(value, str):
        return value
    raise DataError(f"value of type {type(value).__name__} is not serializable")


def _format_float(value: float) -> str:
    if not np.isfinite(value):
        raise DataError(f"non-finite value {value} cannot be serialized")
    text = "%.10g" % value
    # %g never emits a decimal point or exponent for integral values,
    # which would round-trip as an integer; keep the float marker.
    if "." not in text and "e" not in text and "E" not in text \
            and "inf" not in text and "nan" not in text:
        text += ".0"
    return text


def _canonical_json(value, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, str):
        import json as _json
        out.append(_json.dumps(value, ensure_ascii=True))
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(_format_float(value))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _canonical_json(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise DataError(f"JSON object keys must be strings, got {key!r}")
            if i:
                out.append(",")
            _canonical_json(key, out)
            out.append(":")
            _canonical_json(value[key], out)
        out.append("}")
    else:
        raise DataError(
            f"value of type {type(value).__name__} is not serializable"
        )


def render(report: AnalysisReport, format: str = "json") -> bytes:
    """Serialize a report; canonical JSON or 4-decimal markdown."""
    if format not in FORMATS:
        raise DataError(f"format must be one of {FORMATS}, got {format!r}")
    if format == "json":
        parts: list[str] = []
        _canonical_json(jsonable(report.to_dict()), parts)
        return ("".join(parts) + "\n").encode("utf-8")
    return _render_markdown(report).encode("utf-8")


# --- markdown -------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _kv_lines(pairs: list[tuple[str, object]]) -> list[str]:
    return [f"- {key}: {_fmt(value)}" for key, value in pairs]


def _table(header: list[str], rows: list[list]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(" --- " for _ in header) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(_fmt(cell) for cell in row) + " |")
    return lines


_TITLES = {
    "reliability": "Reliability analysis",
    "criterion-validity": "Criterion validity analysis",
    "mtmm": "Multitrait-multimethod analysis",
    "efa": "Exploratory factor analysis",
    "cfa": "Confirmatory factor analysis",
    "factor-scores": "Factor scores",
    "suggest-k": "Factor count suggestion",
    "simulate-ctt": "Simulated dataset",
    "simulate-retest": "Simulated retest datasets",
    "simulate-factor": "Simulated factor dataset",
    "simulate-criterion": "Simulated dataset with criterion",
}


def _md_bootstrap(analysis: dict) -> list[str]:
    ci = analysis.get("bootstrap")
    if not ci:
        return []
    return ["", "### Bootstrap interval"] + _kv_lines([
        ("level", ci.get("level")),
        ("lo", ci.get("lo")),
        ("hi", ci.get("hi")),
        ("replicates", ci.get("replicates")),
        ("failed replicates", ci.get("n_failed")),
        ("seed", ci.get("seed")),
    ])


def _md_reliability(analysis: dict) -> list[str]:
    estimate = analysis["estimate"]
    lines = _kv_lines([
        ("method", estimate["method"]),
        ("estimate", estimate["estimate"]),
        ("estimate (clamped)", estimate["estimate_clamped"]),
        ("standard error of measurement", estimate["sem"]),
        ("candidates", estimate["n_candidates"]),
        ("items", estimate["n_items"]),
    ])
    details = estimate.get("details", {})
    splits = details.get("splits")
    if splits:
        lines += ["", "### Splits", ""]
        lines += _table(
            ["half correlation", "stepped up", "seed"],
            [[s["half_correlation"], s["stepped_up"], s["seed"]] for s in splits],
        )
    if details.get("fisher_ci"):
        lo, hi, level = details["fisher_ci"]
        lines.append(f"- Fisher interval ({_fmt(level)}): "
                     f"[{_fmt(lo)}, {_fmt(hi)}]")
    lines += _md_bootstrap(analysis)
    return lines


def _md_validity(analysis: dict) -> list[str]:
    rep = analysis["report"]
    lines = _kv_lines([
        ("r_xy", rep["r_xy"]),
        ("n", rep["n"]),
        ("mode", rep["mode"]),
        ("rel_x", rep["rel_x"]),
        ("rel_y", rep["rel_y"]),
        ("attenuation bound", rep["attenuation_bound"]),
        ("bound satisfied", rep["bound_satisfied"]),
        ("bound margin", rep["bound_margin"]),
        ("disattenuated r", rep["r_disattenuated"]),
    ])
    if rep.get("ci"):
        lo, hi, level = rep["ci"]
        lines.append(f"- Fisher interval ({_fmt(level)}): [{_fmt(lo)}, {_fmt(hi)}]")
    lines += _md_bootstrap(analysis)
    return lines


def _md_mtmm(analysis: dict) -> list[str]:
    table = analysis["table"]
    summary = analysis["summary"]
    labels = [f"{t}/{m}" for t, m in table["labels"]]
    corr = table["corr"]
    lines = ["### Correlation table", ""]
    lines += _table([""] + labels,
                    [[labels[i]] + corr[i] for i in range(len(labels))])
    if table.get("reliability_diagonal"):
        lines += ["", "### Reliability diagonal", ""]
        lines += _table(["measure", "reliability"],
                        list(map(list, zip(labels, table["reliability_diagonal"]))))
    lines += ["", "### Campbell-Fiske summary"]
    lines += _kv_lines([
        ("convergent mean", summary["convergent_mean"]),
        ("heterotrait-monomethod mean", summary["discriminant_mono_mean"]),
        ("heterotrait-heteromethod mean", summary["discriminant_hetero_mean"]),
        ("convergent pass", summary["convergent_pass"]),
        ("discriminant pass", summary["discriminant_pass"]),
    ])
    if summary["violations"]:
        lines += ["", "### Violations", ""]
        lines += [f"- {v}" for v in summary["violations"]]
    return lines


def _md_loadings(model: dict, items: list[str] | None) -> list[str]:
    loadings = model["loadings"]
    k = len(loadings[0]) if loadings else 0
    names = items if items else [f"item {j}" for j in range(len(loadings))]
    lines = ["### Loadings", ""]
    lines += _table(
        ["item"] + [f"factor {i}" for i in range(k)] + ["uniqueness"],
        [[names[j]] + loadings[j] + [model["uniquenesses"][j]]
         for j in range(len(loadings))],
    )
    lines += ["", "### Model"]
    lines += _kv_lines([
        ("factors", model["n_factors"]),
        ("rotation", model["rotation"]),
        ("converged", model["converged"]),
        ("iterations", model["iterations"]),
        ("Heywood items", ", ".join(map(str, model["heywood_flags"])) or None),
    ])
    return lines


def _md_efa(analysis: dict) -> list[str]:
    lines = _md_loadings(analysis["model"], analysis.get("items"))
    if analysis.get("eigenvalues"):
        lines += ["", "### Eigenvalues", ""]
        lines += _table(["component", "eigenvalue"],
                        [[i + 1, v] for i, v in enumerate(analysis["eigenvalues"])])
    return lines


def _md_cfa(analysis: dict) -> list[str]:
    fit = analysis["fit"]
    lines = _md_loadings(fit["model"], analysis.get("items"))
    lines += ["", "### Fit"]
    lines += _kv_lines([
        ("discrepancy", fit["discrepancy"]),
        ("gradient norm", fit["gradient_norm"]),
        ("converged", fit["converged"]),
    ])
    return lines


def _md_scores(analysis: dict) -> list[str]:
    scores = analysis["scores"]["scores"]
    names = analysis["scores"].get("candidates") or [
        f"candidate {i}" for i in range(len(scores))]
    k = len(scores[0]) if scores else 0
    lines = [f"- method: {analysis['scores']['method']}", "", "### Scores", ""]
    lines += _table(["candidate"] + [f"factor {i}" for i in range(k)],
                    [[names[i]] + scores[i] for i in range(len(scores))])
    return lines


def _md_suggest(analysis: dict) -> list[str]:
    lines = _kv_lines([("suggested factors", analysis["n_factors"])])
    lines += ["", "### Eigenvalues", ""]
    lines += _table(["component", "eigenvalue"],
                    [[i + 1, v] for i, v in enumerate(analysis["eigenvalues"])])
    return lines


def _md_simulate(analysis: dict) -> list[str]:
    pairs = [(k, v) for k, v in sorted(analysis.items())
             if k not in ("kind", "spec") and not isinstance(v, (dict, list))]
    lines = _kv_lines(pairs)
    spec = analysis.get("spec")
    if spec:
        lines += ["", "### Spec"]
        lines += _kv_lines([
            (k, v if not isinstance(v, list) else ", ".join(map(_fmt, v)))
            for k, v in sorted(spec.items())
        ])
    return lines


_MD_RENDERERS = {
    "reliability": _md_reliability,
    "criterion-validity": _md_validity,
    "mtmm": _md_mtmm,
    "efa": _md_efa,
    "cfa": _md_cfa,
    "factor-scores": _md_scores,
    "suggest-k": _md_suggest,
}


def _render_markdown(report: AnalysisReport) -> str:
    analysis = jsonable(report.analysis)
    kind = analysis["kind"]
    title = _TITLES.get(kind, "Analysis")
    lines = [f"# {title}", ""]
    lines += _kv_lines([
        ("schema version", report.schema_version),
        ("created at", report.created_at),
        ("input digest", report.input_digest),
    ])
    options = jsonable(report.options)
    if options:
        lines += ["", "## Options", ""]
        lines += _table(["option", "value"],
                        [[k, _fmt_option(v)] for k, v in sorted(options.items())])
    lines += ["", "## Results", ""]
    renderer = _MD_RENDERERS.get(kind, _md_simulate)
    lines += renderer(analysis)
    lines += ["", "## Warnings", ""]
    if report.warnings:
        lines += [f"- {w}" for w in report.warnings]
    else:
        lines += ["- none"]
    return "\n".join(lines) + "\n"


def _fmt_option(value) -> str:
    if isinstance(value, (dict, list)):
        parts: list[str] = []
        _canonical_json(value, parts)
        return "".join(parts)
    return _fmt(value)


# --- plot data ------------------------------------------------------------

def plot_data(report: AnalysisReport) -> bytes:
    """Extract a plain CSV series for external plotting tools.

    EFA / suggest-k reports yield the eigenvalue scree, MTMM reports the
    cell values with block labels, and any analysis carrying bootstrap
    samples yields the replicate series. Anything else is an error.
    """
    analysis = jsonable(report.analysis)
    kind = analysis.get("kind")

    if kind in ("efa", "suggest-k") and analysis.get("eigenvalues"):
        lines = ["component,eigenvalue"]
        lines += [f"{i + 1},{_format_float(float(v))}"
                  for i, v in enumerate(analysis["eigenvalues"])]
        return ("\n".join(lines) + "\n").encode("utf-8")

    if kind == "mtmm":
        table = analysis["table"]
        labels = [tuple(lab) for lab in table["labels"]]
        corr = table["corr"]
        lines = ["row_trait,row_method,col_trait,col_method,r,block"]
        for i, (t1, m1) in enumerate(labels):
            for j in range(i + 1, len(labels)):
                t2, m2 = labels[j]
                if t1 == t2 and m1 == m2:
                    continue
                if t1 == t2:
                    block = "monotrait-heteromethod"
                elif m1 == m2:
                    block = "heterotrait-monomethod"
                else:
                    block = "heterotrait-heteromethod"
                lines.append(
                    f"{t1},{m1},{t2},{m2},"
                    f"{_format_float(float(corr[i][j]))},{block}"
                )
        return ("\n".join(lines) + "\n").encode("utf-8")

    ci = analysis.get("bootstrap")
    if ci and ci.get("samples"):
        lines = ["replicate,value"]
        lines += [f"{i},{_format_float(float(v))}"
                  for i, v in enumerate(ci["samples"])]
        return ("\n".join(lines) + "\n").encode("utf-8")

    raise DataError(f"analysis kind {kind!r} has no plottable content; "
                    + _PLOTTABLE_HINT)
