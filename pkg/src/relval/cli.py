"""Command-line interface: score files in, analysis reports out.

Every command reads long-format score files (CSV or JSON), runs one
analysis, and writes an :class:`~relval.report.AnalysisReport` as
canonical JSON (default) or markdown to ``--out`` (default stdout).
Exit codes: 0 success, 1 data/validation error (diagnostic on stderr),
2 usage error. All randomness flows from ``--seed`` or from seeds
embedded in spec files; a randomized operation without a seed is a
usage error, never an ambient default.
"""

from __future__ import annotations

import functools
import json
from pathlib import Path

import click
import numpy as np

from . import __version__
from .exceptions import RelvalError
from .exceptions import DataError
from . import ingest
from . import reliability as rel_mod
from . import validity as val_mod
from . import factor as factor_mod
from . import simulate as sim_mod
from . import report as report_mod
from .stats import MAX_SEED, bootstrap, correlation_matrix, pearson

SEED_RANGE = click.IntRange(0, MAX_SEED)


def _run_guard(f):
    """Convert library errors to exit-code-1 diagnostics."""
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except RelvalError as exc:
            raise click.ClickException(str(exc))
        except OSError as exc:
            raise click.ClickException(str(exc))
    return wrapper


def _input_options(f):
    options = [
        click.option("--missing", type=click.Choice(ingest.MISSING_POLICIES),
                     default="error", show_default=True,
                     help="Policy for missing candidate/item cells."),
        click.option("--rater-id", default=None,
                     help="Rater to select for single-rater aggregation."),
        click.option("--run-id", default=None,
                     help="Run to select for single-run aggregation."),
        click.option("--aggregation", type=click.Choice(ingest.AGGREGATIONS),
                     default="mean-over-runs", show_default=True,
                     help="How to collapse repeated measurements per cell."),
        click.option("--metric", required=True,
                     help="Metric id to analyse."),
        click.option("--input", "input_path", required=True,
                     type=click.Path(dir_okay=False),
                     help="Long-format score file (CSV; .json for JSON)."),
    ]
    for option in options:
        f = option(f)
    return f


def _output_options(f):
    options = [
        click.option("--out", "out_path", type=click.Path(dir_okay=False),
                     default=None, help="Report destination [default: stdout]."),
        click.option("--format", "out_format",
                     type=click.Choice(report_mod.FORMATS),
                     default="json", show_default=True,
                     help="Report rendering."),
    ]
    for option in options:
        f = option(f)
    return f


def _bootstrap_options(f):
    options = [
        click.option("--level", type=float, default=0.95, show_default=True,
                     help="Confidence level for intervals."),
        click.option("--bootstrap", "bootstrap_b", type=click.IntRange(min=0),
                     default=0, show_default=True,
                     help="Bootstrap replicates (0 disables; needs --seed)."),
        click.option("--seed", type=SEED_RANGE, default=None,
                     help="Seed for all randomized steps."),
    ]
    for option in options:
        f = option(f)
    return f


def _validate_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise click.UsageError(f"--level must be in (0, 1), got {level}")


def _validate_bootstrap(bootstrap_b: int, seed: int | None) -> None:
    if bootstrap_b == 0:
        return
    if bootstrap_b < 100:
        raise click.UsageError(
            f"--bootstrap needs at least 100 replicates, got {bootstrap_b}"
        )
    if seed is None:
        raise click.UsageError("--bootstrap requires --seed")


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}")


def _data_format(path: str) -> str:
    return "json" if path.lower().endswith(".json") else "csv-long"


def _load_matrix(path: str, metric: str, aggregation: str, run_id, rater_id,
                 missing: str) -> tuple[ingest.ScoreMatrix, bytes]:
    raw = _read_bytes(path)
    records = ingest.parse_records(raw, format=_data_format(path))
    matrix = ingest.pivot(records, metric, aggregation,
                          run_id=run_id, rater_id=rater_id, missing=missing)
    return matrix, raw


def _load_json(path: str):
    raw = _read_bytes(path)
    try:
        return json.loads(raw.decode("utf-8")), raw
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8: {exc}")
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}")


def _emit(rep: report_mod.AnalysisReport, out_format: str,
          out_path: str | None) -> None:
    data = report_mod.render(rep, out_format)
    if out_path:
        Path(out_path).write_bytes(data)
    else:
        stream = click.get_binary_stream("stdout")
        stream.write(data)
        stream.flush()


def _bootstrap_section(statistic, matrix, bootstrap_b: int, seed: int | None,
                       level: float) -> dict | None:
    if bootstrap_b == 0:
        return None
    ci = bootstrap(statistic, matrix, replicates=bootstrap_b, seed=seed,
                   level=level)
    section = ci.to_dict()
    section["samples"] = [float(v) for v in ci.samples]
    return section


def _paired_matrix(m1: ingest.ScoreMatrix,
                   m2: ingest.ScoreMatrix) -> ingest.ScoreMatrix:
    """Stack two candidate-aligned matrices side by side for joint resampling."""
    return ingest.ScoreMatrix(
        candidates=list(m1.candidates),
        items=[f"a::{it}" for it in m1.items] + [f"b::{it}" for it in m2.items],
        values=np.hstack([m1.values, m2.values]),
        label="paired",
    )


def _paired_r(split_at: int):
    def statistic(mm: ingest.ScoreMatrix) -> float:
        left = mm.values[:, :split_at].sum(axis=1)
        right = mm.values[:, split_at:].sum(axis=1)
        return pearson(left, right, ci_level=None).r
    return statistic


@click.group()
@click.version_option(version=__version__, prog_name="relval")
def cli():
    """Reliability and validity analysis for benchmark score matrices."""


def main():
    cli(prog_name="relval")


# --- reliability ----------------------------------------------------------

@cli.group("reliability")
def reliability_group():
    """Reliability coefficients for a metric's score matrix."""


def _reliability_report(est, metric: str, boot: dict | None, options: dict,
                        chunks: list[bytes]) -> report_mod.AnalysisReport:
    analysis = {
        "kind": "reliability",
        "metric": metric,
        "estimate": est.to_dict(),
        "bootstrap": boot,
    }
    return report_mod.build_report(analysis, options, est.warnings, chunks)


@reliability_group.command("alpha")
@_input_options
@_output_options
@_bootstrap_options
@_run_guard
def reliability_alpha(input_path, metric, aggregation, run_id, rater_id,
                      missing, out_format, out_path, seed, bootstrap_b, level):
    """Cronbach's alpha over items."""
    _validate_level(level)
    _validate_bootstrap(bootstrap_b, seed)
    matrix, raw = _load_matrix(input_path, metric, aggregation, run_id,
                               rater_id, missing)
    est = rel_mod.cronbach_alpha(matrix)
    boot = _bootstrap_section(lambda mm: rel_mod.cronbach_alpha(mm).estimate,
                              matrix, bootstrap_b, seed, level)
    options = {
        "command": "reliability alpha", "input": input_path, "metric": metric,
        "aggregation": aggregation, "run_id": run_id, "rater_id": rater_id,
        "missing": missing, "format": out_format, "out": out_path,
        "seed": seed, "bootstrap": bootstrap_b, "level": level,
    }
    _emit(_reliability_report(est, metric, boot, options, [raw]),
          out_format, out_path)


@reliability_group.command("split-half")
@click.option("--n-splits", type=click.IntRange(min=1), default=1,
              show_default=True,
              help="Random splits to average (random scheme only).")
@click.option("--split", "scheme", type=click.Choice(ingest.SPLIT_SCHEMES),
              default="odd-even", show_default=True,
              help="Item partition scheme.")
@_input_options
@_output_options
@_bootstrap_options
@_run_guard
def reliability_split_half(n_splits, scheme, input_path, metric, aggregation,
                           run_id, rater_id, missing, out_format, out_path,
                           seed, bootstrap_b, level):
    """Split-half reliability with the Spearman-Brown step-up."""
    _validate_level(level)
    _validate_bootstrap(bootstrap_b, seed)
    if scheme == "random" and seed is None:
        raise click.UsageError("--split random requires --seed")
    if scheme != "random" and n_splits != 1:
        raise click.UsageError(
            f"--n-splits applies only to --split random, not {scheme!r}"
        )
    matrix, raw = _load_matrix(input_path, metric, aggregation, run_id,
                               rater_id, missing)
    est = rel_mod.split_half(matrix, scheme=scheme, seed=seed,
                             n_splits=n_splits)
    boot = _bootstrap_section(
        lambda mm: rel_mod.split_half(mm, scheme=scheme, seed=seed,
                                      n_splits=n_splits).estimate,
        matrix, bootstrap_b, seed, level)
    options = {
        "command": "reliability split-half", "input": input_path,
        "metric": metric, "aggregation": aggregation, "run_id": run_id,
        "rater_id": rater_id, "missing": missing, "split": scheme,
        "n_splits": n_splits, "format": out_format, "out": out_path,
        "seed": seed, "bootstrap": bootstrap_b, "level": level,
    }
    _emit(_reliability_report(est, metric, boot, options, [raw]),
          out_format, out_path)


@reliability_group.command("test-retest")
@click.option("--input2", "input2_path", required=True,
              type=click.Path(dir_okay=False),
              help="Second administration (same schema, same metric).")
@_input_options
@_output_options
@_bootstrap_options
@_run_guard
def reliability_test_retest(input2_path, input_path, metric, aggregation,
                            run_id, rater_id, missing, out_format, out_path,
                            seed, bootstrap_b, level):
    """Correlation of total scores across two administrations."""
    _validate_level(level)
    _validate_bootstrap(bootstrap_b, seed)
    m1, raw1 = _load_matrix(input_path, metric, aggregation, run_id,
                            rater_id, missing)
    m2, raw2 = _load_matrix(input2_path, metric, aggregation, run_id,
                            rater_id, missing)
    est = rel_mod.test_retest(m1, m2)
    boot = None
    if bootstrap_b:
        paired = _paired_matrix(m1.sorted_by_candidate(),
                                m2.sorted_by_candidate())
        boot = _bootstrap_section(_paired_r(m1.n_items), paired,
                                  bootstrap_b, seed, level)
    options = {
        "command": "reliability test-retest", "input": input_path,
        "input2": input2_path, "metric": metric, "aggregation": aggregation,
        "run_id": run_id, "rater_id": rater_id, "missing": missing,
        "format": out_format, "out": out_path, "seed": seed,
        "bootstrap": bootstrap_b, "level": level,
    }
    _emit(_reliability_report(est, metric, boot, options, [raw1, raw2]),
          out_format, out_path)


# --- validity ---------------------------------------------------------------

@cli.group("validity")
def validity_group():
    """Criterion-related validity."""


def _criterion_vector(path: str, aggregation: str, run_id, rater_id,
                      missing: str) -> tuple[ingest.ScoreMatrix, bytes]:
    raw = _read_bytes(path)
    records = ingest.parse_records(raw, format=_data_format(path))
    metrics = sorted({r.metric_id for r in records})
    if "criterion" in metrics:
        chosen = "criterion"
    elif len(metrics) == 1:
        chosen = metrics[0]
    else:
        raise DataError(
            f"criterion file {path} holds metrics {metrics}; name one "
            "'criterion' or supply a single-metric file"
        )
    matrix = ingest.pivot(records, chosen, aggregation,
                          run_id=run_id, rater_id=rater_id, missing=missing)
    return matrix, raw


@validity_group.command("criterion")
@click.option("--mode", type=click.Choice(val_mod.MODES), default="concurrent",
              show_default=True, help="When the criterion was measured.")
@click.option("--rel-y", type=click.FloatRange(0.0, 1.0), default=None,
              help="Reliability of the criterion.")
@click.option("--rel-x", type=click.FloatRange(0.0, 1.0), default=None,
              help="Reliability of the metric's total score.")
@click.option("--criterion", "criterion_path", required=True,
              type=click.Path(dir_okay=False),
              help="Criterion score file (metric 'criterion', or sole metric).")
@_input_options
@_output_options
@_bootstrap_options
@_run_guard
def validity_criterion(mode, rel_y, rel_x, criterion_path, input_path, metric,
                       aggregation, run_id, rater_id, missing, out_format,
                       out_path, seed, bootstrap_b, level):
    """Correlate a metric's totals with an external criterion."""
    _validate_level(level)
    _validate_bootstrap(bootstrap_b, seed)
    matrix, raw = _load_matrix(input_path, metric, aggregation, run_id,
                               rater_id, missing)
    crit, raw_crit = _criterion_vector(criterion_path, aggregation, run_id,
                                       rater_id, missing)
    if set(matrix.candidates) != set(crit.candidates):
        diff = sorted(set(matrix.candidates) ^ set(crit.candidates))[:5]
        raise DataError(
            f"criterion covers different candidates than the metric "
            f"(e.g. {diff})"
        )
    matrix = matrix.sorted_by_candidate()
    crit = crit.sorted_by_candidate()
    rep = val_mod.criterion_validity(
        matrix.total_scores(), crit.total_scores(),
        rel_x=rel_x, rel_y=rel_y, mode=mode)
    boot = None
    if bootstrap_b:
        paired = _paired_matrix(matrix, crit)
        boot = _bootstrap_section(_paired_r(matrix.n_items), paired,
                                  bootstrap_b, seed, level)
    analysis = {
        "kind": "criterion-validity",
        "metric": metric,
        "report": rep.to_dict(),
        "bootstrap": boot,
    }
    options = {
        "command": "validity criterion", "input": input_path,
        "criterion": criterion_path, "metric": metric,
        "aggregation": aggregation, "run_id": run_id, "rater_id": rater_id,
        "missing": missing, "rel_x": rel_x, "rel_y": rel_y, "mode": mode,
        "format": out_format, "out": out_path, "seed": seed,
        "bootstrap": bootstrap_b, "level": level,
    }
    _emit(report_mod.build_report(analysis, options, rep.warnings,
                                  [raw, raw_crit]),
          out_format, out_path)


# --- mtmm -------------------------------------------------------------------

@cli.command("mtmm")
@click.option("--check", is_flag=True, default=False,
              help="Exit 1 unless both Campbell-Fiske checks pass.")
@click.option("--spec", "spec_path", required=True,
              type=click.Path(dir_okay=False),
              help="JSON spec mapping trait/method cells to file/metric.")
@_output_options
@_run_guard
def mtmm_command(check, spec_path, out_format, out_path):
    """Multitrait-multimethod table with Campbell-Fiske checks."""
    spec, raw_spec = _load_json(spec_path)
    if not isinstance(spec, dict):
        raise DataError(f"{spec_path}: MTMM spec must be a JSON object")
    allowed = {"traits", "methods", "cells", "reliabilities",
               "aggregation", "missing"}
    unknown = sorted(set(spec) - allowed)
    if unknown:
        raise DataError(f"{spec_path}: unknown MTMM spec key(s): {unknown}")
    for key in ("traits", "methods", "cells"):
        if key not in spec:
            raise DataError(f"{spec_path}: MTMM spec missing {key!r}")
    traits = spec["traits"]
    methods = spec["methods"]
    if not isinstance(traits, list) or not isinstance(methods, list):
        raise DataError(f"{spec_path}: traits and methods must be lists")
    aggregation = spec.get("aggregation", "mean-over-runs")
    missing = spec.get("missing", "error")

    base = Path(spec_path).parent
    file_cache: dict[str, tuple[list, bytes]] = {}
    chunks: list[bytes] = [raw_spec]
    datasets = {}
    cells = spec["cells"]
    if not isinstance(cells, dict):
        raise DataError(f"{spec_path}: 'cells' must be an object keyed trait/method")
    for key in sorted(cells):
        parts = key.split("/")
        if len(parts) != 2:
            raise DataError(
                f"{spec_path}: cell key {key!r} must be 'trait/method'"
            )
        trait, method = parts
        if trait not in traits or method not in methods:
            raise DataError(
                f"{spec_path}: cell {key!r} names an undeclared trait or method"
            )
        cell = cells[key]
        if not isinstance(cell, dict) or "input" not in cell or "metric" not in cell:
            raise DataError(
                f"{spec_path}: cell {key!r} must carry 'input' and 'metric'"
            )
        path = str(base / cell["input"])
        if path not in file_cache:
            raw = _read_bytes(path)
            file_cache[path] = (
                ingest.parse_records(raw, format=_data_format(path)), raw)
            chunks.append(raw)
        records, _ = file_cache[path]
        datasets[(trait, method)] = ingest.pivot(
            records, cell["metric"], aggregation, missing=missing)

    reliabilities = None
    if "reliabilities" in spec:
        rel_spec = spec["reliabilities"]
        if not isinstance(rel_spec, dict):
            raise DataError(f"{spec_path}: 'reliabilities' must be an object")
        reliabilities = {}
        for key, value in rel_spec.items():
            parts = key.split("/")
            if len(parts) != 2:
                raise DataError(
                    f"{spec_path}: reliability key {key!r} must be 'trait/method'"
                )
            reliabilities[(parts[0], parts[1])] = value

    table = val_mod.build_mtmm(datasets, reliabilities)
    summary = val_mod.campbell_fiske(table)
    analysis = {
        "kind": "mtmm",
        "table": table.to_dict(),
        "summary": summary.to_dict(),
    }
    options = {
        "command": "mtmm", "spec": spec_path, "check": check,
        "aggregation": aggregation, "missing": missing,
        "format": out_format, "out": out_path,
    }
    warnings = list(summary.violations)
    _emit(report_mod.build_report(analysis, options, warnings, chunks),
          out_format, out_path)
    if check and not (summary.convergent_pass and summary.discriminant_pass):
        raise click.ClickException(
            "Campbell-Fiske checks failed: "
            + "; ".join(summary.violations[:3])
        )


# --- factor -----------------------------------------------------------------

@cli.group("factor")
def factor_group():
    """Factor analysis of the item correlation matrix."""


def _item_corr(matrix: ingest.ScoreMatrix) -> np.ndarray:
    return correlation_matrix(matrix, orientation="columns")


@factor_group.command("efa")
@click.option("--rotate", type=click.Choice(["varimax"]), default=None,
              help="Optional orthogonal rotation.")
@click.option("--k", "n_factors", type=int, required=True,
              help="Number of factors to extract.")
@_input_options
@_output_options
@_run_guard
def factor_efa(rotate, n_factors, input_path, metric, aggregation, run_id,
               rater_id, missing, out_format, out_path):
    """Exploratory factor analysis (iterated principal axis)."""
    matrix, raw = _load_matrix(input_path, metric, aggregation, run_id,
                               rater_id, missing)
    corr = _item_corr(matrix)
    model = factor_mod.efa(corr, n_factors)
    rotation_warnings: list[str] = []
    if rotate == "varimax":
        model = factor_mod.FactorModel(
            loadings=factor_mod.varimax(model.loadings),
            uniquenesses=model.uniquenesses,
            n_factors=model.n_factors,
            converged=model.converged,
            iterations=model.iterations,
            rotation="varimax",
            heywood_flags=model.heywood_flags,
            residual_trace=model.residual_trace,
        )
    eigenvalues = np.linalg.eigvalsh(corr)[::-1]
    warnings = list(rotation_warnings)
    if not model.converged:
        warnings.append("factor extraction did not converge")
    if model.heywood_flags:
        names = [matrix.items[j] for j in model.heywood_flags]
        warnings.append(f"Heywood communality cap applied to item(s) {names}")
    analysis = {
        "kind": "efa",
        "metric": metric,
        "items": list(matrix.items),
        "model": model.to_dict(),
        "eigenvalues": [float(v) for v in eigenvalues],
    }
    options = {
        "command": "factor efa", "input": input_path, "metric": metric,
        "aggregation": aggregation, "run_id": run_id, "rater_id": rater_id,
        "missing": missing, "k": n_factors, "rotate": rotate,
        "format": out_format, "out": out_path,
    }
    _emit(report_mod.build_report(analysis, options, warnings, [raw]),
          out_format, out_path)


@factor_group.command("suggest-k")
@_input_options
@_output_options
@_run_guard
def factor_suggest_k(input_path, metric, aggregation, run_id, rater_id,
                     missing, out_format, out_path):
    """Suggest a factor count by the Kaiser eigenvalue rule."""
    matrix, raw = _load_matrix(input_path, metric, aggregation, run_id,
                               rater_id, missing)
    corr = _item_corr(matrix)
    eigenvalues = np.linalg.eigvalsh(corr)[::-1]
    analysis = {
        "kind": "suggest-k",
        "metric": metric,
        "n_factors": factor_mod.suggest_n_factors(corr),
        "eigenvalues": [float(v) for v in eigenvalues],
    }
    options = {
        "command": "factor suggest-k", "input": input_path, "metric": metric,
        "aggregation": aggregation, "run_id": run_id, "rater_id": rater_id,
        "missing": missing, "format": out_format, "out": out_path,
    }
    _emit(report_mod.build_report(analysis, options, [], [raw]),
          out_format, out_path)


def _load_pattern(path: str, items: list[str]) -> tuple[np.ndarray, bytes]:
    spec, raw = _load_json(path)
    if isinstance(spec, dict):
        if "pattern" not in spec:
            raise DataError(f"{path}: pattern spec must carry 'pattern'")
        unknown = sorted(set(spec) - {"pattern", "items"})
        if unknown:
            raise DataError(f"{path}: unknown pattern key(s): {unknown}")
        pattern = spec["pattern"]
        declared = spec.get("items")
        if declared is not None and list(declared) != list(items):
            raise DataError(
                f"{path}: pattern item order {declared} does not match the "
                f"matrix item order {items}"
            )
    else:
        pattern = spec
    if not isinstance(pattern, list):
        raise DataError(f"{path}: pattern must be a J x K array of 0/1")
    return np.asarray(pattern), raw


@factor_group.command("cfa")
@click.option("--pattern", "pattern_path", required=True,
              type=click.Path(dir_okay=False),
              help="JSON free-loading mask (J x K of 0/1), row order = "
                   "lexicographic item order.")
@_input_options
@_output_options
@_run_guard
def factor_cfa(pattern_path, input_path, metric, aggregation, run_id,
               rater_id, missing, out_format, out_path):
    """Confirmatory factor analysis for a fixed loading pattern."""
    matrix, raw = _load_matrix(input_path, metric, aggregation, run_id,
                               rater_id, missing)
    pattern, raw_pattern = _load_pattern(pattern_path, list(matrix.items))
    corr = _item_corr(matrix)
    fit = factor_mod.cfa_fit(corr, pattern)
    warnings = []
    if not fit.converged:
        warnings.append("optimizer did not converge; reporting last iterate")
    analysis = {
        "kind": "cfa",
        "metric": metric,
        "items": list(matrix.items),
        "fit": fit.to_dict(),
    }
    options = {
        "command": "factor cfa", "input": input_path, "metric": metric,
        "aggregation": aggregation, "run_id": run_id, "rater_id": rater_id,
        "missing": missing, "pattern": pattern_path,
        "format": out_format, "out": out_path,
    }
    _emit(report_mod.build_report(analysis, options, warnings,
                                  [raw, raw_pattern]),
          out_format, out_path)


def _load_model(path: str) -> tuple[factor_mod.FactorModel, bytes]:
    spec, raw = _load_json(path)
    if not isinstance(spec, dict):
        raise DataError(f"{path}: model file must be a JSON object")
    # Accept a rendered report (efa/cfa) or a bare model object.
    model_dict = spec
    if "analysis" in spec:
        analysis = spec["analysis"]
        model_dict = analysis.get("model") or analysis.get("fit", {}).get("model")
        if model_dict is None:
            raise DataError(f"{path}: report carries no factor model")
    if "loadings" not in model_dict or "uniquenesses" not in model_dict:
        raise DataError(
            f"{path}: model needs 'loadings' and 'uniquenesses'"
        )
    loadings = np.asarray(model_dict["loadings"], dtype=float)
    if loadings.ndim == 1:
        loadings = loadings[:, None]
    return factor_mod.FactorModel(
        loadings=loadings,
        uniquenesses=np.asarray(model_dict["uniquenesses"], dtype=float),
        n_factors=loadings.shape[1],
        converged=bool(model_dict.get("converged", True)),
        iterations=int(model_dict.get("iterations", 0)),
        rotation=model_dict.get("rotation", "none"),
        heywood_flags=list(model_dict.get("heywood_flags", [])),
    ), raw


@factor_group.command("scores")
@click.option("--model", "model_path", required=True,
              type=click.Path(dir_okay=False),
              help="Fitted model: an efa/cfa JSON report or a bare "
                   "loadings/uniquenesses object.")
@_input_options
@_output_options
@_run_guard
def factor_scores_command(model_path, input_path, metric, aggregation, run_id,
                          rater_id, missing, out_format, out_path):
    """Regression factor scores for each candidate."""
    matrix, raw = _load_matrix(input_path, metric, aggregation, run_id,
                               rater_id, missing)
    model, raw_model = _load_model(model_path)
    scores = factor_mod.factor_scores(factor_mod.standardize(matrix), model)
    analysis = {
        "kind": "factor-scores",
        "metric": metric,
        "scores": scores.to_dict(),
    }
    options = {
        "command": "factor scores", "input": input_path, "metric": metric,
        "aggregation": aggregation, "run_id": run_id, "rater_id": rater_id,
        "missing": missing, "model": model_path,
        "format": out_format, "out": out_path,
    }
    _emit(report_mod.build_report(analysis, options, [], [raw, raw_model]),
          out_format, out_path)


# --- simulate ---------------------------------------------------------------

@cli.group("simulate")
def simulate_group():
    """Generate score files with known latent structure."""


def _sim_options(f):
    options = [
        click.option("--out-csv", "out_csv", required=True,
                     type=click.Path(dir_okay=False),
                     help="Where to write the generated score file."),
        click.option("--spec", "spec_path", required=True,
                     type=click.Path(dir_okay=False),
                     help="JSON generative spec (seed required inside)."),
    ]
    for option in options:
        f = option(f)
    return f


def _write_csv(path: str, records) -> None:
    Path(path).write_bytes(ingest.records_to_csv_bytes(records))


def _sim_report(kind: str, dataset: sim_mod.SimulatedDataset, metric: str,
                extra: dict, options: dict,
                chunks: list[bytes]) -> report_mod.AnalysisReport:
    meta = dataset.metadata()
    analysis = {
        "kind": kind,
        "metric": metric,
        "label": meta["label"],
        "n_candidates": meta["n_candidates"],
        "n_items": meta["n_items"],
        "true_reliability_total": meta["true_reliability_total"],
        "spec": meta["spec"],
    }
    analysis.update(extra)
    return report_mod.build_report(analysis, options, [], chunks)


@simulate_group.command("ctt")
@_sim_options
@_output_options
@_run_guard
def simulate_ctt(out_csv, spec_path, out_format, out_path):
    """Simulate a true-score-plus-error score matrix."""
    data, raw = _load_json(spec_path)
    spec = sim_mod.CttSpec.from_dict(data)
    dataset = sim_mod.generate_ctt(spec)
    metric = spec.label or "simulated"
    _write_csv(out_csv, dataset.observed.to_records(metric=metric))
    options = {"command": "simulate ctt", "spec": spec_path,
               "out_csv": out_csv, "format": out_format, "out": out_path}
    _emit(_sim_report("simulate-ctt", dataset, metric, {"out_csv": out_csv},
                      options, [raw]),
          out_format, out_path)


@simulate_group.command("retest")
@_sim_options
@_output_options
@_run_guard
def simulate_retest(out_csv, spec_path, out_format, out_path):
    """Simulate two administrations sharing true scores."""
    data, raw = _load_json(spec_path)
    spec = sim_mod.CttSpec.from_dict(data)
    first, second = sim_mod.generate_retest(spec)
    metric = spec.label or "simulated"
    out_path2 = Path(out_csv)
    out_csv2 = str(out_path2.with_name(out_path2.stem + "_admin2"
                                       + out_path2.suffix))
    _write_csv(out_csv, first.observed.to_records(metric=metric,
                                                  run_id="admin1"))
    _write_csv(out_csv2, second.observed.to_records(metric=metric,
                                                    run_id="admin2"))
    options = {"command": "simulate retest", "spec": spec_path,
               "out_csv": out_csv, "format": out_format, "out": out_path}
    extra = {"out_csv": out_csv, "out_csv_admin2": out_csv2}
    _emit(_sim_report("simulate-retest", first, metric, extra, options, [raw]),
          out_format, out_path)


@simulate_group.command("factor")
@_sim_options
@_output_options
@_run_guard
def simulate_factor(out_csv, spec_path, out_format, out_path):
    """Simulate common-factor data X = Lambda f + U."""
    data, raw = _load_json(spec_path)
    spec = sim_mod.FactorSimSpec.from_dict(data)
    dataset = sim_mod.generate_factor(spec)
    metric = spec.label or "simulated"
    _write_csv(out_csv, dataset.observed.to_records(metric=metric))
    options = {"command": "simulate factor", "spec": spec_path,
               "out_csv": out_csv, "format": out_format, "out": out_path}
    _emit(_sim_report("simulate-factor", dataset, metric,
                      {"out_csv": out_csv}, options, [raw]),
          out_format, out_path)


@simulate_group.command("criterion")
@_sim_options
@_output_options
@_run_guard
def simulate_criterion(out_csv, spec_path, out_format, out_path):
    """Simulate a dataset plus an external criterion in one score file."""
    data, raw = _load_json(spec_path)
    if not isinstance(data, dict):
        raise DataError(f"{spec_path}: criterion spec must be a JSON object")
    allowed = {"dataset", "criterion_reliability", "latent_corr", "seed"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise DataError(f"{spec_path}: unknown criterion spec key(s): {unknown}")
    missing = sorted(allowed - set(data))
    if missing:
        raise DataError(
            f"{spec_path}: criterion spec missing key(s): {missing}"
        )
    spec = sim_mod.CttSpec.from_dict(data["dataset"])
    dataset = sim_mod.generate_ctt(spec)
    criterion = sim_mod.generate_criterion(
        dataset,
        criterion_reliability=data["criterion_reliability"],
        latent_corr=data["latent_corr"],
        seed=data["seed"],
    )
    metric = spec.label or "simulated"
    records = dataset.observed.to_records(metric=metric)
    records += [
        ingest.ScoreRecord(candidate_id=c, item_id="criterion",
                           metric_id="criterion", score=float(v))
        for c, v in zip(dataset.observed.candidates, criterion)
    ]
    _write_csv(out_csv, records)
    population_validity = (
        float(data["latent_corr"])
        * float(np.sqrt(dataset.true_reliability_total
                        * float(data["criterion_reliability"])))
    )
    options = {"command": "simulate criterion", "spec": spec_path,
               "out_csv": out_csv, "format": out_format, "out": out_path}
    extra = {
        "out_csv": out_csv,
        "criterion_reliability": float(data["criterion_reliability"]),
        "latent_corr": float(data["latent_corr"]),
        "criterion_seed": int(data["seed"]),
        "population_validity": population_validity,
    }
    _emit(_sim_report("simulate-criterion", dataset, metric, extra,
                      options, [raw]),
          out_format, out_path)
