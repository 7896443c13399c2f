from collections.abc import Mapping, Sequence

from ..models import MetricsReport
from .gradcheck import GradCheckResult
from .training import CrossValidationReport

_MAX_LABEL_LENGTH = 40


def _truncate_text(text: str, limit: int) -> str:
    if len(text) <= limit:
        return text
    return text[: limit - 1].rstrip() + "…"


def _clean_text(value: object, default: str = "—", limit: int | None = None) -> str:
    text = str(value if value is not None else "").strip()
    if not text:
        text = default
    if limit is not None:
        text = _truncate_text(text, limit)
    return text


def _ratio(value: float) -> str:
    return f"{value:.4f}"


def _table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    cells = [[_clean_text(headers[0], limit=_MAX_LABEL_LENGTH), *map(str, headers[1:])]]
    cells += [
        [_clean_text(row[0], limit=_MAX_LABEL_LENGTH), *(_clean_text(cell) for cell in row[1:])]
        for row in rows
    ]
    widths = [max(len(line[column]) for line in cells) for column in range(len(headers))]

    def render(line: Sequence[str]) -> str:
        first = line[0].ljust(widths[0])
        rest = [cell.rjust(width) for cell, width in zip(line[1:], widths[1:], strict=True)]
        return "  ".join([first, *rest]).rstrip()

    separator = "  ".join("-" * width for width in widths)
    return "\n".join([render(cells[0]), separator, *map(render, cells[1:])])


def _metrics_row(label: object, report: MetricsReport) -> list[object]:
    return [
        label,
        report.tp,
        report.fp,
        report.fn,
        _ratio(report.precision),
        _ratio(report.recall),
        _ratio(report.f_measure),
    ]


_METRIC_HEADERS = ("set", "tp", "fp", "fn", "P", "R", "F")


def format_metrics_table(report: MetricsReport, label: str = "all") -> str:
    return _table(_METRIC_HEADERS, [_metrics_row(label, report)])


def format_cv_table(report: CrossValidationReport) -> str:
    rows = [_metrics_row(f"fold {fold.fold}", fold.metrics) for fold in report.folds]
    rows.append(
        [
            "mean",
            "",
            "",
            "",
            _ratio(report.mean_precision),
            _ratio(report.mean_recall),
            _ratio(report.mean_f_measure),
        ]
    )
    title = "with prior" if report.with_prior else "without prior"
    return f"Cross-validation ({title})\n" + _table(_METRIC_HEADERS, rows)


def format_gradcheck_table(results: Sequence[GradCheckResult]) -> str:
    rows = [
        [
            result.name,
            f"{result.error:.3e}",
            f"{result.tolerance:.0e}",
            "ok" if result.passed else "FAIL",
        ]
        for result in results
    ]
    passed = sum(result.passed for result in results)
    summary = f"{passed}/{len(results)} checks passed"
    return _table(("check", "max rel error", "tolerance", "status"), rows) + "\n" + summary


def format_stats_table(stats: Mapping[str, Mapping[str, object]]) -> str:
    names: list[str] = []
    for figures in stats.values():
        names += [name for name in figures if name not in names]
    rows = [
        [name.replace("_", " "), *(figures.get(name) for figures in stats.values())]
        for name in names
    ]
    return _table(("statistic", *stats), rows)
