"""Run reports: per-image records, aggregates and the YAML report file.

A report is a flat YAML document with a fixed key order. Its ``config``
section holds the complete resolved experiment configuration, so the file can
be passed back as ``--config`` to replay the run.
"""

import hashlib
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from ..core.exceptions import FormatError
from ..core.models import AttackResult
from .metrics import pixel_fraction

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TIMING_FIELDS = ("seconds", "mean_seconds")


@dataclass
class ImageRecord:
    """Outcome of one attacked image as it appears in the report."""
    image_id: int
    target: int
    success: bool
    l0: int
    l1: float
    l2: float
    linf: float
    pixel_fraction: float
    iterations: int
    seconds: float
    binarized: bool = True
    first_success: int | None = None

    @classmethod
    def from_result(cls, image_id: int, result: AttackResult) -> "ImageRecord":
        n = int(result.perturbation.size)
        return cls(
            image_id=int(image_id),
            target=int(result.target),
            success=bool(result.success),
            l0=int(result.norms.l0),
            l1=float(result.norms.l1),
            l2=float(result.norms.l2),
            linf=float(result.norms.linf),
            pixel_fraction=pixel_fraction(result.norms.l0, n),
            iterations=int(result.iterations),
            seconds=float(result.seconds),
            binarized=bool(result.binarized),
            first_success=None if result.first_success is None else int(result.first_success),
        )


@dataclass
class Aggregates:
    """Means over a set of records; every mean and the ASR are None when the set is empty."""
    attempted: int
    successes: int
    asr: float | None
    mean_l0: float | None
    mean_l1: float | None
    mean_l2: float | None
    mean_linf: float | None
    mean_pixel_fraction: float | None
    mean_seconds: float | None
    binarized_fraction: float | None

    @classmethod
    def of(cls, records: list[ImageRecord]) -> "Aggregates":
        attempted = len(records)
        successes = sum(r.success for r in records)

        def mean(name):
            if not records:
                return None
            return float(np.mean([getattr(r, name) for r in records]))

        return cls(
            attempted=attempted,
            successes=successes,
            asr=100.0 * successes / attempted if attempted else None,
            mean_l0=mean("l0"),
            mean_l1=mean("l1"),
            mean_l2=mean("l2"),
            mean_linf=mean("linf"),
            mean_pixel_fraction=mean("pixel_fraction"),
            mean_seconds=mean("seconds"),
            binarized_fraction=mean("binarized"),
        )


@dataclass
class ReportSection:
    """All records of one attack variant, with aggregates over all attempts and over successes only."""
    name: str
    records: list[ImageRecord]
    aggregates: Aggregates | None = None
    success_aggregates: Aggregates | None = None

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: r.image_id)
        if self.aggregates is None:
            self.aggregates = Aggregates.of(self.records)
        if self.success_aggregates is None:
            self.success_aggregates = Aggregates.of([r for r in self.records if r.success])


@dataclass
class RunReport:
    """
    Everything one command produced.

    Attributes:
        command: Subcommand that produced the report.
        config: Complete resolved experiment configuration.
        image_ids: Attacked image ids, in order.
        sections: One section per attack variant.
        truncated: True when the command failed part-way and this is a partial flush.
        comparison: Comparative table rows, one per variant (ablate, encoders).
        checks: Named ordering checks over the comparison rows.
        schema_version: Report schema version.
    """
    command: str
    config: dict
    image_ids: list[int]
    sections: list[ReportSection]
    truncated: bool = False
    comparison: list[dict] = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def image_list_hash(self) -> str:
        return image_list_hash(self.image_ids)

    def section(self, name: str) -> ReportSection:
        for section in self.sections:
            if section.name == name:
                return section
        raise KeyError(name)


def image_list_hash(image_ids: list[int]) -> str:
    """SHA-256 over the comma-joined image ids."""
    return hashlib.sha256(",".join(str(int(i)) for i in image_ids).encode("ascii")).hexdigest()


def _plain(value):
    """Convert numpy scalars to builtin types so ``safe_dump`` accepts them."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def report_to_dict(report: RunReport) -> dict:
    return _plain({
        "schema_version": report.schema_version,
        "command": report.command,
        "truncated": report.truncated,
        "config": dict(report.config),
        "image_ids": list(report.image_ids),
        "image_list_hash": report.image_list_hash,
        "sections": [
            {
                "name": section.name,
                "aggregates": asdict(section.aggregates),
                "success_aggregates": asdict(section.success_aggregates),
                "records": [asdict(r) for r in section.records],
            }
            for section in report.sections
        ],
        "comparison": list(report.comparison),
        "checks": dict(report.checks),
    })


def dump_report(report: RunReport) -> str:
    return yaml.safe_dump(report_to_dict(report), sort_keys=False, default_flow_style=False)


def emit_report(report: RunReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_report(report))
    logger.info("Report written to %s (%d sections%s)", path, len(report.sections),
                ", truncated" if report.truncated else "")
    return path


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise FormatError(f"{where}: expected a mapping, got {type(data).__name__}")
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise FormatError(f"{where}: unknown fields {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise FormatError(f"{where}: {exc}") from exc


def report_from_dict(data) -> RunReport:
    """
    Rebuild a RunReport from its parsed YAML form.

    Raises:
        FormatError: On missing or unknown keys, a wrong schema version or an
            image list hash that does not match the stored ids.
    """
    if not isinstance(data, dict):
        raise FormatError("report must be a mapping")
    expected = ["schema_version", "command", "truncated", "config", "image_ids", "image_list_hash",
                "sections", "comparison", "checks"]
    missing = [key for key in expected if key not in data]
    if missing:
        raise FormatError(f"report is missing {missing}")
    if data["schema_version"] != SCHEMA_VERSION:
        raise FormatError(f"unsupported report schema version {data['schema_version']}")
    if not isinstance(data["sections"], list) or not isinstance(data["image_ids"], list):
        raise FormatError("report sections and image_ids must be lists")

    sections = []
    for i, raw in enumerate(data["sections"]):
        where = f"sections[{i}]"
        if not isinstance(raw, dict) or set(raw) != {"name", "aggregates", "success_aggregates", "records"}:
            raise FormatError(f"{where}: malformed section")
        if not isinstance(raw["records"], list):
            raise FormatError(f"{where}.records must be a list")
        sections.append(ReportSection(
            name=raw["name"],
            records=[_build(ImageRecord, r, f"{where}.records[{j}]") for j, r in enumerate(raw["records"])],
            aggregates=_build(Aggregates, raw["aggregates"], f"{where}.aggregates"),
            success_aggregates=_build(Aggregates, raw["success_aggregates"], f"{where}.success_aggregates"),
        ))

    report = RunReport(
        command=data["command"],
        config=data["config"],
        image_ids=data["image_ids"],
        sections=sections,
        truncated=bool(data["truncated"]),
        comparison=data["comparison"] or [],
        checks=data["checks"] or {},
        schema_version=data["schema_version"],
    )
    if report.image_list_hash != data["image_list_hash"]:
        raise FormatError("image_list_hash does not match image_ids")
    return report


def load_report(path: str | Path) -> RunReport:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise FormatError(f"{path}: not valid YAML: {exc}") from exc
    return report_from_dict(data)


def strip_timing(data):
    """The parsed report with every wall-time field removed, for determinism comparisons."""
    if isinstance(data, dict):
        return {k: strip_timing(v) for k, v in data.items() if k not in TIMING_FIELDS}
    if isinstance(data, list):
        return [strip_timing(v) for v in data]
    return data


def summary_frame(report: RunReport) -> pd.DataFrame:
    rows = []
    for section in report.sections:
        row = {"variant": section.name}
        row.update(asdict(section.aggregates))
        row["success_mean_l0"] = section.success_aggregates.mean_l0
        rows.append(row)
    return pd.DataFrame(rows, columns=["variant", *[f.name for f in fields(Aggregates)], "success_mean_l0"])


def pretty_report(report: RunReport) -> str:
    """Human-readable summary: header, one aggregate row per section, ordering checks."""
    lines = [
        f"{report.command} report (schema {report.schema_version})"
        + ("  [TRUNCATED]" if report.truncated else ""),
        f"images: {len(report.image_ids)}  hash: {report.image_list_hash[:16]}",
        f"epsilon: {report.config.get('epsilon')}  iterations: {report.config.get('iterations')}"
        f"  seed: {report.config.get('seed')}",
        "",
    ]
    frame = summary_frame(report)
    with pd.option_context("display.float_format", "{:.4f}".format, "display.width", 200):
        lines.append(frame.to_string(index=False) if not frame.empty else "(no sections)")
    for name, holds in report.checks.items():
        lines.append(f"{name}: {'yes' if holds else 'NO'}")
    return "\n".join(lines)
