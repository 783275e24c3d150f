from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

import pandas as pd

from srrdoc.errors import InvalidInputError

# Column order of the report table
METRIC_COLUMNS = (
    "text_edit",
    "formula_edit",
    "table_teds",
    "table_teds_s",
    "table_edit",
    "order_edit",
    "overall_edit",
)


@dataclass
class PageScores:
    """
    Scores of one page. A metric is None when the page has no element of
    that kind (no tables, no formulas).
    """
    page_id: str
    template: Optional[str] = None
    text_edit: Optional[float] = None
    formula_edit: Optional[float] = None
    table_teds: Optional[float] = None
    table_teds_s: Optional[float] = None
    table_edit: Optional[float] = None
    order_edit: Optional[float] = None
    overall_edit: Optional[float] = None

    def __post_init__(self):
        for name in METRIC_COLUMNS:
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name}={value} outside [0, 1] on page {self.page_id}")

    def metrics(self) -> Dict[str, Optional[float]]:
        return {name: getattr(self, name) for name in METRIC_COLUMNS}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PageScores":
        return cls(**{f.name: data.get(f.name) for f in fields(cls)})


@dataclass
class MetricReport:
    """
    Corpus-level scores: each metric averaged over the pages where it is
    defined, the per-page breakdown and a per-template breakdown.
    """
    text_edit: Optional[float] = None
    formula_edit: Optional[float] = None
    table_teds: Optional[float] = None
    table_teds_s: Optional[float] = None
    table_edit: Optional[float] = None
    order_edit: Optional[float] = None
    overall_edit: Optional[float] = None
    pages: List[PageScores] = field(default_factory=list)
    by_template: Dict[str, Dict[str, Optional[float]]] = field(default_factory=dict)

    def metrics(self) -> Dict[str, Optional[float]]:
        return {name: getattr(self, name) for name in METRIC_COLUMNS}

    def to_dict(self) -> dict:
        return {
            **self.metrics(),
            "page_count": len(self.pages),
            "by_template": self.by_template,
            "pages": [p.to_dict() for p in self.pages],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        return cls(
            **{name: data.get(name) for name in METRIC_COLUMNS},
            pages=[PageScores.from_dict(p) for p in data.get("pages", [])],
            by_template=dict(data.get("by_template", {})),
        )

    def to_frame(self) -> pd.DataFrame:
        """One row per page plus an ALL row"""
        rows = [{"page_id": p.page_id, "template": p.template or "", **p.metrics()} for p in self.pages]
        rows.append({"page_id": "ALL", "template": "", **self.metrics()})
        return pd.DataFrame(rows, columns=["page_id", "template", *METRIC_COLUMNS])
