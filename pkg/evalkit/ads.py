"""Search-ads relevance and revenue metrics, aggregated over event sets (sum, then divide)."""

import json
import logging
import math
import os
from typing import Optional, Sequence

from pydantic import BaseModel, Field, model_validator

from .passk import EmptyInputError

logger = logging.getLogger(__name__)

IRRELEVANT, PARTIAL, RELEVANT = 0, 1, 2


class UndefinedMetricError(ValueError):
    def __init__(self, metric: str, reason: str):
        super().__init__(f"{metric} is undefined: {reason}")
        self.metric = metric


class AdsRecord(BaseModel):
    predicted_label: int = Field(ge=0, le=2)
    gt_label: int = Field(ge=0, le=2)
    impressions: int = Field(default=0, ge=0)
    clicks: int = Field(default=0, ge=0)
    revenue: float = Field(default=0.0, ge=0.0)
    purchase_price: Optional[float] = Field(default=None, ge=0.0)
    purchase_qty: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def clicks_within_impressions(self):
        if self.clicks > self.impressions:
            raise ValueError(f"clicks ({self.clicks}) exceed impressions ({self.impressions})")
        return self


class AdRevenueMetrics(BaseModel):
    ctrpi: float
    cpc: float
    cpm: float
    gmv: float


def pir(records: Sequence[AdsRecord]) -> float:
    """Share of predicted fully-relevant items whose ground truth is irrelevant."""
    predicted_relevant = [r for r in records if r.predicted_label == RELEVANT]
    if not predicted_relevant:
        raise UndefinedMetricError("pir", "no record is predicted fully relevant")
    irrelevant = sum(1 for r in predicted_relevant if r.gt_label == IRRELEVANT)
    return irrelevant / len(predicted_relevant)


def ctrpi(records: Sequence[AdsRecord]) -> float:
    impressions = sum(r.impressions for r in records)
    if impressions == 0:
        raise UndefinedMetricError("ctrpi", "zero impressions")
    return sum(r.clicks for r in records) / impressions


def cpc(records: Sequence[AdsRecord]) -> float:
    clicks = sum(r.clicks for r in records)
    if clicks == 0:
        raise UndefinedMetricError("cpc", "zero clicks")
    return math.fsum(r.revenue for r in records) / clicks


def cpm(records: Sequence[AdsRecord]) -> float:
    return 1000.0 * ctrpi(records) * cpc(records)


def gmv(records: Sequence[AdsRecord]) -> float:
    return math.fsum(
        r.purchase_price * r.purchase_qty
        for r in records
        if r.purchase_price is not None and r.purchase_qty is not None
    )


def ad_revenue_metrics(records: Sequence[AdsRecord]) -> AdRevenueMetrics:
    rate = ctrpi(records)
    cost = cpc(records)
    return AdRevenueMetrics(ctrpi=rate, cpc=cost, cpm=1000.0 * rate * cost, gmv=gmv(records))


def relative_lift(control: float, treatment: float) -> float:
    """(treatment - control) / control, the A/B delta reported for online tests."""
    if control == 0:
        raise UndefinedMetricError("relative_lift", "control value is zero")
    return (treatment - control) / control


def read_ads_log(path: str) -> list[AdsRecord]:
    with open(path, "r", encoding="utf-8") as f:
        records = [AdsRecord.model_validate_json(line) for line in f if line.strip()]
    if not records:
        raise EmptyInputError(f"{path} holds no ads records")
    return records


def _or_null(metric, records: Sequence[AdsRecord]) -> Optional[float]:
    try:
        return metric(records)
    except UndefinedMetricError as e:
        logger.warning(str(e))
        return None


def ads_report(records: Sequence[AdsRecord]) -> dict:
    """PIR and the revenue metrics plus record counts; a metric with a zero denominator is null."""
    if not records:
        raise EmptyInputError("ads metrics need at least one record")
    return {
        "ctrpi": _or_null(ctrpi, records),
        "cpc": _or_null(cpc, records),
        "cpm": _or_null(cpm, records),
        "gmv": gmv(records),
        "pir": _or_null(pir, records),
        "records": len(records),
        "predicted_relevant": sum(1 for r in records if r.predicted_label == RELEVANT),
        "impressions": sum(r.impressions for r in records),
        "clicks": sum(r.clicks for r in records),
        "purchases": sum(1 for r in records if r.purchase_price is not None and r.purchase_qty is not None),
    }


def write_ads_report(report: dict, path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote ads metrics for {report['records']} records to {path}")
