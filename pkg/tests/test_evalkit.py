import itertools
import json
import math

import numpy as np
import pytest
from scipy.stats import binom

from evalkit import (
    DEFAULT_KS,
    AdsRecord,
    EmptyInputError,
    InvalidQueryError,
    PasskQuery,
    UndefinedMetricError,
    ad_revenue_metrics,
    ads_report,
    cpc,
    cpm,
    ctrpi,
    gmv,
    parse_ks,
    passk_curve_from_log,
    passk_table,
    passk_unbiased,
    pir,
    read_ads_log,
    read_passk_log,
    relative_lift,
    write_ads_report,
    write_passk_table,
)


def test_passk_examples():
    assert passk_unbiased(4, 2, 2) == pytest.approx(5 / 6, abs=1e-12)
    assert passk_unbiased(PasskQuery(n=4, c=2, k=2)) == pytest.approx(0.8333333, abs=1e-7)
    assert passk_unbiased(10, 0, 3) == 0.0
    assert passk_unbiased(256, 256, 1) == 1.0
    assert passk_unbiased(2, 1, 1) == pytest.approx(0.5, abs=1e-12)


def test_invalid_queries():
    with pytest.raises(InvalidQueryError):
        passk_unbiased(4, 5, 1)
    with pytest.raises(InvalidQueryError):
        passk_unbiased(4, 2, 5)
    with pytest.raises(InvalidQueryError):
        passk_unbiased(4, 2, 0)


def test_matches_subset_enumeration():
    for n in range(1, 13):
        for c in range(n + 1):
            for k in range(1, n + 1):
                subsets = list(itertools.combinations(range(n), k))
                hits = sum(1 for s in subsets if min(s) < c)
                assert passk_unbiased(n, c, k) == pytest.approx(hits / len(subsets), abs=1e-12)


@pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
def test_unbiased_under_binomial_counts(p):
    for n in range(1, 11):
        for k in range(1, n + 1):
            expectation = sum(binom.pmf(c, n, p) * passk_unbiased(n, c, k) for c in range(n + 1))
            assert expectation == pytest.approx(1 - (1 - p) ** k, abs=1e-10)


def test_monotone_in_k_and_c():
    n = 20
    for c in range(n + 1):
        values = [passk_unbiased(n, c, k) for k in range(1, n + 1)]
        assert all(a <= b for a, b in zip(values, values[1:]))
    for k in range(1, n + 1):
        values = [passk_unbiased(n, c, k) for c in range(n + 1)]
        assert all(a <= b for a, b in zip(values, values[1:]))


def test_large_n_stays_finite():
    n = 10**6
    assert passk_unbiased(n, 1, 1) == pytest.approx(1e-6, rel=1e-9)
    for c, k in [(0, 256), (500, 256), (999_000, 256), (n, 256), (10, 10**5)]:
        value = passk_unbiased(n, c, k)
        assert math.isfinite(value) and 0.0 <= value <= 1.0


def test_curve_from_log():
    curve = passk_curve_from_log([(4, 2), (4, 4)], [2])
    assert curve[2] == pytest.approx(0.9166667, abs=1e-7)
    assert passk_curve_from_log([(8, 0), (8, 0)], [1, 4, 8]) == {1: 0.0, 4: 0.0, 8: 0.0}
    assert passk_curve_from_log([(6, 3)], [2])[2] == passk_unbiased(6, 3, 2)
    with pytest.raises(EmptyInputError):
        passk_curve_from_log([], [1])


def test_passk_table_from_jsonl(tmp_path):
    log = tmp_path / "samples.jsonl"
    log.write_text("\n".join(json.dumps({"prompt_id": f"p{i}", "n": 256, "c": c}) for i, c in enumerate([0, 1, 128])))
    frame = read_passk_log(str(log))
    table = passk_table(frame)
    assert table["k"].tolist() == list(DEFAULT_KS)
    assert table["pass_at_k"].iloc[-1] == pytest.approx(2 / 3, abs=1e-12)

    out = tmp_path / "out" / "passk.csv"
    write_passk_table(table, str(out))
    lines = out.read_text().splitlines()
    assert lines[0] == "k,pass_at_k"
    assert lines[-1] == "256,0.6666667"

    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(EmptyInputError):
        read_passk_log(str(empty))


def test_parse_ks():
    assert parse_ks("1,2,4") == [1, 2, 4]
    with pytest.raises(InvalidQueryError):
        parse_ks("1,x")
    with pytest.raises(InvalidQueryError):
        parse_ks("0,1")
    with pytest.raises(InvalidQueryError):
        parse_ks("")


def synthetic_ads_log() -> list[dict]:
    """100 records: 40 predicted fully relevant, 10 of those irrelevant; 20 clicks over 1000 impressions."""
    rows = []
    for i in range(100):
        row = {
            "predicted_label": 2 if i % 5 in (0, 1) else (1 if i % 5 == 2 else 0),
            "gt_label": 0 if i % 10 == 0 else 2,
            "impressions": 10,
            "clicks": 1 if i % 5 == 0 else 0,
            "revenue": 5.0 if i % 5 == 0 else 0.0,
        }
        if i % 50 == 0:
            row.update(purchase_price=10.0, purchase_qty=2)
        elif i % 25 == 0:
            row.update(purchase_price=5.0, purchase_qty=1)
        rows.append(row)
    return rows


def test_ads_metrics_on_synthetic_log(tmp_path):
    path = tmp_path / "ads.jsonl"
    path.write_text("\n".join(json.dumps(row) for row in synthetic_ads_log()) + "\n")
    records = read_ads_log(str(path))
    assert len(records) == 100

    assert pir(records) == 0.25
    assert ctrpi(records) == 0.02
    assert cpc(records) == 5.0
    assert gmv(records) == 50.0
    rate, cost = 20 / 1000, 100.0 / 20
    assert cpm(records) == 1000.0 * rate * cost
    assert cpm(records) == pytest.approx(100.0, rel=1e-12)

    metrics = ad_revenue_metrics(records)
    assert metrics.cpm == 1000.0 * metrics.ctrpi * metrics.cpc

    report = ads_report(records)
    assert report["records"] == 100
    assert report["predicted_relevant"] == 40
    assert report["purchases"] == 4
    assert report["pir"] == 0.25

    out = tmp_path / "reports" / "ads.json"
    write_ads_report(report, str(out))
    assert json.loads(out.read_text()) == report


def test_pir_examples():
    predicted = [AdsRecord(predicted_label=2, gt_label=0)] + [AdsRecord(predicted_label=2, gt_label=2)] * 19
    assert pir(predicted) == pytest.approx(0.05)
    assert pir([AdsRecord(predicted_label=2, gt_label=1)]) == 0.0
    assert pir([AdsRecord(predicted_label=2, gt_label=0)] * 3) == 1.0
    with pytest.raises(UndefinedMetricError) as excinfo:
        pir([AdsRecord(predicted_label=1, gt_label=0)])
    assert excinfo.value.metric == "pir"


def test_revenue_metric_errors():
    no_clicks = [AdsRecord(predicted_label=0, gt_label=0, impressions=50)]
    assert ctrpi(no_clicks) == 0.0
    with pytest.raises(UndefinedMetricError) as excinfo:
        cpc(no_clicks)
    assert excinfo.value.metric == "cpc"
    with pytest.raises(UndefinedMetricError):
        ctrpi([AdsRecord(predicted_label=0, gt_label=0)])
    with pytest.raises(ValueError):
        AdsRecord(predicted_label=0, gt_label=0, impressions=1, clicks=2)
    with pytest.raises(ValueError):
        AdsRecord(predicted_label=3, gt_label=0)


def test_gmv_example():
    records = [
        AdsRecord(predicted_label=2, gt_label=2, purchase_price=10.0, purchase_qty=2),
        AdsRecord(predicted_label=2, gt_label=2, purchase_price=5.0, purchase_qty=1),
        AdsRecord(predicted_label=2, gt_label=2),
    ]
    assert gmv(records) == 25.0


def test_report_without_predicted_relevant_has_null_pir():
    records = [AdsRecord(predicted_label=1, gt_label=1, impressions=100, clicks=4, revenue=2.0)]
    report = ads_report(records)
    assert report["pir"] is None
    assert report["cpc"] == 0.5
    with pytest.raises(EmptyInputError):
        ads_report([])


def test_report_without_clicks_keeps_the_defined_metrics():
    records = [
        AdsRecord(predicted_label=2, gt_label=0, impressions=200),
        AdsRecord(predicted_label=2, gt_label=2, impressions=300, purchase_price=4.0, purchase_qty=3),
    ]
    report = ads_report(records)
    assert report["ctrpi"] == 0.0
    assert report["cpc"] is None
    assert report["cpm"] is None
    assert report["pir"] == 0.5
    assert report["gmv"] == 12.0

    silent = ads_report([AdsRecord(predicted_label=1, gt_label=1)])
    assert silent["ctrpi"] is None and silent["cpc"] is None and silent["cpm"] is None
    assert silent["gmv"] == 0.0


def test_relative_lift():
    assert relative_lift(100.0, 110.0) == pytest.approx(0.1)
    assert relative_lift(0.05, 0.04) == pytest.approx(-0.2)
    with pytest.raises(UndefinedMetricError):
        relative_lift(0.0, 1.0)


def test_empty_ads_log(tmp_path):
    path = tmp_path / "ads.jsonl"
    path.write_text("\n")
    with pytest.raises(EmptyInputError):
        read_ads_log(str(path))
