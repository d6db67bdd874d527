from .ads import (
    AdRevenueMetrics,
    AdsRecord,
    UndefinedMetricError,
    ad_revenue_metrics,
    ads_report,
    cpc,
    cpm,
    ctrpi,
    gmv,
    pir,
    read_ads_log,
    relative_lift,
    write_ads_report,
)
from .passk import (
    DEFAULT_KS,
    EmptyInputError,
    InvalidQueryError,
    PasskQuery,
    parse_ks,
    passk_curve_from_log,
    passk_table,
    passk_unbiased,
    read_passk_log,
    write_passk_table,
)
