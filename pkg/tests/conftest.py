"""Shared fixtures: the canonical website metric set and its tiny dataset."""

from __future__ import annotations

import pytest

from metriq import AnalysisConfig, SegmentSpec, parse_metric_set, schema_from_manifest, type_check
from metriq.engine.data import dataset_from_csv

WEBSITE_METRICS = """\
unit User = User;

metric AvgRevPerUser = Avg(Sum<User>(Revenue));
metric PLT95 = Percentile(PageLoadTime, 95);
metric AvgPLT = Avg(PageLoadTime);

segment Country = Country;
segment Browser = Browser;

group Core = { AvgRevPerUser, PLT95 };
"""

WEBSITE_MANIFEST = {
    "columns": [
        {"name": "User", "type": "string", "nullable": False},
        {"name": "Revenue", "type": "number", "nullable": True},
        {"name": "PageLoadTime", "type": "number", "nullable": False},
        {"name": "Country", "type": "string", "nullable": False},
        {"name": "Browser", "type": "string", "nullable": False},
        {"name": "Variant", "type": "string", "nullable": False},
    ],
    "units": {"User": "User"},
}

# Treatment: user A has Revenue rows {3, 7} (plus a null), user B has {0};
# so treatment AvgRevPerUser is (10 + 0) / 2 = 5.0 exactly.
SIX_ROW_CSV = """\
User,Revenue,PageLoadTime,Country,Browser,Variant
A,3,120,US,Edge,T
A,7,95,US,Chrome,T
A,,110,US,Chrome,T
B,0,230,DE,Edge,T
C,2,180,US,Edge,C
D,4,210,DE,Chrome,C
"""


@pytest.fixture(scope="session")
def website_schema():
    return schema_from_manifest(WEBSITE_MANIFEST)


@pytest.fixture(scope="session")
def website_ms():
    return parse_metric_set(WEBSITE_METRICS, name="website")


@pytest.fixture(scope="session")
def website_tms(website_ms, website_schema):
    return type_check(website_ms, website_schema)


@pytest.fixture(scope="session")
def six_row_dataset(website_schema):
    return dataset_from_csv(SIX_ROW_CSV, website_schema)


@pytest.fixture()
def experiment_config():
    return AnalysisConfig(
        assignment_column="Variant",
        treatment="T",
        control="C",
        randomization_unit="User",
    )


@pytest.fixture()
def segmented_config():
    return AnalysisConfig(
        assignment_column="Variant",
        treatment="T",
        control="C",
        randomization_unit="User",
        segment_spec=SegmentSpec(segments=("Country",)),
    )


@pytest.fixture()
def business_config():
    return AnalysisConfig(mode="business")
