"""Shared fixtures plus the acceptance-criteria summary hook.

Acceptance tests register one outcome line each via record_criterion; the
terminal summary prints them so every run shows a PASS/FAIL line per
criterion regardless of output capturing.
"""

from __future__ import annotations

import pytest

from promptclf.corpus import ConversationRecord, Dataset, LabelCatalog, LabelEntry

_CRITERION_LINES: list[str] = []


def record_criterion(line: str) -> None:
    _CRITERION_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_catalog() -> LabelCatalog:
    return LabelCatalog(
        (
            LabelEntry(0, "Billing", "Questions about invoices and payment"),
            LabelEntry(1, "Shipping", "Where a parcel is and when it arrives"),
            LabelEntry(2, "Returns", "Sending an item back for refund"),
        )
    )


@pytest.fixture
def tiny_dataset(tiny_catalog: LabelCatalog) -> Dataset:
    records = []
    for label in range(3):
        for i in range(8):
            records.append(
                ConversationRecord(
                    id=f"c{label}{i}",
                    text=f"customer: about topic {label} item {i}",
                    label=label,
                )
            )
    return Dataset(tiny_catalog, tuple(records))
