from __future__ import annotations

import pytest

from orchestrator.verification import (
    CheckResult,
    VerificationReport,
    check_abs,
    check_close,
    check_true,
    verify,
)
from utils.errors import ConfigError


def test_check_helpers():
    assert check_close("x", 1.02, 1.0, 0.05).passed
    assert not check_close("x", 1.2, 1.0, 0.05).passed
    assert not check_close("x", float('nan'), 1.0, 0.05).passed
    assert check_abs("y", 0.58, 0.6, 0.05).passed
    assert check_true("z", True).expected is None


def test_report_collects_failures():
    report = VerificationReport(level='analytic', checks=[CheckResult("a", True), CheckResult("b", False)])
    assert not report.passed
    assert [c.name for c in report.failures] == ["b"]
    assert report.to_dict()['checks'][1] == {
        'name': 'b', 'passed': False, 'value': None, 'expected': None, 'tolerance': '', 'detail': ''}


def test_analytic_level_passes(default_cfg):
    report = verify(default_cfg, level='analytic')
    assert report.checks
    assert report.passed, [c.name for c in report.failures]


def test_unknown_level_is_a_config_error(default_cfg):
    with pytest.raises(ConfigError):
        verify(default_cfg, level='everything')
