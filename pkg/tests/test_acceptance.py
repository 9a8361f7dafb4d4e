"""One test per acceptance criterion; each prints a single pass/fail line.

Tolerances live in photocorr.acceptance so `photocorr verify` and this file
apply identical thresholds.
"""

import pytest

from photocorr import acceptance

from conftest import ACCEPTANCE_LINES

WORKERS = 4


def _check(res):
    ACCEPTANCE_LINES.append(res.summary())
    print(res.report())
    failed = [c.line() for c in res.checks if not c.passed]
    assert res.passed, "\n".join(failed)


def test_criterion_01_analytic_moments():
    _check(acceptance.criterion_analytic_moments())


@pytest.mark.slow
def test_criterion_02_table1():
    _check(acceptance.criterion_table1(fast=False, workers=WORKERS))


def test_criterion_03_hbt_invariance():
    _check(acceptance.criterion_hbt(workers=WORKERS))


def test_criterion_04_mfold():
    _check(acceptance.criterion_mfold(workers=WORKERS))


def test_criterion_05_deconvolution():
    _check(acceptance.criterion_deconvolution(workers=WORKERS))


def test_criterion_06_tes():
    _check(acceptance.criterion_tes(workers=WORKERS))


def test_criterion_07_pdc():
    _check(acceptance.criterion_pdc())


def test_criterion_08_heralding():
    _check(acceptance.criterion_heralding())


def test_criterion_09_phasespace():
    _check(acceptance.criterion_phasespace())


def test_criterion_10_nonclassicality():
    _check(acceptance.criterion_nonclassicality())


def test_criterion_11_reproducibility():
    _check(acceptance.criterion_reproducibility(workers=2))
