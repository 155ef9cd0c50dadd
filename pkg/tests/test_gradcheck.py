import pytest

from fcdnet.gradcheck import CHECKS, SCOPES, run_checks


def test_scopes_cover_every_module():
    assert set(SCOPES) == {"numeric", "signal", "ltfe", "stfe", "graphops", "forecaster", "model"}


@pytest.mark.parametrize("check", [c for c in CHECKS if c.scope != "model"],
                         ids=lambda c: f"{c.scope}.{c.name}")
def test_operation_gradients(check):
    report = check.run()
    assert report.passed, report.per_param
    assert report.max_rel_error < 1e-4


def test_unknown_scope():
    with pytest.raises(ValueError):
        run_checks("everything")
