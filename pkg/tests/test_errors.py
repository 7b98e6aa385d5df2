from capcycle.errors import (
    CONFIG_INVALID,
    ERROR_CODES,
    INTERNAL_ERROR,
    CapCycleError,
    NoCapableRobot,
    _all_error_classes,
)


def test_codes_are_unique():
    codes = [cls.code for cls in _all_error_classes() if "code" in vars(cls) and cls is not CapCycleError]
    codes = [c for c in codes if c != "CAPCYCLE_ERROR"]
    assert len(codes) == len(set(codes))
    assert set(codes) <= set(ERROR_CODES)


def test_cli_codes_are_registered():
    assert ERROR_CODES[CONFIG_INVALID] == "cli"
    assert ERROR_CODES[INTERNAL_ERROR] == "cli"
    assert "CAPCYCLE_ERROR" not in ERROR_CODES


def test_record_shape():
    record = NoCapableRobot("nobody", uncovered={"grasp"}, per_robot={"Arm": ["grasp"]}).to_record()
    assert record == {
        "code": "NO_CAPABLE_ROBOT",
        "module": "reason",
        "message": "nobody",
        "details": {"per_robot": {"Arm": ["grasp"]}, "uncovered": ["grasp"]},
    }
    assert "details" not in CapCycleError("plain").to_record()
