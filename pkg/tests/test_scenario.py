import json

import pytest

from rrtlab.errors import ScenarioParseError, ScenarioValidationError
from rrtlab.geometry import AxisBox, Polyline
from rrtlab.scenario import (
    BUNDLED,
    Scenario,
    dumps,
    load_bundled,
    loads,
    read_scenario,
    write_scenario,
)

MINIMAL = {"dimension": 2, "obstacles": [], "start": [0.1, 0.1], "target": [0.9, 0.9]}


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_round_trip(name):
    sc = load_bundled(name)
    assert loads(dumps(sc)) == sc
    assert dumps(loads(dumps(sc))) == dumps(sc)


def test_file_round_trip(tmp_path):
    sc = load_bundled("two_boxes")
    path = tmp_path / "x.scene.json"
    write_scenario(sc, path)
    back = read_scenario(path)
    assert back == sc
    assert back.name == "x"


def test_minimal_scenario_parses():
    sc = loads(json.dumps(MINIMAL))
    assert sc.dimension == 2 and sc.obstacles == () and sc.reference_path is None


def test_start_inside_obstacle_is_rejected():
    doc = dict(MINIMAL, obstacles=[{"lower": [0.0, 0.0], "upper": [0.2, 0.2]}])
    with pytest.raises(ScenarioValidationError, match="start not in free space"):
        loads(json.dumps(doc))


def test_reference_path_needs_clearance():
    doc = dict(MINIMAL, reference_path={"waypoints": [[0.1, 0.1], [0.9, 0.9]]})
    with pytest.raises(ScenarioValidationError, match="without clearance"):
        loads(json.dumps(doc))


def test_reference_path_endpoints_checked():
    doc = dict(MINIMAL, reference_path={"waypoints": [[0.2, 0.1], [0.9, 0.9]], "clearance": 0.01})
    with pytest.raises(ScenarioValidationError, match="must start at start"):
        loads(json.dumps(doc))


def test_reference_path_clearance_violation_rejected():
    doc = dict(
        MINIMAL,
        obstacles=[{"lower": [0.45, 0.45], "upper": [0.55, 0.55]}],
        reference_path={"waypoints": [[0.1, 0.1], [0.9, 0.9]], "clearance": 0.01},
    )
    with pytest.raises(ScenarioValidationError, match="clearance"):
        loads(json.dumps(doc))


def test_parse_error_names_line_and_field():
    text = json.dumps(dict(MINIMAL, start=[0.1, "a"]), indent=2)
    with pytest.raises(ScenarioParseError) as info:
        loads(text)
    assert info.value.field == "start"
    assert info.value.line is not None
    assert "line" in str(info.value)


def test_unknown_field_rejected():
    with pytest.raises(ScenarioParseError, match="unknown field"):
        loads(json.dumps(dict(MINIMAL, colour="red")))


def test_bad_json_reports_line():
    with pytest.raises(ScenarioParseError) as info:
        loads('{\n  "dimension": 2,\n  oops\n}')
    assert info.value.line == 3


def test_dimension_must_be_at_least_two():
    with pytest.raises(ScenarioValidationError):
        loads(json.dumps({"dimension": 1, "start": [0.1], "target": [0.9]}))


def test_coordinates_outside_cube_rejected():
    with pytest.raises(ScenarioValidationError, match="outside"):
        loads(json.dumps(dict(MINIMAL, target=[1.5, 0.5])))


def test_scenario_constructor_validates():
    with pytest.raises(ScenarioValidationError):
        Scenario(2, (AxisBox((0.0, 0.0), (0.3, 0.3)),), (0.1, 0.1), (0.9, 0.9))


def test_reference_cost_and_free_volume():
    sc = load_bundled("two_boxes")
    assert sc.free_volume == pytest.approx(0.88, abs=1e-12)
    assert sc.reference_cost() > 1.0
    ref = Polyline(((0.2, 0.5), (0.8, 0.5)))
    assert load_bundled("empty_square").reference_path == ref
