import json
from pathlib import Path

import pytest

from swarms.scenario import ScenarioError, load_scenario, parse_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
BASE = {"nodes": [{"id": "a"}, {"id": "b"}], "duration": 1000}


def doc(**over):
    return {**json.loads(json.dumps(BASE)), **over}


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    load_scenario(path)


def test_defaults():
    sc = parse_scenario(doc())
    assert sc.mode == "ttl" and sc.loss == 0.0 and sc.latency == (5, 20)
    assert sc.connectivity.model == "static" and sc.connectivity.edges == "full"


@pytest.mark.parametrize("d,location", [
    ([], "$"),
    ({"duration": 5}, "$"),
    (doc(nodes=[]), "$.nodes"),
    (doc(nodes=[{"id": "a"}, {"id": "a"}]), "$.nodes"),
    (doc(nodes=[{"id": "a", "protocol": {"nope": 1}}]), "$.nodes[0].protocol.nope"),
    (doc(nodes=[{"id": "a", "protocol": {"beacon_period": 0}}]), "$.nodes[0].protocol"),
    (doc(duration=0), "$.duration"),
    (doc(mode="barter"), "$.mode"),
    (doc(network={"loss": 1.5}), "$.network.loss"),
    (doc(network={"latency": [9, 3]}), "$.network.latency"),
    (doc(connectivity={"model": "teleport"}), "$.connectivity.model"),
    (doc(connectivity={"edges": [["a", "z"]]}), "$.connectivity.edges[0][1]"),
    (doc(tasks=[{"time": 0, "issuer": "z", "expr": "/d"}]), "$.tasks[0].issuer"),
    (doc(tasks=[{"time": 0, "issuer": "a", "expr": "/fn/f("}]), "$.tasks[0].expr"),
    (doc(tasks=[{"issuer": "a", "expr": "/d"}]), "$.tasks[0]"),
    (doc(churn=[{"time": 0, "node": "a", "action": "explode"}]), "$.churn[0].action"),
    (doc(churn=[{"time": 0, "node": "@taker", "action": "leave"}]), "$.churn[0].node"),
    (doc(actions=[{"time": 0, "node": "a", "action": "verify"}]), "$.actions[0].name"),
    (doc(functions={"/fn/upper": -1}), "$.functions./fn/upper"),
])
def test_error_locations(d, location):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(d)
    assert exc.value.location == location


def test_crash_may_target_the_taker():
    sc = parse_scenario(doc(churn=[{"time": 0, "node": "@taker", "action": "crash"}]))
    assert sc.churn[0].node == "@taker"


def test_bad_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "nodes": [,\n}')
    with pytest.raises(ScenarioError) as exc:
        load_scenario(p)
    assert exc.value.location.endswith(":2:13")
