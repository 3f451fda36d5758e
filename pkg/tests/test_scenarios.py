import math

import pytest

from calibra.scenarios import UnknownScenarioError, describe, inline_scenario, load_scenario, scenario_ids
from calibra.checks import check_ids
from calibra.submersion import fibre_volume

CATALOG = ["polar", "cylinder", "s2_latitude", "rev_surface", "flat_cn", "flat_t2",
           "flat_c2_torus", "t7_coassoc", "hyperbola_psh"]


def test_catalog_ids_are_fixed():
    assert scenario_ids() == CATALOG
    assert [sid for sid, _ in describe()] == CATALOG


@pytest.mark.parametrize("sid", CATALOG)
def test_default_checks_are_registered(sid):
    sc = load_scenario(sid)
    assert sc.checks and set(sc.checks) <= set(check_ids())
    assert sc.metric is not None


def test_unknown_scenario():
    with pytest.raises(UnknownScenarioError):
        load_scenario("klein_bottle")


def test_field_override_and_params():
    sc = load_scenario("cylinder", fields={"F": "t^4"})
    assert sc.fields["F"] == "t^4"
    assert load_scenario("cylinder").fields["F"] == "t^2"
    rev = load_scenario("rev_surface", {"profile": "2+sin(s)", "kind": "arclength", "variable": "s"})
    assert rev.params["profile"] == "2+sin(s)"
    assert fibre_volume(rev.rs, [0.0]) == pytest.approx(4 * math.pi)
    assert load_scenario("flat_cn", {"n": 3}).metric.dim == 6


def test_inline_scenario_matches_polar():
    spec = {
        "total_vars": ["r", "th"], "total_metric": [["1", "0"], ["0", "r^2"]],
        "base_vars": ["s"], "base_metric": [["1"]],
        "projection": ["r"], "fibre_vars": ["u"], "fibre_param": ["s", "u"],
        "fibre_lower": [0.0], "fibre_upper": [2 * math.pi],
        "base_lower": [0.5], "base_upper": [2.0],
        "fields": {"F": "s^2"},
    }
    sc = inline_scenario(spec)
    assert sc.base_point == [1.25]
    assert fibre_volume(sc.rs, [1.5]) == pytest.approx(3 * math.pi, rel=1e-12)
    assert sc.kahler is not None
