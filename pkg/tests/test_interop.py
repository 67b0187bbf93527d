import json

import pydot
import pytest

from i2d import evaluate, parse, print_diagram
from i2d.interop import (
    DfdError,
    export_dot,
    import_dfd,
    load_dfd,
    read_dfd,
    sanitize,
    topology_skeleton,
)
from i2d.norms import check


def test_dfd_import_matches_webapp_skeleton(fixture_path, load):
    d = read_dfd(fixture_path("webapp_dfd.json"))
    assert topology_skeleton(d) == topology_skeleton(load("webapp.i2d"))
    assert d.entity("Server").classes == {"dfd_trust_boundary"}
    assert d.entity("Database").classes == {"dfd_datastore"}
    assert d.flow_map["request"].items[0].classes == {"dfd_data"}
    assert parse(print_diagram(d)) == d


def _doc(**kw):
    base = {"version": 1,
            "nodes": [{"id": "a", "kind": "process", "label": "A"},
                      {"id": "b", "kind": "datastore", "label": "B"}],
            "boundaries": [],
            "edges": [{"id": "e", "source": "a", "target": "b"}]}
    base.update(kw)
    return base


def test_unlabelled_edge_item():
    d = import_dfd(_doc())
    assert d.flow_map["e"].items[0].name == "data_e"


def test_label_collision_falls_back_to_id():
    d = import_dfd(_doc(nodes=[{"id": "a", "kind": "process", "label": "Same"},
                               {"id": "b", "kind": "process", "label": "Same"}]))
    assert {e.name for e in d.all_entities()} == {"Same", "b"}


def test_nested_boundaries():
    d = import_dfd(_doc(boundaries=[{"id": "in", "label": "Inner", "members": ["a"]},
                                    {"id": "out", "label": "Outer", "members": ["in"]}]))
    assert d.parent_map == {"Inner": "Outer", "A": "Inner"}


@pytest.mark.parametrize("bad, msg", [
    ({"version": 2}, "version"),
    ({"edges": [{"id": "e", "source": "a", "target": "zz"}]}, "not a node"),
    ({"edges": [{"id": "e", "source": "a", "target": "a"}]}, "coincide"),
    ({"nodes": [{"id": "a", "kind": "process"}, {"id": "a", "kind": "process"}]}, "duplicate"),
    ({"nodes": [{"id": "a", "kind": "cloud"}]}, "unknown kind"),
    ({"boundaries": [{"id": "x", "members": ["q"]}]}, "unknown member"),
    ({"boundaries": [{"id": "x", "members": ["a"]}, {"id": "y", "members": ["a"]}]}, "both"),
    ({"boundaries": [{"id": "x", "members": ["y"]}, {"id": "y", "members": ["x"]}]}, "nested"),
])
def test_invalid_documents(bad, msg):
    with pytest.raises(DfdError, match=msg):
        load_dfd(_doc(**bad))


def test_invalid_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{nope")
    with pytest.raises(DfdError, match="invalid JSON"):
        read_dfd(p)


def test_sanitize():
    assert sanitize("Web server") == "Web_server"
    assert sanitize("3rd party") == "_3rd_party"
    assert sanitize("!!") == ""


def _dot(text):
    (graph,) = pydot.graph_from_dot_data(text)
    return graph


def test_export_dot_structure(load):
    g = _dot(export_dot(load("webapp.i2d")))
    assert [s.get_name().strip('"') for s in g.get_subgraphs()] == ["cluster_Server"]
    edges = {(e.get_source().strip('"'), e.get_destination().strip('"')) for e in g.get_edges()}
    assert edges == {("Database", "WebServer"), ("Client", "WebServer"), ("WebServer", "Client")}


def test_export_dot_complex_flows_dashed(load):
    g = _dot(export_dot(load("intercepted.i2d")))
    assert {e.get("style") for e in g.get_edges()} == {"dashed"}


def test_export_dot_with_state(load):
    d = load("intercepted.i2d")
    s = evaluate(d)
    text = export_dot(s.diagram, s, check(s))
    g = _dot(text)
    isp = g.get_node('"ISP"') or g.get_subgraphs()[0].get_node('"ISP"')
    assert isp[0].get("color") == "red"
    client = g.get_node('"Client"')[0]
    assert "(derived)" in client.get("label")


def test_export_dot_quotes_names():
    d = import_dfd(_doc(edges=[{"id": "e", "source": "a", "target": "b",
                                "label": 'say "hi"'}]))
    _dot(export_dot(d))
    json.dumps(topology_skeleton(d))
