import json

import numpy as np
import pytest

from mlgad.data import synth_multi_graph, synth_single_graph
from mlgad.errors import DomainError
from mlgad.io import (atomic_write_text, read_any, read_graph_dir, read_graphs_jsonl,
                      write_graph_dir, write_graphs_jsonl)


def same_graph(a, b):
    return (a.node_count == b.node_count and np.array_equal(a.edges, b.edges)
            and np.array_equal(a.features, b.features)
            and np.array_equal(a.edge_label_array(), b.edge_label_array())
            and (a.node_labels is None) == (b.node_labels is None)
            and (a.node_labels is None or np.array_equal(a.node_labels, b.node_labels))
            and a.graph_label == b.graph_label)


def test_single_graph_round_trip(tmp_path):
    g = synth_single_graph(120, 0.1, "mixed", seed=0).graphs[0]
    write_graph_dir(g, tmp_path / "g")
    assert same_graph(g, read_graph_dir(tmp_path / "g"))
    assert same_graph(g, read_any(tmp_path / "g")[0])


def test_multi_graph_round_trip(tmp_path):
    graphs = synth_multi_graph(20, (20, 25), 0.2, seed=1).graphs
    write_graphs_jsonl(graphs, tmp_path / "m.jsonl")
    back = read_graphs_jsonl(tmp_path / "m.jsonl")
    assert len(back) == 20 and all(same_graph(a, b) for a, b in zip(graphs, back))


def test_rejects_out_of_range_endpoint(tmp_path):
    (tmp_path / "bad.jsonl").write_text(json.dumps({"nodes": [[0.0], [1.0]], "edges": [[0, 2]]}) + "\n")
    with pytest.raises(DomainError):
        read_graphs_jsonl(tmp_path / "bad.jsonl")
    d = tmp_path / "dir"
    d.mkdir()
    (d / "features.tsv").write_text("0\t1.0\n1\t2.0\n")
    (d / "edges.tsv").write_text("0\t5\n")
    with pytest.raises(DomainError):
        read_graph_dir(d)


def test_missing_field(tmp_path):
    (tmp_path / "bad.jsonl").write_text(json.dumps({"edges": []}) + "\n")
    with pytest.raises(DomainError):
        read_graphs_jsonl(tmp_path / "bad.jsonl")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write_text(tmp_path / "a" / "out.txt", "hello")
    assert (tmp_path / "a" / "out.txt").read_text() == "hello"
    assert [p.name for p in (tmp_path / "a").iterdir()] == ["out.txt"]
