import pytest

from urmap.device import default_device
from urmap.recurrence import parse_recurrence

# filled by test_acceptance, printed once at the end of the run
CRITERIA: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])


@pytest.fixture(scope="session")
def device():
    return default_device()


def mm_rec(n=8, m=None, k=None, dtype="int32"):
    m = m or n
    k = k or n
    return parse_recurrence({
        "name": "mm", "dtype": dtype,
        "dims": [{"name": "i", "extent": n}, {"name": "j", "extent": m}, {"name": "k", "extent": k}],
        "statement": {"write": "C[i][j]", "reads": ["A[i][k]", "B[k][j]"]},
    })


def conv_rec(h=8, w=8, p=2, q=2, dtype="int32"):
    return parse_recurrence({
        "name": "conv2d", "dtype": dtype,
        "dims": [{"name": "h", "extent": h}, {"name": "w", "extent": w},
                 {"name": "p", "extent": p}, {"name": "q", "extent": q}],
        "statement": {"write": "O[h][w]", "reads": ["I[h+p][w+q]", "W[p][q]"]},
    })


def fir_rec(n=8, taps=3, dtype="int32"):
    return parse_recurrence({
        "name": "fir", "dtype": dtype,
        "dims": [{"name": "n", "extent": n}, {"name": "taps", "extent": taps}],
        "statement": {"write": "y[n]", "reads": ["x[n-taps]", "c[taps]"]},
    })


def random_graph(rng, ncols=50, nrows=8, max_nodes=40, max_ports=12):
    """Placed graph with random PLIO fan-in/fan-out; returns (graph, placement)."""
    from urmap.graph import PLIO, AieNode, Edge, MappedGraph, PlioPort
    from urmap.router import PhysicalPlacement

    n = int(rng.integers(1, max_nodes + 1))
    cells = rng.choice(nrows * ncols, size=n, replace=False)
    nodes = tuple(AieNode(f"aie_{k}_0_0", (k, 0, 0)) for k in range(n))
    node_map = {nd.id: tuple(int(v) for v in divmod(int(cell), ncols))
                for nd, cell in zip(nodes, cells)}
    ports, edges = [], []
    for k in range(int(rng.integers(1, max_ports + 1))):
        direction = "in" if rng.random() < 0.5 else "out"
        fan = rng.choice(n, size=int(rng.integers(1, min(n, 6) + 1)), replace=False)
        pid = f"{direction}{k}"
        streams = tuple(("A", nodes[int(j)].id) for j in sorted(fan))
        ports.append(PlioPort(pid, direction, ("A",), streams, len(streams) > 1 and direction == "in"))
        for _, nid in streams:
            edges.append(Edge(pid, nid, PLIO, "A", "read") if direction == "in" else Edge(nid, pid, PLIO, "A", "read"))
    g = MappedGraph(nodes, tuple(ports), tuple(edges), (n, 1, 1))
    return g, PhysicalPlacement(node_map, {})
