"""NSFNET-style switch graph, host attachments and hop-count path search."""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath

DEFAULT_CAPACITY_BPS = 10e6
DEFAULT_DELAY_S = 0.005
DEFAULT_QUEUE_PKTS = 200
# Host access links model an unshaped veth pair; bursts reach the first switch at this rate.
HOST_CAPACITY_BPS = 100e6
HOST_DELAY_S = 0.0
HOST_QUEUE_PKTS = 1000


class TopologyError(ValueError):
    pass


class NodeNotFound(KeyError):
    pass


class NoPath(Exception):
    pass


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    capacity_bps: float = DEFAULT_CAPACITY_BPS
    delay_s: float = DEFAULT_DELAY_S
    queue_pkts: int = DEFAULT_QUEUE_PKTS

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"self-loop on switch {self.a}")
        if self.capacity_bps <= 0:
            raise TopologyError(f"link {self.a}-{self.b}: capacity must be > 0")
        if self.delay_s < 0:
            raise TopologyError(f"link {self.a}-{self.b}: delay must be >= 0")
        if self.queue_pkts < 1:
            raise TopologyError(f"link {self.a}-{self.b}: queue must hold >= 1 packet")

    @property
    def key(self) -> frozenset:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class Host:
    name: str
    switch: int
    addr: str
    capacity_bps: float = HOST_CAPACITY_BPS
    delay_s: float = HOST_DELAY_S
    queue_pkts: int = HOST_QUEUE_PKTS


@dataclass(frozen=True, order=True)
class Path:
    nodes: tuple[int, ...]

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("empty path")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError(f"path {list(self.nodes)} repeats a node")

    @property
    def hop_count(self) -> int:
        return len(self.nodes) - 1

    @property
    def src(self) -> int:
        return self.nodes[0]

    @property
    def dst(self) -> int:
        return self.nodes[-1]

    def edges(self):
        return list(zip(self.nodes, self.nodes[1:]))

    def reversed(self) -> "Path":
        return Path(tuple(reversed(self.nodes)))

    def __iter__(self):
        return iter(self.nodes)

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return "Path(" + "-".join(map(str, self.nodes)) + ")"


@dataclass(frozen=True)
class Topology:
    """Undirected simple switch graph with hosts hanging off single switches."""

    nodes: frozenset
    links: dict = field(default_factory=dict)  # frozenset({a, b}) -> Link
    hosts: dict = field(default_factory=dict)  # name -> Host

    def __post_init__(self):
        adj = {n: set() for n in self.nodes}
        for key, link in self.links.items():
            if key != link.key:
                raise TopologyError(f"link keyed under {set(key)} joins {link.a}-{link.b}")
            for end in (link.a, link.b):
                if end not in adj:
                    raise TopologyError(f"link {link.a}-{link.b} references unknown switch {end}")
            adj[link.a].add(link.b)
            adj[link.b].add(link.a)
        object.__setattr__(self, "_adj", {n: tuple(sorted(v)) for n, v in adj.items()})
        addrs = set()
        for name, host in self.hosts.items():
            if host.switch not in adj:
                raise TopologyError(f"host {name} attaches to unknown switch {host.switch}")
            if host.addr in addrs:
                raise TopologyError(f"duplicate host address {host.addr}")
            addrs.add(host.addr)
        if self.nodes and not self._connected():
            raise TopologyError("topology is not connected")

    def _connected(self) -> bool:
        start = min(self.nodes)
        seen = {start}
        todo = [start]
        while todo:
            for nxt in self._adj[todo.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return len(seen) == len(self.nodes)

    def neighbors(self, node: int) -> tuple[int, ...]:
        try:
            return self._adj[node]
        except KeyError:
            raise NodeNotFound(node) from None

    def link(self, a: int, b: int) -> Link:
        try:
            return self.links[frozenset((a, b))]
        except KeyError:
            raise TopologyError(f"no link {a}-{b}") from None

    def has_link(self, a, b) -> bool:
        return frozenset((a, b)) in self.links

    def host(self, name: str) -> Host:
        try:
            return self.hosts[name]
        except KeyError:
            raise NodeNotFound(name) from None

    def host_by_addr(self, addr: str) -> Host:
        for h in self.hosts.values():
            if h.addr == addr:
                return h
        raise NodeNotFound(addr)

    def is_valid_path(self, path: Path) -> bool:
        return all(n in self._adj for n in path.nodes) and all(
            self.has_link(a, b) for a, b in path.edges()
        )

    def with_hosts(self, *hosts: Host) -> "Topology":
        merged = dict(self.hosts)
        for h in hosts:
            if h.name in merged:
                raise TopologyError(f"duplicate host name {h.name}")
            merged[h.name] = h
        return Topology(self.nodes, dict(self.links), merged)

    def next_free_addr(self) -> str:
        used = {h.addr for h in self.hosts.values()}
        i = 1
        while f"10.0.0.{i}" in used:
            i += 1
        return f"10.0.0.{i}"

    # --- serialization -------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "Topology":
        try:
            nodes = frozenset(int(n) for n in data["nodes"])
            links = {}
            for entry in data["links"]:
                link = Link(
                    int(entry["a"]),
                    int(entry["b"]),
                    float(entry.get("capacity_bps", DEFAULT_CAPACITY_BPS)),
                    float(entry.get("delay_s", DEFAULT_DELAY_S)),
                    int(entry.get("queue_pkts", DEFAULT_QUEUE_PKTS)),
                )
                if link.key in links:
                    raise TopologyError(f"duplicate link {link.a}-{link.b}")
                links[link.key] = link
            hosts = {}
            for i, entry in enumerate(data.get("hosts", [])):
                name = entry["name"]
                if name in hosts:
                    raise TopologyError(f"duplicate host name {name}")
                hosts[name] = Host(
                    name,
                    int(entry["switch"]),
                    entry.get("addr", f"10.0.0.{i + 1}"),
                    float(entry.get("capacity_bps", HOST_CAPACITY_BPS)),
                    float(entry.get("delay_s", HOST_DELAY_S)),
                    int(entry.get("queue_pkts", HOST_QUEUE_PKTS)),
                )
        except (KeyError, TypeError) as exc:
            raise TopologyError(f"malformed topology: {exc!r}") from exc
        return cls(nodes, links, hosts)

    def to_dict(self) -> dict:
        return {
            "nodes": sorted(self.nodes),
            "links": [
                {
                    "a": min(l.a, l.b),
                    "b": max(l.a, l.b),
                    "capacity_bps": l.capacity_bps,
                    "delay_s": l.delay_s,
                    "queue_pkts": l.queue_pkts,
                }
                for l in sorted(self.links.values(), key=lambda l: (min(l.a, l.b), max(l.a, l.b)))
            ],
            "hosts": [
                {
                    "name": h.name,
                    "switch": h.switch,
                    "addr": h.addr,
                    "capacity_bps": h.capacity_bps,
                    "delay_s": h.delay_s,
                    "queue_pkts": h.queue_pkts,
                }
                for h in self.hosts.values()
            ],
        }

    @classmethod
    def load(cls, path) -> "Topology":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise TopologyError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        FsPath(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def nsfnet() -> Topology:
    """The bundled 14-switch NSFNET with the video client on switch 0 and server on 9."""
    text = resources.files("sdnlab.data").joinpath("nsfnet.json").read_text(encoding="utf-8")
    return Topology.from_dict(json.loads(text))


# --- path search ---------------------------------------------------------


def _check_nodes(topo: Topology, *nodes):
    for n in nodes:
        if n not in topo.nodes:
            raise NodeNotFound(n)


def _min_hop_path(adj, src, dst, banned_nodes=frozenset(), banned_edges=frozenset()):
    """Lexicographically smallest minimum-hop path, or None.

    Distances are taken from ``dst`` so the walk from ``src`` can greedily pick
    the smallest neighbour that stays on some shortest path.
    """
    if src in banned_nodes or dst in banned_nodes:
        return None
    dist = {dst: 0}
    todo = deque([dst])
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v in dist or v in banned_nodes or (v, u) in banned_edges:
                continue
            dist[v] = dist[u] + 1
            todo.append(v)
    if src not in dist:
        return None
    path = [src]
    u = src
    while u != dst:
        u = next(
            v
            for v in adj[u]
            if dist.get(v) == dist[u] - 1 and (u, v) not in banned_edges and v not in banned_nodes
        )
        path.append(u)
    return tuple(path)


def shortest_path(topo: Topology, src: int, dst: int) -> Path:
    _check_nodes(topo, src, dst)
    found = _min_hop_path(topo._adj, src, dst)
    if found is None:
        raise NoPath(f"{src} -> {dst}")
    return Path(found)


def _common_prefix(a, b) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def path_order_key(nodes, reference):
    """Total order used to rank candidate paths.

    Fewer hops first; among equal hop counts, paths that leave the reference
    (shortest) path later come first, which is the order in which Yen's
    deviation scheme discovers them; remaining ties go to the smaller node
    sequence.
    """
    nodes = tuple(nodes)
    return (len(nodes) - 1, -_common_prefix(nodes, reference), nodes)


def k_shortest_paths(topo: Topology, src: int, dst: int, k: int) -> list[Path]:
    """Up to ``k`` loopless paths via Yen's algorithm over unit edge weights."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_nodes(topo, src, dst)
    adj = topo._adj
    first = _min_hop_path(adj, src, dst)
    if first is None:
        raise NoPath(f"{src} -> {dst}")

    def key(p):
        return path_order_key(p, first)

    accepted = [first]
    seen = {first}
    branches = {}  # root prefix -> next nodes taken by accepted paths

    def index(p):
        for i in range(1, len(p)):
            branches.setdefault(p[:i], set()).add(p[i])

    index(first)
    candidates = []  # heap of (key, path)
    last = first
    while True:
        for i in range(len(last) - 1):
            spur = last[i]
            root = last[: i + 1]
            banned_edges = set()
            for v in branches.get(root, ()):
                banned_edges.add((spur, v))
                banned_edges.add((v, spur))
            spur_path = _min_hop_path(adj, spur, dst, frozenset(root[:-1]), banned_edges)
            if spur_path is None:
                continue
            total = root[:-1] + spur_path
            if total not in seen:
                seen.add(total)
                heapq.heappush(candidates, (key(total), total))
        if not candidates:
            break
        # Yen yields paths in non-decreasing hop count, so once every path no longer
        # than the k-th accepted one has been pulled, the key-sorted prefix is final.
        if len(accepted) >= k and candidates[0][0][0] > len(accepted[k - 1]) - 1:
            break
        _, last = heapq.heappop(candidates)
        accepted.append(last)
        index(last)
    accepted.sort(key=key)
    return [Path(p) for p in accepted[:k]]


def all_simple_paths(topo: Topology, src: int, dst: int) -> list[Path]:
    """Exhaustive DFS enumeration; exponential, meant for small graphs and checks."""
    _check_nodes(topo, src, dst)
    adj = topo._adj
    out = []
    stack = [(src, (src,))]
    while stack:
        u, prefix = stack.pop()
        if u == dst:
            out.append(Path(prefix))
            continue
        for v in adj[u]:
            if v not in prefix:
                stack.append((v, prefix + (v,)))
    return out
