"""Output files and checkpoint/restart.

Checkpoint layout (little-endian)::

    magic     8 bytes  b"KMCNCKPT"
    format    uint16   container format version
    vlen      uint16   length of the package version string
    version   vlen bytes, ASCII
    length    uint64   payload length in bytes
    crc32     uint32   CRC-32 of the payload
    payload   zlib-compressed pickle of the Simulation
"""
from __future__ import annotations

import math
import os
import pickle
import struct
import zlib
from pathlib import Path
from xml.sax.saxutils import quoteattr

from . import __version__
from .analysis import DegreeHistogram, count_distribution, degree_distribution
from .config import CONTENT_CLASSES
from .simulation import CATEGORY_NAMES

MAGIC = b"KMCNCKPT"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<8sHH")
_TAIL = struct.Struct("<QI")


class CheckpointError(ValueError):
    """Unreadable, truncated, corrupted or version-mismatched checkpoint."""


def _num(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def distribution_lines(hist: DegreeHistogram) -> list[str]:
    """Rows ``k count P(k) ln(k) ln(P(k))``; ln of 0 is written as ``-inf``.

    A population of zero agents is reported as the single row k=0 with P=1."""
    lines = ["# k count P(k) ln(k) ln(P(k))"]
    n = hist.n_agents
    if n == 0:
        lines.append("0 0 1.0 -inf 0.0")
        return lines
    for k, c in sorted(hist.counts.items()):
        p = c / n
        lk = math.log(k) if k > 0 else -math.inf
        lp = math.log(p) if p > 0 else -math.inf
        lines.append(f"{k} {c} {_num(p)} {_num(lk)} {_num(lp)}")
    return lines


def _write(path: Path, lines: list[str]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def summary_items(sim) -> list[tuple[str, object]]:
    st = sim.stats
    d = sim.diffusion
    top = d.most_rebroadcasted()
    items: list[tuple[str, object]] = [
        ("seed", sim.seed),
        ("sim_time", float(sim.clock.sim_time)),
        ("steps", sim.clock.step_count),
        ("agents", len(sim.pop)),
        ("edges", sim.network.edge_count),
        ("chatty_flags", len(sim.network.flags)),
    ]
    for i, name in enumerate(CATEGORY_NAMES):
        items.append((f"events_{name}", st.events[i]))
        items.append((f"noops_{name}", st.noops[i]))
    items += [
        ("followbacks", st.followbacks),
        ("broadcasts", d.broadcast_count),
        ("rebroadcasts", d.rebroadcast_count),
        ("live_broadcasts", len(d.live)),
        ("pruned", st.pruned),
        ("top_cascade_origin", top.origin if top else -1),
        ("top_cascade_rebroadcasts", top.count if top else 0),
    ]
    for name in sorted(st.model_usage):
        items.append((f"follow_model_{name}", st.model_usage[name]))
    return items


def cascade_lines(sim) -> list[str]:
    """Most-rebroadcasted cascade as a node list then an edge list.

    Nodes carry generation depth and the audience size reached (viewer
    counts, not identities)."""
    top = sim.diffusion.most_rebroadcasted()
    lines = ["# most-rebroadcasted cascade"]
    if top is None:
        lines.append("# none")
        return lines
    lines.append(f"# origin {top.origin} author {top.author} content "
                 f"{CONTENT_CLASSES[top.content]} created_at {_num(float(top.created_at))} "
                 f"rebroadcasts {top.count}")
    lines.append("# nodes: agent depth audience")
    lines.append(f"node {top.author} 0 {top.audience}")
    for _, child, depth, aud in top.edges:
        lines.append(f"node {child} {depth} {aud}")
    lines.append("# edges: parent child depth")
    for parent, child, depth, _ in top.edges:
        lines.append(f"edge {parent} {child} {depth}")
    return lines


def write_gexf(sim, path: str | os.PathLike) -> None:
    """Static directed graph in GEXF 1.2 with agent attributes."""
    pop = sim.pop
    names = [t.name for t in pop.profiles]
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<gexf xmlns="http://www.gexf.net/1.2draft" version="1.2">',
        '  <graph mode="static" defaultedgetype="directed">',
        '    <attributes class="node">',
        '      <attribute id="0" title="type" type="string"/>',
        '      <attribute id="1" title="region" type="integer"/>',
        '      <attribute id="2" title="language" type="integer"/>',
        '      <attribute id="3" title="ideology" type="integer"/>',
        '    </attributes>',
        '    <nodes>',
    ]
    for i in range(len(pop)):
        out.append(
            f'      <node id="{i}" label="{i}"><attvalues>'
            f'<attvalue for="0" value={quoteattr(names[pop.type_of[i]])}/>'
            f'<attvalue for="1" value="{pop.region[i]}"/>'
            f'<attvalue for="2" value="{pop.language[i]}"/>'
            f'<attvalue for="3" value="{pop.ideology[i]}"/>'
            f'</attvalues></node>')
    out.append('    </nodes>')
    out.append('    <edges>')
    for n, (a, b) in enumerate(sim.network.iter_edges()):
        out.append(f'      <edge id="{n}" source="{a}" target="{b}"/>')
    out += ['    </edges>', '  </graph>', '</gexf>']
    _write(Path(path), out)


def write_outputs(sim, out_dir: str | os.PathLike) -> Path:
    """Write every enabled output file into ``out_dir`` (created if needed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    oc = sim.config.output
    net = sim.network
    for name, direction in (("degree_in.dat", "in"), ("degree_out.dat", "out"),
                            ("degree_cum.dat", "cumulative")):
        _write(out / name, distribution_lines(degree_distribution(net, direction)))
    _write(out / "tweets.dat", distribution_lines(count_distribution(sim.pop.tweets)))
    _write(out / "retweets.dat", distribution_lines(count_distribution(sim.pop.retweets)))
    _write(out / "summary.dat", [f"{k} {_num(v)}" for k, v in summary_items(sim)])
    if oc.edges:
        with open(out / "network.edges", "w", encoding="ascii") as fh:
            for a, b in net.iter_edges():
                fh.write(f"{a} {b}\n")
    if oc.cascade:
        _write(out / "cascade_top.dat", cascade_lines(sim))
    if oc.gexf:
        write_gexf(sim, out / "network.gexf")
    if oc.checkpoint:
        save_checkpoint(sim, out / "checkpoint.bin")
    return out


def save_checkpoint(sim, path: str | os.PathLike) -> None:
    payload = zlib.compress(pickle.dumps(sim, protocol=pickle.HIGHEST_PROTOCOL), 1)
    ver = __version__.encode("ascii")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, FORMAT_VERSION, len(ver)))
        fh.write(ver)
        fh.write(_TAIL.pack(len(payload), zlib.crc32(payload)))
        fh.write(payload)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEAD.size:
        raise CheckpointError(f"{path}: truncated header ({len(data)} bytes)")
    magic, fmt, vlen = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic {magic!r})")
    pos = _HEAD.size
    if len(data) < pos + vlen + _TAIL.size:
        raise CheckpointError(f"{path}: truncated header")
    ver = data[pos:pos + vlen].decode("ascii", "replace")
    if fmt != FORMAT_VERSION or ver != __version__:
        raise CheckpointError(
            f"{path}: written by version {ver} (format {fmt}), "
            f"this is version {__version__} (format {FORMAT_VERSION})")
    pos += vlen
    length, crc = _TAIL.unpack_from(data, pos)
    pos += _TAIL.size
    payload = data[pos:]
    if len(payload) != length:
        raise CheckpointError(f"{path}: truncated payload ({len(payload)} of {length} bytes)")
    if zlib.crc32(payload) != crc:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    try:
        return pickle.loads(zlib.decompress(payload))
    except Exception as exc:
        raise CheckpointError(f"{path}: payload does not decode: {exc}") from exc
