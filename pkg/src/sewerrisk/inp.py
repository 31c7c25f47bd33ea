"""A documented subset of the INP network format, plus GeoJSON and CSV result writers.

Supported sections: [TITLE], [OPTIONS], [JUNCTIONS], [OUTFALLS], [STORAGE],
[CONDUITS], [PUMPS], [XSECTIONS], [DWF], [INFLOWS], [PATTERNS], [COORDINATES].
Units are SI (m, m^3/s); a `;units <system>` header or FLOW_UNITS option
declaring anything else is rejected.  Pumps carry a constant rated flow in
the curve column.  Storage must use a constant surface area
(FUNCTIONAL 0 0 <area>).
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .network import Conduit, Junction, Network, Outfall, Pump, StorageTank, validate

KNOWN_SECTIONS = ("TITLE", "OPTIONS", "JUNCTIONS", "OUTFALLS", "STORAGE", "CONDUITS", "PUMPS",
                  "XSECTIONS", "DWF", "INFLOWS", "PATTERNS", "COORDINATES")
_UNITS_RE = re.compile(r"^\s*;+\s*units\s+(\S+)", re.IGNORECASE)
HOURLY_VALUES = 24


class InpError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class InpSemanticError(InpError):
    pass


class InpWarning(UserWarning):
    pass


@dataclass
class InpRecord:
    line: int
    fields: list[str]
    comment: str = ""


@dataclass
class InpSection:
    name: str
    line: int
    records: list[InpRecord] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)


@dataclass
class InpDocument:
    """Sections in file order, each a list of whitespace-delimited records."""

    sections: list[InpSection] = field(default_factory=list)
    header_comments: list[str] = field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> "InpDocument":
        doc = cls()
        current: InpSection | None = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            body, _, comment = raw.partition(";")
            stripped = body.strip()
            if not stripped:
                if comment.strip():
                    target = current.comments if current else doc.header_comments
                    target.append(";" + comment)
                continue
            if stripped.startswith("["):
                if not stripped.endswith("]") or len(stripped) < 3:
                    raise InpError(f"malformed section header {stripped!r}", lineno)
                current = InpSection(stripped[1:-1].strip().upper(), lineno)
                doc.sections.append(current)
                continue
            if current is None:
                raise InpError("data before the first section header", lineno)
            current.records.append(
                InpRecord(lineno, _split_fields(stripped, lineno), comment.strip()))
        return doc

    def section(self, name: str) -> InpSection | None:
        for s in self.sections:
            if s.name == name:
                return s
        return None

    def records(self, name: str) -> list[InpRecord]:
        out = []
        for s in self.sections:
            if s.name == name:
                out.extend(s.records)
        return out


def _split_fields(text: str, lineno: int) -> list[str]:
    out = []
    for m in re.finditer(r'"([^"]*)"|(\S+)', text):
        out.append(m.group(1) if m.group(1) is not None else m.group(2))
    if text.count('"') % 2:
        raise InpError("unterminated quote", lineno)
    return out


def _num(rec: InpRecord, i: int, what: str) -> float:
    try:
        value = float(rec.fields[i])
    except IndexError:
        raise InpError(f"missing {what}", rec.line) from None
    except ValueError:
        raise InpError(f"{what} must be a number, got {rec.fields[i]!r}", rec.line) from None
    if not math.isfinite(value):
        raise InpError(f"{what} must be finite", rec.line)
    return value


def _need(rec: InpRecord, n: int, section: str) -> None:
    if len(rec.fields) < n:
        raise InpError(f"[{section}] record needs at least {n} fields, got {len(rec.fields)}",
                       rec.line)


def read_inp(text: str, *, strict: bool = True) -> tuple[Network, list[str]]:
    """Parse INP text into a network and a list of warnings.

    With `strict`, references to undefined nodes raise InpSemanticError and the
    resulting network must pass validation.  Without it, such problems are
    left for :func:`validate` to report.
    """
    doc = InpDocument.parse(text)
    notes: list[str] = []
    for c in doc.header_comments:
        m = _UNITS_RE.match(c)
        if m and m.group(1).upper() != "SI":
            raise InpError(f"unsupported unit system {m.group(1)!r}; only SI is accepted")
    for s in doc.sections:
        if s.name not in KNOWN_SECTIONS:
            notes.append(f"section {s.name} ignored")
    for rec in doc.records("OPTIONS"):
        if rec.fields[0].upper() == "FLOW_UNITS" and len(rec.fields) > 1 \
                and rec.fields[1].upper() != "CMS":
            raise InpError(f"unsupported FLOW_UNITS {rec.fields[1]}; only CMS is accepted",
                           rec.line)

    coords: dict[str, tuple[float, float]] = {}
    for rec in doc.records("COORDINATES"):
        _need(rec, 3, "COORDINATES")
        coords[rec.fields[0]] = (_num(rec, 1, "X"), _num(rec, 2, "Y"))

    patterns: dict[str, list[float]] = {}
    for rec in doc.records("PATTERNS"):
        _need(rec, 2, "PATTERNS")
        name, rest = rec.fields[0], rec.fields[1:]
        if name not in patterns:
            kind = rest[0].upper()
            if kind != "HOURLY":
                raise InpError(f"pattern {name}: only HOURLY patterns are supported", rec.line)
            patterns[name] = []
            rest = rest[1:]
        patterns[name].extend(_num(InpRecord(rec.line, rest), i, "multiplier")
                              for i in range(len(rest)))
    for name, values in patterns.items():
        if len(values) != HOURLY_VALUES:
            raise InpError(f"pattern {name} has {len(values)} multipliers, expected 24")

    loads: dict[str, tuple[float, str | None]] = {}

    def add_load(node: str, base: float, pattern: str | None, line: int) -> None:
        if pattern is not None and pattern not in patterns:
            raise InpSemanticError(f"undefined pattern {pattern!r}", line)
        old_base, old_pat = loads.get(node, (0.0, None))
        if old_pat is not None and pattern is not None and old_pat != pattern:
            raise InpSemanticError(f"node {node} has conflicting inflow patterns", line)
        loads[node] = (old_base + base, pattern if pattern is not None else old_pat)

    for rec in doc.records("DWF"):
        _need(rec, 3, "DWF")
        if rec.fields[1].upper() != "FLOW":
            notes.append(f"line {rec.line}: DWF constituent {rec.fields[1]} ignored")
            continue
        pats = [p for p in rec.fields[3:] if p]
        add_load(rec.fields[0], _num(rec, 2, "baseline"), pats[0] if pats else None, rec.line)
    for rec in doc.records("INFLOWS"):
        _need(rec, 3, "INFLOWS")
        if rec.fields[1].upper() != "FLOW":
            notes.append(f"line {rec.line}: INFLOWS constituent {rec.fields[1]} ignored")
            continue
        series = rec.fields[2]
        if series:
            raise InpError(f"time series {series!r} not supported; use a constant baseline",
                           rec.line)
        sfactor = _num(rec, 5, "scale factor") if len(rec.fields) > 5 else 1.0
        base = _num(rec, 6, "baseline") if len(rec.fields) > 6 else 0.0
        pat = rec.fields[7] if len(rec.fields) > 7 and rec.fields[7] else None
        add_load(rec.fields[0], base * sfactor, pat, rec.line)

    junctions, tanks, outfalls = [], [], []
    node_line: dict[str, int] = {}
    for rec in doc.records("JUNCTIONS"):
        _need(rec, 3, "JUNCTIONS")
        nid = rec.fields[0]
        inv = _num(rec, 1, "invert elevation")
        depth = _num(rec, 2, "max depth")
        base, pat = loads.get(nid, (0.0, None))
        rim = inv + depth
        if rec.comment.startswith(_RIM_TAG):
            try:
                rim = float(rec.comment[len(_RIM_TAG):])
            except ValueError:
                raise InpError(f"bad rim annotation {rec.comment!r}", rec.line) from None
        junctions.append(Junction(nid, inv, rim, base, pat, coords.get(nid, (0.0, 0.0))))
        node_line[nid] = rec.line
    for rec in doc.records("OUTFALLS"):
        _need(rec, 3, "OUTFALLS")
        nid = rec.fields[0]
        kind = rec.fields[2].upper()
        stage = None
        if kind == "FIXED":
            stage = _num(rec, 3, "fixed stage")
        elif kind != "FREE":
            raise InpError(f"outfall {nid}: only FREE and FIXED outfalls are supported",
                           rec.line)
        outfalls.append(Outfall(nid, _num(rec, 1, "invert elevation"),
                                coords.get(nid, (0.0, 0.0)), stage))
        node_line[nid] = rec.line
    for rec in doc.records("STORAGE"):
        _need(rec, 7, "STORAGE")
        nid = rec.fields[0]
        if rec.fields[4].upper() != "FUNCTIONAL":
            raise InpError(f"storage {nid}: only FUNCTIONAL storage curves are supported",
                           rec.line)
        a, b, c = _num(rec, 5, "coefficient"), _num(rec, 6, "exponent"), \
            (_num(rec, 7, "constant") if len(rec.fields) > 7 else 0.0)
        if a != 0.0 and b != 0.0:
            raise InpError(f"storage {nid}: surface area must be constant (use 0 0 <area>)",
                           rec.line)
        area = c + (a if b == 0.0 else 0.0)
        base, pat = loads.get(nid, (0.0, None))
        tanks.append(StorageTank(nid, _num(rec, 1, "invert elevation"),
                                 _num(rec, 2, "max depth"), area,
                                 coords.get(nid, (0.0, 0.0)), base, pat))
        node_line[nid] = rec.line

    for nid, (base, _) in loads.items():
        if nid not in node_line:
            if strict:
                raise InpSemanticError(f"inflow assigned to undefined node {nid!r}")
        elif nid in {o.id for o in outfalls} and base:
            raise InpSemanticError(f"outfall {nid} cannot receive a dry-weather load")

    xsections: dict[str, tuple[float, int]] = {}
    for rec in doc.records("XSECTIONS"):
        _need(rec, 3, "XSECTIONS")
        shape = rec.fields[1].upper()
        if shape != "CIRCULAR":
            raise InpError(f"link {rec.fields[0]}: shape {shape} not supported "
                           f"(only CIRCULAR)", rec.line)
        xsections[rec.fields[0]] = (_num(rec, 2, "diameter"), rec.line)

    def check_node(nid: str, link: str, line: int) -> None:
        if strict and nid not in node_line:
            raise InpSemanticError(f"link {link} references undefined node {nid!r}", line)

    conduits, pumps = [], []
    for rec in doc.records("CONDUITS"):
        _need(rec, 5, "CONDUITS")
        cid, a, b = rec.fields[:3]
        check_node(a, cid, rec.line)
        check_node(b, cid, rec.line)
        if cid not in xsections:
            raise InpSemanticError(f"conduit {cid} has no [XSECTIONS] entry", rec.line)
        off_up = _num(rec, 5, "inlet offset") if len(rec.fields) > 5 else 0.0
        off_dn = _num(rec, 6, "outlet offset") if len(rec.fields) > 6 else 0.0
        conduits.append(Conduit(cid, a, b, _num(rec, 3, "length"), _num(rec, 4, "roughness"),
                                xsections[cid][0], off_up, off_dn))
    for rec in doc.records("PUMPS"):
        _need(rec, 7, "PUMPS")
        pid, a, b = rec.fields[:3]
        check_node(a, pid, rec.line)
        check_node(b, pid, rec.line)
        pumps.append(Pump(pid, a, b, _num(rec, 3, "rated flow"), _num(rec, 5, "startup depth"),
                          _num(rec, 6, "shutoff depth")))
    link_ids = {c.id for c in conduits} | {p.id for p in pumps}
    for lid, (_, line) in xsections.items():
        if lid not in link_ids:
            raise InpSemanticError(f"[XSECTIONS] entry for undefined link {lid!r}", line)

    network = Network(junctions=junctions, tanks=tanks, outfalls=outfalls, conduits=conduits,
                      pumps=pumps, patterns={k: tuple(v) for k, v in patterns.items()})
    if strict:
        report = validate(network)
        if not report.ok:
            raise InpSemanticError("invalid network:\n" + report.format())
    return network, notes


def parse_inp(text: str) -> Network:
    """Strictly parse INP text; ignored sections are reported as InpWarning."""
    network, notes = read_inp(text)
    for note in notes:
        warnings.warn(note, InpWarning, stacklevel=2)
    return network


# --- writing ---------------------------------------------------------------------


def _f(x: float) -> str:
    return repr(float(x))


_RIM_TAG = "rim="


def _depth_literal(base: float, top: float) -> str:
    """Max depth for a junction, annotated with the exact rim when base + d cannot hit it.

    Floating-point addition does not reach every double, so a few (invert, rim) pairs
    have no exact depth.  Other INP readers ignore the trailing comment.
    """
    d = top - base
    for _ in range(8):
        s = repr(d)
        got = base + float(s)
        if got == top:
            return s
        d = math.nextafter(d, math.inf if got < top else -math.inf)
    return f"{_f(top - base)} 0 0 0 ;{_RIM_TAG}{_f(top)}"


def write_inp(network: Network, title: str | None = None) -> str:
    lines = [";units SI"]
    if title:
        lines += ["[TITLE]", title, ""]
    lines += ["[OPTIONS]", "FLOW_UNITS CMS", ""]

    lines.append("[JUNCTIONS]")
    lines.append(";Name Elevation MaxDepth InitDepth SurDepth Aponded")
    for j in network.junctions:
        depth = _depth_literal(j.invert_elev, j.rim_elev)
        tail = "" if ";" in depth else " 0 0 0"
        lines.append(f"{j.id} {_f(j.invert_elev)} {depth}{tail}")
    lines += ["", "[OUTFALLS]", ";Name Elevation Type Stage"]
    for o in network.outfalls:
        kind = "FREE" if o.fixed_stage is None else f"FIXED {_f(o.fixed_stage)}"
        lines.append(f"{o.id} {_f(o.invert_elev)} {kind}")
    lines += ["", "[STORAGE]", ";Name Elevation MaxDepth InitDepth Shape A B Area"]
    for t in network.tanks:
        lines.append(f"{t.id} {_f(t.invert_elev)} {_f(t.max_depth)} 0 FUNCTIONAL 0 0 "
                     f"{_f(t.surface_area)}")
    lines += ["", "[CONDUITS]", ";Name From To Length Roughness InOffset OutOffset"]
    for c in network.conduits:
        lines.append(f"{c.id} {c.from_node} {c.to_node} {_f(c.length)} {_f(c.manning_n)} "
                     f"{_f(c.offset_up)} {_f(c.offset_dn)}")
    lines += ["", "[PUMPS]", ";Name From To RatedFlow Status Startup Shutoff"]
    for p in network.pumps:
        lines.append(f"{p.id} {p.from_node} {p.to_node} {_f(p.rated_flow)} ON "
                     f"{_f(p.start_depth)} {_f(p.stop_depth)}")
    lines += ["", "[XSECTIONS]", ";Link Shape Diameter"]
    for c in network.conduits:
        lines.append(f"{c.id} CIRCULAR {_f(c.diameter)} 0 0 0 1")
    lines += ["", "[DWF]", ";Node Constituent Baseline Pattern"]
    for n in (*network.junctions, *network.tanks):
        if n.base_inflow or n.pattern_id:
            pat = f" {n.pattern_id}" if n.pattern_id else ""
            lines.append(f"{n.id} FLOW {_f(n.base_inflow)}{pat}")
    lines += ["", "[PATTERNS]"]
    for name, values in network.patterns.items():
        vals = [_f(v) for v in values]
        lines.append(f"{name} HOURLY " + " ".join(vals[:6]))
        for i in range(6, len(vals), 6):
            lines.append(f"{name} " + " ".join(vals[i:i + 6]))
    lines += ["", "[COORDINATES]", ";Node X Y"]
    for n in network.nodes.values():
        lines.append(f"{n.id} {_f(n.coord[0])} {_f(n.coord[1])}")
    lines.append("")
    return "\n".join(lines)


def write_geojson(network: Network, results: Mapping[str, object], model_name: str) -> str:
    """FeatureCollection of node points with PM estimate properties.

    `results` maps node id to an object with `mean`, `delta` and `n`
    attributes (a NodePmEstimate).  Features follow network node order.
    """
    unknown = [nid for nid in results if nid not in network.nodes]
    if unknown:
        raise KeyError(f"results reference unknown nodes: {unknown[:5]}")
    features = []
    for nid, node in network.nodes.items():
        est = results.get(nid)
        if est is None:
            continue
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [float(node.coord[0]),
                                                          float(node.coord[1])]},
            "properties": {
                "node_id": nid,
                "pm_mean": float(est.mean),
                "delta_pm": float(est.delta),
                "n_sims": int(est.n),
                "model_name": model_name,
            },
        })
    return json.dumps({"type": "FeatureCollection", "features": features}, indent=1) + "\n"


RESULT_CSV_HEADER = ("node_id", "model", "pm_mean", "delta_pm", "n_sims")


def write_results_csv(results: Mapping[str, object], model_name: str,
                      order: Iterable[str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_CSV_HEADER)
    for nid in (order if order is not None else results):
        est = results[nid]
        w.writerow([nid, model_name, repr(float(est.mean)), repr(float(est.delta)), int(est.n)])
    return buf.getvalue()
