"""OpenDRIVE 1.6 subset: line-geometry plan views, linear elevation
records, one lane section per road. The writer emits byte-stable XML with
17-significant-digit attributes so equal documents serialize identically
and parse back without loss; the parser accepts exactly the exporter's
subset and rejects everything else by name.
"""

import math
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np

from .errors import (
    GeometryError,
    XodrContinuityError,
    XodrDocumentError,
    XodrMissingAttributeError,
    XodrParseError,
    XodrUnsupportedElementError,
)

S_TOL = 1e-9
ENDPOINT_TOL = 1e-6
DEFAULT_LANE_WIDTH = 3.5

_UNSUPPORTED_GEOMETRY = ("arc", "spiral", "paramPoly3", "poly3")


@dataclass
class PlanSegment:
    s: float
    x: float
    y: float
    hdg: float
    length: float

    def end_point(self):
        return (self.x + math.cos(self.hdg) * self.length,
                self.y + math.sin(self.hdg) * self.length)


@dataclass
class ElevationRecord:
    s: float
    a: float
    b: float
    c: float = 0.0
    d: float = 0.0

    def at(self, s):
        ds = s - self.s
        return self.a + self.b * ds + self.c * ds ** 2 + self.d * ds ** 3


@dataclass
class XodrRoad:
    id: str
    length: float
    plan_view: list
    elevation: list
    lane_width: float = DEFAULT_LANE_WIDTH


@dataclass
class OpenDriveDocument:
    name: str
    roads: list
    geo_reference: str = ""
    vendor: str = ""

    def validate(self):
        if not self.roads:
            raise XodrDocumentError("document has no roads")
        ids = [r.id for r in self.roads]
        if len(set(ids)) != len(ids):
            raise XodrDocumentError("road ids are not unique")
        for road in self.roads:
            if road.length <= 0:
                raise XodrDocumentError(f"road {road.id}: non-positive length")
            if not road.plan_view:
                raise XodrDocumentError(f"road {road.id}: empty plan view")
            s = 0.0
            for i, seg in enumerate(road.plan_view):
                if abs(seg.s - s) > S_TOL:
                    raise XodrDocumentError(
                        f"road {road.id}: segment {i} starts at s={seg.s}, expected {s}"
                    )
                if i > 0:
                    ex, ey = road.plan_view[i - 1].end_point()
                    if math.hypot(seg.x - ex, seg.y - ey) > ENDPOINT_TOL:
                        raise XodrDocumentError(
                            f"road {road.id}: segment {i} start does not meet "
                            f"segment {i - 1} end"
                        )
                s += seg.length
            if abs(s - road.length) > S_TOL:
                raise XodrDocumentError(
                    f"road {road.id}: segment lengths sum to {s}, length attribute {road.length}"
                )
            se = 0.0
            for i, rec in enumerate(road.elevation):
                if abs(rec.s - se) > S_TOL:
                    raise XodrDocumentError(
                        f"road {road.id}: elevation record {i} starts at s={rec.s}, expected {se}"
                    )
                if i + 1 < len(road.elevation):
                    se = road.elevation[i + 1].s
        return self


def export_opendrive(roads3d, name="scenario", ids=None, lane_width=DEFAULT_LANE_WIDTH,
                     geo_reference="", vendor=""):
    """Build a document from 3D polylines.

    roads3d: list of (k, 3) arrays in meters. Consecutive point pairs
    become line segments; zero-length segments are skipped with a warning;
    a road with no usable segment is an error. Elevation becomes linear
    records (a = z at segment start, b = rise over the segment).
    """
    docs = []
    for idx, pts in enumerate(roads3d):
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise GeometryError(f"road {idx}: expected (k, 3) points with k >= 2")
        if not np.all(np.isfinite(pts)):
            raise GeometryError(f"road {idx}: non-finite coordinates")
        segs = []
        elevs = []
        s = 0.0
        for i in range(len(pts) - 1):
            dx = pts[i + 1, 0] - pts[i, 0]
            dy = pts[i + 1, 1] - pts[i, 1]
            length = math.hypot(dx, dy)
            if length == 0.0:
                warnings.warn(f"road {idx}: skipping zero-length segment at point {i}")
                continue
            segs.append(PlanSegment(s=s, x=float(pts[i, 0]), y=float(pts[i, 1]),
                                    hdg=math.atan2(dy, dx), length=length))
            elevs.append(ElevationRecord(s=s, a=float(pts[i, 2]),
                                         b=(float(pts[i + 1, 2]) - float(pts[i, 2])) / length))
            s += length
        if not segs:
            raise GeometryError(f"road {idx}: all segments degenerate (all-zero road?)")
        rid = str(ids[idx]) if ids is not None else str(idx + 1)
        docs.append(XodrRoad(id=rid, length=s, plan_view=segs, elevation=elevs,
                             lane_width=lane_width))
    return OpenDriveDocument(name=name, roads=docs, geo_reference=geo_reference,
                             vendor=vendor).validate()


def _fmt(v):
    return f"{float(v):.17g}"


def _esc(text):
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def serialize(doc):
    """Deterministic UTF-8 XML text for a valid document."""
    doc.validate()
    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    out.append("<OpenDRIVE>")
    header_attrs = f'revMajor="1" revMinor="6" name="{_esc(doc.name)}"'
    if doc.vendor:
        header_attrs += f' vendor="{_esc(doc.vendor)}"'
    if doc.geo_reference:
        out.append(f"  <header {header_attrs}>")
        out.append(f"    <geoReference>{_esc(doc.geo_reference)}</geoReference>")
        out.append("  </header>")
    else:
        out.append(f"  <header {header_attrs}/>")
    for road in doc.roads:
        out.append(f'  <road id="{_esc(road.id)}" length="{_fmt(road.length)}" junction="-1">')
        out.append("    <planView>")
        for seg in road.plan_view:
            out.append(
                f'      <geometry s="{_fmt(seg.s)}" x="{_fmt(seg.x)}" y="{_fmt(seg.y)}" '
                f'hdg="{_fmt(seg.hdg)}" length="{_fmt(seg.length)}">'
            )
            out.append("        <line/>")
            out.append("      </geometry>")
        out.append("    </planView>")
        out.append("    <elevationProfile>")
        for rec in road.elevation:
            out.append(
                f'      <elevation s="{_fmt(rec.s)}" a="{_fmt(rec.a)}" b="{_fmt(rec.b)}" '
                f'c="{_fmt(rec.c)}" d="{_fmt(rec.d)}"/>'
            )
        out.append("    </elevationProfile>")
        out.append("    <lanes>")
        out.append('      <laneSection s="0">')
        for side, lane_id in (("left", 1), ("center", 0), ("right", -1)):
            out.append(f"        <{side}>")
            lane_type = "none" if lane_id == 0 else "driving"
            if lane_id == 0:
                out.append(f'          <lane id="0" type="none" level="false"/>')
            else:
                out.append(f'          <lane id="{lane_id}" type="{lane_type}" level="false">')
                out.append(
                    f'            <width sOffset="0" a="{_fmt(road.lane_width)}" '
                    f'b="0" c="0" d="0"/>'
                )
                out.append("          </lane>")
            out.append(f"        </{side}>")
        out.append("      </laneSection>")
        out.append("    </lanes>")
        out.append("  </road>")
    out.append("</OpenDRIVE>")
    return "\n".join(out) + "\n"


def _require(el, attr, context):
    val = el.get(attr)
    if val is None:
        raise XodrMissingAttributeError(f"{context}: missing attribute '{attr}'")
    return val


def parse_opendrive(text):
    """Parse the exporter's subset back into a document."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise XodrParseError(f"not well-formed XML: {exc}") from exc
    if root.tag != "OpenDRIVE":
        raise XodrParseError(f"root element is '{root.tag}', expected 'OpenDRIVE'")

    for junk in root.iter("junction"):
        raise XodrUnsupportedElementError("junction", "junction elements are not supported")

    header = root.find("header")
    if header is None:
        raise XodrParseError("document has no header")
    name = header.get("name", "")
    vendor = header.get("vendor", "")
    geo_el = header.find("geoReference")
    geo = geo_el.text if geo_el is not None and geo_el.text else ""

    roads = []
    for road_el in root.findall("road"):
        rid = _require(road_el, "id", "road")
        context = f"road {rid}"
        length = float(_require(road_el, "length", context))
        plan = road_el.find("planView")
        if plan is None:
            raise XodrParseError(f"{context}: missing planView")
        segs = []
        expected_s = 0.0
        for i, geom in enumerate(plan.findall("geometry")):
            gctx = f"{context} geometry {i}"
            children = [c for c in geom if isinstance(c.tag, str)]
            for child in children:
                if child.tag in _UNSUPPORTED_GEOMETRY:
                    raise XodrUnsupportedElementError(child.tag, gctx)
            if len(children) != 1 or children[0].tag != "line":
                raise XodrUnsupportedElementError(
                    children[0].tag if children else "(none)", gctx
                )
            seg = PlanSegment(
                s=float(_require(geom, "s", gctx)),
                x=float(_require(geom, "x", gctx)),
                y=float(_require(geom, "y", gctx)),
                hdg=float(_require(geom, "hdg", gctx)),
                length=float(_require(geom, "length", gctx)),
            )
            if abs(seg.s - expected_s) > S_TOL:
                raise XodrContinuityError(
                    f"{gctx}: s={seg.s} leaves a gap (expected {expected_s})"
                )
            if segs:
                ex, ey = segs[-1].end_point()
                if math.hypot(seg.x - ex, seg.y - ey) > ENDPOINT_TOL:
                    raise XodrContinuityError(f"{gctx}: start point does not meet previous end")
            segs.append(seg)
            expected_s += seg.length
        if not segs:
            raise XodrParseError(f"{context}: empty planView")
        if abs(expected_s - length) > max(S_TOL, 1e-9 * length):
            raise XodrContinuityError(
                f"{context}: segment lengths sum to {expected_s}, length attribute {length}"
            )

        elevs = []
        elev_el = road_el.find("elevationProfile")
        if elev_el is not None:
            for i, rec in enumerate(elev_el.findall("elevation")):
                ectx = f"{context} elevation {i}"
                elevs.append(ElevationRecord(
                    s=float(_require(rec, "s", ectx)),
                    a=float(_require(rec, "a", ectx)),
                    b=float(_require(rec, "b", ectx)),
                    c=float(rec.get("c", 0.0)),
                    d=float(rec.get("d", 0.0)),
                ))

        lane_width = DEFAULT_LANE_WIDTH
        lanes_el = road_el.find("lanes")
        if lanes_el is not None:
            sections = lanes_el.findall("laneSection")
            if len(sections) > 1:
                raise XodrUnsupportedElementError("laneSection", f"{context}: multiple sections")
            if sections:
                width_el = sections[0].find(".//width")
                if width_el is not None:
                    lane_width = float(_require(width_el, "a", f"{context} lane width"))

        roads.append(XodrRoad(id=rid, length=length, plan_view=segs,
                              elevation=elevs, lane_width=lane_width))
    doc = OpenDriveDocument(name=name, roads=roads, geo_reference=geo, vendor=vendor)
    try:
        return doc.validate()
    except XodrDocumentError as exc:
        raise XodrContinuityError(str(exc)) from exc


def road_points(road):
    """Reconstruct the (k, 3) polyline of a parsed road."""
    pts = [(road.plan_view[0].x, road.plan_view[0].y)]
    for seg in road.plan_view:
        pts.append(seg.end_point())
    xy = np.asarray(pts)
    s = np.concatenate([[0.0], np.cumsum([seg.length for seg in road.plan_view])])
    z = np.zeros(len(s))
    if road.elevation:
        starts = [rec.s for rec in road.elevation]
        for i, sv in enumerate(s):
            j = int(np.searchsorted(starts, sv, side="right")) - 1
            j = max(j, 0)
            z[i] = road.elevation[j].at(sv)
    return np.concatenate([xy, z[:, None]], axis=1)


def max_gradient(road):
    """Largest |dz/ds| over a road's elevation records."""
    return max((abs(rec.b) for rec in road.elevation), default=0.0)
