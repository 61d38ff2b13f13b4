#!/usr/bin/env python3
"""Convert an old-format OpenCV Haar cascade XML to the new <cascade> schema.

Usage: convert_haar_cascade.py OLD_XML NEW_XML

Only stump-based cascades are supported (every tree must consist of a single
node). The upstream license comment block is carried over verbatim.
"""

from __future__ import annotations

import re
import sys
import xml.etree.ElementTree as ET


def fmt(v: float) -> str:
    return f"{v:.10e}"


def main(src_path: str, dst_path: str) -> None:
    raw = open(src_path, encoding="utf-8").read()
    m = re.search(r"<!--(.*?)-->", raw, re.S)
    license_comment = f"<!--{m.group(1)}-->\n" if m else ""

    root = ET.fromstring(raw)
    old = None
    for child in root:
        if child.get("type_id") == "opencv-haar-classifier":
            old = child
            break
    if old is None:
        raise SystemExit("no opencv-haar-classifier element found")

    win_w, win_h = (int(v) for v in old.find("size").text.split())
    stages_el = old.find("stages")

    stages = []
    features = []
    max_weak = 0
    for st in stages_el.findall("_"):
        threshold = float(st.find("stage_threshold").text)
        stumps = []
        for tree in st.find("trees").findall("_"):
            nodes = tree.findall("_")
            if len(nodes) != 1:
                raise SystemExit("non-stump tree encountered; unsupported")
            node = nodes[0]
            if node.find("left_node") is not None or node.find("right_node") is not None:
                raise SystemExit("non-stump tree encountered; unsupported")
            feat = node.find("feature")
            if int(feat.find("tilted").text) != 0:
                raise SystemExit("tilted feature encountered; unsupported")
            rects = [r.text.split() for r in feat.find("rects").findall("_")]
            feat_idx = len(features)
            features.append(rects)
            stumps.append(
                (
                    feat_idx,
                    float(node.find("threshold").text),
                    float(node.find("left_val").text),
                    float(node.find("right_val").text),
                )
            )
        max_weak = max(max_weak, len(stumps))
        stages.append((threshold, stumps))

    out = ["<?xml version=\"1.0\"?>\n", license_comment, "<opencv_storage>\n"]
    out.append("<cascade type_id=\"opencv-cascade-classifier\">\n")
    out.append("  <stageType>BOOST</stageType>\n  <featureType>HAAR</featureType>\n")
    out.append(f"  <height>{win_h}</height>\n  <width>{win_w}</width>\n")
    out.append(
        "  <stageParams>\n    <boostType>DAB</boostType>\n"
        "    <minHitRate>0.</minHitRate>\n    <maxFalseAlarm>0.</maxFalseAlarm>\n"
        "    <weightTrimRate>0.</weightTrimRate>\n    <maxDepth>1</maxDepth>\n"
        f"    <maxWeakCount>{max_weak}</maxWeakCount></stageParams>\n"
    )
    out.append(
        "  <featureParams>\n    <maxCatCount>0</maxCatCount>\n"
        "    <featSize>1</featSize>\n    <mode>BASIC</mode></featureParams>\n"
    )
    out.append(f"  <stageNum>{len(stages)}</stageNum>\n  <stages>\n")
    for threshold, stumps in stages:
        out.append("    <_>\n")
        out.append(f"      <maxWeakCount>{len(stumps)}</maxWeakCount>\n")
        out.append(f"      <stageThreshold>{fmt(threshold)}</stageThreshold>\n")
        out.append("      <weakClassifiers>\n")
        for feat_idx, thr, left, right in stumps:
            out.append("        <_>\n")
            out.append(f"          <internalNodes>\n            0 -1 {feat_idx} {fmt(thr)}</internalNodes>\n")
            out.append(f"          <leafValues>\n            {fmt(left)} {fmt(right)}</leafValues></_>\n")
        out.append("      </weakClassifiers></_>\n")
    out.append("  </stages>\n  <features>\n")
    for rects in features:
        out.append("    <_>\n      <rects>\n")
        for r in rects:
            x, y, w, h = r[:4]
            weight = float(r[4])
            out.append(f"        <_>\n          {x} {y} {w} {h} {fmt(weight)}</_>\n")
        out.append("      </rects>\n      <tilted>0</tilted></_>\n")
    out.append("  </features></cascade>\n</opencv_storage>\n")

    with open(dst_path, "w", encoding="utf-8") as fh:
        fh.write("".join(out))
    print(f"wrote {dst_path}: {len(stages)} stages, {len(features)} features")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
