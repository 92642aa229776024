"""Keypoint documents: the CLI's JSON output format (schema 1) and point-set comparison."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

SCHEMA_VERSION = 1


@dataclass
class Keypoint:
    x: int
    y: int
    filter_size: int
    scale: float
    response: float
    laplacian: int
    orientation: float | None = None
    descriptor: list[float] | None = None

    def to_dict(self) -> dict:
        d = {"x": self.x, "y": self.y, "filter_size": self.filter_size, "scale": self.scale,
             "response": self.response, "laplacian": self.laplacian}
        if self.orientation is not None:
            d["orientation"] = self.orientation
        if self.descriptor is not None:
            d["descriptor"] = list(self.descriptor)
        return d

    @classmethod
    def from_point(cls, p, orientation=None, descriptor=None) -> "Keypoint":
        desc = None if descriptor is None else [float(v) for v in descriptor]
        return cls(p.x, p.y, p.filter_size, p.scale, p.response, p.laplacian, orientation, desc)


@dataclass
class KeypointDocument:
    image: str
    params: dict
    keypoints: list[Keypoint] = field(default_factory=list)
    platform: str | None = None
    timing: dict | None = None

    def encode(self) -> str:
        d = {"schema": SCHEMA_VERSION, "image": self.image}
        if self.platform is not None:
            d["platform"] = self.platform
        d["params"] = self.params
        d["keypoints"] = [k.to_dict() for k in self.keypoints]
        if self.timing is not None:
            d["timing"] = self.timing
        return json.dumps(d, indent=1) + "\n"

    @classmethod
    def decode(cls, text: str) -> "KeypointDocument":
        d = json.loads(text)
        if not isinstance(d, dict) or d.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported keypoint document schema {d.get('schema') if isinstance(d, dict) else d!r}")
        kps = [Keypoint(k["x"], k["y"], k["filter_size"], k["scale"], k["response"], k["laplacian"],
                        k.get("orientation"), k.get("descriptor")) for k in d["keypoints"]]
        return cls(d["image"], d["params"], kps, d.get("platform"), d.get("timing"))


def match_points(a, b, tol_pos: float) -> list[tuple[int, int]]:
    """Greedy one-to-one matching: closest same-filter-size pairs first, within tol_pos pixels."""
    pairs = []
    for i, p in enumerate(a):
        for j, q in enumerate(b):
            if p.filter_size != q.filter_size:
                continue
            d = math.hypot(p.x - q.x, p.y - q.y)
            if d <= tol_pos:
                pairs.append((d, i, j))
    pairs.sort()
    used_a, used_b, out = set(), set(), []
    for _, i, j in pairs:
        if i not in used_a and j not in used_b:
            used_a.add(i)
            used_b.add(j)
            out.append((i, j))
    return out


def overlap(a, b, tol_pos: float) -> tuple[float, float]:
    """(fraction of a matched in b, fraction of b matched in a). Two empty sets overlap fully."""
    m = len(match_points(a, b, tol_pos))

    def frac(n, other):
        if n == 0:
            return 1.0 if other == 0 else 0.0
        return m / n

    return frac(len(a), len(b)), frac(len(b), len(a))
