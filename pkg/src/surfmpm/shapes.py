"""Geometric primitives with signed distance (negative inside)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _rows(x):
    return np.atleast_2d(np.asarray(x, dtype=float))


@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, float)
        self.hi = np.asarray(self.hi, float)

    def signed_distance(self, x):
        x = _rows(x)
        c = 0.5 * (self.lo + self.hi)
        h = 0.5 * (self.hi - self.lo)
        q = np.abs(x - c) - h
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside

    def bounds(self):
        return self.lo, self.hi

    def volume(self):
        return float(np.prod(self.hi - self.lo))


@dataclass
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, float)

    def signed_distance(self, x):
        return np.linalg.norm(_rows(x) - self.center, axis=1) - self.radius

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def volume(self):
        d = self.center.size
        return np.pi * self.radius**2 if d == 2 else 4.0 / 3.0 * np.pi * self.radius**3


@dataclass
class Ellipsoid:
    """Axis-aligned ellipse/ellipsoid. Distance is the usual first-order estimate."""

    center: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, float)
        self.radii = np.asarray(self.radii, float)

    def signed_distance(self, x):
        q = (_rows(x) - self.center) / self.radii
        k0 = np.linalg.norm(q, axis=1)
        k1 = np.linalg.norm(q / self.radii, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            sd = k0 * (k0 - 1.0) / k1
        return np.where(k1 > 0, sd, -np.min(self.radii))

    def bounds(self):
        return self.center - self.radii, self.center + self.radii

    def volume(self):
        r = self.radii
        return np.pi * np.prod(r) if r.size == 2 else 4.0 / 3.0 * np.pi * np.prod(r)


@dataclass
class HalfSpace:
    """Region ``(x - point) . normal <= 0``; normal points out of the region."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.point = np.asarray(self.point, float)
        n = np.asarray(self.normal, float)
        self.normal = n / np.linalg.norm(n)

    def signed_distance(self, x):
        return (_rows(x) - self.point) @ self.normal

    def bounds(self):
        raise ValueError("half-space is unbounded")


@dataclass
class Intersection:
    """Points inside every member shape."""

    shapes: list

    def signed_distance(self, x):
        return np.max(np.stack([s.signed_distance(x) for s in self.shapes]), axis=0)

    def bounds(self):
        boxes = [s.bounds() for s in self.shapes if not isinstance(s, HalfSpace)]
        if not boxes:
            raise ValueError("intersection of half-spaces is unbounded")
        lo = np.max([b[0] for b in boxes], axis=0)
        hi = np.min([b[1] for b in boxes], axis=0)
        for s in self.shapes:
            if isinstance(s, HalfSpace):
                k = int(np.argmax(np.abs(s.normal)))
                if np.isclose(abs(s.normal[k]), 1.0):
                    if s.normal[k] > 0:
                        hi[k] = min(hi[k], s.point[k])
                    else:
                        lo[k] = max(lo[k], s.point[k])
        return lo, hi


def gradient(shape, x, h=1e-6):
    """Unit outward normal of a shape's level set by central differences."""
    if isinstance(shape, HalfSpace):
        return np.broadcast_to(shape.normal, _rows(x).shape).copy()
    x = _rows(x)
    g = np.empty_like(x)
    for k in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[k] = h
        g[:, k] = (shape.signed_distance(x + e) - shape.signed_distance(x - e)) / (2 * h)
    n = np.linalg.norm(g, axis=1, keepdims=True)
    return g / np.where(n > 0, n, 1.0)


def make_shape(spec: dict, dim: int):
    """Build a primitive from a plain dict (scene-file form)."""
    kind = spec["type"]
    if kind == "box":
        return Box(spec["lo"], spec["hi"])
    if kind in ("sphere", "ball", "circle"):
        return Ball(spec["center"], spec["radius"])
    if kind in ("ellipse", "ellipsoid"):
        return Ellipsoid(spec["center"], spec["radii"])
    if kind == "half_space":
        return HalfSpace(spec["point"], spec["normal"])
    if kind == "intersection":
        return Intersection([make_shape(s, dim) for s in spec["shapes"]])
    raise ValueError(f"unknown shape type {kind!r}")
