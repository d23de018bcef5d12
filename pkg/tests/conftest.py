"""Shared fixtures: canonical sources, screens and a synthetic photo target."""

from __future__ import annotations

import numpy as np
import pytest

from causticdesign import ProblemSpec, TargetScreen, build_source_density, grid_target
from causticdesign.measures import SourceSpec

SCREEN_DOWN = TargetScreen(distance=2.0, width=0.6, height=0.6, axis=(0, 0, -1))
SCREEN_UP = TargetScreen(distance=2.0, width=0.6, height=0.6, axis=(0, 0, 1))

ALL_VARIANTS = [
    "cs-mirror-convex",
    "cs-mirror-concave",
    "cs-lens-convex",
    "cs-lens-concave",
    "ps-mirror-intersection",
    "ps-mirror-union",
    "ps-lens-intersection",
    "ps-lens-union",
]


def screen_for(spec: ProblemSpec) -> TargetScreen:
    return SCREEN_DOWN if spec.component == "mirror" else SCREEN_UP


def source_for(spec: ProblemSpec, resolution: int = 12, level: int = 4):
    if spec.source_kind == "collimated":
        return build_source_density(SourceSpec(kind="uniform_rect", resolution=resolution))
    half = np.pi / 6 if spec.component == "mirror" else np.deg2rad(25.0)
    return build_source_density(SourceSpec(kind="uniform_cap", cap_half_angle=half,
                                           cap_level=level))


def targets_for(spec: ProblemSpec, shape=(8, 8), kind="far_field"):
    return grid_target(shape, screen_for(spec), kind=kind)


def synthetic_photo(n: int) -> np.ndarray:
    """Deterministic smooth grayscale test image (blobs + gradient + dark band)."""
    yy, xx = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n), indexing="ij")
    img = 0.25 + 0.5 * xx
    blobs = [(0.3, 0.35, 0.12, 0.9), (0.65, 0.7, 0.18, 0.7), (0.75, 0.25, 0.08, 0.5)]
    for cy, cx, s, a in blobs:
        img += a * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    img *= 1.0 - 0.85 * np.exp(-((yy - 0.5) ** 2) / (2 * 0.03 ** 2))
    return img / img.max()


@pytest.fixture(scope="session")
def rect_source():
    return build_source_density(SourceSpec(kind="uniform_rect", resolution=12))


@pytest.fixture(scope="session")
def cap_source():
    return build_source_density(SourceSpec(kind="uniform_cap",
                                           cap_half_angle=np.pi / 6, cap_level=4))
