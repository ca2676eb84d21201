"""Standard scene families used by the experiments and acceptance tests.

street
    MBS (M=100, 3.5 GHz) at the origin looking north, SBS (M=20, 28 GHz)
    across a 10 m wide east-west street looking south, two random scatterers
    within 50 m of the user. LoS on both links.
mobility
    Vehicles on the same kind of street moving at up to 4 m/slot between
    an MBS (M=64) and a roadside unit (M=16), with three fixed roadside
    scatterers.
grouping
    The street with a 32-element SBS. Users gather in four hotspots of
    5 m radius, so users in one hotspot share a beam while different
    hotspots are separable in angle.
"""
from __future__ import annotations

import math

from .scene import ArrayGeometry, SPEED_OF_LIGHT, Scatterer, SceneConfig, Site

F_MBS = 3.5e9
F_SBS = 28e9


def street(sbs_elements=20) -> SceneConfig:
    sites = (
        Site("mbs", (0.0, 0.0), ArrayGeometry(100, 0.5, math.pi / 2), SPEED_OF_LIGHT / F_MBS),
        Site("sbs", (100.0, 300.0), ArrayGeometry(sbs_elements, 0.5, -math.pi / 2), SPEED_OF_LIGHT / F_SBS),
    )
    return SceneConfig(
        sites=sites,
        user_region=((-150.0, 350.0), (195.0, 205.0)),
        num_users=1,
        num_scatterers=2,
        scatterer_radius=50.0,
        reflectivity_range=(0.1, 0.5),
    )


def mobility() -> SceneConfig:
    sites = (
        Site("mbs", (0.0, 0.0), ArrayGeometry(64, 0.5, math.pi / 2), SPEED_OF_LIGHT / F_MBS),
        Site("rsu", (100.0, 230.0), ArrayGeometry(16, 0.5, -math.pi / 2), SPEED_OF_LIGHT / F_SBS),
    )
    return SceneConfig(
        sites=sites,
        user_region=((-50.0, 250.0), (198.0, 202.0)),
        num_users=1,
        velocity_region=((-4.0, 4.0), (0.0, 0.0)),
        fixed_scatterers=(
            Scatterer((40.0, 215.0), 0.6),
            Scatterer((160.0, 185.0), 0.5j),
            Scatterer((220.0, 215.0), -0.6),
        ),
    )


def grouping() -> SceneConfig:
    base = street(sbs_elements=32)
    return SceneConfig(
        sites=base.sites,
        user_region=base.user_region,
        num_users=1,
        hotspots=4,
        hotspot_radius=5.0,
        num_scatterers=1,
        scatterer_radius=50.0,
        reflectivity_range=(0.05, 0.3),
    )


FAMILIES = {"street": street, "mobility": mobility, "grouping": grouping}
