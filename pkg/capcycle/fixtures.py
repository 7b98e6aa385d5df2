"""Component library and reference assemblies.

The arm follows the desk use case item list (pan-tilt unit, lower pole, joint
motor, upper pole, end effector); the cart is a four-wheel skid-steer base and
the shopping cart mounts the arm on it.  Builders are idempotent with respect
to the shared library models, so several robots can live in one graph.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable

from capcycle.errors import DuplicateName
from capcycle.graphstore import Domain, EntityKind, PropertyGraph

logger = logging.getLogger(__name__)

MECH_LINK = "MechLink"

ARM_REACH_M = 0.4

# model name -> (domain, interfaces, kinematic properties)
LIBRARY: dict[str, tuple[Domain, tuple[str, ...], dict[str, object]]] = {
    "PanTiltUnit": (Domain.ELECTRONICS, ("proximal", "distal"), {
        "axis": "0,0,1;0,1,0",
        "limit_lo_rad": f"{-math.pi!r};-2.0",
        "limit_hi_rad": f"{math.pi!r};2.0",
        "vel_limit_rad_s": "3.0",
    }),
    "LowerPole": (Domain.MECHANICS, ("proximal", "distal"), {"length_m": "0.2"}),
    "JointMotor": (Domain.ELECTRONICS, ("proximal", "distal"), {
        "axis": "0,1,0",
        "limit_lo_rad": "-2.6",
        "limit_hi_rad": "2.6",
        "vel_limit_rad_s": "3.0",
    }),
    "UpperPole": (Domain.MECHANICS, ("proximal", "distal"), {"length_m": "0.15"}),
    "EndEffector": (Domain.MECHANICS, ("proximal",), {"length_m": "0.05", "end_effector": "true"}),
    "CartChassis": (Domain.MECHANICS, ("front_left", "front_right", "rear_left", "rear_right", "mount"), {
        "track_width_m": "0.5",
        "mount_height_m": "0.0",
    }),
    "Wheel": (Domain.MECHANICS, ("hub",), {
        "axis": "0,1,0",
        "wheel_radius_m": "0.1",
        "vel_limit_rad_s": "8.0",
    }),
}

ARM_PARTS = (
    ("pan_tilt", "PanTiltUnit"),
    ("lower_pole", "LowerPole"),
    ("elbow", "JointMotor"),
    ("upper_pole", "UpperPole"),
    ("gripper", "EndEffector"),
)

WHEELS = (
    ("wheel_fl", "front_left", "left"),
    ("wheel_fr", "front_right", "right"),
    ("wheel_rl", "rear_left", "left"),
    ("wheel_rr", "rear_right", "right"),
)

SHOPPING_CART_MOUNT_M = 0.3


def component_library(graph: PropertyGraph) -> dict[str, str]:
    """Create (or look up) the shared interface and component models."""
    link = graph.find_model(EntityKind.INTERFACE_MODEL, Domain.MECHANICS, MECH_LINK)
    if link is None:
        link = graph.create_interface_model(Domain.MECHANICS, MECH_LINK)
    models = {MECH_LINK: link}
    for name, (domain, interfaces, props) in LIBRARY.items():
        existing = graph.find_model(EntityKind.COMPONENT_MODEL, domain, name)
        if existing is not None:
            models[name] = existing
            continue
        model = graph.create_component_model(domain, name, **props)
        for iface in interfaces:
            graph.has_interface_model(model, graph.instantiate_interface(link, iface))
        models[name] = model
    return models


def _new_assembly(graph: PropertyGraph, robot: str, **props: object) -> str:
    if graph.find_model(EntityKind.COMPONENT_MODEL, Domain.ASSEMBLY, robot) is not None:
        raise DuplicateName(f"robot {robot} already exists", name=robot)
    return graph.create_component_model(Domain.ASSEMBLY, robot, **props)


def _add_arm(graph: PropertyGraph, models: dict[str, str], assembly: str) -> list[str]:
    parts = []
    for name, model in ARM_PARTS:
        part = graph.instantiate_component(models[model], name)
        graph.compose(part, assembly)
        parts.append(part)
    for proximal, distal in zip(parts, parts[1:]):
        graph.connect(graph.interface_of(proximal, "distal"), graph.interface_of(distal, "proximal"))
    return parts


def _add_cart(graph: PropertyGraph, models: dict[str, str], assembly: str, mount_height: float) -> str:
    chassis = graph.instantiate_component(models["CartChassis"], "chassis", mount_height_m=mount_height)
    graph.compose(chassis, assembly)
    for name, slot, side in WHEELS:
        wheel = graph.instantiate_component(models["Wheel"], name, side=side)
        graph.compose(wheel, assembly)
        graph.connect(graph.interface_of(chassis, slot), graph.interface_of(wheel, "hub"))
    return chassis


def build_arm(graph: PropertyGraph, robot: str = "Arm") -> str:
    with graph.batch():
        models = component_library(graph)
        assembly = _new_assembly(graph, robot)
        _add_arm(graph, models, assembly)
    logger.info("assembled arm %s", robot)
    return assembly


def build_cart(graph: PropertyGraph, robot: str = "Cart") -> str:
    with graph.batch():
        models = component_library(graph)
        assembly = _new_assembly(graph, robot)
        _add_cart(graph, models, assembly, 0.0)
    logger.info("assembled cart %s", robot)
    return assembly


def build_shopping_cart(graph: PropertyGraph, robot: str = "NewShoppingCart") -> str:
    """Arm mounted on the cart; joint names match the separate subsystems."""
    with graph.batch():
        models = component_library(graph)
        assembly = _new_assembly(graph, robot)
        chassis = _add_cart(graph, models, assembly, SHOPPING_CART_MOUNT_M)
        arm = _add_arm(graph, models, assembly)
        graph.connect(graph.interface_of(chassis, "mount"), graph.interface_of(arm[0], "proximal"))
    logger.info("assembled shopping cart %s", robot)
    return assembly


def build_leg(graph: PropertyGraph, robot: str = "Leg") -> dict[str, str]:
    """Two-joint leg: four joints and two limbs chained, two joints composed."""
    with graph.batch():
        mech = graph.find_model(EntityKind.INTERFACE_MODEL, Domain.MECHANICS, MECH_LINK)
        if mech is None:
            mech = graph.create_interface_model(Domain.MECHANICS, MECH_LINK)
        joint = graph.find_model(EntityKind.COMPONENT_MODEL, Domain.MECHANICS, "J")
        if joint is None:
            joint = graph.create_component_model(Domain.MECHANICS, "J")
            for iface in ("a", "b"):
                graph.has_interface_model(joint, graph.instantiate_interface(mech, iface))
        limb = graph.find_model(EntityKind.COMPONENT_MODEL, Domain.MECHANICS, "L")
        if limb is None:
            limb = graph.create_component_model(Domain.MECHANICS, "L")
            for iface in ("x", "y"):
                graph.has_interface_model(limb, graph.instantiate_interface(mech, iface))

        ids = {name: graph.instantiate_component(joint, name) for name in ("hip1", "hip2", "hip3", "knee")}
        ids.update({name: graph.instantiate_component(limb, name) for name in ("upperLimb", "lowerLimb")})
        for (a, ia), (b, ib) in (
            (("hip1", "b"), ("hip2", "a")),
            (("hip2", "b"), ("hip3", "a")),
            (("hip3", "b"), ("upperLimb", "x")),
            (("upperLimb", "y"), ("knee", "a")),
            (("knee", "b"), ("lowerLimb", "x")),
        ):
            graph.connect(graph.interface_of(ids[a], ia), graph.interface_of(ids[b], ib))

        leg = _new_assembly(graph, robot)
        graph.compose(ids["hip1"], leg)
        graph.compose(ids["hip2"], leg)
    ids.update({"J": joint, "L": limb, robot: leg})
    return ids


def build_actuated_joint(graph: PropertyGraph) -> dict[str, str]:
    """Gears and rotor/stator form an actuator; actuator and housing form a joint."""
    with graph.batch():
        gear = graph.create_component_model(Domain.MECHANICS, "Gear")
        gear_7to1 = graph.create_component_model(Domain.MECHANICS, "Gear7to1", ratio="7")
        graph.is_a(gear_7to1, gear)
        rotor = graph.create_component_model(Domain.ELECTRONICS, "Rotor")
        stator = graph.create_component_model(Domain.ELECTRONICS, "Stator")
        housing = graph.create_component_model(Domain.MECHANICS, "Housing")

        actuator = graph.create_component_model(Domain.ASSEMBLY, "Actuator")
        for model, name in ((gear_7to1, "stage1"), (gear_7to1, "stage2"), (rotor, "rotor"), (stator, "stator")):
            graph.compose(graph.instantiate_component(model, name), actuator)

        joint = graph.create_component_model(Domain.ASSEMBLY, "ActuatedJoint")
        graph.compose(graph.instantiate_component(actuator, "drive"), joint)
        graph.compose(graph.instantiate_component(housing, "shell"), joint)
    return {
        "Gear": gear, "Gear7to1": gear_7to1, "Rotor": rotor, "Stator": stator,
        "Housing": housing, "Actuator": actuator, "ActuatedJoint": joint,
    }


def _leg_assembly(graph: PropertyGraph, robot: str) -> str:
    return build_leg(graph, robot)[robot]


FIXTURES: dict[str, Callable[[PropertyGraph, str], str]] = {
    "arm": build_arm,
    "cart": build_cart,
    "shopping-cart": build_shopping_cart,
    "leg": _leg_assembly,
}
