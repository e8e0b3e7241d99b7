"""Shared fixtures: small hand-built graphs and scene-file builders."""

from __future__ import annotations

import pytest

from roomsense.scene_model import (
    BoundingBox,
    LabelSpace,
    ObjectNode,
    RoomNode,
    SceneGraph,
)

ROOM_LABELS_3 = ("bathroom", "bedroom", "kitchen")
OBJECT_LABELS_12 = (
    "bed",
    "chair",
    "dresser",
    "lamp",
    "oven",
    "pillow",
    "refrigerator",
    "shower",
    "sink",
    "stove",
    "table",
    "toilet",
)


def box(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> BoundingBox:
    return BoundingBox(min_corner=tuple(map(float, lo)), max_corner=tuple(map(float, hi)))


def build_graph(room_specs, space_name="things", room_labels=ROOM_LABELS_3) -> SceneGraph:
    """Construct a validated-shape graph from {room_id: (label, [object labels])}.

    Rooms are laid out along x so bounding boxes never overlap; objects sit
    inside their room's box.
    """
    rooms = []
    objects = []
    for i, (room_id, (label, obj_labels)) in enumerate(sorted(room_specs.items())):
        x0 = 10.0 * i
        obj_ids = []
        for j, obj_label in enumerate(obj_labels):
            obj_id = f"{room_id}-o{j}"
            obj_ids.append(obj_id)
            objects.append(
                ObjectNode(
                    id=obj_id,
                    label_per_space={space_name: obj_label},
                    bbox=box((x0 + 1 + 0.1 * j, 1, 0), (x0 + 1.5 + 0.1 * j, 1.5, 0.5)),
                    assigned_room=room_id,
                )
            )
        rooms.append(
            RoomNode(
                id=room_id,
                gt_label=label,
                bbox=box((x0, 0, 0), (x0 + 9, 9, 3)),
                objects=tuple(obj_ids),
            )
        )
    observed = tuple(sorted({o.label_per_space[space_name] for o in objects}))
    return SceneGraph(
        rooms=tuple(rooms),
        objects=tuple(objects),
        label_spaces=(
            LabelSpace(name="room", labels=tuple(room_labels)),
            LabelSpace(name=space_name, labels=observed),
        ),
    )


@pytest.fixture
def two_room_graph() -> SceneGraph:
    return build_graph(
        {
            "r-bath": ("bathroom", ["toilet", "shower", "sink"]),
            "r-bed": ("bedroom", ["bed", "pillow", "chair"]),
        }
    )


def scene_file_text(rooms, objects, spaces=("mpcat40", "nyuclass"), room_labels=None) -> str:
    """Render scene-file lines from simple tuples.

    rooms: (id, label, lo, hi); objects: (id, room_id, labels tuple, lo, hi).
    """
    if room_labels is None:
        room_labels = ("bathroom", "bedroom", "kitchen", "living room", "porch", "none")
    lines = [
        "scenegraph\tv1\tspaces=" + ",".join(spaces) + "\trooms=" + ",".join(room_labels)
    ]
    for room_id, label, lo, hi in rooms:
        lines.append("\t".join(["room", room_id, label, *map(repr, [*lo, *hi])]))
    for obj_id, room_id, labels, lo, hi in objects:
        lines.append(
            "\t".join(["object", obj_id, room_id, *labels, *map(repr, [*lo, *hi])])
        )
    return "\n".join(lines) + "\n"


@pytest.fixture
def scene_path(tmp_path):
    """Write a (rooms, objects, ...) scene to disk and return the path."""

    def _write(rooms, objects, **kwargs):
        path = tmp_path / "scene.txt"
        path.write_text(scene_file_text(rooms, objects, **kwargs), encoding="utf-8")
        return path

    return _write
