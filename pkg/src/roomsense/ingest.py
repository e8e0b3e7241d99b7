"""Scene file parsing and the dataset preprocessing pipeline.

The pipeline order is fixed:

    parse -> bbox reassignment -> spelling fixes -> label-space conflict
    resolution -> filtering

and re-running the full pipeline on its own output changes nothing.

Scene input files are UTF-8, line-delimited, tab-separated records
(documented bit-exactly in the README):

    scenegraph<TAB>v1<TAB>spaces=<s1>,<s2><TAB>rooms=<r1>,<r2>,...
    room<TAB><id><TAB><label><TAB>minx<TAB>miny<TAB>minz<TAB>maxx<TAB>maxy<TAB>maxz
    object<TAB><id><TAB><room id><TAB><label per space...><TAB>minx<TAB>...<TAB>maxz

The header declares the object label spaces (coarse space first by
convention) and the full room-label list. Blank lines and lines starting
with '#' are ignored. Object-space label sets are derived from the labels
observed in the file; the room space is fixed by the header.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .scene_model import (
    ROOM_SPACE_NAME,
    BoundingBox,
    LabelSpace,
    ObjectNode,
    RoomNode,
    SceneGraph,
    normalize_label,
)

DEFAULT_OUTDOOR_ROOM_LABELS = frozenset({"yard", "balcony", "porch"})
DEFAULT_REMOVED_ROOM_LABELS = frozenset({"none"})
DEFAULT_REJECTED_OBJECT_LABELS = frozenset(
    {"ceiling", "wall", "floor", "miscellaneous", "object", "unlabeled"}
)

RETAINED_COARSE_LABEL = "object"

_MAGIC = "scenegraph"
_VERSION = "v1"


class DataError(Exception):
    """Input data does not conform to the documented schema or contract."""


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


def load_spelling_fixes(path) -> dict[str, str]:
    """Read a two-column text map of old label -> new label."""
    fixes: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 tab-separated fields")
        fixes[normalize_label(fields[0])] = normalize_label(fields[1])
    return fixes


def default_spelling_fixes() -> dict[str, str]:
    """The spelling-fix table shipped with the package."""
    text = resources.files("roomsense").joinpath("data/spelling_fixes.txt").read_text("utf-8")
    fixes: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        old, new = line.split("\t")
        fixes[normalize_label(old)] = normalize_label(new)
    return fixes


@dataclass
class IngestConfig:
    """Knobs for the preprocessing pipeline, all label strings normalized."""

    outdoor_room_labels: frozenset[str] = DEFAULT_OUTDOOR_ROOM_LABELS
    removed_room_labels: frozenset[str] = DEFAULT_REMOVED_ROOM_LABELS
    rejected_object_labels: frozenset[str] = DEFAULT_REJECTED_OBJECT_LABELS
    spelling_fixes: dict[str, str] = field(default_factory=default_spelling_fixes)
    keep_object_category_for_secondary_space: bool = True

    def __post_init__(self):
        self.outdoor_room_labels = frozenset(map(normalize_label, self.outdoor_room_labels))
        self.removed_room_labels = frozenset(map(normalize_label, self.removed_room_labels))
        self.rejected_object_labels = frozenset(
            map(normalize_label, self.rejected_object_labels)
        )
        self.spelling_fixes = {
            normalize_label(k): normalize_label(v) for k, v in self.spelling_fixes.items()
        }


def _parse_floats(fields: list[str], where: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in fields)
    except ValueError as err:
        raise ParseError(f"{where}: bad number in {fields!r}") from err


def _bbox(fields: list[str], where: str) -> BoundingBox:
    values = _parse_floats(fields, where)
    return BoundingBox(min_corner=values[0:3], max_corner=values[3:6])


def parse_scene_file(path, config: IngestConfig | None = None) -> SceneGraph:
    """Parse a scene file into a raw, unfiltered graph.

    Labels are normalized but nothing is removed or reassigned. Room labels
    must be declared in the header; object-space label sets are collected
    from the file. A missing header is only legal for an entirely empty
    file. Malformed records and duplicate ids raise :class:`ParseError`.
    """
    del config  # parsing is config-independent; kept for call-site symmetry
    lines = Path(path).read_text(encoding="utf-8").splitlines()

    space_names: list[str] = []
    room_labels: tuple[str, ...] = ()
    header_seen = False
    rooms: dict[str, RoomNode] = {}
    objects: dict[str, ObjectNode] = {}
    room_members: dict[str, list[str]] = {}

    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        where = f"{path}:{lineno}"
        fields = line.split("\t")
        kind = fields[0]

        if not header_seen:
            if kind != _MAGIC:
                raise SchemaError(f"{where}: expected '{_MAGIC}' header before records")
            if len(fields) != 4 or fields[1] != _VERSION:
                raise SchemaError(f"{where}: malformed header (need version + spaces + rooms)")
            if not fields[2].startswith("spaces=") or not fields[3].startswith("rooms="):
                raise SchemaError(f"{where}: header needs 'spaces=' and 'rooms=' fields")
            space_names = [
                normalize_label(s)
                for s in fields[2][len("spaces="):].split(",")
                if s.strip()
            ]
            if not space_names:
                raise SchemaError(f"{where}: header declares no object label spaces")
            if ROOM_SPACE_NAME in space_names:
                raise SchemaError(f"{where}: '{ROOM_SPACE_NAME}' is reserved for the room space")
            if len(set(space_names)) != len(space_names):
                raise SchemaError(f"{where}: duplicate label-space name")
            room_labels = tuple(
                dict.fromkeys(
                    normalize_label(r)
                    for r in fields[3][len("rooms="):].split(",")
                    if r.strip()
                )
            )
            header_seen = True
            continue

        if kind == "room":
            if len(fields) != 9:
                raise ParseError(f"{where}: room record needs 9 fields, got {len(fields)}")
            room_id = fields[1]
            if room_id in rooms:
                raise ParseError(f"{where}: duplicate room id {room_id!r}")
            label = normalize_label(fields[2])
            if label not in room_labels:
                raise SchemaError(f"{where}: room label {label!r} not declared in header")
            rooms[room_id] = RoomNode(
                id=room_id, gt_label=label, bbox=_bbox(fields[3:9], where)
            )
            room_members.setdefault(room_id, [])
        elif kind == "object":
            expected = 3 + len(space_names) + 6
            if len(fields) != expected:
                raise ParseError(
                    f"{where}: object record needs {expected} fields, got {len(fields)}"
                )
            obj_id = fields[1]
            if obj_id in objects:
                raise ParseError(f"{where}: duplicate object id {obj_id!r}")
            room_id = fields[2]
            labels = {
                name: normalize_label(value)
                for name, value in zip(space_names, fields[3:3 + len(space_names)])
            }
            objects[obj_id] = ObjectNode(
                id=obj_id,
                label_per_space=labels,
                bbox=_bbox(fields[3 + len(space_names):], where),
                assigned_room=room_id,
            )
            room_members.setdefault(room_id, []).append(obj_id)
        else:
            raise ParseError(f"{where}: unknown record kind {kind!r}")

    if not header_seen:
        if rooms or objects:
            raise SchemaError(f"{path}: records without a header")
        return SceneGraph()

    label_spaces = [LabelSpace(name=ROOM_SPACE_NAME, labels=room_labels)]
    for name in space_names:
        observed = sorted({obj.label_per_space[name] for obj in objects.values()})
        label_spaces.append(LabelSpace(name=name, labels=tuple(observed)))

    room_nodes = tuple(
        RoomNode(
            id=r.id,
            gt_label=r.gt_label,
            bbox=r.bbox,
            objects=tuple(room_members.get(r.id, [])),
        )
        for r in rooms.values()
    )
    return SceneGraph(
        rooms=room_nodes,
        objects=tuple(objects.values()),
        label_spaces=tuple(label_spaces),
    )


def write_scene_file(graph: SceneGraph, path, manifest_id: str | None = None) -> None:
    """Serialize a graph back to the scene file format (lossless floats)."""
    lines = []
    if manifest_id:
        lines.append(f"# manifest: {manifest_id}")
    if not graph.label_spaces:
        # an empty graph round-trips as an (effectively) empty file
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("\n".join(lines) + "\n" if lines else "")
        return
    room_space = graph.room_space
    spaces = ",".join(s.name for s in graph.object_spaces)
    rooms = ",".join(room_space.labels if room_space else ())
    lines.append(f"{_MAGIC}\t{_VERSION}\tspaces={spaces}\trooms={rooms}")
    for room in graph.rooms:
        coords = [*room.bbox.min_corner, *room.bbox.max_corner]
        lines.append("\t".join(["room", room.id, room.gt_label, *map(repr, coords)]))
    space_names = [s.name for s in graph.object_spaces]
    for obj in graph.objects:
        coords = [*obj.bbox.min_corner, *obj.bbox.max_corner]
        labels = [obj.label_per_space[name] for name in space_names]
        lines.append("\t".join(["object", obj.id, obj.assigned_room, *labels, *map(repr, coords)]))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def _rebuild_rooms(
    rooms: tuple[RoomNode, ...], objects: tuple[ObjectNode, ...]
) -> tuple[RoomNode, ...]:
    """Recompute room object lists from object-side assignments."""
    members: dict[str, list[str]] = {room.id: [] for room in rooms}
    for obj in objects:
        if obj.assigned_room in members:
            members[obj.assigned_room].append(obj.id)
    return tuple(
        RoomNode(id=r.id, gt_label=r.gt_label, bbox=r.bbox, objects=tuple(members[r.id]))
        for r in rooms
    )


def reassign_objects_by_bbox(graph: SceneGraph) -> SceneGraph:
    """Move mislabeled objects into the room whose bbox contains them.

    An object whose bbox center lies outside its assigned room's bbox is
    reassigned to a room whose bbox does contain the center; ties between
    overlapping rooms go to the lexicographically smallest room id. Objects
    contained by no room keep their original assignment (reassignment never
    deletes). Edges are updated on both sides.
    """
    rooms_by_id = graph.room_by_id()
    moved: list[ObjectNode] = []
    for obj in graph.objects:
        center = obj.bbox.center
        home = rooms_by_id.get(obj.assigned_room)
        if home is not None and home.bbox.contains_point(center):
            moved.append(obj)
            continue
        containers = sorted(
            (room.id for room in graph.rooms if room.bbox.contains_point(center))
        )
        if containers:
            moved.append(
                ObjectNode(
                    id=obj.id,
                    label_per_space=dict(obj.label_per_space),
                    bbox=obj.bbox,
                    assigned_room=containers[0],
                )
            )
        else:
            moved.append(obj)
    objects = tuple(moved)
    return SceneGraph(
        rooms=_rebuild_rooms(graph.rooms, objects),
        objects=objects,
        label_spaces=graph.label_spaces,
    )


def apply_spelling_fixes(graph: SceneGraph, fixes: dict[str, str]) -> SceneGraph:
    """Replace misspelled object labels and recompute space membership."""
    if not fixes:
        return graph
    objects = tuple(
        ObjectNode(
            id=obj.id,
            label_per_space={
                space: fixes.get(label, label)
                for space, label in obj.label_per_space.items()
            },
            bbox=obj.bbox,
            assigned_room=obj.assigned_room,
        )
        for obj in graph.objects
    )
    return SceneGraph(
        rooms=graph.rooms,
        objects=objects,
        label_spaces=_recompute_object_spaces(graph.label_spaces, objects),
    )


def resolve_label_space_conflicts(
    graph: SceneGraph,
    primary_space: str,
    secondary_space: str,
    rejected_labels: frozenset[str] = DEFAULT_REJECTED_OBJECT_LABELS,
) -> SceneGraph:
    """Repair fine-grained labels mapped to multiple coarse labels.

    For each secondary-space label seen with more than one primary-space
    label, every carrier is rewritten to the first non-rejected primary
    label in encounter order (all-rejected mappings keep the first seen).
    Secondary-space labels that are string-identical to rejected primary
    labels are marked rejected in the secondary space; the filtering stage
    then removes their objects.
    """
    mapping: dict[str, list[str]] = {}
    for obj in graph.objects:
        sec = obj.label_per_space.get(secondary_space)
        pri = obj.label_per_space.get(primary_space)
        if sec is None or pri is None:
            continue
        seen = mapping.setdefault(sec, [])
        if pri not in seen:
            seen.append(pri)

    chosen: dict[str, str] = {}
    for sec, primaries in mapping.items():
        if len(primaries) < 2:
            continue
        usable = [p for p in primaries if p not in rejected_labels]
        chosen[sec] = usable[0] if usable else primaries[0]

    objects = graph.objects
    if chosen:
        objects = tuple(
            ObjectNode(
                id=obj.id,
                label_per_space={
                    **obj.label_per_space,
                    primary_space: chosen.get(
                        obj.label_per_space.get(secondary_space, ""),
                        obj.label_per_space[primary_space],
                    ),
                },
                bbox=obj.bbox,
                assigned_room=obj.assigned_room,
            )
            if secondary_space in obj.label_per_space and primary_space in obj.label_per_space
            else obj
            for obj in graph.objects
        )

    shadowed = frozenset(label for label in mapping if label in rejected_labels)
    spaces = []
    for space in _recompute_object_spaces(graph.label_spaces, objects):
        if space.name == secondary_space and shadowed:
            space = LabelSpace(
                name=space.name, labels=space.labels, rejected=space.rejected | shadowed
            )
        spaces.append(space)
    return SceneGraph(rooms=graph.rooms, objects=objects, label_spaces=tuple(spaces))


def filter_graph(
    graph: SceneGraph,
    config: IngestConfig,
    object_space: str,
    primary_space: str | None = None,
) -> SceneGraph:
    """Drop outdoor/none rooms, rejected objects, and newly empty rooms.

    Objects are rejected by their primary-space (coarse) label, except that
    in runs over a finer space the coarse category "object" is retained:
    the fine space keeps semantically rich labels under it. Labels in the
    active space that are themselves rejected strings (or were marked
    rejected by conflict resolution) are removed in every run. Label spaces
    are rebuilt from the survivors, with rejected sets recorded.
    """
    object_space_names = [s.name for s in graph.object_spaces]
    if object_space not in object_space_names:
        raise SchemaError(f"object space {object_space!r} not declared in graph")
    if primary_space is None:
        primary_space = object_space_names[0]

    dropped_room_labels = config.outdoor_room_labels | config.removed_room_labels
    kept_rooms = tuple(
        room for room in graph.rooms if room.gt_label not in dropped_room_labels
    )
    kept_room_ids = {room.id for room in kept_rooms}

    keep_exception = (
        config.keep_object_category_for_secondary_space and object_space != primary_space
    )
    active_rejected = config.rejected_object_labels | graph.object_space(object_space).rejected

    def keep(obj: ObjectNode) -> bool:
        if obj.assigned_room not in kept_room_ids:
            return False
        coarse = obj.label_per_space.get(primary_space)
        if coarse in config.rejected_object_labels and not (
            keep_exception and coarse == RETAINED_COARSE_LABEL
        ):
            return False
        return obj.label_per_space.get(object_space) not in active_rejected

    kept_objects = tuple(obj for obj in graph.objects if keep(obj))
    rooms = tuple(
        room for room in _rebuild_rooms(kept_rooms, kept_objects) if room.objects
    )
    kept_room_ids = {room.id for room in rooms}
    kept_objects = tuple(obj for obj in kept_objects if obj.assigned_room in kept_room_ids)

    spaces: list[LabelSpace] = []
    for space in graph.label_spaces:
        if space.name == ROOM_SPACE_NAME:
            spaces.append(
                LabelSpace(
                    name=space.name,
                    labels=tuple(l for l in space.labels if l not in dropped_room_labels),
                    rejected=frozenset(dropped_room_labels),
                )
            )
        else:
            observed = sorted({obj.label_per_space[space.name] for obj in kept_objects})
            rejected = config.rejected_object_labels | space.rejected
            if keep_exception and space.name == primary_space:
                rejected = rejected - {RETAINED_COARSE_LABEL}
            spaces.append(
                LabelSpace(name=space.name, labels=tuple(observed), rejected=rejected)
            )
    return SceneGraph(rooms=rooms, objects=kept_objects, label_spaces=tuple(spaces))


def run_pipeline(
    graph: SceneGraph, config: IngestConfig, object_space: str
) -> SceneGraph:
    """Apply the full preprocessing pipeline in its fixed order."""
    graph = reassign_objects_by_bbox(graph)
    graph = apply_spelling_fixes(graph, config.spelling_fixes)
    object_space_names = [s.name for s in graph.object_spaces]
    primary = object_space_names[0] if object_space_names else object_space
    for secondary in object_space_names[1:]:
        graph = resolve_label_space_conflicts(
            graph, primary, secondary, config.rejected_object_labels
        )
    return filter_graph(graph, config, object_space, primary)


def merge_graphs(graphs) -> SceneGraph:
    """Concatenate per-building graphs sharing the same label spaces.

    Room spaces must agree exactly; object-space label sets are re-derived
    from the union of objects. Duplicate node ids across inputs are a data
    error (the converter prefixes ids with the building name).
    """
    graphs = [g for g in graphs if g.rooms or g.objects or g.label_spaces]
    if not graphs:
        return SceneGraph()
    first = graphs[0]
    names = [s.name for s in first.label_spaces]
    room_space = first.room_space
    for g in graphs[1:]:
        if [s.name for s in g.label_spaces] != names:
            raise SchemaError("cannot merge graphs with different label spaces")
        if g.room_space and room_space and g.room_space.labels != room_space.labels:
            raise SchemaError("cannot merge graphs with different room label lists")

    rooms: list[RoomNode] = []
    objects: list[ObjectNode] = []
    seen_rooms: set[str] = set()
    seen_objects: set[str] = set()
    for g in graphs:
        for room in g.rooms:
            if room.id in seen_rooms:
                raise DataError(f"duplicate room id {room.id!r} across merged graphs")
            seen_rooms.add(room.id)
            rooms.append(room)
        for obj in g.objects:
            if obj.id in seen_objects:
                raise DataError(f"duplicate object id {obj.id!r} across merged graphs")
            seen_objects.add(obj.id)
            objects.append(obj)

    spaces: list[LabelSpace] = []
    for name in names:
        if name == ROOM_SPACE_NAME:
            spaces.append(room_space)
        else:
            observed = sorted({o.label_per_space[name] for o in objects})
            rejected = frozenset().union(
                *(g.object_space(name).rejected for g in graphs)
            )
            spaces.append(LabelSpace(name=name, labels=tuple(observed), rejected=rejected))
    return SceneGraph(rooms=tuple(rooms), objects=tuple(objects), label_spaces=tuple(spaces))


def room_label_histogram(graph: SceneGraph) -> dict[str, int]:
    """Room count per ground-truth label, in room-space label order."""
    counts: dict[str, int] = {}
    room_space = graph.room_space
    if room_space is not None:
        counts = {label: 0 for label in room_space.labels}
    for room in graph.rooms:
        counts[room.gt_label] = counts.get(room.gt_label, 0) + 1
    return counts


def _recompute_object_spaces(
    label_spaces: tuple[LabelSpace, ...], objects: tuple[ObjectNode, ...]
) -> tuple[LabelSpace, ...]:
    spaces = []
    for space in label_spaces:
        if space.name == ROOM_SPACE_NAME:
            spaces.append(space)
        else:
            observed = sorted({obj.label_per_space[space.name] for obj in objects})
            spaces.append(
                LabelSpace(name=space.name, labels=tuple(observed), rejected=space.rejected)
            )
    return tuple(spaces)
