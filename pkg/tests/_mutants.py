"""Seeded world builder and mutation driver shared by the edit-closure
tests: produce a valid graph A, derive B by random direct mutations,
then exercise diff/apply_edits between them."""

from roomworld.rng import Rng
from roomworld.scene_graph import (
    AgentNode,
    ClueText,
    ObjectNode,
    Relation,
    RoomNode,
    SceneGraph,
    add_node,
    check_invariants,
    remove_node,
)

COLORS = ("red", "green", "blue", "amber")


def _obj(oid, category, affordances, states=None, **kw):
    return ObjectNode(
        id=oid, category=category, display_name=oid.replace("_", " "),
        affordances=frozenset(affordances), states=dict(states or {}), **kw,
    )


def base_world(seed: int) -> SceneGraph:
    """Two or three rooms with doors, containers, keys, notes, and one
    agent; everything seeded so pairs are reproducible."""
    rng = Rng(seed)
    g = SceneGraph()
    n_rooms = rng.randint(2, 3)
    rooms = [f"room_{i}" for i in range(1, n_rooms + 1)]
    for room_id in rooms:
        g = add_node(g, RoomNode(room_id, f"Chamber {room_id[-1]}"))
    for i in range(1, n_rooms):
        door_id = f"door_{i}"
        g = add_node(g, _obj(door_id, "door", ("openable", "lockable"),
                             {"open": bool(rng.below(2)), "locked": False}),
                     Relation("in_room", door_id, rooms[i - 1]))
        g.relations.add(Relation("connects", door_id, rooms[i - 1]))
        g.relations.add(Relation("connects", door_id, rooms[i]))
    for i in range(rng.randint(1, 3)):
        box_id = f"box_{i}"
        g = add_node(g, _obj(box_id, "box", ("container", "openable"),
                             {"open": bool(rng.below(2))}),
                     Relation("in_room", box_id, rng.choice(rooms)))
    g = add_node(g, _obj("table_1", "table", ("surface",)),
                 Relation("in_room", "table_1", rng.choice(rooms)))
    for i in range(rng.randint(1, 3)):
        key_id = f"key_{i}"
        boxes = [o for o in sorted(g.objects)
                 if "container" in g.objects[o].affordances]
        spot = rng.choice(boxes + rooms)
        rel = "inside" if spot in g.objects else "in_room"
        g = add_node(g, _obj(key_id, "key", ("graspable", "movable")),
                     Relation(rel, key_id, spot))
    g = add_node(g, _obj("note_0", "note", ("readable",),
                         clue=ClueText(text="check the boxes")),
                 Relation("in_room", "note_0", rng.choice(rooms)))
    g = add_node(g, _obj("lamp_0", "lamp", ("toggleable",), {"on": False}),
                 Relation("in_room", "lamp_0", rng.choice(rooms)))
    g = add_node(g, AgentNode("agent_1", capacity=rng.randint(1, 2)),
                 Relation("in_room", "agent_1", rooms[0]))
    assert check_invariants(g) == []
    return g


def _descendants(g: SceneGraph, root: str) -> set[str]:
    out, frontier = set(), [root]
    while frontier:
        node = frontier.pop()
        for child in g.contents_of(node):
            if child not in out:
                out.add(child)
                frontier.append(child)
    return out


def mutate(graph: SceneGraph, rng: Rng, steps: int) -> SceneGraph:
    """Apply `steps` random direct mutations, each preserving validity.

    Mutation classes stay inside what the edit protocol can express:
    object state flips, object moves, object adds/removes, and statics
    rewrites.  Rooms, doors' connectivity, and agents are left alone."""
    g = graph.clone()
    counter = 0
    for _ in range(steps):
        counter += 1
        choice = rng.below(6)
        objs = sorted(g.objects)
        if choice == 0:  # flip a boolean state
            with_state = [o for o in objs if g.objects[o].states]
            if with_state:
                oid = rng.choice(with_state)
                key = rng.choice(sorted(g.objects[oid].states))
                g.objects[oid].states[key] = not g.objects[oid].states[key]
                g.bump()
        elif choice == 1:  # move a movable object
            movable = [o for o in objs
                       if "movable" in g.objects[o].affordances
                       and g.parent_relation(o).kind != "held_by"]
            if movable:
                oid = rng.choice(movable)
                taboo = _descendants(g, oid) | {oid}
                spots = sorted(g.rooms) + [
                    o for o in objs
                    if o not in taboo
                    and ("container" in g.objects[o].affordances
                         or "surface" in g.objects[o].affordances)
                ]
                dst = rng.choice(spots)
                kind = ("in_room" if dst in g.rooms
                        else "inside" if "container" in g.objects[dst].affordances
                        else "on_top")
                g.relations.discard(g.parent_relation(oid))
                g.relations.add(Relation(kind, oid, dst))
                g.bump()
        elif choice == 2:  # add an object
            oid = f"extra_{counter}_{rng.below(1000)}"
            if g.has_id(oid):
                continue
            room = rng.choice(sorted(g.rooms))
            kind = rng.choice(["key", "vase", "note"])
            affordances = {"key": ("graspable", "movable"),
                           "vase": ("movable",),
                           "note": ("readable",)}[kind]
            clue = ClueText(text=f"scribble {counter}") if kind == "note" else None
            g.objects[oid] = _obj(oid, kind, affordances, clue=clue)
            g.relations.add(Relation("in_room", oid, room))
            g.bump()
        elif choice == 3:  # remove a non-door object (hoists children)
            candidates = [o for o in objs if g.objects[o].category != "door"
                          and g.parent_relation(o).kind != "held_by"]
            if candidates:
                g = remove_node(g, rng.choice(candidates))
        elif choice == 4:  # retitle an object (statics change)
            if objs:
                oid = rng.choice(objs)
                g.objects[oid].display_name = f"renamed {counter}"
                g.bump()
        elif choice == 5:  # rewrite a note's clue (statics change)
            notes = [o for o in objs if g.objects[o].clue is not None]
            if notes:
                oid = rng.choice(notes)
                g.objects[oid].clue = ClueText(text=f"rewritten {counter}")
                g.bump()
        assert check_invariants(g) == [], f"mutation {choice} broke the graph"
    return g
