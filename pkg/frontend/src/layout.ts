// Pure projection of a scene-graph document onto a 2-D room grid for
// rendering.  No DOM access: the output is plain data so it can be tested
// in node and diffed structurally.
//
// Visibility follows the same rules the per-agent observation applies:
// the default view never shows the contents of a closed container and
// never shows objects whose "revealed" state is false.  Omniscient mode
// shows everything and annotates closed containers with a hidden-count
// badge.

import type { ObjectDoc, RelationDoc, SceneGraphDoc } from "./schema.js";

export interface Glyph {
  id: string;
  kind: "object" | "agent";
  category: string;
  label: string;
  states: Record<string, boolean>;
  children: Glyph[];
  /** Number of concealed descendants, set only in omniscient mode on
   *  closed containers (null everywhere else). */
  hiddenCount: number | null;
}

export interface DoorEdge {
  id: string;
  label: string;
  open: boolean;
  locked: boolean;
  /** Room on the other side of this door. */
  to: string;
}

export interface RoomTile {
  id: string;
  name: string;
  col: number;
  row: number;
  doors: DoorEdge[];
  glyphs: Glyph[];
}

export interface Layout {
  tiles: RoomTile[];
  cols: number;
  rows: number;
}

function isClosedContainer(obj: ObjectDoc): boolean {
  return obj.affordances.includes("container") && obj.states["open"] === false;
}

function isConcealed(obj: ObjectDoc): boolean {
  return obj.states["revealed"] === false;
}

interface Indexed {
  objects: Map<string, ObjectDoc>;
  parentOf: Map<string, RelationDoc>;
  childrenOf: Map<string, string[]>;
  doorRooms: Map<string, string[]>;
}

const PARENT_KINDS = new Set(["in_room", "inside", "on_top", "held_by"]);

function indexGraph(doc: SceneGraphDoc): Indexed {
  const objects = new Map(doc.objects.map((o) => [o.id, o]));
  const parentOf = new Map<string, RelationDoc>();
  const childrenOf = new Map<string, string[]>();
  const doorRooms = new Map<string, string[]>();
  for (const rel of doc.relations) {
    if (PARENT_KINDS.has(rel.kind)) {
      parentOf.set(rel.src, rel);
      const sibs = childrenOf.get(rel.dst) ?? [];
      sibs.push(rel.src);
      childrenOf.set(rel.dst, sibs);
    } else if (rel.kind === "connects") {
      const rooms = doorRooms.get(rel.src) ?? [];
      rooms.push(rel.dst);
      doorRooms.set(rel.src, rooms);
    }
  }
  for (const sibs of childrenOf.values()) sibs.sort();
  for (const rooms of doorRooms.values()) rooms.sort();
  return { objects, parentOf, childrenOf, doorRooms };
}

function countDescendants(id: string, ix: Indexed): number {
  let total = 0;
  for (const child of ix.childrenOf.get(id) ?? []) {
    if (!ix.objects.has(child)) continue;
    total += 1 + countDescendants(child, ix);
  }
  return total;
}

function glyphFor(id: string, ix: Indexed, omniscient: boolean): Glyph | null {
  const obj = ix.objects.get(id);
  if (obj === undefined) return null;
  if (!omniscient && isConcealed(obj)) return null;
  const glyph: Glyph = {
    id: obj.id,
    kind: "object",
    category: obj.category,
    label: obj.name,
    states: obj.states,
    children: [],
    hiddenCount: null,
  };
  if (isClosedContainer(obj)) {
    if (omniscient) {
      glyph.hiddenCount = countDescendants(id, ix);
      glyph.children = childGlyphs(id, ix, omniscient);
    }
    // default view: contents stay hidden, no badge either — the closed
    // box should not leak whether anything is inside.
    return glyph;
  }
  glyph.children = childGlyphs(id, ix, omniscient);
  return glyph;
}

function childGlyphs(id: string, ix: Indexed, omniscient: boolean): Glyph[] {
  const out: Glyph[] = [];
  for (const child of ix.childrenOf.get(id) ?? []) {
    const g = glyphFor(child, ix, omniscient);
    if (g !== null) out.push(g);
  }
  return out;
}

function agentGlyph(doc: SceneGraphDoc, agentId: string, ix: Indexed, omniscient: boolean): Glyph {
  const agent = doc.agents.find((a) => a.id === agentId);
  const held: Glyph[] = [];
  for (const itemId of agent?.holding ?? []) {
    const g = glyphFor(itemId, ix, omniscient);
    if (g !== null) held.push(g);
  }
  return {
    id: agentId,
    kind: "agent",
    category: "agent",
    label: agentId,
    states: {},
    children: held,
    hiddenCount: null,
  };
}

/** Assign grid coordinates: breadth-first over door adjacency from the
 *  alphabetically first room, packing neighbours into the nearest free
 *  cell.  Disconnected components start on a fresh column. */
function placeRooms(doc: SceneGraphDoc, ix: Indexed): Map<string, [number, number]> {
  const adjacency = new Map<string, string[]>();
  for (const room of doc.rooms) adjacency.set(room.id, []);
  for (const rooms of ix.doorRooms.values()) {
    if (rooms.length === 2 && adjacency.has(rooms[0]) && adjacency.has(rooms[1])) {
      adjacency.get(rooms[0])!.push(rooms[1]);
      adjacency.get(rooms[1])!.push(rooms[0]);
    }
  }
  const pos = new Map<string, [number, number]>();
  if (doc.rooms.length === 0) return pos;
  const taken = new Set<string>();
  const claim = (id: string, col: number, row: number) => {
    pos.set(id, [col, row]);
    taken.add(`${col},${row}`);
  };
  const roomIds = doc.rooms.map((r) => r.id).sort();
  let nextRootCol = 0;
  for (const root of roomIds) {
    if (pos.has(root)) continue;
    claim(root, nextRootCol, 0);
    const queue = [root];
    while (queue.length > 0) {
      const here = queue.shift()!;
      const [col, row] = pos.get(here)!;
      for (const next of [...(adjacency.get(here) ?? [])].sort()) {
        if (pos.has(next)) continue;
        // nearest free cell: ring search around the current room
        let placed = false;
        for (let radius = 1; !placed; radius++) {
          for (let dc = -radius; dc <= radius && !placed; dc++) {
            for (let dr = -radius; dr <= radius && !placed; dr++) {
              if (Math.abs(dc) + Math.abs(dr) !== radius) continue;
              if (!taken.has(`${col + dc},${row + dr}`)) {
                claim(next, col + dc, row + dr);
                placed = true;
              }
            }
          }
        }
        queue.push(next);
      }
    }
    nextRootCol = Math.max(...[...pos.values()].map(([c]) => c)) + 2;
  }
  // normalize to non-negative coordinates
  const minCol = Math.min(...[...pos.values()].map(([c]) => c));
  const minRow = Math.min(...[...pos.values()].map(([, r]) => r));
  for (const [id, [c, r]] of pos) pos.set(id, [c - minCol, r - minRow]);
  return pos;
}

export function buildLayout(doc: SceneGraphDoc, omniscient = false): Layout {
  const ix = indexGraph(doc);
  const positions = placeRooms(doc, ix);

  const tiles: RoomTile[] = [];
  for (const room of [...doc.rooms].sort((a, b) => a.id.localeCompare(b.id))) {
    const [col, row] = positions.get(room.id) ?? [0, 0];
    const doors: DoorEdge[] = [];
    const glyphs: Glyph[] = [];
    for (const childId of ix.childrenOf.get(room.id) ?? []) {
      const obj = ix.objects.get(childId);
      if (obj !== undefined && ix.doorRooms.has(obj.id)) {
        const other = (ix.doorRooms.get(obj.id) ?? []).find((r) => r !== room.id) ?? "?";
        doors.push({
          id: obj.id,
          label: obj.name,
          open: obj.states["open"] === true,
          locked: obj.states["locked"] === true,
          to: other,
        });
        continue;
      }
      const g = glyphFor(childId, ix, omniscient);
      if (g !== null) glyphs.push(g);
    }
    for (const agent of doc.agents) {
      const rel = ix.parentOf.get(agent.id);
      if (rel !== undefined && rel.kind === "in_room" && rel.dst === room.id) {
        glyphs.push(agentGlyph(doc, agent.id, ix, omniscient));
      }
    }
    // doors that connect to this room but live in the neighbour room
    for (const [doorId, rooms] of ix.doorRooms) {
      if (!rooms.includes(room.id)) continue;
      if (doors.some((d) => d.id === doorId)) continue;
      const obj = ix.objects.get(doorId);
      if (obj === undefined) continue;
      doors.push({
        id: obj.id,
        label: obj.name,
        open: obj.states["open"] === true,
        locked: obj.states["locked"] === true,
        to: rooms.find((r) => r !== room.id) ?? "?",
      });
    }
    doors.sort((a, b) => a.id.localeCompare(b.id));
    tiles.push({ id: room.id, name: room.name, col, row, doors, glyphs });
  }

  const cols = tiles.length === 0 ? 0 : Math.max(...tiles.map((t) => t.col)) + 1;
  const rows = tiles.length === 0 ? 0 : Math.max(...tiles.map((t) => t.row)) + 1;
  return { tiles, cols, rows };
}

/** Flatten every glyph id visible in a layout (nested children included). */
export function visibleIds(layout: Layout): Set<string> {
  const out = new Set<string>();
  const walk = (g: Glyph) => {
    out.add(g.id);
    g.children.forEach(walk);
  };
  for (const tile of layout.tiles) {
    tile.doors.forEach((d) => out.add(d.id));
    tile.glyphs.forEach(walk);
  }
  return out;
}
