"""Deterministic 2-D tabletop micro-world.

Objects live on a 1 m square table: at most one long two-tone block with
three stacking slots on top, up to two dark support blocks with one slot
each, and a handful of cups and balls.  A single gripper grasps objects,
places them on free slots, and quarter-turns the long block in place.

Everything is deterministic.  Disturbed balls roll a fixed distance and
despawn past the reachable area; disturbed cups topple where they stand.
A block resting on a single support tilts whenever the centre of mass of
the block plus whatever rides on it leaves the support span, shedding the
farthest rider until it balances again.

Heights are coarse stacking levels (0 = table).  Renders are top-down
RGBD rasters whose depth channel encodes the stacking level; the top few
pixel rows form a status strip showing an icon of whatever the gripper
holds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import config as C
from .affordance import Detection, GRASP, PLACE, TURN, ParametrizedAffordance
from .errors import FormatError, InvalidWorldError, PreconditionError
from .raster import RasterState

BLOCK = "block"
SUPPORT = "support"
CUP = "cup"
BALL = "ball"
OBJECT_KINDS = (BLOCK, SUPPORT, CUP, BALL)

UPRIGHT = "upright"
TOPPLED = "toppled"

MAX_COUNTS = {BLOCK: 1, SUPPORT: 2, CUP: 3, BALL: 3}


@dataclass(frozen=True)
class ObjectInstance:
    id: int
    kind: str
    x: float
    y: float
    orientation: float = 0.0       # degrees; blocks stay on multiples of 90
    height_level: int = 0
    pose: str = UPRIGHT
    on_slot: tuple[int, int] | None = None   # (host id, slot index)

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class WorldState:
    objects: tuple[ObjectInstance, ...] = ()
    held: ObjectInstance | None = None
    reach_extent: tuple[float, float, float, float] = C.REACH_RECT
    seed: int = 0

    def get(self, oid: int) -> ObjectInstance:
        for obj in self.objects:
            if obj.id == oid:
                return obj
        raise KeyError(f"no object with id {oid}")

    def find(self, oid: int) -> ObjectInstance | None:
        for obj in self.objects:
            if obj.id == oid:
                return obj
        return None

    @property
    def holding(self) -> int | None:
        return self.held.id if self.held is not None else None


# --- geometry helpers -----------------------------------------------------

def _axis(theta_deg: float) -> tuple[float, float]:
    rad = math.radians(theta_deg)
    return (math.cos(rad), math.sin(rad))


def n_slots(kind: str) -> int:
    return 3 if kind == BLOCK else 1 if kind == SUPPORT else 0


def slot_position(host: ObjectInstance, index: int) -> tuple[float, float]:
    if not 0 <= index < n_slots(host.kind):
        raise KeyError(f"{host.kind} has no slot {index}")
    if host.kind == SUPPORT:
        return (host.x, host.y)
    ax = _axis(host.orientation)
    off = C.BLOCK_SLOT_OFFSETS[index]
    return (host.x + off * ax[0], host.y + off * ax[1])


def _rect_halves(obj: ObjectInstance) -> tuple[float, float]:
    """Axis-aligned half extents; valid because blocks sit on 90-degree grid."""
    if obj.kind == SUPPORT:
        return (C.SUPPORT_SIDE / 2, C.SUPPORT_SIDE / 2)
    if round(obj.orientation) % 180 == 0:
        return (C.BLOCK_LENGTH / 2, C.BLOCK_WIDTH / 2)
    return (C.BLOCK_WIDTH / 2, C.BLOCK_LENGTH / 2)


def _circle_radius(obj: ObjectInstance) -> float:
    if obj.kind == BALL:
        return C.BALL_RADIUS
    if obj.pose == TOPPLED:
        return C.CUP_TOPPLED_SEMI[0]   # conservative bound for clearance tests
    return C.CUP_RADIUS


def point_clearance(obj: ObjectInstance, px: float, py: float) -> float:
    """Signed distance from a point to the object's footprint (< 0 inside)."""
    dx, dy = px - obj.x, py - obj.y
    if obj.kind in (BLOCK, SUPPORT):
        hx, hy = _rect_halves(obj)
        gx, gy = abs(dx) - hx, abs(dy) - hy
        if gx > 0 or gy > 0:
            return math.hypot(max(gx, 0.0), max(gy, 0.0))
        return max(gx, gy)
    if obj.kind == CUP and obj.pose == TOPPLED:
        a, b = C.CUP_TOPPLED_SEMI
        ax = _axis(obj.orientation)
        u = dx * ax[0] + dy * ax[1]
        v = -dx * ax[1] + dy * ax[0]
        t = math.hypot(u / a, v / b)
        return (t - 1.0) * b
    return math.hypot(dx, dy) - _circle_radius(obj)


def pair_clearance(a: ObjectInstance, b: ObjectInstance) -> float:
    """Signed separation between two footprints (< 0 means overlap).

    Every motion rule settles a mover where its bounding disc clears the
    other object's exact footprint, so for round-against-round pairings the
    larger of the two directional bounds is the invariant a clean history
    guarantees.  Both bounds underestimate the true gap, never the reverse.
    """
    rect_a, rect_b = a.kind in (BLOCK, SUPPORT), b.kind in (BLOCK, SUPPORT)
    if rect_a and rect_b:
        hxa, hya = _rect_halves(a)
        hxb, hyb = _rect_halves(b)
        gx = abs(a.x - b.x) - (hxa + hxb)
        gy = abs(a.y - b.y) - (hya + hyb)
        if gx > 0 or gy > 0:
            return math.hypot(max(gx, 0.0), max(gy, 0.0))
        return max(gx, gy)
    if rect_a:
        return point_clearance(a, b.x, b.y) - _circle_radius(b)
    if rect_b:
        return point_clearance(b, a.x, a.y) - _circle_radius(a)
    return max(point_clearance(a, b.x, b.y) - _circle_radius(b),
               point_clearance(b, a.x, a.y) - _circle_radius(a))


def in_reach(world: WorldState, x: float, y: float) -> bool:
    x0, y0, x1, y1 = world.reach_extent
    return x0 <= x <= x1 and y0 <= y <= y1


def _stack_ids(world: WorldState, oid: int) -> set[int]:
    """Ids vertically linked to oid: everything below it and stacked on it."""
    linked = {oid}
    cur = world.find(oid)
    while cur is not None and cur.on_slot is not None:
        linked.add(cur.on_slot[0])
        cur = world.find(cur.on_slot[0])
    grew = True
    while grew:
        grew = False
        for obj in world.objects:
            if obj.on_slot is not None and obj.on_slot[0] in linked and obj.id not in linked:
                linked.add(obj.id)
                grew = True
    return linked


def _commencement_clear(world: WorldState, x: float, y: float, level: int,
                        exclude: set[int]) -> bool:
    """True when no foreign object at `level` crowds the gripper disc."""
    for obj in world.objects:
        if obj.id in exclude or obj.height_level != level:
            continue
        if point_clearance(obj, x, y) < C.GRIP_CLEAR_RADIUS:
            return False
    return True


def _slot_occupants(world: WorldState, host_id: int) -> dict[int, int]:
    return {obj.on_slot[1]: obj.id for obj in world.objects
            if obj.on_slot is not None and obj.on_slot[0] == host_id}


# --- affordance enumeration -----------------------------------------------

def _affordances_with_meta(world: WorldState) -> list[tuple[Detection, tuple]]:
    out: list[tuple[Detection, tuple]] = []
    objs = sorted(world.objects, key=lambda o: o.id)
    if world.held is None:
        for obj in objs:
            if obj.kind == SUPPORT:
                continue
            if not in_reach(world, obj.x, obj.y):
                continue
            if not _commencement_clear(world, obj.x, obj.y, obj.height_level,
                                       _stack_ids(world, obj.id)):
                continue
            symmetric = obj.kind == BALL or (obj.kind == CUP and obj.pose == UPRIGHT)
            angle = 0.0 if symmetric else obj.orientation % 180.0
            z = obj.height_level * C.HEIGHT_UNIT
            det = Detection(GRASP, obj.x, obj.y, z, angle,
                            1.0 if symmetric else 0.0, 1.0)
            out.append((det, (GRASP, obj.id)))
            if obj.kind == BLOCK and not _turn_obstructed(world, obj):
                out.append((Detection(TURN, obj.x, obj.y, z, angle, 0.0, 1.0),
                            (TURN, obj.id)))
    else:
        for host in objs:
            if host.kind not in (BLOCK, SUPPORT):
                continue
            taken = _slot_occupants(world, host.id)
            level = host.height_level + 1
            if level > C.MAX_LEVEL:
                continue
            for k in range(n_slots(host.kind)):
                if k in taken:
                    continue
                sx, sy = slot_position(host, k)
                if not in_reach(world, sx, sy):
                    continue
                # riders already on the host count too: adjacent slots sit
                # 0.10 apart, close enough that a neighbour blocks the disc
                if not _commencement_clear(world, sx, sy, level, set()):
                    continue
                # the gripper disc is shorter than a block, so the landing
                # footprint needs its own check against level-mates
                landed = replace(world.held, x=sx, y=sy, pose=UPRIGHT,
                                 height_level=level, on_slot=(host.id, k))
                if any(o.height_level == level and pair_clearance(landed, o) <= 0
                       for o in world.objects):
                    continue
                det = Detection(PLACE, sx, sy, level * C.HEIGHT_UNIT, 0.0, 1.0, 1.0)
                out.append((det, (PLACE, host.id, k)))
    return out


def enumerate_affordances(world: WorldState) -> list[Detection]:
    """Ground-truth action opportunities in the current world."""
    return [det for det, _ in _affordances_with_meta(world)]


# --- landing searches -----------------------------------------------------

def _position_free(objects, mover_id: int, x: float, y: float, radius: float,
                   level: int) -> bool:
    for obj in objects:
        if obj.id == mover_id or obj.height_level != level:
            continue
        if point_clearance(obj, x, y) - radius > 0.0:
            continue
        return False
    return True


def _march(objects, mover_id: int, radius: float, start: tuple[float, float],
           direction: tuple[float, float], travel: float) -> tuple[float, float]:
    """Last free spot along a ray, stopping early at the first obstacle.

    A blocked start (an object falling onto occupied ground) skips ahead to
    the first free spot instead, within a bounded overshoot.
    """
    last_free = None
    t = 0.0
    while t <= travel + 1e-12:
        px, py = start[0] + direction[0] * t, start[1] + direction[1] * t
        if _position_free(objects, mover_id, px, py, radius, 0):
            last_free = (px, py)
        elif last_free is not None:
            return last_free
        t += C.SETTLE_STEP
    if last_free is not None:
        return last_free
    while t <= travel + 0.5:
        px, py = start[0] + direction[0] * t, start[1] + direction[1] * t
        if _position_free(objects, mover_id, px, py, radius, 0):
            return (px, py)
        t += C.SETTLE_STEP
    return start


def _settle(objects, mover_id: int, radius: float, start: tuple[float, float],
            direction: tuple[float, float], min_shift: float) -> tuple[float, float]:
    """First free spot at least min_shift along a ray (toppled-cup landings)."""
    t = min_shift
    while t <= 0.6:
        px, py = start[0] + direction[0] * t, start[1] + direction[1] * t
        if _position_free(objects, mover_id, px, py, radius, 0):
            return (px, py)
        t += C.SETTLE_STEP
    return start


def _norm_or(vx: float, vy: float, fallback: tuple[float, float]) -> tuple[float, float]:
    n = math.hypot(vx, vy)
    if n < 1e-9:
        return fallback
    return (vx / n, vy / n)


# --- step -----------------------------------------------------------------

def _topple_cup(objects, cup: ObjectInstance, direction, min_shift: float) -> ObjectInstance:
    fallen = replace(cup, pose=TOPPLED, height_level=0, on_slot=None,
                     orientation=math.degrees(math.atan2(direction[1], direction[0])) % 360.0)
    others = [o for o in objects if o.id != cup.id]
    x, y = _settle(others, cup.id, C.CUP_TOPPLED_SEMI[0], cup.position,
                   direction, min_shift)
    return replace(fallen, x=x, y=y)


def _roll_ball(world_objects, ball: ObjectInstance, direction,
               reach) -> ObjectInstance | None:
    """Roll a ball; returns None when it leaves the reachable area."""
    others = [o for o in world_objects if o.id != ball.id]
    x, y = _march(others, ball.id, C.BALL_RADIUS,
                  (ball.x, ball.y), direction, C.ROLL_DISTANCE)
    if not (reach[0] <= x <= reach[2] and reach[1] <= y <= reach[3]):
        return None
    return replace(ball, x=x, y=y, height_level=0, on_slot=None)


def _shed_riders(objects, block: ObjectInstance, reach) -> list[ObjectInstance]:
    """Drop everything riding a block that was just lifted away."""
    ax = _axis(block.orientation)
    current = [o for o in objects]
    riders = sorted((o for o in current
                     if o.on_slot is not None and o.on_slot[0] == block.id),
                    key=lambda o: o.on_slot[1])
    for rider in riders:
        direction = _norm_or(rider.x - block.x, rider.y - block.y, ax)
        current = [o for o in current if o.id != rider.id]
        if rider.kind == BALL:
            grounded = replace(rider, height_level=0, on_slot=None)
            landed = _roll_ball(current + [grounded], grounded, direction, reach)
            if landed is not None:
                current.append(landed)
        else:
            current.append(_topple_cup(current, rider, direction, C.TOPPLE_SHIFT))
    return current


def _do_grasp(world: WorldState, oid: int) -> WorldState:
    target = world.get(oid)
    rest = [o for o in world.objects if o.id != oid]
    if target.kind == BLOCK:
        rest = _shed_riders(rest, target, world.reach_extent)
    held = replace(target, on_slot=None, height_level=0)
    return replace(world, objects=tuple(rest), held=held)


def _do_place(world: WorldState, host_id: int, slot: int) -> WorldState:
    host = world.get(host_id)
    sx, sy = slot_position(host, slot)
    placed = replace(world.held, x=sx, y=sy, pose=UPRIGHT,
                     height_level=host.height_level + 1, on_slot=(host_id, slot))
    return replace(world, objects=tuple(list(world.objects) + [placed]), held=None)


def _swept(block: ObjectInstance, direction: int, px: float, py: float,
           radius: float = 0.0) -> bool:
    """Whether a disc of the given radius touches the region the turn covers."""
    hl = C.BLOCK_LENGTH / 2
    hw = C.BLOCK_WIDTH / 2
    dx, dy = px - block.x, py - block.y
    step = 2.0 if direction > 0 else -2.0
    for k in range(46):
        ax = _axis(block.orientation + step * k)
        u = dx * ax[0] + dy * ax[1]
        v = -dx * ax[1] + dy * ax[0]
        gx, gy = abs(u) - hl, abs(v) - hw
        clear = math.hypot(max(gx, 0.0), max(gy, 0.0)) if (gx > 0 or gy > 0) \
            else max(gx, gy)
        if clear <= radius + C.SWEEP_PAD:
            return True
    return False


def _turn_obstructed(world: WorldState, block: ObjectInstance) -> bool:
    """Supports cannot move aside, so a turn through one is impossible."""
    half_diag = math.hypot(C.SUPPORT_SIDE / 2, C.SUPPORT_SIDE / 2)
    for obj in world.objects:
        if obj.kind != SUPPORT or obj.height_level != block.height_level:
            continue
        if _swept(block, 90, obj.x, obj.y, half_diag) or \
                _swept(block, -90, obj.x, obj.y, half_diag):
            return True
    return False


def _do_turn(world: WorldState, block_id: int, direction: int) -> WorldState:
    block = world.get(block_id)
    sign = 1.0 if direction > 0 else -1.0
    swept = [o for o in world.objects
             if o.id != block_id and o.kind in (CUP, BALL)
             and (o.on_slot is None or o.on_slot[0] != block_id)
             and o.height_level == block.height_level
             and _swept(block, direction, o.x, o.y, _circle_radius(o))]
    swept_ids = {o.id for o in swept}

    turned = replace(block, orientation=(block.orientation + direction) % 360.0)
    current: list[ObjectInstance] = []
    rolling: list[tuple[ObjectInstance, tuple[float, float]]] = []
    for obj in world.objects:
        if obj.id == block_id:
            current.append(turned)
        elif obj.on_slot is not None and obj.on_slot[0] == block_id:
            if obj.kind == BALL:
                # spun off before the block settles; rolls outward from the pivot
                direction_out = _norm_or(obj.x - block.x, obj.y - block.y,
                                         _axis(turned.orientation))
                rolling.append((replace(obj, height_level=0, on_slot=None),
                                direction_out))
            else:
                sx, sy = slot_position(turned, obj.on_slot[1])
                current.append(replace(obj, x=sx, y=sy))
        elif obj.id not in swept_ids:
            current.append(obj)

    for obj in sorted(swept, key=lambda o: o.id):
        phi = math.atan2(obj.y - block.y, obj.x - block.x)
        tangent = (-math.sin(phi) * sign, math.cos(phi) * sign)
        if obj.kind == CUP:
            grounded = replace(obj, on_slot=None, height_level=0)
            current.append(_topple_cup(current, grounded, tangent, C.TOPPLE_SHIFT))
        else:
            rolling.append((replace(obj, height_level=0, on_slot=None), tangent))

    for ball, direction_out in sorted(rolling, key=lambda pair: pair[0].id):
        landed = _roll_ball(current + [ball], ball, direction_out, world.reach_extent)
        if landed is not None:
            current.append(landed)
    return replace(world, objects=tuple(current))


def resolve_stability(world: WorldState) -> WorldState:
    """Tilt-shed riders until a block resting on a single support balances."""
    for _ in range(8):
        block = next((o for o in world.objects if o.kind == BLOCK), None)
        if block is None or block.on_slot is None:
            return world
        support = world.find(block.on_slot[0])
        if support is None or support.kind != SUPPORT:
            return world
        ax = _axis(block.orientation)
        along = lambda o: (o.x - support.x) * ax[0] + (o.y - support.y) * ax[1]
        riders = [o for o in world.objects
                  if o.on_slot is not None and o.on_slot[0] == block.id]
        total = C.MASS[BLOCK] + sum(C.MASS[o.kind] for o in riders)
        com = (C.MASS[BLOCK] * along(block)
               + sum(C.MASS[o.kind] * along(o) for o in riders)) / total
        if abs(com) <= C.SUPPORT_HALF_SPAN + 1e-12 or not riders:
            return world
        sign = 1.0 if com > 0 else -1.0
        victim = max(riders, key=lambda o: (along(o) * sign, -o.id))
        direction = (sign * ax[0], sign * ax[1])
        rest = [o for o in world.objects if o.id != victim.id]
        if victim.kind == BALL:
            grounded = replace(victim, height_level=0, on_slot=None)
            landed = _roll_ball(rest + [grounded], grounded, direction,
                                world.reach_extent)
            if landed is not None:
                rest.append(landed)
        else:
            rest.append(_topple_cup(rest, victim,
                                    direction, C.TILT_FALL_SHIFT))
        world = replace(world, objects=tuple(rest))
    return world


def step(world: WorldState, action: ParametrizedAffordance) -> WorldState:
    """Execute one parametrized affordance; raises unless the world affords it."""
    best = None
    best_dist = C.SNAP_RADIUS
    for det, meta in _affordances_with_meta(world):
        if det.kind != action.kind:
            continue
        d = det.distance_to(action)
        if d <= best_dist:
            best, best_dist = meta, d
    if best is None:
        raise PreconditionError(
            f"no {action.kind} affordance within {C.SNAP_RADIUS} m of "
            f"({action.x:.3f}, {action.y:.3f}, {action.z:.3f})")
    if best[0] == GRASP:
        world = _do_grasp(world, best[1])
    elif best[0] == PLACE:
        world = _do_place(world, best[1], best[2])
    else:
        world = _do_turn(world, best[1], int(action.turn_direction))
    return resolve_stability(world)


# --- rendering ------------------------------------------------------------

_GRID_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pixel_grid(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    if resolution not in _GRID_CACHE:
        xs = (np.arange(resolution) + 0.5) / resolution * C.WORLD_EXTENT[0]
        ys = (np.arange(resolution) + 0.5) / resolution * C.WORLD_EXTENT[1]
        X, Y = np.meshgrid(xs, ys)
        _GRID_CACHE[resolution] = (X, Y)
    return _GRID_CACHE[resolution]


def _footprint_mask(obj: ObjectInstance, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    dx, dy = X - obj.x, Y - obj.y
    if obj.kind in (BLOCK, SUPPORT):
        hx, hy = _rect_halves(obj)
        return (np.abs(dx) <= hx) & (np.abs(dy) <= hy)
    if obj.kind == CUP and obj.pose == TOPPLED:
        a, b = C.CUP_TOPPLED_SEMI
        ax = _axis(obj.orientation)
        u = dx * ax[0] + dy * ax[1]
        v = -dx * ax[1] + dy * ax[0]
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    r = C.BALL_RADIUS if obj.kind == BALL else C.CUP_RADIUS
    return dx * dx + dy * dy <= r * r


def _class_colour(obj: ObjectInstance) -> tuple[float, float, float]:
    if obj.kind == SUPPORT:
        return C.SUPPORT_COLOUR
    if obj.kind == BALL:
        return C.BALL_COLOUR
    if obj.kind == CUP:
        return C.CUP_TOPPLED_COLOUR if obj.pose == TOPPLED else C.CUP_COLOUR
    return C.BLOCK_GREEN


def render(world: WorldState, resolution: int = 32) -> RasterState:
    """Top-down RGBD view; depth encodes stacking level, strip shows the gripper."""
    X, Y = _pixel_grid(resolution)
    data = np.empty((resolution, resolution, 4), dtype=np.float32)
    data[:, :, :3] = np.asarray(C.TABLE_COLOUR, dtype=np.float32)
    data[:, :, 3] = 0.0
    for obj in sorted(world.objects, key=lambda o: (o.height_level, o.id)):
        mask = _footprint_mask(obj, X, Y)
        if obj.kind == BLOCK:
            ax = _axis(obj.orientation)
            forward = (X - obj.x) * ax[0] + (Y - obj.y) * ax[1] >= 0
            data[mask & forward, :3] = np.asarray(C.BLOCK_GREEN, dtype=np.float32)
            data[mask & ~forward, :3] = np.asarray(C.BLOCK_YELLOW, dtype=np.float32)
        else:
            data[mask, :3] = np.asarray(_class_colour(obj), dtype=np.float32)
        data[mask, 3] = obj.height_level * C.DEPTH_PER_LEVEL

    strip = data[:C.STRIP_ROWS]
    strip[:, :, :3] = np.asarray(C.TABLE_COLOUR, dtype=np.float32)
    strip[:, :, 3] = 0.0
    if world.held is not None:
        strip[:, :, 3] = C.STRIP_HELD_DEPTH
        rows = np.arange(C.STRIP_ROWS, dtype=np.float64)[:, None]
        cols = np.arange(resolution, dtype=np.float64)[None, :]
        cx, cy = resolution / 2 - 0.5, 1.0
        scale = resolution / 32.0
        kind = world.held.kind
        if kind == BLOCK:
            icon = (np.abs(rows - cy) <= 0.9 * scale) & (np.abs(cols - cx) <= 4.5 * scale)
            colour = C.BLOCK_GREEN
        else:
            radius = (1.2 if kind == BALL else 1.4) * scale
            icon = (rows - cy) ** 2 + (cols - cx) ** 2 <= radius ** 2
            colour = C.BALL_COLOUR if kind == BALL else C.CUP_COLOUR
        strip[:, :, :3][icon] = np.asarray(colour, dtype=np.float32)
    return RasterState(data)


# --- scene sampling and serialization --------------------------------------

_PLACE_X = (0.16, 0.84)
_PLACE_Y = (0.26, 0.80)   # keeps every footprint clear of the gripper strip
_MIN_GAP = 0.06


def random_scene(seed: int) -> WorldState:
    """A fresh tabletop: the block plus random cups, balls, and supports.

    Placement keeps footprints apart and away from the image border, so a
    sampled scene never hides objects under the strip or merges silhouettes.
    Objects that cannot be placed within 1000 rejections are dropped.
    """
    rng = np.random.default_rng(seed)
    wanted = [BLOCK]
    wanted += [SUPPORT] * int(rng.integers(0, MAX_COUNTS[SUPPORT] + 1))
    wanted += [CUP] * int(rng.integers(0, MAX_COUNTS[CUP] + 1))
    wanted += [BALL] * int(rng.integers(0, MAX_COUNTS[BALL] + 1))
    placed: list[ObjectInstance] = []
    next_id = 0
    for kind in wanted:
        orientation = float(rng.choice((0, 90, 180, 270))) if kind == BLOCK else 0.0
        for _ in range(1000):
            x = float(rng.uniform(*_PLACE_X))
            y = float(rng.uniform(*_PLACE_Y))
            cand = ObjectInstance(next_id, kind, x, y, orientation)
            if all(pair_clearance(cand, other) >= _MIN_GAP for other in placed):
                placed.append(cand)
                next_id += 1
                break
    return WorldState(objects=tuple(placed), held=None, seed=seed)


def _object_to_dict(obj: ObjectInstance) -> dict:
    return {
        "id": obj.id, "kind": obj.kind, "x": obj.x, "y": obj.y,
        "orientation": obj.orientation, "height_level": obj.height_level,
        "pose": obj.pose,
        "on_slot": None if obj.on_slot is None
        else {"host": obj.on_slot[0], "slot": obj.on_slot[1]},
    }


def _object_from_dict(d: dict) -> ObjectInstance:
    try:
        slot = d.get("on_slot")
        return ObjectInstance(
            id=int(d["id"]), kind=d["kind"], x=float(d["x"]), y=float(d["y"]),
            orientation=float(d.get("orientation", 0.0)),
            height_level=int(d.get("height_level", 0)),
            pose=d.get("pose", UPRIGHT),
            on_slot=None if slot is None else (int(slot["host"]), int(slot["slot"])))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad object record {d!r}: {e}") from e


def world_to_dict(world: WorldState) -> dict:
    return {
        "seed": world.seed,
        "reach_extent": list(world.reach_extent),
        "objects": [_object_to_dict(o) for o in world.objects],
        "gripper": {"holding": None if world.held is None
                    else _object_to_dict(world.held)},
    }


def world_from_dict(d: dict) -> WorldState:
    try:
        objects = tuple(_object_from_dict(o) for o in d["objects"])
        holding = d.get("gripper", {}).get("holding")
        reach = tuple(float(v) for v in d.get("reach_extent", C.REACH_RECT))
        if len(reach) != 4:
            raise FormatError("reach_extent must have 4 numbers")
        world = WorldState(objects=objects,
                           held=None if holding is None else _object_from_dict(holding),
                           reach_extent=reach, seed=int(d.get("seed", 0)))
    except (KeyError, TypeError) as e:
        raise FormatError(f"bad scene record: {e}") from e
    validate_world(world)
    return world


def save_scene(world: WorldState, path) -> None:
    with open(path, "w") as f:
        json.dump(world_to_dict(world), f, indent=2, sort_keys=True)
        f.write("\n")


def load_scene(path) -> WorldState:
    try:
        with open(path) as f:
            d = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: cannot read scene: {e}") from e
    return world_from_dict(d)


def validate_world(world: WorldState) -> None:
    """Raise InvalidWorldError unless the world satisfies every invariant."""
    ids = [o.id for o in world.objects]
    if world.held is not None:
        ids.append(world.held.id)
        if world.held.kind == SUPPORT:
            raise InvalidWorldError("support blocks cannot be held")
    if len(ids) != len(set(ids)):
        raise InvalidWorldError("duplicate object ids")
    counts: dict[str, int] = {}
    everything = list(world.objects) + ([world.held] if world.held else [])
    for obj in everything:
        if obj.kind not in OBJECT_KINDS:
            raise InvalidWorldError(f"unknown kind {obj.kind!r}")
        counts[obj.kind] = counts.get(obj.kind, 0) + 1
        if counts[obj.kind] > MAX_COUNTS[obj.kind]:
            raise InvalidWorldError(f"too many {obj.kind} objects")
        if not (math.isfinite(obj.x) and math.isfinite(obj.y)):
            raise InvalidWorldError(f"object {obj.id} has non-finite position")
        if obj.kind in (BLOCK, SUPPORT) and round(obj.orientation) % 90 != 0:
            raise InvalidWorldError(f"{obj.kind} {obj.id} off the 90-degree grid")
        if obj.pose == TOPPLED and obj.kind != CUP:
            raise InvalidWorldError(f"only cups topple, not {obj.kind}")
    for obj in world.objects:
        if not 0.0 <= obj.x <= C.WORLD_EXTENT[0] or not 0.0 <= obj.y <= C.WORLD_EXTENT[1]:
            raise InvalidWorldError(f"object {obj.id} outside the table")
        if not 0 <= obj.height_level <= C.MAX_LEVEL:
            raise InvalidWorldError(f"object {obj.id} has height {obj.height_level}")
        if obj.on_slot is None:
            if obj.height_level != 0:
                raise InvalidWorldError(f"floating object {obj.id}")
            continue
        host = world.find(obj.on_slot[0])
        if host is None or host.kind not in (BLOCK, SUPPORT):
            raise InvalidWorldError(f"object {obj.id} rests on a bad host")
        if not 0 <= obj.on_slot[1] < n_slots(host.kind):
            raise InvalidWorldError(f"object {obj.id} on missing slot")
        if obj.height_level != host.height_level + 1:
            raise InvalidWorldError(f"object {obj.id} at the wrong level")
        if obj.pose == TOPPLED:
            raise InvalidWorldError(f"toppled cup {obj.id} cannot sit on a slot")
        if obj.kind == SUPPORT:
            raise InvalidWorldError("supports always rest on the table")
        sx, sy = slot_position(host, obj.on_slot[1])
        if obj.kind == BLOCK and host.kind == SUPPORT:
            # an authored block may rest off-centre, within the stable span
            ax = _axis(obj.orientation)
            du = (obj.x - sx) * ax[0] + (obj.y - sy) * ax[1]
            dv = -(obj.x - sx) * ax[1] + (obj.y - sy) * ax[0]
            if abs(du) > C.SUPPORT_HALF_SPAN + 1e-9 or abs(dv) > 0.02 + 1e-9:
                raise InvalidWorldError(f"block {obj.id} overhangs its support")
        elif math.dist((obj.x, obj.y), (sx, sy)) > 1e-6:
            raise InvalidWorldError(f"object {obj.id} not aligned with its slot")
    occupied: dict[tuple[int, int], int] = {}
    for obj in world.objects:
        if obj.on_slot is not None:
            if obj.on_slot in occupied:
                raise InvalidWorldError(f"slot {obj.on_slot} double-booked")
            occupied[obj.on_slot] = obj.id
    objs = list(world.objects)
    for i, a in enumerate(objs):
        for b in objs[i + 1:]:
            if a.height_level != b.height_level:
                continue
            if pair_clearance(a, b) < -1e-7:
                raise InvalidWorldError(
                    f"objects {a.id} and {b.id} overlap at level {a.height_level}")
