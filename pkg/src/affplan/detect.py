"""Recognition of objects and action opportunities in rendered rasters.

Colour windows pick out each object class, connected components give one
candidate per silhouette, and image moments recover position, stacking
level, and in-plane angle.  Confidence is pixel support relative to the
smallest silhouette the class can produce, so fragments score low and are
pruned.  A second pass turns surviving detections into gated grasp, place,
and turn proposals using the same clearance rules the world applies, padded
slightly so that borderline proposals err on the executable side.

The pipeline never looks at world state; it runs equally on renders of
real worlds and on predicted future images.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import config as C
from .affordance import Detection, GRASP, PLACE, TURN, angle_difference
from .raster import RasterState

BLOCK, SUPPORT, CUP, BALL = "block", "support", "cup", "ball"

# (class key, reference colour, detection kind, toppled?)
_COLOUR_CLASSES = (
    ("support", C.SUPPORT_COLOUR, SUPPORT, False),
    ("cup", C.CUP_COLOUR, CUP, False),
    ("cup_toppled", C.CUP_TOPPLED_COLOUR, CUP, True),
    ("ball", C.BALL_COLOUR, BALL, False),
    ("block_green", C.BLOCK_GREEN, BLOCK, False),
    ("block_yellow", C.BLOCK_YELLOW, BLOCK, False),
)


@dataclass(frozen=True)
class ComponentStats:
    kind: str
    toppled: bool
    area: int
    x: float
    y: float
    level: int
    angle: float
    elongation: float

    @property
    def footprint_radius(self) -> float:
        if self.kind == BALL:
            return C.BALL_RADIUS
        if self.kind == CUP:
            return C.CUP_TOPPLED_SEMI[0] if self.toppled else C.CUP_RADIUS
        if self.kind == SUPPORT:
            return C.SUPPORT_SIDE / 2
        return C.BLOCK_LENGTH / 2


@dataclass(frozen=True)
class SceneSummary:
    detections: tuple[Detection, ...]
    stats: tuple[ComponentStats, ...]
    holding: str | None


@dataclass(frozen=True)
class RecallReport:
    n_truth: int
    n_found: int
    n_matched: int
    n_spurious: int
    per_kind: tuple[tuple[str, int, int], ...] = ()   # (kind, matched, truth)

    @property
    def recall(self) -> float:
        return self.n_matched / self.n_truth if self.n_truth else 1.0

    def kind_recall(self, kind: str) -> float:
        for k, m, t in self.per_kind:
            if k == kind:
                return m / t if t else 1.0
        return 1.0


def _colour_mask(rgb: np.ndarray, colour) -> np.ndarray:
    return np.all(np.abs(rgb - np.asarray(colour)) <= C.COLOUR_TOLERANCE, axis=-1)


def _components(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components as (n, 2) arrays of (row, col) indices."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for r0 in range(h):
        for c0 in range(w):
            if not mask[r0, c0] or seen[r0, c0]:
                continue
            queue = deque([(r0, c0)])
            seen[r0, c0] = True
            pix = []
            while queue:
                r, c = queue.popleft()
                pix.append((r, c))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not seen[rr, cc]:
                            seen[rr, cc] = True
                            queue.append((rr, cc))
            comps.append(np.array(pix))
    return comps


def _moment_stats(pix: np.ndarray, depth: np.ndarray, resolution: int,
                  kind: str, toppled: bool) -> ComponentStats:
    rows = pix[:, 0].astype(np.float64)
    cols = pix[:, 1].astype(np.float64)
    cx = (cols.mean() + 0.5) / resolution * C.WORLD_EXTENT[0]
    cy = (rows.mean() + 0.5) / resolution * C.WORLD_EXTENT[1]
    d_med = float(np.median(depth[pix[:, 0], pix[:, 1]]))
    level = int(np.clip(round(d_med / C.DEPTH_PER_LEVEL), 0, C.MAX_LEVEL))
    # second moments in world units; x follows columns, y follows rows
    u = (cols - cols.mean()) / resolution
    v = (rows - rows.mean()) / resolution
    m20, m02, m11 = float(u @ u), float(v @ v), float(u @ v)
    n = len(pix)
    m20, m02, m11 = m20 / n + 1e-12, m02 / n + 1e-12, m11 / n
    angle = math.degrees(0.5 * math.atan2(2 * m11, m20 - m02)) % 180.0
    tr, det = m20 + m02, m20 * m02 - m11 * m11
    disc = max(tr * tr / 4 - det, 0.0)
    lam1 = tr / 2 + math.sqrt(disc)
    lam2 = max(tr / 2 - math.sqrt(disc), 1e-12)
    return ComponentStats(kind, toppled, n, cx, cy, level, angle,
                          math.sqrt(lam1 / lam2))


def held_kind(state: RasterState) -> str | None:
    """What the gripper strip says is being held, if anything."""
    strip = state.data[:C.STRIP_ROWS]
    if float(np.median(strip[:, :, 3])) <= 0.4:
        return None
    rgb = strip[:, :, :3]
    votes = {
        BLOCK: int(_colour_mask(rgb, C.BLOCK_GREEN).sum()),
        CUP: int(_colour_mask(rgb, C.CUP_COLOUR).sum()),
        BALL: int(_colour_mask(rgb, C.BALL_COLOUR).sum()),
    }
    best = max(votes, key=lambda k: (votes[k], k))
    return best if votes[best] > 0 else None


def detect(state: RasterState) -> SceneSummary:
    """Raw per-silhouette detections, confidence included, before pruning."""
    res = state.resolution
    body_rgb = state.rgb.astype(np.float64)
    body_rgb[:C.STRIP_ROWS] = -1.0   # the strip never contributes silhouettes
    depth = state.depth
    stats: list[ComponentStats] = []

    block_mask = (_colour_mask(body_rgb, C.BLOCK_GREEN)
                  | _colour_mask(body_rgb, C.BLOCK_YELLOW))
    if block_mask.any():
        pix = np.argwhere(block_mask)   # one block at most: pool every fragment
        stats.append(_moment_stats(pix, depth, res, BLOCK, False))

    for key, colour, kind, toppled in _COLOUR_CLASSES:
        if kind == BLOCK:
            continue
        for pix in _components(_colour_mask(body_rgb, colour)):
            stats.append(_moment_stats(pix, depth, res, kind, toppled))

    dets = []
    for s in stats:
        conf = min(1.0, s.area / C.expected_area(s.kind, res))
        symmetric = s.kind in (SUPPORT, BALL) or (s.kind == CUP and not s.toppled)
        angle = 0.0 if symmetric else s.angle
        dets.append(Detection(s.kind, s.x, s.y, s.level * C.HEIGHT_UNIT, angle,
                              1.0 if symmetric else 0.0, conf))
    return SceneSummary(tuple(dets), tuple(stats), held_kind(state))


def prune_confidence(summary: SceneSummary, cutoff: float) -> SceneSummary:
    keep = [i for i, d in enumerate(summary.detections) if d.confidence >= cutoff]
    return SceneSummary(tuple(summary.detections[i] for i in keep),
                        tuple(summary.stats[i] for i in keep), summary.holding)


def nms_proximity(summary: SceneSummary, dist: float = C.NMS_DIST,
                  angle: float = C.NMS_ANGLE) -> SceneSummary:
    """Greedy suppression of same-kind near-duplicates, best confidence first."""
    order = sorted(range(len(summary.detections)),
                   key=lambda i: (-summary.detections[i].confidence, i))
    kept: list[int] = []
    for i in order:
        di = summary.detections[i]
        dup = False
        for j in kept:
            dj = summary.detections[j]
            if dj.kind != di.kind:
                continue
            if math.dist((di.x, di.y), (dj.x, dj.y)) <= dist \
                    and angle_difference(di.angle, dj.angle, symmetric=True) <= angle:
                dup = True
                break
        if not dup:
            kept.append(i)
    kept.sort()
    return SceneSummary(tuple(summary.detections[i] for i in kept),
                        tuple(summary.stats[i] for i in kept), summary.holding)


def fold_symmetric(summary: SceneSummary) -> SceneSummary:
    """Canonicalize angles: symmetric shapes pinned to 0, others into [0, 180)."""
    dets = []
    for d in summary.detections:
        angle = 0.0 if d.symmetry > 0.5 else d.angle % 180.0
        dets.append(Detection(d.kind, d.x, d.y, d.z, angle, d.symmetry, d.confidence))
    return SceneSummary(tuple(dets), summary.stats, summary.holding)


def recognise(state: RasterState, cutoff: float = C.CONFIDENCE_CUTOFF,
              nms_dist: float = C.NMS_DIST,
              nms_angle: float = C.NMS_ANGLE) -> SceneSummary:
    """Full pipeline: detect, prune, suppress duplicates, canonicalize."""
    return fold_symmetric(
        nms_proximity(prune_confidence(detect(state), cutoff), nms_dist, nms_angle))


# --- gating geometry on detections -----------------------------------------


def _det_point_clearance(s: ComponentStats, px: float, py: float) -> float:
    dx, dy = px - s.x, py - s.y
    if s.kind in (BLOCK, SUPPORT):
        if s.kind == SUPPORT:
            hl = hw = C.SUPPORT_SIDE / 2
            ax = (1.0, 0.0)
        else:
            hl, hw = C.BLOCK_LENGTH / 2, C.BLOCK_WIDTH / 2
            ax = (math.cos(math.radians(s.angle)), math.sin(math.radians(s.angle)))
        u = dx * ax[0] + dy * ax[1]
        v = -dx * ax[1] + dy * ax[0]
        gx, gy = abs(u) - hl, abs(v) - hw
        if gx > 0 or gy > 0:
            return math.hypot(max(gx, 0.0), max(gy, 0.0))
        return max(gx, gy)
    if s.kind == CUP and s.toppled:
        a, b = C.CUP_TOPPLED_SEMI
        ax = (math.cos(math.radians(s.angle)), math.sin(math.radians(s.angle)))
        u = dx * ax[0] + dy * ax[1]
        v = -dx * ax[1] + dy * ax[0]
        return (math.hypot(u / a, v / b) - 1.0) * b
    return math.hypot(dx, dy) - s.footprint_radius


def _gate_clear(stats, px: float, py: float, level: int, skip) -> bool:
    for s in stats:
        if s.level != level or skip(s):
            continue
        if _det_point_clearance(s, px, py) < C.GRIP_CLEAR_RADIUS + C.DETECT_GATE_PAD:
            return False
    return True


def _in_reach(px: float, py: float) -> bool:
    x0, y0, x1, y1 = C.REACH_RECT
    return x0 <= px <= x1 and y0 <= py <= y1


def _det_block_fits(stats, px: float, py: float, level: int) -> bool:
    """The strip hides a held block's orientation, so demand fit both ways."""
    hl, hw = C.BLOCK_LENGTH / 2, C.BLOCK_WIDTH / 2
    for t in stats:
        if t.level != level:
            continue
        dx, dy = t.x - px, t.y - py
        for halves in ((hl, hw), (hw, hl)):
            gx, gy = abs(dx) - halves[0], abs(dy) - halves[1]
            clear = math.hypot(max(gx, 0.0), max(gy, 0.0)) \
                if (gx > 0 or gy > 0) else max(gx, gy)
            if clear < t.footprint_radius + C.DETECT_GATE_PAD:
                return False
    return True


def _det_turn_obstructed(stats, s: ComponentStats) -> bool:
    """A quarter turn in either direction would drag the block through a support."""
    hl, hw = C.BLOCK_LENGTH / 2, C.BLOCK_WIDTH / 2
    half_diag = math.hypot(C.SUPPORT_SIDE / 2, C.SUPPORT_SIDE / 2)
    limit = half_diag + C.SWEEP_PAD + C.DETECT_GATE_PAD
    for t in stats:
        if t.kind != SUPPORT or t.level != s.level:
            continue
        dx, dy = t.x - s.x, t.y - s.y
        for step in (2.0, -2.0):
            for k in range(46):
                ang = math.radians(s.angle + step * k)
                axx, axy = math.cos(ang), math.sin(ang)
                u = dx * axx + dy * axy
                v = -dx * axy + dy * axx
                gx, gy = abs(u) - hl, abs(v) - hw
                clear = math.hypot(max(gx, 0.0), max(gy, 0.0)) \
                    if (gx > 0 or gy > 0) else max(gx, gy)
                if clear <= limit:
                    return True
    return False


def propose_affordances(state: RasterState,
                        summary: SceneSummary | None = None) -> list[Detection]:
    """Gated grasp/turn/place proposals recovered purely from the image."""
    if summary is None:
        summary = recognise(state)
    stats = summary.stats
    out: list[Detection] = []
    if summary.holding is None:
        for i, s in enumerate(stats):
            if s.kind == SUPPORT:
                continue
            if not _in_reach(s.x, s.y):
                continue
            if not _gate_clear(stats, s.x, s.y, s.level, lambda t: t is s):
                continue
            det = summary.detections[i]
            z = s.level * C.HEIGHT_UNIT
            out.append(Detection(GRASP, s.x, s.y, z, det.angle, det.symmetry,
                                 det.confidence))
            if s.kind == BLOCK and not _det_turn_obstructed(stats, s):
                out.append(Detection(TURN, s.x, s.y, z, det.angle, 0.0,
                                     det.confidence))
    else:
        depth = state.depth
        res = state.resolution
        for i, s in enumerate(stats):
            if s.kind not in (BLOCK, SUPPORT):
                continue
            level = s.level + 1
            if level > C.MAX_LEVEL:
                continue
            if s.kind == SUPPORT:
                slots = [(s.x, s.y)]
            else:
                ax = (math.cos(math.radians(s.angle)), math.sin(math.radians(s.angle)))
                slots = [(s.x + off * ax[0], s.y + off * ax[1])
                         for off in C.BLOCK_SLOT_OFFSETS]
            for sx, sy in slots:
                if not _in_reach(sx, sy):
                    continue
                row = min(max(int(sy / C.WORLD_EXTENT[1] * res), 0), res - 1)
                col = min(max(int(sx / C.WORLD_EXTENT[0] * res), 0), res - 1)
                if depth[row, col] >= (level - 0.45) * C.DEPTH_PER_LEVEL:
                    continue   # something already sits above the host here
                # same-level riders of this host gate neighbouring slots
                # just like any other bystander would
                host = s
                if not _gate_clear(stats, sx, sy, level,
                                   lambda t: t is host):
                    continue
                if summary.holding == BLOCK and \
                        not _det_block_fits(stats, sx, sy, level):
                    continue
                out.append(Detection(PLACE, sx, sy, level * C.HEIGHT_UNIT,
                                     0.0, 1.0, summary.detections[i].confidence))
    return out


def eval_recall(truth: list[Detection], found: list[Detection],
                dist: float = C.RECALL_DIST,
                angle: float = C.RECALL_ANGLE) -> RecallReport:
    """Greedy matching of found detections to ground truth, nearest first."""
    used = [False] * len(found)
    matched = 0
    by_kind: dict[str, list[int]] = {}
    for t in truth:
        counts = by_kind.setdefault(t.kind, [0, 0])
        counts[1] += 1
        best_j, best_d = -1, dist
        for j, f in enumerate(found):
            if used[j] or f.kind != t.kind:
                continue
            d = math.dist((t.x, t.y), (f.x, f.y))
            if d > best_d:
                continue
            if t.symmetry <= 0.5 and angle_difference(t.angle, f.angle,
                                                      symmetric=True) > angle:
                continue
            best_j, best_d = j, d
        if best_j >= 0:
            used[best_j] = True
            matched += 1
            counts[0] += 1
    return RecallReport(len(truth), len(found), matched, len(found) - matched,
                        tuple((k, m, t) for k, (m, t) in sorted(by_kind.items())))


def ground_truth_detections(world) -> list[Detection]:
    """Reference detections straight from simulator state, for recall tests."""
    out = []
    for obj in sorted(world.objects, key=lambda o: o.id):
        symmetric = obj.kind in (SUPPORT, BALL) or (obj.kind == CUP
                                                    and obj.pose == "upright")
        angle = 0.0 if symmetric else obj.orientation % 180.0
        out.append(Detection(obj.kind, obj.x, obj.y,
                             obj.height_level * C.HEIGHT_UNIT, angle,
                             1.0 if symmetric else 0.0, 1.0))
    return out
