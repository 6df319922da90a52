"""Forward model: encode once, step a latent per action, decode image diffs.

The latent for a whole imagined future is built by chaining additive
updates from the root encoding; each action kind (grasp, place, turn) owns
its own update module, and a small memory vector carries side effects that
the current image cannot show (most importantly what the gripper already
did).  Decoded diffs are five channels: RGBD values plus a change mask,
and predictions compose by blending each diff onto the previous composed
image, exactly the operation the planner applies to real diffs.

Action inputs are nine numbers: x, y, normalized height, normalized
gripper angle, signed quarter-turn fraction, and the RGBD sample under the
action point read from the previous *predicted* image, which lets the
model see what it is about to act on without re-encoding.

Everything here is dtype-polymorphic: float32 in training, float64 under
the finite-difference gradient check.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ..config import NetConfig
from ..errors import DimensionError, FormatError
from .layers import (clamp01_bwd, clamp01_fwd, conv_bwd, conv_fwd, dense_bwd,
                     dense_fwd, glorot, tanh_bwd, upsample2_bwd, upsample2_fwd)

CHECKPOINT_MAGIC = b"AFNET1\n"

NUMERIC_INPUTS = 5   # x, y, height, angle, quarter-turn; the other 4 are sampled


# --- parameters -------------------------------------------------------------

def init_params(cfg: NetConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    cc, g, flat = cfg.conv_channels, cfg.grid, cfg.flat
    half = flat // 2
    p: dict[str, np.ndarray] = {}

    def dense(name, n_in, n_out, bias=0.0):
        p[f"{name}.w"] = glorot(rng, (n_in, n_out), n_in, n_out)
        p[f"{name}.b"] = np.full(n_out, bias, dtype=np.float32)

    def conv(name, c_in, c_out, bias=0.0):
        p[f"{name}.w"] = glorot(rng, (3, 3, c_in, c_out), 9 * c_in, 9 * c_out)
        p[f"{name}.b"] = np.full(c_out, bias, dtype=np.float32)

    conv("enc.conv1", 4, cc)
    conv("enc.conv2", cc, cc)
    dense("enc.fc1", flat, flat)
    dense("enc.fc2", flat, half)
    dense("enc.fc3", half, cfg.latent)
    for kind in cfg.kinds:
        a = cfg.action_inputs
        dense(f"pred.{kind}.fc1", cfg.latent + a + cfg.memory, cfg.hidden)
        dense(f"pred.{kind}.fc2", cfg.hidden + a, cfg.hidden)
        dense(f"pred.{kind}.fc3", cfg.hidden + a, cfg.hidden)
        dense(f"pred.{kind}.delta", cfg.hidden, cfg.latent)
        dense(f"pred.{kind}.mem", cfg.hidden, cfg.memory)
    dense("dec.fc1", cfg.latent, half)
    dense("dec.fc2", half, flat)
    conv("dec.conv1", cc, cc)
    # mid-range bias keeps initial outputs off the clamp boundary
    conv("dec.conv2", cc, 5, bias=0.5)
    return p


def param_count(params: dict[str, np.ndarray]) -> int:
    return sum(int(v.size) for v in params.values())


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


# --- encoder ----------------------------------------------------------------

def encode(params, cfg: NetConfig, img: np.ndarray):
    """img (B,R,R,4) -> latent (B,latent); returns (latent, cache)."""
    if img.ndim != 4 or img.shape[1:] != (cfg.resolution, cfg.resolution, 4):
        raise DimensionError(f"encoder expects (B,{cfg.resolution},"
                             f"{cfg.resolution},4), got {img.shape}")
    z1, cols1 = conv_fwd(img, params["enc.conv1.w"], params["enc.conv1.b"], 2, 1)
    a1 = np.tanh(z1)
    z2, cols2 = conv_fwd(a1, params["enc.conv2.w"], params["enc.conv2.b"], 2, 1)
    a2 = np.tanh(z2)
    flat = a2.reshape(img.shape[0], -1)
    f1 = np.tanh(dense_fwd(flat, params["enc.fc1.w"], params["enc.fc1.b"]))
    f2 = np.tanh(dense_fwd(f1, params["enc.fc2.w"], params["enc.fc2.b"]))
    c = np.tanh(dense_fwd(f2, params["enc.fc3.w"], params["enc.fc3.b"]))
    cache = (img.shape, cols1, a1, cols2, a2, flat, f1, f2, c)
    return c, cache


def _encode_bwd(params, cfg, cache, g_c, grads):
    img_shape, cols1, a1, cols2, a2, flat, f1, f2, c = cache
    gz = tanh_bwd(c, g_c)
    gf2, gw, gb = dense_bwd(f2, params["enc.fc3.w"], gz)
    grads["enc.fc3.w"] += gw; grads["enc.fc3.b"] += gb
    gz = tanh_bwd(f2, gf2)
    gf1, gw, gb = dense_bwd(f1, params["enc.fc2.w"], gz)
    grads["enc.fc2.w"] += gw; grads["enc.fc2.b"] += gb
    gz = tanh_bwd(f1, gf1)
    gflat, gw, gb = dense_bwd(flat, params["enc.fc1.w"], gz)
    grads["enc.fc1.w"] += gw; grads["enc.fc1.b"] += gb
    ga2 = tanh_bwd(a2, gflat.reshape(a2.shape))
    ga1_raw, gw, gb = conv_bwd(a1.shape, cols2, params["enc.conv2.w"], ga2, 2, 1)
    grads["enc.conv2.w"] += gw; grads["enc.conv2.b"] += gb
    ga1 = tanh_bwd(a1, ga1_raw)
    _, gw, gb = conv_bwd(img_shape, cols1, params["enc.conv1.w"], ga1, 2, 1)
    grads["enc.conv1.w"] += gw; grads["enc.conv1.b"] += gb


# --- per-kind latent update --------------------------------------------------

def _predict_fwd(params, cfg: NetConfig, kind: str, c, a, mem):
    in1 = np.concatenate([c, a, mem], axis=1)
    h1 = np.tanh(dense_fwd(in1, params[f"pred.{kind}.fc1.w"],
                           params[f"pred.{kind}.fc1.b"]))
    in2 = np.concatenate([h1, a], axis=1)
    h2 = np.tanh(dense_fwd(in2, params[f"pred.{kind}.fc2.w"],
                           params[f"pred.{kind}.fc2.b"]))
    in3 = np.concatenate([h2, a], axis=1)
    h3 = np.tanh(dense_fwd(in3, params[f"pred.{kind}.fc3.w"],
                           params[f"pred.{kind}.fc3.b"]))
    delta = np.tanh(dense_fwd(h3, params[f"pred.{kind}.delta.w"],
                              params[f"pred.{kind}.delta.b"]))
    mem_out = np.tanh(dense_fwd(h3, params[f"pred.{kind}.mem.w"],
                                params[f"pred.{kind}.mem.b"]))
    return delta, mem_out, (in1, h1, in2, h2, in3, h3, delta, mem_out)


def _predict_bwd(params, cfg: NetConfig, kind: str, cache, g_delta, g_mem_out,
                 grads):
    in1, h1, in2, h2, in3, h3, delta, mem_out = cache
    hid, lat, act = cfg.hidden, cfg.latent, cfg.action_inputs
    gz = tanh_bwd(delta, g_delta)
    gh3, gw, gb = dense_bwd(h3, params[f"pred.{kind}.delta.w"], gz)
    grads[f"pred.{kind}.delta.w"] += gw; grads[f"pred.{kind}.delta.b"] += gb
    gz = tanh_bwd(mem_out, g_mem_out)
    gh3_m, gw, gb = dense_bwd(h3, params[f"pred.{kind}.mem.w"], gz)
    grads[f"pred.{kind}.mem.w"] += gw; grads[f"pred.{kind}.mem.b"] += gb
    gz = tanh_bwd(h3, gh3 + gh3_m)
    gin3, gw, gb = dense_bwd(in3, params[f"pred.{kind}.fc3.w"], gz)
    grads[f"pred.{kind}.fc3.w"] += gw; grads[f"pred.{kind}.fc3.b"] += gb
    ga = gin3[:, hid:]
    gz = tanh_bwd(h2, gin3[:, :hid])
    gin2, gw, gb = dense_bwd(in2, params[f"pred.{kind}.fc2.w"], gz)
    grads[f"pred.{kind}.fc2.w"] += gw; grads[f"pred.{kind}.fc2.b"] += gb
    ga = ga + gin2[:, hid:]
    gz = tanh_bwd(h1, gin2[:, :hid])
    gin1, gw, gb = dense_bwd(in1, params[f"pred.{kind}.fc1.w"], gz)
    grads[f"pred.{kind}.fc1.w"] += gw; grads[f"pred.{kind}.fc1.b"] += gb
    gc = gin1[:, :lat]
    ga = ga + gin1[:, lat:lat + act]
    gmem = gin1[:, lat + act:]
    return gc, ga, gmem


# --- decoder ----------------------------------------------------------------

def decode(params, cfg: NetConfig, z: np.ndarray):
    """latent (B,latent) -> diff (B,R,R,5) in [0,1]; returns (diff, cache)."""
    b = z.shape[0]
    g1 = np.tanh(dense_fwd(z, params["dec.fc1.w"], params["dec.fc1.b"]))
    g2 = np.tanh(dense_fwd(g1, params["dec.fc2.w"], params["dec.fc2.b"]))
    grid = g2.reshape(b, cfg.grid, cfg.grid, cfg.conv_channels)
    u1 = upsample2_fwd(grid)
    zc1, cols1 = conv_fwd(u1, params["dec.conv1.w"], params["dec.conv1.b"], 1, 1)
    ac1 = np.tanh(zc1)
    u2 = upsample2_fwd(ac1)
    zc2, cols2 = conv_fwd(u2, params["dec.conv2.w"], params["dec.conv2.b"], 1, 1)
    diff, keep = clamp01_fwd(zc2)
    cache = (z, g1, g2, u1, cols1, ac1, u2, cols2, keep)
    return diff, cache


def _decode_bwd(params, cfg, cache, g_diff, grads):
    z, g1, g2, u1, cols1, ac1, u2, cols2, keep = cache
    gz2 = clamp01_bwd(keep, g_diff)
    gu2, gw, gb = conv_bwd(u2.shape, cols2, params["dec.conv2.w"], gz2, 1, 1)
    grads["dec.conv2.w"] += gw; grads["dec.conv2.b"] += gb
    gac1 = upsample2_bwd(gu2)
    gzc1 = tanh_bwd(ac1, gac1)
    gu1, gw, gb = conv_bwd(u1.shape, cols1, params["dec.conv1.w"], gzc1, 1, 1)
    grads["dec.conv1.w"] += gw; grads["dec.conv1.b"] += gb
    g_grid = upsample2_bwd(gu1)
    gz = tanh_bwd(g2, g_grid.reshape(g2.shape))
    gg1, gw, gb = dense_bwd(g1, params["dec.fc2.w"], gz)
    grads["dec.fc2.w"] += gw; grads["dec.fc2.b"] += gb
    gz = tanh_bwd(g1, gg1)
    gzin, gw, gb = dense_bwd(z, params["dec.fc1.w"], gz)
    grads["dec.fc1.w"] += gw; grads["dec.fc1.b"] += gb
    return gzin


# --- action features and composition -----------------------------------------

def _project(xy: np.ndarray, resolution: int):
    cols = np.clip(np.floor(xy[:, 0] * resolution), 0, resolution - 1).astype(int)
    rows = np.clip(np.floor(xy[:, 1] * resolution), 0, resolution - 1).astype(int)
    return rows, cols


def assemble_actions(numerics: np.ndarray, composed_prev: np.ndarray,
                     resolution: int):
    """(B,5) numerics + RGBD sampled under the action point -> (B,9)."""
    rows, cols = _project(numerics[:, :2], resolution)
    sampled = composed_prev[np.arange(len(rows)), rows, cols, :]
    return np.concatenate([numerics, sampled], axis=1), (rows, cols)


def _blend(prev: np.ndarray, diff: np.ndarray) -> np.ndarray:
    m = diff[..., 4:5]
    return m * diff[..., :4] + (1.0 - m) * prev


def _blend_bwd(prev, diff, g_out):
    m = diff[..., 4:5]
    g_prev = g_out * (1.0 - m)
    g_diff = np.empty_like(diff)
    g_diff[..., :4] = g_out * m
    g_diff[..., 4] = (g_out * (diff[..., :4] - prev)).sum(axis=-1)
    return g_prev, g_diff


# --- rollout: forward, loss, gradients ----------------------------------------

def rollout(params, cfg: NetConfig, img0: np.ndarray, kinds: np.ndarray,
            numerics: np.ndarray):
    """Imagine a whole action sequence from one root image.

    kinds (B,L) indexes cfg.kinds; numerics (B,L,5).  Returns composed
    predictions (B,L,R,R,4), diffs (B,L,R,R,5), and the trace needed to
    run the backward pass.
    """
    b, length = kinds.shape
    c, enc_cache = encode(params, cfg, img0)
    mem = np.zeros((b, cfg.memory), dtype=img0.dtype)
    composed = img0
    steps = []
    comps, diffs = [], []
    for i in range(length):
        a, rowcol = assemble_actions(numerics[:, i], composed, cfg.resolution)
        delta = np.zeros_like(c)
        mem_next = np.zeros_like(mem)
        groups = []
        for ki, kind in enumerate(cfg.kinds):
            idx = np.flatnonzero(kinds[:, i] == ki)
            if idx.size == 0:
                continue
            d, m_out, cache = _predict_fwd(params, cfg, kind, c[idx], a[idx],
                                           mem[idx])
            delta[idx] = d
            mem_next[idx] = m_out
            groups.append((kind, idx, cache))
        c_next = c + delta
        diff, dec_cache = decode(params, cfg, c_next)
        composed_next = _blend(composed, diff)
        steps.append({"a": a, "rowcol": rowcol, "groups": groups,
                      "dec_cache": dec_cache, "c_prev": c, "mem_prev": mem,
                      "composed_prev": composed, "diff": diff})
        c, mem, composed = c_next, mem_next, composed_next
        comps.append(composed)
        diffs.append(diff)
    trace = {"enc_cache": enc_cache, "steps": steps, "latent_final": c,
             "mem_final": mem}
    return np.stack(comps, axis=1), np.stack(diffs, axis=1), trace


def loss_and_grads(params, cfg: NetConfig, batch: dict,
                   mask_weight: float = 0.1, eps: float = 1e-3,
                   changed_weight: float = 0.0, mask_bg_weight: float = 1.0):
    """Objective and full parameter gradients for one batch.

    batch: states (B,L+1,R,R,4) ground truth with states[:,0] the input,
    kinds (B,L) int, numerics (B,L,5).  Loss sums per-step image MSE and
    weighted change-mask BCE.  changed_weight adds extra MSE weight on the
    pixels the step truly altered; movers cover a percent or two of the
    frame, and without the boost their paint comes out washed toward the
    background.  mask_bg_weight scales the BCE term on pixels that did NOT
    change: composition re-blends every pixel the mask claims, so a false
    positive smears stale diff values over clean background and the smear
    compounds across chained steps.  The clamp activation can emit exact
    zeros, so pushed hard enough the leak actually closes.  The BCE
    stabilizer is deliberately coarse (1e-3): the mask saturates by
    clamping anyway, and a softer log keeps finite-difference checks of
    this loss well conditioned.
    """
    states = batch["states"]
    kinds = batch["kinds"]
    numerics = batch["numerics"].astype(states.dtype)
    b, length = kinds.shape
    comps, diffs, trace = rollout(params, cfg, states[:, 0], kinds, numerics)

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    loss = 0.0
    n_mse = comps[:, 0].size
    n_bce = b * cfg.resolution * cfg.resolution
    g_comp_carry = np.zeros_like(states[:, 0])
    g_c_carry = np.zeros((b, cfg.latent), dtype=states.dtype)
    g_mem_carry = np.zeros((b, cfg.memory), dtype=states.dtype)

    step_losses = []
    for i in range(length):
        err = comps[:, i] - states[:, i + 1]
        m = diffs[:, i, :, :, 4]
        target = (np.abs(states[:, i + 1] - states[:, i]) > 1e-6).any(axis=-1)
        target = target.astype(states.dtype)
        w = 1.0 + changed_weight * target[..., None]
        mse = float((w * err * err).mean())
        bce = float(-(target * np.log(m + eps)
                      + mask_bg_weight * (1.0 - target)
                      * np.log(1.0 - m + eps)).mean())
        step_losses.append((mse, bce))
        loss += mse + mask_weight * bce

    for i in reversed(range(length)):
        step = trace["steps"][i]
        err = comps[:, i] - states[:, i + 1]
        target = ((np.abs(states[:, i + 1] - states[:, i]) > 1e-6)
                  .any(axis=-1).astype(states.dtype))
        w = 1.0 + changed_weight * target[..., None]
        g_comp = 2.0 * w * err / n_mse + g_comp_carry
        g_prev, g_diff = _blend_bwd(step["composed_prev"], step["diff"], g_comp)
        m = step["diff"][..., 4]
        g_diff[..., 4] += mask_weight * (-(target / (m + eps))
                                         + mask_bg_weight * (1.0 - target)
                                         / (1.0 - m + eps)) / n_bce
        g_c_next = _decode_bwd(params, cfg, step["dec_cache"], g_diff, grads)
        g_c_next = g_c_next + g_c_carry
        g_c = g_c_next.copy()          # identity path of c_next = c + delta
        g_a = np.zeros_like(step["a"])
        g_mem = np.zeros((b, cfg.memory), dtype=states.dtype)
        for kind, idx, cache in step["groups"]:
            gc_k, ga_k, gmem_k = _predict_bwd(params, cfg, kind, cache,
                                              g_c_next[idx], g_mem_carry[idx],
                                              grads)
            g_c[idx] += gc_k
            g_a[idx] = ga_k
            g_mem[idx] = gmem_k
        rows, cols = step["rowcol"]
        g_comp_carry = g_prev.copy()
        g_comp_carry[np.arange(b), rows, cols, :] += g_a[:, NUMERIC_INPUTS:]
        g_c_carry = g_c
        g_mem_carry = g_mem
    _encode_bwd(params, cfg, trace["enc_cache"], g_c_carry, grads)
    return loss, grads, {"steps": step_losses}


# --- inference ----------------------------------------------------------------

def extend(params, cfg: NetConfig, latents, mems, composeds, kinds, numerics):
    """One imagined action for a batch of search nodes (no caches kept).

    kinds (N,) int, numerics (N,5).  Returns (latents', mems', composeds',
    diffs).
    """
    numerics = np.asarray(numerics, dtype=composeds.dtype)
    a, _ = assemble_actions(numerics, composeds, cfg.resolution)
    delta = np.zeros_like(latents)
    mem_next = np.zeros_like(mems)
    for ki, kind in enumerate(cfg.kinds):
        idx = np.flatnonzero(kinds == ki)
        if idx.size == 0:
            continue
        d, m_out, _ = _predict_fwd(params, cfg, kind, latents[idx], a[idx],
                                   mems[idx])
        delta[idx] = d
        mem_next[idx] = m_out
    latents_next = latents + delta
    diffs, _ = decode(params, cfg, latents_next)
    composeds_next = _blend(composeds, diffs)
    return latents_next, mem_next, composeds_next, diffs


def predict_sequence(params, cfg: NetConfig, img0: np.ndarray, kinds, numerics):
    """Convenience single-sequence rollout; returns (composed, diffs)."""
    kinds = np.asarray(kinds, dtype=int)[None, :]
    numerics = np.asarray(numerics, dtype=img0.dtype)[None, :, :]
    comps, diffs, _ = rollout(params, cfg, img0[None], kinds, numerics)
    return comps[0], diffs[0]


# --- checkpoints ----------------------------------------------------------------

def save_checkpoint(path, params: dict[str, np.ndarray], cfg: NetConfig) -> None:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(f"resolution={cfg.resolution}\n".encode())
    buf.write(f"latent={cfg.latent}\n".encode())
    buf.write(f"memory={cfg.memory}\n".encode())
    buf.write(f"hidden={cfg.hidden}\n".encode())
    buf.write(f"conv_channels={cfg.conv_channels}\n".encode())
    buf.write(f"action_inputs={cfg.action_inputs}\n".encode())
    buf.write(f"kinds={','.join(cfg.kinds)}\n".encode())
    buf.write(b"end\n")
    for key in params:
        buf.write(np.ascontiguousarray(params[key], dtype="<f4").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise FormatError(f"{path}: not a model checkpoint")
    cursor = len(CHECKPOINT_MAGIC)
    fields: dict[str, str] = {}
    while True:
        nl = raw.find(b"\n", cursor)
        if nl < 0:
            raise FormatError(f"{path}: unterminated header")
        line = raw[cursor:nl].decode("ascii", errors="replace")
        cursor = nl + 1
        if line == "end":
            break
        if "=" not in line:
            raise FormatError(f"{path}: bad header line {line!r}")
        key, value = line.split("=", 1)
        fields[key] = value
    try:
        cfg = NetConfig(resolution=int(fields["resolution"]),
                        latent=int(fields["latent"]),
                        memory=int(fields["memory"]),
                        hidden=int(fields["hidden"]),
                        conv_channels=int(fields["conv_channels"]),
                        action_inputs=int(fields["action_inputs"]),
                        kinds=tuple(fields["kinds"].split(",")))
    except (KeyError, ValueError) as e:
        raise FormatError(f"{path}: incomplete header: {e}") from e
    params = init_params(cfg, seed=0)
    payload = raw[cursor:]
    need = sum(v.size for v in params.values()) * 4
    if len(payload) != need:
        raise FormatError(f"{path}: expected {need} tensor bytes, "
                          f"found {len(payload)}")
    offset = 0
    for key, ref in params.items():
        n = ref.size * 4
        arr = np.frombuffer(payload[offset:offset + n], dtype="<f4")
        params[key] = arr.reshape(ref.shape).astype(np.float32)
        offset += n
    return params, cfg
