"""Acceptance gate: one test per headline criterion, each printing a
single PASS/FAIL line (run with ``pytest tests/test_acceptance.py -s``).

Every numeric check is validated against an independent oracle computed
inside this module (brute-force enumeration, exhaustive search, or
central finite differences), never against the library's own output.
"""

import itertools
import time
import warnings

import numpy as np
import pytest

from motionguide import (AttentionContext, BlockSparseMask, BoundingBox,
                         FeatureVolume, GuidanceConfig, InstanceNode,
                         KinematicHint, KinematicsState, LatentState,
                         MotionCategory, MotionGraph, RelationKind,
                         SyntheticSceneSpec, ToyBackend, TokenGrid,
                         attention_map, box_deformation, build_shape_template,
                         default_lexicon, default_signatures,
                         displacement_penalty, dit_biased_attention,
                         load_volume, parse_prompt, perceptual_deformation,
                         plan_layout, run_toy_denoise, save_volume,
                         segment_foreground, select_reference_frame, step_rigid,
                         synthesize_features, unet_loss_gradient)


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name} failed" + (f": {detail}" if detail else "")


@pytest.fixture(scope="module")
def lexicon():
    return default_lexicon()


# -- rigid kinematics closed form ---------------------------------------------

def roll_track(start: BoundingBox, velocity, acceleration, frames: int):
    box, state = start, KinematicsState(velocity=velocity,
                                        acceleration=acceleration)
    for _ in range(frames - 1):
        box, state = step_rigid(box, state)
    return box


def test_rigid_kinematics_closed_form():
    t0 = time.perf_counter()
    start = BoundingBox(0.05, 0.4, 0.35, 0.7)

    constant = roll_track(start, (0.02, 0.0), (0.0, 0.0), frames=16)
    err_u = abs(constant.center[0] - start.center[0] - 0.30)
    err_uy = abs(constant.center[1] - start.center[1])

    # accelerating from rest: displacement = sum_{k=0..14} (k*a + a/2)
    a = 0.004
    expected = sum(k * a + a / 2 for k in range(15))
    accel = roll_track(start, (0.0, 0.0), (a, 0.0), frames=16)
    err_a = abs(accel.center[0] - start.center[0] - expected)

    elapsed = time.perf_counter() - t0
    ok = err_u < 1e-9 and err_uy < 1e-9 and err_a < 1e-9 and elapsed < 1.0
    report("rigid kinematics closed form", ok,
           f"|err|=({err_u:.2e},{err_a:.2e}), {elapsed:.3f}s")


# -- reference frame ------------------------------------------------------------

def oracle_reference_frame(volume: FeatureVolume) -> int:
    """Brute force: per-pair mean per-pixel feature L2, summed per frame."""
    best, best_total = 0, float("inf")
    for f in range(volume.frames):
        total = 0.0
        for f2 in range(volume.frames):
            diff = volume.data[f].astype(np.float64) - volume.data[f2]
            total += float(np.sqrt((diff ** 2).sum(axis=-1)).mean())
        if total < best_total:
            best, best_total = f, total
    return best


def test_reference_frame_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    agree = 0
    trials = 50
    for _ in range(trials):
        f = int(rng.integers(1, 9))
        hw = int(rng.integers(1, 9))
        c = int(rng.integers(1, 5))
        volume = FeatureVolume(
            rng.standard_normal((f, hw, hw, c)).astype(np.float32))
        agree += select_reference_frame(volume) == oracle_reference_frame(volume)
    elapsed = time.perf_counter() - t0
    report("reference-frame oracle", agree == trials and elapsed < 5.0,
           f"{agree}/{trials} agree, {elapsed:.2f}s")


# -- segmentation ----------------------------------------------------------------

def oracle_min_sse_partition(points: np.ndarray) -> frozenset:
    """Exact minimum-SSE 2-partition by enumerating all assignments.

    Returned as a frozenset of the two index frozensets (label-free).
    """
    n = len(points)
    best, best_sse = None, float("inf")
    for bits in range(1, 2 ** n - 1):
        groups = ([i for i in range(n) if bits >> i & 1],
                  [i for i in range(n) if not bits >> i & 1])
        sse = sum(((points[g] - points[g].mean(axis=0)) ** 2).sum()
                  for g in groups)
        if sse < best_sse - 1e-12:
            best_sse = sse
            best = frozenset(frozenset(g) for g in groups)
    return best


def test_segmentation_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    agree = 0
    trials = 50
    for _ in range(trials):
        h = w = 8
        bw = int(rng.integers(2, 5))
        bh = int(rng.integers(2, 4))
        while bw * bh > 12 or bw * bh < 2:
            bw, bh = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        x0 = int(rng.integers(1, w - bw))
        y0 = int(rng.integers(1, h - bh))
        # two well-separated in-box signatures, zero noise
        sig_a = rng.uniform(2.0, 3.0, 3)
        sig_b = sig_a + rng.uniform(4.0, 6.0, 3)
        data = np.zeros((1, h, w, 3), dtype=np.float32)
        labels = rng.integers(0, 2, (bh, bw))
        if labels.min() == labels.max():
            labels.flat[0] = 1 - labels.flat[0]
        data[0, y0:y0 + bh, x0:x0 + bw] = np.where(
            labels[..., None] == 1, sig_a, sig_b)
        volume = FeatureVolume(data)
        box = BoundingBox(x0 / w, y0 / h, (x0 + bw) / w, (y0 + bh) / h)

        fg = segment_foreground(volume, box, 0)
        in_box = fg[y0:y0 + bh, x0:x0 + bw].reshape(-1)
        got = frozenset((frozenset(np.flatnonzero(in_box).tolist()),
                         frozenset(np.flatnonzero(~in_box).tolist())))
        points = data[0, y0:y0 + bh, x0:x0 + bw].reshape(-1, 3).astype(np.float64)
        agree += got == oracle_min_sse_partition(points)
    elapsed = time.perf_counter() - t0
    report("segmentation oracle", agree == trials and elapsed < 10.0,
           f"{agree}/{trials} agree, {elapsed:.2f}s")


# -- template voting --------------------------------------------------------------

def test_template_voting_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    grid = TokenGrid(frames=3, height=8, width=8)
    box = BoundingBox(0.25, 0.25, 0.75, 0.75)  # pixels 2..6 on both axes
    trials = 50
    agree = 0
    for _ in range(trials):
        local = rng.random((3, 4, 4)) > 0.4
        local[:, 0, 0] = True  # guarantee a majority winner somewhere
        masks = []
        for f in range(3):
            full = np.zeros((8, 8), dtype=bool)
            full[2:6, 2:6] = local[f]
            masks.append(full)
        template = build_shape_template(masks, [box] * 3, grid,
                                        template_shape=(4, 4))
        oracle = local.sum(axis=0) * 2 > 3  # strict per-pixel majority of 3
        agree += np.array_equal(template, oracle)
    elapsed = time.perf_counter() - t0
    report("template voting oracle", agree == trials and elapsed < 1.0,
           f"{agree}/{trials} exact, {elapsed:.2f}s")


# -- center-distance penalty invariants --------------------------------------------

def test_center_penalty_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    ok = True
    for _ in range(100):
        n = int(rng.integers(2, 9))
        boxes = []
        for _ in range(n):
            x0, y0 = rng.uniform(0, 0.7, 2)
            boxes.append(BoundingBox(x0, y0, x0 + rng.uniform(0.05, 0.3),
                                     y0 + rng.uniform(0.05, 0.3)))
        gamma = displacement_penalty(boxes, alpha=1.0)
        centers = np.asarray([b.center for b in boxes])
        dists = np.linalg.norm(centers[:, None] - centers[None, :], axis=-1)
        ok &= np.allclose(gamma, gamma.T)
        ok &= np.allclose(np.diag(gamma), 2.0)
        ok &= bool((gamma > 1.0).all() and (gamma <= 2.0).all())
        # strictly decreasing in center distance
        flat_d, flat_g = dists.ravel(), gamma.ravel()
        order = np.argsort(flat_d)
        d_sorted, g_sorted = flat_d[order], flat_g[order]
        for i in range(1, len(d_sorted)):
            if d_sorted[i] > d_sorted[i - 1] + 1e-12:
                ok &= g_sorted[i] < g_sorted[i - 1] + 1e-12
        if not ok:
            break
    elapsed = time.perf_counter() - t0
    report("center-distance penalty invariants", ok and elapsed < 1.0,
           f"100 tracks, {elapsed:.2f}s")


# -- deformation oracles ------------------------------------------------------------

def oracle_nn_field(volume: FeatureVolume, f: int, f2: int,
                    fg: np.ndarray) -> np.ndarray:
    h, w = fg.shape
    field = np.zeros((h, w, 2))
    coords = [(i, j) for i in range(h) for j in range(w) if fg[i, j]]
    for (i, j) in coords:
        best, best_d = None, float("inf")
        for (i2, j2) in coords:
            d = float(np.linalg.norm(
                volume.data[f, i, j].astype(np.float64) - volume.data[f2, i2, j2]))
            if d < best_d - 1e-15:
                best, best_d = (i2, j2), d
        field[i, j] = (best[0] - i, best[1] - j)
    return field


def test_deformation_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    grid = TokenGrid(frames=2, height=8, width=8)
    ok = True
    for _ in range(5):
        volume = FeatureVolume(rng.standard_normal((2, 8, 8, 3)).astype(np.float32))
        fg = np.zeros((8, 8), dtype=bool)
        fg[1:7, 1:7] = rng.random((6, 6)) > 0.3  # <= 36 foreground pixels
        if not fg.any():
            fg[3, 3] = True
        got = perceptual_deformation(volume, 0, 1, fg)
        ok &= np.array_equal(got, oracle_nn_field(volume, 0, 1, fg))

    # pure translation: every in-box pixel displaces by the corner shift
    src = BoundingBox(0.125, 0.125, 0.5, 0.5)
    dst = BoundingBox(0.375, 0.25, 0.75, 0.625)
    field = box_deformation(src, dst, grid)
    dy, dx = (0.25 - 0.125) * 8, (0.375 - 0.125) * 8
    inside = field[1:4, 1:4]
    ok &= np.allclose(inside[..., 0], dy) and np.allclose(inside[..., 1], dx)
    ok &= field[0].sum() == 0.0 and field[:, 0].sum() == 0.0
    elapsed = time.perf_counter() - t0
    report("deformation oracles", ok and elapsed < 5.0, f"{elapsed:.2f}s")


# -- gradient check ------------------------------------------------------------------

def test_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    worst = 0.0
    for trial in range(20):
        f, h, w = 2, 2, int(rng.integers(2, 9))   # T = f*h*w <= 32
        c = int(rng.integers(2, 5))
        d = int(rng.integers(2, 9))
        t = f * h * w
        state = LatentState(z=rng.standard_normal((f, h, w, c)),
                            backend=ToyBackend.seeded(c, d, seed=trial))
        mask = (rng.random((t, t)) > 0.5) * rng.uniform(0.5, 2.0, (t, t))
        _, analytic = unet_loss_gradient(state, mask, beta=10.0)

        step = 1e-4
        numeric = np.zeros_like(state.z)
        it = np.nditer(state.z, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            for sign in (+1, -1):
                z = state.z.copy()
                z[idx] += sign * step
                loss, _ = unet_loss_gradient(
                    LatentState(z=z, backend=state.backend), mask, beta=10.0)
                numeric[idx] += sign * loss
            numeric[idx] /= 2 * step
            it.iternext()
        rel = float(np.abs(analytic - numeric).max()
                    / max(np.abs(numeric).max(), 1e-12))
        worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    report("analytic gradient vs finite differences",
           worst < 1e-3 and elapsed < 30.0,
           f"worst rel err {worst:.2e}, {elapsed:.1f}s")


# -- biased attention degeneration ------------------------------------------------------

def test_biased_attention_degeneration():
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    worst_beta0 = worst_zero_mask = worst_rowsum = 0.0
    for _ in range(100):
        t = int(rng.integers(2, 17))
        d = int(rng.integers(1, 9))
        ctx = AttentionContext(q=rng.standard_normal((t, d)),
                               k=rng.standard_normal((t, d)))
        mask = rng.random((t, t)) * 2.0
        plain = attention_map(ctx)
        beta0 = dit_biased_attention(ctx, mask, beta=0.0)
        zero_mask = dit_biased_attention(ctx, np.zeros((t, t)), beta=0.15)
        biased = dit_biased_attention(ctx, mask, beta=0.15)
        worst_beta0 = max(worst_beta0, float(np.abs(beta0 - plain).max()))
        worst_zero_mask = max(worst_zero_mask, float(np.abs(zero_mask - plain).max()))
        worst_rowsum = max(worst_rowsum,
                           float(np.abs(biased.sum(axis=1) - 1.0).max()))
    elapsed = time.perf_counter() - t0
    ok = (worst_beta0 < 1e-6 and worst_zero_mask < 1e-6
          and worst_rowsum < 1e-6 and elapsed < 5.0)
    report("biased attention degenerates to plain softmax", ok,
           f"beta0 {worst_beta0:.1e}, zero-mask {worst_zero_mask:.1e}, "
           f"rowsum {worst_rowsum:.1e}, {elapsed:.2f}s")


# -- end-to-end toy run ---------------------------------------------------------------

def test_end_to_end_toy_run():
    t0 = time.perf_counter()
    graph = MotionGraph(nodes=[
        InstanceNode(0, "tree", [], MotionCategory.MOTIONLESS),
        InstanceNode(1, "car", ["driving"], MotionCategory.RIGID,
                     KinematicHint(speed="medium", direction="right")),
        InstanceNode(2, "flag", ["waving"], MotionCategory.NONRIGID,
                     KinematicHint(oscillation="sway")),
    ])
    layout = plan_layout(graph, 8)
    spec = SyntheticSceneSpec(layout=layout, seed=7, noise_scale=0.0,
                              signatures=default_signatures(layout, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        features = synthesize_features(spec, 16, 16, channels=3)
        unguided = run_toy_denoise(
            layout, features,
            GuidanceConfig(beta=10.0, step_range=(1, 25), mode="unet",
                           eta=1e-12), steps=25)
        guided = run_toy_denoise(
            layout, features,
            GuidanceConfig(beta=10.0, step_range=(1, 25), mode="unet",
                           eta=30.0), steps=25)
    losses = [r.loss for r in guided.rows]
    monotone = all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))
    ratio = guided.rows[-1].fg_mass / unguided.rows[-1].fg_mass
    elapsed = time.perf_counter() - t0
    ok = monotone and ratio >= 1.10 and elapsed < 60.0
    report("end-to-end guided toy run", ok,
           f"monotone={monotone}, mass ratio {ratio:.3f}, {elapsed:.1f}s")


# -- parser fixtures ---------------------------------------------------------------------

M, R, NR = (MotionCategory.MOTIONLESS, MotionCategory.RIGID,
            MotionCategory.NONRIGID)
S, D = RelationKind.SPATIAL, RelationKind.DYNAMIC

PARSE_FIXTURES = [
    ("a parked car next to a tree", [("car", M), ("tree", M)], [(0, 1, S)]),
    ("an ambulance driving down the street", [("ambulance", R)], []),
    ("a woman dancing", [("woman", NR)], []),
    ("a car pass by a house", [("car", R), ("house", M)], [(0, 1, D)]),
    ("a balloon floating above a mountain", [("balloon", R), ("mountain", M)],
     [(0, 1, S)]),
    ("a flag waving on a building", [("flag", NR), ("building", M)],
     [(0, 1, S)]),
    ("a dog chasing a cat", [("dog", R), ("cat", M)], [(0, 1, D)]),
    ("a parked truck", [("truck", M)], []),
    ("a bird flying over a river", [("bird", R), ("river", NR)], [(0, 1, S)]),
    ("a man jumping", [("man", NR)], []),
    ("a train moving toward a bridge", [("train", R), ("bridge", M)],
     [(0, 1, D)]),
    ("a leaf falling", [("leaf", R)], []),
    ("a flame", [("flame", NR)], []),
    ("a boat sailing near a bridge", [("boat", R), ("bridge", M)],
     [(0, 1, S)]),
    ("a cat sleeping on a chair", [("cat", M), ("chair", M)], [(0, 1, S)]),
    ("a kite", [("kite", R)], []),
    ("a dancer", [("dancer", NR)], []),
    ("a child bouncing a ball", [("child", NR), ("ball", M)], []),
    ("a horse running away from a fire", [("horse", R), ("fire", NR)],
     [(0, 1, D)]),
    ("a bus waiting behind a truck", [("bus", M), ("truck", M)], [(0, 1, S)]),
]


def test_parser_fixtures(lexicon):
    t0 = time.perf_counter()
    failures = []
    for prompt, nodes, edges in PARSE_FIXTURES:
        graph = parse_prompt(prompt, lexicon)
        got_nodes = [(n.noun_phrase, n.category) for n in graph.nodes]
        got_edges = [(e.src, e.dst, e.kind) for e in graph.edges]
        if got_nodes != nodes or got_edges != edges:
            failures.append(prompt)
    elapsed = time.perf_counter() - t0
    report("parser fixtures", not failures and elapsed < 1.0,
           f"{len(PARSE_FIXTURES) - len(failures)}/{len(PARSE_FIXTURES)} "
           f"exact, {elapsed:.2f}s"
           + (f"; failed: {failures}" if failures else ""))


# -- format round-trips -------------------------------------------------------------------

def test_format_round_trips(tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(808)
    ok = True

    volume = FeatureVolume(rng.standard_normal((3, 5, 6, 2)).astype(np.float32))
    vpath = tmp_path / "v.fvol"
    save_volume(volume, vpath)
    loaded = load_volume(vpath)
    ok &= np.array_equal(loaded.data.view(np.uint32), volume.data.view(np.uint32))

    grid = TokenGrid(frames=3, height=4, width=4)
    mask = BlockSparseMask(grid=grid, branch="nr", instance_id=2)
    for key in ((0, 1), (2, 2)):
        mask.set_block(*key, rng.random((16, 16)).astype(np.float32))
    mpath = tmp_path / "m.gmsk"
    mask.save(mpath)
    reloaded = BlockSparseMask.load(mpath)
    ok &= reloaded.grid == mask.grid and set(reloaded.blocks) == set(mask.blocks)
    for key, block in mask.blocks.items():
        ok &= np.array_equal(reloaded.blocks[key].view(np.uint32),
                             block.view(np.uint32))
    elapsed = time.perf_counter() - t0
    report("volume and mask format round-trips", ok and elapsed < 2.0,
           f"{elapsed:.2f}s")
