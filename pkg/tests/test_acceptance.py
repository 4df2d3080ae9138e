"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the report lines, or
``python tests/test_acceptance.py`` for a standalone summary.
"""
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import syn1_objective, syn2_objective  # noqa: E402

from delicoco.cli import main as cli_main  # noqa: E402
from delicoco.compression import CompressorSpec, compress_columns, message_bits, omega_of  # noqa: E402
from delicoco.numkit import DATA_STREAM, SeededRng  # noqa: E402
from delicoco.objectives import (  # noqa: E402
    Dataset,
    centralized_optimum,
    gen_syn1,
    initial_point,
    make_objective,
)
from delicoco.optim import AlgoConfig, NodeStates, centralized_gd, deli_coco, dgd, gossip_round  # noqa: E402
from delicoco.theory import budget_tradeoff, consensus_lr  # noqa: E402
from delicoco.topology import build_topology, metropolis_mixing  # noqa: E402

IDENTITY = CompressorSpec("identity")


def report(num, title, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {title} -- {detail}")
    return ok


def mixing(kind, n):
    return metropolis_mixing(build_topology(kind, n))


def desk_syn1():
    obj, _ = syn1_objective(seed=0, m=200, d=20, n=4)
    return obj, centralized_optimum(obj)


# -- criteria ---------------------------------------------------------------

def criterion_1():
    obj, opt = desk_syn1()
    cfg = AlgoConfig(0.05, 1.0, 1, 100, IDENTITY, mixing("ring", 4))
    t0 = time.perf_counter()
    a = deli_coco(cfg, obj, opt.f_star)
    b = dgd(cfg, obj, opt.f_star)
    elapsed = time.perf_counter() - t0
    same = [ra == rb for ra, rb in zip(a.records, b.records)]
    gap = max(abs(ra.suboptimality - rb.suboptimality) for ra, rb in zip(a.records, b.records))
    ok = all(same) and len(same) == 100 and elapsed < 5
    return report(1, "DGD reduction bit-identical", ok,
                  f"{sum(same)}/100 rows identical, max |diff| {gap:.2e}, {elapsed:.2f}s")


def criterion_2():
    obj, opt = desk_syn1()
    cfg = AlgoConfig(0.05, 1.0, 1, 50, IDENTITY, mixing("fully_connected", 4))
    worst = 0.0
    states = NodeStates.zeros(obj.d, obj.n)
    x = np.zeros(obj.d)
    # replay both recursions iterate by iterate
    for _ in range(50):
        states.x = states.x - cfg.eta * obj.grad_matrix(states.x)
        states = gossip_round(states, cfg.mixing, 1.0, IDENTITY)
        x = x - cfg.eta / obj.n * obj.global_grad(x)
        worst = max(worst, float(np.max(np.abs(states.x.mean(axis=1) - x))))
    trace = deli_coco(cfg, obj, opt.f_star)
    ref = centralized_gd(obj, cfg.eta / obj.n, 50, opt.f_star)
    loss_gap = float(np.max(np.abs(trace.column("suboptimality") - ref.column("suboptimality"))))
    ok = worst <= 1e-8 and loss_gap <= 1e-8
    return report(2, "fully connected equals centralized GD", ok,
                  f"max |xbar - x_gd| {worst:.2e}, max loss gap {loss_gap:.2e}")


def criterion_3():
    d, trials = 100, 10_000
    x = SeededRng(2024).normal((d, trials))
    norms = np.sum(x ** 2, axis=0)
    ok, parts = True, []
    for i, text in enumerate(("top:0.1", "rand:0.1", "rand2:0.5", "qsgd:2", "qsgd:4")):
        spec = CompressorSpec.parse(text)
        out = compress_columns(spec, x, SeededRng(7).spawn(i).child_keys(trials))
        err = np.sum((out - x) ** 2, axis=0) / norms
        limit = 1 - omega_of(spec, d)
        good = err.mean() <= limit * 1.05
        if spec.kind == "top_k":
            good = good and bool(np.all(err <= limit + 1e-12))
        ok &= good
        parts.append(f"{text} {err.mean():.4f}<={limit * 1.05:.4f}")
    return report(3, "compressor contraction", ok, ", ".join(parts))


def criterion_4():
    ok, parts = True, []
    cases = [("ring", 4, 2 / 3), ("torus", 9, 3 / 5)] + [("fully_connected", n, 1.0) for n in (2, 5, 16)]
    for kind, n, want in cases:
        m = mixing(kind, n)
        w = m.w
        good = (np.max(np.abs(w - w.T)) <= 1e-12 and np.max(np.abs(w.sum(axis=1) - 1)) <= 1e-12
                and w.min() >= 0 and abs(m.delta - want) <= 1e-10)
        ok &= bool(good)
        parts.append(f"{kind}-{n} delta={m.delta:.12f}")
    return report(4, "Metropolis mixing matrices", ok, ", ".join(parts))


def criterion_5():
    kinds = ("identity", "top:0.2", "rand:0.2", "rand2:0.5", "qsgd:2")
    worst = 0.0
    for run in range(20):
        spec = CompressorSpec.parse(kinds[run % len(kinds)])
        topo = ("ring", 8) if run % 2 else ("torus", 9)
        m = mixing(*topo)
        r = np.random.default_rng(run)
        states = NodeStates.start(r.standard_normal((30, m.n)) * 10 ** r.uniform(-2, 2))
        root = SeededRng(run)
        for q in range(25):
            before = states.x.mean(axis=1)
            states = gossip_round(states, m, float(r.uniform(0.05, 1.0)), spec, root.spawn(q))
            after = states.x.mean(axis=1)
            rel = np.max(np.abs(after - before)) / max(np.max(np.abs(before)), 1e-300)
            worst = max(worst, float(rel))
    return report(5, "mean preservation", worst <= 1e-10, f"worst relative drift {worst:.2e} over 20 runs")


def criterion_6():
    t0 = time.perf_counter()
    ds, _ = gen_syn1(SeededRng(0).spawn(DATA_STREAM), 500, 50, 0.0)
    obj = make_objective(ds, 9)
    opt = centralized_optimum(obj)
    ls, _ = obj.smoothness()
    eta = 1.0 / ls.max()
    m = mixing("torus", 9)
    spec = CompressorSpec("top_k", 0.2)
    gamma = consensus_lr(m.delta, omega_of(spec, obj.d), m.lambda_max_i_minus_w)
    iters = 200
    sub = deli_coco(AlgoConfig(eta, gamma, 20, iters, spec, m), obj, opt.f_star).column("suboptimality")
    base = deli_coco(AlgoConfig(eta, gamma, 1, iters, spec, m), obj, opt.f_star).column("suboptimality")
    elapsed = time.perf_counter() - t0
    hits = np.nonzero(sub <= 1e-8)[0]
    if len(hits) == 0 or hits[0] + 1 <= 11:
        return report(6, "linear rate (strongly convex, zero heterogeneity)", False, "1e-8 not reached after t=10")
    t = np.arange(10, hits[0] + 2)
    y = np.log10(sub[t - 1])
    coef = np.polyfit(t, y, 1)
    r2 = 1 - np.sum((y - np.polyval(coef, t)) ** 2) / np.sum((y - y.mean()) ** 2)
    final, final_q1 = max(sub[-1], 0.0), base[-1]
    ratio_ok = final_q1 >= 100 * final and final_q1 > 0
    ok = r2 >= 0.98 and ratio_ok and elapsed < 60
    return report(6, "linear rate (strongly convex, zero heterogeneity)", ok,
                  f"R^2={r2:.5f} over t in [10, {hits[0] + 1}], slope {coef[0]:.4f}/iter, "
                  f"final Q=20 {sub[-1]:.2e} vs Q=1 {final_q1:.2e}, {elapsed:.1f}s")


def criterion_7():
    m = mixing("torus", 16)
    finals = {}
    for q, b in ((1, 8), (8, 1)):
        spec = CompressorSpec("qsgd", b)
        losses, bits = [], set()
        for seed in range(3):
            obj, _ = syn2_objective(seed=seed, m=500, d=50, n=16, l2=0.001)
            x0 = np.repeat(initial_point("relu", obj.d, seed)[:, None], obj.n, axis=1)
            trace = deli_coco(AlgoConfig(0.1, 0.05, q, 300, spec, m, seed=seed), obj, 0.0, x0)
            losses.append(trace.final.suboptimality)
            bits.add(trace.final.cumulative_bits)
        assert len(bits) == 1
        finals[(q, b)] = (float(np.mean(losses)), bits.pop(), q * message_bits(spec, 50))
    (l18, bits18, per18), (l81, bits81, per81) = finals[(1, 8)], finals[(8, 1)]
    ok = per18 == per81 and bits18 == bits81 and l81 < l18
    return report(7, "fixed-budget ordering", ok,
                  f"budget {bits18} bits: loss(Q=8,b=1)={l81:.4g} < loss(Q=1,b=8)={l18:.4g}")


def criterion_8():
    deltas = (0.2, 0.4, 0.6, 0.8, 1.0)
    mono = all(
        all(a > b for a, b in zip(g, g[1:]))
        for g in ([budget_tradeoff(d, 1.0, 1, c) for c in (1, 2, 4, 8, 16)] for d in deltas)
    )
    g1, g4 = budget_tradeoff(1.0, 1.0, 1, 1), budget_tradeoff(1.0, 1.0, 1, 4)
    e1, e4 = abs(g1 - 0.993893), abs(g4 - 0.987842)
    ok = mono and e1 <= 1e-6 and e4 <= 1e-6
    return report(8, "g(c) decreasing, pinned values", ok,
                  f"monotone={mono}, g(1)={g1:.7f} (|diff| {e1:.1e}), g(4)={g4:.7f} (|diff| {e4:.1e})")


def criterion_9():
    finals = {}
    for kind in ("fully_connected", "torus", "ring"):
        m = mixing(kind, 9)
        vals = []
        for seed in range(3):
            obj, _ = syn1_objective(seed=seed, m=500, d=50, n=9, l2=0.001)
            opt = centralized_optimum(obj)
            cfg = AlgoConfig(0.2, 0.1, 5, 200, CompressorSpec("qsgd", 2), m, seed=seed)
            vals.append(deli_coco(cfg, obj, opt.f_star).final.suboptimality)
        finals[kind] = float(np.mean(vals))
    ok = finals["fully_connected"] <= finals["torus"] <= finals["ring"]
    return report(9, "topology ordering", ok, ", ".join(f"{k} {v:.3e}" for k, v in finals.items()))


def criterion_10(tmp_path):
    cfg = dict(task="syn1", m=200, d=20, n=9, topology="torus", compressor="qsgd:2", gamma="auto",
               q_steps=3, iters=40, eta=0.05, seed=11, out=str(tmp_path / "out"))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outputs = []
    for _ in range(2):
        code = cli_main(["run", "--config", str(path)])
        target = tmp_path / "out" / "trace.csv"
        outputs.append((code, target.read_bytes()))
        target.unlink()
    ok = outputs[0][0] == outputs[1][0] == 0 and outputs[0][1] == outputs[1][1]
    return report(10, "byte-identical reruns", ok, f"{len(outputs[0][1])} bytes, identical={outputs[0][1] == outputs[1][1]}")


def criterion_11():
    r = np.random.default_rng(99)
    h = 1e-6
    worst, parts = 0.0, []
    base, _ = gen_syn1(SeededRng(5), 90, 12, 0.05)
    for task in ("linear", "relu", "logistic"):
        y = (base.labels > 0).astype(float) if task == "logistic" else base.labels
        obj = make_objective(Dataset(base.features, y, task), 3, l2=0.001)
        done, skipped, task_worst = 0, 0, 0.0
        while done < 100:
            i = int(r.integers(obj.n))
            x = r.standard_normal(obj.d)
            a, _ = obj.node_data(i)
            if task == "relu" and np.min(np.abs(a @ x)) < 1e-7:
                skipped += 1
                continue
            grad = obj.local_grad(i, x)
            fd = np.array([(obj.local_loss(i, x + h * e) - obj.local_loss(i, x - h * e)) / (2 * h)
                           for e in np.eye(obj.d)])
            rel = np.linalg.norm(fd - grad) / max(np.linalg.norm(grad), 1e-12)
            task_worst = max(task_worst, float(rel))
            done += 1
        worst = max(worst, task_worst)
        parts.append(f"{task} {task_worst:.1e}" + (f" ({skipped} kink probes skipped)" if skipped else ""))
    return report(11, "gradient oracles vs finite differences", worst <= 1e-5, ", ".join(parts))


# -- pytest entry points ----------------------------------------------------

@pytest.mark.parametrize("num", [1, 2, 3, 4, 5, 6, 7, 8, 9, 11])
def test_criterion(num):
    assert globals()[f"criterion_{num}"]()


def test_criterion_10(tmp_path):
    assert criterion_10(tmp_path)


if __name__ == "__main__":
    import tempfile

    results = []
    for num in range(1, 12):
        if num == 10:
            with tempfile.TemporaryDirectory() as tmp:
                results.append(criterion_10(Path(tmp)))
        else:
            results.append(globals()[f"criterion_{num}"]())
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
