"""Writes kcore_synth.tsv and its brute-force densification answer (kcore_synth.expected)."""
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
TARGET = 0.2


def core(ratings, k):
    """Deletes one under-degree user or item at a time until none remain."""
    live = set(ratings)
    while True:
        du, di = {}, {}
        for u, i in live:
            du[u] = du.get(u, 0) + 1
            di[i] = di.get(i, 0) + 1
        bad = next((("u", u) for u, d in sorted(du.items()) if d < k), None)
        bad = bad or next((("i", i) for i, d in sorted(di.items()) if d < k), None)
        if bad is None:
            return live
        side, x = bad
        live = {(u, i) for u, i in live if (u if side == "u" else i) != x}


def main():
    rng = random.Random(20240611)
    users = [f"U{n:03d}" for n in range(150)]
    items = [f"I{n:03d}" for n in range(80)]
    uw = [1.0 / (1 + n) ** 0.9 for n in range(len(users))]
    iw = [1.0 / (1 + n) ** 0.8 for n in range(len(items))]
    rows = {}
    while len(rows) < 1400:
        u = rng.choices(users, uw)[0]
        i = rng.choices(items, iw)[0]
        rows[(u, i)] = rng.randint(1, 5)
    order = list(rows)
    rng.shuffle(order)
    with open(HERE / "kcore_synth.tsv", "w") as f:
        for u, i in order:
            f.write(f"{u}\t{i}\t{rows[(u, i)]}\t{rng.randint(880000000, 890000000)}\n")

    k = 1
    while True:
        c = core(set(rows), k)
        if not c:
            raise SystemExit("target unreachable")
        nu = len({u for u, _ in c})
        ni = len({i for _, i in c})
        if len(c) / (nu * ni) >= TARGET:
            break
        k += 1
    with open(HERE / "kcore_synth.expected", "w") as f:
        f.write(f"target={TARGET}\nk={k}\nn_users={nu}\nn_items={ni}\nn_ratings={len(c)}\n")
        f.write(f"density_full={len(c) / (nu * ni):.6f}\n")


if __name__ == "__main__":
    main()
