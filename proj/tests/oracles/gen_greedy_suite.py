# Copyright 2026 The FlashSpec Authors.
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Exhaustive subtree oracle for the greedy tree-construction suite.

Each instance is a scripted draft over a tiny vocabulary: the root proposes
k candidates and each of those proposes k more, giving k + k*k reachable
candidates. Every ancestor-closed subset of them is scored with the same
objective the builder maximizes,

    G(T) = 1 + sum of reach over inserted nodes
    C(T) = draft_ms * (number of expanded nodes) + verify(|T|, L_T)

and the best value is stored with the instance. Instances whose optimum has
fewer than MIN_OPT_NODES or more than MAX_OPT_NODES non-root nodes are
redrawn.

Usage: python3 gen_greedy_suite.py [output.json]
"""

import itertools
import json
import sys

import numpy as np

VOCAB = 8
K = 3
MAX_DEPTH = 2
INSTANCES = 100
MIN_OPT_NODES = 2
MAX_OPT_NODES = 6
SEED = 20260514


def top_k(dist):
    # Descending probability, ties to the smaller token id.
    order = sorted(range(len(dist)), key=lambda t: (-dist[t], t))
    return order[:K]


def draw_instance(rng):
    dists = {}
    root = rng.dirichlet(np.full(VOCAB, 0.6))
    dists[(0,)] = root
    for a in top_k(root):
        dists[(0, a)] = rng.dirichlet(np.full(VOCAB, 0.6))

    io = float(rng.uniform(20.0, 200.0))
    c0 = float(rng.uniform(5.0, 60.0))
    c_row = float(rng.uniform(1.0, 40.0))
    c_leaf = float(rng.uniform(0.0, 8.0))
    overlap = "max" if rng.random() < 0.5 else "sum"
    draft_ms = float(rng.uniform(0.5, 25.0))

    n_max = 1 + K + K * K
    profile = []
    for n in range(1, n_max + 1):
        for leaves in range(1, n + 1):
            compute = c0 + c_row * n + c_leaf * leaves
            ms = max(io, compute) if overlap == "max" else io + compute
            profile.append([n, leaves, ms])
    return dists, profile, draft_ms


def universe(dists):
    # Candidate nodes as token paths with their reach (r = 1, so reach is the
    # product of draft probabilities along the path).
    nodes = []
    root = dists[(0,)]
    for a in top_k(root):
        nodes.append(((a,), float(root[a])))
        child = dists[(0, a)]
        for b in top_k(child):
            nodes.append(((a, b), float(root[a]) * float(child[b])))
    return nodes


def objective(subset, profile_map, draft_ms):
    paths = {p for p, _ in subset}
    gain = 1.0 + sum(r for _, r in subset)
    expanded = 1 + sum(1 for p, _ in subset if len(p) < MAX_DEPTH)
    parents_with_children = {p[:-1] for p in paths}
    leaves = sum(1 for p in paths if p not in parents_with_children)
    if not paths:
        leaves = 1
    elif () not in parents_with_children:
        leaves += 1  # a root without children is itself a leaf
    verify = profile_map[(len(paths) + 1, leaves)]
    return gain / (draft_ms * expanded + verify)


def brute_force(nodes, profile_map, draft_ms):
    best_value, best_set = -1.0, None
    for mask in range(1 << len(nodes)):
        subset = [nodes[i] for i in range(len(nodes)) if mask >> i & 1]
        paths = {p for p, _ in subset}
        if any(len(p) > 1 and p[:-1] not in paths for p in paths):
            continue
        value = objective(subset, profile_map, draft_ms)
        if value > best_value:
            best_value, best_set = value, subset
    return best_value, best_set


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "greedy_suite.json"
    rng = np.random.default_rng(SEED)
    instances = []
    redraws = 0
    while len(instances) < INSTANCES:
        dists, profile, draft_ms = draw_instance(rng)
        nodes = universe(dists)
        profile_map = {(n, l): ms for n, l, ms in profile}
        value, best = brute_force(nodes, profile_map, draft_ms)
        if not MIN_OPT_NODES <= len(best) <= MAX_OPT_NODES:
            redraws += 1
            continue
        instances.append({
            "id": len(instances),
            "draft_ms": draft_ms,
            "dists": [{"prefix": list(k), "probs": [float(x) for x in v]}
                      for k, v in sorted(dists.items())],
            "profile": profile,
            "optimum": {
                "objective": value,
                "paths": sorted(list(p) for p, _ in best),
            },
        })
    doc = {
        "vocab": VOCAB,
        "k": K,
        "max_depth": MAX_DEPTH,
        "context": [0],
        "seed": SEED,
        "redraws": redraws,
        "instances": instances,
    }
    # One instance per line keeps the fixture diffable without bloating it.
    body = ",\n".join(json.dumps(i, separators=(",", ":")) for i in instances)
    head = {k: v for k, v in doc.items() if k != "instances"}
    with open(out, "w") as f:
        f.write(json.dumps(head)[:-1] + ', "instances": [\n' + body + "\n]}\n")


if __name__ == "__main__":
    main()
