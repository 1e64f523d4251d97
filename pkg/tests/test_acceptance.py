"""End-to-end acceptance gate.

Each test exercises one headline guarantee of the toolkit at its stated
tolerance and prints a single PASS/FAIL line so the whole gate can be read
from the test log at a glance (run with -s or check captured output).
"""

import itertools
import random
import time

from stlforge import (
    RewardConfig,
    StlNode,
    atom,
    calc_time_diff,
    canonicalize,
    convert_unit,
    eval_math_expr,
    format_accuracy,
    formula_accuracy,
    generate_samples,
    group_advantages,
    parse_duration,
    parse_stl_json,
    satisfies,
    serialize_stl_json,
    symbolic_dedup,
    tree_match,
    validate_sample,
)
from stlforge.bench import TemplateSpec
from stlforge.rollout import RewardReport, StageVerdict, process_rewards
from stlforge.semantics import Trace

from _support import oracle_sat, random_tree


def _gate(name: str, ok: bool):
    print(f"{'PASS' if ok else 'FAIL'}: {name}")
    assert ok, name


def test_tool_reference_values():
    start = time.monotonic()
    ok = (
        parse_duration("30 minutes").value == 1800.0
        and convert_unit(10000, "ft", "m").value == 3048.0
        and convert_unit(200, "kn", "m/s").value == 102.89
        and eval_math_expr("2*900").value == 1800.0
        and calc_time_diff(
            "the time interval between 2025-08-01 8:00:00 and 2025-08-01 8:15:00"
        ).value == 900.0
    )
    ok = ok and (time.monotonic() - start) < 1.0
    _gate("tool reference values reproduce exactly in under 1s", ok)


P = atom("speed", ">", 0.5)
NOT_P = StlNode("Not", right=P)

ORACLE_FORMULAS = [
    P,
    NOT_P,
    StlNode("and", children=(P, NOT_P)),
    StlNode("or", children=(P, NOT_P)),
    StlNode("imply", left=P, right=NOT_P),
    StlNode("Finally", time=(0.0, 3.0), right=P),
    StlNode("Globally", time=(0.0, 3.0), right=P),
    StlNode("Finally", time=(2.0, 5.0), right=NOT_P),
    StlNode("Globally", time=(1.0, 4.0), right=P),
    StlNode("Until", time=(0.0, 5.0), left=P, right=NOT_P),
    StlNode("Until", time=(1.0, 3.0), left=NOT_P, right=P),
    StlNode("Since", time=(0.0, 5.0), left=P, right=NOT_P),
    StlNode("Historically", time=(0.0, 2.0), right=P),
    StlNode("Once", time=(0.0, 4.0), right=P),
    StlNode("Rise", right=P),
    StlNode("Fall", right=P),
    StlNode("Globally", time=(0.0, 2.0), right=StlNode("Finally", time=(0.0, 2.0), right=P)),
    StlNode("Finally", time=(0.0, 2.0), right=StlNode("Globally", time=(0.0, 2.0), right=NOT_P)),
    StlNode("imply", left=StlNode("Rise", right=P),
            right=StlNode("Finally", time=(0.0, 3.0), right=NOT_P)),
    StlNode("Until", time=(0.0, 7.0), left=StlNode("or", children=(P, NOT_P)),
            right=StlNode("and", children=(P, P))),
]


def test_semantics_exhaustive_oracle():
    start = time.monotonic()
    disagreements = 0
    for bits in itertools.product((0.0, 1.0), repeat=8):
        trace = Trace({"speed": list(bits)})
        for phi in ORACLE_FORMULAS:
            for k in range(8):
                if satisfies(phi, trace, k) != oracle_sat(phi, trace, k):
                    disagreements += 1
    elapsed = time.monotonic() - start
    _gate(
        f"evaluator agrees with brute-force oracle on 20 formulas x 256 traces "
        f"({disagreements} disagreements, {elapsed:.1f}s)",
        disagreements == 0 and elapsed < 30.0,
    )


def test_temporal_dualities():
    rng = random.Random(101)
    true_atom = atom("speed", ">", -1e9)
    violations = 0
    for _ in range(1000):
        trace = Trace({"speed": [float(rng.random() < 0.5) for _ in range(8)]})
        a = float(rng.randrange(0, 4))
        b = a + rng.randrange(0, 5)
        k = rng.randrange(8)
        inner = rng.choice((P, NOT_P))
        neg_inner = StlNode("Not", right=inner)
        f = StlNode("Finally", time=(a, b), right=inner)
        if satisfies(f, trace, k) != satisfies(
            StlNode("Until", time=(a, b), left=true_atom, right=inner), trace, k
        ):
            violations += 1
        g = StlNode("Globally", time=(a, b), right=inner)
        if satisfies(g, trace, k) != satisfies(
            StlNode("Not", right=StlNode("Finally", time=(a, b), right=neg_inner)), trace, k
        ):
            violations += 1
        o = StlNode("Once", time=(a, b), right=inner)
        if satisfies(o, trace, k) != satisfies(
            StlNode("Not", right=StlNode("Historically", time=(a, b), right=neg_inner)),
            trace, k,
        ):
            violations += 1
    _gate(f"temporal duality identities hold on 1000 triples ({violations} violations)",
          violations == 0)


def _shuffle_commutative(node, rng):
    if node.is_atom():
        return node
    children = tuple(_shuffle_commutative(c, rng) for c in node.children)
    if node.operation in ("and", "or"):
        children = tuple(rng.sample(children, len(children)))
    return StlNode(
        node.operation,
        time=node.time,
        left=_shuffle_commutative(node.left, rng) if node.left is not None else None,
        right=_shuffle_commutative(node.right, rng) if node.right is not None else None,
        children=children,
    )


def test_matcher_invariants():
    rng = random.Random(102)
    ok = True
    for _ in range(500):
        tree = random_tree(rng, depth=4)
        ok = ok and tree_match(tree, tree).value == 1.0
        ok = ok and tree_match(_shuffle_commutative(tree, rng), tree).exact
    ref = atom("speed", ">", 0.0)
    for delta in (0.0, 0.05, 0.1, 0.100001, 1.0):
        exact = tree_match(atom("speed", ">", delta), ref).exact
        ok = ok and exact == (delta <= 0.1)
    wrong_root = tree_match(
        StlNode("Finally", time=(0.0, 5.0), right=ref),
        StlNode("Globally", time=(0.0, 5.0), right=ref),
    )
    ok = ok and wrong_root.value == 0.0
    _gate("matcher identity, commutativity, tolerance boundary, and zeroing", ok)


def test_reward_calculus():
    rng = random.Random(103)
    cfg = RewardConfig()
    violations = 0
    for _ in range(1000):
        bits = [rng.random() < 0.6 for _ in range(rng.randrange(0, 7))]
        c_final = rng.randrange(2)
        verdicts = [StageVerdict(b, None if b else "BadArgs") for b in bits]
        rewards = process_rewards(verdicts, c_final, cfg)
        if any(r not in (0.0, 0.5, 1.0) for r in rewards):
            violations += 1
        if c_final == 0 and rewards and max(rewards) > 0.5:
            violations += 1
        if False in bits and any(r != 0.0 for r in rewards[bits.index(False):]):
            violations += 1
        # an exact final answer always outranks any partially matched one
        s_tree = rng.random() * 0.999999
        capped = cfg.kappa * s_tree
        if not 1.0 > capped:
            violations += 1
    _gate(f"process/outcome reward calculus invariants ({violations} violations)",
          violations == 0)


def test_advantage_normalization():
    rng = random.Random(104)
    cfg = RewardConfig()
    ok = True
    for _ in range(200):
        rewards = [rng.choice((0.0, 0.15, 0.3, 1.0)) for _ in range(8)]
        reports = [RewardReport(r_out=r) for r in rewards]
        group_advantages(reports, cfg)
        advantages = [r.a_out for r in reports]
        if len(set(rewards)) == 1:
            ok = ok and all(a == 0.0 for a in advantages)
            continue
        mean = sum(advantages) / len(advantages)
        ok = ok and abs(mean) <= 1e-9
        sd_a = (sum((a - mean) ** 2 for a in advantages) / len(advantages)) ** 0.5
        mu_r = sum(rewards) / len(rewards)
        sd_r = (sum((r - mu_r) ** 2 for r in rewards) / len(rewards)) ** 0.5
        ok = ok and abs(sd_a * (sd_r + cfg.epsilon) / sd_r - 1.0) <= 1e-6
    constant = [RewardReport(r_out=0.3) for _ in range(8)]
    group_advantages(constant, cfg)
    ok = ok and all(r.a_out == 0.0 for r in constant)
    _gate("group advantages are zero-mean, unit-scale, zero for constant groups", ok)


def test_round_trip_and_dedup_fixpoints():
    rng = random.Random(105)
    ok = True
    for _ in range(1000):
        tree = random_tree(rng, depth=4)
        ok = ok and parse_stl_json(serialize_stl_json(tree)) == canonicalize(tree)

    corpora_specs = [
        ("AEB", "autonomous_driving"),
        ("reactor_control", "industrial_control"),
        ("altitude_hold", "aerospace_systems"),
    ]
    for seed, (scenario, domain) in enumerate(corpora_specs, start=1):
        spec = TemplateSpec(scenario=scenario, domain=domain)
        corpus = generate_samples(spec, 2000, seed=seed)
        ok = ok and all(validate_sample(s) == [] for s in corpus)
        once = symbolic_dedup(corpus)
        ok = ok and symbolic_dedup(once) == once
    _gate("serialization round trip, dedup idempotence, generator validity", ok)


def test_metrics_ordering():
    rng = random.Random(106)
    ok = True
    for _ in range(20):
        pairs = []
        for _ in range(50):
            ref = random_tree(rng, depth=3)
            roll = rng.random()
            if roll < 0.35:
                pairs.append((serialize_stl_json(ref), ref))
            elif roll < 0.6:
                shifted = serialize_stl_json(ref).replace("0", "4")
                pairs.append((shifted, ref))
            elif roll < 0.85:
                pairs.append((serialize_stl_json(random_tree(rng, depth=3)), ref))
            else:
                pairs.append(("{broken", ref))
        ok = ok and formula_accuracy(pairs) <= format_accuracy(pairs)
    _gate("formula accuracy never exceeds format accuracy", ok)
