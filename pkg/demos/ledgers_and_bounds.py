"""Communication and compute ledgers, plus the admissible step-size bound.

Run:  python demos/ledgers_and_bounds.py
"""

from fedmrl.core import TheoryConstants, lr_bound
from fedmrl.data import ClassCountSpec, gen_synthetic, partition_class_count, split_train_test
from fedmrl.federation import Mode, RunConfig, build_clients, run_rounds
from fedmrl.metrics import first_round_reaching
from fedmrl.numerics import derive_rng


def main():
    dataset = gen_synthetic(4, 10, 40, 2.0, derive_rng(0, 3))
    plan = split_train_test(partition_class_count(dataset, 4, ClassCountSpec(4, 0)))
    config = RunConfig(
        n_clients=4, rounds=10, d1=3, d2=6, seed=0,
        global_hidden=(8,), local_hidden=((10,), (9,)),
    )
    server, clients = build_clients(config, dataset, plan)
    shared = server.global_model.param_count()
    reports = run_rounds(server, clients, config)

    print(f"shared model: {shared} parameters; 4 clients, full participation")
    print("every round the ledger shows K * |shared| in each direction:")
    r = reports[0]
    print(f"  round 1: uplink {r.uplink_params}, downlink {r.downlink_params} "
          f"(= 4 * {shared} = {4 * shared})")

    # 3 flops per parameter-touching multiply-add pair: forward, plus twice
    # that again for the backward sweep through the same affine maps
    print(f"  round 1 training flops: {r.flops}")
    per_round = {rep.flops for rep in reports}
    print(f"  constant across rounds: {per_round == {r.flops}}")

    target = 0.9
    reached = first_round_reaching(reports, target)
    print(f"  first round with average accuracy >= {target}: {reached}")

    print("\nstep-size bound from the convergence analysis")
    for eps, delta2 in ((1.0, 0.25), (1.0, 0.5), (2.0, 0.25)):
        constants = TheoryConstants(
            lipschitz=2.0, grad_variance=1.0, agg_variation=delta2,
            epsilon=eps, local_iters=1,
        )
        print(f"  epsilon {eps}, aggregation variation {delta2}: "
              f"lr must stay below {lr_bound(constants):.4f}")

    try:
        lr_bound(TheoryConstants(2.0, 1.0, 1.5, 1.0, 1))
    except ValueError as exc:
        print(f"  epsilon 1.0, aggregation variation 1.5: rejected ({exc})")


if __name__ == "__main__":
    main()
