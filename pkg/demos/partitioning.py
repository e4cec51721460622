"""Show what the two non-IID partitioners actually hand each client.

Run:  python demos/partitioning.py
"""

import numpy as np

from fedmrl.data import (
    ClassCountSpec,
    DirichletSpec,
    gen_synthetic,
    label_proportions,
    partition_class_count,
    partition_dirichlet,
)
from fedmrl.numerics import derive_rng

N_CLIENTS = 10


def entropy(props):
    clipped = np.clip(props, 1e-12, None)
    return float((-clipped * np.log(clipped)).sum())


def show_class_count(dataset, classes_per_client):
    plan = partition_class_count(
        dataset, N_CLIENTS, ClassCountSpec(classes_per_client, seed=0)
    )
    print(f"\nclass-count partition, {classes_per_client} classes per client")
    for client in plan.clients:
        held = np.unique(dataset.labels[client.pool])
        print(f"  client {client.pool.size:>3} samples, classes {held.tolist()}")


def show_dirichlet(dataset, alpha):
    plan = partition_dirichlet(dataset, N_CLIENTS, DirichletSpec(alpha, seed=0))
    props = np.stack([label_proportions(dataset, c.pool) for c in plan.clients])
    sizes = [c.pool.size for c in plan.clients]
    mean_entropy = float(np.mean([entropy(row) for row in props]))
    print(
        f"  alpha {alpha:>6}: client sizes {sizes}, "
        f"largest class share {props.max():.2f}, mean label entropy {mean_entropy:.3f}"
    )


def main():
    dataset = gen_synthetic(10, 16, 60, 1.0, derive_rng(0, 3))
    print(f"dataset: {len(dataset)} samples, {dataset.classes} classes")

    show_class_count(dataset, 2)
    show_class_count(dataset, 10)

    print("\ndirichlet partition: smaller alpha concentrates labels")
    print(f"  (uniform over 10 classes has entropy {np.log(10):.3f})")
    for alpha in (0.1, 1.0, 1000.0):
        show_dirichlet(dataset, alpha)


if __name__ == "__main__":
    main()
