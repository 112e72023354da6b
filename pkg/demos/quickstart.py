"""Library tour: build a building, simulate walks, train and inspect a model."""

from wayfind.dataset import build_dataset, split
from wayfind.experiments import compare_baselines, render_report, usage_stats
from wayfind.metrics import evaluate_model
from wayfind.models import ForestParams, feature_importance_fscore, rf_train
from wayfind.network import describe, shortest_path
from wayfind.synthetic import (
    build_building,
    default_policies,
    default_tasks,
    generate_sequences,
)

net = build_building()
info = describe(net)
print(f"building: {info['n_nodes']} nodes on levels {info['levels']}")
print(f"shortest 401 -> 499: {' '.join(shortest_path(net, '401', '499'))}")

sequences = generate_sequences(net, default_tasks(net), default_policies(), n_agents=70)
stats = usage_stats(sequences)
print("\nmean walk length per task:")
for task, row in sorted(stats["lengths"].items()):
    print(f"  task {task}: {row['mean']:.1f} nodes (n={row['n']})")

ds = build_dataset(sequences, lag=1)
train, test = split(ds)
model = rf_train(train, ForestParams())
report = evaluate_model(model, test)
print(f"\nforest on {len(train)} train / {len(test)} test samples:")
print(f"  accuracy {report.accuracy:.4f}, balanced accuracy {report.balanced_accuracy:.4f}")
print(f"  split counts per feature: {feature_importance_fscore(model)}")

print("\n" + render_report(compare_baselines(ds)))
