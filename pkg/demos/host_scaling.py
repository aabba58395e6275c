"""Hosts needed per virtualization model as the network grows, and what they cost."""
from wnetlab.orchestrator import HOST_MODELS, Pricing, estimate_cost, plan_deployment

SIZES = (50, 100, 283, 500, 1000)

print("n_nodes  " + "  ".join(f"{m:>18}" for m in HOST_MODELS))
for n in SIZES:
    print(f"{n:7d}  " + "  ".join(f"{plan_deployment(n, m).hosts:18d}" for m in HOST_MODELS))

print("\nTwo-year cost for 283 nodes (USD):")
for model in ("container-dense", "vm-per-core", "private-cloud"):
    plan = plan_deployment(283, model)
    for env in ("in-house", "cloud"):
        c = estimate_cost(plan, Pricing(env))
        print(f"  {model:>16} {env:>8}: {c.total:14,.2f}  ({plan.hosts} hosts)")
