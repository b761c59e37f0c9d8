"""How many profiling samples do the format rules need?

MAX-based fractional lengths chase the sample extremes, so they keep
moving as the profiling set grows; moment-based lengths stabilize with
a couple of samples. Mirrors the profiling-size study.
"""

import numpy as np

from chanq import collect_stats, solve_plan
from chanq.synthetic import SynthSpec, build_graph, gen_dataset

spec = SynthSpec(arch="hetero_conv", in_channels=16, channels=16, image_size=12,
                 samples=700, scale_span_bits=4.0, input_scale_span_bits=4.0,
                 input_family="heavy", seed=2)
g = build_graph(spec)
x, _ = gen_dataset(g, spec)


def activation_fls(stats, mode):
    plan = solve_plan(g, stats, mode)
    return np.concatenate([plan.tensors[t].fls for t in g.activation_names()])


reference = collect_stats(g, [x[i : i + 32] for i in range(0, 200, 32)])
ref_fls = {m: activation_fls(reference, m) for m in ("cw_max", "cw_laplace")}

rng = np.random.default_rng(7)
print("profile  mode        match-vs-200-sample   across-draw fl variance")
for size in (2, 8, 32):
    for mode in ("cw_max", "cw_laplace"):
        draws = []
        for _ in range(10):
            idx = rng.permutation(len(x))[:size]
            stats = collect_stats(g, [x[idx]])
            draws.append(activation_fls(stats, mode))
        draws = np.array(draws)
        match = np.mean(draws == ref_fls[mode][None, :])
        var = np.mean(np.var(draws, axis=0))
        print(f"{size:7d}  {mode:10s}  {match:19.3f}   {var:.4f}")

print("\nthe Laplace rule is already stable at 2 samples; the MAX rule is")
print("still discovering new extremes at 32.")
