# Settings of the reference experiments

# Old Faithful waiting times, two modal intervals
GEYSER_FIT = {
    'k': 2,
    'm': 10,
    'multigrid_l': 15,
    'fitter': 'grenander_mle',
    'nll_bound': 1050.0,
}

# Equal-weight mixture of N(0,1), N(5,1), N(10,1)
THREE_GAUSSIANS = {
    'centers': [0.0, 5.0, 10.0],
    'sds': [1.0, 1.0, 1.0],
    'n': 10_000,
    'k': 3,
    'm': 14,  # 5K - 1
    'multigrid_l': 5,
    'valleys': [2.5, 7.5],
    'tolerance': 0.75,
}

# Random mixture benchmark
BENCHMARK_PROTOCOL = {
    'kinds': ['gaussian', 'laplace'],
    'replicates': 100,
    'n': 10_000,
    'k_max': 5,
    'grid_factor': 5,
    'multigrid_l': 5,
    'coarse_l': 3,
    'folds': 5,
    'taus': [0.01, 0.05],
    'improvement': 0.01,
}

# Scaled-down benchmark used for desk runs
DESK_BENCHMARK = {
    **BENCHMARK_PROTOCOL,
    'replicates': 20,
    'n': 2000,
}
