# Run configuration, fit model registry and experiment runner
