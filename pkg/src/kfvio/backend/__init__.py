"""Fixed-lag smoother and the memory structures it runs on."""
