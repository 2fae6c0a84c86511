"""q-norm distributionally robust probability smoothing."""
