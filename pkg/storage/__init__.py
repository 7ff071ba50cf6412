"""Storage package for fields, interfaces, elements and trajectories."""
